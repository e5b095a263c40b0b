//! Annotation service for human verification of dataset detections.
//!
//! Projects hold a set of PDFs, a growable dataset label set and a fixed
//! location label set. Annotators label PDFs through the HTTP API; their
//! labels are exported per person and compared against detector output.

pub mod agreement;
pub mod server;
pub mod store;

pub use agreement::{compute_agreement, Agreement, Counts, DetectorOutput};
pub use server::{router, serve, serve_blocking, AppState};
pub use store::{AnnotateError, Annotation, AnnotationProject, LabelSet, NewPdf, Store};
