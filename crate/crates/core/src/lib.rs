//! Detects whether known datasets are cited or mentioned in scientific papers.
//!
//! The pipeline lists venue papers on DBLP, enriches them from OpenAlex,
//! acquires and converts full texts through GROBID, then classifies each
//! (paper, dataset) pair as only cited, only mentioned, or both.

pub mod analyzer;
pub mod catalog;
pub mod detector;
pub mod fulltext;
pub mod harvester;
pub mod http;
pub mod normalize;
pub mod pipeline;
pub mod reporter;

pub use analyzer::{Group, GroupAssignment, PresenceSummary, SeriesKind, YearSeries};
pub use catalog::{Alias, DatasetRecord, Task, VenueRecord};
pub use detector::{Detection, DetectionKind, Location, PresenceRecord, PresenceType};
pub use fulltext::StructuredDocument;
pub use harvester::{AbstractSource, FulltextStatus, IndexStatus, InvertedAbstract, PaperRecord};
pub use pipeline::{Config, Pipeline, PipelineError};
