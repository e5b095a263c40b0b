//! Full-text acquisition, deduplication, TEI conversion and parsing.

pub mod acquire;
pub mod grobid;
pub mod tei;

pub use acquire::{
    acquire_pdf, dedupe_pdfs, AcquireOutcome, DedupeAction, DedupeReason, DirectoryScraper, LandingPageScraper, Origin,
    PdfStore, ScrapeError, Scraper,
};
pub use grobid::{CachedConverter, ConvertError, GrobidClient, TeiConverter};
pub use tei::{
    parse_tei, Caption, CaptionKind, Eligibility, Footnote, ReferenceEntry, Section, StructuredDocument, TeiError,
};
