//! PDF → TEI conversion through a GROBID service, cached by PDF digest.

use std::path::PathBuf;

use thiserror::Error;

use super::acquire::sha256_hex;
use crate::http::{write_atomic, HttpClient, HttpError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConvertError {
    #[error("GROBID unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("conversion failed: {0}")]
    ConversionFailed(String),
}

pub trait TeiConverter: Send + Sync {
    fn convert(&self, pdf: &[u8]) -> Result<String, ConvertError>;
}

/// `POST {base}/api/processFulltextDocument` with the PDF as the `input` part.
pub struct GrobidClient<'a> {
    http: &'a HttpClient,
    endpoint: String,
}

impl<'a> GrobidClient<'a> {
    pub fn new(http: &'a HttpClient, base_url: &str) -> Self {
        let endpoint = format!("{}/api/processFulltextDocument", base_url.trim_end_matches('/'));
        GrobidClient { http, endpoint }
    }
}

impl TeiConverter for GrobidClient<'_> {
    fn convert(&self, pdf: &[u8]) -> Result<String, ConvertError> {
        let resp = self
            .http
            .post_file(&self.endpoint, "input", "paper.pdf", pdf)
            .map_err(|e: HttpError| ConvertError::ServiceUnavailable(e.to_string()))?;
        match resp.status {
            200 => {
                let text = String::from_utf8(resp.body)
                    .map_err(|_| ConvertError::ConversionFailed("response is not UTF-8".into()))?;
                if text.contains("<TEI") {
                    Ok(text)
                } else {
                    Err(ConvertError::ConversionFailed("response is not TEI".into()))
                }
            }
            503 => Err(ConvertError::ServiceUnavailable("HTTP 503".into())),
            s => Err(ConvertError::ConversionFailed(format!("HTTP {s}"))),
        }
    }
}

/// Wraps a converter with an on-disk cache keyed by the PDF's sha256.
/// Successful conversions are stored as `<digest>.tei.xml`, definitive
/// failures as `<digest>.failed` so replays reproduce them.
pub struct CachedConverter<C> {
    inner: C,
    dir: PathBuf,
    offline: bool,
}

impl<C: TeiConverter> CachedConverter<C> {
    pub fn new(inner: C, dir: impl Into<PathBuf>, offline: bool) -> Self {
        CachedConverter { inner, dir: dir.into(), offline }
    }
}

impl<C: TeiConverter> TeiConverter for CachedConverter<C> {
    fn convert(&self, pdf: &[u8]) -> Result<String, ConvertError> {
        let digest = sha256_hex(pdf);
        let ok_path = self.dir.join(format!("{digest}.tei.xml"));
        let failed_path = self.dir.join(format!("{digest}.failed"));
        if let Ok(tei) = std::fs::read_to_string(&ok_path) {
            return Ok(tei);
        }
        if let Ok(reason) = std::fs::read_to_string(&failed_path) {
            return Err(ConvertError::ConversionFailed(reason.trim().to_string()));
        }
        if self.offline {
            return Err(ConvertError::ServiceUnavailable(format!("replay mode: no cached conversion for {digest}")));
        }
        match self.inner.convert(pdf) {
            Ok(tei) => {
                write_atomic(&ok_path, tei.as_bytes()).map_err(|e| ConvertError::ServiceUnavailable(e.to_string()))?;
                Ok(tei)
            }
            Err(ConvertError::ConversionFailed(reason)) => {
                let _ = write_atomic(&failed_path, reason.as_bytes());
                Err(ConvertError::ConversionFailed(reason))
            }
            Err(e) => Err(e),
        }
    }
}
