//! GROBID TEI → [`StructuredDocument`].

use std::collections::HashMap;

use roxmltree::{Document, Node, NodeId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{collapse_whitespace, normalize_doi};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TeiError {
    #[error("malformed XML: {0}")]
    MalformedXml(String),
    /// Nothing at all could be extracted. A document with only references is
    /// not empty.
    #[error("document has no abstract, body, captions, footnotes or references")]
    EmptyBody,
}

/// Whether a section is searched for mentions. Set by the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Eligibility {
    Eligible,
    Excluded,
    #[default]
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    /// Verbatim head text; may be empty.
    pub heading: String,
    pub paragraphs: Vec<String>,
    #[serde(default)]
    pub eligibility: Eligibility,
    /// Document-order index of the source `<div>`.
    pub anchor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionKind {
    Figure,
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub kind: CaptionKind,
    pub text: String,
    pub anchor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Footnote {
    pub text: String,
    pub anchor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    pub raw: String,
    pub parsed_title: Option<String>,
    pub parsed_doi: Option<String>,
    pub anchor: usize,
}

/// Parsed full text of one paper.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StructuredDocument {
    pub paper_id: String,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub sections: Vec<Section>,
    pub figure_captions: Vec<Caption>,
    pub table_captions: Vec<Caption>,
    pub footnotes: Vec<Footnote>,
    pub references: Vec<ReferenceEntry>,
}

impl StructuredDocument {
    pub fn is_empty(&self) -> bool {
        self.abstract_text.is_none()
            && self.sections.is_empty()
            && self.figure_captions.is_empty()
            && self.table_captions.is_empty()
            && self.footnotes.is_empty()
            && self.references.is_empty()
    }
}

fn text_of(node: Node) -> String {
    let raw: String = node.descendants().filter(|n| n.is_text()).filter_map(|n| n.text()).collect::<Vec<_>>().join(" ");
    collapse_whitespace(&raw)
}

fn is(node: &Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name
}

fn children<'a, 'i>(node: Node<'a, 'i>, name: &'a str) -> impl Iterator<Item = Node<'a, 'i>> + 'a {
    node.children().filter(move |c| is(c, name))
}

fn has_ancestor(node: Node, name: &str) -> bool {
    node.ancestors().skip(1).any(|a| is(&a, name))
}

/// Parses GROBID TEI into a document. Heading text is kept verbatim.
pub fn parse_tei(paper_id: &str, xml: &str) -> Result<StructuredDocument, TeiError> {
    let doc = Document::parse(xml).map_err(|e| TeiError::MalformedXml(e.to_string()))?;
    let anchors: HashMap<NodeId, usize> =
        doc.descendants().filter(|n| n.is_element()).enumerate().map(|(i, n)| (n.id(), i)).collect();
    let anchor = |n: Node| anchors[&n.id()];

    let mut out = StructuredDocument { paper_id: paper_id.to_string(), ..Default::default() };

    if let Some(abs) = doc.descendants().find(|n| is(n, "abstract") && has_ancestor(*n, "teiHeader")) {
        let paras: Vec<String> =
            abs.descendants().filter(|n| is(n, "p")).map(text_of).filter(|t| !t.is_empty()).collect();
        let text = if paras.is_empty() { text_of(abs) } else { paras.join(" ") };
        if !text.is_empty() {
            out.abstract_text = Some(text);
        }
    }

    let Some(text_root) = doc.descendants().find(|n| is(n, "text")) else {
        return finish(out);
    };

    for div in text_root.descendants().filter(|n| is(n, "div")) {
        let paragraphs: Vec<String> = children(div, "p").map(text_of).filter(|t| !t.is_empty()).collect();
        if paragraphs.is_empty() {
            continue;
        }
        let heading = children(div, "head").next().map(text_of).unwrap_or_default();
        out.sections.push(Section { heading, paragraphs, eligibility: Eligibility::Unknown, anchor: anchor(div) });
    }

    for fig in text_root.descendants().filter(|n| is(n, "figure")) {
        let kind = if fig.attribute("type") == Some("table") { CaptionKind::Table } else { CaptionKind::Figure };
        let mut text = children(fig, "figDesc").map(text_of).collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            text = children(fig, "head").next().map(text_of).unwrap_or_default();
        }
        if text.is_empty() {
            continue;
        }
        let caption = Caption { kind, text, anchor: anchor(fig) };
        match kind {
            CaptionKind::Figure => out.figure_captions.push(caption),
            CaptionKind::Table => out.table_captions.push(caption),
        }
    }

    for note in text_root.descendants().filter(|n| is(n, "note") && n.attribute("place") == Some("foot")) {
        let text = text_of(note);
        if !text.is_empty() {
            out.footnotes.push(Footnote { text, anchor: anchor(note) });
        }
    }

    for bibl in text_root.descendants().filter(|n| is(n, "biblStruct") && has_ancestor(*n, "listBibl")) {
        let raw = bibl
            .descendants()
            .find(|n| is(n, "note") && n.attribute("type") == Some("raw_reference"))
            .map(text_of)
            .filter(|t| !t.is_empty())
            .unwrap_or_else(|| text_of(bibl));
        if raw.is_empty() {
            continue;
        }
        let title_in = |parent: &str| {
            children(bibl, parent).flat_map(|p| children(p, "title")).map(text_of).find(|t| !t.is_empty())
        };
        let parsed_title = title_in("analytic").or_else(|| title_in("monogr"));
        let parsed_doi = bibl
            .descendants()
            .filter(|n| is(n, "idno") && n.attribute("type").is_some_and(|t| t.eq_ignore_ascii_case("doi")))
            .find_map(|n| normalize_doi(&text_of(n)));
        out.references.push(ReferenceEntry { raw, parsed_title, parsed_doi, anchor: anchor(bibl) });
    }

    finish(out)
}

fn finish(doc: StructuredDocument) -> Result<StructuredDocument, TeiError> {
    if doc.is_empty() {
        Err(TeiError::EmptyBody)
    } else {
        Ok(doc)
    }
}
