//! Line-delimited JSON interchange files.
//!
//! Emissions, one record per document:
//! `{"doc_id", "tag_order": [..], "tokens": [{"text","start","end"}], "scores": [[..]], "ignore_mask"?: [..]}`
//!
//! Span probabilities, one record per span:
//! `{"doc_id", "start", "end", "probs": {"class": p, ..}}`

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::probs::SpanProbs;
use crate::corpus::TokenSpan;
use crate::crf::EmissionMatrix;
use crate::error::{Error, Result};
use crate::tagcodec::Tag;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionRecord {
    doc_id: String,
    tag_order: Vec<Tag>,
    tokens: Vec<TokenSpan>,
    scores: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ignore_mask: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanProbRecord {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub probs: SpanProbs,
}

fn records<'a>(content: &'a str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    content
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn record_error(ctx: &str, record: usize, message: impl std::fmt::Display) -> Error {
    Error::parse(ctx, record, format!("record {record}: {message}"))
}

pub fn parse_emissions(content: &str, ctx: &str) -> Result<Vec<EmissionMatrix>> {
    let mut out = Vec::new();
    for (line, text) in records(content) {
        let rec: EmissionRecord = serde_json::from_str(text).map_err(|e| record_error(ctx, line, e))?;
        let k = rec.tag_order.len();
        let t = rec.scores.len();
        if let Some((row, r)) = rec.scores.iter().enumerate().find(|(_, r)| r.len() != k) {
            return Err(Error::validation(format!(
                "{ctx}, record {line}: score row {row} has {} values, expected {k}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rec.scores.into_iter().flatten().collect();
        let scores = Array2::from_shape_vec((t, k), flat).expect("rows checked above");
        let mut tokens = rec.tokens;
        for (i, tok) in tokens.iter_mut().enumerate() {
            tok.index = i;
            if tok.start >= tok.end || tok.text.chars().count() != tok.end - tok.start {
                return Err(Error::validation(format!(
                    "{ctx}, record {line}: token {i} {:?} has inconsistent offsets [{}, {})",
                    tok.text, tok.start, tok.end
                )));
            }
        }
        let em = EmissionMatrix::new(rec.doc_id, rec.tag_order, tokens, scores, rec.ignore_mask)
            .map_err(|e| Error::validation(format!("{ctx}, record {line}: {e}")))?;
        out.push(em);
    }
    Ok(out)
}

pub fn format_emissions(emissions: &[EmissionMatrix]) -> String {
    let mut out = String::new();
    for em in emissions {
        let rec = EmissionRecord {
            doc_id: em.doc_id.clone(),
            tag_order: em.tag_order.clone(),
            tokens: em.tokens.clone(),
            scores: em.scores.rows().into_iter().map(|r| r.to_vec()).collect(),
            ignore_mask: em.ignore_mask.clone(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("emission records serialize"));
        out.push('\n');
    }
    out
}

pub fn load_emissions(path: &Path) -> Result<Vec<EmissionMatrix>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_emissions(&content, &path.display().to_string())
}

pub fn save_emissions(path: &Path, emissions: &[EmissionMatrix]) -> Result<()> {
    fs::write(path, format_emissions(emissions)).map_err(|e| Error::io(path, e))
}

pub fn parse_span_probs(content: &str, ctx: &str) -> Result<Vec<SpanProbRecord>> {
    let mut out = Vec::new();
    for (line, text) in records(content) {
        let rec: SpanProbRecord = serde_json::from_str(text).map_err(|e| record_error(ctx, line, e))?;
        if rec.start >= rec.end {
            return Err(Error::validation(format!(
                "{ctx}, record {line}: empty span [{}, {})",
                rec.start, rec.end
            )));
        }
        if !rec.probs.is_distribution(1e-6) {
            return Err(Error::validation(format!(
                "{ctx}, record {line}: probabilities must be finite, non-negative and sum to 1 (sum {})",
                rec.probs.sum()
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn format_span_probs(records: &[SpanProbRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).expect("span records serialize"));
        out.push('\n');
    }
    out
}

pub fn load_span_probs(path: &Path) -> Result<Vec<SpanProbRecord>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_span_probs(&content, &path.display().to_string())
}

pub fn save_span_probs(path: &Path, records: &[SpanProbRecord]) -> Result<()> {
    fs::write(path, format_span_probs(records)).map_err(|e| Error::io(path, e))
}
