//! Documents, span annotations and word tokenization.
//!
//! All offsets are Unicode scalar-value indices into the document text,
//! half-open `[start, end)`.

use std::collections::BTreeMap;
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label given to annotations that carry no class column.
pub const DEFAULT_LABEL: &str = "PROP";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    id: String,
    text: String,
    // byte offset of every char, plus text.len() as sentinel
    boundaries: Vec<usize>,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::validation("document id must not be empty"));
        }
        let text = text.into();
        let mut boundaries: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        boundaries.push(text.len());
        Ok(Document {
            id,
            text,
            boundaries,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Length in chars.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Text of the char range `[start, end)`. Panics when out of bounds.
    pub fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[self.boundaries[start]..self.boundaries[end]]
    }

    pub fn char_at(&self, index: usize) -> Option<char> {
        if index >= self.len() {
            return None;
        }
        self.slice(index, index + 1).chars().next()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSpan {
    #[serde(skip)]
    pub index: usize,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Annotation {
    pub doc_id: String,
    pub label: String,
    pub start: usize,
    pub end: usize,
}

impl Annotation {
    pub fn new(doc_id: impl Into<String>, label: impl Into<String>, start: usize, end: usize) -> Self {
        Annotation {
            doc_id: doc_id.into(),
            label: label.into(),
            start,
            end,
        }
    }

    fn sort_key(&self) -> (&str, usize, usize, &str) {
        (&self.doc_id, self.start, self.end, &self.label)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub documents: BTreeMap<String, Document>,
    pub annotations: Vec<Annotation>,
}

impl Corpus {
    /// Builds a corpus, checking that every annotation resolves to a
    /// document and lies within it.
    pub fn new(documents: BTreeMap<String, Document>, mut annotations: Vec<Annotation>) -> Result<Self> {
        for a in &annotations {
            let doc = documents.get(&a.doc_id).ok_or_else(|| {
                Error::validation(format!("annotation references unknown document {:?}", a.doc_id))
            })?;
            check_bounds(a.start, a.end, doc)?;
        }
        annotations.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        Ok(Corpus {
            documents,
            annotations,
        })
    }

    pub fn document(&self, id: &str) -> Option<&Document> {
        self.documents.get(id)
    }

    /// Annotations of one document, in (start, end) order.
    pub fn annotations_for<'a>(&'a self, doc_id: &'a str) -> impl Iterator<Item = &'a Annotation> + 'a {
        self.annotations.iter().filter(move |a| a.doc_id == doc_id)
    }

    pub fn load(dir: &Path, annotations: Option<&Path>) -> Result<Self> {
        let documents = load_documents(dir)?;
        let annotations = match annotations {
            Some(p) => load_annotations(p)?,
            None => Vec::new(),
        };
        Corpus::new(documents, annotations)
    }

    pub fn save(&self, dir: &Path, annotations: &Path) -> Result<()> {
        save_documents(dir, self.documents.values())?;
        save_annotations(annotations, &self.annotations)
    }
}

fn check_bounds(start: usize, end: usize, doc: &Document) -> Result<()> {
    if start >= end || end > doc.len() {
        return Err(Error::validation(format!(
            "span [{start}, {end}) is empty or outside document {} of length {}",
            doc.id(),
            doc.len()
        )));
    }
    Ok(())
}

fn document_id(file_name: &str) -> Option<&str> {
    let id = file_name.strip_prefix("article")?.strip_suffix(".txt")?;
    (!id.is_empty()).then_some(id)
}

/// Loads every `article<ID>.txt` file of `dir`. Either all files load or
/// none do.
pub fn load_documents(dir: &Path) -> Result<BTreeMap<String, Document>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(id) = document_id(name) {
            paths.push((id.to_string(), entry.path()));
        }
    }
    paths.sort();

    let mut documents = BTreeMap::new();
    for (id, path) in paths {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8(bytes).map_err(|e| Error::Encoding {
            path: path.clone(),
            offset: e.utf8_error().valid_up_to(),
        })?;
        documents.insert(id.clone(), Document::new(id, text)?);
    }
    Ok(documents)
}

pub fn save_documents<'a>(dir: &Path, documents: impl IntoIterator<Item = &'a Document>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for doc in documents {
        let path = dir.join(format!("article{}.txt", doc.id()));
        fs::write(&path, doc.text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Parses annotation TSV: `doc_id<TAB>[label<TAB>]start<TAB>end`.
pub fn parse_annotations(content: &str, context: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (doc_id, label, start, end) = match fields.as_slice() {
            [doc, start, end] => (*doc, DEFAULT_LABEL, *start, *end),
            [doc, label, start, end] => (*doc, *label, *start, *end),
            _ => {
                return Err(Error::parse(
                    context,
                    line_no,
                    format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
                ))
            }
        };
        if doc_id.is_empty() || label.is_empty() {
            return Err(Error::parse(context, line_no, "empty document id or label"));
        }
        let parse_offset = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::parse(context, line_no, format!("invalid offset {s:?}")))
        };
        let start = parse_offset(start)?;
        let end = parse_offset(end)?;
        if end <= start {
            return Err(Error::validation(format!(
                "{context}, line {line_no}: end {end} <= start {start}"
            )));
        }
        out.push(Annotation::new(doc_id, label, start, end));
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&content, &path.display().to_string())
}

/// Annotations labeled [`DEFAULT_LABEL`] are written in the unlabeled
/// three-column form.
pub fn format_annotations(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        if a.label == DEFAULT_LABEL {
            out.push_str(&format!("{}\t{}\t{}\n", a.doc_id, a.start, a.end));
        } else {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", a.doc_id, a.label, a.start, a.end));
        }
    }
    out
}

pub fn save_annotations(path: &Path, annotations: &[Annotation]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, format_annotations(annotations)).map_err(|e| Error::io(path, e))
}

/// Splits text into maximal runs of letters/digits; every other
/// non-whitespace char is a token of its own.
pub fn tokenize(document: &Document) -> Vec<TokenSpan> {
    tokenize_str(document.text())
}

pub fn tokenize_str(text: &str) -> Vec<TokenSpan> {
    let mut tokens = Vec::new();
    let mut run: Option<(usize, String)> = None;
    let flush = |run: &mut Option<(usize, String)>, end: usize, tokens: &mut Vec<TokenSpan>| {
        if let Some((start, word)) = run.take() {
            tokens.push(TokenSpan {
                index: tokens.len(),
                text: word,
                start,
                end,
            });
        }
    };

    for (pos, c) in text.chars().enumerate() {
        if c.is_alphanumeric() {
            match &mut run {
                Some((_, word)) => word.push(c),
                None => run = Some((pos, c.to_string())),
            }
            continue;
        }
        flush(&mut run, pos, &mut tokens);
        if !c.is_whitespace() {
            tokens.push(TokenSpan {
                index: tokens.len(),
                text: c.to_string(),
                start: pos,
                end: pos + 1,
            });
        }
    }
    let len = text.chars().count();
    flush(&mut run, len, &mut tokens);
    tokens
}

/// Maps a char span onto the smallest token range covering every token it
/// overlaps. `Ok(None)` means the span touches no token (whitespace only).
pub fn align_span(start: usize, end: usize, tokens: &[TokenSpan], doc_len: usize) -> Result<Option<Range<usize>>> {
    if start >= end || end > doc_len {
        return Err(Error::validation(format!(
            "span [{start}, {end}) outside document of length {doc_len}"
        )));
    }
    // first token ending after `start`, first token starting at or after `end`
    let first = tokens.partition_point(|t| t.end <= start);
    let last = tokens.partition_point(|t| t.start < end);
    if first >= last {
        return Ok(None);
    }
    Ok(Some(first..last))
}

/// Char span covered by the token range `[first, last)`.
pub fn token_range_to_chars(tokens: &[TokenSpan], range: Range<usize>) -> (usize, usize) {
    (tokens[range.start].start, tokens[range.end - 1].end)
}
