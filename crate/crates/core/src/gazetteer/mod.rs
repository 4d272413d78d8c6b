//! Training-set gazetteer: stemmed span text mapped to the distribution of
//! classes that text was annotated with.

mod porter;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

pub use porter::stem;

use crate::corpus::{tokenize_str, Corpus};
use crate::error::{Error, Result};

/// Lookup key: word tokens stemmed and joined by single spaces, with
/// punctuation tokens dropped.
pub fn make_key(span_text: &str) -> String {
    tokenize_str(span_text)
        .iter()
        .filter(|t| t.text.chars().all(char::is_alphanumeric))
        .map(|t| stem(&t.text))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub counts: BTreeMap<String, u64>,
    pub distribution: BTreeMap<String, f64>,
}

impl Entry {
    fn from_counts(counts: BTreeMap<String, u64>) -> Self {
        let total: u64 = counts.values().sum();
        let distribution = counts
            .iter()
            .map(|(class, &n)| (class.clone(), n as f64 / total as f64))
            .collect();
        Entry { counts, distribution }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    entries: BTreeMap<String, Entry>,
}

impl Gazetteer {
    /// Aggregates `(span text, class)` pairs; order does not matter.
    pub fn build<'a>(items: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
        for (text, class) in items {
            *counts.entry(make_key(text)).or_default().entry(class.to_string()).or_default() += 1;
        }
        Gazetteer {
            entries: counts.into_iter().map(|(k, c)| (k, Entry::from_counts(c))).collect(),
        }
    }

    pub fn from_corpus(corpus: &Corpus) -> Self {
        let items: Vec<(&str, &str)> = corpus
            .annotations
            .iter()
            .filter_map(|a| {
                let doc = corpus.document(&a.doc_id)?;
                Some((doc.slice(a.start, a.end), a.label.as_str()))
            })
            .collect();
        Gazetteer::build(items)
    }

    pub fn lookup(&self, span_text: &str) -> Option<&BTreeMap<String, f64>> {
        self.entries.get(&make_key(span_text)).map(|e| &e.distribution)
    }

    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// TSV, one entry per line sorted by key: `key<TAB>class:count[,class:count...]`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (key, entry) in &self.entries {
            let counts: Vec<String> = entry.counts.iter().map(|(c, n)| format!("{c}:{n}")).collect();
            out.push_str(&format!("{key}\t{}\n", counts.join(",")));
        }
        out
    }

    pub fn from_tsv(content: &str) -> Result<Self> {
        let ctx = "gazetteer";
        let mut entries = BTreeMap::new();
        for (i, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let (key, counts) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(ctx, i + 1, "expected key<TAB>counts"))?;
            let mut parsed = BTreeMap::new();
            // class names may themselves contain commas: a count item ends at
            // the first piece carrying a `:<count>` suffix
            let mut pending = String::new();
            for piece in counts.split(',') {
                if !pending.is_empty() {
                    pending.push(',');
                }
                pending.push_str(piece);
                let Some((class, n)) = pending.rsplit_once(':') else { continue };
                if n.is_empty() || !n.bytes().all(|b| b.is_ascii_digit()) {
                    continue;
                }
                let n: u64 = n
                    .parse()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| Error::parse(ctx, i + 1, format!("invalid count in {pending:?}")))?;
                *parsed.entry(class.to_string()).or_default() += n;
                pending.clear();
            }
            if !pending.is_empty() || parsed.is_empty() {
                return Err(Error::parse(ctx, i + 1, format!("malformed counts {counts:?}")));
            }
            entries.insert(key.to_string(), Entry::from_counts(parsed));
        }
        Ok(Gazetteer { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Gazetteer::from_tsv(&content)
    }
}
