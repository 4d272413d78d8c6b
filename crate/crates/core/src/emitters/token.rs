use ndarray::Array2;

use super::features::FeatureVector;
use super::softmax::{train_softmax, SoftmaxConfig, SoftmaxModel};
use crate::corpus::{align_span, tokenize, Annotation, Document, TokenSpan};
use crate::crf::EmissionMatrix;
use crate::error::{Error, Result};
use crate::gazetteer::stem;
use crate::tagcodec::{encode, LabeledRange, Scheme, Tag, TagSequence};

/// Log-score given to tags the emitter never saw in training.
const UNSEEN_LOG_SCORE: f64 = -30.0;

/// Token ranges of `annotations` over `tokens`, one class per span.
/// Overlapping ranges of one class are unioned; under IO touching ranges of
/// one class are unioned too since the scheme cannot keep them apart.
pub fn gold_ranges<'a>(
    doc: &Document,
    tokens: &[TokenSpan],
    annotations: impl IntoIterator<Item = &'a Annotation>,
    scheme: Scheme,
) -> Result<Vec<LabeledRange>> {
    let mut ranges = Vec::new();
    for a in annotations {
        if let Some(r) = align_span(a.start, a.end, tokens, doc.len())? {
            ranges.push(LabeledRange::new(r.start, r.end, a.label.clone()));
        }
    }
    ranges.sort();
    let mut merged: Vec<LabeledRange> = Vec::new();
    for r in ranges {
        match merged.last_mut() {
            Some(cur) if r.start < cur.end || (scheme == Scheme::Io && r.start == cur.end && r.class == cur.class) => {
                if r.class != cur.class {
                    return Err(Error::validation(format!(
                        "{}: overlapping gold spans of classes {} and {} cannot be tagged",
                        doc.id(),
                        cur.class,
                        r.class
                    )));
                }
                cur.end = cur.end.max(r.end);
            }
            _ => merged.push(r),
        }
    }
    Ok(merged)
}

pub fn gold_tag_sequence<'a>(
    doc: &Document,
    tokens: &[TokenSpan],
    annotations: impl IntoIterator<Item = &'a Annotation>,
    scheme: Scheme,
) -> Result<TagSequence> {
    let ranges = gold_ranges(doc, tokens, annotations, scheme)?;
    encode(&ranges, tokens.len(), scheme)
}

fn shape(word: &str) -> String {
    let mut out = String::new();
    for c in word.chars() {
        let s = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_numeric() {
            'd'
        } else {
            c
        };
        if !out.ends_with(s) {
            out.push(s);
        }
    }
    out
}

/// Word identity, shape and neighbouring words.
pub fn token_features(tokens: &[TokenSpan], i: usize) -> FeatureVector {
    let mut fv = FeatureVector::new();
    let word = |j: usize| stem(&tokens[j].text);
    fv.add(&format!("w={}", word(i)), 1.0);
    fv.add(&format!("shape={}", shape(&tokens[i].text)), 1.0);
    match i.checked_sub(1) {
        Some(p) => fv.add(&format!("prev={}", word(p)), 1.0),
        None => fv.add("prev=<s>", 1.0),
    }
    match tokens.get(i + 1) {
        Some(_) => fv.add(&format!("next={}", word(i + 1)), 1.0),
        None => fv.add("next=</s>", 1.0),
    }
    fv
}

/// Per-token softmax over tags whose log-probabilities serve as emissions.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmitter {
    pub model: SoftmaxModel,
    pub tag_order: Vec<Tag>,
}

impl TokenEmitter {
    pub fn train(docs: &[(&Document, &TagSequence)], tag_order: Vec<Tag>, config: &SoftmaxConfig) -> Result<Self> {
        let mut examples = Vec::new();
        for (doc, gold) in docs {
            let tokens = tokenize(doc);
            if tokens.len() != gold.len() {
                return Err(Error::validation(format!(
                    "{}: {} gold tags for {} tokens",
                    doc.id(),
                    gold.len(),
                    tokens.len()
                )));
            }
            for (i, tag) in gold.tags.iter().enumerate() {
                if !tag_order.contains(tag) {
                    return Err(Error::validation(format!("{}: tag {tag} not in the tag inventory", doc.id())));
                }
                examples.push((token_features(&tokens, i), tag.to_string()));
            }
        }
        let model = train_softmax(&examples, config)?;
        Ok(TokenEmitter { model, tag_order })
    }

    pub fn emit(&self, doc: &Document) -> EmissionMatrix {
        let tokens = tokenize(doc);
        let k = self.tag_order.len();
        let names: Vec<String> = self.tag_order.iter().map(Tag::to_string).collect();
        let mut scores = Array2::from_elem((tokens.len(), k), UNSEEN_LOG_SCORE);
        for i in 0..tokens.len() {
            let probs = self.model.predict_proba(&token_features(&tokens, i));
            for (j, name) in names.iter().enumerate() {
                if let Some(&p) = probs.0.get(name) {
                    scores[[i, j]] = p.ln().max(UNSEEN_LOG_SCORE);
                }
            }
        }
        EmissionMatrix::new(doc.id(), self.tag_order.clone(), tokens, scores, None).expect("shapes built consistently")
    }
}
