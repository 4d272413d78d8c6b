use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::{require, MergeOrder, PipelineConfig};
use crate::corpus::{format_annotations, load_annotations, load_documents, Annotation, Corpus, Document};
use crate::crf::{read_model, train, CrfModel, EmissionMatrix};
use crate::emitters::{gold_tag_sequence, load_emissions};
use crate::error::{Error, Result};
use crate::eval::{format_report, score_rows, span_f1_corpus, token_f1, SpanScore};
use crate::postproc::{fix_in_chars, PunctuationRuleConfig};
use crate::spanops::{merge_ensemble, Span, SpanSet};
use crate::tagcodec::{decode, validate, DecodeMode, Scheme, TagSequence};

pub type Predictions = BTreeMap<String, SpanSet>;

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedDoc {
    pub doc_id: String,
    /// Decoder output before any repair.
    pub tags: TagSequence,
    /// Char spans after lenient decoding.
    pub spans: SpanSet,
}

/// Char spans of a tag sequence over the emission's tokens. Illegal
/// sequences are read leniently.
pub fn tags_to_spans(em: &EmissionMatrix, seq: &TagSequence) -> Result<SpanSet> {
    let ranges = decode(seq, DecodeMode::Lenient)?;
    SpanSet::new(
        ranges
            .into_iter()
            .map(|r| Span::with_class(em.tokens[r.start].start, em.tokens[r.end - 1].end, r.class))
            .collect(),
    )
}

/// Per-token argmax, or masked Viterbi when a model is given.
pub fn decode_document(em: &EmissionMatrix, model: Option<&CrfModel>, scheme: Scheme) -> Result<DecodedDoc> {
    let tags = match model {
        Some(m) => m.decode_tags(em, true)?,
        None => TagSequence::new(em.tags_for(&em.argmax_path()), scheme),
    };
    let spans = tags_to_spans(em, &tags)?;
    Ok(DecodedDoc {
        doc_id: em.doc_id.clone(),
        tags,
        spans,
    })
}

pub fn to_predictions(decoded: &[DecodedDoc]) -> Predictions {
    decoded.iter().map(|d| (d.doc_id.clone(), d.spans.clone())).collect()
}

/// Ensemble union per document.
pub fn merge_predictions(members: &[Predictions]) -> Result<Predictions> {
    let mut docs: BTreeMap<&String, Vec<SpanSet>> = BTreeMap::new();
    for member in members {
        for (doc, set) in member {
            docs.entry(doc).or_default().push(set.clone());
        }
    }
    docs.into_iter()
        .map(|(doc, sets)| Ok((doc.clone(), merge_ensemble(&sets)?)))
        .collect()
}

/// Boundary repair of every span; spans that end up identical collapse.
pub fn fix_predictions(
    predictions: &Predictions,
    documents: &BTreeMap<String, Document>,
    rule: &PunctuationRuleConfig,
) -> Result<Predictions> {
    let mut out = Predictions::new();
    for (doc_id, set) in predictions {
        let doc = documents
            .get(doc_id)
            .ok_or_else(|| Error::validation(format!("no document {doc_id} for boundary fixing")))?;
        let chars: Vec<char> = doc.text().chars().collect();
        let mut spans = Vec::new();
        for span in set.spans() {
            if span.end > chars.len() {
                return Err(Error::validation(format!(
                    "span [{}, {}) outside document {doc_id}",
                    span.start, span.end
                )));
            }
            let (start, end) = fix_in_chars(span.start, span.end, &chars, rule);
            spans.push(Span { start, end, ..span.clone() });
        }
        let mut fixed = SpanSet::new(spans)?.into_spans();
        fixed.dedup_by(|a, b| a.start == b.start && a.end == b.end && a.class == b.class);
        out.insert(doc_id.clone(), SpanSet::new(fixed)?);
    }
    Ok(out)
}

/// Gold spans per document, unlabelled; every document gets an entry.
pub fn gold_span_sets(corpus: &Corpus) -> Result<Predictions> {
    let mut out: Predictions = corpus.documents.keys().map(|d| (d.clone(), SpanSet::default())).collect();
    for doc in corpus.documents.keys() {
        let set = SpanSet::from_ranges(corpus.annotations_for(doc).map(|a| (a.start, a.end)))?;
        out.insert(doc.clone(), set);
    }
    Ok(out)
}

fn strip_classes(p: &Predictions) -> Predictions {
    p.iter()
        .map(|(d, s)| {
            let spans = s
                .spans()
                .iter()
                .map(|sp| Span {
                    class: None,
                    ..sp.clone()
                })
                .collect();
            (d.clone(), SpanSet::new(spans).expect("spans already valid"))
        })
        .collect()
}

pub fn predictions_to_annotations(p: &Predictions, default_label: &str) -> Vec<Annotation> {
    let mut out: Vec<Annotation> = p
        .iter()
        .flat_map(|(doc, set)| {
            set.spans()
                .iter()
                .map(|s| Annotation::new(doc.clone(), s.class.as_deref().unwrap_or(default_label), s.start, s.end))
        })
        .collect();
    out.sort_by(|a, b| (&a.doc_id, a.start, a.end, &a.label).cmp(&(&b.doc_id, b.start, b.end, &b.label)));
    out.dedup();
    out
}

/// Labelled span sets per document from annotation rows.
pub fn annotations_to_predictions(annotations: &[Annotation]) -> Result<Predictions> {
    let mut grouped: BTreeMap<String, Vec<Span>> = BTreeMap::new();
    for a in annotations {
        grouped
            .entry(a.doc_id.clone())
            .or_default()
            .push(Span::with_class(a.start, a.end, a.label.clone()));
    }
    grouped.into_iter().map(|(d, spans)| Ok((d, SpanSet::new(spans)?))).collect()
}

/// Index of each gold tag in `em.tag_order`.
pub fn gold_path(em: &EmissionMatrix, doc: &Document, annotations: &[&Annotation], scheme: Scheme) -> Result<Vec<usize>> {
    let seq = gold_tag_sequence(doc, &em.tokens, annotations.iter().copied(), scheme)?;
    seq.tags
        .iter()
        .map(|t| {
            em.tag_order
                .iter()
                .position(|o| o == t)
                .ok_or_else(|| Error::validation(format!("{}: gold tag {t} missing from tag_order", em.doc_id)))
        })
        .collect()
}

/// Loads the CRF model file, or trains one from training emissions and
/// annotations when no model file exists.
pub fn obtain_crf(config: &PipelineConfig, tag_order: &[crate::tagcodec::Tag]) -> Result<CrfModel> {
    let paths = &config.paths;
    let model = match &paths.crf_model {
        Some(p) if p.exists() => read_model(p)?,
        _ => {
            if paths.train_emissions.is_none() || paths.train_annotations.is_none() {
                return Err(Error::Config(
                    "the crf stage needs paths.crf_model or paths.train_emissions with paths.train_annotations".into(),
                ));
            }
            let ems = load_emissions(require(&paths.train_emissions, "train_emissions")?)?;
            let docs_dir = match &paths.train_documents {
                Some(_) => require(&paths.train_documents, "train_documents")?,
                None => require(&paths.documents, "documents")?,
            };
            let corpus = Corpus::load(docs_dir, Some(require(&paths.train_annotations, "train_annotations")?))?;
            train_crf_on(&corpus, &ems, config)?
        }
    };
    if model.tag_order != tag_order {
        return Err(Error::Config("CRF model tag order differs from the emission files".into()));
    }
    Ok(model)
}

pub fn train_crf_on(corpus: &Corpus, ems: &[EmissionMatrix], config: &PipelineConfig) -> Result<CrfModel> {
    let mut dataset = Vec::new();
    for em in ems {
        let doc = corpus
            .document(&em.doc_id)
            .ok_or_else(|| Error::validation(format!("training emissions name unknown document {}", em.doc_id)))?;
        let anns: Vec<&Annotation> = corpus.annotations_for(&em.doc_id).collect();
        let path = gold_path(em, doc, &anns, config.scheme)?;
        dataset.push((em.clone(), path));
    }
    train(&dataset, config.scheme, &config.crf)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationResult {
    pub predictions: Predictions,
    /// Share of decoded tags entering through an illegal transition, over
    /// every ensemble member, before repair.
    pub illegal_tag_rate: f64,
    pub span: Option<SpanScore>,
    pub token: Option<SpanScore>,
}

impl IdentificationResult {
    pub fn report_rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("illegal_tag_rate".to_string(), self.illegal_tag_rate)];
        if let Some(s) = &self.span {
            rows.extend(score_rows("span_", s));
        }
        if let Some(s) = &self.token {
            rows.extend(score_rows("token_", s));
        }
        rows
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let preds = out_dir.join("identification.tsv");
        let text = format_annotations(&predictions_to_annotations(&self.predictions, crate::corpus::DEFAULT_LABEL));
        fs::write(&preds, text).map_err(|e| Error::io(&preds, e))?;
        let report = out_dir.join("identification_report.tsv");
        fs::write(&report, format_report(&self.report_rows())).map_err(|e| Error::io(&report, e))
    }
}

pub fn run_identification(config: &PipelineConfig) -> Result<IdentificationResult> {
    let paths = &config.paths;
    if paths.emissions.is_empty() {
        return Err(Error::Config("paths.emissions must list at least one emission file".into()));
    }
    let mut members = Vec::new();
    for (i, p) in paths.emissions.iter().enumerate() {
        if !p.exists() {
            return Err(Error::Config(format!("paths.emissions[{i}]: {} does not exist", p.display())));
        }
        members.push(load_emissions(p)?);
    }
    if !config.stages.merge {
        members.truncate(1);
    }
    let documents = match &paths.documents {
        Some(_) => Some(load_documents(require(&paths.documents, "documents")?)?),
        None => None,
    };
    let gold = match &paths.annotations {
        Some(_) => {
            let docs = documents
                .clone()
                .ok_or_else(|| Error::Config("paths.annotations needs paths.documents".into()))?;
            Some(Corpus::new(docs, load_annotations(require(&paths.annotations, "annotations")?)?)?)
        }
        None => None,
    };

    let model = match (config.stages.crf, members[0].first()) {
        (true, Some(em)) => Some(obtain_crf(config, &em.tag_order)?),
        _ => None,
    };

    let (mut illegal, mut total) = (0usize, 0usize);
    let mut decoded_members = Vec::new();
    for ems in &members {
        let decoded: Vec<DecodedDoc> = ems
            .iter()
            .map(|em| decode_document(em, model.as_ref(), config.scheme))
            .collect::<Result<_>>()?;
        for d in &decoded {
            illegal += validate(&d.tags).iter().filter(|v| v.position < d.tags.len()).count();
            total += d.tags.len();
        }
        decoded_members.push(decoded);
    }
    let illegal_tag_rate = if total == 0 { 0.0 } else { illegal as f64 / total as f64 };

    let rule = config.punct.rule()?;
    let fix = |p: &Predictions| -> Result<Predictions> {
        if !config.stages.punct_fix {
            return Ok(p.clone());
        }
        let docs = documents
            .as_ref()
            .ok_or_else(|| Error::Config("the punct_fix stage needs paths.documents".into()))?;
        fix_predictions(p, docs, &rule)
    };
    let member_preds: Vec<Predictions> = decoded_members.iter().map(|d| to_predictions(d)).collect();
    let predictions = match config.merge.order {
        MergeOrder::MergeThenFix => fix(&merge_predictions(&member_preds)?)?,
        MergeOrder::FixThenMerge => {
            let fixed = member_preds.iter().map(&fix).collect::<Result<Vec<_>>>()?;
            merge_predictions(&fixed)?
        }
    };

    let (span, token) = match &gold {
        Some(corpus) => {
            let gold_sets = gold_span_sets(corpus)?;
            let span = span_f1_corpus(&strip_classes(&predictions), &gold_sets);
            let mut pred_tags = Vec::new();
            let mut gold_tags = Vec::new();
            for (em, d) in members[0].iter().zip(&decoded_members[0]) {
                let Some(doc) = corpus.document(&em.doc_id) else { continue };
                let anns: Vec<&Annotation> = corpus.annotations_for(&em.doc_id).collect();
                let g = gold_tag_sequence(doc, &em.tokens, anns, config.scheme)?;
                pred_tags.extend(d.tags.tags.iter().cloned());
                gold_tags.extend(g.tags);
            }
            let token = token_f1(
                &TagSequence::new(pred_tags, config.scheme),
                &TagSequence::new(gold_tags, config.scheme),
            )?;
            (Some(span), Some(token))
        }
        None => (None, None),
    };

    Ok(IdentificationResult {
        predictions,
        illegal_tag_rate,
        span,
        token,
    })
}
