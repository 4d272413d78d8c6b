use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::{require, PipelineConfig, Stages};
use crate::corpus::{format_annotations, load_annotations, load_documents, Annotation, Corpus};
use crate::emitters::{
    context_range, featurize_with, load_span_probs, train_softmax, FeatureConfig, LengthBinning, SoftmaxModel, SpanProbs,
};
use crate::error::{Error, Result};
use crate::eval::{format_report, label_scores, LabelScores};
use crate::gazetteer::Gazetteer;
use crate::postproc::{
    apply_gazetteer_boost, apply_repetition, assign_multilabel, count_occurrences, resolve_nested_spans,
    GazetteerBoostConfig, NestingModel, NestingStrategy, RepetitionRuleConfig,
};

/// One span to label; `copies` is how many times it is listed (one label
/// per copy).
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub doc_id: String,
    pub start: usize,
    pub end: usize,
    pub copies: usize,
    pub text: String,
    pub gold: Vec<String>,
}

/// Groups annotations by coordinates, in document then offset order.
pub fn instances_from(corpus: &Corpus) -> Result<Vec<Instance>> {
    let mut grouped: BTreeMap<(&str, usize, usize), Vec<String>> = BTreeMap::new();
    for a in &corpus.annotations {
        grouped.entry((&a.doc_id, a.start, a.end)).or_default().push(a.label.clone());
    }
    grouped
        .into_iter()
        .map(|((doc_id, start, end), gold)| {
            let doc = corpus
                .document(doc_id)
                .ok_or_else(|| Error::validation(format!("annotation for unknown document {doc_id}")))?;
            Ok(Instance {
                doc_id: doc_id.to_string(),
                start,
                end,
                copies: gold.len(),
                text: doc.slice(start, end).to_string(),
                gold,
            })
        })
        .collect()
}

fn features(corpus: &Corpus, doc_id: &str, start: usize, end: usize, config: &FeatureConfig) -> Result<crate::emitters::FeatureVector> {
    let doc = corpus
        .document(doc_id)
        .ok_or_else(|| Error::validation(format!("unknown document {doc_id}")))?;
    let chars: Vec<char> = doc.text().chars().collect();
    let (cs, ce) = context_range(&chars, start, end);
    let context: String = if config.context { chars[cs..ce].iter().collect() } else { String::new() };
    Ok(featurize_with(doc.slice(start, end), &context, config))
}

pub fn train_baseline(train: &Corpus, feature_config: &FeatureConfig, config: &PipelineConfig) -> Result<SoftmaxModel> {
    let examples = train
        .annotations
        .iter()
        .map(|a| Ok((features(train, &a.doc_id, a.start, a.end, feature_config)?, a.label.clone())))
        .collect::<Result<Vec<_>>>()?;
    train_softmax(&examples, &config.softmax)
}

pub fn baseline_probs(model: &SoftmaxModel, corpus: &Corpus, instances: &[Instance], feature_config: &FeatureConfig) -> Result<Vec<SpanProbs>> {
    instances
        .iter()
        .map(|i| Ok(model.predict_proba(&features(corpus, &i.doc_id, i.start, i.end, feature_config)?)))
        .collect()
}

/// Probabilities from a span-probability file, matched by coordinates.
pub fn file_probs(path: &Path, instances: &[Instance]) -> Result<Vec<SpanProbs>> {
    let records = load_span_probs(path)?;
    let by_key: BTreeMap<(&str, usize, usize), &SpanProbs> =
        records.iter().map(|r| ((r.doc_id.as_str(), r.start, r.end), &r.probs)).collect();
    instances
        .iter()
        .map(|i| {
            by_key
                .get(&(i.doc_id.as_str(), i.start, i.end))
                .map(|p| (*p).clone())
                .ok_or_else(|| {
                    Error::validation(format!(
                        "{}: no probabilities for span {} [{}, {})",
                        path.display(),
                        i.doc_id,
                        i.start,
                        i.end
                    ))
                })
        })
        .collect()
}

/// Everything the post-processing stages may consult.
pub struct Rules<'a> {
    pub gazetteer: Option<&'a Gazetteer>,
    pub boost: GazetteerBoostConfig,
    pub repetition: RepetitionRuleConfig,
    pub nesting: Option<&'a NestingModel>,
    pub strategy: NestingStrategy,
}

/// Applies the enabled stages in their fixed order (gazetteer boost,
/// repetition, nesting, multi-label) and returns the labels per instance.
pub fn label_instances(instances: &[Instance], probs: &[SpanProbs], stages: &Stages, rules: &Rules) -> Result<Vec<Vec<String>>> {
    if instances.len() != probs.len() {
        return Err(Error::validation("one probability vector per instance required"));
    }
    let mut scores: Vec<SpanProbs> = probs.to_vec();

    if stages.gazetteer_boost {
        let gaz = rules
            .gazetteer
            .ok_or_else(|| Error::Config("gazetteer_boost needs a gazetteer".into()))?;
        for (s, inst) in scores.iter_mut().zip(instances) {
            *s = apply_gazetteer_boost(s, gaz.lookup(&inst.text), &rules.boost);
        }
    }

    let mut by_doc: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in instances.iter().enumerate() {
        by_doc.entry(&inst.doc_id).or_default().push(i);
    }

    if stages.repetition {
        for idx in by_doc.values() {
            let texts: Vec<&str> = idx.iter().map(|&i| instances[i].text.as_str()).collect();
            for &i in idx {
                let k = count_occurrences(&instances[i].text, &texts);
                scores[i] = apply_repetition(&scores[i], k, &rules.repetition)?;
            }
        }
    }

    let mut primary: Vec<Option<String>> = vec![None; instances.len()];
    if stages.nesting {
        let model = rules
            .nesting
            .ok_or_else(|| Error::Config("the nesting stage needs training annotations".into()))?;
        for idx in by_doc.values() {
            let ranges: Vec<(usize, usize)> = idx.iter().map(|&i| (instances[i].start, instances[i].end)).collect();
            let doc_scores: Vec<SpanProbs> = idx.iter().map(|&i| scores[i].clone()).collect();
            let resolved = resolve_nested_spans(&ranges, &doc_scores, model, rules.strategy)?;
            for (&i, label) in idx.iter().zip(resolved.labels) {
                primary[i] = label;
            }
        }
    }

    instances
        .iter()
        .zip(&scores)
        .zip(primary)
        .map(|((inst, s), fixed)| {
            let first = match fixed {
                Some(l) => l,
                None => s
                    .argmax()
                    .ok_or_else(|| Error::validation(format!("empty class scores for {} [{}, {})", inst.doc_id, inst.start, inst.end)))?
                    .to_string(),
            };
            if !stages.multilabel || inst.copies <= 1 {
                return Ok(vec![first; inst.copies]);
            }
            let rest: SpanProbs = SpanProbs::new(s.0.iter().filter(|(c, _)| **c != first).map(|(c, p)| (c.clone(), *p)));
            let mut labels = vec![first];
            labels.extend(assign_multilabel(inst.copies - 1, &rest)?);
            Ok(labels)
        })
        .collect()
}

pub const CLASSIFICATION_STAGES: [&str; 5] = ["length", "gazetteer_boost", "repetition", "nesting", "multilabel"];

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub instances: Vec<Instance>,
    pub labels: Vec<Vec<String>>,
    /// `(row name, micro F1)`: the baseline, then one row per enabled stage.
    pub rows: Vec<(String, f64)>,
    pub scores: LabelScores,
}

impl ClassificationResult {
    pub fn micro_f1(&self) -> f64 {
        self.scores.micro.f1
    }

    pub fn report_rows(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut prev: Option<f64> = None;
        for (name, f1) in &self.rows {
            out.push((format!("micro_f1[{name}]"), *f1));
            if let Some(p) = prev {
                out.push((format!("delta[{name}]"), f1 - p));
            }
            prev = Some(*f1);
        }
        out.push(("micro_f1".into(), self.micro_f1()));
        for (class, s) in &self.scores.per_class {
            out.push((format!("f1[{class}]"), s.f1));
        }
        out
    }

    pub fn annotations(&self) -> Vec<Annotation> {
        let mut out = Vec::new();
        for (inst, labels) in self.instances.iter().zip(&self.labels) {
            for l in labels {
                out.push(Annotation::new(inst.doc_id.clone(), l.clone(), inst.start, inst.end));
            }
        }
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let labels = out_dir.join("classification.tsv");
        fs::write(&labels, format_annotations(&self.annotations())).map_err(|e| Error::io(&labels, e))?;
        let report = out_dir.join("classification_report.tsv");
        fs::write(&report, format_report(&self.report_rows())).map_err(|e| Error::io(&report, e))
    }
}

fn score(instances: &[Instance], labels: &[Vec<String>]) -> Result<LabelScores> {
    let gold: Vec<Vec<String>> = instances.iter().map(|i| i.gold.clone()).collect();
    label_scores(labels, &gold)
}

pub fn run_classification(config: &PipelineConfig) -> Result<ClassificationResult> {
    let paths = &config.paths;
    let docs = load_documents(require(&paths.documents, "documents")?)?;
    let corpus = Corpus::new(docs, load_annotations(require(&paths.annotations, "annotations")?)?)?;
    let instances = instances_from(&corpus)?;

    let train = match &paths.train_annotations {
        Some(_) => {
            let dir = match &paths.train_documents {
                Some(_) => require(&paths.train_documents, "train_documents")?,
                None => require(&paths.documents, "documents")?,
            };
            Some(Corpus::load(dir, Some(require(&paths.train_annotations, "train_annotations")?))?)
        }
        None => None,
    };
    let need_train = |what: &str| -> Result<&Corpus> {
        train
            .as_ref()
            .ok_or_else(|| Error::Config(format!("{what} needs paths.train_annotations")))
    };

    let binning = LengthBinning::new(config.features.bin_edges.clone()).map_err(|e| Error::Config(e.to_string()))?;
    let feature_config = |length: bool| FeatureConfig {
        binning: binning.clone(),
        length,
        context: config.features.context,
    };
    // probabilities with and without length features
    let (with_length, without_length) = match &paths.span_probs {
        Some(_) => {
            if !config.stages.length {
                return Err(Error::Config(
                    "the length toggle applies to the built-in baseline; it cannot be switched off for paths.span_probs"
                        .into(),
                ));
            }
            let p = file_probs(require(&paths.span_probs, "span_probs")?, &instances)?;
            (p, None)
        }
        None => {
            let train = need_train("the built-in span classifier")?;
            let fit = |length: bool| -> Result<Vec<SpanProbs>> {
                let fc = feature_config(length);
                let model = train_baseline(train, &fc, config)?;
                baseline_probs(&model, &corpus, &instances, &fc)
            };
            let plain = fit(false)?;
            if config.stages.length {
                (fit(true)?, Some(plain))
            } else {
                (plain, None)
            }
        }
    };

    let gazetteer = if config.stages.gazetteer_boost {
        Some(match &paths.gazetteer {
            Some(p) if p.exists() => Gazetteer::load(p)?,
            _ => Gazetteer::from_corpus(need_train("gazetteer_boost without paths.gazetteer")?),
        })
    } else {
        None
    };
    let nesting = if config.stages.nesting {
        let train = need_train("the nesting stage")?;
        Some(NestingModel::from_annotations(&train.annotations, None, config.nesting.temperature)?)
    } else {
        None
    };
    let rules = Rules {
        gazetteer: gazetteer.as_ref(),
        boost: GazetteerBoostConfig {
            delta: config.gazetteer.delta,
        },
        repetition: config.repetition.rule()?,
        nesting: nesting.as_ref(),
        strategy: config.nesting.strategy()?,
    };

    // incremental rows in the fixed stage order
    let mut rows = Vec::new();
    let mut stages = Stages {
        gazetteer_boost: false,
        repetition: false,
        nesting: false,
        multilabel: false,
        ..config.stages.clone()
    };
    let base_probs = without_length.as_ref().unwrap_or(&with_length);
    let base = label_instances(&instances, base_probs, &stages, &rules)?;
    rows.push(("baseline".to_string(), score(&instances, &base)?.micro.f1));
    let mut labels = base;
    for name in CLASSIFICATION_STAGES {
        if !config.stages.get(name)? {
            continue;
        }
        if name == "length" && without_length.is_none() {
            continue;
        }
        stages.set(name, true)?;
        labels = label_instances(&instances, &with_length, &stages, &rules)?;
        rows.push((format!("+{name}"), score(&instances, &labels)?.micro.f1));
    }
    let scores = score(&instances, &labels)?;
    Ok(ClassificationResult {
        instances,
        labels,
        rows,
        scores,
    })
}
