//! Seeded synthetic corpora for exercising the pipeline end to end.
//!
//! Identification data has spans with Markov structure (geometric lengths,
//! sparse starts) and emission matrices corrupted in ways a transition model
//! can undo: interior dropouts, begin tags inside spans, isolated false
//! positives, and per-member missed spans for ensembles.
//!
//! Classification data has one class per length band plus a repetition
//! class whose phrase occurs several times in its document and whose length
//! is uninformative. Words come from a large random vocabulary so that span
//! wording carries little signal.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{save_annotations, save_documents, tokenize, Annotation, Corpus, Document, DEFAULT_LABEL};
use crate::crf::EmissionMatrix;
use crate::emitters::{gold_tag_sequence, save_emissions};
use crate::error::{Error, Result};
use crate::pipeline::{AblationMode, PipelineConfig, Task};
use crate::tagcodec::{Prefix, Scheme, Tag};

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// `size` distinct pronounceable lowercase words.
pub fn vocabulary(size: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut words = BTreeSet::new();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let syllables = rng.random_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push(CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char);
            w.push(VOWELS[rng.random_range(0..VOWELS.len())] as char);
        }
        if words.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationSpec {
    pub train_docs: usize,
    pub dev_docs: usize,
    pub sentences_per_doc: usize,
    pub vocab: usize,
    /// Chance that a span opens at a given word outside spans.
    pub span_start: f64,
    /// Chance that an open span continues to the next word.
    pub span_continue: f64,
    pub scheme: Scheme,
    /// Ensemble members for the dev set.
    pub members: usize,
    pub margin: f64,
    pub noise: f64,
    /// Interior span tokens pushed towards `O`.
    pub dropout: f64,
    /// Interior span tokens pushed towards `B`.
    pub begin_confusion: f64,
    /// Outside tokens pushed towards `I`.
    pub false_positive: f64,
    /// Whole spans an ensemble member fails to see.
    pub miss: f64,
}

impl Default for IdentificationSpec {
    fn default() -> Self {
        IdentificationSpec {
            train_docs: 40,
            dev_docs: 30,
            sentences_per_doc: 10,
            vocab: 400,
            span_start: 0.08,
            span_continue: 0.8,
            scheme: Scheme::Bio,
            members: 3,
            margin: 2.0,
            noise: 0.8,
            dropout: 0.2,
            begin_confusion: 0.1,
            false_positive: 0.05,
            miss: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IdentificationData {
    pub train: Corpus,
    pub dev: Corpus,
    pub train_emissions: Vec<EmissionMatrix>,
    /// One emission list per ensemble member.
    pub dev_emissions: Vec<Vec<EmissionMatrix>>,
}

fn sentence_words(rng: &mut ChaCha8Rng, vocab: &[String]) -> Vec<String> {
    let n = rng.random_range(8..=20);
    (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].clone()).collect()
}

/// Text plus PROP spans over whole words.
fn identification_document(id: &str, spec: &IdentificationSpec, vocab: &[String], rng: &mut ChaCha8Rng) -> Result<(Document, Vec<Annotation>)> {
    let mut text = String::new();
    let mut pos = 0usize;
    let mut annotations = Vec::new();
    for s in 0..spec.sentences_per_doc {
        if s > 0 {
            text.push(' ');
            pos += 1;
        }
        let words = sentence_words(rng, vocab);
        let mut open: Option<usize> = None;
        let mut last_end = pos;
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                text.push(' ');
                pos += 1;
            }
            let start = pos;
            text.push_str(w);
            pos += w.chars().count();
            match open {
                Some(_) if rng.random_bool(spec.span_continue) => {}
                Some(st) => {
                    annotations.push(Annotation::new(id, DEFAULT_LABEL, st, last_end));
                    open = None;
                }
                None => {}
            }
            if open.is_none() && rng.random_bool(spec.span_start) && !annotations.last().is_some_and(|a: &Annotation| a.end + 1 >= start) {
                open = Some(start);
            }
            last_end = pos;
        }
        if let Some(st) = open {
            annotations.push(Annotation::new(id, DEFAULT_LABEL, st, last_end));
        }
        text.push('.');
        pos += 1;
    }
    Ok((Document::new(id, text)?, annotations))
}

fn tag_index(tag_order: &[Tag], prefix: Prefix) -> Option<usize> {
    tag_order.iter().position(|t| t.prefix == prefix)
}

/// Noisy emissions for one document given its gold tags.
fn noisy_emissions(doc: &Document, annotations: &[Annotation], spec: &IdentificationSpec, miss_rng: &mut ChaCha8Rng, rng: &mut ChaCha8Rng) -> Result<EmissionMatrix> {
    let tokens = tokenize(doc);
    let tag_order = spec.scheme.tag_set(&[DEFAULT_LABEL]);
    let kept: Vec<&Annotation> = annotations.iter().filter(|_| !miss_rng.random_bool(spec.miss)).collect();
    let gold = gold_tag_sequence(doc, &tokens, annotations.iter(), spec.scheme)?;
    let seen = gold_tag_sequence(doc, &tokens, kept.iter().copied(), spec.scheme)?;
    let normal = Normal::new(0.0, spec.noise).map_err(|e| Error::validation(e.to_string()))?;
    let (k, t_len) = (tag_order.len(), tokens.len());
    let o = tag_index(&tag_order, Prefix::O).expect("O always present");
    let inside = tag_index(&tag_order, Prefix::I).expect("I always present");
    let begin = tag_index(&tag_order, Prefix::B);
    let push = spec.margin + 2.0;
    let mut scores = Array2::zeros((t_len, k));
    for t in 0..t_len {
        for j in 0..k {
            scores[[t, j]] = normal.sample(rng);
        }
        let target = seen.tags[t].clone();
        let y = tag_order.iter().position(|x| *x == target).expect("tag in inventory");
        scores[[t, y]] += spec.margin;
        let interior = target.prefix == Prefix::I && t + 1 < t_len && seen.tags[t + 1].prefix == Prefix::I;
        if interior {
            let roll: f64 = rng.random();
            if roll < spec.dropout {
                scores[[t, o]] += push;
            } else if roll < spec.dropout + spec.begin_confusion {
                if let Some(b) = begin {
                    scores[[t, b]] += push;
                }
            }
        } else if target.is_outside() && gold.tags[t].is_outside() && rng.random_bool(spec.false_positive) {
            scores[[t, inside]] += push;
        }
    }
    EmissionMatrix::new(doc.id(), tag_order, tokens, scores, None)
}

fn doc_id(split: u64, i: usize) -> String {
    format!("{}", split * 100_000 + i as u64)
}

pub fn generate_identification(spec: &IdentificationSpec, seed: u64) -> Result<IdentificationData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(spec.vocab, &mut rng);
    let mut make_split = |split: u64, n: usize| -> Result<(Corpus, Vec<(Document, Vec<Annotation>)>)> {
        let mut docs = BTreeMap::new();
        let mut all = Vec::new();
        let mut raw = Vec::new();
        for i in 0..n {
            let id = doc_id(split, i);
            let (doc, anns) = identification_document(&id, spec, &vocab, &mut rng)?;
            docs.insert(id, doc.clone());
            all.extend(anns.iter().cloned());
            raw.push((doc, anns));
        }
        Ok((Corpus::new(docs, all)?, raw))
    };
    let (train, train_raw) = make_split(1, spec.train_docs)?;
    let (dev, dev_raw) = make_split(2, spec.dev_docs)?;

    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0001);
    let mut no_miss = ChaCha8Rng::seed_from_u64(0);
    let train_spec = IdentificationSpec {
        miss: 0.0,
        ..spec.clone()
    };
    let train_emissions = train_raw
        .iter()
        .map(|(d, a)| noisy_emissions(d, a, &train_spec, &mut no_miss, &mut noise_rng))
        .collect::<Result<Vec<_>>>()?;
    let mut dev_emissions = Vec::new();
    for m in 0..spec.members {
        let mut member_rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_1000 + m as u64));
        let mut miss_rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_2000 + m as u64));
        dev_emissions.push(
            dev_raw
                .iter()
                .map(|(d, a)| noisy_emissions(d, a, spec, &mut miss_rng, &mut member_rng))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(IdentificationData {
        train,
        dev,
        train_emissions,
        dev_emissions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSpec {
    pub train_docs: usize,
    pub dev_docs: usize,
    pub spans_per_doc: usize,
    pub vocab: usize,
    /// `(class, shortest, longest)` in words.
    pub length_classes: Vec<(String, usize, usize)>,
    pub repetition_class: String,
    /// Share of span slots used by a repeated phrase.
    pub repetition_rate: f64,
    /// Longest repeated phrase, in words.
    pub repetition_max_len: usize,
}

impl Default for ClassificationSpec {
    fn default() -> Self {
        ClassificationSpec {
            train_docs: 40,
            dev_docs: 30,
            spans_per_doc: 12,
            vocab: 4000,
            length_classes: vec![
                ("Loaded_Language".into(), 1, 2),
                ("Doubt".into(), 3, 4),
                ("Exaggeration,Minimisation".into(), 5, 7),
                ("Flag-Waving".into(), 8, 11),
            ],
            repetition_class: "Repetition".into(),
            repetition_rate: 0.2,
            repetition_max_len: 11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassificationData {
    pub train: Corpus,
    pub dev: Corpus,
}

fn classification_document(id: &str, spec: &ClassificationSpec, vocab: &[String], rng: &mut ChaCha8Rng) -> Result<(Document, Vec<Annotation>)> {
    // (label, phrase) slots; a repeated phrase takes 2 or 3 slots
    let mut slots: Vec<(String, String)> = Vec::new();
    let mut used = BTreeSet::new();
    let mut phrase = |lo: usize, hi: usize, rng: &mut ChaCha8Rng| loop {
        let n = rng.random_range(lo..=hi);
        let p: Vec<&str> = (0..n).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        let p = p.join(" ");
        if used.insert(p.clone()) {
            return p;
        }
    };
    while slots.len() < spec.spans_per_doc {
        if rng.random_bool(spec.repetition_rate) {
            let p = phrase(1, spec.repetition_max_len, rng);
            for _ in 0..rng.random_range(2..=3) {
                slots.push((spec.repetition_class.clone(), p.clone()));
            }
        } else {
            let (class, lo, hi) = &spec.length_classes[rng.random_range(0..spec.length_classes.len())];
            let p = phrase(*lo, *hi, rng);
            slots.push((class.clone(), p));
        }
    }
    let mut text = String::new();
    let mut annotations = Vec::new();
    for (label, p) in slots {
        let filler: Vec<&str> = (0..rng.random_range(3..=8)).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        if !text.is_empty() {
            text.push(' ');
        }
        text.push_str(&filler.join(" "));
        text.push(' ');
        let start = text.chars().count();
        text.push_str(&p);
        let end = text.chars().count();
        text.push('.');
        annotations.push(Annotation::new(id, label, start, end));
    }
    Ok((Document::new(id, text)?, annotations))
}

pub fn generate_classification(spec: &ClassificationSpec, seed: u64) -> Result<ClassificationData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(spec.vocab, &mut rng);
    let mut make_split = |split: u64, n: usize| -> Result<Corpus> {
        let mut docs = BTreeMap::new();
        let mut all = Vec::new();
        for i in 0..n {
            let id = doc_id(split, i);
            let (doc, anns) = classification_document(&id, spec, &vocab, &mut rng)?;
            docs.insert(id, doc);
            all.extend(anns);
        }
        Corpus::new(docs, all)
    };
    let train = make_split(1, spec.train_docs)?;
    let dev = make_split(2, spec.dev_docs)?;
    Ok(ClassificationData { train, dev })
}

fn save_split(dir: &Path, name: &str, corpus: &Corpus) -> Result<()> {
    let docs = dir.join(name);
    fs::create_dir_all(&docs).map_err(|e| Error::io(&docs, e))?;
    save_documents(&docs, corpus.documents.values())?;
    save_annotations(&dir.join(format!("{name}.labels")), &corpus.annotations)
}

fn write_config(dir: &Path, config: &PipelineConfig) -> Result<PathBuf> {
    let path = dir.join("config.toml");
    fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes the corpus, emission files and a ready-to-run config (paths
/// relative to `dir`); returns the config path.
pub fn write_identification_fixture(dir: &Path, data: &IdentificationData, scheme: Scheme, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_split(dir, "train", &data.train)?;
    save_split(dir, "dev", &data.dev)?;
    save_emissions(&dir.join("train.emissions.jsonl"), &data.train_emissions)?;
    let mut members = Vec::new();
    for (i, ems) in data.dev_emissions.iter().enumerate() {
        let name = format!("dev.member{i}.emissions.jsonl");
        save_emissions(&dir.join(&name), ems)?;
        members.push(PathBuf::from(name));
    }
    let mut config = PipelineConfig::default().with_seed(seed);
    config.scheme = scheme;
    config.paths.documents = Some("dev".into());
    config.paths.annotations = Some("dev.labels".into());
    config.paths.train_documents = Some("train".into());
    config.paths.train_annotations = Some("train.labels".into());
    config.paths.train_emissions = Some("train.emissions.jsonl".into());
    config.paths.emissions = members;
    config.paths.output = Some("out".into());
    config.ablation.task = Task::Identification;
    config.ablation.toggles = vec!["crf".into(), "merge".into(), "punct_fix".into()];
    config.ablation.mode = AblationMode::Incremental;
    write_config(dir, &config)
}

pub fn write_classification_fixture(dir: &Path, data: &ClassificationData, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_split(dir, "train", &data.train)?;
    save_split(dir, "dev", &data.dev)?;
    let mut config = PipelineConfig::default().with_seed(seed);
    config.paths.documents = Some("dev".into());
    config.paths.annotations = Some("dev.labels".into());
    config.paths.train_documents = Some("train".into());
    config.paths.train_annotations = Some("train.labels".into());
    config.paths.output = Some("out".into());
    config.softmax.epochs = 30;
    config.stages.length = true;
    config.stages.repetition = true;
    config.ablation.task = Task::Classification;
    config.ablation.toggles = vec!["length".into(), "repetition".into()];
    config.ablation.mode = AblationMode::Incremental;
    write_config(dir, &config)
}
