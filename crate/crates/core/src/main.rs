use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use spantag::corpus::{format_annotations, load_annotations, load_documents, tokenize, Corpus};
use spantag::crf::{write_model, read_model};
use spantag::emitters::{format_emissions, format_span_probs, gold_tag_sequence, load_emissions, load_span_probs, SoftmaxConfig, TokenEmitter};
use spantag::eval::{format_report, label_scores, score_rows, span_f1_corpus};
use spantag::gazetteer::Gazetteer;
use spantag::pipeline::{
    ablate, annotations_to_predictions, decode_document, fix_predictions, merge_predictions, predictions_to_annotations,
    run_classification, run_identification, to_predictions, train_crf_on, write_ablation, PipelineConfig, Predictions,
    Task,
};
use spantag::postproc::apply_gazetteer_boost;
use spantag::spanops::{Span, SpanSet};
use spantag::synthetic::{
    generate_classification, generate_identification, write_classification_fixture, write_identification_fixture,
    ClassificationSpec, IdentificationSpec,
};
use spantag::tagcodec::{format_conll, validate, Scheme};
use spantag::{Error, Result};

#[derive(Parser)]
#[command(name = "spantag", version, about = "Span identification and classification toolkit")]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; commands print to stdout without it unless noted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Io,
    Bio,
    Bioes,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Io => Scheme::Io,
            SchemeArg::Bio => Scheme::Bio,
            SchemeArg::Bioes => Scheme::Bioes,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Identification,
    Classification,
}

#[derive(Subcommand)]
enum Command {
    /// Token offsets: doc_id, index, start, end, text.
    Tokenize {
        #[arg(long)]
        documents: PathBuf,
    },
    /// Gold tag sequences in CoNLL layout.
    Encode {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
    /// Fit CRF transitions on frozen emissions.
    TrainCrf {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        emissions: PathBuf,
    },
    /// Span predictions from emissions: masked Viterbi with --model,
    /// per-token argmax otherwise.
    Decode {
        #[arg(long)]
        emissions: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Union of several prediction files.
    Merge {
        #[arg(required = true)]
        predictions: Vec<PathBuf>,
    },
    /// Punctuation and quote repair of predicted spans.
    FixBoundaries {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
    },
    Gazetteer {
        #[command(subcommand)]
        action: GazetteerCommand,
    },
    /// Span classification as configured.
    Classify,
    /// Score a prediction file against gold annotations.
    Evaluate {
        #[arg(long, value_enum)]
        task: TaskArg,
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Run the configured toggle lattice.
    Ablate,
    /// End-to-end run of one task (default: the config's ablation.task).
    Pipeline {
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
    },
    /// Write a seeded synthetic fixture with its config; needs --out.
    Synth {
        #[arg(value_enum)]
        task: TaskArg,
    },
    /// Token emissions from the built-in feature-hashing tagger.
    Emit {
        #[arg(long)]
        train_documents: PathBuf,
        #[arg(long)]
        train_annotations: PathBuf,
        #[arg(long)]
        documents: PathBuf,
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
    },
}

#[derive(Subcommand)]
enum GazetteerCommand {
    /// Span-text to class counts from annotated documents.
    Build {
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Boost a span-probability file with gazetteer hits.
    Apply {
        #[arg(long)]
        gazetteer: PathBuf,
        #[arg(long)]
        documents: PathBuf,
        #[arg(long)]
        span_probs: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config = config.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        config.paths.output = Some(out.clone());
    }
    Ok(config)
}

/// Writes `name` under --out, or prints it.
fn emit_output(out: Option<&Path>, name: &str, content: &str) -> Result<()> {
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            let path = dir.join(name);
            fs::write(&path, content).map_err(|e| io_error(&path, e))
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Tokenize { documents } => {
            let mut text = String::new();
            for doc in load_documents(documents)?.values() {
                for t in tokenize(doc) {
                    text.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", doc.id(), t.index, t.start, t.end, t.text));
                }
            }
            emit_output(out, "tokens.tsv", &text)
        }
        Command::Encode {
            documents,
            annotations,
            scheme,
        } => {
            let scheme = scheme.map(Scheme::from).unwrap_or(config.scheme);
            let corpus = Corpus::load(documents, Some(annotations))?;
            let mut docs = Vec::new();
            for doc in corpus.documents.values() {
                let tokens = tokenize(doc);
                let seq = gold_tag_sequence(doc, &tokens, corpus.annotations_for(doc.id()), scheme)?;
                docs.push((tokens.into_iter().map(|t| t.text).collect::<Vec<_>>(), seq));
            }
            let text = format_conll(docs.iter().map(|(t, s)| (t.as_slice(), s)));
            emit_output(out, "tags.conll", &text)
        }
        Command::TrainCrf {
            documents,
            annotations,
            emissions,
        } => {
            let corpus = Corpus::load(documents, Some(annotations))?;
            let model = train_crf_on(&corpus, &load_emissions(emissions)?, &config)?;
            let dir = out.ok_or_else(|| Error::Config("train-crf needs --out".into()))?;
            fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
            write_model(&dir.join("crf_model.txt"), &model)
        }
        Command::Decode { emissions, model } => {
            let ems = load_emissions(emissions)?;
            let model = model.as_deref().map(read_model).transpose()?;
            let decoded = ems
                .iter()
                .map(|em| decode_document(em, model.as_ref(), config.scheme))
                .collect::<Result<Vec<_>>>()?;
            let illegal: usize = decoded.iter().map(|d| validate(&d.tags).iter().filter(|v| v.position < d.tags.len()).count()).sum();
            let total: usize = decoded.iter().map(|d| d.tags.len()).sum();
            eprintln!("illegal_tag_rate\t{:.6}", if total == 0 { 0.0 } else { illegal as f64 / total as f64 });
            let preds = to_predictions(&decoded);
            emit_output(out, "predictions.tsv", &format_annotations(&predictions_to_annotations(&preds, spantag::corpus::DEFAULT_LABEL)))
        }
        Command::Merge { predictions } => {
            let members = predictions
                .iter()
                .map(|p| annotations_to_predictions(&load_annotations(p)?))
                .collect::<Result<Vec<_>>>()?;
            let merged = merge_predictions(&members)?;
            emit_output(out, "merged.tsv", &format_annotations(&predictions_to_annotations(&merged, spantag::corpus::DEFAULT_LABEL)))
        }
        Command::FixBoundaries { documents, predictions } => {
            let docs = load_documents(documents)?;
            let preds = annotations_to_predictions(&load_annotations(predictions)?)?;
            let fixed = fix_predictions(&preds, &docs, &config.punct.rule()?)?;
            emit_output(out, "fixed.tsv", &format_annotations(&predictions_to_annotations(&fixed, spantag::corpus::DEFAULT_LABEL)))
        }
        Command::Gazetteer { action } => match action {
            GazetteerCommand::Build { documents, annotations } => {
                let gazetteer = Gazetteer::from_corpus(&Corpus::load(documents, Some(annotations))?);
                emit_output(out, "gazetteer.tsv", &gazetteer.to_tsv())
            }
            GazetteerCommand::Apply {
                gazetteer,
                documents,
                span_probs,
            } => {
                let gazetteer = Gazetteer::load(gazetteer)?;
                let docs = load_documents(documents)?;
                let boost = spantag::postproc::GazetteerBoostConfig {
                    delta: config.gazetteer.delta,
                };
                let mut records = load_span_probs(span_probs)?;
                for r in &mut records {
                    let doc = docs
                        .get(&r.doc_id)
                        .ok_or_else(|| Error::Validation(format!("span probabilities for unknown document {}", r.doc_id)))?;
                    if r.end > doc.len() {
                        return Err(Error::Validation(format!("span [{}, {}) outside document {}", r.start, r.end, r.doc_id)));
                    }
                    let boosted = apply_gazetteer_boost(&r.probs, gazetteer.lookup(doc.slice(r.start, r.end)), &boost);
                    let total = boosted.sum();
                    r.probs = spantag::emitters::SpanProbs::new(boosted.0.into_iter().map(|(c, p)| (c, p / total)));
                }
                emit_output(out, "span_probs.jsonl", &format_span_probs(&records))
            }
        },
        Command::Classify => {
            let result = run_classification(&config)?;
            result.write(config.output_dir()?)
        }
        Command::Evaluate {
            task,
            predictions,
            gold,
        } => {
            let pred = load_annotations(predictions)?;
            let gold = load_annotations(gold)?;
            let rows = match task {
                TaskArg::Identification => identification_rows(&pred, &gold)?,
                TaskArg::Classification => classification_rows(&pred, &gold)?,
            };
            emit_output(out, "report.tsv", &format_report(&rows))
        }
        Command::Ablate => {
            let table = ablate(&config)?;
            write_ablation(&table, config.ablation.mode, config.output_dir()?)
        }
        Command::Pipeline { task } => {
            let task = match task {
                Some(TaskArg::Identification) => Task::Identification,
                Some(TaskArg::Classification) => Task::Classification,
                None => config.ablation.task,
            };
            let dir = config.output_dir()?;
            match task {
                Task::Identification => run_identification(&config)?.write(dir),
                Task::Classification => run_classification(&config)?.write(dir),
            }
        }
        Command::Synth { task } => {
            let dir = out.ok_or_else(|| Error::Config("synth needs --out".into()))?;
            let seed = config.seed;
            let path = match task {
                TaskArg::Identification => {
                    let spec = IdentificationSpec {
                        scheme: config.scheme,
                        ..IdentificationSpec::default()
                    };
                    write_identification_fixture(dir, &generate_identification(&spec, seed)?, spec.scheme, seed)?
                }
                TaskArg::Classification => {
                    write_classification_fixture(dir, &generate_classification(&ClassificationSpec::default(), seed)?, seed)?
                }
            };
            println!("{}", path.display());
            Ok(())
        }
        Command::Emit {
            train_documents,
            train_annotations,
            documents,
            scheme,
        } => {
            let scheme = scheme.map(Scheme::from).unwrap_or(config.scheme);
            let train = Corpus::load(train_documents, Some(train_annotations))?;
            let mut classes: Vec<&str> = train.annotations.iter().map(|a| a.label.as_str()).collect();
            classes.sort();
            classes.dedup();
            let mut sequences = Vec::new();
            for doc in train.documents.values() {
                let tokens = tokenize(doc);
                sequences.push((doc, gold_tag_sequence(doc, &tokens, train.annotations_for(doc.id()), scheme)?));
            }
            let pairs: Vec<_> = sequences.iter().map(|(d, s)| (*d, s)).collect();
            let softmax = SoftmaxConfig {
                seed: config.seed,
                ..config.softmax.clone()
            };
            let emitter = TokenEmitter::train(&pairs, scheme.tag_set(&classes), &softmax)?;
            let ems: Vec<_> = load_documents(documents)?.values().map(|d| emitter.emit(d)).collect();
            emit_output(out, "emissions.jsonl", &format_emissions(&ems))
        }
    }
}

fn identification_rows(pred: &[spantag::corpus::Annotation], gold: &[spantag::corpus::Annotation]) -> Result<Vec<(String, f64)>> {
    let unlabelled = |p: Predictions| -> Result<Predictions> {
        p.into_iter()
            .map(|(d, s)| Ok((d, SpanSet::new(s.into_spans().into_iter().map(|sp| Span::new(sp.start, sp.end)).collect())?)))
            .collect()
    };
    let p = annotations_to_predictions(pred)?;
    let g = annotations_to_predictions(gold)?;
    let mut rows = score_rows("span_", &span_f1_corpus(&unlabelled(p.clone())?, &unlabelled(g.clone())?));
    let mut classes: Vec<&str> = gold.iter().map(|a| a.label.as_str()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() > 1 {
        for class in classes {
            let only = |x: &Predictions| -> Result<Predictions> {
                x.iter()
                    .map(|(d, s)| {
                        let spans = s.spans().iter().filter(|sp| sp.class.as_deref() == Some(class)).cloned().collect();
                        Ok((d.clone(), SpanSet::new(spans)?))
                    })
                    .collect()
            };
            let s = span_f1_corpus(&only(&p)?, &only(&g)?);
            rows.push((format!("span_f1[{class}]"), s.f1));
        }
    }
    Ok(rows)
}

fn classification_rows(pred: &[spantag::corpus::Annotation], gold: &[spantag::corpus::Annotation]) -> Result<Vec<(String, f64)>> {
    let group = |anns: &[spantag::corpus::Annotation]| {
        let mut m: BTreeMap<(String, usize, usize), Vec<String>> = BTreeMap::new();
        for a in anns {
            m.entry((a.doc_id.clone(), a.start, a.end)).or_default().push(a.label.clone());
        }
        m
    };
    let g = group(gold);
    let mut p = group(pred);
    if let Some(k) = p.keys().find(|k| !g.contains_key(*k)) {
        return Err(Error::Validation(format!("prediction for span {} [{}, {}) not in gold", k.0, k.1, k.2)));
    }
    let gold_labels: Vec<Vec<String>> = g.values().cloned().collect();
    let pred_labels: Vec<Vec<String>> = g.keys().map(|k| p.remove(k).unwrap_or_default()).collect();
    let scores = label_scores(&pred_labels, &gold_labels)?;
    let mut rows = vec![
        ("micro_precision".to_string(), scores.micro.precision),
        ("micro_recall".to_string(), scores.micro.recall),
        ("micro_f1".to_string(), scores.micro.f1),
    ];
    for (class, s) in &scores.per_class {
        rows.push((format!("f1[{class}]"), s.f1));
    }
    Ok(rows)
}
