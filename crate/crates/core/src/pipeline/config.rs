use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crf::TrainConfig;
use crate::emitters::{LengthBinning, SoftmaxConfig};
use crate::error::{Error, Result};
use crate::postproc::{GazetteerBoostConfig, NestingStrategy, PunctuationRuleConfig, RepetitionRuleConfig};
use crate::tagcodec::Scheme;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Documents to predict on.
    pub documents: Option<PathBuf>,
    /// Gold annotations for `documents`; classification also takes its
    /// span instances from here.
    pub annotations: Option<PathBuf>,
    /// Training documents; defaults to `documents`.
    pub train_documents: Option<PathBuf>,
    pub train_annotations: Option<PathBuf>,
    /// One emission file per ensemble member.
    pub emissions: Vec<PathBuf>,
    pub train_emissions: Option<PathBuf>,
    pub crf_model: Option<PathBuf>,
    pub span_probs: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub crf: bool,
    pub merge: bool,
    pub punct_fix: bool,
    pub length: bool,
    pub gazetteer_boost: bool,
    pub repetition: bool,
    pub nesting: bool,
    pub multilabel: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Stages {
            crf: true,
            merge: true,
            punct_fix: true,
            length: true,
            gazetteer_boost: false,
            repetition: true,
            nesting: false,
            multilabel: false,
        }
    }
}

impl Stages {
    pub const NAMES: [&'static str; 8] = [
        "crf",
        "merge",
        "punct_fix",
        "length",
        "gazetteer_boost",
        "repetition",
        "nesting",
        "multilabel",
    ];

    fn slot(&mut self, name: &str) -> Result<&mut bool> {
        Ok(match name {
            "crf" => &mut self.crf,
            "merge" => &mut self.merge,
            "punct_fix" => &mut self.punct_fix,
            "length" => &mut self.length,
            "gazetteer_boost" => &mut self.gazetteer_boost,
            "repetition" => &mut self.repetition,
            "nesting" => &mut self.nesting,
            "multilabel" => &mut self.multilabel,
            _ => return Err(Error::Config(format!("unknown stage {name:?}"))),
        })
    }

    pub fn set(&mut self, name: &str, on: bool) -> Result<()> {
        *self.slot(name)? = on;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<bool> {
        self.clone().slot(name).map(|b| *b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PunctSection {
    /// Every char of the string is a punctuation symbol.
    pub set: String,
    /// Two-char strings, opening then closing quote.
    pub quotes: Vec<String>,
}

impl Default for PunctSection {
    fn default() -> Self {
        let d = PunctuationRuleConfig::default();
        PunctSection {
            set: d.punctuation.iter().collect(),
            quotes: d.quote_pairs.iter().map(|(o, c)| format!("{o}{c}")).collect(),
        }
    }
}

impl PunctSection {
    pub fn rule(&self) -> Result<PunctuationRuleConfig> {
        let mut pairs = Vec::new();
        for q in &self.quotes {
            let chars: Vec<char> = q.chars().collect();
            let [open, close] = chars[..] else {
                return Err(Error::Config(format!("punct.quotes entry {q:?} must be two chars")));
            };
            pairs.push((open, close));
        }
        PunctuationRuleConfig::new(self.set.chars(), pairs).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepetitionSection {
    pub t1: f64,
    pub t2: f64,
    pub class: String,
}

impl Default for RepetitionSection {
    fn default() -> Self {
        let d = RepetitionRuleConfig::default();
        RepetitionSection {
            t1: d.t1,
            t2: d.t2,
            class: d.class_name,
        }
    }
}

impl RepetitionSection {
    pub fn rule(&self) -> Result<RepetitionRuleConfig> {
        let rule = RepetitionRuleConfig {
            t1: self.t1,
            t2: self.t2,
            class_name: self.class.clone(),
        };
        rule.check()?;
        Ok(rule)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GazetteerSection {
    pub delta: f64,
}

impl Default for GazetteerSection {
    fn default() -> Self {
        GazetteerSection {
            delta: GazetteerBoostConfig::default().delta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NestingSection {
    /// 1: best allowed pair; 2: co-occurrence softmax weighting.
    pub strategy: u8,
    pub temperature: f64,
}

impl Default for NestingSection {
    fn default() -> Self {
        NestingSection {
            strategy: 2,
            temperature: 0.26,
        }
    }
}

impl NestingSection {
    pub fn strategy(&self) -> Result<NestingStrategy> {
        match self.strategy {
            1 => Ok(NestingStrategy::AllowedPairs),
            2 => Ok(NestingStrategy::Cooccurrence),
            s => Err(Error::Config(format!("nesting.strategy must be 1 or 2, got {s}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MergeOrder {
    MergeThenFix,
    FixThenMerge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeSection {
    pub order: MergeOrder,
}

impl Default for MergeSection {
    fn default() -> Self {
        MergeSection {
            order: MergeOrder::MergeThenFix,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub bin_edges: Vec<usize>,
    pub context: bool,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            bin_edges: LengthBinning::default().edges().to_vec(),
            context: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Identification,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// Row `i` enables the first `i` toggles.
    Incremental,
    /// Row `i` enables toggle `i` alone.
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub task: Task,
    pub toggles: Vec<String>,
    pub mode: AblationMode,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection {
            task: Task::Identification,
            toggles: Vec::new(),
            mode: AblationMode::Incremental,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub scheme: Scheme,
    pub paths: Paths,
    pub stages: Stages,
    pub punct: PunctSection,
    pub merge: MergeSection,
    pub repetition: RepetitionSection,
    pub gazetteer: GazetteerSection,
    pub nesting: NestingSection,
    pub features: FeaturesSection,
    pub crf: TrainConfig,
    pub softmax: SoftmaxConfig,
    pub ablation: AblationSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            scheme: Scheme::Bio,
            paths: Paths::default(),
            stages: Stages::default(),
            punct: PunctSection::default(),
            merge: MergeSection::default(),
            repetition: RepetitionSection::default(),
            gazetteer: GazetteerSection::default(),
            nesting: NestingSection::default(),
            features: FeaturesSection::default(),
            crf: TrainConfig::default(),
            softmax: SoftmaxConfig::default(),
            ablation: AblationSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = PipelineConfig::from_toml(&text)?;
        if let Some(base) = path.parent() {
            config.paths.rebase(base);
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Applies the global seed to every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.crf.seed = seed;
        self.softmax.seed = seed;
        self
    }

    pub fn check(&self) -> Result<()> {
        self.punct.rule()?;
        self.repetition.rule()?;
        self.nesting.strategy()?;
        GazetteerBoostConfig {
            delta: self.gazetteer.delta,
        }
        .check()?;
        if !(self.nesting.temperature > 0.0) {
            return Err(Error::Config("nesting.temperature must be > 0".into()));
        }
        LengthBinning::new(self.features.bin_edges.clone()).map_err(|e| Error::Config(e.to_string()))?;
        self.softmax.check()?;
        for t in &self.ablation.toggles {
            if !Stages::NAMES.contains(&t.as_str()) {
                return Err(Error::Config(format!("unknown ablation toggle {t:?}")));
            }
        }
        Ok(())
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.paths
            .output
            .as_deref()
            .ok_or_else(|| Error::Config("paths.output (or --out) is required".into()))
    }
}

impl Paths {
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.documents,
            &mut self.annotations,
            &mut self.train_documents,
            &mut self.train_annotations,
            &mut self.train_emissions,
            &mut self.crf_model,
            &mut self.span_probs,
            &mut self.gazetteer,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        self.emissions.iter_mut().for_each(fix);
    }
}

/// The path or a config error naming the missing key.
pub fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let p = path
        .as_deref()
        .ok_or_else(|| Error::Config(format!("paths.{key} is required for this run")))?;
    if !p.exists() {
        return Err(Error::Config(format!("paths.{key}: {} does not exist", p.display())));
    }
    Ok(p)
}
