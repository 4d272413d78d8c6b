//! Config-driven runs: identification (decode, merge, boundary repair,
//! scoring), classification (baseline probabilities plus post-processing
//! stages) and toggle ablations.

mod ablation;
mod classify;
mod config;
mod identify;

pub use ablation::{ablate, headline_metric, lattice, write_ablation, AblationRow, AblationTable};
pub use classify::{
    baseline_probs, file_probs, instances_from, label_instances, run_classification, train_baseline, ClassificationResult,
    Instance, Rules, CLASSIFICATION_STAGES,
};
pub use config::{
    require, AblationMode, AblationSection, FeaturesSection, GazetteerSection, MergeOrder, MergeSection, NestingSection,
    Paths, PipelineConfig, PunctSection, RepetitionSection, Stages, Task,
};
pub use identify::{
    annotations_to_predictions, decode_document, fix_predictions, gold_path, gold_span_sets, merge_predictions, obtain_crf,
    predictions_to_annotations, run_identification, tags_to_spans, to_predictions, train_crf_on, DecodedDoc,
    IdentificationResult, Predictions,
};
