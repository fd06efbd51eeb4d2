//! Controlled studies on top of the core evaluation: replacing part of a
//! model's distributions with oracle estimates, measuring Monte Carlo error
//! under subsampling, and repeating the evaluation in first-token space.

pub mod bpe;
pub mod improve;
pub mod subsample;
pub mod token;

pub use bpe::{bpe_first_token, BpeVocab};
pub use improve::{
    closest_k, default_ks, improvement_from_dataset, improvement_sweep, summarize_sweep,
    ImprovementResult, SweepSummary,
};
pub use subsample::{accepted_words, subsample_cpd, subsample_mse, SubsampleReport, SubsampleResult};
pub use token::{
    token_cpds_from_generations, token_cpds_from_logits, token_level_eval, tokenize_dataset,
};
