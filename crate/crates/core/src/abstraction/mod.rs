//! Coarser views of a cpd: part-of-speech tags and embedding clusters.
//!
//! Both repartition the word support and compare the induced
//! distributions with the ordinary TVD, so a model that picks the right
//! kind of word but the wrong word scores better here than at word level.

pub mod embeddings;
pub mod kmeans;
pub mod semantic;
pub mod tags;

pub use embeddings::{load_embeddings, EmbeddingFormat, EmbeddingTable, Scaler};
pub use kmeans::{k_grid, kmeans, knee_index, select_k, KSelection, KmeansFit, KmeansParams};
pub use semantic::{cluster_words, tvd_sem, tvd_with, Clustering, SemanticParams, SemanticTvd, OOV_GROUP};
pub use tags::{
    last_context_token, tag_counts, tag_cpd, tag_last_word, tvd_syn, BaselineTagger, ExternalTagger,
    TagAssignment, TagSource, Tagger, UniversalTag,
};
