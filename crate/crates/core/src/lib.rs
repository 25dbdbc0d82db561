//! Extractive summarization as optimal transport.
//!
//! A summary is scored by the Wasserstein distance between the document's
//! term-frequency distribution and the summary's, with token-to-token costs
//! taken from embeddings. Sentence subsets are searched either by beam search
//! or by a relaxed binary program optimized with straight-through
//! Gumbel-sigmoid sampling.

pub mod beam;
pub mod bip;
pub mod embedding;
pub mod error;
pub mod heatmap;
pub mod objective;
pub mod ot;
pub mod pipeline;
pub mod rouge;
pub mod text;

pub use beam::{beam_search, BeamConfig, BeamOutcome};
pub use bip::{bip_loss, bip_optimize, BipConfig, BipOutcome, Penalty};
pub use embedding::{cost_matrix, load_embeddings, CostMatrix, EmbeddingTable, Metric};
pub use error::{Error, Result};
pub use objective::SelectionProblem;
pub use pipeline::{Pipeline, Preset, RunConfig, Strategy};
pub use rouge::{rouge_l, rouge_n, RougeScore};
pub use ot::{
    coverage, grad_target_marginal, solve_exact, solve_sinkhorn, wasserstein, Solver,
    SolverConfig, SolverKind, TransportPlan,
};
pub use text::{
    document_distribution, sentence_distribution, summary_distribution, tokenize,
    ActiveVocabulary, Distribution, Document, ExtractionVector, RawDocument, TokenizeOptions,
};
