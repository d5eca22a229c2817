//! Inference over beams of semantic-graph candidates: alignment, meta-graph
//! construction, graph autoregressive probability estimates and the
//! uncertainty-aware combination with a symbolic parse.

pub mod beam;
pub mod eval;
pub mod formats;
pub mod gap;
pub mod graph;
pub mod inference;
pub mod metagraph;
pub mod mixture;
pub mod pipeline;
pub mod smatch;

pub use beam::{beam_posterior, segment_symbols, BeamCandidate, BeamError, BeamPosterior, BeamSet};
pub use gap::{compute_gap, Estimator, GapConfig, GapError, GapTables};
pub use graph::{linearize, parse_linearized, Edge, GraphElement, GraphError, Node, ParseError, SemanticGraph};
pub use inference::{alpha, criterion, infer, prune, DecisionConfig, SymbolicPrior};
pub use metagraph::{attach_symbolic, build_meta_graph, MetaGraph, VarId};
pub use mixture::{cluster_beams, mixture_select, MixtureModel};
pub use pipeline::{run_pipeline, PipelineOutput};
pub use smatch::{align, align_with, exhaustive_align, smatch_score, AlignConfig, Alignment, MatchScore};
