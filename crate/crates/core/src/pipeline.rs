//! End-to-end procedure for one sentence: optional mixture selection, meta
//! graph construction, symbolic attachment, GAP tables, optional pruning
//! and neural-symbolic inference.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::beam::{BeamError, BeamSet};
use crate::formats::{CandidateRecord, PredictionRecord, VariableRecord};
use crate::gap::{compute_gap, GapError, GapTables};
use crate::graph::SemanticGraph;
use crate::inference::{criterion, infer, prune_report, ConfigError, DecisionConfig, InferError, SymbolicPrior};
use crate::metagraph::{attach_symbolic, build_meta_graph, MetaError, MetaGraph, VarId, VarKind};
use crate::mixture::{cluster_beams, mixture_select, MixtureModel, MixtureSelection};
use crate::smatch::isomorphic;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no valid beams and no symbolic graph")]
    NoInput,
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateDiagnostic {
    pub marginal: f64,
    pub cond_loglik: f64,
    pub score: f64,
    /// Indices into the full beam set.
    pub beams: Vec<usize>,
    pub symbolic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableDiagnostic {
    pub id: VarId,
    #[serde(flatten)]
    pub kind: VarKind,
    pub chosen: Option<String>,
    pub alpha: f64,
    pub candidates: BTreeMap<String, CandidateDiagnostic>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub variables: Vec<VariableDiagnostic>,
    /// The output matches no beam graph and not the symbolic graph.
    pub novel: bool,
    /// Zero-based index of the selected mixture component.
    pub component: Option<usize>,
    pub mixture: Option<(MixtureModel, MixtureSelection)>,
    /// Variables removed by pruning, by id before pruning.
    pub pruned: Vec<VarId>,
    pub dropped: Vec<VarId>,
    /// Variables whose likelihood fell back to the marginal.
    pub marginal_fallbacks: Vec<VarId>,
    pub fallback: Option<String>,
}

impl Diagnostics {
    pub fn mean_alpha(&self) -> Option<f64> {
        let alphas: Vec<f64> = self.variables.iter().filter(|v| v.chosen.is_some()).map(|v| v.alpha).collect();
        (!alphas.is_empty()).then(|| alphas.iter().sum::<f64>() / alphas.len() as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub graph: SemanticGraph,
    pub meta: Option<MetaGraph>,
    pub tables: Option<GapTables>,
    pub diagnostics: Diagnostics,
}

impl PipelineOutput {
    pub fn record(&self, id: &str) -> PredictionRecord {
        let d = &self.diagnostics;
        PredictionRecord {
            id: id.to_string(),
            graph: self.graph.serialize(),
            novel: d.novel,
            component: d.component.map(|m| m + 1),
            variables: d
                .variables
                .iter()
                .map(|v| VariableRecord {
                    id: v.id,
                    kind: match v.kind {
                        VarKind::Node => "node".into(),
                        VarKind::Edge { .. } => "edge".into(),
                    },
                    chosen: v.chosen.clone(),
                    alpha: v.alpha,
                    candidates: v
                        .candidates
                        .iter()
                        .map(|(s, c)| {
                            (
                                s.clone(),
                                CandidateRecord {
                                    marginal: c.marginal,
                                    cond_loglik: c.cond_loglik,
                                    score: c.score,
                                    beams: c.beams.clone(),
                                    symbolic: c.symbolic,
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
            fallback: d.fallback.clone(),
        }
    }
}

/// Whether `graph` differs from every beam graph and from `symbolic`.
pub fn is_novel(graph: &SemanticGraph, beams: &[&SemanticGraph], symbolic: Option<&SemanticGraph>) -> bool {
    !beams.iter().chain(symbolic.as_ref()).any(|g| isomorphic(graph, g))
}

/// Runs the full procedure. With no valid beams the symbolic graph is
/// returned as is; with no symbolic graph the prior is constant.
pub fn run_pipeline(
    beams: Option<&BeamSet>,
    symbolic: Option<&SemanticGraph>,
    config: &DecisionConfig,
) -> Result<PipelineOutput, PipelineError> {
    config.validate()?;
    let Some(full) = beams else {
        let g0 = symbolic.ok_or(PipelineError::NoInput)?;
        return Ok(PipelineOutput {
            graph: g0.clone(),
            meta: None,
            tables: None,
            diagnostics: Diagnostics {
                fallback: Some("no valid beams; emitted the symbolic graph".into()),
                ..Default::default()
            },
        });
    };
    let align = config.align();
    let mut diagnostics = Diagnostics::default();

    let (beams, beam_ids) = if config.mixture {
        let model = cluster_beams(full, config.mixture_cut);
        let selection = mixture_select(&model, full, symbolic, config);
        let members = model.components[selection.index].beams.clone();
        diagnostics.component = Some(selection.index);
        diagnostics.mixture = Some((model, selection));
        (full.subset(&members)?, members)
    } else {
        (full.clone(), (0..full.len()).collect())
    };

    let mut meta = build_meta_graph(&beams.graphs(), &align)?;
    if let Some(g0) = symbolic {
        meta = attach_symbolic(&meta, g0, &align)?;
    }
    let mut tables = compute_gap(&meta, &beams, &config.gap())?;
    if config.prune_threshold > 0.0 {
        let report = prune_report(&meta, &tables, config.prune_threshold);
        if !report.removed.is_empty() {
            meta = report.meta;
            tables = compute_gap(&meta, &beams, &config.gap())?;
            diagnostics.pruned = report.removed;
        }
    }
    let prior = match symbolic {
        Some(g0) => SymbolicPrior::new(&meta, g0),
        None => SymbolicPrior::empty(),
    };
    let inference = infer(&meta, &tables, &prior, config)?;

    let assignment: Vec<(VarId, &str)> = inference.choices.iter().map(|c| (c.var, c.symbol.as_str())).collect();
    tables.graph_loglik = tables.assignment_loglik(&assignment);
    diagnostics.dropped = inference.dropped.clone();
    diagnostics.marginal_fallbacks = tables.variables.iter().filter(|v| v.marginal_fallback).map(|v| v.var).collect();
    diagnostics.novel = is_novel(&inference.graph, &full.graphs(), symbolic);
    for var in meta.variables() {
        let choice = inference.choice(var.id);
        let mut candidates = BTreeMap::new();
        let mut alpha = choice.map(|c| c.alpha);
        for c in var.candidates.iter() {
            let (score, a) = criterion(var.id, &c.symbol, &tables, &prior, config)?;
            alpha.get_or_insert(a);
            candidates.insert(
                c.symbol.clone(),
                CandidateDiagnostic {
                    marginal: tables.marginal(var.id, &c.symbol).unwrap_or(0.0),
                    cond_loglik: tables.cond_loglik(var.id, &c.symbol).unwrap_or(config.log_floor),
                    score,
                    beams: c.provenance.beams.iter().map(|&b| beam_ids[b]).collect(),
                    symbolic: c.provenance.symbolic,
                },
            );
        }
        diagnostics.variables.push(VariableDiagnostic {
            id: var.id,
            kind: var.kind,
            chosen: choice.map(|c| c.symbol.clone()),
            alpha: alpha.unwrap_or(0.0),
            candidates,
        });
    }
    Ok(PipelineOutput { graph: inference.graph, meta: Some(meta), tables: Some(tables), diagnostics })
}
