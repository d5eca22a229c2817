//! Uncertainty-weighted decisions between neural and symbolic candidates,
//! greedy top-down inference over the meta graph, and likelihood pruning.
//!
//! Each variable scores its candidates with the Hurwicz criterion
//! `R = α · log p(v | pa(v), x) + (1 − α) · log p₀(v)` where
//! `α = σ(−H/T + b)` shrinks as the neural model grows uncertain.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gap::{GapConfig, GapTables, DEFAULT_LOG_FLOOR};
use crate::graph::{Edge, GraphElement, GraphError, Node, SemanticGraph};
use crate::metagraph::{MetaGraph, VarId, VarKind};
use crate::smatch::AlignConfig;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NotFinite { name: &'static str, value: f64 },
    #[error("log floor must be negative and finite, got {0}")]
    Floor(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferError {
    #[error("variable {var} has no candidate {symbol:?}")]
    UnknownCandidate { var: VarId, symbol: String },
    #[error("assembled graph is invalid: {0}")]
    Assembly(#[from] GraphError),
}

/// How `H(v|x)` is evaluated when computing α.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaMode {
    /// One α per variable, from its best beam-realized candidate.
    #[default]
    PerVariable,
    /// A separate α for every candidate, from that candidate's own likelihood.
    PerCandidate,
}

/// Sign applied to Smatch in the mixture prior `log p₀(m) = ±Smatch(G_m, G₀)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorSign {
    #[default]
    Negative,
    Positive,
}

impl PriorSign {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            PriorSign::Negative => -x,
            PriorSign::Positive => x,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecisionConfig {
    /// `T` in `α = σ(−H/T + b)`.
    pub alpha_temperature: f64,
    /// `b` in `α = σ(−H/T + b)`.
    pub bias: f64,
    /// Beam aggregation temperature `t`.
    pub temperature: f64,
    pub log_floor: f64,
    /// Minimum max-marginal a variable needs to survive pruning; 0 disables.
    pub prune_threshold: f64,
    pub mixture: bool,
    pub mixture_cut: f64,
    pub mixture_prior_sign: PriorSign,
    pub alpha_mode: AlphaMode,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for DecisionConfig {
    fn default() -> Self {
        let align = AlignConfig::default();
        DecisionConfig {
            alpha_temperature: 0.1,
            bias: 0.25,
            temperature: 0.1,
            log_floor: DEFAULT_LOG_FLOOR,
            prune_threshold: 0.0,
            mixture: false,
            mixture_cut: 0.5,
            mixture_prior_sign: PriorSign::Negative,
            alpha_mode: AlphaMode::PerVariable,
            restarts: align.restarts,
            iterations: align.iterations,
            seed: align.seed,
        }
    }
}

impl DecisionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, value) in [("alpha_temperature", self.alpha_temperature), ("temperature", self.temperature)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        if !self.bias.is_finite() {
            return Err(ConfigError::NotFinite { name: "bias", value: self.bias });
        }
        if !(self.log_floor.is_finite() && self.log_floor < 0.0) {
            return Err(ConfigError::Floor(self.log_floor));
        }
        for (name, value) in [("prune_threshold", self.prune_threshold), ("mixture_cut", self.mixture_cut)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfRange { name, value });
            }
        }
        Ok(())
    }

    pub fn align(&self) -> AlignConfig {
        AlignConfig { restarts: self.restarts, iterations: self.iterations, seed: self.seed }
    }

    pub fn gap(&self) -> GapConfig {
        GapConfig { temperature: self.temperature, log_floor: self.log_floor }
    }
}

/// `σ(−H/T + b)`.
pub fn alpha(h: f64, temperature: f64, bias: f64) -> f64 {
    let x = -h / temperature + bias;
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Indicator prior from the symbolic graph: `log p₀(v = s) = 1` when `G₀`
/// realizes `s` at `v`, else 0.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SymbolicPrior {
    graph: Option<SemanticGraph>,
    members: Vec<Option<String>>,
}

impl SymbolicPrior {
    /// Prior that is constant everywhere.
    pub fn empty() -> Self {
        SymbolicPrior::default()
    }

    /// Reads `G₀`'s value at each variable from a meta graph built with
    /// [`attach_symbolic`](crate::metagraph::attach_symbolic).
    pub fn new(meta: &MetaGraph, symbolic: &SemanticGraph) -> Self {
        let members = (0..meta.len())
            .map(|v| meta.symbolic_realization(v).map(|el| symbolic.element_label(el).to_string()))
            .collect();
        SymbolicPrior { graph: Some(symbolic.clone()), members }
    }

    pub fn graph(&self) -> Option<&SemanticGraph> {
        self.graph.as_ref()
    }

    pub fn symbol(&self, var: VarId) -> Option<&str> {
        self.members.get(var)?.as_deref()
    }

    pub fn log_prior(&self, var: VarId, symbol: &str) -> f64 {
        if self.symbol(var) == Some(symbol) {
            1.0
        } else {
            0.0
        }
    }
}

/// α for a variable: `H = −max` cond log-likelihood over its beam-realized
/// candidates, or `−floor` when no beam realizes it.
pub fn variable_alpha(tables: &GapTables, var: VarId, config: &DecisionConfig) -> f64 {
    let best =
        tables.candidates(var).iter().filter(|c| c.neural).map(|c| c.cond_loglik).fold(f64::NEG_INFINITY, f64::max);
    let h = if best.is_finite() { -best } else { -config.log_floor };
    alpha(h.max(0.0), config.alpha_temperature, config.bias)
}

/// `R(v = s | x)` together with the α it used.
pub fn criterion(
    var: VarId,
    symbol: &str,
    tables: &GapTables,
    prior: &SymbolicPrior,
    config: &DecisionConfig,
) -> Result<(f64, f64), InferError> {
    let cond = tables
        .cond_loglik(var, symbol)
        .ok_or_else(|| InferError::UnknownCandidate { var, symbol: symbol.to_string() })?;
    let a = match config.alpha_mode {
        AlphaMode::PerVariable => variable_alpha(tables, var, config),
        AlphaMode::PerCandidate => alpha((-cond).max(0.0), config.alpha_temperature, config.bias),
    };
    Ok((a * cond + (1.0 - a) * prior.log_prior(var, symbol), a))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Choice {
    pub var: VarId,
    pub symbol: String,
    pub score: f64,
    pub alpha: f64,
    pub marginal: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub graph: SemanticGraph,
    /// Decisions in visiting order.
    pub choices: Vec<Choice>,
    /// Output element realizing each variable.
    pub elements: Vec<Option<GraphElement>>,
    /// Edge variables left out because every label was already taken by a
    /// parallel edge.
    pub dropped: Vec<VarId>,
}

impl Inference {
    pub fn choice(&self, var: VarId) -> Option<&Choice> {
        self.choices.iter().find(|c| c.var == var)
    }
}

/// Greedy depth-first inference from the root variable, choosing
/// `argmax_s R(v = s)` at each variable; ties go to the higher marginal,
/// then the lexicographically smaller symbol.
pub fn infer(
    meta: &MetaGraph,
    tables: &GapTables,
    prior: &SymbolicPrior,
    config: &DecisionConfig,
) -> Result<Inference, InferError> {
    infer_by(meta, tables, |v, s| criterion(v, s, tables, prior, config))
}

/// Inference that ignores the prior and picks the most likely candidate
/// under the graphical model.
pub fn infer_neural(meta: &MetaGraph, tables: &GapTables) -> Result<Inference, InferError> {
    infer_by(meta, tables, |v, s| {
        let cond =
            tables.cond_loglik(v, s).ok_or_else(|| InferError::UnknownCandidate { var: v, symbol: s.to_string() })?;
        Ok((cond, 1.0))
    })
}

fn infer_by<F>(meta: &MetaGraph, tables: &GapTables, score: F) -> Result<Inference, InferError>
where
    F: Fn(VarId, &str) -> Result<(f64, f64), InferError>,
{
    let mut visited = vec![false; meta.len()];
    let mut order = Vec::with_capacity(meta.len());
    let mut stack = vec![meta.root_var()];
    while let Some(v) = stack.pop() {
        if visited[v] {
            continue;
        }
        visited[v] = true;
        order.push(v);
        stack.extend(meta.variable(v).children.iter().rev().copied());
    }

    let mut choices = Vec::with_capacity(order.len());
    let mut elements = vec![None; meta.len()];
    let mut dropped = Vec::new();
    let mut nodes = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    // Node variables precede their outgoing edge variables in `order`, and
    // an edge variable precedes its target, so targets are resolved after.
    let mut pending: Vec<(VarId, String)> = Vec::new();
    for &v in &order {
        let var = meta.variable(v);
        let taken: Vec<&str> = match var.kind {
            VarKind::Node => Vec::new(),
            VarKind::Edge { source, target } => pending
                .iter()
                .filter(|(e, _)| matches!(meta.variable(*e).kind, VarKind::Edge { source: s, target: t } if s == source && t == target))
                .map(|(_, l)| l.as_str())
                .collect(),
        };
        let mut best: Option<Choice> = None;
        for symbol in var.candidates.symbols() {
            if taken.contains(&symbol) {
                continue;
            }
            let (r, a) = score(v, symbol)?;
            let marginal = tables.marginal(v, symbol).unwrap_or(0.0);
            let better = match &best {
                None => true,
                Some(b) => r
                    .total_cmp(&b.score)
                    .then(marginal.total_cmp(&b.marginal))
                    .then_with(|| b.symbol.as_str().cmp(symbol))
                    .is_gt(),
            };
            if better {
                best = Some(Choice { var: v, symbol: symbol.to_string(), score: r, alpha: a, marginal });
            }
        }
        let Some(choice) = best else {
            dropped.push(v);
            continue;
        };
        match var.kind {
            VarKind::Node => {
                elements[v] = Some(GraphElement::Node(nodes.len()));
                nodes.push(Node { id: nodes.len(), label: choice.symbol.clone() });
            }
            VarKind::Edge { .. } => pending.push((v, choice.symbol.clone())),
        }
        choices.push(choice);
    }
    for (e, label) in pending {
        let VarKind::Edge { source, target } = meta.variable(e).kind else { unreachable!() };
        let (Some(GraphElement::Node(s)), Some(GraphElement::Node(t))) = (elements[source], elements[target]) else {
            continue;
        };
        elements[e] = Some(GraphElement::Edge(edges.len()));
        edges.push(Edge { source: s, target: t, label });
    }
    let graph = SemanticGraph::new(nodes, edges, 0)?;
    Ok(Inference { graph, choices, elements, dropped })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PruneReport {
    pub meta: MetaGraph,
    /// Removed variables, by id in the input meta graph, in removal order.
    pub removed: Vec<VarId>,
}

/// Removes low-marginal variables, weakest first, while keeping the meta
/// graph connected. A node variable goes together with its incident edge
/// variables, and only when all of them fall below the threshold.
pub fn prune_report(meta: &MetaGraph, tables: &GapTables, threshold: f64) -> PruneReport {
    let mut removed: Vec<VarId> = Vec::new();
    if threshold > 0.0 {
        let mut order: Vec<VarId> = (0..meta.len()).collect();
        order.sort_by(|&a, &b| tables.max_marginal(a).total_cmp(&tables.max_marginal(b)).then(a.cmp(&b)));
        let mut gone: HashSet<VarId> = HashSet::new();
        for v in order {
            if gone.contains(&v) || tables.max_marginal(v) >= threshold {
                continue;
            }
            let mut group = vec![v];
            if meta.variable(v).is_node() {
                let incident: Vec<VarId> = meta
                    .variables()
                    .iter()
                    .filter(|e| !gone.contains(&e.id))
                    .filter(|e| matches!(e.kind, VarKind::Edge { source, target } if source == v || target == v))
                    .map(|e| e.id)
                    .collect();
                if incident.iter().any(|&e| tables.max_marginal(e) >= threshold) {
                    continue;
                }
                group.extend(incident);
            }
            let mut trial = gone.clone();
            trial.extend(group.iter().copied());
            if meta.connected_without(&trial) {
                gone = trial;
                removed.extend(group);
            }
        }
    }
    let set: BTreeSet<VarId> = removed.iter().copied().collect();
    PruneReport { meta: meta.without(&set), removed }
}

pub fn prune(meta: &MetaGraph, tables: &GapTables, threshold: f64) -> MetaGraph {
    prune_report(meta, tables, threshold).meta
}
