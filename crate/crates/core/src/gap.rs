//! Graph autoregressive process: beam-importance-sampled marginal and
//! conditional probabilities of graph elements, and the graphical-model
//! likelihood of each meta-graph variable given its parents.
//!
//! Beam `k` carries weight `π_k ∝ exp(log p(g_k|x) / t)`. For a variable `v`
//! realized in beam `k` with value `s`, the within-beam probability is the
//! exponentiated symbol log-probability of that element; values a beam does
//! not realize contribute zero.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::beam::{tempered_softmax, BeamError, BeamPosterior, BeamSet};
use crate::metagraph::{MetaGraph, VarId};

/// `ln(1e-10)`: the floor applied whenever a zero probability enters a log.
pub const DEFAULT_LOG_FLOOR: f64 = -23.025850929940457;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GapError {
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error("no beam realizes {symbol:?} at variable {var}")]
    UnobservedCondition { var: VarId, symbol: String },
    #[error("marginal of {symbol:?} at variable {var} is zero")]
    ZeroMarginal { var: VarId, symbol: String },
    #[error("meta graph covers {meta} beams but the beam set has {beams}")]
    BeamCountMismatch { meta: usize, beams: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GapConfig {
    /// Aggregation temperature `t` of the beam weights.
    pub temperature: f64,
    pub log_floor: f64,
}

impl Default for GapConfig {
    fn default() -> Self {
        GapConfig { temperature: 0.1, log_floor: DEFAULT_LOG_FLOOR }
    }
}

/// `ln p`, floored; zero maps to the floor.
pub fn floored_ln(p: f64, floor: f64) -> f64 {
    if p > 0.0 {
        p.ln().max(floor)
    } else {
        floor
    }
}

/// A variable taking a value.
pub type Assignment<'s> = (VarId, &'s str);

/// Parent values observed before and after a node in one beam.
type ParentSplit = (Vec<(VarId, String)>, Vec<(VarId, String)>);

#[derive(Clone, Debug)]
struct Observation {
    symbol: String,
    prob: f64,
    position: usize,
}

/// Estimators over one beam set aligned to a meta graph.
#[derive(Clone, Debug)]
pub struct Estimator<'a> {
    meta: &'a MetaGraph,
    logprobs: Vec<f64>,
    weights: Vec<f64>,
    temperature: f64,
    /// `obs[k][v]`: what beam `k` says about variable `v`.
    obs: Vec<Vec<Option<Observation>>>,
}

/// One distinct parent assignment seen in the beams, with the beams that
/// share it and the log-likelihood it yields.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParentTerm {
    /// Parents linearized before the variable in the defining beam.
    pub before: Vec<(VarId, String)>,
    /// Parents linearized after it; non-empty terms go through Bayes' rule.
    pub after: Vec<(VarId, String)>,
    pub beams: usize,
    pub loglik: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Likelihood {
    pub loglik: f64,
    /// No beam defined the parents, so the log marginal was used.
    pub fallback: bool,
    pub terms: Vec<ParentTerm>,
}

impl<'a> Estimator<'a> {
    pub fn new(meta: &'a MetaGraph, beams: &BeamSet, posterior: &BeamPosterior) -> Result<Self, GapError> {
        if meta.num_beams() != beams.len() {
            return Err(GapError::BeamCountMismatch { meta: meta.num_beams(), beams: beams.len() });
        }
        let obs = beams
            .candidates()
            .iter()
            .enumerate()
            .map(|(k, cand)| {
                (0..meta.len())
                    .map(|v| {
                        meta.realization(k, v).map(|el| Observation {
                            symbol: cand.graph().element_label(el).to_string(),
                            prob: cand.element_logprob(el).exp(),
                            position: cand.element_position(el),
                        })
                    })
                    .collect()
            })
            .collect();
        Ok(Estimator {
            meta,
            logprobs: beams.candidates().iter().map(|c| c.sequence_logprob()).collect(),
            weights: posterior.weights.clone(),
            temperature: posterior.temperature,
            obs,
        })
    }

    pub fn meta(&self) -> &MetaGraph {
        self.meta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn matches(&self, k: usize, (v, s): Assignment) -> bool {
        self.obs[k][v].as_ref().is_some_and(|o| o.symbol == s)
    }

    /// Within-beam joint probability of a set of assignments (product of
    /// their symbol probabilities), zero unless beam `k` realizes all of them.
    fn local_joint(&self, k: usize, set: &[Assignment]) -> f64 {
        let mut p = 1.0;
        for &(v, s) in set {
            match &self.obs[k][v] {
                Some(o) if o.symbol == s => p *= o.prob,
                _ => return 0.0,
            }
        }
        p
    }

    /// `p̂(v = s | x) = Σ_k π_k p(s | g_k)`.
    pub fn marginal(&self, var: VarId, symbol: &str) -> f64 {
        self.joint_marginal(&[(var, symbol)])
    }

    pub fn joint_marginal(&self, set: &[Assignment]) -> f64 {
        (0..self.weights.len()).map(|k| self.weights[k] * self.local_joint(k, set)).sum()
    }

    /// `p̂(target | given)` for a later element given an earlier one.
    pub fn conditional(&self, target: Assignment, given: Assignment) -> Result<f64, GapError> {
        self.conditional_set(&[target], &[given])
    }

    /// Higher-order conditional. Weights are renormalized over the beams
    /// realizing every `given` assignment; a beam contributes its local
    /// joint probability of `targets` only when all targets are linearized
    /// after all of `given`.
    pub fn conditional_set(&self, targets: &[Assignment], given: &[Assignment]) -> Result<f64, GapError> {
        if given.is_empty() {
            return Ok(self.joint_marginal(targets));
        }
        let mut open = Vec::with_capacity(targets.len());
        for &(v, s) in targets {
            match given.iter().find(|(gv, _)| *gv == v) {
                Some((_, gs)) if *gs == s => {}
                Some(_) => return Ok(0.0),
                None => open.push((v, s)),
            }
        }
        if open.is_empty() {
            return Ok(1.0);
        }
        let support: Vec<usize> =
            (0..self.weights.len()).filter(|&k| given.iter().all(|&a| self.matches(k, a))).collect();
        if support.is_empty() {
            let (var, symbol) = given[0];
            return Err(GapError::UnobservedCondition { var, symbol: symbol.to_string() });
        }
        let logprobs: Vec<f64> = support.iter().map(|&k| self.logprobs[k]).collect();
        let weights = tempered_softmax(&logprobs, self.temperature);
        let mut total = 0.0;
        for (&k, w) in support.iter().zip(weights) {
            let last_given =
                given.iter().map(|&(v, _)| self.obs[k][v].as_ref().map_or(0, |o| o.position)).max().unwrap_or(0);
            let in_order = open.iter().all(|&(v, _)| self.obs[k][v].as_ref().is_some_and(|o| o.position > last_given));
            if in_order {
                total += w * self.local_joint(k, &open);
            }
        }
        Ok(total)
    }

    /// `p̂(earlier | later)` by Bayes' rule, clamped to `[0, 1]`.
    pub fn reverse_conditional(&self, earlier: Assignment, later: Assignment) -> Result<f64, GapError> {
        if earlier == later {
            return Ok(1.0);
        }
        let p_later = self.marginal(later.0, later.1);
        if p_later <= 0.0 {
            return Err(GapError::ZeroMarginal { var: later.0, symbol: later.1.to_string() });
        }
        let p_earlier = self.marginal(earlier.0, earlier.1);
        if p_earlier <= 0.0 {
            return Ok(0.0);
        }
        let forward = self.conditional(later, earlier)?;
        Ok((forward * p_earlier / p_later).clamp(0.0, 1.0))
    }

    /// Probability of `v = s` given parent values that beam order splits into
    /// `before` and `after`:
    /// `p(v | B, A) = p(A | v, B) p(v | B) / p(A | B)`.
    fn parent_conditional(&self, var: VarId, symbol: &str, before: &[Assignment], after: &[Assignment]) -> f64 {
        let target = [(var, symbol)];
        let forward = self.conditional_set(&target, before).unwrap_or(0.0);
        if after.is_empty() {
            return forward;
        }
        let mut with_target = before.to_vec();
        with_target.push((var, symbol));
        let likelihood = self.conditional_set(after, &with_target).unwrap_or(0.0);
        let evidence = self.conditional_set(after, before).unwrap_or(0.0);
        if evidence <= 0.0 {
            0.0
        } else {
            (likelihood * forward / evidence).clamp(0.0, 1.0)
        }
    }

    /// Graphical-model log-likelihood of `v = s` given its parents: the mean
    /// over beams that define at least one parent of
    /// `log p̂(v = s | pa(v) = c_k)`, with `c_k` the parent values in beam `k`.
    pub fn graphical_likelihood(&self, var: VarId, symbol: &str, floor: f64) -> Likelihood {
        let parents = &self.meta.variable(var).parents;
        let mut groups: BTreeMap<ParentSplit, usize> = BTreeMap::new();
        for k in 0..self.weights.len() {
            let own = self.obs[k][var].as_ref().map(|o| o.position);
            let mut before = Vec::new();
            let mut after = Vec::new();
            for &p in parents {
                if let Some(o) = &self.obs[k][p] {
                    let entry = (p, o.symbol.clone());
                    match own {
                        Some(pos) if o.position > pos => after.push(entry),
                        _ => before.push(entry),
                    }
                }
            }
            if before.is_empty() && after.is_empty() {
                continue;
            }
            *groups.entry((before, after)).or_insert(0) += 1;
        }
        let defined: usize = groups.values().sum();
        if defined == 0 {
            return Likelihood {
                loglik: floored_ln(self.marginal(var, symbol), floor),
                fallback: true,
                terms: Vec::new(),
            };
        }
        let mut loglik = 0.0;
        let mut terms = Vec::with_capacity(groups.len());
        for ((before, after), count) in groups {
            let b: Vec<Assignment> = before.iter().map(|(v, s)| (*v, s.as_str())).collect();
            let a: Vec<Assignment> = after.iter().map(|(v, s)| (*v, s.as_str())).collect();
            let term = floored_ln(self.parent_conditional(var, symbol, &b, &a), floor);
            loglik += count as f64 / defined as f64 * term;
            terms.push(ParentTerm { before, after, beams: count, loglik: term });
        }
        Likelihood { loglik, fallback: false, terms }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CandidateScores {
    pub symbol: String,
    pub marginal: f64,
    pub cond_loglik: f64,
    /// Realized by at least one beam.
    pub neural: bool,
    pub symbolic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VarTable {
    pub var: VarId,
    pub candidates: Vec<CandidateScores>,
    /// Per-candidate parent-assignment terms, in candidate order.
    pub conditionals: Vec<Vec<ParentTerm>>,
    pub marginal_fallback: bool,
}

/// Marginals and conditional log-likelihoods for every variable and value.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GapTables {
    pub temperature: f64,
    pub log_floor: f64,
    pub weights: Vec<f64>,
    pub variables: Vec<VarTable>,
    /// `log p(G|x)` of the assignment chosen downstream, once known.
    pub graph_loglik: Option<f64>,
}

impl GapTables {
    fn entry(&self, var: VarId, symbol: &str) -> Option<&CandidateScores> {
        self.variables.get(var)?.candidates.iter().find(|c| c.symbol == symbol)
    }

    pub fn candidates(&self, var: VarId) -> &[CandidateScores] {
        &self.variables[var].candidates
    }

    pub fn marginal(&self, var: VarId, symbol: &str) -> Option<f64> {
        self.entry(var, symbol).map(|c| c.marginal)
    }

    pub fn cond_loglik(&self, var: VarId, symbol: &str) -> Option<f64> {
        self.entry(var, symbol).map(|c| c.cond_loglik)
    }

    /// `max_s p̂(v = s | x)`.
    pub fn max_marginal(&self, var: VarId) -> f64 {
        self.variables[var].candidates.iter().map(|c| c.marginal).fold(0.0, f64::max)
    }

    /// `Σ_v log p(v = s_v | pa(v), x)`; `None` if a value is unknown.
    pub fn assignment_loglik(&self, assignment: &[Assignment]) -> Option<f64> {
        assignment.iter().map(|&(v, s)| self.cond_loglik(v, s)).sum()
    }
}

/// Fills marginal and conditional tables for every variable of `meta`.
pub fn compute_gap(meta: &MetaGraph, beams: &BeamSet, config: &GapConfig) -> Result<GapTables, GapError> {
    let posterior = BeamPosterior::new(beams, config.temperature)?;
    let est = Estimator::new(meta, beams, &posterior)?;
    let variables = meta
        .variables()
        .iter()
        .map(|v| {
            let mut candidates = Vec::with_capacity(v.candidates.len());
            let mut conditionals = Vec::with_capacity(v.candidates.len());
            let mut fallback = false;
            for c in v.candidates.iter() {
                let lik = est.graphical_likelihood(v.id, &c.symbol, config.log_floor);
                fallback |= lik.fallback;
                candidates.push(CandidateScores {
                    symbol: c.symbol.clone(),
                    marginal: est.marginal(v.id, &c.symbol),
                    cond_loglik: lik.loglik,
                    neural: c.provenance.is_neural(),
                    symbolic: c.provenance.symbolic,
                });
                conditionals.push(lik.terms);
            }
            VarTable { var: v.id, candidates, conditionals, marginal_fallback: fallback }
        })
        .collect();
    Ok(GapTables {
        temperature: config.temperature,
        log_floor: config.log_floor,
        weights: posterior.weights,
        variables,
        graph_loglik: None,
    })
}
