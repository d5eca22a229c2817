//! Corpus Smatch, element-level calibration buckets and the novel-graph
//! report.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::beam::BeamSet;
use crate::gap::{compute_gap, GapError};
use crate::graph::{GraphElement, SemanticGraph};
use crate::inference::{infer_neural, InferError};
use crate::metagraph::{attach_symbolic, build_meta_graph, MetaError, VarKind};
use crate::pipeline::is_novel;
use crate::smatch::{align_with, component_counts, AlignConfig, Alignment, ComponentCounts, MatchScore};

/// Elements whose log-probability exceeds this are left out of calibration.
pub const CERTAIN_LOGPROB: f64 = -1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("empty corpus")]
    Empty,
    #[error("prediction {0:?} has no gold graph")]
    MissingGold(String),
    #[error("gold graph {0:?} has no prediction")]
    MissingPrediction(String),
    #[error("n_bins must be between 1 and the {retained} retained elements, got {n_bins}")]
    Bins { n_bins: usize, retained: usize },
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Gap(#[from] GapError),
    #[error(transparent)]
    Infer(#[from] InferError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusScore {
    #[serde(flatten)]
    pub score: MatchScore,
    pub node_f1: f64,
    pub edge_f1: f64,
    pub sentences: usize,
}

/// Pairs up two id-keyed corpora, in the order of `predictions`.
pub fn pair_by_id<'a, A, B>(
    predictions: &'a [(String, A)],
    golds: &'a [(String, B)],
) -> Result<Vec<(&'a str, &'a A, &'a B)>, EvalError> {
    let gold: HashMap<&str, &B> = golds.iter().map(|(id, g)| (id.as_str(), g)).collect();
    let mut pairs = Vec::with_capacity(predictions.len());
    for (id, p) in predictions {
        let g = gold.get(id.as_str()).ok_or_else(|| EvalError::MissingGold(id.clone()))?;
        pairs.push((id.as_str(), p, *g));
    }
    if pairs.len() != golds.len() {
        let pred: HashMap<&str, ()> = predictions.iter().map(|(id, _)| (id.as_str(), ())).collect();
        let missing = golds.iter().find(|(id, _)| !pred.contains_key(id.as_str())).map(|(id, _)| id.clone());
        return Err(EvalError::MissingPrediction(missing.unwrap_or_default()));
    }
    Ok(pairs)
}

/// Micro-averaged Smatch: counts are summed over sentences before P/R/F1.
pub fn corpus_smatch(
    predictions: &[(String, SemanticGraph)],
    golds: &[(String, SemanticGraph)],
    align: &AlignConfig,
) -> Result<CorpusScore, EvalError> {
    if predictions.is_empty() && golds.is_empty() {
        return Err(EvalError::Empty);
    }
    let pairs = pair_by_id(predictions, golds)?;
    let (mut matched, mut total_a, mut total_b) = (0, 0, 0);
    let mut parts = ComponentCounts::default();
    for (_, p, g) in &pairs {
        let al = align_with(p, g, align);
        matched += al.matched_triples;
        total_a += al.score.total_a;
        total_b += al.score.total_b;
        parts.add(&component_counts(p, g, &al));
    }
    Ok(CorpusScore {
        score: MatchScore::from_counts(matched, total_a, total_b),
        node_f1: parts.node_f1(),
        edge_f1: parts.edge_f1(),
        sentences: pairs.len(),
    })
}

/// Whether element `el` of `pred` carries the same label as its image in
/// `gold` under `alignment`. Unaligned elements are wrong.
pub fn element_correct(pred: &SemanticGraph, gold: &SemanticGraph, alignment: &Alignment, el: GraphElement) -> bool {
    match el {
        GraphElement::Node(n) => alignment.mapping[n].is_some_and(|m| gold.label(m) == pred.label(n)),
        GraphElement::Edge(e) => {
            let edge = &pred.edges()[e];
            match (alignment.mapping[edge.source], alignment.mapping[edge.target]) {
                (Some(s), Some(t)) => {
                    gold.edges().iter().any(|g| g.source == s && g.target == t && g.label == edge.label)
                }
                _ => false,
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationElement {
    pub id: String,
    pub var: usize,
    pub is_node: bool,
    /// Label of the neural MAP candidate.
    pub label: String,
    pub log_prob: f64,
    pub neural_correct: bool,
    /// `None` when no symbolic graph was supplied.
    pub symbolic_correct: Option<bool>,
}

/// One element per meta-graph variable: the neural MAP candidate, its
/// conditional log-probability and whether it (and the symbolic graph's
/// value at the same variable) agrees with gold.
pub fn calibration_elements(
    beams: &BeamSet,
    gold: &SemanticGraph,
    symbolic: Option<&SemanticGraph>,
    temperature: f64,
    log_floor: f64,
    align: &AlignConfig,
) -> Result<Vec<CalibrationElement>, EvalError> {
    let meta = build_meta_graph(&beams.graphs(), align)?;
    let tables = compute_gap(&meta, beams, &crate::gap::GapConfig { temperature, log_floor })?;
    let map = infer_neural(&meta, &tables)?;
    let neural_alignment = align_with(&map.graph, gold, align);
    let symbolic_side = match symbolic {
        Some(g0) => {
            let with = attach_symbolic(&meta, g0, align)?;
            let al = align_with(g0, gold, align);
            Some((g0, with, al))
        }
        None => None,
    };
    let mut out = Vec::new();
    for choice in &map.choices {
        let Some(el) = map.elements[choice.var] else { continue };
        let symbolic_correct = symbolic_side.as_ref().map(|(g0, with, al)| {
            with.symbolic_realization(choice.var).is_some_and(|s| element_correct(g0, gold, al, s))
        });
        out.push(CalibrationElement {
            id: beams.input_id.clone(),
            var: choice.var,
            is_node: matches!(meta.variable(choice.var).kind, VarKind::Node),
            label: choice.symbol.clone(),
            log_prob: choice.score,
            neural_correct: element_correct(&map.graph, gold, &neural_alignment, el),
            symbolic_correct,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bucket {
    /// Probability range covered, `exp` of the extreme log-probabilities.
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub neural_correct: usize,
    pub neural_accuracy: f64,
    pub symbolic_correct: Option<usize>,
    pub symbolic_accuracy: Option<f64>,
    pub mean_log_prob: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LabelAccuracy {
    pub label: String,
    pub count: usize,
    pub neural_accuracy: f64,
    pub symbolic_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub buckets: Vec<Bucket>,
    pub excluded_count: usize,
    pub retained_count: usize,
    pub neural_accuracy: f64,
    pub symbolic_accuracy: Option<f64>,
    /// Accuracy per node label over retained node elements.
    pub by_label: Vec<LabelAccuracy>,
}

fn accuracy(correct: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        correct as f64 / n as f64
    }
}

/// Drops near-certain elements, sorts the rest by probability and splits
/// them into `n_bins` equal-count buckets; the first `retained % n_bins`
/// buckets take one extra element.
pub fn calibration_report(elements: &[CalibrationElement], n_bins: usize) -> Result<CalibrationReport, EvalError> {
    let mut retained: Vec<&CalibrationElement> = elements.iter().filter(|e| e.log_prob <= CERTAIN_LOGPROB).collect();
    let excluded_count = elements.len() - retained.len();
    if n_bins == 0 || n_bins > retained.len() {
        return Err(EvalError::Bins { n_bins, retained: retained.len() });
    }
    retained.sort_by(|a, b| a.log_prob.total_cmp(&b.log_prob));
    let has_symbolic = retained.iter().all(|e| e.symbolic_correct.is_some());
    let n = retained.len();
    let (base, rem) = (n / n_bins, n % n_bins);
    let mut buckets = Vec::with_capacity(n_bins);
    let mut start = 0;
    for i in 0..n_bins {
        let size = base + usize::from(i < rem);
        let slice = &retained[start..start + size];
        start += size;
        let neural_correct = slice.iter().filter(|e| e.neural_correct).count();
        let symbolic_correct = has_symbolic.then(|| slice.iter().filter(|e| e.symbolic_correct == Some(true)).count());
        buckets.push(Bucket {
            low: slice[0].log_prob.exp(),
            high: slice[size - 1].log_prob.exp(),
            count: size,
            neural_correct,
            neural_accuracy: accuracy(neural_correct, size),
            symbolic_correct,
            symbolic_accuracy: symbolic_correct.map(|c| accuracy(c, size)),
            mean_log_prob: slice.iter().map(|e| e.log_prob).sum::<f64>() / size as f64,
        });
    }
    let neural_total = retained.iter().filter(|e| e.neural_correct).count();
    let symbolic_total = has_symbolic.then(|| retained.iter().filter(|e| e.symbolic_correct == Some(true)).count());

    let mut labels: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for e in retained.iter().filter(|e| e.is_node) {
        let entry = labels.entry(e.label.as_str()).or_default();
        entry.0 += 1;
        entry.1 += usize::from(e.neural_correct);
        entry.2 += usize::from(e.symbolic_correct == Some(true));
    }
    let by_label = labels
        .into_iter()
        .map(|(label, (count, nc, sc))| LabelAccuracy {
            label: label.to_string(),
            count,
            neural_accuracy: accuracy(nc, count),
            symbolic_accuracy: has_symbolic.then(|| accuracy(sc, count)),
        })
        .collect();
    Ok(CalibrationReport {
        buckets,
        excluded_count,
        retained_count: n,
        neural_accuracy: accuracy(neural_total, n),
        symbolic_accuracy: symbolic_total.map(|c| accuracy(c, n)),
        by_label,
    })
}

impl CalibrationReport {
    /// CSV with header `bucket_low,bucket_high,count,neural_acc,symbolic_acc`.
    pub fn rows(&self) -> Vec<[String; 5]> {
        self.buckets
            .iter()
            .map(|b| {
                [
                    b.low.to_string(),
                    b.high.to_string(),
                    b.count.to_string(),
                    b.neural_accuracy.to_string(),
                    b.symbolic_accuracy.map(|a| a.to_string()).unwrap_or_default(),
                ]
            })
            .collect()
    }
}

pub const CSV_HEADER: [&str; 5] = ["bucket_low", "bucket_high", "count", "neural_acc", "symbolic_acc"];

/// What a prediction can be compared against.
#[derive(Clone, Debug)]
pub struct NoveltyCase<'a> {
    pub prediction: &'a SemanticGraph,
    pub beams: Vec<&'a SemanticGraph>,
    pub symbolic: Option<&'a SemanticGraph>,
    pub gold: Option<&'a SemanticGraph>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoveltyReport {
    pub total: usize,
    pub novel_count: usize,
    pub novel_fraction: f64,
    /// Micro Smatch F1 over novel predictions with gold; `None` if none.
    pub smatch_on_novel: Option<f64>,
    pub smatch_on_non_novel: Option<f64>,
}

pub fn novelty_report(cases: &[NoveltyCase], align: &AlignConfig) -> NoveltyReport {
    let mut counts = [(0usize, 0usize, 0usize, false); 2];
    let mut novel_count = 0;
    for case in cases {
        let novel = is_novel(case.prediction, &case.beams, case.symbolic);
        novel_count += usize::from(novel);
        if let Some(gold) = case.gold {
            let al = align_with(case.prediction, gold, align);
            let c = &mut counts[usize::from(novel)];
            c.0 += al.matched_triples;
            c.1 += al.score.total_a;
            c.2 += al.score.total_b;
            c.3 = true;
        }
    }
    let f1 = |(m, a, b, any): (usize, usize, usize, bool)| any.then(|| MatchScore::from_counts(m, a, b).f1);
    NoveltyReport {
        total: cases.len(),
        novel_count,
        novel_fraction: accuracy(novel_count, cases.len()),
        smatch_on_novel: f1(counts[1]),
        smatch_on_non_novel: f1(counts[0]),
    }
}
