//! Mixture of GAP distributions: beams with very different structure are
//! clustered and inference runs inside the single best-scoring cluster.

use kodama::{linkage, Method};
use serde::Serialize;

use crate::beam::BeamSet;
use crate::graph::SemanticGraph;
use crate::inference::{alpha, DecisionConfig};
use crate::smatch::align_with;

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// `1 − |LCS(a, b)| / max(|a|, |b|)`; two empty sequences are identical.
pub fn lcs_distance<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    1.0 - lcs_len(a, b) as f64 / longest as f64
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureComponent {
    /// Beam indices in the cluster, ascending (so best beam first).
    pub beams: Vec<usize>,
    /// `p(m|x)`: share of beams in the cluster.
    pub fraction: f64,
    /// `H(m|x)`: mean negative sequence log-likelihood.
    pub entropy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureModel {
    pub cut: f64,
    pub components: Vec<MixtureComponent>,
}

impl MixtureModel {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Groups beams by average-linkage clustering on LCS distance between
/// their symbol sequences, merging while the linkage distance is ≤ `cut`.
/// Components are ordered by their best beam.
pub fn cluster_beams(beams: &BeamSet, cut: f64) -> MixtureModel {
    let k = beams.len();
    let seqs: Vec<Vec<String>> = beams.candidates().iter().map(|c| c.symbol_sequence()).collect();
    let mut parent: Vec<usize> = (0..2 * k.max(1)).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    if k > 1 {
        let mut condensed = Vec::with_capacity(k * (k - 1) / 2);
        for i in 0..k {
            for j in i + 1..k {
                condensed.push(lcs_distance(&seqs[i], &seqs[j]));
            }
        }
        let dendrogram = linkage(&mut condensed, k, Method::Average);
        // average linkage is monotone, so steps come in ascending distance
        for (i, step) in dendrogram.steps().iter().enumerate() {
            if step.dissimilarity > cut {
                break;
            }
            let a = find(&mut parent, step.cluster1);
            let b = find(&mut parent, step.cluster2);
            parent[a] = k + i;
            parent[b] = k + i;
        }
    }
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for b in 0..k {
        let r = find(&mut parent, b);
        match groups.iter_mut().find(|(root, _)| *root == r) {
            Some((_, members)) => members.push(b),
            None => groups.push((r, vec![b])),
        }
    }
    let components = groups
        .into_iter()
        .map(|(_, members)| {
            let entropy =
                members.iter().map(|&b| -beams.candidates()[b].sequence_logprob()).sum::<f64>() / members.len() as f64;
            MixtureComponent { fraction: members.len() as f64 / k as f64, entropy, beams: members }
        })
        .collect();
    MixtureModel { cut, components }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentScore {
    pub alpha: f64,
    /// Smatch F1 of the component's best beam against the symbolic graph.
    pub smatch: Option<f64>,
    pub log_prior: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureSelection {
    /// Zero-based index into the model's components.
    pub index: usize,
    pub scores: Vec<ComponentScore>,
}

/// `argmax_m α(m)·log p(m|x) + (1 − α(m))·log p₀(m)` with
/// `log p₀(m) = ∓Smatch(G_m, G₀)`; ties go to the larger `p(m|x)`, then the
/// earlier component.
pub fn mixture_select(
    model: &MixtureModel,
    beams: &BeamSet,
    symbolic: Option<&SemanticGraph>,
    config: &DecisionConfig,
) -> MixtureSelection {
    let align = config.align();
    let scores: Vec<ComponentScore> = model
        .components
        .iter()
        .map(|c| {
            let smatch = symbolic.map(|g0| {
                let top = beams.candidates()[c.beams[0]].graph();
                align_with(top, g0, &align).score.f1
            });
            let log_prior = smatch.map_or(0.0, |s| config.mixture_prior_sign.apply(s));
            let a = alpha(c.entropy.max(0.0), config.alpha_temperature, config.bias);
            ComponentScore { alpha: a, smatch, log_prior, score: a * c.fraction.ln() + (1.0 - a) * log_prior }
        })
        .collect();
    let mut index = 0;
    for m in 1..scores.len() {
        let better = scores[m]
            .score
            .total_cmp(&scores[index].score)
            .then(model.components[m].fraction.total_cmp(&model.components[index].fraction))
            .is_gt();
        if better {
            index = m;
        }
    }
    MixtureSelection { index, scores }
}
