use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use gapinfer::eval::{calibration_elements, calibration_report, corpus_smatch, EvalError, CSV_HEADER};
use gapinfer::formats::{read_beam_records, read_graphs, PredictionRecord};
use gapinfer::inference::prune_report;
use gapinfer::mixture::MixtureComponent;
use gapinfer::{build_meta_graph, cluster_beams, compute_gap, run_pipeline, BeamError, BeamSet, SemanticGraph};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

/// Counts record-level problems while reporting each one on stderr.
#[derive(Default)]
struct Issues {
    count: usize,
}

impl Issues {
    fn warn(&mut self, message: impl std::fmt::Display) {
        eprintln!("warning: {message}");
        self.count += 1;
    }

    fn check(&self, strict: bool) -> Result<(), CliError> {
        if strict && self.count > 0 {
            return Err(CliError::Strict { count: self.count });
        }
        Ok(())
    }
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("missing input path `{key}`")))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_to(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|source| CliError::Io { path: "<stdout>".into(), source })
        }
    }
}

fn jsonl<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row).expect("record serializes");
        buf.push(b'\n');
    }
    buf
}

/// The summary goes to stdout when the main output is a file.
fn summary(output: Option<&Path>, line: String) {
    if output.is_some() {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

/// Beam sets by id in file order; `None` when no candidate was valid.
fn load_beams(path: &Path, issues: &mut Issues) -> Result<Vec<(String, Option<BeamSet>)>, CliError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for rec in read_beam_records(open(path)?) {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                issues.warn(format_args!("{}: {e}", path.display()));
                continue;
            }
        };
        if !seen.insert(rec.id.clone()) {
            issues.warn(format_args!("{}: duplicate id {}; record skipped", path.display(), rec.id));
            continue;
        }
        let (set, rejected) = rec.beam_set();
        for (i, e) in rejected {
            issues.warn(format_args!("{}: beam {i}: {e}", rec.id));
        }
        let set = match set {
            Ok(s) => Some(s),
            Err(BeamError::Empty) => None,
            Err(e) => {
                issues.warn(format_args!("{}: {e}", rec.id));
                None
            }
        };
        out.push((rec.id, set));
    }
    Ok(out)
}

fn load_graphs(path: &Path, issues: &mut Issues) -> Result<Vec<(String, SemanticGraph)>, CliError> {
    let mut out = Vec::new();
    for rec in read_graphs(open(path)?) {
        match rec {
            Ok(pair) => out.push(pair),
            Err(e) => issues.warn(format_args!("{}: {e}", path.display())),
        }
    }
    Ok(out)
}

pub fn infer(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.infer;
    let mut issues = Issues::default();
    let mut sentences = load_beams(required(&s.beams, "infer.beams")?, &mut issues)?;
    let symbolic: HashMap<String, SemanticGraph> = match (&s.symbolic, s.no_symbolic) {
        (Some(p), false) => load_graphs(p, &mut issues)?.into_iter().collect(),
        _ => HashMap::new(),
    };
    if !symbolic.is_empty() {
        let known: HashSet<String> = sentences.iter().map(|(id, _)| id.clone()).collect();
        let mut extra: Vec<&String> = symbolic.keys().filter(|id| !known.contains(*id)).collect();
        extra.sort();
        sentences.extend(extra.into_iter().map(|id| (id.clone(), None)));
    }

    let results: Vec<Result<PredictionRecord, String>> = sentences
        .par_iter()
        .map(|(id, set)| {
            run_pipeline(set.as_ref(), symbolic.get(id), &cfg.decision)
                .map(|out| out.record(id))
                .map_err(|e| format!("{id}: {e}"))
        })
        .collect();
    let (records, failed) = split(results, &mut issues);
    issues.check(s.strict)?;

    write_to(s.output.as_deref(), &jsonl(&records))?;
    let alphas: Vec<f64> =
        records.iter().flat_map(|r| r.variables.iter().filter(|v| v.chosen.is_some()).map(|v| v.alpha)).collect();
    let novel = records.iter().filter(|r| r.novel).count();
    summary(
        s.output.as_deref(),
        format!(
            "sentences={} novel_fraction={:.4} mean_alpha={:.4}",
            records.len(),
            if records.is_empty() { 0.0 } else { novel as f64 / records.len() as f64 },
            if alphas.is_empty() { 0.0 } else { alphas.iter().sum::<f64>() / alphas.len() as f64 },
        ),
    );
    finish(failed)
}

fn eval_error(e: EvalError) -> CliError {
    CliError::Input(e.to_string())
}

pub fn score(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.score;
    let mut issues = Issues::default();
    let predictions = load_graphs(required(&s.predictions, "score.predictions")?, &mut issues)?;
    let gold = load_graphs(required(&s.gold, "score.gold")?, &mut issues)?;
    issues.check(s.strict)?;
    let score = corpus_smatch(&predictions, &gold, &cfg.decision.align()).map_err(eval_error)?;
    let mut line = serde_json::to_vec(&score).expect("score serializes");
    line.push(b'\n');
    write_to(None, &line)
}

pub fn calibrate(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.calibrate;
    let mut issues = Issues::default();
    let beams = load_beams(required(&s.beams, "calibrate.beams")?, &mut issues)?;
    let gold: HashMap<String, SemanticGraph> =
        load_graphs(required(&s.gold, "calibrate.gold")?, &mut issues)?.into_iter().collect();
    let symbolic: Option<HashMap<String, SemanticGraph>> = match &s.symbolic {
        Some(p) => Some(load_graphs(p, &mut issues)?.into_iter().collect()),
        None => None,
    };
    let mut work = Vec::new();
    for (id, set) in &beams {
        let g = gold.get(id).ok_or_else(|| eval_error(EvalError::MissingGold(id.clone())))?;
        match set {
            Some(set) => work.push((set, g, symbolic.as_ref().and_then(|m| m.get(id)))),
            None => issues.warn(format_args!("{id}: no valid beams; sentence skipped")),
        }
    }
    let align = cfg.decision.align();
    let d = &cfg.decision;
    let results: Vec<_> = work
        .par_iter()
        .map(|(set, g, g0)| {
            calibration_elements(set, g, *g0, d.temperature, d.log_floor, &align)
                .map_err(|e| format!("{}: {e}", set.input_id))
        })
        .collect();
    let (per_sentence, failed) = split(results, &mut issues);
    let elements: Vec<_> = per_sentence.into_iter().flatten().collect();
    issues.check(s.strict)?;
    let report = calibration_report(&elements, s.n_bins).map_err(eval_error)?;

    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    write_to(s.output.as_deref(), &json)?;
    if let Some(path) = &s.csv {
        let io = |source| CliError::Io { path: path.clone(), source };
        let mut w = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
        w.write_record(CSV_HEADER).map_err(|e| io(e.into()))?;
        for row in report.rows() {
            w.write_record(&row).map_err(|e| io(e.into()))?;
        }
        w.flush().map_err(io)?;
    }
    finish(failed)
}

#[derive(Serialize)]
struct PruneStats {
    id: String,
    variables: usize,
    max_marginals: Vec<f64>,
    /// Removed variable ids in removal order.
    pruned: Vec<usize>,
}

pub fn prune_stats(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.prune_stats;
    let mut issues = Issues::default();
    let beams = load_beams(required(&s.beams, "prune_stats.beams")?, &mut issues)?;
    let d = &cfg.decision;
    let sets: Vec<&BeamSet> = beams.iter().filter_map(|(_, set)| set.as_ref()).collect();
    let results: Vec<Result<PruneStats, String>> = sets
        .par_iter()
        .map(|set| {
            let fail = |e: &dyn std::fmt::Display| format!("{}: {e}", set.input_id);
            let meta = build_meta_graph(&set.graphs(), &d.align()).map_err(|e| fail(&e))?;
            let tables = compute_gap(&meta, set, &d.gap()).map_err(|e| fail(&e))?;
            let report = prune_report(&meta, &tables, d.prune_threshold);
            Ok(PruneStats {
                id: set.input_id.clone(),
                variables: meta.len(),
                max_marginals: meta.variables().iter().map(|v| tables.max_marginal(v.id)).collect(),
                pruned: report.removed,
            })
        })
        .collect();
    let (rows, failed) = split(results, &mut issues);
    issues.check(s.strict)?;
    write_to(s.output.as_deref(), &jsonl(&rows))?;
    let total: usize = rows.iter().map(|r| r.variables).sum();
    let pruned: usize = rows.iter().map(|r| r.pruned.len()).sum();
    summary(
        s.output.as_deref(),
        format!("sentences={} variables={total} pruned={pruned} threshold={}", rows.len(), d.prune_threshold),
    );
    finish(failed)
}

#[derive(Serialize)]
struct ClusterStats {
    id: String,
    beams: usize,
    components: Vec<MixtureComponent>,
}

pub fn cluster_stats(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.cluster_stats;
    let mut issues = Issues::default();
    let beams = load_beams(required(&s.beams, "cluster_stats.beams")?, &mut issues)?;
    let cut = cfg.decision.mixture_cut;
    let sets: Vec<&BeamSet> = beams.iter().filter_map(|(_, set)| set.as_ref()).collect();
    let rows: Vec<ClusterStats> = sets
        .par_iter()
        .map(|set| ClusterStats {
            id: set.input_id.clone(),
            beams: set.len(),
            components: cluster_beams(set, cut).components,
        })
        .collect();
    issues.check(s.strict)?;
    write_to(s.output.as_deref(), &jsonl(&rows))?;
    let components: usize = rows.iter().map(|r| r.components.len()).sum();
    summary(
        s.output.as_deref(),
        format!(
            "sentences={} mean_components={:.4} cut={cut}",
            rows.len(),
            if rows.is_empty() { 0.0 } else { components as f64 / rows.len() as f64 }
        ),
    );
    Ok(())
}

fn split<T>(results: Vec<Result<T, String>>, issues: &mut Issues) -> (Vec<T>, usize) {
    let mut rows = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(row) => rows.push(row),
            Err(msg) => {
                issues.warn(msg);
                failed += 1;
            }
        }
    }
    (rows, failed)
}

fn finish(failed: usize) -> Result<(), CliError> {
    if failed > 0 {
        return Err(CliError::Unrecoverable { count: failed });
    }
    Ok(())
}
