//! Acceptance suite (runs without the libtest harness, so its report is
//! always printed). One PASS/FAIL line per criterion; exits non-zero if any
//! criterion other than the documented unattainable one fails.
//!
//! Every expected value is recomputed here by an independent oracle; the
//! library is only called to produce the value under test.

#![allow(clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use biasgraph::fixture::{CONCEPTS, LAYERS};
use biasgraph::ingest::stratified_folds;
use biasgraph::ingest::FoldAssignment;
use biasgraph::kgraph::{build_graph, classify_edge, GraphOptions, LayerMode};
use biasgraph::pipeline::{ArtifactManifest, RecallArtifact, ARTIFACT_MANIFEST, RECALL_FILE};
use biasgraph::probes::{
    class_balanced_weights, fit_logreg, train_probe, FitOptions, LogisticObjective, ProbeSettings, ProbeSpec,
};
use biasgraph::stats::{
    binarize, detection_score, js_divergence, threshold_sweep, weighted_f1, BiasMatrix, BiasSource, SweepReport,
};
use biasgraph::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_biasgraph");

const RECOVERY_TOL: f64 = 0.05;
const RUNTIME_LIMIT_S: f64 = 60.0;
const F1_TOL: f64 = 1e-12;
const JS_SYM_TOL: f64 = 1e-12;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-6;
const EDGE_EPS: f64 = 1e-9;

/// Criteria that cannot hold under the scoring definition they refer to.
const UNATTAINABLE: &[&str] = &["sweep.monotone"];

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, detail: impl Into<String>) {
        let detail = detail.into();
        println!("{} {id}: {detail}", if ok { "PASS" } else { "FAIL" });
        self.lines.push((id.to_string(), ok, detail));
    }
}

// ---------------------------------------------------------------- helpers

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn cli(args: &[&str]) {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("BAGEL_THREADS")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> T {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn bias(source: BiasSource, layer: Option<&str>, values: Matrix<f64>) -> BiasMatrix {
    BiasMatrix::new(
        source,
        layer.map(String::from),
        (0..values.rows()).map(|i| format!("y{i}")).collect(),
        (0..values.cols()).map(|k| format!("c{k}")).collect(),
        values,
    )
    .unwrap()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

// ---------------------------------------------------------------- oracles

/// Per-class counts from an explicit confusion matrix.
fn f1_oracle(truth: &[u8], pred: &[u8]) -> f64 {
    let mut cm = [[0u64; 2]; 2];
    for (&t, &p) in truth.iter().zip(pred) {
        cm[t as usize][p as usize] += 1;
    }
    let n = truth.len() as f64;
    let mut out = 0.0;
    for v in 0..2 {
        let tp = cm[v][v] as f64;
        let fp = cm[1 - v][v] as f64;
        let fn_ = cm[v][1 - v] as f64;
        let prec = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let rec = if tp + fn_ == 0.0 { 0.0 } else { tp / (tp + fn_) };
        let f1 = if prec + rec == 0.0 {
            0.0
        } else {
            2.0 * prec * rec / (prec + rec)
        };
        out += (tp + fn_) / n * f1;
    }
    out
}

struct Problem {
    x: Matrix<f64>,
    y: Vec<bool>,
    s: Vec<f64>,
    c: f64,
}

impl Problem {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(30..120);
        let d = rng.random_range(2..8);
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-1.5..1.5));
        let mut y: Vec<bool> = (0..n)
            .map(|r| {
                let z: f64 = x.row(r).iter().zip(&truth).map(|(a, b)| a * b).sum::<f64>() + 0.3;
                rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
            })
            .collect();
        y[0] = true;
        y[1] = false;
        let pos = y.iter().filter(|&&v| v).count() as f64;
        let s = y
            .iter()
            .map(|&v| n as f64 / (2.0 * if v { pos } else { n as f64 - pos }))
            .collect();
        let c = [0.01, 0.1, 1.0, 10.0][rng.random_range(0..4)];
        Problem { x, y, s, c }
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let d = self.x.cols();
        let mut f = 0.0;
        for r in 0..self.x.rows() {
            let z: f64 = self.x.row(r).iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + p[d];
            // log(1 + e^z) - y z, written without softplus helpers
            let lse = z.max(0.0) + (-(z.abs())).exp().ln_1p();
            f += self.s[r] * (lse - if self.y[r] { z } else { 0.0 });
        }
        f + p[..d].iter().map(|w| w * w).sum::<f64>() / (2.0 * self.c)
    }

    fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let d = self.x.cols();
        let mut g = vec![0.0; d + 1];
        for r in 0..self.x.rows() {
            let z: f64 = self.x.row(r).iter().zip(p).map(|(a, b)| a * b).sum::<f64>() + p[d];
            let e = self.s[r] * (1.0 / (1.0 + (-z).exp()) - if self.y[r] { 1.0 } else { 0.0 });
            for j in 0..d {
                g[j] += e * self.x.get(r, j);
            }
            g[d] += e;
        }
        for j in 0..d {
            g[j] += p[j] / self.c;
        }
        g
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Nesterov-accelerated gradient descent with a fixed 1/L step.
fn reference_solve(p: &Problem) -> Vec<f64> {
    let d = p.x.cols();
    let lip = (0..p.x.rows())
        .map(|r| p.s[r] * (1.0 + p.x.row(r).iter().map(|v| v * v).sum::<f64>()) / 4.0)
        .sum::<f64>()
        + 1.0 / p.c;
    let step = 1.0 / lip;
    let mut w = vec![0.0; d + 1];
    let mut prev = w.clone();
    for k in 0..500_000 {
        let beta = k as f64 / (k as f64 + 3.0);
        let v: Vec<f64> = w.iter().zip(&prev).map(|(a, b)| a + beta * (a - b)).collect();
        let g = p.gradient(&v);
        prev = w;
        w = v.iter().zip(&g).map(|(a, b)| a - step * b).collect();
        if k % 100 == 0 && inf_norm(&p.gradient(&w)) < 1e-10 {
            break;
        }
    }
    w
}

/// Mean precision at the rank of each positive; ties broken by index.
fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut hits = 0.0;
    let mut total = 0.0;
    for (rank, &i) in idx.iter().enumerate() {
        if labels[i] {
            hits += 1.0;
            total += hits / (rank + 1) as f64;
        }
    }
    total / hits
}

fn standardize(x: &Matrix<f32>, fit_rows: &[usize], rows: &[usize]) -> Matrix<f64> {
    let d = x.cols();
    let n = fit_rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|j| fit_rows.iter().map(|&r| x.get(r, j) as f64).sum::<f64>() / n)
        .collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = fit_rows
                .iter()
                .map(|&r| (x.get(r, j) as f64 - mean[j]).powi(2))
                .sum::<f64>()
                / n;
            if v > 0.0 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    Matrix::from_fn(rows.len(), d, |i, j| (x.get(rows[i], j) as f64 - mean[j]) / sd[j])
}

/// Exhaustive cross-validation over the grid with the reference solver.
fn brute_force_c(x: &Matrix<f32>, y: &[bool], settings: &ProbeSettings) -> f64 {
    let FoldAssignment::Assigned(folds) = stratified_folds(y, settings.folds, settings.seed).unwrap() else {
        return settings.default_c;
    };
    let mut best = (f64::NAN, f64::NEG_INFINITY);
    for &c in &settings.c_grid {
        let mut total = 0.0;
        for f in 0..settings.folds {
            let train: Vec<usize> = (0..y.len()).filter(|&r| folds[r] != f).collect();
            let test: Vec<usize> = (0..y.len()).filter(|&r| folds[r] == f).collect();
            let ytr: Vec<bool> = train.iter().map(|&r| y[r]).collect();
            let pos = ytr.iter().filter(|&&v| v).count() as f64;
            let n = ytr.len() as f64;
            let p = Problem {
                x: standardize(x, &train, &train),
                s: ytr.iter().map(|&v| n / (2.0 * if v { pos } else { n - pos })).collect(),
                y: ytr,
                c,
            };
            let w = reference_solve(&p);
            let xt = standardize(x, &train, &test);
            let d = xt.cols();
            let scores: Vec<f64> = (0..test.len())
                .map(|i| {
                    let z: f64 = xt.row(i).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + w[d];
                    1.0 / (1.0 + (-z).exp())
                })
                .collect();
            let yt: Vec<bool> = test.iter().map(|&r| y[r]).collect();
            total += ap_oracle(&scores, &yt);
        }
        let mean = total / settings.folds as f64;
        if mean > best.1 {
            best = (c, mean);
        }
    }
    best.0
}

/// Color from the written rule table; blue means no layer clears τ.
fn color_oracle(d: f64, m: &[f64], tau: f64) -> &'static str {
    let data = d >= tau;
    let any = m.iter().any(|&v| v >= tau);
    match (data, any) {
        (true, true) => "green",
        (true, false) => "blue",
        (false, true) => "red",
        (false, false) => "gray",
    }
}

fn detection_oracle(d: &Matrix<f64>, m: &Matrix<f64>, tau: f64) -> f64 {
    let mut per_concept = Vec::new();
    for k in 0..d.cols() {
        let present: Vec<usize> = (0..d.rows()).filter(|&i| d.get(i, k) >= tau).collect();
        if !present.is_empty() {
            let hit = present.iter().filter(|&&i| m.get(i, k) >= tau).count();
            per_concept.push(hit as f64 / present.len() as f64);
        }
    }
    if per_concept.is_empty() {
        0.0
    } else {
        per_concept.iter().sum::<f64>() / per_concept.len() as f64
    }
}

// ---------------------------------------------------------------- criteria

fn planted_and_determinism(report: &mut Report) {
    let dir = tempfile::TempDir::new().unwrap();
    let bundle = dir.path().join("bundle");
    let run_a = dir.path().join("run_a");
    let run_b = dir.path().join("run_b");
    cli(&["fixture", "--seed", "1", "--out", s(&bundle)]);
    let start = Instant::now();
    cli(&["all", "--seed", "0", "--bundle", s(&bundle), "--out", s(&run_a)]);
    let elapsed = start.elapsed().as_secs_f64();

    let dataset: BiasMatrix = read_json(&run_a.join("bias_dataset.json"));
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    let first_layer = [0usize, 0, 1, 1, 2];
    for (k, &first) in first_layer.iter().enumerate() {
        for layer in &LAYERS[first..] {
            let m: BiasMatrix = read_json(&run_a.join(format!("bias_model_{layer}.json")));
            for i in 0..dataset.values.rows() {
                worst = worst.max((m.values.get(i, k) - dataset.values.get(i, k)).abs());
            }
            pairs += 1;
        }
    }
    // prescribed rates, from the fixture's own table
    let rate_err = (0..CONCEPTS.len())
        .map(|k| {
            let (_, _, r0, r1) = CONCEPTS[k];
            (dataset.values.get(0, k) - r0)
                .abs()
                .max((dataset.values.get(1, k) - r1).abs())
        })
        .fold(0.0, f64::max);
    report.check(
        "planted.dataset_rates",
        rate_err < 1e-12,
        format!("max |p_dataset - prescribed| = {rate_err:.1e}"),
    );
    report.check(
        "planted.recovery",
        worst <= RECOVERY_TOL && pairs == 11,
        format!("max |p_model - p_dataset| over {pairs} encoded pairs = {worst:.4} (tol {RECOVERY_TOL})"),
    );

    let recall: RecallArtifact = read_json(&run_a.join(RECALL_FILE));
    let planted: BTreeSet<&str> = CONCEPTS[..5].iter().map(|c| c.0).collect();
    let reference: BTreeSet<&str> = recall.reference.iter().map(String::as_str).collect();
    let f1 = recall.results.iter().find(|r| r.method == "model_f1").unwrap();
    report.check(
        "planted.recall",
        reference == planted && f1.recall == 1.0 && recall.candidate_k == 10,
        format!(
            "dataset top-5 = planted set: {}; recall(top-5, model_f1 top-10) = {}",
            reference == planted,
            f1.recall
        ),
    );
    let strict: BTreeSet<&str> = f1.candidates[..5].iter().map(String::as_str).collect();
    report.check(
        "planted.recall_top5",
        strict == planted,
        format!("model_f1 top-5 candidates {:?}", f1.candidates[..5].to_vec()),
    );
    report.check(
        "planted.runtime",
        elapsed < RUNTIME_LIMIT_S,
        format!("full pipeline {elapsed:.1} s (limit {RUNTIME_LIMIT_S} s)"),
    );

    let ext = dir.path().join("tcav.json");
    let entries: Vec<String> = CONCEPTS
        .iter()
        .enumerate()
        .map(|(k, c)| {
            format!(
                r#"{{"concept":"{}","score":{}}}"#,
                c.0,
                if k < 5 { 1.0 - k as f64 * 0.1 } else { 0.1 }
            )
        })
        .collect();
    fs::write(
        &ext,
        format!(
            r#"[{{"method":"tcav","layer":"layer3","ranking":[{}]}}]"#,
            entries.join(",")
        ),
    )
    .unwrap();
    cli(&[
        "recall",
        "--rankings",
        s(&ext),
        "--candidate-k",
        "5",
        "--bundle",
        s(&bundle),
        "--out",
        s(&run_a),
    ]);
    let recall: RecallArtifact = read_json(&run_a.join(RECALL_FILE));
    let tcav = recall.results.iter().find(|r| r.method == "tcav").map(|r| r.recall);
    report.check(
        "planted.external_recall",
        tcav == Some(1.0),
        format!("external ranking recall = {tcav:?}"),
    );
    cli(&["recall", "--bundle", s(&bundle), "--out", s(&run_a)]);

    cli(&["all", "--seed", "0", "--bundle", s(&bundle), "--out", s(&run_b)]);
    let a: ArtifactManifest = read_json(&run_a.join(ARTIFACT_MANIFEST));
    let b: ArtifactManifest = read_json(&run_b.join(ARTIFACT_MANIFEST));
    let same_bytes =
        fs::read(run_a.join(ARTIFACT_MANIFEST)).unwrap() == fs::read(run_b.join(ARTIFACT_MANIFEST)).unwrap();
    report.check(
        "determinism.manifest",
        same_bytes && a == b && a.files.len() == 14,
        format!("{} hashed files, manifests byte-identical: {same_bytes}", a.files.len()),
    );
}

fn metric_oracles(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let (rows, cols) = (rng.random_range(1..8), rng.random_range(1..12));
        let t = binarize(&random_matrix(&mut rng, rows, cols), rng.random());
        let p = binarize(&random_matrix(&mut rng, rows, cols), rng.random());
        let v = weighted_f1(t.as_slice(), p.as_slice()).unwrap();
        worst = worst.max((v - f1_oracle(t.as_slice(), p.as_slice())).abs());
    }
    report.check(
        "metrics.f1_oracle",
        worst <= F1_TOL,
        format!("max |f1 - oracle| over 1000 pairs = {worst:.1e}"),
    );

    let mut sym: f64 = 0.0;
    let mut self_max: f64 = 0.0;
    let mut in_range = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let p: Vec<f64> = (0..n)
            .map(|_| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random() })
            .collect();
        let q: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if p.iter().sum::<f64>() == 0.0 {
            continue;
        }
        let a = js_divergence(&p, &q).unwrap();
        let b = js_divergence(&q, &p).unwrap();
        sym = sym.max((a - b).abs());
        self_max = self_max.max(js_divergence(&p, &p).unwrap());
        in_range &= (0.0..=1.0).contains(&a);
    }
    let disjoint = js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
    let disjoint_wide = js_divergence(&[0.3, 0.7, 0.0, 0.0], &[0.0, 0.0, 0.5, 0.2]).unwrap();
    report.check(
        "metrics.js_symmetry",
        sym <= JS_SYM_TOL,
        format!("max |js(p,q) - js(q,p)| = {sym:.1e}"),
    );
    report.check(
        "metrics.js_self",
        self_max == 0.0,
        format!("max js(p,p) = {self_max:e}"),
    );
    report.check("metrics.js_range", in_range, "all values in [0, 1]");
    report.check(
        "metrics.js_disjoint",
        disjoint == 1.0 && disjoint_wide == 1.0,
        format!("disjoint supports -> {disjoint}, {disjoint_wide}"),
    );
}

fn solver(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut fd_worst: f64 = 0.0;
    let mut grad_worst: f64 = 0.0;
    let mut all_converged = true;
    let mut monotone = true;
    let mut trace_err: f64 = 0.0;
    for _ in 0..20 {
        let p = Problem::random(&mut rng);
        let cw = class_balanced_weights(&p.y).unwrap();
        let obj = LogisticObjective::new(&p.x, &p.y, p.c, cw).unwrap();
        let at: Vec<f64> = (0..=p.x.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = obj.gradient(&at);
        let fd: Vec<f64> = (0..at.len())
            .map(|j| {
                let mut hi = at.clone();
                let mut lo = at.clone();
                hi[j] += FD_STEP;
                lo[j] -= FD_STEP;
                (p.objective(&hi) - p.objective(&lo)) / (2.0 * FD_STEP)
            })
            .collect();
        let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        fd_worst = fd_worst.max(inf_norm(&diff) / inf_norm(&fd).max(1.0));

        let fit = fit_logreg(&p.x, &p.y, p.c, cw, &FitOptions::default()).unwrap();
        let mut params = fit.weights.clone();
        params.push(fit.bias);
        all_converged &= fit.converged;
        grad_worst = grad_worst.max(inf_norm(&p.gradient(&params)));
        monotone &= fit.objective_trace.windows(2).all(|w| w[1] <= w[0]);
        let last = *fit.objective_trace.last().unwrap();
        trace_err = trace_err.max((last - p.objective(&params)).abs() / p.objective(&params).abs().max(1.0));
    }
    report.check(
        "solver.gradient_fd",
        fd_worst < FD_REL_TOL,
        format!("max relative |grad - central FD| over 20 problems = {fd_worst:.1e} (tol {FD_REL_TOL:.0e})"),
    );
    report.check(
        "solver.converged_gradient",
        all_converged && grad_worst <= GRAD_TOL,
        format!("max oracle gradient inf-norm at solution = {grad_worst:.1e}; all converged: {all_converged}"),
    );
    report.check(
        "solver.monotone_objective",
        monotone && trace_err < 1e-9,
        format!("objective non-increasing: {monotone}; final trace vs oracle objective rel err {trace_err:.1e}"),
    );

    let mut matches = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let n = 100;
        let d = 4;
        let truth: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
        let x = Matrix::from_fn(n, d, |_, _| rng.random_range(-2.0f32..2.0));
        let y: Vec<bool> = (0..n)
            .map(|r| {
                let z: f64 = x.row(r).iter().zip(&truth).map(|(a, b)| *a as f64 * b).sum();
                rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
            })
            .collect();
        let settings = ProbeSettings {
            seed,
            ..ProbeSettings::default()
        };
        let spec = ProbeSpec {
            layer_id: "l".into(),
            concept_index: 0,
            concept: "c".into(),
            settings: settings.clone(),
        };
        let probe = train_probe(&x, &y, &spec).unwrap();
        let expected = brute_force_c(&x, &y, &settings);
        matches += usize::from(probe.chosen_c == expected);
        detail.push(format!("{}/{}", probe.chosen_c, expected));
    }
    report.check(
        "solver.cv_choice",
        matches == 5,
        format!("chosen C vs brute-force CV on 5 problems: {}", detail.join(", ")),
    );
}

fn edges(report: &mut Report) {
    let mut mismatches = 0;
    let mut cases = 0;
    for tau in [0.25, 0.5, 0.75] {
        let values = [0.0, tau - EDGE_EPS, tau, 1.0];
        for &d in &values {
            for a in values {
                for b in values {
                    for c in values {
                        let m = [a, b, c];
                        cases += 1;
                        let got = classify_edge(d, &m, tau, &LayerMode::Aggregate).unwrap().to_string();
                        mismatches += usize::from(got != color_oracle(d, &m, tau));
                        for l in 0..3 {
                            let got = classify_edge(d, &m, tau, &LayerMode::Single(l)).unwrap().to_string();
                            mismatches += usize::from(got != color_oracle(d, &m[l..=l], tau));
                        }
                    }
                }
            }
        }
    }
    // the same grid through graph assembly: one class row per pattern
    let tau = 0.5;
    let values = [0.0, tau - EDGE_EPS, tau, 1.0];
    let mut d = Vec::new();
    let mut layers = vec![Vec::new(); 3];
    for &dv in &values {
        for a in values {
            for b in values {
                for c in values {
                    d.push(dv);
                    layers[0].push(a);
                    layers[1].push(b);
                    layers[2].push(c);
                }
            }
        }
    }
    let k = d.len();
    let dataset = bias(BiasSource::Dataset, None, Matrix::from_vec(1, k, d.clone()).unwrap());
    let models: Vec<BiasMatrix> = layers
        .iter()
        .enumerate()
        .map(|(l, v)| {
            bias(
                BiasSource::Model,
                Some(&format!("l{l}")),
                Matrix::from_vec(1, k, v.clone()).unwrap(),
            )
        })
        .collect();
    let categories = vec!["x".to_string(); k];
    let opts = GraphOptions {
        tau,
        layer_mode: LayerMode::Aggregate,
        include_gray: false,
    };
    let g = build_graph(&dataset, &models, &categories, &opts).unwrap();
    let mut graph_mismatch = 0;
    let mut expected_edges = 0;
    for j in 0..k {
        let m = [layers[0][j], layers[1][j], layers[2][j]];
        let color = color_oracle(d[j], &m, tau);
        let edge = g.edges.iter().find(|e| e.concept == format!("c{j}"));
        match (color, edge) {
            ("gray", None) => {}
            ("gray", Some(_)) | (_, None) => graph_mismatch += 1,
            (c, Some(e)) => {
                expected_edges += 1;
                graph_mismatch += usize::from(e.color.to_string() != c);
            }
        }
    }
    report.check(
        "edges.color_table",
        mismatches == 0 && graph_mismatch == 0 && g.edges.len() == expected_edges,
        format!("{cases} enumerated cases x 4 layer modes: {mismatches} mismatches; graph assembly: {graph_mismatch} mismatches"),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0;
    for _ in 0..100 {
        let (i, k) = (rng.random_range(1..5), rng.random_range(1..8));
        let dataset = bias(BiasSource::Dataset, None, random_matrix(&mut rng, i, k));
        let models: Vec<BiasMatrix> = (0..3)
            .map(|l| bias(BiasSource::Model, Some(&format!("l{l}")), random_matrix(&mut rng, i, k)))
            .collect();
        let categories = vec!["x".to_string(); k];
        let mut taus: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
        taus.sort_by(f64::total_cmp);
        let mut prev: Option<BTreeSet<(String, String)>> = None;
        for tau in taus {
            let opts = GraphOptions {
                tau,
                layer_mode: LayerMode::Aggregate,
                include_gray: false,
            };
            let set: BTreeSet<(String, String)> = build_graph(&dataset, &models, &categories, &opts)
                .unwrap()
                .edges
                .into_iter()
                .map(|e| (e.class, e.concept))
                .collect();
            if let Some(p) = &prev {
                violations += usize::from(!set.is_subset(p));
            }
            prev = Some(set);
        }
    }
    report.check(
        "edges.tau_monotone",
        violations == 0,
        format!("100 random graphs, 6 increasing τ each: {violations} inclusion violations"),
    );
}

fn sweep(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let grids: [(Vec<f64>, f64); 2] = [
        (vec![0.6, 0.7, 0.8, 0.9], 0.6),
        ((1..=9).map(|i| i as f64 / 10.0).collect(), 0.1),
    ];
    let mut best_mismatch = 0;
    let mut score_mismatch = 0;
    let mut increasing_sets = 0;
    let mut example = None;
    let mut cell_bad = 0;
    for set in 0..50 {
        let (i, k) = (rng.random_range(2..6), rng.random_range(3..9));
        let dataset = bias(BiasSource::Dataset, None, random_matrix(&mut rng, i, k));
        let models: Vec<BiasMatrix> = (0..3)
            .map(|l| bias(BiasSource::Model, Some(&format!("l{l}")), random_matrix(&mut rng, i, k)))
            .collect();
        let (grid, tau_min) = &grids[set % 2];
        let rep: SweepReport = threshold_sweep(&dataset, &models, grid, *tau_min).unwrap();
        let mut set_increases = false;
        for (m, layer) in models.iter().zip(&rep.layers) {
            let scores: Vec<f64> = grid
                .iter()
                .map(|&t| detection_oracle(&dataset.values, &m.values, t))
                .collect();
            let mut best = 0;
            for (j, &sc) in scores.iter().enumerate() {
                if sc > scores[best] {
                    best = j;
                }
            }
            best_mismatch += usize::from(layer.best_tau != grid[best] || layer.best_score != scores[best]);
            for (p, &sc) in layer.points.iter().zip(&scores) {
                score_mismatch += usize::from(p.score != sc);
                score_mismatch += usize::from(detection_score(&dataset.values, &m.values, p.tau) != sc);
            }
            if let Some(w) = scores.windows(2).position(|w| w[1] > w[0]) {
                set_increases = true;
                example.get_or_insert(format!(
                    "set {set}: {:.3} at τ={} -> {:.3} at τ={}",
                    scores[w],
                    grid[w],
                    scores[w + 1],
                    grid[w + 1]
                ));
            }
            let cell = SweepReport::cell(layer);
            let expected = format!("{:.3} ({})", scores[best], format_tau(grid[best]));
            cell_bad += usize::from(cell != expected);
        }
        increasing_sets += usize::from(set_increases);
        let table = rep.to_text_table("model");
        let row = table.lines().nth(3).unwrap_or("");
        let cells: Vec<&str> = row.split(" | ").map(str::trim).collect();
        let avg = rep.layers.iter().map(|l| l.best_score).sum::<f64>() / rep.layers.len() as f64;
        cell_bad += usize::from(
            !table.starts_with(&format!("Threshold >= {}\n", format_tau(*tau_min)))
                || cells.len() != 5
                || cells[1..4] != rep.layers.iter().map(SweepReport::cell).collect::<Vec<_>>()[..]
                || cells[4] != format!("{avg:.3}"),
        );
    }
    report.check(
        "sweep.best_tau",
        best_mismatch == 0 && score_mismatch == 0,
        format!("50 random sets x 3 layers: {best_mismatch} best-τ mismatches, {score_mismatch} score mismatches"),
    );
    report.check(
        "sweep.monotone",
        increasing_sets == 0,
        format!(
            "detection score rises with τ in {increasing_sets}/50 sets (e.g. {}); the per-concept recall \
             shrinks its denominator as τ grows, so monotonicity does not follow from the definition",
            example.unwrap_or_default()
        ),
    );
    report.check(
        "sweep.cell_format",
        cell_bad == 0,
        format!("\"score (τ)\" cells and table rows: {cell_bad} deviations"),
    );
}

fn format_tau(t: f64) -> String {
    let s = format!("{t:.2}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

fn main() {
    let mut report = Report { lines: Vec::new() };
    metric_oracles(&mut report);
    solver(&mut report);
    edges(&mut report);
    sweep(&mut report);
    planted_and_determinism(&mut report);

    let failed: Vec<&str> = report.lines.iter().filter(|l| !l.1).map(|l| l.0.as_str()).collect();
    let passed = report.lines.len() - failed.len();
    println!("{passed}/{} criteria passed", report.lines.len());
    let unexpected: Vec<&&str> = failed.iter().filter(|id| !UNATTAINABLE.contains(id)).collect();
    if !unexpected.is_empty() {
        eprintln!("failing criteria: {unexpected:?}");
        std::process::exit(1);
    }
}
