//! Run directories: each stage reads its prerequisites from the directory,
//! writes its artifacts atomically and refreshes `manifest.json`, which
//! records a SHA-256 for every other file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::{load_bundle_with, Dataset, DatasetManifest, MANIFEST_FILE};
use crate::kgraph::{build_graph, GraphOptions, KnowledgeGraph, LayerMode};
use crate::probes::{read_probe_store, train_all_probes, write_probe_store, ProbeSettings, PROBE_STORE_FILE};
use crate::stats::{
    alignment_report, class_priors, dataset_concept_prob, default_tau_grid, dynamics_payload, model_concept_prob,
    rank_dataset_biased_concepts, rank_model_concepts, recall_at_k, threshold_sweep, AlignmentReport, BiasMatrix,
    ConceptRanking, RankingMode, SweepReport,
};

pub const ARTIFACT_MANIFEST: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "run.log";
pub const BIAS_DATASET_FILE: &str = "bias_dataset.json";
pub const ALIGNMENT_FILE: &str = "alignment.json";
pub const SWEEP_JSON_FILE: &str = "sweep.json";
pub const SWEEP_TEXT_FILE: &str = "sweep.txt";
pub const RANKINGS_FILE: &str = "rankings.json";
pub const RECALL_FILE: &str = "recall.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const DYNAMICS_FILE: &str = "dynamics.json";

const STAGES: [&str; 6] = ["probes", "analyze", "sweep", "rank", "recall", "graph"];

/// Parameters of a run. Paths are not part of the config snapshot, so runs
/// of the same bundle into different directories hash identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(skip)]
    pub bundle: PathBuf,
    #[serde(skip)]
    pub out: PathBuf,
    pub tau: f64,
    pub tau_grid: Vec<f64>,
    pub tau_min: f64,
    pub probe: ProbeSettings,
    pub top_k: usize,
    /// Length of candidate rankings compared against the top-k reference.
    pub candidate_k: usize,
    pub mode: RankingMode,
    pub include_gray: bool,
    /// `aggregate` or a layer id / `layer:<id>`.
    pub graph_layer: String,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            bundle: PathBuf::new(),
            out: PathBuf::new(),
            tau: 0.5,
            tau_grid: default_tau_grid(),
            tau_min: 0.1,
            probe: ProbeSettings::default(),
            top_k: 5,
            candidate_k: 10,
            mode: RankingMode::ModelF1,
            include_gray: false,
            graph_layer: "aggregate".into(),
            execution: Execution::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.tau_min) {
            return Err(Error::InvalidArgument("tau and tau_min must lie in [0, 1]".into()));
        }
        if self.top_k == 0 || self.candidate_k == 0 {
            return Err(Error::InvalidArgument("top_k and candidate_k must be positive".into()));
        }
        if self.mode == RankingMode::DatasetEntropy {
            return Err(Error::InvalidArgument("--mode must be model_f1 or model_js".into()));
        }
        self.probe.validate()
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    std::io::Write::write_all(&mut tmp, bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// File name of a layer's model bias matrix.
pub fn model_bias_file(layer_id: &str) -> String {
    let safe: String = layer_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("bias_model_{safe}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub files: Vec<ArtifactEntry>,
}

/// Hashes every regular file in `dir` except the manifest itself.
pub fn refresh_manifest(dir: &Path) -> Result<ArtifactManifest> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name == ARTIFACT_MANIFEST || name.starts_with('.') || !entry.path().is_file() {
            continue;
        }
        let bytes = fs::read(entry.path()).map_err(|e| Error::io(entry.path(), e))?;
        files.push(ArtifactEntry {
            name,
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
    }
    files.sort_by(|a, b| a.name.cmp(&b.name));
    let manifest = ArtifactManifest { files };
    write_json(&dir.join(ARTIFACT_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Replaces the stage's line in `run.log`, keeping stage order.
fn log_stage(dir: &Path, stage: &str, message: &str) -> Result<()> {
    let path = dir.join(LOG_FILE);
    let mut lines: BTreeMap<usize, String> = BTreeMap::new();
    if let Ok(text) = fs::read_to_string(&path) {
        for line in text.lines() {
            if let Some((s, _)) = line.split_once(": ") {
                if let Some(pos) = STAGES.iter().position(|x| *x == s) {
                    lines.insert(pos, line.to_string());
                }
            }
        }
    }
    let pos = STAGES.iter().position(|x| *x == stage).expect("known stage");
    lines.insert(pos, format!("{stage}: {message}"));
    let mut text = lines.into_values().collect::<Vec<_>>().join("\n");
    text.push('\n');
    write_atomic(&path, text.as_bytes())
}

fn finish_stage(cfg: &RunConfig, stage: &str, message: &str) -> Result<()> {
    write_json(&cfg.out.join(CONFIG_FILE), cfg)?;
    log_stage(&cfg.out, stage, message)?;
    refresh_manifest(&cfg.out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer_id: String,
    pub index: usize,
    pub unit_count: usize,
    pub pooled_from: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset_name: String,
    pub image_count: usize,
    pub classes: Vec<String>,
    pub class_counts: Vec<usize>,
    pub concepts: Vec<String>,
    /// Fraction of images annotated with each concept.
    pub concept_prevalence: Vec<f64>,
    pub layers: Vec<LayerSummary>,
}

pub fn validate_bundle(bundle: &Path, exec: Execution) -> Result<ValidationReport> {
    let ds = load_bundle_with(bundle, exec)?;
    let m = &ds.manifest;
    Ok(ValidationReport {
        dataset_name: m.dataset_name.clone(),
        image_count: m.image_count,
        classes: m.classes.clone(),
        class_counts: ds.class_counts(),
        concepts: m.concept_names().into_iter().map(String::from).collect(),
        concept_prevalence: (0..m.concept_count())
            .map(|k| ds.concept_labels(k).iter().filter(|&&b| b).count() as f64 / m.image_count as f64)
            .collect(),
        layers: m
            .layers
            .iter()
            .map(|l| LayerSummary {
                layer_id: l.layer_id.clone(),
                index: l.index,
                unit_count: l.unit_count,
                pooled_from: l.height.zip(l.width).filter(|_| l.spatial).map(|(h, w)| [h, w]),
            })
            .collect(),
    })
}

fn load(cfg: &RunConfig) -> Result<Dataset> {
    load_bundle_with(&cfg.bundle, cfg.execution)
}

fn bundle_manifest(cfg: &RunConfig) -> Result<DatasetManifest> {
    DatasetManifest::read(&cfg.bundle.join(MANIFEST_FILE))
}

pub fn stage_probes(cfg: &RunConfig) -> Result<usize> {
    cfg.validate()?;
    let ds = load(cfg)?;
    let probes = train_all_probes(&ds, &[], &cfg.probe, cfg.execution)?;
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    write_probe_store(&cfg.out.join(PROBE_STORE_FILE), &probes)?;
    let degenerate = probes.iter().filter(|p| p.degenerate).count();
    let unconverged = probes.iter().filter(|p| !p.converged).count();
    finish_stage(
        cfg,
        "probes",
        &format!(
            "{} probes over {} layers x {} concepts ({degenerate} degenerate, {unconverged} not converged)",
            probes.len(),
            ds.manifest.layer_count(),
            ds.manifest.concept_count()
        ),
    )?;
    Ok(probes.len())
}

pub fn stage_analyze(cfg: &RunConfig) -> Result<Vec<AlignmentReport>> {
    cfg.validate()?;
    let store = cfg.out.join(PROBE_STORE_FILE);
    if !store.is_file() {
        return Err(Error::MissingPrerequisite {
            stage: "analyze",
            what: "missing probe store (run `probes` first)".into(),
        });
    }
    let ds = load(cfg)?;
    let probes = read_probe_store(&store)?;
    let dataset = dataset_concept_prob(&ds)?;
    let layer_ids: Vec<String> = ds.manifest.layer_ids().into_iter().map(String::from).collect();
    let models = cfg
        .execution
        .try_map_slice(&layer_ids, |id| model_concept_prob(&ds, id, &probes))?;
    write_json(&cfg.out.join(BIAS_DATASET_FILE), &dataset)?;
    for m in &models {
        let id = m.layer_id.as_deref().unwrap_or_default();
        write_json(&cfg.out.join(model_bias_file(id)), m)?;
    }
    let reports = models
        .iter()
        .map(|m| alignment_report(&dataset, m, cfg.tau))
        .collect::<Result<Vec<_>>>()?;
    write_json(&cfg.out.join(ALIGNMENT_FILE), &reports)?;
    let summary = reports
        .iter()
        .map(|r| format!("{} f1={:.3} js={:.3}", r.layer_id, r.weighted_f1, r.js_divergence))
        .collect::<Vec<_>>()
        .join(", ");
    finish_stage(cfg, "analyze", &summary)?;
    Ok(reports)
}

/// Reads `bias_dataset.json` and every layer's model matrix.
pub fn read_bias_matrices(cfg: &RunConfig, stage: &'static str) -> Result<(BiasMatrix, Vec<BiasMatrix>)> {
    let manifest = bundle_manifest(cfg)?;
    let dataset_path = cfg.out.join(BIAS_DATASET_FILE);
    let layer_paths: Vec<PathBuf> = manifest
        .layers
        .iter()
        .map(|l| cfg.out.join(model_bias_file(&l.layer_id)))
        .collect();
    if !dataset_path.is_file() || layer_paths.iter().any(|p| !p.is_file()) {
        return Err(Error::MissingPrerequisite {
            stage,
            what: "missing bias matrices (run `analyze` first)".into(),
        });
    }
    let dataset: BiasMatrix = read_json(&dataset_path)?;
    let models = layer_paths
        .iter()
        .map(|p| {
            let m: BiasMatrix = read_json(p)?;
            m.validate()?;
            dataset.same_axes(&m)?;
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    dataset.validate()?;
    Ok((dataset, models))
}

pub fn stage_sweep(cfg: &RunConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let (dataset, models) = read_bias_matrices(cfg, "sweep")?;
    let report = threshold_sweep(&dataset, &models, &cfg.tau_grid, cfg.tau_min)?;
    let name = bundle_manifest(cfg)?.dataset_name;
    write_json(&cfg.out.join(SWEEP_JSON_FILE), &report)?;
    write_atomic(&cfg.out.join(SWEEP_TEXT_FILE), report.to_text_table(&name).as_bytes())?;
    finish_stage(cfg, "sweep", &format!("avg best detection {:.3}", report.average))?;
    Ok(report)
}

/// Contents of `rankings.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingsArtifact {
    pub tau: f64,
    pub dataset: ConceptRanking,
    pub model_f1: ConceptRanking,
    pub model_js: ConceptRanking,
}

pub fn stage_rank(cfg: &RunConfig) -> Result<RankingsArtifact> {
    cfg.validate()?;
    let (dataset, models) = read_bias_matrices(cfg, "rank")?;
    let ds = load(cfg)?;
    let k = dataset.concept_count();
    let priors = class_priors(&ds.labels, ds.manifest.class_count());
    let artifact = RankingsArtifact {
        tau: cfg.tau,
        dataset: rank_dataset_biased_concepts(&dataset, &priors, k)?,
        model_f1: rank_model_concepts(&dataset, &models, RankingMode::ModelF1, cfg.tau, k)?,
        model_js: rank_model_concepts(&dataset, &models, RankingMode::ModelJs, cfg.tau, k)?,
    };
    write_json(&cfg.out.join(RANKINGS_FILE), &artifact)?;
    let top: Vec<&str> = artifact
        .dataset
        .entries
        .iter()
        .take(cfg.top_k)
        .map(|e| e.concept.as_str())
        .collect();
    finish_stage(cfg, "rank", &format!("dataset top-{}: {}", cfg.top_k, top.join(", ")))?;
    Ok(artifact)
}

/// One externally produced concept ranking (e.g. from TCAV or an SAE).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalRanking {
    pub method: String,
    #[serde(default)]
    pub layer: Option<String>,
    pub ranking: Vec<ExternalScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalScore {
    pub concept: String,
    pub score: f64,
}

/// Parses an external ranking file, resolving concept names.
pub fn read_external_rankings(path: &Path, concepts: &[String]) -> Result<Vec<(ExternalRanking, Vec<usize>)>> {
    let rankings: Vec<ExternalRanking> = read_json(path)?;
    rankings
        .into_iter()
        .map(|r| {
            let mut scored = Vec::with_capacity(r.ranking.len());
            for (pos, s) in r.ranking.iter().enumerate() {
                let idx = concepts
                    .iter()
                    .position(|c| *c == s.concept)
                    .ok_or_else(|| Error::Schema {
                        path: path.to_path_buf(),
                        reason: format!("method {}: unknown concept {:?}", r.method, s.concept),
                    })?;
                if !s.score.is_finite() {
                    return Err(Error::Schema {
                        path: path.to_path_buf(),
                        reason: format!("method {}: non-finite score for {:?}", r.method, s.concept),
                    });
                }
                scored.push((s.score, pos, idx));
            }
            // highest score first; equal scores keep file order
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let order = scored.into_iter().map(|(_, _, idx)| idx).collect();
            Ok((r, order))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallResult {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    pub candidates: Vec<String>,
    pub recall: f64,
}

/// Contents of `recall.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallArtifact {
    pub top_k: usize,
    pub candidate_k: usize,
    pub reference: Vec<String>,
    /// Method named by `--mode`.
    pub headline: String,
    pub results: Vec<RecallResult>,
}

pub fn stage_recall(cfg: &RunConfig, external: Option<&Path>) -> Result<RecallArtifact> {
    cfg.validate()?;
    let path = cfg.out.join(RANKINGS_FILE);
    if !path.is_file() {
        return Err(Error::MissingPrerequisite {
            stage: "recall",
            what: "missing rankings (run `rank` first)".into(),
        });
    }
    let rankings: RankingsArtifact = read_json(&path)?;
    let concepts: Vec<String> = bundle_manifest(cfg)?
        .concept_names()
        .into_iter()
        .map(String::from)
        .collect();
    let reference = rankings.dataset.top(cfg.top_k);
    let names = |idx: &[usize]| idx.iter().map(|&i| concepts[i].clone()).collect::<Vec<_>>();
    let mut results = Vec::new();
    for (method, ranking) in [("model_f1", &rankings.model_f1), ("model_js", &rankings.model_js)] {
        let cand = ranking.top(cfg.candidate_k);
        results.push(RecallResult {
            method: method.into(),
            layer: None,
            recall: recall_at_k(&reference, &cand)?,
            candidates: names(&cand),
        });
    }
    if let Some(ext) = external {
        for (r, order) in read_external_rankings(ext, &concepts)? {
            let cand: Vec<usize> = order.into_iter().take(cfg.candidate_k).collect();
            results.push(RecallResult {
                method: r.method,
                layer: r.layer,
                recall: recall_at_k(&reference, &cand)?,
                candidates: names(&cand),
            });
        }
    }
    let headline = match cfg.mode {
        RankingMode::ModelJs => "model_js",
        _ => "model_f1",
    };
    let artifact = RecallArtifact {
        top_k: cfg.top_k,
        candidate_k: cfg.candidate_k,
        reference: names(&reference),
        headline: headline.into(),
        results,
    };
    write_json(&cfg.out.join(RECALL_FILE), &artifact)?;
    let summary = artifact
        .results
        .iter()
        .map(|r| match &r.layer {
            Some(l) => format!("{}@{l}={:.2}", r.method, r.recall),
            None => format!("{}={:.2}", r.method, r.recall),
        })
        .collect::<Vec<_>>()
        .join(", ");
    finish_stage(cfg, "recall", &summary)?;
    Ok(artifact)
}

pub fn stage_graph(cfg: &RunConfig) -> Result<KnowledgeGraph> {
    cfg.validate()?;
    let (dataset, models) = read_bias_matrices(cfg, "graph")?;
    let manifest = bundle_manifest(cfg)?;
    let categories: Vec<String> = manifest.concepts.iter().map(|c| c.category.clone()).collect();
    let layers: Vec<String> = manifest.layer_ids().into_iter().map(String::from).collect();
    let opts = GraphOptions {
        tau: cfg.tau,
        layer_mode: LayerMode::parse(&cfg.graph_layer, &layers)?,
        include_gray: cfg.include_gray,
    };
    let graph = build_graph(&dataset, &models, &categories, &opts)?;
    write_atomic(&cfg.out.join(GRAPH_FILE), format!("{}\n", graph.to_json()?).as_bytes())?;
    write_json(&cfg.out.join(DYNAMICS_FILE), &dynamics_payload(&dataset, &models)?)?;
    finish_stage(
        cfg,
        "graph",
        &format!(
            "{} nodes, {} edges at tau {}",
            graph.nodes.len(),
            graph.edges.len(),
            graph.tau
        ),
    )?;
    Ok(graph)
}

/// Every stage in order.
pub fn run_all(cfg: &RunConfig, external: Option<&Path>) -> Result<ArtifactManifest> {
    stage_probes(cfg)?;
    stage_analyze(cfg)?;
    stage_sweep(cfg)?;
    stage_rank(cfg)?;
    stage_recall(cfg, external)?;
    stage_graph(cfg)?;
    refresh_manifest(&cfg.out)
}
