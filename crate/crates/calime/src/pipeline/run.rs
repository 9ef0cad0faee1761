use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sha256_file, sha256_json, RunConfig};
use super::records::{
    mean_std, render_summary, Failure, FidelitySweepRow, MetricsRecord, PlausibilityRow,
    StabilitySweepRow, SummaryRow,
};
use crate::causal::{discover, CausalGraph};
use crate::data::{
    load_csv, partition, ColumnStats, Dataset, Matrix, Partition, PartitionManifest,
};
use crate::error::{Error, Result};
use crate::eval::{
    amd, aos_normalized, asm, detection_metric, lle_stability, statistical_metrics, Detection,
    GmmBank, Lle, OutlierCounts, OutlierDetectors, StatisticalMetrics,
};
use crate::explain::{
    build_neighborhood, explain_neighborhood, instance_seed, read_jsonl, write_jsonl,
    ExplainContext, Explanation, Mode, Neighborhood,
};
use crate::gencda::GeneratorModel;
use crate::models::{
    load_model, save_model, train_black_box, TrainedBlackBox, MODEL_FORMAT_VERSION,
};
use crate::rng::derive_seed;

const STREAM_PARTITION: u64 = 0;
const STREAM_BLACK_BOX: u64 = 1;
const STREAM_EXPLAIN: u64 = 2;
const STREAM_METRICS: u64 = 3;

pub const GRAPH_FILE: &str = "graph.json";
pub const GRAPH_TEXT_FILE: &str = "graph.txt";
pub const MODEL_FILE: &str = "model.json";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SWEEP_FIDELITY_FILE: &str = "sweep_fidelity.csv";
pub const SWEEP_STABILITY_FILE: &str = "sweep_stability.csv";
pub const PLAUSIBILITY_FILE: &str = "plausibility_box.csv";
pub const SUMMARY_FILE: &str = "table2.csv";
pub const SUMMARY_TEXT_FILE: &str = "table2.txt";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const FAILURES_FILE: &str = "failures.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub partition: u64,
    pub black_box: u64,
    pub explain: u64,
    pub metrics: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            partition: derive_seed(master, STREAM_PARTITION),
            black_box: derive_seed(master, STREAM_BLACK_BOX),
            explain: derive_seed(master, STREAM_EXPLAIN),
            metrics: derive_seed(master, STREAM_METRICS),
        }
    }
}

/// Loaded data, its partition and derived identifiers.
pub struct Prepared {
    pub config: RunConfig,
    pub config_hash: String,
    pub dataset_sha256: String,
    pub label_column: String,
    pub data: Dataset,
    pub partition: Partition,
    pub stats_b: ColumnStats,
    pub seeds: Seeds,
}

fn last_header_column(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path)?;
    r.headers()?
        .iter()
        .next_back()
        .map(str::to_string)
        .ok_or_else(|| Error::EmptyFile {
            path: path.to_path_buf(),
        })
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let label = match &cfg.label_column {
        Some(l) => l.clone(),
        None => last_header_column(&cfg.dataset)?,
    };
    let data = load_csv(&cfg.dataset, Some(&label))?;
    let seeds = Seeds::from_master(cfg.seed);
    let partition = partition(&data, cfg.partition, seeds.partition)?;
    let stats_b = partition.black_box.column_stats()?;
    Ok(Prepared {
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        dataset_sha256: sha256_file(&cfg.dataset)?,
        label_column: label,
        data,
        partition,
        stats_b,
        seeds,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Write through a temporary file so an interrupted run never leaves a
/// truncated cache entry.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn cache_path(p: &Prepared, stem: &str, key: &impl Serialize) -> Result<PathBuf> {
    let digest = sha256_json(&(
        &p.dataset_sha256,
        &p.label_column,
        &p.partition.manifest,
        key,
    ))?;
    Ok(p.config
        .cache_dir()
        .join(format!("{stem}-{}.json", &digest[..16])))
}

/// Discover the causal graph on the causal partition, reusing a cached
/// result for identical inputs.
pub fn discover_graph(p: &Prepared) -> Result<CausalGraph> {
    let path = cache_path(p, "graph", &p.config.discovery)?;
    if path.is_file() {
        log::info!("reusing cached graph {}", path.display());
        return CausalGraph::load(&path);
    }
    let x_c = &p.partition.causal;
    let g = discover(x_c, &p.config.discovery).map_err(|e| {
        Error::Degenerate(format!(
            "causal discovery failed on {} rows x {} features: {e}",
            x_c.n_rows(),
            x_c.n_features()
        ))
    })?;
    ensure_dir(&p.config.cache_dir())?;
    write_atomic(&path, g.to_json()?.as_bytes())?;
    Ok(g)
}

/// Train the black-box on the black-box partition, reusing a cached model.
pub fn train_model(p: &Prepared) -> Result<TrainedBlackBox> {
    let key = (
        p.config.black_box,
        &p.config.black_box_params,
        p.seeds.black_box,
        MODEL_FORMAT_VERSION,
    );
    let path = cache_path(p, "model", &key)?;
    if path.is_file() {
        log::info!("reusing cached model {}", path.display());
        return load_model(&path);
    }
    let trained = train_black_box(
        p.config.black_box,
        &p.partition.black_box,
        &p.config.black_box_params,
        p.seeds.black_box,
    )?;
    ensure_dir(&p.config.cache_dir())?;
    let tmp = path.with_extension("tmp");
    save_model(&trained, &tmp)?;
    fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(trained)
}

/// Explanation rows to process: the first `n_instances` rows of `X_t`, or
/// those whose source row id is listed in `ids`.
pub fn select_instances(p: &Prepared, ids: Option<&[usize]>) -> Dataset {
    let x_t = &p.partition.explain;
    let rows: Vec<usize> = match ids {
        Some(ids) => {
            let wanted: BTreeSet<usize> = ids.iter().copied().collect();
            (0..x_t.n_rows())
                .filter(|&i| wanted.contains(&x_t.row_ids()[i]))
                .collect()
        }
        None => (0..x_t.n_rows().min(p.config.n_instances.unwrap_or(usize::MAX))).collect(),
    };
    x_t.select_rows(&rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub path: PathBuf,
    pub sha256: String,
    pub rows: usize,
    pub features: usize,
    pub classes: usize,
    pub label_column: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versions {
    pub calime: String,
    pub model_format: u32,
}

/// Run description written next to every output. Contains no timestamps
/// or machine-specific values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub dataset: DatasetInfo,
    pub seeds: Seeds,
    pub partition: PartitionManifest,
    pub versions: Versions,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub black_box_holdout_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph_forced_sink: Option<bool>,
}

impl Manifest {
    pub fn new(p: &Prepared, command: &str) -> Result<Self> {
        let mut config = serde_json::to_value(&p.config)?;
        if let Some(o) = config.as_object_mut() {
            for local in ["output_dir", "cache_dir", "threads"] {
                o.remove(local);
            }
        }
        Ok(Self {
            command: command.into(),
            config_hash: p.config_hash.clone(),
            config,
            dataset: DatasetInfo {
                path: p.config.dataset.clone(),
                sha256: p.dataset_sha256.clone(),
                rows: p.data.n_rows(),
                features: p.data.n_features(),
                classes: p.data.class_count(),
                label_column: p.label_column.clone(),
            },
            seeds: p.seeds,
            partition: p.partition.manifest.clone(),
            versions: Versions {
                calime: env!("CARGO_PKG_VERSION").into(),
                model_format: MODEL_FORMAT_VERSION,
            },
            black_box_holdout_accuracy: None,
            graph_forced_sink: None,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }
}

/// Wall-clock seconds per stage, kept apart from deterministic outputs.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
pub struct Timings(pub BTreeMap<String, f64>);

impl Timings {
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f().map_err(|e| match e {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage: stage.into(),
                source: Box::new(e),
            },
        });
        *self.0.entry(stage.into()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(TIMINGS_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| Error::io(&path, e))
    }
}

/// Plausibility of one neighborhood; independent of `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plausibility {
    pub amd: f64,
    pub counts: OutlierCounts,
    pub n_samples: usize,
    pub stats: StatisticalMetrics,
    pub detection: Detection,
}

/// Detectors and mixture models fit once on the reference partition.
pub struct MetricsContext<'a> {
    reference: &'a Matrix,
    stats: &'a ColumnStats,
    detectors: OutlierDetectors,
    gmm: GmmBank,
    config: &'a RunConfig,
    seed: u64,
}

impl<'a> MetricsContext<'a> {
    pub fn fit(p: &'a Prepared) -> Result<Self> {
        let reference = p.partition.black_box.values();
        let m = &p.config.metrics;
        Ok(Self {
            reference,
            stats: &p.stats_b,
            detectors: OutlierDetectors::fit(
                reference,
                &p.stats_b,
                &m.outliers,
                derive_seed(p.seeds.metrics, 0),
            )?,
            gmm: GmmBank::fit(
                reference,
                &p.stats_b,
                &m.gmm,
                derive_seed(p.seeds.metrics, 1),
            )?,
            config: &p.config,
            seed: p.seeds.metrics,
        })
    }

    pub fn plausibility(&self, nbhd: &Neighborhood, instance_id: usize) -> Result<Plausibility> {
        let seed = instance_seed(derive_seed(self.seed, 2), instance_id, nbhd.mode);
        Ok(Plausibility {
            amd: amd(&nbhd.z, self.reference, &nbhd.x, Some(self.stats))?,
            counts: self.detectors.counts(&nbhd.z),
            n_samples: nbhd.z.nrows(),
            stats: statistical_metrics(&self.gmm, self.reference, &nbhd.z)?,
            detection: detection_metric(
                self.reference,
                &nbhd.z,
                &self.config.metrics.detection,
                seed,
            )?,
        })
    }
}

/// Everything computed for one (instance, mode).
#[derive(Debug, Clone)]
pub struct InstanceOutcome {
    pub instance_id: usize,
    pub mode: Mode,
    pub plausibility: Option<Plausibility>,
    /// One explanation per requested `k`, in ascending `k`.
    pub explanations: Vec<Explanation>,
}

/// Shared state of a run after data, graph and model are ready.
pub struct Session {
    pub prepared: Prepared,
    pub model: TrainedBlackBox,
    pub generator: Option<GeneratorModel>,
    pub timings: Timings,
}

impl Session {
    /// Prepare data and fit whatever `modes` need.
    pub fn open(cfg: &RunConfig) -> Result<Self> {
        let mut timings = Timings::default();
        let prepared = timings.time("prepare", || {
            let p = prepare(cfg)?;
            let m = p.data.n_features();
            match cfg.k.iter().find(|&&k| k > m) {
                Some(k) => Err(Error::Config(format!(
                    "k = {k} exceeds the {m} features of the dataset"
                ))),
                None => Ok(p),
            }
        })?;
        let model = timings.time("train", || train_model(&prepared))?;
        let generator = if cfg.modes.contains(&Mode::Calime) {
            let graph = timings.time("discover", || discover_graph(&prepared))?;
            Some(timings.time("fit_generator", || {
                GeneratorModel::fit(graph, &prepared.partition.causal, &cfg.regressor)
            })?)
        } else {
            None
        };
        Ok(Self {
            prepared,
            model,
            generator,
            timings,
        })
    }

    pub fn context(&self) -> ExplainContext<'_> {
        ExplainContext {
            black_box: &self.model.model,
            stats: &self.prepared.stats_b,
            generator: self.generator.as_ref(),
            feature_names: self.prepared.data.columns(),
        }
    }

    pub fn manifest(&self, command: &str) -> Result<Manifest> {
        let mut m = Manifest::new(&self.prepared, command)?;
        m.black_box_holdout_accuracy = Some(self.model.holdout_accuracy).filter(|v| v.is_finite());
        m.graph_forced_sink = self.generator.as_ref().map(|g| g.graph.forced_sink);
        Ok(m)
    }

    /// Explain every selected instance in every mode and for every `k`,
    /// optionally computing plausibility metrics of each neighborhood.
    pub fn run_instances(
        &self,
        instances: &Dataset,
        modes: &[Mode],
        ks: &[usize],
        metrics: Option<&MetricsContext<'_>>,
    ) -> (Vec<InstanceOutcome>, Vec<Failure>) {
        let ctx = self.context();
        let cfg = &self.prepared.config;
        let jobs: Vec<(usize, Mode)> = (0..instances.n_rows())
            .flat_map(|i| modes.iter().map(move |&m| (i, m)))
            .collect();
        let results: Vec<std::result::Result<InstanceOutcome, Failure>> = jobs
            .par_iter()
            .map(|&(i, mode)| {
                let id = instances.row_ids()[i];
                let x: Vec<f64> = instances.row(i).iter().copied().collect();
                let run = || -> Result<InstanceOutcome> {
                    let seed = instance_seed(self.prepared.seeds.explain, id, mode);
                    let nbhd = build_neighborhood(&x, &ctx, mode, &cfg.explain, seed)?;
                    let plausibility = metrics.map(|m| m.plausibility(&nbhd, id)).transpose()?;
                    let explanations = ks
                        .iter()
                        .map(|&k| {
                            explain_neighborhood(&nbhd, k, id, ctx.feature_names).map(|(e, _)| e)
                        })
                        .collect::<Result<_>>()?;
                    Ok(InstanceOutcome {
                        instance_id: id,
                        mode,
                        plausibility,
                        explanations,
                    })
                };
                run().map_err(|e| Failure {
                    instance_id: id,
                    mode,
                    message: e.to_string(),
                })
            })
            .collect();
        let mut ok = Vec::new();
        let mut failed = Vec::new();
        for r in results {
            match r {
                Ok(o) => ok.push(o),
                Err(f) => {
                    log::warn!(
                        "instance {} ({}) failed: {}",
                        f.instance_id,
                        f.mode,
                        f.message
                    );
                    failed.push(f);
                }
            }
        }
        (ok, failed)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Header-only CSV for an empty table.
fn write_empty_csv(path: &Path, header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_failures(dir: &Path, failures: &[Failure]) -> Result<()> {
    let path = dir.join(FAILURES_FILE);
    let mut s = String::new();
    for f in failures {
        s.push_str(&serde_json::to_string(f)?);
        s.push('\n');
    }
    fs::write(&path, s).map_err(|e| Error::io(&path, e))
}

fn write_graph(dir: &Path, g: &CausalGraph) -> Result<()> {
    g.save(dir.join(GRAPH_FILE))?;
    let txt = dir.join(GRAPH_TEXT_FILE);
    fs::write(&txt, g.to_edge_list()).map_err(|e| Error::io(&txt, e))
}

fn sorted_explanations(outcomes: &[InstanceOutcome]) -> Vec<Explanation> {
    let mut all: Vec<Explanation> = outcomes
        .iter()
        .flat_map(|o| o.explanations.iter().cloned())
        .collect();
    all.sort_by_key(|e| (e.mode, e.k, e.instance_id));
    all
}

/// Stability of each explanation set `(mode, k)`, keyed by instance id.
fn stability(
    explanations: &[Explanation],
    instances: &Dataset,
    stats: &ColumnStats,
    cfg: &RunConfig,
) -> BTreeMap<(Mode, usize), BTreeMap<usize, Lle>> {
    let index: BTreeMap<usize, usize> = instances
        .row_ids()
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let mut groups: BTreeMap<(Mode, usize), Vec<&Explanation>> = BTreeMap::new();
    for e in explanations {
        groups.entry((e.mode, e.k)).or_default().push(e);
    }
    groups
        .into_iter()
        .map(|(key, es)| {
            let rows: Vec<usize> = es.iter().map(|e| index[&e.instance_id]).collect();
            let x = stats.standardize(&instances.values().select_rows(&rows));
            let vecs: Vec<Vec<f64>> = es.iter().map(|e| e.e.clone()).collect();
            let per = match lle_stability(&vecs, &x, &cfg.metrics.stability) {
                Ok(l) => es.iter().map(|e| e.instance_id).zip(l).collect(),
                Err(err) => {
                    log::warn!("stability for {} k={} not computed: {err}", key.0, key.1);
                    BTreeMap::new()
                }
            };
            (key, per)
        })
        .collect()
}

/// Per-instance statistical aggregate across the modes present for it.
fn asm_by_instance(outcomes: &[InstanceOutcome]) -> BTreeMap<(usize, Mode), f64> {
    let mut by_id: BTreeMap<usize, Vec<(Mode, StatisticalMetrics)>> = BTreeMap::new();
    for o in outcomes {
        if let Some(p) = &o.plausibility {
            by_id
                .entry(o.instance_id)
                .or_default()
                .push((o.mode, p.stats));
        }
    }
    let mut out = BTreeMap::new();
    for (id, mut entries) in by_id {
        entries.sort_by_key(|e| e.0);
        let stats: Vec<StatisticalMetrics> = entries.iter().map(|e| e.1).collect();
        for ((mode, _), v) in entries.iter().zip(asm(&stats)) {
            out.insert((id, *mode), v);
        }
    }
    out
}

const NAN_LLE: Lle = Lle {
    mean: f64::NAN,
    min: f64::NAN,
    max: f64::NAN,
    duplicates_skipped: 0,
};

fn metric_records(
    session: &Session,
    outcomes: &[InstanceOutcome],
    instances: &Dataset,
) -> Vec<MetricsRecord> {
    let p = &session.prepared;
    let (dataset, black_box) = (p.config.dataset_name(), p.config.black_box.to_string());
    let explanations = sorted_explanations(outcomes);
    let lle = stability(&explanations, instances, &p.stats_b, &p.config);
    let asm = asm_by_instance(outcomes);
    let plaus: BTreeMap<(usize, Mode), Plausibility> = outcomes
        .iter()
        .filter_map(|o| o.plausibility.map(|pl| ((o.instance_id, o.mode), pl)))
        .collect();
    explanations
        .iter()
        .filter_map(|e| {
            let pl = plaus.get(&(e.instance_id, e.mode))?;
            let l = lle
                .get(&(e.mode, e.k))
                .and_then(|m| m.get(&e.instance_id))
                .copied()
                .unwrap_or(NAN_LLE);
            Some(MetricsRecord {
                dataset: dataset.clone(),
                black_box: black_box.clone(),
                mode: e.mode,
                k: e.k,
                instance_id: e.instance_id,
                class: e.class,
                n_samples: pl.n_samples,
                r2: e.local_r2,
                r2_degenerate: e.r2_degenerate,
                amd: pl.amd,
                lof_count: pl.counts.lof,
                abod_count: pl.counts.abod,
                iforest_count: pl.counts.iforest,
                aos: pl.counts.aos(),
                aos_normalized: aos_normalized(pl.counts, pl.n_samples),
                gm_loglik: pl.stats.gm_loglik,
                ks_score: pl.stats.ks_score,
                kl_score: pl.stats.kl_score,
                asm: asm[&(e.instance_id, e.mode)],
                logistic_auc: pl.detection.logistic_auc,
                svm_auc: pl.detection.svm_auc,
                adm: pl.detection.adm,
                adm_complement: pl.detection.adm_complement,
                lle_mean: l.mean,
                lle_min: l.min,
                lle_max: l.max,
            })
        })
        .collect()
}

/// Aggregates derived from the per-explanation records.
pub struct Aggregates {
    pub fidelity: Vec<FidelitySweepRow>,
    pub stability: Vec<StabilitySweepRow>,
    pub plausibility: Vec<PlausibilityRow>,
    pub summary: Vec<SummaryRow>,
}

fn finite(v: impl Iterator<Item = f64>) -> Vec<f64> {
    v.filter(|x| x.is_finite()).collect()
}

pub fn aggregate(records: &[MetricsRecord], ks: &[usize]) -> Aggregates {
    let mut groups: BTreeMap<(Mode, usize), Vec<&MetricsRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.mode, r.k)).or_default().push(r);
    }
    let mut fidelity = Vec::new();
    let mut stability = Vec::new();
    for ((mode, k), rs) in &groups {
        let (dataset, black_box) = (rs[0].dataset.clone(), rs[0].black_box.clone());
        let (r2_mean, r2_std) = mean_std(&finite(rs.iter().map(|r| r.r2)));
        fidelity.push(FidelitySweepRow {
            dataset: dataset.clone(),
            black_box: black_box.clone(),
            mode: *mode,
            k: *k,
            n_instances: rs.len(),
            r2_mean,
            r2_std,
        });
        let (lle_mean, lle_std) = mean_std(&finite(rs.iter().map(|r| r.lle_mean)));
        stability.push(StabilitySweepRow {
            dataset,
            black_box,
            mode: *mode,
            k: *k,
            n_instances: rs.len(),
            lle_mean,
            lle_std,
            lle_min_mean: mean_std(&finite(rs.iter().map(|r| r.lle_min))).0,
            lle_max_mean: mean_std(&finite(rs.iter().map(|r| r.lle_max))).0,
        });
    }

    // Plausibility does not depend on k; take it from the smallest k.
    let k_min = ks.iter().copied().min().unwrap_or(0);
    let plausibility: Vec<PlausibilityRow> = records
        .iter()
        .filter(|r| r.k == k_min)
        .map(|r| PlausibilityRow {
            dataset: r.dataset.clone(),
            black_box: r.black_box.clone(),
            mode: r.mode,
            instance_id: r.instance_id,
            amd: r.amd,
            aos: r.aos,
            aos_normalized: r.aos_normalized,
            asm: r.asm,
            adm: r.adm,
        })
        .collect();

    let k_max = ks.iter().copied().max().unwrap_or(0);
    let summary = groups
        .iter()
        .filter(|((_, k), _)| *k == k_max)
        .map(|((mode, k), rs)| {
            let mean =
                |f: &dyn Fn(&MetricsRecord) -> f64| mean_std(&finite(rs.iter().map(|r| f(r)))).0;
            SummaryRow {
                dataset: rs[0].dataset.clone(),
                black_box: rs[0].black_box.clone(),
                mode: *mode,
                k: *k,
                n_instances: rs.len(),
                amd: mean(&|r| r.amd),
                aos: mean(&|r| r.aos),
                aos_sum: rs.iter().map(|r| r.aos).sum(),
                aos_normalized: mean(&|r| r.aos_normalized),
                asm: mean(&|r| r.asm),
                adm: mean(&|r| r.adm),
                r2: mean(&|r| r.r2),
                lle: mean(&|r| r.lle_mean),
            }
        })
        .collect();
    Aggregates {
        fidelity,
        stability,
        plausibility,
        summary,
    }
}

/// Outcome of a command that processed instances.
#[derive(Debug, Default)]
pub struct RunReport {
    pub n_instances: usize,
    pub n_ok: usize,
    pub failures: Vec<Failure>,
    pub output_dir: PathBuf,
}

impl RunReport {
    /// 0 when everything succeeded, 1 when any instance failed.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            1
        }
    }
}

fn with_pool<T: Send>(cfg: &RunConfig, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
        None => f(),
    }
}

/// Discover and save the causal graph of the causal partition.
pub fn run_discover(cfg: &RunConfig) -> Result<CausalGraph> {
    with_pool(cfg, || {
        let mut t = Timings::default();
        let p = t.time("prepare", || prepare(cfg))?;
        let g = t.time("discover", || discover_graph(&p))?;
        ensure_dir(&cfg.output_dir)?;
        write_graph(&cfg.output_dir, &g)?;
        let mut m = Manifest::new(&p, "discover")?;
        m.graph_forced_sink = Some(g.forced_sink);
        m.write(&cfg.output_dir)?;
        t.write(&cfg.output_dir)?;
        Ok(g)
    })
}

/// Train and save the black-box.
pub fn run_train(cfg: &RunConfig) -> Result<TrainedBlackBox> {
    with_pool(cfg, || {
        let mut t = Timings::default();
        let p = t.time("prepare", || prepare(cfg))?;
        let model = t.time("train", || train_model(&p))?;
        ensure_dir(&cfg.output_dir)?;
        save_model(&model, cfg.output_dir.join(MODEL_FILE))?;
        let mut m = Manifest::new(&p, "train")?;
        m.black_box_holdout_accuracy = Some(model.holdout_accuracy).filter(|v| v.is_finite());
        m.write(&cfg.output_dir)?;
        t.write(&cfg.output_dir)?;
        Ok(model)
    })
}

/// Explain the selected instances and write `explanations.jsonl`.
pub fn run_explain(cfg: &RunConfig, ids: Option<&[usize]>) -> Result<RunReport> {
    with_pool(cfg, || {
        let mut session = Session::open(cfg)?;
        let instances = select_instances(&session.prepared, ids);
        if instances.n_rows() == 0 {
            log::warn!("no explanation instances match the selection");
        }
        let ks = cfg.k_values();
        let (outcomes, failures) = {
            let s = &session;
            let mut t = Timings::default();
            let r = t.time("explain", || {
                Ok(s.run_instances(&instances, &cfg.modes, &ks, None))
            })?;
            session.timings.0.extend(t.0);
            r
        };
        ensure_dir(&cfg.output_dir)?;
        write_jsonl(
            cfg.output_dir.join(EXPLANATIONS_FILE),
            &sorted_explanations(&outcomes),
        )?;
        write_failures(&cfg.output_dir, &failures)?;
        if let Some(g) = &session.generator {
            write_graph(&cfg.output_dir, &g.graph)?;
        }
        session.manifest("explain")?.write(&cfg.output_dir)?;
        session.timings.write(&cfg.output_dir)?;
        Ok(RunReport {
            n_instances: instances.n_rows(),
            n_ok: outcomes.len(),
            failures,
            output_dir: cfg.output_dir.clone(),
        })
    })
}

fn write_metrics(dir: &Path, records: &[MetricsRecord]) -> Result<()> {
    let path = dir.join(METRICS_FILE);
    if records.is_empty() {
        return write_empty_csv(&path, &["dataset", "black_box", "mode", "k", "instance_id"]);
    }
    write_csv(&path, records)
}

/// Full battery: explanations, per-explanation metrics and all aggregates.
pub fn run_benchmark(cfg: &RunConfig) -> Result<RunReport> {
    with_pool(cfg, || {
        let mut session = Session::open(cfg)?;
        let instances = select_instances(&session.prepared, None);
        let ks = cfg.k_values();
        let mut t = Timings::default();
        let metrics = t.time("fit_metrics", || MetricsContext::fit(&session.prepared))?;
        let (outcomes, failures) = t.time("explain_and_evaluate", || {
            Ok(session.run_instances(&instances, &cfg.modes, &ks, Some(&metrics)))
        })?;
        let records = t.time("aggregate", || {
            Ok(metric_records(&session, &outcomes, &instances))
        })?;
        let agg = aggregate(&records, &ks);
        drop(metrics);
        session.timings.0.extend(t.0);

        let dir = &cfg.output_dir;
        ensure_dir(dir)?;
        write_jsonl(dir.join(EXPLANATIONS_FILE), &sorted_explanations(&outcomes))?;
        write_metrics(dir, &records)?;
        write_csv(&dir.join(SWEEP_FIDELITY_FILE), &agg.fidelity)?;
        write_csv(&dir.join(SWEEP_STABILITY_FILE), &agg.stability)?;
        write_csv(&dir.join(PLAUSIBILITY_FILE), &agg.plausibility)?;
        write_csv(&dir.join(SUMMARY_FILE), &agg.summary)?;
        let txt = dir.join(SUMMARY_TEXT_FILE);
        fs::write(&txt, render_summary(&agg.summary)).map_err(|e| Error::io(&txt, e))?;
        write_failures(dir, &failures)?;
        if let Some(g) = &session.generator {
            write_graph(dir, &g.graph)?;
        }
        session.manifest("benchmark")?.write(dir)?;
        session.timings.write(dir)?;
        Ok(RunReport {
            n_instances: instances.n_rows(),
            n_ok: outcomes.len(),
            failures,
            output_dir: dir.clone(),
        })
    })
}

/// Recompute metrics for the explanations already stored in the output
/// directory. Neighborhoods are regenerated from their seeds.
pub fn run_evaluate(cfg: &RunConfig) -> Result<RunReport> {
    with_pool(cfg, || {
        let stored = read_jsonl(cfg.output_dir.join(EXPLANATIONS_FILE))?;
        let modes: Vec<Mode> = stored
            .iter()
            .map(|e| e.mode)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ks: Vec<usize> = stored
            .iter()
            .map(|e| e.k)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let ids: Vec<usize> = stored
            .iter()
            .map(|e| e.instance_id)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut run_cfg = cfg.clone();
        if !modes.is_empty() {
            run_cfg.modes = modes.clone();
        }
        let mut session = Session::open(&run_cfg)?;
        let instances = select_instances(&session.prepared, Some(&ids));
        let mut t = Timings::default();
        let metrics = t.time("fit_metrics", || MetricsContext::fit(&session.prepared))?;
        let (mut outcomes, failures) = t.time("evaluate", || {
            Ok(session.run_instances(&instances, &modes, &ks, Some(&metrics)))
        })?;
        // Keep only the stored (mode, k, instance) combinations, with the stored vectors.
        let wanted: BTreeMap<(Mode, usize, usize), &Explanation> = stored
            .iter()
            .map(|e| ((e.mode, e.k, e.instance_id), e))
            .collect();
        for o in &mut outcomes {
            o.explanations
                .retain(|e| wanted.contains_key(&(e.mode, e.k, e.instance_id)));
            for e in &mut o.explanations {
                let s = wanted[&(e.mode, e.k, e.instance_id)];
                if s.e != e.e {
                    log::warn!("instance {} ({}, k={}): stored explanation differs from the recomputed one", e.instance_id, e.mode, e.k);
                }
                *e = (*s).clone();
            }
        }
        let records = metric_records(&session, &outcomes, &instances);
        drop(metrics);
        session.timings.0.extend(t.0);
        write_metrics(&cfg.output_dir, &records)?;
        session.timings.write(&cfg.output_dir)?;
        Ok(RunReport {
            n_instances: instances.n_rows(),
            n_ok: outcomes.len(),
            failures,
            output_dir: cfg.output_dir.clone(),
        })
    })
}
