//! Experiment configs, replicate farming and result persistence.
//!
//! Every replicate draws from its own stream derived from the master seed,
//! so results do not depend on the number of workers or on scheduling.
//! Parallel maps collect in replicate order and all reductions are
//! sequential.

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bbm::{compare_family_structure, simulate_bbm, yule_count_test};
use crate::caterpillar::{
    branch_outcome_trend, k_star_test, lifetime_statistics, run_caterpillars, simulate_branching_caterpillar,
    CaterpillarOptions, ForestCaps, Terminal,
};
use crate::dual::single_lineage_position;
use crate::error::{config, Error, Result};
use crate::events::csv_err;
use crate::excursion::{
    i_star_tail_from, kappa_stream, run_excursions, simulate_excursion, InitialSeparation, KappaEstimate, Outcome,
    EXCURSION_EVENT_CAP,
};
use crate::forward::{duality_check, InitialField};
use crate::geometry::Point;
use crate::model::{diffusion_constant, ModelParams, ParamsConfig};
use crate::stats::{mean_var, quantile};
use crate::stream::{ModuleTag, Stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ExcursionStudy,
    KappaSweep,
    CaterpillarStudy,
    ForestVsBbm,
    DualityCheck,
    SingleLineageDiffusion,
    Forest,
}

/// Per-kind options; each kind reads the fields it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    pub n_list: Option<Vec<f64>>,
    /// Time horizon `T` (or `K` for return probabilities).
    pub horizon: Option<f64>,
    pub grid: Option<f64>,
    /// Excursions used to estimate κ̂ where a kind needs it.
    pub kappa_trials: Option<u64>,
    pub max_events: Option<u64>,
    pub max_nodes: Option<usize>,
    pub max_particles: Option<usize>,
    pub points: Option<Vec<[f64; 2]>>,
    pub initial_field: Option<InitialField>,
    pub side: Option<f64>,
    pub cell: Option<f64>,
    pub initial_separation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: Option<u64>,
    #[serde(default)]
    pub experiment: u64,
    pub trials: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub params: ParamsConfig,
    #[serde(default)]
    pub options: Options,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config(path, e.into_inner().message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            return Err(config("seed", "a master seed is required"));
        }
        if self.trials == 0 {
            return Err(config("trials", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(config("workers", "must be at least 1"));
        }
        if let Some(ns) = &self.options.n_list {
            if ns.is_empty() {
                return Err(config("options.n_list", "must not be empty"));
            }
            if ns.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(config("options.n_list", "must be sorted in strictly ascending order"));
            }
        }
        ModelParams::from_config(&self.params).map_err(|e| config("params", e.to_string()))?;
        Ok(())
    }

    fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    fn stream(&self, module: ModuleTag) -> Stream {
        Stream::new(self.seed(), self.experiment, 0, module)
    }

    fn n_list(&self) -> Vec<f64> {
        self.options.n_list.clone().unwrap_or_else(|| vec![self.params.n])
    }

    /// SHA-256 of the config with the fields that cannot change results
    /// (worker count, output directory) cleared.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.workers = None;
        c.output = None;
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serialises")))
    }
}

/// Output of one experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub config_hash: String,
    /// Git-style object id of the summary: SHA-256 over `blob <len>\0`
    /// followed by the summary bytes.
    pub content_id: String,
    pub summary: Value,
    pub rows_csv: String,
    pub telemetry: Value,
    pub truncated: u64,
    pub total: u64,
}

impl ResultRecord {
    /// More than half of the trials were truncated.
    pub fn truncation_dominated(&self) -> bool {
        self.total > 0 && 2 * self.truncated > self.total
    }

    pub fn summary_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(&self.summary).expect("summary serialises");
        v.push(b'\n');
        v
    }
}

struct Produced {
    summary: Value,
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    events: u64,
    truncated: u64,
    total: u64,
}

fn content_id(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(dir.join(name)).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn rows_to_csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wtr.write_record(r).map_err(csv_err)?;
    }
    let bytes = wtr.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

/// Run `cfg`, writing `summary.json`, `rows.csv`, `telemetry.json` and
/// `manifest.json` into `out` (or the config's output directory) if one
/// is given.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ResultRecord> {
    cfg.validate()?;
    let out = out.map(Path::to_path_buf).or_else(|| cfg.output.clone());
    if let Some(dir) = &out {
        std::fs::create_dir_all(dir)?;
    }
    let hash = cfg.hash();
    let workers = cfg.workers.unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Worker(e.to_string()))?;
    let start = Instant::now();
    let produced = match catch_unwind(AssertUnwindSafe(|| pool.install(|| dispatch(cfg)))) {
        Ok(r) => r,
        Err(p) => {
            let message = panic_message(p);
            if let Some(dir) = &out {
                let manifest = json!({
                    "config_hash": hash,
                    "kind": cfg.kind,
                    "status": "aborted",
                    "message": message,
                    "files": [],
                });
                write_atomic(dir, "manifest.json", &serde_json::to_vec_pretty(&manifest)?)?;
            }
            return Err(Error::Worker(message));
        }
    }?;
    let wall = start.elapsed().as_secs_f64();
    let rows_csv = rows_to_csv(&produced.header, &produced.rows)?;
    let mut record = ResultRecord {
        config_hash: hash.clone(),
        content_id: String::new(),
        summary: produced.summary,
        rows_csv,
        telemetry: json!({
            "wall_seconds": wall,
            "workers": workers,
            "events": produced.events,
            "truncated": produced.truncated,
            "total": produced.total,
        }),
        truncated: produced.truncated,
        total: produced.total,
    };
    let summary = record.summary_bytes();
    record.content_id = content_id(&summary);
    if let Some(dir) = &out {
        write_atomic(dir, "summary.json", &summary)?;
        write_atomic(dir, "rows.csv", record.rows_csv.as_bytes())?;
        write_atomic(dir, "telemetry.json", &serde_json::to_vec_pretty(&record.telemetry)?)?;
        let manifest = json!({
            "config_hash": hash,
            "content_id": record.content_id,
            "kind": cfg.kind,
            "seed": cfg.seed(),
            "status": "complete",
            "truncation_dominated": record.truncation_dominated(),
            "files": ["summary.json", "rows.csv", "telemetry.json"],
        });
        write_atomic(dir, "manifest.json", &serde_json::to_vec_pretty(&manifest)?)?;
    }
    Ok(record)
}

fn dispatch(cfg: &ExperimentConfig) -> Result<Produced> {
    let params = ModelParams::from_config(&cfg.params)?;
    match cfg.kind {
        ExperimentKind::ExcursionStudy => excursion_study(cfg, &params),
        ExperimentKind::KappaSweep => kappa_sweep(cfg, &params),
        ExperimentKind::CaterpillarStudy => caterpillar_study(cfg, &params),
        ExperimentKind::ForestVsBbm => forest_vs_bbm(cfg, &params),
        ExperimentKind::DualityCheck => duality(cfg, &params),
        ExperimentKind::SingleLineageDiffusion => diffusion(cfg, &params),
        ExperimentKind::Forest => forest(cfg, &params),
    }
}

fn outcome_name(o: Outcome) -> String {
    serde_json::to_value(o).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Excursions at `n` from parental separations, or from a fixed one.
fn excursions_at(cfg: &ExperimentConfig, p: &ModelParams, trials: u64) -> Result<(Stream, Vec<crate::excursion::ExcursionRecord>)> {
    let base = kappa_stream(&cfg.stream(ModuleTag::Excursion), p.n());
    let records = match cfg.options.initial_separation {
        None => run_excursions(p, trials, &base),
        Some(s) => (0..trials)
            .into_par_iter()
            .map(|i| simulate_excursion(InitialSeparation::Fixed(s), p, &mut base.child_index(i)))
            .collect::<Result<_>>()?,
    };
    Ok((base, records))
}

fn excursion_study(cfg: &ExperimentConfig, template: &ModelParams) -> Result<Produced> {
    let mut per_n = Vec::new();
    let mut rows = Vec::new();
    let (mut events, mut truncated, mut total) = (0, 0, 0);
    for n in cfg.n_list() {
        let p = template.with_n(n)?;
        let (base, records) = excursions_at(cfg, &p, cfg.trials)?;
        let estimate = KappaEstimate::from_records(n, &records)?;
        let violations = records.iter().filter(|r| r.check_invariants(&p).is_err()).count();
        for (i, r) in records.iter().enumerate() {
            rows.push(vec![
                n.to_string(),
                i.to_string(),
                base.child_index(i as u64).key_hex(),
                outcome_name(r.outcome),
                r.tau_type.to_string(),
                r.i_star.to_string(),
                r.events.to_string(),
            ]);
        }
        events += records.iter().map(|r| r.events).sum::<u64>();
        truncated += estimate.truncated;
        total += estimate.trials;
        per_n.push(json!({
            "n": n,
            "standing_assumption": p.standing_assumption_holds(),
            "estimate": estimate,
            "i_star_tail": i_star_tail_from(&records),
            "invariant_violations": violations,
        }));
    }
    Ok(Produced {
        summary: json!({ "kind": cfg.kind, "results": per_n }),
        header: vec!["n", "trial", "seed", "outcome", "tau_type", "i_star", "events"],
        rows,
        events,
        truncated,
        total,
    })
}

fn kappa_sweep(cfg: &ExperimentConfig, template: &ModelParams) -> Result<Produced> {
    let mut estimates = Vec::new();
    let mut standing = Vec::new();
    let mut events = 0;
    for n in cfg.n_list() {
        let p = template.with_n(n)?;
        let (_, records) = excursions_at(cfg, &p, cfg.trials)?;
        events += records.iter().map(|r| r.events).sum::<u64>();
        estimates.push(KappaEstimate::from_records(n, &records)?);
        standing.push(p.standing_assumption_holds());
    }
    let overlap = estimates.iter().enumerate().all(|(i, a)| estimates[i + 1..].iter().all(|b| a.overlaps(b)));
    let overshoot_decreasing = estimates.windows(2).all(|w| w[1].overshoot_fraction < w[0].overshoot_fraction);
    let rows = estimates
        .iter()
        .map(|e| {
            vec![
                e.n.to_string(),
                e.trials.to_string(),
                e.diverged.to_string(),
                e.coalesced.to_string(),
                e.overshot.to_string(),
                e.truncated.to_string(),
                e.p_hat.to_string(),
                e.kappa_hat.to_string(),
                e.kappa_ci.0.to_string(),
                e.kappa_ci.1.to_string(),
                e.overshoot_fraction.to_string(),
            ]
        })
        .collect();
    let truncated = estimates.iter().map(|e| e.truncated).sum();
    let total = estimates.iter().map(|e| e.trials).sum();
    Ok(Produced {
        summary: json!({
            "kind": cfg.kind,
            "estimates": estimates,
            "standing_assumption": standing,
            "pairwise_overlap": overlap,
            "overshoot_strictly_decreasing": overshoot_decreasing,
        }),
        header: vec![
            "n", "trials", "diverged", "coalesced", "overshot", "truncated", "p_hat", "kappa_hat", "kappa_lo", "kappa_hi",
            "overshoot_fraction",
        ],
        rows,
        events,
        truncated,
        total,
    })
}

fn caterpillar_study(cfg: &ExperimentConfig, p: &ModelParams) -> Result<Produced> {
    let kt = cfg.options.kappa_trials.unwrap_or(cfg.trials);
    let (_, records) = excursions_at(cfg, p, kt)?;
    let kappa = KappaEstimate::from_records(p.n(), &records)?;
    let opts = CaterpillarOptions {
        grid: cfg.options.grid,
        horizon: None,
        max_events: cfg.options.max_events.unwrap_or(EXCURSION_EVENT_CAP),
    };
    let runs = run_caterpillars(Point::ORIGIN, cfg.trials, p, &opts, &cfg.stream(ModuleTag::Caterpillar))?;
    let ln = p.n().ln();
    let kappa_escape = kappa.escape_hat * ln;
    let lifetime = lifetime_statistics(&runs, p, kappa_escape).ok();
    let k_star = k_star_test(&runs, kappa.escape_hat).ok();
    let trend = branch_outcome_trend(&runs);
    let count = |t| runs.iter().filter(|c| c.terminal == t).count();
    let truncated = count(Terminal::Truncated) as u64;
    let rows = runs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            vec![
                i.to_string(),
                c.k_star().to_string(),
                c.lifetime.to_string(),
                serde_json::to_value(c.terminal).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
                c.events.to_string(),
            ]
        })
        .collect();
    Ok(Produced {
        summary: json!({
            "kind": cfg.kind,
            "n": p.n(),
            "kappa": kappa,
            "kappa_escape": kappa_escape,
            "lifetime": lifetime,
            "k_star": k_star,
            "branch_outcome_trend": trend,
            "diverged": count(Terminal::Diverge),
            "overshot": count(Terminal::Overshoot),
            "truncated": truncated,
            "max_k_star": runs.iter().map(|c| c.k_star()).max().unwrap_or(0),
        }),
        header: vec!["index", "k_star", "lifetime", "terminal", "events"],
        events: runs.iter().map(|c| c.events).sum::<u64>() + records.iter().map(|r| r.events).sum::<u64>(),
        rows,
        truncated,
        total: cfg.trials,
    })
}

fn forest_caps(cfg: &ExperimentConfig) -> ForestCaps {
    let d = ForestCaps::default();
    ForestCaps {
        max_nodes: cfg.options.max_nodes.unwrap_or(d.max_nodes),
        max_events_per_node: cfg.options.max_events.unwrap_or(d.max_events_per_node),
    }
}

fn forests(cfg: &ExperimentConfig, p: &ModelParams, horizon: f64) -> Result<Vec<crate::caterpillar::CaterpillarForest>> {
    let base = cfg.stream(ModuleTag::Caterpillar).child(format!("forest n={}", p.n()).as_bytes());
    let caps = forest_caps(cfg);
    (0..cfg.trials)
        .into_par_iter()
        .map(|i| simulate_branching_caterpillar(Point::ORIGIN, horizon, p, cfg.options.grid, caps, &base.child_index(i)))
        .collect()
}

fn forest(cfg: &ExperimentConfig, p: &ModelParams) -> Result<Produced> {
    let horizon = cfg.options.horizon.unwrap_or(1.0);
    let fs = forests(cfg, p, horizon)?;
    let alive: Vec<f64> = fs.iter().map(|f| f.alive_count() as f64).collect();
    let depths: Vec<f64> = fs.iter().map(|f| f.max_depth() as f64).collect();
    let truncated = fs.iter().filter(|f| f.truncated).count() as u64;
    let rows = fs
        .iter()
        .enumerate()
        .map(|(i, f)| {
            vec![
                i.to_string(),
                f.alive_count().to_string(),
                f.nodes.len().to_string(),
                f.max_depth().to_string(),
                f.truncated.to_string(),
            ]
        })
        .collect();
    Ok(Produced {
        summary: json!({
            "kind": cfg.kind,
            "n": p.n(),
            "horizon": horizon,
            "mean_alive": mean_var(&alive).0,
            "depth_q99": quantile(&depths, 0.99),
            "log_log_n": p.n().ln().ln(),
            "truncated": truncated,
        }),
        header: vec!["index", "alive", "nodes", "max_depth", "truncated"],
        events: fs.iter().flat_map(|f| f.nodes.iter().map(|n| n.caterpillar.events)).sum(),
        rows,
        truncated,
        total: cfg.trials,
    })
}

fn forest_vs_bbm(cfg: &ExperimentConfig, template: &ModelParams) -> Result<Produced> {
    let horizon = cfg.options.horizon.unwrap_or(1.0);
    let kt = cfg.options.kappa_trials.unwrap_or(cfg.trials);
    let max_particles = cfg.options.max_particles.unwrap_or(forest_caps(cfg).max_nodes);
    let mut per_n = Vec::new();
    let mut rows = Vec::new();
    let (mut events, mut truncated, mut total) = (0, 0, 0);
    for n in cfg.n_list() {
        let p = template.with_n(n)?;
        let (_, records) = excursions_at(cfg, &p, kt)?;
        let kappa = KappaEstimate::from_records(n, &records)?;
        let v = p.lambda() * kappa.escape_hat * n.ln();
        let sigma2 = diffusion_constant(&p)?;
        let fs = forests(cfg, &p, horizon)?;
        let bbm_base = cfg.stream(ModuleTag::Bbm).child(format!("n={n}").as_bytes());
        let trees = (0..cfg.trials)
            .into_par_iter()
            .map(|i| simulate_bbm(Point::ORIGIN, v, sigma2, horizon, None, max_particles, &mut bbm_base.child_index(i)))
            .collect::<Result<Vec<_>>>()?;
        let report = compare_family_structure(&fs, &trees)?;
        let counts: Vec<usize> = fs.iter().map(|f| f.alive_count().max(1)).collect();
        let yule = yule_count_test(&counts, v, horizon).ok();
        let ft = fs.iter().filter(|f| f.truncated).count() as u64;
        events += fs.iter().flat_map(|f| f.nodes.iter().map(|n| n.caterpillar.events)).sum::<u64>();
        truncated += ft + report.truncated_b as u64;
        total += 2 * cfg.trials;
        rows.push(vec![
            n.to_string(),
            kappa.escape_hat.to_string(),
            v.to_string(),
            report.mean_count_a.to_string(),
            report.mean_count_b.to_string(),
            report.count.p_value.to_string(),
            report.displacement_x.statistic.to_string(),
            report.displacement_y.statistic.to_string(),
            report.pairwise.map(|k| k.statistic.to_string()).unwrap_or_default(),
            ft.to_string(),
            report.truncated_b.to_string(),
        ]);
        per_n.push(json!({
            "n": n,
            "kappa": kappa,
            "v": v,
            "sigma2": sigma2,
            "report": report,
            "displacement_distance": report.displacement_distance(),
            "forest_vs_yule": yule,
        }));
    }
    let d: Vec<f64> = per_n.iter().filter_map(|r| r["displacement_distance"].as_f64()).collect();
    Ok(Produced {
        summary: json!({
            "kind": cfg.kind,
            "horizon": horizon,
            "results": per_n,
            "displacement_distance_improves": d.len() >= 2 && d[d.len() - 1] < d[0],
        }),
        header: vec![
            "n", "escape", "v", "mean_alive", "mean_bbm", "count_p", "ks_x", "ks_y", "ks_pairwise", "forest_truncated",
            "bbm_truncated",
        ],
        rows,
        events,
        truncated,
        total,
    })
}

fn duality(cfg: &ExperimentConfig, p: &ModelParams) -> Result<Produced> {
    let o = &cfg.options;
    let side = o.side.unwrap_or(5.0);
    let cell = o.cell.unwrap_or(p.r_n() / 8.0);
    let points: Vec<Point> = o
        .points
        .clone()
        .unwrap_or_else(|| vec![[side / 2.0, side / 2.0]])
        .into_iter()
        .map(|[x, y]| Point::new2(x, y))
        .collect();
    let field = o.initial_field.unwrap_or(InitialField::Constant { value: 0.5 });
    let horizon = o.horizon.unwrap_or(0.5);
    let rep = duality_check(&points, field, horizon, cfg.trials, side, cell, p, &cfg.stream(ModuleTag::Forward))?;
    let rows = vec![vec![
        rep.forward.mean.to_string(),
        rep.forward.se.to_string(),
        rep.dual.mean.to_string(),
        rep.dual.se.to_string(),
        rep.z.to_string(),
        rep.agree.to_string(),
    ]];
    Ok(Produced {
        summary: json!({ "kind": cfg.kind, "initial_field": field, "side": side, "cell": cell, "report": rep }),
        header: vec!["forward", "forward_se", "dual", "dual_se", "z", "agree"],
        rows,
        events: 0,
        truncated: rep.dual_truncated,
        total: cfg.trials,
    })
}

fn diffusion(cfg: &ExperimentConfig, p: &ModelParams) -> Result<Produced> {
    let horizon = cfg.options.horizon.unwrap_or(1.0);
    let base = cfg.stream(ModuleTag::Dual);
    let ends = (0..cfg.trials)
        .into_par_iter()
        .map(|i| single_lineage_position(Point::ORIGIN, horizon, p, &mut base.child_index(i)))
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = ends.iter().map(|(q, _)| q.x()).collect();
    let ys: Vec<f64> = ends.iter().map(|(q, _)| q.y()).collect();
    let sigma2 = diffusion_constant(p)?;
    let (vx, vy) = (mean_var(&xs).1, mean_var(&ys).1);
    let pooled = 0.5 * (vx + vy) / horizon;
    let jumps: u64 = ends.iter().map(|e| e.1).sum();
    let rows = ends
        .iter()
        .enumerate()
        .map(|(i, (q, j))| vec![i.to_string(), q.x().to_string(), q.y().to_string(), j.to_string()])
        .collect();
    Ok(Produced {
        summary: json!({
            "kind": cfg.kind,
            "n": p.n(),
            "horizon": horizon,
            "sigma2": sigma2,
            "var_x": vx / horizon,
            "var_y": vy / horizon,
            "pooled": pooled,
            "relative_error": (pooled / sigma2 - 1.0).abs(),
            "mean_jumps": jumps as f64 / cfg.trials as f64,
            "expected_jumps": crate::model::total_jump_rate(p) * horizon,
        }),
        header: vec!["replicate", "x", "y", "jumps"],
        rows,
        events: jumps,
        truncated: 0,
        total: cfg.trials,
    })
}
