//! Acceptance suite. Runs every criterion at full size and prints one
//! PASS/FAIL line each; exits non-zero if any criterion fails.
//!
//! Run with `cargo test --release -p slfv-core --test acceptance`.

use std::time::Instant;

use rayon::prelude::*;
use slfv::caterpillar::{k_star_test, lifetime_statistics, run_caterpillars, simulate_branching_caterpillar, CaterpillarOptions, ForestCaps};
use slfv::bbm::{compare_family_structure, simulate_bbm};
use slfv::dual::single_lineage_position;
use slfv::events::next_covering_event;
use slfv::excursion::{kappa_stream, run_excursions, skorohod_embed_check, KappaEstimate, Outcome, EXCURSION_EVENT_CAP};
use slfv::forward::{duality_check, InitialField};
use slfv::harness::{run_experiment, ExperimentConfig};
use slfv::model::{diffusion_constant, total_jump_rate};
use slfv::stats::{correlation, mean_var};
use slfv::{Dim, ModelParams, ModuleTag, Point, RadiusMeasure, Space, Stream};

type Verdict = Result<String, String>;

fn base(p: &ModelParams) -> Stream {
    Stream::new(2024, 0, 0, ModuleTag::Harness).child(format!("{:?}", p.to_config()).as_bytes())
}

fn params(atoms: &[(f64, f64)], u: f64, n: f64) -> ModelParams {
    ModelParams::new(Dim::Two, RadiusMeasure::new(atoms.iter().copied()).unwrap(), u, n).unwrap()
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: slfv::Error) -> String {
    e.to_string()
}

fn sigma2() -> Verdict {
    let p = params(&[(1.0, 1.0)], 1.0, 1e4);
    let s2 = diffusion_constant(&p).map_err(err)?;
    let quad_err = (s2 - std::f64::consts::FRAC_PI_2).abs();
    let s = base(&p);
    let ends: Vec<Point> = (0..10_000u64)
        .into_par_iter()
        .map(|i| single_lineage_position(Point::new2(0.0, 0.0), 1.0, &p, &mut s.child_index(i)).map(|e| e.0))
        .collect::<slfv::Result<_>>()
        .map_err(err)?;
    let vx = mean_var(&ends.iter().map(|q| q.x()).collect::<Vec<_>>()).1;
    let vy = mean_var(&ends.iter().map(|q| q.y()).collect::<Vec<_>>()).1;
    let rel = (vx / s2 - 1.0).abs().max((vy / s2 - 1.0).abs());
    check(quad_err < 1e-6 && rel < 0.02, format!("σ²={s2:.9} |σ²-π/2|={quad_err:.1e} var=({vx:.4},{vy:.4}) max rel err {rel:.4}"))
}

fn jump_rate() -> Verdict {
    let mut details = Vec::new();
    let mut ok = true;
    for atoms in [vec![(1.0, 0.5), (2.0, 0.5)], vec![(0.5, 1.0), (1.5, 2.0), (3.0, 0.25)]] {
        let p = params(&atoms, 0.8, 1e4);
        let rate = total_jump_rate(&p);
        let horizon = 1e5 / rate;
        let (_, jumps) = single_lineage_position(Point::new2(0.0, 0.0), horizon, &p, &mut base(&p)).map_err(err)?;
        let rel = (jumps as f64 / horizon / rate - 1.0).abs();
        ok &= rel < 0.01;
        details.push(format!("μ={atoms:?}: {jumps} jumps, rel err {rel:.4}"));
    }
    check(ok, details.join("; "))
}

fn mark_sets() -> Verdict {
    const K: usize = 6;
    let mut details = Vec::new();
    let mut ok = true;
    for u in [0.3, 0.8] {
        let p = params(&[(1.0, 1.0)], u, 100.0);
        let mut rng = base(&p);
        let mut cols = vec![Vec::with_capacity(100_000); K];
        let mut t = 0.0;
        for _ in 0..100_000 {
            let ce = next_covering_event(&[Point::new2(0.0, 0.0)], t, &p, &Space::Plane, &mut rng).map_err(err)?;
            t = ce.event.t;
            for (i, col) in cols.iter_mut().enumerate() {
                col.push(slfv::events::mark_member(ce.event.q, u, i + 1).map_err(err)? as u8 as f64);
            }
        }
        let se = (u * (1.0 - u) / 1e5).sqrt();
        let worst_mean = cols.iter().map(|c| (mean_var(c).0 - u).abs() / se).fold(0.0, f64::max);
        let mut worst_rho: f64 = 0.0;
        for i in 0..K {
            for j in i + 1..K {
                worst_rho = worst_rho.max(correlation(&cols[i], &cols[j]).abs());
            }
        }
        ok &= worst_mean < 3.0 && worst_rho < 0.01;
        details.push(format!("u={u}: max |mean-u|/SE {worst_mean:.2}, max |ρ| {worst_rho:.4}"));
    }
    check(ok, details.join("; "))
}

const KAPPA_N: [f64; 3] = [4096.0, 65536.0, 1048576.0];

fn kappa_params() -> ModelParams {
    params(&[(1.0, 1.0)], 0.8, 4096.0)
}

fn kappa_runs() -> Vec<(ModelParams, Vec<slfv::excursion::ExcursionRecord>)> {
    let template = kappa_params();
    KAPPA_N
        .iter()
        .map(|&n| {
            let p = template.with_n(n).unwrap();
            let records = run_excursions(&p, 20_000, &kappa_stream(&base(&template), n));
            (p, records)
        })
        .collect()
}

fn kappa(runs: &[(ModelParams, Vec<slfv::excursion::ExcursionRecord>)]) -> Verdict {
    let est: Vec<KappaEstimate> = runs
        .iter()
        .map(|(p, r)| KappaEstimate::from_records(p.n(), r))
        .collect::<slfv::Result<_>>()
        .map_err(err)?;
    let overlap = est.iter().enumerate().all(|(i, a)| est[i + 1..].iter().all(|b| a.overlaps(b)));
    let decreasing = est.windows(2).all(|w| w[1].overshoot_fraction < w[0].overshoot_fraction);
    let last = est.last().unwrap();
    let small = last.overshoot_fraction < last.p_hat / 5.0;
    let table: Vec<String> = est
        .iter()
        .map(|e| {
            format!(
                "n={} κ̂={:.3} [{:.3},{:.3}] overshoot={:.4}",
                e.n, e.kappa_hat, e.kappa_ci.0, e.kappa_ci.1, e.overshoot_fraction
            )
        })
        .collect();
    check(
        overlap && decreasing && small,
        format!("{}; overlap={overlap} decreasing={decreasing} small_overshoot={small}", table.join(", ")),
    )
}

fn excursion_structure(runs: &[(ModelParams, Vec<slfv::excursion::ExcursionRecord>)]) -> Verdict {
    let mut violations = 0;
    let mut truncated = 0;
    let mut total = 0;
    let mut first = None;
    for (p, records) in runs {
        for r in records {
            total += 1;
            if r.outcome == Outcome::Truncated {
                truncated += 1;
                continue;
            }
            if let Err(e) = r.check_invariants(p) {
                violations += 1;
                first.get_or_insert(e);
            }
        }
    }
    let frac = truncated as f64 / total as f64;
    check(
        violations == 0 && frac < 1e-3,
        format!("{total} records, {violations} violations, truncated fraction {frac:.5}{}", first.map(|e| format!(" ({e})")).unwrap_or_default()),
    )
}

fn bessel() -> Verdict {
    let p = kappa_params().with_n(1048576.0).unwrap();
    let step = (p.r_n() / 20.0).powi(2);
    let rep = skorohod_embed_check(10_000, &p, step, &base(&p)).map_err(|e| {
        format!("R_n={:.3e} γ_n={:.3e}: {e}", p.r_n(), p.gamma_n())
    })?;
    check(
        rep.relative_error < 0.05,
        format!("p̂={:.4} closed form {:.4} rel err {:.4}", rep.p_hat, rep.bessel, rep.relative_error),
    )
}

fn caterpillar_laws() -> Verdict {
    let p = kappa_params().with_n(65536.0).unwrap();
    let est = KappaEstimate::from_records(p.n(), &run_excursions(&p, 20_000, &kappa_stream(&base(&p), p.n()))).map_err(err)?;
    let opts = CaterpillarOptions { grid: None, horizon: None, max_events: EXCURSION_EVENT_CAP };
    let runs = run_caterpillars(Point::new2(0.0, 0.0), 10_000, &p, &opts, &base(&p).child(b"caterpillar")).map_err(err)?;
    let kappa_escape = est.escape_hat * p.n().ln();
    let ks = k_star_test(&runs, est.escape_hat).map_err(err)?;
    let life = lifetime_statistics(&runs, &p, kappa_escape).map_err(err)?;
    let rel = (life.mean_lifetime / life.expected_lifetime - 1.0).abs();
    check(
        ks.p_value > 0.01 && life.gap_ks.p_value > 0.01 && rel < 0.2,
        format!(
            "escape={:.4} k* χ² p={:.3} (dof {}) gap KS p={:.3} mean lifetime {:.5} vs {:.5} (rel {rel:.3})",
            est.escape_hat, ks.p_value, ks.dof, life.gap_ks.p_value, life.mean_lifetime, life.expected_lifetime
        ),
    )
}

fn forest_vs_bbm() -> Verdict {
    const FORESTS: u64 = 200;
    const CAP: usize = 256;
    let horizon = 1.0;
    let mut distances = Vec::new();
    let mut count_p = None;
    let mut details = Vec::new();
    for n in [4096.0, 1048576.0] {
        let p = kappa_params().with_n(n).unwrap();
        let s = base(&p);
        let est = KappaEstimate::from_records(n, &run_excursions(&p, 20_000, &kappa_stream(&s, n))).map_err(err)?;
        let v = p.lambda() * est.escape_hat * n.ln();
        let sigma2 = diffusion_constant(&p).map_err(err)?;
        let caps = ForestCaps { max_nodes: CAP, ..Default::default() };
        let forests = (0..FORESTS)
            .into_par_iter()
            .map(|i| simulate_branching_caterpillar(Point::new2(0.0, 0.0), horizon, &p, None, caps, &s.child(b"forest").child_index(i)))
            .collect::<slfv::Result<Vec<_>>>()
            .map_err(err)?;
        let trees = (0..FORESTS)
            .into_par_iter()
            .map(|i| simulate_bbm(Point::new2(0.0, 0.0), v, sigma2, horizon, None, CAP, &mut s.child(b"bbm").child_index(i)))
            .collect::<slfv::Result<Vec<_>>>()
            .map_err(err)?;
        let ft = forests.iter().filter(|f| f.truncated).count();
        let bt = trees.iter().filter(|t| t.truncated).count();
        let rep = compare_family_structure(&forests, &trees).map_err(|e| {
            format!(
                "n={n}: V={v:.2} (e^(VT)={:.2e}), {ft}/{FORESTS} forests and {bt}/{FORESTS} trees hit the {CAP}-node cap: {e}",
                (v * horizon).exp()
            )
        })?;
        let d = rep.displacement_distance();
        distances.push(d);
        details.push(format!(
            "n={n}: V={v:.2} count χ² p={:.3} KS dist {d:.4} truncated {}/{} forests, {}/{} trees",
            rep.count.p_value, rep.truncated_a, FORESTS, rep.truncated_b, FORESTS
        ));
        count_p = Some(rep.count.p_value);
    }
    let improves = distances[1] < distances[0];
    let count_ok = count_p.unwrap() > 0.01;
    check(count_ok && improves, format!("{}; improves={improves}", details.join("; ")))
}

fn duality() -> Verdict {
    let p = params(&[(1.0, 1.0)], 0.8, 1.0);
    let mut details = Vec::new();
    let mut ok = true;
    let fields = [InitialField::Constant { value: 0.5 }, InitialField::HalfPlane { threshold: 2.5 }];
    let point_sets = [vec![Point::new2(2.5, 2.5)], vec![Point::new2(2.0, 2.5), Point::new2(3.0, 2.5)]];
    for field in fields {
        for pts in &point_sets {
            let s = base(&p).child(format!("{field:?} k={}", pts.len()).as_bytes());
            let rep = duality_check(pts, field, 0.5, 10_000, 5.0, 1.0 / 8.0, &p, &s).map_err(err)?;
            ok &= rep.agree;
            details.push(format!(
                "{field:?} k={}: fwd {:.4}±{:.4} dual {:.4}±{:.4} z={:.2}",
                pts.len(),
                rep.forward.mean,
                rep.forward.se,
                rep.dual.mean,
                rep.dual.se,
                rep.z
            ));
        }
    }
    check(ok, details.join("; "))
}

const CONFIGS: &[&str] = &[
    r#"kind = "excursion-study"
trials = 400
[params]
d = 2
u = 0.8
n = 65536
c = 1
atoms = [[1.0, 1.0]]"#,
    r#"kind = "kappa-sweep"
trials = 400
[params]
d = 2
u = 0.8
n = 4096
c = 1
atoms = [[1.0, 1.0]]
[options]
n_list = [4096, 65536]"#,
    r#"kind = "caterpillar-study"
trials = 100
[params]
d = 2
u = 0.8
n = 65536
c = 1
atoms = [[1.0, 1.0]]
[options]
kappa_trials = 400"#,
    r#"kind = "forest"
trials = 20
[params]
d = 2
u = 0.8
n = 65536
c = 1
atoms = [[1.0, 1.0]]
[options]
horizon = 0.2
max_nodes = 64"#,
    r#"kind = "forest-vs-bbm"
trials = 20
[params]
d = 2
u = 0.8
n = 65536
c = 1
atoms = [[1.0, 1.0]]
[options]
horizon = 0.2
kappa_trials = 400
max_nodes = 64"#,
    r#"kind = "duality-check"
trials = 50
[params]
d = 2
u = 0.8
n = 1
atoms = [[1.0, 1.0]]"#,
    r#"kind = "single-lineage-diffusion"
trials = 500
[params]
d = 2
u = 1.0
n = 1000
atoms = [[1.0, 1.0]]"#,
];

fn determinism() -> Verdict {
    let mut bad = Vec::new();
    for text in CONFIGS {
        let mut cfg = ExperimentConfig::parse(&format!("seed = 99\n{text}")).map_err(err)?;
        let mut ids = Vec::new();
        for workers in [1, 2, 4] {
            cfg.workers = Some(workers);
            let rec = run_experiment(&cfg, None).map_err(err)?;
            ids.push((rec.summary_bytes(), rec.rows_csv));
        }
        if ids.windows(2).any(|w| w[0] != w[1]) {
            bad.push(format!("{:?}", cfg.kind));
        }
    }
    check(bad.is_empty(), format!("{} kinds at 1/2/4 workers; mismatched: {bad:?}", CONFIGS.len()))
}

fn main() {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, start: Instant, r: Verdict| {
        let secs = start.elapsed().as_secs_f64();
        match r {
            Ok(d) => println!("criterion {id:>2} PASS {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL {name} [{secs:.1}s]: {d}")
            }
        }
    };
    let t = Instant::now();
    report(1, "sigma2", t, sigma2());
    let t = Instant::now();
    report(2, "jump-rate", t, jump_rate());
    let t = Instant::now();
    report(3, "mark-sets", t, mark_sets());
    let t = Instant::now();
    let runs = kappa_runs();
    report(4, "kappa-convergence", t, kappa(&runs));
    let t = Instant::now();
    report(5, "excursion-structure", t, excursion_structure(&runs));
    let t = Instant::now();
    report(6, "bessel-oracle", t, bessel());
    let t = Instant::now();
    report(7, "caterpillar-laws", t, caterpillar_laws());
    let t = Instant::now();
    report(8, "forest-vs-bbm", t, forest_vs_bbm());
    let t = Instant::now();
    report(9, "duality", t, duality());
    let t = Instant::now();
    report(10, "determinism", t, determinism());
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
