//! Exit criteria, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines always reach stdout; the process fails if any criterion
//! does. An optional argument filters criteria by number or name.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};
use unlearn_bench::experiment::{deletion_cost, DeletionCost};
use unlearn_bench::problems::{build_learner, stream_schedule, Learner};
use unlearn_bench::risk::{risk_curve, trend_violations};
use unlearn_bench::verify::EngineKind;
use unlearn_bench::{verify_coupling, ExperimentConfig, Problem, VerifyConfig};
use unlearn_core::coupling::couple;
use unlearn_core::engine::PrefixQuery;
use unlearn_core::linalg::{self, VecD};
use unlearn_core::sco::{vrfw_query, ConvexBody, GlmLoss, JlSketch, LossModel, VrFrankWolfe};
use unlearn_core::stream::{StreamMode, StreamRequest, StreamState};
use unlearn_core::{NoiseScale, NoiseSchedule, PrefixTree};

type Check = anyhow::Result<(bool, String)>;

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn minutes(m: u64) -> Option<Duration> {
    Some(Duration::from_secs(60 * m))
}

// ---------------------------------------------------------------- 1

fn coupling_marginals() -> Check {
    let n = 50_000;
    let sigma = NoiseScale::new(1.0)?;
    let std_normal = Normal::standard();
    let mut notes = Vec::new();
    let mut ok = true;
    for d in [1usize, 4] {
        let u = linalg::zeros(d);
        // ‖Δ‖ = 1
        let u_new: VecD = (0..d).map(|_| 1.0 / (d as f64).sqrt()).collect();
        let target = 2.0 * std_normal.cdf(linalg::dist(&u, &u_new) / (2.0 * sigma.value())) - 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(d as u64);
        let mut disagree = 0usize;
        let mut mean = linalg::zeros(d);
        for _ in 0..n {
            let r: VecD = u.iter().map(|&m| m + sigma.value() * rng.sample::<f64, _>(StandardNormal)).collect();
            let out = couple(&u, &u_new, &r, sigma, rng.random())?;
            disagree += (out.response != r) as usize;
            linalg::axpy(&mut mean, 1.0 / n as f64, &out.response);
        }
        let rate = disagree as f64 / n as f64;
        let mean_err = linalg::sub(&mean, &u_new).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mean_tol = 4.0 * sigma.value() / (n as f64).sqrt();
        ok &= (rate - target).abs() <= 0.01 && mean_err <= mean_tol;
        notes.push(format!("d={d}: rate {rate:.4} vs {target:.4}, mean err {mean_err:.4} (tol {mean_tol:.4})"));
    }
    Ok((ok, notes.join("; ")))
}

// ---------------------------------------------------------------- 2

fn unlearning_certificate() -> Check {
    let cfg = VerifyConfig { engine: EngineKind::Prefix, trials: 20_000, alpha: 0.01, ..Default::default() };
    let good = verify_coupling(&cfg)?;
    let bad = verify_coupling(&VerifyConfig { mutate: true, ..cfg })?;
    let min_p = |r: &unlearn_bench::CouplingReport| r.ks.iter().chain(&r.z).map(|t| t.p_value).fold(1.0, f64::min);
    Ok((
        good.passed && !bad.passed,
        format!(
            "correct engine min p {:.3e} (threshold {:.1e}, retrain fraction {:.3}); inverted ratio min p {:.3e}",
            min_p(&good),
            good.threshold,
            good.retrain_fraction,
            min_p(&bad)
        ),
    ))
}

// ---------------------------------------------------------------- 3, 4

const GRID_N: usize = 1024;
const GRID_RHOS: [f64; 3] = [0.02, 0.05, 0.1];
const GRID_DELETIONS: usize = 10_000;

struct GridPoint {
    rho: f64,
    retrain_fraction: f64,
    relative_complexity: f64,
}

fn deletion_grid() -> anyhow::Result<Vec<GridPoint>> {
    GRID_RHOS
        .iter()
        .map(|&rho| {
            let mut cfg = ExperimentConfig::new(Problem::VrfwSco, GRID_N, 5, rho);
            cfg.seed = 3;
            let costs: Vec<DeletionCost> =
                (0..GRID_DELETIONS).into_par_iter().map(|t| deletion_cost(&cfg, t)).collect::<anyhow::Result<_>>()?;
            let sum = |f: fn(&DeletionCost) -> f64| costs.iter().map(f).sum::<f64>();
            Ok(GridPoint {
                rho,
                retrain_fraction: sum(|c| (c.retrains > 0) as u8 as f64) / costs.len() as f64,
                relative_complexity: sum(|c| c.unlearn_queries as f64) / sum(|c| c.learn_queries as f64),
            })
        })
        .collect()
}

static GRID: std::sync::OnceLock<Result<Vec<GridPoint>, String>> = std::sync::OnceLock::new();

fn grid() -> anyhow::Result<&'static [GridPoint]> {
    GRID.get_or_init(|| deletion_grid().map_err(|e| format!("{e:#}"))).as_deref().map_err(|e| anyhow::anyhow!("{e}"))
}

fn retrain_probability() -> Check {
    let log_n = (GRID_N as f64).log2();
    let mut ok = true;
    let mut notes = Vec::new();
    for p in grid()? {
        let bound = 1.2 * log_n * p.rho;
        ok &= p.retrain_fraction <= bound;
        notes.push(format!("rho={}: {:.4} <= {:.3}", p.rho, p.retrain_fraction, bound));
    }
    Ok((ok, notes.join("; ")))
}

fn relative_complexity() -> Check {
    let log_n = (GRID_N as f64).log2();
    let mut ok = true;
    let mut notes = Vec::new();
    for p in grid()? {
        let (lo, hi) = (0.2 * p.rho * log_n, 2.0 * p.rho * log_n);
        ok &= (lo..=hi).contains(&p.relative_complexity);
        notes.push(format!("rho={}: {:.5} in [{:.3}, {:.3}]", p.rho, p.relative_complexity, lo, hi));
    }
    Ok((ok, notes.join("; ")))
}

// ---------------------------------------------------------------- 5

fn prefix_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64usize);
        let d = rng.random_range(1..=4usize);
        let rows: Vec<VecD> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let mut tree = PrefixTree::for_len(n, d, NoiseSchedule::constant(NoiseScale::ZERO))?;
        let mut brute = linalg::zeros(d);
        for (i, r) in rows.iter().enumerate() {
            tree.append(r, &mut rng)?;
            linalg::add_assign(&mut brute, r);
            let got = tree.get_prefix_sum(i + 1)?;
            worst = worst.max(linalg::dist(&got, &brute));
        }
        for t in 1..=n {
            let expect = rows[..t].iter().fold(linalg::zeros(d), |a, r| linalg::add(&a, r));
            worst = worst.max(linalg::dist(&tree.get_prefix_sum(t)?, &expect));
        }
    }
    Ok((worst <= 1e-9, format!("max deviation {worst:.2e} over 1000 specs")))
}

// ---------------------------------------------------------------- 6

fn ball_point(d: usize, radius: f64, rng: &mut impl Rng) -> VecD {
    let g: VecD = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    linalg::scale(&g, r / linalg::norm(&g))
}

fn vrfw_sensitivity() -> Check {
    // H = D = G = 1: Huber link with clip 1, unit data ball, ball of radius ½
    let d = 3;
    let loss = GlmLoss::clipped_quadratic(1.0, 1.0)?;
    let body = ConvexBody::ball(d, 0.5)?;
    assert_eq!((loss.smoothness(), body.diameter(), loss.lipschitz()), (Some(1.0), 1.0, 1.0));
    let bound = VrFrankWolfe::new(loss, body.clone())?.sensitivity();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let point = |rng: &mut ChaCha8Rng| {
        let mut z = ball_point(d, 1.0, rng);
        if rng.random_bool(0.5) {
            z = linalg::scale(&z, 1.0 / linalg::norm(&z));
        }
        z.push(rng.random_range(-3.0..3.0));
        z
    };
    let mut sup = 0.0f64;
    for _ in 0..10_000 {
        let t = rng.random_range(1..=64usize);
        let w_prev = ball_point(d, 0.5, &mut rng);
        let v = body.lmo(&ball_point(d, 1.0, &mut rng));
        // w_t = (1 − 1/t)·w_{t−1} + v/t, and w_1 = w_0
        let mut w_t = linalg::scale(&w_prev, 1.0 - 1.0 / t as f64);
        linalg::axpy(&mut w_t, 1.0 / t as f64, &v);
        let mut history = vec![w_prev.clone(); t - 1];
        history.push(if t == 1 { w_prev } else { w_t });
        let (z, z2) = (point(&mut rng), point(&mut rng));
        sup = sup.max(linalg::dist(&vrfw_query(&loss, &history, &z), &vrfw_query(&loss, &history, &z2)));
    }
    Ok((sup <= bound + 1e-9, format!("sup {sup:.4} <= 2(HD+G) = {bound}")))
}

// ---------------------------------------------------------------- 7

fn risk_trends() -> Check {
    let mut ok = true;
    let mut notes = Vec::new();
    for problem in [Problem::VrfwSco, Problem::DaSco] {
        let mut cfg = ExperimentConfig::new(problem, 256, 5, 1.0);
        cfg.trials = 20;
        cfg.seed = 7;
        let points = risk_curve(&cfg, &[256, 1024, 4096], &[0.05, 1.0])?;
        let violations = trend_violations(&points, 0.05);
        ok &= violations.is_empty();
        let means: Vec<String> = points.iter().map(|p| format!("{:.4}", p.mean_heldout_risk)).collect();
        notes.push(format!("{problem:?} risks [{}] increases {}", means.join(" "), violations.len()));
    }
    Ok((ok, notes.join("; ")))
}

// ---------------------------------------------------------------- 8

fn jl_property() -> Check {
    let (d, k, beta, gamma, sketches) = (256, 64, 0.5, 0.05, 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = ball_point(d, 1.0, &mut rng);
    let v = ball_point(d, 1.0, &mut rng);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, a, b) in [("u,v", &u, &v), ("u,u", &u, &u)] {
        let target = linalg::dot(a, b);
        let tol = beta * linalg::norm(a) * linalg::norm(b);
        let mut good = 0;
        for s in 0..sketches {
            let sk = JlSketch::gaussian(k, d, 1000 + s)?;
            good += ((linalg::dot(&sk.apply(a)?, &sk.apply(b)?) - target).abs() <= tol) as usize;
        }
        let freq = good as f64 / sketches as f64;
        ok &= freq >= 1.0 - gamma;
        notes.push(format!("{name}: {freq:.3}"));
    }
    Ok((ok, format!("{} (need >= {})", notes.join(", "), 1.0 - gamma)))
}

// ---------------------------------------------------------------- 9

fn streams() -> Check {
    let mut cfg = ExperimentConfig::new(Problem::StreamWeak, 256, 5, 0.05);
    cfg.seed = 9;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows = unlearn_bench::data::synth_dataset(unlearn_bench::data::DatasetKind::Logistic, 456, 5, 1.0, 9)?.rows;
    let Learner::Prefix(alg) = build_learner(&cfg, &rows)? else { anyhow::bail!("stream learner is not prefix-sum") };
    let schedule = stream_schedule(&cfg, alg.as_ref())?;
    let mut st = StreamState::with_schedule(alg.as_ref(), rows[..256].to_vec(), cfg.rho, schedule, StreamMode::Weak, &mut rng)?;
    let mut insert_retrains = 0;
    for r in &rows[256..] {
        insert_retrains += st.step(alg.as_ref(), StreamRequest::Insert(r.clone()), &mut rng)?.1.retrained as usize;
    }

    let v = 200;
    cfg.deletions = v;
    let streams = 50;
    let costs: Vec<DeletionCost> = (0..streams).into_par_iter().map(|t| deletion_cost(&cfg, t)).collect::<anyhow::Result<_>>()?;
    assert!(costs.iter().all(|c| c.deletions == v));
    let mean = costs.iter().map(|c| c.retrains as f64).sum::<f64>() / streams as f64;
    let bound = 1.5 * cfg.rho * v as f64 * 512f64.log2();
    Ok((
        insert_retrains == 0 && mean <= bound,
        format!("insert-only retrains {insert_retrains}; mixed mean retrains {mean:.3} <= {bound:.1}"),
    ))
}

// ---------------------------------------------------------------- 10

fn linear_engine() -> Check {
    let cert = VerifyConfig { engine: EngineKind::Linear, trials: 20_000, alpha: 0.01, ..Default::default() };
    let good = verify_coupling(&cert)?;
    let bad = verify_coupling(&VerifyConfig { mutate: true, ..cert })?;

    let steps = [16usize, 64, 256];
    let trials = 20_000;
    let fractions: Vec<f64> = steps
        .iter()
        .map(|&t| {
            let mut cfg = ExperimentConfig::new(Problem::LinearFedavg, 16, 2, 1.0);
            cfg.steps = t;
            cfg.seed = 10;
            let costs: Vec<DeletionCost> = (0..trials).into_par_iter().map(|i| deletion_cost(&cfg, i)).collect::<anyhow::Result<_>>()?;
            Ok(costs.iter().filter(|c| c.retrains > 0).count() as f64 / trials as f64)
        })
        .collect::<anyhow::Result<_>>()?;
    // quadrupling T should double the retrain fraction
    let ratios: Vec<f64> = fractions.windows(2).map(|w| w[1] / w[0]).collect();
    let trend = ratios.iter().all(|r| (1.5..=2.5).contains(r));
    Ok((
        good.passed && !bad.passed && trend,
        format!(
            "certificate {} (inverted ratio {}); retrain fractions {:?} at T={:?}, ratios {:.3?} in [1.5, 2.5]",
            if good.passed { "passes" } else { "fails" },
            if bad.passed { "passes" } else { "fails" },
            fractions.iter().map(|f| (f * 1e4).round() / 1e4).collect::<Vec<_>>(),
            steps,
            ratios
        ),
    ))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "coupling marginals", limit: Some(Duration::from_secs(10)), run: coupling_marginals },
        Criterion { id: 2, name: "exact unlearning certificate", limit: minutes(2), run: unlearning_certificate },
        Criterion { id: 3, name: "retrain probability", limit: minutes(5), run: retrain_probability },
        Criterion { id: 4, name: "relative unlearning complexity", limit: None, run: relative_complexity },
        Criterion { id: 5, name: "prefix tree exactness", limit: Some(Duration::from_secs(5)), run: prefix_exactness },
        Criterion { id: 6, name: "vr-fw sensitivity", limit: None, run: vrfw_sensitivity },
        Criterion { id: 7, name: "risk trends", limit: minutes(10), run: risk_trends },
        Criterion { id: 8, name: "jl inner products", limit: None, run: jl_property },
        Criterion { id: 9, name: "streams", limit: None, run: streams },
        Criterion { id: 10, name: "linear query engine", limit: None, run: linear_engine },
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for c in criteria {
        if let Some(f) = &filter {
            if c.id.to_string() != *f && !c.name.contains(f.as_str()) {
                continue;
            }
        }
        let started = Instant::now();
        let result = (c.run)();
        let elapsed = started.elapsed();
        let in_time = c.limit.is_none_or(|l| elapsed <= l);
        let (passed, detail) = match result {
            Ok((p, d)) => (p && in_time, d),
            Err(e) => (false, format!("error: {e:#}")),
        };
        let limit = c.limit.map(|l| format!(" of {}s", l.as_secs())).unwrap_or_default();
        println!(
            "{} criterion {:>2} {}: {} [{:.1}s{}]",
            if passed { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            detail,
            elapsed.as_secs_f64(),
            limit
        );
        failed += !passed as usize;
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
