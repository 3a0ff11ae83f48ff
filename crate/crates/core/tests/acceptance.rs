//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line
//! and then asserts.
//!
//! Run with `cargo test -p lda-handover --test acceptance -- --nocapture`
//! to see the lines.

mod common;

use std::path::Path;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use lda_handover::benchmarks::{oracle_dp, OracleBudget};
use lda_handover::harness::{
    emit_metrics, gamma_sweep, run_experiment, Algorithm, ExperimentConfig, ExperimentReport,
    OracleStatus, OutputFormat, RunConfig, SeedSpec, SweepReport,
};
use lda_handover::lda::{derive_params, init_weights, quantize};
use lda_handover::net_model::{g_gradient, g_value, Association, DelayModel, ScenarioTrace};
use lda_handover::scenarios::{
    build_scenario, DelayKind, DelaySpec, ScenarioConfig, ScenarioKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] {id:>2} {name}: {detail}");
}

fn elapsed_ok(start: Instant, limit: Duration) -> (bool, String) {
    let e = start.elapsed();
    (e < limit, format!("{:.1}s (limit {}s)", e.as_secs_f64(), limit.as_secs()))
}

fn random_trace_and_delay(rng: &mut ChaCha8Rng) -> (ScenarioTrace, DelayModel) {
    let ues = rng.random_range(1..=3);
    let bss = rng.random_range(1..=2);
    let horizon = rng.random_range(1..=5);
    let cfg = ScenarioConfig {
        kind: ScenarioKind::Volatile,
        ues,
        bss,
        horizon,
        seed: rng.random(),
        gamma: rng.random_range(0.0..30.0),
        volatile_period: rng.random_range(1..=3),
        ..Default::default()
    };
    let sc = build_scenario(&cfg, Path::new(".")).unwrap();
    (sc.trace, sc.delay)
}

#[test]
fn a01_oracle_matches_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut mismatches = 0;
    for _ in 0..50 {
        let (trace, delay) = random_trace_and_delay(&mut rng);
        let dp = oracle_dp(&trace, &delay, &OracleBudget::default()).unwrap();
        let (_, best) = common::enumerate_best(&trace, &delay);
        if dp.choices != best {
            mismatches += 1;
        }
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(10));
    let pass = mismatches == 0 && fast;
    report(1, "oracle equals exhaustive enumeration", pass, format!("{mismatches}/50 mismatched paths, {time}"));
    assert!(pass);
}

/// `g` on raw row-major values, independent of the library.
fn g_raw(log_cap: &[f64], x: &[f64], bss: usize) -> f64 {
    let mut loads = vec![0.0; bss];
    let mut lin = 0.0;
    for (k, (&c, &v)) in log_cap.iter().zip(x).enumerate() {
        lin += c * v;
        loads[k % bss] += v;
    }
    lin - loads.iter().map(|&y: &f64| if y > 0.0 { y * y.log10() } else { 0.0 }).sum::<f64>()
}

#[test]
fn a02_gradient_matches_finite_differences() {
    let start = Instant::now();
    let (ues, bss) = (10, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let log_cap: Vec<f64> = (0..ues * bss)
            .map(|_| common::log_cap(rng.random_range(5e6..20e6), rng.random_range(-10.0..40.0)))
            .collect();
        let mut values = Vec::with_capacity(ues * bss);
        for _ in 0..ues {
            let raw: Vec<f64> = (0..bss).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|v| v / s));
        }
        let x = Association::from_values(ues, bss, values.clone()).unwrap();
        let cap = lda_handover::net_model::SlotCapacity::from_log_capacity(ues, bss, log_cap.clone());
        assert!((g_value(&cap, &x) - g_raw(&log_cap, &values, bss)).abs() < 1e-9);
        let grad = g_gradient(&cap, &x);
        let h = 1e-5;
        let mut diff_sq = 0.0;
        let mut norm_sq = 0.0;
        for k in 0..ues * bss {
            let mut up = values.clone();
            let mut down = values.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (g_raw(&log_cap, &up, bss) - g_raw(&log_cap, &down, bss)) / (2.0 * h);
            diff_sq += (fd - grad[k]).powi(2);
            norm_sq += grad[k].powi(2);
        }
        worst = worst.max((diff_sq / norm_sq).sqrt());
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(5));
    let pass = worst <= 1e-6 && fast;
    report(2, "gradient vs central differences", pass, format!("worst rel err {worst:.2e}, {time}"));
    assert!(pass);
}

#[test]
fn a03_quantizer_is_unbiased() {
    let start = Instant::now();
    let (ues, bss, draws) = (50, 5, 100_000usize);
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut violations = 0usize;
    let mut checked = 0usize;
    let mut worst_z = 0.0f64;
    for _ in 0..20 {
        let mut values = Vec::with_capacity(ues * bss);
        for _ in 0..ues {
            let raw: Vec<f64> = (0..bss).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|v| v / s));
        }
        let xm = Association::from_values(ues, bss, values).unwrap();
        let mut counts = vec![0u32; ues * bss];
        for _ in 0..draws {
            let x = quantize(&xm, &mut rng);
            for (i, j) in x.choices().unwrap().into_iter().enumerate() {
                counts[i * bss + j] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate() {
            let p = xm.values()[k];
            let mean = c as f64 / draws as f64;
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            checked += 1;
            if (mean - p).abs() > 3.0 * sd {
                violations += 1;
            }
            if sd > 0.0 {
                worst_z = worst_z.max((mean - p).abs() / sd);
            }
        }
    }
    let (fast, time) = elapsed_ok(start, Duration::from_secs(30));
    let pass = violations == 0 && fast;
    report(
        3,
        "quantizer marginals within 3 sigma",
        pass,
        format!("{violations}/{checked} entries outside 3 sigma (max |z| = {worst_z:.2}), {time}"),
    );
    assert!(pass);
}

#[test]
fn a04_hyperparameters() {
    let p = derive_params(100, 10, 5000, 1.0, 20.0).unwrap();
    // Recompute from the definitions.
    let (i, j, t) = (100.0f64, 10.0f64, 5000.0f64);
    let d = (2.0 * i).sqrt();
    let g = (i * j).sqrt() * (j.log10() + 1.0 / 10f64.ln());
    let (d_a, g_a) = (d, g);
    let k = ((1.0 + 2.0 * t).sqrt().log2()).ceil() as usize + 1;
    let nu = (2.0 * g * d + d_a).powi(2) * (d_a + 0.125);
    let beta = 1.0 / (t * nu).sqrt();
    let theta1 = (d_a * d_a / (t * (g * g + 2.0 * g_a))).sqrt();
    let mut ok = p.experts == 8 && k == 8;
    ok &= (p.beta - beta).abs() <= 1e-9 && (p.nu - nu).abs() <= 1e-9 * nu;
    for (kk, th) in p.thetas.iter().enumerate() {
        ok &= (th - theta1 * 2f64.powi(kk as i32)).abs() <= 1e-9;
    }
    ok &= p.thetas.windows(2).all(|w| (w[1] - 2.0 * w[0]).abs() <= 1e-12 && w[1] > w[0]);
    let w = init_weights(p.experts);
    ok &= (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
    report(
        4,
        "step sizes and meta step",
        ok,
        format!("K={}, beta={:.6e}, theta_1={:.6e}", p.experts, p.beta, p.thetas[0]),
    );
    assert!(ok);
}

fn reduced(kind: ScenarioKind, algorithms: Vec<Algorithm>) -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig {
            kind,
            ues: 6,
            bss: 3,
            horizon: 5000,
            seed: 17,
            gamma: 20.0,
            ..Default::default()
        },
        run: RunConfig {
            algorithms,
            seeds: SeedSpec::Count(20),
            ..Default::default()
        },
    }
}

struct Timed<T> {
    value: T,
    elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> Timed<T> {
    let start = Instant::now();
    let value = f();
    Timed {
        value,
        elapsed: start.elapsed(),
    }
}

fn static_report() -> &'static Timed<ExperimentReport> {
    static CELL: OnceLock<Timed<ExperimentReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = reduced(
            ScenarioKind::Static,
            vec![Algorithm::Lda, Algorithm::MaxSinr, Algorithm::Oracle],
        );
        timed(|| run_experiment(&cfg, Path::new(".")).unwrap())
    })
}

fn volatile_report() -> &'static Timed<ExperimentReport> {
    static CELL: OnceLock<Timed<ExperimentReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = reduced(ScenarioKind::Volatile, vec![Algorithm::Lda, Algorithm::MaxSinr]);
        timed(|| run_experiment(&cfg, Path::new(".")).unwrap())
    })
}

fn mobility_config() -> ExperimentConfig {
    ExperimentConfig {
        scenario: ScenarioConfig {
            kind: ScenarioKind::Mobility,
            ues: 100,
            bss: 25,
            horizon: 10_000,
            seed: 29,
            gamma: 20.0,
            delay: DelaySpec {
                model: DelayKind::MeasuredTable,
                ..Default::default()
            },
            ..Default::default()
        },
        run: RunConfig {
            algorithms: vec![Algorithm::Lda, Algorithm::Lda2, Algorithm::MaxSinr],
            seeds: SeedSpec::Count(10),
            ..Default::default()
        },
    }
}

/// Gamma 5 and 20 on the mobility scenario; the gamma-20 entry doubles as
/// the HO-cost comparison.
fn mobility_sweep() -> &'static Timed<SweepReport> {
    static CELL: OnceLock<Timed<SweepReport>> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = mobility_config();
        timed(|| gamma_sweep(&cfg, &[5.0, 20.0], Path::new(".")).unwrap())
    })
}

/// Seed-averaged series of `field` for one algorithm.
fn seed_mean(rep: &ExperimentReport, alg: Algorithm, field: impl Fn(&lda_handover::RunMetrics) -> &[f64]) -> Vec<f64> {
    let runs: Vec<_> = rep.runs_of(alg).collect();
    let n = runs.len() as f64;
    let len = field(runs[0]).len();
    (0..len)
        .map(|t| runs.iter().map(|r| field(r)[t]).sum::<f64>() / n)
        .collect()
}

#[test]
fn a05_static_regret_diminishes() {
    let rep = static_report();
    let lda = seed_mean(&rep.value, Algorithm::Lda, |r| r.regret.as_deref().unwrap());
    let max_sinr = seed_mean(&rep.value, Algorithm::MaxSinr, |r| r.regret.as_deref().unwrap());
    let t_end = lda.len();
    let (at_100, at_end) = (lda[99], lda[t_end - 1]);
    let ms_end = max_sinr[t_end - 1];
    let tail = &max_sinr[t_end - 2500..];
    let tail_mean = tail.iter().sum::<f64>() / tail.len() as f64;
    let tail_dev = tail.iter().map(|r| (r - tail_mean).abs()).fold(0.0, f64::max) / tail_mean.abs();

    let halves = at_end < 0.5 * at_100;
    let beats = at_end < ms_end;
    let flat = tail_dev < 0.2;
    let fast = rep.elapsed < Duration::from_secs(300);
    let pass = halves && beats && flat && fast;
    report(
        5,
        "static regret diminishes below Max SINR",
        pass,
        format!(
            "LDA avg regret t=100 {at_100:.4}, t=T {at_end:.4}; Max SINR t=T {ms_end:.4}, \
             tail deviation {:.1}%; {:.1}s",
            100.0 * tail_dev,
            rep.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn a06_volatile_crossover() {
    let rep = volatile_report();
    let lda = seed_mean(&rep.value, Algorithm::Lda, |r| &r.cum_f);
    let ms = seed_mean(&rep.value, Algorithm::MaxSinr, |r| &r.cum_f);
    let horizon = lda.len();
    let checkpoints: Vec<usize> = (1..=horizon / 50).map(|k| k * 50).collect();
    // Last checkpoint where LDA is not ahead; the crossover is the next one.
    let last_behind = checkpoints
        .iter()
        .rev()
        .find(|&&t| lda[t - 1] / t as f64 <= ms[t - 1] / t as f64)
        .copied();
    let crossover = match last_behind {
        None => Some(checkpoints[0]),
        Some(t) if t == horizon => None,
        Some(t) => Some(t + 50),
    };
    let fast = rep.elapsed < Duration::from_secs(300);
    let pass = crossover.is_some_and(|t0| t0 < horizon / 2) && fast;
    report(
        6,
        "volatile crossover before T/2",
        pass,
        format!(
            "crossover at {:?}, final avg f LDA {:.4} vs Max SINR {:.4}; {:.1}s",
            crossover,
            lda[horizon - 1] / horizon as f64,
            ms[horizon - 1] / horizon as f64,
            rep.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn a07_discretization_error() {
    let stat = static_report().value.summary(Algorithm::Lda).unwrap().discretization_error.unwrap();
    let vol = volatile_report().value.summary(Algorithm::Lda).unwrap().discretization_error.unwrap();
    let pass = stat.abs() <= 0.03 && vol.abs() <= 0.03;
    report(
        7,
        "rounding loss within 3%",
        pass,
        format!("static {:.2}%, volatile {:.2}%", 100.0 * stat, 100.0 * vol),
    );
    assert!(pass);
}

#[test]
fn a08_mobility_ho_cost_separation() {
    let sweep = mobility_sweep();
    let rep = &sweep.value.experiments[1];
    assert_eq!(rep.scenario.gamma, 20.0);
    let lda = rep.summary(Algorithm::Lda).unwrap();
    let lda2 = rep.summary(Algorithm::Lda2).unwrap();
    let ms = rep.summary(Algorithm::MaxSinr).unwrap();
    let ratio = lda2.mean_total_ho_cost / lda.mean_total_ho_cost;
    let g_share = lda.mean_total_g / ms.mean_total_g;
    let fast = sweep.elapsed < Duration::from_secs(900);
    let pass = ratio >= 5.0 && g_share >= 0.9 && fast;
    report(
        8,
        "2-norm LDA pays more handover cost",
        pass,
        format!(
            "HO cost LDA-2norm/LDA = {ratio:.2}, LDA g / Max SINR g = {:.1}%, \
             Max SINR HO cost/LDA = {:.2}; {:.1}s for both gammas",
            100.0 * g_share,
            ms.mean_total_ho_cost / lda.mean_total_ho_cost,
            sweep.elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn a09_gamma_reduces_switching() {
    let sweep = &mobility_sweep().value;
    let (low, high) = (&sweep.experiments[0], &sweep.experiments[1]);
    assert_eq!((low.scenario.gamma, high.scenario.gamma), (5.0, 20.0));
    let ues = low.scenario.ues as f64;
    let pairs: Vec<(f64, f64)> = low
        .runs_of(Algorithm::Lda)
        .zip(high.runs_of(Algorithm::Lda))
        .map(|(a, b)| {
            assert_eq!(a.seed, b.seed);
            (a.total_switches as f64 / ues, b.total_switches as f64 / ues)
        })
        .collect();
    let n = pairs.len() as f64;
    let mean_low = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_high = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let pass = mean_high <= mean_low;
    report(
        9,
        "higher gamma, fewer switches",
        pass,
        format!("switches per UE: gamma=5 {mean_low:.2}, gamma=20 {mean_high:.2}"),
    );
    assert!(pass);
}

#[test]
fn a10_regret_within_bound() {
    let rep = &static_report().value;
    let runs: Vec<_> = rep.runs_of(Algorithm::Lda).collect();
    let horizon = rep.scenario.horizon as f64;
    let mean_regret = runs
        .iter()
        .map(|r| r.regret.as_ref().unwrap().last().unwrap() * horizon)
        .sum::<f64>()
        / runs.len() as f64;
    let g_f = runs.iter().map(|r| r.measured_g_f.unwrap()).fold(0.0, f64::max);
    let OracleStatus::Solved { path_length, .. } = rep.oracle else {
        panic!("oracle did not run");
    };
    let params = derive_params(6, 3, 5000, rep.scenario.a_max, rep.scenario.gamma).unwrap();
    let bound = lda_handover::lda::regret_bound(&params, g_f, path_length);
    let pass = mean_regret <= bound.total;
    report(
        10,
        "measured regret under the theoretical bound",
        pass,
        format!(
            "E[R_T] = {mean_regret:.1}, bound = {:.1} (G_f = {g_f:.2}, P_T = {path_length:.2})",
            bound.total
        ),
    );
    assert!(pass);
}

#[test]
fn a11_expert_movement_bound() {
    let mut reports: Vec<&ExperimentReport> = vec![&static_report().value, &volatile_report().value];
    reports.extend(mobility_sweep().value.experiments.iter());
    let mut violations = 0;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for rep in reports {
        for r in rep.runs.iter().filter(|r| r.algorithm.is_lda()) {
            let moved = r.expert_movement.as_ref().unwrap();
            let bound = r.expert_movement_bound.as_ref().unwrap();
            for (m, b) in moved.iter().zip(bound) {
                checked += 1;
                worst = worst.max(m / b);
                if m > b {
                    violations += 1;
                }
            }
        }
    }
    let pass = violations == 0;
    report(
        11,
        "expert movement within theta_k T G_A",
        pass,
        format!("{violations}/{checked} experts over bound, max movement/bound = {worst:.3}"),
    );
    assert!(pass);
}

#[test]
fn a12_byte_identical_reruns() {
    let cfg = reduced(
        ScenarioKind::Static,
        vec![Algorithm::Lda, Algorithm::MaxSinr, Algorithm::Oracle],
    );
    let dir = tempfile::tempdir().unwrap();
    let first = &static_report().value;
    let second = run_experiment(&cfg, Path::new(".")).unwrap();
    let a = emit_metrics(first, &dir.path().join("a"), OutputFormat::Csv).unwrap();
    let b = emit_metrics(&second, &dir.path().join("b"), OutputFormat::Csv).unwrap();
    let identical = a
        .iter()
        .zip(&b)
        .all(|(p, q)| std::fs::read(p).unwrap() == std::fs::read(q).unwrap());
    report(
        12,
        "reruns are byte-identical",
        identical,
        format!("{} files compared", a.len()),
    );
    assert!(identical);
}
