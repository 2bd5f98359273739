//! Acceptance suite: one PASS/FAIL line per criterion, then supplementary
//! diagnostics that are reported but not scored. Exits non-zero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use relaynet::geometry::{sample_configuration, TypicalityBand};
use relaynet::mobility::{are_neighbors, sample_intermeeting, walk_streams, NodePositions};
use relaynet::protocol::SchemeParams;
use relaynet::queueing::compare::{intermeeting_moments, run_q3_with, run_q4};
use relaynet::queueing::{ChainKind, TorusChainOracle};
use relaynet::report::{sweep_csv, to_json, typical_frequencies};
use relaynet::rng::{stream, Purpose};
use relaynet::sim::{estimate_scaling, run_trial, run_trial_logged, sweep, SlotsRule, SweepTable, TrialParams};
use relaynet::stats::BatchMeans;

const SEED: u64 = 20_240_601;

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
}

struct Suite {
    scored: Vec<Outcome>,
    started: Instant,
}

impl Suite {
    fn record(&mut self, id: &'static str, title: &'static str, pass: bool, detail: String) {
        println!(
            "[{}] criterion {id}: {title} :: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            self.started.elapsed().as_secs_f64()
        );
        self.scored.push(Outcome { id, title, pass, detail });
    }
}

fn note(label: &str, pass: bool, detail: String) {
    println!("[{}] supplementary {label} :: {detail}", if pass { "pass" } else { "fail" });
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn oracle(m: usize) -> TorusChainOracle {
    TorusChainOracle::new(m, ChainKind::NaturalProduct).expect("valid side")
}

fn consecutive_variation(xs: &[f64]) -> Vec<f64> {
    xs.windows(2).map(|w| rel(w[1], w[0])).collect()
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn criterion_1(s: &mut Suite) {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for m in [2usize, 4, 8, 16, 32] {
        let o = oracle(m);
        let table = o.hitting_times(0).expect("solve");
        let first_step = o.first_step_return_time(&table);
        let n = (m * m) as f64;
        let err = rel(first_step, n).max(rel(o.mean_return_time(0).expect("kac"), n));
        worst = worst.max(err);
        parts.push(format!("m={m}: {first_step:.6}"));
    }
    s.record("1", "exact mean return time = m^2", worst <= 1e-6, format!("{}; worst rel err {worst:.2e}", parts.join(", ")));
}

fn criteria_2_3(s: &mut Suite) {
    let ms = [8usize, 16, 32];
    let mut second = Vec::new();
    let mut epi = Vec::new();
    for &m in &ms {
        let sum = oracle(m).summary().expect("oracle");
        second.push(sum.ratios.m2_over_n2logn);
        epi.push(sum.ratios.epi_over_nlogn);
    }
    let v2 = consecutive_variation(&second);
    let v3 = consecutive_variation(&epi);
    s.record(
        "2",
        "E[T^2]/(n^2 ln n) stable within 15%",
        v2.iter().all(|&v| v < 0.15),
        format!("ratios [{}] for m = 8, 16, 32; consecutive variation [{}]", fmt_list(&second), fmt_list(&v2)),
    );
    s.record(
        "3",
        "E_pi[T0]/(n ln n) stable within 15%",
        v3.iter().all(|&v| v < 0.15),
        format!("ratios [{}]; consecutive variation [{}]", fmt_list(&epi), fmt_list(&v3)),
    );
}

fn criterion_4(s: &mut Suite) {
    let sum = oracle(8).summary().expect("oracle");
    let mut rng = stream(SEED, 0, 0, Purpose::Meeting);
    let est = sample_intermeeting(8, 100_000, &mut rng);
    let z1 = (est.mean - sum.mean_return) / est.se_mean;
    let z2 = (est.second_moment - sum.second_moment) / est.se_second_moment;
    s.record(
        "4",
        "Monte Carlo inter-meeting moments within 3 s.e. of oracle (m=8)",
        z1.abs() <= 3.0 && z2.abs() <= 3.0,
        format!(
            "mean {:.3} vs {:.3} (z {z1:.2}), second moment {:.1} vs {:.1} (z {z2:.2})",
            est.mean, sum.mean_return, est.second_moment, sum.second_moment
        ),
    );
}

fn criterion_5(s: &mut Suite) {
    let n = 64;
    let slots = 1_000_000u64;
    let mut cfg_rng = stream(SEED, 0, 0, Purpose::Configuration);
    let cfg = sample_configuration(n, 0.5, &mut cfg_rng).expect("config");
    let mut walks = walk_streams(SEED, n);
    let mut pos = NodePositions::init_streams(cfg.side(), &mut walks);
    let mut bm = BatchMeans::new(slots, 200);
    for t in 0..slots {
        if t > 0 {
            pos.step_streams(&mut walks);
        }
        bm.push(if are_neighbors(&cfg, &pos, 0, 1) { 1.0 } else { 0.0 });
    }
    let est = bm.estimate();
    let z = (est.mean - 1.0 / n as f64) / est.std_error;
    s.record(
        "5",
        "P(two fixed nodes are neighbors) = 1/n within 3 s.e. (n=64, 1e6 slots)",
        z.abs() <= 3.0,
        format!("{:.6} vs {:.6}, batch-means s.e. {:.2e}, z {z:.2}", est.mean, 1.0 / n as f64, est.std_error),
    );
}

fn criterion_6(s: &mut Suite) {
    let r = typical_frequencies(400, 0.5, TypicalityBand::default(), 100, SEED).expect("configs");
    s.record(
        "6",
        "at least 95 of 100 configurations typical (n=400)",
        r.typical >= 95,
        format!("{} of {} typical; expected count per disk {:.1}", r.typical, r.trials, r.expected_count),
    );
}

fn row_detail(t: &SweepTable) -> String {
    t.rows
        .iter()
        .map(|r| {
            format!(
                "n={} min_tput={:.5} min_tput_x_n={:.3} delay={:.1} delay/(n ln n)={:.3}",
                r.n,
                r.min_tput.mean,
                r.min_tput_x_n.mean,
                r.mean_delay.map(|i| i.mean).unwrap_or(f64::NAN),
                r.delay_norm.map(|i| i.mean).unwrap_or(f64::NAN)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

fn criteria_7_8_9(s: &mut Suite) -> SweepTable {
    let params = TrialParams::default();
    let table = sweep(&params, &[64, 144, 256], 5, SlotsRule::default(), SEED);
    let scaling = estimate_scaling(&table).expect("three rows");
    println!("  sweep (defaults, 5 trials, default slot budget): {}", row_detail(&table));
    s.record(
        "7",
        "min-pair-throughput x n band ratio <= 2",
        scaling.throughput_band_ratio <= 2.0,
        format!("band ratio {:.3}", scaling.throughput_band_ratio),
    );
    s.record(
        "8",
        "delay/(n ln n) band ratio <= 2 and log-log exponent in [0.9, 1.3]",
        scaling.delay_band_ratio <= 2.0 && (0.9..=1.3).contains(&scaling.fitted_exponent),
        format!("band ratio {:.3}, exponent {:.3}", scaling.delay_band_ratio, scaling.fitted_exponent),
    );
    let h = oracle(8).stationary_mean_hitting(0).expect("oracle");
    let d64 = table.rows[0].mean_delay.map(|i| i.mean).unwrap_or(0.0);
    s.record(
        "9",
        "mean relayed delay at n=64 >= 0.5 x oracle average hitting time",
        d64 >= 0.5 * h,
        format!("{d64:.1} >= 0.5 x {h:.3} = {:.3}", 0.5 * h),
    );
    note(
        "per-pair min throughput band across n (no x n)",
        scaling.raw_throughput_band_ratio <= 2.0,
        format!("band ratio {:.3}", scaling.raw_throughput_band_ratio),
    );
    table
}

fn criterion_10(s: &mut Suite) {
    let r = run_q4(64, 10_000_000, SEED).expect("q4");
    let a = r.analytic;
    let e1 = rel(r.p_q_positive, 2.0 / 3.0);
    let e2 = rel(r.e_a, 2.0 / 3.0);
    let e3 = rel(r.e_q, a.e_q);
    s.record(
        "10",
        "Q4 laws: P(Q>0) within 5% of 2/3, E[A] within 2% of 2/3, E[Q] within 10% of (3/2)(E[A^2]-2/9)",
        e1 <= 0.05 && e2 <= 0.02 && e3 <= 0.10,
        format!(
            "P(Q>0) {:.4} ({:.2}%), E[A] {:.4} ({:.2}%), E[Q] {:.4} vs {:.4} ({:.2}%)",
            r.p_q_positive,
            100.0 * e1,
            r.e_a,
            100.0 * e2,
            r.e_q,
            a.e_q,
            100.0 * e3
        ),
    );
    let little = rel(r.little_l, r.little_rhs);
    note("Q4 Little's law L = lambda W within 5%", little <= 0.05, format!("L {:.4}, lambda W {:.4}", r.little_l, r.little_rhs));
}

fn criterion_11(s: &mut Suite) {
    let z = intermeeting_moments(64).expect("moments");
    let mut below = 0;
    let mut bound = 0.0;
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let r = run_q3_with(64, &z, 1_000_000, SEED, k).expect("q3");
        bound = r.kingman_bound;
        worst = worst.max(r.mean_delay);
        if r.mean_delay <= r.kingman_bound {
            below += 1;
        }
    }
    s.record(
        "11",
        "Q3 mean delay <= Kingman bound in at least 95 of 100 trials (n=64)",
        below >= 95,
        format!("{below} of 100 below bound {bound:.2}; largest trial mean {worst:.2}"),
    );
}

fn criterion_12(s: &mut Suite, main_sweep: &SweepTable) {
    let params = TrialParams::default();
    let mut conserved = main_sweep.rows.iter().all(|r| r.conservation_ok);
    let tiny = run_trial(&params, 4, SEED, 10_000, 1_000);
    conserved &= tiny.conservation.holds() && tiny.conservation.checked_slots == 10_000;

    let rule = SlotsRule::Fixed { slots: 20_000, warmup: 4_000 };
    let a = sweep(&params, &[16, 36, 64], 2, rule, SEED);
    let b = sweep(&params, &[16, 36, 64], 2, rule, SEED);
    conserved &= a.rows.iter().all(|r| r.conservation_ok);
    let same_sweep = sweep_csv(&a) == sweep_csv(&b) && to_json(&a) == to_json(&b);

    let mut log_a = Vec::new();
    let mut log_b = Vec::new();
    let ta = run_trial_logged(&params, 64, SEED, 20_000, 4_000, Some(&mut log_a)).expect("in-memory log");
    let tb = run_trial_logged(&params, 64, SEED, 20_000, 4_000, Some(&mut log_b)).expect("in-memory log");
    conserved &= ta.conservation.holds();
    let same_trial = to_json(&ta.summary()) == to_json(&tb.summary()) && log_a == log_b;

    s.record(
        "12",
        "packet conservation every slot; identical seeds give byte-identical outputs",
        conserved && same_sweep && same_trial,
        format!(
            "conservation {conserved}, sweep output identical {same_sweep}, trial output and event log identical {same_trial} ({} log bytes)",
            log_a.len()
        ),
    );
}

/// Why criteria 7 and 8 behave as they do at the defaults: queue loads, the
/// warmup check, and the same sweep at a lower source transmit probability.
fn diagnostics(main_sweep: &SweepTable) {
    let params = TrialParams::default();
    for r in &main_sweep.rows {
        let t = run_trial(&params, r.n, r.seeds[0], r.slots, r.warmup);
        note(
            "relay-queue load at defaults",
            t.queue_stats.saturated_fraction == 0.0,
            format!(
                "n={} mean arrivals/potential departures {:.3}, queues at or above 1: {:.1}%",
                r.n,
                t.queue_stats.mean_load,
                100.0 * t.queue_stats.saturated_fraction
            ),
        );
    }
    let a = run_trial(&params, 64, SEED, 200_000, 40_000).mean_relayed_delay().unwrap_or(f64::NAN);
    let b = run_trial(&params, 64, SEED, 200_000, 80_000).mean_relayed_delay().unwrap_or(f64::NAN);
    note(
        "delay change when warmup doubles at defaults (n=64) within 2%",
        rel(b, a) <= 0.02,
        format!("{a:.1} -> {b:.1} ({:.1}%)", 100.0 * rel(b, a)),
    );

    let low = TrialParams {
        scheme: SchemeParams {
            alpha: 0.1,
            ..SchemeParams::default()
        },
        ..TrialParams::default()
    };
    let table = sweep(&low, &[64, 144, 256], 5, SlotsRule::default(), SEED);
    let sc = estimate_scaling(&table).expect("three rows");
    println!("  sweep (alpha = 0.1): {}", row_detail(&table));
    note(
        "alpha = 0.1 delay/(n ln n) band ratio <= 2 and exponent in [0.9, 1.3]",
        sc.delay_band_ratio <= 2.0 && (0.9..=1.3).contains(&sc.fitted_exponent),
        format!("band ratio {:.3}, exponent {:.3}", sc.delay_band_ratio, sc.fitted_exponent),
    );
    note(
        "alpha = 0.1 min-pair-throughput x n band ratio <= 2",
        sc.throughput_band_ratio <= 2.0,
        format!("band ratio {:.3}", sc.throughput_band_ratio),
    );
}

fn main() -> ExitCode {
    // `cargo test -- --list` and filters come through as arguments
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return ExitCode::SUCCESS;
    }
    let mut s = Suite {
        scored: Vec::new(),
        started: Instant::now(),
    };
    println!("acceptance suite, master seed {SEED}");
    criterion_1(&mut s);
    criteria_2_3(&mut s);
    criterion_4(&mut s);
    criterion_5(&mut s);
    criterion_6(&mut s);
    let table = criteria_7_8_9(&mut s);
    criterion_10(&mut s);
    criterion_11(&mut s);
    criterion_12(&mut s, &table);
    diagnostics(&table);

    let failed: Vec<&Outcome> = s.scored.iter().filter(|o| !o.pass).collect();
    println!(
        "acceptance: {} of {} criteria passed ({:.1}s)",
        s.scored.len() - failed.len(),
        s.scored.len(),
        s.started.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for o in &failed {
            println!("  failed: criterion {} ({}): {}", o.id, o.title, o.detail);
        }
        ExitCode::FAILURE
    }
}
