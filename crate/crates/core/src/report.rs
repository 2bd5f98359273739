//! CSV and JSON rendering. Floats in CSV use nine significant digits in the
//! style of C's `%.9g`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{ConfigError, OracleError};
use crate::geometry::{sample_configuration_with_band, ConfigSummary, TypicalityBand};
use crate::mobility::{sample_intermeeting, IntermeetingEstimate};
use crate::queueing::{ChainKind, OracleSummary, QueuesReport, TorusChainOracle};
use crate::rng::{stream, Purpose};
use crate::sim::{trial_seed, SweepTable, TrialSummary};

/// `%.9g`.
pub fn fmt_sig(x: f64) -> String {
    fmt_g(x, 9)
}

/// `%.{p}g`: `p` significant digits, trailing zeros dropped, scientific
/// notation outside `1e-4 <= |x| < 10^p`.
pub fn fmt_g(x: f64, p: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = p.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (p as i32 - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn sweep_csv(table: &SweepTable) -> String {
    let mut out = String::new();
    writeln!(out, "{}", SweepTable::CSV_HEADER).unwrap();
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.n,
            r.trials,
            r.slots,
            fmt_sig(r.min_tput_x_n.mean),
            fmt_sig(r.min_tput_x_n.half_width),
            opt(r.mean_delay.map(|i| i.mean)),
            opt(r.delay_norm.map(|i| i.mean)),
            opt(r.delay_norm.map(|i| i.half_width)),
        )
        .unwrap();
    }
    out
}

pub const TRIAL_CSV_HEADER: &str = "pair,throughput,delivered,relayed,direct,mean_relayed_delay";

pub fn trial_csv(t: &TrialSummary) -> String {
    let mut out = String::new();
    writeln!(out, "{TRIAL_CSV_HEADER}").unwrap();
    for p in &t.pairs {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.pair,
            fmt_sig(p.throughput),
            p.delivered,
            p.relayed,
            p.direct,
            opt(p.mean_relayed_delay)
        )
        .unwrap();
    }
    out
}

pub const ORACLE_CSV_HEADER: &str = "m,n,kind,mean_return,E_pi_T0,second_moment,mean_over_n,Epi_over_nlogn,m2_over_n2logn";

pub fn oracle_csv(s: &OracleSummary) -> String {
    format!(
        "{ORACLE_CSV_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
        s.m,
        s.n,
        s.kind.name(),
        fmt_sig(s.mean_return),
        fmt_sig(s.e_pi_t0),
        fmt_sig(s.second_moment),
        fmt_sig(s.ratios.mean_over_n),
        fmt_sig(s.ratios.epi_over_nlogn),
        fmt_sig(s.ratios.m2_over_n2logn),
    )
}

/// Monte Carlo inter-meeting moments next to the exact values.
#[derive(Debug, Clone, Serialize)]
pub struct MomentsReport {
    pub estimate: IntermeetingEstimate,
    pub oracle_mean: f64,
    pub oracle_second_moment: f64,
    /// `(estimate - oracle) / s.e.` for each moment.
    pub z_mean: f64,
    pub z_second_moment: f64,
}

/// `samples` inter-meeting times on the side-`m` torus against the oracle.
pub fn moments_report(m: usize, samples: u64, seed: u64) -> Result<MomentsReport, OracleError> {
    let oracle = TorusChainOracle::new(m, ChainKind::NaturalProduct)?.summary()?;
    let mut rng = stream(seed, 0, 0, Purpose::Meeting);
    let estimate = sample_intermeeting(m, samples, &mut rng);
    Ok(MomentsReport {
        estimate,
        oracle_mean: oracle.mean_return,
        oracle_second_moment: oracle.second_moment,
        z_mean: (estimate.mean - oracle.mean_return) / estimate.se_mean,
        z_second_moment: (estimate.second_moment - oracle.second_moment) / estimate.se_second_moment,
    })
}

pub const MOMENTS_CSV_HEADER: &str =
    "m,samples,mean,se_mean,oracle_mean,z_mean,second_moment,se_second_moment,oracle_second_moment,z_second_moment";

pub fn moments_csv(r: &MomentsReport) -> String {
    let e = &r.estimate;
    format!(
        "{MOMENTS_CSV_HEADER}\n{},{},{},{},{},{},{},{},{},{}\n",
        e.m,
        e.samples,
        fmt_sig(e.mean),
        fmt_sig(e.se_mean),
        fmt_sig(r.oracle_mean),
        fmt_sig(r.z_mean),
        fmt_sig(e.second_moment),
        fmt_sig(e.se_second_moment),
        fmt_sig(r.oracle_second_moment),
        fmt_sig(r.z_second_moment),
    )
}

/// Typicality over seeded configurations.
#[derive(Debug, Clone, Serialize)]
pub struct TypicalReport {
    pub n: usize,
    pub delta: f64,
    pub band_low: f64,
    pub band_high: f64,
    pub trials: usize,
    pub typical: usize,
    pub typical_fraction: f64,
    pub expected_count: f64,
    pub configurations: Vec<ConfigSummary>,
}

/// Samples `trials` configurations, configuration `k` from the seed a sweep
/// would give trial `k`, and counts the typical ones.
pub fn typical_frequencies(
    n: usize,
    delta: f64,
    band: TypicalityBand,
    trials: usize,
    master_seed: u64,
) -> Result<TypicalReport, ConfigError> {
    let mut configurations = Vec::with_capacity(trials);
    let mut expected_count = 0.0;
    for k in 0..trials {
        let seed = trial_seed(master_seed, n, k);
        let mut rng = stream(seed, 0, 0, Purpose::Configuration);
        let cfg = sample_configuration_with_band(n, delta, band, &mut rng)?;
        expected_count = cfg.typicality().expected;
        configurations.push(cfg.summary(seed));
    }
    let typical = configurations.iter().filter(|c| c.typical).count();
    Ok(TypicalReport {
        n,
        delta,
        band_low: band.low,
        band_high: band.high,
        trials,
        typical,
        typical_fraction: typical as f64 / trials.max(1) as f64,
        expected_count,
        configurations,
    })
}

pub const TYPICAL_CSV_HEADER: &str = "n,trials,typical,typical_fraction,expected_count,lowest_count,highest_count";

/// One summary row; per-configuration detail is in the JSON form.
pub fn typical_csv(r: &TypicalReport) -> String {
    let lowest = r.configurations.iter().map(|c| c.counts[0]).fold(f64::INFINITY, f64::min);
    let highest = r.configurations.iter().map(|c| c.counts[1]).fold(f64::NEG_INFINITY, f64::max);
    format!(
        "{TYPICAL_CSV_HEADER}\n{},{},{},{},{},{},{}\n",
        r.n,
        r.trials,
        r.typical,
        fmt_sig(r.typical_fraction),
        fmt_sig(r.expected_count),
        fmt_sig(lowest),
        fmt_sig(highest)
    )
}

pub fn queues_csv(r: &QueuesReport) -> String {
    let mut out = String::new();
    writeln!(out, "{}", QueuesReport::CSV_HEADER).unwrap();
    for row in &r.rows {
        writeln!(out, "{},{},{},{}", row.queue, row.quantity, fmt_sig(row.simulated), fmt_sig(row.analytic)).unwrap();
    }
    out
}
