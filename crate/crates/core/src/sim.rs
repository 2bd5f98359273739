//! Trials, multi-n sweeps and scaling estimates.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::ScalingError;
use crate::geometry::{sample_configuration_with_band, ConfigSummary, TypicalityBand};
use crate::mobility::{walk_streams, NodePositions};
use crate::protocol::{
    run_fallback_slot, run_subslot_a, run_subslot_b, EventRecord, ProtocolCounters, ProtocolState, SchemeParams,
};
use crate::rng::{derive_seed, stream, Purpose};
use crate::stats::{Running, Z95};

/// Everything a trial needs besides `n`, the seed and the slot budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Default)]
pub struct TrialParams {
    pub scheme: SchemeParams,
    pub band: TypicalityBand,
}

/// Delays of one pair's post-warmup deliveries.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PairDelays {
    pub relayed: Vec<u64>,
    pub direct: Vec<u64>,
}

/// Relay-queue occupancy over the measurement window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QueueSummary {
    /// Longest any single queue got during the whole run.
    pub max_len: usize,
    /// Mean over queues of the time-average length.
    pub mean_time_avg: f64,
    /// Largest time-average length of any queue.
    pub max_time_avg: f64,
    /// Packets held at the end of the run.
    pub held_at_end: u64,
    /// Mean over queues of arrivals / potential departures in the window.
    pub mean_load: f64,
    /// Share of queues whose arrivals met or exceeded their potential
    /// departures in the window.
    pub saturated_fraction: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConservationReport {
    /// Slots at which `created == queued + delivered` was checked.
    pub checked_slots: u64,
    /// Full queue scans compared against the counters.
    pub audits: u64,
    pub violations: u64,
}

impl ConservationReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub n: usize,
    pub seed: u64,
    pub typical: bool,
    pub slots_run: u64,
    pub warmup: u64,
    /// Post-warmup deliveries per slot, by pair.
    pub per_pair_throughput: Vec<f64>,
    pub delivered: Vec<u64>,
    #[serde(skip)]
    pub delays: Vec<PairDelays>,
    pub queue_stats: QueueSummary,
    pub counters: ProtocolCounters,
    pub conservation: ConservationReport,
    pub configuration: ConfigSummary,
}

impl TrialResult {
    pub fn min_throughput(&self) -> f64 {
        self.per_pair_throughput.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mean over pairs of each pair's mean relayed delay (pairs without a
    /// relayed delivery are skipped). `None` when nothing was relayed.
    pub fn mean_relayed_delay(&self) -> Option<f64> {
        let means: Running = self
            .delays
            .iter()
            .filter(|d| !d.relayed.is_empty())
            .map(|d| d.relayed.iter().sum::<u64>() as f64 / d.relayed.len() as f64)
            .collect();
        (means.count() > 0).then(|| means.mean())
    }

    /// Mean delay over all post-warmup deliveries, relayed and direct.
    pub fn mean_delay_all(&self) -> Option<f64> {
        let (mut sum, mut count) = (0u64, 0u64);
        for d in &self.delays {
            sum += d.relayed.iter().sum::<u64>() + d.direct.iter().sum::<u64>();
            count += (d.relayed.len() + d.direct.len()) as u64;
        }
        (count > 0).then(|| sum as f64 / count as f64)
    }

    /// Share of post-warmup deliveries that took the single direct hop.
    pub fn direct_fraction(&self) -> f64 {
        let direct: usize = self.delays.iter().map(|d| d.direct.len()).sum();
        let total: usize = self.delays.iter().map(|d| d.direct.len() + d.relayed.len()).sum();
        if total == 0 {
            0.0
        } else {
            direct as f64 / total as f64
        }
    }

    /// Compact per-pair view for output.
    pub fn summary(&self) -> TrialSummary {
        TrialSummary {
            n: self.n,
            seed: self.seed,
            typical: self.typical,
            slots_run: self.slots_run,
            warmup: self.warmup,
            min_throughput: self.min_throughput(),
            min_tput_x_n: self.min_throughput() * self.n as f64,
            mean_relayed_delay: self.mean_relayed_delay(),
            mean_delay_all: self.mean_delay_all(),
            direct_fraction: self.direct_fraction(),
            pairs: self
                .delays
                .iter()
                .enumerate()
                .map(|(i, d)| PairSummary {
                    pair: i,
                    throughput: self.per_pair_throughput[i],
                    delivered: self.delivered[i],
                    relayed: d.relayed.len() as u64,
                    direct: d.direct.len() as u64,
                    mean_relayed_delay: mean_u64(&d.relayed),
                })
                .collect(),
            queue_stats: self.queue_stats,
            counters: self.counters,
            conservation: self.conservation,
        }
    }
}

fn mean_u64(xs: &[u64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<u64>() as f64 / xs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairSummary {
    pub pair: usize,
    pub throughput: f64,
    pub delivered: u64,
    pub relayed: u64,
    pub direct: u64,
    pub mean_relayed_delay: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialSummary {
    pub n: usize,
    pub seed: u64,
    pub typical: bool,
    pub slots_run: u64,
    pub warmup: u64,
    pub min_throughput: f64,
    pub min_tput_x_n: f64,
    pub mean_relayed_delay: Option<f64>,
    pub mean_delay_all: Option<f64>,
    pub direct_fraction: f64,
    pub pairs: Vec<PairSummary>,
    pub queue_stats: QueueSummary,
    pub counters: ProtocolCounters,
    pub conservation: ConservationReport,
}

/// Slots between full queue scans.
const AUDIT_INTERVAL: u64 = 4096;

/// Runs one trial. Deterministic in `(params, n, seed, slots, warmup)`.
pub fn run_trial(params: &TrialParams, n: usize, seed: u64, slots: u64, warmup: u64) -> TrialResult {
    run_trial_logged(params, n, seed, slots, warmup, None).expect("no log, no io")
}

/// [`run_trial`] that also writes every transmission attempt as a CSV row
/// (header first) to `log`.
pub fn run_trial_logged(
    params: &TrialParams,
    n: usize,
    seed: u64,
    slots: u64,
    warmup: u64,
    mut log: Option<&mut dyn Write>,
) -> std::io::Result<TrialResult> {
    assert!(slots > warmup, "slots ({slots}) must exceed warmup ({warmup})");
    let mut cfg_rng = stream(seed, 0, 0, Purpose::Configuration);
    let config = sample_configuration_with_band(n, params.scheme.delta, params.band, &mut cfg_rng)
        .unwrap_or_else(|e| panic!("{e}"));
    let npairs = config.sd_pairs().len();
    let mut state = ProtocolState::new(&config, log.is_some());
    let mut proto_rng = stream(seed, 0, 0, Purpose::Protocol);
    let mut walks = walk_streams(seed, n);
    let mut positions = NodePositions::init_streams(config.side(), &mut walks);

    if let Some(w) = log.as_deref_mut() {
        writeln!(w, "{}", EventRecord::CSV_HEADER)?;
    }

    let mut delays = vec![PairDelays::default(); npairs];
    let mut delivered = vec![0u64; npairs];
    let mut conservation = ConservationReport::default();
    let typical = config.typical();

    for t in 0..slots {
        if t == warmup {
            state.queues.reset_area(t);
        }
        if typical {
            if t > 0 {
                positions.step_streams(&mut walks);
            }
            state.slot = t;
            run_subslot_a(&mut state, &config, &positions, &params.scheme, &mut proto_rng);
            run_subslot_b(&mut state, &config, &positions, &params.scheme, &mut proto_rng);
        } else {
            run_fallback_slot(&mut state, &config, t);
        }

        for d in state.deliveries.drain(..) {
            if d.slot >= warmup {
                delivered[d.pair] += 1;
                if d.relayed {
                    delays[d.pair].relayed.push(d.delay);
                } else {
                    delays[d.pair].direct.push(d.delay);
                }
            }
        }
        if let (Some(w), Some(ev)) = (log.as_deref_mut(), state.events.as_mut()) {
            for e in ev.drain(..) {
                writeln!(w, "{}", e.csv_row())?;
            }
        }

        conservation.checked_slots += 1;
        if !state.conserved() {
            conservation.violations += 1;
        }
        if t % AUDIT_INTERVAL == 0 || t + 1 == slots {
            conservation.audits += 1;
            if state.queues.recount() != state.queues.total() {
                conservation.violations += 1;
            }
        }
    }

    let window = (slots - warmup) as f64;
    let averages = state.queues.time_averages(warmup, slots);
    let mut queue_stats = QueueSummary {
        max_len: state.queues.max_len(),
        mean_time_avg: if averages.is_empty() {
            0.0
        } else {
            averages.iter().sum::<f64>() / averages.len() as f64
        },
        max_time_avg: averages.iter().copied().fold(0.0, f64::max),
        held_at_end: state.queues.total(),
        mean_load: 0.0,
        saturated_fraction: 0.0,
    };
    let counts = state.queues.event_counts();
    if !counts.is_empty() {
        let loads: Running = counts.iter().map(|&(a, s)| a as f64 / s.max(1) as f64).collect();
        queue_stats.mean_load = loads.mean();
        queue_stats.saturated_fraction =
            counts.iter().filter(|&&(a, s)| a >= s).count() as f64 / counts.len() as f64;
    }
    Ok(TrialResult {
        n,
        seed,
        typical,
        slots_run: slots,
        warmup,
        per_pair_throughput: delivered.iter().map(|&d| params.scheme.w * d as f64 / window).collect(),
        delivered,
        delays,
        queue_stats,
        counters: state.counters,
        conservation,
        configuration: config.summary(seed),
    })
}

/// How many slots a trial at `n` runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SlotsRule {
    /// `max(floor, factor * n ln n)` slots, `warmup_frac` of them warmup.
    Scaled { floor: u64, factor: f64, warmup_frac: f64 },
    Fixed { slots: u64, warmup: u64 },
}

impl Default for SlotsRule {
    fn default() -> Self {
        SlotsRule::Scaled {
            floor: 200_000,
            factor: 50.0,
            warmup_frac: 0.2,
        }
    }
}

impl SlotsRule {
    /// `(slots, warmup)` for `n`.
    pub fn budget(&self, n: usize) -> (u64, u64) {
        match *self {
            SlotsRule::Scaled {
                floor,
                factor,
                warmup_frac,
            } => {
                let nf = n as f64;
                let slots = floor.max((factor * nf * nf.ln()).ceil() as u64);
                (slots, (warmup_frac * slots as f64).floor() as u64)
            }
            SlotsRule::Fixed { slots, warmup } => (slots, warmup),
        }
    }
}

/// Seed of trial `k` at size `n` in a sweep with master seed `master`.
pub fn trial_seed(master: u64, n: usize, k: usize) -> u64 {
    derive_seed(master, n as u64, k as u64, Purpose::Trial)
}

/// Mean and 95% normal half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    fn of(xs: impl IntoIterator<Item = f64>) -> Option<Interval> {
        let r: Running = xs.into_iter().collect();
        (r.count() > 0).then(|| Interval {
            mean: r.mean(),
            half_width: if r.count() > 1 { Z95 * r.std_error() } else { 0.0 },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub trials: usize,
    pub typical_trials: usize,
    pub slots: u64,
    pub warmup: u64,
    pub min_tput: Interval,
    pub min_tput_x_n: Interval,
    /// Typical trials only.
    pub mean_delay: Option<Interval>,
    pub delay_norm: Option<Interval>,
    /// All trials, atypical ones contributing unit delays.
    pub mixed_delay: Option<Interval>,
    pub direct_fraction: f64,
    pub conservation_ok: bool,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub const CSV_HEADER: &'static str = "n,trials,slots,min_tput_x_n,ci,mean_delay,delay_norm,ci";
}

/// Aggregates trials of one size into a row.
pub fn aggregate_row(n: usize, slots: u64, warmup: u64, results: &[TrialResult]) -> SweepRow {
    let nf = n as f64;
    let typical: Vec<&TrialResult> = results.iter().filter(|r| r.typical).collect();
    let delays: Vec<f64> = typical.iter().filter_map(|r| r.mean_relayed_delay()).collect();
    SweepRow {
        n,
        trials: results.len(),
        typical_trials: typical.len(),
        slots,
        warmup,
        min_tput: Interval::of(results.iter().map(|r| r.min_throughput())).expect("at least one trial"),
        min_tput_x_n: Interval::of(results.iter().map(|r| r.min_throughput() * nf)).expect("at least one trial"),
        mean_delay: Interval::of(delays.iter().copied()),
        delay_norm: Interval::of(delays.iter().map(|d| d / (nf * nf.ln()))),
        mixed_delay: Interval::of(results.iter().filter_map(|r| r.mean_delay_all())),
        direct_fraction: results.iter().map(|r| r.direct_fraction()).sum::<f64>() / results.len() as f64,
        conservation_ok: results.iter().all(|r| r.conservation.holds()),
        seeds: results.iter().map(|r| r.seed).collect(),
    }
}

/// Runs `trials` trials per size, in parallel, and aggregates them in
/// `(n, trial)` order.
pub fn sweep(params: &TrialParams, n_list: &[usize], trials: usize, rule: SlotsRule, master_seed: u64) -> SweepTable {
    assert!(trials > 0);
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let jobs: Vec<(usize, usize)> = ns.iter().flat_map(|&n| (0..trials).map(move |k| (n, k))).collect();
    let results: Vec<TrialResult> = jobs
        .par_iter()
        .map(|&(n, k)| {
            let (slots, warmup) = rule.budget(n);
            run_trial(params, n, trial_seed(master_seed, n, k), slots, warmup)
        })
        .collect();
    let rows = ns
        .iter()
        .zip(results.chunks(trials))
        .map(|(&n, chunk)| {
            let (slots, warmup) = rule.budget(n);
            aggregate_row(n, slots, warmup, chunk)
        })
        .collect();
    SweepTable { rows }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingEstimate {
    /// max/min of `min_tput_x_n` across rows.
    pub throughput_band_ratio: f64,
    /// max/min of raw `min_tput` across rows.
    pub raw_throughput_band_ratio: f64,
    /// max/min of `mean_delay / (n ln n)` across rows.
    pub delay_band_ratio: f64,
    /// Least-squares slope of `ln mean_delay` against `ln n`.
    pub fitted_exponent: f64,
}

fn band_ratio(xs: &[f64], name: &'static str) -> Result<f64, ScalingError> {
    if xs.iter().any(|&x| !(x > 0.0)) {
        return Err(ScalingError::NonPositive(name));
    }
    let max = xs.iter().copied().fold(f64::MIN, f64::max);
    let min = xs.iter().copied().fold(f64::MAX, f64::min);
    Ok(max / min)
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn estimate_scaling(table: &SweepTable) -> Result<ScalingEstimate, ScalingError> {
    let rows = &table.rows;
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.dedup();
    if ns.len() < 3 {
        return Err(ScalingError::TooFewRows(ns.len()));
    }
    let delay = |r: &SweepRow| r.mean_delay.map(|i| i.mean).unwrap_or(f64::NAN);
    let tput_n: Vec<f64> = rows.iter().map(|r| r.min_tput_x_n.mean).collect();
    let tput: Vec<f64> = rows.iter().map(|r| r.min_tput.mean).collect();
    let norm: Vec<f64> = rows.iter().map(|r| r.delay_norm.map(|i| i.mean).unwrap_or(f64::NAN)).collect();
    let delays: Vec<f64> = rows.iter().map(delay).collect();
    if delays.iter().any(|&d| !(d > 0.0)) {
        return Err(ScalingError::NonPositive("mean_delay"));
    }
    let lx: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ly: Vec<f64> = delays.iter().map(|d| d.ln()).collect();
    Ok(ScalingEstimate {
        throughput_band_ratio: band_ratio(&tput_n, "min_tput_x_n")?,
        raw_throughput_band_ratio: band_ratio(&tput, "min_tput")?,
        delay_band_ratio: band_ratio(&norm, "delay_norm")?,
        fitted_exponent: ls_slope(&lx, &ly),
    })
}
