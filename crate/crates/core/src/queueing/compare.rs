//! Simulated relay-queue bounds next to their analytic values: the
//! Bernoulli-served queue against Kingman, and the meeting-served queue
//! against the sampled-chain analysis.

use serde::Serialize;

use super::bounds::{kingman_bound, q4_analysis, MomentSource, MomentSummary, Q4Analysis};
use super::oracle::{ChainKind, TorusChainOracle};
use super::sim::{simulate_queue, Bernoulli, IntermeetingSampler, MeetingClock, QueueStats, Renewal, Thinned};
use crate::error::QueueError;
use crate::geometry::lattice_side;
use crate::rng::{stream, Purpose};

/// Exact inter-meeting moments `(E[Z], E[Z^2])` for `n` nodes.
pub fn intermeeting_moments(n: usize) -> Result<MomentSummary, QueueError> {
    let m = lattice_side(n).map_err(|e| QueueError::Moments(e.to_string()))?;
    let oracle = TorusChainOracle::new(m, ChainKind::NaturalProduct).map_err(|e| QueueError::Moments(e.to_string()))?;
    let s = oracle.summary().map_err(|e| QueueError::Moments(e.to_string()))?;
    MomentSummary::new(s.mean_return, s.second_moment, MomentSource::Oracle)
}

/// Arrivals every other meeting on average, service probability `2/(3n)`.
pub fn q3_moments(n: usize, z: &MomentSummary) -> Result<(MomentSummary, MomentSummary), QueueError> {
    Ok((z.thinned(0.5)?, MomentSummary::geometric(2.0 / (3.0 * n as f64))?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q3Report {
    pub n: usize,
    pub slots: u64,
    pub trial: u64,
    pub interarrival: MomentSummary,
    pub service: MomentSummary,
    pub kingman_bound: f64,
    pub mean_delay: f64,
    pub stats: QueueStats,
}

/// One run of the Bernoulli-served queue fed by thinned meetings.
pub fn run_q3(n: usize, slots: u64, seed: u64, trial: u64) -> Result<Q3Report, QueueError> {
    let z = intermeeting_moments(n)?;
    run_q3_with(n, &z, slots, seed, trial)
}

/// [`run_q3`] with precomputed inter-meeting moments.
pub fn run_q3_with(n: usize, z: &MomentSummary, slots: u64, seed: u64, trial: u64) -> Result<Q3Report, QueueError> {
    let m = lattice_side(n).map_err(|e| QueueError::Moments(e.to_string()))?;
    let (x, y) = q3_moments(n, z)?;
    let bound = kingman_bound(&x, &y)?;
    let meetings = Renewal::new(IntermeetingSampler::new(m, stream(seed, trial, 0, Purpose::Meeting)));
    let mut arrivals = Thinned::new(meetings, 0.5, stream(seed, trial, 1, Purpose::Queue));
    let mut service = Bernoulli::new(2.0 / (3.0 * n as f64), stream(seed, trial, 2, Purpose::Queue));
    let run = simulate_queue(&mut arrivals, &mut service, slots, false);
    Ok(Q3Report {
        n,
        slots,
        trial,
        interarrival: x,
        service: y,
        kingman_bound: bound,
        mean_delay: run.stats.mean_sojourn,
        stats: run.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q4Report {
    pub n: usize,
    pub slots: u64,
    pub analytic: Q4Analysis,
    pub stats: QueueStats,
    /// Fraction of potential departures finding the queue busy.
    pub p_q_positive: f64,
    pub e_a: f64,
    pub e_a2: f64,
    pub e_q: f64,
    /// Time-average queue length and `lambda W`.
    pub little_l: f64,
    pub little_rhs: f64,
}

/// One run of the meeting-served queue with Bernoulli `2/(3n)` arrivals.
pub fn run_q4(n: usize, slots: u64, seed: u64) -> Result<Q4Report, QueueError> {
    let z = intermeeting_moments(n)?;
    let analytic = q4_analysis(n, z.mean, z.second_moment)?;
    let m = lattice_side(n).map_err(|e| QueueError::Moments(e.to_string()))?;
    let mut arrivals = Bernoulli::new(2.0 / (3.0 * n as f64), stream(seed, 0, 3, Purpose::Queue));
    let mut service = MeetingClock::new(m, stream(seed, 0, 4, Purpose::Meeting));
    let s = simulate_queue(&mut arrivals, &mut service, slots, false).stats;
    Ok(Q4Report {
        n,
        slots,
        analytic,
        stats: s,
        p_q_positive: s.p_busy_at_departure,
        e_a: s.mean_arrivals_between,
        e_a2: s.second_arrivals_between,
        e_q: s.mean_sampled,
        little_l: s.mean_length,
        little_rhs: s.little_rhs(),
    })
}

/// One line of the `queues` comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub queue: &'static str,
    pub quantity: &'static str,
    pub simulated: f64,
    pub analytic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueuesReport {
    pub n: usize,
    pub q3: Q3Report,
    pub q4: Q4Report,
    pub rows: Vec<ComparisonRow>,
}

impl QueuesReport {
    pub const CSV_HEADER: &'static str = "queue,quantity,simulated,analytic";
}

/// Both queues at size `n`, `slots` slots each.
pub fn compare_queues(n: usize, slots: u64, seed: u64) -> Result<QueuesReport, QueueError> {
    let q3 = run_q3(n, slots, seed, 0)?;
    let q4 = run_q4(n, slots, seed)?;
    let a = &q4.analytic;
    let row = |queue, quantity, simulated, analytic| ComparisonRow {
        queue,
        quantity,
        simulated,
        analytic,
    };
    let rows = vec![
        row("Q3", "mean_delay_vs_kingman", q3.mean_delay, q3.kingman_bound),
        row("Q3", "arrival_rate", q3.stats.arrival_rate, 1.0 / q3.interarrival.mean),
        row("Q4", "E_A", q4.e_a, a.e_a),
        row("Q4", "E_A2", q4.e_a2, a.e_a2),
        row("Q4", "P_Q_positive", q4.p_q_positive, a.p_q_positive),
        row("Q4", "E_Q", q4.e_q, a.e_q),
        row("Q4", "time_avg_length_vs_upper", q4.little_l, a.e_qtilde_upper),
        row("Q4", "mean_delay_vs_upper", q4.stats.mean_sojourn, a.e_d4_upper),
        row("Q4", "little_L_vs_lambda_W", q4.little_l, q4.little_rhs),
    ];
    Ok(QueuesReport { n, q3, q4, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q3_moments_at_64() {
        let z = intermeeting_moments(64).unwrap();
        assert!((z.mean - 64.0).abs() < 1e-9);
        let (x, y) = q3_moments(64, &z).unwrap();
        assert!((x.mean - 128.0).abs() < 1e-9);
        assert!((x.second_moment - (2.0 * z.second_moment + 4.0 * 64.0 * 64.0)).abs() < 1e-6);
        assert!((y.mean - 96.0).abs() < 1e-9);
        let b = kingman_bound(&x, &y).unwrap();
        assert!(b > 500.0 && b < 700.0, "{b}");
    }

    #[test]
    fn short_q4_run_is_sane() {
        let r = run_q4(16, 200_000, 3).unwrap();
        assert!((r.e_a - 2.0 / 3.0).abs() < 0.1);
        assert!(r.stats.arrivals > 0);
    }
}
