//! Moment bookkeeping and the analytic queue bounds for the relay queue
//! decomposition: Kingman for the Bernoulli-served queue, and the
//! sampled-chain recursion plus Little's law for the meeting-served queue.

use serde::Serialize;

use crate::error::QueueError;

/// Where a pair of moments came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MomentSource {
    Oracle,
    MonteCarlo,
    Analytic,
}

/// First two moments of a positive random time, in slots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSummary {
    pub mean: f64,
    pub second_moment: f64,
    pub source: MomentSource,
}

impl MomentSummary {
    pub fn new(mean: f64, second_moment: f64, source: MomentSource) -> Result<Self, QueueError> {
        if !(mean > 0.0 && mean.is_finite() && second_moment.is_finite()) {
            return Err(QueueError::Moments(format!("mean {mean}, second moment {second_moment}")));
        }
        if second_moment < mean * mean * (1.0 - 1e-12) {
            return Err(QueueError::Moments(format!(
                "second moment {second_moment} below squared mean {}",
                mean * mean
            )));
        }
        Ok(MomentSummary {
            mean,
            second_moment,
            source,
        })
    }

    pub fn variance(&self) -> f64 {
        (self.second_moment - self.mean * self.mean).max(0.0)
    }

    /// Geometric number of slots on `{1, 2, ...}` with per-slot success `p`.
    pub fn geometric(p: f64) -> Result<Self, QueueError> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(QueueError::Moments(format!("geometric parameter {p}")));
        }
        MomentSummary::new(1.0 / p, (2.0 - p) / (p * p), MomentSource::Analytic)
    }

    /// A renewal time built by keeping each event of `self` with probability
    /// `keep`: a geometric sum of i.i.d. copies.
    pub fn thinned(&self, keep: f64) -> Result<Self, QueueError> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(QueueError::Moments(format!("keep probability {keep}")));
        }
        let g = MomentSummary::geometric(keep)?;
        let mean = g.mean * self.mean;
        let second = g.mean * self.variance() + g.second_moment * self.mean * self.mean;
        MomentSummary::new(mean, second, self.source)
    }
}

/// Upper bound on the mean sojourn (waiting plus service) of a GI/GI/1 FCFS
/// queue: Kingman's waiting bound `lambda (Var X + Var Y) / (2 (1 - rho))`
/// plus `E[Y]`.
pub fn kingman_bound(interarrival: &MomentSummary, service: &MomentSummary) -> Result<f64, QueueError> {
    let rho = service.mean / interarrival.mean;
    if rho >= 1.0 {
        return Err(QueueError::Unstable { rho });
    }
    let lambda = 1.0 / interarrival.mean;
    Ok(lambda * (interarrival.variance() + service.variance()) / (2.0 * (1.0 - rho)) + service.mean)
}

/// Stationary quantities of the meeting-served queue with Bernoulli
/// `2 / (3n)` arrivals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Q4Analysis {
    pub n: usize,
    /// Per-slot arrival probability.
    pub arrival_rate: f64,
    #[serde(rename = "E_A")]
    pub e_a: f64,
    #[serde(rename = "E_A2")]
    pub e_a2: f64,
    #[serde(rename = "P_Q_positive")]
    pub p_q_positive: f64,
    #[serde(rename = "E_Q")]
    pub e_q: f64,
    /// Upper bound on the time-average queue length.
    #[serde(rename = "E_Qtilde_upper")]
    pub e_qtilde_upper: f64,
    /// Little's law applied to `e_qtilde_upper`.
    #[serde(rename = "E_D4_upper")]
    pub e_d4_upper: f64,
}

/// Evaluates the sampled-chain recursion `Q' = Q - 1{Q > 0} + A` in
/// stationarity, with `A ~ Binomial(Z, 2/(3n))` and `Z` the inter-service
/// time with moments `ez`, `ez2`.
pub fn q4_analysis(n: usize, ez: f64, ez2: f64) -> Result<Q4Analysis, QueueError> {
    if n == 0 || !(ez > 0.0) || ez2 < ez * ez * (1.0 - 1e-12) {
        return Err(QueueError::Moments(format!("n {n}, E[Z] {ez}, E[Z^2] {ez2}")));
    }
    let p = 2.0 / (3.0 * n as f64);
    let e_a = p * ez;
    if e_a >= 1.0 {
        return Err(QueueError::Unstable { rho: e_a });
    }
    let e_a2 = p * ez + p * p * (ez2 - ez);
    let p_q_positive = e_a;
    // squaring the recursion: 2 (1 - E[A]) E[Q] = P(Q>0) + E[A^2] - 2 E[A] P(Q>0)
    let e_q = (p_q_positive + e_a2 - 2.0 * e_a * p_q_positive) / (2.0 * (1.0 - e_a));
    let e_qtilde_upper = (e_q * ez + p * ez2) / ez;
    Ok(Q4Analysis {
        n,
        arrival_rate: p,
        e_a,
        e_a2,
        p_q_positive,
        e_q,
        e_qtilde_upper,
        e_d4_upper: e_qtilde_upper / p,
    })
}
