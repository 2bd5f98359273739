//! Exact hitting and return times of walks on the `m x m` discrete torus.
//!
//! Both supported chains are symmetric and doubly stochastic, so the
//! stationary law is uniform and every state looks the same. Hitting times
//! solve `h(target) = 0`, `h(x) = 1 + sum_y P(x, y) h(y)`; the restricted
//! system `I - P` is symmetric positive definite, solved densely up to
//! `m = 32` and by conjugate gradients beyond.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::OracleError;

/// Largest side solved with a dense factorisation.
pub const DENSE_MAX_SIDE: usize = 32;
/// Maximum absolute residual accepted from a linear solve.
pub const RESIDUAL_TOL: f64 = 1e-9;
/// Relative agreement required between Kac's formula and the first-step route.
pub const KAC_REL_TOL: f64 = 1e-6;

/// Which walk the joint position performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainKind {
    /// Product of two independent natural walks: 9 moves, 1/9 each.
    NaturalProduct,
    /// Simple walk on the 2-D torus: 4 moves, 1/4 each.
    Simple2d,
}

impl ChainKind {
    pub fn name(self) -> &'static str {
        match self {
            ChainKind::NaturalProduct => "natural-product",
            ChainKind::Simple2d => "simple-2d",
        }
    }

    fn moves(self) -> &'static [(i64, i64)] {
        const NATURAL: [(i64, i64); 9] = [
            (-1, -1),
            (-1, 0),
            (-1, 1),
            (0, -1),
            (0, 0),
            (0, 1),
            (1, -1),
            (1, 0),
            (1, 1),
        ];
        const SIMPLE: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
        match self {
            ChainKind::NaturalProduct => &NATURAL,
            ChainKind::Simple2d => &SIMPLE,
        }
    }
}

impl std::str::FromStr for ChainKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "natural-product" | "natural" => Ok(ChainKind::NaturalProduct),
            "simple-2d" | "simple" => Ok(ChainKind::Simple2d),
            other => Err(format!("unknown chain kind `{other}` (natural-product | simple-2d)")),
        }
    }
}

/// The joint walk of a node pair on the `m x m` torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TorusChainOracle {
    m: usize,
    kind: ChainKind,
}

/// Expected hitting times of one target from every state.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTable {
    pub target: usize,
    pub h: Vec<f64>,
    /// Max absolute residual of the solved system.
    pub residual: f64,
}

impl HittingTable {
    /// Plain average of `h` over all states.
    pub fn mean(&self) -> f64 {
        self.h.iter().sum::<f64>() / self.h.len() as f64
    }
}

/// Oracle output in the CLI's JSON layout.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSummary {
    pub m: usize,
    pub n: usize,
    pub kind: ChainKind,
    pub mean_return: f64,
    #[serde(rename = "E_pi_T0")]
    pub e_pi_t0: f64,
    pub second_moment: f64,
    pub ratios: OracleRatios,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRatios {
    pub mean_over_n: f64,
    #[serde(rename = "Epi_over_nlogn")]
    pub epi_over_nlogn: f64,
    #[serde(rename = "m2_over_n2logn")]
    pub m2_over_n2logn: f64,
}

impl TorusChainOracle {
    pub fn new(m: usize, kind: ChainKind) -> Result<Self, OracleError> {
        if m < 2 {
            return Err(OracleError::Side(m));
        }
        Ok(TorusChainOracle { m, kind })
    }

    pub fn side(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> ChainKind {
        self.kind
    }

    /// Number of states, `m^2`.
    pub fn states(&self) -> usize {
        self.m * self.m
    }

    /// State index of `(x, y)`.
    pub fn state(&self, x: usize, y: usize) -> usize {
        x * self.m + y
    }

    /// Uniform stationary probability.
    pub fn stationary(&self, _state: usize) -> f64 {
        1.0 / self.states() as f64
    }

    /// Outgoing transitions of `s`, with coinciding moves merged.
    pub fn transitions(&self, s: usize) -> Vec<(usize, f64)> {
        let m = self.m as i64;
        let (x, y) = ((s / self.m) as i64, (s % self.m) as i64);
        let moves = self.kind.moves();
        let p = 1.0 / moves.len() as f64;
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(moves.len());
        for &(dx, dy) in moves {
            let to = ((x + dx).rem_euclid(m) * m + (y + dy).rem_euclid(m)) as usize;
            match out.iter_mut().find(|(t, _)| *t == to) {
                Some((_, q)) => *q += p,
                None => out.push((to, p)),
            }
        }
        out
    }

    fn check_state(&self, s: usize) -> Result<(), OracleError> {
        if s >= self.states() {
            return Err(OracleError::State {
                state: s,
                states: self.states(),
            });
        }
        Ok(())
    }

    /// `(I - P) x` restricted to non-target states, with `x(target) = 0`.
    fn apply_restricted(&self, target: usize, x: &[f64], out: &mut [f64]) {
        for s in 0..self.states() {
            if s == target {
                out[s] = 0.0;
                continue;
            }
            let mut acc = x[s];
            for (to, p) in self.transitions(s) {
                if to != target {
                    acc -= p * x[to];
                }
            }
            out[s] = acc;
        }
    }

    fn residual(&self, target: usize, x: &[f64], rhs: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply_restricted(target, x, &mut ax);
        ax.iter()
            .zip(rhs)
            .enumerate()
            .filter(|&(s, _)| s != target)
            .map(|(_, (a, b))| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Solves the restricted system for each right-hand side in turn; `rhs`
    /// builds the next right-hand side from the previous solutions.
    fn solve_sequence(
        &self,
        target: usize,
        count: usize,
        mut rhs: impl FnMut(&[Vec<f64>]) -> Vec<f64>,
    ) -> Result<Vec<(Vec<f64>, f64)>, OracleError> {
        self.check_state(target)?;
        let n = self.states();
        let mut solutions: Vec<Vec<f64>> = Vec::with_capacity(count);
        let mut out = Vec::with_capacity(count);
        if self.m <= DENSE_MAX_SIDE {
            let free: Vec<usize> = (0..n).filter(|&s| s != target).collect();
            let mut index = vec![usize::MAX; n];
            for (k, &s) in free.iter().enumerate() {
                index[s] = k;
            }
            let mut a = DMatrix::<f64>::identity(free.len(), free.len());
            for (row, &s) in free.iter().enumerate() {
                for (to, p) in self.transitions(s) {
                    if to != target {
                        a[(row, index[to])] -= p;
                    }
                }
            }
            let lu = a.clone().lu();
            for _ in 0..count {
                let b_full = rhs(&solutions);
                let b = DVector::from_iterator(free.len(), free.iter().map(|&s| b_full[s]));
                let mut x = lu.solve(&b).ok_or(OracleError::Singular)?;
                // one step of iterative refinement
                let r = &b - &a * &x;
                if let Some(dx) = lu.solve(&r) {
                    x += dx;
                }
                let mut full = vec![0.0; n];
                for (k, &s) in free.iter().enumerate() {
                    full[s] = x[k];
                }
                let res = self.residual(target, &full, &b_full);
                if !(res < RESIDUAL_TOL) {
                    return Err(OracleError::Residual {
                        residual: res,
                        tolerance: RESIDUAL_TOL,
                    });
                }
                solutions.push(full.clone());
                out.push((full, res));
            }
        } else {
            for _ in 0..count {
                let b = rhs(&solutions);
                let x = self.conjugate_gradient(target, &b)?;
                let res = self.residual(target, &x, &b);
                if !(res < RESIDUAL_TOL) {
                    return Err(OracleError::Residual {
                        residual: res,
                        tolerance: RESIDUAL_TOL,
                    });
                }
                solutions.push(x.clone());
                out.push((x, res));
            }
        }
        Ok(out)
    }

    fn conjugate_gradient(&self, target: usize, b: &[f64]) -> Result<Vec<f64>, OracleError> {
        let n = self.states();
        let mut x = vec![0.0; n];
        let mut r: Vec<f64> = b.to_vec();
        r[target] = 0.0;
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let mut rr: f64 = r.iter().map(|v| v * v).sum();
        let max_iter = 50 * n;
        for _ in 0..max_iter {
            if rr.sqrt() < 1e-11 {
                return Ok(x);
            }
            self.apply_restricted(target, &p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(OracleError::Singular);
            }
            let alpha = rr / pap;
            for s in 0..n {
                x[s] += alpha * p[s];
                r[s] -= alpha * ap[s];
            }
            let rr_next: f64 = r.iter().map(|v| v * v).sum();
            let beta = rr_next / rr;
            for s in 0..n {
                p[s] = r[s] + beta * p[s];
            }
            rr = rr_next;
        }
        Err(OracleError::Residual {
            residual: rr.sqrt(),
            tolerance: RESIDUAL_TOL,
        })
    }

    /// Expected time to hit `target` from every state.
    pub fn hitting_times(&self, target: usize) -> Result<HittingTable, OracleError> {
        let n = self.states();
        let mut sol = self.solve_sequence(target, 1, |_| vec![1.0; n])?;
        let (h, residual) = sol.remove(0);
        Ok(HittingTable { target, h, residual })
    }

    /// `1 + sum_y P(s, y) h(y)`: the mean return time by first-step analysis.
    pub fn first_step_return_time(&self, table: &HittingTable) -> f64 {
        1.0 + self
            .transitions(table.target)
            .into_iter()
            .map(|(to, p)| p * table.h[to])
            .sum::<f64>()
    }

    /// Mean return time `1 / pi(s)`, checked against the hitting-time solve.
    pub fn mean_return_time(&self, state: usize) -> Result<f64, OracleError> {
        let table = self.hitting_times(state)?;
        let kac = 1.0 / self.stationary(state);
        let first_step = self.first_step_return_time(&table);
        let rel = (kac - first_step).abs() / kac;
        if rel > KAC_REL_TOL {
            return Err(OracleError::Residual {
                residual: rel,
                tolerance: KAC_REL_TOL,
            });
        }
        Ok(kac)
    }

    /// `E_pi[T]`: hitting time of `target` from a stationary start.
    pub fn stationary_mean_hitting(&self, target: usize) -> Result<f64, OracleError> {
        let table = self.hitting_times(target)?;
        Ok(table.h.iter().map(|h| self.stationary(target) * h).sum())
    }

    /// Second moment of the return time via Kac's formula,
    /// `(2 E_pi[T] + 1) / pi(s)`.
    pub fn return_time_second_moment(&self, state: usize) -> Result<f64, OracleError> {
        let epi = self.stationary_mean_hitting(state)?;
        Ok((2.0 * epi + 1.0) / self.stationary(state))
    }

    /// Second moment of the return time by solving for `g(x) = E_x[T^2]`
    /// directly: `g(x) = 1 + 2 sum P h + sum P g`.
    pub fn return_time_second_moment_direct(&self, state: usize) -> Result<f64, OracleError> {
        let n = self.states();
        let sol = self.solve_sequence(state, 2, |prev| {
            if prev.is_empty() {
                return vec![1.0; n];
            }
            let h = &prev[0];
            (0..n)
                .map(|s| {
                    1.0 + 2.0
                        * self
                            .transitions(s)
                            .into_iter()
                            .map(|(to, p)| p * h[to])
                            .sum::<f64>()
                })
                .collect()
        })?;
        let (h, g) = (&sol[0].0, &sol[1].0);
        Ok(self
            .transitions(state)
            .into_iter()
            .map(|(to, p)| p * (1.0 + 2.0 * h[to] + g[to]))
            .sum())
    }

    /// All oracle quantities for state `(0, 0)`.
    pub fn summary(&self) -> Result<OracleSummary, OracleError> {
        let table = self.hitting_times(0)?;
        let n = self.states() as f64;
        let kac = 1.0 / self.stationary(0);
        let first_step = self.first_step_return_time(&table);
        if (kac - first_step).abs() / kac > KAC_REL_TOL {
            return Err(OracleError::Residual {
                residual: (kac - first_step).abs() / kac,
                tolerance: KAC_REL_TOL,
            });
        }
        let epi = table.mean();
        let second = (2.0 * epi + 1.0) * n;
        Ok(OracleSummary {
            m: self.m,
            n: self.states(),
            kind: self.kind,
            mean_return: kac,
            e_pi_t0: epi,
            second_moment: second,
            ratios: OracleRatios {
                mean_over_n: kac / n,
                epi_over_nlogn: epi / (n * n.ln()),
                m2_over_n2logn: second / (n * n * n.ln()),
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Return-time distribution by propagating the taboo probabilities of
    /// every path that has not yet come back; returns `(mass, E[T], E[T^2])`.
    fn enumerate_return(oracle: &TorusChainOracle, state: usize, depth: usize) -> (f64, f64, f64) {
        let n = oracle.states();
        let mut alive = vec![0.0; n];
        alive[state] = 1.0;
        let (mut mass, mut m1, mut m2) = (0.0, 0.0, 0.0);
        for t in 1..=depth {
            let mut next = vec![0.0; n];
            for s in 0..n {
                if alive[s] == 0.0 {
                    continue;
                }
                for (to, p) in oracle.transitions(s) {
                    next[to] += alive[s] * p;
                }
            }
            let back = next[state];
            next[state] = 0.0;
            mass += back;
            m1 += back * t as f64;
            m2 += back * (t * t) as f64;
            alive = next;
        }
        (mass, m1, m2)
    }

    #[test]
    fn rejects_degenerate_side() {
        assert!(TorusChainOracle::new(1, ChainKind::NaturalProduct).is_err());
    }

    #[test]
    fn transitions_are_stochastic_for_small_sides() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            for m in [2, 3, 5] {
                let o = TorusChainOracle::new(m, kind).unwrap();
                for s in 0..o.states() {
                    let total: f64 = o.transitions(s).iter().map(|t| t.1).sum();
                    assert_relative_eq!(total, 1.0, epsilon = 1e-14);
                }
            }
        }
    }

    #[test]
    fn target_has_zero_hitting_time() {
        let o = TorusChainOracle::new(5, ChainKind::NaturalProduct).unwrap();
        let t = o.hitting_times(7).unwrap();
        assert_eq!(t.h[7], 0.0);
        assert!(t.h.iter().enumerate().all(|(s, &h)| s == 7 || h >= 1.0));
        assert!(t.residual < RESIDUAL_TOL);
    }

    #[test]
    fn two_by_two_returns_in_four() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            let o = TorusChainOracle::new(2, kind).unwrap();
            let t = o.hitting_times(0).unwrap();
            assert_relative_eq!(o.first_step_return_time(&t), 4.0, epsilon = 1e-12);
            assert_eq!(o.mean_return_time(0).unwrap(), 4.0);
        }
    }

    #[test]
    fn mean_return_is_state_count() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            for m in [2, 4, 8, 16] {
                let o = TorusChainOracle::new(m, kind).unwrap();
                let t = o.hitting_times(0).unwrap();
                let fs = o.first_step_return_time(&t);
                assert!(((m * m) as f64 - fs).abs() / fs < 1e-6, "{kind:?} m={m}: {fs}");
            }
        }
    }

    #[test]
    fn stationary_hitting_is_target_independent() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            let o = TorusChainOracle::new(8, kind).unwrap();
            let values: Vec<f64> = [0, 9, 27, 63, 36]
                .iter()
                .map(|&t| o.stationary_mean_hitting(t).unwrap())
                .collect();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(0.0, f64::max);
            assert!((hi - lo) / lo < 1e-9, "{values:?}");
        }
    }

    #[test]
    fn stationary_hitting_is_average_of_table() {
        let o = TorusChainOracle::new(6, ChainKind::NaturalProduct).unwrap();
        let t = o.hitting_times(0).unwrap();
        assert_relative_eq!(o.stationary_mean_hitting(0).unwrap(), t.mean(), max_relative = 1e-12);
    }

    #[test]
    fn kac_second_moment_matches_direct_solve() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            for m in [2, 3, 4, 6, 8] {
                let o = TorusChainOracle::new(m, kind).unwrap();
                let kac = o.return_time_second_moment(0).unwrap();
                let direct = o.return_time_second_moment_direct(0).unwrap();
                assert!((kac - direct).abs() / direct < 1e-6, "{kind:?} m={m}: {kac} vs {direct}");
            }
        }
    }

    #[test]
    fn second_moment_at_side_eight_composes_oracles() {
        let o = TorusChainOracle::new(8, ChainKind::NaturalProduct).unwrap();
        let epi = o.stationary_mean_hitting(0).unwrap();
        assert_relative_eq!(o.return_time_second_moment(0).unwrap(), (2.0 * epi + 1.0) * 64.0, max_relative = 1e-12);
    }

    #[test]
    fn two_by_two_moments_match_path_enumeration() {
        for kind in [ChainKind::NaturalProduct, ChainKind::Simple2d] {
            let o = TorusChainOracle::new(2, kind).unwrap();
            let (mass, m1, m2) = enumerate_return(&o, 0, 200);
            assert!(mass > 1.0 - 1e-9, "mass {mass}");
            assert_relative_eq!(m1, 4.0, max_relative = 1e-6);
            assert_relative_eq!(o.return_time_second_moment(0).unwrap(), m2, max_relative = 1e-6);
        }
        // the simple walk already has the required mass at depth 60
        let o = TorusChainOracle::new(2, ChainKind::Simple2d).unwrap();
        assert!(enumerate_return(&o, 0, 60).0 > 1.0 - 1e-9 * 2.0);
    }

    #[test]
    fn conjugate_gradient_agrees_with_dense_solve() {
        let o = TorusChainOracle::new(12, ChainKind::NaturalProduct).unwrap();
        let dense = o.hitting_times(0).unwrap();
        let cg = o.conjugate_gradient(0, &vec![1.0; o.states()]).unwrap();
        for (a, b) in dense.h.iter().zip(&cg) {
            assert!((a - b).abs() < 1e-8 * a.max(1.0));
        }
    }

    #[test]
    fn large_side_uses_iterative_solver() {
        let o = TorusChainOracle::new(40, ChainKind::Simple2d).unwrap();
        let s = o.summary().unwrap();
        assert_relative_eq!(s.mean_return, 1600.0);
        assert!(s.e_pi_t0 > 1600.0);
    }

    #[test]
    fn summary_ratios() {
        let s = TorusChainOracle::new(8, ChainKind::NaturalProduct).unwrap().summary().unwrap();
        assert_eq!(s.n, 64);
        assert_relative_eq!(s.mean_return, 64.0);
        assert_relative_eq!(s.ratios.mean_over_n, 1.0);
        assert_relative_eq!(s.ratios.epi_over_nlogn, s.e_pi_t0 / (64.0 * 64f64.ln()));
    }
}
