//! Natural random walks on each node's lattice torus.
//!
//! A natural walk stays put, steps back or steps forward with probability
//! 1/3 each. Two nodes are neighbors while both sit on the lattice points
//! nearest their pair's meeting point, so a pair's joint position is a walk
//! on a `side x side` torus and a meeting is a visit to one fixed state.

use rand::Rng;
use serde::Serialize;

use crate::error::ConfigError;
use crate::geometry::{lattice_side, Configuration};
use crate::rng::{stream, Purpose, SimRng};
use crate::stats::Running;

/// Lattice index of every node at the current slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodePositions {
    pos: Vec<usize>,
    side: usize,
    t: u64,
}

#[inline]
fn natural_step<R: Rng + ?Sized>(from: usize, side: usize, rng: &mut R) -> usize {
    match rng.gen_range(0..3u8) {
        0 => (from + side - 1) % side,
        1 => from,
        _ => (from + 1) % side,
    }
}

impl NodePositions {
    /// Explicit positions at slot 0. Panics if an index is out of range.
    pub fn from_indices(side: usize, pos: Vec<usize>) -> Self {
        assert!(pos.iter().all(|&p| p < side), "position outside 0..{side}");
        NodePositions { pos, side, t: 0 }
    }

    /// Independent uniform start, one draw per node from `streams[node]`.
    pub fn init_streams(side: usize, streams: &mut [SimRng]) -> Self {
        let pos = streams.iter_mut().map(|r| r.gen_range(0..side)).collect();
        NodePositions { pos, side, t: 0 }
    }

    /// One natural-walk move per node, node `i` drawing from `streams[i]`.
    pub fn step_streams(&mut self, streams: &mut [SimRng]) {
        debug_assert_eq!(streams.len(), self.pos.len());
        let side = self.side;
        for (p, r) in self.pos.iter_mut().zip(streams.iter_mut()) {
            *p = natural_step(*p, side, r);
        }
        self.t += 1;
    }

    #[inline]
    pub fn get(&self, node: usize) -> usize {
        self.pos[node]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.pos
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    /// Current slot.
    pub fn slot(&self) -> u64 {
        self.t
    }
}

/// Uniform independent start for `n` nodes from a single stream.
pub fn init_positions<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<NodePositions, ConfigError> {
    let side = lattice_side(n)?;
    let pos = (0..n).map(|_| rng.gen_range(0..side)).collect();
    Ok(NodePositions { pos, side, t: 0 })
}

/// Advances every node by one natural-walk move drawn from `rng`.
pub fn step<R: Rng + ?Sized>(positions: &mut NodePositions, rng: &mut R) {
    let side = positions.side;
    for p in positions.pos.iter_mut() {
        *p = natural_step(*p, side, rng);
    }
    positions.t += 1;
}

/// One walk stream per node, keyed by `(seed, node)`.
pub fn walk_streams(seed: u64, n: usize) -> Vec<SimRng> {
    (0..n).map(|i| stream(seed, 0, i as u64, Purpose::Walk)).collect()
}

/// Whether `i` and `j` currently occupy their pair's meeting lattice points.
pub fn are_neighbors(config: &Configuration, positions: &NodePositions, i: usize, j: usize) -> bool {
    assert_ne!(i, j, "a node is not its own neighbor");
    let (a, b) = config.meeting_positions(i, j);
    positions.get(i) == a && positions.get(j) == b
}

/// All current neighbors of `i`, ascending by id.
pub fn neighbors_of(config: &Configuration, positions: &NodePositions, i: usize) -> Vec<usize> {
    let mut out = Vec::new();
    neighbors_into(config, positions, i, &mut out);
    out
}

/// Like [`neighbors_of`] but reuses `out`.
#[inline]
pub fn neighbors_into(config: &Configuration, positions: &NodePositions, i: usize, out: &mut Vec<usize>) {
    out.clear();
    out.extend(
        config
            .meeting_candidates(i, positions.get(i))
            .iter()
            .filter(|&&(j, pj)| positions.get(j) == pj)
            .map(|&(j, _)| j),
    );
}

/// One inter-meeting time of a fixed node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeetingSample {
    pub tau: u64,
    pub pair: (usize, usize),
}

/// Records inter-meeting times of one pair while a network walk runs.
#[derive(Debug, Clone)]
pub struct PairMeetingTracker {
    pair: (usize, usize),
    last: Option<u64>,
    meetings: u64,
    slots: u64,
    samples: Vec<MeetingSample>,
}

impl PairMeetingTracker {
    pub fn new(i: usize, j: usize) -> Self {
        PairMeetingTracker {
            pair: (i, j),
            last: None,
            meetings: 0,
            slots: 0,
            samples: Vec::new(),
        }
    }

    /// Observes the current slot; returns whether the pair are neighbors.
    pub fn observe(&mut self, config: &Configuration, positions: &NodePositions) -> bool {
        self.slots += 1;
        let met = are_neighbors(config, positions, self.pair.0, self.pair.1);
        if met {
            let t = positions.slot();
            if let Some(prev) = self.last {
                self.samples.push(MeetingSample {
                    tau: t - prev,
                    pair: self.pair,
                });
            }
            self.last = Some(t);
            self.meetings += 1;
        }
        met
    }

    pub fn meetings(&self) -> u64 {
        self.meetings
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn samples(&self) -> &[MeetingSample] {
        &self.samples
    }
}

/// Two independent natural walks on a side-`m` torus, tracked as one 2-D
/// walk; the meeting state is `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointWalk {
    m: usize,
    x: usize,
    y: usize,
}

impl JointWalk {
    pub fn at_meeting(m: usize) -> Self {
        assert!(m >= 2);
        JointWalk { m, x: 0, y: 0 }
    }

    pub fn stationary<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        assert!(m >= 2);
        JointWalk {
            m,
            x: rng.gen_range(0..m),
            y: rng.gen_range(0..m),
        }
    }

    /// Moves both coordinates; returns whether the walk is now at `(0, 0)`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        self.x = natural_step(self.x, self.m, rng);
        self.y = natural_step(self.y, self.m, rng);
        self.x == 0 && self.y == 0
    }

    pub fn state(&self) -> (usize, usize) {
        (self.x, self.y)
    }

    /// Slots until the next visit to `(0, 0)`.
    pub fn time_to_meeting<R: Rng + ?Sized>(&mut self, rng: &mut R) -> u64 {
        let mut t = 1;
        while !self.step(rng) {
            t += 1;
        }
        t
    }
}

/// Monte Carlo moments of the inter-meeting time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntermeetingEstimate {
    pub m: usize,
    pub samples: u64,
    pub mean: f64,
    pub second_moment: f64,
    pub se_mean: f64,
    pub se_second_moment: f64,
}

/// Successive return times of the joint walk to its meeting state, started
/// at a meeting, so every sample is a full inter-meeting time.
pub fn sample_intermeeting<R: Rng + ?Sized>(m: usize, samples: u64, rng: &mut R) -> IntermeetingEstimate {
    assert!(m >= 2 && samples >= 1);
    let mut walk = JointWalk::at_meeting(m);
    let mut first = Running::new();
    let mut second = Running::new();
    for _ in 0..samples {
        let tau = walk.time_to_meeting(rng) as f64;
        first.push(tau);
        second.push(tau * tau);
    }
    IntermeetingEstimate {
        m,
        samples,
        mean: first.mean(),
        second_moment: second.mean(),
        se_mean: first.std_error(),
        se_second_moment: second.std_error(),
    }
}
