//! Slot-synchronous single-server FIFO queues driven by per-slot event
//! processes.
//!
//! In every slot a queue first takes its arrival (if any) and then, at a
//! potential departure, releases its head-of-line item. An item that enters
//! and leaves in the same slot has sojourn 1. The queue length recorded for a
//! slot is the post-arrival length, so the sampled length at a potential
//! departure obeys `Q_{i+1} = Q_i - 1{Q_i > 0} + A_{i+1}` with `A_{i+1}` the
//! arrivals in the slots after departure `i` up to and including `i + 1`.

use std::collections::VecDeque;

use rand::Rng;
use serde::Serialize;

use crate::mobility::JointWalk;
use crate::rng::SimRng;

/// A per-slot 0/1 event stream that owns its randomness.
pub trait EventProcess {
    /// Advances one slot; true if the event happens in that slot.
    fn fire(&mut self) -> bool;
}

/// Independent event with probability `p` in every slot.
#[derive(Debug, Clone)]
pub struct Bernoulli {
    p: f64,
    rng: SimRng,
}

impl Bernoulli {
    pub fn new(p: f64, rng: SimRng) -> Self {
        assert!((0.0..=1.0).contains(&p), "probability {p}");
        Bernoulli { p, rng }
    }
}

impl EventProcess for Bernoulli {
    fn fire(&mut self) -> bool {
        self.p > 0.0 && self.rng.gen::<f64>() < self.p
    }
}

/// Source of i.i.d. positive inter-event times.
pub trait InterEventSampler {
    fn next_gap(&mut self) -> u64;
}

/// Return times of a joint pair walk to its meeting state.
#[derive(Debug, Clone)]
pub struct IntermeetingSampler {
    walk: JointWalk,
    rng: SimRng,
}

impl IntermeetingSampler {
    pub fn new(m: usize, rng: SimRng) -> Self {
        IntermeetingSampler {
            walk: JointWalk::at_meeting(m),
            rng,
        }
    }
}

impl InterEventSampler for IntermeetingSampler {
    fn next_gap(&mut self) -> u64 {
        self.walk.time_to_meeting(&mut self.rng)
    }
}

/// Renewal process: events separated by i.i.d. gaps from a sampler. The
/// first event comes one full gap after the start.
#[derive(Debug, Clone)]
pub struct Renewal<S> {
    sampler: S,
    remaining: u64,
}

impl<S: InterEventSampler> Renewal<S> {
    pub fn new(mut sampler: S) -> Self {
        let remaining = sampler.next_gap();
        Renewal { sampler, remaining }
    }
}

impl<S: InterEventSampler> EventProcess for Renewal<S> {
    fn fire(&mut self) -> bool {
        self.remaining -= 1;
        if self.remaining == 0 {
            self.remaining = self.sampler.next_gap();
            true
        } else {
            false
        }
    }
}

/// Meetings of a pair walk started from its stationary (uniform) law.
#[derive(Debug, Clone)]
pub struct MeetingClock {
    walk: JointWalk,
    rng: SimRng,
}

impl MeetingClock {
    pub fn new(m: usize, mut rng: SimRng) -> Self {
        let walk = JointWalk::stationary(m, &mut rng);
        MeetingClock { walk, rng }
    }
}

impl EventProcess for MeetingClock {
    fn fire(&mut self) -> bool {
        self.walk.step(&mut self.rng)
    }
}

/// Keeps each event of `inner` independently with probability `keep`.
#[derive(Debug, Clone)]
pub struct Thinned<P> {
    inner: P,
    keep: f64,
    rng: SimRng,
}

impl<P: EventProcess> Thinned<P> {
    pub fn new(inner: P, keep: f64, rng: SimRng) -> Self {
        assert!((0.0..=1.0).contains(&keep));
        Thinned { inner, keep, rng }
    }
}

impl<P: EventProcess> EventProcess for Thinned<P> {
    fn fire(&mut self) -> bool {
        self.inner.fire() && self.rng.gen::<f64>() < self.keep
    }
}

impl<P: EventProcess + ?Sized> EventProcess for Box<P> {
    fn fire(&mut self) -> bool {
        (**self).fire()
    }
}

/// One unit of work in a queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Item {
    /// Slot of entry to this queue.
    pub entered: u64,
    /// Slot of entry to the first queue of a tandem.
    pub origin: u64,
    /// Filler fed to a downstream queue when the upstream one was empty.
    pub dummy: bool,
}

/// Per-slot and per-departure records of one queue run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct QueueTrace {
    /// Post-arrival length in each slot.
    pub lengths: Vec<u32>,
    /// Whether the queue held anything in each slot.
    pub busy: Vec<bool>,
    /// `A_i`: arrivals since the previous potential departure.
    pub arrivals_between: Vec<u32>,
    /// `Q_i`: length at each potential departure, before it is served.
    pub sampled: Vec<u32>,
    /// Slot of each potential departure.
    pub departure_slots: Vec<u64>,
}

impl QueueTrace {
    /// Checks the sampled-chain recursion row by row.
    pub fn recursion_holds(&self) -> bool {
        self.sampled.len() == self.arrivals_between.len()
            && self.sampled.first().map_or(true, |&q0| q0 == self.arrivals_between[0])
            && self.sampled.windows(2).zip(self.arrivals_between.iter().skip(1)).all(|(w, &a)| {
                let (q, next) = (w[0], w[1]);
                next == q - u32::from(q > 0) + a
            })
    }
}

/// Summary statistics of one queue run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct QueueStats {
    pub slots: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub dummy_departures: u64,
    pub potential_departures: u64,
    /// Mean sojourn of departed non-dummy items.
    pub mean_sojourn: f64,
    /// Mean sojourn of all departed items, dummies included.
    pub mean_sojourn_all: f64,
    /// Time-average post-arrival length.
    pub mean_length: f64,
    pub arrival_rate: f64,
    /// Fraction of potential departures that found the queue non-empty.
    pub p_busy_at_departure: f64,
    /// Mean of `Q_i`.
    pub mean_sampled: f64,
    /// Mean and second moment of `A_i` (the first, partial interval is
    /// excluded).
    pub mean_arrivals_between: f64,
    pub second_arrivals_between: f64,
    pub max_length: u32,
}

impl QueueStats {
    /// `arrival_rate * mean_sojourn_all`, the right side of Little's law.
    pub fn little_rhs(&self) -> f64 {
        let departed_rate = self.departures as f64 / self.slots as f64;
        departed_rate * self.mean_sojourn_all
    }
}

/// A FIFO single-server queue advanced one slot at a time.
#[derive(Debug, Clone)]
pub struct SlotQueue {
    items: VecDeque<Item>,
    slot: u64,
    since_departure: u32,
    seen_departure: bool,
    trace: Option<QueueTrace>,
    arrivals: u64,
    departures: u64,
    dummies: u64,
    potential: u64,
    busy_at_potential: u64,
    sojourn_sum: f64,
    sojourn_all_sum: f64,
    length_sum: f64,
    sampled_sum: f64,
    a_count: u64,
    a_sum: f64,
    a2_sum: f64,
    max_length: u32,
}

impl SlotQueue {
    pub fn new(record_trace: bool) -> Self {
        SlotQueue {
            items: VecDeque::new(),
            slot: 0,
            since_departure: 0,
            seen_departure: false,
            trace: record_trace.then(QueueTrace::default),
            arrivals: 0,
            departures: 0,
            dummies: 0,
            potential: 0,
            busy_at_potential: 0,
            sojourn_sum: 0.0,
            sojourn_all_sum: 0.0,
            length_sum: 0.0,
            sampled_sum: 0.0,
            a_count: 0,
            a_sum: 0.0,
            a2_sum: 0.0,
            max_length: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Current slot (the one the next `tick` runs in).
    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Runs one slot: optional arrival, then an optional potential departure.
    /// Returns the departed item.
    pub fn tick(&mut self, arrival: Option<Item>, potential_departure: bool) -> Option<Item> {
        let slot = self.slot;
        if let Some(mut item) = arrival {
            item.entered = slot;
            self.items.push_back(item);
            self.arrivals += 1;
            self.since_departure += 1;
        }
        let len = self.items.len() as u32;
        self.length_sum += len as f64;
        self.max_length = self.max_length.max(len);
        if let Some(tr) = self.trace.as_mut() {
            tr.lengths.push(len);
            tr.busy.push(len > 0);
        }

        let mut departed = None;
        if potential_departure {
            self.potential += 1;
            self.sampled_sum += len as f64;
            let a = self.since_departure;
            if self.seen_departure {
                self.a_count += 1;
                self.a_sum += a as f64;
                self.a2_sum += (a as f64) * (a as f64);
            }
            if let Some(tr) = self.trace.as_mut() {
                tr.sampled.push(len);
                tr.arrivals_between.push(a);
                tr.departure_slots.push(slot);
            }
            self.since_departure = 0;
            self.seen_departure = true;
            if let Some(item) = self.items.pop_front() {
                self.busy_at_potential += 1;
                self.departures += 1;
                let sojourn = (slot - item.entered + 1) as f64;
                self.sojourn_all_sum += sojourn;
                if item.dummy {
                    self.dummies += 1;
                } else {
                    self.sojourn_sum += sojourn;
                }
                departed = Some(item);
            }
        }
        self.slot += 1;
        departed
    }

    pub fn stats(&self) -> QueueStats {
        let slots = self.slot.max(1) as f64;
        let real = self.departures - self.dummies;
        let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
        QueueStats {
            slots: self.slot,
            arrivals: self.arrivals,
            departures: self.departures,
            dummy_departures: self.dummies,
            potential_departures: self.potential,
            mean_sojourn: ratio(self.sojourn_sum, real),
            mean_sojourn_all: ratio(self.sojourn_all_sum, self.departures),
            mean_length: self.length_sum / slots,
            arrival_rate: self.arrivals as f64 / slots,
            p_busy_at_departure: ratio(self.busy_at_potential as f64, self.potential),
            mean_sampled: ratio(self.sampled_sum, self.potential),
            mean_arrivals_between: ratio(self.a_sum, self.a_count),
            second_arrivals_between: ratio(self.a2_sum, self.a_count),
            max_length: self.max_length,
        }
    }

    pub fn trace(&self) -> Option<&QueueTrace> {
        self.trace.as_ref()
    }

    pub fn into_trace(self) -> Option<QueueTrace> {
        self.trace
    }
}

/// Result of [`simulate_queue`].
#[derive(Debug, Clone)]
pub struct QueueRun {
    pub stats: QueueStats,
    pub trace: Option<QueueTrace>,
    /// Sojourn of every departed item, in departure order.
    pub sojourns: Vec<u64>,
}

/// Runs one queue for `slots` slots. Both processes carry their own random
/// streams, so a run is reproducible from the streams they were built with.
pub fn simulate_queue(
    arrivals: &mut dyn EventProcess,
    service: &mut dyn EventProcess,
    slots: u64,
    record_trace: bool,
) -> QueueRun {
    let mut q = SlotQueue::new(record_trace);
    let mut sojourns = Vec::new();
    for t in 0..slots {
        let arrival = arrivals.fire().then_some(Item {
            entered: t,
            origin: t,
            dummy: false,
        });
        if let Some(item) = q.tick(arrival, service.fire()) {
            sojourns.push(t - item.entered + 1);
        }
    }
    QueueRun {
        stats: q.stats(),
        sojourns,
        trace: q.into_trace(),
    }
}

/// Three natural walks `S`, `R`, `D` on a side-`m` torus. `S` and `R` meet
/// at `(0, 0)`; `R` and `D` meet when `R` is `offset` lattice points further
/// along its circle and `D` is at 0.
#[derive(Debug, Clone)]
pub struct RelayTriplet {
    m: usize,
    offset: usize,
    pos: [usize; 3],
    rng: SimRng,
}

/// Meeting indicators of one slot of a [`RelayTriplet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSlot {
    pub source_relay: bool,
    pub relay_destination: bool,
}

impl RelayTriplet {
    pub fn new(m: usize, offset: usize, mut rng: SimRng) -> Self {
        assert!(m >= 2 && offset < m);
        let pos = [rng.gen_range(0..m), rng.gen_range(0..m), rng.gen_range(0..m)];
        RelayTriplet { m, offset, pos, rng }
    }

    pub fn step(&mut self) -> TripletSlot {
        for p in self.pos.iter_mut() {
            *p = match self.rng.gen_range(0..3u8) {
                0 => (*p + self.m - 1) % self.m,
                1 => *p,
                _ => (*p + 1) % self.m,
            };
        }
        let [s, r, d] = self.pos;
        TripletSlot {
            source_relay: s == 0 && r == 0,
            relay_destination: r == self.offset && d == 0,
        }
    }
}

/// Coupled runs of the relay queue bound chain on shared walks: the
/// meeting-served queue fed directly by thinned source-relay meetings, and
/// the tandem of a Bernoulli-served queue feeding a meeting-served queue.
#[derive(Debug, Clone)]
pub struct TandemRun {
    pub direct: QueueStats,
    pub bernoulli_stage: QueueStats,
    pub meeting_stage: QueueStats,
    /// Per-packet sojourn through the direct queue, in arrival order.
    pub direct_delays: Vec<u64>,
    /// Per-packet sojourn through the tandem, in arrival order.
    pub tandem_delays: Vec<u64>,
}

/// Parameters of [`simulate_relay_tandem`].
#[derive(Debug, Clone, Copy)]
pub struct TandemParams {
    pub m: usize,
    pub offset: usize,
    /// Probability that a source-relay meeting produces an arrival.
    pub arrival_keep: f64,
    /// Per-slot service probability of the Bernoulli stage.
    pub bernoulli_service: f64,
    pub slots: u64,
}

impl TandemParams {
    /// The standard instance on `n = m^2` nodes: keep 1/2, service `2/(3n)`.
    pub fn standard(m: usize, offset: usize, slots: u64) -> Self {
        TandemParams {
            m,
            offset,
            arrival_keep: 0.5,
            bernoulli_service: 2.0 / (3.0 * (m * m) as f64),
            slots,
        }
    }
}

pub fn simulate_relay_tandem(params: TandemParams, walk_rng: SimRng, mut coin_rng: SimRng, service_rng: SimRng) -> TandemRun {
    let mut walks = RelayTriplet::new(params.m, params.offset, walk_rng);
    let mut server = Bernoulli::new(params.bernoulli_service, service_rng);
    let mut direct = SlotQueue::new(false);
    let mut stage3 = SlotQueue::new(false);
    let mut stage4 = SlotQueue::new(false);
    let mut direct_delays = Vec::new();
    let mut tandem_delays = Vec::new();

    for t in 0..params.slots {
        let ev = walks.step();
        let arrives = ev.source_relay && coin_rng.gen::<f64>() < params.arrival_keep;
        let pkt = arrives.then_some(Item {
            entered: t,
            origin: t,
            dummy: false,
        });

        if let Some(item) = direct.tick(pkt, ev.relay_destination) {
            direct_delays.push(t - item.origin + 1);
        }

        let potential = server.fire();
        let moved = stage3.tick(pkt, potential);
        let fed = potential.then(|| {
            moved.unwrap_or(Item {
                entered: t,
                origin: t,
                dummy: true,
            })
        });
        if let Some(item) = stage4.tick(fed, ev.relay_destination) {
            if !item.dummy {
                tandem_delays.push(t - item.origin + 1);
            }
        }
    }
    TandemRun {
        direct: direct.stats(),
        bernoulli_stage: stage3.stats(),
        meeting_stage: stage4.stats(),
        direct_delays,
        tandem_delays,
    }
}
