//! Event-driven simulation of the gap process.
//!
//! The live state is the vector of queue occupancies (gaps between
//! consecutive particles) plus the leftmost-particle position `x1`, which
//! moves left exactly on exogenous arrivals and right exactly on
//! departures through queue 1. Particle positions are derived on demand.
//!
//! Events are sampled with the aggregate-rate method: one exponential
//! holding time at the total rate, then a categorical draw over the
//! occupied queues through a weighted cumulative index, then the
//! left/right routing split within the selected queue's weight. Each event
//! costs O(log frontier).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fenwick::WeightedIndex;
use crate::observe::{HistogramSet, QueueHistogram};
use crate::rates::{RateEnvironment, Verdict};
use crate::rng::{SimRng, STREAM_EVENTS, STREAM_INIT};

/// Snapshot of the gap process: sparse occupancies plus boundary counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapState {
    /// Position of the leftmost particle.
    pub x1: i64,
    /// Occupied queues only; values are >= 1.
    pub gaps: BTreeMap<u32, u64>,
    /// Largest occupied queue index (0 when close-packed).
    pub frontier: u32,
    pub total_customers: u64,
    /// Exogenous arrivals so far.
    pub entered: u64,
    /// Departures through queue 1 so far.
    pub exited: u64,
    pub clock: f64,
}

impl GapState {
    /// The close-packed configuration.
    pub fn heaviside() -> Self {
        GapState {
            x1: 0,
            gaps: BTreeMap::new(),
            frontier: 0,
            total_customers: 0,
            entered: 0,
            exited: 0,
            clock: 0.0,
        }
    }

    /// Build from explicit `(queue, count)` pairs.
    pub fn from_gaps(pairs: &[(u32, u64)]) -> Result<Self> {
        let mut gaps = BTreeMap::new();
        for &(k, c) in pairs {
            if k == 0 {
                return Err(Error::bad_input("queue indices start at 1"));
            }
            if c == 0 {
                continue;
            }
            if gaps.insert(k, c).is_some() {
                return Err(Error::bad_input(format!("duplicate queue {k} in gap list")));
            }
        }
        let frontier = gaps.keys().next_back().copied().unwrap_or(0);
        let total = gaps.values().sum();
        Ok(GapState {
            x1: 0,
            gaps,
            frontier,
            total_customers: total,
            entered: 0,
            exited: 0,
            clock: 0.0,
        })
    }

    /// Positions of the leftmost `n` particles,
    /// `X_k = x1 + (k-1) + sum_{j<k} eta_j`; strictly increasing.
    pub fn particle_positions(&self, n: u32) -> Vec<i64> {
        let mut out = Vec::with_capacity(n as usize);
        let mut cum: i64 = 0;
        let mut iter = self.gaps.iter().peekable();
        for k in 1..=n {
            while let Some(&(&j, &c)) = iter.peek() {
                if j < k {
                    cum += c as i64;
                    iter.next();
                } else {
                    break;
                }
            }
            out.push(self.x1 + (k as i64 - 1) + cum);
        }
        out
    }

    pub fn occupancy(&self, k: u32) -> u64 {
        self.gaps.get(&k).copied().unwrap_or(0)
    }
}

/// Initial condition of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialCondition {
    /// Close-packed start.
    Heaviside,
    /// Explicit `(queue, count)` pairs.
    Gaps { gaps: Vec<(u32, u64)> },
    /// Independent geometric draws `eta_k ~ Geo(1 - rho[k-1])` for
    /// `k <= rho.len()`, zero beyond: a finite configuration dominated by
    /// the product-geometric measure it truncates.
    Geometric { rho: Vec<f64> },
}

impl InitialCondition {
    /// Materialize the initial state; `rng` is consumed only by the
    /// geometric variant.
    pub fn realize(&self, rng: &mut SimRng) -> Result<GapState> {
        match self {
            InitialCondition::Heaviside => Ok(GapState::heaviside()),
            InitialCondition::Gaps { gaps } => GapState::from_gaps(gaps),
            InitialCondition::Geometric { rho } => {
                for &r in rho {
                    if !(0.0..1.0).contains(&r) {
                        return Err(Error::bad_input(format!(
                            "geometric parameter {r} outside [0, 1)"
                        )));
                    }
                }
                let pairs: Vec<(u32, u64)> = rho
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| (i as u32 + 1, rng.geometric(r)))
                    .filter(|&(_, c)| c > 0)
                    .collect();
                GapState::from_gaps(&pairs)
            }
        }
    }
}

fn default_hist_window() -> u32 {
    32
}

/// Full description of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub env: RateEnvironment,
    pub initial: InitialCondition,
    pub horizon: f64,
    pub seed: u64,
    /// Hard cap on the frontier; reaching it aborts the run explicitly.
    /// Required when the non-explosion hypothesis `A1` is not known to
    /// hold.
    #[serde(default)]
    pub frontier_cap: Option<u32>,
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    /// Evenly spaced snapshots on `(0, horizon]` (ignored when
    /// `snapshot_times` is given).
    #[serde(default)]
    pub snapshot_count: Option<u32>,
    /// Queues `1..=hist_window` get time-weighted occupancy histograms and
    /// appear in snapshots.
    #[serde(default = "default_hist_window")]
    pub hist_window: u32,
    /// Histograms accumulate from this time on (burn-in exclusion).
    #[serde(default)]
    pub measure_from: f64,
    /// Record `(t, x1)` at every boundary event.
    #[serde(default)]
    pub record_x1_path: bool,
}

impl SimulationConfig {
    pub fn new(env: RateEnvironment, initial: InitialCondition, horizon: f64, seed: u64) -> Self {
        SimulationConfig {
            env,
            initial,
            horizon,
            seed,
            frontier_cap: None,
            snapshot_times: None,
            snapshot_count: None,
            hist_window: default_hist_window(),
            measure_from: 0.0,
            record_x1_path: false,
        }
    }

    fn snapshot_schedule(&self) -> Result<Vec<f64>> {
        if let Some(times) = &self.snapshot_times {
            let mut ts = times.clone();
            if ts.iter().any(|t| !t.is_finite() || *t < 0.0) {
                return Err(Error::bad_input("snapshot times must be finite and >= 0"));
            }
            ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            return Ok(ts);
        }
        if let Some(n) = self.snapshot_count {
            let n = n.max(1);
            return Ok((1..=n).map(|i| self.horizon * i as f64 / n as f64).collect());
        }
        Ok(Vec::new())
    }
}

/// What happened in one event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Exogenous customer entered queue 1 (leftmost particle moved left).
    Arrival,
    /// Customer served at `queue >= 2`, routed one queue down.
    ServeLeft { queue: u32 },
    /// Customer served at `queue`, routed one queue up.
    ServeRight { queue: u32 },
    /// Customer served at queue 1 and left (leftmost particle moved right).
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time_delta: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Tallies per event kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub arrivals: u64,
    pub departures: u64,
    pub serve_left: u64,
    pub serve_right: u64,
}

impl EventCounts {
    pub fn total(&self) -> u64 {
        self.arrivals + self.departures + self.serve_left + self.serve_right
    }
}

/// Live simulation: dense occupancies plus the weighted event index.
#[derive(Debug, Clone)]
pub struct Simulation {
    env: RateEnvironment,
    a1: f64,
    /// Per queue k (1-indexed): (b_k, a_{k+1}); mu_k is their sum.
    channel: Vec<(f64, f64)>,
    occ: Vec<u64>,
    index: WeightedIndex,
    cap: Option<u32>,
    x1: i64,
    total: u64,
    entered: u64,
    exited: u64,
    clock: f64,
    frontier: u32,
    watermark: u32,
    initial_x1: i64,
    initial_total: u64,
    counts: EventCounts,
}

impl Simulation {
    /// Set up a simulation from an initial state.
    ///
    /// Requires `A0`; requires `A1` (or a defined-everywhere environment)
    /// unless a frontier cap is set.
    pub fn new(env: &RateEnvironment, initial: GapState, frontier_cap: Option<u32>) -> Result<Self> {
        env.require_a0()?;
        let hyp = env.hypotheses();
        if frontier_cap.is_none() && hyp.a1 != Verdict::Holds {
            return Err(Error::hypothesis(
                "A1",
                "environment may explode; set a frontier cap to run anyway",
            ));
        }
        if let (Some(cap), Some(max)) = (frontier_cap, env.max_index()) {
            if cap + 1 > max {
                return Err(Error::bad_input(format!(
                    "frontier cap {cap} needs rates up to {} but the environment ends at {max}",
                    cap + 1
                )));
            }
        }
        let start_capacity = match frontier_cap {
            Some(c) => c as usize,
            None => (initial.frontier as usize + 1).next_power_of_two().max(16),
        };
        let a1 = env.rate_at(1)?.0;
        let mut sim = Simulation {
            env: env.clone(),
            a1,
            channel: Vec::new(),
            occ: vec![0],
            index: WeightedIndex::new(start_capacity),
            cap: frontier_cap,
            x1: initial.x1,
            total: 0,
            entered: initial.entered,
            exited: initial.exited,
            clock: initial.clock,
            frontier: 0,
            watermark: 0,
            initial_x1: initial.x1,
            initial_total: initial.total_customers,
            counts: EventCounts::default(),
        };
        sim.extend_channels(start_capacity)?;
        for (&k, &c) in &initial.gaps {
            if let Some(cap) = sim.cap {
                if k > cap {
                    return Err(Error::bad_input(format!(
                        "initial occupancy at queue {k} exceeds frontier cap {cap}"
                    )));
                }
            }
            sim.reserve(k as usize)?;
            sim.occ[k as usize] = c;
            sim.total += c;
            sim.index.set(k as usize, sim.mu(k as usize));
            sim.frontier = sim.frontier.max(k);
        }
        sim.watermark = sim.frontier;
        Ok(sim)
    }

    fn extend_channels(&mut self, upto: usize) -> Result<()> {
        while self.channel.len() < upto {
            let k = self.channel.len() as u32 + 1;
            let (_, b_k) = self.env.rate_at(k)?;
            let (a_k1, _) = self.env.rate_at(k + 1)?;
            if !b_k.is_finite() || !a_k1.is_finite() {
                return Err(Error::bad_input(format!(
                    "rates at queue {k} are not finite in double precision"
                )));
            }
            self.channel.push((b_k, a_k1));
        }
        if self.occ.len() < upto + 1 {
            self.occ.resize(upto + 1, 0);
        }
        Ok(())
    }

    #[inline]
    fn mu(&self, k: usize) -> f64 {
        let (b, a_next) = self.channel[k - 1];
        b + a_next
    }

    /// Make sure queue `k` exists, growing capacity or failing on the cap.
    fn reserve(&mut self, k: usize) -> Result<()> {
        if let Some(cap) = self.cap {
            if k > cap as usize {
                return Err(Error::FrontierCap {
                    cap,
                    time: self.clock,
                });
            }
        }
        if k > self.index.capacity() {
            let new_cap = (k + 1).next_power_of_two();
            self.index.grow(new_cap);
            self.extend_channels(new_cap)?;
        } else {
            self.extend_channels(k)?;
        }
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.a1 + self.index.total()
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn x1(&self) -> i64 {
        self.x1
    }

    pub fn total_customers(&self) -> u64 {
        self.total
    }

    pub fn occupancy(&self, k: u32) -> u64 {
        self.occ.get(k as usize).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> EventCounts {
        self.counts
    }

    pub fn frontier(&self) -> u32 {
        self.frontier
    }

    pub fn watermark(&self) -> u32 {
        self.watermark
    }

    fn inc(&mut self, k: usize) -> Result<()> {
        self.reserve(k)?;
        self.occ[k] += 1;
        if self.occ[k] == 1 {
            let w = self.mu(k);
            self.index.set(k, w);
            if k as u32 > self.frontier {
                self.frontier = k as u32;
                self.watermark = self.watermark.max(self.frontier);
            }
        }
        Ok(())
    }

    fn dec(&mut self, k: usize) {
        debug_assert!(self.occ[k] > 0);
        self.occ[k] -= 1;
        if self.occ[k] == 0 {
            self.index.set(k, 0.0);
            if k as u32 == self.frontier {
                let mut f = k - 1;
                while f > 0 && self.occ[f] == 0 {
                    f -= 1;
                }
                self.frontier = f as u32;
            }
        }
    }

    /// Sample and apply one event; the exact-jump-chain core.
    pub fn step(&mut self, rng: &mut SimRng) -> Result<EventRecord> {
        let total = self.total_rate();
        let dt = rng.exp(total);
        self.apply_event(self.clock + dt, rng).map(|kind| EventRecord {
            time_delta: dt,
            kind,
        })
    }

    /// Apply one event at the given absolute time (the holding time must
    /// already have been sampled against [`Self::total_rate`]).
    pub fn apply_event(&mut self, t: f64, rng: &mut SimRng) -> Result<EventKind> {
        let total = self.total_rate();
        let r = rng.uniform() * total;
        self.clock = t;
        if r < self.a1 {
            // Exogenous arrival: eta_1 += 1, leftmost particle steps left.
            self.inc(1)?;
            self.total += 1;
            self.x1 -= 1;
            self.entered += 1;
            self.counts.arrivals += 1;
            return Ok(EventKind::Arrival);
        }
        let (k, rem) = self.index.find(r - self.a1);
        let (b_k, _) = self.channel[k - 1];
        if rem < b_k {
            if k == 1 {
                self.dec(1);
                self.total -= 1;
                self.x1 += 1;
                self.exited += 1;
                self.counts.departures += 1;
                Ok(EventKind::Departure)
            } else {
                self.dec(k);
                self.inc(k - 1)?;
                self.counts.serve_left += 1;
                Ok(EventKind::ServeLeft { queue: k as u32 })
            }
        } else {
            self.dec(k);
            self.inc(k + 1)?;
            self.counts.serve_right += 1;
            Ok(EventKind::ServeRight { queue: k as u32 })
        }
    }

    /// Snapshot the live state.
    pub fn state(&self) -> GapState {
        let gaps: BTreeMap<u32, u64> = self
            .occ
            .iter()
            .enumerate()
            .skip(1)
            .filter(|&(_, &c)| c > 0)
            .map(|(k, &c)| (k as u32, c))
            .collect();
        GapState {
            x1: self.x1,
            gaps,
            frontier: self.frontier,
            total_customers: self.total,
            entered: self.entered,
            exited: self.exited,
            clock: self.clock,
        }
    }

    /// Conservation identity `x1(0) - x1(t) = total(t) - total(0)`,
    /// exact in integer arithmetic.
    pub fn conservation_holds(&self) -> bool {
        self.initial_x1 - self.x1 == self.total as i64 - self.initial_total as i64
    }
}

/// State snapshot at a scheduled time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub x1: i64,
    pub total_customers: u64,
    /// Occupancies of queues `1..=hist_window`.
    pub window: Vec<u64>,
}

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: SimulationConfig,
    pub events: EventCounts,
    pub final_state: GapState,
    pub snapshots: Vec<Snapshot>,
    pub histograms: Vec<QueueHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x1_path: Option<Vec<(f64, i64)>>,
    pub frontier_watermark: u32,
}

/// Execute a configured run to its horizon. Deterministic given the
/// config (the seed is part of it).
pub fn run(config: &SimulationConfig) -> Result<RunSummary> {
    let mut init_rng = SimRng::new(config.seed, STREAM_INIT);
    let initial = config.initial.realize(&mut init_rng)?;
    let mut rng = SimRng::new(config.seed, STREAM_EVENTS);
    let mut sim = Simulation::new(&config.env, initial, config.frontier_cap)?;
    if !(config.horizon.is_finite() && config.horizon >= 0.0) {
        return Err(Error::bad_input("horizon must be finite and >= 0"));
    }

    let schedule = config.snapshot_schedule()?;
    let mut snap_iter = schedule.into_iter().peekable();
    let mut snapshots = Vec::new();
    let w = config.hist_window;
    let mut hists = HistogramSet::new(w, config.measure_from, |k| sim.occupancy(k));
    let mut x1_path = config.record_x1_path.then(|| vec![(0.0, sim.x1())]);

    let take_snapshot = |sim: &Simulation, t: f64| Snapshot {
        t,
        x1: sim.x1(),
        total_customers: sim.total_customers(),
        window: (1..=w).map(|k| sim.occupancy(k)).collect(),
    };

    loop {
        let total = sim.total_rate();
        let dt = rng.exp(total);
        let t_next = sim.clock() + dt;
        while let Some(&ts) = snap_iter.peek() {
            if ts <= t_next.min(config.horizon) {
                snapshots.push(take_snapshot(&sim, ts));
                snap_iter.next();
            } else {
                break;
            }
        }
        if t_next > config.horizon {
            break;
        }
        let kind = sim.apply_event(t_next, &mut rng)?;
        match kind {
            EventKind::Arrival => {
                hists.on_change(t_next, 1, sim.occupancy(1));
                if let Some(path) = &mut x1_path {
                    path.push((t_next, sim.x1()));
                }
            }
            EventKind::Departure => {
                hists.on_change(t_next, 1, sim.occupancy(1));
                if let Some(path) = &mut x1_path {
                    path.push((t_next, sim.x1()));
                }
            }
            EventKind::ServeLeft { queue } => {
                hists.on_change(t_next, queue, sim.occupancy(queue));
                hists.on_change(t_next, queue - 1, sim.occupancy(queue - 1));
            }
            EventKind::ServeRight { queue } => {
                hists.on_change(t_next, queue, sim.occupancy(queue));
                hists.on_change(t_next, queue + 1, sim.occupancy(queue + 1));
            }
        }
        debug_assert!(sim.conservation_holds());
    }

    let mut final_state = sim.state();
    final_state.clock = config.horizon;
    Ok(RunSummary {
        config: config.clone(),
        events: sim.counts(),
        final_state,
        snapshots,
        histograms: hists.finish(config.horizon),
        x1_path,
        frontier_watermark: sim.watermark(),
    })
}
