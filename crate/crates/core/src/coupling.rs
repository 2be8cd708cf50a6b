//! Shared-randomness constructions on a marked-Poisson arrow field.
//!
//! The field realizes attempted jumps: each queue `k` carries an
//! independent Poisson stream of left arrows (rate `b_k`) and right arrows
//! (rate `a_{k+1}`), with queue 0's right arrows acting as exogenous
//! injections. Arrows fire regardless of occupancy — an arrow at an empty
//! queue is a no-op — which makes every coupled system a deterministic
//! function of one field and yields pathwise monotonicity:
//!
//! * the lower truncation loses every customer served rightward at queue
//!   `N` (its `b_{N+1}` is zero), so it never exceeds the full system;
//! * the upper truncation reinterprets queue `N+1`'s left arrows as
//!   unconditional injections into queue `N` — exactly the arrows on which
//!   the full system may return a customer — so it never falls below;
//! * two-class runs give first-class customers strict service priority,
//!   realizing stochastic monotonicity between ordered initial states.

use serde::{Deserialize, Serialize};

use crate::engine::GapState;
use crate::error::{Error, Result};
use crate::rates::RateEnvironment;
use crate::rng::{SimRng, STREAM_FIELD_BASE};

/// Direction of a service arrow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Left,
    Right,
}

/// One arrow of the graphical construction. `queue` is the source queue;
/// right arrows at queue 0 are exogenous injections into queue 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrow {
    pub t: f64,
    pub queue: u32,
    pub dir: Direction,
}

/// A realized arrow field over `[0, window]` for queues `0..=cap`.
#[derive(Debug, Clone)]
pub struct PoissonField {
    pub window: f64,
    pub cap: u32,
    /// All arrows merged in strictly increasing time order.
    arrows: Vec<Arrow>,
    /// Arrow counts per stream: `(queue, direction, count)`.
    stream_counts: Vec<(u32, Direction, usize)>,
}

impl PoissonField {
    pub fn arrows(&self) -> &[Arrow] {
        &self.arrows
    }

    pub fn len(&self) -> usize {
        self.arrows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrows.is_empty()
    }

    pub fn stream_counts(&self) -> &[(u32, Direction, usize)] {
        &self.stream_counts
    }
}

fn stream_id(queue: u32, dir: Direction) -> u64 {
    STREAM_FIELD_BASE + 2 * queue as u64 + if dir == Direction::Left { 1 } else { 0 }
}

fn poisson_times(rate: f64, window: f64, rng: &mut SimRng) -> Vec<f64> {
    let mut times = Vec::new();
    if rate <= 0.0 {
        return times;
    }
    let mut t = 0.0;
    loop {
        t += rng.exp(rate);
        if t > window {
            return times;
        }
        times.push(t);
    }
}

/// Build the independent arrow streams for queues `0..=cap`.
///
/// Deterministic given the seed. Exact timestamp ties across streams have
/// probability zero; if one occurs the whole field is redrawn with a
/// salted seed.
pub fn build_field(env: &RateEnvironment, window: f64, cap: u32, seed: u64) -> Result<PoissonField> {
    if !(window.is_finite() && window >= 0.0) {
        return Err(Error::bad_input("window must be finite and >= 0"));
    }
    // Rates must be representable for every queue the field covers.
    for k in 1..=(cap + 1) {
        let (a, b) = env.rate_at(k)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::bad_input(format!(
                "rates at index {k} overflow double precision; lower the cap"
            )));
        }
    }
    'salt: for salt in 0..8 {
        let mut arrows = Vec::new();
        let mut stream_counts = Vec::new();
        for k in 0..=cap {
            // Right arrows at queue k fire at rate a_{k+1}; left arrows at
            // rate b_k (queue 0 has no left stream).
            let a_next = env.rate_at(k + 1)?.0;
            let mut rng = SimRng::new(seed.wrapping_add(salt), stream_id(k, Direction::Right));
            let right = poisson_times(a_next, window, &mut rng);
            stream_counts.push((k, Direction::Right, right.len()));
            arrows.extend(right.into_iter().map(|t| Arrow {
                t,
                queue: k,
                dir: Direction::Right,
            }));
            if k >= 1 {
                let b_k = env.rate_at(k)?.1;
                let mut rng = SimRng::new(seed.wrapping_add(salt), stream_id(k, Direction::Left));
                let left = poisson_times(b_k, window, &mut rng);
                stream_counts.push((k, Direction::Left, left.len()));
                arrows.extend(left.into_iter().map(|t| Arrow {
                    t,
                    queue: k,
                    dir: Direction::Left,
                }));
            }
        }
        arrows.sort_by(|x, y| x.t.partial_cmp(&y.t).unwrap());
        for pair in arrows.windows(2) {
            if pair[0].t == pair[1].t {
                continue 'salt; // tie: redraw everything
            }
        }
        return Ok(PoissonField {
            window,
            cap,
            arrows,
            stream_counts,
        });
    }
    Err(Error::bad_input(
        "could not draw a tie-free field in 8 attempts",
    ))
}

/// Boundary behaviour when applying a field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "boundary", rename_all = "snake_case")]
pub enum Boundary {
    SemiInfinite,
    /// Right-absorbing truncation: `b_{N+1} = 0`; customers served
    /// rightward at queue `n` leave for good.
    LowerTruncated { n: u32 },
    /// Finite system with exogenous inflow at queue `n` (rate `b_{n+1}`,
    /// realized by queue `n+1`'s left arrows) and outflow at rate
    /// `a_{n+1}`.
    UpperTruncated { n: u32 },
}

/// A gap configuration evolving under a field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSystem {
    pub occ: Vec<u64>,
    pub x1: i64,
    pub total: u64,
    pub entered: u64,
    pub exited: u64,
    boundary: Boundary,
    cap: u32,
}

impl FieldSystem {
    pub fn new(initial: &GapState, boundary: Boundary, cap: u32) -> Result<Self> {
        if let Boundary::LowerTruncated { n } | Boundary::UpperTruncated { n } = boundary {
            if n == 0 {
                return Err(Error::bad_input("truncation index must be >= 1"));
            }
            if initial.frontier > n {
                return Err(Error::bad_input(format!(
                    "initial occupancy reaches queue {} beyond truncation {n}",
                    initial.frontier
                )));
            }
            if n + 1 > cap {
                return Err(Error::bad_input(format!(
                    "truncation {n} needs field streams up to queue {}, cap is {cap}",
                    n + 1
                )));
            }
        }
        if initial.frontier > cap {
            return Err(Error::bad_input("initial occupancy beyond the field cap"));
        }
        let mut occ = vec![0u64; cap as usize + 2];
        for (&k, &c) in &initial.gaps {
            occ[k as usize] = c;
        }
        Ok(FieldSystem {
            occ,
            x1: initial.x1,
            total: initial.total_customers,
            entered: 0,
            exited: 0,
            boundary,
            cap,
        })
    }

    pub fn occupancy(&self, k: u32) -> u64 {
        self.occ.get(k as usize).copied().unwrap_or(0)
    }

    /// Apply one arrow; returns whether it moved a customer.
    pub fn apply(&mut self, arrow: &Arrow) -> Result<bool> {
        let k = arrow.queue as usize;
        match arrow.dir {
            Direction::Right => {
                if arrow.queue == 0 {
                    // Exogenous injection at queue 1, all variants.
                    self.occ[1] += 1;
                    self.total += 1;
                    self.x1 -= 1;
                    self.entered += 1;
                    return Ok(true);
                }
                match self.boundary {
                    Boundary::SemiInfinite => {
                        if self.occ[k] == 0 {
                            return Ok(false);
                        }
                        if arrow.queue >= self.cap {
                            return Err(Error::CapReached {
                                cap: self.cap,
                                time: arrow.t,
                            });
                        }
                        self.occ[k] -= 1;
                        self.occ[k + 1] += 1;
                        Ok(true)
                    }
                    Boundary::LowerTruncated { n } | Boundary::UpperTruncated { n } => {
                        if arrow.queue > n || self.occ[k] == 0 {
                            return Ok(false);
                        }
                        self.occ[k] -= 1;
                        if arrow.queue == n {
                            // Served out of the truncated system (rate
                            // a_{n+1}); never returns.
                            self.total -= 1;
                        } else {
                            self.occ[k + 1] += 1;
                        }
                        Ok(true)
                    }
                }
            }
            Direction::Left => {
                if let Boundary::UpperTruncated { n } = self.boundary {
                    if arrow.queue == n + 1 {
                        // Unconditional exogenous inflow at queue n.
                        self.occ[n as usize] += 1;
                        self.total += 1;
                        return Ok(true);
                    }
                }
                if let Boundary::LowerTruncated { n } | Boundary::UpperTruncated { n } =
                    self.boundary
                {
                    if arrow.queue > n {
                        return Ok(false);
                    }
                }
                if self.occ[k] == 0 {
                    return Ok(false);
                }
                self.occ[k] -= 1;
                if arrow.queue == 1 {
                    self.total -= 1;
                    self.x1 += 1;
                    self.exited += 1;
                } else {
                    self.occ[k - 1] += 1;
                }
                Ok(true)
            }
        }
    }
}

/// Sampled trajectory point of one system.
pub type TrajPoint = (f64, i64, u64); // (t, x1, total)

/// Result of driving a single system through a field.
#[derive(Debug, Clone)]
pub struct ApplyResult {
    pub final_system: FieldSystem,
    pub moves: u64,
    pub trajectory: Vec<TrajPoint>,
}

/// Drive one system through the whole field in arrow order.
pub fn apply_field(
    initial: &GapState,
    field: &PoissonField,
    boundary: Boundary,
) -> Result<ApplyResult> {
    let mut sys = FieldSystem::new(initial, boundary, field.cap)?;
    let mut moves = 0;
    let mut trajectory = Vec::with_capacity(field.len() + 1);
    trajectory.push((0.0, sys.x1, sys.total));
    for arrow in field.arrows() {
        if sys.apply(arrow)? {
            moves += 1;
            trajectory.push((arrow.t, sys.x1, sys.total));
        }
    }
    Ok(ApplyResult {
        final_system: sys,
        moves,
        trajectory,
    })
}

/// An ordering violation observed during a coupled run (expected: none).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub arrow_index: usize,
    /// Queue at which the ordering failed, or 0 for the `x1` ordering.
    pub queue: u32,
}

/// Outcome of a sandwich run: the full system squeezed between its lower
/// and upper `N`-truncations under one field.
#[derive(Debug, Clone)]
pub struct SandwichReport {
    pub n: u32,
    pub arrows: usize,
    pub violations: Vec<Violation>,
    pub lower: ApplyResult,
    pub full: ApplyResult,
    pub upper: ApplyResult,
}

/// Drive the triple `(lower, full, upper)` through one field, asserting
/// the componentwise gap ordering and the `x1` ordering after every arrow.
pub fn sandwich_run(
    env: &RateEnvironment,
    initial: &GapState,
    n: u32,
    window: f64,
    cap: u32,
    seed: u64,
) -> Result<SandwichReport> {
    if initial.frontier > n {
        return Err(Error::bad_input(
            "initial configuration must live within the truncation",
        ));
    }
    let field = build_field(env, window, cap, seed)?;
    let mut lower = FieldSystem::new(initial, Boundary::LowerTruncated { n }, cap)?;
    let mut full = FieldSystem::new(initial, Boundary::SemiInfinite, cap)?;
    let mut upper = FieldSystem::new(initial, Boundary::UpperTruncated { n }, cap)?;
    let mut violations = Vec::new();
    let mut lower_traj = vec![(0.0, lower.x1, lower.total)];
    let mut full_traj = vec![(0.0, full.x1, full.total)];
    let mut upper_traj = vec![(0.0, upper.x1, upper.total)];
    let mut moves = [0u64; 3];
    for (i, arrow) in field.arrows().iter().enumerate() {
        if lower.apply(arrow)? {
            moves[0] += 1;
            lower_traj.push((arrow.t, lower.x1, lower.total));
        }
        if full.apply(arrow)? {
            moves[1] += 1;
            full_traj.push((arrow.t, full.x1, full.total));
        }
        if upper.apply(arrow)? {
            moves[2] += 1;
            upper_traj.push((arrow.t, upper.x1, upper.total));
        }
        for k in 1..=n {
            let (lo, mid, hi) = (
                lower.occupancy(k),
                full.occupancy(k),
                upper.occupancy(k),
            );
            if lo > mid || mid > hi {
                violations.push(Violation {
                    t: arrow.t,
                    arrow_index: i,
                    queue: k,
                });
            }
        }
        if lower.x1 > full.x1 || full.x1 > upper.x1 {
            violations.push(Violation {
                t: arrow.t,
                arrow_index: i,
                queue: 0,
            });
        }
    }
    let arrows = field.len();
    Ok(SandwichReport {
        n,
        arrows,
        violations,
        lower: ApplyResult {
            final_system: lower,
            moves: moves[0],
            trajectory: lower_traj,
        },
        full: ApplyResult {
            final_system: full,
            moves: moves[1],
            trajectory: full_traj,
        },
        upper: ApplyResult {
            final_system: upper,
            moves: moves[2],
            trajectory: upper_traj,
        },
    })
}

/// Two-class system: first-class customers have strict service priority,
/// so they evolve exactly as the lower single-class system while
/// first + second class together evolve as the upper one.
#[derive(Debug, Clone)]
pub struct TwoClassSystem {
    pub first: Vec<u64>,
    pub second: Vec<u64>,
    cap: u32,
}

impl TwoClassSystem {
    pub fn new(lower: &GapState, upper: &GapState, cap: u32) -> Result<Self> {
        if lower.frontier > cap || upper.frontier > cap {
            return Err(Error::bad_input("initial occupancy beyond the field cap"));
        }
        let mut first = vec![0u64; cap as usize + 2];
        let mut second = vec![0u64; cap as usize + 2];
        for (&k, &c) in &lower.gaps {
            first[k as usize] = c;
        }
        for (&k, &c) in &upper.gaps {
            let f = first[k as usize];
            if c < f {
                return Err(Error::bad_input(format!(
                    "upper initial state not componentwise above lower at queue {k}"
                )));
            }
            second[k as usize] = c - f;
        }
        Ok(TwoClassSystem { first, second, cap })
    }

    /// Apply an arrow under the priority rule: service consumes a
    /// first-class customer if one is present, else a second-class one.
    /// Exogenous arrivals are first-class.
    pub fn apply(&mut self, arrow: &Arrow) -> Result<bool> {
        let k = arrow.queue as usize;
        match arrow.dir {
            Direction::Right => {
                if arrow.queue == 0 {
                    self.first[1] += 1;
                    return Ok(true);
                }
                if arrow.queue >= self.cap {
                    if self.first[k] + self.second[k] > 0 {
                        return Err(Error::CapReached {
                            cap: self.cap,
                            time: arrow.t,
                        });
                    }
                    return Ok(false);
                }
                if self.first[k] > 0 {
                    self.first[k] -= 1;
                    self.first[k + 1] += 1;
                    Ok(true)
                } else if self.second[k] > 0 {
                    self.second[k] -= 1;
                    self.second[k + 1] += 1;
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
            Direction::Left => {
                if arrow.queue == 0 {
                    return Ok(false);
                }
                if self.first[k] > 0 {
                    self.first[k] -= 1;
                    if arrow.queue > 1 {
                        self.first[k - 1] += 1;
                    }
                    Ok(true)
                } else if self.second[k] > 0 {
                    self.second[k] -= 1;
                    if arrow.queue > 1 {
                        self.second[k - 1] += 1;
                    }
                    Ok(true)
                } else {
                    Ok(false)
                }
            }
        }
    }
}

/// Outcome of a two-class run.
#[derive(Debug, Clone)]
pub struct TwoClassReport {
    pub arrows: usize,
    /// Arrows at which either projection failed to match its single-class
    /// reference system (expected: none).
    pub violations: Vec<Violation>,
    pub final_first: Vec<u64>,
    pub final_second: Vec<u64>,
}

/// Run the two-class coupling from `lower <= upper`, checking after every
/// arrow that the first-class projection equals the plain system started
/// from `lower` and the class-blind projection equals the plain system
/// started from `upper`.
pub fn two_class_run(
    env: &RateEnvironment,
    lower: &GapState,
    upper: &GapState,
    window: f64,
    cap: u32,
    seed: u64,
) -> Result<TwoClassReport> {
    for (&k, &c) in &lower.gaps {
        if upper.occupancy(k) < c {
            return Err(Error::bad_input(format!(
                "lower initial state exceeds upper at queue {k}"
            )));
        }
    }
    let field = build_field(env, window, cap, seed)?;
    let mut two = TwoClassSystem::new(lower, upper, cap)?;
    let mut ref_lower = FieldSystem::new(lower, Boundary::SemiInfinite, cap)?;
    let mut ref_upper = FieldSystem::new(upper, Boundary::SemiInfinite, cap)?;
    let mut violations = Vec::new();
    for (i, arrow) in field.arrows().iter().enumerate() {
        two.apply(arrow)?;
        ref_lower.apply(arrow)?;
        ref_upper.apply(arrow)?;
        for k in 1..=cap {
            let f = two.first[k as usize];
            let s = two.second[k as usize];
            if f != ref_lower.occupancy(k) || f + s != ref_upper.occupancy(k) {
                violations.push(Violation {
                    t: arrow.t,
                    arrow_index: i,
                    queue: k,
                });
            }
        }
    }
    let arrows = field.len();
    Ok(TwoClassReport {
        arrows,
        violations,
        final_first: two.first,
        final_second: two.second,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dog_sheep() -> RateEnvironment {
        RateEnvironment::dog_sheep(0.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn empty_window_empty_field() {
        let f = build_field(&dog_sheep(), 0.0, 8, 1).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn field_deterministic() {
        let a = build_field(&dog_sheep(), 50.0, 16, 7).unwrap();
        let b = build_field(&dog_sheep(), 50.0, 16, 7).unwrap();
        assert_eq!(a.arrows(), b.arrows());
    }

    #[test]
    fn arrow_times_strictly_increasing() {
        let f = build_field(&dog_sheep(), 100.0, 16, 3).unwrap();
        for w in f.arrows().windows(2) {
            assert!(w[0].t < w[1].t);
        }
    }

    #[test]
    fn stream_counts_poisson_scale() {
        // Left-arrow count of each interior queue ~ Poisson(window * b_k).
        let window = 1000.0;
        let f = build_field(&dog_sheep(), window, 64, 11).unwrap();
        for &(q, dir, count) in f.stream_counts() {
            if q >= 1 && dir == Direction::Left {
                let rate = dog_sheep().rate_at(q).unwrap().1;
                let mean = rate * window;
                assert!(
                    (count as f64 - mean).abs() < 4.0 * mean.sqrt(),
                    "queue {q}: count {count} vs mean {mean}"
                );
            }
        }
    }

    #[test]
    fn single_injection_arrow() {
        let env = dog_sheep();
        let mut field = build_field(&env, 0.0, 4, 1).unwrap();
        field.arrows = vec![Arrow {
            t: 1.0,
            queue: 0,
            dir: Direction::Right,
        }];
        field.window = 2.0;
        let out = apply_field(&GapState::heaviside(), &field, Boundary::SemiInfinite).unwrap();
        assert_eq!(out.final_system.occupancy(1), 1);
        assert_eq!(out.final_system.x1, -1);
        assert_eq!(out.moves, 1);
    }

    #[test]
    fn lower_truncation_loses_customers_at_n() {
        let env = dog_sheep();
        let mut field = build_field(&env, 0.0, 4, 1).unwrap();
        field.arrows = vec![Arrow {
            t: 0.5,
            queue: 2,
            dir: Direction::Right,
        }];
        field.window = 1.0;
        let init = GapState::from_gaps(&[(2, 1)]).unwrap();
        let out = apply_field(&init, &field, Boundary::LowerTruncated { n: 2 }).unwrap();
        assert_eq!(out.final_system.total, 0);
        assert_eq!(out.final_system.occupancy(2), 0);
        assert_eq!(out.final_system.occupancy(3), 0);
    }

    #[test]
    fn sandwich_ordering_holds() {
        let env = dog_sheep();
        let init = GapState::from_gaps(&[(1, 2), (3, 1)]).unwrap();
        let rep = sandwich_run(&env, &init, 4, 150.0, 128, 21).unwrap();
        assert!(rep.arrows > 10_000);
        assert!(rep.violations.is_empty(), "violations: {:?}", rep.violations);
    }

    #[test]
    fn untouched_truncation_gives_identical_paths() {
        // N far beyond any activity in a short window: the three systems
        // coincide.
        let env = dog_sheep();
        let rep = sandwich_run(&env, &GapState::heaviside(), 48, 3.0, 64, 5).unwrap();
        assert!(rep.violations.is_empty());
        assert_eq!(rep.lower.final_system.occ, rep.full.final_system.occ);
        assert_eq!(rep.full.final_system.occ, rep.upper.final_system.occ);
        assert_eq!(rep.lower.final_system.x1, rep.upper.final_system.x1);
    }

    #[test]
    fn two_class_equal_initials_identical() {
        let env = dog_sheep();
        let init = GapState::from_gaps(&[(1, 1)]).unwrap();
        let rep = two_class_run(&env, &init, &init, 100.0, 32, 13).unwrap();
        assert!(rep.violations.is_empty());
        assert!(rep.final_second.iter().all(|&s| s == 0));
    }

    #[test]
    fn two_class_projections_match_references() {
        let env = dog_sheep();
        let lower = GapState::heaviside();
        let upper = GapState::from_gaps(&[(1, 3)]).unwrap();
        let rep = two_class_run(&env, &lower, &upper, 300.0, 48, 17).unwrap();
        assert!(rep.arrows > 5_000);
        assert!(rep.violations.is_empty(), "violations: {:?}", rep.violations);
    }

    #[test]
    fn dominated_initial_precondition_enforced() {
        let env = dog_sheep();
        let lower = GapState::from_gaps(&[(2, 2)]).unwrap();
        let upper = GapState::from_gaps(&[(2, 1)]).unwrap();
        assert!(two_class_run(&env, &lower, &upper, 1.0, 8, 1).is_err());
    }
}
