//! Stable-traffic-equation solver.
//!
//! The traffic equation `(b_k + a_{k+1}) rho_k = a_k rho_{k-1} + b_{k+1} rho_{k+1}`
//! with `rho_0 = 1` has the one-parameter solution family `rho = alpha + v beta`,
//! where `alpha_k` is the product of rate ratios and `beta_k` the associated
//! particular solution. This module computes those tables in log domain,
//! the minimal speed `v0`, the admissible speed set, occupancy solutions,
//! their summability class, and finite-system speeds.
//!
//! Numerically the primary series is `S_k = beta_k / alpha_k`, which obeys
//! `S_{k+1} = S_k + 1/(a_{k+1} alpha_k)` with strictly positive increments;
//! `alpha` lives as `log alpha` so factorial growth or geometric decay of the
//! rate products cannot overflow. Occupancies are assembled as
//! `rho_k = alpha_k (1 + v S_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{RateEnvironment, Tail};

/// Occupancies within this distance of the boundary value 1 are reported as
/// boundary-indeterminate, never admitted. The homogeneous `a = b`
/// environment produces `rho_k = 1` exactly and must be rejected.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Default depth cap for series scanned without an analytic tail.
pub const DEFAULT_KMAX: u32 = 1_000_000;

/// Default relative-increment tolerance for capped series.
pub const DEFAULT_SERIES_TOL: f64 = 1e-14;

/// Whether a verdict rests on exact tail analysis or on a finite scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exactness {
    Exact,
    BoundedK(u32),
}

/// Log-domain traffic tables up to a truncation depth.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficTables {
    log_alpha: Vec<f64>,
    s: Vec<f64>,
}

impl TrafficTables {
    /// Compute tables for `k = 0..=k_max`. Requires `A0`.
    pub fn compute(env: &RateEnvironment, k_max: u32) -> Result<Self> {
        env.require_a0()?;
        let mut log_alpha = Vec::with_capacity(k_max as usize + 1);
        let mut s = Vec::with_capacity(k_max as usize + 1);
        log_alpha.push(0.0); // alpha_0 = 1
        s.push(0.0); // beta_0 = 0
        let mut la = 0.0;
        let mut rates = env.ln_rates();
        for k in 0..k_max {
            let (lna, lnb) = rates.next().ok_or(Error::IndexOutOfRange {
                index: k + 1,
                max: env.prefix_len(),
            })?;
            let delta = (-(lna + la)).exp(); // 1 / (a_{k+1} alpha_k)
            s.push(s[k as usize] + delta);
            la += lna - lnb;
            log_alpha.push(la);
        }
        Ok(TrafficTables { log_alpha, s })
    }

    /// Largest tabulated index.
    pub fn depth(&self) -> u32 {
        (self.log_alpha.len() - 1) as u32
    }

    pub fn log_alpha(&self, k: u32) -> f64 {
        self.log_alpha[k as usize]
    }

    pub fn alpha(&self, k: u32) -> f64 {
        self.log_alpha[k as usize].exp()
    }

    /// The ratio series `S_k = beta_k / alpha_k` (units of time).
    pub fn s(&self, k: u32) -> f64 {
        self.s[k as usize]
    }

    pub fn beta(&self, k: u32) -> f64 {
        self.alpha(k) * self.s(k)
    }

    /// Traffic-equation solution `rho_k = alpha_k (1 + v S_k)`.
    pub fn rho(&self, k: u32, v: f64) -> f64 {
        self.alpha(k) * (1.0 + v * self.s(k))
    }
}

/// Convergence status of the `v0` computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum V0Status {
    /// Tail summed in closed form.
    ExactTail,
    /// Relative increment fell below tolerance.
    Converged,
    /// Depth cap hit first; `lower_bound <= v0` rigorously, `extrapolated`
    /// continues the last observed increment ratio geometrically.
    Capped { lower_bound: f64, extrapolated: f64 },
}

/// Minimal speed together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V0Result {
    pub v0: f64,
    #[serde(flatten)]
    pub status: V0Status,
}

/// Increment ratio of the `S` series in the tail region, if analytic.
fn tail_increment_ratio(env: &RateEnvironment) -> Option<f64> {
    match env.tail() {
        Tail::Constant { a, b } => Some(b / a),
        Tail::Factorial { scale } => Some(1.0 / scale),
        Tail::None => None,
    }
}

/// Minimal speed `v0 = -1 / lim_k S_k`, in `(-a_1, 0]`.
pub fn compute_v0(env: &RateEnvironment, tol: f64, k_max: u32) -> Result<V0Result> {
    env.require_a0()?;
    if let Some(ratio) = tail_increment_ratio(env) {
        let p = env.prefix_len();
        let tables = TrafficTables::compute(env, p)?;
        if ratio >= 1.0 {
            return Ok(V0Result {
                v0: 0.0,
                status: V0Status::ExactTail,
            });
        }
        // Increments are exactly geometric from index p on.
        let (lna, _) = env.ln_rate_at(p + 1)?;
        let delta_p = (-(lna + tables.log_alpha(p))).exp();
        let s_inf = tables.s(p) + delta_p / (1.0 - ratio);
        return Ok(V0Result {
            v0: -1.0 / s_inf,
            status: V0Status::ExactTail,
        });
    }
    // No tail: scan the defined range.
    let k_stop = k_max.min(env.max_index().unwrap_or(k_max));
    let mut la = 0.0;
    let mut s = 0.0;
    let mut delta = f64::INFINITY;
    let mut prev_delta = f64::INFINITY;
    let mut rates = env.ln_rates();
    for _ in 0..k_stop {
        let (lna, lnb) = rates.next().expect("within defined range");
        prev_delta = delta;
        delta = (-(lna + la)).exp();
        s += delta;
        la += lna - lnb;
        if delta < tol * s {
            return Ok(V0Result {
                v0: if s.is_finite() { -1.0 / s } else { 0.0 },
                status: V0Status::Converged,
            });
        }
    }
    // Capped: -1/S_K bounds v0 from below; continuing the last observed
    // increment ratio geometrically gives a point estimate.
    let lower_bound = -1.0 / s;
    let ratio = delta / prev_delta;
    let extrapolated = if ratio.is_finite() && ratio < 1.0 {
        -1.0 / (s + delta * ratio / (1.0 - ratio))
    } else {
        0.0
    };
    Ok(V0Result {
        v0: extrapolated,
        status: V0Status::Capped {
            lower_bound,
            extrapolated,
        },
    })
}

/// Admissibility verdict for one occupancy solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Admissibility {
    Admissible,
    /// `index` is the first violating queue when the violation is at a
    /// finite tabulated index; `None` means the tail analysis rejects.
    NotAdmissible { index: Option<u32> },
    /// The solution touches the boundary value 1 within [`BOUNDARY_TOL`].
    BoundaryIndeterminate { index: Option<u32> },
}

impl Admissibility {
    pub fn is_admissible(&self) -> bool {
        matches!(self, Admissibility::Admissible)
    }
}

fn judge(rho: f64, k: Option<u32>) -> Option<Admissibility> {
    if rho <= 0.0 {
        Some(Admissibility::NotAdmissible { index: k })
    } else if (rho - 1.0).abs() <= BOUNDARY_TOL {
        Some(Admissibility::BoundaryIndeterminate { index: k })
    } else if rho > 1.0 {
        Some(Admissibility::NotAdmissible { index: k })
    } else {
        None
    }
}

/// Decide whether `rho = alpha + v beta` is admissible (`0 < rho_k < 1` for
/// all `k >= 1`), with exact tail analysis when the tail is analytic.
pub fn admissibility(env: &RateEnvironment, v: f64, k_max: u32) -> Result<(Admissibility, Exactness)> {
    env.require_a0()?;
    match env.tail() {
        Tail::Constant { a, b } => {
            let start = env.prefix_len().max(1);
            let tables = TrafficTables::compute(env, start)?;
            for k in 1..=start {
                if let Some(bad) = judge(tables.rho(k, v), Some(k)) {
                    return Ok((bad, Exactness::Exact));
                }
            }
            let r_start = tables.rho(start, v);
            Ok((constant_tail_admissibility(a, b, v, r_start), Exactness::Exact))
        }
        Tail::Factorial { scale } => {
            // rho_k -> 0 factorially; scan until a rigorous envelope shows
            // every later value is far inside (0, 1).
            let p = env.prefix_len();
            let settle = p.max(1) + (2.0 * scale).ceil() as u32 + 24;
            let mut depth = settle;
            loop {
                let tables = TrafficTables::compute(env, depth)?;
                for k in 1..=depth {
                    if let Some(bad) = judge(tables.rho(k, v), Some(k)) {
                        return Ok((bad, Exactness::Exact));
                    }
                }
                // Beyond `depth` (chosen with scale/(k+2) <= 1/2) the envelope
                // alpha_k + |v| beta_k halves each step.
                let envl = tables.alpha(depth) + v.abs() * tables.beta(depth);
                if envl < 1e-10 {
                    return Ok((Admissibility::Admissible, Exactness::Exact));
                }
                depth += 64;
                if depth > settle + 4096 {
                    return Ok((Admissibility::Admissible, Exactness::BoundedK(depth)));
                }
            }
        }
        Tail::None => {
            let stop = env.max_index().unwrap_or(k_max).min(k_max);
            let tables = TrafficTables::compute(env, stop)?;
            for k in 1..=stop {
                if let Some(bad) = judge(tables.rho(k, v), Some(k)) {
                    return Ok((bad, Exactness::BoundedK(stop)));
                }
            }
            Ok((Admissibility::Admissible, Exactness::BoundedK(stop)))
        }
    }
}

/// Tail verdict for a constant tail `(a, b)`, given the exact occupancy
/// `r_start` at the last prefix-or-first index. For `k` past that point the
/// occupancies follow `rho_{k+1} = (a/b) rho_k + v/b` exactly.
fn constant_tail_admissibility(a: f64, b: f64, v: f64, r_start: f64) -> Admissibility {
    let q = a / b;
    if q < 1.0 {
        let fp = v / (b - a);
        if fp > 1.0 + BOUNDARY_TOL {
            return Admissibility::NotAdmissible { index: None };
        }
        if (fp - 1.0).abs() <= BOUNDARY_TOL {
            // Limit sits on the boundary: fine when approached from below,
            // indeterminate when the path crosses into the tolerance band.
            return if r_start < fp {
                Admissibility::Admissible
            } else {
                Admissibility::BoundaryIndeterminate { index: None }
            };
        }
        if fp < 0.0 && r_start > fp {
            // Monotone decrease to a negative limit crosses zero.
            return Admissibility::NotAdmissible { index: None };
        }
        Admissibility::Admissible
    } else if q == 1.0 {
        if v > 0.0 {
            Admissibility::NotAdmissible { index: None }
        } else if v < 0.0 {
            Admissibility::NotAdmissible { index: None }
        } else {
            // Constant tail occupancy r_start, already judged at its own
            // index; nothing further can go wrong.
            Admissibility::Admissible
        }
    } else {
        // Unstable affine recursion: any deviation from the fixed point
        // grows geometrically. Never iterate here; classify by the
        // deviation of the exactly-computed start value.
        let fp = v / (b - a);
        let dev = r_start - fp;
        let tol = 1e-9 * fp.abs().max(r_start.abs()).max(1.0);
        if dev > tol || dev < -tol {
            Admissibility::NotAdmissible { index: None }
        } else if (fp - 1.0).abs() <= BOUNDARY_TOL || fp <= 0.0 {
            Admissibility::BoundaryIndeterminate { index: None }
        } else if fp > 1.0 {
            Admissibility::NotAdmissible { index: None }
        } else {
            Admissibility::Admissible
        }
    }
}

/// Shape of the admissible speed set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RightEnd {
    Empty,
    Singleton,
    Open,
    Closed,
    /// Tail-less environment: openness is undecidable.
    Unknown,
}

/// The admissible speed set, an interval `[v0, v1]`, `[v0, v1)`, singleton
/// or empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedSet {
    pub v0: f64,
    pub v1: Option<f64>,
    pub right_end: RightEnd,
    pub exactness: Exactness,
    pub v0_admissibility: Admissibility,
}

impl SpeedSet {
    pub fn is_empty(&self) -> bool {
        self.right_end == RightEnd::Empty
    }

    /// Membership test against the computed representation.
    pub fn contains(&self, v: f64) -> bool {
        match self.right_end {
            RightEnd::Empty => false,
            RightEnd::Singleton => (v - self.v0).abs() <= BOUNDARY_TOL,
            RightEnd::Open => v >= self.v0 && v < self.v1.unwrap(),
            RightEnd::Closed | RightEnd::Unknown => v >= self.v0 && v <= self.v1.unwrap(),
        }
    }
}

/// Compute the admissible speed set.
pub fn admissible_set(env: &RateEnvironment, k_max: u32) -> Result<SpeedSet> {
    env.require_a0()?;
    let v0 = compute_v0(env, DEFAULT_SERIES_TOL, k_max)?;
    let (v0_adm, adm_exact) = admissibility(env, v0.v0, k_max)?;
    let exactness = match (v0.status, adm_exact) {
        (V0Status::ExactTail, Exactness::Exact) => Exactness::Exact,
        (_, Exactness::BoundedK(k)) => Exactness::BoundedK(k),
        (V0Status::Converged | V0Status::Capped { .. }, _) => {
            Exactness::BoundedK(env.max_index().unwrap_or(k_max).min(k_max))
        }
    };
    if !v0_adm.is_admissible() {
        return Ok(SpeedSet {
            v0: v0.v0,
            v1: None,
            right_end: RightEnd::Empty,
            exactness,
            v0_admissibility: v0_adm,
        });
    }
    let (v1, attained) = right_endpoint(env, k_max)?;
    let sing_tol = BOUNDARY_TOL * v0.v0.abs().max(1.0);
    let right_end = if v1 - v0.v0 <= sing_tol {
        RightEnd::Singleton
    } else if env.tail() == Tail::None {
        RightEnd::Unknown
    } else if attained {
        RightEnd::Open
    } else {
        RightEnd::Closed
    };
    let v1 = if right_end == RightEnd::Singleton { v0.v0 } else { v1 };
    Ok(SpeedSet {
        v0: v0.v0,
        v1: Some(v1),
        right_end,
        exactness,
        v0_admissibility: v0_adm,
    })
}

/// Right endpoint `inf_k (1 - alpha_k)/beta_k` and whether the infimum is
/// attained at a finite index (attained => the endpoint is excluded).
fn right_endpoint(env: &RateEnvironment, k_max: u32) -> Result<(f64, bool)> {
    match env.tail() {
        Tail::Constant { a, b } => {
            let start = env.prefix_len().max(1);
            let tables = TrafficTables::compute(env, start)?;
            let mut m_scan = f64::INFINITY;
            for k in 1..=start {
                m_scan = m_scan.min((1.0 - tables.alpha(k)) / tables.beta(k));
            }
            let q = a / b;
            if q < 1.0 {
                let beta_star = 1.0 / (b - a);
                let alpha_s = tables.alpha(start);
                let beta_s = tables.beta(start);
                let g_lim = b - a; // (1 - 0) / beta_star
                // Sign of g_k - g_lim in the tail is -sign(d) for all k.
                let d = alpha_s * beta_star + beta_s - beta_star;
                let eps_d = 1e-12 * (alpha_s * beta_star + beta_s.abs() + beta_star);
                if d >= -eps_d {
                    // Tail dips to (or equals) values at or below the limit:
                    // the infimum is attained at a finite index.
                    Ok((m_scan.min(g_lim), true))
                } else {
                    // Tail stays above its limit.
                    let eps_g = 1e-12 * g_lim.abs().max(1.0);
                    if m_scan <= g_lim + eps_g {
                        Ok((m_scan.min(g_lim), true))
                    } else {
                        Ok((g_lim, false))
                    }
                }
            } else if q == 1.0 {
                // g_k -> 0 from above (alpha constant, < 1 in the non-empty
                // case); infimum only in the limit.
                if m_scan <= 0.0 {
                    Ok((m_scan, true))
                } else {
                    Ok((0.0, false))
                }
            } else {
                // g_k decreases to v0 from above; infimum in the limit.
                let v0 = compute_v0(env, DEFAULT_SERIES_TOL, k_max)?.v0;
                if m_scan <= v0 {
                    Ok((m_scan, true))
                } else {
                    Ok((v0, false))
                }
            }
        }
        Tail::Factorial { scale } => {
            let p = env.prefix_len();
            let mut depth = p.max(1) + (2.0 * scale).ceil() as u32 + 24;
            loop {
                let tables = TrafficTables::compute(env, depth)?;
                let mut m_scan = f64::INFINITY;
                for k in 1..=depth {
                    m_scan = m_scan.min((1.0 - tables.alpha(k)) / tables.beta(k));
                }
                // Beyond depth, alpha and beta halve each step, so
                // g_j >= (1 - alpha_depth) / beta_depth grows.
                let floor = (1.0 - tables.alpha(depth)) / tables.beta(depth);
                if floor > 2.0 * m_scan.abs().max(1.0) {
                    return Ok((m_scan, true));
                }
                depth += 64;
                if depth > 1 << 16 {
                    return Ok((m_scan, true));
                }
            }
        }
        Tail::None => {
            let stop = env.max_index().unwrap_or(k_max).min(k_max);
            let tables = TrafficTables::compute(env, stop)?;
            let mut m_scan = f64::INFINITY;
            for k in 1..=stop {
                m_scan = m_scan.min((1.0 - tables.alpha(k)) / tables.beta(k));
            }
            Ok((m_scan, false))
        }
    }
}

/// Summability of `sum_k rho_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summability {
    Yes,
    No,
    Undecidable,
}

/// A traffic-equation solution `rho = alpha + v beta` with its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSolution {
    pub v: f64,
    /// Occupancy parameters for queues `1..=K`.
    pub rho: Vec<f64>,
    pub admissibility: Admissibility,
    /// `lim_k rho_k` when the tail makes it exist and finite.
    pub tail_limit: Option<f64>,
    pub summable: Summability,
}

/// Solve for the occupancy profile at speed `v`.
///
/// A `v` outside the admissible set still yields the raw solution, flagged
/// not admissible.
pub fn solve_rho(env: &RateEnvironment, v: f64, depth: u32) -> Result<AdmissibleSolution> {
    env.require_a0()?;
    let tables = TrafficTables::compute(env, depth)?;
    let rho: Vec<f64> = (1..=depth).map(|k| tables.rho(k, v)).collect();
    let (adm, _) = admissibility(env, v, depth.max(DEFAULT_KMAX.min(1 << 14)))?;
    let (tail_limit, summable) = match env.tail() {
        Tail::Constant { a, b } => {
            let q = a / b;
            if q < 1.0 {
                let fp = v / (b - a);
                (Some(fp), if v == 0.0 { Summability::Yes } else { Summability::No })
            } else if q == 1.0 {
                if v == 0.0 {
                    let p = env.prefix_len().max(1);
                    let t = TrafficTables::compute(env, p)?;
                    (Some(t.rho(p, v)), Summability::No)
                } else {
                    (None, Summability::No)
                }
            } else {
                // Divergent except exactly on the stable manifold v = v0.
                let v0 = compute_v0(env, DEFAULT_SERIES_TOL, DEFAULT_KMAX)?.v0;
                if (v - v0).abs() <= 1e-12 * v0.abs().max(1.0) {
                    (Some(v / (b - a)), Summability::No)
                } else {
                    (None, Summability::No)
                }
            }
        }
        Tail::Factorial { .. } => (Some(0.0), Summability::Yes),
        Tail::None => (None, Summability::Undecidable),
    };
    Ok(AdmissibleSolution {
        v,
        rho,
        admissibility: adm,
        tail_limit,
        summable,
    })
}

/// Classification of the finitely-supported admissible subclass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum VfClass {
    /// `sum alpha` and `sum beta` both converge: every admissible solution
    /// is finitely supported.
    EqualsV,
    /// `sum alpha` converges, `sum beta` diverges: only the zero-speed
    /// solution can be finitely supported, and it is admissible.
    SingletonZero,
    /// Both diverge but one negative-speed solution is summable (possible
    /// only when the inverse-rate series converges).
    SingletonNegative { v: f64 },
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VfReport {
    #[serde(flatten)]
    pub class: VfClass,
    pub exactness: Exactness,
}

/// Classify the finitely-supported admissible subclass.
pub fn classify_vf(env: &RateEnvironment, k_max: u32) -> Result<VfReport> {
    env.require_a0()?;
    match env.tail() {
        Tail::Constant { a, b } => {
            let exact = Exactness::Exact;
            if a < b {
                // sum alpha converges geometrically, sum beta diverges
                // (beta_k -> 1/(b-a) > 0).
                let (adm, _) = admissibility(env, 0.0, k_max)?;
                if adm.is_admissible() {
                    Ok(VfReport { class: VfClass::SingletonZero, exactness: exact })
                } else {
                    Ok(VfReport { class: VfClass::Empty, exactness: exact })
                }
            } else {
                // sum alpha diverges; with a constant tail the inverse-rate
                // series diverges too, which forces the class empty.
                Ok(VfReport { class: VfClass::Empty, exactness: exact })
            }
        }
        Tail::Factorial { .. } => Ok(VfReport { class: VfClass::EqualsV, exactness: Exactness::Exact }),
        Tail::None => {
            let stop = env.max_index().unwrap_or(k_max).min(k_max);
            let tables = TrafficTables::compute(env, stop)?;
            let mut sum_alpha = 0.0;
            let mut sum_beta = 0.0;
            for k in 1..=stop {
                sum_alpha += tables.alpha(k);
                sum_beta += tables.beta(k);
            }
            let alpha_conv = tables.alpha(stop) < 1e-14 * sum_alpha;
            let beta_conv = tables.beta(stop) < 1e-14 * sum_beta;
            let class = if alpha_conv && beta_conv {
                VfClass::EqualsV
            } else if alpha_conv {
                let (adm, _) = admissibility(env, 0.0, stop)?;
                if adm.is_admissible() {
                    VfClass::SingletonZero
                } else {
                    VfClass::Empty
                }
            } else {
                let v0 = compute_v0(env, DEFAULT_SERIES_TOL, stop)?;
                let rho_last = tables.rho(stop, v0.v0);
                if v0.v0 < 0.0 && rho_last < 1e-12 {
                    VfClass::SingletonNegative { v: v0.v0 }
                } else {
                    VfClass::Empty
                }
            };
            Ok(VfReport { class, exactness: Exactness::BoundedK(stop) })
        }
    }
}

/// Limit superior of `alpha_k` and `beta_k`, exact under analytic tails.
pub fn limsups(env: &RateEnvironment) -> Option<(f64, f64)> {
    match env.tail() {
        Tail::Constant { a, b } => {
            let p = env.prefix_len().max(1);
            let tables = TrafficTables::compute(env, p).ok()?;
            if a < b {
                Some((0.0, 1.0 / (b - a)))
            } else if a == b {
                Some((tables.alpha(p), f64::INFINITY))
            } else {
                Some((f64::INFINITY, f64::INFINITY))
            }
        }
        Tail::Factorial { .. } => Some((0.0, 0.0)),
        Tail::None => None,
    }
}

/// A stable finite system of `n + 1` particles (`n` queues).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSystem {
    pub n: u32,
    /// Speed of the finite cloud, `(1 - alpha_{n+1}) / beta_{n+1}`.
    pub v_n: f64,
    /// Speed of the right-absorbing truncation (`b_{n+1}` set to zero),
    /// `-alpha_{n+1} / beta_{n+1}`; nondecreasing in `n` with limit `v0`.
    pub v_n0: f64,
    /// Occupancy parameters `rho_{n,k} = alpha_k + v_n beta_k`, `k = 1..=n`.
    pub rho: Vec<f64>,
}

/// Traffic solution of the finite system of `n + 1` particles.
pub fn finite_speed(env: &RateEnvironment, n: u32) -> Result<FiniteSystem> {
    for k in 1..=(n + 1) {
        let (a, b) = env.rate_at(k)?;
        if a <= 0.0 {
            return Err(Error::hypothesis("A0", format!("a_{k} = {a} must be positive")));
        }
        if k <= n && b <= 0.0 {
            return Err(Error::bad_input(format!(
                "b_{k} = {b}: interior right rates must be positive for the traffic solution"
            )));
        }
    }
    let tables = TrafficTables::compute(env, n)?;
    let (a_next, b_next) = env.rate_at(n + 1)?;
    let (lna_next, _) = env.ln_rate_at(n + 1)?;
    let s_next = tables.s(n) + (-(lna_next + tables.log_alpha(n))).exp();
    let v_n0 = -1.0 / s_next;
    // 1/alpha_{n+1} stays finite even when b_{n+1} = 0 (then v_n = v_n0).
    let inv_alpha_next = (-tables.log_alpha(n)).exp() * (b_next / a_next);
    let v_n = (inv_alpha_next - 1.0) / s_next;
    let rho = (1..=n).map(|k| tables.rho(k, v_n)).collect();
    Ok(FiniteSystem { n, v_n, v_n0, rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn homog(a: f64, b: f64) -> RateEnvironment {
        RateEnvironment::homogeneous(a, b).unwrap()
    }

    fn dog_sheep() -> RateEnvironment {
        RateEnvironment::dog_sheep(0.5, 1.0, 1.0).unwrap()
    }

    fn osmd() -> RateEnvironment {
        RateEnvironment::one_sheep_many_dogs(2.0, 1.0).unwrap()
    }

    fn rel_close(x: f64, y: f64, tol: f64) -> bool {
        (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-300)
    }

    #[test]
    fn homogeneous_tables() {
        let t = TrafficTables::compute(&homog(1.0, 2.0), 4).unwrap();
        let expect_alpha = [1.0, 0.5, 0.25, 0.125, 0.0625];
        for (k, &ea) in expect_alpha.iter().enumerate() {
            assert!(rel_close(t.alpha(k as u32), ea, 1e-12));
            // beta_k = (1 - (a/b)^k)/(b - a) = 1 - 2^{-k}
            let eb = 1.0 - 0.5f64.powi(k as i32);
            assert!(rel_close(t.beta(k as u32), eb, 1e-12), "beta_{k}");
        }
    }

    #[test]
    fn critical_homogeneous_tables() {
        let t = TrafficTables::compute(&homog(1.0, 1.0), 3).unwrap();
        for k in 0..=3u32 {
            assert!(rel_close(t.alpha(k), 1.0, 1e-14));
            assert!(rel_close(t.beta(k), k as f64, 1e-14));
        }
    }

    #[test]
    fn boundary_values() {
        let t = TrafficTables::compute(&dog_sheep(), 1).unwrap();
        assert_eq!(t.alpha(0), 1.0);
        assert_eq!(t.beta(0), 0.0);
    }

    #[test]
    fn v0_goldens() {
        let cases: Vec<(RateEnvironment, f64)> = vec![
            (homog(1.0, 2.0), 0.0),
            (homog(2.0, 1.0), -1.0),
            (dog_sheep(), 0.0),
            (osmd(), -0.5),
            (RateEnvironment::factorial(0.5).unwrap(), 0.0),
            (RateEnvironment::factorial(1.0).unwrap(), 0.0),
            (RateEnvironment::factorial(2.0).unwrap(), -1.0),
        ];
        for (env, expected) in cases {
            let r = compute_v0(&env, 1e-14, 1000).unwrap();
            assert!(
                rel_close(r.v0, expected, 1e-12),
                "env {env:?}: v0 = {} want {expected}",
                r.v0
            );
            assert_eq!(r.status, V0Status::ExactTail);
        }
    }

    #[test]
    fn admissible_sets_match_worked_examples() {
        // Homogeneous a < b: [0, b - a), half-open.
        let s = admissible_set(&homog(1.0, 2.0), 1000).unwrap();
        assert_eq!(s.right_end, RightEnd::Open);
        assert!(rel_close(s.v0, 0.0, 1e-12));
        assert!(rel_close(s.v1.unwrap(), 1.0, 1e-12));

        // Homogeneous a > b: empty.
        let s = admissible_set(&homog(2.0, 1.0), 1000).unwrap();
        assert!(s.is_empty());

        // Critical homogeneous: rho = 1 exactly, boundary-indeterminate.
        let s = admissible_set(&homog(1.0, 1.0), 1000).unwrap();
        assert!(s.is_empty());
        assert!(matches!(
            s.v0_admissibility,
            Admissibility::BoundaryIndeterminate { .. }
        ));

        // Dog and sheep: singleton {0}.
        let s = admissible_set(&dog_sheep(), 1000).unwrap();
        assert_eq!(s.right_end, RightEnd::Singleton);
        assert!(rel_close(s.v0, 0.0, 1e-12));

        // One sheep, many dogs: singleton {-1/2}.
        let s = admissible_set(&osmd(), 1000).unwrap();
        assert_eq!(s.right_end, RightEnd::Singleton);
        assert!(rel_close(s.v0, -0.5, 1e-12));

        // Factorial rates: [max(0, 1-a), 2-a), half-open.
        for (scale, lo, hi) in [(0.5, 0.0, 1.5), (1.0, 0.0, 1.0), (2.0, -1.0, 0.0)] {
            let s = admissible_set(&RateEnvironment::factorial(scale).unwrap(), 1000).unwrap();
            assert_eq!(s.right_end, RightEnd::Open, "scale {scale}");
            assert!(rel_close(s.v0, lo, 1e-12), "scale {scale} v0 {}", s.v0);
            assert!(rel_close(s.v1.unwrap(), hi, 1e-12), "scale {scale} v1 {:?}", s.v1);
        }
    }

    #[test]
    fn closed_right_end_exists() {
        // Prefix (0.1, 10) then tail (1, 2): every finite (1 - alpha_k)/beta_k
        // stays strictly above the tail limit 1, so the interval is closed.
        let env =
            RateEnvironment::new(vec![(0.1, 10.0)], Tail::Constant { a: 1.0, b: 2.0 }).unwrap();
        let s = admissible_set(&env, 1000).unwrap();
        assert_eq!(s.right_end, RightEnd::Closed);
        assert!(rel_close(s.v1.unwrap(), 1.0, 1e-12));
        // At the closed endpoint the solution is admissible.
        let (adm, _) = admissibility(&env, s.v1.unwrap(), 1000).unwrap();
        assert!(adm.is_admissible());
    }

    #[test]
    fn rho_goldens() {
        // Dog-sheep, v = 0: rho_k = a/b = 1/2.
        let sol = solve_rho(&dog_sheep(), 0.0, 32).unwrap();
        assert!(sol.admissibility.is_admissible());
        for &r in &sol.rho {
            assert!(rel_close(r, 0.5, 1e-12));
        }
        assert_eq!(sol.summable, Summability::No);

        // One sheep many dogs at v0 = -1/2: rho_k = 1/2.
        let sol = solve_rho(&osmd(), -0.5, 32).unwrap();
        assert!(sol.admissibility.is_admissible());
        for &r in &sol.rho {
            assert!(rel_close(r, 0.5, 1e-12));
        }
        assert_eq!(sol.tail_limit, Some(0.5));

        // Factorial scale 1, v = 1/2: rho_k = (1 + k/2)/(k+1)!.
        let sol = solve_rho(&RateEnvironment::factorial(1.0).unwrap(), 0.5, 12).unwrap();
        assert!(sol.admissibility.is_admissible());
        let mut fact = 1.0f64; // (k+1)!
        for (i, &r) in sol.rho.iter().enumerate() {
            let k = (i + 1) as f64;
            fact *= k + 1.0;
            assert!(rel_close(r, (1.0 + 0.5 * k) / fact, 1e-12), "k={k} r={r}");
        }
        assert_eq!(sol.summable, Summability::Yes);

        // Inadmissible v is reported but still solved.
        let sol = solve_rho(&homog(1.0, 2.0), 1.5, 8).unwrap();
        assert!(!sol.admissibility.is_admissible());
        assert!(rel_close(sol.rho[0], 0.5 + 1.5 * 0.5, 1e-12));
    }

    #[test]
    fn one_step_identity_and_recursion() {
        let envs = vec![
            homog(1.0, 2.0),
            dog_sheep(),
            osmd(),
            RateEnvironment::factorial(2.0).unwrap(),
            RateEnvironment::new(vec![(0.3, 0.7), (2.0, 1.5)], Tail::Constant { a: 1.1, b: 0.9 })
                .unwrap(),
        ];
        for env in envs {
            let t = TrafficTables::compute(&env, 40).unwrap();
            for &v in &[0.0, -0.25, 0.4, t.alpha(1)] {
                for k in 0..40u32 {
                    let (a1, b1) = env.rate_at(k + 1).unwrap();
                    let rk = t.rho(k, v);
                    let rk1 = t.rho(k + 1, v);
                    // One-step identity v = b_{k+1} rho_{k+1} - a_{k+1} rho_k.
                    let lhs = b1 * rk1 - a1 * rk;
                    assert!(
                        (lhs - v).abs() <= 1e-10 * (b1 * rk1.abs() + a1 * rk.abs()).max(1.0),
                        "one-step identity at k={k}, v={v}: {lhs} vs {v}"
                    );
                    // Affine recursion rho_{k+1} = (a/b) rho_k + v/b.
                    let rec = (a1 / b1) * rk + v / b1;
                    assert!(
                        rel_close(rk1, rec, 1e-10) || (rk1 - rec).abs() < 1e-12,
                        "recursion at k={k}"
                    );
                }
            }
        }
    }

    #[test]
    fn s_series_strictly_increasing() {
        for env in [homog(1.0, 2.0), dog_sheep(), osmd()] {
            let t = TrafficTables::compute(&env, 200).unwrap();
            for k in 0..200u32 {
                assert!(t.s(k + 1) > t.s(k));
            }
        }
    }

    #[test]
    fn vf_classifications() {
        assert!(matches!(
            classify_vf(&homog(1.0, 2.0), 1000).unwrap().class,
            VfClass::SingletonZero
        ));
        assert!(matches!(
            classify_vf(&dog_sheep(), 1000).unwrap().class,
            VfClass::Empty
        ));
        assert!(matches!(
            classify_vf(&osmd(), 1000).unwrap().class,
            VfClass::Empty
        ));
        assert!(matches!(
            classify_vf(&RateEnvironment::factorial(1.0).unwrap(), 1000)
                .unwrap()
                .class,
            VfClass::EqualsV
        ));
        // Homogeneous a > b: sum alpha diverges, class empty.
        assert!(matches!(
            classify_vf(&homog(2.0, 1.0), 1000).unwrap().class,
            VfClass::Empty
        ));
    }

    #[test]
    fn finite_speed_one_dog_n_sheep() {
        // a_1 = a, b_1 = a_2 = b_2 = ... = 1: v_N = (1-a)/(N+1),
        // rho_k = a + (1-a) k/(N+1).
        let env = RateEnvironment::dog_sheep(0.5, 1.0, 1.0).unwrap();
        let fs = finite_speed(&env, 3).unwrap();
        assert!(rel_close(fs.v_n, 0.125, 1e-12));
        let fs = finite_speed(&env, 2).unwrap();
        assert!(rel_close(fs.rho[0], 2.0 / 3.0, 1e-12));
        assert!(rel_close(fs.rho[1], 5.0 / 6.0, 1e-12));
    }

    #[test]
    fn v_n0_monotone_to_v0() {
        for env in [homog(1.0, 2.0), dog_sheep(), osmd()] {
            let v0 = compute_v0(&env, 1e-14, 1000).unwrap().v0;
            let mut prev = f64::NEG_INFINITY;
            for n in 1..=200 {
                let fs = finite_speed(&env, n).unwrap();
                assert!(
                    fs.v_n0 >= prev - 1e-15,
                    "v_n0 not monotone at n={n} for {env:?}"
                );
                assert!(fs.v_n0 <= v0 + 1e-12);
                prev = fs.v_n0;
            }
            assert!((prev - v0).abs() < 0.02, "v_200,0 = {prev}, v0 = {v0}");
        }
    }

    #[test]
    fn no_tail_reports_bounded_k() {
        let env = RateEnvironment::from_prefix(vec![(1.0, 2.0); 50]).unwrap();
        let s = admissible_set(&env, 1000).unwrap();
        assert!(matches!(s.exactness, Exactness::BoundedK(50)));
        assert_eq!(s.right_end, RightEnd::Unknown);
        let vf = classify_vf(&env, 1000).unwrap();
        assert!(matches!(vf.exactness, Exactness::BoundedK(50)));
    }

    #[test]
    fn speed_set_within_rate_bounds() {
        // V is contained in [-inf a_k, inf b_k].
        let envs = vec![homog(1.0, 2.0), dog_sheep(), osmd()];
        for env in envs {
            let s = admissible_set(&env, 1000).unwrap();
            if s.is_empty() {
                continue;
            }
            let mut inf_a = f64::INFINITY;
            let mut inf_b = f64::INFINITY;
            for k in 1..=64 {
                let (a, b) = env.rate_at(k).unwrap();
                inf_a = inf_a.min(a);
                inf_b = inf_b.min(b);
            }
            assert!(s.v0 >= -inf_a - 1e-12);
            assert!(s.v1.unwrap() <= inf_b + 1e-12);
            assert!(s.v0 > -env.rate_at(1).unwrap().0 && s.v0 <= 0.0);
        }
    }
}
