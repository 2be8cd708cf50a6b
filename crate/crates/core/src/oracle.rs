//! Brute-force reference solvers on truncated chains.
//!
//! A [`TruncatedChain`] enumerates all occupancy vectors of `n` queues
//! with total at most `c` and assembles the generator from the same rate
//! parameters as the simulator. [`TruncatedChain::stationary`] solves
//! `pi Q = 0` directly; [`TruncatedChain::transient`] runs uniformization
//! with a reported truncation error. Both report the probability mass
//! sitting on the total-customer cap, where the truncation distorts the
//! dynamics (arrivals there are blocked), so nothing is approximated
//! silently.
//!
//! These solvers validate the event-driven engine and the coupled
//! graphical runs distributionally, so they share no sampling code with
//! either.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::RateEnvironment;

/// Boundary rule at the last queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainBoundary {
    /// `b_{n+1} = 0`: customers served rightward at queue `n` exit.
    Lower,
    /// Finite system: exogenous inflow at queue `n` at rate `b_{n+1}`,
    /// outflow at rate `a_{n+1}`.
    ClosedFinite,
}

/// Hard limit on enumerated states.
pub const MAX_STATES: usize = 100_000;

/// Dense-solve threshold; larger chains use iterative stationary solves.
const DENSE_LIMIT: usize = 3_000;

/// A finite chain over `{eta in Z_+^n : sum eta <= c}`.
#[derive(Debug, Clone)]
pub struct TruncatedChain {
    n: usize,
    c: u64,
    boundary: ChainBoundary,
    /// `(a_k, b_k)` for `k = 1..=n+1`.
    rates: Vec<(f64, f64)>,
    /// Binomial table for ranked combinatorial state encoding.
    binom: Vec<Vec<f64>>,
    n_states: usize,
}

/// Number of compositions of length `n` with sum at most `c`:
/// `binom(n + c, n)`.
fn count_states(n: usize, c: u64) -> f64 {
    let mut acc = 1.0f64;
    for i in 1..=n {
        acc = acc * (c as f64 + i as f64) / i as f64;
    }
    acc
}

impl TruncatedChain {
    pub fn new(
        env: &RateEnvironment,
        n_queues: usize,
        customer_cap: u64,
        boundary: ChainBoundary,
    ) -> Result<Self> {
        if n_queues == 0 {
            return Err(Error::bad_input("need at least one queue"));
        }
        let total = count_states(n_queues, customer_cap);
        if total > MAX_STATES as f64 {
            return Err(Error::bad_input(format!(
                "state space of {total:.3e} states exceeds the {MAX_STATES} limit"
            )));
        }
        let mut rates = Vec::with_capacity(n_queues + 1);
        for k in 1..=(n_queues as u32 + 1) {
            let (a, b) = env.rate_at(k)?;
            if a <= 0.0 || !a.is_finite() || !b.is_finite() {
                return Err(Error::bad_input(format!(
                    "chain needs finite rates with positive a up to index {k}"
                )));
            }
            rates.push((a, b));
        }
        // binom[i][j] = C(i, j) for i <= n + c.
        let dim = n_queues + customer_cap as usize + 1;
        let mut binom = vec![vec![0.0f64; n_queues + 1]; dim];
        for row in binom.iter_mut() {
            row[0] = 1.0;
        }
        for i in 1..dim {
            for j in 1..=n_queues {
                let below = binom[i - 1][j - 1];
                let same = binom[i - 1][j];
                binom[i][j] = below + same;
            }
        }
        Ok(TruncatedChain {
            n: n_queues,
            c: customer_cap,
            boundary,
            rates,
            binom,
            n_states: total.round() as usize,
        })
    }

    pub fn n_queues(&self) -> usize {
        self.n
    }

    pub fn customer_cap(&self) -> u64 {
        self.c
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Rank of a state in the colex order of nondecreasing "boundary"
    /// encodings: composition with sum <= c mapped through partial sums.
    pub fn index_of(&self, eta: &[u64]) -> Option<usize> {
        if eta.len() != self.n {
            return None;
        }
        let sum: u64 = eta.iter().sum();
        if sum > self.c {
            return None;
        }
        // Encode as a strictly increasing sequence s_j = j + prefix_j and
        // rank it in the combinatorial number system.
        let mut rank = 0.0f64;
        let mut prefix = 0u64;
        for (j, &e) in eta.iter().enumerate() {
            prefix += e;
            let s = prefix as usize + j; // strictly increasing, < n + c
            rank += self.binom[s][j + 1];
        }
        Some(rank.round() as usize)
    }

    /// Inverse of [`Self::index_of`].
    pub fn state_of(&self, index: usize) -> Vec<u64> {
        let mut s = vec![0usize; self.n];
        let mut idx = index as f64;
        for j in (1..=self.n).rev() {
            // Largest m with C(m, j) <= idx.
            let mut m = j - 1;
            while m + 1 < self.binom.len() && self.binom[m + 1][j] <= idx {
                m += 1;
            }
            idx -= self.binom[m][j];
            s[j - 1] = m;
        }
        let mut eta = vec![0u64; self.n];
        let mut prev = 0u64;
        for (j, &sj) in s.iter().enumerate() {
            let prefix = (sj - j) as u64;
            eta[j] = prefix - prev;
            prev = prefix;
        }
        eta
    }

    /// Enumerate `(target_state, rate)` transitions out of `eta`.
    fn transitions(&self, eta: &[u64], mut emit: impl FnMut(Vec<u64>, f64)) {
        let sum: u64 = eta.iter().sum();
        let a1 = self.rates[0].0;
        // Exogenous arrival at queue 1 (blocked at the cap).
        if sum < self.c {
            let mut to = eta.to_vec();
            to[0] += 1;
            emit(to, a1);
        }
        if self.boundary == ChainBoundary::ClosedFinite && sum < self.c {
            // Inflow at queue n at rate b_{n+1}.
            let b_in = self.rates[self.n].1;
            if b_in > 0.0 {
                let mut to = eta.to_vec();
                to[self.n - 1] += 1;
                emit(to, b_in);
            }
        }
        for k in 1..=self.n {
            if eta[k - 1] == 0 {
                continue;
            }
            let (_, b_k) = self.rates[k - 1];
            let a_next = self.rates[k].0;
            // Leftward service: departure at queue 1, else hop down.
            if b_k > 0.0 {
                let mut to = eta.to_vec();
                to[k - 1] -= 1;
                if k >= 2 {
                    to[k - 2] += 1;
                }
                emit(to, b_k);
            }
            // Rightward service: exits the system at queue n (rate
            // a_{n+1}), else hops up.
            let mut to = eta.to_vec();
            to[k - 1] -= 1;
            if k < self.n {
                to[k] += 1;
            }
            emit(to, a_next);
        }
    }

    /// Sparse generator rows: `rows[i]` lists `(j, q_ij)` for `j != i`;
    /// `diag[i]` is the (negative) diagonal.
    fn generator(&self) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let m = self.n_states;
        let mut rows = vec![Vec::new(); m];
        let mut diag = vec![0.0; m];
        for i in 0..m {
            let eta = self.state_of(i);
            let mut out = 0.0;
            self.transitions(&eta, |to, rate| {
                let j = self.index_of(&to).expect("transition stays in the state space");
                rows[i].push((j, rate));
                out += rate;
            });
            diag[i] = -out;
        }
        (rows, diag)
    }

    /// Stationary distribution by solving `pi Q = 0`, `sum pi = 1`.
    pub fn stationary(&self, boundary_tol: f64) -> Result<StationaryResult> {
        let (rows, diag) = self.generator();
        let m = self.n_states;
        let pi = if m <= DENSE_LIMIT {
            // Dense solve of Q^T pi = 0 with the last balance equation
            // replaced by normalization.
            let mut a = vec![0.0f64; m * m];
            for i in 0..m {
                a[i * m + i] = diag[i];
            }
            for (i, row) in rows.iter().enumerate() {
                for &(j, q) in row {
                    a[j * m + i] += q; // transpose
                }
            }
            for j in 0..m {
                a[(m - 1) * m + j] = 1.0;
            }
            let mut rhs = vec![0.0f64; m];
            rhs[m - 1] = 1.0;
            solve_dense(&mut a, &mut rhs, m)?;
            rhs
        } else {
            // Power iteration on the uniformized kernel.
            let lambda = diag.iter().fold(0.0f64, |acc, &d| acc.max(-d)) * 1.05;
            let mut pi = vec![1.0 / m as f64; m];
            let mut next = vec![0.0f64; m];
            for _ in 0..200_000 {
                next.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..m {
                    let stay = 1.0 + diag[i] / lambda;
                    next[i] += pi[i] * stay;
                    for &(j, q) in &rows[i] {
                        next[j] += pi[i] * q / lambda;
                    }
                }
                let diff: f64 = pi
                    .iter()
                    .zip(next.iter())
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                std::mem::swap(&mut pi, &mut next);
                if diff < 1e-14 {
                    break;
                }
            }
            let z: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|x| *x /= z);
            pi
        };
        // Self-check: residual of the balance equations.
        let mut residual = 0.0f64;
        let mut flow = vec![0.0f64; m];
        for (i, row) in rows.iter().enumerate() {
            flow[i] += pi[i] * diag[i];
            for &(j, q) in row {
                flow[j] += pi[i] * q;
            }
        }
        for f in &flow {
            residual = residual.max(f.abs());
        }
        let boundary_mass = self.cap_mass(&pi);
        if boundary_mass > boundary_tol {
            return Err(Error::CapTooSmall {
                mass: boundary_mass,
                threshold: boundary_tol,
            });
        }
        Ok(StationaryResult {
            pi,
            residual,
            boundary_mass,
        })
    }

    /// Probability mass on states at the total-customer cap.
    pub fn cap_mass(&self, p: &[f64]) -> f64 {
        (0..self.n_states)
            .filter(|&i| self.state_of(i).iter().sum::<u64>() == self.c)
            .map(|i| p[i])
            .sum()
    }

    /// Transient distribution at time `t` from a point mass, by
    /// uniformization. The reported `truncation_error` bounds the total
    /// mass defect of the Poisson-series cutoff.
    pub fn transient(&self, initial: &[u64], t: f64, tol: f64) -> Result<TransientResult> {
        let start = self
            .index_of(initial)
            .ok_or_else(|| Error::bad_input("initial state outside the truncated space"))?;
        if !(t.is_finite() && t >= 0.0) {
            return Err(Error::bad_input("time must be finite and >= 0"));
        }
        let (rows, diag) = self.generator();
        let m = self.n_states;
        let lambda = diag.iter().fold(0.0f64, |acc, &d| acc.max(-d)) * 1.0000001 + 1e-12;
        let mut p = vec![0.0f64; m];
        p[start] = 1.0;
        // Split long horizons so the Poisson weights stay representable.
        let segments = ((lambda * t) / 500.0).ceil().max(1.0) as usize;
        let dt = t / segments as f64;
        let seg_tol = tol / segments as f64;
        let mut total_err = 0.0;
        let mut v = vec![0.0f64; m];
        for _ in 0..segments {
            let lt = lambda * dt;
            let mut weight = (-lt).exp();
            let mut cum = weight;
            let mut acc: Vec<f64> = p.iter().map(|&x| x * weight).collect();
            let mut cur = p.clone();
            let mut step = 0usize;
            while cum < 1.0 - seg_tol && step < 100_000 {
                step += 1;
                // cur <- cur P_unif, P_unif = I + Q/lambda.
                v.iter_mut().for_each(|x| *x = 0.0);
                for i in 0..m {
                    let stay = 1.0 + diag[i] / lambda;
                    v[i] += cur[i] * stay;
                    for &(j, q) in &rows[i] {
                        v[j] += cur[i] * q / lambda;
                    }
                }
                std::mem::swap(&mut cur, &mut v);
                weight *= lt / step as f64;
                cum += weight;
                for (a, &c) in acc.iter_mut().zip(cur.iter()) {
                    *a += weight * c;
                }
            }
            total_err += 1.0 - cum;
            p = acc;
        }
        let boundary_mass = self.cap_mass(&p);
        Ok(TransientResult {
            p,
            truncation_error: total_err,
            boundary_mass,
        })
    }
}

/// Stationary solve output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationaryResult {
    pub pi: Vec<f64>,
    /// Max absolute residual of `pi Q`.
    pub residual: f64,
    /// Mass at the total-customer cap.
    pub boundary_mass: f64,
}

/// Transient solve output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransientResult {
    pub p: Vec<f64>,
    pub truncation_error: f64,
    pub boundary_mass: f64,
}

/// Gaussian elimination with partial pivoting on a row-major matrix.
fn solve_dense(a: &mut [f64], rhs: &mut [f64], m: usize) -> Result<()> {
    for col in 0..m {
        let mut piv = col;
        let mut best = a[col * m + col].abs();
        for r in (col + 1)..m {
            let v = a[r * m + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return Err(Error::bad_input("singular generator matrix"));
        }
        if piv != col {
            for j in 0..m {
                a.swap(col * m + j, piv * m + j);
            }
            rhs.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in (col + 1)..m {
            let f = a[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            a[r * m + col] = 0.0;
            for j in (col + 1)..m {
                a[r * m + j] -= f * a[col * m + j];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    for col in (0..m).rev() {
        let mut v = rhs[col];
        for j in (col + 1)..m {
            v -= a[col * m + j] * rhs[j];
        }
        rhs[col] = v / a[col * m + col];
    }
    Ok(())
}

/// Total-variation distance between two distributions on the same index
/// set.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p
        .iter()
        .zip(q.iter())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}
