//! Rate environments.
//!
//! A [`RateEnvironment`] assigns to every particle index `k >= 1` a pair of
//! jump rates `(a_k, b_k)`: particle `k` attempts to jump left at rate `a_k`
//! and right at rate `b_k`. The environment is a finite prefix of explicit
//! pairs followed by an analytic tail rule, so that tail behaviour (series
//! convergence, suprema) is decidable exactly rather than sampled.
//!
//! The standing hypotheses are:
//!
//! * `A0` — all rates strictly positive and finite;
//! * `A1` — the series of inverse left rates diverges (non-explosion);
//! * `A2` — rates are uniformly bounded.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail rule of a rate environment, applying to all indices beyond the
/// explicit prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Tail {
    /// `a_k = a`, `b_k = b` for all tail indices.
    Constant { a: f64, b: f64 },
    /// `a_k = scale * k!`, `b_k = (k+1)!`.
    Factorial { scale: f64 },
    /// No tail: the environment is defined only up to the prefix length.
    /// Intended for finite-system work; all tail-dependent analyses report
    /// bounded-depth verdicts.
    None,
}

/// Truth value of a hypothesis check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Fails,
    Undecidable,
}

/// Outcome of checking the standing hypotheses `A0`, `A1`, `A2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub a0: Verdict,
    pub a1: Verdict,
    pub a2: Verdict,
}

/// A particle-wise rate environment: explicit prefix plus analytic tail.
///
/// Immutable after construction and freely shareable across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEnvironment {
    prefix: Vec<(f64, f64)>,
    tail: Tail,
}

impl RateEnvironment {
    /// Build an environment from an explicit prefix and a tail rule.
    ///
    /// Rejects negative, NaN or infinite prefix rates, non-positive
    /// constant-tail rates and non-positive factorial scales. Zero `b`
    /// rates are accepted (legal for finite-system emulation); zero `a`
    /// rates fail `A0` and are reported by [`Self::hypotheses`].
    pub fn new(prefix: Vec<(f64, f64)>, tail: Tail) -> Result<Self> {
        for (i, &(a, b)) in prefix.iter().enumerate() {
            if !(a.is_finite() && a >= 0.0 && b.is_finite() && b >= 0.0) {
                return Err(Error::bad_input(format!(
                    "prefix rate {} is not a finite non-negative pair: ({a}, {b})",
                    i + 1
                )));
            }
        }
        match tail {
            Tail::Constant { a, b } => {
                if !(a.is_finite() && a > 0.0 && b.is_finite() && b > 0.0) {
                    return Err(Error::bad_input(format!(
                        "constant tail rates must be finite and positive, got ({a}, {b})"
                    )));
                }
            }
            Tail::Factorial { scale } => {
                if !(scale.is_finite() && scale > 0.0) {
                    return Err(Error::bad_input(format!(
                        "factorial tail scale must be finite and positive, got {scale}"
                    )));
                }
            }
            Tail::None => {
                if prefix.is_empty() {
                    return Err(Error::bad_input(
                        "environment with no tail needs a non-empty prefix",
                    ));
                }
            }
        }
        Ok(RateEnvironment { prefix, tail })
    }

    /// Homogeneous environment: `a_k = a`, `b_k = b` for every `k`.
    pub fn homogeneous(a: f64, b: f64) -> Result<Self> {
        Self::new(Vec::new(), Tail::Constant { a, b })
    }

    /// One left-biased leftmost particle (`a_1 = a`, `b_1 = b`) ahead of
    /// rate-`c` symmetric particles.
    pub fn dog_sheep(a: f64, b: f64, c: f64) -> Result<Self> {
        Self::new(vec![(a, b)], Tail::Constant { a: c, b: c })
    }

    /// `a_1 = b_1 = 1` and `a_k = a`, `b_k = b` for `k >= 2`.
    pub fn one_sheep_many_dogs(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(1.0, 1.0)], Tail::Constant { a, b })
    }

    /// Factorial environment: `a_k = scale * k!`, `b_k = (k+1)!`.
    pub fn factorial(scale: f64) -> Result<Self> {
        Self::new(Vec::new(), Tail::Factorial { scale })
    }

    /// Environment defined only on `1..=prefix.len()`, e.g. a custom
    /// environment materialized by an experiment script. Tail-dependent
    /// verdicts are undecidable for such environments.
    pub fn from_prefix(prefix: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(prefix, Tail::None)
    }

    pub fn prefix(&self) -> &[(f64, f64)] {
        &self.prefix
    }

    pub fn prefix_len(&self) -> u32 {
        self.prefix.len() as u32
    }

    pub fn tail(&self) -> Tail {
        self.tail
    }

    /// Largest index at which rates are defined, if bounded.
    pub fn max_index(&self) -> Option<u32> {
        match self.tail {
            Tail::None => Some(self.prefix.len() as u32),
            _ => None,
        }
    }

    /// Jump rates `(a_k, b_k)` of particle `k >= 1`.
    ///
    /// Factorial tails overflow `f64` around `k = 170`; use
    /// [`Self::ln_rate_at`] or [`Self::ln_rates`] past that point.
    pub fn rate_at(&self, k: u32) -> Result<(f64, f64)> {
        if k == 0 {
            return Err(Error::IndexOutOfRange { index: 0, max: 0 });
        }
        if let Some(&pair) = self.prefix.get(k as usize - 1) {
            return Ok(pair);
        }
        match self.tail {
            Tail::Constant { a, b } => Ok((a, b)),
            Tail::Factorial { scale } => {
                let lf = ln_factorial(k as u64);
                let lf1 = lf + ((k + 1) as f64).ln();
                Ok(((scale.ln() + lf).exp(), lf1.exp()))
            }
            Tail::None => Err(Error::IndexOutOfRange {
                index: k,
                max: self.prefix.len() as u32,
            }),
        }
    }

    /// Natural logs `(ln a_k, ln b_k)`, exact in log domain for factorial
    /// tails of any index.
    pub fn ln_rate_at(&self, k: u32) -> Result<(f64, f64)> {
        if k == 0 {
            return Err(Error::IndexOutOfRange { index: 0, max: 0 });
        }
        if let Some(&(a, b)) = self.prefix.get(k as usize - 1) {
            return Ok((a.ln(), b.ln()));
        }
        match self.tail {
            Tail::Constant { a, b } => Ok((a.ln(), b.ln())),
            Tail::Factorial { scale } => {
                let lf = ln_factorial(k as u64);
                Ok((scale.ln() + lf, lf + ((k + 1) as f64).ln()))
            }
            Tail::None => Err(Error::IndexOutOfRange {
                index: k,
                max: self.prefix.len() as u32,
            }),
        }
    }

    /// Iterator over `(ln a_k, ln b_k)` for `k = 1, 2, ...`, computed
    /// incrementally (finite for tail-less environments).
    pub fn ln_rates(&self) -> LnRates<'_> {
        LnRates { env: self, k: 0 }
    }

    /// Decide the standing hypotheses.
    ///
    /// Constant and factorial tails are decided exactly; tail-less
    /// environments get undecidable `A1`/`A2`.
    pub fn hypotheses(&self) -> HypothesisReport {
        let prefix_positive = self.prefix.iter().all(|&(a, b)| a > 0.0 && b > 0.0);
        let (a0, a1, a2) = match self.tail {
            Tail::Constant { .. } => {
                // Tail rates are positive and finite by construction, so
                // the inverse-rate series diverges and suprema are finite.
                let a0 = if prefix_positive { Verdict::Holds } else { Verdict::Fails };
                let a2 = if self.prefix.iter().all(|&(a, b)| a.is_finite() && b.is_finite()) {
                    Verdict::Holds
                } else {
                    Verdict::Fails
                };
                (a0, Verdict::Holds, a2)
            }
            Tail::Factorial { .. } => {
                // sum 1/a_k = sum 1/(scale k!) converges, and k! is unbounded.
                let a0 = if prefix_positive { Verdict::Holds } else { Verdict::Fails };
                (a0, Verdict::Fails, Verdict::Fails)
            }
            Tail::None => {
                let a0 = if prefix_positive { Verdict::Holds } else { Verdict::Fails };
                (a0, Verdict::Undecidable, Verdict::Undecidable)
            }
        };
        HypothesisReport { a0, a1, a2 }
    }

    /// Error unless `A0` holds.
    pub fn require_a0(&self) -> Result<()> {
        match self.hypotheses().a0 {
            Verdict::Holds => Ok(()),
            _ => Err(Error::hypothesis(
                "A0",
                "all rates must be strictly positive and finite",
            )),
        }
    }
}

/// Incremental iterator over `(ln a_k, ln b_k)`.
pub struct LnRates<'a> {
    env: &'a RateEnvironment,
    k: u32,
}

impl Iterator for LnRates<'_> {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        self.k += 1;
        self.env.ln_rate_at(self.k).ok()
    }
}

/// `ln k!` by direct summation. Callers on hot paths accumulate
/// incrementally instead; this is for isolated lookups.
pub(crate) fn ln_factorial(k: u64) -> f64 {
    (2..=k).map(|j| (j as f64).ln()).sum()
}
