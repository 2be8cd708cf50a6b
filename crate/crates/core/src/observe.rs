//! Run-time observables: time-weighted occupancy histograms.
//!
//! Each visited occupancy value is weighted by its holding time, so the
//! histograms are unbiased for stationary marginals (event-sampled
//! histograms would not be). Shared between the engine and the coupled
//! graphical-construction runs.

use serde::{Deserialize, Serialize};

/// Time-weighted occupancy histogram of one queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueHistogram {
    pub queue: u32,
    /// `weights[m]` is the total time the queue held exactly `m` customers
    /// within the measurement window.
    pub weights: Vec<f64>,
    pub total_time: f64,
}

impl QueueHistogram {
    /// Empirical probability of value `m`.
    pub fn prob(&self, m: usize) -> f64 {
        if self.total_time <= 0.0 {
            return 0.0;
        }
        self.weights.get(m).copied().unwrap_or(0.0) / self.total_time
    }
}

/// Accumulates holding-time-weighted histograms for queues `1..=window`,
/// starting to measure at `measure_from`.
#[derive(Debug, Clone)]
pub struct HistogramSet {
    window: u32,
    measure_from: f64,
    values: Vec<u64>,
    changed_at: Vec<f64>,
    hist: Vec<Vec<f64>>,
}

impl HistogramSet {
    pub fn new(window: u32, measure_from: f64, initial: impl Fn(u32) -> u64) -> Self {
        let w = window as usize;
        HistogramSet {
            window,
            measure_from,
            values: (1..=window).map(&initial).collect(),
            changed_at: vec![0.0; w],
            hist: vec![Vec::new(); w],
        }
    }

    pub fn window(&self) -> u32 {
        self.window
    }

    fn credit(&mut self, qi: usize, until: f64) {
        let from = self.changed_at[qi].max(self.measure_from);
        if until > from {
            let m = self.values[qi] as usize;
            if self.hist[qi].len() <= m {
                self.hist[qi].resize(m + 1, 0.0);
            }
            self.hist[qi][m] += until - from;
        }
    }

    /// Record that queue `k` takes value `new_value` from time `t` on.
    pub fn on_change(&mut self, t: f64, k: u32, new_value: u64) {
        if k == 0 || k > self.window {
            return;
        }
        let qi = (k - 1) as usize;
        self.credit(qi, t);
        self.values[qi] = new_value;
        self.changed_at[qi] = t;
    }

    /// Close the window at `t_end` and emit the histograms.
    pub fn finish(mut self, t_end: f64) -> Vec<QueueHistogram> {
        for qi in 0..self.window as usize {
            self.credit(qi, t_end);
        }
        let total = (t_end - self.measure_from).max(0.0);
        self.hist
            .into_iter()
            .enumerate()
            .map(|(qi, weights)| QueueHistogram {
                queue: qi as u32 + 1,
                weights,
                total_time: total,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn holding_time_weighting() {
        let mut h = HistogramSet::new(2, 0.0, |_| 0);
        h.on_change(1.0, 1, 1); // queue 1: value 0 on [0,1), 1 on [1,3)
        h.on_change(3.0, 1, 0); // back to 0 on [3,4]
        let out = h.finish(4.0);
        assert_eq!(out.len(), 2);
        assert!((out[0].weights[0] - 2.0).abs() < 1e-12);
        assert!((out[0].weights[1] - 2.0).abs() < 1e-12);
        assert!((out[0].prob(1) - 0.5).abs() < 1e-12);
        // Untouched queue spends all time at its initial value.
        assert!((out[1].weights[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn measurement_window_clips_burn_in() {
        let mut h = HistogramSet::new(1, 10.0, |_| 0);
        h.on_change(5.0, 1, 3); // change before the window opens
        h.on_change(12.0, 1, 0);
        let out = h.finish(20.0);
        // Value 3 held on [10, 12) within the window, value 0 on [12, 20].
        assert!((out[0].weights[3] - 2.0).abs() < 1e-12);
        assert!((out[0].weights[0] - 8.0).abs() < 1e-12);
        assert!((out[0].total_time - 10.0).abs() < 1e-12);
    }

    #[test]
    fn changes_beyond_window_are_ignored() {
        let mut h = HistogramSet::new(2, 0.0, |_| 0);
        h.on_change(1.0, 7, 4);
        let out = h.finish(2.0);
        assert_eq!(out.len(), 2);
        assert!((out[0].weights[0] - 2.0).abs() < 1e-12);
    }
}
