//! Piecewise-constant input signals and the square-pulse generator.
//!
//! Square-pulse switch times are placed at multiples of square roots of
//! distinct primes per channel, so that switch times are pairwise
//! incommensurable across channels (a heuristic for the "discontinuities of
//! full rank" input guidance).

use serde::Serialize;

/// One channel of a piecewise-constant signal. `levels` has one more entry
/// than `switch_times`; evaluation is right-continuous at switches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Channel {
    pub switch_times: Vec<f64>,
    pub levels: Vec<f64>,
}

impl Channel {
    fn check(&self) {
        assert_eq!(self.levels.len(), self.switch_times.len() + 1);
        assert!(
            self.switch_times.windows(2).all(|w| w[0] < w[1]),
            "switch times must be strictly increasing"
        );
        assert!(self.switch_times.first().map_or(true, |&t| t > 0.0));
    }

    fn eval(&self, t: f64) -> f64 {
        let idx = self.switch_times.partition_point(|&s| s <= t);
        self.levels[idx]
    }

    fn eval_left(&self, t: f64) -> f64 {
        let idx = self.switch_times.partition_point(|&s| s < t);
        self.levels[idx]
    }
}

/// A multi-channel input with a constant pre-history on `t < 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSignal {
    pub pre_history: Vec<f64>,
    pub channels: Vec<Channel>,
}

impl InputSignal {
    pub fn constant(levels: Vec<f64>) -> Self {
        let channels = levels
            .iter()
            .map(|&v| Channel {
                switch_times: vec![],
                levels: vec![v],
            })
            .collect();
        InputSignal {
            pre_history: levels,
            channels,
        }
    }

    pub fn zero(k: usize) -> Self {
        Self::constant(vec![0.0; k])
    }

    pub fn dim(&self) -> usize {
        self.channels.len()
    }

    pub fn validate(&self) {
        assert_eq!(self.pre_history.len(), self.channels.len());
        for c in &self.channels {
            c.check();
        }
    }

    /// Right-continuous evaluation; constant pre-history for `t < 0`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        if t < 0.0 {
            return self.pre_history.clone();
        }
        self.channels.iter().map(|c| c.eval(t)).collect()
    }

    /// Left limit at `t` (differs from `eval` only at switch times).
    pub fn eval_left(&self, t: f64) -> Vec<f64> {
        if t <= 0.0 {
            return self.pre_history.clone();
        }
        self.channels.iter().map(|c| c.eval_left(t)).collect()
    }

    /// Pointwise scaling of levels and pre-history.
    pub fn scale(&self, factor: f64) -> InputSignal {
        InputSignal {
            pre_history: self.pre_history.iter().map(|v| v * factor).collect(),
            channels: self
                .channels
                .iter()
                .map(|c| Channel {
                    switch_times: c.switch_times.clone(),
                    levels: c.levels.iter().map(|v| v * factor).collect(),
                })
                .collect(),
        }
    }

    /// Shift every channel by a constant offset (`u_bar + nu(t)`); the
    /// pre-history becomes the offset itself when `history_is_offset`.
    pub fn offset(&self, base: &[f64], history_is_offset: bool) -> InputSignal {
        InputSignal {
            pre_history: if history_is_offset {
                base.to_vec()
            } else {
                self.pre_history
                    .iter()
                    .zip(base)
                    .map(|(v, b)| v + b)
                    .collect()
            },
            channels: self
                .channels
                .iter()
                .zip(base)
                .map(|(c, &b)| Channel {
                    switch_times: c.switch_times.clone(),
                    levels: c.levels.iter().map(|v| v + b).collect(),
                })
                .collect(),
        }
    }

    /// Pointwise sum of two signals over merged switch grids.
    pub fn add(&self, other: &InputSignal) -> InputSignal {
        assert_eq!(self.dim(), other.dim());
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| {
                let mut times: Vec<f64> = a
                    .switch_times
                    .iter()
                    .chain(&b.switch_times)
                    .cloned()
                    .collect();
                times.sort_by(|x, y| x.partial_cmp(y).unwrap());
                times.dedup();
                let mut levels = vec![a.levels[0] + b.levels[0]];
                for &t in &times {
                    levels.push(a.eval(t) + b.eval(t));
                }
                Channel {
                    switch_times: times,
                    levels,
                }
            })
            .collect();
        InputSignal {
            pre_history: self
                .pre_history
                .iter()
                .zip(&other.pre_history)
                .map(|(x, y)| x + y)
                .collect(),
            channels,
        }
    }

    /// Snap switch times onto the step grid `i*h`; coincident snaps collapse
    /// to the last level. Returns the snapped signal and the (old, new)
    /// pairs for the record.
    pub fn snap_to_grid(&self, h: f64) -> (InputSignal, Vec<(f64, f64)>) {
        let mut log = Vec::new();
        let channels = self
            .channels
            .iter()
            .map(|c| {
                let mut times: Vec<f64> = Vec::new();
                let mut levels = vec![c.levels[0]];
                for (i, &t) in c.switch_times.iter().enumerate() {
                    let snapped = (t / h).round() * h;
                    if snapped != t {
                        log.push((t, snapped));
                    }
                    let level = c.levels[i + 1];
                    if snapped <= 0.0 {
                        // switch collapsed onto (or before) the origin
                        levels = vec![level];
                        times.clear();
                        continue;
                    }
                    if times.last() == Some(&snapped) {
                        *levels.last_mut().unwrap() = level;
                    } else {
                        times.push(snapped);
                        levels.push(level);
                    }
                }
                Channel {
                    switch_times: times,
                    levels,
                }
            })
            .collect();
        (
            InputSignal {
                pre_history: self.pre_history.clone(),
                channels,
            },
            log,
        )
    }

    /// Exact L2(0, T) norm of the vector-valued signal.
    pub fn norm_l2(&self, t_end: f64) -> f64 {
        let mut total = 0.0;
        for c in &self.channels {
            let mut prev = 0.0;
            let mut idx = 0;
            for (i, &s) in c.switch_times.iter().enumerate() {
                if s >= t_end {
                    break;
                }
                total += c.levels[i].powi(2) * (s - prev);
                prev = s;
                idx = i + 1;
            }
            total += c.levels[idx].powi(2) * (t_end - prev);
        }
        total.sqrt()
    }
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Square-pulse train: channel `c` switches at multiples of `sqrt(prime_c)`
/// inside `(0, T)`, alternating between `+amplitude` and `-amplitude`,
/// starting at `+amplitude` and with zero pre-history.
pub fn make_square_pulse(k: usize, t_end: f64, amplitude: f64) -> InputSignal {
    assert!(t_end > 0.0);
    assert!(k <= PRIMES.len(), "at most {} channels supported", PRIMES.len());
    let channels = (0..k)
        .map(|c| {
            let step = (PRIMES[c] as f64).sqrt();
            let mut switch_times = Vec::new();
            let mut j = 1.0;
            while j * step < t_end {
                switch_times.push(j * step);
                j += 1.0;
            }
            let levels = (0..=switch_times.len())
                .map(|i| if i % 2 == 0 { amplitude } else { -amplitude })
                .collect();
            Channel {
                switch_times,
                levels,
            }
        })
        .collect();
    InputSignal {
        pre_history: vec![0.0; k],
        channels,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_pulse_switch_times_follow_sqrt2() {
        let s = make_square_pulse(1, 10.0, 1.0);
        let root2 = 2.0_f64.sqrt();
        let expected: Vec<f64> = (1..=7).map(|j| j as f64 * root2).collect();
        assert_eq!(s.channels[0].switch_times.len(), expected.len());
        for (a, b) in s.channels[0].switch_times.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_channels_never_switch_together() {
        let s = make_square_pulse(2, 50.0, 1.0);
        for a in &s.channels[0].switch_times {
            for b in &s.channels[1].switch_times {
                assert!((a - b).abs() > 1e-9);
            }
        }
    }

    #[test]
    fn zero_amplitude_is_the_zero_signal() {
        let s = make_square_pulse(2, 10.0, 0.0);
        for t in [0.0, 1.0, 5.0, 9.9] {
            assert_eq!(s.eval(t), vec![0.0, 0.0]);
        }
    }

    #[test]
    fn right_continuity_at_switches() {
        let c = Channel {
            switch_times: vec![1.0, 2.0],
            levels: vec![1.0, -1.0, 1.0],
        };
        assert_eq!(c.eval(1.0), -1.0);
        assert_eq!(c.eval_left(1.0), 1.0);
        assert_eq!(c.eval(0.999999), 1.0);
        assert_eq!(c.eval(2.0), 1.0);
    }

    #[test]
    fn l2_norm_exact_for_piecewise_constant() {
        // one channel at +-1 everywhere: integral of 1 over (0, T)
        let s = make_square_pulse(1, 10.0, 1.0);
        assert!((s.norm_l2(10.0) - 10.0_f64.sqrt()).abs() < 1e-12);
        // constant 2 on two channels: sqrt(2 * 4 * T)
        let c = InputSignal::constant(vec![2.0, 2.0]);
        assert!((c.norm_l2(3.0) - (24.0_f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn snapping_moves_switches_onto_the_grid() {
        let s = make_square_pulse(1, 10.0, 1.0);
        let h = 1e-2;
        let (snapped, log) = s.snap_to_grid(h);
        assert!(!log.is_empty());
        for &t in &snapped.channels[0].switch_times {
            let ratio = t / h;
            assert!((ratio - ratio.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn sum_of_signals_is_pointwise() {
        let a = make_square_pulse(1, 10.0, 1.0);
        let b = make_square_pulse(1, 10.0, 0.5);
        let sum = a.add(&b);
        for t in [0.0, 0.5, 1.5, 3.0, 7.7, 9.99] {
            assert!((sum.eval(t)[0] - (a.eval(t)[0] + b.eval(t)[0])).abs() < 1e-15);
        }
    }
}
