//! Fixed-step delay channels.
//!
//! A channel with `delay_steps = d` returns, on the `k`-th push (0-based),
//! the sample pushed at step `k - d`, and the zero vector while `k < d`.

use nalgebra::DVector;

use crate::error::DelayError;

const COMMENSURATE_TOL: f64 = 1e-9;

/// Converts a delay in seconds to a whole number of steps.
pub fn delay_steps(delay: f64, dt: f64) -> Result<usize, DelayError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(DelayError::BadStep(dt));
    }
    if !(delay.is_finite() && delay >= 0.0) {
        return Err(DelayError::BadDelay(delay));
    }
    let ratio = delay / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > COMMENSURATE_TOL * steps.max(1.0) {
        return Err(DelayError::NonCommensurateDelay { delay, dt });
    }
    Ok(steps as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    delay_steps: usize,
    buffer: Vec<DVector<f64>>,
    head: usize,
    pushed: u64,
}

impl DelayLine {
    pub fn new(delay: f64, dt: f64, width: usize) -> Result<Self, DelayError> {
        Ok(Self::with_steps(delay_steps(delay, dt)?, width))
    }

    pub fn with_steps(delay_steps: usize, width: usize) -> Self {
        Self { delay_steps, buffer: vec![DVector::zeros(width); delay_steps + 1], head: 0, pushed: 0 }
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn width(&self) -> usize {
        self.buffer[0].len()
    }

    pub fn steps_pushed(&self) -> u64 {
        self.pushed
    }

    /// Number of samples held; never more than `delay_steps + 1`.
    pub fn capacity(&self) -> usize {
        self.buffer.len()
    }

    /// Records `x` for the current step and returns the delayed sample.
    pub fn push_and_read(&mut self, x: &DVector<f64>) -> DVector<f64> {
        assert_eq!(x.len(), self.width(), "delay line width mismatch");
        let len = self.buffer.len();
        self.buffer[self.head].copy_from(x);
        self.pushed += 1;
        let oldest = (self.head + 1) % len;
        self.head = oldest;
        if self.pushed as usize > self.delay_steps {
            self.buffer[oldest].clone()
        } else {
            DVector::zeros(self.width())
        }
    }

    /// Sample pushed `lag` pushes before the most recent one, or zero if
    /// that far back has not been recorded. `lag` may not exceed the delay.
    pub fn lagged(&self, lag: usize) -> DVector<f64> {
        assert!(lag <= self.delay_steps, "lag {lag} beyond delay {}", self.delay_steps);
        if (self.pushed as usize) <= lag {
            return DVector::zeros(self.width());
        }
        let len = self.buffer.len();
        self.buffer[(self.head + len - 1 - lag) % len].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64) -> DVector<f64> {
        DVector::from_element(1, x)
    }

    #[test]
    fn construction_examples() {
        assert_eq!(DelayLine::new(0.5, 0.005, 2).unwrap().delay_steps(), 100);
        assert_eq!(DelayLine::new(0.0, 0.005, 2).unwrap().delay_steps(), 0);
        assert_eq!(DelayLine::new(1.0, 0.0025, 1).unwrap().delay_steps(), 400);
        assert!(matches!(DelayLine::new(0.0033, 0.005, 1), Err(DelayError::NonCommensurateDelay { .. })));
        assert!(matches!(DelayLine::new(0.5, 0.0, 1), Err(DelayError::BadStep(_))));
        assert!(matches!(DelayLine::new(-0.5, 0.005, 1), Err(DelayError::BadDelay(_))));
    }

    #[test]
    fn zero_until_history_exists() {
        let mut line = DelayLine::with_steps(2, 1);
        let reads: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&x| line.push_and_read(&s(x))[0]).collect();
        assert_eq!(reads, vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_delay_is_identity() {
        let mut line = DelayLine::with_steps(0, 1);
        assert_eq!(line.push_and_read(&s(7.0)), s(7.0));
        assert_eq!(line.push_and_read(&s(-2.0)), s(-2.0));
    }

    #[test]
    fn constant_input_after_hundred_steps() {
        let mut line = DelayLine::with_steps(100, 2);
        let c = DVector::from_vec(vec![1.5, -2.0]);
        for k in 0..500 {
            let out = line.push_and_read(&c);
            if k < 100 {
                assert_eq!(out, DVector::zeros(2), "step {k}");
            } else {
                assert_eq!(out, c, "step {k}");
            }
        }
        assert_eq!(line.capacity(), 101);
    }

    #[test]
    fn lagged_reads_recent_history() {
        let mut line = DelayLine::with_steps(3, 1);
        line.push_and_read(&s(1.0));
        assert_eq!(line.lagged(0), s(1.0));
        assert_eq!(line.lagged(1), s(0.0));
        for x in [2.0, 3.0, 4.0, 5.0] {
            line.push_and_read(&s(x));
        }
        assert_eq!(line.lagged(0), s(5.0));
        assert_eq!(line.lagged(2), s(3.0));
        assert_eq!(line.lagged(3), s(2.0));
    }
}
