use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const UNIFORM_RTOL: f64 = 1e-6;

/// Evenly spaced axis `start, start + step, …` with `len` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    /// Grid from `start` to `stop` inclusive (when `stop` lands on a point).
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(Error::invalid(format!(
                "bad grid: start {start}, stop {stop}, step {step}"
            )));
        }
        let len = ((stop - start) / step + 1e-9).floor() as usize + 1;
        Ok(Self { start, step, len })
    }

    pub fn with_len(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || len == 0 || !start.is_finite() {
            return Err(Error::invalid("grid needs a positive step and at least one point"));
        }
        Ok(Self { start, step, len })
    }

    pub fn from_points(points: &[f64]) -> Result<Self> {
        let step = check_uniform(points)?;
        Ok(Self {
            start: points[0],
            step,
            len: points.len(),
        })
    }

    pub fn value(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.value(i)).collect()
    }

    pub fn stop(&self) -> f64 {
        self.value(self.len.saturating_sub(1))
    }
}

/// Returns the spacing of `points`, or an error when they are not evenly
/// spaced and increasing.
pub fn check_uniform(points: &[f64]) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::invalid("grid needs at least two points"));
    }
    let n = points.len();
    let step = (points[n - 1] - points[0]) / (n - 1) as f64;
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::invalid("grid must be strictly increasing"));
    }
    for (i, &p) in points.iter().enumerate() {
        let expected = points[0] + i as f64 * step;
        if (p - expected).abs() > UNIFORM_RTOL * step.max(expected.abs() * 1e-3) {
            return Err(Error::invalid(format!(
                "grid is not uniform at index {i}: {p} vs {expected}"
            )));
        }
    }
    Ok(step)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_time_grid_has_1201_points() {
        let g = UniformGrid::new(0.0, 120.0, 0.1).unwrap();
        assert_eq!(g.len, 1201);
        assert!((g.stop() - 120.0).abs() < 1e-9);
    }

    #[test]
    fn non_uniform_rejected() {
        assert!(check_uniform(&[0.0, 0.1, 0.3]).is_err());
        assert!(check_uniform(&[0.0, -0.1]).is_err());
        assert!(check_uniform(&[0.0]).is_err());
        assert!((check_uniform(&[1.0, 1.5, 2.0]).unwrap() - 0.5).abs() < 1e-15);
    }
}
