//! Uniform quadrature grids and probability densities sampled on them.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default truncation tolerance for the mass captured by a grid.
pub const MASS_TOLERANCE: f64 = 1e-6;

/// A uniform grid on the quadrature axis, reproducible from its three fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct QuadratureGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

#[derive(Deserialize)]
struct RawGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl TryFrom<RawGrid> for QuadratureGrid {
    type Error = Error;
    fn try_from(r: RawGrid) -> Result<Self> {
        QuadratureGrid::new(r.x_min, r.x_max, r.n_points)
    }
}

impl QuadratureGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidParam("grid bounds must be finite".into()));
        }
        if x_min >= x_max {
            return Err(Error::InvalidParam(format!(
                "grid needs x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidParam(format!(
                "grid needs at least 2 points, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_points - 1) as f64
    }

    /// The i-th grid point. Computed the same way everywhere so grids are bit-reproducible.
    pub fn point(&self, i: usize) -> f64 {
        debug_assert!(i < self.n_points);
        self.x_min + self.spacing() * i as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.point(i))
    }

    /// Index of the bin whose center is nearest to `x`, if `x` falls within
    /// the outermost bin edges (each point owns a bin of width `spacing`).
    pub fn bin_index(&self, x: f64) -> Option<usize> {
        let h = self.spacing();
        let rel = (x - self.x_min) / h;
        let idx = rel.round();
        if idx < 0.0 || idx > (self.n_points - 1) as f64 {
            return None;
        }
        Some(idx as usize)
    }

    /// True when every point of `self` lies exactly on a point of `other`.
    pub fn aligned_with(&self, other: &QuadratureGrid) -> bool {
        let h = other.spacing();
        if ((self.spacing() - h) / h).abs() > 1e-12 {
            return false;
        }
        let rel = (self.x_min - other.x_min) / h;
        (rel - rel.round()).abs() < 1e-9
            && self.x_min >= other.x_min - 1e-12 * h
            && self.x_max <= other.x_max + 1e-12 * h
    }
}

/// A probability density sampled on a uniform quadrature grid.
///
/// State constructors enforce that the grid captures at least `1 - tau` of
/// the unit mass (trapezoidal rule). Empirical histograms skip that check:
/// their integral equals the in-range sample fraction by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraturePdf {
    pub grid: QuadratureGrid,
    pub values: Vec<f64>,
}

impl QuadraturePdf {
    /// Build a full-mass density; errors if values are negative or the grid
    /// captures less than `1 - tau` of the mass.
    pub fn new_checked(grid: QuadratureGrid, values: Vec<f64>, tau: f64) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam(
                "density values must be finite and non-negative".into(),
            ));
        }
        let pdf = Self { grid, values };
        let mass = pdf.integral();
        if mass < 1.0 - tau || mass > 1.0 + 1e-9 {
            return Err(Error::GridTooSmall {
                captured: mass,
                required: 1.0 - tau,
            });
        }
        Ok(pdf)
    }

    /// Build a density without the unit-mass check (histograms, POVM responses).
    pub fn new_unchecked(grid: QuadratureGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} values on a {}-point grid",
                values.len(),
                grid.n_points()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam(
                "density values must be finite and non-negative".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    /// Trapezoidal integral over the grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.values, self.grid.spacing())
    }

    /// First moment by trapezoidal rule.
    pub fn mean(&self) -> f64 {
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.grid.point(i))
            .collect();
        trapezoid(&weighted, self.grid.spacing()) / self.integral()
    }

    /// Second central moment by trapezoidal rule.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let weighted: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * (self.grid.point(i) - m).powi(2))
            .collect();
        trapezoid(&weighted, self.grid.spacing()) / self.integral()
    }

    /// Linear interpolation; zero outside the grid.
    pub fn value_at(&self, x: f64) -> f64 {
        let h = self.grid.spacing();
        let rel = (x - self.grid.x_min()) / h;
        if rel < 0.0 || rel > (self.grid.n_points() - 1) as f64 {
            return 0.0;
        }
        let i = (rel.floor() as usize).min(self.grid.n_points() - 2);
        let t = rel - i as f64;
        self.values[i] * (1.0 - t) + self.values[i + 1] * t
    }

    /// Resample onto another grid by linear interpolation.
    pub fn resample(&self, grid: &QuadratureGrid) -> QuadraturePdf {
        if grid == &self.grid {
            return self.clone();
        }
        let values = grid.points().map(|x| self.value_at(x)).collect();
        QuadraturePdf {
            grid: *grid,
            values,
        }
    }

    pub fn max_abs_diff(&self, other: &QuadraturePdf) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let inner: f64 = values[1..values.len() - 1].iter().sum();
    spacing * (inner + 0.5 * (values[0] + values[values.len() - 1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_points_reproducible() {
        let g = QuadratureGrid::new(-2.0, 2.0, 161).unwrap();
        assert_eq!(g.spacing(), 0.025);
        assert_eq!(g.point(0), -2.0);
        assert_eq!(g.point(160), 2.0);
        assert_eq!(g.point(80), 0.0);
    }

    #[test]
    fn grid_rejects_bad_params() {
        assert!(QuadratureGrid::new(1.0, -1.0, 10).is_err());
        assert!(QuadratureGrid::new(0.0, 1.0, 1).is_err());
        assert!(QuadratureGrid::new(f64::NAN, 1.0, 10).is_err());
    }

    #[test]
    fn grid_serde_round_trip() {
        let g = QuadratureGrid::new(-3.2, 3.2, 257).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: QuadratureGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn grid_deserialize_validates() {
        let bad: std::result::Result<QuadratureGrid, _> =
            serde_json::from_str(r#"{"x_min": 2.0, "x_max": -2.0, "n_points": 5}"#);
        assert!(bad.is_err());
    }

    #[test]
    fn alignment() {
        let outcome = QuadratureGrid::new(-2.0, 2.0, 161).unwrap();
        let basis = QuadratureGrid::new(-3.2, 3.2, 257).unwrap();
        assert!(outcome.aligned_with(&basis));
        assert!(!basis.aligned_with(&outcome));
        let offset = QuadratureGrid::new(-2.01, 1.99, 161).unwrap();
        assert!(!offset.aligned_with(&basis));
    }

    #[test]
    fn mass_check_rejects_truncated() {
        let g = QuadratureGrid::new(-0.5, 0.5, 41).unwrap();
        let vals: Vec<f64> = g
            .points()
            .map(|x| (2.0 / std::f64::consts::PI).sqrt() * (-2.0 * x * x).exp())
            .collect();
        match QuadraturePdf::new_checked(g, vals, MASS_TOLERANCE) {
            Err(Error::GridTooSmall { captured, .. }) => assert!(captured < 0.96),
            other => panic!("expected GridTooSmall, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = QuadratureGrid::new(0.0, 1.0, 11).unwrap();
        let pdf = QuadraturePdf::new_unchecked(g, (0..11).map(|i| i as f64).collect()).unwrap();
        assert_eq!(pdf.value_at(0.5), 5.0);
        assert_eq!(pdf.value_at(0.55), 5.5);
        assert_eq!(pdf.value_at(2.0), 0.0);
    }
}
