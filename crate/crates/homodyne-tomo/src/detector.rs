//! The POVM data model: the g-matrix over quadrature grids, forward maps,
//! the trace figure of merit, and the Gaussian-overlap design rule.
//!
//! Entries of `GMatrix` carry density units (quadrature^-1): on matched grids
//! an ideal detector is `identity / spacing`, so the forward map
//! `P(x_j) = sum_k g[j][k] K(y_k) dy` reproduces input densities exactly.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, QuadratureGrid, QuadraturePdf, MASS_TOLERANCE};
use crate::states::{gaussian_density, normal_cdf, NoiseParams, COHERENT_VARIANCE};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// POVM expansion coefficients g[j][k] over (outcome grid x_j) x (basis grid y_k).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GMatrix {
    pub outcome_grid: QuadratureGrid,
    pub basis_grid: QuadratureGrid,
    /// Row-major, non-negative, shape (outcome points, basis points).
    entries: Vec<f64>,
}

impl GMatrix {
    pub fn new(
        outcome_grid: QuadratureGrid,
        basis_grid: QuadratureGrid,
        entries: Vec<f64>,
    ) -> Result<Self> {
        if entries.len() != outcome_grid.n_points() * basis_grid.n_points() {
            return Err(Error::GridMismatch(format!(
                "{} entries for a {}x{} matrix",
                entries.len(),
                outcome_grid.n_points(),
                basis_grid.n_points()
            )));
        }
        if entries.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidParam(
                "g-matrix entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            outcome_grid,
            basis_grid,
            entries,
        })
    }

    pub fn from_array(
        outcome_grid: QuadratureGrid,
        basis_grid: QuadratureGrid,
        arr: Array2<f64>,
    ) -> Result<Self> {
        let entries = arr.into_raw_vec();
        Self::new(outcome_grid, basis_grid, entries)
    }

    /// The ideal detector on aligned grids: 1/dy where y_k coincides with x_j.
    pub fn identity(outcome_grid: QuadratureGrid, basis_grid: QuadratureGrid) -> Result<Self> {
        if !outcome_grid.aligned_with(&basis_grid) {
            return Err(Error::GridMismatch(
                "identity g-matrix needs the outcome grid aligned with the basis grid".into(),
            ));
        }
        let (n_out, n_bas) = (outcome_grid.n_points(), basis_grid.n_points());
        let dy = basis_grid.spacing();
        let mut entries = vec![0.0; n_out * n_bas];
        for j in 0..n_out {
            let k = basis_grid
                .bin_index(outcome_grid.point(j))
                .expect("aligned grids");
            entries[j * n_bas + k] = 1.0 / dy;
        }
        Ok(Self {
            outcome_grid,
            basis_grid,
            entries,
        })
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_grid.n_points()
    }

    pub fn n_basis(&self) -> usize {
        self.basis_grid.n_points()
    }

    pub fn entry(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.n_basis() + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n = self.n_basis();
        &self.entries[j * n..(j + 1) * n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    /// Column sums times dx: integral of each basis element's response over
    /// the outcome window. Near 1 for basis points well inside the window.
    pub fn column_sums(&self) -> Vec<f64> {
        let dx = self.outcome_grid.spacing();
        let (n_out, n_bas) = (self.n_outcomes(), self.n_basis());
        let mut sums = vec![0.0; n_bas];
        for j in 0..n_out {
            let row = self.row(j);
            for (k, s) in sums.iter_mut().enumerate() {
                *s += row[k];
            }
        }
        sums.iter_mut().for_each(|s| *s *= dx);
        sums
    }
}

/// Per-probe amplitude rescaling factors with uncertainties.
/// `sigma_gamma` uses `f64::INFINITY` for pinned or flat-objective probes
/// (serialized as JSON null).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors {
    pub gamma: Vec<f64>,
    #[serde(with = "crate::serde_util::sigma_vec")]
    pub sigma_gamma: Vec<f64>,
    pub pinned: Vec<bool>,
}

impl ScaleFactors {
    pub fn validate(&self, bounds: [f64; 2]) -> Result<()> {
        if self.gamma.len() != self.sigma_gamma.len() || self.gamma.len() != self.pinned.len() {
            return Err(Error::InvalidParam(
                "scale factor arrays must have equal lengths".into(),
            ));
        }
        for (i, (&g, &p)) in self.gamma.iter().zip(&self.pinned).enumerate() {
            if p && g != 1.0 {
                return Err(Error::InvalidParam(format!(
                    "pinned probe {i} must have gamma = 1, got {g}"
                )));
            }
            if !p && !(g >= bounds[0] && g <= bounds[1]) {
                return Err(Error::InvalidParam(format!(
                    "gamma[{i}] = {g} outside bounds {bounds:?}"
                )));
            }
        }
        if self.sigma_gamma.iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidParam("sigma_gamma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Provenance record attached to a reconstructed POVM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PovmMetadata {
    pub probe_set_id: String,
    pub solver_config_hash: String,
    /// Unix seconds; informational only, excluded from determinism comparisons.
    pub created_unix: u64,
}

/// A detector POVM: the g-matrix plus, for reconstructed detectors, the
/// rescaling factors and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorPovm {
    pub g: GMatrix,
    pub scale: Option<ScaleFactors>,
    pub metadata: Option<PovmMetadata>,
}

/// Response of the detector to a coherent probe with projected amplitude `mu`:
/// P(x_j) = sum_k g[j][k] sqrt(2/pi) exp(-2 (y_k - mu)^2) dy.
pub fn q_response(g: &GMatrix, mu: f64) -> Result<QuadraturePdf> {
    let kernel: Vec<f64> = g
        .basis_grid
        .points()
        .map(|y| gaussian_density(y, mu, COHERENT_VARIANCE))
        .collect();
    let captured = trapezoid(&kernel, g.basis_grid.spacing());
    if captured < 1.0 - MASS_TOLERANCE {
        return Err(Error::GridTooSmall {
            captured,
            required: 1.0 - MASS_TOLERANCE,
        });
    }
    let dy = g.basis_grid.spacing();
    let values = (0..g.n_outcomes())
        .map(|j| {
            g.row(j)
                .iter()
                .zip(&kernel)
                .map(|(gv, kv)| gv * kv)
                .sum::<f64>()
                * dy
        })
        .collect();
    QuadraturePdf::new_unchecked(g.outcome_grid, values)
}

/// Born-rule forward map: p(x_j) = sum_k g[j][k] p_state(y_k) dy.
/// `p_state` must live on the basis grid.
pub fn born_predict(g: &GMatrix, p_state: &QuadraturePdf) -> Result<QuadraturePdf> {
    if p_state.grid != g.basis_grid {
        return Err(Error::GridMismatch(
            "born_predict needs the state density on the basis grid".into(),
        ));
    }
    let dy = g.basis_grid.spacing();
    let values = (0..g.n_outcomes())
        .map(|j| {
            g.row(j)
                .iter()
                .zip(&p_state.values)
                .map(|(gv, pv)| gv * pv)
                .sum::<f64>()
                * dy
        })
        .collect();
    QuadraturePdf::new_unchecked(g.outcome_grid, values)
}

/// The simulated ground-truth detector: bin-integrated Gaussian response
/// g[j][k] = (1/dx) Integral_bin_j N(x; sqrt(eta) y_k, (1-eta)/4 + v_el) dx.
/// Bin integration keeps the eta -> 1 limit well defined.
pub fn ground_truth_g(
    noise: &NoiseParams,
    outcome_grid: QuadratureGrid,
    basis_grid: QuadratureGrid,
) -> GMatrix {
    let dx = outcome_grid.spacing();
    let var = noise.kernel_variance();
    let std = var.sqrt();
    let sqrt_eta = noise.eta.sqrt();
    let (n_out, n_bas) = (outcome_grid.n_points(), basis_grid.n_points());
    let mut entries = vec![0.0; n_out * n_bas];
    for (k, y) in basis_grid.points().enumerate() {
        let mean = sqrt_eta * y;
        for (j, x) in outcome_grid.points().enumerate() {
            let v = if std == 0.0 {
                // degenerate kernel: all mass in the bin containing the mean
                let in_bin = (mean - x).abs() <= dx / 2.0;
                if in_bin {
                    1.0 / dx
                } else {
                    0.0
                }
            } else {
                let hi = normal_cdf((x + dx / 2.0 - mean) / std);
                let lo = normal_cdf((x - dx / 2.0 - mean) / std);
                (hi - lo) / dx
            };
            entries[j * n_bas + k] = v.max(0.0);
        }
    }
    GMatrix {
        outcome_grid,
        basis_grid,
        entries,
    }
}

/// Trace figure of merit, normalized by the ideal diagonal value 1/dy so a
/// perfect reconstruction returns N, the matrix dimension. Requires matched
/// square grids.
pub fn delta_figure(g: &GMatrix) -> Result<f64> {
    if g.outcome_grid != g.basis_grid {
        return Err(Error::NotSquare {
            rows: g.n_outcomes(),
            cols: g.n_basis(),
        });
    }
    let dy = g.basis_grid.spacing();
    let trace: f64 = (0..g.n_outcomes()).map(|j| g.entry(j, j)).sum();
    Ok(trace * dy)
}

/// Overlap of two equal-width Gaussians a distance `y` apart, times sqrt(pi):
/// f(y) = (1/(2 sigma)) exp(-y^2 / (4 sigma^2)).
pub fn overlap_f(y: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam(format!(
            "overlap width must be positive, got {sigma}"
        )));
    }
    Ok((-(y * y) / (4.0 * sigma * sigma)).exp() / (2.0 * sigma))
}

/// Argmax of y * f(y), located numerically by golden-section search.
/// Closed form: sigma * sqrt(2).
pub fn overlap_argmax(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParam(format!(
            "overlap width must be positive, got {sigma}"
        )));
    }
    let objective = |y: f64| -> f64 {
        // minimize the negative of y * f(y)
        -(y * (-(y * y) / (4.0 * sigma * sigma)).exp() / (2.0 * sigma))
    };
    Ok(crate::optim::golden_section(
        objective,
        0.0,
        6.0 * sigma,
        1e-6 * sigma,
    ))
}

/// First and second moments of a g-matrix row over the basis grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowSpread {
    pub outcome: f64,
    pub center: f64,
    pub rms_width: f64,
}

/// Per-row spread metrics; rows with zero sum are flagged as `None`.
pub fn spread_metrics(g: &GMatrix) -> Vec<Option<RowSpread>> {
    let ys: Vec<f64> = g.basis_grid.points().collect();
    (0..g.n_outcomes())
        .map(|j| {
            let row = g.row(j);
            let total: f64 = row.iter().sum();
            if total <= 0.0 {
                return None;
            }
            let center = row
                .iter()
                .zip(&ys)
                .map(|(v, y)| v * y)
                .sum::<f64>()
                / total;
            let second = row
                .iter()
                .zip(&ys)
                .map(|(v, y)| v * (y - center).powi(2))
                .sum::<f64>()
                / total;
            Some(RowSpread {
                outcome: g.outcome_grid.point(j),
                center,
                rms_width: second.max(0.0).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::states::{coherent_pdf, ComplexAmplitude};
    use approx::assert_abs_diff_eq;

    fn square_grid() -> QuadratureGrid {
        QuadratureGrid::new(-2.0, 2.0, 161).unwrap()
    }

    #[test]
    fn identity_reproduces_kernel() {
        let g = GMatrix::identity(square_grid(), square_grid()).unwrap();
        let resp = q_response(&g, 0.0).unwrap();
        let exact = coherent_pdf(ComplexAmplitude::real(0.0), 0.0, &square_grid()).unwrap();
        assert!(resp.max_abs_diff(&exact) < 1e-12);
    }

    #[test]
    fn q_response_rejects_uncaptured_probe() {
        let g = GMatrix::identity(square_grid(), square_grid()).unwrap();
        assert!(matches!(
            q_response(&g, 3.0),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn q_response_zero_matrix() {
        let grid = square_grid();
        let g = GMatrix::new(grid, grid, vec![0.0; 161 * 161]).unwrap();
        let resp = q_response(&g, 0.0).unwrap();
        assert!(resp.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn born_consistent_with_q_response() {
        let noise = NoiseParams::new(0.81, 0.01).unwrap();
        let g = ground_truth_g(&noise, square_grid(), square_grid());
        let p = coherent_pdf(ComplexAmplitude::real(0.5), 0.0, &square_grid()).unwrap();
        let via_born = born_predict(&g, &p).unwrap();
        let via_q = q_response(&g, 0.5).unwrap();
        assert!(via_born.max_abs_diff(&via_q) < 1e-10);
    }

    #[test]
    fn born_grid_mismatch() {
        let g = GMatrix::identity(square_grid(), square_grid()).unwrap();
        let other = QuadratureGrid::new(-2.0, 2.0, 81).unwrap();
        let p = coherent_pdf(ComplexAmplitude::real(0.0), 0.0, &other).unwrap();
        assert!(matches!(
            born_predict(&g, &p),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn ground_truth_ideal_is_identity() {
        let g = ground_truth_g(&NoiseParams::ideal(), square_grid(), square_grid());
        let dy = g.basis_grid.spacing();
        for j in 0..g.n_outcomes() {
            for k in 0..g.n_basis() {
                let expect = if j == k { 1.0 / dy } else { 0.0 };
                assert!(
                    (g.entry(j, k) - expect).abs() < 1e-12 / dy,
                    "({j},{k}) = {}",
                    g.entry(j, k)
                );
            }
        }
    }

    #[test]
    fn ground_truth_row_centers_scale() {
        let noise = NoiseParams::new(0.81, 0.0).unwrap();
        let g = ground_truth_g(&noise, square_grid(), square_grid());
        // Row at x_j collects basis points with sqrt(eta) y ~ x_j, i.e. centered
        // at y = x_j / 0.9 (checked away from the basis edge).
        let spreads = spread_metrics(&g);
        for j in (20..=140).step_by(20) {
            let s = spreads[j].unwrap();
            assert_abs_diff_eq!(s.center, s.outcome / 0.9, epsilon = 2e-3);
        }
    }

    #[test]
    fn ground_truth_columns_resolve_identity() {
        let noise = NoiseParams::new(0.81, 0.01).unwrap();
        let g = ground_truth_g(&noise, square_grid(), square_grid());
        let sums = g.column_sums();
        let std = noise.kernel_variance().sqrt();
        for (k, y) in g.basis_grid.points().enumerate() {
            let mapped = 0.9 * y;
            if mapped - 4.0 * std > -2.0 && mapped + 4.0 * std < 2.0 {
                assert!(
                    (sums[k] - 1.0).abs() < 1e-6,
                    "column {k} (y={y}) sums to {}",
                    sums[k]
                );
            }
        }
    }

    #[test]
    fn delta_of_identity_is_dimension() {
        let g = GMatrix::identity(square_grid(), square_grid()).unwrap();
        assert_abs_diff_eq!(delta_figure(&g).unwrap(), 161.0, epsilon = 1e-9);
        let zeros = GMatrix::new(square_grid(), square_grid(), vec![0.0; 161 * 161]).unwrap();
        assert_eq!(delta_figure(&zeros).unwrap(), 0.0);
    }

    #[test]
    fn delta_ground_truth_between_zero_and_n() {
        let noise = NoiseParams::new(0.81, 0.01).unwrap();
        let g = ground_truth_g(&noise, square_grid(), square_grid());
        let d = delta_figure(&g).unwrap();
        assert!(d > 0.0 && d < 161.0, "delta = {d}");
    }

    #[test]
    fn delta_monotone_under_diagonal_zeroing() {
        let noise = NoiseParams::new(0.9, 0.005).unwrap();
        let g = ground_truth_g(&noise, square_grid(), square_grid());
        let mut entries = g.entries().to_vec();
        let before = delta_figure(&g).unwrap();
        for j in (0..161).step_by(8) {
            entries[j * 161 + j] = 0.0;
        }
        let zeroed = GMatrix::new(square_grid(), square_grid(), entries).unwrap();
        assert!(delta_figure(&zeroed).unwrap() < before);
    }

    #[test]
    fn delta_requires_square() {
        let basis = QuadratureGrid::new(-3.2, 3.2, 257).unwrap();
        let g = GMatrix::identity(square_grid(), basis).unwrap();
        assert!(matches!(delta_figure(&g), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn overlap_closed_form() {
        assert_abs_diff_eq!(overlap_f(0.0, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(overlap_f(0.0, 2.0).unwrap(), 0.25, epsilon = 1e-15);
        // Numerical quadrature oracle for the defining integral.
        let sigma = 0.7;
        let y = 0.9;
        let n = 20001;
        let h = 20.0 * sigma / (n - 1) as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = -10.0 * sigma + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w
                * gaussian_density(x, 0.0, sigma * sigma)
                * gaussian_density(x, y, sigma * sigma);
        }
        let numeric = std::f64::consts::PI.sqrt() * acc * h;
        assert_abs_diff_eq!(numeric, overlap_f(y, sigma).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn overlap_argmax_matches_closed_form() {
        for sigma in [0.25, 0.5, 1.0, 2.0] {
            let got = overlap_argmax(sigma).unwrap();
            assert!(
                (got - sigma * std::f64::consts::SQRT_2).abs() < 1e-4,
                "sigma={sigma}: {got}"
            );
        }
        assert!(overlap_argmax(-1.0).is_err());
        assert!(overlap_f(1.0, 0.0).is_err());
    }

    #[test]
    fn spread_identity_and_zero_rows() {
        let g = GMatrix::identity(square_grid(), square_grid()).unwrap();
        let spreads = spread_metrics(&g);
        let s = spreads[40].unwrap();
        assert_abs_diff_eq!(s.center, g.outcome_grid.point(40), epsilon = 1e-12);
        assert_abs_diff_eq!(s.rms_width, 0.0, epsilon = 1e-9);

        let zeros = GMatrix::new(square_grid(), square_grid(), vec![0.0; 161 * 161]).unwrap();
        assert!(spread_metrics(&zeros).iter().all(|s| s.is_none()));
    }

    #[test]
    fn scale_factor_sigma_serde() {
        let sf = ScaleFactors {
            gamma: vec![1.0, 0.9],
            sigma_gamma: vec![f64::INFINITY, 0.02],
            pinned: vec![true, false],
        };
        let s = serde_json::to_string(&sf).unwrap();
        assert!(s.contains("null"));
        let back: ScaleFactors = serde_json::from_str(&s).unwrap();
        assert!(back.sigma_gamma[0].is_infinite());
        assert_eq!(back.sigma_gamma[1], 0.02);
        back.validate([0.2, 1.2]).unwrap();
    }
}
