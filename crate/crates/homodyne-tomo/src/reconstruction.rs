//! Tomographic inversion: joint fit of the non-negative g-matrix and the
//! per-probe rescaling factors by alternating non-negative least squares
//! with one-dimensional line searches, plus uncertainty estimation and
//! probe-spacing sweeps.
//!
//! Each outer iteration runs the scalar rescaling step first (against the
//! current g, initialized to the ideal identity detector) and then refits
//! the g-matrix rows by NNLS. The objective never increases across
//! half-steps; iteration stops at a declared relative-decrease tolerance,
//! which fixes the estimate within the model's scale-degenerate valley.

use crate::detector::{delta_figure, DetectorPovm, GMatrix, PovmMetadata, ScaleFactors};
use crate::error::{Error, Result};
use crate::grid::QuadratureGrid;
use crate::nnls::nnls;
use crate::optim::golden_section;
use crate::simulator::{make_analytic_records, ProbeRecord, ProbeSpec};
use crate::states::{gaussian_density, NoiseParams, COHERENT_VARIANCE};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Inputs of one reconstruction.
#[derive(Debug, Clone)]
pub struct ReconstructionProblem {
    pub probes: Vec<ProbeRecord>,
    pub outcome_grid: QuadratureGrid,
    pub basis_grid: QuadratureGrid,
    pub probe_set_id: String,
}

impl ReconstructionProblem {
    pub fn new(
        probes: Vec<ProbeRecord>,
        outcome_grid: QuadratureGrid,
        basis_grid: QuadratureGrid,
        probe_set_id: impl Into<String>,
    ) -> Result<Self> {
        if probes.is_empty() {
            return Err(Error::InvalidParam("need at least one probe".into()));
        }
        for (i, p) in probes.iter().enumerate() {
            if p.histogram.grid != outcome_grid {
                return Err(Error::GridMismatch(format!(
                    "probe {i} histogram grid differs from the outcome grid"
                )));
            }
        }
        Ok(Self {
            probes,
            outcome_grid,
            basis_grid,
            probe_set_id: probe_set_id.into(),
        })
    }
}

/// Solver knobs. `nnls_tol` is relative to the dual scale ||A'b||_inf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub gamma_bounds: [f64; 2],
    /// Probes with |projected calibrated amplitude| below this are pinned to
    /// gamma = 1 (near the origin the rescaling is not identifiable).
    pub gamma_pin_threshold: f64,
    /// Relative objective-decrease tolerance ending the outer loop.
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub nnls_tol: f64,
    pub nnls_max_iter: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma_bounds: [0.2, 1.2],
            gamma_pin_threshold: 0.5,
            outer_tol: 2e-2,
            max_outer_iters: 50,
            nnls_tol: 1e-10,
            nnls_max_iter: 50_000,
        }
    }
}

impl SolverConfig {
    /// Configuration for spacing sweeps: all rescaling factors imposed at 1
    /// and the NNLS dual tolerance backed off to the scale of experimental
    /// noise floors, which is what makes the reconstruction-quality
    /// transition visible on noiseless data.
    pub fn sweep_defaults() -> Self {
        Self {
            gamma_pin_threshold: f64::INFINITY,
            nnls_tol: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.gamma_bounds;
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParam(format!(
                "gamma bounds must be finite with lo < hi, got {:?}",
                self.gamma_bounds
            )));
        }
        if !(self.outer_tol > 0.0) || !(self.nnls_tol > 0.0) {
            return Err(Error::InvalidParam("tolerances must be positive".into()));
        }
        if self.max_outer_iters == 0 || self.nnls_max_iter == 0 {
            return Err(Error::InvalidParam(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of a fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionResult {
    pub povm: DetectorPovm,
    /// Final value of the least-squares objective.
    pub objective: f64,
    pub outer_iters: usize,
    /// Inverse-variance weighted mean of the unpinned rescaling factors
    /// (1.0 when every probe is pinned).
    pub gamma_bar: f64,
    #[serde(with = "crate::serde_util::maybe_inf")]
    pub gamma_bar_sigma: f64,
    pub converged: bool,
}

/// Design matrix A[s][k] = sqrt(2/pi) exp(-2 (y_k - mu_s)^2) dy with
/// mu_s = gamma_s * (projected calibrated amplitude of probe s).
pub fn design_matrix(
    gammas: &[f64],
    probes: &[ProbeRecord],
    basis_grid: &QuadratureGrid,
) -> Array2<f64> {
    assert_eq!(gammas.len(), probes.len());
    let dy = basis_grid.spacing();
    let ys: Vec<f64> = basis_grid.points().collect();
    let mut a = Array2::zeros((probes.len(), ys.len()));
    for (s, probe) in probes.iter().enumerate() {
        let mu = gammas[s] * probe.projected_calibrated();
        for (k, y) in ys.iter().enumerate() {
            a[(s, k)] = gaussian_density(*y, mu, COHERENT_VARIANCE) * dy;
        }
    }
    a
}

/// Internal working state shared by the half-steps.
struct FitState<'a> {
    probes: &'a [ProbeRecord],
    basis_grid: QuadratureGrid,
    /// data[j][s]: histogram value of probe s at outcome j.
    data: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl<'a> FitState<'a> {
    fn new(problem: &'a ReconstructionProblem) -> Self {
        let n_out = problem.outcome_grid.n_points();
        let data = (0..n_out)
            .map(|j| problem.probes.iter().map(|p| p.histogram.values[j]).collect())
            .collect();
        Self {
            probes: &problem.probes,
            basis_grid: problem.basis_grid,
            data,
            ys: problem.basis_grid.points().collect(),
        }
    }

    /// Full objective for the current (g, gamma).
    fn objective(&self, g: &Array2<f64>, gammas: &[f64]) -> f64 {
        let a = design_matrix(gammas, self.probes, &self.basis_grid);
        let pred = g.dot(&a.t()); // (J, S)
        let mut acc = 0.0;
        for (j, row) in self.data.iter().enumerate() {
            for (s, d) in row.iter().enumerate() {
                let r = d - pred[(j, s)];
                acc += r * r;
            }
        }
        acc
    }

    /// Objective restricted to probe `s` as a function of its gamma,
    /// holding g fixed.
    fn probe_objective(&self, g: &Array2<f64>, s: usize, gamma: f64) -> f64 {
        let dy = self.basis_grid.spacing();
        let mu = gamma * self.probes[s].projected_calibrated();
        let kernel: Vec<f64> = self
            .ys
            .iter()
            .map(|y| gaussian_density(*y, mu, COHERENT_VARIANCE) * dy)
            .collect();
        let mut acc = 0.0;
        for (j, row) in self.data.iter().enumerate() {
            let pred: f64 = g
                .row(j)
                .iter()
                .zip(&kernel)
                .map(|(gv, kv)| gv * kv)
                .sum();
            let r = row[s] - pred;
            acc += r * r;
        }
        acc
    }
}

/// Alternating reconstruction of the g-matrix and rescaling factors.
pub fn fit(problem: &ReconstructionProblem, config: &SolverConfig) -> Result<ReconstructionResult> {
    config.validate()?;
    let state = FitState::new(problem);
    let n_probes = problem.probes.len();
    let (n_out, n_bas) = (
        problem.outcome_grid.n_points(),
        problem.basis_grid.n_points(),
    );

    let pinned: Vec<bool> = problem
        .probes
        .iter()
        .map(|p| p.projected_calibrated().abs() < config.gamma_pin_threshold)
        .collect();
    let mut gammas = vec![1.0; n_probes];

    // g starts as the ideal detector so the first gamma step calibrates the
    // probe scales against it.
    let ident = GMatrix::identity(problem.outcome_grid, problem.basis_grid)?;
    let mut g = Array2::from_shape_vec((n_out, n_bas), ident.entries().to_vec())
        .expect("identity shape");

    let f_init = state.objective(&g, &gammas);
    let mono_tol = 1e-12 * f_init + 1e-300;
    let mut f_prev_outer = f_init;
    let mut converged = false;
    let mut outer_iters = 0;
    let [lo, hi] = config.gamma_bounds;

    for _ in 0..config.max_outer_iters {
        let f_before = if outer_iters == 0 {
            f_init
        } else {
            f_prev_outer
        };

        // Step B: per-probe scalar minimization, g fixed. Accept only
        // improvements; prefer the lower gamma on exact ties.
        for s in 0..n_probes {
            if pinned[s] {
                continue;
            }
            let current = state.probe_objective(&g, s, gammas[s]);
            let candidate = golden_section(|gm| state.probe_objective(&g, s, gm), lo, hi, 1e-4);
            let f_cand = state.probe_objective(&g, s, candidate);
            if f_cand < current || (f_cand == current && candidate < gammas[s]) {
                gammas[s] = candidate;
            }
        }
        let f_after_b = state.objective(&g, &gammas);
        assert!(
            f_after_b <= f_before + mono_tol,
            "objective increased across the gamma half-step: {f_before} -> {f_after_b}"
        );

        // Step A: rows decouple into one NNLS per outcome with a shared
        // design matrix.
        let a = design_matrix(&gammas, problem.probes, &problem.basis_grid);
        for j in 0..n_out {
            let row = nnls(a.view(), &state.data[j], config.nnls_tol, config.nnls_max_iter)?;
            g.row_mut(j)
                .iter_mut()
                .zip(&row)
                .for_each(|(dst, src)| *dst = *src);
        }
        let f_after_a = state.objective(&g, &gammas);
        assert!(
            f_after_a <= f_after_b + mono_tol,
            "objective increased across the NNLS half-step: {f_after_b} -> {f_after_a}"
        );

        outer_iters += 1;
        if f_prev_outer - f_after_a <= config.outer_tol * f_prev_outer.max(1e-300) {
            f_prev_outer = f_after_a;
            converged = true;
            break;
        }
        f_prev_outer = f_after_a;
    }

    let g_matrix = GMatrix::from_array(
        problem.outcome_grid,
        problem.basis_grid,
        g.mapv(|v| v.max(0.0)),
    )?;

    let sigmas = probe_sigmas(&state, &g, &gammas, &pinned);
    let scale = ScaleFactors {
        gamma: gammas.clone(),
        sigma_gamma: sigmas,
        pinned: pinned.clone(),
    };
    let (gamma_bar, gamma_bar_sigma) = match weighted_gamma_bar(&scale) {
        Ok(pair) => pair,
        Err(Error::NoValidProbe) => (1.0, f64::INFINITY),
        Err(e) => return Err(e),
    };

    let objective = state.objective(&g, &gammas);
    let metadata = PovmMetadata {
        probe_set_id: problem.probe_set_id.clone(),
        solver_config_hash: config_hash(config),
        created_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };

    Ok(ReconstructionResult {
        povm: DetectorPovm {
            g: g_matrix,
            scale: Some(scale),
            metadata: Some(metadata),
        },
        objective,
        outer_iters,
        gamma_bar,
        gamma_bar_sigma,
        converged,
    })
}

fn config_hash(config: &SolverConfig) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(config).unwrap_or_default();
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Curvature-based uncertainties: sigma_s = [d^2 F / d gamma_s^2]^{-1/2} by
/// central finite difference at step 1e-3, holding g fixed. Pinned probes and
/// non-positive curvatures get an infinity marker.
fn probe_sigmas(
    state: &FitState<'_>,
    g: &Array2<f64>,
    gammas: &[f64],
    pinned: &[bool],
) -> Vec<f64> {
    const STEP: f64 = 1e-3;
    (0..gammas.len())
        .map(|s| {
            if pinned[s] {
                return f64::INFINITY;
            }
            let f0 = state.probe_objective(g, s, gammas[s]);
            let fp = state.probe_objective(g, s, gammas[s] + STEP);
            let fm = state.probe_objective(g, s, gammas[s] - STEP);
            let curvature = (fp - 2.0 * f0 + fm) / (STEP * STEP);
            if curvature > 0.0 {
                1.0 / curvature.sqrt()
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

/// Public wrapper recomputing the per-probe uncertainties for a finished fit.
pub fn gamma_uncertainty(
    problem: &ReconstructionProblem,
    result: &ReconstructionResult,
) -> Result<Vec<f64>> {
    let scale = result
        .povm
        .scale
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("result carries no scale factors".into()))?;
    if scale.gamma.len() != problem.probes.len() {
        return Err(Error::InvalidParam(
            "result and problem probe counts differ".into(),
        ));
    }
    let state = FitState::new(problem);
    let g = Array2::from_shape_vec(
        (
            problem.outcome_grid.n_points(),
            problem.basis_grid.n_points(),
        ),
        result.povm.g.entries().to_vec(),
    )
    .map_err(|e| Error::InvalidParam(format!("g shape: {e}")))?;
    Ok(probe_sigmas(&state, &g, &scale.gamma, &scale.pinned))
}

/// Inverse-variance weighted mean over unpinned probes with finite sigma.
pub fn weighted_gamma_bar(scale: &ScaleFactors) -> Result<(f64, f64)> {
    let mut weight_sum = 0.0;
    let mut weighted = 0.0;
    for ((g, s), p) in scale
        .gamma
        .iter()
        .zip(&scale.sigma_gamma)
        .zip(&scale.pinned)
    {
        if *p || !s.is_finite() || *s <= 0.0 {
            continue;
        }
        let w = 1.0 / (s * s);
        weight_sum += w;
        weighted += w * g;
    }
    if weight_sum <= 0.0 {
        return Err(Error::NoValidProbe);
    }
    Ok((weighted / weight_sum, (1.0 / weight_sum).sqrt()))
}

/// One point of a spacing sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub delta_alpha: f64,
    pub delta_over_n: f64,
}

/// Reconstruction quality as a function of probe-amplitude spacing:
/// equidistant phase-0 probe ladders over `amplitude_range`, fitted with
/// noiseless analytic probabilities of the `truth` detector on matched
/// square grids, scored by the normalized trace figure.
pub fn spacing_sweep(
    amplitude_range: (f64, f64),
    spacings: &[f64],
    truth: &NoiseParams,
    grid: &QuadratureGrid,
    config: &SolverConfig,
) -> Result<Vec<SweepPoint>> {
    let (lo, hi) = amplitude_range;
    if !(lo < hi) {
        return Err(Error::InvalidParam(format!(
            "amplitude range needs lo < hi, got ({lo}, {hi})"
        )));
    }
    if spacings.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InvalidParam("spacings must be positive".into()));
    }
    let mut sweep_config = config.clone();
    // The sweep imposes |alpha| = |alpha_tilde|: no rescaling step.
    sweep_config.gamma_pin_threshold = f64::INFINITY;

    let mut out = Vec::with_capacity(spacings.len());
    for &dal in spacings {
        let m = ((hi - lo) / dal + 1e-9).floor() as usize;
        let center = 0.5 * (lo + hi);
        let start = center - 0.5 * m as f64 * dal;
        let specs: Vec<ProbeSpec> = (0..=m)
            .map(|i| {
                let signed = start + dal * i as f64;
                ProbeSpec {
                    amplitude_true: signed.abs(),
                    phase: if signed < 0.0 { std::f64::consts::PI } else { 0.0 },
                    n_samples: 1,
                }
            })
            .collect();
        let records = make_analytic_records(&specs, truth, grid);
        let problem = ReconstructionProblem::new(records, *grid, *grid, format!("sweep_{dal}"))?;
        let result = fit(&problem, &sweep_config)?;
        let delta = delta_figure(&result.povm.g)?;
        out.push(SweepPoint {
            delta_alpha: dal,
            delta_over_n: delta / grid.n_points() as f64,
        });
    }
    Ok(out)
}

/// Half-crossing of a sweep curve between its first and last values,
/// located by linear interpolation.
pub fn transition_midpoint(points: &[SweepPoint]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let hi = points.first().unwrap().delta_over_n;
    let lo = points.last().unwrap().delta_over_n;
    let half = 0.5 * (hi + lo);
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.delta_over_n >= half && half >= b.delta_over_n {
            let t = (a.delta_over_n - half) / (a.delta_over_n - b.delta_over_n);
            return Some(a.delta_alpha + t * (b.delta_alpha - a.delta_alpha));
        }
    }
    None
}
