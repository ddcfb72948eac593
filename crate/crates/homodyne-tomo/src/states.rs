//! Quadrature-space representations of the probe and validation states, and
//! the loss/noise channel mapping ideal states to detected statistics.
//!
//! Convention: the quadrature is x_phi = (a' e^{i phi} + a e^{-i phi})/2, so the
//! vacuum has variance 1/4 and a coherent state |alpha> measured at phase phi is
//! a Gaussian with mean Re(alpha e^{-i phi}) and variance 1/4.

use crate::error::{Error, Result};
use crate::grid::{trapezoid, QuadratureGrid, QuadraturePdf, MASS_TOLERANCE};
use serde::{Deserialize, Serialize};

/// Quadrature variance of the vacuum (and of any coherent state).
pub const COHERENT_VARIANCE: f64 = 0.25;

/// Largest photon number supported by the Hermite recurrence path.
pub const MAX_FOCK_N: usize = 64;

/// Neglected Fock-tail weight allowed in a SPACS expansion.
pub const SPACS_TAIL_TOLERANCE: f64 = 1e-10;

/// Normal density. Every Gaussian in the crate funnels through this one
/// expression so that analytically equal quantities are bit-equal.
pub fn gaussian_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-(d * d) / (2.0 * variance)).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + libm::erf(z / std::f64::consts::SQRT_2))
}

/// Complex field amplitude alpha.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexAmplitude {
    pub re: f64,
    pub im: f64,
}

impl ComplexAmplitude {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !re.is_finite() || !im.is_finite() {
            return Err(Error::InvalidParam("amplitude must be finite".into()));
        }
        Ok(Self { re, im })
    }

    pub fn real(a: f64) -> Self {
        Self { re: a, im: 0.0 }
    }

    pub fn modulus(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Re(alpha e^{-i phi}): the mean of the phase-phi quadrature distribution.
    pub fn projected(&self, phi: f64) -> f64 {
        self.re * phi.cos() + self.im * phi.sin()
    }
}

/// Detection efficiency and electronic noise of a simulated detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub eta: f64,
    pub v_el: f64,
}

impl NoiseParams {
    pub fn new(eta: f64, v_el: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidParam(format!(
                "efficiency must be in (0, 1], got {eta}"
            )));
        }
        if !(v_el >= 0.0) || !v_el.is_finite() {
            return Err(Error::InvalidParam(format!(
                "electronic noise variance must be >= 0, got {v_el}"
            )));
        }
        Ok(Self { eta, v_el })
    }

    pub fn ideal() -> Self {
        Self { eta: 1.0, v_el: 0.0 }
    }

    /// Variance of the convolution kernel the channel applies.
    pub fn kernel_variance(&self) -> f64 {
        (1.0 - self.eta) * COHERENT_VARIANCE + self.v_el
    }
}

/// Symbolic description of a probe or validation state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateModel {
    Coherent {
        alpha: ComplexAmplitude,
    },
    Fock {
        n: usize,
    },
    /// Photon-added coherent state a'|alpha> / sqrt(1+|alpha|^2), prepared with
    /// efficiency zeta: the failed additions leave the seed coherent state.
    Spacs {
        alpha: ComplexAmplitude,
        zeta: f64,
        truncation: usize,
    },
}

impl StateModel {
    pub fn coherent(alpha: ComplexAmplitude) -> Self {
        StateModel::Coherent { alpha }
    }

    pub fn fock(n: usize) -> Result<Self> {
        if n > MAX_FOCK_N {
            return Err(Error::PhotonNumberTooLarge { n, max: MAX_FOCK_N });
        }
        Ok(StateModel::Fock { n })
    }

    pub fn spacs(alpha: ComplexAmplitude, zeta: f64, truncation: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&zeta) {
            return Err(Error::InvalidParam(format!(
                "preparation efficiency must be in [0, 1], got {zeta}"
            )));
        }
        if truncation == 0 {
            return Err(Error::InvalidParam("truncation must be positive".into()));
        }
        // Constructing the coefficients enforces the tail-weight invariant.
        spacs_fock_coefficients(alpha, truncation)?;
        Ok(StateModel::Spacs {
            alpha,
            zeta,
            truncation,
        })
    }

    /// Ideal quadrature density at measurement phase `phi`. The SPACS variant
    /// includes its preparation-efficiency mixture.
    pub fn pdf(&self, phi: f64, grid: &QuadratureGrid) -> Result<QuadraturePdf> {
        match self {
            StateModel::Coherent { alpha } => coherent_pdf(*alpha, phi, grid),
            StateModel::Fock { n } => fock_pdf(*n, grid),
            StateModel::Spacs {
                alpha,
                zeta,
                truncation,
            } => {
                let pure = spacs_pdf(*alpha, phi, grid, *truncation)?;
                let seed = coherent_pdf(*alpha, phi, grid)?;
                mix_pdf(&pure, &seed, *zeta)
            }
        }
    }
}

/// Quadrature density of |alpha> at phase `phi`: a Gaussian with mean
/// Re(alpha e^{-i phi}) and variance 1/4.
pub fn coherent_pdf(
    alpha: ComplexAmplitude,
    phi: f64,
    grid: &QuadratureGrid,
) -> Result<QuadraturePdf> {
    let mu = alpha.projected(phi);
    let values = grid
        .points()
        .map(|x| gaussian_density(x, mu, COHERENT_VARIANCE))
        .collect();
    QuadraturePdf::new_checked(*grid, values, MASS_TOLERANCE)
}

/// Hermite functions h_0..h_n at argument `t` (unit-variance convention),
/// by the stable three-term recurrence.
fn hermite_functions(n: usize, t: f64) -> Vec<f64> {
    let mut h = Vec::with_capacity(n + 1);
    let h0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * t * t).exp();
    h.push(h0);
    if n == 0 {
        return h;
    }
    h.push(std::f64::consts::SQRT_2 * t * h0);
    for k in 1..n {
        let next = (2.0 / (k as f64 + 1.0)).sqrt() * t * h[k]
            - (k as f64 / (k as f64 + 1.0)).sqrt() * h[k - 1];
        h.push(next);
    }
    h
}

/// Harmonic-oscillator eigenfunction psi_n in the variance-1/4 convention,
/// evaluated at `x`: psi_n(x) = 2^{1/4} h_n(sqrt(2) x).
fn psi_n(n: usize, x: f64) -> f64 {
    let t = std::f64::consts::SQRT_2 * x;
    let h = hermite_functions(n, t);
    2f64.powf(0.25) * h[n]
}

/// Quadrature density of the Fock state |n>; phase-independent.
pub fn fock_pdf(n: usize, grid: &QuadratureGrid) -> Result<QuadraturePdf> {
    if n > MAX_FOCK_N {
        return Err(Error::PhotonNumberTooLarge { n, max: MAX_FOCK_N });
    }
    let values = grid
        .points()
        .map(|x| {
            let p = psi_n(n, x);
            p * p
        })
        .collect();
    QuadraturePdf::new_checked(*grid, values, MASS_TOLERANCE)
}

/// Fock-basis coefficients d_n of the normalized SPACS a'|alpha>/sqrt(1+|alpha|^2),
/// as (re, im) pairs. Errors if the neglected tail weight is not below tolerance.
fn spacs_fock_coefficients(
    alpha: ComplexAmplitude,
    truncation: usize,
) -> Result<Vec<(f64, f64)>> {
    let norm = (1.0 + alpha.modulus().powi(2)).sqrt();
    // c_n = e^{-|alpha|^2/2} alpha^n / sqrt(n!), built by recurrence;
    // d_{n+1} = c_n sqrt(n+1) / norm, d_0 = 0.
    let mut d = vec![(0.0, 0.0); truncation + 1];
    let (mut c_re, mut c_im) = ((-0.5 * alpha.modulus().powi(2)).exp(), 0.0);
    for n in 0..truncation {
        let s = ((n + 1) as f64).sqrt();
        d[n + 1] = (c_re * s / norm, c_im * s / norm);
        // c_{n+1} = c_n * alpha / sqrt(n+1)
        let (re, im) = (c_re, c_im);
        c_re = (re * alpha.re - im * alpha.im) / s;
        c_im = (re * alpha.im + im * alpha.re) / s;
    }
    let captured: f64 = d.iter().map(|(re, im)| re * re + im * im).sum();
    let tail = 1.0 - captured;
    if tail >= SPACS_TAIL_TOLERANCE {
        return Err(Error::TruncationInsufficient {
            tail,
            limit: SPACS_TAIL_TOLERANCE,
        });
    }
    Ok(d)
}

/// Quadrature density of the pure SPACS at phase `phi`, via the Fock expansion
/// marginalized with Hermite functions.
pub fn spacs_pdf(
    alpha: ComplexAmplitude,
    phi: f64,
    grid: &QuadratureGrid,
    truncation: usize,
) -> Result<QuadraturePdf> {
    let d = spacs_fock_coefficients(alpha, truncation)?;
    let quarter_pow = 2f64.powf(0.25);
    let values = grid
        .points()
        .map(|x| {
            let t = std::f64::consts::SQRT_2 * x;
            let h = hermite_functions(truncation, t);
            // psi(x; phi) = sum_n d_n e^{-i n phi} psi_n(x)
            let (mut wf_re, mut wf_im) = (0.0, 0.0);
            for (n, (d_re, d_im)) in d.iter().enumerate() {
                let (c, s) = ((n as f64 * phi).cos(), -(n as f64 * phi).sin());
                let psi = quarter_pow * h[n];
                wf_re += (d_re * c - d_im * s) * psi;
                wf_im += (d_re * s + d_im * c) * psi;
            }
            wf_re * wf_re + wf_im * wf_im
        })
        .collect();
    QuadraturePdf::new_checked(*grid, values, MASS_TOLERANCE)
}

/// Convex mixture zeta * p_a + (1 - zeta) * p_b on identical grids.
pub fn mix_pdf(p_a: &QuadraturePdf, p_b: &QuadraturePdf, zeta: f64) -> Result<QuadraturePdf> {
    if p_a.grid != p_b.grid {
        return Err(Error::GridMismatch(
            "mix_pdf requires identical grids".into(),
        ));
    }
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidParam(format!(
            "mixture weight must be in [0, 1], got {zeta}"
        )));
    }
    let values = p_a
        .values
        .iter()
        .zip(&p_b.values)
        .map(|(a, b)| zeta * a + (1.0 - zeta) * b)
        .collect();
    QuadraturePdf::new_unchecked(p_a.grid, values)
}

/// Push a density through the detection channel: measured X = sqrt(eta) X_in +
/// sqrt(1-eta) X_vac + electronic noise. The output density is
/// q(x) = Integral dy p(y) N(x; sqrt(eta) y, (1-eta)/4 + v_el), evaluated by
/// trapezoidal quadrature on p's grid. The degenerate case eta = 1, v_el = 0
/// resamples p onto `out_grid`.
pub fn apply_loss(
    p: &QuadraturePdf,
    noise: &NoiseParams,
    out_grid: &QuadratureGrid,
) -> Result<QuadraturePdf> {
    if noise.eta == 1.0 && noise.v_el == 0.0 {
        return Ok(p.resample(out_grid));
    }
    let var = noise.kernel_variance();
    let std = var.sqrt();
    let h_in = p.grid.spacing();
    if std < 2.0 * h_in {
        return Err(Error::GridTooCoarse {
            kernel_std: std,
            spacing: h_in,
        });
    }
    let sqrt_eta = noise.eta.sqrt();
    let ys: Vec<f64> = p.grid.points().collect();
    let values: Vec<f64> = out_grid
        .points()
        .map(|x| {
            let integrand: Vec<f64> = ys
                .iter()
                .zip(&p.values)
                .map(|(y, py)| py * gaussian_density(x, sqrt_eta * y, var))
                .collect();
            trapezoid(&integrand, h_in)
        })
        .collect();
    // Loss preserves normalization; allow twice the truncation tolerance for
    // the two quadratures involved.
    QuadraturePdf::new_checked(*out_grid, values, 2.0 * MASS_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn grid(a: f64, b: f64, n: usize) -> QuadratureGrid {
        QuadratureGrid::new(a, b, n).unwrap()
    }

    fn wide() -> QuadratureGrid {
        grid(-6.0, 6.0, 481)
    }

    #[test]
    fn coherent_vacuum_peak() {
        let g = grid(-4.0, 4.0, 161);
        let pdf = coherent_pdf(ComplexAmplitude::real(0.0), 0.0, &g).unwrap();
        let peak = pdf.values[80];
        assert_abs_diff_eq!(peak, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-15);
        assert!((pdf.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coherent_phase_projection() {
        let g = grid(-5.0, 5.0, 401);
        let pi = std::f64::consts::PI;
        let flipped = coherent_pdf(ComplexAmplitude::real(1.0), pi, &g).unwrap();
        assert_abs_diff_eq!(flipped.mean(), -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(flipped.variance(), 0.25, epsilon = 1e-6);
        let third = coherent_pdf(ComplexAmplitude::real(1.0), pi / 3.0, &g).unwrap();
        assert_abs_diff_eq!(third.mean(), 0.5, epsilon = 1e-9);
    }

    #[test]
    fn coherent_rejects_small_grid() {
        let g = grid(-1.0, 1.0, 41);
        assert!(matches!(
            coherent_pdf(ComplexAmplitude::real(3.0), 0.0, &g),
            Err(Error::GridTooSmall { .. })
        ));
    }

    #[test]
    fn fock_node_and_value() {
        let g = wide();
        let p1 = fock_pdf(1, &g).unwrap();
        assert_eq!(p1.value_at(0.0), 0.0);
        // |psi_1(1/2)|^2 = sqrt(2/pi) e^{-1/2}
        let expect = (2.0 / std::f64::consts::PI).sqrt() * (-0.5f64).exp();
        assert_abs_diff_eq!(p1.value_at(0.5), expect, epsilon = 1e-12);
    }

    #[test]
    fn fock_zero_is_vacuum() {
        let g = grid(-4.0, 4.0, 161);
        let f0 = fock_pdf(0, &g).unwrap();
        let c0 = coherent_pdf(ComplexAmplitude::real(0.0), 0.0, &g).unwrap();
        assert!(f0.max_abs_diff(&c0) < 1e-14);
    }

    #[test]
    fn fock_matches_polynomial_oracle() {
        // Independent route: |psi_n(x)|^2 = sqrt(2/pi) H_n(sqrt2 x)^2 e^{-2x^2} / (2^n n!)
        // with the physicists' Hermite polynomial recurrence.
        fn hermite_poly(n: usize, t: f64) -> f64 {
            let (mut hm, mut h) = (1.0, 2.0 * t);
            if n == 0 {
                return 1.0;
            }
            for k in 1..n {
                let next = 2.0 * t * h - 2.0 * k as f64 * hm;
                hm = h;
                h = next;
            }
            h
        }
        let g = wide();
        for n in 0..=10usize {
            let pdf = fock_pdf(n, &g).unwrap();
            let fact: f64 = (1..=n).map(|k| k as f64).product::<f64>().max(1.0);
            for (i, x) in g.points().enumerate() {
                let t = std::f64::consts::SQRT_2 * x;
                let oracle = (2.0 / std::f64::consts::PI).sqrt() * hermite_poly(n, t).powi(2)
                    * (-2.0 * x * x).exp()
                    / (2f64.powi(n as i32) * fact);
                assert!(
                    (pdf.values[i] - oracle).abs() < 1e-12,
                    "n={n} x={x}: {} vs {}",
                    pdf.values[i],
                    oracle
                );
            }
        }
    }

    #[test]
    fn fock_caps_photon_number() {
        let g = wide();
        assert!(matches!(
            fock_pdf(65, &g),
            Err(Error::PhotonNumberTooLarge { .. })
        ));
    }

    #[test]
    fn spacs_at_origin_is_single_photon() {
        let g = wide();
        let sp = spacs_pdf(ComplexAmplitude::real(0.0), 0.0, &g, 16).unwrap();
        let f1 = fock_pdf(1, &g).unwrap();
        assert!(sp.max_abs_diff(&f1) < 1e-14);
    }

    #[test]
    fn spacs_small_alpha_limit() {
        let g = wide();
        let sp = spacs_pdf(ComplexAmplitude::real(1e-5), 0.0, &g, 16).unwrap();
        let f1 = fock_pdf(1, &g).unwrap();
        assert!(sp.max_abs_diff(&f1) < 1e-8);
    }

    #[test]
    fn spacs_normalized() {
        let g = wide();
        for a in [0.3, 0.5, 1.0, 2.0] {
            let sp = spacs_pdf(ComplexAmplitude::real(a), 0.7, &g, 40).unwrap();
            assert!((sp.integral() - 1.0).abs() < 1e-9, "alpha={a}");
        }
    }

    /// Brute-force oracle: truncated matrix of the quadrature operator in the
    /// Fock basis, expectation value on the SPACS coefficient vector.
    fn fock_matrix_mean(alpha: f64, dim: usize) -> f64 {
        let norm = (1.0 + alpha * alpha).sqrt();
        let mut d = vec![0.0; dim];
        let mut c = (-0.5 * alpha * alpha).exp();
        for n in 0..dim - 1 {
            let s = ((n + 1) as f64).sqrt();
            d[n + 1] = c * s / norm;
            c = c * alpha / s;
        }
        // X[m][n] = (sqrt(n) delta_{m,n-1} + sqrt(n+1) delta_{m,n+1}) / 2
        let mut mean = 0.0;
        for n in 0..dim {
            if n >= 1 {
                mean += d[n - 1] * 0.5 * (n as f64).sqrt() * d[n];
            }
            if n + 1 < dim {
                mean += d[n + 1] * 0.5 * ((n + 1) as f64).sqrt() * d[n];
            }
        }
        mean
    }

    #[test]
    fn spacs_mean_matches_fock_matrix_oracle() {
        let g = wide();
        let sp = spacs_pdf(ComplexAmplitude::real(0.5), 0.0, &g, 40).unwrap();
        let oracle = fock_matrix_mean(0.5, 42);
        assert_abs_diff_eq!(sp.mean(), oracle, epsilon = 1e-8);
        // and the closed form alpha (alpha^2 + 2) / (1 + alpha^2)
        assert_abs_diff_eq!(oracle, 0.5 * 2.25 / 1.25, epsilon = 1e-12);
    }

    #[test]
    fn spacs_truncation_guard() {
        assert!(matches!(
            spacs_fock_coefficients(ComplexAmplitude::real(2.0), 4),
            Err(Error::TruncationInsufficient { .. })
        ));
        assert!(StateModel::spacs(ComplexAmplitude::real(2.0), 0.9, 4).is_err());
        assert!(StateModel::spacs(ComplexAmplitude::real(2.0), 0.9, 40).is_ok());
    }

    #[test]
    fn mix_endpoints() {
        let g = wide();
        let a = fock_pdf(1, &g).unwrap();
        let b = coherent_pdf(ComplexAmplitude::real(0.5), 0.0, &g).unwrap();
        assert_eq!(mix_pdf(&a, &b, 1.0).unwrap().values, a.values);
        assert_eq!(mix_pdf(&a, &b, 0.0).unwrap().values, b.values);
        let m = mix_pdf(&a, &b, 0.91).unwrap();
        assert!((m.integral() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mix_grid_mismatch() {
        let a = fock_pdf(1, &wide()).unwrap();
        let b = fock_pdf(1, &grid(-6.0, 6.0, 241)).unwrap();
        assert!(matches!(
            mix_pdf(&a, &b, 0.5),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn loss_identity_is_resampling() {
        let g = wide();
        let p = fock_pdf(2, &g).unwrap();
        let out = apply_loss(&p, &NoiseParams::ideal(), &g).unwrap();
        assert!(p.max_abs_diff(&out) < 1e-15);
    }

    #[test]
    fn loss_on_coherent_matches_closed_form() {
        let g = wide();
        let p = coherent_pdf(ComplexAmplitude::real(1.0), 0.0, &g).unwrap();
        let noise = NoiseParams::new(0.81, 0.0).unwrap();
        let out = apply_loss(&p, &noise, &g).unwrap();
        // Loss maps coherent to coherent: mean sqrt(eta), variance unchanged.
        for (i, x) in g.points().enumerate() {
            let oracle = gaussian_density(x, 0.9, COHERENT_VARIANCE);
            assert!((out.values[i] - oracle).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn loss_on_single_photon_matches_bernoulli_oracle() {
        let g = wide();
        let p1 = fock_pdf(1, &g).unwrap();
        let noise = NoiseParams::new(0.5, 0.0).unwrap();
        let out = apply_loss(&p1, &noise, &g).unwrap();
        // Photon loss on |1>: transmit with probability eta, else vacuum.
        let p0 = fock_pdf(0, &g).unwrap();
        let oracle: Vec<f64> = p1
            .values
            .iter()
            .zip(&p0.values)
            .map(|(a, b)| 0.5 * a + 0.5 * b)
            .collect();
        let sup = out
            .values
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-8, "sup diff {sup}");
    }

    #[test]
    fn loss_rejects_underresolved_kernel() {
        let g = grid(-4.0, 4.0, 33); // spacing 0.25
        let p = coherent_pdf(ComplexAmplitude::real(0.0), 0.0, &g).unwrap();
        let noise = NoiseParams::new(0.999, 0.0).unwrap(); // kernel std ~ 0.016
        assert!(matches!(
            apply_loss(&p, &noise, &g),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn state_model_dispatch() {
        let g = wide();
        let spacs = StateModel::spacs(ComplexAmplitude::real(0.5), 0.91, 32).unwrap();
        let pdf = spacs.pdf(0.0, &g).unwrap();
        assert!((pdf.integral() - 1.0).abs() < 1e-9);
        // zeta = 1 reduces to the pure SPACS
        let pure_model = StateModel::spacs(ComplexAmplitude::real(0.5), 1.0, 32).unwrap();
        let pure = spacs_pdf(ComplexAmplitude::real(0.5), 0.0, &g, 32).unwrap();
        assert!(pure_model.pdf(0.0, &g).unwrap().max_abs_diff(&pure) < 1e-15);
    }
}
