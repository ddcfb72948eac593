//! Monte-Carlo generation of homodyne measurement records, histogramming,
//! probe-set construction, and the stimulated/spontaneous SPDC amplitude
//! calibration.

use crate::error::{Error, Result};
use crate::grid::{QuadratureGrid, QuadraturePdf};
use crate::states::{ComplexAmplitude, NoiseParams, StateModel, COHERENT_VARIANCE};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

/// One coherent probe to be measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// True |alpha| of the prepared state.
    pub amplitude_true: f64,
    /// Measurement phase in radians.
    pub phase: f64,
    pub n_samples: usize,
}

impl ProbeSpec {
    /// Signed projected amplitude |alpha| cos(phase) the phase-0 model sees.
    pub fn projected_true(&self) -> f64 {
        self.amplitude_true * self.phase.cos()
    }
}

/// A measured and calibrated probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub spec: ProbeSpec,
    /// SPDC-calibrated |alpha| estimate.
    pub amplitude_calibrated: f64,
    pub calibration_sigma: f64,
    /// Empirical density over the outcome grid; integrates to the in-range
    /// sample fraction (out-of-range samples are counted, never binned).
    pub histogram: QuadraturePdf,
    pub out_of_range_fraction: f64,
}

impl ProbeRecord {
    /// Signed projected calibrated amplitude feeding the reconstruction model.
    pub fn projected_calibrated(&self) -> f64 {
        self.amplitude_calibrated * self.spec.phase.cos()
    }

    /// In-range mass plus out-of-range fraction must account for every sample.
    pub fn validate(&self) -> Result<()> {
        let h = self.histogram.grid.spacing();
        let mass: f64 = self.histogram.values.iter().sum::<f64>() * h;
        if (mass + self.out_of_range_fraction - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "histogram mass {mass} + out-of-range {} does not account for all samples",
                self.out_of_range_fraction
            )));
        }
        Ok(())
    }
}

/// SPDC calibration run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcConfig {
    /// Spontaneous pair rate R0 (counts per second).
    pub spontaneous_rate: f64,
    pub acquisition_time: f64,
    pub seed: u64,
}

impl SpdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.spontaneous_rate > 0.0) || !(self.acquisition_time > 0.0) {
            return Err(Error::InvalidParam(
                "SPDC rate and acquisition time must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The tomographic probe sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSetKind {
    /// 12 amplitudes on (0, 3] at 9 phases in [0, pi], plus the vacuum: 109 probes.
    Full109,
    /// 12 amplitudes at phases {0, pi} plus the vacuum: 25 probes.
    Reduced25,
    /// 4 amplitudes (three times the reduced spacing) at phases {0, pi} plus
    /// the vacuum: 9 probes, all on the phase-0 axis.
    Minimal9,
    Custom {
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
    },
}

impl ProbeSetKind {
    pub fn id(&self) -> String {
        match self {
            ProbeSetKind::Full109 => "full_109".into(),
            ProbeSetKind::Reduced25 => "reduced_25".into(),
            ProbeSetKind::Minimal9 => "minimal_9".into(),
            ProbeSetKind::Custom { amplitudes, phases } => {
                format!("custom_{}x{}", amplitudes.len(), phases.len())
            }
        }
    }
}

/// Build the probe specs for a set. Probe order is amplitude-major, then
/// phase, with the vacuum probe last; it is part of the format.
pub fn build_probe_set(kind: &ProbeSetKind, n_samples: usize) -> Result<Vec<ProbeSpec>> {
    if n_samples == 0 {
        return Err(Error::InvalidParam("n_samples must be positive".into()));
    }
    let spec = |amplitude_true: f64, phase: f64| ProbeSpec {
        amplitude_true,
        phase,
        n_samples,
    };
    let pi = std::f64::consts::PI;
    let amps12: Vec<f64> = (1..=12).map(|i| 0.25 * i as f64).collect();
    let mut out = Vec::new();
    match kind {
        ProbeSetKind::Full109 => {
            let phases: Vec<f64> = (0..9).map(|i| pi * i as f64 / 8.0).collect();
            for &a in &amps12 {
                for &p in &phases {
                    out.push(spec(a, p));
                }
            }
            out.push(spec(0.0, 0.0));
        }
        ProbeSetKind::Reduced25 => {
            for &a in &amps12 {
                out.push(spec(a, 0.0));
                out.push(spec(a, pi));
            }
            out.push(spec(0.0, 0.0));
        }
        ProbeSetKind::Minimal9 => {
            for i in 1..=4 {
                let a = 0.75 * i as f64;
                out.push(spec(a, 0.0));
                out.push(spec(a, pi));
            }
            out.push(spec(0.0, 0.0));
        }
        ProbeSetKind::Custom { amplitudes, phases } => {
            if amplitudes.is_empty() || phases.is_empty() {
                return Err(Error::InvalidParam(
                    "custom probe set needs at least one amplitude and one phase".into(),
                ));
            }
            if amplitudes.iter().any(|a| !a.is_finite() || *a < 0.0) {
                return Err(Error::InvalidParam(
                    "custom amplitudes must be finite and non-negative".into(),
                ));
            }
            for &a in amplitudes {
                for &p in phases {
                    out.push(spec(a, p));
                }
            }
        }
    }
    Ok(out)
}

/// Stable seed derivation for independent per-probe streams.
pub fn derive_seed(master: u64, domain: u64, index: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E3779B97F4A7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^ (z >> 31)
    }
    splitmix64(splitmix64(master ^ splitmix64(domain)) ^ index)
}

/// Seed domains used by the pipeline.
pub mod seed_domain {
    pub const PROBE_SAMPLES: u64 = 0;
    pub const SPDC: u64 = 1;
    pub const VALIDATION: u64 = 2;
}

/// Draw homodyne samples of `state` measured at phase `phi` through the
/// detection channel: x = sqrt(eta) y + sqrt(1-eta) v + e with v the vacuum
/// of the unused port and e electronic noise. Deterministic for a given seed.
pub fn draw_samples(
    state: &StateModel,
    phi: f64,
    noise: &NoiseParams,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidParam("need at least one sample".into()));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let vac_std = ((1.0 - noise.eta) * COHERENT_VARIANCE).sqrt();
    let el_std = noise.v_el.sqrt();
    let sqrt_eta = noise.eta.sqrt();

    let mut out = Vec::with_capacity(n);
    match state {
        StateModel::Coherent { alpha } => {
            let mu = alpha.projected(phi);
            let std = COHERENT_VARIANCE.sqrt();
            for _ in 0..n {
                let y = mu + std * rng.sample::<f64, _>(StandardNormal);
                let v: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                out.push(sqrt_eta * y + vac_std * v + el_std * e);
            }
        }
        _ => {
            let table = InverseCdf::tabulate(state, phi)?;
            for _ in 0..n {
                let y = table.sample(rng.gen::<f64>());
                let v: f64 = rng.sample(StandardNormal);
                let e: f64 = rng.sample(StandardNormal);
                out.push(sqrt_eta * y + vac_std * v + el_std * e);
            }
        }
    }
    Ok(out)
}

/// Inverse-CDF sampler for non-Gaussian states, tabulated on a fine grid
/// with linear interpolation.
struct InverseCdf {
    grid: QuadratureGrid,
    cdf: Vec<f64>,
}

impl InverseCdf {
    const RANGE: f64 = 6.0;
    const STEP: f64 = 1e-3;

    fn tabulate(state: &StateModel, phi: f64) -> Result<Self> {
        let n = (2.0 * Self::RANGE / Self::STEP).round() as usize + 1;
        let grid = QuadratureGrid::new(-Self::RANGE, Self::RANGE, n)?;
        let pdf = state.pdf(phi, &grid)?;
        let h = grid.spacing();
        let mut cdf = Vec::with_capacity(n);
        cdf.push(0.0);
        for i in 1..n {
            let inc = 0.5 * (pdf.values[i - 1] + pdf.values[i]) * h;
            cdf.push(cdf[i - 1] + inc);
        }
        let total = *cdf.last().unwrap();
        cdf.iter_mut().for_each(|c| *c /= total);
        Ok(Self { grid, cdf })
    }

    fn sample(&self, u: f64) -> f64 {
        let idx = self.cdf.partition_point(|c| *c < u);
        if idx == 0 {
            return self.grid.point(0);
        }
        if idx >= self.cdf.len() {
            return self.grid.point(self.cdf.len() - 1);
        }
        let seg = self.cdf[idx] - self.cdf[idx - 1];
        let t = if seg > 0.0 {
            (u - self.cdf[idx - 1]) / seg
        } else {
            0.0
        };
        self.grid.point(idx - 1) + t * self.grid.spacing()
    }
}

/// Histogram of samples over `grid`, in density units: bin counts divided by
/// (n_total * spacing). Out-of-range samples are counted, not binned.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub pdf: QuadraturePdf,
    pub n_total: usize,
    pub n_out_of_range: usize,
}

impl Histogram {
    pub fn out_of_range_fraction(&self) -> f64 {
        self.n_out_of_range as f64 / self.n_total as f64
    }
}

pub fn histogram(samples: &[f64], grid: &QuadratureGrid) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::EmptyRange);
    }
    let mut counts = vec![0usize; grid.n_points()];
    let mut out_of_range = 0usize;
    for &s in samples {
        match grid.bin_index(s) {
            Some(i) => counts[i] += 1,
            None => out_of_range += 1,
        }
    }
    if out_of_range == samples.len() {
        return Err(Error::EmptyRange);
    }
    let norm = samples.len() as f64 * grid.spacing();
    let values = counts.iter().map(|c| *c as f64 / norm).collect();
    Ok(Histogram {
        pdf: QuadraturePdf::new_unchecked(*grid, values)?,
        n_total: samples.len(),
        n_out_of_range: out_of_range,
    })
}

/// Result of one SPDC calibration run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcCalibration {
    pub amplitude_calibrated: f64,
    pub calibration_sigma: f64,
}

/// Pure estimator from observed counts: |alpha| = sqrt(max(0, N_stim/N_spont - 1))
/// with first-order Poisson error propagation.
pub fn calibration_from_counts(n_stim: u64, n_spont: u64) -> Result<SpdcCalibration> {
    if n_spont == 0 {
        return Err(Error::CalibrationFailed);
    }
    let r = n_stim as f64 / n_spont as f64;
    let sigma_r = if n_stim == 0 {
        1.0 / n_spont as f64
    } else {
        r * (1.0 / n_stim as f64 + 1.0 / n_spont as f64).sqrt()
    };
    let amplitude = (r - 1.0).max(0.0).sqrt();
    let sigma = if amplitude > 0.0 {
        sigma_r / (2.0 * amplitude)
    } else {
        // At the degenerate point |alpha| = 0 the first-order formula is
        // singular; report the half-order fluctuation scale of sqrt(r - 1).
        sigma_r.sqrt()
    };
    Ok(SpdcCalibration {
        amplitude_calibrated: amplitude,
        calibration_sigma: sigma,
    })
}

/// Simulate one SPDC calibration: stimulated counts at rate R0 (1 + |alpha|^2)
/// against spontaneous counts at rate R0. Deterministic for a given seed.
pub fn simulate_spdc_calibration(amplitude_true: f64, cfg: &SpdcConfig) -> Result<SpdcCalibration> {
    cfg.validate()?;
    if !(amplitude_true >= 0.0) || !amplitude_true.is_finite() {
        return Err(Error::InvalidParam(
            "calibration amplitude must be finite and non-negative".into(),
        ));
    }
    let lambda = cfg.spontaneous_rate * cfg.acquisition_time;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let stim_rate = lambda * (1.0 + amplitude_true * amplitude_true);
    let n_stim = Poisson::new(stim_rate)
        .map_err(|e| Error::InvalidParam(format!("Poisson rate: {e}")))?
        .sample(&mut rng) as u64;
    let n_spont = Poisson::new(lambda)
        .map_err(|e| Error::InvalidParam(format!("Poisson rate: {e}")))?
        .sample(&mut rng) as u64;
    calibration_from_counts(n_stim, n_spont)
}

/// Run the full simulated acquisition for a probe set: SPDC calibration and
/// homodyne sampling per probe, each on its own derived seed stream.
pub fn simulate_probe_records(
    specs: &[ProbeSpec],
    truth: &NoiseParams,
    grid: &QuadratureGrid,
    spdc_rate: f64,
    spdc_time: f64,
    master_seed: u64,
) -> Result<Vec<ProbeRecord>> {
    let mut records = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let cal = simulate_spdc_calibration(
            spec.amplitude_true,
            &SpdcConfig {
                spontaneous_rate: spdc_rate,
                acquisition_time: spdc_time,
                seed: derive_seed(master_seed, seed_domain::SPDC, i as u64),
            },
        )?;
        let state = StateModel::coherent(ComplexAmplitude::real(spec.amplitude_true));
        let samples = draw_samples(
            &state,
            spec.phase,
            truth,
            spec.n_samples,
            derive_seed(master_seed, seed_domain::PROBE_SAMPLES, i as u64),
        )?;
        let hist = histogram(&samples, grid)?;
        records.push(ProbeRecord {
            spec: *spec,
            amplitude_calibrated: cal.amplitude_calibrated,
            calibration_sigma: cal.calibration_sigma,
            out_of_range_fraction: hist.out_of_range_fraction(),
            histogram: hist.pdf,
        });
    }
    Ok(records)
}

/// Noiseless records: the exact response of the truth detector to each probe,
/// with perfectly calibrated amplitudes. Coherent states stay Gaussian through
/// the channel, so the density is in closed form.
pub fn make_analytic_records(
    specs: &[ProbeSpec],
    truth: &NoiseParams,
    grid: &QuadratureGrid,
) -> Vec<ProbeRecord> {
    use crate::states::gaussian_density;
    let sqrt_eta = truth.eta.sqrt();
    let var = COHERENT_VARIANCE + truth.v_el;
    specs
        .iter()
        .map(|spec| {
            let mu = sqrt_eta * spec.projected_true();
            let values: Vec<f64> = grid
                .points()
                .map(|x| gaussian_density(x, mu, var))
                .collect();
            let mass: f64 = values.iter().sum::<f64>() * grid.spacing();
            ProbeRecord {
                spec: *spec,
                amplitude_calibrated: spec.amplitude_true,
                calibration_sigma: 0.0,
                histogram: QuadraturePdf::new_unchecked(*grid, values).expect("finite density"),
                out_of_range_fraction: (1.0 - mass).max(0.0),
            }
        })
        .collect()
}
