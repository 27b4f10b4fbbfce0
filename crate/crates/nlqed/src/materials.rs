//! Linear and nonlinear material models.
//!
//! Causal complex permittivities are built from Lorentz-oscillator sums,
//! which satisfy the Kramers-Kronig relations by construction. Tabulated
//! permittivities loaded from file are accepted too, but should be run
//! through [`check_kramers_kronig_samples`] before use. The second-order
//! susceptibility comes in three flavours: zero, a constant amplitude, and
//! Miller's rule tied to a reference permittivity.
//!
//! All quantities use natural units (`hbar = eps0 = c = 1`) with one
//! reference length fixing the frequency scale.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced by material validation.
#[derive(Debug, Error)]
pub enum MaterialError {
    /// The frequency grid does not extend far enough past the resonances for
    /// the truncated Kramers-Kronig quadrature to be trustworthy.
    #[error(
        "frequency grid too narrow for KK check: span ends at {span_max}, \
         needs at least {required} (20x the largest resonance frequency/width)"
    )]
    GridTooNarrow { span_max: f64, required: f64 },

    /// Frequency grid points must be strictly increasing and uniformly spaced.
    #[error("invalid frequency grid: {0}")]
    InvalidGrid(String),

    /// Named frequency bands must not share grid points.
    #[error("overlapping frequency bands at grid index {0}")]
    OverlappingBands(usize),
}

/// One Lorentz oscillator: `wp2 / (w0^2 - w^2 - i*gamma*w)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Oscillator {
    /// Plasma strength, rad^2/s^2 (numerator of the oscillator term).
    pub wp2: f64,
    /// Resonance frequency, rad/s.
    pub w0: f64,
    /// Damping rate, rad/s.
    pub gamma: f64,
}

/// Causal complex permittivity as a sum of Lorentz oscillators over a real
/// background.
///
/// `absorption_scale` multiplies the imaginary part of the oscillator sum
/// only. It exists for loss-scaling scans (taking the weak-absorption limit
/// on outputs); a scale other than 1 deliberately breaks causality and will
/// fail the KK check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermittivityModel {
    pub background: f64,
    #[serde(default)]
    pub oscillators: Vec<Oscillator>,
    #[serde(default = "default_scale")]
    pub absorption_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl PermittivityModel {
    /// Vacuum: background 1, no oscillators.
    pub fn vacuum() -> Self {
        Self::new(1.0, Vec::new())
    }

    pub fn new(background: f64, oscillators: Vec<Oscillator>) -> Self {
        Self { background, oscillators, absorption_scale: 1.0 }
    }

    /// Same model with the imaginary part of the response scaled by `scale`.
    pub fn with_absorption_scale(&self, scale: f64) -> Self {
        Self { absorption_scale: self.absorption_scale * scale, ..self.clone() }
    }

    /// Largest of the oscillator resonance frequencies and damping rates.
    /// Zero for a vacuum model.
    pub fn max_feature_frequency(&self) -> f64 {
        self.oscillators
            .iter()
            .map(|o| o.w0.max(o.gamma))
            .fold(0.0, f64::max)
    }
}

/// Evaluates the oscillator-sum permittivity at a real frequency.
pub fn eval_permittivity(model: &PermittivityModel, omega: f64) -> Complex64 {
    let mut sum = Complex64::new(0.0, 0.0);
    for osc in &model.oscillators {
        let denom = Complex64::new(osc.w0 * osc.w0 - omega * omega, -osc.gamma * omega);
        sum += osc.wp2 / denom;
    }
    Complex64::new(model.background + sum.re, model.absorption_scale * sum.im)
}

/// Permittivity sampled on a frequency table, linearly interpolated.
///
/// Evaluation outside the table clamps to the end values; callers are
/// expected to keep their working frequencies inside the tabulated range.
#[derive(Debug, Clone)]
pub struct TabulatedPermittivity {
    pub omegas: Vec<f64>,
    pub values: Vec<Complex64>,
    /// High-frequency limit subtracted in the KK check.
    pub background: f64,
}

impl TabulatedPermittivity {
    pub fn eval(&self, omega: f64) -> Complex64 {
        let n = self.omegas.len();
        if omega <= self.omegas[0] {
            return self.values[0];
        }
        if omega >= self.omegas[n - 1] {
            return self.values[n - 1];
        }
        let i = self.omegas.partition_point(|&w| w < omega).max(1);
        let (w0, w1) = (self.omegas[i - 1], self.omegas[i]);
        let t = (omega - w0) / (w1 - w0);
        self.values[i - 1] * (1.0 - t) + self.values[i] * t
    }
}

/// Either built-in oscillator sums or a tabulated response.
#[derive(Debug, Clone)]
pub enum Permittivity {
    Model(PermittivityModel),
    Table(TabulatedPermittivity),
}

impl Permittivity {
    pub fn eval(&self, omega: f64) -> Complex64 {
        match self {
            Permittivity::Model(m) => eval_permittivity(m, omega),
            Permittivity::Table(t) => t.eval(omega),
        }
    }
}

/// Second-order susceptibility vs the two driving frequencies.
///
/// Intrinsic permutation symmetry `chi(w1, w2) = chi(w2, w1)` holds exactly
/// for every variant by construction.
#[derive(Debug, Clone)]
pub enum Chi2Model {
    Zero,
    Constant { amplitude: Complex64 },
    /// Miller's rule: `delta * (eps(w1+w2)-1)(eps(w1)-1)(eps(w2)-1)`,
    /// inheriting the causal structure of the reference permittivity.
    Miller { delta: Complex64, reference: PermittivityModel },
}

/// Evaluates the susceptibility at a pair of real frequencies.
pub fn eval_chi2(model: &Chi2Model, omega1: f64, omega2: f64) -> Complex64 {
    match model {
        Chi2Model::Zero => Complex64::new(0.0, 0.0),
        Chi2Model::Constant { amplitude } => *amplitude,
        Chi2Model::Miller { delta, reference } => {
            // Canonical argument order keeps the permutation symmetry exact
            // to the last bit.
            let (lo, hi) = if omega1 <= omega2 { (omega1, omega2) } else { (omega2, omega1) };
            let one = Complex64::new(1.0, 0.0);
            let f_sum = eval_permittivity(reference, lo + hi) - one;
            let f_lo = eval_permittivity(reference, lo) - one;
            let f_hi = eval_permittivity(reference, hi) - one;
            delta * f_sum * f_lo * f_hi
        }
    }
}

/// Contiguous index range of a frequency grid forming a named window around
/// a carrier.
#[derive(Debug, Clone)]
pub struct Band {
    pub carrier: f64,
    /// Half-open grid index range `[start, end)`.
    pub start: usize,
    pub end: usize,
}

impl Band {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }
}

/// Uniform grid of positive frequencies with optional disjoint bands.
#[derive(Debug, Clone)]
pub struct FrequencyGrid {
    pub points: Vec<f64>,
    pub spacing: f64,
    pub bands: Vec<Band>,
}

impl FrequencyGrid {
    /// Uniform grid of `n` points starting at `start` with spacing `spacing`.
    /// A single point is allowed; `spacing` is still its quadrature weight.
    pub fn uniform(start: f64, spacing: f64, n: usize) -> Result<Self, MaterialError> {
        if n == 0 {
            return Err(MaterialError::InvalidGrid("need at least 1 point".into()));
        }
        if start <= 0.0 || spacing <= 0.0 {
            return Err(MaterialError::InvalidGrid(
                "points must be positive and ascending".into(),
            ));
        }
        let points = (0..n).map(|i| start + i as f64 * spacing).collect();
        Ok(Self { points, spacing, bands: Vec::new() })
    }

    /// Attaches a band of `n_points` grid points centred on the grid point
    /// nearest to `carrier`.
    pub fn with_band(mut self, carrier: f64, n_points: usize) -> Result<Self, MaterialError> {
        let center = self
            .points
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - carrier).abs().partial_cmp(&(b.1 - carrier).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let half = n_points / 2;
        let start = center.saturating_sub(half);
        let end = (start + n_points).min(self.points.len());
        if end - start != n_points {
            return Err(MaterialError::InvalidGrid(format!(
                "band of {n_points} points around {carrier} does not fit the grid"
            )));
        }
        let band = Band { carrier: self.points[center], start, end };
        for existing in &self.bands {
            if band.start < existing.end && existing.start < band.end {
                return Err(MaterialError::OverlappingBands(band.start.max(existing.start)));
            }
        }
        self.bands.push(band);
        Ok(self)
    }

    /// Width of band `nu` in frequency units (`n_points * spacing`).
    pub fn band_width(&self, nu: usize) -> f64 {
        self.bands[nu].len() as f64 * self.spacing
    }
}

/// Outcome of a Kramers-Kronig consistency check.
#[derive(Debug, Clone, Serialize)]
pub struct KkReport {
    /// Max deviation on the interior 60% of the grid, relative to the
    /// response scale `max(||eps' - bg||, ||eps''||)`.
    pub max_rel_error: f64,
    pub pass: bool,
}

/// Checks that the real part of `model` is the Hilbert transform of its
/// imaginary part, as causality requires.
///
/// `eps'(w) - background` is reconstructed from `eps''` by a principal-value
/// quadrature: the integrand value at the singular point is subtracted
/// (even-function subtraction), the regular remainder is integrated by the
/// trapezoid rule, and the subtracted term is restored through the analytic
/// log of the truncated window. The comparison runs on the interior 60% of
/// the grid where truncation error is smallest.
pub fn check_kramers_kronig(
    model: &PermittivityModel,
    grid: &FrequencyGrid,
    tol: f64,
) -> Result<KkReport, MaterialError> {
    let feature = model.max_feature_frequency();
    let span_max = *grid.points.last().unwrap();
    let required = 20.0 * feature;
    if span_max < required {
        return Err(MaterialError::GridTooNarrow { span_max, required });
    }
    let eps: Vec<Complex64> = grid.points.iter().map(|&w| eval_permittivity(model, w)).collect();
    Ok(kk_report_from_samples(&eps, model.background, grid, tol))
}

/// Same check for an already-sampled permittivity (tabulated input).
pub fn check_kramers_kronig_samples(
    eps: &[Complex64],
    background: f64,
    grid: &FrequencyGrid,
    tol: f64,
) -> Result<KkReport, MaterialError> {
    if eps.len() != grid.points.len() {
        return Err(MaterialError::InvalidGrid(
            "sample count does not match the frequency grid".into(),
        ));
    }
    Ok(kk_report_from_samples(eps, background, grid, tol))
}

fn kk_report_from_samples(
    eps: &[Complex64],
    background: f64,
    grid: &FrequencyGrid,
    tol: f64,
) -> KkReport {
    let n = grid.points.len();
    let lo = (n as f64 * 0.2).floor() as usize;
    let hi = (n as f64 * 0.8).ceil() as usize;

    let target: Vec<f64> = eps.iter().map(|e| e.re - background).collect();
    let scale = target
        .iter()
        .map(|t| t.abs())
        .chain(eps.iter().map(|e| e.im.abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return KkReport { max_rel_error: 0.0, pass: true };
    }

    let mut max_rel = 0.0f64;
    for i in lo..hi {
        let rec = kk_reconstruct_at(eps, grid, i);
        let rel = (rec - target[i]).abs() / scale;
        max_rel = max_rel.max(rel);
    }
    KkReport { max_rel_error: max_rel, pass: max_rel < tol }
}

/// Reconstructs `eps'(w_i) - background` from the sampled `eps''` via
/// `(2/pi) PV int w' eps''(w') / (w'^2 - w^2) dw'` on the truncated grid.
fn kk_reconstruct_at(eps: &[Complex64], grid: &FrequencyGrid, i: usize) -> f64 {
    let w = grid.points[i];
    let dw = grid.spacing;
    let n = grid.points.len();
    let singular = w * eps[i].im;

    // Trapezoid over the regularized integrand; the value at the singular
    // node is the analytic limit d(w' eps'')/dw' / (2w).
    let mut sum = 0.0;
    for (j, &wj) in grid.points.iter().enumerate() {
        let value = if j == i {
            let jm = i.saturating_sub(1);
            let jp = (i + 1).min(n - 1);
            let d = (grid.points[jp] * eps[jp].im - grid.points[jm] * eps[jm].im)
                / (grid.points[jp] - grid.points[jm]);
            d / (2.0 * w)
        } else {
            (wj * eps[j].im - singular) / (wj * wj - w * w)
        };
        let weight = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        sum += weight * value;
    }
    sum *= dw;

    // Restore the subtracted term: PV int_a^b dw' / (w'^2 - w^2) in closed
    // form over the truncated window (it vanishes on [0, inf)).
    let a = grid.points[0];
    let b = grid.points[n - 1];
    let log_term = ((b - w) * (a + w) / ((b + w) * (w - a))).abs().ln() / (2.0 * w);
    sum += singular * log_term;

    2.0 / std::f64::consts::PI * sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lorentz() -> PermittivityModel {
        PermittivityModel::new(
            1.0,
            vec![Oscillator { wp2: 2.0, w0: 3.2, gamma: 0.6 }],
        )
    }

    #[test]
    fn vacuum_is_unity() {
        let m = PermittivityModel::vacuum();
        for &w in &[0.1, 1.0, 7.3] {
            assert_eq!(eval_permittivity(&m, w), Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn static_limit() {
        let m = lorentz();
        let e = eval_permittivity(&m, 0.0);
        assert_relative_eq!(e.re, 1.0 + 2.0 / (3.2 * 3.2), max_relative = 1e-14);
        assert_eq!(e.im, 0.0);
    }

    #[test]
    fn on_resonance_is_purely_damped() {
        let m = lorentz();
        let e = eval_permittivity(&m, 3.2);
        assert_relative_eq!(e.re, 1.0, max_relative = 1e-14);
        assert_relative_eq!(e.im, 2.0 / (0.6 * 3.2), max_relative = 1e-14);
    }

    #[test]
    fn reality_condition_on_samples() {
        // eps(-w) = conj(eps(w)) for the real time-domain response.
        let m = lorentz();
        for &w in &[0.3, 1.7, 3.2, 9.0] {
            let plus = eval_permittivity(&m, w);
            let minus = eval_permittivity(&m, -w);
            assert_relative_eq!(minus.re, plus.re, max_relative = 1e-14);
            assert_relative_eq!(minus.im, -plus.im, max_relative = 1e-14);
        }
    }

    #[test]
    fn high_frequency_limit_is_background() {
        let m = lorentz();
        let e = eval_permittivity(&m, 1e6);
        assert_relative_eq!(e.re, 1.0, epsilon = 1e-9);
        assert!(e.im.abs() < 1e-9);
    }

    #[test]
    fn absorption_positive_with_damping() {
        let m = lorentz();
        let grid = FrequencyGrid::uniform(0.05, 0.05, 2000).unwrap();
        for &w in &grid.points {
            assert!(eval_permittivity(&m, w).im > 0.0, "eps'' must be positive at {w}");
        }
    }

    #[test]
    fn kk_lorentz_passes() {
        let m = lorentz();
        let grid = FrequencyGrid::uniform(0.05, 0.05, 2048).unwrap();
        let report = check_kramers_kronig(&m, &grid, 1e-2).unwrap();
        assert!(report.pass, "KK error {} exceeds 1e-2", report.max_rel_error);
    }

    #[test]
    fn kk_constant_loss_fails() {
        // Synthetic non-causal response: eps = 1 + 0.1i at every frequency.
        let grid = FrequencyGrid::uniform(0.05, 0.05, 2048).unwrap();
        let eps = vec![Complex64::new(1.0, 0.1); grid.points.len()];
        let report = check_kramers_kronig_samples(&eps, 1.0, &grid, 1e-2).unwrap();
        assert!(!report.pass, "constant loss must fail KK, got {}", report.max_rel_error);
    }

    #[test]
    fn kk_vacuum_is_exact() {
        let grid = FrequencyGrid::uniform(0.05, 0.05, 256).unwrap();
        let report = check_kramers_kronig(&PermittivityModel::vacuum(), &grid, 1e-2).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.pass);
    }

    #[test]
    fn kk_rejects_narrow_grid() {
        let m = lorentz();
        let grid = FrequencyGrid::uniform(0.05, 0.05, 200).unwrap(); // ends at 10 < 64
        match check_kramers_kronig(&m, &grid, 1e-2) {
            Err(MaterialError::GridTooNarrow { .. }) => {}
            other => panic!("expected GridTooNarrow, got {other:?}"),
        }
    }

    #[test]
    fn kk_error_shrinks_on_refinement_ladder() {
        // Simultaneously refine the spacing and widen the span.
        let m = lorentz();
        let mut errors = Vec::new();
        for k in 0..3u32 {
            let spacing = 0.1 / 2f64.powi(k as i32);
            let n = 1024 * 4usize.pow(k);
            let grid = FrequencyGrid::uniform(0.05, spacing, n).unwrap();
            let report = check_kramers_kronig(&m, &grid, 1.0).unwrap();
            errors.push(report.max_rel_error);
        }
        assert!(
            errors[0] > errors[1] && errors[1] > errors[2],
            "KK ladder not monotone: {errors:?}"
        );
    }

    #[test]
    fn chi2_zero_and_constant() {
        assert_eq!(eval_chi2(&Chi2Model::Zero, 1.0, 2.0), Complex64::new(0.0, 0.0));
        let c = Complex64::new(0.7, -0.2);
        let m = Chi2Model::Constant { amplitude: c };
        assert_eq!(eval_chi2(&m, 0.3, 5.0), c);
        assert_eq!(eval_chi2(&m, 5.0, 0.3), c);
    }

    #[test]
    fn miller_matches_permittivity_composition() {
        let reference = lorentz();
        let m = Chi2Model::Miller { delta: Complex64::new(1.0, 0.0), reference: reference.clone() };
        let (w1, w2) = (1.1, 1.7);
        let expect = (eval_permittivity(&reference, w1 + w2) - 1.0)
            * (eval_permittivity(&reference, w1) - 1.0)
            * (eval_permittivity(&reference, w2) - 1.0);
        let got = eval_chi2(&m, w1, w2);
        assert_relative_eq!(got.re, expect.re, max_relative = 1e-14);
        assert_relative_eq!(got.im, expect.im, max_relative = 1e-14);
    }

    #[test]
    fn permutation_symmetry_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let models = [
            Chi2Model::Constant { amplitude: Complex64::new(0.3, 0.1) },
            Chi2Model::Miller { delta: Complex64::new(0.5, -0.25), reference: lorentz() },
        ];
        for model in &models {
            for _ in 0..10_000 {
                let w1 = rng.gen_range(0.01..10.0);
                let w2 = rng.gen_range(0.01..10.0);
                let a = eval_chi2(model, w1, w2);
                let b = eval_chi2(model, w2, w1);
                assert_eq!(a, b, "chi2 permutation symmetry broken at ({w1}, {w2})");
            }
        }
    }

    #[test]
    fn bands_must_be_disjoint() {
        let grid = FrequencyGrid::uniform(1.0, 0.1, 50).unwrap();
        let result = grid.with_band(2.0, 5).unwrap().with_band(2.2, 5);
        assert!(matches!(result, Err(MaterialError::OverlappingBands(_))));
    }

    #[test]
    fn band_is_contiguous_and_centred() {
        let grid = FrequencyGrid::uniform(1.0, 0.1, 50).unwrap().with_band(2.0, 3).unwrap();
        let band = &grid.bands[0];
        assert_eq!(band.len(), 3);
        assert_relative_eq!(band.carrier, 2.0, epsilon = 1e-12);
        assert_relative_eq!(grid.band_width(0), 0.3, epsilon = 1e-12);
    }

    #[test]
    fn tabulated_interpolates_and_clamps() {
        let t = TabulatedPermittivity {
            omegas: vec![1.0, 2.0, 3.0],
            values: vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(2.0, 1.0),
                Complex64::new(3.0, 0.0),
            ],
            background: 1.0,
        };
        assert_eq!(t.eval(1.5), Complex64::new(1.5, 0.5));
        assert_eq!(t.eval(0.0), Complex64::new(1.0, 0.0));
        assert_eq!(t.eval(9.0), Complex64::new(3.0, 0.0));
    }
}
