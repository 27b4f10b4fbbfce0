//! The nonlinear coupling tensor and everything built on it.
//!
//! The trilinear coefficient `alpha(x1; x2, W2; x3, W3)` that couples one
//! excitation at the sum frequency `W23 = W2 + W3` to two at the carriers is
//! constructed in closed form by applying the discrete Helmholtz operator at
//! the sum frequency to `chi2(x) g(x, x2, W2) g(x, x3, W3)`:
//!
//! ```text
//! alpha = pref * sqrt(eps''(x2,W2) eps''(x3,W3) / eps''(x1,W23))
//!              * (1/eps(x1,W23)) * H_W23 [ chi2 g g ](x1),
//! pref  = -i / sqrt(pi) * W2^2 W3^2 / W23
//! ```
//!
//! The same `alpha` must satisfy a Fredholm relation when propagated back
//! through the Green function at the sum frequency; [`fredholm_residual`]
//! measures that, and [`solve_alpha_dense`] solves the relation directly by
//! dense kernel inversion as an independent route to the same tensor.
//!
//! The construction divides by `sqrt(eps''(x, W23))`: it requires loss at
//! the sum frequency and refuses to run below a floor rather than
//! regularize. Weak-absorption limits must be taken on outputs, not inputs.
//!
//! All-space integrals are closed on the finite grid by confining the
//! nonlinear region: the susceptibility is multiplied by a smooth support
//! window that vanishes towards the domain ends.

use ndarray::{Array1, Array2, Array3};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use crate::greens::{apply_helmholtz, Geometry1D, GreenField, GreensError, SpatialGrid1D};
use crate::linalg::{LinalgError, LuFactors};
use crate::materials::eval_chi2;
use crate::quantization::SQRT_INV_PI;

/// Default floor for `eps''` at the sum frequency.
pub const DEFAULT_EPS_IM_FLOOR: f64 = 1e-6;

/// Reference-magnitude mask for relative comparisons, avoiding 0/0.
pub const MASK_FRACTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum CouplingError {
    /// The construction divides by `sqrt(eps'')` at the sum frequency.
    #[error(
        "vanishing absorption at the sum frequency {omega_sum}: eps'' = {min_found:.3e} \
         < floor {floor:.3e} at x = {positions:?}"
    )]
    VanishingAbsorption { omega_sum: f64, min_found: f64, floor: f64, positions: Vec<f64> },

    #[error("sum band carrier {carrier} deviates from {expected} by more than {half_width}")]
    BandMismatch { carrier: f64, expected: f64, half_width: f64 },

    #[error("{0}")]
    Shape(String),

    #[error(transparent)]
    Greens(#[from] GreensError),

    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Smooth spatial window confining the nonlinear region to the grid
/// interior, so that all-space integrals close on the finite domain.
#[derive(Debug, Clone, Copy)]
pub enum SupportWindow {
    /// No taper; the susceptibility extends through the terminal layers.
    Full,
    /// Smootherstep ramps from `lo` to `lo + ramp` and from `hi - ramp` to
    /// `hi`; zero outside `[lo, hi]`.
    Tapered { lo: f64, hi: f64, ramp: f64 },
}

impl SupportWindow {
    /// Default taper for a domain of the given length: support on the middle
    /// 75% with 12.5% ramps.
    pub fn default_for(length: f64) -> Self {
        SupportWindow::Tapered { lo: 0.125 * length, hi: 0.875 * length, ramp: 0.125 * length }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SupportWindow::Full => 1.0,
            SupportWindow::Tapered { lo, hi, ramp } => {
                if x <= lo || x >= hi {
                    0.0
                } else {
                    let up = smootherstep((x - lo) / ramp);
                    let down = smootherstep((hi - x) / ramp);
                    up * down
                }
            }
        }
    }
}

/// C2 ramp `6t^5 - 15t^4 + 10t^3`, clamped to [0, 1].
fn smootherstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * t * (t * (6.0 * t - 15.0) + 10.0)
}

/// The spatially resolved second-order susceptibility: per-layer models from
/// the geometry, times the support window.
#[derive(Debug, Clone)]
pub struct ChiField {
    geom: Geometry1D,
    pub window: SupportWindow,
}

impl ChiField {
    pub fn new(geom: &Geometry1D, window: SupportWindow) -> Self {
        Self { geom: geom.clone(), window }
    }

    pub fn eval(&self, x: f64, omega1: f64, omega2: f64) -> Complex64 {
        let layer = &self.geom.layers[self.geom.layer_of(x)];
        self.window.eval(x) * eval_chi2(&layer.chi2, omega1, omega2)
    }

    /// True if the susceptibility vanishes identically.
    pub fn is_zero(&self) -> bool {
        self.geom
            .layers
            .iter()
            .all(|l| matches!(l.chi2, crate::materials::Chi2Model::Zero))
    }
}

/// Source-point index sets for the two annihilation legs of the tensor.
#[derive(Debug, Clone)]
pub struct AlphaSources {
    pub indices2: Vec<usize>,
    pub indices3: Vec<usize>,
}

impl AlphaSources {
    /// Every interior grid point on both legs.
    pub fn all_interior(grid: &SpatialGrid1D) -> Self {
        let indices: Vec<usize> = grid.interior().collect();
        Self { indices2: indices.clone(), indices3: indices }
    }

    /// Source points at the fixed fractions `k/denominator` of the domain,
    /// `k = 1 .. denominator-1`. The same physical positions are hit at any
    /// resolution whose interval count is a multiple of `denominator`.
    pub fn fractions(grid: &SpatialGrid1D, denominator: usize) -> Result<Self, CouplingError> {
        let intervals = grid.len() - 1;
        if intervals % denominator != 0 {
            return Err(CouplingError::Shape(format!(
                "{intervals} grid intervals not divisible by {denominator}"
            )));
        }
        let stride = intervals / denominator;
        let indices: Vec<usize> = (1..denominator).map(|k| k * stride).collect();
        Ok(Self { indices2: indices.clone(), indices3: indices })
    }

    /// Effective quadrature weight of a decimated leg (uniform stride
    /// assumed).
    fn leg_weight(indices: &[usize], h: f64) -> f64 {
        if indices.len() < 2 {
            return h;
        }
        (indices[1] - indices[0]) as f64 * h
    }
}

/// Discretized coupling tensor `alpha[x1][x2][x3]` at one carrier pair,
/// with its quadrature bookkeeping and the sum-frequency permittivity
/// samples it was built against.
#[derive(Debug, Clone)]
pub struct CouplingTensor {
    pub omega2: f64,
    pub omega3: f64,
    pub omega_sum: f64,
    pub grid: SpatialGrid1D,
    /// Interior x1 rows (boundary rows of the Helmholtz stencil dropped).
    pub rows: Vec<usize>,
    pub sources: AlphaSources,
    /// `values[[i, j2, j3]]`, `i` indexing `rows`, `j` indexing the sources.
    pub values: Array3<Complex64>,
    /// `eps(x, omega_sum)` on the full grid.
    pub eps_sum: Vec<Complex64>,
    /// Quadrature weights of the two source legs.
    pub weight2: f64,
    pub weight3: f64,
}

impl CouplingTensor {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }
}

/// Prefactor `-i / sqrt(pi) * W2^2 W3^2 / (W2 + W3)`.
fn alpha_prefactor(omega2: f64, omega3: f64) -> Complex64 {
    -Complex64::i() * SQRT_INV_PI * (omega2 * omega2) * (omega3 * omega3) / (omega2 + omega3)
}

/// Builds the coupling tensor in closed form and symmetrizes it over the
/// two source legs.
///
/// The field-leg absorption factors are read from the Green fields (they
/// describe the medium the fields were solved in); the sum-frequency
/// factors come from `geom`.
pub fn compute_alpha(
    chi: &ChiField,
    geom: &Geometry1D,
    g2: &GreenField,
    g3: &GreenField,
    sources: &AlphaSources,
    eps_im_floor: f64,
) -> Result<CouplingTensor, CouplingError> {
    let grid = &g2.grid;
    if g3.grid.len() != grid.len() {
        return Err(CouplingError::Shape("Green fields on different grids".into()));
    }
    let (omega2, omega3) = (g2.omega, g3.omega);
    let omega_sum = omega2 + omega3;
    let eps_sum = geom.eps_samples(grid, omega_sum);

    let offenders: Vec<f64> = grid
        .points
        .iter()
        .zip(&eps_sum)
        .filter(|(_, e)| e.im < eps_im_floor)
        .map(|(&x, _)| x)
        .collect();
    if !offenders.is_empty() {
        let min_found = eps_sum.iter().map(|e| e.im).fold(f64::INFINITY, f64::min);
        return Err(CouplingError::VanishingAbsorption {
            omega_sum,
            min_found,
            floor: eps_im_floor,
            positions: offenders.into_iter().take(8).collect(),
        });
    }
    crate::greens::guard_resolution(geom, omega_sum, grid)?;

    let n = grid.len();
    let rows: Vec<usize> = grid.interior().collect();
    let pref = alpha_prefactor(omega2, omega3);
    let chi_fwd: Vec<Complex64> =
        grid.points.iter().map(|&x| chi.eval(x, omega2, omega3)).collect();
    let chi_rev: Vec<Complex64> =
        grid.points.iter().map(|&x| chi.eval(x, omega3, omega2)).collect();

    let slices: Vec<Array2<Complex64>> = sources
        .indices2
        .par_iter()
        .map(|&j2| {
            let mut slice = Array2::default((rows.len(), sources.indices3.len()));
            let mut phi = vec![Complex64::default(); n];
            let mut phi_swap = vec![Complex64::default(); n];
            for (c3, &j3) in sources.indices3.iter().enumerate() {
                for m in 0..n {
                    phi[m] = chi_fwd[m] * g2.values[[m, j2]] * g3.values[[m, j3]];
                    phi_swap[m] = chi_rev[m] * g3.values[[m, j3]] * g2.values[[m, j2]];
                }
                // guard_resolution ran above; the stencil cannot fail here.
                let h_phi = apply_helmholtz(&phi, geom, omega_sum, grid).expect("guarded");
                let h_swap = apply_helmholtz(&phi_swap, geom, omega_sum, grid).expect("guarded");
                let leg = (g2.eps[j2].im * g3.eps[j3].im).sqrt();
                for (r, &i) in rows.iter().enumerate() {
                    let local = pref * leg / (eps_sum[i].im.sqrt() * eps_sum[i]);
                    slice[[r, c3]] = local * (0.5 * (h_phi[i] + h_swap[i]));
                }
            }
            slice
        })
        .collect();

    let mut values = Array3::default((rows.len(), sources.indices2.len(), sources.indices3.len()));
    for (c2, slice) in slices.into_iter().enumerate() {
        for r in 0..rows.len() {
            for c3 in 0..sources.indices3.len() {
                values[[r, c2, c3]] = slice[[r, c3]];
            }
        }
    }

    let weight2 = AlphaSources::leg_weight(&sources.indices2, grid.h);
    let weight3 = AlphaSources::leg_weight(&sources.indices3, grid.h);
    Ok(CouplingTensor {
        omega2,
        omega3,
        omega_sum,
        grid: grid.clone(),
        rows,
        sources: sources.clone(),
        values,
        eps_sum,
        weight2,
        weight3,
    })
}

/// Right-hand side of the Fredholm relation at one source pair, on every
/// grid row: `pref * (1/eps(x,W23)) * sqrt(eps'' eps'') * chi2(x) g2(x,x2)
/// g3(x,x3)`.
fn fredholm_rhs(
    chi: &ChiField,
    eps_sum: &[Complex64],
    g2: &GreenField,
    g3: &GreenField,
    j2: usize,
    j3: usize,
) -> Vec<Complex64> {
    let grid = &g2.grid;
    let pref = alpha_prefactor(g2.omega, g3.omega);
    let leg = (g2.eps[j2].im * g3.eps[j3].im).sqrt();
    grid.points
        .iter()
        .enumerate()
        .map(|(r, &x)| {
            pref * leg * chi.eval(x, g2.omega, g3.omega) * g2.values[[r, j2]]
                * g3.values[[r, j3]]
                / eps_sum[r]
        })
        .collect()
}

/// Max relative deviation of the Fredholm relation for a computed tensor:
/// the quadrature `sum_i h sqrt(eps''(x_i, W23)) alpha(x_i) g(x_r, x_i)`
/// against the closed-form right-hand side, evaluated wherever the
/// reference magnitude exceeds `MASK_FRACTION` of its maximum.
pub fn fredholm_residual(
    alpha: &CouplingTensor,
    chi: &ChiField,
    g_sum: &GreenField,
    g2: &GreenField,
    g3: &GreenField,
) -> f64 {
    let grid = &alpha.grid;
    let n = grid.len();
    let h = grid.h;
    let sqrt_eps: Vec<f64> = alpha.eps_sum.iter().map(|e| e.im.max(0.0).sqrt()).collect();

    struct Pair {
        lhs: Vec<Complex64>,
        rhs: Vec<Complex64>,
    }
    let index_pairs: Vec<(usize, usize)> = alpha
        .sources
        .indices2
        .iter()
        .enumerate()
        .flat_map(|(c2, &j2)| {
            alpha.sources.indices3.iter().enumerate().map(move |(c3, &j3)| ((c2, j2), (c3, j3)))
        })
        .map(|((c2, _j2), (c3, _j3))| (c2, c3))
        .collect();

    let pairs: Vec<Pair> = index_pairs
        .par_iter()
        .map(|&(c2, c3)| {
            let j2 = alpha.sources.indices2[c2];
            let j3 = alpha.sources.indices3[c3];
            // Weighted source column once, then one pass over rows.
            let mut q = vec![Complex64::default(); n];
            for (r, &i) in alpha.rows.iter().enumerate() {
                q[i] = h * sqrt_eps[i] * alpha.values[[r, c2, c3]];
            }
            let lhs: Vec<Complex64> = (0..n)
                .map(|r| (0..n).map(|i| g_sum.values[[r, i]] * q[i]).sum())
                .collect();
            let rhs = fredholm_rhs(chi, &alpha.eps_sum, g2, g3, j2, j3);
            Pair { lhs, rhs }
        })
        .collect();

    let rhs_max = pairs
        .iter()
        .flat_map(|p| p.rhs.iter())
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    if rhs_max == 0.0 {
        return 0.0;
    }
    let mask = MASK_FRACTION * rhs_max;
    let mut worst = 0.0f64;
    for pair in &pairs {
        for (l, r) in pair.lhs.iter().zip(&pair.rhs) {
            if r.norm() > mask {
                worst = worst.max((l - r).norm() / r.norm());
            }
        }
    }
    worst
}

/// Solves the Fredholm relation directly: the kernel
/// `K[r, i] = g(x_r, x_i, W23) sqrt(eps''(x_i, W23)) h` over interior rows
/// and columns is LU-factored once and back-solved per source pair. An
/// independent route to the tensor of [`compute_alpha`].
pub fn solve_alpha_dense(
    chi: &ChiField,
    geom: &Geometry1D,
    g_sum: &GreenField,
    g2: &GreenField,
    g3: &GreenField,
    sources: &AlphaSources,
) -> Result<CouplingTensor, CouplingError> {
    let grid = &g_sum.grid;
    let h = grid.h;
    let rows: Vec<usize> = grid.interior().collect();
    let m = rows.len();
    let eps_sum = geom.eps_samples(grid, g_sum.omega);

    let mut kernel = Array2::default((m, m));
    for (a, &r) in rows.iter().enumerate() {
        for (b, &i) in rows.iter().enumerate() {
            kernel[[a, b]] = g_sum.values[[r, i]] * eps_sum[i].im.max(0.0).sqrt() * h;
        }
    }
    let lu = LuFactors::new(&kernel)?;

    let mut values = Array3::default((m, sources.indices2.len(), sources.indices3.len()));
    for (c2, &j2) in sources.indices2.iter().enumerate() {
        for (c3, &j3) in sources.indices3.iter().enumerate() {
            let rhs_full = fredholm_rhs(chi, &eps_sum, g2, g3, j2, j3);
            let rhs = Array1::from_iter(rows.iter().map(|&r| rhs_full[r]));
            let solution = lu.solve(&rhs)?;
            for a in 0..m {
                values[[a, c2, c3]] = solution[a];
            }
        }
    }

    let weight2 = AlphaSources::leg_weight(&sources.indices2, h);
    let weight3 = AlphaSources::leg_weight(&sources.indices3, h);
    Ok(CouplingTensor {
        omega2: g2.omega,
        omega3: g3.omega,
        omega_sum: g_sum.omega,
        grid: grid.clone(),
        rows,
        sources: sources.clone(),
        values,
        eps_sum,
        weight2,
        weight3,
    })
}

/// Max relative entry-wise deviation between two tensors on the same index
/// sets, masked where the reference magnitude is below `MASK_FRACTION` of
/// its maximum.
pub fn tensor_deviation(reference: &CouplingTensor, other: &CouplingTensor) -> f64 {
    assert_eq!(reference.values.dim(), other.values.dim(), "tensor shapes differ");
    let ref_max = reference.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if ref_max == 0.0 {
        return 0.0;
    }
    let mask = MASK_FRACTION * ref_max;
    reference
        .values
        .iter()
        .zip(other.values.iter())
        .filter(|(r, _)| r.norm() > mask)
        .map(|(r, o)| (r - o).norm() / r.norm())
        .fold(0.0, f64::max)
}

/// One frequency window of the effective Hamiltonian.
#[derive(Debug, Clone, Copy)]
pub struct BandWindow {
    pub carrier: f64,
    pub width: f64,
}

/// Trilinear coefficient table of the effective three-wave Hamiltonian:
/// `H = sum C f~^dag(x1, W23) f~(x2, W2) f~(x3, W3) + h.c.` with
/// `C = alpha * sqrt(dW1 dW2 dW3) * h^3`.
#[derive(Debug, Clone)]
pub struct EffectiveHamiltonian {
    pub bands: [BandWindow; 3],
    pub grid: SpatialGrid1D,
    pub rows: Vec<usize>,
    pub sources: AlphaSources,
    /// Annihilation-side coefficients `C[[x1, x2, x3]]`.
    pub coeff: Array3<Complex64>,
}

impl EffectiveHamiltonian {
    /// The Hermitian-conjugate block: entry-wise conjugate of the
    /// annihilation-side coefficients.
    pub fn conjugate_block(&self) -> Array3<Complex64> {
        self.coeff.mapv(|c| c.conj())
    }
}

/// Assembles the effective Hamiltonian from the coupling tensor and three
/// band windows `[sum, leg2, leg3]`.
pub fn assemble_H_NL(
    alpha: &CouplingTensor,
    bands: [BandWindow; 3],
) -> Result<EffectiveHamiltonian, CouplingError> {
    let expected = alpha.omega2 + alpha.omega3;
    if (bands[0].carrier - expected).abs() > 0.5 * bands[0].width {
        return Err(CouplingError::BandMismatch {
            carrier: bands[0].carrier,
            expected,
            half_width: 0.5 * bands[0].width,
        });
    }
    let h3 = alpha.grid.h.powi(3);
    let scale = (bands[0].width * bands[1].width * bands[2].width).sqrt() * h3;
    Ok(EffectiveHamiltonian {
        bands,
        grid: alpha.grid.clone(),
        rows: alpha.rows.clone(),
        sources: alpha.sources.clone(),
        coeff: alpha.values.mapv(|v| v * scale),
    })
}

/// Origin of a polarization field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Reactive,
    Noise,
    Total,
}

/// Computation path that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Path {
    ViaAlpha,
    ViaField,
    Response,
}

/// Complex polarization samples at the sum carrier.
#[derive(Debug, Clone)]
pub struct PolarizationField {
    pub samples: Vec<Complex64>,
    pub provenance: Provenance,
    pub path: Path,
}

impl PolarizationField {
    /// h-weighted L2 norm.
    pub fn norm(&self, h: f64) -> f64 {
        (self.samples.iter().map(|v| v.norm_sqr()).sum::<f64>() * h).sqrt()
    }
}

/// Reactive response: `P(x) = chi2(x, W2, W3) E2(x) E3(x)` (natural units).
pub fn reactive_polarization(
    e2: &[Complex64],
    e3: &[Complex64],
    chi: &ChiField,
    grid: &SpatialGrid1D,
    omega2: f64,
    omega3: f64,
) -> PolarizationField {
    let samples = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| chi.eval(x, omega2, omega3) * e2[i] * e3[i])
        .collect();
    PolarizationField { samples, provenance: Provenance::Reactive, path: Path::Response }
}

/// Nonlinear noise polarization from the slowly varying fields:
/// `P(x) = (1 / (W23^2 eps(x, W23))) H_W23 [chi2 E2 E3](x)`.
pub fn nonlinear_noise_polarization_via_field(
    e2: &[Complex64],
    e3: &[Complex64],
    chi: &ChiField,
    geom: &Geometry1D,
    grid: &SpatialGrid1D,
    omega2: f64,
    omega3: f64,
) -> Result<PolarizationField, CouplingError> {
    let omega_sum = omega2 + omega3;
    let phi: Vec<Complex64> = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| chi.eval(x, omega2, omega3) * e2[i] * e3[i])
        .collect();
    let h_phi = apply_helmholtz(&phi, geom, omega_sum, grid)?;
    let samples = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, &x)| h_phi[i] / (omega_sum * omega_sum * geom.eval_eps(x, omega_sum)))
        .collect();
    Ok(PolarizationField { samples, provenance: Provenance::Noise, path: Path::ViaField })
}

/// Shared contraction of the tensor with two band amplitude vectors:
/// `Q(x1) = sqrt(dW2 dW3) sum w2 w3 alpha(x1; x2; x3) f2(x2) f3(x3)`,
/// on the full grid (zero at boundary rows).
fn contract_alpha(
    alpha: &CouplingTensor,
    f2: &[Complex64],
    f3: &[Complex64],
    width2: f64,
    width3: f64,
) -> Vec<Complex64> {
    let n = alpha.grid.len();
    let band_scale = (width2 * width3).sqrt() * alpha.weight2 * alpha.weight3;
    let mut q = vec![Complex64::default(); n];
    for (r, &i) in alpha.rows.iter().enumerate() {
        let mut acc = Complex64::default();
        for (c2, &j2) in alpha.sources.indices2.iter().enumerate() {
            for (c3, &j3) in alpha.sources.indices3.iter().enumerate() {
                acc += alpha.values[[r, c2, c3]] * f2[j2] * f3[j3];
            }
        }
        q[i] = band_scale * acc;
    }
    q
}

/// Nonlinear noise polarization from the coupling tensor and band
/// amplitudes:
/// `P(x) = -i/sqrt(pi) * (1/W23) * sqrt(eps''(x, W23)) * Q(x)`.
pub fn nonlinear_noise_polarization_via_alpha(
    f2: &[Complex64],
    f3: &[Complex64],
    alpha: &CouplingTensor,
    width2: f64,
    width3: f64,
) -> PolarizationField {
    let q = contract_alpha(alpha, f2, f3, width2, width3);
    let pref = -Complex64::i() * SQRT_INV_PI / alpha.omega_sum;
    let samples = q
        .iter()
        .enumerate()
        .map(|(i, qi)| pref * alpha.eps_sum[i].im.max(0.0).sqrt() * qi)
        .collect();
    PolarizationField { samples, provenance: Provenance::Noise, path: Path::ViaAlpha }
}

/// Reactive, noise and total nonlinear polarization on the same inputs.
#[derive(Debug)]
pub struct Decomposition {
    pub reactive: PolarizationField,
    pub noise: PolarizationField,
    pub total: PolarizationField,
}

/// Splits the nonlinear polarization driven by two band amplitudes into the
/// Green-propagated reactive part and the local noise part; `total` is the
/// single-pass evaluation through the linear-displacement kernel
/// `W23^2 eps(x) g(x, x') h + kron(x, x')`, so `reactive + noise = total`
/// holds to roundoff by regrouping.
pub fn decompose_polarization(
    f2: &[Complex64],
    f3: &[Complex64],
    alpha: &CouplingTensor,
    g_sum: &GreenField,
    width2: f64,
    width3: f64,
) -> Decomposition {
    let n = alpha.grid.len();
    let h = alpha.grid.h;
    let q = contract_alpha(alpha, f2, f3, width2, width3);
    let weighted: Vec<Complex64> = q
        .iter()
        .enumerate()
        .map(|(i, qi)| alpha.eps_sum[i].im.max(0.0).sqrt() * qi)
        .collect();
    let pref = -Complex64::i() * SQRT_INV_PI / alpha.omega_sum;
    let w2 = alpha.omega_sum * alpha.omega_sum;

    let mut reactive = vec![Complex64::default(); n];
    let mut noise = vec![Complex64::default(); n];
    let mut total = vec![Complex64::default(); n];
    for r in 0..n {
        let eps_r = alpha.eps_sum[r];
        let mut propagated = Complex64::default();
        for i in 0..n {
            propagated += g_sum.values[[r, i]] * weighted[i];
        }
        reactive[r] = pref * (w2 * eps_r * h * propagated);
        noise[r] = pref * weighted[r];
        total[r] = pref * (w2 * eps_r * h * propagated + weighted[r]);
    }

    Decomposition {
        reactive: PolarizationField {
            samples: reactive,
            provenance: Provenance::Reactive,
            path: Path::ViaAlpha,
        },
        noise: PolarizationField {
            samples: noise,
            provenance: Provenance::Noise,
            path: Path::ViaAlpha,
        },
        total: PolarizationField {
            samples: total,
            provenance: Provenance::Total,
            path: Path::ViaAlpha,
        },
    }
}

/// Slowly varying field amplitude at the carrier of `g`, built from a band
/// amplitude vector: `E(x) = i/sqrt(pi) W^2 sqrt(dW) sum_j h
/// sqrt(eps''(x_j)) g(x, x_j) f(x_j)`.
pub fn band_field_from_amplitudes(
    g: &GreenField,
    f: &[Complex64],
    width: f64,
) -> Vec<Complex64> {
    let n = g.grid.len();
    let h = g.grid.h;
    let pref = Complex64::i() * SQRT_INV_PI * g.omega * g.omega * width.sqrt();
    (0..n)
        .map(|i| {
            let mut acc = Complex64::default();
            for j in 0..n {
                acc += g.eps[j].im.max(0.0).sqrt() * g.values[[i, j]] * f[j] * h;
            }
            pref * acc
        })
        .collect()
}

/// Max relative deviation between two sampled fields, masked at
/// `MASK_FRACTION` of the reference maximum.
pub fn field_deviation(reference: &[Complex64], other: &[Complex64]) -> f64 {
    let ref_max = reference.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if ref_max == 0.0 {
        return 0.0;
    }
    let mask = MASK_FRACTION * ref_max;
    reference
        .iter()
        .zip(other)
        .filter(|(r, _)| r.norm() > mask)
        .map(|(r, o)| (r - o).norm() / r.norm())
        .fold(0.0, f64::max)
}
