//! Discretized dynamical variables and the linear-theory field assemblies.
//!
//! The bosonic variables `f(x, w)` live on a lattice of spatial and
//! frequency points with commutator normalization
//! `[f(x,w), f^dag(x',w')] = kron_xx' kron_ww' / (h dw)`,
//! the discrete image of the continuum delta functions. With that one
//! convention, every continuum identity of the linear theory holds as an
//! exact matrix identity up to quadrature error.
//!
//! Fields are kept as coefficient maps (linear forms in the f-amplitudes),
//! never as operators on a Fock space.

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

use crate::greens::{fluctuation_residual, GreenField, IdentityCheck, SpatialGrid1D};
use crate::materials::FrequencyGrid;

#[derive(Debug, Error)]
pub enum QuantizationError {
    #[error("no Green field supplied for lattice frequency {0}")]
    MissingGreen(f64),

    #[error("overlapping bands at grid index {0}")]
    OverlappingBands(usize),

    #[error("band [{start}, {end}) outside the frequency grid of {len} points")]
    BandOutOfRange { start: usize, end: usize, len: usize },

    #[error("amplitude array has shape {got:?}, lattice wants {want:?}")]
    ShapeMismatch { got: (usize, usize), want: (usize, usize) },
}

/// Spatial grid x frequency grid with the quadrature weights `h` and `dw`.
#[derive(Debug, Clone)]
pub struct ModeLattice {
    pub spatial: SpatialGrid1D,
    pub frequency: FrequencyGrid,
}

impl ModeLattice {
    pub fn new(spatial: SpatialGrid1D, frequency: FrequencyGrid) -> Self {
        Self { spatial, frequency }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.spatial.len(), self.frequency.points.len())
    }
}

/// A linear map from f-amplitudes to field samples, stored as one
/// coefficient matrix per lattice frequency: `field(x, w) = sum_x'
/// coeff[w][[x, x']] f(x', w)`.
#[derive(Debug, Clone)]
pub struct FieldAssembly {
    pub omegas: Vec<f64>,
    pub blocks: Vec<Array2<Complex64>>,
}

impl FieldAssembly {
    /// Applies the per-frequency block to the amplitude column of that
    /// frequency. `f` is indexed `[x, w]`.
    pub fn apply(&self, f: &Array2<Complex64>, omega_index: usize) -> Vec<Complex64> {
        let block = &self.blocks[omega_index];
        let n = block.nrows();
        let mut out = vec![Complex64::default(); n];
        for (i, out_i) in out.iter_mut().enumerate() {
            let mut acc = Complex64::default();
            for j in 0..block.ncols() {
                acc += block[[i, j]] * f[[j, omega_index]];
            }
            *out_i = acc;
        }
        out
    }
}

pub(crate) const SQRT_INV_PI: f64 = 0.564_189_583_547_756_3; // 1/sqrt(pi)

/// Assembles the electric-field coefficient map from the Green fields.
///
/// The coefficient of `f(x', w)` in `E(x, w)` is
/// `i sqrt(1/pi) w^2 sqrt(eps''(x', w)) g(x, x', w) h`
/// (natural units, spatial quadrature weight absorbed).
pub fn assemble_E(
    lattice: &ModeLattice,
    greens: &[GreenField],
) -> Result<FieldAssembly, QuantizationError> {
    let n = lattice.spatial.len();
    let h = lattice.spatial.h;
    let mut omegas = Vec::new();
    let mut blocks = Vec::new();
    for &omega in &lattice.frequency.points {
        let g = find_green(greens, omega)?;
        let mut block = Array2::default((n, n));
        for j in 0..n {
            let weight =
                Complex64::i() * SQRT_INV_PI * omega * omega * g.eps[j].im.max(0.0).sqrt() * h;
            for i in 0..n {
                block[[i, j]] = weight * g.values[[i, j]];
            }
        }
        omegas.push(omega);
        blocks.push(block);
    }
    Ok(FieldAssembly { omegas, blocks })
}

fn find_green<'a>(greens: &'a [GreenField], omega: f64) -> Result<&'a GreenField, QuantizationError> {
    greens
        .iter()
        .find(|g| (g.omega - omega).abs() <= 1e-12 * omega.max(1.0))
        .ok_or(QuantizationError::MissingGreen(omega))
}

/// Linear noise polarization: diagonal coefficient map
/// `i sqrt(1/pi) sqrt(eps''(x, w))` of `f(x, w)`.
pub fn linear_noise_polarization(lattice: &ModeLattice, eps: &[Vec<Complex64>]) -> FieldAssembly {
    let n = lattice.spatial.len();
    let mut blocks = Vec::new();
    for eps_w in eps {
        let mut block = Array2::default((n, n));
        for i in 0..n {
            block[[i, i]] = Complex64::i() * SQRT_INV_PI * eps_w[i].im.max(0.0).sqrt();
        }
        blocks.push(block);
    }
    FieldAssembly { omegas: lattice.frequency.points.clone(), blocks }
}

/// Linear displacement: `D_L(x, w) = eps(x, w) E(x, w) + P_N(x, w)` as a
/// coefficient map (natural units, `eps0 = 1`).
pub fn assemble_D_linear(
    e: &FieldAssembly,
    p_n: &FieldAssembly,
    eps: &[Vec<Complex64>],
) -> FieldAssembly {
    let mut blocks = Vec::new();
    for (w_idx, e_block) in e.blocks.iter().enumerate() {
        let n = e_block.nrows();
        let mut block = Array2::default((n, n));
        for i in 0..n {
            for j in 0..n {
                block[[i, j]] = eps[w_idx][i] * e_block[[i, j]] + p_n.blocks[w_idx][[i, j]];
            }
        }
        blocks.push(block);
    }
    FieldAssembly { omegas: e.omegas.clone(), blocks }
}

/// Commutator check of the assembled electric field.
///
/// First asserts, to roundoff, that the discrete `[E(x,w), E^dag(x',w)]`
/// coefficient sum equals `(1/pi) w^4` times the `eps''`-weighted `g g*`
/// sum (the same arithmetic rearranged), then reports the fluctuation
/// identity residual of the Green field, which bounds the deviation from
/// `(1/pi) w^2 Im g(x, x')`.
pub fn check_E_commutator(
    e: &FieldAssembly,
    greens: &[GreenField],
    lattice: &ModeLattice,
) -> Result<IdentityCheck, QuantizationError> {
    let n = lattice.spatial.len();
    let h = lattice.spatial.h;
    let mut worst: Option<f64> = None;
    for (w_idx, &omega) in e.omegas.iter().enumerate() {
        let g = find_green(greens, omega)?;
        let block = &e.blocks[w_idx];

        // Exact rearrangement: sum_s c(x,s) c*(x',s) / h equals
        // (1/pi) w^4 sum_s eps''(s) g(x,s) g*(x',s) h, entry by entry.
        let w4 = omega.powi(4) / std::f64::consts::PI;
        let stride = (n / 16).max(1);
        for i in (0..n).step_by(stride) {
            for j in (0..n).step_by(stride) {
                let mut coeff_sum = Complex64::default();
                let mut quad_sum = Complex64::default();
                for s in 0..n {
                    coeff_sum += block[[i, s]] * block[[j, s]].conj();
                    quad_sum += g.eps[s].im * g.values[[i, s]] * g.values[[j, s]].conj() * h;
                }
                coeff_sum /= h;
                quad_sum *= w4;
                let scale = coeff_sum.norm().max(1e-300);
                assert!(
                    (coeff_sum - quad_sum).norm() <= 1e-12 * scale,
                    "coefficient sum is not the rearranged quadrature at ({i},{j})"
                );
            }
        }

        if let IdentityCheck::Residual(r) = fluctuation_residual(g) {
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    Ok(worst.map_or(IdentityCheck::NonAbsorbing, IdentityCheck::Residual))
}

/// One frequency band of the slow-variable reduction.
#[derive(Debug, Clone)]
pub struct BandSpec {
    pub carrier: f64,
    /// Half-open index range into the lattice frequency grid.
    pub start: usize,
    pub end: usize,
}

impl BandSpec {
    pub fn width(&self, spacing: f64) -> f64 {
        (self.end - self.start) as f64 * spacing
    }
}

/// Band-averaged amplitudes and their normalization bookkeeping.
///
/// `f~(x, band) = width^{-1/2} sum_{w in band} sqrt(dw) f(x, w)` preserves
/// the bosonic normalization band by band: `[f~, f~^dag] = kron / h`.
#[derive(Debug, Clone)]
pub struct SlowVariableSet {
    pub bands: Vec<BandSpec>,
    pub widths: Vec<f64>,
    /// `amplitudes[[x, band]]`.
    pub amplitudes: Array2<Complex64>,
}

/// Collapses lattice amplitudes onto band variables.
pub fn reduce_to_bands(
    lattice: &ModeLattice,
    f: &Array2<Complex64>,
    bands: &[BandSpec],
) -> Result<SlowVariableSet, QuantizationError> {
    let (nx, nw) = lattice.shape();
    if f.dim() != (nx, nw) {
        return Err(QuantizationError::ShapeMismatch { got: f.dim(), want: (nx, nw) });
    }
    for (a, band_a) in bands.iter().enumerate() {
        if band_a.end > nw || band_a.start >= band_a.end {
            return Err(QuantizationError::BandOutOfRange {
                start: band_a.start,
                end: band_a.end,
                len: nw,
            });
        }
        for band_b in &bands[a + 1..] {
            if band_a.start < band_b.end && band_b.start < band_a.end {
                return Err(QuantizationError::OverlappingBands(
                    band_a.start.max(band_b.start),
                ));
            }
        }
    }
    let dw = lattice.frequency.spacing;
    let sqrt_dw = dw.sqrt();
    let mut amplitudes = Array2::default((nx, bands.len()));
    let mut widths = Vec::with_capacity(bands.len());
    for (b, band) in bands.iter().enumerate() {
        let width = band.width(dw);
        widths.push(width);
        let norm = 1.0 / width.sqrt();
        for x in 0..nx {
            let mut sum = Complex64::default();
            for w in band.start..band.end {
                sum += sqrt_dw * f[[x, w]];
            }
            amplitudes[[x, b]] = norm * sum;
        }
    }
    Ok(SlowVariableSet { bands: bands.to_vec(), widths, amplitudes })
}

/// Band field `E~(x) = sum_{w in band} sqrt(dw) E(x, w)` applied to lattice
/// amplitudes; the slowly varying field amplitude at the band carrier,
/// weighted consistently with the band variables of [`reduce_to_bands`].
pub fn collapse_band_field(
    assembly: &FieldAssembly,
    f: &Array2<Complex64>,
    lattice: &ModeLattice,
    band: &BandSpec,
) -> Vec<Complex64> {
    let n = lattice.spatial.len();
    let sqrt_dw = lattice.frequency.spacing.sqrt();
    let mut out = vec![Complex64::default(); n];
    for w in band.start..band.end {
        let field = assembly.apply(f, w);
        for (o, v) in out.iter_mut().zip(field) {
            *o += sqrt_dw * v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::greens::{green_1d, Geometry1D};
    use crate::materials::{Chi2Model, Oscillator, Permittivity, PermittivityModel};
    use approx::assert_relative_eq;
    use ndarray::Array2 as Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn absorber() -> Permittivity {
        Permittivity::Model(PermittivityModel::new(
            1.0,
            vec![Oscillator { wp2: 2.0, w0: 3.2, gamma: 0.6 }],
        ))
    }

    fn setup(n: usize, omegas: &[f64]) -> (Geometry1D, ModeLattice, Vec<GreenField>) {
        let geom = Geometry1D::homogeneous(8.0, absorber(), Chi2Model::Zero);
        let grid = SpatialGrid1D::new(8.0, n).unwrap();
        let start = omegas[0];
        let spacing = if omegas.len() > 1 { omegas[1] - omegas[0] } else { 0.01 };
        let freq = FrequencyGrid::uniform(start, spacing, omegas.len()).unwrap();
        let greens: Vec<GreenField> =
            omegas.iter().map(|&w| green_1d(&geom, w, &grid).unwrap()).collect();
        (geom, ModeLattice::new(grid, freq), greens)
    }

    #[test]
    fn zero_amplitudes_give_zero_field() {
        let (_, lattice, greens) = setup(65, &[1.5]);
        let e = assemble_E(&lattice, &greens).unwrap();
        let f = Matrix::default(lattice.shape());
        let field = e.apply(&f, 0);
        assert!(field.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_amplitude_reproduces_green_column() {
        let (_, lattice, greens) = setup(65, &[1.5]);
        let e = assemble_E(&lattice, &greens).unwrap();
        let mut f = Matrix::default(lattice.shape());
        let x0 = 30;
        f[[x0, 0]] = Complex64::new(1.0, 0.0);
        let field = e.apply(&f, 0);
        let g = &greens[0];
        let h = lattice.spatial.h;
        let omega = 1.5f64;
        let prefactor =
            Complex64::i() * SQRT_INV_PI * omega * omega * g.eps[x0].im.sqrt() * h;
        for i in 0..lattice.spatial.len() {
            let expect = prefactor * g.values[[i, x0]];
            assert!((field[i] - expect).norm() <= 1e-14 * expect.norm().max(1e-300));
        }
    }

    #[test]
    fn coefficient_scales_as_sqrt_eps_im() {
        let (_, lattice, greens) = setup(65, &[1.5]);
        let e1 = assemble_E(&lattice, &greens).unwrap();
        // Double eps'' at one point with the Green values held fixed: the
        // coefficient column scales by sqrt(2).
        let mut doubled = greens.clone();
        doubled[0].eps[20] = Complex64::new(doubled[0].eps[20].re, 2.0 * doubled[0].eps[20].im);
        let e2 = assemble_E(&lattice, &doubled).unwrap();
        let ratio = e2.blocks[0][[40, 20]] / e1.blocks[0][[40, 20]];
        assert_relative_eq!(ratio.re, 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(ratio.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn coefficients_vanish_where_lossless() {
        let vacuum = Permittivity::Model(PermittivityModel::vacuum());
        let geom = Geometry1D::homogeneous(8.0, vacuum, Chi2Model::Zero);
        let grid = SpatialGrid1D::new(8.0, 65).unwrap();
        let freq = FrequencyGrid::uniform(1.5, 0.01, 1).unwrap();
        let lattice = ModeLattice::new(grid.clone(), freq);
        let greens = vec![green_1d(&geom, 1.5, &grid).unwrap()];
        let e = assemble_E(&lattice, &greens).unwrap();
        assert!(e.blocks[0].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn missing_green_is_an_error() {
        let (_, lattice, _) = setup(65, &[1.5]);
        match assemble_E(&lattice, &[]) {
            Err(QuantizationError::MissingGreen(w)) => assert_relative_eq!(w, 1.5),
            other => panic!("expected MissingGreen, got {other:?}"),
        }
    }

    #[test]
    fn noise_polarization_is_diagonal_plug_in() {
        let (_, lattice, _) = setup(65, &[1.5]);
        // eps'' = pi at one point makes the coefficient exactly i.
        let n = lattice.spatial.len();
        let mut eps = vec![vec![Complex64::new(2.0, 0.1); n]];
        eps[0][7] = Complex64::new(2.0, std::f64::consts::PI);
        let p = linear_noise_polarization(&lattice, &eps);
        assert_relative_eq!(p.blocks[0][[7, 7]].im, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.blocks[0][[7, 7]].re, 0.0);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_eq!(p.blocks[0][[i, j]], Complex64::default());
                }
            }
        }
    }

    #[test]
    fn noise_polarization_vanishes_without_loss() {
        let (_, lattice, _) = setup(65, &[1.5]);
        let n = lattice.spatial.len();
        let eps = vec![vec![Complex64::new(2.0, 0.0); n]];
        let p = linear_noise_polarization(&lattice, &eps);
        assert!(p.blocks[0].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn displacement_reduces_to_e_in_vacuum() {
        let (_, lattice, _) = setup(65, &[1.5]);
        let n = lattice.spatial.len();
        let block = Matrix::from_shape_fn((n, n), |(i, j)| {
            Complex64::new((i + j) as f64 * 1e-3, (i as f64 - j as f64) * 1e-3)
        });
        let e = FieldAssembly { omegas: vec![1.5], blocks: vec![block.clone()] };
        let zero = FieldAssembly { omegas: vec![1.5], blocks: vec![Matrix::default((n, n))] };
        let eps = vec![vec![Complex64::new(1.0, 0.0); n]];
        let d = assemble_D_linear(&e, &zero, &eps);
        for (a, b) in d.blocks[0].iter().zip(block.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn displacement_two_route_consistency_is_second_order() {
        // -(1/w^2) d^2/dx^2 of the E columns vs eps*E + P_N, interior rows.
        let omega = 1.5f64;
        let mut errors = Vec::new();
        for n in [129usize, 257, 513] {
            let (geom, lattice, greens) = setup(n, &[omega]);
            let e = assemble_E(&lattice, &greens).unwrap();
            let eps = vec![geom.eps_samples(&lattice.spatial, omega)];
            let p_n = linear_noise_polarization(&lattice, &eps);
            let d = assemble_D_linear(&e, &p_n, &eps);
            let h = lattice.spatial.h;
            let mut num = 0.0f64;
            let mut den = 0.0f64;
            for j in (0..n).step_by(n / 16) {
                for i in lattice.spatial.interior() {
                    let fd = -(e.blocks[0][[i - 1, j]] - 2.0 * e.blocks[0][[i, j]]
                        + e.blocks[0][[i + 1, j]])
                        / (h * h)
                        / (omega * omega);
                    let diff = fd - d.blocks[0][[i, j]];
                    num += diff.norm_sqr();
                    den += d.blocks[0][[i, j]].norm_sqr();
                }
            }
            errors.push((num / den).sqrt());
        }
        let order = (errors[0] / errors[2]).ln() / 2.0f64.ln() / 2.0;
        assert!(
            (1.7..=2.3).contains(&order),
            "two-route D order {order} outside [1.7, 2.3]: {errors:?}"
        );
    }

    #[test]
    fn commutator_residual_matches_identity_residual() {
        let (_, lattice, greens) = setup(257, &[1.5]);
        let e = assemble_E(&lattice, &greens).unwrap();
        let from_commutator =
            check_E_commutator(&e, &greens, &lattice).unwrap().residual().unwrap();
        let from_identity = fluctuation_residual(&greens[0]).residual().unwrap();
        assert_eq!(from_commutator, from_identity);
        assert!(from_commutator < 1e-3);
    }

    #[test]
    fn single_point_band_is_identity() {
        let (_, lattice, _) = setup(65, &[1.5, 1.51, 1.52]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Matrix::from_shape_fn(lattice.shape(), |_| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let bands = vec![BandSpec { carrier: 1.51, start: 1, end: 2 }];
        let slow = reduce_to_bands(&lattice, &f, &bands).unwrap();
        for x in 0..lattice.spatial.len() {
            let diff = (slow.amplitudes[[x, 0]] - f[[x, 1]]).norm();
            assert!(diff <= 1e-15 * f[[x, 1]].norm().max(1e-300));
        }
    }

    #[test]
    fn flat_band_norm_sums_constituents() {
        let (_, lattice, _) = setup(65, &[1.5, 1.51, 1.52, 1.53, 1.54]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = Matrix::default(lattice.shape());
        for x in 0..lattice.spatial.len() {
            let a = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            for w in 0..5 {
                f[[x, w]] = a;
            }
        }
        let bands = vec![BandSpec { carrier: 1.52, start: 0, end: 5 }];
        let slow = reduce_to_bands(&lattice, &f, &bands).unwrap();
        let norm_tilde: f64 = slow.amplitudes.iter().map(|v| v.norm_sqr()).sum();
        let norm_f: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(norm_tilde, norm_f, max_relative = 1e-12);
    }

    #[test]
    fn band_reduction_is_linear() {
        let (_, lattice, _) = setup(65, &[1.5, 1.51, 1.52, 1.53]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut sample = || {
            Matrix::from_shape_fn(lattice.shape(), |_| {
                Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            })
        };
        let f1 = sample();
        let f2 = sample();
        let c = Complex64::new(0.3, -1.1);
        let combined = f1.mapv(|v| v * c) + &f2;
        let bands = vec![
            BandSpec { carrier: 1.5, start: 0, end: 2 },
            BandSpec { carrier: 1.53, start: 2, end: 4 },
        ];
        let s1 = reduce_to_bands(&lattice, &f1, &bands).unwrap();
        let s2 = reduce_to_bands(&lattice, &f2, &bands).unwrap();
        let s = reduce_to_bands(&lattice, &combined, &bands).unwrap();
        for (got, (a, b)) in
            s.amplitudes.iter().zip(s1.amplitudes.iter().zip(s2.amplitudes.iter()))
        {
            let expect = a * c + b;
            assert!((got - expect).norm() <= 1e-12 * expect.norm().max(1e-300));
        }
    }

    #[test]
    fn overlapping_bands_rejected() {
        let (_, lattice, _) = setup(65, &[1.5, 1.51, 1.52, 1.53]);
        let f = Matrix::default(lattice.shape());
        let bands = vec![
            BandSpec { carrier: 1.5, start: 0, end: 3 },
            BandSpec { carrier: 1.53, start: 2, end: 4 },
        ];
        assert!(matches!(
            reduce_to_bands(&lattice, &f, &bands),
            Err(QuantizationError::OverlappingBands(_))
        ));
    }
}
