//! Quantized electromagnetic fields in absorbing, dispersive chi(2) media.
//!
//! This crate builds the machinery for three-wave mixing in lossy dielectrics
//! where absorption makes a naive mode expansion impossible: fields are
//! expanded over bosonic variables labelled by position and frequency, the
//! medium enters through its complex permittivity and Green function, and the
//! nonlinear interaction is encoded in a coupling tensor constructed from the
//! complex chi(2) susceptibility. Every construction ships with the
//! consistency checks it rests on (Kramers-Kronig causality, the discrete
//! delta property of the Green function, the fluctuation identity behind the
//! field commutators, a Fredholm consistency relation for the coupling
//! tensor, and a two-route evaluation of the nonlinear noise polarization).
//!
//! Everything runs in natural units `hbar = eps0 = c = 1` with one reference
//! length fixing the frequency scale.
//!
//! # Modules
//!
//! - [`materials`]: Lorentz-oscillator permittivities, chi(2) models,
//!   Kramers-Kronig validation.
//! - [`greens`]: 1D stratified Green functions by transfer matrices, the
//!   homogeneous 3D dyadic, the discrete Helmholtz operator, and the
//!   fluctuation identity.
//! - [`quantization`]: discretized dynamical variables, electric-field and
//!   noise-polarization assemblies, commutator checks, band reduction.
//! - [`coupling`]: the nonlinear coupling tensor, its Fredholm consistency
//!   residual and dense-inversion cross-check, the effective three-wave
//!   Hamiltonian, and reactive/noise polarizations.
//! - [`pdc`]: first-order parametric down-conversion and Schmidt purity.
//! - [`cli`] / [`config`]: the `nlqed` command-line front end.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --example kk_check            # causality validation of a material
//! cargo run --example green_function     # Green function + identity checks
//! cargo run --example field_quantization # E-field assembly and commutators
//! cargo run --example coupling_tensor    # coupling tensor + Fredholm checks
//! cargo run --example noise_polarization # two-route nonlinear noise polarization
//! cargo run --example pdc_biphoton       # biphoton amplitude and purity
//! ```

pub mod cli;
pub mod config;
pub mod coupling;
pub mod greens;
pub mod io;
pub mod linalg;
pub mod materials;
pub mod pdc;
pub mod quantization;

pub use materials::{Chi2Model, FrequencyGrid, PermittivityModel};
pub use greens::{Geometry1D, GreenField, SpatialGrid1D};
