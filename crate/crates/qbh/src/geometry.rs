//! Parameter-space geometry of the quasiparticle bands.
//!
//! For a parametrized family of models the right eigenvector `beta(k; p)` of
//! the dynamical matrix (particle band, metric-normalized) and its left
//! partner `beta_L = tau3 beta` define a geometric tensor over parameters
//!
//! ```text
//!     chi_{mu nu} = (d_mu beta_L)^dag (d_nu beta)
//!                 - [(d_mu beta_L)^dag beta] [beta_L^dag (d_nu beta)],
//! ```
//!
//! whose symmetrized real part is the metric tensor. With the indefinite
//! normalization `beta_L^dag beta = 1` the metric need not be positive; its
//! divergences flag stability phase boundaries. Derivatives are central
//! finite differences with every stencil eigenvector phase-aligned to the
//! center one (the tensor is gauge invariant only for a smooth phase
//! choice).

use crate::error::{QbhError, Result};
use crate::linalg::{C64, CMat, RMat, cdot};
use crate::model::QBHSpec;
use crate::spectral::{self, Tolerances, eval_bloch, tau3_signs};

/// A model family over a named real parameter vector.
pub trait SpecFamily {
    fn param_names(&self) -> Vec<String>;
    fn build(&self, params: &[f64]) -> Result<QBHSpec>;
}

/// Family defined by a closure; the workhorse for scans and tests.
pub struct FnFamily<F: Fn(&[f64]) -> Result<QBHSpec>> {
    names: Vec<String>,
    builder: F,
}

impl<F: Fn(&[f64]) -> Result<QBHSpec>> FnFamily<F> {
    pub fn new(names: &[&str], builder: F) -> Self {
        Self { names: names.iter().map(|s| s.to_string()).collect(), builder }
    }
}

impl<F: Fn(&[f64]) -> Result<QBHSpec>> SpecFamily for FnFamily<F> {
    fn param_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn build(&self, params: &[f64]) -> Result<QBHSpec> {
        (self.builder)(params)
    }
}

/// Metric-normalized particle eigenvector of band `band` at `(params, k)`.
fn particle_vector(
    family: &dyn SpecFamily,
    params: &[f64],
    k: &[f64],
    band: usize,
    tol: &Tolerances,
) -> Result<Vec<C64>> {
    let spec = family.build(params)?;
    let sp = spectral::diagonalize(&eval_bloch(&spec, k), tol)?;
    if !sp.is_regular() {
        return Err(QbhError::SingularPoint { k: k.to_vec(), kind: sp.classification.name() });
    }
    Ok(sp.particle_vector(band))
}

/// Align the phase of `v` against the reference by maximizing the real part
/// of the Euclidean overlap.
pub(crate) fn align_phase(reference: &[C64], v: &mut [C64]) -> Result<()> {
    let overlap = cdot(reference, v);
    if overlap.norm() < 1e-12 {
        return Err(QbhError::FitRejected(
            "stencil eigenvectors nearly orthogonal; no smooth gauge across the stencil".into(),
        ));
    }
    let phase = overlap / overlap.norm();
    let rot = phase.conj();
    for z in v.iter_mut() {
        *z *= rot;
    }
    Ok(())
}

/// Geometric-tensor entry from gauge-aligned stencil eigenvectors
/// (center, +-mu displacements, +-nu displacements) and the two steps.
pub(crate) fn qgt_from_stencil(
    signs: &[f64],
    center: &[C64],
    mu_plus: &mut Vec<C64>,
    mu_minus: &mut Vec<C64>,
    nu_plus: &mut Vec<C64>,
    nu_minus: &mut Vec<C64>,
    h_mu: f64,
    h_nu: f64,
) -> Result<C64> {
    for v in [&mut *mu_plus, &mut *mu_minus, &mut *nu_plus, &mut *nu_minus] {
        align_phase(center, v)?;
    }
    let n = center.len();
    let mut d_mu = vec![C64::new(0.0, 0.0); n];
    let mut d_nu = vec![C64::new(0.0, 0.0); n];
    for i in 0..n {
        d_mu[i] = (mu_plus[i] - mu_minus[i]) / (2.0 * h_mu);
        d_nu[i] = (nu_plus[i] - nu_minus[i]) / (2.0 * h_nu);
    }
    // chi = (tau3 d_mu)^dag d_nu - [(tau3 d_mu)^dag beta][(tau3 beta)^dag d_nu]
    let t3 = |v: &[C64]| -> Vec<C64> {
        v.iter().zip(signs.iter()).map(|(z, s)| *z * *s).collect()
    };
    let dmu_l = t3(&d_mu);
    let beta_l = t3(center);
    let term1 = cdot(&dmu_l, &d_nu);
    let term2 = cdot(&dmu_l, center) * cdot(&beta_l, &d_nu);
    Ok(term1 - term2)
}

/// Default relative finite-difference step.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Geometric-tensor component `chi_{mu nu}` for one particle band by central
/// finite differences with step `h_fd * max(1, |p|)` per parameter.
pub fn qgt(
    family: &dyn SpecFamily,
    params: &[f64],
    k: &[f64],
    mu: usize,
    nu: usize,
    h_fd: f64,
    band: usize,
) -> Result<C64> {
    let spec = family.build(params)?;
    let tol = Tolerances::for_spec(&spec);
    let signs = tau3_signs(spec.bands());
    let center = particle_vector(family, params, k, band, &tol)?;

    let h = |i: usize| h_fd * params[i].abs().max(1.0);
    let displaced = |i: usize, step: f64| -> Result<Vec<C64>> {
        let mut p = params.to_vec();
        p[i] += step;
        particle_vector(family, &p, k, band, &tol)
    };
    let mut mu_p = displaced(mu, h(mu))?;
    let mut mu_m = displaced(mu, -h(mu))?;
    let mut nu_p = displaced(nu, h(nu))?;
    let mut nu_m = displaced(nu, -h(nu))?;
    qgt_from_stencil(&signs, &center, &mut mu_p, &mut mu_m, &mut nu_p, &mut nu_m, h(mu), h(nu))
}

/// Symmetrized metric tensor over all parameter pairs.
#[derive(Debug, Clone)]
pub struct QmtResult {
    pub k: Vec<f64>,
    pub params: Vec<(String, f64)>,
    /// `g_{mu nu} = Re(chi_{mu nu} + chi_{nu mu}) / 2`; symmetric, possibly
    /// negative (indefinite normalization)
    pub g_lr: RMat,
    /// largest |Im| of the symmetrized tensor; a consistency diagnostic
    pub imag_residual: f64,
}

pub fn qmt(
    family: &dyn SpecFamily,
    params: &[f64],
    k: &[f64],
    h_fd: f64,
    band: usize,
) -> Result<QmtResult> {
    let names = family.param_names();
    let np = params.len();
    if names.len() != np {
        return Err(QbhError::InvalidInput("parameter count mismatch".into()));
    }
    let mut chi = CMat::zeros(np, np);
    for mu in 0..np {
        for nu in mu..np {
            let c = qgt(family, params, k, mu, nu, h_fd, band)?;
            chi[(mu, nu)] = c;
            if nu != mu {
                chi[(nu, mu)] = qgt(family, params, k, nu, mu, h_fd, band)?;
            }
        }
    }
    let mut g = RMat::zeros(np, np);
    let mut imag: f64 = 0.0;
    for mu in 0..np {
        for nu in 0..np {
            let sym = 0.5 * (chi[(mu, nu)] + chi[(nu, mu)]);
            g[(mu, nu)] = sym.re;
            imag = imag.max(sym.im.abs());
        }
    }
    Ok(QmtResult {
        k: k.to_vec(),
        params: names.into_iter().zip(params.iter().cloned()).collect(),
        g_lr: g,
        imag_residual: imag,
    })
}

/// Divergence flag threshold: entries above `1/tol` are reported singular.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct QmtScanPoint {
    pub params: Vec<f64>,
    /// metric tensor; absent when the stencil hit a singular point
    pub g_lr: Option<RMat>,
    /// largest |g_{mu nu}|; absent when the stencil hit a singular point
    pub magnitude: Option<f64>,
    pub divergent: bool,
}

/// Metric-tensor surface over a parameter grid at fixed momentum; singular
/// stencils are flagged, never fatal.
pub fn qmt_divergence_scan(
    family: &dyn SpecFamily,
    param_grid: &[Vec<f64>],
    k_c: &[f64],
    h_fd: f64,
    band: usize,
) -> Vec<QmtScanPoint> {
    param_grid
        .iter()
        .map(|p| match qmt(family, p, k_c, h_fd, band) {
            Ok(res) => {
                let mag = res.g_lr.max_abs();
                QmtScanPoint {
                    params: p.clone(),
                    g_lr: Some(res.g_lr),
                    magnitude: Some(mag),
                    divergent: mag > DIVERGENCE_THRESHOLD,
                }
            }
            Err(_) => QmtScanPoint {
                params: p.clone(),
                g_lr: None,
                magnitude: None,
                divergent: true,
            },
        })
        .collect()
}

/// The interpolation chain parametrized directly by the ratio
/// `alpha = s Delta / (Omega (1 - s))` that controls its vacuum (with unit
/// band-separation prefactor: `Omega = 2`, `s = 1/2`, `Delta = 2 alpha`).
pub fn interpolation_alpha_family() -> impl SpecFamily {
    FnFamily::new(&["alpha"], |p: &[f64]| {
        crate::model::build_model(crate::model::ModelParams::Interpolation {
            omega: 2.0,
            j: 2.0,
            delta: 2.0 * p[0],
            s: 0.5,
        })
    })
}

/// The harmonic chain parametrized by `alpha = 2 J / Omega` at `Omega = 1`.
pub fn harmonic_alpha_family() -> impl SpecFamily {
    FnFamily::new(&["alpha"], |p: &[f64]| {
        crate::model::build_model(crate::model::ModelParams::Harmonic {
            omega: 1.0,
            j: 0.5 * p[0],
        })
    })
}

/// The double chain over `(Omega1, Omega2)` at fixed stiffnesses.
pub fn double_chain_family(k1: f64, k2: f64) -> impl SpecFamily {
    FnFamily::new(&["Omega1", "Omega2"], move |p: &[f64]| {
        crate::model::build_model(crate::model::ModelParams::DoubleChain {
            omega1: p[0],
            omega2: p[1],
            k1,
            k2,
        })
    })
}
