//! Model definitions: translationally invariant quadratic bosonic Hamiltonians
//! given by finite-range coupling maps, plus the quadrature-basis form and the
//! built-in one-band chains.
//!
//! A model on a `D`-dimensional cubic lattice with `d` bosons per site is
//! fixed by hopping matrices `K_r` (Hermitian pair condition
//! `K_{-r} = K_r^dag`) and pairing matrices `Delta_r`
//! (`Delta_{-r} = Delta_r^T`) for offsets `|r|_inf <= R`. Only the canonical
//! half-space of offsets (lexicographically positive, plus `r = 0`) is
//! stored; conjugate partners are generated on demand, so the Hermiticity
//! constraints hold by construction.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QbhError, Result};
use crate::linalg::{C64, CMat, RMat};

pub type Offset = Vec<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum OffsetClass {
    Zero,
    Positive,
    Negative,
}

fn classify_offset(r: &[i64]) -> OffsetClass {
    for &x in r {
        if x > 0 {
            return OffsetClass::Positive;
        }
        if x < 0 {
            return OffsetClass::Negative;
        }
    }
    OffsetClass::Zero
}

fn negate(r: &[i64]) -> Offset {
    r.iter().map(|x| -x).collect()
}

fn inf_norm(r: &[i64]) -> i64 {
    r.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// Maximum supported internal degrees of freedom per site.
pub const MAX_BANDS: usize = 8;

/// A translationally invariant quadratic bosonic Hamiltonian.
#[derive(Debug, Clone)]
pub struct QBHSpec {
    dim: usize,
    bands: usize,
    range: usize,
    hopping: BTreeMap<Offset, CMat>,
    pairing: BTreeMap<Offset, CMat>,
}

const STORE_TOL: f64 = 1e-12;

impl QBHSpec {
    pub fn new(dim: usize, bands: usize, range: usize) -> Result<Self> {
        if dim == 0 || bands == 0 || range == 0 {
            return Err(QbhError::InvalidInput(
                "spatial dimension, band count, and range must be positive".into(),
            ));
        }
        if bands > MAX_BANDS {
            return Err(QbhError::InvalidInput(format!(
                "band count {bands} exceeds supported maximum {MAX_BANDS}"
            )));
        }
        Ok(Self { dim, bands, range, hopping: BTreeMap::new(), pairing: BTreeMap::new() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn range(&self) -> usize {
        self.range
    }

    fn check_offset(&self, r: &[i64]) -> Result<()> {
        if r.len() != self.dim {
            return Err(QbhError::InvalidInput(format!(
                "offset {r:?} has wrong dimension (expected {})",
                self.dim
            )));
        }
        if inf_norm(r) > self.range as i64 {
            return Err(QbhError::InvalidInput(format!(
                "offset {r:?} exceeds coupling range {}",
                self.range
            )));
        }
        Ok(())
    }

    fn check_block(&self, m: &CMat) -> Result<()> {
        if m.nrows() != self.bands || m.ncols() != self.bands {
            return Err(QbhError::InvalidInput(format!(
                "coupling block is {}x{}, expected {}x{}",
                m.nrows(),
                m.ncols(),
                self.bands,
                self.bands
            )));
        }
        Ok(())
    }

    /// Set the hopping matrix at `r`, replacing any previous value; the
    /// partner `K_{-r} = K_r^dag` is implied. The on-site block must be
    /// Hermitian.
    pub fn set_hopping(&mut self, r: &[i64], m: CMat) -> Result<()> {
        self.check_offset(r)?;
        self.check_block(&m)?;
        let scale = m.max_abs().max(1.0);
        match classify_offset(r) {
            OffsetClass::Zero => {
                if m.hermitian_residual() > STORE_TOL * scale {
                    return Err(QbhError::InvalidInput(
                        "on-site hopping block must be Hermitian".into(),
                    ));
                }
                self.hopping.insert(r.to_vec(), m);
            }
            OffsetClass::Positive => {
                self.hopping.insert(r.to_vec(), m);
            }
            OffsetClass::Negative => {
                self.hopping.insert(negate(r), m.adjoint());
            }
        }
        Ok(())
    }

    /// Set the pairing matrix at `r`, replacing any previous value; the
    /// partner `Delta_{-r} = Delta_r^T` is implied. The on-site block must be
    /// symmetric.
    pub fn set_pairing(&mut self, r: &[i64], m: CMat) -> Result<()> {
        self.check_offset(r)?;
        self.check_block(&m)?;
        let scale = m.max_abs().max(1.0);
        match classify_offset(r) {
            OffsetClass::Zero => {
                if m.symmetric_residual() > STORE_TOL * scale {
                    return Err(QbhError::InvalidInput(
                        "on-site pairing block must be symmetric".into(),
                    ));
                }
                self.pairing.insert(r.to_vec(), m);
            }
            OffsetClass::Positive => {
                self.pairing.insert(r.to_vec(), m);
            }
            OffsetClass::Negative => {
                self.pairing.insert(negate(r), m.transpose());
            }
        }
        Ok(())
    }

    /// Hopping matrix at an arbitrary offset (zero if absent).
    pub fn hopping_at(&self, r: &[i64]) -> CMat {
        match classify_offset(r) {
            OffsetClass::Negative => self
                .hopping
                .get(&negate(r))
                .map(|m| m.adjoint())
                .unwrap_or_else(|| CMat::zeros(self.bands, self.bands)),
            _ => self
                .hopping
                .get(r)
                .cloned()
                .unwrap_or_else(|| CMat::zeros(self.bands, self.bands)),
        }
    }

    /// Pairing matrix at an arbitrary offset (zero if absent).
    pub fn pairing_at(&self, r: &[i64]) -> CMat {
        match classify_offset(r) {
            OffsetClass::Negative => self
                .pairing
                .get(&negate(r))
                .map(|m| m.transpose())
                .unwrap_or_else(|| CMat::zeros(self.bands, self.bands)),
            _ => self
                .pairing
                .get(r)
                .cloned()
                .unwrap_or_else(|| CMat::zeros(self.bands, self.bands)),
        }
    }

    /// Canonical (stored) hopping offsets.
    pub fn hopping_offsets(&self) -> impl Iterator<Item = &Offset> {
        self.hopping.keys()
    }

    pub fn pairing_offsets(&self) -> impl Iterator<Item = &Offset> {
        self.pairing.keys()
    }

    /// All offsets with a stored or implied coupling, each listed once.
    pub fn support(&self) -> Vec<Offset> {
        let mut out: Vec<Offset> = Vec::new();
        let mut seen = std::collections::BTreeSet::new();
        for r in self.hopping.keys().chain(self.pairing.keys()) {
            if seen.insert(r.clone()) {
                out.push(r.clone());
                if classify_offset(r) != OffsetClass::Zero {
                    let n = negate(r);
                    if seen.insert(n.clone()) {
                        out.push(n);
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Bloch hopping matrix `K(k) = sum_r e^{i k.r} K_r`; Hermitian.
    pub fn k_bloch(&self, k: &[f64]) -> CMat {
        assert_eq!(k.len(), self.dim);
        let mut out = CMat::zeros(self.bands, self.bands);
        for (r, m) in &self.hopping {
            let phase = dot(k, r);
            match classify_offset(r) {
                OffsetClass::Zero => out = out.add(m),
                _ => {
                    let e = Complex64::from_polar(1.0, phase);
                    out = out.add(&m.scale(e)).add(&m.adjoint().scale(e.conj()));
                }
            }
        }
        out
    }

    /// Bloch pairing matrix `Delta(k) = sum_r e^{i k.r} Delta_r`;
    /// satisfies `Delta(k)^T = Delta(-k)`.
    pub fn delta_bloch(&self, k: &[f64]) -> CMat {
        assert_eq!(k.len(), self.dim);
        let mut out = CMat::zeros(self.bands, self.bands);
        for (r, m) in &self.pairing {
            let phase = dot(k, r);
            match classify_offset(r) {
                OffsetClass::Zero => out = out.add(m),
                _ => {
                    let e = Complex64::from_polar(1.0, phase);
                    out = out.add(&m.scale(e)).add(&m.transpose().scale(e.conj()));
                }
            }
        }
        out
    }

    /// Quadrature-basis coefficient maps (`H_xx = Re(K + Delta)`,
    /// `H_pp = Re(K - Delta)`, `H_xp = Im(Delta - K)`, shift `tr(K_0)/2`).
    pub fn to_quadrature(&self) -> QuadratureForm {
        let mut q = QuadratureForm::new(self.dim, self.bands, self.range);
        for r in self.support() {
            let kr = self.hopping_at(&r);
            let dr = self.pairing_at(&r);
            let hxx = re_mat(&kr.add(&dr));
            let hpp = re_mat(&kr.sub(&dr));
            let hxp = im_mat(&dr.sub(&kr));
            if hxx.max_abs() > 0.0 {
                q.set_hxx_raw(r.clone(), hxx);
            }
            if hpp.max_abs() > 0.0 {
                q.set_hpp_raw(r.clone(), hpp);
            }
            if hxp.max_abs() > 0.0 {
                q.hxp.insert(r.clone(), hxp);
            }
        }
        let k0 = self.hopping_at(&vec![0; self.dim]);
        let mut tr = 0.0;
        for i in 0..self.bands {
            tr += k0[(i, i)].re;
        }
        q.constant_shift = 0.5 * tr;
        q
    }

    /// Largest coupling magnitude; a scale for validation tolerances.
    pub fn coupling_scale(&self) -> f64 {
        let mut s: f64 = 0.0;
        for m in self.hopping.values().chain(self.pairing.values()) {
            s = s.max(m.max_abs());
        }
        s.max(1e-300)
    }
}

fn dot(k: &[f64], r: &[i64]) -> f64 {
    k.iter().zip(r.iter()).map(|(a, b)| a * *b as f64).sum()
}

fn re_mat(m: &CMat) -> RMat {
    RMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].re)
}

fn im_mat(m: &CMat) -> RMat {
    RMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].im)
}

// ---------------------------------------------------------------------------
// quadrature form
// ---------------------------------------------------------------------------

/// The same Hamiltonian written in position/momentum quadratures
/// `H = (1/2) R^T H R - f(H)` with blocks `H_xx`, `H_pp` (symmetric under
/// `r -> -r` with transpose) and `H_xp` (unconstrained, stored per offset).
#[derive(Debug, Clone)]
pub struct QuadratureForm {
    dim: usize,
    bands: usize,
    range: usize,
    hxx: BTreeMap<Offset, RMat>,
    hpp: BTreeMap<Offset, RMat>,
    hxp: BTreeMap<Offset, RMat>,
    pub constant_shift: f64,
}

impl QuadratureForm {
    pub fn new(dim: usize, bands: usize, range: usize) -> Self {
        Self {
            dim,
            bands,
            range,
            hxx: BTreeMap::new(),
            hpp: BTreeMap::new(),
            hxp: BTreeMap::new(),
            constant_shift: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    fn set_symmetric_map(
        map: &mut BTreeMap<Offset, RMat>,
        r: &[i64],
        m: RMat,
        label: &str,
    ) -> Result<()> {
        let scale = m.max_abs().max(1.0);
        match classify_offset(r) {
            OffsetClass::Zero => {
                if m.symmetric_residual() > STORE_TOL * scale {
                    return Err(QbhError::InvalidInput(format!(
                        "on-site {label} block must be symmetric"
                    )));
                }
                map.insert(r.to_vec(), m);
            }
            OffsetClass::Positive => {
                map.insert(r.to_vec(), m);
            }
            OffsetClass::Negative => {
                map.insert(negate(r), m.transpose());
            }
        }
        Ok(())
    }

    pub fn set_hxx(&mut self, r: &[i64], m: RMat) -> Result<()> {
        Self::set_symmetric_map(&mut self.hxx, r, m, "H_xx")
    }

    pub fn set_hpp(&mut self, r: &[i64], m: RMat) -> Result<()> {
        Self::set_symmetric_map(&mut self.hpp, r, m, "H_pp")
    }

    pub fn set_hxp(&mut self, r: &[i64], m: RMat) {
        self.hxp.insert(r.to_vec(), m);
    }

    fn set_hxx_raw(&mut self, r: Offset, m: RMat) {
        match classify_offset(&r) {
            OffsetClass::Negative => {
                self.hxx.insert(negate(&r), m.transpose());
            }
            _ => {
                self.hxx.insert(r, m);
            }
        }
    }

    fn set_hpp_raw(&mut self, r: Offset, m: RMat) {
        match classify_offset(&r) {
            OffsetClass::Negative => {
                self.hpp.insert(negate(&r), m.transpose());
            }
            _ => {
                self.hpp.insert(r, m);
            }
        }
    }

    pub fn hxx_at(&self, r: &[i64]) -> RMat {
        Self::symmetric_at(&self.hxx, r, self.bands)
    }

    pub fn hpp_at(&self, r: &[i64]) -> RMat {
        Self::symmetric_at(&self.hpp, r, self.bands)
    }

    pub fn hxp_at(&self, r: &[i64]) -> RMat {
        self.hxp
            .get(r)
            .cloned()
            .unwrap_or_else(|| RMat::zeros(self.bands, self.bands))
    }

    fn symmetric_at(map: &BTreeMap<Offset, RMat>, r: &[i64], bands: usize) -> RMat {
        match classify_offset(r) {
            OffsetClass::Negative => map
                .get(&negate(r))
                .map(|m| m.transpose())
                .unwrap_or_else(|| RMat::zeros(bands, bands)),
            _ => map.get(r).cloned().unwrap_or_else(|| RMat::zeros(bands, bands)),
        }
    }

    fn support(&self) -> Vec<Offset> {
        let mut seen = std::collections::BTreeSet::new();
        for r in self.hxx.keys().chain(self.hpp.keys()).chain(self.hxp.keys()) {
            seen.insert(r.clone());
            if classify_offset(r) != OffsetClass::Zero {
                seen.insert(negate(r));
            }
        }
        seen.into_iter().collect()
    }

    /// Recover the bosonic coupling maps. Inverse of
    /// [`QBHSpec::to_quadrature`] on all valid inputs.
    pub fn to_spec(&self) -> Result<QBHSpec> {
        let mut spec = QBHSpec::new(self.dim, self.bands, self.range)?;
        let i = C64::new(0.0, 1.0);
        for r in self.support() {
            if classify_offset(&r) == OffsetClass::Negative {
                continue; // canonical partner handles it
            }
            let hxx = self.hxx_at(&r).to_cmat();
            let hpp = self.hpp_at(&r).to_cmat();
            let hxp = self.hxp_at(&r);
            let hxp_mt = self.hxp_at(&negate(&r)).transpose(); // (H_xp^T)_r
            let re_k = hxx.add(&hpp).scale(C64::new(0.5, 0.0));
            let re_d = hxx.sub(&hpp).scale(C64::new(0.5, 0.0));
            let im_k = hxp_mt.sub(&hxp).scale(0.5).to_cmat();
            let im_d = hxp.add(&hxp_mt).scale(0.5).to_cmat();
            let kmat = re_k.add(&im_k.scale(i));
            let dmat = re_d.add(&im_d.scale(i));
            if kmat.max_abs() > 0.0 {
                spec.set_hopping(&r, kmat)?;
            }
            if dmat.max_abs() > 0.0 {
                spec.set_pairing(&r, dmat)?;
            }
        }
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// built-in models
// ---------------------------------------------------------------------------

/// Parameters of the built-in one-band chains.
///
/// - `Harmonic`: on-site `Omega (x^2 + p^2) / 2` per site and
///   nearest-neighbor `-J x_j x_{j+1}` coupling.
/// - `ImagHop`: the harmonic chain plus an imaginary hopping term of
///   strength `gamma` (couples `x` and `p` quadratures antisymmetrically;
///   shifts the dynamical-matrix spectrum by `gamma sin k`).
/// - `Interpolation`: `(1-s)` times decoupled oscillators plus `s` times a
///   pure cross-quadrature chain with couplings `J +- Delta`.
/// - `DoubleChain`: two quadrature channels
///   `2 Omega1 p^2 + 2 Omega2 x^2 + K1 (dp)^2 + K2 (dx)^2`, self-dual under
///   swapping `(Omega1, K1) <-> (Omega2, K2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelParams {
    Harmonic { omega: f64, j: f64 },
    ImagHop { omega: f64, j: f64, gamma: f64 },
    Interpolation { omega: f64, j: f64, delta: f64, s: f64 },
    DoubleChain { omega1: f64, omega2: f64, k1: f64, k2: f64 },
}

impl ModelParams {
    pub fn name(&self) -> &'static str {
        match self {
            ModelParams::Harmonic { .. } => "harmonic",
            ModelParams::ImagHop { .. } => "imaghop",
            ModelParams::Interpolation { .. } => "interpolation",
            ModelParams::DoubleChain { .. } => "double",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |constraint: &str| -> Result<()> {
            Err(QbhError::ParamDomain { model: self.name().into(), constraint: constraint.into() })
        };
        match *self {
            ModelParams::Harmonic { omega, j } | ModelParams::ImagHop { omega, j, .. } => {
                if !(j >= 0.0) {
                    return fail("requires J >= 0");
                }
                if !(omega >= 2.0 * j) {
                    return fail("requires Omega >= 2J");
                }
            }
            ModelParams::Interpolation { omega, s, .. } => {
                if !(omega > 0.0) {
                    return fail("requires Omega > 0");
                }
                if !(0.0..=1.0).contains(&s) {
                    return fail("requires s in [0, 1]");
                }
            }
            ModelParams::DoubleChain { omega1, omega2, k1, k2 } => {
                if !(omega1 >= 0.0 && omega2 >= 0.0 && k1 >= 0.0 && k2 >= 0.0) {
                    return fail("requires K1, K2, Omega1, Omega2 >= 0");
                }
            }
        }
        Ok(())
    }
}

/// Build a built-in model as a one-band, range-1 chain.
pub fn build_model(params: ModelParams) -> Result<QBHSpec> {
    params.validate()?;
    let mut spec = QBHSpec::new(1, 1, 1)?;
    let c = |re: f64, im: f64| CMat::from_rows(&[vec![C64::new(re, im)]]);
    match params {
        ModelParams::Harmonic { omega, j } => {
            spec.set_hopping(&[0], c(omega, 0.0))?;
            if j != 0.0 {
                spec.set_hopping(&[1], c(-j / 2.0, 0.0))?;
                spec.set_pairing(&[1], c(-j / 2.0, 0.0))?;
            }
        }
        ModelParams::ImagHop { omega, j, gamma } => {
            spec.set_hopping(&[0], c(omega, 0.0))?;
            if j != 0.0 || gamma != 0.0 {
                spec.set_hopping(&[1], c(-j / 2.0, -gamma / 2.0))?;
            }
            if j != 0.0 {
                spec.set_pairing(&[1], c(-j / 2.0, 0.0))?;
            }
        }
        ModelParams::Interpolation { omega, j, delta, s } => {
            spec.set_hopping(&[0], c((1.0 - s) * omega, 0.0))?;
            if s * j != 0.0 {
                spec.set_hopping(&[1], c(0.0, -s * j / 2.0))?;
            }
            if s * delta != 0.0 {
                spec.set_pairing(&[1], c(0.0, s * delta / 2.0))?;
            }
        }
        ModelParams::DoubleChain { omega1, omega2, k1, k2 } => {
            spec.set_hopping(&[0], c(omega1 + omega2 + k1 + k2, 0.0))?;
            spec.set_pairing(&[0], c(omega2 - omega1 + k2 - k1, 0.0))?;
            if k1 + k2 != 0.0 {
                spec.set_hopping(&[1], c(-(k1 + k2) / 2.0, 0.0))?;
            }
            if k2 != k1 {
                spec.set_pairing(&[1], c(-(k2 - k1) / 2.0, 0.0))?;
            }
        }
    }
    Ok(spec)
}

/// Critical imaginary-hopping strength of the `ImagHop` chain: the energy
/// functional stays bounded below for `|gamma| <= gamma_c` and loses the
/// bound beyond it, while the dynamical spectrum is unaffected. Derived from
/// `min_k [ (Omega - J cos k)^2 - J^2 cos^2 k - gamma^2 sin^2 k ] = 0` with
/// the minimum attained inside the zone (the interior extremum exists only
/// for `gamma^2 >= Omega J`, which selects the larger root; at `J = 0` this
/// reduces to the obvious single-mode bound `gamma_c = Omega`).
pub fn imag_hop_gamma_c(omega: f64, j: f64) -> f64 {
    let x = 2.0 * j / omega;
    (0.5 * omega * omega * (1.0 + (1.0 - x * x).max(0.0).sqrt())).sqrt()
}

// ---------------------------------------------------------------------------
// model files
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CouplingRecord {
    pub offset: Vec<i64>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Flat JSON-compatible model document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(rename = "D")]
    pub dim: usize,
    #[serde(rename = "d")]
    pub bands: usize,
    #[serde(rename = "R")]
    pub range: usize,
    pub hopping: Vec<CouplingRecord>,
    pub pairing: Vec<CouplingRecord>,
}

fn record_to_mat(rec: &CouplingRecord, bands: usize) -> Result<CMat> {
    if rec.re.len() != bands
        || rec.im.len() != bands
        || rec.re.iter().any(|row| row.len() != bands)
        || rec.im.iter().any(|row| row.len() != bands)
    {
        return Err(QbhError::ModelFile(format!(
            "coupling block at offset {:?} is not {bands}x{bands}",
            rec.offset
        )));
    }
    Ok(CMat::from_fn(bands, bands, |i, j| C64::new(rec.re[i][j], rec.im[i][j])))
}

fn mat_to_record(offset: &[i64], m: &CMat) -> CouplingRecord {
    let n = m.nrows();
    CouplingRecord {
        offset: offset.to_vec(),
        re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
        im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
    }
}

impl QBHSpec {
    pub fn to_model_file(&self) -> ModelFile {
        ModelFile {
            dim: self.dim,
            bands: self.bands,
            range: self.range,
            hopping: self.hopping.iter().map(|(r, m)| mat_to_record(r, m)).collect(),
            pairing: self.pairing.iter().map(|(r, m)| mat_to_record(r, m)).collect(),
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<Self> {
        let mut spec = QBHSpec::new(file.dim, file.bands, file.range)?;
        // a document may list an offset and its partner; inconsistent
        // duplicates are rejected rather than silently overwritten
        let mut seen_h: std::collections::BTreeSet<Offset> = Default::default();
        let mut seen_p: std::collections::BTreeSet<Offset> = Default::default();
        let canonical = |r: &[i64]| -> Offset {
            match classify_offset(r) {
                OffsetClass::Negative => negate(r),
                _ => r.to_vec(),
            }
        };
        for rec in &file.hopping {
            let m = record_to_mat(rec, file.bands)?;
            let key = canonical(&rec.offset);
            if seen_h.contains(&key) {
                let prev = spec.hopping_at(&rec.offset);
                let scale = prev.max_abs().max(m.max_abs()).max(1.0);
                if prev.sub(&m).max_abs() > STORE_TOL * scale {
                    return Err(QbhError::ModelFile(format!(
                        "conflicting hopping blocks for offsets +-{key:?}"
                    )));
                }
            }
            spec.set_hopping(&rec.offset, m)?;
            seen_h.insert(key);
        }
        for rec in &file.pairing {
            let m = record_to_mat(rec, file.bands)?;
            let key = canonical(&rec.offset);
            if seen_p.contains(&key) {
                let prev = spec.pairing_at(&rec.offset);
                let scale = prev.max_abs().max(m.max_abs()).max(1.0);
                if prev.sub(&m).max_abs() > STORE_TOL * scale {
                    return Err(QbhError::ModelFile(format!(
                        "conflicting pairing blocks for offsets +-{key:?}"
                    )));
                }
            }
            spec.set_pairing(&rec.offset, m)?;
            seen_p.insert(key);
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_model_file()).expect("model serialization")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| QbhError::ModelFile(e.to_string()))?;
        Self::from_model_file(&file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c1(re: f64, im: f64) -> CMat {
        CMat::from_rows(&[vec![C64::new(re, im)]])
    }

    #[test]
    fn decoupled_oscillators() {
        let spec = build_model(ModelParams::Harmonic { omega: 1.0, j: 0.0 }).unwrap();
        assert_eq!(spec.hopping_at(&[0])[(0, 0)], C64::new(1.0, 0.0));
        assert_eq!(spec.hopping_at(&[1]).max_abs(), 0.0);
        assert_eq!(spec.pairing_at(&[1]).max_abs(), 0.0);
    }

    #[test]
    fn harmonic_bloch_matches_trigonometric_form() {
        let (omega, j) = (1.3, 0.41);
        let spec = build_model(ModelParams::Harmonic { omega, j }).unwrap();
        for n in 0..100 {
            let k = -3.0 + 0.06 * n as f64;
            let kb = spec.k_bloch(&[k])[(0, 0)];
            let db = spec.delta_bloch(&[k])[(0, 0)];
            assert!((kb - C64::new(omega - j * k.cos(), 0.0)).norm() < 1e-14);
            assert!((db - C64::new(-j * k.cos(), 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn interpolation_bloch_matches_trigonometric_form() {
        let (omega, j, delta, s) = (1.0, 2.0, 1.0, 0.35);
        let spec = build_model(ModelParams::Interpolation { omega, j, delta, s }).unwrap();
        for n in 0..100 {
            let k: f64 = -3.1 + 0.062 * n as f64;
            let kb = spec.k_bloch(&[k])[(0, 0)];
            let db = spec.delta_bloch(&[k])[(0, 0)];
            assert!((kb - C64::new((1.0 - s) * omega + s * j * k.sin(), 0.0)).norm() < 1e-14);
            assert!((db - C64::new(0.0, s * delta * k.cos())).norm() < 1e-14);
        }
    }

    #[test]
    fn double_chain_bloch_matches_trigonometric_form() {
        let (o1, o2, k1, k2) = (0.3, 0.7, 1.0, 2.0);
        let spec =
            build_model(ModelParams::DoubleChain { omega1: o1, omega2: o2, k1, k2 }).unwrap();
        for n in 0..100 {
            let k: f64 = -3.1 + 0.062 * n as f64;
            let u = 1.0 - k.cos();
            let kb = spec.k_bloch(&[k])[(0, 0)];
            let db = spec.delta_bloch(&[k])[(0, 0)];
            assert!((kb - C64::new(o1 + o2 + (k1 + k2) * u, 0.0)).norm() < 1e-13);
            assert!((db - C64::new(o2 - o1 + (k2 - k1) * u, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn imag_hop_adds_odd_diagonal_part() {
        let (omega, j, gamma) = (1.0, 0.375, 0.3);
        let spec = build_model(ModelParams::ImagHop { omega, j, gamma }).unwrap();
        for n in 0..50 {
            let k: f64 = -3.0 + 0.13 * n as f64;
            let kb = spec.k_bloch(&[k])[(0, 0)];
            let want = C64::new(omega - j * k.cos() + gamma * k.sin(), 0.0);
            assert!((kb - want).norm() < 1e-14);
        }
    }

    #[test]
    fn hermiticity_constraints_hold_by_construction() {
        let mut spec = QBHSpec::new(1, 2, 2).unwrap();
        let m = CMat::from_rows(&[
            vec![C64::new(0.1, 0.2), C64::new(-0.3, 0.4)],
            vec![C64::new(0.5, -0.6), C64::new(0.7, 0.8)],
        ]);
        spec.set_hopping(&[2], m.clone()).unwrap();
        spec.set_pairing(&[-2], m.clone()).unwrap();
        assert!(spec.hopping_at(&[-2]).sub(&m.adjoint()).max_abs() < 1e-15);
        assert!(spec.pairing_at(&[2]).sub(&m.transpose()).max_abs() < 1e-15);
        // on-site constraint violations are rejected with a named constraint
        let bad = CMat::from_rows(&[
            vec![C64::new(0.0, 1.0), C64::new(0.0, 0.0)],
            vec![C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        ]);
        assert!(spec.set_hopping(&[0], bad.clone()).is_err());
        assert!(spec.set_pairing(&[0], CMat::from_rows(&[
            vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
            vec![C64::new(-1.0, 0.0), C64::new(0.0, 0.0)],
        ])).is_err());
    }

    #[test]
    fn quadrature_of_single_oscillator() {
        let spec = build_model(ModelParams::Harmonic { omega: 1.7, j: 0.0 }).unwrap();
        let q = spec.to_quadrature();
        assert!((q.hxx_at(&[0])[(0, 0)] - 1.7).abs() < 1e-15);
        assert!((q.hpp_at(&[0])[(0, 0)] - 1.7).abs() < 1e-15);
        assert_eq!(q.hxp_at(&[0]).max_abs(), 0.0);
        assert!((q.constant_shift - 0.85).abs() < 1e-15);
    }

    #[test]
    fn quadrature_of_harmonic_chain() {
        let (omega, j) = (1.0, 0.4);
        let spec = build_model(ModelParams::Harmonic { omega, j }).unwrap();
        let q = spec.to_quadrature();
        // on-site Omega in both quadratures, nearest-neighbor -J only in xx
        assert!((q.hxx_at(&[0])[(0, 0)] - omega).abs() < 1e-15);
        assert!((q.hpp_at(&[0])[(0, 0)] - omega).abs() < 1e-15);
        assert!((q.hxx_at(&[1])[(0, 0)] + j).abs() < 1e-15);
        assert!((q.hxx_at(&[-1])[(0, 0)] + j).abs() < 1e-15);
        assert_eq!(q.hpp_at(&[1]).max_abs(), 0.0);
        assert_eq!(q.hxp_at(&[1]).max_abs(), 0.0);
        let spec2 = q.to_spec().unwrap();
        assert!(spec2.hopping_at(&[1]).sub(&spec.hopping_at(&[1])).max_abs() < 1e-15);
        assert!(spec2.pairing_at(&[1]).sub(&spec.pairing_at(&[1])).max_abs() < 1e-15);
    }

    #[test]
    fn quadrature_of_interpolation_chain() {
        let (omega, j, delta, s) = (1.0, 2.0, 1.0, 0.4);
        let spec = build_model(ModelParams::Interpolation { omega, j, delta, s }).unwrap();
        let q = spec.to_quadrature();
        assert!((q.hxx_at(&[0])[(0, 0)] - (1.0 - s) * omega).abs() < 1e-15);
        assert!((q.hpp_at(&[0])[(0, 0)] - (1.0 - s) * omega).abs() < 1e-15);
        assert!((q.hxp_at(&[1])[(0, 0)] - s * (j + delta) / 2.0).abs() < 1e-15);
        assert!((q.hxp_at(&[-1])[(0, 0)] + s * (j - delta) / 2.0).abs() < 1e-15);
        assert_eq!(q.hxx_at(&[1]).max_abs(), 0.0);
    }

    #[test]
    fn quadrature_round_trip_on_random_couplings() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for case in 0..40 {
            let bands = 1 + (case % 3);
            let mut spec = QBHSpec::new(1, bands, 2).unwrap();
            let mut rand_mat = |herm: bool, symm: bool| {
                let m = CMat::from_fn(bands, bands, |_, _| {
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                });
                if herm {
                    m.add(&m.adjoint()).scale(C64::new(0.5, 0.0))
                } else if symm {
                    m.add(&m.transpose()).scale(C64::new(0.5, 0.0))
                } else {
                    m
                }
            };
            spec.set_hopping(&[0], rand_mat(true, false)).unwrap();
            spec.set_hopping(&[1], rand_mat(false, false)).unwrap();
            spec.set_hopping(&[2], rand_mat(false, false)).unwrap();
            spec.set_pairing(&[0], rand_mat(false, true)).unwrap();
            spec.set_pairing(&[1], rand_mat(false, false)).unwrap();
            spec.set_pairing(&[2], rand_mat(false, false)).unwrap();

            let spec2 = spec.to_quadrature().to_spec().unwrap();
            for r in spec.support() {
                assert!(
                    spec2.hopping_at(&r).sub(&spec.hopping_at(&r)).max_abs() < 1e-13,
                    "hopping mismatch at {r:?}"
                );
                assert!(
                    spec2.pairing_at(&r).sub(&spec.pairing_at(&r)).max_abs() < 1e-13,
                    "pairing mismatch at {r:?}"
                );
            }
        }
    }

    #[test]
    fn from_quadrature_rejects_nonsymmetric_onsite_blocks() {
        let mut q = QuadratureForm::new(1, 2, 1);
        let bad = RMat::from_fn(2, 2, |i, j| if i == 0 && j == 1 { 1.0 } else { 0.0 });
        assert!(q.set_hxx(&[0], bad.clone()).is_err());
        assert!(q.set_hpp(&[0], bad).is_err());
    }

    #[test]
    fn parameter_domains_are_enforced() {
        assert!(build_model(ModelParams::Harmonic { omega: 1.0, j: 0.6 }).is_err());
        assert!(build_model(ModelParams::Harmonic { omega: 1.0, j: -0.1 }).is_err());
        assert!(
            build_model(ModelParams::Interpolation { omega: 0.0, j: 1.0, delta: 1.0, s: 0.5 })
                .is_err()
        );
        assert!(
            build_model(ModelParams::Interpolation { omega: 1.0, j: 1.0, delta: 1.0, s: 1.2 })
                .is_err()
        );
        assert!(
            build_model(ModelParams::DoubleChain { omega1: -0.1, omega2: 1.0, k1: 1.0, k2: 1.0 })
                .is_err()
        );
        match build_model(ModelParams::Harmonic { omega: 1.0, j: 0.6 }) {
            Err(QbhError::ParamDomain { constraint, .. }) => {
                assert!(constraint.contains("Omega >= 2J"));
            }
            other => panic!("expected ParamDomain, got {other:?}"),
        }
    }

    #[test]
    fn model_file_round_trip() {
        let spec = build_model(ModelParams::Interpolation {
            omega: 1.0,
            j: 2.0,
            delta: 1.0,
            s: 0.45,
        })
        .unwrap();
        let json = spec.to_json();
        let spec2 = QBHSpec::from_json(&json).unwrap();
        for r in spec.support() {
            assert!(spec2.hopping_at(&r).sub(&spec.hopping_at(&r)).max_abs() < 1e-15);
            assert!(spec2.pairing_at(&r).sub(&spec.pairing_at(&r)).max_abs() < 1e-15);
        }
        // a lone record at -r defines the coupling seen from -r
        let mut file = spec.to_model_file();
        for rec in file.hopping.iter_mut().chain(file.pairing.iter_mut()) {
            if rec.offset == vec![1] {
                rec.offset = vec![-1];
            }
        }
        let reparsed = QBHSpec::from_model_file(&file).unwrap();
        assert!(
            reparsed.hopping_at(&[-1]).sub(&spec.hopping_at(&[1])).max_abs() < 1e-15,
            "lone -r record defines K_{{-r}}"
        );
        // listing an offset and its partner inconsistently is rejected
        let mut conflicted = spec.to_model_file();
        let mut dup = conflicted.hopping[1].clone();
        dup.offset = dup.offset.iter().map(|x| -x).collect();
        dup.re[0][0] += 0.5;
        conflicted.hopping.push(dup);
        assert!(matches!(
            QBHSpec::from_model_file(&conflicted),
            Err(QbhError::ModelFile(_))
        ));
    }

    #[test]
    fn gamma_c_limits() {
        // J = 0: single-mode bound gamma_c = Omega
        assert!((imag_hop_gamma_c(1.0, 0.0) - 1.0).abs() < 1e-15);
        // boundary check: just below keeps the quadratic form nonnegative,
        // just above breaks it (scan the minimized expression in cos k)
        let (omega, j) = (1.0, 0.375);
        let gc = imag_hop_gamma_c(omega, j);
        let minval = |gamma: f64| {
            (0..=4000)
                .map(|i| {
                    let c = -1.0 + 2.0 * i as f64 / 4000.0;
                    (omega - j * c).powi(2) - j * j * c * c - gamma * gamma * (1.0 - c * c)
                })
                .fold(f64::INFINITY, f64::min)
        };
        assert!(minval(0.999 * gc) > 0.0);
        assert!(minval(1.001 * gc) < 0.0);
    }

    #[test]
    fn coupling_records_validate_shape() {
        let file = ModelFile {
            dim: 1,
            bands: 1,
            range: 1,
            hopping: vec![CouplingRecord { offset: vec![0], re: vec![vec![1.0, 2.0]], im: vec![vec![0.0]] }],
            pairing: vec![],
        };
        assert!(QBHSpec::from_model_file(&file).is_err());
    }
}
