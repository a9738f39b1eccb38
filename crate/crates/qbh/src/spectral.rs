//! Spectral analysis of the Bloch dynamical matrix.
//!
//! For a model with `d` bands the momentum-space Heisenberg dynamics is
//! generated by the `2d x 2d` matrix
//!
//! ```text
//!     g(k) = [[ K(k),           Delta(k)      ],
//!             [ -Delta(-k)^*,  -K(-k)^*       ]]
//! ```
//!
//! which is pseudo-Hermitian, `g(k)^dag = tau3 g(k) tau3`, and
//! charge-conjugation symmetric, `g(k)^* = -tau1 g(-k) tau1`. Eigenvectors of
//! a diagonalizable `g(k)` with real spectrum carry a Krein signature, the
//! sign of `v^dag tau3 v`; the `d` positive-signature eigenvalues are the
//! quasiparticle (particle) bands regardless of their energy sign, and the
//! remaining `d` are the reflected hole bands. Dynamical stability holds
//! exactly when every momentum is "regular": real spectrum, diagonalizable,
//! `d` signatures of each sign. The two ways regularity can fail on the
//! stability boundary are an exceptional point (eigenvectors coalesce) and a
//! Krein collision (eigenvalue degeneracy between opposite signatures with
//! the matrix still diagonalizable); which one occurs decides whether the
//! gap closing is critical or multicritical.
//!
//! The direct Krein gap is `min_{k,m,n} |omega_m(k) + omega_n(-k)|` and the
//! indirect gap releases the momentum constraint; both vanish only at an
//! exceptional point or a Krein collision.

use serde::Serialize;

use crate::error::{QbhError, Result};
use crate::grid::BzGrid;
use crate::linalg::{self, C64, CMat, norm_sqr};
use crate::model::QBHSpec;

// ---------------------------------------------------------------------------
// Nambu metric helpers
// ---------------------------------------------------------------------------

/// `tau3 = diag(1_d, -1_d)`.
pub fn tau3(bands: usize) -> CMat {
    CMat::from_fn(2 * bands, 2 * bands, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if i < bands {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

/// `tau1 = sigma1 (x) 1_d`.
pub fn tau1(bands: usize) -> CMat {
    CMat::from_fn(2 * bands, 2 * bands, |i, j| {
        if i + bands == j || j + bands == i {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Diagonal of `tau3` as a sign vector.
pub fn tau3_signs(bands: usize) -> Vec<f64> {
    (0..2 * bands).map(|i| if i < bands { 1.0 } else { -1.0 }).collect()
}

// ---------------------------------------------------------------------------
// Bloch point
// ---------------------------------------------------------------------------

/// The dynamical matrix and its ingredients at one momentum.
#[derive(Debug, Clone)]
pub struct BlochPoint {
    pub k: Vec<f64>,
    pub hop: CMat,
    pub pair: CMat,
    pub g: CMat,
    pub h: CMat,
    bands: usize,
}

impl BlochPoint {
    pub fn bands(&self) -> usize {
        self.bands
    }
}

/// Assemble `g(k)` and `h(k) = tau3 g(k)` from the coupling maps.
pub fn eval_bloch(spec: &QBHSpec, k: &[f64]) -> BlochPoint {
    let d = spec.bands();
    let neg_k: Vec<f64> = k.iter().map(|x| -x).collect();
    let hop = spec.k_bloch(k);
    let pair = spec.delta_bloch(k);
    let hop_m = spec.k_bloch(&neg_k);
    let pair_m = spec.delta_bloch(&neg_k);
    let mut g = CMat::zeros(2 * d, 2 * d);
    let mut h = CMat::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] = hop[(i, j)];
            g[(i, j + d)] = pair[(i, j)];
            g[(i + d, j)] = -pair_m[(i, j)].conj();
            g[(i + d, j + d)] = -hop_m[(i, j)].conj();
            h[(i, j)] = hop[(i, j)];
            h[(i, j + d)] = pair[(i, j)];
            h[(i + d, j)] = pair_m[(i, j)].conj();
            h[(i + d, j + d)] = hop_m[(i, j)].conj();
        }
    }
    BlochPoint { k: k.to_vec(), hop, pair, g, h, bands: d }
}

// ---------------------------------------------------------------------------
// Pauli decomposition (single band)
// ---------------------------------------------------------------------------

/// Real coefficients of `g(k) = d0 + i d1 s1 + i d2 s2 + d3 s3` for `d = 1`.
/// `d3`/`d0` carry real/imaginary hopping, `d2`/`d1` real/imaginary pairing;
/// `d0` is odd in `k`, the others even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliDecomposition {
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl PauliDecomposition {
    /// `E^2 = d3^2 - d2^2 - d1^2`; nonnegative on dynamically stable points,
    /// with `E` half the particle-hole band separation.
    pub fn e_squared(&self) -> f64 {
        self.d3 * self.d3 - self.d2 * self.d2 - self.d1 * self.d1
    }
}

pub fn pauli_decompose(bp: &BlochPoint) -> Result<PauliDecomposition> {
    if bp.bands != 1 {
        return Err(QbhError::Unsupported(format!(
            "Pauli decomposition is defined for single-band models (d = {})",
            bp.bands
        )));
    }
    let g00 = bp.g[(0, 0)];
    let g01 = bp.g[(0, 1)];
    let g10 = bp.g[(1, 0)];
    let g11 = bp.g[(1, 1)];
    let pd = PauliDecomposition {
        d0: 0.5 * (g00 + g11).re,
        d1: 0.5 * (g01 + g10).im,
        d2: 0.5 * (g01 - g10).re,
        d3: 0.5 * (g00 - g11).re,
    };
    // reconstruction residual guards against an invalid dynamical matrix
    let scale = bp.g.max_abs().max(1.0);
    let resid = [
        (g00 - C64::new(pd.d0 + pd.d3, 0.0)).norm(),
        (g11 - C64::new(pd.d0 - pd.d3, 0.0)).norm(),
        (g01 - C64::new(pd.d2, pd.d1)).norm(),
        (g10 - C64::new(-pd.d2, pd.d1)).norm(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    if resid > 1e-12 * scale {
        return Err(QbhError::InvalidInput(format!(
            "dynamical matrix at k = {:?} is not in pseudo-Hermitian form (residual {resid:.2e})",
            bp.k
        )));
    }
    Ok(pd)
}

/// Fast single-band decomposition straight from the coupling maps. `K(k)`
/// is real (Hermitian scalar); its odd/even parts in `k` give `d0`/`d3`,
/// while the pairing scalar supplies `d2 + i d1` directly.
pub(crate) fn pauli_at(spec: &QBHSpec, k: f64) -> PauliDecomposition {
    debug_assert_eq!(spec.bands(), 1);
    debug_assert_eq!(spec.dim(), 1);
    let kp = spec.k_bloch(&[k])[(0, 0)].re;
    let km = spec.k_bloch(&[-k])[(0, 0)].re;
    let dk = spec.delta_bloch(&[k])[(0, 0)];
    PauliDecomposition {
        d0: 0.5 * (kp - km),
        d1: dk.im,
        d2: dk.re,
        d3: 0.5 * (kp + km),
    }
}

// ---------------------------------------------------------------------------
// tolerances
// ---------------------------------------------------------------------------

/// Relative tolerance ledger for the spectral classification, anchored to
/// `scale = max_k ||g(k)||_max` so verdicts do not depend on overall units.
#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub scale: f64,
    /// imaginary parts below this are treated as zero
    pub imag: f64,
    /// eigenvalue separations below this are collisions
    pub collision: f64,
    /// all of |d1|,|d2|,|d3| below this marks a Krein collision (d = 1)
    pub kc: f64,
    /// rigidity `|v^dag tau3 v| / ||v||^2` below this marks coalescence
    pub kpr: f64,
}

impl Tolerances {
    pub fn from_scale(scale: f64) -> Self {
        let s = scale.max(1e-300);
        Self { scale: s, imag: 1e-9 * s, collision: 1e-8 * s, kc: 1e-8 * s, kpr: 1e-6 }
    }

    /// Scale taken as the largest `|g(k)|` entry over a scan grid.
    pub fn for_spec_on_grid(spec: &QBHSpec, grid: &BzGrid) -> Self {
        let mut scale: f64 = 0.0;
        for k in grid.iter() {
            scale = scale.max(eval_bloch(spec, &k).g.max_abs());
        }
        Self::from_scale(scale)
    }

    pub fn for_spec(spec: &QBHSpec) -> Self {
        let n = if spec.dim() == 1 { 257 } else { 33 };
        let grid = BzGrid::new(vec![n; spec.dim()]).expect("odd default grid");
        Self::for_spec_on_grid(spec, &grid)
    }
}

// ---------------------------------------------------------------------------
// spectral points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    Regular,
    ExceptionalPoint,
    KreinCollision,
    ComplexUnstable,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Regular => "regular",
            Classification::ExceptionalPoint => "exceptional point",
            Classification::KreinCollision => "krein collision",
            Classification::ComplexUnstable => "complex spectrum",
        }
    }
}

impl std::fmt::Display for Classification {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Eigendata of `g(k)` at one momentum.
///
/// Columns of `vectors` align with `eigenvalues` and `signatures`; at a
/// regular point the first `d` columns are the particle eigenvectors
/// (signature +1, energies ascending, normalized to `v^dag tau3 v = +1`) and
/// the last `d` the holes (signature -1, normalized to -1).
#[derive(Debug, Clone)]
pub struct SpectralPoint {
    pub k: Vec<f64>,
    pub eigenvalues: Vec<C64>,
    pub vectors: CMat,
    pub signatures: Vec<i8>,
    /// particle-band energies, ascending; present only at regular points
    pub particle_bands: Option<Vec<f64>>,
    /// Krein phase rigidity per particle band (1/||beta||^2, in (0, 1]);
    /// zeros at singular points
    pub kpr: Vec<f64>,
    pub classification: Classification,
    bands: usize,
}

impl SpectralPoint {
    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn particle_vector(&self, band: usize) -> Vec<C64> {
        self.vectors.col(band)
    }

    pub fn is_regular(&self) -> bool {
        self.classification == Classification::Regular
    }
}

/// Krein phase rigidity per particle band; zeros at singular points.
pub fn kpr(sp: &SpectralPoint) -> Vec<f64> {
    sp.kpr.clone()
}

/// Diagonalize `g(k)`: closed forms for a single band, a dense solve above.
pub fn diagonalize(bp: &BlochPoint, tol: &Tolerances) -> Result<SpectralPoint> {
    if bp.bands == 1 {
        diagonalize_closed_1band(bp, tol)
    } else {
        diagonalize_dense(bp, tol)
    }
}

fn diagonalize_closed_1band(bp: &BlochPoint, tol: &Tolerances) -> Result<SpectralPoint> {
    let pd = pauli_decompose(bp)?;
    let (d0, d1, d2, d3) = (pd.d0, pd.d1, pd.d2, pd.d3);
    let e2 = pd.e_squared();
    // E^2 cancels catastrophically at a gap closing; anything within the
    // rounding floor of the squared inputs is treated as exactly zero, else
    // square-rooting would inflate roundoff past the imaginary tolerance
    let e2_floor = 32.0 * f64::EPSILON * (d3 * d3 + d2 * d2 + d1 * d1);

    if e2 < -(e2_floor.max(tol.imag * tol.imag)) {
        // complex-conjugate pair: exponential instability
        let w = (-e2).sqrt();
        let lam = [C64::new(d0, w), C64::new(d0, -w)];
        let mut vectors = CMat::zeros(2, 2);
        for (j, l) in lam.iter().enumerate() {
            let mut v = eigvec_2x2(&bp.g, *l);
            linalg::phase_canonicalize(&mut v);
            vectors.set_col(j, &v);
        }
        return Ok(SpectralPoint {
            k: bp.k.clone(),
            eigenvalues: lam.to_vec(),
            vectors,
            signatures: vec![0, 0],
            particle_bands: None,
            kpr: vec![0.0],
            classification: Classification::ComplexUnstable,
            bands: 1,
        });
    }

    let en = e2.max(0.0).sqrt();
    if 2.0 * en < tol.collision {
        // particle and hole eigenvalues meet
        let degenerate = C64::new(d0, 0.0);
        if d1.abs().max(d2.abs()).max(d3.abs()) < tol.kc {
            // g(k) is (close to) d0 * identity: diagonalizable degeneracy of
            // opposite signatures
            return Ok(SpectralPoint {
                k: bp.k.clone(),
                eigenvalues: vec![degenerate, degenerate],
                vectors: CMat::identity(2),
                signatures: vec![1, -1],
                particle_bands: None,
                kpr: vec![0.0],
                classification: Classification::KreinCollision,
                bands: 1,
            });
        }
        // coalescing eigenvectors
        let mut v1 = vec![C64::new(d3, 0.0), C64::new(-d2, d1)];
        let mut v2 = vec![C64::new(-d2, -d1), C64::new(d3, 0.0)];
        for v in [&mut v1, &mut v2] {
            let n = norm_sqr(v).sqrt();
            if n > 0.0 {
                v.iter_mut().for_each(|z| *z /= n);
            }
            linalg::phase_canonicalize(v);
        }
        let mut vectors = CMat::zeros(2, 2);
        vectors.set_col(0, &v1);
        vectors.set_col(1, &v2);
        return Ok(SpectralPoint {
            k: bp.k.clone(),
            eigenvalues: vec![degenerate, degenerate],
            vectors,
            signatures: vec![0, 0],
            particle_bands: None,
            kpr: vec![0.0],
            classification: Classification::ExceptionalPoint,
            bands: 1,
        });
    }

    // regular point; d3 cannot vanish here since |d3| >= E > 0
    let s3 = if d3 > 0.0 { 1.0 } else { -1.0 };
    // cancellation-free d3 + E for d3 < 0
    let d3_plus_en =
        if d3 > 0.0 { d3 + en } else { -(d1 * d1 + d2 * d2) / (en - d3) };
    let (mut beta_p, mut beta_m, omega_p, lam_h);
    if s3 > 0.0 {
        let nsq = 2.0 * en * d3_plus_en;
        let n = nsq.sqrt();
        beta_p = vec![C64::new(d3_plus_en / n, 0.0), C64::new(-d2 / n, d1 / n)];
        beta_m = vec![C64::new(-d2 / n, -d1 / n), C64::new(d3_plus_en / n, 0.0)];
        omega_p = d0 + en;
        lam_h = d0 - en;
    } else {
        let nsq = -2.0 * en * d3_plus_en;
        let n = nsq.sqrt();
        beta_p = vec![C64::new(-d2 / n, -d1 / n), C64::new(d3_plus_en / n, 0.0)];
        beta_m = vec![C64::new(d3_plus_en / n, 0.0), C64::new(-d2 / n, d1 / n)];
        omega_p = d0 - en;
        lam_h = d0 + en;
    }
    linalg::phase_canonicalize(&mut beta_p);
    linalg::phase_canonicalize(&mut beta_m);
    let rigidity = 1.0 / norm_sqr(&beta_p);
    let mut vectors = CMat::zeros(2, 2);
    vectors.set_col(0, &beta_p);
    vectors.set_col(1, &beta_m);
    Ok(SpectralPoint {
        k: bp.k.clone(),
        eigenvalues: vec![C64::new(omega_p, 0.0), C64::new(lam_h, 0.0)],
        vectors,
        signatures: vec![1, -1],
        particle_bands: Some(vec![omega_p]),
        kpr: vec![rigidity],
        classification: Classification::Regular,
        bands: 1,
    })
}

fn eigvec_2x2(g: &CMat, lam: C64) -> Vec<C64> {
    let a = g[(0, 0)] - lam;
    let b = g[(0, 1)];
    let c = g[(1, 0)];
    let d = g[(1, 1)] - lam;
    // rows of (g - lam) are both orthogonal to the eigenvector; use the larger
    let (v0, v1) = if a.norm() + b.norm() >= c.norm() + d.norm() {
        (b, -a)
    } else {
        (d, -c)
    };
    let n = (v0.norm_sqr() + v1.norm_sqr()).sqrt();
    if n == 0.0 {
        vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    } else {
        vec![v0 / n, v1 / n]
    }
}

/// Dense route: backend eigendecomposition, metric normalization, signature
/// bookkeeping. Used for `d > 1` and as an independent cross-check of the
/// single-band closed forms.
pub fn diagonalize_dense(bp: &BlochPoint, tol: &Tolerances) -> Result<SpectralPoint> {
    let d = bp.bands;
    let (values, mut vectors) = linalg::eig(&bp.g).map_err(|_| QbhError::EigenFailure {
        k: bp.k.clone(),
    })?;
    let signs = tau3_signs(d);
    let signatures = linalg::normalize_metric_basis(
        &values,
        &mut vectors,
        &signs,
        tol.imag,
        tol.collision,
        tol.kpr,
    );

    let max_im = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if max_im > tol.imag {
        return Ok(SpectralPoint {
            k: bp.k.clone(),
            eigenvalues: values,
            vectors,
            signatures,
            particle_bands: None,
            kpr: vec![0.0; d],
            classification: Classification::ComplexUnstable,
            bands: d,
        });
    }

    // collision scan over non-same-signature pairs
    let n = values.len();
    let mut saw_kc = false;
    let mut saw_ep = false;
    for i in 0..n {
        for j in (i + 1)..n {
            if (values[i] - values[j]).norm() < tol.collision {
                let si = signatures[i];
                let sj = signatures[j];
                if si == 0 || sj == 0 {
                    saw_ep = true;
                } else if si != sj {
                    saw_kc = true;
                }
            }
        }
    }
    if saw_ep || saw_kc {
        let classification = if saw_ep {
            Classification::ExceptionalPoint
        } else {
            Classification::KreinCollision
        };
        return Ok(SpectralPoint {
            k: bp.k.clone(),
            eigenvalues: values,
            vectors,
            signatures,
            particle_bands: None,
            kpr: vec![0.0; d],
            classification,
            bands: d,
        });
    }

    let plus: Vec<usize> = (0..n).filter(|&i| signatures[i] == 1).collect();
    let minus: Vec<usize> = (0..n).filter(|&i| signatures[i] == -1).collect();
    if plus.len() != d || minus.len() != d {
        return Err(QbhError::EigenFailure { k: bp.k.clone() });
    }

    let sort_key = |&i: &usize| (values[i].re, vectors[(0, i)].re);
    let mut plus_sorted = plus;
    plus_sorted.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).unwrap());
    let mut minus_sorted = minus;
    minus_sorted.sort_by(|a, b| sort_key(a).partial_cmp(&sort_key(b)).unwrap());

    let order: Vec<usize> = plus_sorted.iter().chain(minus_sorted.iter()).cloned().collect();
    let eigenvalues: Vec<C64> = order.iter().map(|&i| values[i]).collect();
    let mut out_vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        out_vectors.set_col(col, &vectors.col(i));
    }
    let out_signatures: Vec<i8> = order.iter().map(|&i| signatures[i]).collect();
    let particle: Vec<f64> = (0..d).map(|b| eigenvalues[b].re).collect();
    let kpr: Vec<f64> = (0..d).map(|b| 1.0 / norm_sqr(&out_vectors.col(b))).collect();

    Ok(SpectralPoint {
        k: bp.k.clone(),
        eigenvalues,
        vectors: out_vectors,
        signatures: out_signatures,
        particle_bands: Some(particle),
        kpr,
        classification: Classification::Regular,
        bands: d,
    })
}

/// Classification of `g(k)` at a single momentum.
pub fn classify_at(spec: &QBHSpec, k: &[f64], tol: &Tolerances) -> Result<Classification> {
    Ok(diagonalize(&eval_bloch(spec, k), tol)?.classification)
}

// ---------------------------------------------------------------------------
// Krein gaps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct KreinGapReport {
    pub direct: f64,
    pub indirect: f64,
    pub argmin_k: Vec<f64>,
    /// false when an exceptional point or complex spectrum was hit on the
    /// grid (gaps are then reported as zero); a Krein collision also zeroes
    /// the gaps but leaves the dynamics stable
    pub dynamically_stable: bool,
}

struct GridSweep {
    tol: Tolerances,
    points: Vec<Vec<f64>>,
    spectra: Vec<SpectralPoint>,
}

fn sweep_grid(spec: &QBHSpec, grid: &BzGrid) -> Result<GridSweep> {
    let mut blochs = Vec::with_capacity(grid.len());
    let mut scale: f64 = 0.0;
    for k in grid.iter() {
        let bp = eval_bloch(spec, &k);
        scale = scale.max(bp.g.max_abs());
        blochs.push(bp);
    }
    let tol = Tolerances::from_scale(scale);
    let mut spectra = Vec::with_capacity(blochs.len());
    for bp in &blochs {
        spectra.push(diagonalize(bp, &tol)?);
    }
    Ok(GridSweep { tol, points: blochs.iter().map(|b| b.k.clone()).collect(), spectra })
}

fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd { (c, fc) } else { (d, fd) }
}

/// Direct and indirect Krein gaps over a grid, with golden-section
/// refinement of the direct minimizer inside its grid cell.
pub fn krein_gap(spec: &QBHSpec, grid: &BzGrid) -> Result<KreinGapReport> {
    let sweep = sweep_grid(spec, grid)?;
    krein_gap_from_sweep(spec, grid, &sweep)
}

fn krein_gap_from_sweep(
    spec: &QBHSpec,
    grid: &BzGrid,
    sweep: &GridSweep,
) -> Result<KreinGapReport> {
    // any singular point closes the gap exactly
    for (i, sp) in sweep.spectra.iter().enumerate() {
        if !sp.is_regular() {
            let unstable = matches!(
                sp.classification,
                Classification::ExceptionalPoint | Classification::ComplexUnstable
            );
            return Ok(KreinGapReport {
                direct: 0.0,
                indirect: 0.0,
                argmin_k: sweep.points[i].clone(),
                dynamically_stable: !unstable,
            });
        }
    }

    let tol = sweep.tol;
    let bands_at = |k: &[f64]| -> Vec<f64> {
        match diagonalize(&eval_bloch(spec, k), &tol) {
            Ok(sp) if sp.is_regular() => sp.particle_bands.unwrap(),
            _ => vec![0.0; spec.bands()],
        }
    };
    let f_direct = |k: &[f64]| -> f64 {
        let neg: Vec<f64> = k.iter().map(|x| -x).collect();
        let b1 = bands_at(k);
        let b2 = bands_at(&neg);
        let mut m = f64::INFINITY;
        for x in &b1 {
            for y in &b2 {
                m = m.min((x + y).abs());
            }
        }
        m
    };

    // grid minimum of the direct gap function
    let mut best = f64::INFINITY;
    let mut best_i = 0usize;
    for i in 0..sweep.spectra.len() {
        let b1 = sweep.spectra[i].particle_bands.as_ref().unwrap();
        let b2 = sweep.spectra[grid.mirror(i)].particle_bands.as_ref().unwrap();
        for x in b1 {
            for y in b2 {
                let v = (x + y).abs();
                if v < best {
                    best = v;
                    best_i = i;
                }
            }
        }
    }

    // per-axis golden-section refinement inside the surrounding cells
    let mut argmin = sweep.points[best_i].clone();
    let mut direct = best;
    for _pass in 0..2 {
        for axis in 0..grid.dim() {
            let h = grid.axis_spacing(axis);
            let base = argmin.clone();
            let eval = |x: f64| {
                let mut k = base.clone();
                k[axis] = x;
                f_direct(&k)
            };
            let (x, fx) = golden_min(eval, base[axis] - h, base[axis] + h, 60);
            if fx < direct {
                direct = fx;
                argmin[axis] = x;
            }
        }
    }

    // indirect gap from the sampled band values (momenta decoupled)
    let mut all: Vec<(f64, usize)> = Vec::new();
    for (i, sp) in sweep.spectra.iter().enumerate() {
        for &w in sp.particle_bands.as_ref().unwrap() {
            all.push((w, i));
        }
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let vals: Vec<f64> = all.iter().map(|p| p.0).collect();
    let mut indirect = f64::INFINITY;
    let mut pair = (0usize, 0usize);
    for (idx, &(v, gi)) in all.iter().enumerate() {
        // nearest value to -v
        let target = -v;
        let pos = vals.partition_point(|&x| x < target);
        for q in pos.saturating_sub(1)..(pos + 2).min(vals.len()) {
            if q == idx && vals.len() > 1 {
                // same sample is allowed only as a genuine |2 omega|
            }
            let cand = (v + vals[q]).abs();
            if cand < indirect {
                indirect = cand;
                pair = (gi, all[q].1);
            }
        }
    }

    // coordinate refinement of the decoupled pair
    let f_pair = |ka: &[f64], kb: &[f64]| -> f64 {
        let b1 = bands_at(ka);
        let b2 = bands_at(kb);
        let mut m = f64::INFINITY;
        for x in &b1 {
            for y in &b2 {
                m = m.min((x + y).abs());
            }
        }
        m
    };
    let mut ka = sweep.points[pair.0].clone();
    let mut kb = sweep.points[pair.1].clone();
    for _round in 0..3 {
        for axis in 0..grid.dim() {
            let h = grid.axis_spacing(axis);
            let base = ka.clone();
            let other = kb.clone();
            let eval = |x: f64| {
                let mut k = base.clone();
                k[axis] = x;
                f_pair(&k, &other)
            };
            let (x, fx) = golden_min(eval, base[axis] - h, base[axis] + h, 40);
            if fx < indirect {
                indirect = fx;
                ka[axis] = x;
            }
        }
        for axis in 0..grid.dim() {
            let h = grid.axis_spacing(axis);
            let base = kb.clone();
            let other = ka.clone();
            let eval = |x: f64| {
                let mut k = base.clone();
                k[axis] = x;
                f_pair(&other, &k)
            };
            let (x, fx) = golden_min(eval, base[axis] - h, base[axis] + h, 40);
            if fx < indirect {
                indirect = fx;
                kb[axis] = x;
            }
        }
    }

    let indirect = indirect.min(direct);
    Ok(KreinGapReport { direct, indirect, argmin_k: argmin, dynamically_stable: true })
}

// ---------------------------------------------------------------------------
// stability report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThermoVerdict {
    BoundedBelow,
    BoundedAbove,
    Unbounded,
}

impl std::fmt::Display for ThermoVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ThermoVerdict::BoundedBelow => "bounded below",
            ThermoVerdict::BoundedAbove => "bounded above",
            ThermoVerdict::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub dynamically_stable: bool,
    pub thermo: ThermoVerdict,
    pub krein_gap_direct: f64,
    pub krein_gap_indirect: f64,
    pub gap_argmin_k: Vec<f64>,
    pub singular_momenta: Vec<(Vec<f64>, Classification)>,
}

/// Full stability verdict over a grid: dynamical stability from spectral
/// reality plus diagonalizability, the energy-boundedness verdict from the
/// sign structure of `tau3 g(k)`, the Krein gaps, and every singular
/// momentum with its classification.
pub fn stability_report(spec: &QBHSpec, grid: &BzGrid) -> Result<StabilityReport> {
    let sweep = sweep_grid(spec, grid)?;
    let mut singular = Vec::new();
    let mut dynamically_stable = true;
    for (i, sp) in sweep.spectra.iter().enumerate() {
        match sp.classification {
            Classification::Regular => {}
            c => {
                if matches!(
                    c,
                    Classification::ExceptionalPoint | Classification::ComplexUnstable
                ) {
                    dynamically_stable = false;
                }
                singular.push((sweep.points[i].clone(), c));
            }
        }
    }

    let thermo = thermo_verdict(spec, grid, &sweep);
    let gaps = krein_gap_from_sweep(spec, grid, &sweep)?;

    Ok(StabilityReport {
        dynamically_stable,
        thermo,
        krein_gap_direct: gaps.direct,
        krein_gap_indirect: gaps.indirect,
        gap_argmin_k: gaps.argmin_k,
        singular_momenta: singular,
    })
}

fn thermo_verdict(spec: &QBHSpec, grid: &BzGrid, sweep: &GridSweep) -> ThermoVerdict {
    let tol = 1e-10 * sweep.tol.scale;
    if spec.bands() == 1 {
        // boundedness below needs d3 >= 0 and E^2 >= d0^2 everywhere (above:
        // d3 <= 0 with the same margin); the margin scales like scale^2
        let tol_margin = 1e-10 * sweep.tol.scale * sweep.tol.scale;
        let mut min_d3 = f64::INFINITY;
        let mut max_d3 = f64::NEG_INFINITY;
        let mut min_margin = f64::INFINITY;
        for k in grid.iter() {
            let bp = eval_bloch(spec, &k);
            let pd = pauli_decompose(&bp).expect("single-band decomposition");
            min_d3 = min_d3.min(pd.d3);
            max_d3 = max_d3.max(pd.d3);
            min_margin = min_margin.min(pd.e_squared() - pd.d0 * pd.d0);
        }
        if min_margin >= -tol_margin && min_d3 >= -tol {
            ThermoVerdict::BoundedBelow
        } else if min_margin >= -tol_margin && max_d3 <= tol {
            ThermoVerdict::BoundedAbove
        } else {
            ThermoVerdict::Unbounded
        }
    } else {
        let mut min_eig = f64::INFINITY;
        let mut max_eig = f64::NEG_INFINITY;
        for k in grid.iter() {
            let bp = eval_bloch(spec, &k);
            let evs = linalg::eigh_complex_values(&bp.h);
            min_eig = min_eig.min(*evs.first().unwrap());
            max_eig = max_eig.max(*evs.last().unwrap());
        }
        if min_eig >= -tol {
            ThermoVerdict::BoundedBelow
        } else if max_eig <= tol {
            ThermoVerdict::BoundedAbove
        } else {
            ThermoVerdict::Unbounded
        }
    }
}

// ---------------------------------------------------------------------------
// band structure export
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct BandPoint {
    pub k: Vec<f64>,
    pub band: usize,
    pub re_omega: f64,
    pub im_omega: f64,
    pub signature: i8,
    pub kpr: f64,
}

/// Rows for the band-structure export: one entry per momentum and eigenvalue
/// (particles first), with signature and phase rigidity. The rigidity is
/// `|v^dag tau3 v| / ||v||^2`, which reduces to `1/||v||^2` for
/// metric-normalized eigenvectors and vanishes on coalescing ones.
pub fn band_structure(spec: &QBHSpec, grid: &BzGrid) -> Result<Vec<BandPoint>> {
    let sweep = sweep_grid(spec, grid)?;
    let signs = tau3_signs(spec.bands());
    let mut rows = Vec::with_capacity(grid.len() * 2 * spec.bands());
    for (i, sp) in sweep.spectra.iter().enumerate() {
        for (b, lam) in sp.eigenvalues.iter().enumerate() {
            let v = sp.vectors.col(b);
            let rigidity = linalg::metric_dot(&signs, &v, &v).re.abs() / norm_sqr(&v);
            rows.push(BandPoint {
                k: sweep.points[i].clone(),
                band: b,
                re_omega: lam.re,
                im_omega: lam.im,
                signature: sp.signatures[b],
                kpr: rigidity,
            });
        }
    }
    Ok(rows)
}
