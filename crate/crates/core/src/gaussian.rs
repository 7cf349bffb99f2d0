//! Gaussian-state covariance matrices and their information content.
//!
//! A covariance matrix of `n` modes is stored as the `2n × 2n` block matrix
//! `(Q, R; Rᵀ, P)`: indices `0..n` are field quadratures and `n..2n` their
//! conjugate momenta, matching `Ω = (0, I; −I, 0)`. Entropies are in nats.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex, OnceLock};

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::geometry::ModeBasis;
use crate::physics::{bose_einstein, DerivedParams};
use crate::regions::RegionMask;

/// Symplectic eigenvalues this far below 1/2 are clamped to 1/2.
pub const NU_CLAMP_TOL: f64 = 1e-9;
/// Symplectic eigenvalues further below 1/2 than this are rejected.
pub const NU_FAIL_TOL: f64 = 1e-6;

const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Labelling {
    MomentumSpace,
    RealSpace,
}

impl Labelling {
    pub fn name(&self) -> &'static str {
        match self {
            Labelling::MomentumSpace => "MomentumSpace",
            Labelling::RealSpace => "RealSpace",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "MomentumSpace" => Ok(Labelling::MomentumSpace),
            "RealSpace" => Ok(Labelling::RealSpace),
            other => Err(Error::Parse(format!("unknown labelling {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    data: Mat<f64>,
    labelling: Labelling,
    basis: Option<Arc<ModeBasis>>,
}

impl CovarianceMatrix {
    /// Wraps a `2n × 2n` matrix, symmetrising away round-off.
    pub fn new(data: Mat<f64>, labelling: Labelling) -> Result<Self> {
        let dim = data.nrows();
        if dim != data.ncols() || dim % 2 != 0 || dim == 0 {
            return Err(Error::Domain(format!("covariance must be square with even size, got {}x{}", dim, data.ncols())));
        }
        let mut scale = 0.0f64;
        let mut asym = 0.0f64;
        for j in 0..dim {
            for i in 0..dim {
                let v = data[(i, j)];
                if !v.is_finite() {
                    return Err(Error::NonFinite("covariance matrix"));
                }
                scale = scale.max(v.abs());
                asym = asym.max((v - data[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::Domain(format!("covariance not symmetric: max asymmetry {asym:e} at scale {scale:e}")));
        }
        let sym = Mat::from_fn(dim, dim, |i, j| 0.5 * (data[(i, j)] + data[(j, i)]));
        Ok(CovarianceMatrix { data: sym, labelling, basis: None })
    }

    pub fn from_blocks(q: MatRef<'_, f64>, r: MatRef<'_, f64>, p: MatRef<'_, f64>, labelling: Labelling) -> Result<Self> {
        let n = q.nrows();
        for (name, m) in [("R", r), ("P", p)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Domain(format!("block {name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols())));
            }
        }
        let data = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => q[(i, j)],
            (true, false) => r[(i, j - n)],
            (false, true) => r[(j, i - n)],
            (false, false) => p[(i - n, j - n)],
        });
        CovarianceMatrix::new(data, labelling)
    }

    /// Vacuum `Γ = I/2` on `n` modes.
    pub fn vacuum(n: usize, labelling: Labelling) -> Self {
        let data = Mat::from_fn(2 * n, 2 * n, |i, j| if i == j { 0.5 } else { 0.0 });
        CovarianceMatrix { data, labelling, basis: None }
    }

    pub fn with_basis(mut self, basis: Arc<ModeBasis>) -> Self {
        self.basis = Some(basis);
        self
    }

    pub fn basis(&self) -> Option<&Arc<ModeBasis>> {
        self.basis.as_ref()
    }

    /// Number of modes or pixels.
    pub fn n(&self) -> usize {
        self.data.nrows() / 2
    }

    pub fn labelling(&self) -> Labelling {
        self.labelling
    }

    pub fn data(&self) -> MatRef<'_, f64> {
        self.data.as_ref()
    }

    pub fn q(&self) -> MatRef<'_, f64> {
        let n = self.n();
        self.data.as_ref().submatrix(0, 0, n, n)
    }

    pub fn r(&self) -> MatRef<'_, f64> {
        let n = self.n();
        self.data.as_ref().submatrix(0, n, n, n)
    }

    pub fn p(&self) -> MatRef<'_, f64> {
        let n = self.n();
        self.data.as_ref().submatrix(n, n, n, n)
    }

    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "n,labelling")?;
        writeln!(out, "{},{}", self.n(), self.labelling.name())?;
        let dim = self.data.nrows();
        for i in 0..dim {
            let row: Vec<String> = (0..dim).map(|j| format!("{:e}", self.data[(i, j)])).collect();
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = || -> Result<String> {
            lines.next().ok_or_else(|| Error::Parse("unexpected end of covariance CSV".into()))?.map_err(Error::from)
        };
        let header = next()?;
        if header.trim() != "n,labelling" {
            return Err(Error::Parse(format!("bad covariance header {header:?}")));
        }
        let meta = next()?;
        let (n, lab) = meta.split_once(',').ok_or_else(|| Error::Parse(format!("bad metadata line {meta:?}")))?;
        let n: usize = n.trim().parse().map_err(|e| Error::Parse(format!("n: {e}")))?;
        let labelling = Labelling::parse(lab)?;
        let dim = 2 * n;
        let mut data = Mat::<f64>::zeros(dim, dim);
        for i in 0..dim {
            let line = next()?;
            let vals: Vec<&str> = line.split(',').collect();
            if vals.len() != dim {
                return Err(Error::Parse(format!("row {i} has {} entries, expected {dim}", vals.len())));
            }
            for (j, v) in vals.iter().enumerate() {
                data[(i, j)] = v.trim().parse().map_err(|e| Error::Parse(format!("row {i} col {j}: {e}")))?;
            }
        }
        CovarianceMatrix::new(data, labelling)
    }
}

/// Thermal momentum-space covariance: `Q̃ = P̃ = diag(n_T(ω_m) + 1/2)`, `R̃ = 0`.
pub fn thermal_momentum_covariance(basis: &Arc<ModeBasis>, t: f64) -> Result<CovarianceMatrix> {
    let n = basis.n_modes();
    let mut data = Mat::<f64>::zeros(2 * n, 2 * n);
    for (m, mode) in basis.modes.iter().enumerate() {
        let v = bose_einstein(mode.omega, t)? + 0.5;
        data[(m, m)] = v;
        data[(n + m, n + m)] = v;
    }
    Ok(CovarianceMatrix { data, labelling: Labelling::MomentumSpace, basis: Some(basis.clone()) })
}

/// Per-mode prefactors `(κ^φ, κ^η) = (sqrt(c/(Kω)), sqrt(Kω/c))`.
pub fn mode_prefactors(basis: &ModeBasis, d: &DerivedParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = d.c3;
    let k = d.luttinger_k;
    let mut dphi = Vec::with_capacity(basis.n_modes());
    let mut deta = Vec::with_capacity(basis.n_modes());
    for m in &basis.modes {
        let a = (c / (k * m.omega)).sqrt();
        let b = (k * m.omega / c).sqrt();
        if !a.is_finite() || !b.is_finite() || a == 0.0 {
            return Err(Error::NonFinite("mode prefactor (zero mode present?)"));
        }
        dphi.push(a);
        deta.push(b);
    }
    Ok((dphi, deta))
}

fn check_basis_dim(gamma: &CovarianceMatrix, expected: usize) -> Result<()> {
    if gamma.n() != expected {
        return Err(Error::DimensionMismatch { expected, got: gamma.n() });
    }
    Ok(())
}

/// `Gᵀ diag(l) X diag(r) G`.
fn sandwich(g: MatRef<'_, f64>, left: &[f64], x: MatRef<'_, f64>, right: &[f64]) -> Mat<f64> {
    let scaled = Mat::from_fn(x.nrows(), x.ncols(), |i, j| left[i] * x[(i, j)] * right[j]);
    g.transpose() * (&scaled * g)
}

/// Momentum-space covariance → pixel-space covariance on the basis grid.
///
/// Directions of pixel space not spanned by the retained modes (the excluded
/// Neumann zero mode) are filled with a pure, uncorrelated placeholder state
/// at the lowest retained frequency so the result obeys canonical commutators.
/// The placeholder carries no entropy of its own.
pub fn to_real_space(gamma: &CovarianceMatrix, basis: &ModeBasis, d: &DerivedParams) -> Result<CovarianceMatrix> {
    if gamma.labelling != Labelling::MomentumSpace {
        return Err(Error::Labelling("MomentumSpace"));
    }
    check_basis_dim(gamma, basis.n_modes())?;
    let (dphi, deta) = mode_prefactors(basis, d)?;
    let g = basis.g.as_ref();
    let mut q = sandwich(g, &dphi, gamma.q(), &dphi);
    let mut p = sandwich(g, &deta, gamma.p(), &deta);
    let r = sandwich(g, &dphi, gamma.r(), &deta);

    let n_pix = basis.n_pixels();
    if basis.n_modes() < n_pix {
        let omega_ref = basis.modes.iter().map(|m| m.omega).fold(f64::INFINITY, f64::min);
        let qz = d.c3 / (2.0 * d.luttinger_k * omega_ref);
        let pz = d.luttinger_k * omega_ref / (2.0 * d.c3);
        let gtg = g.transpose() * g;
        for j in 0..n_pix {
            for i in 0..n_pix {
                let proj = if i == j { 1.0 } else { 0.0 } - gtg[(i, j)];
                q[(i, j)] += qz * proj;
                p[(i, j)] += pz * proj;
            }
        }
    }
    CovarianceMatrix::from_blocks(q.as_ref(), r.as_ref(), p.as_ref(), Labelling::RealSpace)
}

/// Inverse of [`to_real_space`] on the retained-mode span.
pub fn to_momentum_space(gamma: &CovarianceMatrix, basis: &Arc<ModeBasis>, d: &DerivedParams) -> Result<CovarianceMatrix> {
    if gamma.labelling != Labelling::RealSpace {
        return Err(Error::Labelling("RealSpace"));
    }
    check_basis_dim(gamma, basis.n_pixels())?;
    let (dphi, deta) = mode_prefactors(basis, d)?;
    let inv_phi: Vec<f64> = dphi.iter().map(|v| 1.0 / v).collect();
    let inv_eta: Vec<f64> = deta.iter().map(|v| 1.0 / v).collect();
    let g = basis.g.as_ref();
    let project = |x: MatRef<'_, f64>, l: &[f64], r: &[f64]| {
        let y = g * (x * g.transpose());
        Mat::from_fn(y.nrows(), y.ncols(), |i, j| l[i] * y[(i, j)] * r[j])
    };
    let q = project(gamma.q(), &inv_phi, &inv_phi);
    let p = project(gamma.p(), &inv_eta, &inv_eta);
    let r = project(gamma.r(), &inv_phi, &inv_eta);
    Ok(CovarianceMatrix::from_blocks(q.as_ref(), r.as_ref(), p.as_ref(), Labelling::MomentumSpace)?.with_basis(basis.clone()))
}

/// Positive symplectic eigenvalues, sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticSpectrum {
    pub values: Vec<f64>,
}

impl SymplecticSpectrum {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(f64::INFINITY)
    }

    pub fn entropy(&self) -> f64 {
        self.values.iter().map(|&nu| entropy_term(nu)).sum()
    }
}

/// `(ν+½)ln(ν+½) − (ν−½)ln(ν−½)`, evaluated without cancellation at large ν.
pub fn entropy_term(nu: f64) -> f64 {
    let a = nu + 0.5;
    let b = nu - 0.5;
    if b <= 0.0 {
        a * a.ln()
    } else if b < 1.0 {
        a * a.ln() - b * b.ln()
    } else {
        b.ln() + a * (1.0 / b).ln_1p()
    }
}

/// `ΩΓ` after a scalar symplectic rescaling that equalises the block traces.
fn omega_gamma(gamma: &CovarianceMatrix) -> Result<Mat<f64>> {
    let n = gamma.n();
    let (q, r, p) = (gamma.q(), gamma.r(), gamma.p());
    let tr_q: f64 = (0..n).map(|i| q[(i, i)]).sum();
    let tr_p: f64 = (0..n).map(|i| p[(i, i)]).sum();
    if !(tr_q > 0.0 && tr_p > 0.0) {
        return Err(Error::Unphysical { nu: 0.0 });
    }
    let s2 = (tr_p / tr_q).sqrt();
    Ok(Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => r[(j, i)],
        (true, false) => p[(i, j - n)] / s2,
        (false, true) => -q[(i - n, j)] * s2,
        (false, false) => -r[(i - n, j - n)],
    }))
}

/// Pairs up a sorted list of `2n` doubled values and applies the clamp/fail rule.
fn finish_spectrum(mut doubled: Vec<f64>) -> Result<SymplecticSpectrum> {
    doubled.sort_by(f64::total_cmp);
    let mut values: Vec<f64> = doubled.chunks(2).map(|c| 0.5 * (c[0] + c[c.len() - 1])).collect();
    for nu in values.iter_mut() {
        if !nu.is_finite() {
            return Err(Error::NonFinite("symplectic eigenvalue"));
        }
        if *nu < 0.5 - NU_FAIL_TOL {
            return Err(Error::Unphysical { nu: *nu });
        }
        if *nu < 0.5 && *nu >= 0.5 - NU_CLAMP_TOL {
            *nu = 0.5;
        }
    }
    Ok(SymplecticSpectrum { values })
}

/// Symplectic spectrum from the eigenvalues `±iν` of the real matrix `ΩΓ`.
pub fn symplectic_spectrum(gamma: &CovarianceMatrix) -> Result<SymplecticSpectrum> {
    let m = omega_gamma(gamma)?;
    let eig = m.eigenvalues().map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    finish_spectrum(eig.iter().map(|z| z.im.abs()).collect())
}

/// Cross-check route: `ν² ` are the eigenvalues of `−(ΩΓ)²`.
pub fn symplectic_spectrum_squared(gamma: &CovarianceMatrix) -> Result<SymplecticSpectrum> {
    let m = omega_gamma(gamma)?;
    let neg_sq = -(&m * &m);
    let eig = neg_sq.eigenvalues().map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    finish_spectrum(eig.iter().map(|z| z.re.max(0.0).sqrt()).collect())
}

pub fn von_neumann_entropy(gamma: &CovarianceMatrix) -> Result<f64> {
    Ok(symplectic_spectrum(gamma)?.entropy())
}

/// Covariance of the sub-system made of the given mode/pixel indices.
pub fn restrict_indices(gamma: &CovarianceMatrix, idx: &[usize]) -> Result<CovarianceMatrix> {
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = gamma.n();
    if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad + 1 });
    }
    let k = idx.len();
    let full = |i: usize| if i < k { idx[i] } else { n + idx[i - k] };
    let data = Mat::from_fn(2 * k, 2 * k, |i, j| gamma.data[(full(i), full(j))]);
    Ok(CovarianceMatrix { data, labelling: gamma.labelling, basis: None })
}

fn check_mask(gamma: &CovarianceMatrix, mask: &RegionMask) -> Result<()> {
    if gamma.labelling != Labelling::RealSpace {
        return Err(Error::Labelling("RealSpace"));
    }
    if mask.grid().n_pixels() != gamma.n() {
        return Err(Error::DimensionMismatch { expected: gamma.n(), got: mask.grid().n_pixels() });
    }
    Ok(())
}

/// Partial trace onto the pixels of `mask`.
pub fn restrict(gamma: &CovarianceMatrix, mask: &RegionMask) -> Result<CovarianceMatrix> {
    check_mask(gamma, mask)?;
    restrict_indices(gamma, &mask.indices())
}

fn combine_mi(s_a: f64, s_b: f64, s_ab: f64) -> Result<f64> {
    let mi = s_a + s_b - s_ab;
    let slack = 1e-8 * (s_a + s_b).abs().max(1.0);
    if mi < -slack {
        return Err(Error::Domain(format!("negative mutual information {mi:e} (S_A={s_a}, S_B={s_b}, S_AB={s_ab})")));
    }
    Ok(mi.max(0.0))
}

fn disjoint_union(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let mut all: Vec<usize> = a.iter().chain(b).copied().collect();
    all.sort_unstable();
    let before = all.len();
    all.dedup();
    if all.len() != before {
        return Err(Error::Overlap(before - all.len()));
    }
    Ok(all)
}

/// `S(A) + S(B) − S(A∪B)` over index sets (modes or pixels).
pub fn mutual_information_indices(gamma: &CovarianceMatrix, a: &[usize], b: &[usize]) -> Result<f64> {
    EntropyCache::new(gamma).mutual_information(a, b)
}

pub fn mutual_information(gamma: &CovarianceMatrix, a: &RegionMask, b: &RegionMask) -> Result<f64> {
    check_mask(gamma, a)?;
    check_mask(gamma, b)?;
    mutual_information_indices(gamma, &a.indices(), &b.indices())
}

/// Memoised sub-system entropies over one shared covariance matrix.
///
/// Safe to use from several threads; the whole-system entropy is computed at
/// most once.
pub struct EntropyCache<'a> {
    gamma: &'a CovarianceMatrix,
    total: OnceLock<f64>,
    memo: Mutex<HashMap<Vec<usize>, f64>>,
}

impl<'a> EntropyCache<'a> {
    pub fn new(gamma: &'a CovarianceMatrix) -> Self {
        EntropyCache { gamma, total: OnceLock::new(), memo: Mutex::new(HashMap::new()) }
    }

    pub fn gamma(&self) -> &CovarianceMatrix {
        self.gamma
    }

    pub fn total_entropy(&self) -> Result<f64> {
        if let Some(s) = self.total.get() {
            return Ok(*s);
        }
        let s = von_neumann_entropy(self.gamma)?;
        Ok(*self.total.get_or_init(|| s))
    }

    /// Entropy of the sub-system on `idx` (any order).
    pub fn entropy(&self, idx: &[usize]) -> Result<f64> {
        let mut key = idx.to_vec();
        key.sort_unstable();
        key.dedup();
        if key.len() == self.gamma.n() {
            return self.total_entropy();
        }
        if let Some(s) = self.memo.lock().expect("entropy cache poisoned").get(&key) {
            return Ok(*s);
        }
        let s = von_neumann_entropy(&restrict_indices(self.gamma, &key)?)?;
        self.memo.lock().expect("entropy cache poisoned").insert(key, s);
        Ok(s)
    }

    pub fn mutual_information(&self, a: &[usize], b: &[usize]) -> Result<f64> {
        if a.is_empty() || b.is_empty() {
            return Err(Error::EmptyMask);
        }
        let union = disjoint_union(a, b)?;
        combine_mi(self.entropy(a)?, self.entropy(b)?, self.entropy(&union)?)
    }
}
