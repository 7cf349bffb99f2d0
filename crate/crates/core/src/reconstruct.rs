//! Recovery of the mode-space covariance from time-resolved two-point functions.
//!
//! Each retained mode rotates in its own phase plane, so after projecting a
//! pixel-space sample onto the mode basis every mode pair `(m, n)` evolves
//! independently. The regression is therefore solved pair by pair, which is
//! equivalent to the full pixel-space least-squares problem because the
//! projection is orthogonal.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use faer::linalg::solvers::SolveLstsq;
use faer::{Mat, MatRef, Side};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{mode_prefactors, CovarianceMatrix, Labelling};
use crate::geometry::ModeBasis;
use crate::physics::DerivedParams;

/// Relative frequency gap below which two modes count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Ridge weight, relative to the squared design-matrix norm, for degenerate pairs.
pub const RIDGE_SCALE: f64 = 1e-10;
/// Normal-equation condition number above which the QR route is used.
pub const QR_SWITCH_COND: f64 = 1e12;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Field,
    Momentum,
}

impl Quadrature {
    pub fn name(&self) -> &'static str {
        match self {
            Quadrature::Field => "Field",
            Quadrature::Momentum => "Momentum",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "Field" | "field" => Ok(Quadrature::Field),
            "Momentum" | "momentum" => Ok(Quadrature::Momentum),
            other => Err(Error::Parse(format!("unknown quadrature {other:?}"))),
        }
    }
}

/// Equal-time two-point functions of one quadrature, sampled at several times.
#[derive(Debug, Clone)]
pub struct TwoPointSeries {
    pub quadrature: Quadrature,
    pub times: Vec<f64>,
    pub samples: Vec<Mat<f64>>,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl TwoPointSeries {
    /// Validates shapes and time ordering; samples are symmetrised.
    pub fn new(quadrature: Quadrature, times: Vec<f64>, samples: Vec<Mat<f64>>, noise_sigma: f64, seed: u64) -> Result<Self> {
        if times.len() != samples.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: samples.len() });
        }
        if times.is_empty() {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Domain("sample times must be finite and strictly increasing".into()));
        }
        let n = samples[0].nrows();
        let mut sym = Vec::with_capacity(samples.len());
        for s in &samples {
            if s.nrows() != n || s.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: s.nrows().max(s.ncols()) });
            }
            if s.norm_max().is_nan() || !s.norm_max().is_finite() {
                return Err(Error::NonFinite("two-point sample"));
            }
            sym.push(Mat::from_fn(n, n, |i, j| 0.5 * (s[(i, j)] + s[(j, i)])));
        }
        Ok(TwoPointSeries { quadrature, times, samples: sym, noise_sigma, seed })
    }

    pub fn n_pixels(&self) -> usize {
        self.samples[0].nrows()
    }

    /// Mean absolute entry over all samples.
    pub fn mean_abs_signal(&self) -> f64 {
        let n = self.n_pixels();
        let total: f64 = self.samples.iter().map(|s| (0..n).flat_map(|j| (0..n).map(move |i| (i, j))).map(|(i, j)| s[(i, j)].abs()).sum::<f64>()).sum();
        total / (self.samples.len() * n * n) as f64
    }

    /// Series restricted to the first `k` time samples.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        let k = k.min(self.times.len());
        TwoPointSeries::new(self.quadrature, self.times[..k].to_vec(), self.samples[..k].to_vec(), self.noise_sigma, self.seed)
    }

    /// Writes `manifest.csv` plus one `sample_NNNN.csv` per time into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut m = BufWriter::new(fs::File::create(dir.join("manifest.csv"))?);
        writeln!(m, "quadrature,noise_sigma,seed,n_pixels")?;
        writeln!(m, "{},{:e},{},{}", self.quadrature.name(), self.noise_sigma, self.seed, self.n_pixels())?;
        writeln!(m, "index,time_s,file")?;
        for (k, (t, s)) in self.times.iter().zip(&self.samples).enumerate() {
            let name = format!("sample_{k:04}.csv");
            writeln!(m, "{k},{t:e},{name}")?;
            let mut f = BufWriter::new(fs::File::create(dir.join(&name))?);
            write_matrix(&mut f, s.as_ref())?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let reader = BufReader::new(fs::File::open(dir.join("manifest.csv"))?);
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        if lines.len() < 3 || lines[0].trim() != "quadrature,noise_sigma,seed,n_pixels" {
            return Err(Error::Parse("bad two-point manifest header".into()));
        }
        let meta: Vec<&str> = lines[1].split(',').collect();
        if meta.len() != 4 {
            return Err(Error::Parse(format!("bad manifest metadata {:?}", lines[1])));
        }
        let quadrature = Quadrature::parse(meta[0])?;
        let noise_sigma: f64 = parse_field(meta[1], "noise_sigma")?;
        let seed: u64 = parse_field(meta[2], "seed")?;
        let n: usize = parse_field(meta[3], "n_pixels")?;
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for line in lines[3..].iter().filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!("bad manifest row {line:?}")));
            }
            times.push(parse_field(parts[1], "time")?);
            let f = BufReader::new(fs::File::open(dir.join(parts[2].trim()))?);
            samples.push(read_matrix(f, n)?);
        }
        TwoPointSeries::new(quadrature, times, samples, noise_sigma, seed)
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.trim().parse().map_err(|e| Error::Parse(format!("{what}: {e}")))
}

fn write_matrix(out: &mut impl Write, m: MatRef<'_, f64>) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn read_matrix(input: impl BufRead, n: usize) -> Result<Mat<f64>> {
    let mut m = Mat::<f64>::zeros(n, n);
    let mut rows = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if i >= n {
            return Err(Error::Parse(format!("sample has more than {n} rows")));
        }
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != n {
            return Err(Error::Parse(format!("sample row {i} has {} entries, expected {n}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            m[(i, j)] = parse_field(v, "sample entry")?;
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Parse(format!("sample has {rows} rows, expected {n}")));
    }
    Ok(m)
}

fn mode_frequencies(gamma: &CovarianceMatrix) -> Result<Vec<f64>> {
    let basis = gamma.basis().ok_or_else(|| Error::Domain("covariance carries no mode basis".into()))?;
    if basis.n_modes() != gamma.n() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: gamma.n() });
    }
    let w = basis.frequencies();
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("evolution requires every mode frequency to be positive".into()));
    }
    Ok(w)
}

/// Free evolution: every mode's `(φ_m, η_m)` pair rotates by `ω_m t`.
pub fn evolve_mode_covariance(gamma0: &CovarianceMatrix, t: f64) -> Result<CovarianceMatrix> {
    if gamma0.labelling() != Labelling::MomentumSpace {
        return Err(Error::Labelling("MomentumSpace"));
    }
    let w = mode_frequencies(gamma0)?;
    let n = gamma0.n();
    let (s, c): (Vec<f64>, Vec<f64>) = w.iter().map(|wm| (wm * t).sin_cos()).unzip();
    // Row i of the symplectic map has two non-zeros: (column, coefficient).
    let row = |i: usize| -> [(usize, f64); 2] {
        if i < n {
            [(i, c[i]), (i + n, s[i])]
        } else {
            let m = i - n;
            [(m, -s[m]), (i, c[m])]
        }
    };
    let g = gamma0.data();
    let data = Mat::from_fn(2 * n, 2 * n, |i, j| {
        let mut v = 0.0;
        for (a, ca) in row(i) {
            for (b, cb) in row(j) {
                v += ca * cb * g[(a, b)];
            }
        }
        v
    });
    let basis = gamma0.basis().cloned().expect("checked above");
    Ok(CovarianceMatrix::new(data, Labelling::MomentumSpace)?.with_basis(basis))
}

/// Exact two-point functions of `gamma0` evolved to each time, plus optional
/// i.i.d. Gaussian noise of scale `noise_sigma` on each independent entry.
pub fn synth_two_point(
    gamma0: &CovarianceMatrix,
    basis: &Arc<ModeBasis>,
    d: &DerivedParams,
    times: &[f64],
    quadrature: Quadrature,
    noise_sigma: f64,
    seed: u64,
) -> Result<TwoPointSeries> {
    if gamma0.labelling() != Labelling::MomentumSpace {
        return Err(Error::Labelling("MomentumSpace"));
    }
    if gamma0.n() != basis.n_modes() {
        return Err(Error::DimensionMismatch { expected: basis.n_modes(), got: gamma0.n() });
    }
    if !(noise_sigma >= 0.0) {
        return Err(Error::Domain(format!("noise_sigma must be non-negative, got {noise_sigma}")));
    }
    let gamma0 = gamma0.clone().with_basis(basis.clone());
    let (dphi, deta) = mode_prefactors(basis, d)?;
    let pref = match quadrature {
        Quadrature::Field => dphi,
        Quadrature::Momentum => deta,
    };
    let g = basis.g.as_ref();
    let n_pix = basis.n_pixels();
    let samples = times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| {
            let evolved = evolve_mode_covariance(&gamma0, t)?;
            let block = match quadrature {
                Quadrature::Field => evolved.q(),
                Quadrature::Momentum => evolved.p(),
            };
            let scaled = Mat::from_fn(block.nrows(), block.ncols(), |i, j| pref[i] * block[(i, j)] * pref[j]);
            let mut x = g.transpose() * (&scaled * g);
            if noise_sigma > 0.0 {
                let mut rng = ChaCha20Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::Domain(e.to_string()))?;
                for j in 0..n_pix {
                    for i in 0..=j {
                        let e = normal.sample(&mut rng);
                        x[(i, j)] += e;
                        if i != j {
                            x[(j, i)] += e;
                        }
                    }
                }
            }
            Ok(x)
        })
        .collect::<Result<Vec<_>>>()?;
    TwoPointSeries::new(quadrature, times.to_vec(), samples, noise_sigma, seed)
}

/// Uniform sampling with `Δt = π/(4 ω_max)` spanning twice the slowest beat
/// period `2π/Δω_min` over the first `n_modes` modes.
pub fn default_sample_times(basis: &ModeBasis, n_modes: usize) -> Result<Vec<f64>> {
    let n_modes = n_modes.min(basis.n_modes());
    let mut w: Vec<f64> = basis.frequencies()[..n_modes].to_vec();
    if w.is_empty() || w.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::Domain("sampling needs positive mode frequencies".into()));
    }
    w.sort_by(f64::total_cmp);
    let w_max = *w.last().expect("non-empty");
    let mut gap = f64::INFINITY;
    // Beat frequencies ω_m ± ω_n all matter; the smallest distinct one sets the span.
    for (i, a) in w.iter().enumerate() {
        gap = gap.min(*a);
        for b in &w[i + 1..] {
            let dw = b - a;
            if dw > DEGENERACY_TOL * b {
                gap = gap.min(dw);
            }
        }
    }
    let dt = std::f64::consts::PI / (4.0 * w_max);
    let span = 2.0 * 2.0 * std::f64::consts::PI / gap;
    let count = (span / dt).ceil() as usize + 1;
    if count > 1_000_000 {
        return Err(Error::Domain(format!("default sampling needs {count} samples; truncate modes or supply times")));
    }
    Ok((0..count).map(|k| k as f64 * dt).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Number of lowest modes to reconstruct; `None` keeps every mode.
    pub n_modes: Option<usize>,
    pub degeneracy_tol: f64,
    pub ridge_scale: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { n_modes: None, degeneracy_tol: DEGENERACY_TOL, ridge_scale: RIDGE_SCALE }
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    pub qt: Mat<f64>,
    pub pt: Mat<f64>,
    pub rt: Mat<f64>,
    /// RMS of pixel-space residuals over all samples.
    pub residual_rms: f64,
    /// Residual sum of squares in pixel space.
    pub residual_ss: f64,
    /// Largest normal-equation condition number over non-degenerate pairs.
    pub condition: f64,
    /// Pairs `(m, n)`, `m < n`, whose `R̃_mn` and `R̃_nm` cannot be separated.
    pub unidentifiable_pairs: Vec<(usize, usize)>,
}

impl ReconstructionResult {
    pub fn n_modes(&self) -> usize {
        self.qt.nrows()
    }

    /// The reconstructed `Γ̃(0)`.
    pub fn to_covariance(&self) -> Result<CovarianceMatrix> {
        CovarianceMatrix::from_blocks(self.qt.as_ref(), self.rt.as_ref(), self.pt.as_ref(), Labelling::MomentumSpace)
    }

    /// Relative Frobenius error against `truth` over identifiable quantities.
    ///
    /// For unidentifiable pairs only the sum `R̃_mn + R̃_nm` is compared.
    pub fn relative_error(&self, truth: &CovarianceMatrix) -> Result<f64> {
        let n = self.n_modes();
        if truth.n() < n {
            return Err(Error::DimensionMismatch { expected: n, got: truth.n() });
        }
        let (tq, tp, tr) = (truth.q(), truth.p(), truth.r());
        let mut err = 0.0;
        let mut norm = 0.0;
        let mut add = |est: f64, tru: f64| {
            err += (est - tru).powi(2);
            norm += tru * tru;
        };
        let degenerate: std::collections::HashSet<(usize, usize)> = self.unidentifiable_pairs.iter().copied().collect();
        for j in 0..n {
            for i in 0..n {
                add(self.qt[(i, j)], tq[(i, j)]);
                add(self.pt[(i, j)], tp[(i, j)]);
                let key = (i.min(j), i.max(j));
                if degenerate.contains(&key) {
                    if i < j {
                        add(self.rt[(i, j)] + self.rt[(j, i)], tr[(i, j)] + tr[(j, i)]);
                    }
                } else {
                    add(self.rt[(i, j)], tr[(i, j)]);
                }
            }
        }
        Ok((err / norm.max(f64::MIN_POSITIVE)).sqrt())
    }
}

/// Design-matrix rows for a pair; column order `(Q̃, P̃, R̃_mn, R̃_nm)`, or
/// `(Q̃, P̃, R̃_mm)` on the diagonal.
fn design_row(q: Quadrature, diag: bool, (cm, sm): (f64, f64), (cn, sn): (f64, f64)) -> [f64; 4] {
    match (q, diag) {
        (Quadrature::Field, false) => [cm * cn, sm * sn, cm * sn, sm * cn],
        (Quadrature::Momentum, false) => [sm * sn, cm * cn, -sm * cn, -cm * sn],
        (Quadrature::Field, true) => [cm * cm, sm * sm, 2.0 * cm * sm, 0.0],
        (Quadrature::Momentum, true) => [sm * sm, cm * cm, -2.0 * cm * sm, 0.0],
    }
}

struct PairSolution {
    x: [f64; 4],
    condition: f64,
}

fn solve_pair(a: &Mat<f64>, y: &Mat<f64>, degenerate: bool, ridge_scale: f64, pair: (usize, usize)) -> Result<PairSolution> {
    let k = a.ncols();
    let norms: Vec<f64> = (0..k).map(|j| a.col(j).norm_l2()).collect();
    if norms.iter().any(|&v| v == 0.0) && !degenerate {
        return Err(Error::RankDeficient(format!("mode pair {pair:?}: a regression column vanishes at every sample time")));
    }
    let scale: Vec<f64> = norms.iter().map(|&v| if v > 0.0 { 1.0 / v } else { 1.0 }).collect();
    let a_s = Mat::from_fn(a.nrows(), k, |i, j| a[(i, j)] * scale[j]);
    let ata = a_s.transpose() * &a_s;
    let aty = a_s.transpose() * y;

    let ridge = if degenerate { ridge_scale * a_s.norm_l2().powi(2) } else { 0.0 };
    let reg = Mat::from_fn(k, k, |i, j| ata[(i, j)] + if i == j { ridge } else { 0.0 });
    let eig = reg.self_adjoint_eigen(Side::Lower).map_err(|e| Error::EigenSolver(format!("{e:?}")))?;
    let lam = eig.S().column_vector();
    let (lo, hi) = (0..k).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| (lo.min(lam[i]), hi.max(lam[i])));
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };

    let xs: Mat<f64> = if degenerate || condition <= QR_SWITCH_COND {
        if !(lo > 0.0) {
            return Err(Error::RankDeficient(format!("mode pair {pair:?}: singular normal equations")));
        }
        let u = eig.U();
        let proj = u.transpose() * &aty;
        let inv = Mat::from_fn(k, 1, |i, _| proj[(i, 0)] / lam[i]);
        u * inv
    } else {
        let qr = a_s.col_piv_qr();
        let r = qr.R();
        let r00 = r[(0, 0)].abs();
        if (0..k).any(|i| r[(i, i)].abs() <= RANK_TOL * r00) {
            return Err(Error::RankDeficient(format!("mode pair {pair:?}: condition {condition:e}")));
        }
        qr.solve_lstsq(y)
    };
    let mut x = [0.0; 4];
    for j in 0..k {
        x[j] = xs[(j, 0)] * scale[j];
    }
    Ok(PairSolution { x, condition: if degenerate { 0.0 } else { condition } })
}

pub fn fit_covariance(series: &TwoPointSeries, basis: &ModeBasis, d: &DerivedParams) -> Result<ReconstructionResult> {
    fit_covariance_with(series, basis, d, &FitOptions::default())
}

/// Least-squares recovery of `(Q̃, P̃, R̃)` at `t = 0`.
pub fn fit_covariance_with(series: &TwoPointSeries, basis: &ModeBasis, d: &DerivedParams, opts: &FitOptions) -> Result<ReconstructionResult> {
    let n_pix = basis.n_pixels();
    if series.n_pixels() != n_pix {
        return Err(Error::DimensionMismatch { expected: n_pix, got: series.n_pixels() });
    }
    let nm = opts.n_modes.unwrap_or(basis.n_modes()).min(basis.n_modes());
    if nm == 0 {
        return Err(Error::Domain("no modes to reconstruct".into()));
    }
    let omega: Vec<f64> = basis.frequencies()[..nm].to_vec();
    let (dphi, deta) = mode_prefactors(basis, d)?;
    let pref: Vec<f64> = match series.quadrature {
        Quadrature::Field => dphi,
        Quadrature::Momentum => deta,
    }[..nm]
        .to_vec();
    let g = basis.g.as_ref().subrows(0, nm);

    // Project every sample onto the retained modes and strip the prefactors.
    let projected: Vec<Mat<f64>> = series
        .samples
        .par_iter()
        .map(|x| {
            let y = g * (x * g.transpose());
            Mat::from_fn(nm, nm, |i, j| y[(i, j)] / (pref[i] * pref[j]))
        })
        .collect();
    let trig: Vec<Vec<(f64, f64)>> = series
        .times
        .iter()
        .map(|&t| omega.iter().map(|w| { let (s, c) = (w * t).sin_cos(); (c, s) }).collect())
        .collect();
    let n_t = series.times.len();

    let pairs: Vec<(usize, usize)> = (0..nm).flat_map(|n| (0..=n).map(move |m| (m, n))).collect();
    let solved = pairs
        .par_iter()
        .map(|&(m, n)| {
            let diag = m == n;
            let k = if diag { 3 } else { 4 };
            let a = Mat::from_fn(n_t, k, |t, j| design_row(series.quadrature, diag, trig[t][m], trig[t][n])[j]);
            let y = Mat::from_fn(n_t, 1, |t, _| projected[t][(m, n)]);
            let degenerate = !diag && (omega[m] - omega[n]).abs() <= opts.degeneracy_tol * omega[m].max(omega[n]);
            solve_pair(&a, &y, degenerate, opts.ridge_scale, (m, n)).map(|s| ((m, n), degenerate, s))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut qt = Mat::<f64>::zeros(nm, nm);
    let mut pt = Mat::<f64>::zeros(nm, nm);
    let mut rt = Mat::<f64>::zeros(nm, nm);
    let mut condition = 0.0f64;
    let mut unidentifiable_pairs = Vec::new();
    for ((m, n), degenerate, sol) in solved {
        let x = sol.x;
        qt[(m, n)] = x[0];
        qt[(n, m)] = x[0];
        pt[(m, n)] = x[1];
        pt[(n, m)] = x[1];
        if m == n {
            rt[(m, m)] = x[2];
        } else {
            rt[(m, n)] = x[2];
            rt[(n, m)] = x[3];
        }
        if degenerate {
            unidentifiable_pairs.push((m, n));
        }
        condition = condition.max(sol.condition);
    }
    unidentifiable_pairs.sort_unstable();

    let residual_ss: f64 = series
        .samples
        .par_iter()
        .zip(trig.par_iter())
        .map(|(x, cs)| {
            let model = Mat::from_fn(nm, nm, |i, j| {
                let (m, n) = (i.min(j), i.max(j));
                let row = design_row(series.quadrature, m == n, cs[m], cs[n]);
                let v = if m == n {
                    row[0] * qt[(m, m)] + row[1] * pt[(m, m)] + row[2] * rt[(m, m)]
                } else {
                    row[0] * qt[(m, n)] + row[1] * pt[(m, n)] + row[2] * rt[(m, n)] + row[3] * rt[(n, m)]
                };
                pref[i] * v * pref[j]
            });
            let pix = g.transpose() * (&model * g);
            let diff = x - &pix;
            diff.norm_l2().powi(2)
        })
        .sum();
    let residual_rms = (residual_ss / (n_t * n_pix * n_pix) as f64).sqrt();

    Ok(ReconstructionResult { qt, pt, rt, residual_rms, residual_ss, condition, unidentifiable_pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{symplectic_spectrum, thermal_momentum_covariance};
    use crate::geometry::{build_basis, BoundarySpec, Grid};
    use crate::physics::{derive_params, FilmParams};

    fn setup(n: usize, spec: BoundarySpec) -> (Arc<ModeBasis>, DerivedParams) {
        let d = derive_params(&FilmParams::default()).unwrap();
        let c = d.c3;
        let grid = Grid::new(5e-3, 4e-3, n, n).unwrap();
        (Arc::new(build_basis(grid, spec, move |k| c * k).unwrap()), d)
    }

    fn squeezed_state(basis: &Arc<ModeBasis>) -> CovarianceMatrix {
        // Thermal state with correlations in every block so R̃ is non-trivial.
        let n = basis.n_modes();
        let data = Mat::from_fn(2 * n, 2 * n, |i, j| {
            let base = if i == j { 2.0 + (i % n) as f64 * 0.1 } else { 0.0 };
            let (a, b) = (i % n, j % n);
            base + 0.05 / (1.0 + (a as f64 - b as f64).abs()) * if (i < n) == (j < n) { 1.0 } else { 0.3 }
        });
        CovarianceMatrix::new(data, Labelling::MomentumSpace).unwrap().with_basis(basis.clone())
    }

    #[test]
    fn evolution_identity_and_periodicity() {
        let (basis, _) = setup(3, BoundarySpec::dirichlet());
        let g0 = squeezed_state(&basis);
        let g = evolve_mode_covariance(&g0, 0.0).unwrap();
        assert!((g.data() - g0.data()).norm_max() < 1e-15);
        let n = g0.n();
        let w = basis.modes[2].omega;
        let g = evolve_mode_covariance(&g0, 2.0 * std::f64::consts::PI / w).unwrap();
        for (i, j) in [(2, 2), (2, n + 2), (n + 2, n + 2)] {
            assert!((g.data()[(i, j)] - g0.data()[(i, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_is_stationary() {
        let (basis, d) = setup(4, BoundarySpec::neumann());
        let g0 = thermal_momentum_covariance(&basis, 0.3).unwrap();
        let s = synth_two_point(&g0, &basis, &d, &[0.0, 0.37, 1.9], Quadrature::Field, 0.0, 0).unwrap();
        for k in 1..3 {
            let diff = (&s.samples[k] - &s.samples[0]).norm_max();
            assert!(diff <= 1e-12 * s.samples[0].norm_max());
        }
    }

    #[test]
    fn evolution_preserves_spectrum() {
        let (basis, _) = setup(3, BoundarySpec::dirichlet());
        let g0 = squeezed_state(&basis);
        let s0 = symplectic_spectrum(&g0).unwrap();
        for k in 0..100 {
            let t = 0.173 * k as f64 + 0.01;
            let s = symplectic_spectrum(&evolve_mode_covariance(&g0, t).unwrap()).unwrap();
            for (a, b) in s.values.iter().zip(&s0.values) {
                assert!((a - b).abs() < 1e-12 * b.max(1.0), "t={t}");
            }
        }
    }

    #[test]
    fn vacuum_sample_at_zero() {
        let (basis, d) = setup(3, BoundarySpec::dirichlet());
        let g0 = thermal_momentum_covariance(&basis, 0.0).unwrap();
        let s = synth_two_point(&g0, &basis, &d, &[0.0], Quadrature::Field, 0.0, 0).unwrap();
        let n_pix = basis.n_pixels();
        let mut expect = Mat::<f64>::zeros(n_pix, n_pix);
        for (m, mode) in basis.modes.iter().enumerate() {
            let f = d.c3 / (2.0 * d.luttinger_k * mode.omega);
            for j in 0..n_pix {
                for i in 0..n_pix {
                    expect[(i, j)] += f * basis.g[(m, i)] * basis.g[(m, j)];
                }
            }
        }
        assert!((&s.samples[0] - &expect).norm_max() < 1e-12 * expect.norm_max());
    }

    #[test]
    fn single_excited_mode_oscillates_at_twice_frequency() {
        let (basis, d) = setup(3, BoundarySpec::dirichlet());
        let n = basis.n_modes();
        let mut data = Mat::from_fn(2 * n, 2 * n, |i, j| if i == j { 0.5 } else { 0.0 });
        data[(0, 0)] = 2.0;
        let g0 = CovarianceMatrix::new(data, Labelling::MomentumSpace).unwrap();
        let w = basis.modes[0].omega;
        let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.1 / w).collect();
        let s = synth_two_point(&g0, &basis, &d, &times, Quadrature::Field, 0.0, 0).unwrap();
        // Relative to t = 0, pixel (0,0) changes by -1.5 f0 sin²(ωt).
        let f0 = d.c3 / (d.luttinger_k * w) * basis.g[(0, 0)].powi(2);
        for (k, &t) in times.iter().enumerate() {
            let expect = -1.5 * f0 * (w * t).sin().powi(2);
            let got = s.samples[k][(0, 0)] - s.samples[0][(0, 0)];
            assert!((got - expect).abs() < 1e-12 * s.samples[0][(0, 0)], "k={k}");
        }
    }

    #[test]
    fn noiseless_round_trip_both_quadratures() {
        for spec in [BoundarySpec::dirichlet(), BoundarySpec::neumann()] {
            let (basis, d) = setup(4, spec);
            let g0 = squeezed_state(&basis);
            let times = default_sample_times(&basis, basis.n_modes()).unwrap();
            let mut est = Vec::new();
            for q in [Quadrature::Field, Quadrature::Momentum] {
                let s = synth_two_point(&g0, &basis, &d, &times, q, 0.0, 0).unwrap();
                let r = fit_covariance(&s, &basis, &d).unwrap();
                assert!(r.relative_error(&g0).unwrap() < 1e-6, "{spec:?} {q:?} {}", r.relative_error(&g0).unwrap());
                assert!(r.residual_rms <= 1e-9 * s.mean_abs_signal());
                est.push(r);
            }
            let diff = (&est[0].qt - &est[1].qt).norm_l2() / est[0].qt.norm_l2();
            assert!(diff < 1e-6);
        }
    }

    #[test]
    fn degenerate_pairs_flagged() {
        let d = derive_params(&FilmParams::default()).unwrap();
        let c = d.c3;
        let basis = Arc::new(build_basis(Grid::square(5e-3, 3).unwrap(), BoundarySpec::dirichlet(), move |k| c * k).unwrap());
        let g0 = thermal_momentum_covariance(&basis, 0.3).unwrap();
        let times = default_sample_times(&basis, basis.n_modes()).unwrap();
        let s = synth_two_point(&g0, &basis, &d, &times, Quadrature::Field, 0.0, 0).unwrap();
        let r = fit_covariance(&s, &basis, &d).unwrap();
        // (1,2) and (2,1) share a frequency.
        assert!(r.unidentifiable_pairs.contains(&(1, 2)));
        assert!(r.relative_error(&g0).unwrap() < 1e-6);
    }

    #[test]
    fn single_sample_is_rank_deficient() {
        let (basis, d) = setup(3, BoundarySpec::dirichlet());
        let g0 = thermal_momentum_covariance(&basis, 0.3).unwrap();
        let s = synth_two_point(&g0, &basis, &d, &[0.0], Quadrature::Field, 0.0, 0).unwrap();
        assert!(matches!(fit_covariance(&s, &basis, &d), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn noise_is_deterministic_and_symmetric() {
        let (basis, d) = setup(3, BoundarySpec::dirichlet());
        let g0 = thermal_momentum_covariance(&basis, 0.3).unwrap();
        let a = synth_two_point(&g0, &basis, &d, &[0.0, 1.0], Quadrature::Field, 1e-12, 7).unwrap();
        let b = synth_two_point(&g0, &basis, &d, &[0.0, 1.0], Quadrature::Field, 1e-12, 7).unwrap();
        let c = synth_two_point(&g0, &basis, &d, &[0.0, 1.0], Quadrature::Field, 1e-12, 8).unwrap();
        assert_eq!(a.samples[1], b.samples[1]);
        assert_ne!(a.samples[1], c.samples[1]);
        let s = &a.samples[1];
        assert_eq!(s, &s.transpose().to_owned());
    }

    #[test]
    fn series_dir_round_trip() {
        let (basis, d) = setup(3, BoundarySpec::neumann());
        let g0 = thermal_momentum_covariance(&basis, 0.3).unwrap();
        let s = synth_two_point(&g0, &basis, &d, &[0.0, 0.5, 1.25], Quadrature::Momentum, 1e-3, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.write_dir(dir.path()).unwrap();
        let back = TwoPointSeries::read_dir(dir.path()).unwrap();
        assert_eq!(back.times, s.times);
        assert_eq!(back.samples, s.samples);
        assert_eq!(back.quadrature, Quadrature::Momentum);
        assert_eq!(back.seed, 3);
    }

    #[test]
    fn rejects_unsorted_times() {
        let m = Mat::<f64>::zeros(2, 2);
        assert!(TwoPointSeries::new(Quadrature::Field, vec![1.0, 0.5], vec![m.clone(), m], 0.0, 0).is_err());
    }
}
