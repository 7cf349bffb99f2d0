//! Helmholtz modes on a rectangular pixel grid.
//!
//! Sample points are cell centred, `x_i = (i + 1/2) dx`, so Dirichlet and
//! Neumann bases are exactly the orthonormal type-II sine and cosine
//! transforms. Robin modes are sampled analytic modes re-orthonormalised by QR.
//!
//! Robin parameter convention: `n·∇g + α g = 0` on the boundary, with `α ≥ 0`.
//! `α → 0` gives Neumann and `α → ∞` gives Dirichlet. Negative `α` always
//! admits a bound solution with `k² < 0` and is rejected.

use std::f64::consts::PI;

use faer::Mat;

use crate::error::{Error, Result};

/// Bisection iteration cap for the Robin quantisation condition.
pub const ROBIN_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(lx > 0.0 && ly > 0.0) || nx == 0 || ny == 0 {
            return Err(Error::Domain(format!("invalid grid {lx}x{ly} m, {nx}x{ny} px")));
        }
        Ok(Grid { lx, ly, nx, ny })
    }

    /// Square grid of side `l` with `n × n` pixels.
    pub fn square(l: f64, n: usize) -> Result<Self> {
        Grid::new(l, l, n, n)
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    /// Unit-cell area ε = dx·dy.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn n_pixels(&self) -> usize {
        self.nx * self.ny
    }

    /// Flat pixel index, x fastest.
    pub fn pixel(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn coords(&self, p: usize) -> (usize, usize) {
        (p % self.nx, p / self.nx)
    }

    pub fn x(&self, ix: usize) -> f64 {
        (ix as f64 + 0.5) * self.dx()
    }

    pub fn y(&self, iy: usize) -> f64 {
        (iy as f64 + 0.5) * self.dy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
    Robin,
}

impl BoundaryKind {
    pub fn name(&self) -> &'static str {
        match self {
            BoundaryKind::Dirichlet => "dirichlet",
            BoundaryKind::Neumann => "neumann",
            BoundaryKind::Robin => "robin",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySpec {
    pub kind: BoundaryKind,
    /// Robin parameter (1/m); ignored for the other kinds.
    pub alpha: f64,
    /// Keep the Neumann zero mode in the basis.
    pub include_zero_mode: bool,
}

impl BoundarySpec {
    pub fn dirichlet() -> Self {
        BoundarySpec { kind: BoundaryKind::Dirichlet, alpha: 0.0, include_zero_mode: false }
    }

    pub fn neumann() -> Self {
        BoundarySpec { kind: BoundaryKind::Neumann, alpha: 0.0, include_zero_mode: false }
    }

    pub fn robin(alpha: f64) -> Self {
        BoundarySpec { kind: BoundaryKind::Robin, alpha, include_zero_mode: false }
    }

    fn check(&self) -> Result<()> {
        if self.kind == BoundaryKind::Robin {
            if !self.alpha.is_finite() {
                return Err(Error::Domain(format!("Robin alpha must be finite, got {}", self.alpha)));
            }
            if self.alpha < 0.0 {
                return Err(Error::UnstableRobin { alpha: self.alpha });
            }
        }
        Ok(())
    }

    /// First mode label along an axis (Neumann counts from 0).
    fn first_label(&self) -> usize {
        match self.kind {
            BoundaryKind::Neumann => 0,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: (usize, usize),
    pub kx: f64,
    pub ky: f64,
    pub k: f64,
    pub omega: f64,
}

impl Mode {
    pub fn is_zero_mode(&self) -> bool {
        self.k == 0.0
    }
}

/// Solved Helmholtz spectrum with sampled orthonormal mode rows.
#[derive(Debug, Clone)]
pub struct ModeBasis {
    pub grid: Grid,
    pub boundary: BoundarySpec,
    pub modes: Vec<Mode>,
    /// `n_modes × n_pixels`; row m is sqrt(ε)·g_m sampled on the pixel centres.
    pub g: Mat<f64>,
}

/// Residual of the stable Robin quantisation condition in phase form,
/// `kL − 2 atan(α/k) − (m−1)π`. Strictly increasing in `k`.
fn robin_phase(k: f64, alpha: f64, l: f64, branch: usize) -> f64 {
    k * l - 2.0 * (alpha / k).atan() - (branch as f64 - 1.0) * PI
}

/// Residual of `tan(kL) = 2αk/(k² − α²)` written without poles.
pub fn robin_residual(k: f64, alpha: f64, l: f64) -> f64 {
    (k * k - alpha * alpha) * (k * l).sin() - 2.0 * alpha * k * (k * l).cos()
}

fn robin_root(alpha: f64, l: f64, branch: usize) -> Result<f64> {
    let mut lo = (branch as f64 - 1.0) * PI / l;
    let mut hi = branch as f64 * PI / l;
    if lo == 0.0 {
        lo = f64::MIN_POSITIVE;
    }
    let mut f_lo = robin_phase(lo, alpha, l, branch);
    for _ in 0..ROBIN_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let f_mid = robin_phase(mid, alpha, l, branch);
        if f_mid == 0.0 || hi - lo <= 4.0 * f64::EPSILON * mid {
            return Ok(mid);
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence { what: "Robin bisection", iterations: ROBIN_MAX_ITER })
}

/// The `n` lowest admissible wavenumbers on an interval of length `l`.
///
/// Neumann includes `k = 0` as its first entry.
pub fn solve_wavenumbers_1d(boundary: &BoundarySpec, l: f64, n: usize) -> Result<Vec<f64>> {
    boundary.check()?;
    if n == 0 {
        return Err(Error::Domain("need at least one wavenumber".into()));
    }
    match boundary.kind {
        BoundaryKind::Dirichlet => Ok((1..=n).map(|m| m as f64 * PI / l).collect()),
        BoundaryKind::Neumann => Ok((0..n).map(|m| m as f64 * PI / l).collect()),
        BoundaryKind::Robin if boundary.alpha == 0.0 => Ok((0..n).map(|m| m as f64 * PI / l).collect()),
        BoundaryKind::Robin => (1..=n).map(|m| robin_root(boundary.alpha, l, m)).collect(),
    }
}

/// Orthonormal type-II DST matrix (row m−1 holds frequency m).
pub fn dst2_matrix(n: usize) -> Mat<f64> {
    let nf = n as f64;
    Mat::from_fn(n, n, |r, i| {
        let m = (r + 1) as f64;
        let scale = if r + 1 == n { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * m * (i as f64 + 0.5) / nf).sin()
    })
}

/// Orthonormal type-II DCT matrix (row m holds frequency m).
pub fn dct2_matrix(n: usize) -> Mat<f64> {
    let nf = n as f64;
    Mat::from_fn(n, n, |m, i| {
        let scale = if m == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * m as f64 * (i as f64 + 0.5) / nf).cos()
    })
}

/// Continuum-normalised Robin mode `cos(kx − θ)`, `tan θ = α/k`, on [0, l].
fn robin_mode(k: f64, alpha: f64, l: f64, x: f64) -> f64 {
    let theta = (alpha / k).atan();
    let norm2 = 0.5 * l + ((2.0 * (k * l - theta)).sin() + (2.0 * theta).sin()) / (4.0 * k);
    (k * x - theta).cos() / norm2.sqrt()
}

/// Re-orthonormalises the rows of `a` in order (Gram-Schmidt via Householder QR).
fn orthonormalize_rows(a: &Mat<f64>) -> Mat<f64> {
    let at = a.transpose().to_owned();
    let qr = at.qr();
    let q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let n = a.nrows();
    Mat::from_fn(n, a.ncols(), |row, col| {
        let sign = if r[(row, row)] < 0.0 { -1.0 } else { 1.0 };
        sign * q[(col, row)]
    })
}

/// Wavenumbers and the `n × n` orthonormal sampled basis along one axis.
pub fn sampled_basis_1d(boundary: &BoundarySpec, l: f64, n: usize) -> Result<(Vec<f64>, Mat<f64>)> {
    let ks = solve_wavenumbers_1d(boundary, l, n)?;
    let mat = match boundary.kind {
        BoundaryKind::Dirichlet => dst2_matrix(n),
        BoundaryKind::Neumann => dct2_matrix(n),
        BoundaryKind::Robin if boundary.alpha == 0.0 => dct2_matrix(n),
        BoundaryKind::Robin => {
            let dx = l / n as f64;
            let sampled = Mat::from_fn(n, n, |m, i| {
                dx.sqrt() * robin_mode(ks[m], boundary.alpha, l, (i as f64 + 0.5) * dx)
            });
            orthonormalize_rows(&sampled)
        }
    };
    Ok((ks, mat))
}

/// Builds the tensor-product 2D mode basis.
///
/// Modes are sorted by ascending `k`, ties broken by `(mx, my)`. The Neumann
/// `(0, 0)` zero mode is dropped unless `boundary.include_zero_mode`.
pub fn build_basis(grid: Grid, boundary: BoundarySpec, dispersion: impl Fn(f64) -> f64) -> Result<ModeBasis> {
    let (kxs, gx) = sampled_basis_1d(&boundary, grid.lx, grid.nx)?;
    let (kys, gy) = sampled_basis_1d(&boundary, grid.ly, grid.ny)?;
    let first = boundary.first_label();

    let mut rows: Vec<(Mode, usize, usize)> = Vec::with_capacity(grid.n_pixels());
    for (ax, &kx) in kxs.iter().enumerate() {
        for (ay, &ky) in kys.iter().enumerate() {
            let k = (kx * kx + ky * ky).sqrt();
            if k == 0.0 && !boundary.include_zero_mode {
                continue;
            }
            let omega = dispersion(k);
            if !omega.is_finite() || omega < 0.0 {
                return Err(Error::NonFinite("mode frequency"));
            }
            let mode = Mode { index: (ax + first, ay + first), kx, ky, k, omega };
            rows.push((mode, ax, ay));
        }
    }
    rows.sort_by(|a, b| a.0.k.total_cmp(&b.0.k).then(a.0.index.cmp(&b.0.index)));

    let zero_excluded = kxs[0] == 0.0 && kys[0] == 0.0 && !boundary.include_zero_mode;
    let expected = grid.n_pixels() - usize::from(zero_excluded);
    if rows.len() != expected {
        return Err(Error::DimensionMismatch { expected, got: rows.len() });
    }

    let n_pix = grid.n_pixels();
    let mut g = Mat::<f64>::zeros(rows.len(), n_pix);
    for (r, (_, ax, ay)) in rows.iter().enumerate() {
        for iy in 0..grid.ny {
            let vy = gy[(*ay, iy)];
            for ix in 0..grid.nx {
                g[(r, grid.pixel(ix, iy))] = gx[(*ax, ix)] * vy;
            }
        }
    }
    let modes = rows.into_iter().map(|(m, _, _)| m).collect();
    Ok(ModeBasis { grid, boundary, modes, g })
}

impl ModeBasis {
    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.grid.n_pixels()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }

    /// `max |G Gᵀ − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let ggt = &self.g * self.g.transpose();
        let mut worst = 0.0f64;
        for i in 0..ggt.nrows() {
            for j in 0..ggt.ncols() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ggt[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Mode coefficients → sampled field (`Gᵀ c`).
    pub fn to_real(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.n_modes() {
            return Err(Error::DimensionMismatch { expected: self.n_modes(), got: coeffs.len() });
        }
        let mut out = vec![0.0; self.n_pixels()];
        for (m, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            for (p, o) in out.iter_mut().enumerate() {
                *o += c * self.g[(m, p)];
            }
        }
        Ok(out)
    }

    /// Sampled field → mode coefficients (`G f`).
    pub fn to_modes(&self, field: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.n_pixels() {
            return Err(Error::DimensionMismatch { expected: self.n_pixels(), got: field.len() });
        }
        Ok((0..self.n_modes())
            .map(|m| field.iter().enumerate().map(|(p, f)| self.g[(m, p)] * f).sum())
            .collect())
    }

    /// Writes the basis as CSV: `mx,my,k,omega` followed by the sampled row.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> Result<()> {
        write!(out, "mx,my,k,omega")?;
        for p in 0..self.n_pixels() {
            write!(out, ",p{p}")?;
        }
        writeln!(out)?;
        for (r, m) in self.modes.iter().enumerate() {
            write!(out, "{},{},{:e},{:e}", m.index.0, m.index.1, m.k, m.omega)?;
            for p in 0..self.n_pixels() {
                write!(out, ",{:e}", self.g[(r, p)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const L: f64 = 5e-3;

    fn linear(k: f64) -> f64 {
        0.1234 * k
    }

    #[test]
    fn dirichlet_wavenumbers() {
        let ks = solve_wavenumbers_1d(&BoundarySpec::dirichlet(), L, 3).unwrap();
        let want = [628.32, 1256.64, 1884.96];
        for (k, w) in ks.iter().zip(want) {
            assert!((k - w).abs() < 0.01, "{k}");
        }
    }

    #[test]
    fn neumann_wavenumbers_start_at_zero() {
        let ks = solve_wavenumbers_1d(&BoundarySpec::neumann(), L, 4).unwrap();
        assert_eq!(ks[0], 0.0);
        assert!((ks[1] - PI / L).abs() < 1e-9);
    }

    #[test]
    fn robin_small_alpha_matches_neumann() {
        let n = 12;
        let robin = solve_wavenumbers_1d(&BoundarySpec::robin(1e-6 / L), L, n).unwrap();
        let neumann = solve_wavenumbers_1d(&BoundarySpec::neumann(), L, n).unwrap();
        // Branch 1 is the lifted zero mode, k ≈ sqrt(2α/L).
        assert!(robin[0] * L < 2e-3);
        for m in 1..n {
            assert!((robin[m] - neumann[m]).abs() / neumann[m] < 1e-5, "m={m}");
        }
    }

    #[test]
    fn robin_large_alpha_matches_dirichlet() {
        let n = 12;
        let robin = solve_wavenumbers_1d(&BoundarySpec::robin(1e6 / L), L, n).unwrap();
        let dirichlet = solve_wavenumbers_1d(&BoundarySpec::dirichlet(), L, n).unwrap();
        for m in 0..n {
            assert!((robin[m] - dirichlet[m]).abs() / dirichlet[m] < 1e-5, "m={m}");
        }
    }

    #[test]
    fn robin_unit_alpha_root_satisfies_condition() {
        let alpha = 200.0;
        let ks = solve_wavenumbers_1d(&BoundarySpec::robin(alpha), L, 3).unwrap();
        assert!(ks[0] > 0.0 && ks[0] < PI / L);
        for &k in &ks {
            let scale = k * k + alpha * alpha;
            assert!(robin_residual(k, alpha, L).abs() / scale < 1e-10);
        }
        // Oracle: dense scan of the residual for a sign change in the first bracket.
        let n_scan = 1_000_000;
        let h = PI / L / n_scan as f64;
        let mut prev = robin_residual(h, alpha, L);
        let mut root = None;
        for i in 2..n_scan {
            let k = i as f64 * h;
            let cur = robin_residual(k, alpha, L);
            if (cur < 0.0) != (prev < 0.0) {
                root = Some(k - 0.5 * h);
                break;
            }
            prev = cur;
        }
        let root = root.expect("scan found no root");
        assert!((root - ks[0]).abs() <= h);
    }

    #[test]
    fn negative_alpha_is_unstable() {
        let err = solve_wavenumbers_1d(&BoundarySpec::robin(-10.0), L, 4).unwrap_err();
        assert!(matches!(err, Error::UnstableRobin { .. }));
    }

    #[test]
    fn robin_branches_monotone_in_alpha() {
        let n = 6;
        let alphas: Vec<f64> = [1e-6, 1e-3, 0.1, 0.3, 1.0, 3.0, 10.0, 100.0, 1e6].iter().map(|a| a / L).collect();
        let spectra: Vec<Vec<f64>> = alphas
            .iter()
            .map(|&a| solve_wavenumbers_1d(&BoundarySpec::robin(a), L, n).unwrap())
            .collect();
        for m in 0..n {
            for w in spectra.windows(2) {
                assert!(w[1][m] > w[0][m]);
            }
            assert!(spectra[0][m] >= m as f64 * PI / L - 1e-9);
            assert!(spectra[spectra.len() - 1][m] <= (m + 1) as f64 * PI / L);
        }
    }

    #[test]
    fn closed_form_transforms() {
        let n = 7;
        let (_, gd) = sampled_basis_1d(&BoundarySpec::dirichlet(), L, n).unwrap();
        let (_, gn) = sampled_basis_1d(&BoundarySpec::neumann(), L, n).unwrap();
        let nf = n as f64;
        for m in 0..n {
            for i in 0..n {
                let x = (i as f64 + 0.5) / nf;
                let s = if m + 1 == n { 1.0 } else { 2.0f64.sqrt() };
                let d = s / nf.sqrt() * (PI * (m + 1) as f64 * x).sin();
                let c = if m == 0 { 1.0 } else { 2.0f64.sqrt() } / nf.sqrt() * (PI * m as f64 * x).cos();
                assert!((gd[(m, i)] - d).abs() < 1e-12);
                assert!((gn[(m, i)] - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampled_rows_match_continuum_modes() {
        let n = 10;
        let dx = L / n as f64;
        let (_, gd) = sampled_basis_1d(&BoundarySpec::dirichlet(), L, n).unwrap();
        for m in 0..n - 1 {
            for i in 0..n {
                let x = (i as f64 + 0.5) * dx;
                let cont = (2.0 / L).sqrt() * ((m + 1) as f64 * PI * x / L).sin();
                assert!((gd[(m, i)] - dx.sqrt() * cont).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_counts() {
        let grid = Grid::square(L, 20).unwrap();
        let nb = build_basis(grid, BoundarySpec::neumann(), linear).unwrap();
        assert_eq!(nb.n_modes(), 399);
        assert!(nb.modes.iter().all(|m| m.omega > 0.0));
        let db = build_basis(grid, BoundarySpec::dirichlet(), linear).unwrap();
        assert_eq!(db.n_modes(), 400);
        assert!(db.modes.iter().all(|m| m.omega > 0.0));
        let mut with_zero = BoundarySpec::neumann();
        with_zero.include_zero_mode = true;
        let zb = build_basis(grid, with_zero, linear).unwrap();
        assert_eq!(zb.n_modes(), 400);
        assert!(zb.modes[0].is_zero_mode());
    }

    #[test]
    fn mode_ordering() {
        let grid = Grid::square(L, 6).unwrap();
        let b = build_basis(grid, BoundarySpec::dirichlet(), linear).unwrap();
        assert_eq!(b.modes[0].index, (1, 1));
        assert_eq!(b.modes[1].index, (1, 2));
        assert_eq!(b.modes[2].index, (2, 1));
        for w in b.modes.windows(2) {
            assert!(w[0].k < w[1].k || (w[0].k == w[1].k && w[0].index < w[1].index));
        }
    }

    #[test]
    fn orthonormal_for_every_boundary() {
        let grids = [Grid::new(L, 3e-3, 7, 5).unwrap(), Grid::square(L, 32).unwrap()];
        let mut specs = vec![BoundarySpec::dirichlet(), BoundarySpec::neumann()];
        for al in [1e-6, 0.1, 1.0, 10.0, 1e6] {
            specs.push(BoundarySpec::robin(al / L));
        }
        for grid in grids {
            for spec in &specs {
                let b = build_basis(grid, *spec, linear).unwrap();
                assert!(b.orthonormality_error() < 1e-10, "{spec:?} {}", b.orthonormality_error());
            }
        }
    }

    #[test]
    fn rectangular_grid_pixel_layout() {
        let grid = Grid::new(4e-3, 2e-3, 4, 2).unwrap();
        assert_eq!(grid.pixel(3, 1), 7);
        assert_eq!(grid.coords(5), (1, 1));
        assert!((grid.x(0) - 0.5e-3).abs() < 1e-15);
        assert!((grid.cell_area() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn transforms() {
        let grid = Grid::square(L, 5).unwrap();
        let b = build_basis(grid, BoundarySpec::neumann(), linear).unwrap();
        assert!(b.to_real(&vec![0.0; b.n_modes()]).unwrap().iter().all(|v| *v == 0.0));
        let mut e = vec![0.0; b.n_modes()];
        e[3] = 1.0;
        let row = b.to_real(&e).unwrap();
        for p in 0..b.n_pixels() {
            assert_eq!(row[p], b.g[(3, p)]);
        }
        let coeffs: Vec<f64> = (0..b.n_modes()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let back = b.to_modes(&b.to_real(&coeffs).unwrap()).unwrap();
        for (a, c) in back.iter().zip(&coeffs) {
            assert!((a - c).abs() < 1e-10);
        }
        assert!(matches!(b.to_real(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }
}
