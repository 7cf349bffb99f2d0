//! Pixel subsystems, their outline statistics and the sweep protocols.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::{CovarianceMatrix, EntropyCache, Labelling};
use crate::geometry::Grid;

/// Boolean mask over the pixels of a grid, stored in flat pixel order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    grid: GridKey,
    pixels: Vec<bool>,
}

/// Grid stored by bit pattern so masks can derive `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct GridKey {
    lx: u64,
    ly: u64,
    nx: usize,
    ny: usize,
}

impl From<Grid> for GridKey {
    fn from(g: Grid) -> Self {
        GridKey { lx: g.lx.to_bits(), ly: g.ly.to_bits(), nx: g.nx, ny: g.ny }
    }
}

impl GridKey {
    fn grid(&self) -> Grid {
        Grid { lx: f64::from_bits(self.lx), ly: f64::from_bits(self.ly), nx: self.nx, ny: self.ny }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionStats {
    pub pixel_count: usize,
    /// Area in m².
    pub volume: f64,
    /// Outline length in m.
    pub boundary_area: f64,
    pub corner_count: usize,
}

impl RegionMask {
    pub fn empty(grid: Grid) -> Self {
        RegionMask { grid: grid.into(), pixels: vec![false; grid.n_pixels()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(usize, usize) -> bool) -> Self {
        let pixels = (0..grid.n_pixels()).map(|p| f(p % grid.nx, p / grid.nx)).collect();
        RegionMask { grid: grid.into(), pixels }
    }

    pub fn from_pixels(grid: Grid, pixels: Vec<bool>) -> Result<Self> {
        if pixels.len() != grid.n_pixels() {
            return Err(Error::DimensionMismatch { expected: grid.n_pixels(), got: pixels.len() });
        }
        Ok(RegionMask { grid: grid.into(), pixels })
    }

    /// Axis-aligned rectangle of `w × h` pixels with lower-left pixel `(x0, y0)`.
    pub fn rect(grid: Grid, x0: usize, y0: usize, w: usize, h: usize) -> Self {
        RegionMask::from_fn(grid, |ix, iy| ix >= x0 && ix < x0 + w && iy >= y0 && iy < y0 + h)
    }

    /// Pixels at Chebyshev distance ≥ `ring` from the grid edge.
    pub fn interior(grid: Grid, ring: usize) -> Self {
        RegionMask::from_fn(grid, |ix, iy| {
            ix >= ring && iy >= ring && ix + ring < grid.nx && iy + ring < grid.ny
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid.grid()
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.pixels[iy * self.grid.nx + ix]
    }

    /// Like [`get`](Self::get) but treats everything outside the grid as unmasked.
    fn filled(&self, ix: isize, iy: isize) -> bool {
        ix >= 0
            && iy >= 0
            && (ix as usize) < self.grid.nx
            && (iy as usize) < self.grid.ny
            && self.get(ix as usize, iy as usize)
    }

    pub fn pixels(&self) -> &[bool] {
        &self.pixels
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.pixels.iter().any(|&b| b)
    }

    /// Flat indices of masked pixels, ascending.
    pub fn indices(&self) -> Vec<usize> {
        self.pixels.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn volume(&self) -> f64 {
        self.count() as f64 * self.grid().cell_area()
    }

    /// Length of edges separating a masked pixel from an unmasked or exterior one.
    pub fn boundary_area(&self) -> f64 {
        let g = self.grid();
        let (mut vertical, mut horizontal) = (0usize, 0usize);
        for iy in 0..g.ny as isize {
            for ix in 0..g.nx as isize {
                if !self.filled(ix, iy) {
                    continue;
                }
                vertical += usize::from(!self.filled(ix - 1, iy)) + usize::from(!self.filled(ix + 1, iy));
                horizontal += usize::from(!self.filled(ix, iy - 1)) + usize::from(!self.filled(ix, iy + 1));
            }
        }
        vertical as f64 * g.dy() + horizontal as f64 * g.dx()
    }

    /// Convex plus concave outline corners.
    pub fn corner_count(&self) -> usize {
        let g = self.grid();
        let mut corners = 0;
        for vy in 0..=g.ny as isize {
            for vx in 0..=g.nx as isize {
                let ll = self.filled(vx - 1, vy - 1);
                let lr = self.filled(vx, vy - 1);
                let ul = self.filled(vx - 1, vy);
                let ur = self.filled(vx, vy);
                corners += match [ll, lr, ul, ur].iter().filter(|&&b| b).count() {
                    1 | 3 => 1,
                    2 if ll == ur => 2,
                    _ => 0,
                };
            }
        }
        corners
    }

    pub fn stats(&self) -> RegionStats {
        RegionStats {
            pixel_count: self.count(),
            volume: self.volume(),
            boundary_area: self.boundary_area(),
            corner_count: self.corner_count(),
        }
    }

    pub fn is_disjoint(&self, other: &RegionMask) -> bool {
        self.pixels.iter().zip(&other.pixels).all(|(a, b)| !(a & b))
    }

    pub fn and_not(&self, other: &RegionMask) -> RegionMask {
        let pixels = self.pixels.iter().zip(&other.pixels).map(|(a, b)| *a && !*b).collect();
        RegionMask { grid: self.grid, pixels }
    }

    /// Pixels within Chebyshev distance `r` of the mask.
    pub fn dilate(&self, r: usize) -> RegionMask {
        let g = self.grid();
        let r = r as isize;
        RegionMask::from_fn(g, |ix, iy| {
            let (ix, iy) = (ix as isize, iy as isize);
            (-r..=r).any(|dy| (-r..=r).any(|dx| self.filled(ix + dx, iy + dy)))
        })
    }

    /// Smallest Chebyshev pixel distance between two masks.
    pub fn separation(&self, other: &RegionMask) -> Option<usize> {
        let g = self.grid();
        let a = self.indices();
        let b = other.indices();
        let mut best: Option<usize> = None;
        for &p in &a {
            let (ax, ay) = g.coords(p);
            for &q in &b {
                let (bx, by) = g.coords(q);
                let d = ax.abs_diff(bx).max(ay.abs_diff(by));
                best = Some(best.map_or(d, |c| c.min(d)));
            }
        }
        best
    }

    /// Run-length encoding `NXxNY:r0,r1,...`, runs alternate starting with unmasked.
    pub fn to_rle(&self) -> String {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &b in &self.pixels {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        runs.push(len);
        let body: Vec<String> = runs.iter().map(|r| r.to_string()).collect();
        format!("{}x{}:{}", self.grid.nx, self.grid.ny, body.join(","))
    }

    pub fn from_rle(grid: Grid, s: &str) -> Result<Self> {
        let (dims, body) = s.split_once(':').ok_or_else(|| Error::Parse(format!("mask {s:?} lacks ':'")))?;
        let expected = format!("{}x{}", grid.nx, grid.ny);
        if dims.trim() != expected {
            return Err(Error::Parse(format!("mask dimensions {dims} do not match grid {expected}")));
        }
        let mut pixels = Vec::with_capacity(grid.n_pixels());
        let mut value = false;
        for run in body.split(',') {
            let n: usize = run.trim().parse().map_err(|e| Error::Parse(format!("mask run {run:?}: {e}")))?;
            pixels.extend(std::iter::repeat_n(value, n));
            value = !value;
        }
        RegionMask::from_pixels(grid, pixels)
    }
}

/// A pair of disjoint subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionPair {
    pub a: RegionMask,
    pub b: RegionMask,
    /// Divider column for volume sweeps, rectangle `(w, h)` for area sweeps.
    pub label: (usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepProtocol {
    Volume { buffer: usize, include_cell_boundary: bool },
    Area { fixed_volume: usize, buffer: usize, include_cell_boundary: bool },
}

impl SweepProtocol {
    pub fn describe(&self) -> String {
        match self {
            SweepProtocol::Volume { buffer, include_cell_boundary } => {
                format!("volume buffer={buffer} include_cell_boundary={include_cell_boundary}")
            }
            SweepProtocol::Area { fixed_volume, buffer, include_cell_boundary } => {
                format!("area fixed_volume={fixed_volume} buffer={buffer} include_cell_boundary={include_cell_boundary}")
            }
        }
    }

    fn include_cell_boundary(&self) -> bool {
        match self {
            SweepProtocol::Volume { include_cell_boundary, .. } | SweepProtocol::Area { include_cell_boundary, .. } => {
                *include_cell_boundary
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Subsystem volume (m²) for volume sweeps, A's outline length (m) for area sweeps.
    pub abscissa: f64,
    pub mi: f64,
    pub stats: RegionStats,
    pub label: (usize, usize),
    pub a: RegionMask,
    pub b: RegionMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub protocol: SweepProtocol,
    pub grid: Grid,
    /// Pixels available to the protocol (grid minus any excluded ring).
    pub region_pixels: usize,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// `(n_A / N_total, MI)` pairs.
    pub fn pixel_fractions(&self) -> Vec<(f64, f64)> {
        self.points.iter().map(|p| (p.stats.pixel_count as f64 / self.region_pixels as f64, p.mi)).collect()
    }

    pub fn mi_values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.mi).collect()
    }
}

/// `(max − min) / mean` of a series.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (max - min) / mean.abs()
}

fn active_ring(include_cell_boundary: bool) -> usize {
    if include_cell_boundary {
        0
    } else {
        1
    }
}

/// Vertical-divider sweep: A grows from the left, B is everything right of
/// the divider plus `buffer` columns.
pub fn volume_sweep(grid: Grid, buffer: usize, include_cell_boundary: bool) -> Result<Vec<RegionPair>> {
    if buffer == 0 {
        return Err(Error::Domain("volume sweep buffer must be at least 1 pixel".into()));
    }
    if grid.nx < 4 {
        return Err(Error::GridTooSmall(format!("volume sweep needs at least 4 columns, got {}", grid.nx)));
    }
    let ring = active_ring(include_cell_boundary);
    let (lo, hi) = (ring, grid.nx - ring);
    let (row_lo, row_hi) = (ring, grid.ny.saturating_sub(ring));
    if hi < lo + buffer + 2 || row_hi <= row_lo {
        return Err(Error::GridTooSmall(format!("{}x{} grid cannot host buffer {buffer}", grid.nx, grid.ny)));
    }
    let rows = row_hi - row_lo;
    Ok((lo + 1..=hi - buffer - 1)
        .map(|d| RegionPair {
            a: RegionMask::rect(grid, lo, row_lo, d - lo, rows),
            b: RegionMask::rect(grid, d + buffer, row_lo, hi - d - buffer, rows),
            label: (d, 0),
        })
        .collect())
}

/// Constant-volume rectangle family: centred `w × h` rectangles with
/// `w·h = fixed_volume`, B the rest of the active region beyond a buffer ring.
/// Ordered by A's perimeter, then width.
pub fn area_sweep(grid: Grid, fixed_volume: usize, buffer: usize, include_cell_boundary: bool) -> Result<Vec<RegionPair>> {
    if buffer == 0 {
        return Err(Error::Domain("area sweep buffer must be at least 1 pixel".into()));
    }
    let ring = active_ring(include_cell_boundary);
    let width = grid.nx.saturating_sub(2 * ring);
    let height = grid.ny.saturating_sub(2 * ring);
    let region = RegionMask::interior(grid, ring);
    let mut pairs = Vec::new();
    for w in 1..=fixed_volume {
        if fixed_volume % w != 0 {
            continue;
        }
        let h = fixed_volume / w;
        if w + 2 * buffer > width || h + 2 * buffer > height {
            continue;
        }
        let a = RegionMask::rect(grid, ring + (width - w) / 2, ring + (height - h) / 2, w, h);
        let b = region.and_not(&a.dilate(buffer));
        if b.is_empty() {
            continue;
        }
        pairs.push(RegionPair { a, b, label: (w, h) });
    }
    if pairs.is_empty() {
        return Err(Error::NoFactorization(fixed_volume));
    }
    pairs.sort_by(|x, y| {
        x.a.boundary_area().total_cmp(&y.a.boundary_area()).then(x.label.0.cmp(&y.label.0))
    });
    Ok(pairs)
}

/// Evaluates `I(A:B)` for every pair, in parallel over a shared entropy cache.
pub fn evaluate_sweep(gamma: &CovarianceMatrix, pairs: Vec<RegionPair>, protocol: SweepProtocol) -> Result<SweepResult> {
    let grid = match pairs.first() {
        Some(p) => p.a.grid(),
        None => return Err(Error::Domain("empty sweep".into())),
    };
    if gamma.labelling() != Labelling::RealSpace {
        return Err(Error::Labelling("RealSpace"));
    }
    if gamma.n() != grid.n_pixels() {
        return Err(Error::DimensionMismatch { expected: grid.n_pixels(), got: gamma.n() });
    }
    let cache = EntropyCache::new(gamma);
    let points = pairs
        .into_par_iter()
        .map(|pair| {
            if !pair.a.is_disjoint(&pair.b) {
                return Err(Error::Overlap(pair.a.and_not(&pair.a.and_not(&pair.b)).count()));
            }
            let mi = cache.mutual_information(&pair.a.indices(), &pair.b.indices())?;
            let stats = pair.a.stats();
            let abscissa = match protocol {
                SweepProtocol::Volume { .. } => stats.volume,
                SweepProtocol::Area { .. } => stats.boundary_area,
            };
            Ok(SweepPoint { abscissa, mi, stats, label: pair.label, a: pair.a, b: pair.b })
        })
        .collect::<Result<Vec<_>>>()?;
    let region_pixels = RegionMask::interior(grid, active_ring(protocol.include_cell_boundary())).count();
    Ok(SweepResult { protocol, grid, region_pixels, points })
}

/// Per-pixel mutual information with the rest of the grid interior.
#[derive(Debug, Clone, PartialEq)]
pub struct MiMap {
    pub grid: Grid,
    /// `None` on the excluded outer ring.
    pub values: Vec<Option<f64>>,
}

impl MiMap {
    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        self.values[self.grid.pixel(ix, iy)]
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

/// `I({p} : interior ∖ {p})` for every pixel `p` off the outer ring.
pub fn mi_map(gamma: &CovarianceMatrix, grid: Grid) -> Result<MiMap> {
    if grid.nx < 3 || grid.ny < 3 {
        return Err(Error::GridTooSmall(format!("MI map needs at least 3x3, got {}x{}", grid.nx, grid.ny)));
    }
    if gamma.labelling() != Labelling::RealSpace {
        return Err(Error::Labelling("RealSpace"));
    }
    if gamma.n() != grid.n_pixels() {
        return Err(Error::DimensionMismatch { expected: grid.n_pixels(), got: gamma.n() });
    }
    let interior = RegionMask::interior(grid, 1).indices();
    let cache = EntropyCache::new(gamma);
    let s_interior = cache.entropy(&interior)?;
    let computed: Vec<(usize, f64)> = interior
        .par_iter()
        .map(|&p| {
            let rest: Vec<usize> = interior.iter().copied().filter(|&q| q != p).collect();
            let mi = if rest.is_empty() {
                0.0
            } else {
                let s_a = cache.entropy(&[p])?;
                let s_b = cache.entropy(&rest)?;
                let raw = s_a + s_b - s_interior;
                let slack = 1e-8 * (s_a + s_b).abs().max(1.0);
                if raw < -slack {
                    return Err(Error::Domain(format!("negative mutual information {raw:e} at pixel {p}")));
                }
                raw.max(0.0)
            };
            Ok((p, mi))
        })
        .collect::<Result<_>>()?;
    let mut values = vec![None; grid.n_pixels()];
    for (p, mi) in computed {
        values[p] = Some(mi);
    }
    Ok(MiMap { grid, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Grid {
        Grid::square(n as f64, n).unwrap()
    }

    /// Outline length counted over lattice edges rather than per pixel.
    fn brute_perimeter(m: &RegionMask) -> f64 {
        let g = m.grid();
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        let mut len = 0.0;
        for y in 0..ny {
            for x in 0..=nx {
                if m.filled(x - 1, y) != m.filled(x, y) {
                    len += g.dy();
                }
            }
        }
        for y in 0..=ny {
            for x in 0..nx {
                if m.filled(x, y - 1) != m.filled(x, y) {
                    len += g.dx();
                }
            }
        }
        len
    }

    /// Corners as vertices where horizontal and vertical outline edges meet.
    fn brute_corners(m: &RegionMask) -> usize {
        let g = m.grid();
        let mut total = 0;
        for vy in 0..=g.ny as isize {
            for vx in 0..=g.nx as isize {
                let h = [vx - 1, vx].iter().filter(|&&x| m.filled(x, vy - 1) != m.filled(x, vy)).count();
                let v = [vy - 1, vy].iter().filter(|&&y| m.filled(vx - 1, y) != m.filled(vx, y)).count();
                total += h.min(v);
            }
        }
        total
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn stats_match_brute_force(nx in 1usize..=8, ny in 1usize..=8, bits in proptest::collection::vec(any::<bool>(), 64)) {
            let g = Grid::new(nx as f64 * 0.5, ny as f64 * 2.0, nx, ny).unwrap();
            let m = RegionMask::from_pixels(g, bits[..nx * ny].to_vec()).unwrap();
            prop_assert!((m.boundary_area() - brute_perimeter(&m)).abs() < 1e-9);
            prop_assert_eq!(m.corner_count(), brute_corners(&m));
        }

        #[test]
        fn rle_round_trip(nx in 1usize..=9, ny in 1usize..=9, bits in proptest::collection::vec(any::<bool>(), 81)) {
            let g = grid(nx.max(ny));
            let g = Grid::new(g.lx, g.ly, nx, ny).unwrap();
            let m = RegionMask::from_pixels(g, bits[..nx * ny].to_vec()).unwrap();
            prop_assert_eq!(RegionMask::from_rle(g, &m.to_rle()).unwrap(), m);
        }
    }

    #[test]
    fn rectangle_stats() {
        let g = Grid::new(10.0, 20.0, 10, 10).unwrap();
        let r = RegionMask::rect(g, 2, 3, 4, 2);
        let s = r.stats();
        assert_eq!(s.pixel_count, 8);
        assert_eq!(s.volume, 16.0);
        assert_eq!(s.boundary_area, 2.0 * (4.0 * 1.0 + 2.0 * 2.0));
        assert_eq!(s.corner_count, 4);
        // L-shape has 6 corners, diagonal pair 8.
        let l = RegionMask::from_fn(g, |x, y| (x < 2 && y < 3) || (x < 3 && y < 1));
        assert_eq!(l.corner_count(), 6);
        let d = RegionMask::from_fn(g, |x, y| (x, y) == (0, 0) || (x, y) == (1, 1));
        assert_eq!(d.corner_count(), 8);
    }

    #[test]
    fn rle_format() {
        let g = grid(3);
        let m = RegionMask::from_fn(g, |x, y| y == 1 && x > 0);
        assert_eq!(m.to_rle(), "3x3:4,2,3");
        let full = RegionMask::from_fn(g, |_, _| true);
        assert_eq!(full.to_rle(), "3x3:0,9");
        assert!(RegionMask::from_rle(grid(4), "3x3:9").is_err());
    }

    #[test]
    fn volume_sweep_counts_and_invariants() {
        let g = Grid::square(5e-3, 20).unwrap();
        let pairs = volume_sweep(g, 1, true).unwrap();
        assert_eq!(pairs.len(), 18);
        for p in &pairs {
            assert!(p.a.is_disjoint(&p.b));
            assert_eq!(p.a.separation(&p.b), Some(2));
            assert_eq!(p.a.corner_count(), 4);
            // Interface is the full column height.
            assert_eq!(p.a.count() % 20, 0);
            assert_eq!(p.a.count() + p.b.count() + 20, 400);
        }
        // With an odd column count the midpoint divider splits evenly.
        let odd = Grid::new(21.0, 20.0, 21, 20).unwrap();
        let pairs_odd = volume_sweep(odd, 1, true).unwrap();
        let mid = &pairs_odd[pairs_odd.len() / 2];
        assert_eq!(mid.a.count(), mid.b.count());
        assert_eq!(volume_sweep(g, 1, false).unwrap().len(), 16);
        assert!(volume_sweep(grid(3), 1, true).is_err());
        assert!(volume_sweep(g, 0, true).is_err());
    }

    #[test]
    fn volume_sweep_small_excluded_enumeration() {
        let g = grid(6);
        let pairs = volume_sweep(g, 1, false).unwrap();
        let expect = [
            (RegionMask::rect(g, 1, 1, 1, 4), RegionMask::rect(g, 3, 1, 2, 4)),
            (RegionMask::rect(g, 1, 1, 2, 4), RegionMask::rect(g, 4, 1, 1, 4)),
        ];
        assert_eq!(pairs.len(), 2);
        for (p, (a, b)) in pairs.iter().zip(expect.iter()) {
            assert_eq!(&p.a, a);
            assert_eq!(&p.b, b);
        }
        assert_eq!(pairs[0].a.to_rle(), "6x6:7,1,5,1,5,1,5,1,10");
    }

    #[test]
    fn area_sweep_family() {
        let g = grid(20);
        let pairs = area_sweep(g, 36, 1, true).unwrap();
        let dims: Vec<(usize, usize)> = pairs.iter().map(|p| p.label).collect();
        assert_eq!(dims, vec![(6, 6), (4, 9), (9, 4), (3, 12), (12, 3), (2, 18), (18, 2)]);
        for p in &pairs {
            assert_eq!(p.a.count(), 36);
            assert_eq!(p.a.corner_count(), 4);
            assert!(p.a.is_disjoint(&p.b));
            assert_eq!(p.a.separation(&p.b), Some(2));
        }
        let perims: Vec<f64> = pairs.iter().map(|p| p.a.boundary_area()).collect();
        assert!(perims.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn area_sweep_small_enumeration() {
        let g = grid(12);
        let pairs = area_sweep(g, 16, 1, true).unwrap();
        let got: Vec<((usize, usize), f64)> = pairs.iter().map(|p| (p.label, p.a.boundary_area())).collect();
        assert_eq!(got, vec![((4, 4), 16.0), ((2, 8), 20.0), ((8, 2), 20.0)]);
        assert!(matches!(area_sweep(g, 13, 1, true), Err(Error::NoFactorization(13))));
    }

    #[test]
    fn relative_spread_values() {
        assert_eq!(relative_spread(&[1.0, 1.0]), 0.0);
        assert!((relative_spread(&[1.0, 3.0]) - 1.0).abs() < 1e-15);
    }
}
