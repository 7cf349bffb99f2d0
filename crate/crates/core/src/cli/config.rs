//! Flat `key = value` run configuration.
//!
//! Keys carry a section prefix (`film.h0 = 80e-9`). `#` starts a comment.
//! Grid size and boundary kind are required; everything else has a default.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryKind, BoundarySpec, Grid};
use crate::physics::FilmParams;
use crate::reconstruct::Quadrature;

const REQUIRED: [&str; 5] = ["grid.lx", "grid.ly", "grid.nx", "grid.ny", "boundary.kind"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispersionKind {
    /// `ω = c3 sqrt(k² + (c3 M/ħ)²)`.
    Linear,
    /// Full thin-film surface-wave relation.
    ThinFilm,
}

impl DispersionKind {
    pub fn name(&self) -> &'static str {
        match self {
            DispersionKind::Linear => "linear",
            DispersionKind::ThinFilm => "thin_film",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SampleTimes {
    Auto,
    List(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub buffer: usize,
    pub include_cell_boundary: bool,
    pub fixed_volume: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructOptions {
    pub quadrature: Quadrature,
    pub times: SampleTimes,
    /// Noise scale as a fraction of the mean absolute noiseless signal.
    pub noise_sigma: f64,
    pub seed: u64,
    /// 0 keeps every mode.
    pub n_modes: usize,
    /// Fit this externally produced series instead of synthesising one.
    pub input: Option<PathBuf>,
    pub write_series: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub film: FilmParams,
    pub grid: Grid,
    pub boundary: BoundarySpec,
    pub dispersion: DispersionKind,
    pub sweep: SweepOptions,
    pub reconstruct: ReconstructOptions,
    pub output_dir: PathBuf,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| Error::Config(format!("{key}: cannot parse {v:?}: {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", lineno + 1)))?;
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if !KNOWN_KEYS.contains(&k.as_str()) {
                return Err(Error::Config(format!("line {}: unknown key {k}", lineno + 1)));
            }
            if let Some((first, _)) = kv.get(&k) {
                return Err(Error::Config(format!("line {}: duplicate key {k} (first set on line {first})", lineno + 1)));
            }
            kv.insert(k, (lineno + 1, v));
        }
        for key in REQUIRED {
            if !kv.contains_key(key) {
                return Err(Error::Config(format!("missing required key {key}")));
            }
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.as_str());

        let base = FilmParams::default();
        let num = |k: &str, default: f64| -> Result<f64> { get(k).map_or(Ok(default), |v| parse_num(k, v)) };
        let film = FilmParams {
            h0: num("film.h0", base.h0)?,
            alpha_vdw: num("film.alpha_vdw", base.alpha_vdw)?,
            sigma: num("film.sigma", base.sigma)?,
            rho: num("film.rho", base.rho)?,
            m4: num("film.m4", base.m4)?,
            temperature: num("film.temperature", base.temperature)?,
            mass: num("film.mass", base.mass)?,
        };
        film.validate().map_err(|e| Error::Config(e.to_string()))?;

        let grid = Grid::new(
            parse_num("grid.lx", get("grid.lx").expect("required"))?,
            parse_num("grid.ly", get("grid.ly").expect("required"))?,
            parse_num("grid.nx", get("grid.nx").expect("required"))?,
            parse_num("grid.ny", get("grid.ny").expect("required"))?,
        )
        .map_err(|e| Error::Config(e.to_string()))?;

        let kind = match get("boundary.kind").expect("required") {
            "dirichlet" => BoundaryKind::Dirichlet,
            "neumann" => BoundaryKind::Neumann,
            "robin" => BoundaryKind::Robin,
            other => return Err(Error::Config(format!("boundary.kind: unknown kind {other:?}"))),
        };
        let alpha = num("boundary.alpha", 0.0)?;
        if kind == BoundaryKind::Robin && !kv.contains_key("boundary.alpha") {
            return Err(Error::Config("missing required key boundary.alpha for robin boundaries".into()));
        }
        let include_zero_mode = get("boundary.include_zero_mode").map_or(Ok(false), |v| parse_bool("boundary.include_zero_mode", v))?;
        let boundary = BoundarySpec { kind, alpha, include_zero_mode };

        let dispersion = match get("dispersion.kind").unwrap_or("linear") {
            "linear" => DispersionKind::Linear,
            "thin_film" => DispersionKind::ThinFilm,
            other => return Err(Error::Config(format!("dispersion.kind: unknown kind {other:?}"))),
        };

        let int = |k: &str, default: usize| -> Result<usize> { get(k).map_or(Ok(default), |v| parse_num(k, v)) };
        let sweep = SweepOptions {
            buffer: int("sweep.buffer", 1)?,
            include_cell_boundary: get("sweep.include_cell_boundary").map_or(Ok(true), |v| parse_bool("sweep.include_cell_boundary", v))?,
            fixed_volume: int("sweep.fixed_volume", 36)?,
        };

        let times = match get("reconstruct.times").unwrap_or("auto") {
            "auto" => SampleTimes::Auto,
            list => SampleTimes::List(
                list.split(',').map(|t| parse_num("reconstruct.times", t.trim())).collect::<Result<Vec<f64>>>()?,
            ),
        };
        let reconstruct = ReconstructOptions {
            quadrature: Quadrature::parse(get("reconstruct.quadrature").unwrap_or("field")).map_err(|e| Error::Config(e.to_string()))?,
            times,
            noise_sigma: num("reconstruct.noise_sigma", 0.0)?,
            seed: get("reconstruct.seed").map_or(Ok(0), |v| parse_num("reconstruct.seed", v))?,
            n_modes: int("reconstruct.n_modes", 0)?,
            input: get("reconstruct.input").map(PathBuf::from),
            write_series: get("reconstruct.write_series").map_or(Ok(false), |v| parse_bool("reconstruct.write_series", v))?,
        };
        let output_dir = PathBuf::from(get("output.dir").unwrap_or("out"));

        Ok(RunConfig { film, grid, boundary, dispersion, sweep, reconstruct, output_dir })
    }

    /// Canonical text form; parsing it yields an equal config.
    pub fn emit(&self) -> String {
        let f = &self.film;
        let mut lines = vec![
            format!("film.h0 = {:e}", f.h0),
            format!("film.alpha_vdw = {:e}", f.alpha_vdw),
            format!("film.sigma = {:e}", f.sigma),
            format!("film.rho = {:e}", f.rho),
            format!("film.m4 = {:e}", f.m4),
            format!("film.temperature = {:e}", f.temperature),
            format!("film.mass = {:e}", f.mass),
            format!("grid.lx = {:e}", self.grid.lx),
            format!("grid.ly = {:e}", self.grid.ly),
            format!("grid.nx = {}", self.grid.nx),
            format!("grid.ny = {}", self.grid.ny),
            format!("boundary.kind = {}", self.boundary.kind.name()),
            format!("boundary.alpha = {:e}", self.boundary.alpha),
            format!("boundary.include_zero_mode = {}", self.boundary.include_zero_mode),
            format!("dispersion.kind = {}", self.dispersion.name()),
            format!("sweep.buffer = {}", self.sweep.buffer),
            format!("sweep.include_cell_boundary = {}", self.sweep.include_cell_boundary),
            format!("sweep.fixed_volume = {}", self.sweep.fixed_volume),
            format!("reconstruct.quadrature = {}", self.reconstruct.quadrature.name().to_lowercase()),
        ];
        lines.push(match &self.reconstruct.times {
            SampleTimes::Auto => "reconstruct.times = auto".to_string(),
            SampleTimes::List(ts) => {
                format!("reconstruct.times = {}", ts.iter().map(|t| format!("{t:e}")).collect::<Vec<_>>().join(", "))
            }
        });
        lines.push(format!("reconstruct.noise_sigma = {:e}", self.reconstruct.noise_sigma));
        lines.push(format!("reconstruct.seed = {}", self.reconstruct.seed));
        lines.push(format!("reconstruct.n_modes = {}", self.reconstruct.n_modes));
        if let Some(p) = &self.reconstruct.input {
            lines.push(format!("reconstruct.input = {}", p.display()));
        }
        lines.push(format!("reconstruct.write_series = {}", self.reconstruct.write_series));
        lines.push(format!("output.dir = {}", self.output_dir.display()));
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    /// SHA-256 of the canonical form without the output directory, hex encoded.
    pub fn hash(&self) -> String {
        let text: String = self.emit().lines().filter(|l| !l.starts_with("output.dir")).map(|l| format!("{l}\n")).collect();
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

const KNOWN_KEYS: [&str; 26] = [
    "film.h0",
    "film.alpha_vdw",
    "film.sigma",
    "film.rho",
    "film.m4",
    "film.temperature",
    "film.mass",
    "grid.lx",
    "grid.ly",
    "grid.nx",
    "grid.ny",
    "boundary.kind",
    "boundary.alpha",
    "boundary.include_zero_mode",
    "dispersion.kind",
    "sweep.buffer",
    "sweep.include_cell_boundary",
    "sweep.fixed_volume",
    "reconstruct.quadrature",
    "reconstruct.times",
    "reconstruct.noise_sigma",
    "reconstruct.seed",
    "reconstruct.n_modes",
    "reconstruct.input",
    "reconstruct.write_series",
    "output.dir",
];

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "grid.lx = 5e-3\ngrid.ly = 5e-3\ngrid.nx = 20\ngrid.ny = 20\nboundary.kind = neumann\n";

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(BASE).unwrap();
        assert_eq!(c.film, FilmParams::default());
        assert_eq!(c.sweep.buffer, 1);
        assert!(c.sweep.include_cell_boundary);
        assert_eq!(c.dispersion, DispersionKind::Linear);
        assert_eq!(c.reconstruct.times, SampleTimes::Auto);
    }

    #[test]
    fn missing_key_named() {
        let text = BASE.replace("grid.ny = 20\n", "");
        match RunConfig::parse(&text) {
            Err(Error::Config(msg)) => assert!(msg.contains("grid.ny"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(RunConfig::parse(&format!("{BASE}grid.nz = 3\n")).is_err());
        let e = RunConfig::parse(&format!("{BASE}grid.nx = 3\n")).unwrap_err();
        assert!(e.to_string().contains("line 6"));
    }

    #[test]
    fn emit_round_trip_preserves_hash() {
        let text = format!(
            "{BASE}# comment\nfilm.h0 = 5e-8 # trailing\nreconstruct.times = 0, 0.5, 1.25\nreconstruct.seed = 9\nsweep.include_cell_boundary = false\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        let again = RunConfig::parse(&c.emit()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.hash(), again.hash());
        assert_eq!(c.hash().len(), 64);
        let other = RunConfig::parse(&format!("{BASE}reconstruct.seed = 10\n")).unwrap();
        assert_ne!(c.hash(), other.hash());
        let mut moved = c.clone();
        moved.output_dir = PathBuf::from("elsewhere");
        assert_eq!(c.hash(), moved.hash());
    }

    #[test]
    fn robin_needs_alpha() {
        let text = BASE.replace("neumann", "robin");
        assert!(RunConfig::parse(&text).is_err());
        assert!(RunConfig::parse(&format!("{text}boundary.alpha = 200\n")).is_ok());
    }
}
