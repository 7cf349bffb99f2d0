//! Batch front-end: builds states from a [`RunConfig`], runs the sweep,
//! map, reconstruction and fit protocols, and writes CSV (and SVG) outputs.
//!
//! Every output file starts with `#` metadata lines carrying the software
//! version, the config hash and the fit-argument convention.
//!
//! Exit codes: 0 ok, 2 config error, 3 numerical failure, 4 unphysical covariance.

pub mod config;
pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use config::{DispersionKind, RunConfig, SampleTimes};

use crate::error::{Error, Result};
use crate::fitting::{area_law_fit, calabrese_fit, AreaLawFit, CalabreseFit, FIT_ARGUMENT_CONVENTION};
use crate::gaussian::{thermal_momentum_covariance, to_real_space, CovarianceMatrix};
use crate::geometry::{build_basis, ModeBasis};
use crate::physics::{derive_params, dispersion_linear, dispersion_thin_film, quantum_regime_report, DerivedParams};
use crate::reconstruct::{default_sample_times, fit_covariance_with, synth_two_point, FitOptions, ReconstructionResult, TwoPointSeries};
use crate::regions::{area_sweep, evaluate_sweep, mi_map, volume_sweep, MiMap, SweepProtocol, SweepResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Params,
    SweepVolume,
    SweepArea,
    MiMap,
    Reconstruct,
    FitCalabrese,
    FitArea,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub svg: bool,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Parse(_) => 2,
        Error::Unphysical { .. } => 4,
        _ => 3,
    }
}

pub fn derived(cfg: &RunConfig) -> Result<DerivedParams> {
    derive_params(&cfg.film)
}

pub fn basis(cfg: &RunConfig, d: &DerivedParams) -> Result<Arc<ModeBasis>> {
    let (c, mass, h0, dd) = (d.c3, cfg.film.mass, cfg.film.h0, *d);
    let b = match cfg.dispersion {
        DispersionKind::Linear => build_basis(cfg.grid, cfg.boundary, move |k| dispersion_linear(k, c, mass))?,
        DispersionKind::ThinFilm => build_basis(cfg.grid, cfg.boundary, move |k| dispersion_thin_film(k, &dd, h0))?,
    };
    Ok(Arc::new(b))
}

/// Thermal pixel-space covariance for the configured film and cell.
pub fn real_space_state(cfg: &RunConfig) -> Result<CovarianceMatrix> {
    let d = derived(cfg)?;
    let b = basis(cfg, &d)?;
    let g = thermal_momentum_covariance(&b, cfg.film.temperature)?;
    to_real_space(&g, &b, &d)
}

fn provenance(cfg: &RunConfig) -> String {
    format!(
        "# filmfield {VERSION}\n# config_sha256 = {}\n# fit_argument = {FIT_ARGUMENT_CONVENTION}\n# boundary = {} alpha={:e}\n# temperature_k = {:e}\n",
        cfg.hash(),
        cfg.boundary.kind.name(),
        cfg.boundary.alpha,
        cfg.film.temperature
    )
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

pub fn params_report(cfg: &RunConfig) -> Result<String> {
    let d = derived(cfg)?;
    let b = basis(cfg, &d)?;
    let regime = quantum_regime_report(&b, cfg.film.temperature);
    let f = &cfg.film;
    let mut s = provenance(cfg);
    let _ = writeln!(s, "film.h0 = {:e} m", f.h0);
    let _ = writeln!(s, "film.alpha_vdw = {:e} m^5 s^-2", f.alpha_vdw);
    let _ = writeln!(s, "film.sigma = {:e} N/m", f.sigma);
    let _ = writeln!(s, "film.rho = {:e} kg/m^3", f.rho);
    let _ = writeln!(s, "film.m4 = {:e} kg", f.m4);
    let _ = writeln!(s, "film.temperature = {:e} K", f.temperature);
    let _ = writeln!(s, "film.mass = {:e} kg", f.mass);
    let _ = writeln!(s, "g_eff = {:.6e} m/s^2", d.g_eff);
    let _ = writeln!(s, "ell_c = {:.6e} m", d.ell_c);
    let _ = writeln!(s, "c3 = {:.6} m/s", d.c3);
    let _ = writeln!(s, "luttinger_k = {:.6e} m", d.luttinger_k);
    let _ = writeln!(s, "dispersion = {}", cfg.dispersion.name());
    let _ = writeln!(s, "modes = {}", b.n_modes());
    let (lo, hi) = regime.modes.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m.omega), hi.max(m.omega)));
    let _ = writeln!(s, "omega_min = {lo:.6e} rad/s");
    let _ = writeln!(s, "omega_max = {hi:.6e} rad/s");
    let _ = writeln!(s, "quantum_temperature = {:.6e} K", regime.quantum_temperature);
    let n_quantum = regime.modes.iter().filter(|m| m.quantum).count();
    let _ = writeln!(s, "quantum_modes = {n_quantum} of {}", regime.modes.len());
    Ok(s)
}

pub fn sweep_volume(cfg: &RunConfig) -> Result<SweepResult> {
    let gamma = real_space_state(cfg)?;
    let o = &cfg.sweep;
    let pairs = volume_sweep(cfg.grid, o.buffer, o.include_cell_boundary)?;
    evaluate_sweep(&gamma, pairs, SweepProtocol::Volume { buffer: o.buffer, include_cell_boundary: o.include_cell_boundary })
}

pub fn sweep_area(cfg: &RunConfig) -> Result<SweepResult> {
    let gamma = real_space_state(cfg)?;
    let o = &cfg.sweep;
    let pairs = area_sweep(cfg.grid, o.fixed_volume, o.buffer, o.include_cell_boundary)?;
    let protocol = SweepProtocol::Area { fixed_volume: o.fixed_volume, buffer: o.buffer, include_cell_boundary: o.include_cell_boundary };
    evaluate_sweep(&gamma, pairs, protocol)
}

pub fn mi_map_for(cfg: &RunConfig) -> Result<MiMap> {
    mi_map(&real_space_state(cfg)?, cfg.grid)
}

#[derive(Debug, Clone)]
pub struct ReconstructionReport {
    pub result: ReconstructionResult,
    pub relative_error: f64,
    pub series: TwoPointSeries,
}

/// Synthesises (or loads) a series, fits it and scores it against the thermal state.
pub fn reconstruct_run(cfg: &RunConfig) -> Result<ReconstructionReport> {
    let d = derived(cfg)?;
    let b = basis(cfg, &d)?;
    let truth = thermal_momentum_covariance(&b, cfg.film.temperature)?;
    let o = &cfg.reconstruct;
    let n_modes = if o.n_modes == 0 { b.n_modes() } else { o.n_modes.min(b.n_modes()) };
    let series = match &o.input {
        Some(dir) => TwoPointSeries::read_dir(dir)?,
        None => {
            let times = match &o.times {
                SampleTimes::Auto => default_sample_times(&b, n_modes)?,
                SampleTimes::List(ts) => ts.clone(),
            };
            let clean = synth_two_point(&truth, &b, &d, &times, o.quadrature, 0.0, o.seed)?;
            if o.noise_sigma > 0.0 {
                let sigma = o.noise_sigma * clean.mean_abs_signal();
                synth_two_point(&truth, &b, &d, &times, o.quadrature, sigma, o.seed)?
            } else {
                clean
            }
        }
    };
    let opts = FitOptions { n_modes: Some(n_modes), ..FitOptions::default() };
    let result = fit_covariance_with(&series, &b, &d, &opts)?;
    let relative_error = result.relative_error(&truth)?;
    Ok(ReconstructionReport { result, relative_error, series })
}

fn mask_metadata(sweep: &SweepResult) -> String {
    let mut s = format!("# protocol = {}\n# region_pixels = {}\n", sweep.protocol.describe(), sweep.region_pixels);
    for (i, p) in sweep.points.iter().enumerate() {
        let _ = writeln!(s, "# mask {i} A = {}", p.a.to_rle());
        let _ = writeln!(s, "# mask {i} B = {}", p.b.to_rle());
    }
    s
}

pub fn volume_sweep_csv(cfg: &RunConfig, sweep: &SweepResult, fit: Option<&CalabreseFit>) -> String {
    let mut s = provenance(cfg);
    s.push_str(&mask_metadata(sweep));
    s.push_str("divider_index,volume_m2,mi_nats\n");
    for p in &sweep.points {
        let _ = writeln!(s, "{},{:e},{:e}", p.label.0, p.abscissa, p.mi);
    }
    if let Some(f) = fit {
        let _ = writeln!(s, "# fit kappa1 = {:e}", f.kappa1);
        let _ = writeln!(s, "# fit kappa2 = {:e}", f.kappa2);
        let _ = writeln!(s, "# fit kappa3 = {:e}", f.kappa3);
        let _ = writeln!(s, "# fit rms = {:e}", f.rms);
        let _ = writeln!(s, "# fit converged = {}", f.converged);
    }
    s
}

pub fn area_sweep_csv(cfg: &RunConfig, sweep: &SweepResult, fit: Option<&AreaLawFit>) -> String {
    let mut s = provenance(cfg);
    s.push_str(&mask_metadata(sweep));
    s.push_str("perimeter_m,mi_nats,corner_count,width_px,height_px\n");
    for p in &sweep.points {
        let _ = writeln!(s, "{:e},{:e},{},{},{}", p.abscissa, p.mi, p.stats.corner_count, p.label.0, p.label.1);
    }
    if let Some(f) = fit {
        let _ = writeln!(s, "# fit slope = {:e}", f.slope);
        let _ = writeln!(s, "# fit intercept = {:e}", f.intercept);
        let _ = writeln!(s, "# fit r2 = {:e}", f.r2);
        let _ = writeln!(s, "# fit super_linear = {}", f.super_linear);
    }
    s
}

pub fn mi_map_csv(cfg: &RunConfig, map: &MiMap) -> String {
    let mut s = provenance(cfg);
    s.push_str("# outer ring excluded\nix,iy,mi_nats\n");
    for iy in 0..map.grid.ny {
        for ix in 0..map.grid.nx {
            if let Some(v) = map.get(ix, iy) {
                let _ = writeln!(s, "{ix},{iy},{v:e}");
            }
        }
    }
    s
}

pub fn reconstruction_csv(cfg: &RunConfig, r: &ReconstructionReport) -> String {
    let mut s = provenance(cfg);
    let _ = writeln!(s, "# quadrature = {}", r.series.quadrature.name());
    s.push_str("relative_frobenius_error,residual_rms,n_unidentifiable,condition,n_modes,n_times\n");
    let _ = writeln!(
        s,
        "{:e},{:e},{},{:e},{},{}",
        r.relative_error,
        r.result.residual_rms,
        r.result.unidentifiable_pairs.len(),
        r.result.condition,
        r.result.n_modes(),
        r.series.times.len()
    );
    s
}

/// Runs one command, writing its outputs under `opts.out_dir`. Returns the
/// written paths; `params` also returns its report text as the first element.
pub fn run(cmd: Command, cfg: &RunConfig, opts: &RunOptions) -> Result<(Option<String>, Vec<PathBuf>)> {
    let dir = &opts.out_dir;
    let mut written = Vec::new();
    let mut stdout = None;
    match cmd {
        Command::Params => {
            let report = params_report(cfg)?;
            written.push(write_file(dir, "params.txt", &report)?);
            let d = derived(cfg)?;
            let mut buf = Vec::new();
            basis(cfg, &d)?.write_csv(&mut buf)?;
            let mut body = provenance(cfg);
            body.push_str(&String::from_utf8_lossy(&buf));
            written.push(write_file(dir, "basis.csv", &body)?);
            stdout = Some(report);
        }
        Command::SweepVolume | Command::FitCalabrese => {
            let sweep = sweep_volume(cfg)?;
            let fit = if cmd == Command::FitCalabrese { Some(calabrese_fit(&sweep)?) } else { None };
            written.push(write_file(dir, "volume_sweep.csv", &volume_sweep_csv(cfg, &sweep, fit.as_ref()))?);
            if let Some(f) = &fit {
                let mut s = provenance(cfg);
                s.push_str("kappa1,kappa2,kappa3,rms,converged,n_total\n");
                let _ = writeln!(s, "{:e},{:e},{:e},{:e},{},{}", f.kappa1, f.kappa2, f.kappa3, f.rms, f.converged, f.n_total);
                written.push(write_file(dir, "calabrese_fit.csv", &s)?);
            }
            if opts.svg {
                let pts: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.abscissa, p.mi)).collect();
                let curve: Option<Vec<(f64, f64)>> = fit.map(|f| {
                    let cell = cfg.grid.cell_area();
                    (1..200)
                        .map(|i| {
                            let frac = i as f64 / 200.0;
                            (frac * sweep.region_pixels as f64 * cell, f.eval(frac))
                        })
                        .filter(|(v, _)| pts.first().is_some_and(|p| *v >= p.0) && pts.last().is_some_and(|p| *v <= p.0))
                        .collect()
                });
                let svg = svg::line_plot("Mutual information vs subsystem volume", "volume (m^2)", "MI (nats)", &pts, curve.as_deref());
                written.push(write_file(dir, "volume_sweep.svg", &svg)?);
            }
        }
        Command::SweepArea | Command::FitArea => {
            let sweep = sweep_area(cfg)?;
            let fit = if cmd == Command::FitArea { Some(area_law_fit(&sweep)?) } else { None };
            written.push(write_file(dir, "area_sweep.csv", &area_sweep_csv(cfg, &sweep, fit.as_ref()))?);
            if let Some(f) = &fit {
                let mut s = provenance(cfg);
                s.push_str("slope,intercept,r2,quadratic,super_linear\n");
                let _ = writeln!(s, "{:e},{:e},{:e},{:e},{}", f.slope, f.intercept, f.r2, f.quadratic, f.super_linear);
                written.push(write_file(dir, "area_fit.csv", &s)?);
            }
            if opts.svg {
                let pts: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.abscissa, p.mi)).collect();
                let line = fit.map(|f| {
                    let (a, b) = (pts[0].0, pts[pts.len() - 1].0);
                    vec![(a, f.slope * a + f.intercept), (b, f.slope * b + f.intercept)]
                });
                let svg = svg::line_plot("Mutual information vs boundary length", "perimeter (m)", "MI (nats)", &pts, line.as_deref());
                written.push(write_file(dir, "area_sweep.svg", &svg)?);
            }
        }
        Command::MiMap => {
            let map = mi_map_for(cfg)?;
            written.push(write_file(dir, "mi_map.csv", &mi_map_csv(cfg, &map))?);
            if opts.svg {
                let svg = svg::heatmap("Single-pixel mutual information", map.grid.nx, map.grid.ny, &map.values);
                written.push(write_file(dir, "mi_map.svg", &svg)?);
            }
        }
        Command::Reconstruct => {
            let report = reconstruct_run(cfg)?;
            written.push(write_file(dir, "reconstruction.csv", &reconstruction_csv(cfg, &report))?);
            if cfg.reconstruct.write_series && cfg.reconstruct.input.is_none() {
                let series_dir = dir.join("series");
                report.series.write_dir(&series_dir)?;
                written.push(series_dir);
            }
        }
    }
    Ok((stdout, written))
}
