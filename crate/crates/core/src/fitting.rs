//! Curve fits for sweep results.
//!
//! The finite-size fit is `MI(f) = κ1 ln[(N/π) sin(πf) + κ2] + κ3` where `f`
//! is the subsystem's pixel fraction and `N` the number of pixels available
//! to the sweep.

use faer::linalg::solvers::SolveLstsq;
use faer::Mat;

use crate::error::{Error, Result};
use crate::regions::{SweepProtocol, SweepResult};

/// Recorded in outputs: the sine argument is π × (pixel fraction).
pub const FIT_ARGUMENT_CONVENTION: &str = "pixel-fraction";

const MAX_ITER: usize = 500;
const KAPPA1_STARTS: [f64; 3] = [0.1, 1.0, 10.0];
const KAPPA2_STARTS: [f64; 3] = [0.0, 1.0, 10.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalabreseFit {
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa3: f64,
    /// RMS residual over the fitted points.
    pub rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// RMS residual of the best starting guess.
    pub start_rms: f64,
    pub n_total: f64,
}

impl CalabreseFit {
    pub fn eval(&self, f: f64) -> f64 {
        calabrese_model(f, self.n_total, self.kappa1, self.kappa2, self.kappa3)
    }
}

pub fn calabrese_model(f: f64, n_total: f64, k1: f64, k2: f64, k3: f64) -> f64 {
    k1 * (chord(f, n_total) + k2).ln() + k3
}

fn chord(f: f64, n_total: f64) -> f64 {
    n_total / std::f64::consts::PI * (std::f64::consts::PI * f).sin()
}

/// Fits a volume sweep using its pixel fractions.
pub fn calabrese_fit(sweep: &SweepResult) -> Result<CalabreseFit> {
    if !matches!(sweep.protocol, SweepProtocol::Volume { .. }) {
        return Err(Error::Domain("the finite-size fit needs a volume sweep".into()));
    }
    calabrese_fit_points(&sweep.pixel_fractions(), sweep.region_pixels as f64)
}

/// Fits `(fraction, value)` points with `fraction ∈ (0, 1)`.
pub fn calabrese_fit_points(points: &[(f64, f64)], n_total: f64) -> Result<CalabreseFit> {
    if points.len() < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: points.len() });
    }
    if points.iter().any(|&(f, y)| !(f > 0.0 && f < 1.0) || !y.is_finite()) {
        return Err(Error::Domain("fit points need fractions in (0, 1) and finite values".into()));
    }
    if !(n_total > 0.0) {
        return Err(Error::Domain(format!("total pixel count must be positive, got {n_total}")));
    }
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let u: Vec<f64> = pts.iter().map(|&(f, _)| chord(f, n_total)).collect();
    let y: Vec<f64> = pts.iter().map(|&(_, v)| v).collect();
    let y_mean = y.iter().sum::<f64>() / y.len() as f64;

    let mut best: Option<(CalabreseFit, f64)> = None;
    for &k1 in &KAPPA1_STARTS {
        for &k2 in &KAPPA2_STARTS {
            let log_mean = u.iter().map(|ui| (ui + k2).ln()).sum::<f64>() / u.len() as f64;
            let start = [k1, k2, y_mean - k1 * log_mean];
            let Some(start_cost) = cost(&u, &y, &start) else { continue };
            let (p, c, converged, iterations) = levenberg_marquardt(&u, &y, start);
            if !converged {
                continue;
            }
            let fit = CalabreseFit {
                kappa1: p[0],
                kappa2: p[1],
                kappa3: p[2],
                rms: (c / y.len() as f64).sqrt(),
                converged,
                iterations,
                start_rms: (start_cost / y.len() as f64).sqrt(),
                n_total,
            };
            if best.as_ref().is_none_or(|(_, bc)| c < *bc) {
                best = Some((fit, c));
            }
        }
    }
    best.map(|(f, _)| f).ok_or(Error::NoConvergence { what: "finite-size fit", iterations: MAX_ITER })
}

/// Sum of squared residuals, `None` if any log argument is non-positive.
fn cost(u: &[f64], y: &[f64], p: &[f64; 3]) -> Option<f64> {
    let mut s = 0.0;
    for (ui, yi) in u.iter().zip(y) {
        let arg = ui + p[1];
        if !(arg > 0.0) {
            return None;
        }
        let r = p[0] * arg.ln() + p[2] - yi;
        s += r * r;
    }
    s.is_finite().then_some(s)
}

/// Damped Gauss-Newton with Marquardt scaling; only cost-reducing steps are taken.
fn levenberg_marquardt(u: &[f64], y: &[f64], start: [f64; 3]) -> ([f64; 3], f64, bool, usize) {
    let mut p = start;
    let Some(mut c) = cost(u, y, &p) else { return (p, f64::INFINITY, false, 0) };
    let mut lambda = 1e-3;
    for iter in 0..MAX_ITER {
        let mut jtj = [[0.0f64; 3]; 3];
        let mut jtr = [0.0f64; 3];
        for (ui, yi) in u.iter().zip(y) {
            let arg = ui + p[1];
            let row = [arg.ln(), p[0] / arg, 1.0];
            let r = p[0] * arg.ln() + p[2] - yi;
            for a in 0..3 {
                jtr[a] += row[a] * r;
                for b in 0..3 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let grad = jtr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if grad <= 1e-14 * (1.0 + c) || c == 0.0 {
            return (p, c, true, iter);
        }
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj;
            for k in 0..3 {
                a[k][k] += lambda * jtj[k][k].max(1e-300);
            }
            let Some(step) = solve3(a, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = [p[0] - step[0], p[1] - step[1], p[2] - step[2]];
            match cost(u, y, &trial) {
                Some(tc) if tc < c => {
                    let rel_step = step.iter().zip(&p).map(|(s, v)| s.abs() / (v.abs() + 1e-12)).fold(0.0, f64::max);
                    let rel_gain = (c - tc) / c;
                    p = trial;
                    c = tc;
                    lambda = (lambda / 10.0).max(1e-15);
                    accepted = true;
                    if rel_step < 1e-13 || rel_gain < 1e-15 {
                        return (p, c, true, iter + 1);
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // No descent direction left at machine precision.
            return (p, c, true, iter);
        }
    }
    (p, c, false, MAX_ITER)
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let m = Mat::from_fn(3, 3, |i, j| a[i][j]);
    let rhs = Mat::from_fn(3, 1, |i, _| b[i]);
    let x = m.col_piv_qr().solve_lstsq(&rhs);
    let out = [x[(0, 0)], x[(1, 0)], x[(2, 0)]];
    out.iter().all(|v| v.is_finite()).then_some(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Coefficient of the quadratic term in the diagnostic fit.
    pub quadratic: f64,
    pub rss_linear: f64,
    pub rss_quadratic: f64,
    /// Quadratic term is positive and cuts the residual by more than 10×.
    pub super_linear: bool,
}

/// Fits an area sweep against A's outline length.
pub fn area_law_fit(sweep: &SweepResult) -> Result<AreaLawFit> {
    if !matches!(sweep.protocol, SweepProtocol::Area { .. }) {
        return Err(Error::Domain("the area-law fit needs an area sweep".into()));
    }
    let pts: Vec<(f64, f64)> = sweep.points.iter().map(|p| (p.abscissa, p.mi)).collect();
    area_law_fit_points(&pts)
}

pub fn area_law_fit_points(points: &[(f64, f64)]) -> Result<AreaLawFit> {
    if points.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: points.len() });
    }
    let n = points.len() as f64;
    let x_mean = points.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - x_mean).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - x_mean) * (p.1 - y_mean)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - y_mean).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Domain("area-law fit needs at least two distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let rss_linear: f64 = points.iter().map(|p| (p.1 - slope * p.0 - intercept).powi(2)).sum();
    let r2 = if syy > 0.0 {
        1.0 - rss_linear / syy
    } else if rss_linear == 0.0 {
        1.0
    } else {
        0.0
    };

    // Quadratic diagnostic in a centred, scaled abscissa.
    let scale = (sxx / n).sqrt();
    let z = |x: f64| (x - x_mean) / scale;
    let a = Mat::from_fn(points.len(), 3, |i, j| z(points[i].0).powi(j as i32));
    let b = Mat::from_fn(points.len(), 1, |i, _| points[i].1);
    let coef = a.col_piv_qr().solve_lstsq(&b);
    let quadratic = coef[(2, 0)] / (scale * scale);
    let fitted = &a * &coef;
    let rss_quadratic: f64 = (0..points.len()).map(|i| (points[i].1 - fitted[(i, 0)]).powi(2)).sum();
    let super_linear = quadratic > 0.0 && rss_quadratic * 10.0 < rss_linear;

    Ok(AreaLawFit { slope, intercept, r2, quadratic, rss_linear, rss_quadratic, super_linear })
}
