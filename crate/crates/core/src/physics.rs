//! Physical constants, thin-film material parameters and dispersion relations.
//!
//! All frequencies are angular (rad/s). Lengths are in metres.

use crate::error::{Error, Result};
use crate::geometry::ModeBasis;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054571817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub k_b: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants { hbar: HBAR, k_b: K_B };
}

/// Film and material constants.
///
/// The defaults describe an 80 nm helium-4 film on sapphire at 0.3 K. Surface
/// tension, density and atomic mass are configuration defaults and can be
/// overridden.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilmParams {
    /// Equilibrium film thickness (m).
    pub h0: f64,
    /// Van der Waals coefficient (m^5 s^-2).
    pub alpha_vdw: f64,
    /// Surface tension (N/m).
    pub sigma: f64,
    /// Superfluid density (kg/m^3).
    pub rho: f64,
    /// Helium-4 atomic mass (kg).
    pub m4: f64,
    /// Temperature (K).
    pub temperature: f64,
    /// Field mass (kg).
    pub mass: f64,
}

impl Default for FilmParams {
    fn default() -> Self {
        FilmParams {
            h0: 80e-9,
            alpha_vdw: 2.6e-24,
            sigma: 3.54e-4,
            rho: 145.0,
            m4: 6.6465e-27,
            temperature: 0.3,
            mass: 0.0,
        }
    }
}

impl FilmParams {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&str, bool); 7] = [
            ("h0 > 0", self.h0 > 0.0),
            ("alpha_vdw > 0", self.alpha_vdw > 0.0),
            ("sigma >= 0", self.sigma >= 0.0),
            ("rho > 0", self.rho > 0.0),
            ("m4 > 0", self.m4 > 0.0),
            ("temperature >= 0", self.temperature >= 0.0),
            ("mass >= 0", self.mass >= 0.0),
        ];
        for (name, ok) in checks {
            if !ok {
                return Err(Error::Domain(format!("film parameter violates {name}")));
            }
        }
        Ok(())
    }
}

/// Quantities derived from [`FilmParams`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// Van der Waals effective gravity (m/s^2).
    pub g_eff: f64,
    /// Capillary length (m).
    pub ell_c: f64,
    /// Third-sound speed (m/s).
    pub c3: f64,
    /// Luttinger parameter (m).
    pub luttinger_k: f64,
}

pub fn derive_params(film: &FilmParams) -> Result<DerivedParams> {
    film.validate()?;
    let g_eff = 3.0 * film.alpha_vdw / film.h0.powi(4);
    if !g_eff.is_finite() || g_eff <= 0.0 {
        return Err(Error::Domain(format!("effective gravity is not finite and positive: {g_eff}")));
    }
    let c3 = (g_eff * film.h0).sqrt();
    let ell_c = (film.sigma / (film.rho * g_eff)).sqrt();
    let luttinger_k = HBAR * film.rho * c3 / (g_eff * film.m4 * film.m4);
    Ok(DerivedParams { g_eff, ell_c, c3, luttinger_k })
}

/// Inviscid thin-film surface-wave dispersion, ω² = g_eff (1 + ℓ_c² k²) k tanh(k h0).
pub fn dispersion_thin_film(k: f64, d: &DerivedParams, h0: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    (d.g_eff * (1.0 + d.ell_c * d.ell_c * k * k) * k * (k * h0).tanh()).sqrt()
}

/// Klein-Gordon dispersion ω = c sqrt(k² + c² M² / ħ²).
pub fn dispersion_linear(k: f64, c: f64, mass: f64) -> f64 {
    let gap = c * mass / HBAR;
    c * (k * k + gap * gap).sqrt()
}

/// Bose-Einstein occupation at angular frequency `omega` and temperature `t`.
///
/// Returns 0 at `t == 0`. The zero mode (`omega <= 0`) is rejected.
pub fn bose_einstein(omega: f64, t: f64) -> Result<f64> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("occupation queried at omega = {omega}")));
    }
    if t < 0.0 {
        return Err(Error::Domain(format!("negative temperature {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let x = HBAR * omega / (K_B * t);
    Ok(1.0 / x.exp_m1())
}

/// Energy ratio ħω/(k_B T) of one mode and its classification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeRegime {
    pub index: (usize, usize),
    pub omega: f64,
    pub ratio: f64,
    pub quantum: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub modes: Vec<ModeRegime>,
    /// Temperature ħω_min/k_B below which every mode is quantum.
    pub quantum_temperature: f64,
}

impl RegimeReport {
    pub fn all_quantum(&self) -> bool {
        self.modes.iter().all(|m| m.quantum)
    }

    pub fn all_classical(&self) -> bool {
        self.modes.iter().all(|m| !m.quantum)
    }
}

/// Classifies each mode as quantum (ħω ≥ k_B T) or classical.
pub fn quantum_regime_report(modes: &ModeBasis, t: f64) -> RegimeReport {
    let omega_min = modes
        .modes
        .iter()
        .map(|m| m.omega)
        .filter(|w| *w > 0.0)
        .fold(f64::INFINITY, f64::min);
    let report = modes
        .modes
        .iter()
        .map(|m| {
            let ratio = if t == 0.0 { f64::INFINITY } else { HBAR * m.omega / (K_B * t) };
            ModeRegime { index: m.index, omega: m.omega, ratio, quantum: ratio >= 1.0 }
        })
        .collect();
    RegimeReport { modes: report, quantum_temperature: HBAR * omega_min / K_B }
}
