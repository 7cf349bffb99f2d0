//! Independent Fock-space oracles shared by the integration tests.
#![allow(dead_code)]

use faer::{Mat, Side};
use filmfield::gaussian::{CovarianceMatrix, Labelling};

fn shannon(p: impl IntoIterator<Item = f64>) -> f64 {
    p.into_iter().filter(|&x| x > 1e-300).map(|x| -x * x.ln()).sum()
}

fn thermal_weights(nbar: f64, cutoff: usize) -> Vec<f64> {
    let q = nbar / (nbar + 1.0);
    let w: Vec<f64> = (0..cutoff).map(|k| q.powi(k as i32)).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// `-Tr ρ ln ρ` of a single-mode thermal state truncated at `cutoff` levels.
pub fn fock_thermal_entropy(nbar: f64, cutoff: usize) -> f64 {
    shannon(thermal_weights(nbar, cutoff))
}

/// Quadrature covariance of `S(r) (ρ_T ⊗ ρ_T) S(r)†`, ordering (φ_a, φ_b, η_a, η_b).
pub fn two_mode_squeezed_thermal(nbar: f64, r: f64) -> CovarianceMatrix {
    let (ch, sh) = (r.cosh(), r.sinh());
    let s = [[ch, sh, 0.0, 0.0], [sh, ch, 0.0, 0.0], [0.0, 0.0, ch, -sh], [0.0, 0.0, -sh, ch]];
    let v = nbar + 0.5;
    let data = Mat::from_fn(4, 4, |i, j| v * (0..4).map(|k| s[i][k] * s[j][k]).sum::<f64>());
    CovarianceMatrix::new(data, Labelling::MomentumSpace).unwrap()
}

fn expm(k: &Mat<f64>) -> Mat<f64> {
    let n = k.nrows();
    let norm = (0..n).map(|i| (0..n).map(|j| k[(i, j)].abs()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = if norm > 0.25 { (norm / 0.25).log2().ceil() as u32 } else { 0 };
    let a = k * faer::Scale(0.5f64.powi(squarings as i32));
    let mut out = Mat::<f64>::identity(n, n);
    let mut term = Mat::<f64>::identity(n, n);
    for j in 1..=30 {
        term = &term * &a * faer::Scale(1.0 / j as f64);
        out += &term;
    }
    for _ in 0..squarings {
        out = &out * &out;
    }
    out
}

pub struct TwoModeEntropies {
    pub total: f64,
    pub reduced: f64,
}

/// Entropies of `exp(r(a†b† − ab)) (ρ_T ⊗ ρ_T) exp(−r(a†b† − ab))` in a truncated
/// Fock space. The squeezer conserves `n_a − n_b`, so each difference sector is
/// exponentiated separately.
pub fn fock_two_mode_squeezed_thermal(nbar: f64, r: f64, cutoff: usize) -> TwoModeEntropies {
    let p = thermal_weights(nbar, cutoff);
    let mut total = 0.0;
    let mut marginal_a = vec![0.0; cutoff];
    let c = cutoff as i64;
    for delta in -(c - 1)..c {
        let off = delta.unsigned_abs() as usize;
        let len = cutoff - off;
        // Sector basis |k + Δ, k> (Δ ≥ 0) or |k, k − Δ> (Δ < 0).
        let level = |k: usize| if delta >= 0 { (k + off, k) } else { (k, k + off) };
        let gen = Mat::from_fn(len, len, |i, j| {
            if i == j + 1 {
                r * (((j + off + 1) * (j + 1)) as f64).sqrt()
            } else if j == i + 1 {
                -r * (((i + off + 1) * (i + 1)) as f64).sqrt()
            } else {
                0.0
            }
        });
        let u = expm(&gen);
        let rho0 = Mat::from_fn(len, len, |i, j| {
            if i == j {
                let (na, nb) = level(i);
                p[na] * p[nb]
            } else {
                0.0
            }
        });
        let rho = &u * &rho0 * u.transpose();
        let eig = rho.self_adjoint_eigen(Side::Lower).unwrap();
        let vals = eig.S().column_vector();
        total += shannon((0..len).map(|i| vals[i]));
        for i in 0..len {
            marginal_a[level(i).0] += rho[(i, i)];
        }
    }
    TwoModeEntropies { total, reduced: shannon(marginal_a) }
}
