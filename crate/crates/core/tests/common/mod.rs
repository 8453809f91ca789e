//! Brute-force reference computations shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use stsk_otfs::channel::PathProfile;
use stsk_otfs::config::Constellation;
use stsk_otfs::linalg::{CMatrix, CVector};
use stsk_otfs::mapping::{codeword_bits, encode_bits};
use stsk_otfs::ValidatedConfig;

/// Received DD samples by direct summation over users, antennas and paths,
/// stacked as `t_c·N_r·M_d + n_r·M_d + (k + N·l)`.
pub fn dd_convolve(frames: &[Vec<CVector>], profile: &PathProfile, cfg: &ValidatedConfig) -> CVector {
    let (n, m, md) = (cfg.n() as i64, cfg.m(), cfg.md);
    let mut y = CVector::zeros(cfg.rows());
    for (u, per_user) in frames.iter().enumerate() {
        for tc in 0..cfg.tc() {
            for nr in 0..cfg.nr() {
                for nt in 0..cfg.nt() {
                    let x = &per_user[tc * cfg.nt() + nt];
                    for (i, tap) in profile.taps.iter().enumerate() {
                        let ang = -2.0 * std::f64::consts::PI * tap.delay as f64 * tap.doppler as f64 / md as f64;
                        let h = profile.gain(u, nr, nt, i) * Complex64::from_polar(1.0, ang);
                        for l in 0..m {
                            for k in 0..n {
                                let k2 = (k + tap.doppler).rem_euclid(n) as usize;
                                let l2 = (l + tap.delay) % m;
                                let out = tc * cfg.nr() * md + nr * md + k2 + cfg.n() * l2;
                                y[out] += h * x[k as usize + cfg.n() * l];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Rank and nonzero squared-singular-value product of `Δ`, via SVD.
pub fn svd_rank_product(delta: &CMatrix, tol: f64) -> (usize, f64) {
    let sv = delta.clone().svd(false, false).singular_values;
    let top = sv.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return (0, 0.0);
    }
    // Eigenvalues of ΔΔᴴ are σ²; threshold them the same way.
    let nz: Vec<f64> = sv.iter().map(|s| s * s).filter(|&e| e > tol * top * top).collect();
    (nz.len(), nz.iter().product())
}

/// `½(1 − √(c/(1+c)))`.
pub fn rayleigh_pep(c: f64) -> f64 {
    0.5 * (1.0 - (c / (1.0 + c)).sqrt())
}

/// Exact PEP for one receive antenna and distinct eigenvalues, by partial fractions:
/// `Σ_j Π_{k≠j} c_j/(c_j − c_k) · ½(1 − √(c_j/(1+c_j)))` with `c_j = λ_j γ / 4P`.
pub fn distinct_eigen_pep(lambdas: &[f64], gamma: f64, p: usize) -> f64 {
    let c: Vec<f64> = lambdas.iter().map(|l| l * gamma / (4.0 * p as f64)).collect();
    (0..c.len())
        .map(|j| {
            let w: f64 = (0..c.len()).filter(|&k| k != j).map(|k| c[j] / (c[j] - c[k])).product();
            w * rayleigh_pep(c[j])
        })
        .sum()
}

/// Exhaustive ML over the codebook by re-encoding every codeword.
pub fn brute_ml(y: &CVector, c: &CMatrix, cfg: &ValidatedConfig, con: &Constellation) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for idx in 0..1usize << cfg.l {
        let k = encode_bits(&codeword_bits(idx, cfg.l), cfg, con).unwrap();
        let e = (y - c * &k.dense).norm_squared();
        if e < best.1 {
            best = (idx, e);
        }
    }
    best
}
