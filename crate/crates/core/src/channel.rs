//! Doubly-selective DD-domain channels and the two equivalent models of a
//! frame: the stacked vector model `ỹ = C·K + ñ` and the matrix model
//! `Y = H·X + n̆` used for the error-probability analysis.
//!
//! Shift convention: path `(l, k)` moves DD-grid entry `(k, l)` to
//! `([k + k_i]_N, [l + l_i]_M)`, i.e. `I_N(k)` has a one at `(r, c)` iff
//! `c = [r - k]_N`. The phase `e^{-j2π l k / M_d}` uses the signed Doppler
//! index; only the shift itself is reduced modulo `N`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ValidatedConfig;
use crate::dispersion::DispersionMatrixSet;
use crate::error::{Error, Result};
use crate::linalg::{complex_normal, identity, kron, CMatrix, CVector, ZERO};
use crate::mapping::{ResourceAllocation, SparseSymbolVector, StMapper};

/// Integer delay and signed Doppler index of one path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathTap {
    pub delay: usize,
    pub doppler: i64,
}

/// Path indices shared by all links plus per-link complex gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathProfile {
    pub taps: Vec<PathTap>,
    /// Gain of path `i` on link `(u, n_r, n_t)` at `((u·N_r + n_r)·N_t + n_t)·P + i`.
    pub gains: Vec<Complex64>,
    pub users: usize,
    pub nr: usize,
    pub nt: usize,
}

impl PathProfile {
    pub fn p(&self) -> usize {
        self.taps.len()
    }

    #[inline]
    pub fn gain(&self, u: usize, nr: usize, nt: usize, i: usize) -> Complex64 {
        self.gains[((u * self.nr + nr) * self.nt + nt) * self.taps.len() + i]
    }

    /// `e^{-j2π l_i k_i / M_d}` for path `i`.
    pub fn phase(&self, i: usize, md: usize) -> Complex64 {
        let t = self.taps[i];
        Complex64::from_polar(1.0, -2.0 * PI * (t.delay as f64) * (t.doppler as f64) / md as f64)
    }

    /// Same taps with fresh `CN(0, 1/P)` gains.
    pub fn with_fresh_gains<R: Rng + ?Sized>(&self, rng: &mut R) -> PathProfile {
        let var = 1.0 / self.p() as f64;
        PathProfile {
            taps: self.taps.clone(),
            gains: (0..self.gains.len()).map(|_| complex_normal(rng, var)).collect(),
            ..*self
        }
    }

    /// Builds a profile from explicit taps and gains (`gains` laid out as in [`PathProfile::gains`]).
    pub fn from_parts(taps: Vec<PathTap>, gains: Vec<Complex64>, cfg: &ValidatedConfig) -> Result<Self> {
        let expect = cfg.u() * cfg.nr() * cfg.nt() * taps.len();
        if gains.len() != expect {
            return Err(Error::DimensionMismatch(format!(
                "{} gains supplied, expected {expect}",
                gains.len()
            )));
        }
        Ok(PathProfile { taps, gains, users: cfg.u(), nr: cfg.nr(), nt: cfg.nt() })
    }

    /// One line per path and link: `u nr nt l k re im`.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        for u in 0..self.users {
            for nr in 0..self.nr {
                for nt in 0..self.nt {
                    for (i, t) in self.taps.iter().enumerate() {
                        let h = self.gain(u, nr, nt, i);
                        let _ = writeln!(
                            s,
                            "{u} {nr} {nt} {} {} {:.16e} {:.16e}",
                            t.delay, t.doppler, h.re, h.im
                        );
                    }
                }
            }
        }
        s
    }
}

fn shift_key(t: PathTap, n: usize) -> (usize, usize) {
    (t.delay, t.doppler.rem_euclid(n as i64) as usize)
}

/// Number of distinct DD shifts reachable with the configured spreads.
pub fn shift_grid_size(cfg: &ValidatedConfig) -> usize {
    (cfg.l_max + 1) * (2 * cfg.k_max + 1).min(cfg.n())
}

/// Draws integer taps uniformly (resampling until their shifts are
/// distinct) and `CN(0, 1/P)` gains for every link.
pub fn sample_paths<R: Rng + ?Sized>(cfg: &ValidatedConfig, rng: &mut R) -> Result<PathProfile> {
    let taps = sample_taps(cfg, rng)?;
    let var = 1.0 / cfg.p() as f64;
    let gains = (0..cfg.u() * cfg.nr() * cfg.nt() * cfg.p())
        .map(|_| complex_normal(rng, var))
        .collect();
    Ok(PathProfile { taps, gains, users: cfg.u(), nr: cfg.nr(), nt: cfg.nt() })
}

pub fn sample_taps<R: Rng + ?Sized>(cfg: &ValidatedConfig, rng: &mut R) -> Result<Vec<PathTap>> {
    let grid = shift_grid_size(cfg);
    if cfg.p() > grid {
        return Err(Error::TooManyPaths { paths: cfg.p(), grid });
    }
    let kmax = cfg.k_max as i64;
    let mut taps: Vec<PathTap> = Vec::with_capacity(cfg.p());
    while taps.len() < cfg.p() {
        let t = PathTap { delay: rng.random_range(0..=cfg.l_max), doppler: rng.random_range(-kmax..=kmax) };
        if taps.iter().all(|o| shift_key(*o, cfg.n()) != shift_key(t, cfg.n())) {
            taps.push(t);
        } else {
            // A clash restarts the whole draw so the accepted set stays uniform.
            taps.clear();
        }
    }
    Ok(taps)
}

/// Cyclic shift permutation: one at `(r, c)` iff `c = [r - shift]_size`.
fn shift_matrix(size: usize, shift: i64) -> CMatrix {
    let mut m = CMatrix::zeros(size, size);
    for r in 0..size {
        let c = (r as i64 - shift).rem_euclid(size as i64) as usize;
        m[(r, c)] = crate::linalg::ONE;
    }
    m
}

/// Effective `M_d × M_d` DD-domain matrix of link `(u, n_r, n_t)`:
/// `Σ_i I_M(l_i) ⊗ [I_N(k_i) h_i e^{-j2π l_i k_i / M_d}]`.
pub fn effective_link_matrix(
    profile: &PathProfile,
    u: usize,
    nr: usize,
    nt: usize,
    cfg: &ValidatedConfig,
) -> CMatrix {
    let (n, m, md) = (cfg.n(), cfg.m(), cfg.md);
    let mut h = CMatrix::zeros(md, md);
    for (i, t) in profile.taps.iter().enumerate() {
        let coef = profile.gain(u, nr, nt, i) * profile.phase(i, md);
        let doppler = shift_matrix(n, t.doppler).map(|x| x * coef);
        h += kron(&shift_matrix(m, t.delay as i64), &doppler);
    }
    h
}

/// Output grid index reached from input `md_in = k + N·l` along path `t`.
#[inline]
pub fn shifted_index(md_in: usize, t: PathTap, n: usize, m: usize) -> usize {
    let (k, l) = (md_in % n, md_in / n);
    let k2 = (k as i64 + t.doppler).rem_euclid(n as i64) as usize;
    let l2 = (l + t.delay) % m;
    k2 + n * l2
}

/// The stacked model `C = Ω̃ Υ (I_{UG} ⊗ χ)` with its building blocks.
#[derive(Debug, Clone)]
pub struct EquivalentChannel {
    /// `(M_d N_r T_c) × (Q M_d)`
    pub c: CMatrix,
    /// `links[(u·N_r + n_r)·N_t + n_t]` is `H^(u)_{n_r,n_t}`.
    pub links: Vec<CMatrix>,
    /// `Ω^(u) = H̄^(u) (I_{N_t} ⊗ 𝒫^(u))`, one per user.
    pub omega: Vec<CMatrix>,
    /// `I_{T_c} ⊗ [Ω^(0) … Ω^(U-1)]`
    pub omega_tilde: CMatrix,
    pub upsilon: CMatrix,
    /// `I_{UG} ⊗ χ`
    pub chi_bar: CMatrix,
}

/// Composes the full equivalent model from explicit intermediate matrices.
///
/// Columns of `Ω̃` follow transmission order with the time-slot index
/// outermost, matching the row order of `Υ`.
pub fn assemble_equivalent_model(
    profile: &PathProfile,
    cfg: &ValidatedConfig,
    alloc: &ResourceAllocation,
    mapper: &StMapper,
    dm_set: &DispersionMatrixSet,
) -> Result<EquivalentChannel> {
    let (md, nr, nt, tc, users) = (cfg.md, cfg.nr(), cfg.nt(), cfg.tc(), cfg.u());
    if profile.users != users || profile.nr != nr || profile.nt != nt {
        return Err(Error::DimensionMismatch("path profile does not match the configuration".into()));
    }
    if alloc.rb.len() != users || alloc.md != md {
        return Err(Error::DimensionMismatch("resource allocation does not match the configuration".into()));
    }
    if mapper.len() != cfg.g * nt * tc * users {
        return Err(Error::DimensionMismatch("ST mapper size does not match the configuration".into()));
    }
    dm_set.check_shape(cfg)?;

    let mut links = Vec::with_capacity(users * nr * nt);
    for u in 0..users {
        for r in 0..nr {
            for t in 0..nt {
                links.push(effective_link_matrix(profile, u, r, t, cfg));
            }
        }
    }

    let mut omega = Vec::with_capacity(users);
    for u in 0..users {
        let mut h_bar = CMatrix::zeros(md * nr, md * nt);
        for r in 0..nr {
            for t in 0..nt {
                h_bar
                    .view_mut((r * md, t * md), (md, md))
                    .copy_from(&links[(u * nr + r) * nt + t]);
            }
        }
        let p_bar = kron(&identity(nt), &alloc.matrix(u));
        omega.push(h_bar * p_bar);
    }

    let per_slot_cols = cfg.g * nt;
    let mut omega_all = CMatrix::zeros(md * nr, per_slot_cols * users);
    for (u, om) in omega.iter().enumerate() {
        omega_all.view_mut((0, u * per_slot_cols), om.shape()).copy_from(om);
    }
    let omega_tilde = kron(&identity(tc), &omega_all);
    let upsilon = mapper.matrix();
    let chi_bar = kron(&identity(users * cfg.g), &dm_set.chi());
    let c = &omega_tilde * &upsilon * &chi_bar;
    Ok(EquivalentChannel { c, links, omega, omega_tilde, upsilon, chi_bar })
}

/// Builds `C` directly from the path taps, entry by entry.
///
/// `C[t_c N_r M_d + n_r M_d + m', b Q + q] = Σ_{n_t} A_q(n_t, t_c) H^(u)_{n_r,n_t}[m', rb(b)]`,
/// which equals the composed product of [`assemble_equivalent_model`].
pub fn equivalent_matrix(
    profile: &PathProfile,
    cfg: &ValidatedConfig,
    alloc: &ResourceAllocation,
    dm_set: &DispersionMatrixSet,
) -> CMatrix {
    let (n, m, md, nr, nt, tc, q) = (cfg.n(), cfg.m(), cfg.md, cfg.nr(), cfg.nt(), cfg.tc(), cfg.q());
    let phases: Vec<Complex64> = (0..profile.p()).map(|i| profile.phase(i, md)).collect();
    let mut c = CMatrix::zeros(cfg.rows(), cfg.k_len());
    for (u, rbs) in alloc.rb.iter().enumerate() {
        for (g, &rb) in rbs.iter().enumerate() {
            let b = u * cfg.g + g;
            for (i, &tap) in profile.taps.iter().enumerate() {
                let out = shifted_index(rb, tap, n, m);
                for r in 0..nr {
                    for t in 0..nt {
                        let coef = profile.gain(u, r, t, i) * phases[i];
                        for s in 0..tc {
                            let row = s * nr * md + r * md + out;
                            for (qi, a) in dm_set.matrices.iter().enumerate() {
                                c[(row, b * q + qi)] += coef * a[(t, s)];
                            }
                        }
                    }
                }
            }
        }
    }
    c
}

/// The matrix model `Y = H X + n̆`.
#[derive(Debug, Clone)]
pub struct MatrixModel {
    /// `N_r × (P N_t U)`, column `u P N_t + n_t P + i`.
    pub h: CMatrix,
    pub taps: Vec<PathTap>,
    pub n: usize,
    pub m: usize,
    pub nt: usize,
    pub tc: usize,
    pub users: usize,
}

impl MatrixModel {
    pub fn rows_x(&self) -> usize {
        self.taps.len() * self.nt * self.users
    }

    /// `X̆` for per-user DD frames: `frames[u][(n_t, t_c)]` is `x^(u)_{n_t,t_c}`
    /// indexed as `frames[u][t_c * N_t + n_t]`.
    pub fn codeword_from_frames(&self, frames: &[Vec<CVector>]) -> CMatrix {
        let (n, m, p) = (self.n, self.m, self.taps.len());
        let md = n * m;
        let mut x = CMatrix::zeros(self.rows_x(), md * self.tc);
        for (u, per_user) in frames.iter().enumerate() {
            for t in 0..self.nt {
                for s in 0..self.tc {
                    let frame = &per_user[s * self.nt + t];
                    for (i, tap) in self.taps.iter().enumerate() {
                        let row = u * p * self.nt + t * p + i;
                        for l in 0..m {
                            for k in 0..n {
                                let src_k = (k as i64 - tap.doppler).rem_euclid(n as i64) as usize;
                                let src_l = (l + m - tap.delay % m) % m;
                                x[(row, s * md + k + n * l)] = frame[src_k + n * src_l];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// `X̆` of a (possibly difference) sparse vector `K`.
    pub fn codeword(
        &self,
        k: &CVector,
        cfg: &ValidatedConfig,
        alloc: &ResourceAllocation,
        dm_set: &DispersionMatrixSet,
    ) -> CMatrix {
        self.codeword_from_frames(&dd_frames(k, cfg, alloc, dm_set))
    }
}

/// Per-user, per-antenna, per-slot DD frames `x^(u)_{n_t,t_c} = 𝒫^(u) s^(u)_{n_t,t_c}`
/// for the vector `K` (which need not be a valid codeword).
pub fn dd_frames(
    k: &CVector,
    cfg: &ValidatedConfig,
    alloc: &ResourceAllocation,
    dm_set: &DispersionMatrixSet,
) -> Vec<Vec<CVector>> {
    let (q, nt, tc) = (cfg.q(), cfg.nt(), cfg.tc());
    (0..cfg.u())
        .map(|u| {
            let mut frames = vec![CVector::zeros(cfg.md); nt * tc];
            for (g, &rb) in alloc.rb[u].iter().enumerate() {
                let b = u * cfg.g + g;
                for (qi, a) in dm_set.matrices.iter().enumerate() {
                    let kv = k[b * q + qi];
                    if kv == ZERO {
                        continue;
                    }
                    for s in 0..tc {
                        for t in 0..nt {
                            frames[s * nt + t][rb] += kv * a[(t, s)];
                        }
                    }
                }
            }
            frames
        })
        .collect()
}

pub fn build_matrix_model(profile: &PathProfile, cfg: &ValidatedConfig) -> MatrixModel {
    let (nr, nt, users, p) = (cfg.nr(), cfg.nt(), cfg.u(), profile.p());
    let mut h = CMatrix::zeros(nr, p * nt * users);
    for u in 0..users {
        for r in 0..nr {
            for t in 0..nt {
                for i in 0..p {
                    h[(r, u * p * nt + t * p + i)] = profile.gain(u, r, t, i) * profile.phase(i, cfg.md);
                }
            }
        }
    }
    MatrixModel { h, taps: profile.taps.clone(), n: cfg.n(), m: cfg.m(), nt, tc: cfg.tc(), users }
}

/// Rearranges `ỹ` (slot, antenna, RB order) into the `N_r × M_d T_c` matrix `Y`.
pub fn interleave_to_matrix(y: &CVector, cfg: &ValidatedConfig) -> CMatrix {
    let (md, nr, tc) = (cfg.md, cfg.nr(), cfg.tc());
    CMatrix::from_fn(nr, md * tc, |r, col| {
        let (s, mdi) = (col / md, col % md);
        y[s * nr * md + r * md + mdi]
    })
}

/// Adds `CN(0, 1/γ)` noise to every entry. An infinite `gamma` returns the input.
pub fn add_noise<R: Rng + ?Sized>(signal: &CVector, gamma: f64, rng: &mut R) -> CVector {
    if gamma.is_infinite() {
        return signal.clone();
    }
    let n0 = 1.0 / gamma;
    signal.map(|s| s + complex_normal(rng, n0))
}

pub fn transmit(c: &CMatrix, k: &SparseSymbolVector) -> CVector {
    let mut y = CVector::zeros(c.nrows());
    for (&i, &a) in k.dap.iter().zip(&k.apm) {
        y.axpy(a, &c.column(i), crate::linalg::ONE);
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SystemConfig;
    use crate::mapping::{build_resource_allocation, build_st_mapper};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ValidatedConfig {
        SystemConfig::toy().validate().unwrap()
    }

    fn one_path(cfg: &ValidatedConfig, tap: PathTap, h: Complex64) -> PathProfile {
        let n = cfg.u() * cfg.nr() * cfg.nt();
        PathProfile::from_parts(vec![tap], vec![h; n], cfg).unwrap()
    }

    #[test]
    fn identity_path() {
        let cfg = SystemConfig { p: 1, ..SystemConfig::toy() }.validate().unwrap();
        let prof = one_path(&cfg, PathTap { delay: 0, doppler: 0 }, Complex64::new(1.0, 0.0));
        assert_eq!(effective_link_matrix(&prof, 0, 0, 0, &cfg), identity(4));
    }

    #[test]
    fn two_path_formula() {
        let cfg = toy();
        let h1 = Complex64::new(0.3, -0.2);
        let h2 = Complex64::new(-0.5, 0.7);
        let taps = vec![PathTap { delay: 0, doppler: 0 }, PathTap { delay: 1, doppler: 1 }];
        let gains: Vec<Complex64> = (0..cfg.nr() * cfg.nt()).flat_map(|_| [h1, h2]).collect();
        let prof = PathProfile::from_parts(taps, gains, &cfg).unwrap();
        let got = effective_link_matrix(&prof, 0, 0, 0, &cfg);
        // e^{-j2π·1·1/4} = -j; I_2(1) is the swap matrix.
        let swap = CMatrix::from_row_slice(2, 2, &[ZERO, crate::linalg::ONE, crate::linalg::ONE, ZERO]);
        let expect = identity(4).map(|x| x * h1) + kron(&swap, &swap).map(|x| x * h2 * Complex64::new(0.0, -1.0));
        assert!((got - expect).norm() < 1e-14);
    }

    #[test]
    fn link_matrices_are_p_sparse() {
        let cfg = SystemConfig { n: 4, m: 4, p: 4, ..SystemConfig::toy() }.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let prof = sample_paths(&cfg, &mut rng).unwrap();
            let h = effective_link_matrix(&prof, 0, 1, 0, &cfg);
            for r in 0..cfg.md {
                assert_eq!(h.row(r).iter().filter(|z| z.norm() > 0.0).count(), 4);
                assert_eq!(h.column(r).iter().filter(|z| z.norm() > 0.0).count(), 4);
            }
        }
    }

    #[test]
    fn path_sampling_limits() {
        let cfg = SystemConfig { p: 1, ..SystemConfig::toy() }.validate().unwrap();
        let prof = sample_paths(&cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(prof.p(), 1);
        assert!(prof.taps[0].delay <= cfg.l_max && prof.taps[0].doppler.unsigned_abs() as usize <= cfg.k_max);
        let cfg = SystemConfig { p: 5, ..SystemConfig::toy() }.validate().unwrap();
        assert_eq!(
            sample_paths(&cfg, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::TooManyPaths { paths: 5, grid: 4 })
        );
    }

    #[test]
    fn gain_second_moment() {
        // 10^5 draws of |h|^2 with mean 1/P; the exponential has std 1/P as well.
        let cfg = SystemConfig { p: 4, nr: 1, nt: 1, n: 4, m: 4, ..SystemConfig::toy() }.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut acc = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let prof = sample_paths(&cfg, &mut rng).unwrap();
            acc += prof.gains.iter().map(|h| h.norm_sqr()).sum::<f64>();
            count += prof.gains.len();
        }
        let mean = acc / count as f64;
        let sigma = 0.25 / (count as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn single_path_single_user_collapses_to_identity() {
        let cfg = SystemConfig { nt: 1, nr: 1, tc: 1, q: 1, p: 1, ..SystemConfig::toy() }.validate().unwrap();
        let prof = one_path(&cfg, PathTap { delay: 0, doppler: 0 }, Complex64::new(1.0, 0.0));
        let dm = DispersionMatrixSet::identity_like(1, 1, 1);
        let ra = build_resource_allocation(&cfg);
        let eq = assemble_equivalent_model(&prof, &cfg, &ra, &build_st_mapper(&cfg), &dm).unwrap();
        assert_eq!(eq.c, identity(4));
    }

    #[test]
    fn composed_and_direct_builders_agree() {
        for raw in [
            SystemConfig::toy(),
            SystemConfig { n: 2, m: 4, u: 2, nr: 1, p: 3, ..SystemConfig::toy() },
            SystemConfig { n: 4, m: 2, u: 2, q: 4, tc: 1, nt: 2, scheme: crate::config::AllocationScheme::DopplerScheme2, ..SystemConfig::toy() },
        ] {
            let cfg = raw.validate().unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let prof = sample_paths(&cfg, &mut rng).unwrap();
            let dm = DispersionMatrixSet::random(&cfg, &mut rng, 0);
            let ra = build_resource_allocation(&cfg);
            let eq = assemble_equivalent_model(&prof, &cfg, &ra, &build_st_mapper(&cfg), &dm).unwrap();
            assert_eq!(eq.c.shape(), (cfg.rows(), cfg.k_len()));
            let direct = equivalent_matrix(&prof, &cfg, &ra, &dm);
            assert!((&eq.c - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let cfg = toy();
        let other = SystemConfig { nr: 1, ..SystemConfig::toy() }.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prof = sample_paths(&other, &mut rng).unwrap();
        let dm = DispersionMatrixSet::random(&cfg, &mut rng, 0);
        let r = assemble_equivalent_model(&prof, &cfg, &build_resource_allocation(&cfg), &build_st_mapper(&cfg), &dm);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn matrix_model_identity_path() {
        let cfg = SystemConfig { p: 1, ..SystemConfig::toy() }.validate().unwrap();
        let prof = one_path(&cfg, PathTap { delay: 0, doppler: 0 }, Complex64::new(0.5, 0.5));
        let model = build_matrix_model(&prof, &cfg);
        assert!(model.h.iter().all(|&h| h == Complex64::new(0.5, 0.5)));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let frames: Vec<Vec<CVector>> = vec![(0..4).map(|_| CVector::from_fn(4, |_, _| complex_normal(&mut rng, 1.0))).collect()];
        let x = model.codeword_from_frames(&frames);
        for t in 0..2 {
            for s in 0..2 {
                for mdi in 0..4 {
                    assert_eq!(x[(t, s * 4 + mdi)], frames[0][s * 2 + t][mdi]);
                }
            }
        }
    }

    #[test]
    fn noise_behaviour() {
        let s = CVector::from_element(8, Complex64::new(1.0, -1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(add_noise(&s, f64::INFINITY, &mut rng), s);
        let a = add_noise(&s, 2.0, &mut ChaCha8Rng::seed_from_u64(4));
        let b = add_noise(&s, 2.0, &mut ChaCha8Rng::seed_from_u64(4));
        assert_eq!(a, b);
    }

    #[test]
    fn noise_variance_unit_snr() {
        let zero = CVector::zeros(1_000_000);
        let y = add_noise(&zero, 1.0, &mut ChaCha8Rng::seed_from_u64(21));
        let n = y.len() as f64;
        let var = y.iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        // |n|^2 is exponential with unit mean and unit variance.
        assert!((var - 1.0).abs() < 3.0 / n.sqrt(), "var {var}");
    }

    #[test]
    fn dump_has_one_line_per_path_and_link() {
        let cfg = toy();
        let prof = sample_paths(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let d = prof.dump();
        assert_eq!(d.lines().count(), cfg.nr() * cfg.nt() * cfg.p());
        assert_eq!(d.lines().next().unwrap().split_whitespace().count(), 7);
    }
}
