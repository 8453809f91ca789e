//! Dispersion-matrix sets, their rank/determinant design metrics and the
//! random-search design procedure.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_matrix_model, sample_paths, PathProfile};
use crate::config::{Constellation, ValidatedConfig};
use crate::error::{Error, Result};
use crate::linalg::{complex_normal, hermitian_eigenvalues, substream, CMatrix, CVector, ZERO};
use crate::mapping::{build_resource_allocation, codeword_blocks};

/// Stream domain for candidate generation in [`design_search`].
pub const DESIGN_DOMAIN: u32 = 1;
/// Stream domain for sampled error pairs.
pub const PAIR_DOMAIN: u32 = 2;
/// Stream domain for the fixed profile used by design and bound runs.
pub const PROFILE_DOMAIN: u32 = 3;

/// Codeword length above which the error space is subsampled.
pub const EXHAUSTIVE_PAIR_BITS: usize = 16;
/// Number of sampled pairs when the error space is too large.
pub const SAMPLED_PAIRS: usize = 100_000;

/// Relative eigenvalue threshold separating zero from nonzero.
pub const RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionMatrixSet {
    /// `Q` matrices of shape `N_t × T_c`.
    pub matrices: Vec<CMatrix>,
    pub seed: u64,
}

impl DispersionMatrixSet {
    pub fn q(&self) -> usize {
        self.matrices.len()
    }

    pub fn nt(&self) -> usize {
        self.matrices.first().map_or(0, |a| a.nrows())
    }

    pub fn tc(&self) -> usize {
        self.matrices.first().map_or(0, |a| a.ncols())
    }

    /// A fixed, seed-free set of `q` distinct matrices: truncated diagonal
    /// phase rotations `diag(e^{jπ q (i+1)/Q})`, so `A_0` is the truncated identity.
    pub fn identity_like(q: usize, nt: usize, tc: usize) -> Self {
        let dim = nt.max(tc);
        let matrices = (0..q)
            .map(|idx| {
                let w = CMatrix::from_fn(dim, dim, |r, c| {
                    if r == c {
                        Complex64::from_polar(1.0, PI * (idx * (r + 1)) as f64 / q as f64)
                    } else {
                        ZERO
                    }
                });
                truncate_to_dm(&w, nt, tc).expect("square unitary of size max(N_t, T_c)")
            })
            .collect();
        DispersionMatrixSet { matrices, seed: 0 }
    }

    /// `Q` independently drawn matrices from [`random_unitary`] and [`truncate_to_dm`].
    pub fn random<R: Rng + ?Sized>(cfg: &ValidatedConfig, rng: &mut R, seed: u64) -> Self {
        let (nt, tc) = (cfg.nt(), cfg.tc());
        let dim = nt.max(tc);
        let matrices = (0..cfg.q())
            .map(|_| truncate_to_dm(&random_unitary(dim, rng), nt, tc).expect("unitary has size max(N_t, T_c)"))
            .collect();
        DispersionMatrixSet { matrices, seed }
    }

    pub fn check_shape(&self, cfg: &ValidatedConfig) -> Result<()> {
        if self.q() != cfg.q() {
            return Err(Error::DimensionMismatch(format!("{} dispersion matrices, expected Q = {}", self.q(), cfg.q())));
        }
        if self.matrices.iter().any(|a| a.shape() != (cfg.nt(), cfg.tc())) {
            return Err(Error::DimensionMismatch(format!(
                "dispersion matrices must be {} x {}",
                cfg.nt(),
                cfg.tc()
            )));
        }
        Ok(())
    }

    /// `χ = [vec(A_1), …, vec(A_Q)]` with column-major `vec`.
    pub fn chi(&self) -> CMatrix {
        let rows = self.nt() * self.tc();
        CMatrix::from_fn(rows, self.q(), |r, q| self.matrices[q].as_slice()[r])
    }

    /// Largest `|tr(AᴴA) − T_c|` over the set.
    pub fn power_deviation(&self) -> f64 {
        let tc = self.tc() as f64;
        self.matrices
            .iter()
            .map(|a| (a.iter().map(|z| z.norm_sqr()).sum::<f64>() - tc).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {} {} {}\n", self.q(), self.nt(), self.tc(), self.seed);
        for a in &self.matrices {
            for r in 0..a.nrows() {
                for c in 0..a.ncols() {
                    let z = a[(r, c)];
                    let _ = writeln!(s, "{:.16e} {:.16e}", z.re, z.im);
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty DM file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse(format!("bad DM header `{header}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("`{s}`: {e}")));
        let (q, nt, tc) = (num(fields[0])?, num(fields[1])?, num(fields[2])?);
        let seed = fields[3].parse::<u64>().map_err(|e| Error::Parse(format!("`{}`: {e}", fields[3])))?;
        let mut matrices = Vec::with_capacity(q);
        for _ in 0..q {
            let mut a = CMatrix::zeros(nt, tc);
            for r in 0..nt {
                for c in 0..tc {
                    let line = lines.next().ok_or_else(|| Error::Parse("DM file is truncated".into()))?;
                    let mut it = line.split_whitespace().map(|v| v.parse::<f64>());
                    match (it.next(), it.next(), it.next()) {
                        (Some(Ok(re)), Some(Ok(im)), None) => a[(r, c)] = Complex64::new(re, im),
                        _ => return Err(Error::Parse(format!("bad DM entry `{line}`"))),
                    }
                }
            }
            matrices.push(a);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing data in DM file".into()));
        }
        Ok(DispersionMatrixSet { matrices, seed })
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Orthonormalized standard complex Gaussian matrix, with the phases of the
/// triangular factor's diagonal moved into `Q` so the result is unique.
pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| complex_normal(rng, 1.0));
    let qr = g.qr();
    let (mut q, r) = qr.unpack();
    for c in 0..dim {
        let d = r[(c, c)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        let mut col = q.column_mut(c);
        col *= ph;
    }
    q
}

/// Cuts a `T̄ × T̄` unitary (`T̄ = max(N_t, T_c)`) down to an `N_t × T_c`
/// matrix with `tr(AᴴA) = T_c`.
pub fn truncate_to_dm(u: &CMatrix, nt: usize, tc: usize) -> Result<CMatrix> {
    let dim = nt.max(tc);
    if u.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch(format!(
            "expected a {dim} x {dim} unitary, got {} x {}",
            u.nrows(),
            u.ncols()
        )));
    }
    Ok(if nt >= tc {
        u.columns(0, tc).into_owned()
    } else {
        let s = (tc as f64 / nt as f64).sqrt();
        u.rows(0, nt).map(|z| z * s)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignMetrics {
    /// Minimum rank of `R = ΔD ΔDᴴ` over the error space.
    pub lambda_d: usize,
    /// Minimum product of the nonzero eigenvalues of `R` over the error space.
    pub lambda_c: f64,
    /// True when pairs were subsampled.
    pub estimated: bool,
    pub pairs: usize,
}

/// Which codeword pairs the metrics range over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorPairs {
    Exhaustive,
    Sampled { count: usize, seed: u64 },
}

impl ErrorPairs {
    /// Exhaustive up to [`EXHAUSTIVE_PAIR_BITS`] bits, otherwise [`SAMPLED_PAIRS`] uniform pairs.
    pub fn policy(cfg: &ValidatedConfig, seed: u64) -> Self {
        if cfg.l <= EXHAUSTIVE_PAIR_BITS {
            ErrorPairs::Exhaustive
        } else {
            ErrorPairs::Sampled { count: SAMPLED_PAIRS, seed }
        }
    }

    /// Unordered index pairs `i < j` (exhaustive) or `i ≠ j` (sampled).
    pub fn iter(&self, l: usize) -> Box<dyn Iterator<Item = (usize, usize)> + Send> {
        match *self {
            ErrorPairs::Exhaustive => {
                let n = 1usize << l;
                Box::new((0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j))))
            }
            ErrorPairs::Sampled { count, seed } => {
                let mut rng = substream(seed, PAIR_DOMAIN, l as u64, 0);
                let n: u128 = 1u128 << l;
                Box::new((0..count).map(move |_| loop {
                    let i = (rng.random::<u64>() as u128 % n) as usize;
                    let j = (rng.random::<u64>() as u128 % n) as usize;
                    if i != j {
                        break (i, j);
                    }
                }))
            }
        }
    }
}

/// Per-`(block, DM)` contributions to the matrix-model codeword, so that
/// `X̆(K) = Σ_b f_b · basis[b Q + q_b]`.
pub struct CodewordBasis {
    pub basis: Vec<CMatrix>,
    q: usize,
}

impl CodewordBasis {
    pub fn new(cfg: &ValidatedConfig, profile: &PathProfile, dm_set: &DispersionMatrixSet) -> Self {
        let model = build_matrix_model(profile, cfg);
        let alloc = build_resource_allocation(cfg);
        let basis = (0..cfg.k_len())
            .map(|idx| {
                let mut e = CVector::zeros(cfg.k_len());
                e[idx] = Complex64::new(1.0, 0.0);
                model.codeword(&e, cfg, &alloc, dm_set)
            })
            .collect();
        CodewordBasis { basis, q: cfg.q() }
    }

    /// `X̆_i − X̆_j` for codebook indices `i`, `j`.
    pub fn difference(&self, i: usize, j: usize, cfg: &ValidatedConfig, constellation: &Constellation) -> CMatrix {
        let bi = codeword_blocks(i, cfg, constellation);
        let bj = codeword_blocks(j, cfg, constellation);
        let mut d = CMatrix::zeros(self.basis[0].nrows(), self.basis[0].ncols());
        for (b, (x, y)) in bi.iter().zip(&bj).enumerate() {
            if x == y {
                continue;
            }
            d += &self.basis[b * self.q + x.q] * constellation.points[x.l];
            d -= &self.basis[b * self.q + y.q] * constellation.points[y.l];
        }
        d
    }
}

/// Rank and nonzero-eigenvalue product of `R = ΔD ΔDᴴ`.
pub fn rank_and_product(delta: &CMatrix) -> (usize, f64) {
    let r = delta * delta.adjoint();
    let ev = hermitian_eigenvalues(&r);
    let top = ev.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return (0, 0.0);
    }
    let tol = RANK_TOLERANCE * top;
    let nz: Vec<f64> = ev.into_iter().filter(|&e| e > tol).collect();
    (nz.len(), nz.iter().product())
}

/// Minimum rank and minimum nonzero-eigenvalue product of the codeword
/// difference matrices over the chosen error pairs.
pub fn evaluate_design_metrics(
    dm_set: &DispersionMatrixSet,
    cfg: &ValidatedConfig,
    profile: &PathProfile,
    pairs: &ErrorPairs,
) -> Result<DesignMetrics> {
    if cfg.u() != 1 {
        return Err(Error::InvalidParameter("design metrics are defined for a single user".into()));
    }
    dm_set.check_shape(cfg)?;
    if cfg.l == 0 || matches!(pairs, ErrorPairs::Sampled { count: 0, .. }) {
        return Err(Error::EmptyErrorSpace);
    }
    if cfg.l >= usize::BITS as usize {
        return Err(Error::CodebookTooLarge { bits: cfg.l, limit: usize::BITS as usize - 1 });
    }
    let constellation = cfg.constellation();
    let basis = CodewordBasis::new(cfg, profile, dm_set);
    let mut lambda_d = usize::MAX;
    let mut lambda_c = f64::INFINITY;
    let mut count = 0usize;
    for (i, j) in pairs.iter(cfg.l) {
        let (rank, prod) = rank_and_product(&basis.difference(i, j, cfg, &constellation));
        lambda_d = lambda_d.min(rank);
        lambda_c = lambda_c.min(prod);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyErrorSpace);
    }
    Ok(DesignMetrics {
        lambda_d,
        lambda_c,
        estimated: matches!(pairs, ErrorPairs::Sampled { .. }),
        pairs: count,
    })
}

/// Every candidate of a design run and the index of the winner.
#[derive(Debug, Clone)]
pub struct DesignReport {
    pub candidates: Vec<(DispersionMatrixSet, DesignMetrics)>,
    pub best: usize,
}

impl DesignReport {
    pub fn winner(&self) -> &(DispersionMatrixSet, DesignMetrics) {
        &self.candidates[self.best]
    }
}

/// Index of the best candidate: largest `Λ_D`, then largest `Λ_C` among
/// those, then the lowest index.
pub fn select_best(metrics: &[DesignMetrics]) -> Option<usize> {
    let top_d = metrics.iter().map(|m| m.lambda_d).max()?;
    let mut best: Option<usize> = None;
    for (t, m) in metrics.iter().enumerate() {
        if m.lambda_d != top_d {
            continue;
        }
        if best.is_none_or(|b| m.lambda_c > metrics[b].lambda_c) {
            best = Some(t);
        }
    }
    best
}

/// Random-search design over `n_trials` candidate sets. Candidate `t` is
/// drawn from its own stream of `seed`, so the result does not depend on
/// the number of worker threads.
pub fn design_search(
    cfg: &ValidatedConfig,
    n_trials: usize,
    profile: &PathProfile,
    seed: u64,
) -> Result<DesignReport> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    let pairs = ErrorPairs::policy(cfg, seed);
    let candidates: Vec<(DispersionMatrixSet, DesignMetrics)> = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(seed, DESIGN_DOMAIN, t as u64, 0);
            let set = DispersionMatrixSet::random(cfg, &mut rng, seed);
            let metrics = evaluate_design_metrics(&set, cfg, profile, &pairs)?;
            Ok((set, metrics))
        })
        .collect::<Result<_>>()?;
    let metrics: Vec<DesignMetrics> = candidates.iter().map(|c| c.1).collect();
    let best = select_best(&metrics).expect("at least one candidate");
    Ok(DesignReport { candidates, best })
}

pub fn design_dispersion_matrices(
    cfg: &ValidatedConfig,
    n_trials: usize,
    profile: &PathProfile,
    seed: u64,
) -> Result<(DispersionMatrixSet, DesignMetrics)> {
    let report = design_search(cfg, n_trials, profile, seed)?;
    Ok(report.candidates.into_iter().nth(report.best).expect("winner index is in range"))
}

/// The fixed path profile that design and bound runs evaluate against.
pub fn design_profile(cfg: &ValidatedConfig, seed: u64) -> Result<PathProfile> {
    sample_paths(cfg, &mut substream(seed, PROFILE_DOMAIN, 0, 0))
}

/// Sum of absolute entrywise differences; zero means identical sets.
pub fn set_distance(a: &DispersionMatrixSet, b: &DispersionMatrixSet) -> f64 {
    a.matrices
        .iter()
        .zip(&b.matrices)
        .map(|(x, y)| (x - y).iter().map(|z| z.norm()).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_paths, PathTap};
    use crate::config::SystemConfig;
    use crate::linalg::identity;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy() -> ValidatedConfig {
        SystemConfig::toy().validate().unwrap()
    }

    fn toy_profile(cfg: &ValidatedConfig) -> PathProfile {
        let taps = vec![PathTap { delay: 0, doppler: 0 }, PathTap { delay: 1, doppler: 1 }];
        let n = cfg.nr() * cfg.nt() * taps.len();
        PathProfile::from_parts(taps, vec![Complex64::new(0.5, 0.0); n], cfg).unwrap()
    }

    #[test]
    fn unitary_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = random_unitary(1, &mut rng);
        assert!((one[(0, 0)].norm() - 1.0).abs() < 1e-12);
        for dim in 1..6 {
            let u = random_unitary(dim, &mut rng);
            assert!((u.adjoint() * &u - identity(dim)).norm() < 1e-10);
        }
        let a = random_unitary(3, &mut ChaCha8Rng::seed_from_u64(7));
        let b = random_unitary(3, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
    }

    #[test]
    fn truncation_examples() {
        let i2 = identity(2);
        assert_eq!(truncate_to_dm(&i2, 2, 2).unwrap(), i2);
        let row = truncate_to_dm(&i2, 1, 2).unwrap();
        assert_eq!(row.shape(), (1, 2));
        assert!((row[(0, 0)].re - 2f64.sqrt()).abs() < 1e-15 && row[(0, 1)] == ZERO);
        let col = truncate_to_dm(&i2, 2, 1).unwrap();
        assert_eq!(col.shape(), (2, 1));
        assert_eq!(col[(0, 0)].re, 1.0);
        assert!(matches!(truncate_to_dm(&identity(3), 2, 2), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn identity_like_sets_are_normalized_and_distinct() {
        for (q, nt, tc) in [(2, 2, 2), (4, 2, 2), (8, 2, 2), (4, 1, 2), (4, 4, 1), (3, 3, 2)] {
            let s = DispersionMatrixSet::identity_like(q, nt, tc);
            assert!(s.power_deviation() < 1e-12);
            for a in 0..q {
                for b in a + 1..q {
                    assert!((&s.matrices[a] - &s.matrices[b]).norm() > 1e-6, "{q} {nt} {tc}: {a} == {b}");
                }
            }
        }
    }

    #[test]
    fn chi_stacks_columns() {
        let s = DispersionMatrixSet::identity_like(2, 2, 2);
        let chi = s.chi();
        assert_eq!(chi.shape(), (4, 2));
        assert_eq!(chi[(1, 1)], s.matrices[1][(1, 0)]);
        assert_eq!(chi[(2, 0)], s.matrices[0][(0, 1)]);
    }

    #[test]
    fn file_round_trip_is_exact() {
        let cfg = toy();
        let s = DispersionMatrixSet::random(&cfg, &mut ChaCha8Rng::seed_from_u64(3), 3);
        let back = DispersionMatrixSet::from_text(&s.to_text()).unwrap();
        assert_eq!(back, s);
        assert!(DispersionMatrixSet::from_text("2 2 2 0\n1 0\n").is_err());
    }

    #[test]
    fn single_dm_bpsk_rank_matches_matrix_rank() {
        // One block and one DM: the only difference is 2·A mapped through one path.
        let cfg = SystemConfig { n: 1, m: 1, q: 1, p: 1, ..SystemConfig::toy() }.validate().unwrap();
        let taps = vec![PathTap { delay: 0, doppler: 0 }];
        let prof = PathProfile::from_parts(taps, vec![Complex64::new(1.0, 0.0); 4], &cfg).unwrap();
        let a = CMatrix::from_row_slice(2, 2, &[Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0), ZERO, ZERO]);
        let set = DispersionMatrixSet { matrices: vec![a], seed: 0 };
        let m = evaluate_design_metrics(&set, &cfg, &prof, &ErrorPairs::Exhaustive).unwrap();
        assert_eq!(m.lambda_d, 1);
        assert_eq!(m.pairs, 1);
        let set = DispersionMatrixSet { matrices: vec![identity(2)], seed: 0 };
        let m = evaluate_design_metrics(&set, &cfg, &prof, &ErrorPairs::Exhaustive).unwrap();
        assert_eq!(m.lambda_d, 2);
        // ΔD = 2I, so R = 4I and the eigenvalue product is 16.
        assert!((m.lambda_c - 16.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_respect_diversity_ceiling() {
        let cfg = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..3 {
            let prof = sample_paths(&cfg, &mut rng).unwrap();
            let set = DispersionMatrixSet::random(&cfg, &mut rng, 0);
            let m = evaluate_design_metrics(&set, &cfg, &prof, &ErrorPairs::Exhaustive).unwrap();
            assert!(m.lambda_d <= (cfg.p() * cfg.nt()).min(cfg.md * cfg.tc()));
            assert!(m.lambda_d == 0 || m.lambda_c > 0.0);
            assert!(!m.estimated);
        }
    }

    #[test]
    fn multiuser_and_empty_are_rejected() {
        let cfg = SystemConfig { u: 2, m: 4, ..SystemConfig::toy() }.validate().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prof = sample_paths(&cfg, &mut rng).unwrap();
        let set = DispersionMatrixSet::random(&cfg, &mut rng, 0);
        assert!(evaluate_design_metrics(&set, &cfg, &prof, &ErrorPairs::Exhaustive).is_err());
        let cfg = toy();
        let set = DispersionMatrixSet::random(&cfg, &mut rng, 0);
        assert_eq!(
            evaluate_design_metrics(&set, &cfg, &toy_profile(&cfg), &ErrorPairs::Sampled { count: 0, seed: 0 }),
            Err(Error::EmptyErrorSpace)
        );
    }

    #[test]
    fn sampled_pairs_are_flagged() {
        let cfg = toy();
        let set = DispersionMatrixSet::identity_like(2, 2, 2);
        let m = evaluate_design_metrics(&set, &cfg, &toy_profile(&cfg), &ErrorPairs::Sampled { count: 50, seed: 1 }).unwrap();
        assert!(m.estimated);
        assert_eq!(m.pairs, 50);
    }

    #[test]
    fn metrics_invariant_under_common_unitary() {
        // Left-multiplying every DM by a unitary W multiplies ΔD by I_P ⊗ W
        // from the left, which leaves the eigenvalues of R unchanged.
        let cfg = toy();
        let prof = toy_profile(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let set = DispersionMatrixSet::random(&cfg, &mut rng, 0);
        let w = random_unitary(2, &mut rng);
        let rotated = DispersionMatrixSet { matrices: set.matrices.iter().map(|a| &w * a).collect(), seed: 0 };
        let a = evaluate_design_metrics(&set, &cfg, &prof, &ErrorPairs::Exhaustive).unwrap();
        let b = evaluate_design_metrics(&rotated, &cfg, &prof, &ErrorPairs::Exhaustive).unwrap();
        assert_eq!(a.lambda_d, b.lambda_d);
        assert!((a.lambda_c - b.lambda_c).abs() <= 1e-9 * a.lambda_c.max(1.0));
    }

    #[test]
    fn selection_rule() {
        let m = |d, c| DesignMetrics { lambda_d: d, lambda_c: c, estimated: false, pairs: 1 };
        assert_eq!(select_best(&[m(2, 5.0), m(3, 1.0), m(3, 2.0), m(3, 2.0)]), Some(2));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn single_trial_returns_its_candidate() {
        let cfg = toy();
        let prof = toy_profile(&cfg);
        let report = design_search(&cfg, 1, &prof, 9).unwrap();
        assert_eq!(report.best, 0);
        let (set, metrics) = design_dispersion_matrices(&cfg, 1, &prof, 9).unwrap();
        assert_eq!(set, report.candidates[0].0);
        assert_eq!(metrics, report.candidates[0].1);
        assert!(design_search(&cfg, 0, &prof, 9).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn generated_dms_are_normalized(seed in any::<u64>(), nt in 1usize..5, tc in 1usize..5, q in 1usize..5) {
            let cfg = SystemConfig { nt, tc, q: 1 << (q - 1), ..SystemConfig::toy() }.validate().unwrap();
            let set = DispersionMatrixSet::random(&cfg, &mut ChaCha8Rng::seed_from_u64(seed), seed);
            prop_assert!(set.power_deviation() < 1e-9);
            prop_assert!(set.check_shape(&cfg).is_ok());
        }
    }
}
