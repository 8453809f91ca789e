//! Pairwise error probability, the BER union bound, diversity/coding gain
//! and the DCMC capacity.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{equivalent_matrix, sample_paths, PathProfile};
use crate::config::ValidatedConfig;
use crate::dispersion::{rank_and_product, CodewordBasis, DispersionMatrixSet, ErrorPairs, RANK_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::{complex_normal, hermitian_deviation, hermitian_eigenvalues, substream, CMatrix, CVector};
use crate::mapping::{build_resource_allocation, check_codebook_size, codeword_blocks, build_sparse_vector, MAX_CODEBOOK_BITS};

/// Quadrature order for the PEP integral.
pub const QUADRATURE_ORDER: usize = 64;
/// Pairwise analyses enumerate all pairs only up to this many bits.
pub const MAX_PAIRWISE_BITS: usize = 16;

/// Stream domains for capacity estimation.
pub const DCMC_CHANNEL_DOMAIN: u32 = 10;
pub const DCMC_NOISE_DOMAIN: u32 = 11;

struct Rule {
    sin2: Vec<f64>,
    weight: Vec<f64>,
}

/// Gauss-Legendre nodes mapped onto `[0, π/2]`, with the `1/π` prefactor folded into the weights.
fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = GaussLegendre::new(QUADRATURE_ORDER).expect("order is at least 2");
        let half = FRAC_PI_2 / 2.0;
        let (sin2, weight) = gl
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| {
                let theta = half * (x + 1.0);
                (theta.sin().powi(2), w * half / PI)
            })
            .unzip();
        Rule { sin2, weight }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PepResult {
    pub value: f64,
    pub rank: usize,
    pub eigenvalues: Vec<f64>,
}

/// `(1/π) ∫₀^{π/2} Π_j (1 + λ_j γ / (4P sin²θ))^{-N_r} dθ` for the given nonzero eigenvalues.
pub fn pep_from_eigenvalues(eigenvalues: &[f64], gamma: f64, p: usize, nr: usize) -> f64 {
    if eigenvalues.is_empty() {
        return 0.5;
    }
    let scale = gamma / (4.0 * p as f64);
    let r = rule();
    let mut acc = 0.0;
    for (&s2, &w) in r.sin2.iter().zip(&r.weight) {
        let log: f64 = eigenvalues.iter().map(|&l| (l * scale / s2).ln_1p()).sum();
        acc += w * (-(nr as f64) * log).exp();
    }
    acc.min(0.5)
}

/// Nonzero eigenvalues of a Hermitian PSD matrix, relative to its largest eigenvalue.
pub fn nonzero_eigenvalues(r: &CMatrix) -> Result<Vec<f64>> {
    let scale = r.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let dev = hermitian_deviation(r);
    if dev > 1e-9 * scale.max(1.0) {
        return Err(Error::NonHermitianInput(dev));
    }
    let ev = hermitian_eigenvalues(r);
    let top = ev.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return Ok(Vec::new());
    }
    Ok(ev.into_iter().filter(|&e| e > RANK_TOLERANCE * top).collect())
}

pub fn pairwise_error_probability(r: &CMatrix, gamma: f64, p: usize, nr: usize) -> Result<PepResult> {
    let eigenvalues = nonzero_eigenvalues(r)?;
    Ok(PepResult { value: pep_from_eigenvalues(&eigenvalues, gamma, p, nr), rank: eigenvalues.len(), eigenvalues })
}

/// The upper bound `½ Π_j (1 + λ_j γ / 4P)^{-N_r}`.
pub fn pep_upper_bound(eigenvalues: &[f64], gamma: f64, p: usize, nr: usize) -> f64 {
    let scale = gamma / (4.0 * p as f64);
    0.5 * (-(nr as f64) * eigenvalues.iter().map(|&l| (l * scale).ln_1p()).sum::<f64>()).exp()
}

/// Closed-form single-branch Rayleigh PEP `½(1 − √(c/(1+c)))`.
pub fn single_branch_pep(c: f64) -> f64 {
    0.5 * (1.0 - (c / (1.0 + c)).sqrt())
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Hamming-weighted eigenvalue spectra of every unordered codeword pair.
#[derive(Debug, Clone)]
pub struct ErrorSpectrum {
    /// `(D_b, nonzero eigenvalues of R)` per unordered pair.
    pub terms: Vec<(u32, Vec<f64>)>,
    pub l: usize,
    pub p: usize,
    pub nr: usize,
}

impl ErrorSpectrum {
    pub fn new(cfg: &ValidatedConfig, dm_set: &DispersionMatrixSet, profile: &PathProfile) -> Result<Self> {
        if cfg.u() != 1 {
            return Err(Error::InvalidParameter("the union bound is defined for a single user".into()));
        }
        check_codebook_size(cfg, MAX_PAIRWISE_BITS)?;
        dm_set.check_shape(cfg)?;
        let constellation = cfg.constellation();
        let basis = CodewordBasis::new(cfg, profile, dm_set);
        let n = 1usize << cfg.l;
        let terms = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let basis = &basis;
                let constellation = &constellation;
                (i + 1..n).map(move |j| {
                    let d = basis.difference(i, j, cfg, constellation);
                    let r = &d * d.adjoint();
                    let ev = nonzero_eigenvalues(&r).expect("R = ΔD ΔDᴴ is Hermitian");
                    ((i ^ j).count_ones(), ev)
                })
            })
            .collect();
        Ok(ErrorSpectrum { terms, l: cfg.l, p: cfg.p(), nr: cfg.nr() })
    }

    fn norm(&self) -> f64 {
        // Each unordered pair stands for both ordered pairs.
        2.0 / ((1u64 << self.l) as f64 * self.l as f64)
    }

    /// Union-bound BER at SNR `gamma`.
    pub fn ber(&self, gamma: f64) -> f64 {
        let s: f64 = self.terms.iter().map(|(d, ev)| *d as f64 * pep_from_eigenvalues(ev, gamma, self.p, self.nr)).sum();
        s * self.norm()
    }

    /// The same sum with each PEP replaced by its closed-form upper bound.
    pub fn ber_upper(&self, gamma: f64) -> f64 {
        let s: f64 = self.terms.iter().map(|(d, ev)| *d as f64 * pep_upper_bound(ev, gamma, self.p, self.nr)).sum();
        s * self.norm()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveMeta {
    pub config_hash: String,
    pub dm_seed: u64,
    pub profile_seed: Option<u64>,
    pub seed: Option<u64>,
}

/// A bound or capacity curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub kind: String,
    pub points: Vec<CurvePoint>,
    pub meta: CurveMeta,
}

pub type BoundCurve = Curve;
pub type CapacityCurve = Curve;

impl Curve {
    pub fn to_csv(&self) -> String {
        let m = &self.meta;
        let opt = |v: Option<u64>| v.map_or_else(|| "none".to_string(), |s| s.to_string());
        let mut s = format!(
            "# meta: config_hash={} dm_seed={} profile_seed={} seed={}\nsnr_db,value,stderr,kind\n",
            m.config_hash,
            m.dm_seed,
            opt(m.profile_seed),
            opt(m.seed)
        );
        for p in &self.points {
            let _ = writeln!(s, "{},{:e},{:e},{}", p.snr_db, p.value, p.stderr, self.kind);
        }
        s
    }

    pub fn value_at(&self, snr_db: f64) -> Option<f64> {
        self.points.iter().find(|p| p.snr_db == snr_db).map(|p| p.value)
    }
}

pub fn check_snr_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("SNR grid is empty".into()));
    }
    if grid.iter().any(|v| !v.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("SNR grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn union_bound_ber(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    profile: &PathProfile,
    snr_db: &[f64],
) -> Result<BoundCurve> {
    check_snr_grid(snr_db)?;
    let spectrum = ErrorSpectrum::new(cfg, dm_set, profile)?;
    let points = snr_db
        .iter()
        .map(|&s| CurvePoint { snr_db: s, value: spectrum.ber(db_to_linear(s)), stderr: 0.0 })
        .collect();
    Ok(Curve {
        kind: "union_bound".into(),
        points,
        meta: CurveMeta { config_hash: cfg.hash(), dm_seed: dm_set.seed, profile_seed: None, seed: None },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    /// `min rank(R) · N_r`
    pub g_d: usize,
    /// `min (Π λ_j)^{1/r}` over the minimum-rank pairs.
    pub g_c: f64,
    pub estimated: bool,
    pub pairs: usize,
}

/// Diversity order and coding gain over the same error pairs as the design metrics.
pub fn diversity_and_coding_gain(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    profile: &PathProfile,
    pairs: &ErrorPairs,
) -> Result<DiversityReport> {
    if cfg.u() != 1 {
        return Err(Error::InvalidParameter("diversity analysis is defined for a single user".into()));
    }
    dm_set.check_shape(cfg)?;
    if cfg.l == 0 || matches!(pairs, ErrorPairs::Sampled { count: 0, .. }) {
        return Err(Error::EmptyErrorSpace);
    }
    let constellation = cfg.constellation();
    let basis = CodewordBasis::new(cfg, profile, dm_set);
    let mut min_rank = usize::MAX;
    let mut g_c = f64::INFINITY;
    let mut count = 0;
    for (i, j) in pairs.iter(cfg.l) {
        let (rank, prod) = rank_and_product(&basis.difference(i, j, cfg, &constellation));
        count += 1;
        let gain = if rank == 0 { 0.0 } else { prod.powf(1.0 / rank as f64) };
        if rank < min_rank {
            min_rank = rank;
            g_c = gain;
        } else if rank == min_rank {
            g_c = g_c.min(gain);
        }
    }
    if count == 0 {
        return Err(Error::EmptyErrorSpace);
    }
    Ok(DiversityReport {
        g_d: min_rank * cfg.nr(),
        g_c,
        estimated: matches!(pairs, ErrorPairs::Sampled { .. }),
        pairs: count,
    })
}

/// `G_{D,max} = min(P N_t, M_d T_c) · N_r`.
pub fn max_diversity(cfg: &ValidatedConfig) -> usize {
    (cfg.p() * cfg.nt()).min(cfg.md * cfg.tc()) * cfg.nr()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcmcSettings {
    pub channel_draws: usize,
    pub noise_draws: usize,
}

impl Default for DcmcSettings {
    fn default() -> Self {
        DcmcSettings { channel_draws: 200, noise_draws: 50 }
    }
}

/// `log Σ exp(x)` without overflow.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Monte Carlo DCMC capacity in bits per channel use.
///
/// Channel draw `k` samples a fresh path profile; noise draw `n` of that
/// channel samples the transmitted codeword uniformly and a unit-variance
/// noise vector scaled by `1/√γ`. Both streams depend only on `(seed, k, n)`,
/// so every SNR point sees the same draws. The standard error is taken
/// across channel draws.
pub fn dcmc_capacity(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    snr_db: &[f64],
    settings: DcmcSettings,
    seed: u64,
) -> Result<CapacityCurve> {
    check_snr_grid(snr_db)?;
    check_codebook_size(cfg, MAX_CODEBOOK_BITS)?;
    dm_set.check_shape(cfg)?;
    if settings.channel_draws == 0 || settings.noise_draws == 0 {
        return Err(Error::InvalidParameter("draw counts must be at least 1".into()));
    }
    if cfg.u() != 1 {
        return Err(Error::InvalidParameter("the DCMC capacity is defined for a single user".into()));
    }
    let constellation = cfg.constellation();
    let alloc = build_resource_allocation(cfg);
    let n_code = 1usize << cfg.l;
    let gammas: Vec<f64> = snr_db.iter().map(|&s| db_to_linear(s)).collect();
    let norm = 1.0 / (cfg.md * cfg.tc()) as f64;

    // per_draw[k][s] is the capacity of channel draw k at SNR point s.
    let per_draw: Vec<Vec<f64>> = (0..settings.channel_draws)
        .into_par_iter()
        .map(|k| -> Result<Vec<f64>> {
            let mut rng = substream(seed, DCMC_CHANNEL_DOMAIN, k as u64, 0);
            let profile = sample_paths(cfg, &mut rng)?;
            let c = equivalent_matrix(&profile, cfg, &alloc, dm_set);
            let signals: Vec<CVector> = (0..n_code)
                .map(|i| {
                    let blocks = codeword_blocks(i, cfg, &constellation);
                    &c * build_sparse_vector(&blocks, cfg.q(), &constellation).dense
                })
                .collect();
            let mut sums = vec![0.0; gammas.len()];
            let mut psi = vec![0.0; n_code];
            let mut dist = vec![0.0; n_code];
            for n in 0..settings.noise_draws {
                let mut nrng = substream(seed, DCMC_NOISE_DOMAIN, k as u64, n as u64);
                let i = nrng.random_range(0..n_code);
                let w = CVector::from_fn(cfg.rows(), |_, _| complex_normal(&mut nrng, 1.0));
                for (s, &gamma) in gammas.iter().enumerate() {
                    let noise = w.unscale(gamma.sqrt());
                    let v = &signals[i] + &noise;
                    let nn = noise.norm_squared();
                    for (j, sj) in signals.iter().enumerate() {
                        dist[j] = (&v - sj).norm_squared();
                    }
                    for j in 0..n_code {
                        psi[j] = gamma * (nn - dist[j]);
                    }
                    sums[s] += log_sum_exp(&psi) / std::f64::consts::LN_2;
                }
            }
            Ok(sums
                .iter()
                .map(|&acc| norm * (cfg.l as f64 - acc / settings.noise_draws as f64))
                .collect())
        })
        .collect::<Result<_>>()?;

    let k = settings.channel_draws as f64;
    let points = snr_db
        .iter()
        .enumerate()
        .map(|(s, &db)| {
            let vals: Vec<f64> = per_draw.iter().map(|d| d[s]).collect();
            let mean = vals.iter().sum::<f64>() / k;
            let var = if vals.len() > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)
            } else {
                0.0
            };
            CurvePoint { snr_db: db, value: mean, stderr: (var / k).sqrt() }
        })
        .collect();
    Ok(Curve {
        kind: "dcmc_capacity".into(),
        points,
        meta: CurveMeta { config_hash: cfg.hash(), dm_seed: dm_set.seed, profile_seed: None, seed: Some(seed) },
    })
}

/// Smallest grid SNR at which the curve reaches `target`, by linear interpolation in dB.
pub fn snr_at_value(curve: &Curve, target: f64) -> Option<f64> {
    let pts = &curve.points;
    if pts.first()?.value >= target {
        return Some(pts[0].snr_db);
    }
    pts.windows(2).find(|w| w[0].value < target && w[1].value >= target).map(|w| {
        let t = (target - w[0].value) / (w[1].value - w[0].value);
        w[0].snr_db + t * (w[1].snr_db - w[0].snr_db)
    })
}
