//! Monte Carlo BER engine with paired detector comparison.
//!
//! Trial `t` at SNR index `s` draws everything (bits, channel, noise) from
//! `substream(seed, TRIAL_DOMAIN, s, t)`. Trials run in fixed-size batches
//! and the stop rule is evaluated only between batches, so the result does
//! not depend on how many worker threads execute a batch.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{db_to_linear, union_bound_ber, BoundCurve};
use crate::channel::{add_noise, equivalent_matrix, sample_paths, sample_taps, PathProfile, PathTap};
use crate::config::{SystemConfig, ValidatedConfig};
use crate::detectors::{complexity_report, ComplexityReport, DetectionResult, Detector};
use crate::dispersion::DispersionMatrixSet;
use crate::error::{Error, Result};
use crate::linalg::{complex_normal, substream, CMatrix};
use crate::mapping::{build_resource_allocation, encode_bits};

pub const TRIAL_DOMAIN: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopRule {
    /// Stop once every detector has at least this many bit errors.
    pub target_errors: u64,
    pub max_trials: u64,
    /// Trials per batch; the rule is checked after each batch.
    pub batch: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { target_errors: 200, max_trials: 1_000_000, batch: 256 }
    }
}

/// How the channel's delay/Doppler indices are chosen per trial. Gains are always fresh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelMode {
    FreshTaps,
    PinnedTaps(Vec<PathTap>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub detector: String,
    pub trials: u64,
    pub bit_errors: u64,
    pub frame_errors: u64,
    pub ber: f64,
    pub seed: u64,
    pub solve_failures: u64,
}

impl BerPoint {
    /// Binomial standard deviation of the BER estimate.
    pub fn std_dev(&self, l: usize) -> f64 {
        let n = (self.trials * l as u64) as f64;
        (self.ber * (1.0 - self.ber) / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCounters {
    pub detector: String,
    pub candidates_tested: u64,
    pub dap_evaluations: u64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: SystemConfig,
    pub config_hash: String,
    pub dm_seed: u64,
    pub seed: u64,
    /// Points in SNR order, then detector order.
    pub points: Vec<BerPoint>,
    pub complexity: Vec<ComplexityCounters>,
    pub wall_clock_s: f64,
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("snr_db,detector,trials,bit_errors,ber\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{},{:e}", p.snr_db, p.detector, p.trials, p.bit_errors, p.ber);
        }
        s
    }

    pub fn curve(&self, detector: &str) -> Vec<&BerPoint> {
        self.points.iter().filter(|p| p.detector == detector).collect()
    }

    pub fn point(&self, detector: &str, snr_db: f64) -> Option<&BerPoint> {
        self.points.iter().find(|p| p.detector == detector && p.snr_db == snr_db)
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    bit_errors: u64,
    frame_errors: u64,
    failures: u64,
    candidates: u64,
    daps: u64,
}

/// One end-to-end trial: bits, channel, noise and every detector on the same `(y, C)`.
#[allow(clippy::too_many_arguments)]
fn run_trial(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    detectors: &[Detector],
    mode: &ChannelMode,
    gamma: f64,
    seed: u64,
    snr_idx: usize,
    trial: u64,
) -> Result<Vec<Tally>> {
    let mut rng = substream(seed, TRIAL_DOMAIN, snr_idx as u64, trial);
    let constellation = cfg.constellation();
    let bits: Vec<u8> = (0..cfg.l).map(|_| rng.random_range(0..2u8)).collect();
    let k = encode_bits(&bits, cfg, &constellation)?;
    let profile = match mode {
        ChannelMode::FreshTaps => sample_paths(cfg, &mut rng)?,
        ChannelMode::PinnedTaps(taps) => {
            let var = 1.0 / taps.len() as f64;
            let gains = (0..cfg.u() * cfg.nr() * cfg.nt() * taps.len()).map(|_| complex_normal(&mut rng, var)).collect();
            PathProfile::from_parts(taps.clone(), gains, cfg)?
        }
    };
    let c: CMatrix = equivalent_matrix(&profile, cfg, &build_resource_allocation(cfg), dm_set);
    let y = add_noise(&(&c * &k.dense), gamma, &mut rng);
    detectors
        .iter()
        .map(|det| match det.detect(&y, &c, cfg, &constellation, gamma) {
            Ok(r) => {
                let got = r.bits(cfg, &constellation)?;
                let errs = got.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
                Ok(Tally {
                    bit_errors: errs,
                    frame_errors: u64::from(errs > 0),
                    failures: 0,
                    candidates: r.candidates_tested,
                    daps: r.dap_evaluations,
                })
            }
            // A failed solve counts as a lost frame with every bit wrong.
            Err(Error::SolveFailure(_)) => Ok(Tally {
                bit_errors: cfg.l as u64,
                frame_errors: 1,
                failures: 1,
                ..Tally::default()
            }),
            Err(e) => Err(e),
        })
        .collect()
}

/// BER sweep over `snr_db`, feeding identical realizations to all detectors.
pub fn run_ber_sweep(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    detectors: &[Detector],
    snr_db: &[f64],
    stop: StopRule,
    seed: u64,
    mode: &ChannelMode,
) -> Result<RunReport> {
    if detectors.is_empty() {
        return Err(Error::InvalidParameter("at least one detector is required".into()));
    }
    if stop.batch == 0 || stop.max_trials == 0 {
        return Err(Error::InvalidParameter("batch size and trial limit must be positive".into()));
    }
    crate::analysis::check_snr_grid(snr_db)?;
    dm_set.check_shape(cfg)?;
    for d in detectors {
        d.check(cfg)?;
    }
    if let ChannelMode::PinnedTaps(taps) = mode {
        if taps.is_empty() {
            return Err(Error::InvalidParameter("pinned profile has no paths".into()));
        }
    }
    let start = Instant::now();
    let mut points = Vec::with_capacity(snr_db.len() * detectors.len());
    let mut counters: Vec<ComplexityCounters> = detectors
        .iter()
        .map(|d| ComplexityCounters { detector: d.to_string(), candidates_tested: 0, dap_evaluations: 0, trials: 0 })
        .collect();
    for (s, &db) in snr_db.iter().enumerate() {
        let gamma = db_to_linear(db);
        let mut totals = vec![Tally::default(); detectors.len()];
        let mut trials = 0u64;
        while trials < stop.max_trials {
            let n = stop.batch.min(stop.max_trials - trials);
            let batch: Vec<Vec<Tally>> = (trials..trials + n)
                .into_par_iter()
                .map(|t| run_trial(cfg, dm_set, detectors, mode, gamma, seed, s, t))
                .collect::<Result<_>>()?;
            for per_trial in &batch {
                for (acc, t) in totals.iter_mut().zip(per_trial) {
                    acc.bit_errors += t.bit_errors;
                    acc.frame_errors += t.frame_errors;
                    acc.failures += t.failures;
                    acc.candidates += t.candidates;
                    acc.daps += t.daps;
                }
            }
            trials += n;
            if let Some((d, t)) = detectors.iter().zip(&totals).find(|(_, t)| t.failures * 1000 > trials) {
                return Err(Error::SolveFailure(format!(
                    "{d} failed on {} of {trials} trials at {db} dB",
                    t.failures
                )));
            }
            if totals.iter().all(|t| t.bit_errors >= stop.target_errors) {
                break;
            }
        }
        for ((d, t), ctr) in detectors.iter().zip(&totals).zip(counters.iter_mut()) {
            ctr.candidates_tested += t.candidates;
            ctr.dap_evaluations += t.daps;
            ctr.trials += trials;
            points.push(BerPoint {
                snr_db: db,
                detector: d.to_string(),
                trials,
                bit_errors: t.bit_errors,
                frame_errors: t.frame_errors,
                ber: t.bit_errors as f64 / (trials * cfg.l as u64) as f64,
                seed,
                solve_failures: t.failures,
            });
        }
    }
    Ok(RunReport {
        config: cfg.raw.clone(),
        config_hash: cfg.hash(),
        dm_seed: dm_set.seed,
        seed,
        points,
        complexity: counters,
        wall_clock_s: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    SimoOtfs,
    SmOtfs,
    StskOfdmMa,
}

/// Paired BER sweep plus per-detector complexity from the mean counts per detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub run: RunReport,
    pub complexity: Vec<ComplexityReport>,
}

pub fn bench_detectors(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    detectors: &[Detector],
    snr_db: &[f64],
    stop: StopRule,
    seed: u64,
) -> Result<BenchReport> {
    let run = run_ber_sweep(cfg, dm_set, detectors, snr_db, stop, seed, &ChannelMode::FreshTaps)?;
    let complexity = detectors
        .iter()
        .zip(&run.complexity)
        .map(|(d, c)| {
            let mean = |x: u64| (x as f64 / c.trials as f64).round() as u64;
            let r = DetectionResult {
                dap: Vec::new(),
                apm: Vec::new(),
                residual: 0.0,
                candidates_tested: mean(c.candidates_tested),
                dap_evaluations: mean(c.dap_evaluations),
            };
            complexity_report(d, &r, cfg)
        })
        .collect();
    Ok(BenchReport { run, complexity })
}

/// Reference systems expressed as special cases of the STSK configuration.
///
/// SM-OTFS uses `T_c = 1`, `Q = N_t` and the identity columns as DMs;
/// SIMO-OTFS uses one transmit antenna, `T_c = 1` and `A_1 = [1]`;
/// STSK-OFDM-MA sets `N = 1` and keeps `base_dm`.
pub fn baseline_config(
    kind: BaselineKind,
    base: &ValidatedConfig,
    base_dm: &DispersionMatrixSet,
) -> Result<(ValidatedConfig, DispersionMatrixSet)> {
    let wrap = |e: Error| Error::IncompatibleBase(e.to_string());
    match kind {
        BaselineKind::SmOtfs => {
            let nt = base.nt();
            if !nt.is_power_of_two() {
                return Err(Error::IncompatibleBase(format!("N_t = {nt} is not a power of two")));
            }
            let cfg = base.with(|r| {
                r.tc = 1;
                r.q = nt;
            })
            .map_err(wrap)?;
            let matrices = (0..nt)
                .map(|q| CMatrix::from_fn(nt, 1, |r, _| if r == q { crate::linalg::ONE } else { crate::linalg::ZERO }))
                .collect();
            Ok((cfg, DispersionMatrixSet { matrices, seed: 0 }))
        }
        BaselineKind::SimoOtfs => {
            let cfg = base.with(|r| {
                r.nt = 1;
                r.tc = 1;
                r.q = 1;
            })
            .map_err(wrap)?;
            let one = CMatrix::from_element(1, 1, crate::linalg::ONE);
            Ok((cfg, DispersionMatrixSet { matrices: vec![one], seed: 0 }))
        }
        BaselineKind::StskOfdmMa => {
            let cfg = base.with(|r| {
                r.n = 1;
                r.k_max = None;
                r.l_max = None;
            })
            .map_err(wrap)?;
            base_dm.check_shape(&cfg).map_err(wrap)?;
            Ok((cfg, base_dm.clone()))
        }
    }
}

/// Simulated MLD against the union bound on one path profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundVsSim {
    pub sim: RunReport,
    pub bound: BoundCurve,
    pub taps: Vec<PathTap>,
    /// `bound / sim` per grid point; `None` where no errors were seen.
    pub ratios: Vec<Option<f64>>,
    /// Smallest grid SNR from which every later point with errors has ratio in `[1, 3]`.
    pub convergence_snr: Option<f64>,
}

pub const TAP_DOMAIN: u32 = 21;

/// Draws the pinned delay/Doppler indices used by bound-vs-sim runs.
pub fn pinned_taps(cfg: &ValidatedConfig, seed: u64) -> Result<Vec<PathTap>> {
    sample_taps(cfg, &mut substream(seed, TAP_DOMAIN, 0, 0))
}

pub fn run_bound_vs_sim(
    cfg: &ValidatedConfig,
    dm_set: &DispersionMatrixSet,
    snr_db: &[f64],
    taps: &[PathTap],
    stop: StopRule,
    seed: u64,
) -> Result<BoundVsSim> {
    if cfg.u() != 1 {
        return Err(Error::InvalidParameter("bound comparison needs a single user".into()));
    }
    // The bound depends only on the indices, so unit gains stand in for the profile.
    let gains = vec![num_complex::Complex64::new(1.0, 0.0); cfg.nr() * cfg.nt() * taps.len()];
    let profile = PathProfile::from_parts(taps.to_vec(), gains, cfg)?;
    let bound = union_bound_ber(cfg, dm_set, &profile, snr_db)?;
    let sim = run_ber_sweep(cfg, dm_set, &[Detector::Mld], snr_db, stop, seed, &ChannelMode::PinnedTaps(taps.to_vec()))?;
    let ratios: Vec<Option<f64>> = sim
        .points
        .iter()
        .zip(&bound.points)
        .map(|(s, b)| (s.bit_errors > 0).then(|| b.value / s.ber))
        .collect();
    Ok(BoundVsSim { convergence_snr: convergence_snr(snr_db, &ratios), sim, bound, taps: taps.to_vec(), ratios })
}

/// First grid SNR from which all later ratios (where defined) lie in `[1, 3]`.
pub fn convergence_snr(snr_db: &[f64], ratios: &[Option<f64>]) -> Option<f64> {
    let ok = |r: &Option<f64>| r.is_none_or(|v| (1.0..=3.0).contains(&v));
    let mut first = None;
    for i in (0..ratios.len()).rev() {
        if ok(&ratios[i]) {
            first = Some(i);
        } else {
            break;
        }
    }
    let i = first?;
    // A tail with no measured ratio at all says nothing about convergence.
    ratios[i..].iter().any(Option::is_some).then(|| snr_db[i])
}
