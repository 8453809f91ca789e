//! Exhaustive and reduced-complexity detectors for `ỹ = C·K + ñ`.
//!
//! A DAP (activation pattern) is the list of active positions of `K`, one
//! per block. DAP `c ∈ [0, Q^{M_d})` has block `b` digit
//! `(c / Q^{M_d-1-b}) mod Q`, so DAP order agrees with codeword order.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{Constellation, ValidatedConfig};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, ONE};
use crate::mapping::{check_codebook_size, demap_bits, MAX_CODEBOOK_BITS};

/// Largest DAP space the reduced-complexity detectors will index.
pub const MAX_DAP_SPACE: usize = 1 << 24;

/// Relative threshold on the triangular factor below which a DAP's
/// sub-matrix is treated as rank deficient.
pub const LS_RANK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub dap: Vec<usize>,
    pub apm: Vec<Complex64>,
    pub residual: f64,
    pub candidates_tested: u64,
    pub dap_evaluations: u64,
}

impl DetectionResult {
    pub fn bits(&self, cfg: &ValidatedConfig, constellation: &Constellation) -> Result<Vec<u8>> {
        demap_bits(&self.dap, &self.apm, cfg, constellation)
    }
}

/// Indices sorted by nonincreasing score; equal scores keep index order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityOrder {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl ReliabilityOrder {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut indices: Vec<usize> = (0..scores.len()).collect();
        indices.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let scores = indices.iter().map(|&i| scores[i]).collect();
        ReliabilityOrder { indices, scores }
    }
}

/// `‖ỹ − C_ℐ K_d‖²`.
pub fn residual(y: &CVector, c: &CMatrix, dap: &[usize], apm: &[Complex64]) -> f64 {
    let mut r = y.clone();
    for (&i, &a) in dap.iter().zip(apm) {
        r.axpy(-a, &c.column(i), ONE);
    }
    r.norm_squared()
}

fn check_inputs(y: &CVector, c: &CMatrix, cfg: &ValidatedConfig) -> Result<()> {
    if c.shape() != (cfg.rows(), cfg.k_len()) {
        return Err(Error::DimensionMismatch(format!(
            "C is {} x {}, expected {} x {}",
            c.nrows(),
            c.ncols(),
            cfg.rows(),
            cfg.k_len()
        )));
    }
    if y.len() != cfg.rows() {
        return Err(Error::DimensionMismatch(format!("y has length {}, expected {}", y.len(), cfg.rows())));
    }
    Ok(())
}

/// Number of DAPs `Q^{M_d}`, guarded by [`MAX_DAP_SPACE`].
pub fn dap_space(cfg: &ValidatedConfig) -> Result<usize> {
    match cfg.dap_count() {
        Some(c) if c <= MAX_DAP_SPACE => Ok(c),
        _ => Err(Error::SearchSpaceTooLarge {
            size: (cfg.q() as f64).powi(cfg.md as i32),
            limit: MAX_DAP_SPACE,
        }),
    }
}

/// Active positions of DAP `index`.
pub fn dap_from_index(index: usize, cfg: &ValidatedConfig) -> Vec<usize> {
    let q = cfg.q();
    let mut out = vec![0; cfg.md];
    let mut rest = index;
    for b in (0..cfg.md).rev() {
        out[b] = b * q + rest % q;
        rest /= q;
    }
    out
}

/// Exhaustive search over all `2^L` codewords, depth first in codeword order.
pub fn mld(y: &CVector, c: &CMatrix, cfg: &ValidatedConfig, constellation: &Constellation) -> Result<DetectionResult> {
    let size = check_codebook_size(cfg, MAX_CODEBOOK_BITS)?;
    check_inputs(y, c, cfg)?;
    let (q, md, l2) = (cfg.q(), cfg.md, cfg.l2);
    // Per block, the contribution of every (DM, symbol) pair in block-value order.
    let per_block: Vec<Vec<(usize, usize, CVector)>> = (0..md)
        .map(|b| {
            (0..1usize << cfg.lb)
                .map(|v| {
                    let (qi, point) = (v >> l2, constellation.index_of_label(v & ((1 << l2) - 1)));
                    let col = b * q + qi;
                    (col, point, c.column(col) * constellation.points[point])
                })
                .collect()
        })
        .collect();
    let mut stack: Vec<CVector> = vec![y.clone(); md + 1];
    let mut choice = vec![0usize; md];
    let mut best = (f64::INFINITY, vec![0usize; md]);
    let width = 1usize << cfg.lb;
    let mut depth = 0usize;
    loop {
        if depth == md {
            let e = stack[md].norm_squared();
            if e < best.0 {
                best = (e, choice.clone());
            }
            // Backtrack to the deepest block with an untried value.
            loop {
                if depth == 0 {
                    break;
                }
                depth -= 1;
                choice[depth] += 1;
                if choice[depth] < width {
                    break;
                }
                choice[depth] = 0;
            }
            if depth == 0 && choice[0] == 0 {
                break;
            }
        }
        let (head, tail) = stack.split_at_mut(depth + 1);
        tail[0].copy_from(&head[depth]);
        tail[0] -= &per_block[depth][choice[depth]].2;
        depth += 1;
    }
    let dap: Vec<usize> = (0..md).map(|b| per_block[b][best.1[b]].0).collect();
    let apm: Vec<Complex64> = (0..md).map(|b| constellation.points[per_block[b][best.1[b]].1]).collect();
    Ok(DetectionResult {
        residual: residual(y, c, &dap, &apm),
        dap,
        apm,
        candidates_tested: size as u64,
        dap_evaluations: cfg.dap_count().map_or(0, |d| d as u64),
    })
}

/// Joint search over DAPs and symbol vectors: for each DAP in order, every
/// `f ∈ 𝓕^{M_d}` against the gathered columns `C_𝒬`.
pub fn factorized_mld(
    y: &CVector,
    c: &CMatrix,
    cfg: &ValidatedConfig,
    constellation: &Constellation,
) -> Result<DetectionResult> {
    if cfg.l > MAX_CODEBOOK_BITS {
        return Err(Error::SearchSpaceTooLarge { size: 2f64.powi(cfg.l as i32), limit: 1 << MAX_CODEBOOK_BITS });
    }
    check_inputs(y, c, cfg)?;
    let daps = dap_space(cfg)?;
    let (md, v) = (cfg.md, constellation.order());
    let mut best: (f64, usize, Vec<usize>) = (f64::INFINITY, 0, vec![0; md]);
    let mut symbols = vec![0usize; md];
    let mut r = CVector::zeros(y.len());
    for d in 0..daps {
        let dap = dap_from_index(d, cfg);
        let cols: Vec<CVector> = dap.iter().map(|&i| c.column(i).into_owned()).collect();
        symbols.iter_mut().for_each(|s| *s = 0);
        loop {
            r.copy_from(y);
            for (col, &s) in cols.iter().zip(&symbols) {
                r.axpy(-constellation.points[s], col, ONE);
            }
            let e = r.norm_squared();
            if e < best.0 {
                best = (e, d, symbols.clone());
            }
            // Odometer over symbol indices, last block fastest.
            let mut b = md;
            while b > 0 {
                b -= 1;
                symbols[b] += 1;
                if symbols[b] < v {
                    break;
                }
                symbols[b] = 0;
            }
            if symbols.iter().all(|&s| s == 0) {
                break;
            }
        }
    }
    let dap = dap_from_index(best.1, cfg);
    let apm: Vec<Complex64> = best.2.iter().map(|&s| constellation.points[s]).collect();
    Ok(DetectionResult {
        residual: residual(y, c, &dap, &apm),
        dap,
        apm,
        candidates_tested: (daps * v.pow(md as u32)) as u64,
        dap_evaluations: daps as u64,
    })
}

/// Soft estimate `(CᴴC + I/γ_s)⁻¹ Cᴴ ỹ` through a Cholesky solve. `gamma_s`
/// is the per-symbol SNR; `∞` drops the regularizer.
pub fn lmmse_soft_estimate(y: &CVector, c: &CMatrix, gamma_s: f64) -> Result<CVector> {
    if gamma_s.is_nan() || gamma_s <= 0.0 {
        return Err(Error::InvalidParameter(format!("SNR must be positive, got {gamma_s}")));
    }
    if y.len() != c.nrows() {
        return Err(Error::DimensionMismatch(format!("y has length {}, C has {} rows", y.len(), c.nrows())));
    }
    let ch = c.adjoint();
    let mut gram = &ch * c;
    let reg = 1.0 / gamma_s;
    for i in 0..gram.nrows() {
        gram[(i, i)] += reg;
    }
    let rhs = ch * y;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::SolveFailure("regularized Gram matrix is not positive definite".into()))?;
    Ok(chol.solve(&rhs))
}

/// Least-squares solution `C_𝒬† ỹ` via a thin QR factorization.
pub fn ls_solve(sub: &CMatrix, y: &CVector) -> Result<CVector> {
    let qr = sub.clone().qr();
    let r = qr.r();
    let top = (0..r.ncols()).map(|i| r[(i, i)].norm()).fold(0.0, f64::max);
    if top == 0.0 || (0..r.ncols()).any(|i| r[(i, i)].norm() <= LS_RANK_TOLERANCE * top) {
        return Err(Error::SolveFailure("DAP sub-matrix is rank deficient".into()));
    }
    let qty = qr.q().adjoint() * y;
    r.solve_upper_triangular(&qty)
        .ok_or_else(|| Error::SolveFailure("triangular solve failed".into()))
}

/// LS plus symbol-wise quantization for one DAP; returns the symbols and residual.
fn test_dap(y: &CVector, c: &CMatrix, dap: &[usize], constellation: &Constellation) -> Result<(Vec<Complex64>, f64)> {
    let sub = c.select_columns(dap);
    let est = ls_solve(&sub, y)?;
    let apm: Vec<Complex64> = est.iter().map(|&z| constellation.points[constellation.nearest(z)]).collect();
    let e = residual(y, c, dap, &apm);
    Ok((apm, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrcgdParams {
    /// Iteration budget `T_1`.
    pub t1: usize,
    /// Early-exit residual threshold `ε_0`.
    pub eps0: f64,
    /// Total SNR `γ`; the LMMSE stage uses `γ/Q`.
    pub gamma: f64,
    /// Optional cap on DAPs gathered per iteration.
    pub cap: Option<usize>,
}

impl PrcgdParams {
    /// `ε_0 = M_d N_r T_c / γ`, the expected noise energy.
    pub fn default_eps0(cfg: &ValidatedConfig, gamma: f64) -> f64 {
        cfg.rows() as f64 / gamma
    }
}

struct Bitset(Vec<u64>);

impl Bitset {
    fn new(n: usize) -> Self {
        Bitset(vec![0; n.div_ceil(64)])
    }
    fn get(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.0[i / 64] |= 1 << (i % 64);
    }
}

/// Progressive residual check greedy detector.
///
/// Iteration `t` takes the `t`-th most reliable element `j_t` of the LMMSE
/// estimate and tests every untested DAP that activates it. At most
/// `min(T_1, Q M_d)` iterations run; an iteration whose gathered set is
/// empty is skipped.
pub fn prcgd(
    y: &CVector,
    c: &CMatrix,
    cfg: &ValidatedConfig,
    constellation: &Constellation,
    params: &PrcgdParams,
) -> Result<DetectionResult> {
    if params.t1 == 0 {
        return Err(Error::InvalidParameter("T_1 must be at least 1".into()));
    }
    if params.eps0.is_nan() || params.eps0 < 0.0 {
        return Err(Error::InvalidParameter(format!("eps_0 must be nonnegative, got {}", params.eps0)));
    }
    check_inputs(y, c, cfg)?;
    let space = dap_space(cfg)?;
    let (q, md) = (cfg.q(), cfg.md);
    let soft = lmmse_soft_estimate(y, c, params.gamma / q as f64)?;
    let scores: Vec<f64> = soft.iter().map(|z| z.norm_sqr()).collect();
    let order = ReliabilityOrder::from_scores(&scores);

    let mut tested = Bitset::new(space);
    let mut best: Option<(f64, Vec<usize>, Vec<Complex64>)> = None;
    let mut eps_t = f64::INFINITY;
    let mut evaluations = 0u64;
    for &j in order.indices.iter().take(params.t1.min(q * md)) {
        if eps_t < params.eps0 {
            break;
        }
        let (b, qj) = (j / q, j % q);
        let low_span = q.pow((md - 1 - b) as u32);
        let mut local: Option<(f64, Vec<usize>, Vec<Complex64>)> = None;
        let mut gathered = 0usize;
        for r in 0..space / q {
            if params.cap.is_some_and(|cap| gathered >= cap) {
                break;
            }
            let d = (r / low_span) * low_span * q + qj * low_span + r % low_span;
            if tested.get(d) {
                continue;
            }
            tested.set(d);
            gathered += 1;
            let dap = dap_from_index(d, cfg);
            let (apm, e) = test_dap(y, c, &dap, constellation)?;
            evaluations += 1;
            if local.as_ref().is_none_or(|l| e < l.0) {
                local = Some((e, dap, apm));
            }
        }
        let Some(local) = local else { continue };
        eps_t = local.0;
        if best.as_ref().is_none_or(|g| local.0 < g.0) {
            best = Some(local);
        }
        if eps_t < params.eps0 {
            break;
        }
    }
    let (e, dap, apm) = best.expect("the first iteration always gathers at least one DAP");
    Ok(DetectionResult { dap, apm, residual: e, candidates_tested: evaluations, dap_evaluations: evaluations })
}

/// DAP reliabilities `ρ_c = Σ_b |K̃(i^c_b)|²` for every DAP, in DAP order.
pub fn dap_reliabilities(soft: &CVector, cfg: &ValidatedConfig) -> Result<Vec<f64>> {
    let space = dap_space(cfg)?;
    let (q, md) = (cfg.q(), cfg.md);
    let mag: Vec<f64> = soft.iter().map(|z| z.norm_sqr()).collect();
    let mut rho = vec![0.0; space];
    let mut digits = vec![0usize; md];
    for slot in rho.iter_mut() {
        *slot = digits.iter().enumerate().map(|(b, &d)| mag[b * q + d]).sum();
        let mut b = md;
        while b > 0 {
            b -= 1;
            digits[b] += 1;
            if digits[b] < q {
                break;
            }
            digits[b] = 0;
        }
    }
    Ok(rho)
}

/// Iterative reduced-space check detector: tests the `T_2` most reliable DAPs.
pub fn ircd(
    y: &CVector,
    c: &CMatrix,
    cfg: &ValidatedConfig,
    constellation: &Constellation,
    t2: usize,
    gamma: f64,
) -> Result<DetectionResult> {
    check_inputs(y, c, cfg)?;
    let space = dap_space(cfg)?;
    if t2 == 0 || t2 > space {
        return Err(Error::InvalidParameter(format!("T_2 = {t2} must lie in 1..={space}")));
    }
    let soft = lmmse_soft_estimate(y, c, gamma / cfg.q() as f64)?;
    let order = ReliabilityOrder::from_scores(&dap_reliabilities(&soft, cfg)?);
    let mut best: Option<(f64, Vec<usize>, Vec<Complex64>)> = None;
    for &d in order.indices.iter().take(t2) {
        let dap = dap_from_index(d, cfg);
        let (apm, e) = test_dap(y, c, &dap, constellation)?;
        if best.as_ref().is_none_or(|g| e < g.0) {
            best = Some((e, dap, apm));
        }
    }
    let (e, dap, apm) = best.expect("T_2 >= 1");
    Ok(DetectionResult { dap, apm, residual: e, candidates_tested: t2 as u64, dap_evaluations: t2 as u64 })
}

/// Measured counts next to the analytic complexity orders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub detector: String,
    pub candidates_tested: u64,
    pub dap_evaluations: u64,
    /// `(VQ)^{M_d}`
    pub mld_order: f64,
    /// `M_d V`
    pub prcgd_best_order: f64,
    /// `Q^{M_d} M_d V`
    pub prcgd_worst_order: f64,
    /// `C_1 M_d V` with `C_1` the measured number of DAPs tested.
    pub prcgd_order: f64,
    /// `T_2 M_d V` with `T_2` the measured number of DAPs tested.
    pub ircd_order: f64,
    /// Order of the detector that produced the result.
    pub measured_order: f64,
}

pub fn complexity_report(detector: &Detector, result: &DetectionResult, cfg: &ValidatedConfig) -> ComplexityReport {
    let (md, v, q) = (cfg.md as f64, cfg.v() as f64, cfg.q() as f64);
    let tested = result.dap_evaluations as f64;
    let mld_order = (v * q).powf(md);
    let prcgd_order = tested * md * v;
    let ircd_order = tested * md * v;
    let measured_order = match detector {
        Detector::Mld | Detector::FactorizedMld => mld_order,
        Detector::Prcgd { .. } => prcgd_order,
        Detector::Ircd { .. } => ircd_order,
    };
    ComplexityReport {
        detector: detector.to_string(),
        candidates_tested: result.candidates_tested,
        dap_evaluations: result.dap_evaluations,
        mld_order,
        prcgd_best_order: md * v,
        prcgd_worst_order: q.powf(md) * md * v,
        prcgd_order,
        ircd_order,
        measured_order,
    }
}

/// Reference system families for the system-complexity comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemKind {
    SimoOtfs,
    SmOtfs,
    StskOfdmMa,
    StskOtfsMa,
}

/// MLD complexity order of each family at the given dimensions:
/// `V^{MN}`, `(N_t V)^{MN}`, `(QV)^M` and `(QV)^{MN}`.
pub fn system_complexity(kind: SystemKind, cfg: &ValidatedConfig) -> f64 {
    let (v, q, nt) = (cfg.v() as f64, cfg.q() as f64, cfg.nt() as f64);
    let (m, md) = (cfg.m() as f64, cfg.md as f64);
    match kind {
        SystemKind::SimoOtfs => v.powf(md),
        SystemKind::SmOtfs => (nt * v).powf(md),
        SystemKind::StskOfdmMa => (q * v).powf(m),
        SystemKind::StskOtfsMa => (q * v).powf(md),
    }
}

/// IRCD budget: an absolute count or a fraction of the DAP space, rounded up.
/// A count larger than the DAP space saturates at the full space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IrcdBudget {
    Count(usize),
    Fraction(usize, usize),
}

impl IrcdBudget {
    pub fn resolve(&self, space: usize) -> usize {
        match *self {
            IrcdBudget::Count(n) => n.min(space),
            IrcdBudget::Fraction(num, den) => (num * space).div_ceil(den),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Detector {
    Mld,
    FactorizedMld,
    Prcgd { t1: usize },
    Ircd { t2: IrcdBudget },
}

impl Detector {
    /// Runs the detector at total SNR `gamma` (`1/N_0`).
    pub fn detect(
        &self,
        y: &CVector,
        c: &CMatrix,
        cfg: &ValidatedConfig,
        constellation: &Constellation,
        gamma: f64,
    ) -> Result<DetectionResult> {
        match *self {
            Detector::Mld => mld(y, c, cfg, constellation),
            Detector::FactorizedMld => factorized_mld(y, c, cfg, constellation),
            Detector::Prcgd { t1 } => prcgd(
                y,
                c,
                cfg,
                constellation,
                &PrcgdParams { t1, eps0: PrcgdParams::default_eps0(cfg, gamma), gamma, cap: None },
            ),
            Detector::Ircd { t2 } => ircd(y, c, cfg, constellation, t2.resolve(dap_space(cfg)?), gamma),
        }
    }

    /// Checks that the detector can run on `cfg` before any trial starts.
    pub fn check(&self, cfg: &ValidatedConfig) -> Result<()> {
        match *self {
            Detector::Mld => check_codebook_size(cfg, MAX_CODEBOOK_BITS).map(|_| ()),
            Detector::FactorizedMld => {
                if cfg.l > MAX_CODEBOOK_BITS {
                    Err(Error::SearchSpaceTooLarge { size: 2f64.powi(cfg.l as i32), limit: 1 << MAX_CODEBOOK_BITS })
                } else {
                    Ok(())
                }
            }
            Detector::Prcgd { t1 } => {
                dap_space(cfg)?;
                if t1 == 0 {
                    return Err(Error::InvalidParameter("T_1 must be at least 1".into()));
                }
                Ok(())
            }
            Detector::Ircd { t2 } => {
                let space = dap_space(cfg)?;
                let t = t2.resolve(space);
                if t == 0 || t > space {
                    return Err(Error::InvalidParameter(format!("T_2 = {t} must lie in 1..={space}")));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Detector::Mld => write!(f, "mld"),
            Detector::FactorizedMld => write!(f, "fmld"),
            Detector::Prcgd { t1 } => write!(f, "prcgd:{t1}"),
            Detector::Ircd { t2: IrcdBudget::Count(n) } => write!(f, "ircd:{n}"),
            Detector::Ircd { t2: IrcdBudget::Fraction(a, b) } => write!(f, "ircd:{a}/{b}"),
        }
    }
}

impl FromStr for Detector {
    type Err = Error;

    /// `mld`, `fmld`, `prcgd:<T_1>`, `ircd:<T_2>` or `ircd:<a>/<b>` (a fraction of `Q^{M_d}`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s.as_str(), None),
        };
        let bad = || Error::Parse(format!("invalid detector `{s}`"));
        let count = |p: &str| p.parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(bad);
        match (name, param) {
            ("mld", None) => Ok(Detector::Mld),
            ("fmld" | "factorized-mld", None) => Ok(Detector::FactorizedMld),
            ("prcgd", Some(p)) => Ok(Detector::Prcgd { t1: count(p)? }),
            ("prcgd", None) => Ok(Detector::Prcgd { t1: 2 }),
            ("ircd", Some(p)) => match p.split_once('/') {
                Some((a, b)) => {
                    let (a, b) = (count(a)?, count(b)?);
                    if a > b {
                        return Err(bad());
                    }
                    Ok(Detector::Ircd { t2: IrcdBudget::Fraction(a, b) })
                }
                None => Ok(Detector::Ircd { t2: IrcdBudget::Count(count(p)?) }),
            },
            _ => Err(bad()),
        }
    }
}

/// Parses a comma-separated detector list.
pub fn parse_detectors(list: &str) -> Result<Vec<Detector>> {
    let out: Vec<Detector> = list.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Parse("empty detector list".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{add_noise, equivalent_matrix, sample_paths, transmit};
    use crate::config::SystemConfig;
    use crate::dispersion::DispersionMatrixSet;
    use crate::linalg::{identity, substream};
    use crate::mapping::{build_resource_allocation, codeword_bits, encode_bits};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Instance {
        cfg: ValidatedConfig,
        con: Constellation,
        c: CMatrix,
        bits: Vec<u8>,
        y: CVector,
    }

    fn instance(raw: SystemConfig, seed: u64, gamma: f64) -> Instance {
        let cfg = raw.validate().unwrap();
        let con = cfg.constellation();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prof = sample_paths(&cfg, &mut rng).unwrap();
        let dm = DispersionMatrixSet::random(&cfg, &mut rng, seed);
        let c = equivalent_matrix(&prof, &cfg, &build_resource_allocation(&cfg), &dm);
        let bits: Vec<u8> = (0..cfg.l).map(|_| rng.random_range(0..2u8)).collect();
        let k = encode_bits(&bits, &cfg, &con).unwrap();
        let y = add_noise(&transmit(&c, &k), gamma, &mut rng);
        Instance { cfg, con, c, bits, y }
    }

    #[test]
    fn noiseless_recovery_all_detectors() {
        for seed in 0..5 {
            let it = instance(SystemConfig::toy(), seed, f64::INFINITY);
            let gamma = 1e6;
            let space = it.cfg.dap_count().unwrap();
            for det in [
                Detector::Mld,
                Detector::FactorizedMld,
                Detector::Ircd { t2: IrcdBudget::Count(space) },
            ] {
                let r = det.detect(&it.y, &it.c, &it.cfg, &it.con, gamma).unwrap();
                assert_eq!(r.bits(&it.cfg, &it.con).unwrap(), it.bits, "{det}");
                assert!(r.residual < 1e-18);
            }
            let p = prcgd(
                &it.y,
                &it.c,
                &it.cfg,
                &it.con,
                &PrcgdParams { t1: space, eps0: 1e-9, gamma, cap: None },
            )
            .unwrap();
            assert_eq!(p.bits(&it.cfg, &it.con).unwrap(), it.bits);
            assert!(p.residual < 1e-18);
        }
    }

    #[test]
    fn mld_counts_and_global_optimality() {
        let it = instance(SystemConfig::toy(), 3, 2.0);
        let r = mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
        assert_eq!(r.candidates_tested, 256);
        for idx in 0..256 {
            let k = encode_bits(&codeword_bits(idx, 8), &it.cfg, &it.con).unwrap();
            assert!(residual(&it.y, &it.c, &k.dap, &k.apm) >= r.residual - 1e-12);
        }
    }

    #[test]
    fn mld_matches_factorized() {
        for seed in 0..20 {
            let it = instance(SystemConfig::toy(), 100 + seed, 3.0);
            let a = mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
            let b = factorized_mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
            assert!((a.residual - b.residual).abs() <= 1e-12);
            assert_eq!(a.dap, b.dap);
        }
    }

    #[test]
    fn mld_with_qpsk_and_four_dms() {
        let raw = SystemConfig { n: 2, m: 1, p: 1, q: 4, v: 4, ..SystemConfig::toy() };
        for seed in 0..5 {
            let it = instance(raw.clone(), seed, 5.0);
            let a = mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
            let b = factorized_mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
            assert!((a.residual - b.residual).abs() <= 1e-12);
        }
    }

    #[test]
    fn single_dm_factorized_is_symbol_search() {
        let it = instance(SystemConfig { q: 1, ..SystemConfig::toy() }, 4, 4.0);
        let r = factorized_mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
        assert_eq!(r.dap_evaluations, 1);
        assert_eq!(r.candidates_tested, 16);
    }

    #[test]
    fn lmmse_limits() {
        let mut rng = substream(1, 0, 0, 0);
        let y = CVector::from_fn(5, |_, _| crate::linalg::complex_normal(&mut rng, 1.0));
        let est = lmmse_soft_estimate(&y, &identity(5), 1e12).unwrap();
        assert!((est - &y).norm() < 1e-9);
        let est = lmmse_soft_estimate(&y, &identity(5), 1e-12).unwrap();
        assert!(est.norm() < 1e-9);
        assert!(lmmse_soft_estimate(&y, &identity(5), 0.0).is_err());
    }

    #[test]
    fn lmmse_high_snr_matches_pseudoinverse() {
        let mut rng = substream(2, 0, 0, 0);
        let c = CMatrix::from_fn(8, 4, |_, _| crate::linalg::complex_normal(&mut rng, 1.0));
        let y = CVector::from_fn(8, |_, _| crate::linalg::complex_normal(&mut rng, 1.0));
        let est = lmmse_soft_estimate(&y, &c, 1e6).unwrap();
        let svd = c.clone().svd(true, true);
        let ls = svd.solve(&y, 1e-12).unwrap();
        assert!((&est - &ls).norm() <= 1e-4 * ls.norm());
    }

    #[test]
    fn rank_deficient_dap_fails() {
        let c = CMatrix::from_fn(4, 2, |r, _| Complex64::new(r as f64, 0.0));
        assert!(matches!(ls_solve(&c, &CVector::zeros(4)), Err(Error::SolveFailure(_))));
    }

    #[test]
    fn reduced_detectors_never_beat_mld() {
        for seed in 0..20 {
            let it = instance(SystemConfig::toy(), 200 + seed, 1.5);
            let m = mld(&it.y, &it.c, &it.cfg, &it.con).unwrap();
            let p = Detector::Prcgd { t1: 1 }.detect(&it.y, &it.c, &it.cfg, &it.con, 1.5).unwrap();
            assert!(p.residual >= m.residual - 1e-12);
            let mut last = f64::INFINITY;
            for t2 in 1..=16 {
                let r = ircd(&it.y, &it.c, &it.cfg, &it.con, t2, 1.5).unwrap();
                assert!(r.residual >= m.residual - 1e-12);
                assert!(r.residual <= last);
                assert_eq!(r.candidates_tested, t2 as u64);
                last = r.residual;
            }
        }
    }

    #[test]
    fn prcgd_gathers_each_dap_once() {
        let it = instance(SystemConfig::toy(), 9, 1.0);
        let p = prcgd(&it.y, &it.c, &it.cfg, &it.con, &PrcgdParams { t1: 100, eps0: 0.0, gamma: 1.0, cap: None }).unwrap();
        // With ε_0 = 0 every iteration runs; all 16 DAPs are tested exactly once.
        assert_eq!(p.dap_evaluations, 16);
        let one = prcgd(&it.y, &it.c, &it.cfg, &it.con, &PrcgdParams { t1: 1, eps0: 0.0, gamma: 1.0, cap: None }).unwrap();
        assert_eq!(one.dap_evaluations, 8);
        let capped = prcgd(&it.y, &it.c, &it.cfg, &it.con, &PrcgdParams { t1: 1, eps0: 0.0, gamma: 1.0, cap: Some(3) }).unwrap();
        assert_eq!(capped.dap_evaluations, 3);
    }

    #[test]
    fn detectors_are_deterministic() {
        let it = instance(SystemConfig::toy(), 17, 2.0);
        for det in [Detector::Mld, Detector::Prcgd { t1: 2 }, Detector::Ircd { t2: IrcdBudget::Fraction(5, 8) }] {
            let a = det.detect(&it.y, &it.c, &it.cfg, &it.con, 2.0).unwrap();
            let b = det.detect(&it.y, &it.c, &it.cfg, &it.con, 2.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reliability_ties_prefer_low_index() {
        let o = ReliabilityOrder::from_scores(&[1.0, 3.0, 3.0, 0.5]);
        assert_eq!(o.indices, vec![1, 2, 0, 3]);
        assert_eq!(o.scores, vec![3.0, 3.0, 1.0, 0.5]);
    }

    #[test]
    fn dap_indexing() {
        let cfg = SystemConfig::toy().validate().unwrap();
        assert_eq!(dap_from_index(0, &cfg), vec![0, 2, 4, 6]);
        assert_eq!(dap_from_index(1, &cfg), vec![0, 2, 4, 7]);
        assert_eq!(dap_from_index(8, &cfg), vec![1, 2, 4, 6]);
        let soft = CVector::from_fn(8, |i, _| Complex64::new(i as f64, 0.0));
        let rho = dap_reliabilities(&soft, &cfg).unwrap();
        assert_eq!(rho[0], 0.0 + 4.0 + 16.0 + 36.0);
        assert_eq!(rho[15], 1.0 + 9.0 + 25.0 + 49.0);
    }

    #[test]
    fn complexity_examples() {
        let cfg = SystemConfig::toy().validate().unwrap();
        let it = instance(SystemConfig::toy(), 1, 10.0);
        let r = mld(&it.y, &it.c, &cfg, &it.con).unwrap();
        let rep = complexity_report(&Detector::Mld, &r, &cfg);
        assert_eq!(rep.mld_order, 256.0);
        assert_eq!(rep.candidates_tested, 256);
        assert_eq!(rep.prcgd_best_order, 8.0);
        let r = ircd(&it.y, &it.c, &cfg, &it.con, 8, 10.0).unwrap();
        assert_eq!(complexity_report(&Detector::Ircd { t2: IrcdBudget::Count(8) }, &r, &cfg).ircd_order, 64.0);
        assert_eq!(system_complexity(SystemKind::SmOtfs, &cfg), 256.0);
        assert_eq!(system_complexity(SystemKind::SimoOtfs, &cfg), 16.0);
        assert_eq!(system_complexity(SystemKind::StskOfdmMa, &cfg), 16.0);
    }

    #[test]
    fn guards() {
        let big = SystemConfig { n: 4, m: 8, ..SystemConfig::toy() }.validate().unwrap();
        let con = big.constellation();
        let y = CVector::zeros(big.rows());
        let c = CMatrix::zeros(big.rows(), big.k_len());
        assert!(matches!(mld(&y, &c, &big, &con), Err(Error::CodebookTooLarge { .. })));
        assert!(matches!(factorized_mld(&y, &c, &big, &con), Err(Error::SearchSpaceTooLarge { .. })));
        assert!(matches!(ircd(&y, &c, &big, &con, 1, 1.0), Err(Error::SearchSpaceTooLarge { .. })));
        let toy = SystemConfig::toy().validate().unwrap();
        let it = instance(SystemConfig::toy(), 0, 1.0);
        assert!(ircd(&it.y, &it.c, &toy, &it.con, 17, 1.0).is_err());
        assert!(matches!(mld(&CVector::zeros(3), &it.c, &toy, &it.con), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn detector_parsing() {
        assert_eq!("mld".parse::<Detector>().unwrap(), Detector::Mld);
        assert_eq!("prcgd:3".parse::<Detector>().unwrap(), Detector::Prcgd { t1: 3 });
        assert_eq!("ircd:5/8".parse::<Detector>().unwrap(), Detector::Ircd { t2: IrcdBudget::Fraction(5, 8) });
        assert_eq!(IrcdBudget::Fraction(5, 8).resolve(16), 10);
        assert_eq!(IrcdBudget::Fraction(5, 8).resolve(15), 10);
        assert_eq!(IrcdBudget::Count(24).resolve(16), 16);
        for bad in ["", "foo", "ircd", "ircd:0", "ircd:9/8", "prcgd:x", "mld:3"] {
            assert!(bad.parse::<Detector>().is_err(), "{bad}");
        }
        let list = parse_detectors("mld, prcgd:1,ircd:10").unwrap();
        assert_eq!(list.len(), 3);
        for d in &list {
            assert_eq!(d.to_string().parse::<Detector>().unwrap(), *d);
        }
    }
}
