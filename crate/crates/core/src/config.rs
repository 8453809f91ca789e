//! System parameters, derived frame dimensions and APM constellations.
//!
//! A [`SystemConfig`] is the raw, user-supplied parameter set. Validation
//! produces a [`ValidatedConfig`] that also carries every derived dimension
//! (`M_d`, `G`, `J`, bit counts and rate). Both are immutable once built.
//!
//! Configuration files are flat `key = value` text; `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Resource-block allocation across users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AllocationScheme {
    /// Each user owns `J = M/U` delay columns (Scheme 1).
    DelayScheme1,
    /// Each user owns `N/U` Doppler rows (Scheme 2).
    DopplerScheme2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstellationKind {
    Psk,
    Qam,
}

/// Raw system parameters as read from a config file or built in code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Doppler bins per OTFS subframe.
    pub n: usize,
    /// Delay bins (subcarriers).
    pub m: usize,
    pub nt: usize,
    pub nr: usize,
    /// OTFS time-slots spanned by one STSK block.
    pub tc: usize,
    /// Dispersion-matrix count.
    pub q: usize,
    /// Constellation order.
    pub v: usize,
    pub u: usize,
    /// Channel path count.
    pub p: usize,
    pub delta_f_hz: f64,
    pub f_c_hz: f64,
    pub scheme: AllocationScheme,
    /// Maximum integer delay index; `None` selects the default.
    pub l_max: Option<usize>,
    /// Maximum integer Doppler index magnitude; `None` selects the default.
    pub k_max: Option<usize>,
    pub constellation: ConstellationKind,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n: 4,
            m: 8,
            nt: 2,
            nr: 2,
            tc: 2,
            q: 2,
            v: 2,
            u: 1,
            p: 2,
            delta_f_hz: 15e3,
            f_c_hz: 4e9,
            scheme: AllocationScheme::DelayScheme1,
            l_max: None,
            k_max: None,
            constellation: ConstellationKind::Psk,
        }
    }
}

impl SystemConfig {
    /// The small configuration used throughout the tests:
    /// `N = M = 2`, `Q = V = 2`, `N_t = N_r = T_c = 2`, one user, two paths.
    pub fn toy() -> Self {
        Self {
            n: 2,
            m: 2,
            nt: 2,
            nr: 2,
            tc: 2,
            q: 2,
            v: 2,
            u: 1,
            p: 2,
            ..Self::default()
        }
    }

    pub fn validate(self) -> Result<ValidatedConfig> {
        validate_config(self)
    }

    /// Parses the `key = value` format.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SystemConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Parse(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            let count = |v: &str| -> Result<usize> {
                v.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: `{key}` expects a count", lineno + 1)))
            };
            let real = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: `{key}` expects a number", lineno + 1)))
            };
            match key {
                "n" => cfg.n = count(value)?,
                "m" => cfg.m = count(value)?,
                "nt" => cfg.nt = count(value)?,
                "nr" => cfg.nr = count(value)?,
                "tc" => cfg.tc = count(value)?,
                "q" => cfg.q = count(value)?,
                "v" => cfg.v = count(value)?,
                "u" => cfg.u = count(value)?,
                "p" => cfg.p = count(value)?,
                "delta_f_hz" => cfg.delta_f_hz = real(value)?,
                "f_c_hz" => cfg.f_c_hz = real(value)?,
                "l_max" => cfg.l_max = Some(count(value)?),
                "k_max" => cfg.k_max = Some(count(value)?),
                "scheme" => {
                    cfg.scheme = match value.to_ascii_lowercase().as_str() {
                        "1" | "delay" | "scheme1" => AllocationScheme::DelayScheme1,
                        "2" | "doppler" | "scheme2" => AllocationScheme::DopplerScheme2,
                        other => {
                            return Err(Error::Parse(format!(
                                "line {}: unknown scheme `{other}`",
                                lineno + 1
                            )))
                        }
                    }
                }
                "constellation" => {
                    cfg.constellation = match value.to_ascii_lowercase().as_str() {
                        "psk" => ConstellationKind::Psk,
                        "qam" => ConstellationKind::Qam,
                        other => {
                            return Err(Error::Parse(format!(
                                "line {}: unknown constellation `{other}`",
                                lineno + 1
                            )))
                        }
                    }
                }
                other => {
                    return Err(Error::Parse(format!("line {}: unknown key `{other}`", lineno + 1)))
                }
            }
        }
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes into the same format accepted by [`SystemConfig::parse`].
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "m = {}", self.m);
        let _ = writeln!(s, "nt = {}", self.nt);
        let _ = writeln!(s, "nr = {}", self.nr);
        let _ = writeln!(s, "tc = {}", self.tc);
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "v = {}", self.v);
        let _ = writeln!(s, "u = {}", self.u);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "delta_f_hz = {}", self.delta_f_hz);
        let _ = writeln!(s, "f_c_hz = {}", self.f_c_hz);
        let scheme = match self.scheme {
            AllocationScheme::DelayScheme1 => "delay",
            AllocationScheme::DopplerScheme2 => "doppler",
        };
        let _ = writeln!(s, "scheme = {scheme}");
        if let Some(l) = self.l_max {
            let _ = writeln!(s, "l_max = {l}");
        }
        if let Some(k) = self.k_max {
            let _ = writeln!(s, "k_max = {k}");
        }
        let kind = match self.constellation {
            ConstellationKind::Psk => "psk",
            ConstellationKind::Qam => "qam",
        };
        let _ = writeln!(s, "constellation = {kind}");
        s
    }
}

/// A checked configuration with all derived dimensions populated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedConfig {
    pub raw: SystemConfig,
    /// `N·M`, the number of DD-domain resource blocks.
    pub md: usize,
    /// RBs (STSK blocks) per user.
    pub g: usize,
    /// Delay columns per user.
    pub j: usize,
    /// `log2 Q`
    pub l1: usize,
    /// `log2 V`
    pub l2: usize,
    pub lb: usize,
    /// Total bits per frame over all users.
    pub l: usize,
    pub l_max: usize,
    pub k_max: usize,
    /// Rate in bits/s/Hz.
    pub rate: f64,
}

impl ValidatedConfig {
    pub fn n(&self) -> usize {
        self.raw.n
    }
    pub fn m(&self) -> usize {
        self.raw.m
    }
    pub fn nt(&self) -> usize {
        self.raw.nt
    }
    pub fn nr(&self) -> usize {
        self.raw.nr
    }
    pub fn tc(&self) -> usize {
        self.raw.tc
    }
    pub fn q(&self) -> usize {
        self.raw.q
    }
    pub fn v(&self) -> usize {
        self.raw.v
    }
    pub fn u(&self) -> usize {
        self.raw.u
    }
    pub fn p(&self) -> usize {
        self.raw.p
    }
    pub fn scheme(&self) -> AllocationScheme {
        self.raw.scheme
    }

    /// Number of STSK blocks over all users (equals `M_d`).
    pub fn blocks(&self) -> usize {
        self.g * self.raw.u
    }

    /// Length of the sparse equivalent vector `K`.
    pub fn k_len(&self) -> usize {
        self.raw.q * self.md
    }

    /// Rows of the stacked equivalent channel `C`.
    pub fn rows(&self) -> usize {
        self.md * self.raw.nr * self.raw.tc
    }

    /// `Q^{M_d}`, the size of the DAP space, or `None` on overflow.
    pub fn dap_count(&self) -> Option<usize> {
        checked_pow(self.raw.q, self.md)
    }

    pub fn constellation(&self) -> Constellation {
        // Validation already built this once, so it cannot fail here.
        build_constellation(self.raw.v, self.raw.constellation)
            .expect("validated configuration has a supported constellation")
    }

    /// Returns a copy re-validated with the given mutation applied.
    pub fn with(&self, f: impl FnOnce(&mut SystemConfig)) -> Result<ValidatedConfig> {
        let mut raw = self.raw.clone();
        f(&mut raw);
        validate_config(raw)
    }

    /// Short stable digest of the canonical parameter set.
    pub fn hash(&self) -> String {
        let mut canon = self.raw.clone();
        canon.l_max = Some(self.l_max);
        canon.k_max = Some(self.k_max);
        let digest = Sha256::digest(canon.to_config_text().as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    u32::try_from(exp).ok().and_then(|e| base.checked_pow(e))
}

fn log2_exact(name: &'static str, value: usize) -> Result<usize> {
    if value == 0 || !value.is_power_of_two() {
        return Err(Error::NonPowerOfTwo { name, value });
    }
    Ok(value.trailing_zeros() as usize)
}

/// Checks every parameter invariant and derives the frame dimensions.
pub fn validate_config(raw: SystemConfig) -> Result<ValidatedConfig> {
    for (name, value) in [
        ("n", raw.n),
        ("m", raw.m),
        ("nt", raw.nt),
        ("nr", raw.nr),
        ("tc", raw.tc),
        ("q", raw.q),
        ("v", raw.v),
        ("u", raw.u),
        ("p", raw.p),
    ] {
        if value == 0 {
            return Err(Error::InvalidParameter(format!("{name} must be positive")));
        }
    }
    if !(raw.delta_f_hz > 0.0 && raw.f_c_hz > 0.0) {
        return Err(Error::InvalidParameter(
            "subcarrier spacing and carrier frequency must be positive".into(),
        ));
    }
    let l1 = log2_exact("q", raw.q)?;
    let l2 = log2_exact("v", raw.v)?;
    if raw.v < 2 {
        return Err(Error::NonPowerOfTwo { name: "v", value: raw.v });
    }
    if !raw.m.is_multiple_of(raw.u) {
        return Err(Error::IndivisibleUsers { dim: "m", value: raw.m, users: raw.u });
    }
    if raw.scheme == AllocationScheme::DopplerScheme2 && !raw.n.is_multiple_of(raw.u) {
        return Err(Error::IndivisibleUsers { dim: "n", value: raw.n, users: raw.u });
    }
    build_constellation(raw.v, raw.constellation)?;

    // Delay spread defaults to N-1 and Doppler spread to M-1, clamped onto the grid.
    let l_max = raw.l_max.unwrap_or((raw.n - 1).min(raw.m - 1));
    let k_max = raw.k_max.unwrap_or((raw.m - 1).min(raw.n - 1));
    if l_max > raw.m - 1 {
        return Err(Error::DelayDopplerOutOfRange(format!(
            "l_max = {l_max} exceeds M - 1 = {}",
            raw.m - 1
        )));
    }
    if k_max > raw.n - 1 {
        return Err(Error::DelayDopplerOutOfRange(format!(
            "k_max = {k_max} exceeds N - 1 = {}",
            raw.n - 1
        )));
    }

    let md = raw.n * raw.m;
    let g = md / raw.u;
    let j = raw.m / raw.u;
    let lb = l1 + l2;
    let l = md * lb;
    debug_assert_eq!(l, g * raw.u * lb);
    let rate = lb as f64 / raw.tc as f64;
    Ok(ValidatedConfig { raw, md, g, j, l1, l2, lb, l, l_max, k_max, rate })
}

/// A unit-average-energy APM alphabet with a Gray bit labeling.
///
/// `points` are stored in geometric order; `labels[i]` is the bit label of
/// `points[i]` (most significant bit first when serialized).
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub points: Vec<Complex64>,
    labels: Vec<usize>,
    index_of_label: Vec<usize>,
}

fn gray(x: usize) -> usize {
    x ^ (x >> 1)
}

impl Constellation {
    pub fn order(&self) -> usize {
        self.points.len()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.points.len().trailing_zeros() as usize
    }

    /// Bit label of the point with geometric index `idx`.
    pub fn label(&self, idx: usize) -> usize {
        self.labels[idx]
    }

    /// Geometric index of the point carrying `label`.
    pub fn index_of_label(&self, label: usize) -> usize {
        self.index_of_label[label]
    }

    /// Index of the closest point (lowest index on ties).
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn min_distance(&self) -> f64 {
        let mut d = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                d = d.min((a - b).norm());
            }
        }
        d
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }
}

/// Builds a normalized Gray-labeled PSK or square-QAM constellation.
pub fn build_constellation(v: usize, kind: ConstellationKind) -> Result<Constellation> {
    if v < 2 || !v.is_power_of_two() {
        return Err(Error::UnsupportedOrder(format!("order {v} must be a power of two >= 2")));
    }
    let (points, labels): (Vec<Complex64>, Vec<usize>) = match kind {
        ConstellationKind::Psk if v == 2 => {
            (vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)], vec![0, 1])
        }
        ConstellationKind::Psk => (0..v)
            .map(|l| {
                let phase = std::f64::consts::PI * (2 * l + 1) as f64 / v as f64;
                (Complex64::from_polar(1.0, phase), gray(l))
            })
            .unzip(),
        ConstellationKind::Qam => {
            let bits = v.trailing_zeros() as usize;
            if !bits.is_multiple_of(2) {
                return Err(Error::UnsupportedOrder(format!("{v}-QAM is not a square lattice")));
            }
            let side = 1usize << (bits / 2);
            let scale = (2.0 * (v as f64 - 1.0) / 3.0).sqrt();
            let level = |a: usize| (2 * a) as f64 - (side - 1) as f64;
            let mut pts = Vec::with_capacity(v);
            let mut lbl = Vec::with_capacity(v);
            for ai in 0..side {
                for aq in 0..side {
                    pts.push(Complex64::new(level(ai), level(aq)) / scale);
                    lbl.push((gray(ai) << (bits / 2)) | gray(aq));
                }
            }
            (pts, lbl)
        }
    };
    let mut index_of_label = vec![0; v];
    for (i, &lab) in labels.iter().enumerate() {
        index_of_label[lab] = i;
    }
    Ok(Constellation { kind, points, labels, index_of_label })
}
