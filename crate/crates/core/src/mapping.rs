//! Bits to sparse STSK codewords and back.
//!
//! The frame carries `M_d = G·U` STSK blocks. Block `b = u·G + g` takes the
//! bit slice `[b·L_b, (b+1)·L_b)`: the first `L_1` bits select the active
//! dispersion matrix (natural binary, MSB first) and the remaining `L_2`
//! bits are the Gray label of the APM symbol. In the sparse equivalent
//! vector `K` block `b` occupies entries `b·Q .. b·Q + Q`, with the single
//! nonzero entry at `b·Q + q`.
//!
//! All indices in this module are zero-based.

use num_complex::Complex64;

use crate::config::{AllocationScheme, Constellation, ValidatedConfig};
use crate::dispersion::DispersionMatrixSet;
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};

/// Largest codebook enumerated exhaustively.
pub const MAX_CODEBOOK_BITS: usize = 24;

/// The bits of one STSK block, split into DM-index and APM parts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitGroup {
    pub dm: Vec<u8>,
    pub apm: Vec<u8>,
}

/// Active dispersion matrix `q` and APM point `l` (geometric index) of one block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StskBlockIndex {
    pub q: usize,
    pub l: usize,
}

/// The stacked sparse vector `K` together with its (DAP, APM) factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymbolVector {
    pub dense: CVector,
    /// Active entry of each block, `b·Q + q`.
    pub dap: Vec<usize>,
    pub apm: Vec<Complex64>,
}

impl SparseSymbolVector {
    pub fn scatter(len: usize, dap: &[usize], apm: &[Complex64]) -> CVector {
        let mut dense = CVector::zeros(len);
        for (&i, &a) in dap.iter().zip(apm) {
            dense[i] = a;
        }
        dense
    }

    pub fn blocks(&self, q: usize) -> impl Iterator<Item = usize> + '_ {
        self.dap.iter().map(move |&i| i % q)
    }
}

fn bits_to_usize(bits: &[u8]) -> usize {
    bits.iter().fold(0, |acc, &b| (acc << 1) | usize::from(b & 1))
}

fn usize_to_bits(value: usize, width: usize, out: &mut Vec<u8>) {
    for k in (0..width).rev() {
        out.push(((value >> k) & 1) as u8);
    }
}

/// Splits a frame of `L` bits into `G·U` groups of `(L_1, L_2)` bits.
pub fn split_bits(bits: &[u8], cfg: &ValidatedConfig) -> Result<Vec<BitGroup>> {
    if bits.len() != cfg.l {
        return Err(Error::LengthMismatch { expected: cfg.l, got: bits.len() });
    }
    Ok(bits
        .chunks(cfg.lb)
        .map(|chunk| BitGroup { dm: chunk[..cfg.l1].to_vec(), apm: chunk[cfg.l1..].to_vec() })
        .collect())
}

/// Block index of one bit group.
pub fn block_index(group: &BitGroup, constellation: &Constellation) -> StskBlockIndex {
    StskBlockIndex {
        q: bits_to_usize(&group.dm),
        l: constellation.index_of_label(bits_to_usize(&group.apm)),
    }
}

/// Maps one bit group to its index pair and ST codeword `S = f_l · A_q`.
pub fn encode_stsk_block(
    group: &BitGroup,
    dm_set: &DispersionMatrixSet,
    constellation: &Constellation,
) -> (StskBlockIndex, CMatrix) {
    let idx = block_index(group, constellation);
    let s = dm_set.matrices[idx.q].map(|a| a * constellation.points[idx.l]);
    (idx, s)
}

/// Places every block's APM symbol at its active DM position.
pub fn build_sparse_vector(
    blocks: &[StskBlockIndex],
    q: usize,
    constellation: &Constellation,
) -> SparseSymbolVector {
    let dap: Vec<usize> = blocks.iter().enumerate().map(|(b, ix)| b * q + ix.q).collect();
    let apm: Vec<Complex64> = blocks.iter().map(|ix| constellation.points[ix.l]).collect();
    let dense = SparseSymbolVector::scatter(q * blocks.len(), &dap, &apm);
    SparseSymbolVector { dense, dap, apm }
}

/// Bits straight to the sparse vector.
pub fn encode_bits(
    bits: &[u8],
    cfg: &ValidatedConfig,
    constellation: &Constellation,
) -> Result<SparseSymbolVector> {
    let blocks: Vec<StskBlockIndex> = split_bits(bits, cfg)?
        .iter()
        .map(|g| block_index(g, constellation))
        .collect();
    Ok(build_sparse_vector(&blocks, cfg.q(), constellation))
}

/// Inverse of [`encode_bits`]. APM values are first quantized to the
/// nearest constellation point.
pub fn demap_bits(
    dap: &[usize],
    apm: &[Complex64],
    cfg: &ValidatedConfig,
    constellation: &Constellation,
) -> Result<Vec<u8>> {
    let q = cfg.q();
    if dap.len() != cfg.md || apm.len() != cfg.md {
        return Err(Error::InvalidDapIndex {
            index: dap.len(),
            reason: format!("expected {} active indices and symbols", cfg.md),
        });
    }
    let mut bits = Vec::with_capacity(cfg.l);
    for (b, (&idx, &sym)) in dap.iter().zip(apm).enumerate() {
        if idx >= q * cfg.md {
            return Err(Error::InvalidDapIndex {
                index: idx,
                reason: format!("exceeds Q·M_d - 1 = {}", q * cfg.md - 1),
            });
        }
        if idx / q != b {
            return Err(Error::InvalidDapIndex {
                index: idx,
                reason: format!("does not lie in block {b}"),
            });
        }
        usize_to_bits(idx % q, cfg.l1, &mut bits);
        let point = constellation.nearest(sym);
        usize_to_bits(constellation.label(point), cfg.l2, &mut bits);
    }
    Ok(bits)
}

/// Bits of codeword `index` in bit-lexicographic order (MSB first).
pub fn codeword_bits(index: usize, l: usize) -> Vec<u8> {
    let mut bits = Vec::with_capacity(l);
    usize_to_bits(index, l, &mut bits);
    bits
}

/// Block indices of codeword `index` without materializing its bits.
pub fn codeword_blocks(
    index: usize,
    cfg: &ValidatedConfig,
    constellation: &Constellation,
) -> Vec<StskBlockIndex> {
    let block_mask = (1usize << cfg.lb) - 1;
    let apm_mask = (1usize << cfg.l2) - 1;
    (0..cfg.md)
        .map(|b| {
            let v = (index >> ((cfg.md - 1 - b) * cfg.lb)) & block_mask;
            StskBlockIndex { q: v >> cfg.l2, l: constellation.index_of_label(v & apm_mask) }
        })
        .collect()
}

/// Lazy enumeration of all `2^L` codewords in bit-lexicographic order.
pub struct Codebook<'a> {
    cfg: &'a ValidatedConfig,
    constellation: &'a Constellation,
    next: usize,
    len: usize,
}

impl Iterator for Codebook<'_> {
    type Item = (Vec<u8>, SparseSymbolVector);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.len {
            return None;
        }
        let i = self.next;
        self.next += 1;
        let blocks = codeword_blocks(i, self.cfg, self.constellation);
        Some((
            codeword_bits(i, self.cfg.l),
            build_sparse_vector(&blocks, self.cfg.q(), self.constellation),
        ))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rest = self.len - self.next;
        (rest, Some(rest))
    }
}

impl ExactSizeIterator for Codebook<'_> {}

pub fn check_codebook_size(cfg: &ValidatedConfig, limit: usize) -> Result<usize> {
    if cfg.l > limit {
        return Err(Error::CodebookTooLarge { bits: cfg.l, limit });
    }
    Ok(1usize << cfg.l)
}

/// Enumerates the codebook. The DM set is not needed for `K` itself, since
/// the dispersion matrices enter only through the channel model.
pub fn enumerate_codebook<'a>(
    cfg: &'a ValidatedConfig,
    constellation: &'a Constellation,
) -> Result<Codebook<'a>> {
    let len = check_codebook_size(cfg, MAX_CODEBOOK_BITS)?;
    Ok(Codebook { cfg, constellation, next: 0, len })
}

/// Per-user zero-one RB allocation `𝒫^(u)`, stored as the RB of each block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceAllocation {
    pub scheme: AllocationScheme,
    /// `rb[u][g]` is the DD-grid index `m_d = k + N·l` carrying block `g` of user `u`.
    pub rb: Vec<Vec<usize>>,
    pub md: usize,
}

impl ResourceAllocation {
    /// Dense `M_d × G` matrix of user `u`.
    pub fn matrix(&self, u: usize) -> CMatrix {
        let g = self.rb[u].len();
        let mut p = CMatrix::zeros(self.md, g);
        for (col, &row) in self.rb[u].iter().enumerate() {
            p[(row, col)] = crate::linalg::ONE;
        }
        p
    }
}

/// Builds the allocation; each user's RBs are listed in increasing `m_d`.
pub fn build_resource_allocation(cfg: &ValidatedConfig) -> ResourceAllocation {
    let (n, m, users) = (cfg.n(), cfg.m(), cfg.u());
    let rb = (0..users)
        .map(|u| match cfg.scheme() {
            AllocationScheme::DelayScheme1 => {
                let j_cols = cfg.j;
                let mut v = Vec::with_capacity(cfg.g);
                for j in 0..j_cols {
                    let l = j_cols * u + j;
                    for k in 0..n {
                        // g = j·N + k
                        v.push(l * n + k);
                    }
                }
                v
            }
            AllocationScheme::DopplerScheme2 => {
                let rows = n / users;
                let mut v = Vec::with_capacity(cfg.g);
                for l in 0..m {
                    for j in 0..rows {
                        // g = l·(N/U) + j
                        v.push(rows * u + j + n * l);
                    }
                }
                v
            }
        })
        .collect();
    ResourceAllocation { scheme: cfg.scheme(), rb, md: cfg.md }
}

/// The space-time mapper `Υ`, a permutation from per-block ST order
/// (antenna, slot, RB, user) to transmission order (RB, antenna, user, slot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StMapper {
    /// `perm[d_x] = d_y`, i.e. `s̃(d_x) = s̃_d(d_y)`.
    pub perm: Vec<usize>,
}

impl StMapper {
    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn matrix(&self) -> CMatrix {
        let n = self.perm.len();
        let mut m = CMatrix::zeros(n, n);
        for (dx, &dy) in self.perm.iter().enumerate() {
            m[(dx, dy)] = crate::linalg::ONE;
        }
        m
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        CVector::from_iterator(self.perm.len(), self.perm.iter().map(|&dy| v[dy]))
    }
}

pub fn build_st_mapper(cfg: &ValidatedConfig) -> StMapper {
    let (g_n, nt, tc, users) = (cfg.g, cfg.nt(), cfg.tc(), cfg.u());
    let mut perm = vec![usize::MAX; g_n * nt * tc * users];
    for u in 0..users {
        for tcs in 0..tc {
            for ant in 0..nt {
                for g in 0..g_n {
                    let dx = g + ant * g_n + u * nt * g_n + tcs * g_n * users * nt;
                    let dy = ant + tcs * nt + g * nt * tc + u * g_n * nt * tc;
                    perm[dx] = dy;
                }
            }
        }
    }
    StMapper { perm }
}
