//! Sparse `H x d` tile: resource comparison and the cascaded LZC mask encoder.

use crate::error::{Error, Result};
use crate::sparsity::{ceil_log2, NmPattern};

/// Register-file depth per PE.
pub const RF_DEPTH: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceColumn {
    pub multipliers: u64,
    pub adders: u64,
    pub rf_bits: u64,
    pub lzc: u64,
    pub demux: u64,
    pub mux: u64,
    pub parallelism: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileResources {
    /// Active PEs per `d`-wide group, `N/M * d`.
    pub active_per_group: u64,
    pub dense: ResourceColumn,
    pub sparse: ResourceColumn,
}

impl TileResources {
    pub fn multiplier_reduction(&self) -> f64 {
        1.0 - self.sparse.multipliers as f64 / self.dense.multipliers as f64
    }
}

pub fn sparse_tile_resources(
    rows: u64,
    d: u64,
    pattern: NmPattern,
    weight_bits: u64,
    psum_bits: u64,
) -> Result<TileResources> {
    let (n, m) = (pattern.n() as u64, pattern.m() as u64);
    if d == 0 || !(n * d).is_multiple_of(m) {
        return Err(Error::QNotIntegral {
            n: pattern.n(),
            m: pattern.m(),
            d: d as usize,
        });
    }
    let q = n * d / m;
    let dense = ResourceColumn {
        multipliers: rows * d,
        adders: rows * d,
        rf_bits: rows * d * RF_DEPTH * weight_bits,
        lzc: 0,
        demux: 0,
        mux: 0,
        parallelism: 2 * rows * d,
    };
    let sparse = ResourceColumn {
        multipliers: rows * q,
        adders: rows * d,
        rf_bits: rows * q * RF_DEPTH * weight_bits
            + rows * q * RF_DEPTH * u64::from(ceil_log2(d)),
        lzc: rows * q,
        demux: rows * q * psum_bits,
        mux: rows * q * weight_bits,
        parallelism: 2 * rows * d,
    };
    Ok(TileResources {
        active_per_group: q,
        dense,
        sparse,
    })
}

/// Positions of the set bits of `mask`, ascending, as produced by a chain of
/// `q` leading-zero counters: each stage finds the first set bit and clears
/// it for the next.
pub fn lzc_encode_mask(mask: &[bool], q: usize) -> Result<Vec<usize>> {
    let width = mask.len();
    assert!(width <= 64, "mask wider than 64 bits");
    let found = mask.iter().filter(|b| **b).count();
    if found != q {
        return Err(Error::WrongPopcount { found, expected: q });
    }
    // element 0 is the most significant bit of the top `width` bits
    let mut word = mask
        .iter()
        .enumerate()
        .filter(|(_, b)| **b)
        .fold(0u64, |w, (i, _)| w | (1u64 << (63 - i)));
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        let pos = word.leading_zeros() as usize;
        out.push(pos);
        word ^= 1u64 << (63 - pos);
    }
    Ok(out)
}
