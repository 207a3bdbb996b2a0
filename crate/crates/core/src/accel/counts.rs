//! Closed-form access counts for one layer on a WS/EWS array.
//!
//! Base WS model: the weights of a layer are split into `H x L` tiles, one
//! pass per tile and kernel position, so there are
//! `ceil(Cin/H) * ceil(Cout/L) * Kh * Kw` passes. Every pass streams the
//! `OH * OW` output plane: each active row reads one activation from L1 per
//! position and each active column reads and writes one partial sum. Summed
//! over passes:
//!
//! ```text
//! ifmap L1 reads = Kh * Kw * ceil(Cout/L) * Cin  * OH * OW
//! psum  L1       = 2 * Kh * Kw * ceil(Cin/H) * Cout * OH * OW
//! ```
//!
//! EWS divides the first by `A * D` and the second by `B * D`. Counts are
//! exact rationals so those ratios hold exactly even when they do not divide.

use num_rational::Ratio;

use super::config::{AccelConfig, Compression, LayerSpec};
use crate::error::Result;
use crate::sparsity::{binomial, ceil_log2};

pub type Count = Ratio<u128>;

fn int(v: impl Into<u128>) -> Count {
    Count::from_integer(v.into())
}

fn ceil_div(a: usize, b: usize) -> u128 {
    a.div_ceil(b) as u128
}

pub fn to_f64(c: &Count) -> f64 {
    *c.numer() as f64 / *c.denom() as f64
}

/// Memory levels and the MAC unit, in reporting order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Level {
    Dram,
    L2,
    L1,
    Prf,
    Arf,
    Wrf,
    Crf,
    Mac,
}

impl Level {
    pub const ALL: [Level; 8] = [
        Level::Dram,
        Level::L2,
        Level::L1,
        Level::Prf,
        Level::Arf,
        Level::Wrf,
        Level::Crf,
        Level::Mac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Level::Dram => "DRAM",
            Level::L2 => "L2",
            Level::L1 => "L1",
            Level::Prf => "PRF",
            Level::Arf => "ARF",
            Level::Wrf => "WRF",
            Level::Crf => "CRF",
            Level::Mac => "MAC",
        }
    }
}

/// DRAM, L2 and L1 counts are in words of `word_bits`; register files count
/// single accesses.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AccessCounts {
    pub macs: Count,
    pub dram: Count,
    pub l2: Count,
    pub l1: Count,
    pub prf: Count,
    pub arf: Count,
    pub wrf: Count,
    pub crf: Count,
    pub ifmap_l1_reads: Count,
    pub psum_l1: Count,
    /// Assignment and mask bits, or raw weight bits for the base setting.
    pub weight_stream_bits: Count,
    /// One-time codebook load, zero for the base setting.
    pub codebook_bits: Count,
}

impl AccessCounts {
    pub fn get(&self, level: Level) -> &Count {
        match level {
            Level::Dram => &self.dram,
            Level::L2 => &self.l2,
            Level::L1 => &self.l1,
            Level::Prf => &self.prf,
            Level::Arf => &self.arf,
            Level::Wrf => &self.wrf,
            Level::Crf => &self.crf,
            Level::Mac => &self.macs,
        }
    }
}

impl std::ops::AddAssign<&AccessCounts> for AccessCounts {
    fn add_assign(&mut self, o: &AccessCounts) {
        self.macs += o.macs;
        self.dram += o.dram;
        self.l2 += o.l2;
        self.l1 += o.l1;
        self.prf += o.prf;
        self.arf += o.arf;
        self.wrf += o.wrf;
        self.crf += o.crf;
        self.ifmap_l1_reads += o.ifmap_l1_reads;
        self.psum_l1 += o.psum_l1;
        self.weight_stream_bits += o.weight_stream_bits;
        self.codebook_bits += o.codebook_bits;
    }
}

impl<'a> std::iter::Sum<&'a AccessCounts> for AccessCounts {
    fn sum<I: Iterator<Item = &'a AccessCounts>>(iter: I) -> Self {
        let mut acc = AccessCounts::default();
        for c in iter {
            acc += c;
        }
        acc
    }
}

/// Bits streamed from L2 for the layer's weights, excluding the codebook.
pub fn weight_stream_bits(layer: &LayerSpec, cfg: &AccelConfig) -> Count {
    let weights = layer.weights();
    let subvectors = Count::new(weights, cfg.d as u128);
    let index_bits = int(ceil_log2(cfg.k as u64));
    match cfg.compression {
        Compression::Base => int(weights * u128::from(cfg.weight_bits)),
        Compression::C => subvectors * index_bits,
        Compression::Cm | Compression::Cms => {
            let (n, m) = (cfg.pattern.n() as u64, cfg.pattern.m() as u64);
            let id_bits = ceil_log2(binomial(m, n).expect("m <= 64 fits"));
            let chunks_per_subvector = Count::new(cfg.d as u128, m as u128);
            subvectors * (index_bits + int(id_bits) * chunks_per_subvector)
        }
    }
}

pub fn ews_access_counts(layer: &LayerSpec, cfg: &AccelConfig) -> Result<AccessCounts> {
    cfg.validate()?;
    let (a, b, dk) = cfg.extensions();
    let plane = (layer.oh * layer.ow) as u128;
    let kernel = (layer.kh * layer.kw) as u128;

    let base_ifmap = kernel * ceil_div(layer.cout, cfg.cols) * layer.cin as u128 * plane;
    let base_psum = 2 * kernel * ceil_div(layer.cin, cfg.rows) * layer.cout as u128 * plane;
    let ifmap_l1_reads = Count::new(base_ifmap, (a * dk) as u128);
    let psum_l1 = Count::new(base_psum, (b * dk) as u128);

    let keep = if cfg.compression.uses_masks() {
        Count::new(cfg.pattern.n() as u128, cfg.pattern.m() as u128)
    } else {
        int(1u8)
    };
    let macs = int(layer.macs()) * keep;

    let stream = weight_stream_bits(layer, cfg);
    let codebook_bits = if cfg.compression.is_compressed() {
        int((cfg.k * cfg.d) as u128 * u128::from(cfg.weight_bits))
    } else {
        int(0u8)
    };
    let word = int(cfg.word_bits);
    let weight_words = (stream + codebook_bits) / word;

    // activations are one word each; a tensor spills to DRAM only when it
    // does not fit in L1
    let word_bytes = Count::new(u128::from(cfg.word_bits), 8);
    let spill = |elems: u128| {
        if int(elems) * word_bytes > int(cfg.l1_bytes) {
            int(elems)
        } else {
            int(0u8)
        }
    };
    let ifmap_size = layer.cin as u128 * plane;
    let ofmap_size = layer.cout as u128 * plane;

    let sparse_tile = if cfg.compression == Compression::Cms {
        keep
    } else {
        int(1u8)
    };
    let weight_writes = int(layer.weights()) * sparse_tile;
    let subvectors = Count::new(layer.weights(), cfg.d as u128);

    Ok(AccessCounts {
        macs,
        dram: weight_words + spill(ifmap_size) + spill(ofmap_size),
        l2: weight_words,
        l1: ifmap_l1_reads + psum_l1,
        prf: macs,
        arf: macs,
        wrf: macs + weight_writes,
        crf: if cfg.compression.is_compressed() {
            subvectors
        } else {
            int(0u8)
        },
        ifmap_l1_reads,
        psum_l1,
        weight_stream_bits: stream,
        codebook_bits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::config::Dataflow;

    fn ews(a: usize, b: usize, d: usize) -> AccelConfig {
        AccelConfig {
            ext_out: a,
            ext_in: b,
            ext_kernel: d,
            dataflow: Dataflow::Ews,
            ..Default::default()
        }
    }

    #[test]
    fn ews_example_ratios() {
        let layer = LayerSpec::new(128, 64, 3, 3, 28, 28).unwrap();
        let one = ews_access_counts(&layer, &ews(1, 1, 1)).unwrap();
        let ext = ews_access_counts(&layer, &ews(4, 2, 2)).unwrap();
        assert_eq!(ext.ifmap_l1_reads * int(8u8), one.ifmap_l1_reads);
        assert_eq!(ext.psum_l1 * int(4u8), one.psum_l1);
        for level in [Level::Dram, Level::L2, Level::Prf, Level::Arf, Level::Wrf, Level::Crf, Level::Mac] {
            assert_eq!(ext.get(level), one.get(level), "{}", level.name());
        }
    }

    #[test]
    fn single_tile_pointwise() {
        let layer = LayerSpec::new(32, 32, 1, 1, 7, 9).unwrap();
        let cfg = AccelConfig {
            dataflow: Dataflow::Ws,
            ..Default::default()
        };
        let c = ews_access_counts(&layer, &cfg).unwrap();
        assert_eq!(c.ifmap_l1_reads, int(7u32 * 9 * 32));
        // every weight loaded once
        assert_eq!(c.weight_stream_bits, int(32u16 * 32 * 8));
        assert_eq!(c.codebook_bits, int(0u8));
    }

    #[test]
    fn masked_stream_is_twenty_bits_per_subvector() {
        let layer = LayerSpec::new(64, 64, 3, 3, 14, 14).unwrap();
        let base = AccelConfig::default();
        let cm = AccelConfig {
            compression: Compression::Cm,
            ..base
        };
        let ratio = weight_stream_bits(&layer, &cm) / weight_stream_bits(&layer, &base);
        assert_eq!(ratio, Count::new(20, 128));
        let c = ews_access_counts(&layer, &cm).unwrap();
        assert_eq!(c.macs * int(4u8), int(layer.macs()));
        assert_eq!(c.codebook_bits, int(512u32 * 16 * 8));
    }

    #[test]
    fn spill_only_when_exceeding_l1() {
        let small = LayerSpec::new(16, 16, 3, 3, 8, 8).unwrap();
        let cfg = AccelConfig::default();
        let c = ews_access_counts(&small, &cfg).unwrap();
        assert_eq!(c.dram, c.l2);
        let big = LayerSpec::new(64, 64, 3, 3, 112, 112).unwrap();
        let c = ews_access_counts(&big, &cfg).unwrap();
        assert_eq!(c.dram, c.l2 + int(2u128 * 64 * 112 * 112));
    }
}
