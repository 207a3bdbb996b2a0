//! Throughput bounded by the array peak and by weight loading.
//!
//! Weights arrive over a DMA of `dma_bits` per cycle. Each loaded weight is
//! reused across the full output plane, so loading sustains
//! `dma_bits / bits_per_weight * OH * OW` dense-equivalent MACs per cycle.
//! Compressed settings load fewer bits per weight and raise that ceiling.

use super::config::{AccelConfig, LayerSpec};
use super::counts::{to_f64, weight_stream_bits};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Compute,
    WeightLoad,
}

impl Bound {
    pub fn name(self) -> &'static str {
        match self {
            Bound::Compute => "compute",
            Bound::WeightLoad => "weight-load",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roofline {
    /// Array peak, MACs per cycle.
    pub peak: f64,
    /// Ceiling imposed by weight loading, MACs per cycle.
    pub load_limited: f64,
    pub attainable: f64,
    pub bits_per_weight: f64,
    pub bound: Bound,
}

impl Roofline {
    pub fn fraction_of_peak(&self) -> f64 {
        self.attainable / self.peak
    }
}

pub fn roofline(layer: &LayerSpec, cfg: &AccelConfig) -> Result<Roofline> {
    cfg.validate()?;
    let peak = (cfg.rows * cfg.cols) as f64;
    let bits_per_weight = to_f64(&weight_stream_bits(layer, cfg)) / layer.weights() as f64;
    let reuse = (layer.oh * layer.ow) as f64;
    let load_limited = f64::from(cfg.dma_bits) / bits_per_weight * reuse;
    let (attainable, bound) = if load_limited < peak {
        (load_limited, Bound::WeightLoad)
    } else {
        (peak, Bound::Compute)
    };
    Ok(Roofline {
        peak,
        load_limited,
        attainable,
        bits_per_weight,
        bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::config::Compression;

    fn array(n: usize, compression: Compression) -> AccelConfig {
        AccelConfig {
            rows: n,
            cols: n,
            compression,
            ..Default::default()
        }
    }

    #[test]
    fn large_array_is_load_bound_until_compressed() {
        let layer = LayerSpec::new(256, 256, 3, 3, 14, 14).unwrap();
        let base = roofline(&layer, &array(64, Compression::Base)).unwrap();
        assert_eq!(base.bound, Bound::WeightLoad);
        assert_eq!(base.bits_per_weight, 8.0);
        let cm = roofline(&layer, &array(64, Compression::Cm)).unwrap();
        assert_eq!(cm.bits_per_weight, 1.25);
        assert!((cm.load_limited / base.load_limited - 6.4).abs() < 1e-12);
        assert_eq!(cm.bound, Bound::Compute);
    }

    #[test]
    fn small_array_compute_bound() {
        let layer = LayerSpec::new(512, 512, 3, 3, 7, 7).unwrap();
        for c in [Compression::Base, Compression::Cm] {
            let r = roofline(&layer, &array(16, c)).unwrap();
            assert_eq!(r.bound, Bound::Compute);
            assert_eq!(r.fraction_of_peak(), 1.0);
        }
    }
}
