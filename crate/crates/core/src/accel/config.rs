use crate::error::{Error, Result};
use crate::sparsity::NmPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataflow {
    /// Plain weight stationary; extensions are ignored.
    Ws,
    /// Enhanced weight stationary with output/input/kernel extensions.
    Ews,
}

/// How weights reach the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compression {
    /// Raw weights.
    Base,
    /// Common vector quantization: assignments only, dense reconstruction.
    C,
    /// Masked vector quantization: assignments plus mask ids, dense tile.
    Cm,
    /// Masked vector quantization on sparse tiles.
    Cms,
}

impl Compression {
    pub fn is_compressed(self) -> bool {
        self != Compression::Base
    }

    pub fn uses_masks(self) -> bool {
        matches!(self, Compression::Cm | Compression::Cms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelConfig {
    /// Array height, mapped to input channels.
    pub rows: usize,
    /// Array width, mapped to output channels.
    pub cols: usize,
    /// Output-channel switch depth.
    pub ext_out: usize,
    /// Input-channel depth.
    pub ext_in: usize,
    /// Kernel-plane depth.
    pub ext_kernel: usize,
    pub d: usize,
    pub pattern: NmPattern,
    pub k: usize,
    pub weight_bits: u32,
    pub dma_bits: u32,
    pub dataflow: Dataflow,
    pub compression: Compression,
    pub l1_bytes: u64,
    pub psum_bits: u32,
    /// Width of one memory access at DRAM/L2/L1.
    pub word_bits: u32,
    pub weight_zero_fraction: f64,
    pub act_zero_fraction: f64,
}

impl Default for AccelConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            ext_out: 4,
            ext_in: 2,
            ext_kernel: 2,
            d: 16,
            pattern: NmPattern::new(4, 16).expect("valid pattern"),
            k: 512,
            weight_bits: 8,
            dma_bits: 64,
            dataflow: Dataflow::Ews,
            compression: Compression::Base,
            l1_bytes: 256 * 1024,
            psum_bits: 24,
            word_bits: 8,
            weight_zero_fraction: 0.0,
            act_zero_fraction: 0.0,
        }
    }
}

impl AccelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.rows == 0 || self.cols == 0 {
            return bad(format!("array {}x{} must be non-empty", self.rows, self.cols));
        }
        if self.ext_out == 0 || self.ext_in == 0 || self.ext_kernel == 0 {
            return bad("extensions must be at least 1".into());
        }
        if self.d == 0 || !self.cols.is_multiple_of(self.d) {
            return bad(format!(
                "array width {} must be a multiple of d={}",
                self.cols, self.d
            ));
        }
        if self.compression.uses_masks() {
            self.pattern
                .check_divides(self.d)
                .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        }
        if self.compression.is_compressed() && self.k == 0 {
            return bad("codebook size must be positive".into());
        }
        if self.weight_bits == 0 || self.dma_bits == 0 || self.word_bits == 0 || self.psum_bits == 0
        {
            return bad("bit widths must be positive".into());
        }
        for f in [self.weight_zero_fraction, self.act_zero_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("zero fraction {f} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// `(A, B, D)` as seen by the dataflow: all ones for plain WS.
    pub fn extensions(&self) -> (usize, usize, usize) {
        match self.dataflow {
            Dataflow::Ws => (1, 1, 1),
            Dataflow::Ews => (self.ext_out, self.ext_in, self.ext_kernel),
        }
    }
}

/// The six hardware settings compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    Ws,
    WsCms,
    Ews,
    EwsC,
    EwsCm,
    EwsCms,
}

impl Setting {
    pub const ALL: [Setting; 6] = [
        Setting::Ws,
        Setting::WsCms,
        Setting::Ews,
        Setting::EwsC,
        Setting::EwsCm,
        Setting::EwsCms,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::Ws => "ws",
            Setting::WsCms => "ws-cms",
            Setting::Ews => "ews",
            Setting::EwsC => "ews-c",
            Setting::EwsCm => "ews-cm",
            Setting::EwsCms => "ews-cms",
        }
    }

    /// Applies dataflow, compression and the matching `(k, d)` to `base`.
    /// Common VQ uses `k = 1024, d = 8`; masked VQ `k = 512, d = 16`, so
    /// both land on the same compression ratio.
    pub fn apply(self, base: &AccelConfig) -> AccelConfig {
        let (dataflow, compression) = match self {
            Setting::Ws => (Dataflow::Ws, Compression::Base),
            Setting::WsCms => (Dataflow::Ws, Compression::Cms),
            Setting::Ews => (Dataflow::Ews, Compression::Base),
            Setting::EwsC => (Dataflow::Ews, Compression::C),
            Setting::EwsCm => (Dataflow::Ews, Compression::Cm),
            Setting::EwsCms => (Dataflow::Ews, Compression::Cms),
        };
        let (k, d) = match compression {
            Compression::Base => (base.k, base.d),
            Compression::C => (1024, 8),
            Compression::Cm | Compression::Cms => (512, 16),
        };
        AccelConfig {
            dataflow,
            compression,
            k,
            d,
            ..*base
        }
    }
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Setting::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown setting '{s}'")))
    }
}

/// One convolution layer as the array sees it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub cout: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub oh: usize,
    pub ow: usize,
}

impl LayerSpec {
    pub fn new(cout: usize, cin: usize, kh: usize, kw: usize, oh: usize, ow: usize) -> Result<Self> {
        if [cout, cin, kh, kw, oh, ow].contains(&0) {
            return Err(Error::ConfigInvalid(format!(
                "layer dims must be positive: {cout} {cin} {kh} {kw} {oh} {ow}"
            )));
        }
        Ok(Self {
            cout,
            cin,
            kh,
            kw,
            oh,
            ow,
        })
    }

    pub fn weights(&self) -> u128 {
        (self.cout * self.cin * self.kh * self.kw) as u128
    }

    pub fn macs(&self) -> u128 {
        self.weights() * (self.oh * self.ow) as u128
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(AccelConfig::default().validate().is_ok());
        let bad = AccelConfig {
            cols: 24,
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(Error::ConfigInvalid(_))));
        let bad = AccelConfig {
            ext_in: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(LayerSpec::new(1, 1, 1, 0, 1, 1).is_err());
    }

    #[test]
    fn settings_round_trip_and_pair_parameters() {
        for s in Setting::ALL {
            assert_eq!(s.name().parse::<Setting>().unwrap(), s);
        }
        let base = AccelConfig::default();
        let c = Setting::EwsC.apply(&base);
        assert_eq!((c.k, c.d), (1024, 8));
        let cm = Setting::EwsCm.apply(&base);
        assert_eq!((cm.k, cm.d), (512, 16));
        assert_eq!(Setting::WsCms.apply(&base).extensions(), (1, 1, 1));
        assert_eq!(Setting::Ews.apply(&base).extensions(), (4, 2, 2));
    }
}
