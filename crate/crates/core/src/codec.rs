//! Compressed-layer container and storage accounting.
//!
//! # MVQ1 layout
//!
//! All integers little-endian.
//!
//! ```text
//! header   "MVQ1" | version: u8 (=1) | layer_count: u32            (9 bytes)
//! layer    shape: 4 x u32 (Cout, Cin, Kh, Kw)
//!          d: u16 | k: u16 | N: u16 | M: u16
//!          qc: u8 | scale: f32
//!          codebook   bit_len: u64 | k*d values, qc-bit two's complement
//!          assignment bit_len: u64 | NG values, ceil(log2 k) bits each
//!          mask ids   bit_len: u64 | NG*d/M values, ceil(log2 C(M,N)) bits each
//! ```
//!
//! Each stream is packed LSB-first (bit `i` of the stream is bit `i % 8` of
//! byte `i / 8`, values written low bit first) and zero-padded to a whole
//! byte. Decoding is strict: bit lengths must match what the shape implies,
//! padding must be zero and no bytes may trail the last layer, so every
//! accepted byte string re-serializes to itself.

use crate::clustering::Assignments;
use crate::error::{Error, Result};
use crate::finetune::reconstruct_for_forward;
use crate::quantization::{dequantize_codebook, QuantizedCodebook};
use crate::sparsity::{ceil_log2, lut_ids_to_mask, BitmaskMatrix, MaskLut, NmPattern};
use crate::tensor::{ungroup_weights, Shape4, WeightTensor};

pub const MAGIC: [u8; 4] = *b"MVQ1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 9;

/// Upper bound on weights per layer accepted by the decoder.
pub const MAX_LAYER_ELEMENTS: u64 = 1 << 28;

/// Bit width of uncompressed reference weights.
pub const DEFAULT_FULL_PRECISION_BITS: u32 = 32;

#[derive(Default)]
struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    fn push(&mut self, value: u64, width: u32) {
        for b in 0..width {
            if self.len.is_multiple_of(8) {
                self.bytes.push(0);
            }
            if value >> b & 1 == 1 {
                *self.bytes.last_mut().expect("byte pushed") |= 1 << (self.len % 8);
            }
            self.len += 1;
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
}

impl<'a> BitReader<'a> {
    fn read(&mut self, width: u32) -> u64 {
        let mut v = 0u64;
        for b in 0..width {
            let bit = self.bytes[(self.pos / 8) as usize] >> (self.pos % 8) & 1;
            v |= u64::from(bit) << b;
            self.pos += 1;
        }
        v
    }
}

/// Packs `values` at `width` bits each. Returns `(bit_len, bytes)`.
pub fn pack_bits(values: impl IntoIterator<Item = u64>, width: u32) -> (u64, Vec<u8>) {
    let mut w = BitWriter::default();
    for v in values {
        w.push(v, width);
    }
    (w.len, w.bytes)
}

/// Unpacks `count` values of `width` bits from `bytes`. The caller guarantees
/// `bytes` holds at least `count * width` bits.
pub fn unpack_bits(bytes: &[u8], count: usize, width: u32) -> Vec<u64> {
    let mut r = BitReader { bytes, pos: 0 };
    (0..count).map(|_| r.read(width)).collect()
}

/// Storage breakdown for one weight block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    /// Assignment bits, `ceil(log2 k) * NG`.
    pub b_a: u64,
    /// Mask bits, `ceil(log2 C(M,N)) * NG*d/M`.
    pub b_m: u64,
    /// Codebook bits, `k * d * qc`.
    pub b_c: u64,
    /// Uncompressed bits, `NG * d * b_f`.
    pub raw_bits: u64,
    /// `raw_bits / (b_a + b_m + b_c)`.
    pub ratio: f64,
    /// Multiply-accumulates per output position, dense.
    pub dense_flops: u64,
    /// Multiply-accumulates per output position after N:M pruning.
    pub sparse_flops: u64,
}

impl CompressionReport {
    pub fn payload_bits(&self) -> u64 {
        self.b_a + self.b_m + self.b_c
    }

    /// Sums several reports; the ratio is recomputed from the totals.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a CompressionReport>) -> Self {
        let mut acc = CompressionReport {
            b_a: 0,
            b_m: 0,
            b_c: 0,
            raw_bits: 0,
            ratio: 0.0,
            dense_flops: 0,
            sparse_flops: 0,
        };
        for r in reports {
            acc.b_a += r.b_a;
            acc.b_m += r.b_m;
            acc.b_c += r.b_c;
            acc.raw_bits += r.raw_bits;
            acc.dense_flops += r.dense_flops;
            acc.sparse_flops += r.sparse_flops;
        }
        let payload = acc.payload_bits();
        acc.ratio = if payload == 0 {
            f64::INFINITY
        } else {
            acc.raw_bits as f64 / payload as f64
        };
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionParams {
    /// Number of subvectors.
    pub ng: u64,
    pub d: usize,
    pub k: usize,
    pub pattern: NmPattern,
    /// Codebook bits.
    pub qc: u32,
    /// Full-precision reference bits.
    pub b_f: u32,
}

pub fn compression_ratio(p: &CompressionParams) -> Result<CompressionReport> {
    if p.ng == 0 || p.d == 0 || p.k == 0 || p.qc == 0 || p.b_f == 0 {
        return Err(Error::InvalidParameter(
            "compression parameters must be positive".into(),
        ));
    }
    p.pattern.check_divides(p.d)?;
    let weights = p.ng * p.d as u64;
    let b_a = u64::from(ceil_log2(p.k as u64)) * p.ng;
    let b_m = u64::from(MaskLut::new(p.pattern).id_bits()) * (weights / p.pattern.m() as u64);
    let b_c = (p.k * p.d) as u64 * u64::from(p.qc);
    let raw_bits = weights * u64::from(p.b_f);
    Ok(CompressionReport {
        b_a,
        b_m,
        b_c,
        raw_bits,
        ratio: raw_bits as f64 / (b_a + b_m + b_c) as f64,
        dense_flops: weights,
        sparse_flops: weights / p.pattern.m() as u64 * p.pattern.n() as u64,
    })
}

/// One compressed weight tensor: quantized codebook, one assignment per
/// subvector and one mask-LUT id per `M`-chunk.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    shape: Shape4,
    d: usize,
    pattern: NmPattern,
    codebook: QuantizedCodebook,
    assignments: Assignments,
    mask_ids: Vec<u64>,
}

impl CompressedLayer {
    pub fn new(
        shape: Shape4,
        pattern: NmPattern,
        codebook: QuantizedCodebook,
        assignments: Assignments,
        mask_ids: Vec<u64>,
    ) -> Result<Self> {
        let d = codebook.d();
        let layer = Self {
            shape,
            d,
            pattern,
            codebook,
            assignments,
            mask_ids,
        };
        layer.validate()?;
        Ok(layer)
    }

    fn validate(&self) -> Result<()> {
        let invalid = |m: String| Err(Error::InvalidLayer(m));
        let numel = self
            .shape
            .iter()
            .try_fold(1u64, |acc, &s| acc.checked_mul(s as u64))
            .filter(|&n| n > 0);
        let Some(numel) = numel else {
            return invalid(format!("bad shape {:?}", self.shape));
        };
        if !self.shape[0].is_multiple_of(self.d) {
            return Err(Error::CoutNotMultipleOfD {
                cout: self.shape[0],
                d: self.d,
            });
        }
        self.pattern.check_divides(self.d)?;
        if numel > MAX_LAYER_ELEMENTS {
            return invalid(format!("{numel} weights exceed the per-layer limit"));
        }
        let ng = numel as usize / self.d;
        if self.assignments.len() != ng {
            return invalid(format!(
                "{} assignments for {ng} subvectors",
                self.assignments.len()
            ));
        }
        self.assignments.check_bounds(self.codebook.k())?;
        let chunks = numel as usize / self.pattern.m();
        if self.mask_ids.len() != chunks {
            return invalid(format!(
                "{} mask ids for {chunks} chunks",
                self.mask_ids.len()
            ));
        }
        let count = MaskLut::new(self.pattern).len();
        if let Some(&id) = self.mask_ids.iter().find(|&&id| id >= count) {
            return Err(Error::IdOutOfRange { id, count });
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.codebook.k()
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    pub fn codebook(&self) -> &QuantizedCodebook {
        &self.codebook
    }

    pub fn assignments(&self) -> &Assignments {
        &self.assignments
    }

    pub fn mask_ids(&self) -> &[u64] {
        &self.mask_ids
    }

    pub fn subvectors(&self) -> usize {
        self.assignments.len()
    }

    pub fn assignment_bits(&self) -> u32 {
        ceil_log2(self.k() as u64)
    }

    pub fn mask_id_bits(&self) -> u32 {
        MaskLut::new(self.pattern).id_bits()
    }

    /// Expands the mask ids back into a `NG x d` bitmask.
    pub fn mask(&self) -> BitmaskMatrix {
        let per_row = self.d / self.pattern.m();
        let bits = self
            .mask_ids
            .chunks_exact(per_row)
            .flat_map(|ids| {
                lut_ids_to_mask(ids, self.pattern, self.d).expect("ids validated at construction")
            })
            .collect();
        BitmaskMatrix::new(self.subvectors(), self.d, bits).expect("dimensions validated")
    }

    pub fn report(&self, b_f: u32) -> CompressionReport {
        compression_ratio(&CompressionParams {
            ng: self.subvectors() as u64,
            d: self.d,
            k: self.k(),
            pattern: self.pattern,
            qc: self.codebook.bits(),
            b_f,
        })
        .expect("layer parameters validated at construction")
    }

    /// Bits of the three packed streams, excluding framing.
    pub fn payload_bits(&self) -> u64 {
        self.codebook.payload_bits()
            + self.subvectors() as u64 * u64::from(self.assignment_bits())
            + self.mask_ids.len() as u64 * u64::from(self.mask_id_bits())
    }
}

/// Dequantizes, reconstructs every subvector and restores the 4-D layout.
pub fn decompress(layer: &CompressedLayer) -> Result<WeightTensor> {
    let c = dequantize_codebook(&layer.codebook);
    let g = reconstruct_for_forward(&c, &layer.assignments, &layer.mask())?;
    ungroup_weights(&g.with_shape(layer.shape)?)
}

fn put_stream(out: &mut Vec<u8>, (bit_len, bytes): (u64, Vec<u8>)) {
    out.extend_from_slice(&bit_len.to_le_bytes());
    out.extend_from_slice(&bytes);
}

fn to_u16(v: usize, what: &str) -> u16 {
    u16::try_from(v).unwrap_or_else(|_| panic!("{what}={v} does not fit the container's u16 field"))
}

/// Encodes layers into an MVQ1 container.
///
/// # Panics
///
/// If a field exceeds its container width (`d`, `k`, `N`, `M` must fit in
/// `u16` and shape dimensions in `u32`).
pub fn serialize(layers: &[CompressedLayer]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN);
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for l in layers {
        for s in l.shape {
            let s = u32::try_from(s).expect("shape dimension fits u32");
            out.extend_from_slice(&s.to_le_bytes());
        }
        for (v, what) in [
            (l.d, "d"),
            (l.k(), "k"),
            (l.pattern.n(), "N"),
            (l.pattern.m(), "M"),
        ] {
            out.extend_from_slice(&to_u16(v, what).to_le_bytes());
        }
        let qc = l.codebook.bits();
        out.push(qc as u8);
        out.extend_from_slice(&l.codebook.scale().to_le_bytes());
        let mask = (1u64 << qc) - 1;
        put_stream(
            &mut out,
            pack_bits(
                l.codebook.values().iter().map(|&v| (v as i64 as u64) & mask),
                qc,
            ),
        );
        put_stream(
            &mut out,
            pack_bits(
                l.assignments.as_slice().iter().map(|&a| u64::from(a)),
                l.assignment_bits(),
            ),
        );
        put_stream(
            &mut out,
            pack_bits(l.mask_ids.iter().copied(), l.mask_id_bits()),
        );
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: u64) -> Result<&'a [u8]> {
        let available = (self.bytes.len() - self.pos) as u64;
        if n > available {
            return Err(Error::TruncatedStream {
                needed: n,
                available,
            });
        }
        let n = n as usize;
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N as u64)?.try_into().expect("length checked"))
    }

    fn u16(&mut self) -> Result<u16> {
        self.array().map(u16::from_le_bytes)
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64> {
        self.array().map(u64::from_le_bytes)
    }

    /// Reads a framed stream whose bit length must equal `expected_bits`.
    fn stream(&mut self, what: &str, expected_bits: u64) -> Result<&'a [u8]> {
        let bit_len = self.u64()?;
        if bit_len != expected_bits {
            return Err(Error::CorruptLengths(format!(
                "{what} stream has {bit_len} bits, layer header implies {expected_bits}"
            )));
        }
        let bytes = self.take(bit_len.div_ceil(8))?;
        let used = (bit_len % 8) as u32;
        if used != 0 && bytes[bytes.len() - 1] >> used != 0 {
            return Err(Error::NonCanonical(format!("{what} stream padding is not zero")));
        }
        Ok(bytes)
    }
}

fn read_layer(cur: &mut Cursor<'_>) -> Result<CompressedLayer> {
    let mut shape = [0usize; 4];
    for s in &mut shape {
        *s = cur.u32()? as usize;
    }
    let d = usize::from(cur.u16()?);
    let k = usize::from(cur.u16()?);
    let n = usize::from(cur.u16()?);
    let m = usize::from(cur.u16()?);
    let qc = u32::from(cur.array::<1>()?[0]);
    let scale = f32::from_le_bytes(cur.array()?);

    let invalid = |msg: String| Error::InvalidLayer(msg);
    let numel = shape
        .iter()
        .try_fold(1u64, |acc, &s| acc.checked_mul(s as u64))
        .filter(|&n| n > 0)
        .ok_or_else(|| invalid(format!("bad shape {shape:?}")))?;
    if numel > MAX_LAYER_ELEMENTS {
        return Err(invalid(format!("{numel} weights exceed the per-layer limit")));
    }
    if d == 0 || k == 0 {
        return Err(invalid(format!("d={d}, k={k} must be positive")));
    }
    if shape[0] % d != 0 {
        return Err(Error::CoutNotMultipleOfD { cout: shape[0], d });
    }
    let pattern = NmPattern::new(n, m)?;
    pattern.check_divides(d)?;
    if !(2..=16).contains(&qc) {
        return Err(Error::InvalidBits(qc));
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(invalid(format!("scale {scale} must be positive and finite")));
    }
    let ng = (numel / d as u64) as usize;
    let chunks = (numel / m as u64) as usize;
    let a_bits = ceil_log2(k as u64);
    let lut = MaskLut::new(pattern);
    let id_bits = lut.id_bits();

    let cb = cur.stream("codebook", (k * d) as u64 * u64::from(qc))?;
    let shift = 64 - qc;
    let values = unpack_bits(cb, k * d, qc)
        .into_iter()
        .map(|raw| ((raw << shift) as i64 >> shift) as i32)
        .collect();
    let codebook = QuantizedCodebook::new(k, d, values, scale, qc)?;

    let ab = cur.stream("assignment", ng as u64 * u64::from(a_bits))?;
    let raw = unpack_bits(ab, ng, a_bits);
    let assignments = Assignments::new(raw.into_iter().map(|a| a as u32).collect(), k)?;

    let mb = cur.stream("mask id", chunks as u64 * u64::from(id_bits))?;
    let mask_ids = unpack_bits(mb, chunks, id_bits);

    CompressedLayer::new(shape, pattern, codebook, assignments, mask_ids)
}

/// Per-layer reports for a decoded container. A codebook identical to an
/// earlier layer's is shared and counted once.
pub fn container_reports(layers: &[CompressedLayer], b_f: u32) -> Vec<CompressionReport> {
    layers
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut r = l.report(b_f);
            if layers[..i].iter().any(|p| p.codebook == l.codebook) {
                r.b_c = 0;
                r.ratio = r.raw_bits as f64 / r.payload_bits() as f64;
            }
            r
        })
        .collect()
}

/// Decodes an MVQ1 container.
pub fn deserialize(bytes: &[u8]) -> Result<Vec<CompressedLayer>> {
    let mut cur = Cursor { bytes, pos: 0 };
    if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
        return Err(Error::TruncatedStream { needed: MAGIC.len() as u64, available: bytes.len() as u64 });
    }
    let magic: [u8; 4] = cur.array().map_err(|_| Error::BadMagic)?;
    if magic != MAGIC {
        return Err(Error::BadMagic);
    }
    let version = cur.array::<1>()?[0];
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let count = cur.u32()?;
    let mut layers = Vec::new();
    for _ in 0..count {
        layers.push(read_layer(&mut cur)?);
    }
    if cur.pos != bytes.len() {
        return Err(Error::CorruptLengths(format!(
            "{} trailing bytes after the last layer",
            bytes.len() - cur.pos
        )));
    }
    Ok(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(n: usize, m: usize) -> NmPattern {
        NmPattern::new(n, m).unwrap()
    }

    fn toy_layer() -> CompressedLayer {
        // shape (4, 1, 1, 2), d = 4 -> NG = 2; 2:4 -> 2 chunks
        let cb = QuantizedCodebook::new(2, 4, vec![1, -2, 3, -4, 127, -128, 0, 5], 0.5, 8).unwrap();
        CompressedLayer::new(
            [4, 1, 1, 2],
            p(2, 4),
            cb,
            Assignments::new(vec![1, 0], 2).unwrap(),
            vec![0, 5],
        )
        .unwrap()
    }

    #[test]
    fn pack_is_lsb_first() {
        let (len, bytes) = pack_bits([0b101, 0b011], 3);
        assert_eq!(len, 6);
        assert_eq!(bytes, vec![0b011_101]);
        assert_eq!(unpack_bits(&bytes, 2, 3), vec![0b101, 0b011]);
        let (len, bytes) = pack_bits([0x1ff], 9);
        assert_eq!((len, bytes), (9, vec![0xff, 0x01]));
        assert_eq!(pack_bits([7, 7], 0), (0, vec![]));
    }

    #[test]
    fn compression_ratio_example() {
        let r = compression_ratio(&CompressionParams {
            ng: 1_000_000,
            d: 16,
            k: 512,
            pattern: p(4, 16),
            qc: 8,
            b_f: 32,
        })
        .unwrap();
        assert_eq!(r.b_a, 9_000_000);
        assert_eq!(r.b_m, 11_000_000);
        assert_eq!(r.b_c, 65_536);
        assert!((r.ratio - 512e6 / 20_065_536.0).abs() < 1e-12);
        assert!((r.ratio - 25.5).abs() < 0.05);
        assert_eq!(r.sparse_flops * 4, r.dense_flops);
    }

    #[test]
    fn degenerate_ratio_below_one() {
        let r = compression_ratio(&CompressionParams {
            ng: 1,
            d: 1,
            k: 1,
            pattern: p(1, 1),
            qc: 32,
            b_f: 32,
        })
        .unwrap();
        assert_eq!((r.b_a, r.b_m, r.b_c), (0, 0, 32));
        assert!(r.ratio <= 1.0);
    }

    #[test]
    fn empty_container_is_header_only() {
        let bytes = serialize(&[]);
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(&bytes[..4], b"MVQ1");
        assert!(deserialize(&bytes).unwrap().is_empty());
    }

    #[test]
    fn toy_layer_byte_layout() {
        let l = toy_layer();
        let bytes = serialize(std::slice::from_ref(&l));
        // header + shape + 4 u16 + qc + scale + 3 * (u64 + payload bytes)
        assert_eq!(bytes.len(), 9 + 16 + 8 + 1 + 4 + (8 + 8) + (8 + 1) + (8 + 1));
        assert_eq!(bytes[33], 8);
        assert_eq!(&bytes[34..38], &0.5f32.to_le_bytes());
        assert_eq!(bytes[38], 64);
        // codebook ints as raw bytes: 8-bit two's complement
        assert_eq!(&bytes[46..54], &[1, 0xfe, 3, 0xfc, 127, 0x80, 0, 5]);
        // assignments [1, 0] at 1 bit each
        assert_eq!(&bytes[54..63], &[2, 0, 0, 0, 0, 0, 0, 0, 0b01]);
        // mask ids [0, 5] at 3 bits each
        assert_eq!(bytes[71], 0b101_000);
        assert_eq!(deserialize(&bytes).unwrap(), vec![l.clone()]);
        assert_eq!(l.payload_bits(), l.report(32).payload_bits());
    }

    #[test]
    fn repeated_codebook_counted_once() {
        let l = toy_layer();
        let r = container_reports(&[l.clone(), l.clone()], 32);
        assert_eq!(r[0], l.report(32));
        assert_eq!(r[1].b_c, 0);
        assert_eq!(r[1].b_a + r[1].b_m, r[0].b_a + r[0].b_m);
    }

    #[test]
    fn decode_errors() {
        let bytes = serialize(&[toy_layer()]);
        assert_eq!(deserialize(b"MVQ2\x01\0\0\0\0"), Err(Error::BadMagic));
        assert_eq!(deserialize(b"MX"), Err(Error::BadMagic));
        assert!(matches!(deserialize(b"MV"), Err(Error::TruncatedStream { .. })));
        let mut v = bytes.clone();
        v[4] = 9;
        assert_eq!(deserialize(&v), Err(Error::UnsupportedVersion(9)));
        for cut in [10, 40, bytes.len() - 1] {
            assert!(
                matches!(deserialize(&bytes[..cut]), Err(Error::TruncatedStream { .. })),
                "cut at {cut}"
            );
        }
        let mut v = bytes.clone();
        v[38] = 65; // codebook bit length
        assert!(matches!(deserialize(&v), Err(Error::CorruptLengths(_))));
        let mut v = bytes.clone();
        v.push(0);
        assert!(matches!(deserialize(&v), Err(Error::CorruptLengths(_))));
        let mut v = bytes.clone();
        v[71] |= 0b1100_0000; // padding bits of the mask stream
        assert!(matches!(deserialize(&v), Err(Error::NonCanonical(_))));
        let mut v = bytes.clone();
        v[71] = 0b111_000; // id 7 >= C(4,2)
        assert!(matches!(deserialize(&v), Err(Error::IdOutOfRange { id: 7, count: 6 })));
    }

    #[test]
    fn decompress_applies_masks() {
        let w = decompress(&toy_layer()).unwrap();
        assert_eq!(w.shape(), [4, 1, 1, 2]);
        // row 0 -> codeword 1 = [63.5, -64, 0, 2.5] masked by id 0 = [1,1,0,0]
        // row 1 -> codeword 0 = [0.5, -1, 1.5, -2] masked by id 5 = [0,0,1,1]
        // w[co][p] = row p, column co
        assert_eq!(w.data(), &[63.5, 0.0, -64.0, 0.0, 0.0, 1.5, 0.0, -2.0]);
        assert_eq!(w.zero_fraction(), 0.5);
    }

    proptest! {
        #[test]
        fn random_layers_round_trip(
            k in 1usize..40, qc in 2u32..=16, blocks in 1usize..4, plane in 1usize..6,
            pat in prop_oneof![Just((1usize, 2usize)), Just((2, 4)), Just((4, 16)), Just((8, 8))],
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let pattern = p(pat.0, pat.1);
            let d = 16;
            let half = 1i32 << (qc - 1);
            let cb = QuantizedCodebook::new(
                k, d, (0..k * d).map(|_| rng.random_range(-half..half)).collect(),
                rng.random_range(1e-3f32..2.0), qc,
            ).unwrap();
            let ng = blocks * plane;
            let a = Assignments::new((0..ng).map(|_| rng.random_range(0..k as u32)).collect(), k).unwrap();
            let count = MaskLut::new(pattern).len();
            let ids = (0..ng * d / pattern.m()).map(|_| rng.random_range(0..count)).collect();
            let l = CompressedLayer::new([blocks * d, plane, 1, 1], pattern, cb, a, ids).unwrap();
            let bytes = serialize(std::slice::from_ref(&l));
            let back = deserialize(&bytes).unwrap();
            prop_assert_eq!(&back[0], &l);
            prop_assert_eq!(serialize(&back), bytes);
        }
    }
}
