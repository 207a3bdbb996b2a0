//! End-to-end layer compression: group, prune, cluster, quantize, encode.

use crate::clustering::{
    masked_assign, run_kmeans, Assignments, ClusterMode, ClusterRunStats, Codebook, KmeansParams,
    DEFAULT_CHANGE_THRESHOLD, DEFAULT_MAX_ITERS,
};
use crate::codec::{CompressedLayer, CompressionReport, DEFAULT_FULL_PRECISION_BITS};
use crate::error::{Error, Result};
use crate::finetune::reconstruct_for_forward;
use crate::quantization::{dequantize_codebook, quantize_codebook, QuantizedCodebook, ScaleMode};
use crate::sparsity::{prune_nm, NmPattern, SparseGroupedMatrix};
use crate::tensor::{group_weights, sse, GroupedMatrix, SseReport, WeightTensor};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSettings {
    pub d: usize,
    pub k: usize,
    pub pattern: NmPattern,
    pub qc: u32,
    pub mode: ClusterMode,
    pub scale_mode: ScaleMode,
    pub seed: u64,
    pub max_iters: usize,
    pub change_threshold: f64,
}

impl LayerSettings {
    /// `k = 512, d = 16, 4:16, 8-bit codebook`, masked clustering.
    pub fn new(d: usize, k: usize, pattern: NmPattern) -> Self {
        Self {
            d,
            k,
            pattern,
            qc: 8,
            mode: ClusterMode::Masked,
            scale_mode: ScaleMode::AbsMax,
            seed: DEFAULT_SEED,
            max_iters: DEFAULT_MAX_ITERS,
            change_threshold: DEFAULT_CHANGE_THRESHOLD,
        }
    }

    fn kmeans(&self) -> KmeansParams {
        KmeansParams {
            k: self.k,
            seed: self.seed,
            max_iters: self.max_iters,
            change_threshold: self.change_threshold,
        }
    }
}

impl Default for LayerSettings {
    fn default() -> Self {
        Self::new(16, 512, NmPattern::new(4, 16).expect("valid pattern"))
    }
}

/// Everything produced while compressing one layer.
#[derive(Debug, Clone)]
pub struct LayerOutcome {
    pub layer: CompressedLayer,
    pub stats: ClusterRunStats,
    /// Error of the full-precision codebook against the pruned weights.
    pub sse_full_precision: SseReport,
    /// Error of the quantized codebook against the pruned weights.
    pub sse_quantized: SseReport,
    /// Error of the quantized reconstruction against the original dense
    /// weights (includes the pruning error).
    pub sse_vs_dense: f64,
    pub report: CompressionReport,
}

fn prepare(w: &WeightTensor, s: &LayerSettings) -> Result<(GroupedMatrix, SparseGroupedMatrix)> {
    let g = group_weights(w, s.d)?;
    let sparse = prune_nm(&g, s.pattern)?;
    Ok((g, sparse))
}

fn finish(
    dense: &GroupedMatrix,
    sparse: &SparseGroupedMatrix,
    codebook: &Codebook,
    qcb: QuantizedCodebook,
    assignments: Assignments,
    stats: ClusterRunStats,
) -> Result<LayerOutcome> {
    let mask = sparse.mask();
    let fp = reconstruct_for_forward(codebook, &assignments, mask)?;
    let sse_full_precision = sse(sparse.matrix(), &fp, Some(mask))?;
    let q = reconstruct_for_forward(&dequantize_codebook(&qcb), &assignments, mask)?;
    let sse_quantized = sse(sparse.matrix(), &q, Some(mask))?;
    let sse_vs_dense = sse(dense, &q, None)?.total_sse;
    let layer = CompressedLayer::new(
        dense.shape(),
        sparse.pattern(),
        qcb,
        assignments,
        sparse.lut_ids(),
    )?;
    let report = layer.report(DEFAULT_FULL_PRECISION_BITS);
    Ok(LayerOutcome {
        layer,
        stats,
        sse_full_precision,
        sse_quantized,
        sse_vs_dense,
        report,
    })
}

/// Compresses one layer with its own codebook.
pub fn compress_layer(w: &WeightTensor, s: &LayerSettings) -> Result<LayerOutcome> {
    let (dense, sparse) = prepare(w, s)?;
    let (codebook, assignments, stats) = run_kmeans(&sparse, s.mode, &s.kmeans())?;
    let qcb = quantize_codebook(&codebook, s.qc, s.scale_mode)?;
    finish(&dense, &sparse, &codebook, qcb, assignments, stats)
}

/// Clusters all layers against one shared codebook. Every layer record
/// carries a copy of it; the reports count its bits only on the first layer.
pub fn compress_shared(ws: &[WeightTensor], s: &LayerSettings) -> Result<Vec<LayerOutcome>> {
    if ws.is_empty() {
        return Ok(Vec::new());
    }
    let prepared = ws
        .iter()
        .map(|w| prepare(w, s))
        .collect::<Result<Vec<_>>>()?;
    // stack every layer's subvectors into one matrix
    let rows: usize = prepared.iter().map(|(_, sp)| sp.rows()).sum();
    let mut values = Vec::with_capacity(rows * s.d);
    let mut bits = Vec::with_capacity(rows * s.d);
    for (_, sp) in &prepared {
        values.extend_from_slice(sp.matrix().data());
        bits.extend_from_slice(sp.mask().bits());
    }
    let stacked = SparseGroupedMatrix::new(
        GroupedMatrix::from_flat(rows, s.d, values)?,
        crate::sparsity::BitmaskMatrix::new(rows, s.d, bits)?,
        s.pattern,
    )?;
    let (codebook, assignments, stats) = run_kmeans(&stacked, s.mode, &s.kmeans())?;
    let qcb = quantize_codebook(&codebook, s.qc, s.scale_mode)?;
    let mut out = Vec::with_capacity(ws.len());
    let mut start = 0;
    for (i, (dense, sparse)) in prepared.iter().enumerate() {
        let end = start + sparse.rows();
        let a = Assignments::new(assignments.as_slice()[start..end].to_vec(), s.k)?;
        start = end;
        let mut o = finish(dense, sparse, &codebook, qcb.clone(), a, stats.clone())?;
        if i > 0 {
            o.report.b_c = 0;
            o.report.ratio = o.report.raw_bits as f64 / o.report.payload_bits() as f64;
        }
        out.push(o);
    }
    Ok(out)
}

/// Encodes `w` against an existing quantized codebook: prune, then a single
/// masked assignment pass. No clustering happens.
pub fn reencode_layer(
    w: &WeightTensor,
    d: usize,
    pattern: NmPattern,
    codebook: &QuantizedCodebook,
) -> Result<CompressedLayer> {
    if codebook.d() != d {
        return Err(Error::DimensionMismatch(format!(
            "codebook length {} vs d={d}",
            codebook.d()
        )));
    }
    let sparse = prune_nm(&group_weights(w, d)?, pattern)?;
    let a = masked_assign(&sparse, &dequantize_codebook(codebook))?;
    CompressedLayer::new(w.shape(), pattern, codebook.clone(), a, sparse.lut_ids())
}

/// One row of the four-way ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCase {
    pub label: char,
    pub d: usize,
    pub k: usize,
    /// Error over every weight against the case's reference tensor.
    pub total_sse: f64,
    /// Error over the positions kept by pruning.
    pub mask_sse: f64,
    /// Executed MACs relative to the dense layer.
    pub flops_ratio: f64,
}

/// Shared inputs of the ablation. Common VQ uses `(common_k, common_d)`
/// and masked VQ `(masked_k, masked_d)`; the defaults give both the same
/// compression ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationSettings {
    pub pattern: NmPattern,
    pub common_k: usize,
    pub common_d: usize,
    pub masked_k: usize,
    pub masked_d: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub change_threshold: f64,
}

impl Default for AblationSettings {
    fn default() -> Self {
        Self {
            pattern: NmPattern::new(4, 16).expect("valid pattern"),
            common_k: 1024,
            common_d: 8,
            masked_k: 512,
            masked_d: 16,
            seed: DEFAULT_SEED,
            max_iters: DEFAULT_MAX_ITERS,
            change_threshold: DEFAULT_CHANGE_THRESHOLD,
        }
    }
}

/// Clusters `w` four ways:
///
/// - A: dense weights, common k-means, dense reconstruction
/// - B: pruned weights, common k-means, dense reconstruction
/// - C: pruned weights, common k-means, masks applied on reconstruction
/// - D: pruned weights, masked k-means, masks applied on reconstruction
///
/// The pruning mask comes from the masked subvector length and is shared by
/// all cases. A is scored against the dense weights, B to D against the
/// pruned ones. Errors are full precision, before codebook quantization.
pub fn run_ablation(w: &WeightTensor, s: &AblationSettings) -> Result<[AblationCase; 4]> {
    let params = |k| KmeansParams {
        k,
        seed: s.seed,
        max_iters: s.max_iters,
        change_threshold: s.change_threshold,
    };
    let sparse = prune_nm(&group_weights(w, s.masked_d)?, s.pattern)?;
    let pruned = crate::tensor::ungroup_weights(sparse.matrix())?;
    let keep = crate::tensor::ungroup_weights(&GroupedMatrix::from_flat(
        sparse.rows(),
        s.masked_d,
        sparse.mask().bits().iter().map(|&b| f64::from(u8::from(b))).collect(),
    )?
    .with_shape(w.shape())?)?;
    let kept: Vec<bool> = keep.data().iter().map(|v| *v != 0.0).collect();

    let errors = |reference: &WeightTensor, recon: &WeightTensor| {
        let mut total = 0.0;
        let mut masked = 0.0;
        for ((r, x), k) in reference.data().iter().zip(recon.data()).zip(&kept) {
            let e = (r - x) * (r - x);
            total += e;
            if *k {
                masked += e;
            }
        }
        (total, masked)
    };
    let dense_case = |label, source: &WeightTensor, reference: &WeightTensor| -> Result<AblationCase> {
        let g = group_weights(source, s.common_d)?;
        let (c, a, _) = crate::clustering::run_common_kmeans(&g, &params(s.common_k))?;
        let recon = reconstruct_for_forward(&c, &a, &crate::sparsity::BitmaskMatrix::full(g.rows(), s.common_d))?
            .with_shape(w.shape())?;
        let (total_sse, mask_sse) = errors(reference, &crate::tensor::ungroup_weights(&recon)?);
        Ok(AblationCase {
            label,
            d: s.common_d,
            k: s.common_k,
            total_sse,
            mask_sse,
            flops_ratio: 1.0,
        })
    };
    let sparse_case = |label, mode| -> Result<AblationCase> {
        let (c, a, _) = run_kmeans(&sparse, mode, &params(s.masked_k))?;
        let recon = reconstruct_for_forward(&c, &a, sparse.mask())?.with_shape(w.shape())?;
        let (total_sse, mask_sse) = errors(&pruned, &crate::tensor::ungroup_weights(&recon)?);
        Ok(AblationCase {
            label,
            d: s.masked_d,
            k: s.masked_k,
            total_sse,
            mask_sse,
            flops_ratio: s.pattern.n() as f64 / s.pattern.m() as f64,
        })
    };
    Ok([
        dense_case('A', w, w)?,
        dense_case('B', &pruned, &pruned)?,
        sparse_case('C', ClusterMode::Common)?,
        sparse_case('D', ClusterMode::Masked)?,
    ])
}
