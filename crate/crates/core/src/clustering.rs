//! Masked k-means and the plain k-means baseline.
//!
//! Both share one loop: assign every subvector to its nearest codeword, then
//! move each codeword to the mean of its members. The masked variant measures
//! distance as `||w - c * bm||^2` and averages each coordinate only over the
//! members whose mask keeps it. With all-ones masks the two coincide.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparsity::SparseGroupedMatrix;
use crate::tensor::GroupedMatrix;

/// Rows handled per parallel task during assignment.
const ASSIGN_BATCH: usize = 1024;

/// Default convergence threshold, as a fraction of the number of subvectors.
pub const DEFAULT_CHANGE_THRESHOLD: f64 = 0.001;

pub const DEFAULT_MAX_ITERS: usize = 100;

/// `k` codewords of length `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl Codebook {
    pub fn new(k: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 || data.len() != k * d {
            return Err(Error::DimensionMismatch(format!(
                "codebook {k}x{d} with {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite codeword".into()));
        }
        Ok(Self { k, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged codewords".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn codeword(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn codeword_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }
}

/// One codeword index per subvector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignments(Vec<u32>);

impl Assignments {
    pub fn new(indices: Vec<u32>, k: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i as usize >= k) {
            return Err(Error::IndexOutOfRange {
                index: bad as usize,
                k,
            });
        }
        Ok(Self(indices))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, j: usize) -> usize {
        self.0[j] as usize
    }

    pub(crate) fn check_bounds(&self, k: usize) -> Result<()> {
        match self.0.iter().find(|&&i| i as usize >= k) {
            Some(&bad) => Err(Error::IndexOutOfRange {
                index: bad as usize,
                k,
            }),
            None => Ok(()),
        }
    }

    /// Number of positions where `self` and `other` differ.
    pub fn changed_from(&self, other: &Assignments) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

/// Per-run trace. Entry `i` of each trace belongs to the `i`-th assignment
/// pass; there is one more pass than completed update steps.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterRunStats {
    /// Update steps performed.
    pub iterations: usize,
    pub sse_trace: Vec<f64>,
    /// Changed assignments per pass (the first pass counts every row).
    pub changed_trace: Vec<usize>,
    pub seed: u64,
    pub converged: bool,
}

impl ClusterRunStats {
    pub fn final_sse(&self) -> f64 {
        *self.sse_trace.last().expect("at least one pass")
    }
}

/// Clustering objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClusterMode {
    #[default]
    Masked,
    Common,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub change_threshold: f64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: DEFAULT_MAX_ITERS,
            change_threshold: DEFAULT_CHANGE_THRESHOLD,
        }
    }
}

/// Row indices chosen as initial codewords: `k` distinct rows drawn without
/// replacement from a ChaCha8 stream seeded with `seed`.
pub fn init_indices(rows: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be positive".into()));
    }
    if rows < k {
        return Err(Error::TooFewSubvectors { rows, k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(sample(&mut rng, rows, k).into_vec())
}

pub fn kmeans_init(g: &GroupedMatrix, k: usize, seed: u64) -> Result<Codebook> {
    let idx = init_indices(g.rows(), k, seed)?;
    let mut data = Vec::with_capacity(k * g.d());
    for i in idx {
        data.extend_from_slice(g.row(i));
    }
    Codebook::new(k, g.d(), data)
}

/// `||w - c * bm||^2`.
#[inline]
pub fn masked_distance(w: &[f64], c: &[f64], bm: &[bool]) -> f64 {
    w.iter()
        .zip(c)
        .zip(bm)
        .map(|((&w, &c), &keep)| {
            let r = if keep { w - c } else { w };
            r * r
        })
        .sum()
}

fn check_codebook(g: &SparseGroupedMatrix, c: &Codebook) -> Result<()> {
    if c.d() != g.d() {
        return Err(Error::DimensionMismatch(format!(
            "codeword length {} vs subvector length {}",
            c.d(),
            g.d()
        )));
    }
    Ok(())
}

fn nearest(w: &[f64], bm: &[bool], c: &Codebook) -> (u32, f64) {
    if !bm.iter().any(|b| *b) {
        return (0, masked_distance(w, c.codeword(0), bm));
    }
    let mut best = (0u32, f64::INFINITY);
    for i in 0..c.k() {
        let dist = masked_distance(w, c.codeword(i), bm);
        if dist < best.1 {
            best = (i as u32, dist);
        }
    }
    best
}

/// Masked assignment: each row goes to `argmin_i ||w_j - c_i * bm_j||^2`,
/// ties to the lowest index. Rows with an all-zero mask get index 0.
pub fn masked_assign(g: &SparseGroupedMatrix, c: &Codebook) -> Result<Assignments> {
    check_codebook(g, c)?;
    let d = g.d();
    let w = g.matrix().data();
    let bm = g.mask().bits();
    let mut out = vec![0u32; g.rows()];
    out.par_chunks_mut(ASSIGN_BATCH)
        .enumerate()
        .for_each(|(b, slot)| {
            let base = b * ASSIGN_BATCH;
            for (off, a) in slot.iter_mut().enumerate() {
                let j = base + off;
                *a = nearest(&w[j * d..(j + 1) * d], &bm[j * d..(j + 1) * d], c).0;
            }
        });
    Ok(Assignments(out))
}

/// Masked reconstruction error `sum_j ||w_j - c_{a_j} * bm_j||^2`.
pub fn masked_sse(g: &SparseGroupedMatrix, a: &Assignments, c: &Codebook) -> Result<f64> {
    check_codebook(g, c)?;
    if a.len() != g.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} rows",
            a.len(),
            g.rows()
        )));
    }
    a.check_bounds(c.k())?;
    let d = g.d();
    let w = g.matrix().data();
    let bm = g.mask().bits();
    Ok((0..g.rows())
        .map(|j| {
            masked_distance(
                &w[j * d..(j + 1) * d],
                c.codeword(a.get(j)),
                &bm[j * d..(j + 1) * d],
            )
        })
        .sum())
}

/// Per-codeword, per-coordinate masked sums and coverage counts, accumulated
/// in row order.
pub(crate) fn masked_sums(
    values: &[f64],
    bits: &[bool],
    d: usize,
    a: &Assignments,
    k: usize,
) -> (Vec<f64>, Vec<u64>, Vec<usize>) {
    let mut sums = vec![0.0; k * d];
    let mut cover = vec![0u64; k * d];
    let mut members = vec![0usize; k];
    for (j, &ai) in a.as_slice().iter().enumerate() {
        let i = ai as usize;
        members[i] += 1;
        let row = &values[j * d..(j + 1) * d];
        let keep = &bits[j * d..(j + 1) * d];
        for t in 0..d {
            if keep[t] {
                sums[i * d + t] += row[t];
                cover[i * d + t] += 1;
            }
        }
    }
    (sums, cover, members)
}

/// Masked update: each coordinate becomes the mean of the kept values of the
/// rows assigned to it. Coordinates no kept value covers, and codewords with
/// no members, keep their previous values.
pub fn masked_update(
    g: &SparseGroupedMatrix,
    a: &Assignments,
    c: &Codebook,
) -> Result<Codebook> {
    check_codebook(g, c)?;
    if a.len() != g.rows() {
        return Err(Error::DimensionMismatch(format!(
            "{} assignments for {} rows",
            a.len(),
            g.rows()
        )));
    }
    a.check_bounds(c.k())?;
    let d = g.d();
    let (sums, cover, _) = masked_sums(g.matrix().data(), g.mask().bits(), d, a, c.k());
    let mut next = c.clone();
    for ((v, s), n) in next.data.iter_mut().zip(&sums).zip(&cover) {
        if *n > 0 {
            *v = s / *n as f64;
        }
    }
    Ok(next)
}

/// Re-seeds every codeword without members from the rows that currently fit
/// their codeword worst. Only kept coordinates are overwritten.
fn reseed_empty(g: &SparseGroupedMatrix, a: &Assignments, c: &mut Codebook) {
    let mut members = vec![0usize; c.k()];
    for &i in a.as_slice() {
        members[i as usize] += 1;
    }
    let empty: Vec<usize> = (0..c.k()).filter(|&i| members[i] == 0).collect();
    if empty.is_empty() {
        return;
    }
    let d = g.d();
    let w = g.matrix().data();
    let bm = g.mask().bits();
    let mut fit: Vec<(f64, usize)> = (0..g.rows())
        .map(|j| {
            let dist = masked_distance(
                &w[j * d..(j + 1) * d],
                c.codeword(a.get(j)),
                &bm[j * d..(j + 1) * d],
            );
            (dist, j)
        })
        .collect();
    // worst first, lower row index among ties
    fit.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    for (&i, &(_, j)) in empty.iter().zip(&fit) {
        let row = &w[j * d..(j + 1) * d];
        let keep = &bm[j * d..(j + 1) * d];
        for (t, cw) in c.codeword_mut(i).iter_mut().enumerate() {
            if keep[t] {
                *cw = row[t];
            }
        }
    }
}

/// Alternates masked assignment and masked update from `init` until fewer than
/// `change_threshold * NG` assignments change or `max_iters` updates have run.
/// The returned codebook and assignments are consistent: the last step is
/// always an assignment pass against the returned codebook.
pub fn run_masked_kmeans_from(
    g: &SparseGroupedMatrix,
    init: Codebook,
    params: &KmeansParams,
) -> Result<(Codebook, Assignments, ClusterRunStats)> {
    check_codebook(g, &init)?;
    let rows = g.rows();
    let limit = params.change_threshold * rows as f64;
    let mut c = init;
    let mut prev: Option<Assignments> = None;
    let mut stats = ClusterRunStats {
        iterations: 0,
        sse_trace: Vec::new(),
        changed_trace: Vec::new(),
        seed: params.seed,
        converged: false,
    };
    loop {
        let a = masked_assign(g, &c)?;
        let changed = prev.as_ref().map_or(rows, |p| a.changed_from(p));
        stats.sse_trace.push(masked_sse(g, &a, &c)?);
        stats.changed_trace.push(changed);
        if prev.is_some() && (changed as f64) < limit.max(f64::MIN_POSITIVE) {
            stats.converged = true;
        }
        if stats.converged || stats.iterations >= params.max_iters {
            return Ok((c, a, stats));
        }
        c = masked_update(g, &a, &c)?;
        reseed_empty(g, &a, &mut c);
        stats.iterations += 1;
        prev = Some(a);
    }
}

/// Masked k-means with random-row initialization.
pub fn run_masked_kmeans(
    g: &SparseGroupedMatrix,
    params: &KmeansParams,
) -> Result<(Codebook, Assignments, ClusterRunStats)> {
    let init = kmeans_init(g.matrix(), params.k, params.seed)?;
    run_masked_kmeans_from(g, init, params)
}

/// Plain k-means on `g` (every entry participates, zeros included).
pub fn run_common_kmeans(
    g: &GroupedMatrix,
    params: &KmeansParams,
) -> Result<(Codebook, Assignments, ClusterRunStats)> {
    run_masked_kmeans(&SparseGroupedMatrix::dense(g.clone()), params)
}

/// Dispatches on `mode`. In common mode the sparse matrix is clustered as a
/// dense one, zeros included.
pub fn run_kmeans(
    g: &SparseGroupedMatrix,
    mode: ClusterMode,
    params: &KmeansParams,
) -> Result<(Codebook, Assignments, ClusterRunStats)> {
    match mode {
        ClusterMode::Masked => run_masked_kmeans(g, params),
        ClusterMode::Common => run_common_kmeans(g.matrix(), params),
    }
}
