//! Dense weight tensors, output-channel-wise grouping into subvectors, and
//! squared-error metrics.
//!
//! A convolution weight of shape `(Cout, Cin, Kh, Kw)` is regrouped into a
//! matrix of `NG = Cout/d * Cin * Kh * Kw` rows of length `d`. Row `j` holds the
//! weights of `d` consecutive output channels at one fixed `(cin, kh, kw)`
//! position, with rows ordered lexicographically by `(cout_block, cin, kh, kw)`
//! and columns in ascending output-channel order.

use crate::error::{Error, Result};
use crate::sparsity::BitmaskMatrix;

/// Shape of a 4-D convolution weight: `[Cout, Cin, Kh, Kw]`.
pub type Shape4 = [usize; 4];

fn numel(shape: &Shape4) -> Option<usize> {
    shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s))
}

/// A dense 4-D weight tensor stored row-major in `(cout, cin, kh, kw)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    shape: Shape4,
    data: Vec<f64>,
}

impl WeightTensor {
    pub fn new(shape: Shape4, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} has a zero dimension"
            )));
        }
        let expected = numel(&shape)
            .ok_or_else(|| Error::InvalidTensor(format!("shape {shape:?} overflows")))?;
        if data.len() != expected {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value at flat index {i}"
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Fraction of entries that are exactly zero.
    pub fn zero_fraction(&self) -> f64 {
        let zeros = self.data.iter().filter(|v| **v == 0.0).count();
        zeros as f64 / self.data.len() as f64
    }
}

/// `NG x d` matrix of subvectors together with the 4-D shape it was grouped
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedMatrix {
    rows: usize,
    d: usize,
    data: Vec<f64>,
    shape: Shape4,
}

impl GroupedMatrix {
    /// Builds a matrix from flat row-major data. The attached layout is the
    /// trivial one, `(NG*d, 1, 1, 1)`, under which each row is one block of `d`
    /// output channels.
    pub fn from_flat(rows: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "matrix must be non-empty, got {rows}x{d}"
            )));
        }
        if data.len() != rows * d {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{d} matrix needs {} values, got {}",
                rows * d,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor("non-finite matrix entry".into()));
        }
        Ok(Self {
            rows,
            d,
            data,
            shape: [rows * d, 1, 1, 1],
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_flat(rows.len(), d, rows.concat())
    }

    /// Replaces the layout with `shape`, which must group to the same `NG x d`.
    pub fn with_shape(mut self, shape: Shape4) -> Result<Self> {
        if !shape[0].is_multiple_of(self.d) || numel(&shape) != Some(self.rows * self.d) {
            return Err(Error::DimensionMismatch(format!(
                "shape {shape:?} does not group into {}x{}",
                self.rows, self.d
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn shape(&self) -> Shape4 {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.d..(j + 1) * self.d]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub(crate) fn same_dims(&self, other: &GroupedMatrix) -> Result<()> {
        if self.rows != other.rows || self.d != other.d {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.d, other.rows, other.d
            )));
        }
        Ok(())
    }
}

/// Regroups `w` into `NG x d` subvectors along the output-channel axis.
pub fn group_weights(w: &WeightTensor, d: usize) -> Result<GroupedMatrix> {
    let [cout, cin, kh, kw] = w.shape;
    if d == 0 || cout % d != 0 {
        return Err(Error::CoutNotMultipleOfD { cout, d });
    }
    let plane = cin * kh * kw;
    let blocks = cout / d;
    let mut data = vec![0.0; w.len()];
    for blk in 0..blocks {
        for t in 0..d {
            let co = blk * d + t;
            let src = &w.data[co * plane..(co + 1) * plane];
            for (p, &v) in src.iter().enumerate() {
                data[(blk * plane + p) * d + t] = v;
            }
        }
    }
    Ok(GroupedMatrix {
        rows: blocks * plane,
        d,
        data,
        shape: w.shape,
    })
}

/// Inverse of [`group_weights`].
pub fn ungroup_weights(g: &GroupedMatrix) -> Result<WeightTensor> {
    let [cout, cin, kh, kw] = g.shape;
    let d = g.d;
    let plane = cin * kh * kw;
    let mut data = vec![0.0; g.data.len()];
    for blk in 0..cout / d {
        for p in 0..plane {
            let row = &g.data[(blk * plane + p) * d..(blk * plane + p + 1) * d];
            for (t, &v) in row.iter().enumerate() {
                data[(blk * d + t) * plane + p] = v;
            }
        }
    }
    WeightTensor::new(g.shape, data)
}

/// Squared reconstruction error over all entries and over kept entries only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SseReport {
    pub total_sse: f64,
    pub mask_sse: f64,
}

/// Sums squared differences between `original` and `reconstructed`. With a
/// mask, `mask_sse` is restricted to entries whose mask bit is set; without
/// one it equals `total_sse`.
pub fn sse(
    original: &GroupedMatrix,
    reconstructed: &GroupedMatrix,
    mask: Option<&BitmaskMatrix>,
) -> Result<SseReport> {
    original.same_dims(reconstructed)?;
    if let Some(m) = mask {
        if m.rows() != original.rows || m.d() != original.d {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs matrix {}x{}",
                m.rows(),
                m.d(),
                original.rows,
                original.d
            )));
        }
    }
    let mut total = 0.0;
    let mut masked = 0.0;
    for (i, (a, b)) in original.data.iter().zip(&reconstructed.data).enumerate() {
        let e = (a - b) * (a - b);
        total += e;
        if mask.is_none_or(|m| m.bits()[i]) {
            masked += e;
        }
    }
    Ok(SseReport {
        total_sse: total,
        mask_sse: masked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tensor(shape: Shape4) -> WeightTensor {
        let n = shape.iter().product::<usize>();
        WeightTensor::new(shape, (0..n).map(|i| i as f64 * 0.5 - 3.0).collect()).unwrap()
    }

    #[test]
    fn groups_single_plane() {
        let w = WeightTensor::new([4, 1, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = group_weights(&w, 2).unwrap();
        assert_eq!(g.rows(), 2);
        assert_eq!(g.row(0), &[1.0, 2.0]);
        assert_eq!(g.row(1), &[3.0, 4.0]);
        assert_eq!(ungroup_weights(&g).unwrap(), w);
    }

    #[test]
    fn groups_output_channels_per_input_channel() {
        // cout-major [a, b, c, d] with shape (2, 2, 1, 1)
        let w = WeightTensor::new([2, 2, 1, 1], vec![10.0, 11.0, 12.0, 13.0]).unwrap();
        let g = group_weights(&w, 2).unwrap();
        assert_eq!(g.row(0), &[10.0, 12.0]);
        assert_eq!(g.row(1), &[11.0, 13.0]);
    }

    #[test]
    fn rejects_cout_not_multiple_of_d() {
        let w = WeightTensor::new([3, 1, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            group_weights(&w, 2),
            Err(Error::CoutNotMultipleOfD { cout: 3, d: 2 })
        );
    }

    #[test]
    fn rows_hold_consecutive_output_channels() {
        let shape = [8, 3, 3, 3];
        let [cout, cin, kh, kw] = shape;
        // encode indices into the values so placement is checkable
        let data = (0..cout * cin * kh * kw).map(|i| i as f64).collect();
        let w = WeightTensor::new(shape, data).unwrap();
        let g = group_weights(&w, 4).unwrap();
        assert_eq!(g.rows(), 2 * cin * kh * kw);
        for blk in 0..2 {
            for ci in 0..cin {
                for h in 0..kh {
                    for x in 0..kw {
                        let j = ((blk * cin + ci) * kh + h) * kw + x;
                        for t in 0..4 {
                            let co = blk * 4 + t;
                            let flat = ((co * cin + ci) * kh + h) * kw + x;
                            assert_eq!(g.row(j)[t], flat as f64);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn editing_one_row_changes_d_entries() {
        let w = tensor([8, 3, 3, 3]);
        let mut g = group_weights(&w, 8).unwrap();
        g.row_mut(5).iter_mut().for_each(|v| *v += 100.0);
        let back = ungroup_weights(&g).unwrap();
        let changed = w
            .data()
            .iter()
            .zip(back.data())
            .filter(|(a, b)| a != b)
            .count();
        assert_eq!(changed, 8);
    }

    #[test]
    fn rejects_non_finite_and_bad_length() {
        assert!(WeightTensor::new([1, 1, 1, 2], vec![1.0]).is_err());
        assert!(WeightTensor::new([1, 1, 1, 1], vec![f64::NAN]).is_err());
        assert!(WeightTensor::new([0, 1, 1, 1], vec![]).is_err());
    }

    #[test]
    fn sse_examples() {
        let a = GroupedMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let z = GroupedMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let r = sse(&a, &a, None).unwrap();
        assert_eq!((r.total_sse, r.mask_sse), (0.0, 0.0));
        let m = BitmaskMatrix::from_rows(&[vec![true, false]]).unwrap();
        let r = sse(&a, &z, Some(&m)).unwrap();
        assert_eq!((r.total_sse, r.mask_sse), (5.0, 1.0));
        let r = sse(&a, &z, None).unwrap();
        assert_eq!(r.mask_sse, r.total_sse);
    }

    #[test]
    fn sse_dimension_mismatch() {
        let a = GroupedMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = GroupedMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(sse(&a, &b, None), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sse_matches_scalar_loop() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let (rows, d) = (64, 8);
        let gen = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..rows)
                .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
                .collect()
        };
        let a = gen(&mut rng);
        let b = gen(&mut rng);
        let mask: Vec<Vec<bool>> = (0..rows)
            .map(|_| (0..d).map(|_| rng.random_bool(0.3)).collect())
            .collect();
        let mut total = 0.0f64;
        let mut masked = 0.0f64;
        for i in 0..rows {
            for t in 0..d {
                let e = (a[i][t] - b[i][t]).powi(2);
                total += e;
                if mask[i][t] {
                    masked += e;
                }
            }
        }
        let ga = GroupedMatrix::from_rows(&a).unwrap();
        let gb = GroupedMatrix::from_rows(&b).unwrap();
        let m = BitmaskMatrix::from_rows(&mask).unwrap();
        let r = sse(&ga, &gb, Some(&m)).unwrap();
        assert!((r.total_sse - total).abs() <= 1e-12 * total);
        assert!((r.mask_sse - masked).abs() <= 1e-12 * masked);
    }

    proptest! {
        #[test]
        fn group_ungroup_is_identity(
            blocks in 1usize..4, d in 1usize..9, cin in 1usize..4, kh in 1usize..4, kw in 1usize..4,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let shape = [blocks * d, cin, kh, kw];
            let n = shape.iter().product();
            let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1e3..1e3)).collect();
            let w = WeightTensor::new(shape, data).unwrap();
            let g = group_weights(&w, d).unwrap();
            prop_assert_eq!(g.rows(), blocks * cin * kh * kw);
            prop_assert_eq!(ungroup_weights(&g).unwrap(), w);
        }

        #[test]
        fn sse_nonnegative_and_row_permutation_invariant(
            vals in proptest::collection::vec(-10.0f64..10.0, 2 * 4 * 4),
            rot in 0usize..4,
        ) {
            let d = 4;
            let rows = 4;
            let a: Vec<Vec<f64>> = vals[..rows * d].chunks(d).map(<[f64]>::to_vec).collect();
            let b: Vec<Vec<f64>> = vals[rows * d..].chunks(d).map(<[f64]>::to_vec).collect();
            let ga = GroupedMatrix::from_rows(&a).unwrap();
            let gb = GroupedMatrix::from_rows(&b).unwrap();
            let r = sse(&ga, &gb, None).unwrap();
            prop_assert!(r.total_sse >= 0.0);
            prop_assert_eq!(sse(&ga, &ga, None).unwrap().total_sse, 0.0);
            let mut pa = a.clone();
            let mut pb = b.clone();
            pa.rotate_left(rot);
            pb.rotate_left(rot);
            let rp = sse(
                &GroupedMatrix::from_rows(&pa).unwrap(),
                &GroupedMatrix::from_rows(&pb).unwrap(),
                None,
            ).unwrap();
            prop_assert!((rp.total_sse - r.total_sse).abs() <= 1e-9 * (1.0 + r.total_sse));
        }
    }
}
