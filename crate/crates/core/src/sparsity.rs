//! N:M magnitude pruning within subvectors and the dense mask look-up table.
//!
//! `N:M` keeps `N` of every aligned group of `M` weights, so `4:16` is 75%
//! sparse. Each legal `M`-bit chunk mask is stored as its rank among all
//! `C(M, N)` combinations, ordered lexicographically by kept-index tuple. With
//! the first chunk element as the most significant bit, id 0 is the mask with
//! the `N` leading ones and the last id is the mask with the `N` trailing ones.

use crate::error::{Error, Result};
use crate::tensor::GroupedMatrix;

/// Binomial coefficient, `None` on `u64` overflow.
pub fn binomial(n: u64, r: u64) -> Option<u64> {
    if r > n {
        return Some(0);
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    Some(acc as u64)
}

/// Bits needed to address `count` distinct values (`0` for `count <= 1`).
pub fn ceil_log2(count: u64) -> u32 {
    if count <= 1 {
        0
    } else {
        64 - (count - 1).leading_zeros()
    }
}

/// An `N:M` pattern: `n_keep` kept weights out of every `m_group`.
///
/// `N == M` is accepted as the degenerate dense pattern (a single all-ones mask
/// that needs zero id bits).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NmPattern {
    n_keep: usize,
    m_group: usize,
}

impl NmPattern {
    pub fn new(n_keep: usize, m_group: usize) -> Result<Self> {
        if n_keep == 0 || n_keep > m_group || m_group > 64 {
            return Err(Error::InvalidPattern {
                n: n_keep,
                m: m_group,
            });
        }
        Ok(Self { n_keep, m_group })
    }

    pub fn n(&self) -> usize {
        self.n_keep
    }

    pub fn m(&self) -> usize {
        self.m_group
    }

    /// Fraction of weights removed, `(M - N) / M`.
    pub fn sparsity(&self) -> f64 {
        (self.m_group - self.n_keep) as f64 / self.m_group as f64
    }

    pub fn check_divides(&self, d: usize) -> Result<()> {
        if d == 0 || !d.is_multiple_of(self.m_group) {
            return Err(Error::DNotMultipleOfM {
                d,
                m: self.m_group,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for NmPattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.n_keep, self.m_group)
    }
}

impl std::str::FromStr for NmPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("expected N:M, got '{s}'"));
        let (n, m) = s.split_once(':').ok_or_else(bad)?;
        let n = n.trim().parse().map_err(|_| bad())?;
        let m = m.trim().parse().map_err(|_| bad())?;
        Self::new(n, m)
    }
}

/// Per-row keep bits, `rows x d`, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitmaskMatrix {
    rows: usize,
    d: usize,
    bits: Vec<bool>,
}

impl BitmaskMatrix {
    pub fn new(rows: usize, d: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != rows * d {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{d} mask needs {} bits, got {}",
                rows * d,
                bits.len()
            )));
        }
        Ok(Self { rows, d, bits })
    }

    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged mask rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn full(rows: usize, d: usize) -> Self {
        Self {
            rows,
            d,
            bits: vec![true; rows * d],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn row(&self, j: usize) -> &[bool] {
        &self.bits[j * self.d..(j + 1) * self.d]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Checks that every aligned `M`-chunk of every row holds exactly `N` ones.
    pub fn validate(&self, pattern: NmPattern) -> Result<()> {
        pattern.check_divides(self.d)?;
        for (chunk, bits) in self.bits.chunks_exact(pattern.m()).enumerate() {
            let found = bits.iter().filter(|b| **b).count();
            if found != pattern.n() {
                return Err(Error::InvalidPopcount {
                    chunk,
                    found,
                    expected: pattern.n(),
                });
            }
        }
        Ok(())
    }
}

/// A grouped matrix after N:M pruning: pruned entries are zero and the mask
/// marks the kept ones.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGroupedMatrix {
    matrix: GroupedMatrix,
    mask: BitmaskMatrix,
    pattern: NmPattern,
}

impl SparseGroupedMatrix {
    /// Pairs a matrix with a mask, zeroing entries outside the mask.
    pub fn new(mut matrix: GroupedMatrix, mask: BitmaskMatrix, pattern: NmPattern) -> Result<Self> {
        if mask.rows() != matrix.rows() || mask.d() != matrix.d() {
            return Err(Error::DimensionMismatch(format!(
                "mask {}x{} vs matrix {}x{}",
                mask.rows(),
                mask.d(),
                matrix.rows(),
                matrix.d()
            )));
        }
        mask.validate(pattern)?;
        for (v, &keep) in matrix.data_mut().iter_mut().zip(mask.bits()) {
            if !keep {
                *v = 0.0;
            }
        }
        Ok(Self {
            matrix,
            mask,
            pattern,
        })
    }

    /// Wraps a matrix with an all-ones mask (the `N == M` dense pattern over
    /// a single chunk spanning the row).
    pub fn dense(matrix: GroupedMatrix) -> Self {
        let mask = BitmaskMatrix::full(matrix.rows(), matrix.d());
        let pattern = NmPattern {
            n_keep: matrix.d(),
            m_group: matrix.d(),
        };
        Self {
            matrix,
            mask,
            pattern,
        }
    }

    /// Skips mask validation; tests use it to build degenerate inputs.
    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(
        matrix: GroupedMatrix,
        mask: BitmaskMatrix,
        pattern: NmPattern,
    ) -> Self {
        Self {
            matrix,
            mask,
            pattern,
        }
    }

    pub fn matrix(&self) -> &GroupedMatrix {
        &self.matrix
    }

    pub fn mask(&self) -> &BitmaskMatrix {
        &self.mask
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn d(&self) -> usize {
        self.matrix.d()
    }

    /// LUT ids for every row, concatenated in row order.
    pub fn lut_ids(&self) -> Vec<u64> {
        let lut = MaskLut::new(self.pattern);
        self.mask
            .bits()
            .chunks_exact(self.pattern.m())
            .map(|c| lut.encode_chunk(c).expect("mask validated at construction"))
            .collect()
    }
}

/// Prunes every aligned `M`-chunk of every row to its `N` largest-magnitude
/// entries. Ties keep the lowest index.
pub fn prune_nm(g: &GroupedMatrix, pattern: NmPattern) -> Result<SparseGroupedMatrix> {
    pattern.check_divides(g.d())?;
    let m = pattern.m();
    let mut order: Vec<usize> = Vec::with_capacity(m);
    let mut bits = vec![false; g.data().len()];
    for (chunk, out) in g.data().chunks_exact(m).zip(bits.chunks_exact_mut(m)) {
        order.clear();
        order.extend(0..m);
        // stable sort keeps the lower index first among equal magnitudes
        order.sort_by(|&a, &b| chunk[b].abs().total_cmp(&chunk[a].abs()));
        for &i in &order[..pattern.n()] {
            out[i] = true;
        }
    }
    let mask = BitmaskMatrix::new(g.rows(), g.d(), bits)?;
    SparseGroupedMatrix::new(g.clone(), mask, pattern)
}

/// Dense enumeration of the `C(M, N)` legal chunk masks.
///
/// Ranking and unranking use the combinatorial number system, so no table is
/// materialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskLut {
    pattern: NmPattern,
}

impl MaskLut {
    pub fn new(pattern: NmPattern) -> Self {
        Self { pattern }
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    /// Number of entries, `C(M, N)`.
    pub fn len(&self) -> u64 {
        binomial(self.pattern.m() as u64, self.pattern.n() as u64)
            .expect("C(M, N) fits in u64 for M <= 64")
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Width of one stored id, `ceil(log2 C(M, N))`.
    pub fn id_bits(&self) -> u32 {
        ceil_log2(self.len())
    }

    /// Mask storage cost in bits per weight.
    pub fn bits_per_weight(&self) -> f64 {
        f64::from(self.id_bits()) / self.pattern.m() as f64
    }

    pub fn encode_chunk(&self, chunk: &[bool]) -> Result<u64> {
        let (n, m) = (self.pattern.n(), self.pattern.m());
        if chunk.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "chunk of {} bits, pattern needs {m}",
                chunk.len()
            )));
        }
        let found = chunk.iter().filter(|b| **b).count();
        if found != n {
            return Err(Error::InvalidPopcount {
                chunk: 0,
                found,
                expected: n,
            });
        }
        // Count combinations that precede this one: at each kept position,
        // every smaller candidate index would have left C(m-1-x, n-1-i)
        // completions.
        let mut rank = 0u64;
        let mut next = 0usize;
        let kept = chunk.iter().enumerate().filter(|(_, b)| **b).map(|(pos, _)| pos);
        for (i, pos) in kept.enumerate() {
            for x in next..pos {
                rank += binomial((m - 1 - x) as u64, (n - 1 - i) as u64).unwrap_or(0);
            }
            next = pos + 1;
        }
        Ok(rank)
    }

    pub fn decode_chunk(&self, id: u64) -> Result<Vec<bool>> {
        let (n, m) = (self.pattern.n(), self.pattern.m());
        let count = self.len();
        if id >= count {
            return Err(Error::IdOutOfRange { id, count });
        }
        let mut out = vec![false; m];
        let mut rest = id;
        let mut x = 0usize;
        for i in 0..n {
            loop {
                let block = binomial((m - 1 - x) as u64, (n - 1 - i) as u64).unwrap_or(0);
                if rest < block {
                    break;
                }
                rest -= block;
                x += 1;
            }
            out[x] = true;
            x += 1;
        }
        Ok(out)
    }

    /// All entries in id order.
    pub fn entries(&self) -> impl Iterator<Item = Vec<bool>> + '_ {
        (0..self.len()).map(|id| self.decode_chunk(id).expect("id in range"))
    }
}

/// Encodes one mask row (length a multiple of `M`) as one id per `M`-chunk.
pub fn mask_to_lut_ids(mask_row: &[bool], pattern: NmPattern) -> Result<Vec<u64>> {
    pattern.check_divides(mask_row.len())?;
    let lut = MaskLut::new(pattern);
    mask_row
        .chunks_exact(pattern.m())
        .enumerate()
        .map(|(c, bits)| {
            lut.encode_chunk(bits).map_err(|e| match e {
                Error::InvalidPopcount {
                    found, expected, ..
                } => Error::InvalidPopcount {
                    chunk: c,
                    found,
                    expected,
                },
                other => other,
            })
        })
        .collect()
}

/// Inverse of [`mask_to_lut_ids`] for a row of length `d`.
pub fn lut_ids_to_mask(ids: &[u64], pattern: NmPattern, d: usize) -> Result<Vec<bool>> {
    pattern.check_divides(d)?;
    if ids.len() != d / pattern.m() {
        return Err(Error::DimensionMismatch(format!(
            "{} ids for a row of {d} with M={}",
            ids.len(),
            pattern.m()
        )));
    }
    let lut = MaskLut::new(pattern);
    let mut out = Vec::with_capacity(d);
    for &id in ids {
        out.extend(lut.decode_chunk(id)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn p(n: usize, m: usize) -> NmPattern {
        NmPattern::new(n, m).unwrap()
    }

    fn one_row(v: &[f64]) -> GroupedMatrix {
        GroupedMatrix::from_rows(&[v.to_vec()]).unwrap()
    }

    #[test]
    fn keeps_top_magnitudes() {
        let s = prune_nm(&one_row(&[0.5, -2.0, 1.0, -0.1]), p(2, 4)).unwrap();
        assert_eq!(s.mask().row(0), &[false, true, true, false]);
        assert_eq!(s.matrix().row(0), &[0.0, -2.0, 1.0, 0.0]);
    }

    #[test]
    fn ties_keep_lowest_index() {
        let s = prune_nm(&one_row(&[1.0; 4]), p(2, 4)).unwrap();
        assert_eq!(s.mask().row(0), &[true, true, false, false]);
        let s = prune_nm(&one_row(&[0.0; 4]), p(2, 4)).unwrap();
        assert_eq!(s.mask().row(0), &[true, true, false, false]);
    }

    #[test]
    fn rejects_d_not_multiple_of_m() {
        let g = one_row(&[1.0; 6]);
        assert_eq!(
            prune_nm(&g, p(2, 4)).unwrap_err(),
            Error::DNotMultipleOfM { d: 6, m: 4 }
        );
    }

    #[test]
    fn pattern_validation() {
        assert!(NmPattern::new(0, 4).is_err());
        assert!(NmPattern::new(5, 4).is_err());
        assert!(NmPattern::new(4, 4).is_ok());
        assert_eq!("4:16".parse::<NmPattern>().unwrap(), p(4, 16));
        assert!("4-16".parse::<NmPattern>().is_err());
    }

    #[test]
    fn random_prune_matches_sort_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (rows, d) = (1000, 16);
        let data: Vec<f64> = (0..rows * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = GroupedMatrix::from_flat(rows, d, data.clone()).unwrap();
        let s = prune_nm(&g, p(4, 16)).unwrap();
        for (j, chunk) in data.chunks_exact(16).enumerate() {
            let mut idx: Vec<usize> = (0..16).collect();
            // full sort by (|v| desc, index asc)
            idx.sort_by(|&a, &b| {
                chunk[b]
                    .abs()
                    .partial_cmp(&chunk[a].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut expect = [false; 16];
            for &i in &idx[..4] {
                expect[i] = true;
            }
            assert_eq!(s.mask().row(j), &expect);
            assert_eq!(s.mask().row(j).iter().filter(|b| **b).count(), 4);
        }
    }

    #[test]
    fn lut_small_examples() {
        let lut = MaskLut::new(p(1, 2));
        assert_eq!(lut.encode_chunk(&[true, false]).unwrap(), 0);
        assert_eq!(lut.encode_chunk(&[false, true]).unwrap(), 1);
        assert_eq!(lut.decode_chunk(0).unwrap(), vec![true, false]);
        assert_eq!(lut.bits_per_weight(), 0.5);
        let lut24 = MaskLut::new(p(2, 4));
        assert_eq!(lut24.len(), 6);
        assert_eq!(lut24.id_bits(), 3);
        assert_eq!(lut24.bits_per_weight(), 0.75);
        let lut416 = MaskLut::new(p(4, 16));
        assert_eq!(lut416.len(), 1820);
        assert_eq!(lut416.id_bits(), 11);
        assert_eq!(lut416.bits_per_weight(), 0.6875);
        let mut last = vec![false; 16];
        last[12..].fill(true);
        assert_eq!(lut416.decode_chunk(1819).unwrap(), last);
        assert_eq!(
            lut416.decode_chunk(1820),
            Err(Error::IdOutOfRange { id: 1820, count: 1820 })
        );
    }

    #[test]
    fn lut_matches_lexicographic_enumeration() {
        for (n, m) in [(1, 2), (2, 4), (4, 16), (3, 8)] {
            // oracle: all m-bit masks with n ones, ordered by kept-index tuple
            let mut tuples: Vec<Vec<usize>> = (0u32..1 << m)
                .filter(|x| x.count_ones() as usize == n)
                .map(|x| (0..m).filter(|i| x >> i & 1 == 1).collect())
                .collect();
            tuples.sort();
            let lut = MaskLut::new(p(n, m));
            assert_eq!(lut.len() as usize, tuples.len());
            for (id, t) in tuples.iter().enumerate() {
                let mut bits = vec![false; m];
                t.iter().for_each(|&i| bits[i] = true);
                assert_eq!(lut.encode_chunk(&bits).unwrap(), id as u64);
                assert_eq!(lut.decode_chunk(id as u64).unwrap(), bits);
            }
        }
    }

    #[test]
    fn row_ids_report_bad_chunk() {
        let mut row = vec![true, true, false, false, true, false, false, false];
        assert_eq!(
            mask_to_lut_ids(&row, p(2, 4)).unwrap_err(),
            Error::InvalidPopcount {
                chunk: 1,
                found: 1,
                expected: 2
            }
        );
        row[7] = true;
        let ids = mask_to_lut_ids(&row, p(2, 4)).unwrap();
        assert_eq!(lut_ids_to_mask(&ids, p(2, 4), 8).unwrap(), row);
        assert!(matches!(
            lut_ids_to_mask(&[6, 0], p(2, 4), 8),
            Err(Error::IdOutOfRange { .. })
        ));
    }

    #[test]
    fn binomial_and_log2() {
        assert_eq!(binomial(16, 4), Some(1820));
        assert_eq!(binomial(64, 32), Some(1_832_624_140_942_590_534));
        assert_eq!(binomial(3, 5), Some(0));
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(6), 3);
        assert_eq!(ceil_log2(512), 9);
        assert_eq!(ceil_log2(513), 10);
    }

    proptest! {
        #[test]
        fn pruning_invariants(
            vals in proptest::collection::vec(-5.0f64..5.0, 32),
            pat in prop_oneof![Just((1usize, 2usize)), Just((2, 4)), Just((4, 16)), Just((3, 8))],
        ) {
            let pattern = p(pat.0, pat.1);
            let g = GroupedMatrix::from_flat(2, 16, vals.clone()).unwrap();
            let s = prune_nm(&g, pattern).unwrap();
            // exact sparsity by count
            prop_assert_eq!(s.mask().count_ones(), 32 * pattern.n() / pattern.m());
            // magnitude dominance
            for (chunk, bits) in vals.chunks_exact(pattern.m()).zip(s.mask().bits().chunks_exact(pattern.m())) {
                let kept_min = chunk.iter().zip(bits).filter(|(_, b)| **b).map(|(v, _)| v.abs()).fold(f64::INFINITY, f64::min);
                let drop_max = chunk.iter().zip(bits).filter(|(_, b)| !**b).map(|(v, _)| v.abs()).fold(0.0, f64::max);
                prop_assert!(kept_min >= drop_max);
            }
            // idempotence
            let again = prune_nm(s.matrix(), pattern).unwrap();
            prop_assert_eq!(&again, &s);
        }
    }
}
