//! Embedding matrices and paired image/text views.

use alloc::format;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Which encoder produced an embedding matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Modality {
    Vision,
    Language,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Vision => "vision",
            Modality::Language => "language",
        }
    }
}

/// Allowed deviation from unit norm for rows of a normalized matrix.
pub const NORM_BAND: f64 = 1e-3;
/// Rows below this norm cannot be renormalized.
pub const ZERO_NORM_FLOOR: f64 = 1e-12;

/// Dense row-major `n x d` matrix of `f32` embeddings for one modality.
///
/// Immutable after construction; loaders renormalize before building the
/// matrix when callers require unit rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    d: usize,
    data: Vec<f32>,
    ids: Option<Vec<u64>>,
    modality: Modality,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Build and validate a matrix. `data` is row-major with `n = data.len() / d`.
    pub fn new(
        d: usize,
        data: Vec<f32>,
        ids: Option<Vec<u64>>,
        modality: Modality,
        normalized: bool,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidShape("d must be >= 1".into()));
        }
        if data.is_empty() || data.len() % d != 0 {
            return Err(Error::InvalidShape(format!(
                "data length {} is not a positive multiple of d={d}",
                data.len()
            )));
        }
        let n = data.len() / d;
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(Error::IdCountMismatch { expected: n, found: ids.len() });
            }
            let mut sorted = ids.clone();
            sorted.sort_unstable();
            for w in sorted.windows(2) {
                if w[0] == w[1] {
                    return Err(Error::DuplicateId(w[0]));
                }
            }
        }
        let m = EmbeddingMatrix { d, data, ids, modality, normalized };
        if normalized {
            if let Some((row, norm)) = m.first_row_outside_norm_band() {
                return Err(Error::NotNormalized { row, norm });
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> Option<&[u64]> {
        self.ids.as_deref()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Euclidean norm of row `i`, accumulated in f64.
    pub fn row_norm(&self, i: usize) -> f64 {
        libm::sqrt(self.row(i).iter().map(|&v| v as f64 * v as f64).sum())
    }

    fn first_row_outside_norm_band(&self) -> Option<(usize, f64)> {
        for i in 0..self.n() {
            let norm = self.row_norm(i);
            if (norm - 1.0).abs() > NORM_BAND {
                return Some((i, norm));
            }
        }
        None
    }

    /// Scale every row to unit norm. Two passes per row: the norm is
    /// accumulated in f64, then each entry is divided in f64 and stored back
    /// as f32. Rows with norm below [`ZERO_NORM_FLOOR`] are an error.
    pub fn renormalize(&mut self) -> Result<()> {
        let d = self.d;
        for i in 0..self.n() {
            let norm = self.row_norm(i);
            if norm < ZERO_NORM_FLOOR {
                return Err(Error::ZeroNormRow(i));
            }
            let inv = 1.0 / norm;
            for v in &mut self.data[i * d..(i + 1) * d] {
                *v = (*v as f64 * inv) as f32;
            }
        }
        self.normalized = true;
        Ok(())
    }

    /// Gather the given rows (ascending indices expected) into a new matrix.
    pub fn gather(&self, rows: &[usize]) -> Result<EmbeddingMatrix> {
        if rows.is_empty() {
            return Err(Error::InvalidShape("gather of zero rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &r in rows {
            if r >= self.n() {
                return Err(Error::InvalidShape(format!("row {r} out of range")));
            }
            data.extend_from_slice(self.row(r));
        }
        let ids = self.ids.as_ref().map(|ids| rows.iter().map(|&r| ids[r]).collect());
        EmbeddingMatrix::new(self.d, data, ids, self.modality, self.normalized)
    }
}

/// Read-only paired view over two aligned matrices: row `i` of each side is
/// pair `i`.
#[derive(Debug, Clone, Copy)]
pub struct PairedEmbeddings<'a> {
    vision: &'a EmbeddingMatrix,
    language: &'a EmbeddingMatrix,
}

impl<'a> PairedEmbeddings<'a> {
    pub fn vision(&self) -> &'a EmbeddingMatrix {
        self.vision
    }

    pub fn language(&self) -> &'a EmbeddingMatrix {
        self.language
    }

    pub fn n(&self) -> usize {
        self.vision.n()
    }

    pub fn pair(&self, i: usize) -> (&'a [f32], &'a [f32]) {
        (self.vision.row(i), self.language.row(i))
    }
}

/// Pair two matrices sample-by-sample, checking counts and (when both sides
/// carry them) ids.
pub fn align_pairs<'a>(
    vision: &'a EmbeddingMatrix,
    language: &'a EmbeddingMatrix,
) -> Result<PairedEmbeddings<'a>> {
    if vision.n() != language.n() {
        return Err(Error::LengthMismatch { left: vision.n(), right: language.n() });
    }
    if let (Some(vi), Some(li)) = (vision.ids(), language.ids()) {
        for (pos, (a, b)) in vi.iter().zip(li.iter()).enumerate() {
            if a != b {
                return Err(Error::IdMismatch(pos));
            }
        }
    }
    Ok(PairedEmbeddings { vision, language })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_rows(d: usize, rows: &[&[f32]]) -> EmbeddingMatrix {
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(r);
        }
        EmbeddingMatrix::new(d, data, None, Modality::Vision, true).unwrap()
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![], None, Modality::Vision, false),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(2, vec![1.0, 2.0, 3.0], None, Modality::Vision, false),
            Err(Error::InvalidShape(_))
        ));
        assert!(matches!(
            EmbeddingMatrix::new(0, vec![1.0], None, Modality::Vision, false),
            Err(Error::InvalidShape(_))
        ));
    }

    #[test]
    fn rejects_bad_ids() {
        let data = vec![1.0f32, 0.0, 0.0, 1.0];
        assert!(matches!(
            EmbeddingMatrix::new(2, data.clone(), Some(vec![1]), Modality::Vision, false),
            Err(Error::IdCountMismatch { expected: 2, found: 1 })
        ));
        assert!(matches!(
            EmbeddingMatrix::new(2, data, Some(vec![7, 7]), Modality::Vision, false),
            Err(Error::DuplicateId(7))
        ));
    }

    #[test]
    fn normalized_flag_is_checked() {
        let err = EmbeddingMatrix::new(2, vec![3.0, 4.0], None, Modality::Vision, true);
        assert!(matches!(err, Err(Error::NotNormalized { row: 0, .. })));
    }

    #[test]
    fn renormalize_scales_rows() {
        let mut m =
            EmbeddingMatrix::new(3, vec![3.0, 0.0, 4.0], None, Modality::Vision, false).unwrap();
        m.renormalize().unwrap();
        let r = m.row(0);
        assert!((r[0] - 0.6).abs() < 1e-7);
        assert_eq!(r[1], 0.0);
        assert!((r[2] - 0.8).abs() < 1e-7);
        assert!(m.is_normalized());
    }

    #[test]
    fn renormalize_rejects_zero_row() {
        let mut m =
            EmbeddingMatrix::new(2, vec![0.0, 0.0, 1.0, 0.0], None, Modality::Vision, false)
                .unwrap();
        assert_eq!(m.renormalize(), Err(Error::ZeroNormRow(0)));
    }

    #[test]
    fn renormalize_is_idempotent() {
        let mut m = EmbeddingMatrix::new(
            2,
            vec![0.3, -1.7, 2.5, 0.01, -0.4, -0.9],
            None,
            Modality::Vision,
            false,
        )
        .unwrap();
        m.renormalize().unwrap();
        let first = m.data().to_vec();
        m.renormalize().unwrap();
        for (a, b) in first.iter().zip(m.data().iter()) {
            let rel = (a - b).abs() / a.abs().max(1e-30);
            assert!(rel < 1e-7, "renormalization drifted: {a} -> {b}");
        }
    }

    #[test]
    fn align_checks_lengths_and_ids() {
        let v = unit_rows(2, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        let l4 = unit_rows(2, &[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]]);
        assert!(matches!(
            align_pairs(&v, &l4),
            Err(Error::LengthMismatch { left: 3, right: 4 })
        ));

        let with_ids = |ids: Vec<u64>| {
            EmbeddingMatrix::new(
                2,
                vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
                Some(ids),
                Modality::Language,
                true,
            )
            .unwrap()
        };
        let a = with_ids(vec![1, 2, 3]);
        let b = with_ids(vec![1, 3, 2]);
        assert!(matches!(align_pairs(&a, &b), Err(Error::IdMismatch(1))));
        let c = with_ids(vec![1, 2, 3]);
        let pairs = align_pairs(&a, &c).unwrap();
        assert_eq!(pairs.n(), 3);
    }

    #[test]
    fn gather_selects_rows_and_ids() {
        let m = EmbeddingMatrix::new(
            2,
            vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0],
            Some(vec![10, 11, 12]),
            Modality::Vision,
            true,
        )
        .unwrap();
        let g = m.gather(&[0, 2]).unwrap();
        assert_eq!(g.n(), 2);
        assert_eq!(g.row(1), &[-1.0, 0.0]);
        assert_eq!(g.ids().unwrap(), &[10, 12]);
    }
}
