//! Similarity scores, second-moment matrices, and the variance-alignment
//! quadratic form.
//!
//! All operations are pure functions over immutable inputs. The heavy scans
//! walk rows in fixed [`CHUNK_ROWS`]-sized chunks and combine per-chunk
//! results in chunk order, so a parallel driver that farms out the same
//! chunks produces bit-identical output to the sequential path.

mod kernels;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::embed::{EmbeddingMatrix, Modality, PairedEmbeddings};
use crate::error::Error;
use crate::linalg::Mat;
use crate::Result;

pub use kernels::{active_kernel, RowSel};

/// Fixed row-chunk size for all scans; independent of worker count.
pub const CHUNK_ROWS: usize = 4096;

/// What a score vector measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    ClipScore,
    Vas,
    AOptLeverage,
    VOptLeverage,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::ClipScore => "clip_score",
            ScoreKind::Vas => "vas",
            ScoreKind::AOptLeverage => "a_opt_leverage",
            ScoreKind::VOptLeverage => "v_opt_leverage",
        }
    }
}

/// Per-sample scalar scores aligned to an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    scores: Vec<f64>,
    kind: ScoreKind,
    source_n: usize,
}

impl ScoreVector {
    pub fn new(scores: Vec<f64>, kind: ScoreKind) -> Result<Self> {
        if let Some(i) = scores.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteScore(i));
        }
        let source_n = scores.len();
        Ok(ScoreVector { scores, kind, source_n })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub fn kind(&self) -> ScoreKind {
        self.kind
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }
}

/// Dense `d x d` second-moment (or cross-moment) matrix in `f64`.
///
/// Uncentered: the mean is never subtracted, matching the scoring
/// definition the selection pipelines rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMatrix {
    entries: Mat,
    count: u64,
    modality_left: Modality,
    modality_right: Modality,
    label: String,
}

impl MomentMatrix {
    pub fn new(
        entries: Mat,
        count: u64,
        modality_left: Modality,
        modality_right: Modality,
        label: String,
    ) -> Result<Self> {
        if entries.rows() != entries.cols() || entries.rows() == 0 {
            return Err(Error::InvalidShape("moment matrix must be square and non-empty".into()));
        }
        if count == 0 {
            return Err(Error::InvalidShape("moment count must be >= 1".into()));
        }
        Ok(MomentMatrix { entries, count, modality_left, modality_right, label })
    }

    pub fn identity(d: usize, modality: Modality) -> Self {
        MomentMatrix {
            entries: Mat::identity(d),
            count: 1,
            modality_left: modality,
            modality_right: modality,
            label: String::from("identity"),
        }
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.entries.rows()
    }

    #[inline]
    pub fn entries(&self) -> &Mat {
        &self.entries
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn modality_left(&self) -> Modality {
        self.modality_left
    }

    pub fn modality_right(&self) -> Modality {
        self.modality_right
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = String::from(label);
        self
    }
}

/// Diagonal cosine similarities of a paired view: `scores[i] = <v_i, l_i>`.
///
/// Both sides must be normalized; the result then lives in `[-1, 1]` up to
/// float32 rounding.
pub fn clip_scores(pairs: &PairedEmbeddings<'_>) -> Result<ScoreVector> {
    if !pairs.vision().is_normalized() {
        return Err(Error::NormalizationRequired("vision"));
    }
    if !pairs.language().is_normalized() {
        return Err(Error::NormalizationRequired("language"));
    }
    let n = pairs.n();
    let mut out = vec![0.0f64; n];
    for start in (0..n).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(n);
        clip_scores_chunk(pairs.vision(), pairs.language(), start..end, &mut out[start..end]);
    }
    ScoreVector::new(out, ScoreKind::ClipScore)
}

/// Chunk kernel behind [`clip_scores`]; exposed for parallel drivers.
pub fn clip_scores_chunk(
    vision: &EmbeddingMatrix,
    language: &EmbeddingMatrix,
    rows: core::ops::Range<usize>,
    out: &mut [f64],
) {
    debug_assert_eq!(rows.len(), out.len());
    for (slot, i) in rows.enumerate() {
        let v = vision.row(i);
        let l = language.row(i);
        out[slot] = v.iter().zip(l.iter()).map(|(&a, &b)| a as f64 * b as f64).sum();
    }
}

/// Accumulate `sum_i a_i b_i^T` over a row range into `acc` (f64, unnormalized).
pub fn moment_chunk(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    rows: core::ops::Range<usize>,
    acc: &mut Mat,
) {
    let d = acc.cols();
    debug_assert_eq!(acc.rows(), a.d());
    debug_assert_eq!(acc.cols(), b.d());
    for i in rows {
        let ar = a.row(i);
        let br = b.row(i);
        for (j, &aj) in ar.iter().enumerate() {
            let s = aj as f64;
            if s == 0.0 {
                continue;
            }
            let dst = &mut acc.data_mut()[j * d..(j + 1) * d];
            for (dv, &bv) in dst.iter_mut().zip(br.iter()) {
                *dv += s * bv as f64;
            }
        }
    }
}

/// Unnormalized sum of outer products over the whole matrix pair, chunked.
pub fn outer_product_sum(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<Mat> {
    if a.n() != b.n() {
        return Err(Error::LengthMismatch { left: a.n(), right: b.n() });
    }
    let mut total = Mat::zeros(a.d(), b.d());
    let mut partial = Mat::zeros(a.d(), b.d());
    for start in (0..a.n()).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(a.n());
        partial.data_mut().fill(0.0);
        moment_chunk(a, b, start..end, &mut partial);
        total.add_scaled(&partial, 1.0);
    }
    Ok(total)
}

/// Same-modality second moment `(1/n) sum_i a_i a_i^T`, symmetrized as
/// `(M + M^T) / 2` to make the result exactly symmetric.
pub fn second_moment(a: &EmbeddingMatrix) -> MomentMatrix {
    let sum = outer_product_sum(a, a).expect("same matrix cannot mismatch");
    let mut entries = symmetrize(&sum);
    entries.scale(1.0 / a.n() as f64);
    MomentMatrix {
        entries,
        count: a.n() as u64,
        modality_left: a.modality(),
        modality_right: a.modality(),
        label: String::new(),
    }
}

/// Cross-modal second moment `(1/n) sum_i a_i b_i^T`. Not symmetrized.
pub fn cross_second_moment(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Result<MomentMatrix> {
    if a.d() != b.d() {
        return Err(Error::DimMismatch { left: a.d(), right: b.d() });
    }
    let mut entries = outer_product_sum(a, b)?;
    entries.scale(1.0 / a.n() as f64);
    MomentMatrix::new(
        entries,
        a.n() as u64,
        a.modality(),
        b.modality(),
        String::new(),
    )
}

pub(crate) fn symmetrize(m: &Mat) -> Mat {
    let n = m.rows();
    let mut out = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            out.set(r, c, 0.5 * (m.get(r, c) + m.get(c, r)));
        }
    }
    out
}

/// Variance-alignment scores: `scores[i] = a_i^T * sigma * b_i`.
///
/// Pass the same matrix twice for the single-modality form.
pub fn vas_scores(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    sigma: &MomentMatrix,
) -> Result<ScoreVector> {
    if a.d() != b.d() {
        return Err(Error::DimMismatch { left: a.d(), right: b.d() });
    }
    if a.d() != sigma.d() {
        return Err(Error::DimMismatch { left: a.d(), right: sigma.d() });
    }
    if a.n() != b.n() {
        return Err(Error::LengthMismatch { left: a.n(), right: b.n() });
    }
    let n = a.n();
    let mut out = vec![0.0f64; n];
    for start in (0..n).step_by(CHUNK_ROWS) {
        let end = (start + CHUNK_ROWS).min(n);
        vas_scores_chunk(a, b, sigma.entries(), start..end, &mut out[start..end]);
    }
    ScoreVector::new(out, ScoreKind::Vas)
}

/// Chunk kernel behind [`vas_scores`]; exposed for parallel drivers.
pub fn vas_scores_chunk(
    a: &EmbeddingMatrix,
    b: &EmbeddingMatrix,
    sigma: &Mat,
    rows: core::ops::Range<usize>,
    out: &mut [f64],
) {
    debug_assert_eq!(rows.len(), out.len());
    kernels::quad_form_scores(
        a.data(),
        b.data(),
        a.d(),
        sigma.data(),
        RowSel::Range(rows.start),
        out,
    );
}

/// Quadratic-form scores for an explicit subset of rows of one matrix
/// against a raw (typically sum-of-outer-products) moment.
pub fn vas_subset_chunk(
    emb: &EmbeddingMatrix,
    subset: &[usize],
    sigma: &Mat,
    out: &mut [f64],
) {
    debug_assert_eq!(subset.len(), out.len());
    kernels::quad_form_scores(
        emb.data(),
        emb.data(),
        emb.d(),
        sigma.data(),
        RowSel::Subset(subset),
        out,
    );
}

/// Joint histogram of two score vectors plus per-axis summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    pub bins: usize,
    /// Row-major `bins x bins` counts: index `[x_bin * bins + y_bin]`.
    pub counts: Vec<u64>,
    pub x: AxisStats,
    pub y: AxisStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
}

fn axis_stats(values: &[f64]) -> AxisStats {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let quantile = |p: f64| -> f64 {
        if n == 1 {
            return sorted[0];
        }
        let pos = p * (n - 1) as f64;
        let lo = pos as usize;
        let hi = (lo + 1).min(n - 1);
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    };
    AxisStats {
        min: sorted[0],
        max: sorted[n - 1],
        mean: values.iter().sum::<f64>() / n as f64,
        q25: quantile(0.25),
        q50: quantile(0.5),
        q75: quantile(0.75),
    }
}

#[inline]
fn bin_of(v: f64, min: f64, max: f64, bins: usize) -> usize {
    if max <= min {
        return 0;
    }
    let idx = ((v - min) / (max - min) * bins as f64) as usize;
    idx.min(bins - 1)
}

/// Bin two aligned score vectors into a `bins x bins` table.
pub fn score_stats(a: &ScoreVector, b: &ScoreVector, bins: usize) -> Result<JointHistogram> {
    if bins == 0 {
        return Err(Error::BadBinCount);
    }
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let x = axis_stats(a.values());
    let y = axis_stats(b.values());
    let mut counts = vec![0u64; bins * bins];
    for (&xv, &yv) in a.values().iter().zip(b.values().iter()) {
        let bx = bin_of(xv, x.min, x.max, bins);
        let by = bin_of(yv, y.min, y.max, bins);
        counts[bx * bins + by] += 1;
    }
    Ok(JointHistogram { bins, counts, x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::align_pairs;
    use crate::linalg::sym_eigenvalues;
    use crate::rng::DetRng;

    fn matrix(d: usize, rows: &[&[f32]], normalized: bool) -> EmbeddingMatrix {
        let mut data = Vec::new();
        for r in rows {
            data.extend_from_slice(r);
        }
        EmbeddingMatrix::new(d, data, None, Modality::Vision, normalized).unwrap()
    }

    fn random_matrix(rng: &mut DetRng, n: usize, d: usize, normalized: bool) -> EmbeddingMatrix {
        let data: Vec<f32> = (0..n * d).map(|_| rng.normal_f64() as f32).collect();
        let mut m = EmbeddingMatrix::new(d, data, None, Modality::Vision, false).unwrap();
        if normalized {
            m.renormalize().unwrap();
        }
        m
    }

    #[test]
    fn clip_scores_basic_geometry() {
        let v = matrix(2, &[&[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]], true);
        let l = matrix(2, &[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]], true);
        let pairs = align_pairs(&v, &l).unwrap();
        let s = clip_scores(&pairs).unwrap();
        assert_eq!(s.kind(), ScoreKind::ClipScore);
        assert_eq!(s.values(), &[1.0, 0.0, -1.0]);
    }

    #[test]
    fn clip_scores_requires_normalized() {
        let v = matrix(2, &[&[2.0, 0.0]], false);
        let l = matrix(2, &[&[1.0, 0.0]], true);
        let pairs = align_pairs(&v, &l).unwrap();
        assert!(matches!(clip_scores(&pairs), Err(Error::NormalizationRequired("vision"))));
    }

    #[test]
    fn second_moment_single_axis() {
        let m = matrix(3, &[&[1.0, 0.0, 0.0]], true);
        let mom = second_moment(&m);
        assert_eq!(mom.entries().get(0, 0), 1.0);
        assert_eq!(mom.entries().get(1, 1), 0.0);
        assert_eq!(mom.count(), 1);

        let two = matrix(2, &[&[1.0, 0.0], &[0.0, 1.0]], true);
        let mom2 = second_moment(&two);
        assert_eq!(mom2.entries().get(0, 0), 0.5);
        assert_eq!(mom2.entries().get(1, 1), 0.5);
        assert_eq!(mom2.entries().get(0, 1), 0.0);
    }

    #[test]
    fn second_moment_trace_is_mean_square_norm() {
        let mut rng = DetRng::new(12);
        let m = random_matrix(&mut rng, 200, 16, true);
        let mom = second_moment(&m);
        assert!((mom.entries().trace() - 1.0).abs() < 1e-6);
        // exactly symmetric and PSD within tolerance
        assert_eq!(mom.entries().max_asymmetry(), 0.0);
        let eig = sym_eigenvalues(mom.entries());
        assert!(eig[eig.len() - 1] >= -1e-8);
    }

    #[test]
    fn cross_moment_not_symmetrized() {
        let mut rng = DetRng::new(13);
        let a = random_matrix(&mut rng, 50, 8, true);
        let b = random_matrix(&mut rng, 50, 8, true);
        let mom = cross_second_moment(&a, &b).unwrap();
        assert!(mom.entries().max_asymmetry() > 1e-6);
    }

    #[test]
    fn vas_identity_prior_gives_unit_scores() {
        let mut rng = DetRng::new(14);
        let m = random_matrix(&mut rng, 40, 8, true);
        let sigma = MomentMatrix::identity(8, Modality::Vision);
        let s = vas_scores(&m, &m, &sigma).unwrap();
        for &v in s.values() {
            assert!((v - 1.0).abs() < 1e-6, "score {v}");
        }
    }

    #[test]
    fn vas_diag_prior_analytic() {
        let m = matrix(2, &[&[1.0, 0.0]], true);
        let sigma = MomentMatrix::new(
            Mat::from_vec(2, 2, alloc::vec![0.8, 0.0, 0.0, 0.2]),
            1,
            Modality::Vision,
            Modality::Vision,
            String::new(),
        )
        .unwrap();
        let s = vas_scores(&m, &m, &sigma).unwrap();
        assert!((s.values()[0] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn vas_linearity_in_sigma() {
        let mut rng = DetRng::new(15);
        let a = random_matrix(&mut rng, 30, 6, true);
        let b = random_matrix(&mut rng, 30, 6, true);
        let s1 = second_moment(&random_matrix(&mut rng, 25, 6, true));
        let s2 = second_moment(&random_matrix(&mut rng, 25, 6, true));
        let (alpha, beta) = (0.7, -1.3);
        let mut combo = s1.entries().clone();
        combo.scale(alpha);
        combo.add_scaled(s2.entries(), beta);
        let sigma = MomentMatrix::new(
            combo,
            1,
            Modality::Vision,
            Modality::Vision,
            String::new(),
        )
        .unwrap();
        let sc = vas_scores(&a, &b, &sigma).unwrap();
        let sa = vas_scores(&a, &b, &s1).unwrap();
        let sb = vas_scores(&a, &b, &s2).unwrap();
        for i in 0..30 {
            let want = alpha * sa.values()[i] + beta * sb.values()[i];
            let rel = (sc.values()[i] - want).abs() / want.abs().max(1e-12);
            assert!(rel < 1e-9);
        }
    }

    #[test]
    fn vas_ranking_scale_invariant() {
        let mut rng = DetRng::new(16);
        let a = random_matrix(&mut rng, 60, 5, true);
        let sigma = second_moment(&random_matrix(&mut rng, 40, 5, true));
        let scaled = MomentMatrix::new(
            {
                let mut m = sigma.entries().clone();
                m.scale(37.5);
                m
            },
            1,
            Modality::Vision,
            Modality::Vision,
            String::new(),
        )
        .unwrap();
        let s1 = vas_scores(&a, &a, &sigma).unwrap();
        let s2 = vas_scores(&a, &a, &scaled).unwrap();
        let order = |s: &ScoreVector| {
            let mut idx: Vec<usize> = (0..s.len()).collect();
            idx.sort_by(|&i, &j| s.values()[j].partial_cmp(&s.values()[i]).unwrap().then(i.cmp(&j)));
            idx
        };
        assert_eq!(order(&s1), order(&s2));
    }

    #[test]
    fn histogram_counts_conserved() {
        let a = ScoreVector::new(alloc::vec![0.5], ScoreKind::Vas).unwrap();
        let b = ScoreVector::new(alloc::vec![0.9], ScoreKind::ClipScore).unwrap();
        let h = score_stats(&a, &b, 4).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);

        let mut rng = DetRng::new(17);
        let vals: Vec<f64> = (0..500).map(|_| rng.normal_f64()).collect();
        let a = ScoreVector::new(vals.clone(), ScoreKind::Vas).unwrap();
        let b = ScoreVector::new(vals, ScoreKind::Vas).unwrap();
        let h = score_stats(&a, &b, 10).unwrap();
        assert_eq!(h.counts.iter().sum::<u64>(), 500);
        // identical vectors put all mass on the diagonal
        for x in 0..10 {
            for y in 0..10 {
                if x != y {
                    assert_eq!(h.counts[x * 10 + y], 0);
                }
            }
        }
    }

    #[test]
    fn score_vector_rejects_non_finite() {
        assert!(matches!(
            ScoreVector::new(alloc::vec![0.0, f64::NAN], ScoreKind::Vas),
            Err(Error::NonFiniteScore(1))
        ));
    }
}
