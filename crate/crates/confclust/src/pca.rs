//! Truncated PCA and pairwise compression ratios.
//!
//! The model is fit by seeded randomized subspace iteration against the
//! sample covariance of the mean-centered columns; the covariance matrix is
//! never formed. Compression ratios divide the original pairwise distance by
//! the projected one, with `+inf` as the sentinel for pairs whose projection
//! collapses (including exact duplicates).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::DataMatrix;

/// Relative threshold below which a squared distance computed from the Gram
/// expansion is rerun with the exact subtract-and-square loop; cancellation
/// makes the fast path unreliable for near-duplicates.
const NEAR_DUPLICATE_REL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceInfo {
    pub converged: bool,
    pub iterations: usize,
    /// Worst per-component residual `||C v - lambda v||` at exit.
    pub max_residual: f64,
}

/// A fitted truncated PCA basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub k_prime: usize,
    pub mean: Array1<f64>,
    /// `k' x d`, rows orthonormal, ordered by non-increasing eigenvalue.
    components: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub convergence: ConvergenceInfo,
}

impl PcaModel {
    pub fn components(&self) -> ArrayView2<'_, f64> {
        self.components.view()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    /// Sum of the retained eigenvalues.
    pub fn captured_variance(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }
}

/// Projected coordinates, `k' x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedMatrix {
    pub coords: Array2<f64>,
}

impl ProjectedMatrix {
    pub fn k_prime(&self) -> usize {
        self.coords.nrows()
    }

    pub fn n_points(&self) -> usize {
        self.coords.ncols()
    }
}

/// Compression ratios for all unordered pairs, stored once per pair in
/// row-major condensed order.
#[derive(Debug, Clone, PartialEq)]
pub struct PairScores {
    n: usize,
    k_prime: usize,
    scores: Vec<f64>,
}

#[inline]
pub(crate) fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * (2 * n - i - 1) / 2 + (j - i - 1)
}

impl PairScores {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_prime(&self) -> usize {
        self.k_prime
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Score of the unordered pair `{i, j}`; symmetric in its arguments.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i != j, "pair score requires two distinct vertices");
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.scores[condensed_index(self.n, a, b)]
    }

    pub fn raw(&self) -> &[f64] {
        &self.scores
    }

    /// Iterates `(i, j, score)` over all unordered pairs.
    pub fn iter_pairs(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |i| {
            ((i + 1)..n).map(move |j| (i, j, self.scores[condensed_index(n, i, j)]))
        })
    }

    const CACHE_MAGIC: &'static [u8; 8] = b"CCPS0001";

    /// Binary cache layout: magic, `n` and `k'` as little-endian u64, then
    /// the condensed scores as little-endian f64.
    pub fn write_cache(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(Self::CACHE_MAGIC)?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.k_prime as u64).to_le_bytes())?;
        for s in &self.scores {
            w.write_all(&s.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save_cache(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_cache(&mut w)
    }

    /// Decodes a score cache; validates magic, header, and exact length.
    pub fn from_cache_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 {
            return Err(Error::format("score cache truncated before header"));
        }
        if &bytes[..8] != Self::CACHE_MAGIC {
            return Err(Error::format("bad score cache magic"));
        }
        let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let k_prime = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let m = n
            .checked_mul(n.saturating_sub(1))
            .map(|x| x / 2)
            .ok_or_else(|| Error::format("score cache n overflows"))?;
        let expected = 24usize
            .checked_add(m.checked_mul(8).ok_or_else(|| Error::format("score cache size overflows"))?)
            .ok_or_else(|| Error::format("score cache size overflows"))?;
        if bytes.len() != expected {
            return Err(Error::format(format!(
                "score cache length {} does not match n={n} (expected {expected})",
                bytes.len()
            )));
        }
        let mut scores = Vec::with_capacity(m);
        for chunk in bytes[24..].chunks_exact(8) {
            let v = f64::from_le_bytes(chunk.try_into().unwrap());
            if v.is_nan() {
                return Err(Error::format("score cache contains NaN"));
            }
            scores.push(v);
        }
        Ok(PairScores { n, k_prime, scores })
    }

    pub fn load_cache(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_cache_bytes(&bytes)
    }
}

/// Cyclic Jacobi eigendecomposition for a small symmetric matrix. Returns
/// eigenvalues (non-increasing) and the matching eigenvectors as columns.
fn symmetric_eigen_jacobi(a: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let k = a.nrows();
    let mut m = a.clone();
    let mut v: Array2<f64> = Array2::eye(k);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..k {
            for j in (i + 1)..k {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        if off.sqrt() <= 1e-14 * (1.0 + m.diag().iter().map(|x| x.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..k {
            for q in (p + 1)..k {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for i in 0..k {
                    let (mip, miq) = (m[(i, p)], m[(i, q)]);
                    m[(i, p)] = c * mip - s * miq;
                    m[(i, q)] = s * mip + c * miq;
                }
                for i in 0..k {
                    let (mpi, mqi) = (m[(p, i)], m[(q, i)]);
                    m[(p, i)] = c * mpi - s * mqi;
                    m[(q, i)] = s * mpi + c * mqi;
                }
                for i in 0..k {
                    let (vip, viq) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * vip - s * viq;
                    v[(i, q)] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    let diag: Vec<f64> = (0..k).map(|i| m[(i, i)]).collect();
    order.sort_by(|&a, &b| diag[b].partial_cmp(&diag[a]).unwrap());
    let eigenvalues: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::zeros((k, k));
    for (new, &old) in order.iter().enumerate() {
        vectors.column_mut(new).assign(&v.column(old));
    }
    (eigenvalues, vectors)
}

/// Modified Gram-Schmidt with one reorthogonalization pass. Columns that
/// collapse are replaced by the first canonical basis vector outside the
/// current span, keeping the result a full orthonormal block.
fn orthonormalize(v: &mut Array2<f64>) {
    let (d, k) = v.dim();
    for j in 0..k {
        for _pass in 0..2 {
            for i in 0..j {
                let dot = v.column(i).dot(&v.column(j));
                let vi = v.column(i).to_owned();
                v.column_mut(j).scaled_add(-dot, &vi);
            }
        }
        let norm = v.column(j).dot(&v.column(j)).sqrt();
        if norm > 1e-12 {
            v.column_mut(j).mapv_inplace(|x| x / norm);
        } else {
            // deterministic fallback basis vector
            'candidate: for e in 0..d {
                let mut cand = Array1::zeros(d);
                cand[e] = 1.0;
                for i in 0..j {
                    let dot = v.column(i).dot(&cand);
                    cand.scaled_add(-dot, &v.column(i).to_owned());
                }
                let nrm = cand.dot(&cand).sqrt();
                if nrm > 1e-6 {
                    v.column_mut(j).assign(&(cand / nrm));
                    break 'candidate;
                }
            }
        }
    }
}

/// `C V = (1/n) A_c (A_c^T V)` without forming the covariance, where `A_c`
/// is the column-centered data.
fn covariance_apply(m: &DataMatrix, mean: &Array1<f64>, v: &Array2<f64>) -> Array2<f64> {
    let n = m.n_points() as f64;
    // w = A^T v - 1 (mean^T v)   (n x k)
    let mut w = m.matmul_tn(v);
    let mean_t_v = mean.dot(v); // k
    for mut row in w.rows_mut() {
        row -= &mean_t_v;
    }
    // u = A w - mean (1^T w)     (d x k)
    let mut u = m.matmul_nn(&w);
    let col_sums = w.sum_axis(ndarray::Axis(0)); // k
    for (mut col, s) in u.columns_mut().into_iter().zip(col_sums.iter()) {
        col.scaled_add(-s, mean);
    }
    u / n
}

/// Fits the top `k_prime` principal components by seeded randomized subspace
/// iteration with a Rayleigh-Ritz step per iteration.
///
/// Component signs are oriented so each component's largest-magnitude entry
/// is positive. Non-convergence at `max_iter` is recorded in
/// [`PcaModel::convergence`] rather than failing.
pub fn fit_pca(
    m: &DataMatrix,
    k_prime: usize,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<PcaModel> {
    let d = m.n_features();
    let n = m.n_points();
    let max_k = d.min(n.saturating_sub(1));
    if k_prime < 1 || k_prime > max_k {
        return Err(Error::invalid_parameter(format!(
            "k_prime must be in 1..={max_k} (d={d}, n={n}), got {k_prime}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid_parameter("tol must be positive"));
    }
    let mean = m.mean_vector();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array2::zeros((d, k_prime));
    for x in v.iter_mut() {
        *x = rng.sample::<f64, _>(StandardNormal);
    }
    orthonormalize(&mut v);

    let mut eigenvalues = vec![0.0; k_prime];
    let mut rotation = Array2::eye(k_prime);
    let mut converged = false;
    let mut iterations = 0;
    let mut max_residual = f64::INFINITY;

    while iterations < max_iter {
        iterations += 1;
        let cv = covariance_apply(m, &mean, &v);
        // Rayleigh-Ritz on the current subspace
        let b = v.t().dot(&cv);
        let b_sym = (&b + &b.t()) / 2.0;
        let (vals, q) = symmetric_eigen_jacobi(&b_sym);
        // residuals for the rotated Ritz pairs: C (V q_i) - lambda_i (V q_i)
        let cvq = cv.dot(&q);
        let vq = v.dot(&q);
        max_residual = 0.0;
        for i in 0..k_prime {
            let mut r = 0.0;
            for row in 0..d {
                let e = cvq[(row, i)] - vals[i] * vq[(row, i)];
                r += e * e;
            }
            max_residual = max_residual.max(r.sqrt());
        }
        eigenvalues = vals;
        rotation = q;
        let lambda1 = eigenvalues[0].max(0.0);
        if max_residual <= tol * lambda1 {
            v = vq;
            converged = true;
            break;
        }
        v = cv;
        orthonormalize(&mut v);
    }
    if !converged {
        // keep the best Ritz rotation of the last iterate
        v = v.dot(&rotation);
        orthonormalize(&mut v);
    }

    // rows of `components` are the component vectors
    let mut components = v.reversed_axes().as_standard_layout().to_owned();
    for mut row in components.rows_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, x) in row.iter().enumerate() {
            if x.abs() > best_abs {
                best_abs = x.abs();
                best = i;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|x| -x);
        }
    }
    let eigenvalues: Vec<f64> = eigenvalues.into_iter().map(|l| l.max(0.0)).collect();
    if !converged {
        log::warn!(
            "pca: subspace iteration stopped at max_iter={max_iter} with residual {max_residual:.3e}"
        );
    }
    Ok(PcaModel {
        k_prime,
        mean,
        components,
        eigenvalues,
        convergence: ConvergenceInfo {
            converged,
            iterations,
            max_residual,
        },
    })
}

/// Projects every column: `coords_j = components (x_j - mean)`.
pub fn project(model: &PcaModel, m: &DataMatrix) -> Result<ProjectedMatrix> {
    if m.n_features() != model.dim() {
        return Err(Error::DimensionMismatch {
            what: "projection input features".into(),
            expected: model.dim(),
            found: m.n_features(),
        });
    }
    // (A^T C^T)^T - C mean
    let at_ct = m.matmul_tn(&model.components.t().as_standard_layout().to_owned());
    let mut coords = at_ct.reversed_axes().as_standard_layout().to_owned();
    let offset = model.components.dot(&model.mean);
    for (mut row, off) in coords.rows_mut().into_iter().zip(offset.iter()) {
        row -= *off;
    }
    Ok(ProjectedMatrix { coords })
}

fn projected_distance_sq(p: &ProjectedMatrix, i: usize, j: usize) -> f64 {
    let (ci, cj) = (p.coords.column(i), p.coords.column(j));
    ci.iter()
        .zip(cj.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Compression ratio of one pair: original distance over projected distance.
/// Collapsed pairs (projected distance zero, or exact duplicates) map to
/// `+inf`.
pub fn compression_ratio(
    m: &DataMatrix,
    p: &ProjectedMatrix,
    i: usize,
    j: usize,
) -> Result<f64> {
    let n = m.n_points();
    if i == j {
        return Err(Error::invalid_parameter(
            "compression ratio requires two distinct points",
        ));
    }
    if i >= n || j >= n {
        return Err(Error::invalid_parameter(format!(
            "pair index out of range: ({i}, {j}) with n={n}"
        )));
    }
    if p.n_points() != n {
        return Err(Error::DimensionMismatch {
            what: "projected points".into(),
            expected: n,
            found: p.n_points(),
        });
    }
    let orig = m.pair_distance(i, j);
    let proj = projected_distance_sq(p, i, j).sqrt();
    if proj == 0.0 || orig == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(orig / proj)
    }
}

/// Scores all `n(n-1)/2` pairs. The original distances come from a blocked
/// Gram expansion with an exact recomputation for near-duplicates; projected
/// distances are computed directly. The result is independent of the
/// parallel schedule: every pair is written exactly once into pre-sized
/// storage.
pub fn all_pair_scores(m: &DataMatrix, p: &ProjectedMatrix) -> Result<PairScores> {
    let n = m.n_points();
    if p.n_points() != n {
        return Err(Error::DimensionMismatch {
            what: "projected points".into(),
            expected: n,
            found: p.n_points(),
        });
    }
    let total = n * (n - 1) / 2;
    let norms = m.column_norms_sq();
    let mut scores = vec![0.0f64; total];

    const BLOCK: usize = 256;
    // carve the condensed vector into per-block slices (contiguous by row)
    let mut slices: Vec<(usize, &mut [f64])> = Vec::new();
    {
        let mut rest: &mut [f64] = &mut scores;
        let mut i0 = 0;
        while i0 < n {
            let i1 = (i0 + BLOCK).min(n);
            let len: usize = (i0..i1).map(|i| n - i - 1).sum();
            let (head, tail) = rest.split_at_mut(len);
            slices.push((i0, head));
            rest = tail;
            i0 = i1;
        }
    }

    slices.par_iter_mut().for_each(|(i0, out)| {
        let i0 = *i0;
        let i1 = (i0 + BLOCK).min(n);
        let gram = m.gram_block(i0..i1);
        let mut pos = 0;
        for i in i0..i1 {
            let g = gram.row(i - i0);
            for j in (i + 1)..n {
                let mut d2 = norms[i] + norms[j] - 2.0 * g[j];
                if d2 < NEAR_DUPLICATE_REL * (norms[i] + norms[j]) {
                    let exact = m.pair_distance(i, j);
                    d2 = exact * exact;
                }
                let p2 = projected_distance_sq(p, i, j);
                out[pos] = if p2 == 0.0 || d2 <= 0.0 {
                    f64::INFINITY
                } else {
                    (d2 / p2).sqrt()
                };
                pos += 1;
            }
        }
    });

    Ok(PairScores {
        n,
        k_prime: p.k_prime(),
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DataMatrix;
    use ndarray::arr2;

    fn four_points() -> DataMatrix {
        // columns: (2,1), (-2,-1), (2,-1), (-2,1)
        DataMatrix::from_dense(
            arr2(&[[2.0, -2.0, 2.0, -2.0], [1.0, -1.0, -1.0, 1.0]]),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn fit_pca_recovers_dominant_axis() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        assert!(model.convergence.converged);
        assert!((model.eigenvalues[0] - 4.0).abs() < 1e-8);
        let c = model.components();
        assert!((c[(0, 0)].abs() - 1.0).abs() < 1e-8);
        assert!(c[(0, 1)].abs() < 1e-8);
        // sign convention: largest-magnitude entry positive
        assert!(c[(0, 0)] > 0.0);
    }

    #[test]
    fn fit_pca_degenerate_constant_data() {
        let m = DataMatrix::from_dense(
            arr2(&[[3.0, 3.0, 3.0], [1.0, 1.0, 1.0], [2.0, 2.0, 2.0], [0.0, 0.0, 0.0]]),
            None,
            None,
        )
        .unwrap();
        let model = fit_pca(&m, 2, 1e-8, 100, 3).unwrap();
        assert!(model.eigenvalues.iter().all(|&l| l.abs() < 1e-12));
        // returned basis is still orthonormal
        let c = model.components();
        for i in 0..2 {
            for j in 0..2 {
                let dot = c.row(i).dot(&c.row(j));
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn full_rank_projection_preserves_distances() {
        let m = DataMatrix::from_dense(
            arr2(&[
                [1.0, 2.0, 0.5, -1.0],
                [0.0, 1.0, 2.0, 1.5],
                [3.0, -1.0, 0.0, 2.0],
            ]),
            None,
            None,
        )
        .unwrap();
        let model = fit_pca(&m, 3, 1e-12, 2000, 11).unwrap();
        let p = project(&model, &m).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let orig = m.pair_distance(i, j);
                let proj = projected_distance_sq(&p, i, j).sqrt();
                assert!(
                    (orig - proj).abs() <= 1e-8 * orig.max(1.0),
                    "pair ({i},{j}): orig={orig} proj={proj}"
                );
            }
        }
    }

    #[test]
    fn projecting_mean_gives_zero() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        // the mean of these points is the origin, and (0,0) centered is 0
        let p = project(&model, &m).unwrap();
        let s: f64 = p.coords.sum();
        // columns are symmetric around the mean, their projections cancel
        assert!(s.abs() < 1e-9);
    }

    #[test]
    fn hand_computed_ratios() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        let p = project(&model, &m).unwrap();
        // projection of (2,1) onto component (1,0) is 2
        assert!((p.coords[(0, 0)] - 2.0).abs() < 1e-8);
        let r = compression_ratio(&m, &p, 0, 1).unwrap();
        assert!((r - 20f64.sqrt() / 4.0).abs() < 1e-8, "r={r}");
        // (2,1) vs (2,-1): projected distance 0
        let r = compression_ratio(&m, &p, 0, 2).unwrap();
        assert!(r.is_infinite());
    }

    #[test]
    fn in_subspace_difference_has_ratio_one() {
        // u - v lies along the first axis, which the component spans
        let m = DataMatrix::from_dense(
            arr2(&[[0.0, 4.0, 1.0, 5.0], [2.0, 2.0, 2.0, 2.0]]),
            None,
            None,
        )
        .unwrap();
        let model = fit_pca(&m, 1, 1e-10, 500, 5).unwrap();
        let p = project(&model, &m).unwrap();
        let r = compression_ratio(&m, &p, 0, 1).unwrap();
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ratio_rejects_equal_indices() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        let p = project(&model, &m).unwrap();
        assert!(matches!(
            compression_ratio(&m, &p, 1, 1),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn all_pairs_counts_and_symmetry() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        let p = project(&model, &m).unwrap();
        let s = all_pair_scores(&m, &p).unwrap();
        assert_eq!(s.len(), 6);
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(s.get(i, j).to_bits(), s.get(j, i).to_bits());
                }
            }
        }
        // matches the scalar routine
        for (i, j, v) in s.iter_pairs() {
            let direct = compression_ratio(&m, &p, i, j).unwrap();
            if v.is_finite() {
                assert!((v - direct).abs() <= 1e-9 * direct.max(1.0));
            } else {
                assert!(direct.is_infinite());
            }
        }
    }

    #[test]
    fn duplicate_columns_score_infinite() {
        let m = DataMatrix::from_dense(
            arr2(&[[1.0, 1.0, 4.0], [2.0, 2.0, -1.0]]),
            None,
            None,
        )
        .unwrap();
        let model = fit_pca(&m, 1, 1e-10, 500, 9).unwrap();
        let p = project(&model, &m).unwrap();
        let s = all_pair_scores(&m, &p).unwrap();
        assert!(s.get(0, 1).is_infinite());
        assert!(s.get(0, 2).is_finite());
    }

    #[test]
    fn determinism_bit_identical() {
        let m = DataMatrix::from_dense(
            arr2(&[
                [1.0, 2.0, 0.5, -1.0, 0.25],
                [0.0, 1.0, 2.0, 1.5, -0.75],
                [3.0, -1.0, 0.0, 2.0, 1.0],
            ]),
            None,
            None,
        )
        .unwrap();
        let a = fit_pca(&m, 2, 1e-9, 1000, 42).unwrap();
        let b = fit_pca(&m, 2, 1e-9, 1000, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let m = four_points();
        let model = fit_pca(&m, 1, 1e-10, 500, 7).unwrap();
        let p = project(&model, &m).unwrap();
        let s = all_pair_scores(&m, &p).unwrap();
        let mut buf = Vec::new();
        s.write_cache(&mut buf).unwrap();
        let s2 = PairScores::from_cache_bytes(&buf).unwrap();
        assert_eq!(s, s2);
        assert!(PairScores::from_cache_bytes(&buf[..20]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(PairScores::from_cache_bytes(&bad).is_err());
        bad = buf.clone();
        bad.push(0);
        assert!(PairScores::from_cache_bytes(&bad).is_err());
    }
}
