//! Fundamental-matrix estimation and relative-pose recovery.

use nalgebra::{DMatrix, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::plucker::{triangulate, PlueckerRay};
use super::{Extrinsics, GeometryError, Intrinsics, Pixel};

/// Pixel correspondence `(x in view A, x' in view B)`.
pub type Correspondence = (Pixel, Pixel);

/// Relative margin between the best and second-best cheirality counts.
pub const CHEIRALITY_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Sampson-distance inlier threshold in pixels.
    pub threshold_px: f64,
    pub min_inlier_ratio: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self { iterations: 1000, threshold_px: 2.0, min_inlier_ratio: 0.5, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct FundamentalEstimate {
    pub f: Matrix3<f64>,
    pub inliers: Vec<bool>,
    pub inlier_count: usize,
    /// Mean Sampson distance (px) over the inliers.
    pub mean_sampson: f64,
}

/// Hartley normalization: centroid to origin, mean distance √2.
fn normalization(points: &[Pixel]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().fold(Vector2::zeros(), |acc, p| acc + p) / n;
    let mean_dist = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 0.0 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

fn homogeneous(p: &Pixel) -> Vector3<f64> {
    Vector3::new(p.x, p.y, 1.0)
}

/// Normalized 8-point fit over the given correspondences (≥ 8), rank 2 enforced.
///
/// Returns `None` when the linear system has a null space of dimension > 1,
/// which happens e.g. for zero-baseline (identical) views.
pub fn eight_point(corrs: &[Correspondence]) -> Option<Matrix3<f64>> {
    if corrs.len() < 8 {
        return None;
    }
    let a_pts: Vec<Pixel> = corrs.iter().map(|c| c.0).collect();
    let b_pts: Vec<Pixel> = corrs.iter().map(|c| c.1).collect();
    let t1 = normalization(&a_pts);
    let t2 = normalization(&b_pts);
    // Pad to at least 9 rows so the SVD yields a full right basis.
    let rows = corrs.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in corrs.iter().enumerate() {
        let x = t1 * homogeneous(p);
        let y = t2 * homogeneous(q);
        let row = [y.x * x.x, y.x * x.y, y.x, y.y * x.x, y.y * x.y, y.y, x.x, x.y, 1.0];
        for (j, v) in row.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| sv[i].partial_cmp(&sv[j]).unwrap());
    let (smallest, second) = (order[0], order[1]);
    if corrs.len() >= 9 && sv[second] <= 1e-9 * sv[order[8]] {
        return None;
    }
    let f_row = v_t.row(smallest);
    let f_hat = Matrix3::new(f_row[0], f_row[1], f_row[2], f_row[3], f_row[4], f_row[5], f_row[6], f_row[7], f_row[8]);
    let f_hat = enforce_rank2(&f_hat);
    let f = t2.transpose() * f_hat * t1;
    let norm = f.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    Some(f / norm)
}

fn enforce_rank2(f: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = f.svd(true, true);
    let mut s = svd.singular_values;
    let min_idx = s.imin();
    s[min_idx] = 0.0;
    svd.u.unwrap() * Matrix3::from_diagonal(&s) * svd.v_t.unwrap()
}

/// Sampson distance (first-order geometric error) in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, c: &Correspondence) -> f64 {
    let x = homogeneous(&c.0);
    let y = homogeneous(&c.1);
    let fx = f * x;
    let ftx = f.transpose() * y;
    let num = y.dot(&fx);
    let den = fx.x * fx.x + fx.y * fx.y + ftx.x * ftx.x + ftx.y * ftx.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    (num * num / den).sqrt()
}

/// Algebraic epipolar residuals `|x'ᵀ F x|` measured in Hartley-normalized
/// coordinates with the transformed F scaled to unit Frobenius norm.
pub fn normalized_epipolar_residuals(f: &Matrix3<f64>, corrs: &[Correspondence]) -> Vec<f64> {
    let a_pts: Vec<Pixel> = corrs.iter().map(|c| c.0).collect();
    let b_pts: Vec<Pixel> = corrs.iter().map(|c| c.1).collect();
    let t1 = normalization(&a_pts);
    let t2 = normalization(&b_pts);
    let t1_inv = t1.try_inverse().unwrap();
    let t2_inv = t2.try_inverse().unwrap();
    let f_hat = t2_inv.transpose() * f * t1_inv;
    let f_hat = f_hat / f_hat.norm();
    corrs
        .iter()
        .map(|(p, q)| {
            let x = t1 * homogeneous(p);
            let y = t2 * homogeneous(q);
            y.dot(&(f_hat * x)).abs()
        })
        .collect()
}

fn score(f: &Matrix3<f64>, corrs: &[Correspondence], threshold: f64) -> (Vec<bool>, usize, f64) {
    let mut mask = vec![false; corrs.len()];
    let mut count = 0;
    let mut sum = 0.0;
    for (i, c) in corrs.iter().enumerate() {
        let d = sampson_distance(f, c);
        if d <= threshold {
            mask[i] = true;
            count += 1;
            sum += d;
        }
    }
    let mean = if count > 0 { sum / count as f64 } else { f64::INFINITY };
    (mask, count, mean)
}

fn better(count: usize, mean: f64, best_count: usize, best_mean: f64) -> bool {
    count > best_count || (count == best_count && mean < best_mean)
}

/// Normalized 8-point algorithm inside RANSAC.
///
/// Minimal samples are drawn up front from a seeded generator and scored in
/// parallel; the reduction walks hypotheses in sample order, so the result is
/// identical for any thread count.
pub fn estimate_fundamental(corrs: &[Correspondence], cfg: &RansacConfig) -> Result<FundamentalEstimate, GeometryError> {
    if corrs.len() < 8 {
        return Err(GeometryError::InsufficientCorrespondences { needed: 8, got: corrs.len() });
    }
    if eight_point(corrs).is_none() {
        return Err(GeometryError::DegenerateConfiguration("correspondences do not constrain a unique fundamental matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let samples: Vec<Vec<usize>> = (0..cfg.iterations.max(1)).map(|_| sample(&mut rng, corrs.len(), 8).into_vec()).collect();
    let scored: Vec<Option<(Matrix3<f64>, usize, f64)>> = samples
        .par_iter()
        .map(|idx| {
            let subset: Vec<Correspondence> = idx.iter().map(|&i| corrs[i]).collect();
            let f = eight_point(&subset)?;
            let (_, count, mean) = score(&f, corrs, cfg.threshold_px);
            Some((f, count, mean))
        })
        .collect();

    let mut best: Option<(Matrix3<f64>, usize, f64)> = None;
    for (f, count, mean) in scored.into_iter().flatten() {
        match &best {
            Some((_, bc, bm)) if !better(count, mean, *bc, *bm) => {}
            _ => best = Some((f, count, mean)),
        }
    }
    let (mut f, _, _) = best.ok_or(GeometryError::NoConsensus { ratio: 0.0, required: cfg.min_inlier_ratio })?;
    let (mut mask, mut count, mut mean) = score(&f, corrs, cfg.threshold_px);

    // Least-squares refits on the consensus set while they do not lose inliers.
    for _ in 0..5 {
        let inlier_corrs: Vec<Correspondence> = corrs.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
        let Some(refit) = eight_point(&inlier_corrs) else { break };
        let (m2, c2, mean2) = score(&refit, corrs, cfg.threshold_px);
        if !better(c2, mean2, count, mean) {
            break;
        }
        f = refit;
        mask = m2;
        count = c2;
        mean = mean2;
    }

    let ratio = count as f64 / corrs.len() as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(GeometryError::NoConsensus { ratio, required: cfg.min_inlier_ratio });
    }
    Ok(FundamentalEstimate { f, inliers: mask, inlier_count: count, mean_sampson: mean })
}

/// Relative pose of view B with respect to view A (`x_B = R x_A + t`), with
/// `|t| = 1`.
#[derive(Debug, Clone)]
pub struct RelativePose {
    pub extrinsics: Extrinsics,
    /// Inliers with positive depth in both views for the chosen candidate.
    pub cheirality_count: usize,
    /// Positive-depth counts of all four candidates, in generation order.
    pub candidate_counts: [usize; 4],
}

/// The four `(R, t)` factorizations of an essential matrix.
pub fn essential_candidates(e: &Matrix3<f64>) -> [(Matrix3<f64>, Vector3<f64>); 4] {
    let svd = e.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut v_t = svd.v_t.unwrap();
    // Order columns by descending singular value; the third is the null direction.
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| s[j].partial_cmp(&s[i]).unwrap());
    let u_sorted = Matrix3::from_fn(|r, c| u[(r, order[c])]);
    let v_sorted = Matrix3::from_fn(|r, c| v_t[(order[r], c)]);
    u = u_sorted;
    v_t = v_sorted;
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if v_t.determinant() < 0.0 {
        v_t.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let ra = u * w * v_t;
    let rb = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).into();
    [(ra, t), (ra, -t), (rb, t), (rb, -t)]
}

/// Triangulates a calibrated correspondence for view A at the origin and
/// view B at `(r, t)`; returns the depths in both views.
fn depths(r: &Matrix3<f64>, t: &Vector3<f64>, xa: &Vector3<f64>, xb: &Vector3<f64>) -> Option<(f64, f64)> {
    let center_b = -(r.transpose() * t);
    let ray_a = PlueckerRay::from_point_direction(&Vector3::zeros(), xa);
    let ray_b = PlueckerRay::from_point_direction(&center_b, &(r.transpose() * xb));
    let p = triangulate(&[ray_a, ray_b], None).ok()?;
    Some((p.z, (r * p + t).z))
}

/// Decomposes `E = K_Bᵀ F K_A` and keeps the candidate with the most inliers
/// triangulating in front of both cameras.
pub fn decompose_to_extrinsics(
    f: &Matrix3<f64>,
    k_a: &Intrinsics,
    k_b: &Intrinsics,
    corrs: &[Correspondence],
    inliers: &[bool],
) -> Result<RelativePose, GeometryError> {
    let e = k_b.matrix().transpose() * f * k_a.matrix();
    let calibrated: Vec<(Vector3<f64>, Vector3<f64>)> =
        corrs.iter().zip(inliers).filter(|(_, m)| **m).map(|(c, _)| (k_a.unproject(&c.0), k_b.unproject(&c.1))).collect();
    if calibrated.is_empty() {
        return Err(GeometryError::InsufficientCorrespondences { needed: 1, got: 0 });
    }
    // Zero parallax means no recoverable baseline.
    let max_parallax = calibrated.iter().map(|(a, b)| a.normalize().cross(&b.normalize()).norm()).fold(0.0, f64::max);
    let candidates = essential_candidates(&e);
    if max_parallax < 1e-9 {
        return Err(GeometryError::DegenerateConfiguration("zero baseline: correspondences have no parallax"));
    }
    let mut counts = [0usize; 4];
    for (ci, (r, t)) in candidates.iter().enumerate() {
        counts[ci] = calibrated.iter().filter(|(a, b)| matches!(depths(r, t, a, b), Some((da, db)) if da > 0.0 && db > 0.0)).count();
    }
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| counts[j].cmp(&counts[i]).then(i.cmp(&j)));
    let (best, second) = (counts[order[0]], counts[order[1]]);
    if ((best - second) as f64) < CHEIRALITY_MARGIN * calibrated.len() as f64 || best == 0 {
        return Err(GeometryError::CheiralityAmbiguity { best, second });
    }
    let (r, t) = candidates[order[0]];
    Ok(RelativePose { extrinsics: Extrinsics::from_matrix(&r, t.normalize()), cheirality_count: best, candidate_counts: counts })
}
