use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SmcError};
use crate::models::geometry::{distance, VoxelGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleEstimate {
    pub d_hat: usize,
    pub voxels: Vec<usize>,
    /// Positions in cm.
    pub locations: Vec<[f64; 3]>,
}

/// Weighted pmf of the number of dipoles. Samples are source coordinates
/// `[lambda, r_1, ..., r_d]`.
pub fn dipole_count_pmf<'a>(samples: impl Iterator<Item = (&'a [f64], f64)>) -> BTreeMap<usize, f64> {
    let mut pmf = BTreeMap::new();
    let mut total = 0.0;
    for (c, w) in samples {
        *pmf.entry(c.len() - 1).or_insert(0.0) += w;
        total += w;
    }
    for v in pmf.values_mut() {
        *v /= total;
    }
    pmf
}

/// Weighted k-means over voxel positions with farthest-point seeding.
/// Returns the cluster index of every point.
pub fn weighted_kmeans(points: &[[f64; 3]], weights: &[f64], k: usize) -> Vec<usize> {
    let n = points.len();
    if n == 0 || k == 0 {
        return vec![0; n];
    }
    // seed with the heaviest point, then repeatedly the point farthest from all centers
    let mut first = 0;
    for i in 1..n {
        if weights[i] > weights[first] {
            first = i;
        }
    }
    let mut centers = vec![points[first]];
    while centers.len() < k.min(n) {
        let mut far = (f64::NEG_INFINITY, 0);
        for (i, p) in points.iter().enumerate() {
            let d = centers.iter().map(|c| distance(p, c)).fold(f64::INFINITY, f64::min);
            if d > far.0 {
                far = (d, i);
            }
        }
        centers.push(points[far.1]);
    }
    let mut assign = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::INFINITY, 0);
            for (j, c) in centers.iter().enumerate() {
                let d = distance(p, c);
                if d < best.0 {
                    best = (d, j);
                }
            }
            if assign[i] != best.1 {
                assign[i] = best.1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let mut s = [0.0; 3];
            let mut w = 0.0;
            for i in (0..n).filter(|&i| assign[i] == j) {
                for a in 0..3 {
                    s[a] += weights[i] * points[i][a];
                }
                w += weights[i];
            }
            if w > 0.0 {
                *c = [s[0] / w, s[1] / w, s[2] / w];
            }
        }
    }
    assign
}

/// Number of dipoles as the mode of `p(d | y)` (ties to the smaller d), and
/// per cluster the voxel with the largest posterior mass.
pub fn dipole_estimators<'a>(
    samples: impl Iterator<Item = (&'a [f64], f64)> + Clone,
    grid: &VoxelGrid,
) -> Result<DipoleEstimate> {
    let pmf = dipole_count_pmf(samples.clone());
    let mut d_hat = None;
    for (&d, &p) in &pmf {
        if d_hat.is_none_or(|(_, q)| p > q) {
            d_hat = Some((d, p));
        }
    }
    let (d_hat, _) = d_hat.ok_or_else(|| SmcError::Empty("no weighted source samples".into()))?;
    if d_hat == 0 {
        return Ok(DipoleEstimate { d_hat, voxels: vec![], locations: vec![] });
    }
    let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
    for (c, w) in samples.filter(|(c, _)| c.len() - 1 == d_hat) {
        for &r in &c[1..] {
            *mass.entry(r as usize).or_insert(0.0) += w;
        }
    }
    let voxels: Vec<usize> = mass.keys().copied().collect();
    let weights: Vec<f64> = mass.values().copied().collect();
    let points: Vec<[f64; 3]> = voxels.iter().map(|&v| grid.voxels[v]).collect();
    let assign = weighted_kmeans(&points, &weights, d_hat);
    let mut chosen = Vec::new();
    for j in 0..d_hat {
        let mut best: Option<(usize, f64)> = None;
        for i in (0..voxels.len()).filter(|&i| assign[i] == j) {
            if best.is_none_or(|(_, w)| weights[i] > w) {
                best = Some((voxels[i], weights[i]));
            }
        }
        if let Some((v, _)) = best {
            chosen.push(v);
        }
    }
    Ok(DipoleEstimate {
        d_hat,
        locations: chosen.iter().map(|&v| grid.voxels[v]).collect(),
        voxels: chosen,
    })
}
