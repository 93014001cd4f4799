use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeoError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    /// Cluster id per input point; `None` is noise.
    pub assignments: Vec<Option<usize>>,
    pub n_clusters: usize,
    pub eps: f64,
    pub min_pts: usize,
}

impl ClusterResult {
    pub fn noise_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_none()).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters];
        for c in self.assignments.iter().flatten() {
            sizes[*c] += 1;
        }
        sizes
    }
}

/// Neighbor lists (including the point itself) within `eps`, found through
/// a uniform grid of `eps`-sized cells. Lists are ascending.
fn neighborhoods(points: &[(f64, f64)], eps: f64) -> Vec<Vec<usize>> {
    use std::collections::HashMap;
    let key = |&(lat, lon): &(f64, f64)| ((lat / eps).floor() as i64, (lon / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let eps2 = eps * eps;
    points
        .par_iter()
        .map(|p| {
            let (r, c) = key(p);
            let mut out = Vec::new();
            for dr in -1..=1 {
                for dc in -1..=1 {
                    if let Some(cell) = grid.get(&(r + dr, c + dc)) {
                        out.extend(cell.iter().copied().filter(|&j| {
                            let q = points[j];
                            let (a, b) = (p.0 - q.0, p.1 - q.1);
                            a * a + b * b <= eps2
                        }));
                    }
                }
            }
            out.sort_unstable();
            out
        })
        .collect()
}

/// Density clustering of `(lat, lon)` points with Euclidean distance in
/// degrees. A point is core when at least `min_pts` points (itself
/// included) lie within `eps`. Clusters are grown from unvisited core
/// points in index order; a border point joins the first cluster that
/// reaches it.
pub fn dbscan(points: &[(f64, f64)], eps: f64, min_pts: usize) -> Result<ClusterResult, GeoError> {
    if !(eps > 0.0 && eps.is_finite()) || min_pts == 0 {
        return Err(GeoError::Parameter(format!(
            "dbscan needs eps > 0 and min_pts >= 1 (got {eps}, {min_pts})"
        )));
    }
    let neighbors = neighborhoods(points, eps);
    let core: Vec<bool> = neighbors.iter().map(|n| n.len() >= min_pts).collect();
    let mut assignments: Vec<Option<usize>> = vec![None; points.len()];
    let mut n_clusters = 0;
    let mut queue = std::collections::VecDeque::new();
    for seed in 0..points.len() {
        if !core[seed] || assignments[seed].is_some() {
            continue;
        }
        let id = n_clusters;
        n_clusters += 1;
        assignments[seed] = Some(id);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if assignments[q].is_none() {
                    assignments[q] = Some(id);
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
    }
    Ok(ClusterResult {
        assignments,
        n_clusters,
        eps,
        min_pts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_near_one_far() {
        let eps = 0.01;
        let mut pts: Vec<(f64, f64)> = (0..6)
            .map(|i| {
                let a = i as f64 * std::f64::consts::TAU / 6.0;
                (41.8 + 0.4 * eps * a.cos(), -87.6 + 0.4 * eps * a.sin())
            })
            .collect();
        pts.push((41.8 + 10.0 * eps, -87.6));
        let r = dbscan(&pts, eps, 3).unwrap();
        assert_eq!(r.n_clusters, 1);
        assert_eq!(r.cluster_sizes(), vec![6]);
        assert_eq!(r.assignments[6], None);
    }

    #[test]
    fn min_pts_one_has_no_noise() {
        let pts = [(0.0, 0.0), (5.0, 5.0), (0.05, 0.0), (9.0, 1.0)];
        let r = dbscan(&pts, 0.1, 1).unwrap();
        assert_eq!(r.noise_count(), 0);
        assert_eq!(r.n_clusters, 3);
        assert_eq!(r.assignments[0], r.assignments[2]);
    }

    #[test]
    fn border_point_goes_to_first_cluster() {
        // Two dense groups with one border point at distance exactly eps
        // from both group edges; the lower-index cluster claims it.
        let mut pts: Vec<(f64, f64)> = (0..5).map(|i| (0.0, i as f64 * 0.0625)).collect();
        pts.extend((0..5).map(|i| (0.0, 0.75 + i as f64 * 0.0625)));
        pts.push((0.0, 0.5));
        let r = dbscan(&pts, 0.25, 4).unwrap();
        assert_eq!(r.n_clusters, 2);
        assert_eq!(r.assignments[10], Some(0));
        assert_eq!(r.cluster_sizes(), vec![6, 5]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(dbscan(&[], 0.0, 3).is_err());
        assert!(dbscan(&[], 1.0, 0).is_err());
        assert_eq!(dbscan(&[], 1.0, 3).unwrap().n_clusters, 0);
    }
}
