//! Density-based clustering over a precomputed distance matrix.

use serde::Serialize;

use crate::error::{Error, Result};

/// Dense symmetric N×N distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        use rayon::prelude::*;
        let data = (0..n * n)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / n, k % n);
                match i.cmp(&j) {
                    std::cmp::Ordering::Equal => 0.0,
                    std::cmp::Ordering::Less => f(i, j),
                    std::cmp::Ordering::Greater => f(j, i),
                }
            })
            .collect();
        DistanceMatrix { n, data }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::input("distance matrix must be square"));
        }
        Ok(DistanceMatrix {
            n,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Indices within `eps` of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize, eps: f64) -> Vec<usize> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, d)| **d <= eps)
            .map(|(j, _)| j)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterResult {
    /// Cluster id per point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    pub eps: f64,
    pub min_pts: usize,
    pub n_clusters: usize,
}

impl ClusterResult {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == Some(cluster))
            .collect()
    }

    pub fn noise_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        self.labels.iter().filter(|l| l.is_none()).count() as f64 / self.labels.len() as f64
    }
}

/// Points are visited in index order. A point with at least `min_pts`
/// points (itself included) within `eps` is a core point; clusters grow
/// from cores, and a border point joins the first cluster that reaches it.
pub fn dbscan(matrix: &DistanceMatrix, eps: f64, min_pts: usize) -> Result<ClusterResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::config(format!("eps must be in (0, 1], got {eps}")));
    }
    if min_pts < 1 {
        return Err(Error::config("min_pts must be >= 1"));
    }
    let n = matrix.len();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut cluster = 0;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = matrix.neighbors(i, eps);
        if seeds.len() < min_pts {
            continue;
        }
        labels[i] = Some(cluster);
        let mut queue = seeds;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let nb = matrix.neighbors(j, eps);
            if nb.len() >= min_pts {
                queue.extend(nb);
            }
        }
        cluster += 1;
    }
    Ok(ClusterResult {
        labels,
        eps,
        min_pts,
        n_clusters: cluster,
    })
}
