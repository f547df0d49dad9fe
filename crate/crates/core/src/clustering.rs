//! Agglomerative hierarchical clustering over a pairwise similarity matrix:
//! average linkage, a stop threshold in raw score units, and a fully
//! deterministic tie-break (smallest representative index pair) so runs are
//! reproducible everywhere.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One merge step: the representative (oldest member) segment indices of the
/// two merged clusters, `cluster_a < cluster_b`, and the average-linkage
/// score of the merge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub cluster_a: usize,
    pub cluster_b: usize,
    pub score: f64,
}

/// The clustering result. `labels` are contiguous in `[0, n_clusters)` and
/// numbered by order of each cluster's first member segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub n_clusters: usize,
    pub merge_trace: Vec<Merge>,
}

/// The full merge sequence down to a single cluster. Cutting it at a
/// threshold reproduces exactly what running AHC with that stop threshold
/// would do, because the merge order never depends on the threshold.
#[derive(Debug, Clone)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    /// Replay merges while the linkage score stays at or above `threshold`;
    /// stop at the first merge below it.
    pub fn cut(&self, threshold: f64) -> ClusterAssignment {
        let n = self.n;
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut trace = Vec::new();
        for merge in &self.merges {
            if merge.score < threshold {
                break;
            }
            let ra = find(&mut parent, merge.cluster_a);
            let rb = find(&mut parent, merge.cluster_b);
            let (keep, drop) = if ra < rb { (ra, rb) } else { (rb, ra) };
            parent[drop] = keep;
            trace.push(*merge);
        }
        let mut labels = vec![usize::MAX; n];
        let mut next = 0usize;
        let mut canonical = vec![usize::MAX; n];
        for i in 0..n {
            let root = find(&mut parent, i);
            if canonical[root] == usize::MAX {
                canonical[root] = next;
                next += 1;
            }
            labels[i] = canonical[root];
        }
        ClusterAssignment {
            labels,
            n_clusters: next,
            merge_trace: trace,
        }
    }
}

/// Build the full average-linkage merge sequence for a symmetric similarity
/// matrix. The diagonal is ignored; off-diagonal entries must be finite and
/// symmetric within 1e-9. Equal-score candidates resolve to the smallest
/// (representative_a, representative_b) pair.
pub fn ahc_dendrogram(scores: &DMatrix<f64>) -> Result<Dendrogram> {
    let n = scores.nrows();
    if n == 0 || scores.ncols() != n {
        return Err(Error::validation(format!(
            "score matrix must be square and non-empty, got {}x{}",
            n,
            scores.ncols()
        )));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let a = scores[(i, j)];
            let b = scores[(j, i)];
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::validation(format!(
                    "non-finite score at ({i}, {j})"
                )));
            }
            if (a - b).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "score matrix asymmetric at ({i}, {j}): {a} vs {b}"
                )));
            }
        }
    }

    // clusters are identified by their representative (smallest member)
    // index; sums[i][j] accumulates the total inter-cluster pairwise score
    let mut alive = vec![true; n];
    let mut size = vec![1usize; n];
    let mut sums = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            // canonical value: upper triangle
            sums[i * n + j] = scores[(i, j)];
            sums[j * n + i] = scores[(i, j)];
        }
    }

    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    let mut remaining = n;
    while remaining > 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            if !alive[i] {
                continue;
            }
            for j in (i + 1)..n {
                if !alive[j] {
                    continue;
                }
                let avg = sums[i * n + j] / (size[i] * size[j]) as f64;
                let better = match best {
                    None => true,
                    Some((score, bi, bj)) => {
                        avg > score || (avg == score && (i, j) < (bi, bj))
                    }
                };
                if better {
                    best = Some((avg, i, j));
                }
            }
        }
        let (score, i, j) = best.expect("at least one live pair");
        merges.push(Merge {
            cluster_a: i,
            cluster_b: j,
            score,
        });
        // merge j into i (i is the smaller representative)
        alive[j] = false;
        size[i] += size[j];
        for c in 0..n {
            if alive[c] && c != i {
                let add = sums[j * n + c];
                sums[i * n + c] += add;
                sums[c * n + i] += add;
            }
        }
        remaining -= 1;
    }
    Ok(Dendrogram { n, merges })
}

/// Cluster with a stop threshold: merge the best-average pair while its
/// linkage score is at least `threshold`.
pub fn ahc_cluster(scores: &DMatrix<f64>, threshold: f64) -> Result<ClusterAssignment> {
    if threshold.is_nan() {
        return Err(Error::config("clustering threshold must not be NaN"));
    }
    Ok(ahc_dendrogram(scores)?.cut(threshold))
}
