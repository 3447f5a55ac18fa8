//! Distances between sets of channel matrices.
//!
//! Every channel is flattened to a real vector (real plane then imaginary
//! plane). [`wasserstein2`] is the exact empirical 2-Wasserstein distance
//! between equal-size sets, found by optimal assignment on the squared
//! Euclidean cost matrix. [`mmd`] is the biased (V-statistic) maximum mean
//! discrepancy with a Gaussian kernel whose bandwidth is the pooled median
//! pairwise distance.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelMatrix;
use crate::error::{shape_err, Error, Result};
use crate::exec::Exec;

/// Nonempty collection of equal-length real vectors, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    vectors: Array2<f64>,
}

impl SampleSet {
    pub fn from_array(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 || vectors.ncols() == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(SampleSet {
            vectors: vectors.as_standard_layout().into_owned(),
        })
    }

    pub fn from_vectors(vectors: &[Vec<f64>]) -> Result<Self> {
        let dim = vectors.first().ok_or(Error::EmptyDataset)?.len();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(shape_err(dim, v.len()));
        }
        let flat: Vec<f64> = vectors.iter().flatten().copied().collect();
        Self::from_array(Array2::from_shape_vec((vectors.len(), dim), flat).expect("rectangular"))
    }

    pub fn from_channels(channels: &[ChannelMatrix]) -> Result<Self> {
        let first = channels.first().ok_or(Error::EmptyDataset)?;
        let dim = 2 * first.n_r() * first.n_t();
        let mut flat = Vec::with_capacity(channels.len() * dim);
        for h in channels {
            if h.shape() != first.shape() {
                return Err(shape_err(
                    format!("{:?}", first.shape()),
                    format!("{:?}", h.shape()),
                ));
            }
            h.write_flat(&mut flat);
        }
        Self::from_array(Array2::from_shape_vec((channels.len(), dim), flat).expect("rectangular"))
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dims(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(shape_err(format!("dimension {}", a.dim()), b.dim()));
    }
    Ok(())
}

/// Optimal assignment of rows to distinct columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// `columns[i]` is the column assigned to row `i`.
    pub columns: Vec<usize>,
    pub cost: f64,
}

/// Minimum-cost assignment for an `n × m` cost matrix with `n ≤ m`.
///
/// Shortest augmenting paths with row and column potentials; `O(n²·m)`.
pub fn solve_assignment(cost: &Array2<f64>) -> Result<Assignment> {
    let (n, m) = cost.dim();
    if n > m {
        return Err(shape_err(format!("at most {m} rows"), n));
    }
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidConfig(
            "assignment costs must be finite".into(),
        ));
    }
    let c = cost.as_standard_layout();
    let c = c.as_slice().expect("standard layout");
    // 1-based indices; column 0 is a virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let row = &c[(i0 - 1) * m..i0 * m];
            let ui = u[i0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if !used[j] {
                    let cur = row[j - 1] - ui - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut columns = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            columns[p[j] - 1] = j - 1;
        }
    }
    let total = columns.iter().enumerate().map(|(i, &j)| c[i * m + j]).sum();
    Ok(Assignment {
        columns,
        cost: total,
    })
}

/// Squared Euclidean cost matrix `C[i][j] = ‖a_i − b_j‖²`.
pub fn cost_matrix(a: &SampleSet, b: &SampleSet, exec: Exec) -> Result<Array2<f64>> {
    check_dims(a, b)?;
    let m = b.len();
    let rows = exec.map(a.len(), |i| {
        let ai = a.row(i);
        (0..m).map(|j| sq_dist(ai, b.row(j))).collect::<Vec<_>>()
    });
    Ok(Array2::from_shape_vec((a.len(), m), rows.concat()).expect("rectangular"))
}

/// Exact empirical 2-Wasserstein distance between equal-size sets.
pub fn wasserstein2(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    wasserstein2_with(a, b, Exec::default())
}

pub fn wasserstein2_with(a: &SampleSet, b: &SampleSet, exec: Exec) -> Result<f64> {
    check_dims(a, b)?;
    if a.len() != b.len() {
        return Err(Error::CardinalityMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    let cost = cost_matrix(a, b, exec)?;
    let best = solve_assignment(&cost)?;
    Ok((best.cost.max(0.0) / a.len() as f64).sqrt())
}

/// MMD value together with the bandwidth that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub value: f64,
    /// Biased estimate of the squared MMD before clamping.
    pub mmd2: f64,
    pub bandwidth: f64,
}

pub fn mmd(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    Ok(mmd_detailed(a, b, Exec::default())?.value)
}

/// MMD with the pooled median-distance bandwidth. A zero median (all points
/// identical) yields a value of 0.
pub fn mmd_detailed(a: &SampleSet, b: &SampleSet, exec: Exec) -> Result<MmdResult> {
    check_dims(a, b)?;
    let gamma = median_pairwise_distance(a, b, exec);
    if gamma == 0.0 {
        return Ok(MmdResult {
            value: 0.0,
            mmd2: 0.0,
            bandwidth: 0.0,
        });
    }
    mmd_with_bandwidth(a, b, gamma, exec)
}

/// Biased MMD with a fixed Gaussian bandwidth `gamma > 0`.
pub fn mmd_with_bandwidth(
    a: &SampleSet,
    b: &SampleSet,
    gamma: f64,
    exec: Exec,
) -> Result<MmdResult> {
    check_dims(a, b)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth must be positive, got {gamma}"
        )));
    }
    let inv = 1.0 / (2.0 * gamma * gamma);
    let kernel_mean = |x: &SampleSet, y: &SampleSet| {
        let rows = exec.map(x.len(), |i| {
            let xi = x.row(i);
            (0..y.len())
                .map(|j| (-sq_dist(xi, y.row(j)) * inv).exp())
                .sum::<f64>()
        });
        rows.iter().sum::<f64>() / (x.len() * y.len()) as f64
    };
    let kaa = kernel_mean(a, a);
    let kbb = kernel_mean(b, b);
    let kab = kernel_mean(a, b);
    let mmd2 = kaa + kbb - 2.0 * kab;
    Ok(MmdResult {
        value: mmd2.max(0.0).sqrt(),
        mmd2,
        bandwidth: gamma,
    })
}

/// Median Euclidean distance over all unordered pairs of distinct points in
/// `a ∪ b`; the mean of the two middle values for an even pair count.
pub fn median_pairwise_distance(a: &SampleSet, b: &SampleSet, exec: Exec) -> f64 {
    let n = a.len() + b.len();
    if n < 2 {
        return 0.0;
    }
    let point = |k: usize| {
        if k < a.len() {
            a.row(k)
        } else {
            b.row(k - a.len())
        }
    };
    let rows = exec.map(n, |i| {
        let pi = point(i);
        ((i + 1)..n)
            .map(|j| sq_dist(pi, point(j)).sqrt())
            .collect::<Vec<_>>()
    });
    let mut d = rows.concat();
    let len = d.len();
    let mid = len / 2;
    let (_, &mut hi, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if len % 2 == 1 {
        hi
    } else {
        let lo = d[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// One metric evaluation as emitted in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub n_a: usize,
    pub n_b: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth: Option<f64>,
}
