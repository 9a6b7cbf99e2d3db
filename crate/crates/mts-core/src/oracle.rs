//! Offline comparator. A work-function dynamic program over a finite metric
//! gives the exact optimum for a discrete cost sequence, with a recovered
//! serving path split into service and movement. Helpers convert between
//! piecewise-constant cost paths and discrete cost vectors so continuous runs
//! and the comparator charge the same totals.

use crate::error::{Error, Result};
use crate::instances::{CostPath, CostSegment};
use crate::integrate::SegmentLedger;
use crate::tree::WeightedRootedTree;

/// Largest point count the dynamic program accepts.
pub const ORACLE_MAX_POINTS: usize = 512;
/// Largest step count the dynamic program accepts.
pub const ORACLE_MAX_STEPS: usize = 200_000;
/// Largest steps * points^2 product the dynamic program accepts.
pub const ORACLE_MAX_WORK: u64 = 1_000_000_000;

/// Finite metric over point indices `0..n`, stored as a dense symmetric
/// matrix. Invariant: zero diagonal, symmetry, triangle inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    n: usize,
    d: Vec<f64>,
}

impl MetricSpace {
    /// Leaf-to-leaf path metric of a weighted rooted tree. Points are leaf
    /// positions in the tree's left-to-right leaf order.
    pub fn from_tree(tree: &WeightedRootedTree) -> Self {
        let m = tree.metric_matrix();
        let n = m.len();
        let mut d = Vec::with_capacity(n * n);
        for row in &m {
            d.extend_from_slice(row);
        }
        MetricSpace { n, d }
    }

    /// Star metric with per-point edge weights: d(i, j) = w_i + w_j for
    /// i != j. Weights must be positive and finite.
    pub fn from_star_weights(weights: &[f64]) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::BadParams {
                context: format!("star metric needs at least 2 points, got {}", weights.len()),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::BadParams {
                context: "star metric weights must be positive and finite".into(),
            });
        }
        let n = weights.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    d[i * n + j] = weights[i] + weights[j];
                }
            }
        }
        Ok(MetricSpace { n, d })
    }

    /// Builds from an explicit matrix, validating metric axioms.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::BadParams { context: "empty metric".into() });
        }
        let mut d = vec![0.0; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::MassArity { expected: n, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::BadParams {
                        context: format!("distance ({}, {}) = {} is invalid", i, j, v),
                    });
                }
                d[i * n + j] = v;
            }
        }
        let m = MetricSpace { n, d };
        for i in 0..n {
            if m.dist(i, i) != 0.0 {
                return Err(Error::BadParams { context: format!("nonzero diagonal at {}", i) });
            }
            for j in 0..n {
                if (m.dist(i, j) - m.dist(j, i)).abs() > 1e-12 * (1.0 + m.dist(i, j).abs()) {
                    return Err(Error::BadParams {
                        context: format!("asymmetry between {} and {}", i, j),
                    });
                }
                for k in 0..n {
                    if m.dist(i, j) > m.dist(i, k) + m.dist(k, j) + 1e-12 * (1.0 + m.dist(i, j)) {
                        return Err(Error::BadParams {
                            context: format!("triangle violation at ({}, {}, {})", i, j, k),
                        });
                    }
                }
            }
        }
        Ok(m)
    }

    pub fn n_points(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn diameter(&self) -> f64 {
        self.d.iter().copied().fold(0.0, f64::max)
    }
}

/// Result of the offline dynamic program.
///
/// `path[t]` is the position occupied after step t; the serving position of
/// step t (1-based) is `path[t - 1]`. `path[0]` is the position taken before
/// the first request, after any initial move away from the start point.
#[derive(Debug, Clone, PartialEq)]
pub struct OfflineSolution {
    pub opt: f64,
    pub path: Vec<usize>,
    pub service: f64,
    pub movement: f64,
}

fn check_budget(n: usize, steps: usize) -> Result<()> {
    let work = (steps as u64).saturating_mul((n as u64).saturating_mul(n as u64));
    if n > ORACLE_MAX_POINTS || steps > ORACLE_MAX_STEPS || work > ORACLE_MAX_WORK {
        return Err(Error::OracleBudget { points: n, steps });
    }
    Ok(())
}

/// Exact offline optimum for a discrete cost sequence over a finite metric.
///
/// The work function W_t(x) is the cheapest cost of serving the first t
/// requests and ending at x; each step serves at the current position and
/// then optionally moves. With `start` given, W_0(x) = d(start, x); with
/// `start = None` the comparator begins wherever it likes at no charge.
///
/// Ties in the recovered path prefer staying put, then the lowest index.
pub fn work_function_dp(
    metric: &MetricSpace,
    costs: &[Vec<f64>],
    start: Option<usize>,
) -> Result<OfflineSolution> {
    let n = metric.n_points();
    let t_len = costs.len();
    check_budget(n, t_len)?;
    if let Some(s) = start {
        if s >= n {
            return Err(Error::BadParams { context: format!("start {} out of range", s) });
        }
    }

    let mut w: Vec<f64> = (0..n)
        .map(|x| match start {
            Some(s) => metric.dist(s, x),
            None => 0.0,
        })
        .collect();
    let mut back: Vec<Vec<usize>> = Vec::with_capacity(t_len);
    let mut served = vec![0.0; n];

    for (t, c) in costs.iter().enumerate() {
        if c.len() != n {
            return Err(Error::MassArity { expected: n, got: c.len() });
        }
        if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::BadParams {
                context: format!("step {} has a negative or non-finite cost", t + 1),
            });
        }
        for y in 0..n {
            served[y] = w[y] + c[y];
        }
        let mut next = vec![0.0; n];
        let mut bk = vec![0usize; n];
        for x in 0..n {
            let mut best = f64::INFINITY;
            let mut best_y = usize::MAX;
            for y in 0..n {
                let v = served[y] + metric.dist(y, x);
                if v < best {
                    best = v;
                    best_y = y;
                } else if v == best && y == x {
                    best_y = y;
                }
            }
            next[x] = best;
            bk[x] = best_y;
        }
        let scale = 1.0 + next.iter().copied().fold(0.0, f64::max);
        for x in 0..n {
            for y in 0..n {
                if next[x] - next[y] > metric.dist(x, y) + 1e-9 * scale {
                    return Err(Error::Numeric {
                        context: format!("work function lost smoothness at step {}", t + 1),
                    });
                }
            }
        }
        w = next;
        back.push(bk);
    }

    let mut opt = w[0];
    let mut end = 0;
    for x in 1..n {
        if w[x] < opt {
            opt = w[x];
            end = x;
        }
    }

    let mut path = vec![0usize; t_len + 1];
    path[t_len] = end;
    for t in (0..t_len).rev() {
        path[t] = back[t][path[t + 1]];
    }

    let service: f64 = costs.iter().enumerate().map(|(t, c)| c[path[t]]).sum();
    let mut movement = 0.0;
    if let Some(s) = start {
        movement += metric.dist(s, path[0]);
    }
    for t in 0..t_len {
        movement += metric.dist(path[t], path[t + 1]);
    }

    Ok(OfflineSolution { opt, path, service, movement })
}

/// Offline optimum for a piecewise-constant cost path: each segment collapses
/// to one discrete request C(x) = rate(x) * duration, which is lossless
/// because an optimal continuous comparator only moves at segment boundaries.
/// The returned path gives the comparator's position during each segment.
pub fn segment_opt(
    path: &CostPath,
    metric: &MetricSpace,
    start: Option<usize>,
) -> Result<OfflineSolution> {
    path.validate()?;
    if !path.segments.is_empty() && path.n_leaves() != metric.n_points() {
        return Err(Error::MassArity { expected: metric.n_points(), got: path.n_leaves() });
    }
    let costs: Vec<Vec<f64>> = path
        .segments
        .iter()
        .map(|s| s.rates.iter().map(|r| r * s.duration).collect())
        .collect();
    work_function_dp(metric, &costs, start)
}

/// Spreads one discrete cost vector into a piecewise-constant path: one
/// segment per distinct positive level v, of duration v - previous level,
/// with unit rate exactly on the coordinates whose cost reaches v. The
/// integrated cost per coordinate telescopes back to C.
pub fn water_fill(c: &[f64]) -> Result<CostPath> {
    if c.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::BadParams {
            context: "cost vector must be nonnegative and finite".into(),
        });
    }
    let mut levels: Vec<f64> = c.iter().copied().filter(|v| *v > 0.0).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    let mut segments = Vec::with_capacity(levels.len());
    let mut prev = 0.0;
    for &v in &levels {
        let rates: Vec<f64> = c.iter().map(|&ci| if ci >= v { 1.0 } else { 0.0 }).collect();
        segments.push(CostSegment { rates, duration: v - prev });
        prev = v;
    }
    Ok(CostPath { segments })
}

/// Discrete-time accounting for an online run that integrated the
/// water-filled path of each cost vector in sequence: one (service, movement)
/// pair per discrete step, plus the totals. The ledger list must line up one
/// to one with the discrete steps.
pub fn discretize_online(
    step_ledgers: &[SegmentLedger],
    n_steps: usize,
) -> Result<(Vec<(f64, f64)>, f64, f64)> {
    if step_ledgers.len() != n_steps {
        return Err(Error::MassArity { expected: n_steps, got: step_ledgers.len() });
    }
    let pairs: Vec<(f64, f64)> =
        step_ledgers.iter().map(|l| (l.service, l.movement)).collect();
    let service: f64 = pairs.iter().map(|p| p.0).sum();
    let movement: f64 = pairs.iter().map(|p| p.1).sum();
    Ok((pairs, service, movement))
}
