//! Lateral correspondence as a linear assignment problem.

use super::Permutation;
use crate::error::{Error, Result};
use crate::srvf::{l2_dist_sq, SrvfTree, Weights};

/// Minimum-cost perfect matching on a square cost matrix (Hungarian
/// algorithm with potentials, O(n³)).
///
/// Returns `assignment` with row `i` matched to column `assignment[i]`.
pub fn hungarian(costs: &[Vec<f64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|row| row.len() == n));

    // 1-based with a sentinel column 0
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
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

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn check_counts(a: &SrvfTree, b: &SrvfTree) -> Result<()> {
    if a.laterals.len() != b.laterals.len() {
        return Err(Error::Mismatch(format!(
            "lateral counts {} and {} (augment first)",
            a.laterals.len(),
            b.laterals.len()
        )));
    }
    Ok(())
}

/// Pairwise cost `λ_s |q_k^a - q_l^b|² + λ_p (s_k^a - s_l^b)²`.
pub fn lateral_cost_matrix(a: &SrvfTree, b: &SrvfTree, w: &Weights) -> Result<Vec<Vec<f64>>> {
    check_counts(a, b)?;
    a.laterals
        .iter()
        .map(|la| {
            b.laterals
                .iter()
                .map(|lb| {
                    Ok(w.lambda_s * l2_dist_sq(&la.q, &lb.q)? + w.lambda_p * (la.s - lb.s).powi(2))
                })
                .collect()
        })
        .collect()
}

/// Optimal lateral correspondence: `a`'s lateral `k` pairs with `b`'s lateral
/// `perm[k]`.
///
/// Virtual laterals have zero SRVFs, so a real-virtual pair costs the
/// deletion energy `λ_s |q|² + λ_p Δs²` and a virtual-virtual pair only
/// `λ_p Δs²`.
pub fn match_laterals(a: &SrvfTree, b: &SrvfTree, w: &Weights) -> Result<Permutation> {
    let costs = lateral_cost_matrix(a, b, w)?;
    Ok(hungarian(&costs))
}

/// Rotation-invariant stand-in for [`match_laterals`], used to seed the
/// rotation before any alignment exists: shapes compare by SRVF norm only.
pub(crate) fn match_laterals_invariant(a: &SrvfTree, b: &SrvfTree, w: &Weights) -> Result<Permutation> {
    check_counts(a, b)?;
    let costs: Vec<Vec<f64>> = a
        .laterals
        .iter()
        .map(|la| {
            let na = la.q.norm();
            b.laterals
                .iter()
                .map(|lb| w.lambda_s * (na - lb.q.norm()).powi(2) + w.lambda_p * (la.s - lb.s).powi(2))
                .collect()
        })
        .collect();
    Ok(hungarian(&costs))
}
