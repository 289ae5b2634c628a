//! Dense linear sum assignment.
//!
//! Shortest-augmenting-path solver with row/column potentials (the
//! Jonker–Volgenant formulation of the Hungarian method), O(n³). Rows are
//! inserted in index order and columns scanned in index order, so among
//! several optima the result is deterministic.

use super::perm::Permutation;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    /// Row `i` is assigned column `mapping[i]`.
    pub mapping: Permutation,
    /// `Σ_i cost[i, mapping[i]]` on the original (un-negated) costs.
    pub value: f64,
}

pub fn lap_solve(cost: &Tensor, sense: Sense) -> Result<Assignment> {
    if cost.ndim() != 2 || cost.rows() != cost.cols() {
        return Err(Error::input(format!(
            "assignment cost must be square, got shape {:?}",
            cost.shape()
        )));
    }
    if !cost.all_finite() {
        return Err(Error::input("assignment cost has non-finite entries"));
    }
    let n = cost.rows();
    let sign = match sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let c = |i: usize, j: usize| sign * cost.at(i, j);

    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|f| *f = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = c(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut mapping = vec![0usize; n];
    for j in 1..=n {
        mapping[owner[j] - 1] = j - 1;
    }
    let value = mapping.iter().enumerate().map(|(i, &j)| cost.at(i, j)).sum();
    Ok(Assignment {
        mapping: Permutation::new(mapping)?,
        value,
    })
}
