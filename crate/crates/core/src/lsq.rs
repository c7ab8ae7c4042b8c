//! Least-squares conditional expectations on polynomial bases of Brownian
//! values.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub(crate) struct Basis {
    pub matrix: DMatrix<f64>,
    pub cond: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

pub(crate) fn build_basis(vars: &[Vec<f64>], paths: usize, degree: usize, cond_limit: f64) -> Result<Basis> {
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; paths]];
    if degree >= 1 {
        cols.extend(vars.iter().cloned());
    }
    if degree >= 2 {
        for a in 0..vars.len() {
            for b in a..vars.len() {
                cols.push(vars[a].iter().zip(&vars[b]).map(|(x, y)| x * y).collect());
            }
        }
    }
    let d = cols.len();
    let matrix = DMatrix::from_fn(paths, d, |p, k| cols[k][p]);
    let gram = matrix.tr_mul(&matrix) / paths as f64;
    let eig = gram.clone().symmetric_eigen();
    let hi = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lo = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond > cond_limit {
        return Err(Error::IllConditioned { cond, limit: cond_limit });
    }
    let chol = gram.cholesky().ok_or(Error::IllConditioned { cond, limit: cond_limit })?;
    Ok(Basis { matrix, cond, chol })
}

impl Basis {
    /// Least-squares fitted values for each column of `targets` (paths x cols).
    pub(crate) fn project(&self, targets: &DMatrix<f64>) -> DMatrix<f64> {
        let paths = targets.nrows() as f64;
        let rhs = self.matrix.tr_mul(targets) / paths;
        let coef = self.chol.solve(&rhs);
        &self.matrix * coef
    }
}

/// Solver-node indices of `m` equally spaced coarse times in `(0, T]`.
pub(crate) fn coarse_nodes(steps: usize, m: usize) -> Vec<usize> {
    (1..=m)
        .map(|j| ((j * steps) as f64 / m as f64).round() as usize)
        .collect()
}

/// Brownian values, standardized by `√t`, at solver node `i` and at the
/// coarse nodes before it; at most `keep` variables, the most recent kept.
/// `w_vals[p][stride * node]` is the value of path `p` at a solver node.
pub(crate) fn brownian_variables(
    w_vals: &[Vec<f64>],
    times: &[f64],
    i: usize,
    coarse: &[usize],
    keep: usize,
    stride: usize,
) -> Vec<Vec<f64>> {
    let mut nodes: Vec<usize> = coarse.iter().copied().filter(|&c| c > 0 && c < i).collect();
    if i > 0 {
        nodes.push(i);
    }
    let keep = keep.max(1);
    if nodes.len() > keep {
        nodes.drain(..nodes.len() - keep);
    }
    nodes
        .iter()
        .map(|&c| {
            let s = times[c].sqrt();
            w_vals.iter().map(|w| w[stride * c] / s).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_reproduces_span() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = build_basis(&[x.clone()], n, 2, 1e10).unwrap();
        let t = DMatrix::from_fn(n, 1, |p, _| 1.0 + 2.0 * x[p] - 0.5 * x[p] * x[p]);
        let fit = b.project(&t);
        assert!((fit - &t).abs().max() < 1e-12);
    }

    #[test]
    fn singular_basis_is_reported() {
        let x = vec![1.0; 10];
        assert!(matches!(build_basis(&[x], 10, 1, 1e10), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn variables_keep_latest() {
        let w = vec![vec![0.0, 1.0, 2.0, 3.0, 4.0]];
        let times = [0.0, 1.0, 2.0, 3.0, 4.0];
        let v = brownian_variables(&w, &times, 4, &[1, 2, 3, 4], 2, 1);
        assert_eq!(v.len(), 2);
        assert!((v[0][0] - 3.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((v[1][0] - 2.0).abs() < 1e-15);
        assert!(brownian_variables(&w, &times, 0, &[1, 2], 4, 1).is_empty());
    }
}
