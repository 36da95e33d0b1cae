//! Compressed sparse row storage and Jacobi-preconditioned conjugate gradients.

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix with the given sorted column lists per row and zero values.
    pub fn from_pattern(rows: &[Vec<usize>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n: rows.len(),
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Position of entry `(i, j)` in `values`.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        self.col_idx[a..b].binary_search(&j).ok().map(|k| a + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`; rows are independent so the result does not depend on the
    /// thread count.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        });
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` for symmetric positive definite `A`, starting from zero.
/// Nonpositive curvature `pᵀAp ≤ 0` aborts with [`Error::Curvature`].
pub fn pcg(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<(Vec<f64>, CgReport)> {
    let n = a.n;
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            x,
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                converged: true,
            },
        ));
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Curvature {
                curvature,
                iteration: it,
            });
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = norm2(&r) / b_norm;
        if rel <= rel_tol {
            return Ok((
                x,
                CgReport {
                    iterations: it + 1,
                    relative_residual: rel,
                    converged: true,
                },
            ));
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        x,
        CgReport {
            iterations: max_iter,
            relative_residual: rel,
            converged: false,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let rows: Vec<Vec<usize>> = (0..n)
            .map(|i| (i.saturating_sub(1)..(i + 2).min(n)).collect())
            .collect();
        let mut a = CsrMatrix::from_pattern(&rows);
        for i in 0..n {
            for j in rows[i].clone() {
                let k = a.find(i, j).unwrap();
                a.values[k] = if i == j { 2.0 } else { -1.0 };
            }
        }
        a
    }

    #[test]
    fn solves_tridiagonal_system() {
        let n = 50;
        let a = laplacian_1d(n);
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        a.mul_vec(&exact, &mut b);
        let (x, rep) = pcg(&a, &b, 1e-12, 500).unwrap();
        assert!(rep.converged);
        for i in 0..n {
            assert!((x[i] - exact[i]).abs() < 1e-9);
        }
        assert_eq!(a.asymmetry(), 0.0);
    }

    #[test]
    fn indefinite_matrix_reports_curvature() {
        let mut a = laplacian_1d(4);
        for k in 0..a.nnz() {
            a.values[k] = -a.values[k];
        }
        let err = pcg(&a, &[1.0, 0.0, 0.0, 0.0], 1e-10, 10).unwrap_err();
        assert!(matches!(err, Error::Curvature { .. }));
    }
}
