//! Minimal sparse symmetric linear algebra: CSR storage and preconditioned
//! conjugate gradients.

use crate::error::{Error, Result};

/// Square sparse matrix in compressed sparse row form with sorted,
/// deduplicated column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pub n: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed and the
    /// layout is deterministic (rows in order, columns sorted).
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut per_row: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(r, c, v) in triplets {
            if r >= n {
                return Err(Error::IndexOutOfRange { index: r, n });
            }
            if c >= n {
                return Err(Error::IndexOutOfRange { index: c, n });
            }
            per_row[r].push((c, v));
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for row in &mut per_row {
            row.sort_by_key(|&(c, _)| c);
            let mut iter = row.iter().peekable();
            while let Some(&(c, v)) = iter.next() {
                let mut acc = v;
                while let Some(&&(c2, v2)) = iter.peek() {
                    if c2 == c {
                        acc += v2;
                        iter.next();
                    } else {
                        break;
                    }
                }
                col_indices.push(c);
                values.push(acc);
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            y[r] = acc;
        }
        y
    }

    /// Diagonal entries (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                if self.col_indices[k] == r {
                    d[r] = self.values[k];
                }
            }
        }
        d
    }

    /// Entry (r, c), zero if not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        for k in self.row_offsets[r]..self.row_offsets[r + 1] {
            if self.col_indices[k] == c {
                return self.values[k];
            }
        }
        0.0
    }

    /// Entrywise sum; patterns are merged.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n != other.n {
            return Err(Error::InvalidInput("matrix dimensions differ in add".into()));
        }
        let mut triplets = Vec::with_capacity(self.values.len() + other.values.len());
        for m in [self, other] {
            for r in 0..m.n {
                for k in m.row_offsets[r]..m.row_offsets[r + 1] {
                    triplets.push((r, m.col_indices[k], m.values[k]));
                }
            }
        }
        SparseMatrix::from_triplets(self.n, &triplets)
    }

    /// Largest absolute asymmetry max |A_ij - A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.n {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                let c = self.col_indices[k];
                worst = worst.max((self.values[k] - self.get(c, r)).abs());
            }
        }
        worst
    }
}

/// Preconditioner choice for [`cg_solve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preconditioner {
    None,
    Jacobi,
}

/// Iteration record of a conjugate gradient solve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
}

/// Preconditioned conjugate gradients for symmetric positive definite `A`.
/// Stops when `||b - A x|| / ||b|| <= tol` (absolute on a zero right-hand
/// side); returns the best iterate with `converged = false` when the
/// iteration limit is hit. Non-finite arithmetic signals indefiniteness and
/// is reported as a breakdown error.
pub fn cg_solve(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    max_iterations: usize,
    precond: Preconditioner,
) -> Result<(Vec<f64>, SolveStats)> {
    if b.len() != a.n {
        return Err(Error::InvalidInput("right-hand side length mismatch".into()));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::InvalidInput(format!("cg tolerance must be in (0,1), got {tol}")));
    }
    let n = a.n;
    let norm_b = norm(b);
    let target = if norm_b > 0.0 { tol * norm_b } else { tol };
    let inv_diag: Option<Vec<f64>> = match precond {
        Preconditioner::None => None,
        Preconditioner::Jacobi => {
            let d = a.diagonal();
            if d.iter().any(|&v| v <= 0.0) {
                return Err(Error::Breakdown(
                    "Jacobi preconditioner needs strictly positive diagonal".into(),
                ));
            }
            Some(d.iter().map(|&v| 1.0 / v).collect())
        }
    };

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut res_norm = norm(&r);
    if res_norm <= target {
        return Ok((
            x,
            SolveStats {
                iterations: 0,
                final_residual: res_norm,
                converged: true,
            },
        ));
    }
    let apply_m = |r: &[f64]| -> Vec<f64> {
        match &inv_diag {
            None => r.to_vec(),
            Some(inv) => r.iter().zip(inv).map(|(ri, mi)| ri * mi).collect(),
        }
    };
    let mut z = apply_m(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut best_x = x.clone();
    let mut best_res = res_norm;
    let mut iterations = 0;

    for it in 1..=max_iterations {
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !pap.is_finite() || pap <= 0.0 {
            return Err(Error::Breakdown(format!(
                "curvature p^T A p = {pap:.6e} at iteration {it}; matrix not SPD"
            )));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res_norm = norm(&r);
        if !res_norm.is_finite() {
            return Err(Error::Breakdown(format!("nonfinite residual at iteration {it}")));
        }
        iterations = it;
        if res_norm < best_res {
            best_res = res_norm;
            best_x.copy_from_slice(&x);
        }
        if res_norm <= target {
            return Ok((
                x,
                SolveStats {
                    iterations,
                    final_residual: res_norm,
                    converged: true,
                },
            ));
        }
        z = apply_m(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Ok((
        best_x,
        SolveStats {
            iterations,
            final_residual: best_res,
            converged: false,
        },
    ))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
