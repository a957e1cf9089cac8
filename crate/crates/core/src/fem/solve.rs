//! Linear solvers: Jacobi-preconditioned CG for SPD systems and saddle-point
//! solvers for the divergence-constrained gradient.

use nalgebra::{DMatrix, DVector};

use super::sparse::{dot, norm, CsrMatrix};
use crate::{Error, Result};

/// Default relative residual tolerance.
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Saddle systems up to this total size are solved by dense elimination.
pub const DENSE_SADDLE_LIMIT: usize = 1500;

/// Solves A x = b for SPD A; stops when ‖r‖ ≤ rel_tol·‖b‖.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    solve_spd_from(a, b, vec![0.0; b.len()], rel_tol)
}

/// [`solve_spd`] starting from an initial guess.
pub fn solve_spd_from(a: &CsrMatrix, b: &[f64], mut x: Vec<f64>, rel_tol: f64) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n || x.len() != n {
        return Err(Error::InvalidArgument("dimension mismatch in solve_spd".into()));
    }
    if !(rel_tol > 0.0 && rel_tol <= 1e-4) {
        return Err(Error::InvalidArgument(format!("rel_tol must lie in (0, 1e-4], got {rel_tol}")));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let target = rel_tol * b_norm;
    if norm(&r) <= target {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let cap = (10 * n).max(20);
    for _ in 0..cap {
        a.mul_vec_into(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::Solver(format!(
                "conjugate gradients met non-positive curvature {curvature:e}; matrix is not SPD"
            )));
        }
        let alpha = rz / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) <= target {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not reach relative residual {rel_tol:e} within {cap} iterations (n = {n})"
    )))
}

/// Decides whether the constant pressure lies in the kernel of Bᵀ; returns
/// the constraint matrix with one pressure row removed if so.
fn remove_constant_pressure_mode(b: &CsrMatrix) -> (Option<CsrMatrix>, bool) {
    let ones = vec![1.0; b.n_rows()];
    let bt1 = b.mul_transpose_vec(&ones);
    if norm(&bt1) <= 1e-12 * b.frobenius_norm().max(f64::MIN_POSITIVE) {
        (Some(b.without_row(0)), true)
    } else {
        (None, false)
    }
}

fn reinsert_pinned(p: Vec<f64>, pinned: bool) -> Vec<f64> {
    if pinned {
        let mut full = Vec::with_capacity(p.len() + 1);
        full.push(0.0);
        full.extend(p);
        full
    } else {
        p
    }
}

fn check_lu_pivots(u_diag: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let pivots: Vec<f64> = u_diag.map(f64::abs).collect();
    let max = pivots.iter().cloned().fold(0.0, f64::max);
    let min = pivots.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > 1e-13 * max) {
        return Err(Error::Solver(format!(
            "{what} is singular (pivot ratio {:e}); the constraint block is rank deficient",
            min / max
        )));
    }
    Ok(())
}

/// Solves [[A, Bᵀ], [B, 0]] (x, p) = (f, 0).
///
/// A constant-pressure null mode (Bᵀ1 = 0) is removed by pinning pressure
/// dof 0; any further rank deficiency of B is reported as a solver error.
pub fn solve_saddle(a: &CsrMatrix, b: &CsrMatrix, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = a.n_rows();
    if b.n_cols() != n || f.len() != n {
        return Err(Error::InvalidArgument("dimension mismatch in solve_saddle".into()));
    }
    if norm(f) == 0.0 {
        return Ok((vec![0.0; n], vec![0.0; b.n_rows()]));
    }
    if b.n_rows() == 0 {
        return Ok((solve_spd(a, f, 1e-12)?, Vec::new()));
    }
    let (reduced, pinned) = remove_constant_pressure_mode(b);
    let b = reduced.as_ref().unwrap_or(b);
    let m = b.n_rows();
    let (x, p) = if n + m <= DENSE_SADDLE_LIMIT {
        let mut k = DMatrix::zeros(n + m, n + m);
        k.view_mut((0, 0), (n, n)).copy_from(&a.to_dense());
        let bd = b.to_dense();
        k.view_mut((n, 0), (m, n)).copy_from(&bd);
        k.view_mut((0, n), (n, m)).copy_from(&bd.transpose());
        let lu = k.lu();
        check_lu_pivots(lu.u().diagonal().iter().copied(), "saddle system")?;
        let mut rhs = DVector::zeros(n + m);
        rhs.rows_mut(0, n).copy_from_slice(f);
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("saddle system is singular".into()))?;
        (sol.rows(0, n).iter().copied().collect(), sol.rows(n, m).iter().copied().collect())
    } else {
        schur_cg(a, b, f)?
    };
    Ok((x, reinsert_pinned(p, pinned)))
}

/// CG on the pressure Schur complement B A⁻¹ Bᵀ with inner SPD solves.
fn schur_cg(a: &CsrMatrix, b: &CsrMatrix, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let inner_tol = 1e-13;
    let apply_s = |q: &[f64]| -> Result<Vec<f64>> { Ok(b.mul_vec(&solve_spd(a, &b.mul_transpose_vec(q), inner_tol)?)) };
    let a_inv_f = solve_spd(a, f, inner_tol)?;
    let rhs = b.mul_vec(&a_inv_f);
    let m = b.n_rows();
    let mut p = vec![0.0; m];
    let mut r = rhs.clone();
    let target = 1e-11 * norm(&rhs).max(f64::MIN_POSITIVE);
    let mut d = r.clone();
    let mut rr = dot(&r, &r);
    let cap = (10 * m).max(20);
    let mut converged = norm(&r) <= target;
    for _ in 0..cap {
        if converged {
            break;
        }
        let sd = apply_s(&d)?;
        let curvature = dot(&d, &sd);
        if !(curvature > 0.0) {
            return Err(Error::Solver("pressure Schur complement is singular".into()));
        }
        let alpha = rr / curvature;
        for i in 0..m {
            p[i] += alpha * d[i];
            r[i] -= alpha * sd[i];
        }
        let rr_next = dot(&r, &r);
        converged = rr_next.sqrt() <= target;
        let beta = rr_next / rr;
        rr = rr_next;
        for i in 0..m {
            d[i] = r[i] + beta * d[i];
        }
    }
    if !converged {
        return Err(Error::Solver(format!(
            "Schur complement CG did not converge within {cap} iterations"
        )));
    }
    let bt_p = b.mul_transpose_vec(&p);
    let rhs_x: Vec<f64> = f.iter().zip(&bt_p).map(|(f, g)| f - g).collect();
    let x = solve_spd(a, &rhs_x, inner_tol)?;
    Ok((x, p))
}

/// Saddle solve for A = I₃ ⊗ K (three identical scalar blocks), using one
/// dense Cholesky factorization of K and an explicit pressure Schur complement.
pub fn solve_saddle_block3(k: &CsrMatrix, b: &CsrMatrix, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let ns = k.n_rows();
    let n = 3 * ns;
    if b.n_cols() != n || f.len() != n {
        return Err(Error::InvalidArgument("dimension mismatch in solve_saddle_block3".into()));
    }
    if norm(f) == 0.0 {
        return Ok((vec![0.0; n], vec![0.0; b.n_rows()]));
    }
    let chol = k
        .to_dense()
        .cholesky()
        .ok_or_else(|| Error::Solver("velocity block is not positive definite".into()))?;
    // Solves A y = v blockwise for every column of v (n × c).
    let a_solve = |v: &DMatrix<f64>| -> DMatrix<f64> {
        let c = v.ncols();
        let mut stacked = DMatrix::zeros(ns, 3 * c);
        for comp in 0..3 {
            stacked
                .view_mut((0, comp * c), (ns, c))
                .copy_from(&v.view((comp * ns, 0), (ns, c)));
        }
        let solved = chol.solve(&stacked);
        let mut out = DMatrix::zeros(n, c);
        for comp in 0..3 {
            out.view_mut((comp * ns, 0), (ns, c))
                .copy_from(&solved.view((0, comp * c), (ns, c)));
        }
        out
    };
    let (reduced, pinned) = remove_constant_pressure_mode(b);
    let b = reduced.as_ref().unwrap_or(b);
    let bd = b.to_dense();
    let y = a_solve(&bd.transpose());
    let s = &bd * &y;
    let fv = DMatrix::from_column_slice(n, 1, f);
    let a_inv_f = a_solve(&fv);
    let rhs = &bd * &a_inv_f;
    let lu = s.lu();
    check_lu_pivots(lu.u().diagonal().iter().copied(), "pressure Schur complement")?;
    let p = lu
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("pressure Schur complement is singular".into()))?;
    let x = a_inv_f - &y * &p;
    Ok((x.iter().copied().collect(), reinsert_pinned(p.iter().copied().collect(), pinned)))
}
