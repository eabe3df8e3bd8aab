//! Least squares via Householder QR with column pivoting.
//!
//! Narrow estimation windows produce nearly collinear designs (age, age²,
//! threshold dummies on a handful of distinct ages), so the solver avoids the
//! normal equations entirely: it factors X·P = Q·R with column pivoting,
//! detects rank from the R diagonal at a relative tolerance, and reports which
//! columns are dependent when the design is singular.

use nalgebra::{DMatrix, DVector};

/// Relative rank tolerance on the R diagonal.
pub const RANK_TOL: f64 = 1e-10;

/// A solved least-squares system.
#[derive(Debug, Clone)]
pub struct Lstsq {
    /// Coefficients in the original column order of X.
    pub coef: DVector<f64>,
    /// (XᵀX)⁻¹ in the original column order, for sandwich covariances.
    pub xtx_inv: DMatrix<f64>,
    pub rank: usize,
}

/// Outcome of a rank-deficient factorization: the original indices of the
/// columns that were pivoted out (linearly dependent on the kept ones).
#[derive(Debug, Clone)]
pub struct RankDeficient {
    pub dependent_columns: Vec<usize>,
    pub rank: usize,
}

/// Solve min ‖y − Xβ‖² with rank detection.
///
/// Returns `Err` with the dependent column indices when `rank(X) < ncols(X)`
/// at relative tolerance `RANK_TOL`.
pub fn lstsq(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Lstsq, RankDeficient> {
    let (coef, rank, perm, r, qty) = pivoted_qr_solve(x, y);
    let k = x.ncols();
    if rank < k {
        return Err(RankDeficient {
            dependent_columns: perm[rank..].to_vec(),
            rank,
        });
    }
    let _ = qty;
    let xtx_inv = xtx_inverse_from_r(&r, &perm);
    Ok(Lstsq {
        coef: coef.expect("full rank solve"),
        xtx_inv,
        rank,
    })
}

/// Indices of columns that are linearly dependent on the others, in original
/// order. Empty when X has full column rank.
pub fn dependent_columns(x: &DMatrix<f64>) -> Vec<usize> {
    let y = DVector::zeros(x.nrows());
    let (_, rank, perm, _, _) = pivoted_qr_solve(x, &y);
    let mut dep: Vec<usize> = perm[rank..].to_vec();
    dep.sort_unstable();
    dep
}

/// Core factorization. Returns (coef if full rank, rank, permutation,
/// R (k×k upper, pivoted order), Qᵀy prefix).
#[allow(clippy::type_complexity)]
fn pivoted_qr_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
) -> (Option<DVector<f64>>, usize, Vec<usize>, DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    let k = x.ncols();
    let mut a = x.clone();
    let mut qty = y.clone();
    let mut perm: Vec<usize> = (0..k).collect();

    let steps = k.min(n);
    let mut rank = steps;
    let mut r00 = 0.0_f64;

    for j in 0..steps {
        // Exact trailing norms: recompute rather than downdate. The designs
        // here are small enough that robustness wins over the saved pass.
        let mut best = j;
        let mut best_norm = trailing_norm_sq(&a, j, j);
        for c in (j + 1)..k {
            let nc = trailing_norm_sq(&a, j, c);
            if nc > best_norm {
                best_norm = nc;
                best = c;
            }
        }
        if best != j {
            a.swap_columns(j, best);
            perm.swap(j, best);
        }

        let col_norm = best_norm.sqrt();
        if j == 0 {
            r00 = col_norm;
        }
        if col_norm <= RANK_TOL * r00 || col_norm == 0.0 {
            rank = j;
            break;
        }

        // Householder reflector for column j.
        let alpha = if a[(j, j)] >= 0.0 { -col_norm } else { col_norm };
        let mut v = DVector::zeros(n - j);
        for i in j..n {
            v[i - j] = a[(i, j)];
        }
        v[0] -= alpha;
        let vtv = v.dot(&v);
        if vtv > 0.0 {
            let scale = 2.0 / vtv;
            for c in j..k {
                let mut dot = 0.0;
                for i in j..n {
                    dot += v[i - j] * a[(i, c)];
                }
                let dot = dot * scale;
                for i in j..n {
                    a[(i, c)] -= dot * v[i - j];
                }
            }
            let mut dot = 0.0;
            for i in j..n {
                dot += v[i - j] * qty[i];
            }
            let dot = dot * scale;
            for i in j..n {
                qty[i] -= dot * v[i - j];
            }
        }
        a[(j, j)] = alpha;
        for i in (j + 1)..n {
            a[(i, j)] = 0.0;
        }
    }

    if n < k {
        rank = rank.min(n);
    }

    let mut r = DMatrix::zeros(k.min(n), k);
    for i in 0..r.nrows() {
        for c in i..k {
            r[(i, c)] = a[(i, c)];
        }
    }

    let coef = if rank == k {
        // Back substitution on the k×k leading block.
        let mut z = DVector::zeros(k);
        for i in (0..k).rev() {
            let mut s = qty[i];
            for c in (i + 1)..k {
                s -= r[(i, c)] * z[c];
            }
            z[i] = s / r[(i, i)];
        }
        let mut beta = DVector::zeros(k);
        for (pos, &orig) in perm.iter().enumerate() {
            beta[orig] = z[pos];
        }
        Some(beta)
    } else {
        None
    };

    let qty_prefix = DVector::from_fn(k.min(n), |i, _| qty[i]);
    (coef, rank, perm, r, qty_prefix)
}

fn trailing_norm_sq(a: &DMatrix<f64>, from_row: usize, col: usize) -> f64 {
    let mut s = 0.0;
    for i in from_row..a.nrows() {
        s += a[(i, col)] * a[(i, col)];
    }
    s
}

/// (XᵀX)⁻¹ = P R⁻¹ R⁻ᵀ Pᵀ for a full-rank k×k R.
fn xtx_inverse_from_r(r: &DMatrix<f64>, perm: &[usize]) -> DMatrix<f64> {
    let k = perm.len();
    // R⁻¹ by back substitution against the identity.
    let mut rinv = DMatrix::zeros(k, k);
    for col in 0..k {
        for i in (0..=col).rev() {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for c in (i + 1)..=col {
                s -= r[(i, c)] * rinv[(c, col)];
            }
            rinv[(i, col)] = s / r[(i, i)];
        }
    }
    let inv_pivoted = &rinv * rinv.transpose();
    let mut out = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            out[(perm[i], perm[j])] = inv_pivoted[(i, j)];
        }
    }
    out
}
