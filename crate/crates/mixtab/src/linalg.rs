//! Dense singular value decomposition and hard-threshold low-rank
//! reconstruction.
//!
//! The SVD is a from-scratch one-sided Jacobi (Hestenes) solver: columns of
//! the working matrix are rotated pairwise until mutually orthogonal, the
//! right rotations accumulate into `V`, and the column norms become the
//! singular values. One-sided Jacobi delivers high relative accuracy at the
//! matrix sizes this crate targets (up to a few thousand by a few hundred)
//! and is straightforward to make bit-deterministic.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Sweep budget for the Jacobi solver.
pub const MAX_SWEEPS: usize = 100;

/// Relative orthogonality tolerance: a column pair (p, q) is rotated only
/// while |w_p . w_q| > ORTH_EPS * ||w_p|| ||w_q||.
const ORTH_EPS: f64 = 1e-10;

/// Thin SVD factors `A = U . diag(S) . V^T` with `k = min(n, d)`.
///
/// `U` is n x k and `V` is d x k, both column-orthonormal; `S` is sorted
/// non-increasing and non-negative. Column signs are fixed so that each `U`
/// column's largest-magnitude entry is positive, making the factorization
/// deterministic.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub s: Vec<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    /// Number of singular values strictly above `lambda`.
    pub fn rank_above(&self, lambda: f64) -> usize {
        self.s.iter().take_while(|&&s| s > lambda).count()
    }
}

/// Decompose `a` into thin SVD factors.
pub fn svd(a: &Array2<f64>) -> Result<SvdFactors> {
    svd_with_guess(a, None)
}

/// Decompose `a`, optionally warm-starting the column rotations from the
/// factors of a nearby matrix of the same shape.
///
/// The returned factors satisfy the same contract as [`svd`]; the guess only
/// changes how many sweeps the solver needs. Callers that factorize a slowly
/// changing matrix repeatedly (the imputation loop) pass the previous
/// iteration's factors and typically converge in one or two sweeps.
pub fn svd_with_guess(a: &Array2<f64>, guess: Option<&SvdFactors>) -> Result<SvdFactors> {
    let (n, d) = a.dim();
    debug_assert!(n >= 1 && d >= 1);
    debug_assert!(a.iter().all(|x| x.is_finite()), "svd input must be finite");

    // Work on the orientation with rows >= cols; transposing swaps U and V.
    let transposed = n < d;
    let b = if transposed { a.t().to_owned() } else { a.clone() };
    let (rn, rd) = b.dim();

    // Square right-factor guess in the working orientation.
    let v0 = guess.and_then(|g| {
        let sq = if transposed { &g.u } else { &g.v };
        (sq.dim() == (rd, rd)).then_some(sq)
    });

    let mut w: Vec<Vec<f64>> = match v0 {
        Some(v0) => {
            let bw = b.dot(v0);
            (0..rd).map(|j| bw.column(j).to_vec()).collect()
        }
        None => (0..rd).map(|j| b.column(j).to_vec()).collect(),
    };
    let mut v: Vec<Vec<f64>> = match v0 {
        Some(v0) => (0..rd).map(|j| v0.column(j).to_vec()).collect(),
        None => (0..rd)
            .map(|j| {
                let mut e = vec![0.0; rd];
                e[j] = 1.0;
                e
            })
            .collect(),
    };

    one_sided_jacobi(&mut w, &mut v)?;

    // Column norms are the singular values; normalized columns the left factor.
    let mut norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..rd).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut left: Vec<Vec<f64>> = Vec::with_capacity(rd);
    let mut right: Vec<Vec<f64>> = Vec::with_capacity(rd);
    let mut s: Vec<f64> = Vec::with_capacity(rd);
    for &idx in &order {
        let norm = norms[idx];
        s.push(norm);
        if norm > 0.0 {
            left.push(w[idx].iter().map(|x| x / norm).collect());
        } else {
            left.push(Vec::new()); // completed below
        }
        right.push(std::mem::take(&mut v[idx]));
    }
    norms.sort_by(|a, b| b.partial_cmp(a).unwrap());

    complete_zero_columns(&mut left, rn);

    // Assemble in the caller's orientation; k = rd = min(n, d).
    let (u_cols, v_cols) = if transposed { (right, left) } else { (left, right) };
    let mut u = Array2::zeros((n, rd));
    let mut vv = Array2::zeros((d, rd));
    for (j, col) in u_cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            u[[i, j]] = x;
        }
    }
    for (j, col) in v_cols.iter().enumerate() {
        for (i, &x) in col.iter().enumerate() {
            vv[[i, j]] = x;
        }
    }

    fix_column_signs(&mut u, &mut vv);

    Ok(SvdFactors { u, s, v: vv })
}

/// `U . diag(S') . V^T` where `S'_i = S_i` if `S_i > lambda` else 0.
pub fn hard_threshold_reconstruct(f: &SvdFactors, lambda: f64) -> Array2<f64> {
    debug_assert!(lambda >= 0.0);
    let n = f.u.nrows();
    let d = f.v.nrows();
    let r = f.rank_above(lambda);
    if r == 0 {
        return Array2::zeros((n, d));
    }
    // (U_r * S_r) . V_r^T over the retained components only.
    let mut us = Array2::zeros((n, r));
    for j in 0..r {
        let sj = f.s[j];
        for i in 0..n {
            us[[i, j]] = f.u[[i, j]] * sj;
        }
    }
    let vr = f.v.slice(ndarray::s![.., ..r]).to_owned();
    us.dot(&vr.t())
}

fn one_sided_jacobi(w: &mut [Vec<f64>], v: &mut [Vec<f64>]) -> Result<()> {
    let d = w.len();
    if d < 2 {
        return Ok(());
    }
    // Columns whose norm falls below eps * ||A||_F carry no singular value
    // resolvable in double precision. Flush them to exact zero each sweep:
    // the rounding residue left when a rotation annihilates a (near-)parallel
    // column otherwise keeps re-correlating with its neighbours at full
    // relative weight, and the sweep loop never settles.
    let floor_sq = {
        let total: f64 = w.iter().flatten().map(|x| x * x).sum();
        total * (f64::EPSILON * f64::EPSILON)
    };
    for _sweep in 0..MAX_SWEEPS {
        for col in w.iter_mut() {
            let norm_sq: f64 = col.iter().map(|x| x * x).sum();
            if norm_sq > 0.0 && norm_sq <= floor_sq {
                col.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        let mut rotated = false;
        for p in 0..d - 1 {
            for q in p + 1..d {
                let (alpha, beta, gamma) = {
                    let wp = &w[p];
                    let wq = &w[q];
                    let mut a = 0.0;
                    let mut b = 0.0;
                    let mut g = 0.0;
                    for i in 0..wp.len() {
                        a += wp[i] * wp[i];
                        b += wq[i] * wq[i];
                        g += wp[i] * wq[i];
                    }
                    (a, b, g)
                };
                if gamma == 0.0 || gamma.abs() <= ORTH_EPS * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(w, p, q, c, s);
                rotate_pair(v, p, q, c, s);
            }
        }
        if !rotated {
            return Ok(());
        }
    }
    Err(Error::Convergence { sweeps: MAX_SWEEPS })
}

#[inline]
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for i in 0..cp.len() {
        let x = cp[i];
        let y = cq[i];
        cp[i] = c * x - s * y;
        cq[i] = s * x + c * y;
    }
}

/// Replace empty (zero-singular-value) left columns with an orthonormal
/// completion, picking for each the canonical basis vector with the largest
/// residual against the columns already present.
fn complete_zero_columns(cols: &mut [Vec<f64>], n: usize) {
    for i in 0..cols.len() {
        if !cols[i].is_empty() {
            continue;
        }
        let mut proj_sq = vec![0.0; n];
        for col in cols.iter().filter(|c| !c.is_empty()) {
            for (j, &x) in col.iter().enumerate() {
                proj_sq[j] += x * x;
            }
        }
        let mut best = 0usize;
        for j in 1..n {
            if proj_sq[j] < proj_sq[best] {
                best = j;
            }
        }
        let mut r = vec![0.0; n];
        r[best] = 1.0;
        // Two Gram-Schmidt passes keep the completion orthonormal.
        for _ in 0..2 {
            for col in cols.iter().filter(|c| !c.is_empty()) {
                let dot: f64 = col.iter().zip(&r).map(|(a, b)| a * b).sum();
                for (j, x) in r.iter_mut().enumerate() {
                    *x -= dot * col[j];
                }
            }
            let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in r.iter_mut() {
                *x /= norm;
            }
        }
        cols[i] = r;
    }
}

/// Make each U column's largest-magnitude entry positive, negating the
/// matching V column so the product is unchanged.
fn fix_column_signs(u: &mut Array2<f64>, v: &mut Array2<f64>) {
    let (n, k) = u.dim();
    for j in 0..k {
        let mut arg = 0usize;
        for i in 1..n {
            if u[[i, j]].abs() > u[[arg, j]].abs() {
                arg = i;
            }
        }
        if u[[arg, j]] < 0.0 {
            for i in 0..n {
                u[[i, j]] = -u[[i, j]];
            }
            for i in 0..v.nrows() {
                v[[i, j]] = -v[[i, j]];
            }
        }
    }
}
