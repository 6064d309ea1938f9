//! Small dense linear algebra kept inside the crate so every routine stays
//! generic over the scalar type: an implicit-shift QL eigensolver for
//! symmetric tridiagonal matrices (the shape every per-mode radial operator
//! takes after measure symmetrization) and a partially pivoted LU for the
//! implicit time-stepper's Newton systems.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigendecomposition of a symmetric tridiagonal matrix.
///
/// `values` ascend; `vectors[j]` is the orthonormal eigenvector for
/// `values[j]` (component `i` at `vectors[j][i]`).
#[derive(Debug, Clone)]
pub struct SymTriEigen<T> {
    pub values: Vec<T>,
    pub vectors: Vec<Vec<T>>,
}

/// Full eigendecomposition of a symmetric tridiagonal matrix given its
/// diagonal and subdiagonal, by QL iteration with implicit shifts.
pub fn sym_tridiag_eigen<T: Scalar>(diag: &[T], off: &[T]) -> Result<SymTriEigen<T>> {
    let n = diag.len();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if off.len() + 1 != n {
        return Err(Error::InvalidInput(format!(
            "subdiagonal length {} does not fit dimension {}",
            off.len(),
            n
        )));
    }
    let mut d = diag.to_vec();
    let mut e = off.to_vec();
    e.push(T::zero());
    // Rotation accumulator; z[k][j] is component k of (unsorted) eigenvector j.
    let mut z = vec![vec![T::zero(); n]; n];
    for (k, row) in z.iter_mut().enumerate() {
        row[k] = T::one();
    }
    let one = T::one();
    let two = T::lit(2.0);
    for l in 0..n {
        let mut sweeps = 0usize;
        loop {
            // First negligible subdiagonal at or after l splits the problem.
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > 60 {
                return Err(Error::NoConvergence(format!(
                    "QL sweep budget exhausted at row {l} of {n}"
                )));
            }
            // Implicit shift from the 2x2 corner.
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(one);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = one;
            let mut c = one;
            let mut p = T::zero();
            let mut deflated = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for zk in z.iter_mut() {
                    f = zk[i + 1];
                    zk[i + 1] = s * zk[i] + c * f;
                    zk[i] = c * zk[i] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).expect("eigenvalues must be comparable"));
    let values = order.iter().map(|&j| d[j]).collect();
    let vectors = order.iter().map(|&j| (0..n).map(|k| z[k][j]).collect()).collect();
    Ok(SymTriEigen { values, vectors })
}

/// In-place LU factorization with partial pivoting of a row-major square
/// matrix. Returns the pivot row chosen at each elimination step.
pub fn lu_factor<T: Scalar>(a: &mut [Vec<T>]) -> Result<Vec<usize>> {
    let n = a.len();
    let mut piv = vec![0usize; n];
    for k in 0..n {
        let mut p = k;
        let mut biggest = a[k][k].abs();
        for (i, row) in a.iter().enumerate().skip(k + 1) {
            if row[k].abs() > biggest {
                biggest = row[k].abs();
                p = i;
            }
        }
        if biggest == T::zero() {
            return Err(Error::NoConvergence(format!("singular matrix at elimination step {k}")));
        }
        piv[k] = p;
        if p != k {
            a.swap(p, k);
        }
        let pivot = a[k][k];
        for i in k + 1..n {
            let m = a[i][k] / pivot;
            a[i][k] = m;
            for j in k + 1..n {
                let upper = a[k][j];
                a[i][j] = a[i][j] - m * upper;
            }
        }
    }
    Ok(piv)
}

/// Solves `A x = b` given the factorization from [`lu_factor`], overwriting
/// `b` with the solution.
pub fn lu_solve<T: Scalar>(a: &[Vec<T>], piv: &[usize], b: &mut [T]) {
    let n = a.len();
    for k in 0..n {
        b.swap(k, piv[k]);
    }
    for i in 1..n {
        let mut acc = b[i];
        for j in 0..i {
            acc = acc - a[i][j] * b[j];
        }
        b[i] = acc;
    }
    for i in (0..n).rev() {
        let mut acc = b[i];
        for j in i + 1..n {
            acc = acc - a[i][j] * b[j];
        }
        b[i] = acc / a[i][i];
    }
}

/// One-shot dense solve, consuming the matrix.
pub fn solve_dense<T: Scalar>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Result<Vec<T>> {
    if a.len() != b.len() || a.iter().any(|r| r.len() != b.len()) {
        return Err(Error::InvalidInput("solve_dense needs a square system".into()));
    }
    let piv = lu_factor(&mut a)?;
    lu_solve(&a, &piv, &mut b);
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag_matvec(diag: &[f64], off: &[f64], v: &[f64]) -> Vec<f64> {
        let n = diag.len();
        (0..n)
            .map(|i| {
                let mut acc = diag[i] * v[i];
                if i > 0 {
                    acc += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += off[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn eigen_matches_discrete_dirichlet_chain() {
        // Second-difference matrix with Dirichlet ends: eigenvalues
        // 4 sin^2(k pi / (2(n+1))), k = 1..n.
        let n = 24;
        let diag = vec![2.0f64; n];
        let off = vec![-1.0f64; n - 1];
        let eig = sym_tridiag_eigen(&diag, &off).unwrap();
        for (k, &lam) in eig.values.iter().enumerate() {
            let expect = 4.0 * ((k + 1) as f64 * std::f64::consts::PI / (2.0 * (n as f64 + 1.0))).sin().powi(2);
            assert!((lam - expect).abs() < 1e-12, "k = {k}: {lam} vs {expect}");
        }
    }

    #[test]
    fn eigen_residuals_and_orthonormality_on_pseudorandom_matrices() {
        // Deterministic "random" entries from a simple linear congruential walk.
        let mut state = 88172645463325252u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for n in [1usize, 2, 3, 17, 40] {
            let diag: Vec<f64> = (0..n).map(|_| 4.0 * next()).collect();
            let off: Vec<f64> = (0..n.saturating_sub(1)).map(|_| 3.0 * next()).collect();
            let scale: f64 = diag.iter().chain(off.iter()).fold(0.0f64, |m, &v| m.max(v.abs()));
            let eig = sym_tridiag_eigen(&diag, &off).unwrap();
            for j in 0..n {
                let av = tridiag_matvec(&diag, &off, &eig.vectors[j]);
                for i in 0..n {
                    let resid = (av[i] - eig.values[j] * eig.vectors[j][i]).abs();
                    assert!(resid < 1e-13 * scale.max(1.0) * n as f64, "n = {n} j = {j}: residual {resid}");
                }
                for l in 0..=j {
                    let dot: f64 = (0..n).map(|i| eig.vectors[j][i] * eig.vectors[l][i]).sum();
                    let expect = if l == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).abs() < 1e-12, "orthonormality failure at ({j},{l}): {dot}");
                }
            }
            for w in eig.values.windows(2) {
                assert!(w[0] <= w[1], "eigenvalues must ascend");
            }
        }
    }

    #[test]
    fn lu_solves_and_detects_singularity() {
        let a = vec![
            vec![2.0f64, 1.0, -1.0],
            vec![-3.0, -1.0, 2.0],
            vec![-2.0, 1.0, 2.0],
        ];
        let b = vec![8.0f64, -11.0, -3.0];
        let x = solve_dense(a.clone(), b.clone()).unwrap();
        for (i, bi) in b.iter().enumerate() {
            let ax: f64 = (0..3).map(|j| a[i][j] * x[j]).sum();
            assert!((ax - bi).abs() < 1e-12);
        }
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12 && (x[2] + 1.0).abs() < 1e-12);

        let singular = vec![vec![1.0f64, 2.0], vec![2.0, 4.0]];
        assert!(solve_dense(singular, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn lu_handles_pivoting_order() {
        // Leading zero forces an immediate row swap.
        let a = vec![vec![0.0f64, 1.0], vec![1.0, 0.0]];
        let x = solve_dense(a, vec![3.0, 7.0]).unwrap();
        assert_eq!(x, vec![7.0, 3.0]);
    }
}
