//! Matrix-free Hermitian eigensolvers.
//!
//! Two methods share the [`HermitianOperator`] interface:
//!
//! * [`lobpcg`] finds a few lowest eigenpairs with a preconditioned block
//!   iteration, used for ground states.
//! * [`lowest_below`] extracts every eigenvalue below a cutoff with
//!   Chebyshev-filtered subspace iteration, used for level counting.
//!
//! Vectors are plain `Vec<Complex64>` with the Euclidean inner product; any
//! quadrature weight is a constant factor and does not change eigenpairs.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub trait HermitianOperator {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[Complex64], out: &mut [Complex64]);

    /// Approximate inverse of `(A − shift)` applied in place.
    fn precondition(&self, _r: &mut [Complex64], _shift: f64) {}

    /// Projection onto an invariant subspace (e.g. a symmetry sector).
    fn project(&self, _x: &mut [Complex64]) {}

    /// Upper bound on the spectrum.
    fn upper_bound(&self) -> f64;
}

pub(crate) fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(y: &mut [Complex64], alpha: Complex64, x: &[Complex64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

fn scale(x: &mut [Complex64], s: f64) {
    x.iter_mut().for_each(|v| *v *= s);
}

fn random_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
    (0..dim).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
}

/// Orthonormalizes `vecs` in place (modified Gram–Schmidt, two passes).
/// Columns that collapse are replaced by fresh random directions.
fn orthonormalize<Op: HermitianOperator + ?Sized>(op: &Op, vecs: &mut [Vec<Complex64>], rng: &mut ChaCha8Rng) {
    for i in 0..vecs.len() {
        for attempt in 0..4 {
            let before = norm(&vecs[i]);
            for _ in 0..2 {
                for j in 0..i {
                    let (head, tail) = vecs.split_at_mut(i);
                    let c = dot(&head[j], &tail[0]);
                    axpy(&mut tail[0], -c, &head[j]);
                }
            }
            let after = norm(&vecs[i]);
            if after > 1e-10 * before && after > 0.0 {
                scale(&mut vecs[i], 1.0 / after);
                break;
            }
            let mut fresh = random_vector(op.dim(), rng);
            op.project(&mut fresh);
            vecs[i] = fresh;
            if attempt == 3 {
                let n = norm(&vecs[i]);
                scale(&mut vecs[i], 1.0 / n);
            }
        }
    }
}

/// Rayleigh–Ritz on an orthonormal basis with precomputed images.
fn rayleigh_ritz(basis: &[Vec<Complex64>], images: &[Vec<Complex64>]) -> (Vec<f64>, DMatrix<Complex64>) {
    let m = basis.len();
    let mut h = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = dot(&basis[i], &images[j]);
            h[(i, j)] = v;
            h[(j, i)] = v.conj();
        }
        h[(i, i)] = Complex64::new(h[(i, i)].re, 0.0);
    }
    sorted_eigen(h)
}

fn sorted_eigen(h: DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let m = h.nrows();
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::<Complex64>::zeros(m, m);
    for (new, &old) in order.iter().enumerate() {
        vecs.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vecs)
}

fn combine(vecs: &[Vec<Complex64>], coeffs: &DMatrix<Complex64>, col: usize) -> Vec<Complex64> {
    let dim = vecs[0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); dim];
    for (i, v) in vecs.iter().enumerate() {
        let c = coeffs[(i, col)];
        if c != Complex64::new(0.0, 0.0) {
            axpy(&mut out, c, v);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// Lowest Ritz value after each iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct LobpcgOptions {
    /// Relative eigenvalue tolerance.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LobpcgOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 2000, seed: 7 }
    }
}

/// Lowest `count` eigenpairs by locally optimal block preconditioned
/// conjugate gradients. `initial` seeds the block (padded with random vectors).
pub fn lobpcg<Op: HermitianOperator + ?Sized>(
    op: &Op,
    count: usize,
    initial: &[Vec<Complex64>],
    opts: &LobpcgOptions,
) -> Result<EigenResult> {
    let dim = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x: Vec<Vec<Complex64>> = initial.iter().take(count).cloned().collect();
    while x.len() < count {
        x.push(random_vector(dim, &mut rng));
    }
    for v in x.iter_mut() {
        op.project(v);
    }
    orthonormalize(op, &mut x, &mut rng);
    let mut ax: Vec<Vec<Complex64>> = x.iter().map(|v| apply(op, v)).collect();
    let (theta, c) = rayleigh_ritz(&x, &ax);
    let rotated: Vec<Vec<Complex64>> = (0..count).map(|j| combine(&x, &c, j)).collect();
    ax = (0..count).map(|j| combine(&ax, &c, j)).collect();
    x = rotated;
    let mut theta: Vec<f64> = theta;

    // residual target: eigenvalue error scales like |r|²/gap
    let res_tol = opts.tol.sqrt() * 0.1;
    let mut p: Vec<Vec<Complex64>> = Vec::new();
    let mut ap: Vec<Vec<Complex64>> = Vec::new();
    let mut history = vec![theta[0]];
    let mut residuals = vec![f64::INFINITY; count];

    for iter in 0..opts.max_iter {
        let mut w = Vec::new();
        let mut active = Vec::new();
        for j in 0..count {
            let mut r = ax[j].clone();
            axpy(&mut r, Complex64::new(-theta[j], 0.0), &x[j]);
            residuals[j] = norm(&r) / theta[j].abs().max(1.0);
            if residuals[j] > res_tol {
                op.precondition(&mut r, theta[j]);
                op.project(&mut r);
                active.push(j);
                w.push(r);
            }
        }
        if active.is_empty() {
            return Ok(EigenResult { values: theta, vectors: x, iterations: iter, residuals, history });
        }

        // basis [X, W, P]: W and P orthogonalized against X and each other
        let mut basis: Vec<Vec<Complex64>> = x.clone();
        let mut images: Vec<Vec<Complex64>> = ax.clone();
        let mut extra: Vec<Vec<Complex64>> = Vec::new();
        let mut extra_img: Vec<Vec<Complex64>> = Vec::new();
        for v in w.into_iter() {
            extra.push(v);
            extra_img.push(Vec::new());
        }
        for (v, av) in p.iter().zip(&ap) {
            extra.push(v.clone());
            extra_img.push(av.clone());
        }
        let mut kept_extra = Vec::new();
        for (mut v, av) in extra.into_iter().zip(extra_img) {
            let n0 = norm(&v);
            if n0 == 0.0 {
                continue;
            }
            let mut av = av;
            // orthogonalize against the accepted basis; track images when known
            for _ in 0..2 {
                for (b, ab) in basis.iter().zip(&images) {
                    let c = dot(b, &v);
                    axpy(&mut v, -c, b);
                    if !av.is_empty() {
                        axpy(&mut av, -c, ab);
                    }
                }
            }
            let n1 = norm(&v);
            if n1 <= 1e-10 * n0 {
                continue;
            }
            scale(&mut v, 1.0 / n1);
            if av.is_empty() {
                av = apply(op, &v);
            } else {
                scale(&mut av, 1.0 / n1);
                // refresh to avoid drift in the tracked image
                av = apply(op, &v);
            }
            basis.push(v);
            images.push(av);
            kept_extra.push(());
        }
        let (vals, coeffs) = rayleigh_ritz(&basis, &images);
        let new_x: Vec<Vec<Complex64>> = (0..count).map(|j| combine(&basis, &coeffs, j)).collect();
        let new_ax: Vec<Vec<Complex64>> = (0..count).map(|j| combine(&images, &coeffs, j)).collect();
        // P = part of the new X spanned by the non-X directions
        let mut tail_coeffs = coeffs.clone();
        for i in 0..count {
            for j in 0..coeffs.ncols() {
                tail_coeffs[(i, j)] = Complex64::new(0.0, 0.0);
            }
        }
        p = (0..count).map(|j| combine(&basis, &tail_coeffs, j)).collect();
        ap = (0..count).map(|j| combine(&images, &tail_coeffs, j)).collect();
        x = new_x;
        ax = new_ax;
        for v in x.iter_mut() {
            op.project(v);
        }
        theta = vals[..count].to_vec();
        history.push(theta[0]);
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::NonConvergence { method: "LOBPCG", iterations: opts.max_iter, residual: worst })
}

fn apply<Op: HermitianOperator + ?Sized>(op: &Op, x: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); x.len()];
    op.apply(x, &mut out);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct FilterOptions {
    /// Residual tolerance relative to `max(|θ|, 1)` for the kept Ritz pairs.
    pub tol: f64,
    pub degree: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Initial guess for the number of eigenvalues below the cutoff.
    pub guess: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { tol: 1e-7, degree: 24, max_iter: 200, seed: 11, guess: 16 }
    }
}

/// Chebyshev polynomial filter damping `[a, b]` relative to `a0` (scaled
/// three-term recurrence).
fn chebyshev_filter<Op: HermitianOperator + ?Sized>(op: &Op, x: &mut [Vec<Complex64>], degree: usize, a: f64, b: f64, a0: f64) {
    let e = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    let sigma1 = e / (a0 - c);
    for v in x.iter_mut() {
        let mut sigma = sigma1;
        let mut prev = v.clone();
        let mut cur = apply(op, &prev);
        axpy(&mut cur, Complex64::new(-c, 0.0), &prev);
        scale(&mut cur, sigma1 / e);
        for _ in 1..degree {
            let sigma2 = 1.0 / (2.0 / sigma1 - sigma);
            let mut next = apply(op, &cur);
            axpy(&mut next, Complex64::new(-c, 0.0), &cur);
            scale(&mut next, 2.0 * sigma2 / e);
            axpy(&mut next, Complex64::new(-sigma * sigma2, 0.0), &prev);
            prev = cur;
            cur = next;
            sigma = sigma2;
        }
        *v = cur;
    }
}

/// Every eigenpair with eigenvalue `≤ cutoff`, by Chebyshev-filtered
/// subspace iteration. The block grows until its top Ritz value clears the
/// cutoff. Returns eigenvalues in ascending order.
pub fn lowest_below<Op: HermitianOperator + ?Sized>(op: &Op, cutoff: f64, opts: &FilterOptions) -> Result<EigenResult> {
    let dim = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block = (opts.guess + opts.guess / 4 + 8).min(dim);
    let mut x: Vec<Vec<Complex64>> = (0..block).map(|_| random_vector(dim, &mut rng)).collect();
    for v in x.iter_mut() {
        op.project(v);
    }
    let upper = op.upper_bound();
    let mut history = Vec::new();
    let mut residuals = Vec::new();
    let mut theta: Vec<f64> = Vec::new();

    for iter in 0..opts.max_iter {
        orthonormalize(op, &mut x, &mut rng);
        let ax: Vec<Vec<Complex64>> = x.iter().map(|v| apply(op, v)).collect();
        let (vals, coeffs) = rayleigh_ritz(&x, &ax);
        let rotated: Vec<Vec<Complex64>> = (0..block).map(|j| combine(&x, &coeffs, j)).collect();
        let images: Vec<Vec<Complex64>> = (0..block).map(|j| combine(&ax, &coeffs, j)).collect();
        x = rotated;
        theta = vals;
        history.push(theta[0]);
        residuals = (0..block)
            .map(|j| {
                let mut r = images[j].clone();
                axpy(&mut r, Complex64::new(-theta[j], 0.0), &x[j]);
                norm(&r) / theta[j].abs().max(1.0)
            })
            .collect();

        let top = theta[block - 1];
        if top <= cutoff {
            if block == dim {
                break;
            }
            // the block cannot hold everything below the cutoff yet
            let grow = (block / 2).max(8).min(dim - block);
            for _ in 0..grow {
                let mut v = random_vector(dim, &mut rng);
                op.project(&mut v);
                x.push(v);
            }
            block += grow;
            continue;
        }
        let below = theta.iter().filter(|&&t| t <= cutoff).count();
        // keep a buffer of a few vectors above the cutoff so the boundary is resolved
        let guard = (below + 3).min(block);
        let done = residuals[..guard].iter().all(|&r| r <= opts.tol);
        if done {
            let vectors = x[..below].to_vec();
            return Ok(EigenResult {
                values: theta[..below].to_vec(),
                vectors,
                iterations: iter,
                residuals: residuals[..below].to_vec(),
                history,
            });
        }
        if below + 6 > block && block < dim {
            let grow = (below + 8 - block).min(dim - block);
            for _ in 0..grow {
                let mut v = random_vector(dim, &mut rng);
                op.project(&mut v);
                x.push(v);
            }
            block += grow;
            continue;
        }
        // damp everything above the block's top Ritz value
        chebyshev_filter(op, &mut x, opts.degree, top, upper, theta[0]);
        for v in x.iter_mut() {
            op.project(v);
        }
    }
    if block == dim {
        let below = theta.iter().filter(|&&t| t <= cutoff).count();
        return Ok(EigenResult {
            values: theta[..below].to_vec(),
            vectors: x[..below].to_vec(),
            iterations: opts.max_iter,
            residuals: residuals[..below].to_vec(),
            history,
        });
    }
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    Err(Error::NonConvergence { method: "Chebyshev subspace iteration", iterations: opts.max_iter, residual: worst })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense Hermitian test matrix with a Jacobi preconditioner.
    struct Dense {
        m: DMatrix<Complex64>,
    }

    impl HermitianOperator for Dense {
        fn dim(&self) -> usize {
            self.m.nrows()
        }
        fn apply(&self, x: &[Complex64], out: &mut [Complex64]) {
            for i in 0..self.dim() {
                out[i] = (0..self.dim()).map(|j| self.m[(i, j)] * x[j]).sum();
            }
        }
        fn precondition(&self, r: &mut [Complex64], shift: f64) {
            for i in 0..self.dim() {
                let d = (self.m[(i, i)].re - shift).abs().max(1e-2);
                r[i] /= d;
            }
        }
        fn upper_bound(&self) -> f64 {
            (0..self.dim()).map(|i| (0..self.dim()).map(|j| self.m[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
        }
    }

    fn test_matrix(n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(i as f64 * 0.5 + rng.random::<f64>(), 0.0);
            for j in i + 1..n {
                let v = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5) * 0.2;
                m[(i, j)] = v;
                m[(j, i)] = v.conj();
            }
        }
        m
    }

    #[test]
    fn lobpcg_matches_dense() {
        let m = test_matrix(120, 1);
        let (exact, _) = sorted_eigen(m.clone());
        let op = Dense { m };
        let res = lobpcg(&op, 3, &[], &LobpcgOptions::default()).unwrap();
        for k in 0..3 {
            assert!((res.values[k] - exact[k]).abs() < 1e-8 * exact[k].abs().max(1.0), "{k}: {} {}", res.values[k], exact[k]);
        }
        assert!(res.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn filtered_subspace_counts_dense_spectrum() {
        let m = test_matrix(150, 2);
        let (exact, _) = sorted_eigen(m.clone());
        let op = Dense { m };
        let cutoff = 0.5 * (exact[19] + exact[20]);
        let res = lowest_below(&op, cutoff, &FilterOptions { guess: 4, ..FilterOptions::default() }).unwrap();
        assert_eq!(res.values.len(), 20);
        for (a, b) in res.values.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn nonconvergence_is_reported() {
        let op = Dense { m: test_matrix(80, 3) };
        let opts = LobpcgOptions { max_iter: 1, tol: 1e-14, ..LobpcgOptions::default() };
        assert!(matches!(lobpcg(&op, 2, &[], &opts), Err(Error::NonConvergence { .. })));
    }
}
