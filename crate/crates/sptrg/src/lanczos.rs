//! Lanczos eigensolver for large sparse real-symmetric Hamiltonians built
//! from local terms, with full reorthogonalization.
//!
//! The Hamiltonian is never stored as a matrix; `H|v>` is applied term by
//! term over basis-index strides.

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A sum of local real-symmetric terms on a qudit chain.
#[derive(Clone, Debug)]
pub struct SparseHamiltonian {
    pub site_dim: usize,
    pub num_sites: usize,
    /// `(sites, dense local matrix row-major over d^{|sites|})`
    terms: Vec<(Vec<usize>, Vec<f64>)>,
    dim: usize,
}

impl SparseHamiltonian {
    pub fn new(site_dim: usize, num_sites: usize) -> Self {
        let dim = site_dim.pow(num_sites as u32);
        SparseHamiltonian {
            site_dim,
            num_sites,
            terms: Vec::new(),
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Add a local term given as a complex matrix; it must be real and
    /// symmetric to 1e-12 (the solver is real).
    pub fn add_term(&mut self, sites: Vec<usize>, matrix: &crate::CMat) -> Result<()> {
        let block = self.site_dim.pow(sites.len() as u32);
        if matrix.nrows() != block || matrix.ncols() != block {
            return Err(CoreError::structural("term dimension mismatch"));
        }
        let mut data = vec![0.0f64; block * block];
        for r in 0..block {
            for c in 0..block {
                let v = matrix[(r, c)];
                if v.im.abs() > 1e-12 {
                    return Err(CoreError::structural("term has an imaginary part"));
                }
                if (matrix[(r, c)].re - matrix[(c, r)].re).abs() > 1e-12 {
                    return Err(CoreError::structural("term is not symmetric"));
                }
                data[r * block + c] = v.re;
            }
        }
        self.terms.push((sites, data));
        Ok(())
    }

    /// `out += H v`.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        let d = self.site_dim;
        for (sites, data) in &self.terms {
            let k = sites.len();
            let block = d.pow(k as u32);
            let mut strides = vec![0usize; k];
            for (j, &s) in sites.iter().enumerate() {
                strides[j] = d.pow((self.num_sites - 1 - s) as u32);
            }
            let mut offsets = vec![0usize; block];
            for (t, off) in offsets.iter_mut().enumerate() {
                let mut rem = t;
                let mut acc = 0usize;
                for j in (0..k).rev() {
                    acc += (rem % d) * strides[j];
                    rem /= d;
                }
                *off = acc;
            }
            let others: Vec<usize> = (0..self.num_sites).filter(|s| !sites.contains(s)).collect();
            let other_strides: Vec<usize> = others
                .iter()
                .map(|&s| d.pow((self.num_sites - 1 - s) as u32))
                .collect();
            let mut digits = vec![0usize; others.len()];
            'blocks: loop {
                let base: usize = digits
                    .iter()
                    .zip(&other_strides)
                    .map(|(&val, &st)| val * st)
                    .sum();
                for r in 0..block {
                    let mut acc = 0.0;
                    for c in 0..block {
                        let w = data[r * block + c];
                        if w != 0.0 {
                            acc += w * v[base + offsets[c]];
                        }
                    }
                    out[base + offsets[r]] += acc;
                }
                let mut i = others.len();
                loop {
                    if i == 0 {
                        break 'blocks;
                    }
                    i -= 1;
                    digits[i] += 1;
                    if digits[i] < d {
                        break;
                    }
                    digits[i] = 0;
                }
            }
        }
    }
}

/// Result of a Lanczos run.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// true when the two lowest eigenvalues differ by less than 1e-10
    pub degenerate: bool,
}

/// Find the `k` lowest eigenpairs of `H` with full reorthogonalization.
pub fn lanczos_lowest(
    h: &SparseHamiltonian,
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<Spectrum> {
    let dim = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q0: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() - 0.5).collect();
    normalize(&mut q0);
    let mut basis: Vec<Vec<f64>> = vec![q0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut tracked: Vec<f64> = Vec::new();

    for iter in 1..=max_iter {
        let q = basis.last().unwrap().clone();
        let mut w = vec![0.0f64; dim];
        h.matvec(&q, &mut w);
        let alpha = dot(&q, &w);
        alphas.push(alpha);
        // full reorthogonalization against the whole Krylov basis
        for qv in &basis {
            let c = dot(qv, &w);
            axpy(&mut w, -c, qv);
        }
        // second pass for numerical safety
        for qv in &basis {
            let c = dot(qv, &w);
            axpy(&mut w, -c, qv);
        }
        let beta = norm(&w);
        if iter >= k.max(20) && iter % 5 == 0 {
            let vals = tridiag_eigvals(&alphas, &betas, k);
            let done = tracked.len() == vals.len()
                && tracked
                    .iter()
                    .zip(&vals)
                    .all(|(a, b)| (a - b).abs() < tol * 1e-2);
            tracked = vals;
            if done {
                // Ritz values stagnated; accept only if the residuals check out
                if let Ok(spec) = finish(h, &basis, &alphas, &betas, k, tol, iter) {
                    return Ok(spec);
                }
            }
        }
        if beta < 1e-13 {
            return finish(h, &basis, &alphas, &betas, k, tol, iter);
        }
        betas.push(beta);
        let mut next = w;
        for x in next.iter_mut() {
            *x /= beta;
        }
        basis.push(next);
    }
    finish(h, &basis, &alphas, &betas, k, tol, max_iter)
}

fn finish(
    h: &SparseHamiltonian,
    basis: &[Vec<f64>],
    alphas: &[f64],
    betas: &[f64],
    k: usize,
    tol: f64,
    iterations: usize,
) -> Result<Spectrum> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let dim = h.dim();
    let kk = k.min(m);
    let mut eigenvalues = Vec::with_capacity(kk);
    let mut eigenvectors = Vec::with_capacity(kk);
    let mut residuals = Vec::with_capacity(kk);
    for &col in order.iter().take(kk) {
        let lam = eig.eigenvalues[col];
        let mut v = vec![0.0f64; dim];
        for (j, q) in basis.iter().enumerate().take(m) {
            axpy(&mut v, eig.eigenvectors[(j, col)], q);
        }
        normalize(&mut v);
        let mut hv = vec![0.0f64; dim];
        h.matvec(&v, &mut hv);
        axpy(&mut hv, -lam, &v);
        let res = norm(&hv);
        if res > tol {
            return Err(CoreError::NoConvergence(iterations));
        }
        eigenvalues.push(lam);
        eigenvectors.push(v);
        residuals.push(res);
    }
    let degenerate = eigenvalues.len() >= 2 && (eigenvalues[1] - eigenvalues[0]).abs() < 1e-10;
    Ok(Spectrum {
        eigenvalues,
        eigenvectors,
        residuals,
        iterations,
        degenerate,
    })
}

fn tridiag_eigvals(alphas: &[f64], betas: &[f64], k: usize) -> Vec<f64> {
    let m = alphas.len();
    let mut t = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m && i < betas.len() {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let mut vals: Vec<f64> = SymmetricEigen::new(t).eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals.truncate(k);
    vals
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    for x in v.iter_mut() {
        *x /= n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projective::clock_shift;
    use crate::CMat;

    #[test]
    fn transverse_field_ising_matches_dense() {
        // H = -sum Z_i Z_{i+1} - 0.5 sum X_i on a ring of 8
        let n = 8usize;
        let (z, x) = clock_shift(2);
        let mut h = SparseHamiltonian::new(2, n);
        for i in 0..n {
            let zz = z.kronecker(&z) * crate::C64::new(-1.0, 0.0);
            h.add_term(vec![i, (i + 1) % n], &zz).unwrap();
            h.add_term(vec![i], &(x.clone() * crate::C64::new(-0.5, 0.0)))
                .unwrap();
        }
        let spec = lanczos_lowest(&h, 2, 200, 1e-8, 1).unwrap();
        let dim = 1 << n;
        let mut dense = DMatrix::<f64>::zeros(dim, dim);
        for c in 0..dim {
            let mut v = vec![0.0; dim];
            v[c] = 1.0;
            let mut out = vec![0.0; dim];
            h.matvec(&v, &mut out);
            for r in 0..dim {
                dense[(r, c)] = out[r];
            }
        }
        let mut vals: Vec<f64> = SymmetricEigen::new(dense)
            .eigenvalues
            .iter()
            .copied()
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((spec.eigenvalues[0] - vals[0]).abs() < 1e-8);
        assert!((spec.eigenvalues[1] - vals[1]).abs() < 1e-6);
        assert!(spec.residuals[0] < 1e-8);
    }

    #[test]
    fn rejects_complex_terms() {
        let mut h = SparseHamiltonian::new(2, 2);
        let m = CMat::from_fn(2, 2, |r, c| {
            if r == c {
                crate::C64::new(0.0, 1.0)
            } else {
                crate::C64::new(0.0, 0.0)
            }
        });
        assert!(h.add_term(vec![0], &m).is_err());
    }
}
