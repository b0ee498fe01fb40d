//! Dense complex linear algebra: many-body statevectors over `(C^d)^{x L}`,
//! local operator application, expectation values, and MPS-to-dense
//! conversion with periodic boundary conditions.
//!
//! Site order is site-major with site 0 most significant; within a site the
//! basis is group-element lexicographic.

use crate::error::{CoreError, Result};
use crate::{C64, CMat};
use std::io::Write;

/// Default cap on dense amplitude counts (2^24).
pub const DEFAULT_SIZE_CAP: u64 = 1 << 24;

/// Check `dim^sites` against a cap, returning the amplitude count.
pub fn checked_dim(site_dim: usize, num_sites: usize, cap: u64) -> Result<usize> {
    let mut n: u128 = 1;
    for _ in 0..num_sites {
        n *= site_dim as u128;
        if n > cap as u128 {
            return Err(CoreError::SizeCap { needed: n, cap });
        }
    }
    Ok(n as usize)
}

/// Round-trip mapping between flat amplitude indices and per-site digits.
#[derive(Clone, Debug)]
pub struct SiteIndexing {
    pub site_dim: usize,
    pub num_sites: usize,
    strides: Vec<usize>,
}

impl SiteIndexing {
    pub fn new(site_dim: usize, num_sites: usize) -> Self {
        let mut strides = vec![1usize; num_sites];
        for i in (0..num_sites.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * site_dim;
        }
        SiteIndexing {
            site_dim,
            num_sites,
            strides,
        }
    }

    pub fn stride(&self, site: usize) -> usize {
        self.strides[site]
    }

    pub fn flat(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.strides)
            .map(|(&d, &s)| d * s)
            .sum()
    }

    pub fn digits(&self, flat: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_sites);
        let mut rem = flat;
        for &s in &self.strides {
            out.push(rem / s);
            rem %= s;
        }
        out
    }

    pub fn digit(&self, flat: usize, site: usize) -> usize {
        (flat / self.strides[site]) % self.site_dim
    }
}

/// A normalized many-body pure state on `num_sites` qudits of dimension
/// `site_dim`.
#[derive(Clone, Debug)]
pub struct DenseState {
    indexing: SiteIndexing,
    amps: Vec<C64>,
}

impl DenseState {
    /// The computational basis state with the given per-site digits.
    pub fn basis_state(site_dim: usize, digits: &[usize], cap: u64) -> Result<Self> {
        let n = checked_dim(site_dim, digits.len(), cap)?;
        let indexing = SiteIndexing::new(site_dim, digits.len());
        if digits.iter().any(|&d| d >= site_dim) {
            return Err(CoreError::structural("basis digit out of range"));
        }
        let mut amps = vec![C64::new(0.0, 0.0); n];
        amps[indexing.flat(digits)] = C64::new(1.0, 0.0);
        Ok(DenseState { indexing, amps })
    }

    /// Wrap raw amplitudes, normalizing them.
    pub fn from_amplitudes(site_dim: usize, num_sites: usize, amps: Vec<C64>, cap: u64) -> Result<Self> {
        let n = checked_dim(site_dim, num_sites, cap)?;
        if amps.len() != n {
            return Err(CoreError::structural(format!(
                "expected {} amplitudes, got {}",
                n,
                amps.len()
            )));
        }
        let mut state = DenseState {
            indexing: SiteIndexing::new(site_dim, num_sites),
            amps,
        };
        let norm = state.norm();
        if norm < 1e-14 {
            return Err(CoreError::structural("cannot normalize the zero vector"));
        }
        for a in &mut state.amps {
            *a /= norm;
        }
        Ok(state)
    }

    pub fn site_dim(&self) -> usize {
        self.indexing.site_dim
    }

    pub fn num_sites(&self) -> usize {
        self.indexing.num_sites
    }

    pub fn indexing(&self) -> &SiteIndexing {
        &self.indexing
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn overlap(&self, other: &DenseState) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_sites(&self, op: &CMat, sites: &[usize]) -> Result<usize> {
        let d = self.indexing.site_dim;
        let block: usize = d.pow(sites.len() as u32);
        if op.nrows() != block || op.ncols() != block {
            return Err(CoreError::structural(format!(
                "operator is {}x{}, expected {}x{}",
                op.nrows(),
                op.ncols(),
                block,
                block
            )));
        }
        let mut seen = vec![false; self.indexing.num_sites];
        for &s in sites {
            if s >= self.indexing.num_sites {
                return Err(CoreError::structural(format!("site {s} out of range")));
            }
            if seen[s] {
                return Err(CoreError::structural(format!("site {s} repeated")));
            }
            seen[s] = true;
        }
        Ok(block)
    }

    /// Apply an operator to the listed sites in place (no unitarity
    /// assumptions; callers that promise unitarity should use
    /// [`DenseState::apply_unitary`]).
    pub fn apply_local_raw(&mut self, op: &CMat, sites: &[usize]) -> Result<()> {
        let block = self.check_sites(op, sites)?;
        let d = self.indexing.site_dim;
        let k = sites.len();

        // offsets of the block entries relative to a base index with zeroed
        // digits on `sites`; entry t uses digit (t / d^{k-1-j}) % d at site j
        let mut offsets = vec![0usize; block];
        for (t, off) in offsets.iter_mut().enumerate() {
            let mut rem = t;
            let mut acc = 0usize;
            for j in (0..k).rev() {
                acc += (rem % d) * self.indexing.stride(sites[j]);
                rem /= d;
            }
            *off = acc;
        }

        let others: Vec<usize> = (0..self.indexing.num_sites)
            .filter(|s| !sites.contains(s))
            .collect();
        let mut digits = vec![0usize; others.len()];
        let mut gathered = vec![C64::new(0.0, 0.0); block];
        loop {
            let base: usize = digits
                .iter()
                .zip(&others)
                .map(|(&v, &s)| v * self.indexing.stride(s))
                .sum();
            for (t, g) in gathered.iter_mut().enumerate() {
                *g = self.amps[base + offsets[t]];
            }
            for r in 0..block {
                let mut acc = C64::new(0.0, 0.0);
                for (c, g) in gathered.iter().enumerate() {
                    acc += op[(r, c)] * g;
                }
                self.amps[base + offsets[r]] = acc;
            }
            // odometer over the untouched sites
            let mut i = others.len();
            loop {
                if i == 0 {
                    return Ok(());
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

    /// Apply a unitary to the listed sites, asserting norm preservation.
    pub fn apply_unitary(&mut self, op: &CMat, sites: &[usize]) -> Result<()> {
        self.apply_local_raw(op, sites)?;
        let norm = self.norm();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(CoreError::numerical(format!(
                "norm drifted to {norm:.17} under supposedly unitary application"
            )));
        }
        Ok(())
    }

    /// `<psi| op_sites |psi>` without modifying the state.
    pub fn expectation(&self, op: &CMat, sites: &[usize]) -> Result<C64> {
        let block = self.check_sites(op, sites)?;
        let d = self.indexing.site_dim;
        let k = sites.len();
        let mut offsets = vec![0usize; block];
        for (t, off) in offsets.iter_mut().enumerate() {
            let mut rem = t;
            let mut acc = 0usize;
            for j in (0..k).rev() {
                acc += (rem % d) * self.indexing.stride(sites[j]);
                rem /= d;
            }
            *off = acc;
        }
        let others: Vec<usize> = (0..self.indexing.num_sites)
            .filter(|s| !sites.contains(s))
            .collect();
        let mut digits = vec![0usize; others.len()];
        let mut total = C64::new(0.0, 0.0);
        loop {
            let base: usize = digits
                .iter()
                .zip(&others)
                .map(|(&v, &s)| v * self.indexing.stride(s))
                .sum();
            for r in 0..block {
                let mut row = C64::new(0.0, 0.0);
                for c in 0..block {
                    row += op[(r, c)] * self.amps[base + offsets[c]];
                }
                total += self.amps[base + offsets[r]].conj() * row;
            }
            let mut i = others.len();
            loop {
                if i == 0 {
                    return Ok(total);
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

    /// Probability distribution of computational outcomes on one site.
    pub fn site_marginal(&self, site: usize) -> Vec<f64> {
        let d = self.indexing.site_dim;
        let mut probs = vec![0.0; d];
        for (idx, a) in self.amps.iter().enumerate() {
            probs[self.indexing.digit(idx, site)] += a.norm_sqr();
        }
        probs
    }

    /// Projectively measure the listed sites (computational basis) with the
    /// supplied RNG; collapses and renormalizes the state, returning the
    /// outcome digits in site order.
    pub fn measure_sites(&mut self, sites: &[usize], rng: &mut impl rand::Rng) -> Vec<usize> {
        let d = self.indexing.site_dim;
        let mut joint: std::collections::HashMap<Vec<usize>, f64> = std::collections::HashMap::new();
        for (idx, a) in self.amps.iter().enumerate() {
            let key: Vec<usize> = sites.iter().map(|&s| self.indexing.digit(idx, s)).collect();
            *joint.entry(key).or_insert(0.0) += a.norm_sqr();
        }
        let mut keys: Vec<_> = joint.keys().cloned().collect();
        keys.sort();
        let r: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut outcome = keys.last().expect("nonempty state").clone();
        for key in keys {
            acc += joint[&key];
            if r < acc {
                outcome = key;
                break;
            }
        }
        for (idx, a) in self.amps.iter_mut().enumerate() {
            let matches = sites
                .iter()
                .zip(&outcome)
                .all(|(&s, &o)| (idx / self.indexing.stride(s)) % d == o);
            if !matches {
                *a = C64::new(0.0, 0.0);
            }
        }
        let norm = self.norm();
        for a in &mut self.amps {
            *a /= norm;
        }
        outcome
    }

    /// Sample a full computational-basis outcome (all sites) without
    /// collapsing the state.
    pub fn sample_outcome(&self, rng: &mut impl rand::Rng) -> Vec<usize> {
        let r: f64 = rng.gen::<f64>();
        let mut acc = 0.0;
        let mut hit = self.amps.len() - 1;
        for (idx, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if r < acc {
                hit = idx;
                break;
            }
        }
        self.indexing.digits(hit)
    }

    /// Binary dump: `u32 M, M x u32 moduli, u32 L`, then little-endian f64
    /// re/im pairs in flat order.
    pub fn dump(&self, moduli: &[u32], mut w: impl Write) -> Result<()> {
        w.write_all(&(moduli.len() as u32).to_le_bytes())?;
        for &m in moduli {
            w.write_all(&m.to_le_bytes())?;
        }
        w.write_all(&(self.indexing.num_sites as u32).to_le_bytes())?;
        for a in &self.amps {
            w.write_all(&a.re.to_le_bytes())?;
            w.write_all(&a.im.to_le_bytes())?;
        }
        Ok(())
    }
}

/// Binary dump of a dense matrix: `u32 rows, u32 cols`, little-endian f64
/// re/im pairs in row-major order.
pub fn dump_matrix(m: &CMat, mut w: impl Write) -> Result<()> {
    w.write_all(&(m.nrows() as u32).to_le_bytes())?;
    w.write_all(&(m.ncols() as u32).to_le_bytes())?;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            w.write_all(&m[(r, c)].re.to_le_bytes())?;
            w.write_all(&m[(r, c)].im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// `max |(M^dagger M - 1)_{ij}|`.
pub fn unitarity_deviation(m: &CMat) -> f64 {
    let prod = m.adjoint() * m;
    let mut dev: f64 = 0.0;
    for r in 0..prod.nrows() {
        for c in 0..prod.ncols() {
            let expect = if r == c { 1.0 } else { 0.0 };
            dev = dev.max((prod[(r, c)] - C64::new(expect, 0.0)).norm());
        }
    }
    dev
}

/// `max |A_ij - B_ij|`.
pub fn matrix_max_diff(a: &CMat, b: &CMat) -> f64 {
    let mut dev: f64 = 0.0;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            dev = dev.max((a[(r, c)] - b[(r, c)]).norm());
        }
    }
    dev
}

/// Contract a periodic MPS into a normalized dense state.
///
/// `tensors[i]` holds the per-physical-index matrices of site `i`; every
/// amplitude is `Tr[A^{g_1} ... A^{g_L}]`.
pub fn mps_to_dense(tensors: &[Vec<CMat>], cap: u64) -> Result<DenseState> {
    let num_sites = tensors.len();
    if num_sites == 0 {
        return Err(CoreError::structural("empty tensor list"));
    }
    let site_dim = tensors[0].len();
    for (i, site) in tensors.iter().enumerate() {
        if site.len() != site_dim {
            return Err(CoreError::structural(format!(
                "site {i} has physical dimension {}, expected {site_dim}",
                site.len()
            )));
        }
    }
    for i in 0..num_sites {
        let next = (i + 1) % num_sites;
        let right = tensors[i][0].ncols();
        let left_next = tensors[next][0].nrows();
        if right != left_next {
            return Err(CoreError::structural(format!(
                "bond mismatch between sites {i} and {next}"
            )));
        }
    }
    let n = checked_dim(site_dim, num_sites, cap)?;
    let indexing = SiteIndexing::new(site_dim, num_sites);
    let mut amps = vec![C64::new(0.0, 0.0); n];
    for (idx, amp) in amps.iter_mut().enumerate() {
        let digits = indexing.digits(idx);
        let mut acc = tensors[0][digits[0]].clone();
        for (site, &g) in digits.iter().enumerate().skip(1) {
            acc *= &tensors[site][g];
        }
        let mut tr = C64::new(0.0, 0.0);
        for r in 0..acc.nrows() {
            tr += acc[(r, r)];
        }
        *amp = tr;
    }
    DenseState::from_amplitudes(site_dim, num_sites, amps, cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn shift2() -> CMat {
        dmatrix![c(0.0,0.0), c(1.0,0.0); c(1.0,0.0), c(0.0,0.0)]
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let mut s = DenseState::basis_state(2, &[0, 1, 0], DEFAULT_SIZE_CAP).unwrap();
        let before = s.amplitudes().to_vec();
        let id = CMat::identity(4, 4);
        s.apply_unitary(&id, &[0, 2]).unwrap();
        assert_eq!(before, s.amplitudes());
    }

    #[test]
    fn shift_moves_basis_label() {
        let mut s = DenseState::basis_state(2, &[0, 0, 0], DEFAULT_SIZE_CAP).unwrap();
        s.apply_unitary(&shift2(), &[2]).unwrap();
        let expect = DenseState::basis_state(2, &[0, 0, 1], DEFAULT_SIZE_CAP).unwrap();
        assert!((s.overlap(&expect).re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_and_inverse_round_trip() {
        // R then R^{-1} is the identity on an arbitrary state
        let amps = vec![c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.5), c(0.0, -0.5)];
        let mut s = DenseState::from_amplitudes(2, 2, amps, DEFAULT_SIZE_CAP).unwrap();
        let before = s.amplitudes().to_vec();
        let r = dmatrix![c(1.0,0.0), c(0.0,0.0); c(0.0,0.0), c(0.0,1.0)];
        let rinv = r.adjoint();
        s.apply_unitary(&r, &[0]).unwrap();
        s.apply_unitary(&rinv, &[0]).unwrap();
        for (a, b) in before.iter().zip(s.amplitudes()) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn expectation_examples() {
        let s = DenseState::basis_state(3, &[0, 0], DEFAULT_SIZE_CAP).unwrap();
        let id = CMat::identity(3, 3);
        assert!((s.expectation(&id, &[1]).unwrap().re - 1.0).abs() < 1e-14);
        let mut proj0 = CMat::zeros(3, 3);
        proj0[(0, 0)] = c(1.0, 0.0);
        assert!((s.expectation(&proj0, &[0]).unwrap().re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn disjoint_applications_commute() {
        let amps: Vec<C64> = (0..16).map(|i| c(1.0 + i as f64, i as f64 * 0.3)).collect();
        let s0 = DenseState::from_amplitudes(2, 4, amps, DEFAULT_SIZE_CAP).unwrap();
        let x = shift2();
        let h = {
            let v = 1.0 / 2.0f64.sqrt();
            dmatrix![c(v,0.0), c(v,0.0); c(v,0.0), c(-v,0.0)]
        };
        let mut a = s0.clone();
        a.apply_unitary(&x, &[0]).unwrap();
        a.apply_unitary(&h, &[3]).unwrap();
        let mut b = s0.clone();
        b.apply_unitary(&h, &[3]).unwrap();
        b.apply_unitary(&x, &[0]).unwrap();
        for (p, q) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((p - q).norm() < 1e-14);
        }
    }

    #[test]
    fn dimension_and_range_errors() {
        let mut s = DenseState::basis_state(2, &[0, 0], DEFAULT_SIZE_CAP).unwrap();
        let id3 = CMat::identity(3, 3);
        assert!(s.apply_local_raw(&id3, &[0]).is_err());
        let id2 = CMat::identity(2, 2);
        assert!(s.apply_local_raw(&id2, &[5]).is_err());
        assert!(s.apply_local_raw(&CMat::identity(4, 4), &[0, 0]).is_err());
    }

    #[test]
    fn size_cap_is_hard() {
        let err = DenseState::basis_state(9, &[0; 9], DEFAULT_SIZE_CAP);
        assert!(matches!(err, Err(CoreError::SizeCap { .. })));
    }

    #[test]
    fn mps_single_site_delta() {
        // L=1, A^g a 1x1 tensor delta_{g,0} gives |0>
        let tensors = vec![vec![
            CMat::from_element(1, 1, c(1.0, 0.0)),
            CMat::from_element(1, 1, c(0.0, 0.0)),
        ]];
        let s = mps_to_dense(&tensors, DEFAULT_SIZE_CAP).unwrap();
        assert!((s.amplitudes()[0].re - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mps_product_state() {
        let site = vec![
            CMat::from_element(1, 1, c(0.6, 0.0)),
            CMat::from_element(1, 1, c(0.8, 0.0)),
        ];
        let tensors = vec![site.clone(), site];
        let s = mps_to_dense(&tensors, DEFAULT_SIZE_CAP).unwrap();
        // amplitudes proportional to products 0.6^a 0.8^b
        let a = s.amplitudes();
        assert!((a[0].re - 0.36).abs() < 1e-12);
        assert!((a[3].re - 0.64).abs() < 1e-12);
    }

    #[test]
    fn mps_translation_invariance_of_trace() {
        // cyclic relabeling of a random uniform tensor list leaves the state
        // invariant up to the same cyclic site permutation
        let mut rng_state = 1234u64;
        let mut next = || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 33) as f64) / (u32::MAX as f64) - 0.5
        };
        let blocks: Vec<CMat> = (0..2)
            .map(|_| CMat::from_fn(2, 2, |_, _| c(next(), next())))
            .collect();
        let tensors = vec![blocks.clone(); 3];
        let s = mps_to_dense(&tensors, DEFAULT_SIZE_CAP).unwrap();
        let shifted = mps_to_dense(&[tensors[1].clone(), tensors[2].clone(), tensors[0].clone()], DEFAULT_SIZE_CAP)
            .unwrap();
        // uniform tensors: the shifted list is the same list
        for (p, q) in s.amplitudes().iter().zip(shifted.amplitudes()) {
            assert!((p - q).norm() < 1e-13);
        }
    }

    #[test]
    fn measurement_collapses_and_renormalizes() {
        use rand::SeedableRng;
        let amps = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let mut s = DenseState::from_amplitudes(2, 2, amps, DEFAULT_SIZE_CAP).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let outcome = s.measure_sites(&[0], &mut rng);
        assert!((s.norm() - 1.0).abs() < 1e-12);
        // post-state is the matching basis state
        let expect = DenseState::basis_state(2, &[outcome[0], outcome[0]], DEFAULT_SIZE_CAP).unwrap();
        assert!((s.overlap(&expect).norm() - 1.0).abs() < 1e-12);
    }
}
