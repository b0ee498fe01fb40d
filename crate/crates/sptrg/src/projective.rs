//! Regular and maximally non-commutative projective representations built
//! from clock and shift matrices.

use crate::error::{CoreError, Result};
use crate::group::{FactorSet, FiniteAbelianGroup, GroupElement, Phase};
use crate::{C64, CMat};

/// `Z_N` clock and shift pair: `Z = sum_a zeta^a |a><a|`,
/// `X = sum_a |a+1><a|`, satisfying `Z X = zeta X Z`.
pub fn clock_shift(n: u32) -> (CMat, CMat) {
    let n = n as usize;
    let mut z = CMat::zeros(n, n);
    let mut x = CMat::zeros(n, n);
    for a in 0..n {
        z[(a, a)] = Phase::new(a as i64, n as i64).to_c64();
        x[((a + 1) % n, a)] = C64::new(1.0, 0.0);
    }
    (z, x)
}

fn matrix_power(m: &CMat, k: u32) -> CMat {
    let mut acc = CMat::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        acc = &acc * m;
    }
    acc
}

/// The diagonal regular representation `R_g = sum_h chi_h(g) |h><h|` in the
/// lexicographic basis.
pub fn regular_rep(group: &FiniteAbelianGroup, g: &GroupElement) -> CMat {
    let n = group.order() as usize;
    let mut r = CMat::zeros(n, n);
    for (idx, h) in group.elements().enumerate() {
        r[(idx, idx)] = group.character(&h, g).to_c64();
    }
    r
}

/// The block structure of a factor set supporting explicit projective
/// representations: the group must factor as a product of `Z_N x Z_N` pairs
/// with the cocycle pairing consecutive factors.
#[derive(Clone, Debug)]
pub struct BlockStructure {
    /// `(modulus, what)` per `Z_N x Z_N` block.
    pub blocks: Vec<(u32, u32)>,
}

/// Detect the constructive `prod_a (Z_{N_a} x Z_{N_a})` block form.
pub fn block_structure(fs: &FactorSet) -> Result<BlockStructure> {
    let moduli = fs.group().moduli();
    if moduli.len() % 2 != 0 {
        return Err(CoreError::domain(
            "projective representation needs a square group G' x G'",
        ));
    }
    let nblocks = moduli.len() / 2;
    let mut blocks = vec![(0u32, 0u32); nblocks];
    for a in 0..nblocks {
        if moduli[2 * a] != moduli[2 * a + 1] {
            return Err(CoreError::domain(
                "projective representation needs paired equal moduli",
            ));
        }
        blocks[a].0 = moduli[2 * a];
    }
    for (i, j, w) in fs.what_entries() {
        if j != i + 1 || i % 2 != 0 {
            return Err(CoreError::domain(
                "factor set must pair factor 2a-1 with factor 2a",
            ));
        }
        blocks[i / 2].1 = w;
    }
    Ok(BlockStructure { blocks })
}

/// The projective representation `V_g = prod_a X^{g_{2a-1}} Z^{w_a g_{2a}}`
/// (Kronecker product over blocks) for a maximally non-commutative factor
/// set in block form.
pub fn projective_rep(fs: &FactorSet, g: &GroupElement) -> Result<CMat> {
    if !fs.is_mnc() {
        return Err(CoreError::domain(
            "projective representation requires a maximally non-commutative factor set",
        ));
    }
    let structure = block_structure(fs)?;
    let mut acc = CMat::identity(1, 1);
    for (a, &(n, w)) in structure.blocks.iter().enumerate() {
        let (z, x) = clock_shift(n);
        let g1 = g.residues()[2 * a];
        let g2 = g.residues()[2 * a + 1];
        let block = matrix_power(&x, g1) * matrix_power(&z, (w * g2) % n);
        acc = acc.kronecker(&block);
    }
    Ok(acc)
}

/// Max deviation of the projective Schur orthogonality
/// `(1/|G|) sum_g [V_g^dagger]_{ij} [V_g]_{kl} = delta_{il} delta_{jk} / sqrt(|G|)`.
pub fn schur_check(fs: &FactorSet) -> Result<f64> {
    let group = fs.group();
    let dim = (group.order() as f64).sqrt().round() as usize;
    let mut sums = vec![C64::new(0.0, 0.0); dim * dim * dim * dim];
    for g in group.elements() {
        let v = projective_rep(fs, &g)?;
        let vd = v.adjoint();
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    for l in 0..dim {
                        sums[((i * dim + j) * dim + k) * dim + l] += vd[(i, j)] * v[(k, l)];
                    }
                }
            }
        }
    }
    let inv_order = 1.0 / group.order() as f64;
    let target = 1.0 / (group.order() as f64).sqrt();
    let mut dev: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                for l in 0..dim {
                    let got = sums[((i * dim + j) * dim + k) * dim + l] * inv_order;
                    let expect = if i == l && j == k { target } else { 0.0 };
                    dev = dev.max((got - C64::new(expect, 0.0)).norm());
                }
            }
        }
    }
    Ok(dev)
}

/// Exhaustively verify the projective-representation algebra for an MNC
/// factor set: fusion with cocycle, commutators, conjugation, and the trace
/// corollary. Returns the max deviation over all checks.
pub fn algebra_deviation(fs: &FactorSet) -> Result<f64> {
    let group = fs.group();
    let order = group.order();
    let sqrt_order = (order as f64).sqrt();
    let reps: Vec<CMat> = group
        .elements()
        .map(|g| projective_rep(fs, &g))
        .collect::<Result<_>>()?;
    let mut dev: f64 = 0.0;
    for (gi, g) in group.elements().enumerate() {
        let tr: C64 = (0..reps[gi].nrows()).map(|r| reps[gi][(r, r)]).sum();
        let expect_tr = if gi == 0 { sqrt_order } else { 0.0 };
        dev = dev.max((tr.norm() - expect_tr).abs());
        // conjugation: V_g^dagger = sigma_g V_{-g}
        let neg = group.index_of(&group.neg(&g)) as usize;
        let conj = reps[neg].clone() * fs.sigma(&g).to_c64();
        dev = dev.max(crate::tensor::matrix_max_diff(&reps[gi].adjoint(), &conj));
        for (hi, h) in group.elements().enumerate() {
            let sum = group.index_of(&group.add(&g, &h)?) as usize;
            let fused = reps[sum].clone() * fs.omega(&g, &h).to_c64();
            dev = dev.max(crate::tensor::matrix_max_diff(
                &(&reps[gi] * &reps[hi]),
                &fused,
            ));
            let swapped = (&reps[hi] * &reps[gi]) * fs.lambda(&g, &h).to_c64();
            dev = dev.max(crate::tensor::matrix_max_diff(
                &(&reps[gi] * &reps[hi]),
                &swapped,
            ));
        }
    }
    Ok(dev)
}

/// Numerically solve the trace identity
/// `<h| R_{sigma(g)} |h> = Tr[V_h V_g V_h^dagger V_g^dagger] / sqrt(|G|)`
/// for the permutation `sigma`, returning its index table together with the
/// max deviation of the best match per element.
///
/// The solution is `sigma = Gamma`; it coincides with `Gamma^{-1}` (the
/// permutation used by the canonical tensor) exactly when `Gamma^2 = id`,
/// e.g. for `Z_2 x Z_2`.
pub fn sigma_from_trace_identity(fs: &FactorSet) -> Result<(Vec<u64>, f64)> {
    let group = fs.group();
    let order = group.order() as usize;
    let sqrt_order = (group.order() as f64).sqrt();
    let mut table = vec![0u64; order];
    let mut dev: f64 = 0.0;
    for (gi, g) in group.elements().enumerate() {
        // trace values per h
        let vg = projective_rep(fs, &g)?;
        let mut traces = Vec::with_capacity(order);
        for h in group.elements() {
            let vh = projective_rep(fs, &h)?;
            let prod = &vh * &vg * vh.adjoint() * vg.adjoint();
            let tr: C64 = (0..prod.nrows()).map(|r| prod[(r, r)]).sum();
            traces.push(tr / sqrt_order);
        }
        // best-matching group element k with chi_h(k) = trace(h) for all h
        let mut best = (f64::INFINITY, 0u64);
        for k in group.elements() {
            let mut d: f64 = 0.0;
            for (hi, h) in group.elements().enumerate() {
                d = d.max((group.character(&h, &k).to_c64() - traces[hi]).norm());
            }
            if d < best.0 {
                best = (d, group.index_of(&k));
            }
        }
        table[gi] = best.1;
        dev = dev.max(best.0);
    }
    Ok((table, dev))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{matrix_max_diff, unitarity_deviation};

    #[test]
    fn clock_shift_commutation_is_exact() {
        for n in [2u32, 3, 4, 6] {
            let (z, x) = clock_shift(n);
            assert!(unitarity_deviation(&z) < 1e-15);
            assert!(unitarity_deviation(&x) < 1e-15);
            let zeta = Phase::new(1, n as i64).to_c64();
            let lhs = &z * &x;
            let rhs = (&x * &z) * zeta;
            assert!(matrix_max_diff(&lhs, &rhs) < 1e-15);
        }
    }

    #[test]
    fn regular_rep_examples() {
        let z2 = FiniteAbelianGroup::zn_squared(2);
        let e = z2.identity();
        assert!(matrix_max_diff(&regular_rep(&z2, &e), &CMat::identity(4, 4)) < 1e-15);
        let g10 = z2.element_from(&[1, 0]).unwrap();
        let r = regular_rep(&z2, &g10);
        // diag(1, 1, -1, -1) in lexicographic basis
        let expect = [1.0, 1.0, -1.0, -1.0];
        for (i, &v) in expect.iter().enumerate() {
            assert!((r[(i, i)] - C64::new(v, 0.0)).norm() < 1e-15);
        }
        // R_g R_h = R_{g+h}
        let g01 = z2.element_from(&[0, 1]).unwrap();
        let sum = z2.add(&g10, &g01).unwrap();
        assert!(
            matrix_max_diff(&(regular_rep(&z2, &g10) * regular_rep(&z2, &g01)), &regular_rep(&z2, &sum))
                < 1e-15
        );
    }

    #[test]
    fn projective_rep_examples() {
        let fs = FactorSet::zn_squared(2, 1);
        let g10 = fs.group().element_from(&[1, 0]).unwrap();
        let v = projective_rep(&fs, &g10).unwrap();
        let (_z, x) = clock_shift(2);
        assert!(matrix_max_diff(&v, &x) < 1e-15);
        let g11 = fs.group().element_from(&[1, 1]).unwrap();
        let v11 = projective_rep(&fs, &g11).unwrap();
        let (z, x) = clock_shift(2);
        assert!(matrix_max_diff(&v11, &(x * z)) < 1e-15);
        let e = fs.group().identity();
        assert!(matrix_max_diff(&projective_rep(&fs, &e).unwrap(), &CMat::identity(2, 2)) < 1e-15);
    }

    #[test]
    fn projective_rep_rejects_non_mnc() {
        let fs = FactorSet::zn_squared(4, 2);
        let g = fs.group().element_from(&[1, 0]).unwrap();
        assert!(projective_rep(&fs, &g).is_err());
    }

    #[test]
    fn schur_orthogonality_small_groups() {
        for fs in [
            FactorSet::zn_squared(2, 1),
            FactorSet::zn_squared(3, 1),
            FactorSet::zn_squared(3, 2),
        ] {
            assert!(schur_check(&fs).unwrap() < 1e-12);
        }
    }

    #[test]
    fn algebra_identities_hold() {
        for fs in [FactorSet::zn_squared(2, 1), FactorSet::zn_squared(3, 2)] {
            assert!(algebra_deviation(&fs).unwrap() < 1e-12);
        }
        // multi-block product group
        let fs = FactorSet::new(
            FiniteAbelianGroup::new(vec![2, 2, 3, 3]).unwrap(),
            &[(0, 1, 1), (2, 3, 1)],
        )
        .unwrap();
        assert!(algebra_deviation(&fs).unwrap() < 1e-12);
    }

    #[test]
    fn trace_identity_selects_gamma() {
        for fs in [FactorSet::zn_squared(2, 1), FactorSet::zn_squared(3, 1)] {
            let (table, dev) = sigma_from_trace_identity(&fs).unwrap();
            assert!(dev < 1e-12);
            assert_eq!(table, fs.gamma_table());
        }
        // on Z_2 x Z_2, Gamma squares to the identity, so the trace-identity
        // permutation agrees with the Gamma^{-1} used by the canonical tensor
        let fs2 = FactorSet::zn_squared(2, 1);
        let (table, _) = sigma_from_trace_identity(&fs2).unwrap();
        let inv = fs2.gamma_inverse_table().unwrap();
        assert_eq!(table, inv);
    }
}
