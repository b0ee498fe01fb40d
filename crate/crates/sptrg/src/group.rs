//! Exact arithmetic for finite Abelian groups, their characters and factor
//! sets (2-cocycles).
//!
//! Groups are products of cyclic factors `Z_{N_1} x ... x Z_{N_M}` with
//! elements stored as residue vectors. All phases are kept as exact rational
//! angles `e^{2*pi*i*k/n}` until a complex value is actually needed, so long
//! products of cocycles cannot drift.

use crate::error::{CoreError, Result};
use crate::C64;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// An exact unit-modulus phase `e^{2*pi*i*num/den}`.
///
/// Kept reduced with `0 <= num < den`. Multiplication is addition of the
/// rational angles mod 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Phase {
    num: i64,
    den: i64,
}

impl Phase {
    pub const ONE: Phase = Phase { num: 0, den: 1 };

    /// `e^{2*pi*i*num/den}`, reduced.
    pub fn new(num: i64, den: i64) -> Phase {
        assert!(den > 0, "phase denominator must be positive");
        let n = num.rem_euclid(den);
        let g = gcd(n as u64, den as u64).max(1) as i64;
        Phase {
            num: n / g,
            den: den / g,
        }
    }

    pub fn mul(self, other: Phase) -> Phase {
        let den = self.den * other.den / gcd(self.den as u64, other.den as u64) as i64;
        let num = self.num * (den / self.den) + other.num * (den / other.den);
        Phase::new(num, den)
    }

    pub fn conj(self) -> Phase {
        Phase::new(-self.num, self.den)
    }

    pub fn pow(self, k: i64) -> Phase {
        let n = (self.num as i128 * k as i128).rem_euclid(self.den as i128);
        Phase::new(n as i64, self.den)
    }

    pub fn is_one(self) -> bool {
        self.num == 0
    }

    pub fn to_c64(self) -> C64 {
        let theta = 2.0 * std::f64::consts::PI * (self.num as f64) / (self.den as f64);
        C64::new(theta.cos(), theta.sin())
    }
}

/// Element of a finite Abelian group, stored as a residue vector.
///
/// Residues are kept reduced modulo their moduli; the identity is the
/// all-zero vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GroupElement {
    residues: Vec<u32>,
}

impl GroupElement {
    pub fn residues(&self) -> &[u32] {
        &self.residues
    }
}

/// The group `Z_{N_1} x ... x Z_{N_M}` with lexicographic element
/// enumeration (first component most significant).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteAbelianGroup {
    moduli: Vec<u32>,
    order: u64,
    strides: Vec<u64>,
}

impl FiniteAbelianGroup {
    pub fn new(moduli: Vec<u32>) -> Result<Self> {
        if moduli.is_empty() {
            return Err(CoreError::structural("group needs at least one modulus"));
        }
        if moduli.iter().any(|&n| n < 2) {
            return Err(CoreError::structural("every modulus must be >= 2"));
        }
        let order = moduli.iter().map(|&n| n as u64).product();
        let mut strides = vec![1u64; moduli.len()];
        for i in (0..moduli.len() - 1).rev() {
            strides[i] = strides[i + 1] * moduli[i + 1] as u64;
        }
        Ok(FiniteAbelianGroup {
            moduli,
            order,
            strides,
        })
    }

    /// Convenience constructor for `Z_N x Z_N`.
    pub fn zn_squared(n: u32) -> Self {
        FiniteAbelianGroup::new(vec![n, n]).expect("n >= 2")
    }

    pub fn moduli(&self) -> &[u32] {
        &self.moduli
    }

    pub fn num_factors(&self) -> usize {
        self.moduli.len()
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement {
            residues: vec![0; self.moduli.len()],
        }
    }

    /// Build an element from (possibly unreduced, possibly negative) entries.
    pub fn element_from(&self, entries: &[i64]) -> Result<GroupElement> {
        if entries.len() != self.moduli.len() {
            return Err(CoreError::structural(format!(
                "element has {} components, group has {}",
                entries.len(),
                self.moduli.len()
            )));
        }
        let residues = entries
            .iter()
            .zip(&self.moduli)
            .map(|(&e, &n)| e.rem_euclid(n as i64) as u32)
            .collect();
        Ok(GroupElement { residues })
    }

    /// Element at lexicographic index `idx`.
    pub fn element(&self, idx: u64) -> GroupElement {
        debug_assert!(idx < self.order);
        let mut residues = Vec::with_capacity(self.moduli.len());
        let mut rem = idx;
        for (i, &_n) in self.moduli.iter().enumerate() {
            let r = rem / self.strides[i];
            residues.push(r as u32);
            rem %= self.strides[i];
        }
        GroupElement { residues }
    }

    pub fn index_of(&self, g: &GroupElement) -> u64 {
        g.residues
            .iter()
            .zip(&self.strides)
            .map(|(&r, &s)| r as u64 * s)
            .sum()
    }

    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.order).map(move |i| self.element(i))
    }

    fn check_member(&self, g: &GroupElement) -> Result<()> {
        if g.residues.len() != self.moduli.len()
            || g.residues.iter().zip(&self.moduli).any(|(&r, &n)| r >= n)
        {
            return Err(CoreError::structural("element does not belong to group"));
        }
        Ok(())
    }

    pub fn add(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        self.check_member(g)?;
        self.check_member(h)?;
        let residues = g
            .residues
            .iter()
            .zip(&h.residues)
            .zip(&self.moduli)
            .map(|((&a, &b), &n)| (a + b) % n)
            .collect();
        Ok(GroupElement { residues })
    }

    pub fn neg(&self, g: &GroupElement) -> GroupElement {
        let residues = g
            .residues
            .iter()
            .zip(&self.moduli)
            .map(|(&a, &n)| (n - a) % n)
            .collect();
        GroupElement { residues }
    }

    pub fn sub(&self, g: &GroupElement, h: &GroupElement) -> Result<GroupElement> {
        let nh = self.neg(h);
        self.add(g, &nh)
    }

    /// Index-space addition (no membership checks); handy in hot loops.
    pub fn add_idx(&self, a: u64, b: u64) -> u64 {
        let (ga, gb) = (self.element(a), self.element(b));
        self.index_of(&self.add(&ga, &gb).expect("same group"))
    }

    pub fn neg_idx(&self, a: u64) -> u64 {
        let g = self.element(a);
        self.index_of(&self.neg(&g))
    }

    /// The standard character `chi_g(h) = prod_i zeta_{N_i}^{g_i h_i}`.
    pub fn character(&self, g: &GroupElement, h: &GroupElement) -> Phase {
        let mut p = Phase::ONE;
        for ((&gi, &hi), &n) in g.residues.iter().zip(&h.residues).zip(&self.moduli) {
            p = p.mul(Phase::new(gi as i64 * hi as i64, n as i64));
        }
        p
    }

    /// Order of `g` in the group.
    pub fn element_order(&self, g: &GroupElement) -> u64 {
        let mut k = 1u64;
        let mut acc = g.clone();
        while acc != self.identity() {
            acc = self.add(&acc, g).expect("same group");
            k += 1;
        }
        k
    }
}

/// A gauge-fixed factor set (2-cocycle) on a finite Abelian group.
///
/// `omega(g,h) = prod_{i<j} zeta_{gcd(N_i,N_j)}^{what_{ij} g_j h_i}` with a
/// strictly upper-triangular integer matrix `what` (for `Z_N x Z_N` this is
/// the standard `zeta^{w g_2 h_1}` gauge). It satisfies the cocycle identity
/// and `omega(g,h) = omega(-g,h)^*`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorSet {
    group: FiniteAbelianGroup,
    what: Vec<Vec<u32>>,
}

impl FactorSet {
    /// Build from sparse entries `(i, j, w)` with `i < j`; entries are reduced
    /// modulo `gcd(N_i, N_j)`.
    pub fn new(group: FiniteAbelianGroup, entries: &[(usize, usize, i64)]) -> Result<Self> {
        let m = group.num_factors();
        let mut what = vec![vec![0u32; m]; m];
        for &(i, j, w) in entries {
            if i >= j || j >= m {
                return Err(CoreError::structural(format!(
                    "factor set entry ({i},{j}) must satisfy i < j < {m}"
                )));
            }
            let d = gcd(group.moduli[i] as u64, group.moduli[j] as u64) as i64;
            what[i][j] = w.rem_euclid(d) as u32;
        }
        Ok(FactorSet { group, what })
    }

    /// `Z_N x Z_N` with a single cohomology label `what in Z_N`.
    pub fn zn_squared(n: u32, what: i64) -> Self {
        FactorSet::new(FiniteAbelianGroup::zn_squared(n), &[(0, 1, what)]).expect("valid")
    }

    /// The trivial class on `group`.
    pub fn trivial(group: FiniteAbelianGroup) -> Self {
        FactorSet::new(group, &[]).expect("valid")
    }

    pub fn group(&self) -> &FiniteAbelianGroup {
        &self.group
    }

    pub fn what_entries(&self) -> Vec<(usize, usize, u32)> {
        let m = self.group.num_factors();
        let mut out = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                if self.what[i][j] != 0 {
                    out.push((i, j, self.what[i][j]));
                }
            }
        }
        out
    }

    pub fn is_trivial_class(&self) -> bool {
        self.what_entries().is_empty()
    }

    /// The cocycle value `omega(g, h)`.
    pub fn omega(&self, g: &GroupElement, h: &GroupElement) -> Phase {
        let mut p = Phase::ONE;
        let m = self.group.num_factors();
        for i in 0..m {
            for j in (i + 1)..m {
                if self.what[i][j] != 0 {
                    let d = gcd(self.group.moduli[i] as u64, self.group.moduli[j] as u64) as i64;
                    p = p.mul(Phase::new(
                        self.what[i][j] as i64 * g.residues[j] as i64 * h.residues[i] as i64,
                        d,
                    ));
                }
            }
        }
        p
    }

    /// `sigma_g = omega(g, g)`, converting `V_g^dagger` to `sigma_g V_{-g}`.
    pub fn sigma(&self, g: &GroupElement) -> Phase {
        self.omega(g, g)
    }

    /// Commutator phase `lambda(g,h) = omega(g,h) / omega(h,g)`.
    pub fn lambda(&self, g: &GroupElement, h: &GroupElement) -> Phase {
        self.omega(g, h).mul(self.omega(h, g).conj())
    }

    /// The projective center `C_omega = { g : lambda(g,h)=1 for all h }`,
    /// found by enumeration, together with the maximal-non-commutativity flag
    /// `C_omega = {e}`.
    pub fn center_and_mnc(&self) -> (Vec<GroupElement>, bool) {
        let mut center = Vec::new();
        for g in self.group.elements() {
            let mut in_center = true;
            for h in self.group.elements() {
                if !self.lambda(&g, &h).is_one() {
                    in_center = false;
                    break;
                }
            }
            if in_center {
                center.push(g);
            }
        }
        let mnc = center.len() == 1;
        (center, mnc)
    }

    pub fn is_mnc(&self) -> bool {
        self.center_and_mnc().1
    }

    /// `Gamma(g)`: the unique element whose character reproduces the
    /// commutator phases, `chi_h(Gamma(g)) = lambda(h, g)` for all `h`.
    ///
    /// The element always exists because `lambda(., g)` is a character of the
    /// group; it is found by enumeration.
    pub fn gamma(&self, g: &GroupElement) -> GroupElement {
        'cand: for k in self.group.elements() {
            for h in self.group.elements() {
                if self.group.character(&h, &k) != self.lambda(&h, &g) {
                    continue 'cand;
                }
            }
            return k;
        }
        unreachable!("lambda(., g) is always a character of the group");
    }

    /// Full index-space table of `Gamma`.
    pub fn gamma_table(&self) -> Vec<u64> {
        self.group
            .elements()
            .map(|g| self.group.index_of(&self.gamma(&g)))
            .collect()
    }

    /// The two-sided inverse of `Gamma`; exists iff the factor set is
    /// maximally non-commutative.
    pub fn gamma_inverse(&self, g: &GroupElement) -> Result<GroupElement> {
        let table = self.gamma_table();
        let target = self.group.index_of(g);
        let mut found = None;
        for (idx, &img) in table.iter().enumerate() {
            if img == target {
                if found.is_some() {
                    return Err(CoreError::domain("Gamma not invertible (non-MNC factor set)"));
                }
                found = Some(idx as u64);
            }
        }
        match found {
            Some(idx) => Ok(self.group.element(idx)),
            None => Err(CoreError::domain("Gamma not invertible (non-MNC factor set)")),
        }
    }

    /// Index-space table of `Gamma^{-1}`; errors when not MNC.
    pub fn gamma_inverse_table(&self) -> Result<Vec<u64>> {
        let table = self.gamma_table();
        let n = self.group.order() as usize;
        let mut inv = vec![u64::MAX; n];
        for (idx, &img) in table.iter().enumerate() {
            if inv[img as usize] != u64::MAX {
                return Err(CoreError::domain("Gamma not invertible (non-MNC factor set)"));
            }
            inv[img as usize] = idx as u64;
        }
        Ok(inv)
    }

    /// Exhaustively verify the cocycle identity
    /// `omega(g,h) omega(g+h,k) = omega(h,k) omega(g,h+k)` and the gauge
    /// property `omega(g,h) = omega(-g,h)^*`; returns the number of triples
    /// checked.
    pub fn verify_cocycle(&self) -> Result<u64> {
        let g0 = &self.group;
        for g in g0.elements() {
            for h in g0.elements() {
                if self.omega(&g, &h) != self.omega(&g0.neg(&g), &h).conj() {
                    return Err(CoreError::numerical("gauge property omega(g,h)=omega(-g,h)* failed"));
                }
                for k in g0.elements() {
                    let lhs = self.omega(&g, &h).mul(self.omega(&g0.add(&g, &h)?, &k));
                    let rhs = self.omega(&h, &k).mul(self.omega(&g, &g0.add(&h, &k)?));
                    if lhs != rhs {
                        return Err(CoreError::numerical("cocycle identity failed"));
                    }
                }
            }
        }
        Ok(g0.order().pow(3))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn add_examples() {
        let z3 = FiniteAbelianGroup::zn_squared(3);
        let g = z3.element_from(&[1, 2]).unwrap();
        let h = z3.element_from(&[2, 2]).unwrap();
        assert_eq!(z3.add(&g, &h).unwrap(), z3.element_from(&[0, 1]).unwrap());
        assert_eq!(z3.add(&g, &z3.identity()).unwrap(), g);

        let z6 = FiniteAbelianGroup::zn_squared(6);
        let a = z6.element_from(&[5, 4]).unwrap();
        let b = z6.element_from(&[1, 2]).unwrap();
        assert_eq!(z6.add(&a, &b).unwrap(), z6.identity());
    }

    #[test]
    fn add_rejects_mismatched_groups() {
        let z3 = FiniteAbelianGroup::zn_squared(3);
        let z4 = FiniteAbelianGroup::zn_squared(4);
        let g = z4.element_from(&[3, 3]).unwrap();
        assert!(z3.add(&g, &z3.identity()).is_err());
    }

    #[test]
    fn enumeration_is_lexicographic_and_complete() {
        let g = FiniteAbelianGroup::new(vec![2, 3]).unwrap();
        let all: Vec<_> = g.elements().collect();
        assert_eq!(all.len(), 6);
        assert_eq!(all[0].residues(), &[0, 0]);
        assert_eq!(all[1].residues(), &[0, 1]);
        assert_eq!(all[3].residues(), &[1, 0]);
        for (i, e) in all.iter().enumerate() {
            assert_eq!(g.index_of(e), i as u64);
        }
    }

    #[test]
    fn character_examples() {
        let z3 = FiniteAbelianGroup::zn_squared(3);
        let g = z3.element_from(&[1, 0]).unwrap();
        let h = z3.element_from(&[1, 1]).unwrap();
        assert_eq!(z3.character(&g, &h), Phase::new(1, 3));
        assert_eq!(z3.character(&z3.identity(), &h), Phase::ONE);

        let z2 = FiniteAbelianGroup::zn_squared(2);
        let d = z2.element_from(&[1, 1]).unwrap();
        assert_eq!(z2.character(&d, &d), Phase::ONE);
    }

    #[test]
    fn character_orthogonality() {
        for group in [
            FiniteAbelianGroup::zn_squared(3),
            FiniteAbelianGroup::new(vec![2, 3, 4]).unwrap(),
        ] {
            for g in group.elements() {
                let sum: C64 = group
                    .elements()
                    .map(|h| group.character(&g, &h).to_c64())
                    .sum();
                let expect = if g == group.identity() {
                    group.order() as f64
                } else {
                    0.0
                };
                assert!((sum - C64::new(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn omega_examples() {
        let fs = FactorSet::zn_squared(2, 1);
        let g10 = fs.group().element_from(&[1, 0]).unwrap();
        let g01 = fs.group().element_from(&[0, 1]).unwrap();
        // exponent is what * g_2 h_1
        assert_eq!(fs.omega(&g10, &g10), Phase::ONE);
        assert_eq!(fs.omega(&g01, &g10), Phase::new(1, 2));
        assert_eq!(fs.omega(&fs.group().identity(), &g01), Phase::ONE);
    }

    #[test]
    fn lambda_examples() {
        let fs2 = FactorSet::zn_squared(2, 1);
        let g10 = fs2.group().element_from(&[1, 0]).unwrap();
        let g01 = fs2.group().element_from(&[0, 1]).unwrap();
        assert_eq!(fs2.lambda(&g10, &g01), Phase::new(1, 2));

        let fs3 = FactorSet::zn_squared(3, 1);
        let h10 = fs3.group().element_from(&[1, 0]).unwrap();
        let h01 = fs3.group().element_from(&[0, 1]).unwrap();
        // lambda(g,h) = zeta^{-what (g_1 h_2 - g_2 h_1)}
        assert_eq!(fs3.lambda(&h10, &h01), Phase::new(-1, 3));
        for g in fs3.group().elements() {
            assert!(fs3.lambda(&g, &g).is_one());
        }
    }

    #[test]
    fn lambda_is_bihomomorphic_and_conjugate_antisymmetric() {
        for fs in [FactorSet::zn_squared(3, 1), FactorSet::zn_squared(4, 3)] {
            let group = fs.group().clone();
            for g in group.elements() {
                for h in group.elements() {
                    assert_eq!(fs.lambda(&g, &h), fs.lambda(&h, &g).conj());
                    for k in group.elements() {
                        let lhs = fs.lambda(&group.add(&g, &k).unwrap(), &h);
                        let rhs = fs.lambda(&g, &h).mul(fs.lambda(&k, &h));
                        assert_eq!(lhs, rhs);
                    }
                }
            }
        }
    }

    #[test]
    fn cocycle_identity_exhaustive() {
        for fs in [
            FactorSet::zn_squared(2, 1),
            FactorSet::zn_squared(3, 2),
            FactorSet::zn_squared(4, 2),
            FactorSet::new(
                FiniteAbelianGroup::new(vec![2, 2, 3, 3]).unwrap(),
                &[(0, 1, 1), (2, 3, 1)],
            )
            .unwrap(),
        ] {
            fs.verify_cocycle().unwrap();
        }
    }

    #[test]
    fn gamma_examples_and_bijectivity() {
        let fs = FactorSet::zn_squared(3, 1);
        let g = fs.group().element_from(&[1, 0]).unwrap();
        // Gamma((g1,g2)) = what * (-g2, g1)
        assert_eq!(fs.gamma(&g), fs.group().element_from(&[0, 1]).unwrap());
        let g21 = fs.group().element_from(&[2, 1]).unwrap();
        assert_eq!(fs.gamma(&g21), fs.group().element_from(&[2, 2]).unwrap());
        assert_eq!(fs.gamma(&fs.group().identity()), fs.group().identity());

        // closed form against the enumeration solve, plus bijectivity
        for n in [2u32, 3, 4] {
            for w in 1..n as i64 {
                let fs = FactorSet::zn_squared(n, w);
                if !fs.is_mnc() {
                    continue;
                }
                let inv = fs.gamma_inverse_table().unwrap();
                for g in fs.group().elements() {
                    let (g1, g2) = (g.residues()[0] as i64, g.residues()[1] as i64);
                    let closed = fs.group().element_from(&[-w * g2, w * g1]).unwrap();
                    assert_eq!(fs.gamma(&g), closed);
                    let round = inv[fs.group().index_of(&fs.gamma(&g)) as usize];
                    assert_eq!(round, fs.group().index_of(&g));
                }
            }
        }
    }

    #[test]
    fn gamma_inverse_fails_off_mnc() {
        let fs = FactorSet::zn_squared(4, 2);
        assert!(fs.gamma_inverse(&fs.group().identity()).is_err());
    }

    #[test]
    fn center_and_mnc_examples() {
        let (c, mnc) = FactorSet::zn_squared(3, 1).center_and_mnc();
        assert_eq!(c.len(), 1);
        assert!(mnc);

        let (c, mnc) = FactorSet::zn_squared(4, 2).center_and_mnc();
        assert!(!mnc);
        let residues: Vec<_> = c.iter().map(|e| e.residues().to_vec()).collect();
        assert_eq!(c.len(), 4);
        for v in [[0u32, 0], [0, 2], [2, 0], [2, 2]] {
            assert!(residues.contains(&v.to_vec()));
        }

        let (c, mnc) = FactorSet::zn_squared(5, 0).center_and_mnc();
        assert_eq!(c.len(), 25);
        assert!(!mnc);
    }

    proptest! {
        #[test]
        fn phase_mul_matches_complex(a in -20i64..20, b in 1i64..13, c in -20i64..20, d in 1i64..13) {
            let p = Phase::new(a, b);
            let q = Phase::new(c, d);
            let lhs = p.mul(q).to_c64();
            let rhs = p.to_c64() * q.to_c64();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }

        #[test]
        fn group_laws(seed in 0u64..1000) {
            let group = FiniteAbelianGroup::new(vec![2, 3, 4]).unwrap();
            let n = group.order();
            let a = group.element(seed % n);
            let b = group.element((seed / 7) % n);
            let c = group.element((seed / 49) % n);
            let ab_c = group.add(&group.add(&a, &b).unwrap(), &c).unwrap();
            let a_bc = group.add(&a, &group.add(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            prop_assert_eq!(group.add(&a, &b).unwrap(), group.add(&b, &a).unwrap());
            prop_assert_eq!(group.add(&a, &group.neg(&a)).unwrap(), group.identity());
        }
    }
}
