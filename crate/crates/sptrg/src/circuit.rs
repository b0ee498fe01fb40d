//! The 3-qudit convolution gate (detect ring + controlled corrections), its
//! hierarchical composition into an RG circuit, leg bookkeeping, and
//! multiscale string operator expectations.

use crate::error::{CoreError, Result};
use crate::group::{FactorSet, FiniteAbelianGroup, GroupElement};
use crate::mps::{canonical_tensor, shift_operators};
use crate::projective::{projective_rep, regular_rep};
use crate::tensor::{matrix_max_diff, unitarity_deviation, DenseState};
use crate::{C64, CMat, CVec};

/// Everything the gate construction needs to know about one site: the
/// perfect tensor, the symmetry representation, shift operators, and the
/// projective data. Instantiated for the regular representation here and for
/// the entangled-pair basis by the non-MNC pipeline.
#[derive(Clone, Debug)]
pub struct SiteAlgebra {
    pub group: FiniteAbelianGroup,
    pub fs: FactorSet,
    /// physical dimension of one site
    pub dim: usize,
    /// virtual bond dimension of the perfect tensor
    pub bond: usize,
    /// perfectness scale: `Tr[(A^g)^dag A^h] = scale * delta_{g,h}`
    pub scale: f64,
    /// per-physical-index blocks of the perfect tensor
    pub a_blocks: Vec<CMat>,
    /// linear symmetry action per group index
    pub r_reps: Vec<CMat>,
    /// projective representation per group index
    pub v_reps: Vec<CMat>,
    /// left/right shift operators per group index
    pub s_l: Vec<CMat>,
    pub s_r: Vec<CMat>,
    /// sigma_g phases
    pub sigma: Vec<C64>,
    /// index table of the group negation
    pub neg: Vec<usize>,
    /// index tables of group addition
    pub add: Vec<Vec<usize>>,
}

impl SiteAlgebra {
    /// Regular-representation algebra of an MNC factor set: `|G|`-dim sites,
    /// canonical tensor `A^g = V^dag_{Gamma^{-1}(g)}`.
    pub fn regular(fs: &FactorSet) -> Result<Self> {
        let group = fs.group().clone();
        let order = group.order() as usize;
        let tensor = canonical_tensor(fs)?;
        if tensor.bond == 1 {
            return Err(CoreError::domain(
                "convolution gate requires a nontrivial MNC factor set",
            ));
        }
        let mut r_reps = Vec::with_capacity(order);
        let mut v_reps = Vec::with_capacity(order);
        let mut s_l = Vec::with_capacity(order);
        let mut s_r = Vec::with_capacity(order);
        let mut sigma = Vec::with_capacity(order);
        let mut neg = Vec::with_capacity(order);
        let mut add = vec![vec![0usize; order]; order];
        for (gi, g) in group.elements().enumerate() {
            r_reps.push(regular_rep(&group, &g));
            v_reps.push(projective_rep(fs, &g)?);
            let (l, r) = shift_operators(fs, &g)?;
            s_l.push(l);
            s_r.push(r);
            sigma.push(fs.sigma(&g).to_c64());
            neg.push(group.index_of(&group.neg(&g)) as usize);
            for (hi, h) in group.elements().enumerate() {
                add[gi][hi] = group.index_of(&group.add(&g, &h)?) as usize;
            }
        }
        Ok(SiteAlgebra {
            group,
            fs: fs.clone(),
            dim: order,
            bond: tensor.bond,
            scale: (order as f64).sqrt(),
            a_blocks: tensor.blocks,
            r_reps,
            v_reps,
            s_l,
            s_r,
            sigma,
            neg,
            add,
        })
    }

    /// Assemble a site algebra from explicitly supplied pieces (used by the
    /// entangled-pair basis); validates the defining tensor identities.
    pub fn from_parts(
        group: FiniteAbelianGroup,
        fs: FactorSet,
        scale: f64,
        a_blocks: Vec<CMat>,
        r_reps: Vec<CMat>,
        v_reps: Vec<CMat>,
        s_l: Vec<CMat>,
        s_r: Vec<CMat>,
        sigma: Vec<C64>,
    ) -> Result<Self> {
        let order = group.order() as usize;
        let bond = a_blocks[0].nrows();
        let mut neg = Vec::with_capacity(order);
        let mut add = vec![vec![0usize; order]; order];
        for (gi, g) in group.elements().enumerate() {
            neg.push(group.index_of(&group.neg(&g)) as usize);
            for (hi, h) in group.elements().enumerate() {
                add[gi][hi] = group.index_of(&group.add(&g, &h)?) as usize;
            }
        }
        let alg = SiteAlgebra {
            group,
            fs,
            dim: a_blocks.len(),
            bond,
            scale,
            a_blocks,
            r_reps,
            v_reps,
            s_l,
            s_r,
            sigma,
            neg,
            add,
        };
        if crate::mps::perfectness_deviation(&alg.a_blocks, alg.scale) > 1e-12 {
            return Err(CoreError::numerical("site tensor is not perfect"));
        }
        alg.check_defining_identities()?;
        Ok(alg)
    }

    fn check_defining_identities(&self) -> Result<()> {
        let mut dev: f64 = 0.0;
        for gi in 0..self.r_reps.len() {
            for hi in 0..self.dim {
                // R_g A = A (V_g^dag x V_g)
                let mut lhs = CMat::zeros(self.bond, self.bond);
                for hj in 0..self.dim {
                    if self.r_reps[gi][(hi, hj)].norm_sqr() > 0.0 {
                        lhs += &self.a_blocks[hj] * self.r_reps[gi][(hi, hj)];
                    }
                }
                let rhs = self.v_reps[gi].adjoint() * &self.a_blocks[hi] * &self.v_reps[gi];
                dev = dev.max(matrix_max_diff(&lhs, &rhs));
                // A (1 x V_g) = S^R_g A and A (V_g^dag x 1) = S^L_g A
                let mut srl = CMat::zeros(self.bond, self.bond);
                let mut sll = CMat::zeros(self.bond, self.bond);
                for hj in 0..self.dim {
                    if self.s_r[gi][(hi, hj)].norm_sqr() > 0.0 {
                        srl += &self.a_blocks[hj] * self.s_r[gi][(hi, hj)];
                    }
                    if self.s_l[gi][(hi, hj)].norm_sqr() > 0.0 {
                        sll += &self.a_blocks[hj] * self.s_l[gi][(hi, hj)];
                    }
                }
                dev = dev.max(matrix_max_diff(
                    &(&self.a_blocks[hi] * &self.v_reps[gi]),
                    &srl,
                ));
                dev = dev.max(matrix_max_diff(
                    &(self.v_reps[gi].adjoint() * &self.a_blocks[hi]),
                    &sll,
                ));
            }
        }
        if dev > 1e-12 {
            return Err(CoreError::numerical(format!(
                "site algebra identities deviate by {dev:.3e}"
            )));
        }
        Ok(())
    }

    /// Normalized detector-output state for a left error `g`: proportional
    /// to `sum_m Tr[A^m V_g] |m>` (the basis state `|Gamma(g)>` in the
    /// regular representation).
    pub fn ctrl_left(&self, gidx: usize) -> CVec {
        let mut v = CVec::zeros(self.dim);
        for m in 0..self.dim {
            let prod = &self.a_blocks[m] * &self.v_reps[gidx];
            v[m] = prod.diagonal().iter().sum();
        }
        let n = v.norm();
        v / C64::new(n, 0.0)
    }

    /// Normalized detector-output state for a right error `g`: proportional
    /// to `sum_m Tr[A^m V_{-g}] |m>` (`|Gamma(-g)>` in the regular
    /// representation).
    pub fn ctrl_right(&self, gidx: usize) -> CVec {
        self.ctrl_left(self.neg[gidx])
    }
}

/// Wiring variant of the detect ring; variants transpose the index order
/// fed to individual output tensors of the hexagon.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RingWiring {
    pub swap_left: bool,
    pub swap_center: bool,
    pub swap_right: bool,
}

impl RingWiring {
    fn all() -> impl Iterator<Item = RingWiring> {
        (0..8u8).map(|b| RingWiring {
            swap_left: b & 1 != 0,
            swap_center: b & 2 != 0,
            swap_right: b & 4 != 0,
        })
    }
}

/// The 3-qudit convolution gate: detect ring `D` followed by the controlled
/// corrections, composed as `C = CCR CS^R CS^L D`.
#[derive(Clone, Debug)]
pub struct ConvGate {
    pub algebra: SiteAlgebra,
    pub detect: CMat,
    pub cs_left: CMat,
    pub cs_right: CMat,
    pub ccr: CMat,
    pub composite: CMat,
    /// wiring variant selected for the detect ring
    pub wiring: RingWiring,
    /// realized ancilla label convention: `+1` means the left ancilla reads
    /// `|Gamma(g - h)>` under the error `R_g x R_h x R_k` (the single-error
    /// proposition form), `-1` the opposite sign
    pub left_sign: i8,
    pub right_sign: i8,
    /// scale of the open-leg majority identity
    /// `C (R_g x R_h x R_k) A^{(x)3} = gate_scale |a_L> (x) R_maj A (x) |a_R>`
    pub gate_scale: f64,
}

fn kron3(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    a.kronecker(b).kronecker(c)
}

/// `A (x) A (x) A` with open virtual legs, as a `dim^3 x bond^2` matrix.
fn triple_tensor(alg: &SiteAlgebra) -> CMat {
    let d = alg.dim;
    let b = alg.bond;
    let mut t = CMat::zeros(d * d * d, b * b);
    for x1 in 0..d {
        for x2 in 0..d {
            let m12 = &alg.a_blocks[x1] * &alg.a_blocks[x2];
            for x3 in 0..d {
                let m = &m12 * &alg.a_blocks[x3];
                let row = (x1 * d + x2) * d + x3;
                for al in 0..b {
                    for be in 0..b {
                        t[(row, al * b + be)] = m[(al, be)];
                    }
                }
            }
        }
    }
    t
}

/// Build the detect unitary for a given ring wiring.
///
/// Matrix elements contract three conjugated input tensors against three
/// output tensors around a closed hexagon (default wiring):
///
/// ```text
/// <mL r mR| D |x1 x2 x3> = N sum  [A^{x1}]*_{1L 1R} [A^{x2}]*_{2L 2R}
///     [A^{x3}]*_{3L 3R}  [A^{mL}]_{2L 1R} [A^{r}]_{1L 3R} [A^{mR}]_{3L 2R}
/// ```
///
/// with `N = scale^{-3}` fixed by unitarity and re-verified at construction.
pub fn detect_unitary(alg: &SiteAlgebra, wiring: RingWiring) -> CMat {
    let d = alg.dim;
    let b = alg.bond;
    // physical -> virtual-pair map: A_hat[s, u*b + v] = A^s[u, v]
    let mut a_hat = CMat::zeros(d, b * b);
    for s in 0..d {
        for u in 0..b {
            for v in 0..b {
                a_hat[(s, u * b + v)] = alg.a_blocks[s][(u, v)];
            }
        }
    }
    let a_hat_dag = a_hat.adjoint();
    let big_in = kron3(&a_hat_dag, &a_hat_dag, &a_hat_dag); // b^6 x d^3

    // regroup the six virtual digits (1L 1R 2L 2R 3L 3R) into the output
    // pairs ((2L,1R),(1L,3R),(3L,2R)), with optional per-leg swaps
    let mut strides = [0usize; 6];
    strides[5] = 1;
    for i in (0..5).rev() {
        strides[i] = strides[i + 1] * b;
    }
    let digit = |idx: usize, pos: usize| (idx / strides[pos]) % b;
    let mut permuted = CMat::zeros(b.pow(6) as usize, big_in.ncols());
    for old in 0..b.pow(6) as usize {
        let v = [
            digit(old, 0),
            digit(old, 1),
            digit(old, 2),
            digit(old, 3),
            digit(old, 4),
            digit(old, 5),
        ];
        let (l0, l1) = if wiring.swap_left { (v[1], v[2]) } else { (v[2], v[1]) };
        let (c0, c1) = if wiring.swap_center { (v[5], v[0]) } else { (v[0], v[5]) };
        let (r0, r1) = if wiring.swap_right { (v[3], v[4]) } else { (v[4], v[3]) };
        let new = ((((l0 * b + l1) * b + c0) * b + c1) * b + r0) * b + r1;
        for col in 0..big_in.ncols() {
            permuted[(new, col)] = big_in[(old, col)];
        }
    }

    let big_out = kron3(&a_hat, &a_hat, &a_hat); // d^3 x b^6
    let norm = 1.0 / alg.scale.powi(3);
    (big_out * permuted) * C64::new(norm, 0.0)
}

/// The controlled gates on `(m_L, r, m_R)`:
/// `CS^L = sum_g |c^L_g><c^L_g| (x) (S^L_g)^dag (x) 1`,
/// `CS^R = sum_g sigma_g^* 1 (x) (S^R_g)^dag (x) |c^R_g><c^R_g|`,
/// `CCR = sum_{g,g'} |c^L_{-g}><..| (x) ((R_g^dag - 1) delta_{g,g'} + 1) (x) |c^R_{-g'}><..|`,
/// where the control states reduce to `|Gamma(g)>` and `|Gamma(-g)>` in the
/// regular representation.
pub fn controlled_gates(alg: &SiteAlgebra) -> (CMat, CMat, CMat) {
    let d = alg.dim;
    let id = CMat::identity(d, d);
    let mut cs_l = CMat::zeros(d * d * d, d * d * d);
    let mut cs_r = CMat::zeros(d * d * d, d * d * d);
    let mut ccr = CMat::zeros(d * d * d, d * d * d);
    let ctrl_l: Vec<CVec> = (0..d).map(|g| alg.ctrl_left(g)).collect();
    let ctrl_r: Vec<CVec> = (0..d).map(|g| alg.ctrl_right(g)).collect();
    let proj = |v: &CVec| -> CMat {
        let mut p = CMat::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                p[(i, j)] = v[i] * v[j].conj();
            }
        }
        p
    };
    for g in 0..d {
        let pl = proj(&ctrl_l[g]);
        let pr = proj(&ctrl_r[g]);
        cs_l += kron3(&pl, &alg.s_l[g].adjoint(), &id);
        cs_r += kron3(&id, &alg.s_r[g].adjoint(), &pr) * alg.sigma[g].conj();
        for gp in 0..d {
            let mid = if g == gp {
                alg.r_reps[g].adjoint()
            } else {
                id.clone()
            };
            ccr += kron3(&proj(&ctrl_l[alg.neg[g]]), &mid, &proj(&ctrl_r[alg.neg[gp]]));
        }
    }
    (cs_l, cs_r, ccr)
}

/// Majority vote with center tie-break, on group indices.
pub fn maj_idx(g: u64, h: u64, k: u64) -> u64 {
    if h == g || k == g {
        g
    } else if k == h {
        h
    } else if g == k {
        k
    } else {
        h
    }
}

/// Majority vote with center tie-break.
pub fn maj(
    group: &FiniteAbelianGroup,
    g: &GroupElement,
    h: &GroupElement,
    k: &GroupElement,
) -> GroupElement {
    let (gi, hi, ki) = (group.index_of(g), group.index_of(h), group.index_of(k));
    group.element(maj_idx(gi, hi, ki))
}

impl ConvGate {
    /// Build the convolution gate, searching the ring wirings for the one
    /// that passes unitarity, the no-error identity, and exhaustive
    /// single-error correction; records the realized ancilla convention.
    pub fn build(alg: SiteAlgebra) -> Result<ConvGate> {
        let triple = triple_tensor(&alg);
        let mut last_err = String::new();
        for wiring in RingWiring::all() {
            let detect = detect_unitary(&alg, wiring);
            if unitarity_deviation(&detect) > 1e-12 {
                last_err = format!("wiring {wiring:?}: detect ring not unitary");
                continue;
            }
            let (cs_left, cs_right, ccr) = controlled_gates(&alg);
            let composite = &ccr * &cs_right * &cs_left * &detect;
            if unitarity_deviation(&composite) > 1e-12 {
                last_err = format!("wiring {wiring:?}: composite not unitary");
                continue;
            }
            let mut gate = ConvGate {
                algebra: alg.clone(),
                detect,
                cs_left,
                cs_right,
                ccr,
                composite,
                wiring,
                left_sign: 0,
                right_sign: 0,
                gate_scale: 0.0,
            };
            match gate.calibrate(&triple) {
                Ok(()) => return Ok(gate),
                Err(e) => last_err = format!("wiring {wiring:?}: {e}"),
            }
        }
        Err(CoreError::numerical(format!(
            "no detect-ring wiring passes construction checks; last failure: {last_err}"
        )))
    }

    /// Verify the no-error identity and all single-error cases, fixing the
    /// realized ancilla sign convention.
    fn calibrate(&mut self, triple: &CMat) -> Result<()> {
        let alg = &self.algebra;
        let d = alg.dim;
        // the three input contractions produce scale^3, cancelling the ring
        // normalization, so C A^{(x)3} = |gamma0|^2 |c^L_e> (x) A (x) |c^R_e>
        let mut gamma0_norm_sq = 0.0;
        for m in 0..d {
            let tr: C64 = alg.a_blocks[m].diagonal().iter().sum();
            gamma0_norm_sq += tr.norm_sqr();
        }
        self.gate_scale = gamma0_norm_sq;
        // no-error: C A^{(x)3} = gate_scale |c^L_e> (x) A (x) |c^R_e>
        let out = &self.composite * triple;
        let expect = self.expected_output(0, 0, 0, 1, 1);
        if matrix_max_diff(&out, &expect) > 1e-10 {
            return Err(CoreError::numerical("no-error identity failed"));
        }
        let mut left_sign = 0i8;
        let mut right_sign = 0i8;
        for gi in 1..d {
            let out = &self.composite * self.errored_triple(triple, gi, 0, 0);
            let mut matched = false;
            for sign in [1i8, -1] {
                if matrix_max_diff(&out, &self.expected_output(gi, 0, 0, sign, 1)) < 1e-10 {
                    if left_sign == 0 {
                        left_sign = sign;
                    } else if left_sign != sign {
                        return Err(CoreError::numerical("inconsistent left ancilla sign"));
                    }
                    matched = true;
                    break;
                }
            }
            if !matched {
                return Err(CoreError::numerical("left single error not corrected"));
            }
            let out = &self.composite * self.errored_triple(triple, 0, 0, gi);
            let mut matched = false;
            for sign in [1i8, -1] {
                if matrix_max_diff(&out, &self.expected_output(0, 0, gi, left_sign, sign)) < 1e-10 {
                    if right_sign == 0 {
                        right_sign = sign;
                    } else if right_sign != sign {
                        return Err(CoreError::numerical("inconsistent right ancilla sign"));
                    }
                    matched = true;
                    break;
                }
            }
            if !matched {
                return Err(CoreError::numerical("right single error not corrected"));
            }
            let out = &self.composite * self.errored_triple(triple, 0, gi, 0);
            if matrix_max_diff(&out, &self.expected_output(0, gi, 0, left_sign, right_sign)) > 1e-10
            {
                return Err(CoreError::numerical("center single error not corrected"));
            }
        }
        self.left_sign = if left_sign == 0 { 1 } else { left_sign };
        self.right_sign = if right_sign == 0 { 1 } else { right_sign };
        Ok(())
    }

    /// `(R_g x R_h x R_k) (A x A x A)` with open virtual legs.
    fn errored_triple(&self, triple: &CMat, gi: usize, hi: usize, ki: usize) -> CMat {
        let alg = &self.algebra;
        kron3(&alg.r_reps[gi], &alg.r_reps[hi], &alg.r_reps[ki]) * triple
    }

    /// Expected corrected output
    /// `gate_scale |c^L_{ls(g-h)}> (x) R_maj A (x) |c^R_{rs(k-h)}>`.
    fn expected_output(&self, gi: usize, hi: usize, ki: usize, ls: i8, rs: i8) -> CMat {
        let alg = &self.algebra;
        let d = alg.dim;
        let b = alg.bond;
        let sub = |a: usize, c: usize| alg.add[a][alg.neg[c]];
        let l_label = if ls >= 0 { sub(gi, hi) } else { sub(hi, gi) };
        let r_label = if rs >= 0 { sub(ki, hi) } else { sub(hi, ki) };
        let maj = maj_idx(gi as u64, hi as u64, ki as u64) as usize;
        let cl = alg.ctrl_left(l_label);
        let cr = alg.ctrl_right(r_label);
        let mut out = CMat::zeros(d * d * d, b * b);
        for r in 0..d {
            let mut block = CMat::zeros(b, b);
            for rp in 0..d {
                if alg.r_reps[maj][(r, rp)].norm_sqr() > 0.0 {
                    block += &alg.a_blocks[rp] * alg.r_reps[maj][(r, rp)];
                }
            }
            for ml in 0..d {
                if cl[ml].norm_sqr() < 1e-28 {
                    continue;
                }
                for mr in 0..d {
                    let w = cl[ml] * cr[mr] * C64::new(self.gate_scale, 0.0);
                    if w.norm_sqr() < 1e-28 {
                        continue;
                    }
                    let row = (ml * d + r) * d + mr;
                    for al in 0..b {
                        for be in 0..b {
                            out[(row, al * b + be)] += w * block[(al, be)];
                        }
                    }
                }
            }
        }
        out
    }

    /// Exhaustively verify the majority-vote corollary over all `|G|^3`
    /// error triples as an open-virtual-leg tensor identity; returns the max
    /// deviation.
    pub fn majority_corollary_deviation(&self) -> f64 {
        let alg = &self.algebra;
        let triple = triple_tensor(alg);
        let d = alg.dim;
        let mut dev: f64 = 0.0;
        for gi in 0..d {
            for hi in 0..d {
                for ki in 0..d {
                    let out = &self.composite * self.errored_triple(&triple, gi, hi, ki);
                    let expect = self.expected_output(gi, hi, ki, self.left_sign, self.right_sign);
                    dev = dev.max(matrix_max_diff(&out, &expect));
                }
            }
        }
        dev
    }

    /// Max deviation of the operator-level symmetry pushthrough
    /// `C (R_g x R_g x R_g) = (1 x R_g x 1) C` over all `g`.
    pub fn symmetry_pushthrough_deviation(&self) -> f64 {
        let alg = &self.algebra;
        let d = alg.dim;
        let id = CMat::identity(d, d);
        let mut dev: f64 = 0.0;
        for g in 0..alg.r_reps.len() {
            let lhs = &self.composite * kron3(&alg.r_reps[g], &alg.r_reps[g], &alg.r_reps[g]);
            let rhs = kron3(&id, &alg.r_reps[g], &id) * &self.composite;
            dev = dev.max(matrix_max_diff(&lhs, &rhs));
        }
        dev
    }

    /// Numerically verify how `S^L_g` on the renormalized leg pushes down
    /// through the gate:
    ///
    /// ```text
    /// C^dag (1 x S^L_g x 1) C = R_g x S^L_g x 1
    ///     + (S^L_g x 1 x 1 - R_g x S^L_g x 1) (1/|G|) sum_k S^R_k x R_k x S^L_k
    /// ```
    ///
    /// Returns `(max identity deviation, max pairwise commutator norm among
    /// the right-hand-side terms)`.
    pub fn pushdown_sl_report(&self) -> (f64, f64) {
        let alg = &self.algebra;
        let d = alg.dim;
        let id = CMat::identity(d, d);
        let mut sum_string = CMat::zeros(d * d * d, d * d * d);
        for k in 0..d {
            sum_string += kron3(&alg.s_r[k], &alg.r_reps[k], &alg.s_l[k]);
        }
        sum_string *= C64::new(1.0 / d as f64, 0.0);
        let mut dev: f64 = 0.0;
        let mut comm_dev: f64 = 0.0;
        for g in 0..d {
            let lhs = self.composite.adjoint() * kron3(&id, &alg.s_l[g], &id) * &self.composite;
            let t1 = kron3(&alg.r_reps[g], &alg.s_l[g], &id);
            let t2 = kron3(&alg.s_l[g], &id, &id);
            let rhs = &t1 + (&t2 - &t1) * &sum_string;
            dev = dev.max(matrix_max_diff(&lhs, &rhs));
            let mut terms = vec![t1, t2];
            for k in 0..d {
                terms.push(kron3(&alg.s_r[k], &alg.r_reps[k], &alg.s_l[k]));
            }
            for a in 0..terms.len() {
                for c in (a + 1)..terms.len() {
                    let comm = &terms[a] * &terms[c] - &terms[c] * &terms[a];
                    comm_dev = comm_dev.max(comm.iter().map(|x| x.norm()).fold(0.0, f64::max));
                }
            }
        }
        (dev, comm_dev)
    }
}

/// Per-depth bookkeeping of renormalized and ancilla leg positions.
#[derive(Clone, Debug)]
pub struct LegLayout {
    /// renormalized site positions after each depth; entry 0 is all sites
    pub renorm: Vec<Vec<usize>>,
    /// ancilla positions created at each depth; entry 0 is empty
    pub ancilla: Vec<Vec<usize>>,
}

impl LegLayout {
    pub fn plan(chain_len: usize, depth: usize) -> Result<LegLayout> {
        let mut l = 0u32;
        let mut n = chain_len;
        while n % 3 == 0 {
            n /= 3;
            l += 1;
        }
        if n != 1 {
            return Err(CoreError::structural(format!(
                "chain length {chain_len} is not a power of 3"
            )));
        }
        if depth as u32 > l {
            return Err(CoreError::structural(format!(
                "depth {depth} exceeds log3({chain_len}) = {l}"
            )));
        }
        let mut renorm = vec![(0..chain_len).collect::<Vec<_>>()];
        let mut ancilla = vec![Vec::new()];
        for d in 1..=depth {
            let prev = &renorm[d - 1];
            let mut next = Vec::new();
            let mut anc = Vec::new();
            for t in 0..prev.len() / 3 {
                anc.push(prev[3 * t]);
                next.push(prev[3 * t + 1]);
                anc.push(prev[3 * t + 2]);
            }
            renorm.push(next);
            ancilla.push(anc);
        }
        Ok(LegLayout { renorm, ancilla })
    }

    pub fn renorm_legs(&self, depth: usize) -> &[usize] {
        &self.renorm[depth]
    }

    pub fn ancilla_legs(&self, depth: usize) -> &[usize] {
        &self.ancilla[depth]
    }
}

/// Apply `depth` layers of a 3-site gate to consecutive renormalized
/// triples (sequentially, increasing triple index), returning the evolved
/// state and the leg layout.
pub fn run_layers(
    state: &DenseState,
    gate: &CMat,
    depth: usize,
) -> Result<(DenseState, LegLayout)> {
    let layout = LegLayout::plan(state.num_sites(), depth)?;
    let mut out = state.clone();
    for d in 1..=depth {
        let prev = &layout.renorm[d - 1];
        for t in 0..prev.len() / 3 {
            let sites = [prev[3 * t], prev[3 * t + 1], prev[3 * t + 2]];
            out.apply_unitary(gate, &sites)?;
        }
    }
    Ok((out, layout))
}

/// Apply `depth` layers of the convolution gate.
pub fn run_circuit(
    state: &DenseState,
    gate: &ConvGate,
    depth: usize,
) -> Result<(DenseState, LegLayout)> {
    run_layers(state, &gate.composite, depth)
}

/// Exact multiscale string operator expectation: run the circuit to `depth`
/// and evaluate the bare string on the renormalized legs between positions
/// `i < j` (which must be renormalized legs at that depth).
pub fn mso_expectation(
    state: &DenseState,
    gate: &ConvGate,
    depth: usize,
    g: &GroupElement,
    i: usize,
    j: usize,
) -> Result<C64> {
    let (evolved, layout) = run_circuit(state, gate, depth)?;
    mso_on_evolved(&evolved, &layout, &gate.algebra.fs, depth, g, i, j)
}

/// Same as [`mso_expectation`] but starting from an already evolved state.
pub fn mso_on_evolved(
    evolved: &DenseState,
    layout: &LegLayout,
    fs: &FactorSet,
    depth: usize,
    g: &GroupElement,
    i: usize,
    j: usize,
) -> Result<C64> {
    let legs = layout.renorm_legs(depth);
    let ci = legs.iter().position(|&p| p == i);
    let cj = legs.iter().position(|&p| p == j);
    let (ci, cj) = match (ci, cj) {
        (Some(a), Some(b)) if a < b => (a, b),
        _ => {
            return Err(CoreError::structural(format!(
                "({i},{j}) are not ordered renormalized legs at depth {depth}"
            )))
        }
    };
    let (s_l, s_r) = shift_operators(fs, g)?;
    let mut factors = vec![(legs[ci], s_r)];
    for leg in &legs[ci + 1..cj] {
        factors.push((*leg, regular_rep(fs.group(), g)));
    }
    factors.push((legs[cj], s_l));
    crate::mps::product_expectation_dense(evolved, &factors)
}

/// String expectation on the renormalized legs using the matrices of an
/// arbitrary site algebra (entangled-pair basis included): `S^R` at coarse
/// index `ci`, the algebra's linear symmetry on the interior, `S^L` at `cj`.
pub fn mso_on_evolved_alg(
    evolved: &DenseState,
    layout: &LegLayout,
    alg: &SiteAlgebra,
    depth: usize,
    gidx: usize,
    ci: usize,
    cj: usize,
) -> Result<C64> {
    let legs = layout.renorm_legs(depth);
    if ci >= cj || cj >= legs.len() {
        return Err(CoreError::structural(
            "string needs ordered coarse indices within the renormalized register",
        ));
    }
    let mut factors = vec![(legs[ci], alg.s_r[gidx].clone())];
    for leg in &legs[ci + 1..cj] {
        factors.push((*leg, alg.r_reps[gidx].clone()));
    }
    factors.push((legs[cj], alg.s_l[gidx].clone()));
    crate::mps::product_expectation_dense(evolved, &factors)
}

/// Terminal single-leg indicator once only one renormalized leg remains:
/// the normalized reference-projector reading
/// `(<Pi_0> - 1/|G|) / (1 - 1/|G|)`, which is 1 exactly when the register
/// has converged to the one-site reference `|0>`.
///
/// The naive wrap-around of the string operator, `S^L_g S^R_g = R_g`, pulls
/// back through the circuit to the global symmetry and therefore reads 1 on
/// every symmetric input; the projector indicator is the informative
/// terminal observable (it matches the ancilla-purity normalization, and
/// `p = (1 + (n-1) S)/n` recovers the raw projector probability).
pub fn mso_terminal_indicator(
    evolved: &DenseState,
    layout: &LegLayout,
    fs: &FactorSet,
    depth: usize,
    g: &GroupElement,
) -> Result<C64> {
    let legs = layout.renorm_legs(depth);
    if legs.len() != 1 {
        return Err(CoreError::structural(
            "terminal indicator needs exactly one renormalized leg",
        ));
    }
    let _ = g;
    let order = fs.group().order() as f64;
    let p0 = evolved.site_marginal(legs[0])[0];
    Ok(C64::new((p0 - 1.0 / order) / (1.0 - 1.0 / order), 0.0))
}
