//! RG circuit recognizing spontaneous symmetry breaking: generalized
//! CNOT/Toffoli gates implementing blockwise majority vote on basis labels.
//!
//! Opposite basis convention to the SPT modules: here the symmetry is
//! generated by shift operators `S_g` and the order parameter `R_g` is
//! diagonal.

use crate::circuit::{run_layers, LegLayout};
use crate::error::{CoreError, Result};
use crate::group::{FiniteAbelianGroup, GroupElement};
use crate::lanczos::SparseHamiltonian;
use crate::projective::regular_rep;
use crate::tensor::DenseState;
use crate::{C64, CMat};

/// The shift representation `S_g = sum_h |g+h><h|`.
pub fn shift_rep(group: &FiniteAbelianGroup, g: &GroupElement) -> CMat {
    let n = group.order() as usize;
    let mut s = CMat::zeros(n, n);
    for h in 0..n as u64 {
        let to = group.add_idx(g_idx(group, g), h);
        s[(to as usize, h as usize)] = C64::new(1.0, 0.0);
    }
    s
}

fn g_idx(group: &FiniteAbelianGroup, g: &GroupElement) -> u64 {
    group.index_of(g)
}

/// Classical action of the convolution gate:
/// `(g, h, k) -> (g - h, maj(g,h,k), k - h)`.
pub fn ssb_gate_classical(
    group: &FiniteAbelianGroup,
    g: &GroupElement,
    h: &GroupElement,
    k: &GroupElement,
) -> Result<(GroupElement, GroupElement, GroupElement)> {
    let left = group.sub(g, h)?;
    let right = group.sub(k, h)?;
    let maj = crate::circuit::maj(group, g, h, k);
    Ok((left, maj, right))
}

/// The controlled shift `CS_+- = sum_{g,h} |g><g| (x) |h +- g><h|` on two
/// sites (control first).
pub fn controlled_shift(group: &FiniteAbelianGroup, plus: bool) -> CMat {
    let n = group.order() as usize;
    let mut m = CMat::zeros(n * n, n * n);
    for g in 0..n as u64 {
        for h in 0..n as u64 {
            let t = if plus {
                group.add_idx(h, g)
            } else {
                group.add_idx(h, group.neg_idx(g))
            };
            m[((g * n as u64 + t) as usize, (g * n as u64 + h) as usize)] = C64::new(1.0, 0.0);
        }
    }
    m
}

/// The doubly controlled shift
/// `CCS_+- = sum_g |g><g| (x) |g><g| (x) S_{+-g} + (unequal controls) (x) 1`
/// on `(control, target, control)` wired as `(left, center, right)`.
fn doubly_controlled_shift_center(group: &FiniteAbelianGroup, plus: bool) -> CMat {
    let n = group.order() as usize;
    let mut m = CMat::zeros(n * n * n, n * n * n);
    for a in 0..n as u64 {
        for b in 0..n as u64 {
            for c in 0..n as u64 {
                let t = if a == c {
                    if plus {
                        group.add_idx(b, a)
                    } else {
                        group.add_idx(b, group.neg_idx(a))
                    }
                } else {
                    b
                };
                let row = ((a * n as u64 + t) * n as u64 + c) as usize;
                let col = ((a * n as u64 + b) * n as u64 + c) as usize;
                m[(row, col)] = C64::new(1.0, 0.0);
            }
        }
    }
    m
}

/// The SSB convolution gate on `(left, center, right)`: two `CS_-` gates
/// controlled by the center leg followed by one `CCS_+` controlled by the
/// outer legs. A permutation matrix realizing
/// `(g,h,k) -> (g-h, maj(g,h,k), k-h)`.
pub fn ssb_gate(group: &FiniteAbelianGroup) -> Result<CMat> {
    let n = group.order() as usize;
    let id = CMat::identity(n, n);
    // CS_- with center control, left target: reorder the two-site gate
    let cs = controlled_shift(group, false);
    let mut cs_center_left = CMat::zeros(n * n * n, n * n * n);
    let mut cs_center_right = CMat::zeros(n * n * n, n * n * n);
    for ctrl in 0..n {
        for t_out in 0..n {
            for t_in in 0..n {
                let w = cs[(ctrl * n + t_out, ctrl * n + t_in)];
                if w.norm_sqr() == 0.0 {
                    continue;
                }
                for free in 0..n {
                    // left target: (t, ctrl, free)
                    cs_center_left[(
                        (t_out * n + ctrl) * n + free,
                        (t_in * n + ctrl) * n + free,
                    )] += w;
                    // right target: (free, ctrl, t)
                    cs_center_right[(
                        (free * n + ctrl) * n + t_out,
                        (free * n + ctrl) * n + t_in,
                    )] += w;
                }
            }
        }
    }
    let ccs = doubly_controlled_shift_center(group, true);
    let gate = ccs * cs_center_right * cs_center_left;
    // verify against the classical truth table
    for g in group.elements() {
        for h in group.elements() {
            for k in group.elements() {
                let (l, m, r) = ssb_gate_classical(group, &g, &h, &k)?;
                let col = ((group.index_of(&g) * group.order() + group.index_of(&h))
                    * group.order()
                    + group.index_of(&k)) as usize;
                let row = ((group.index_of(&l) * group.order() + group.index_of(&m))
                    * group.order()
                    + group.index_of(&r)) as usize;
                if (gate[(row, col)] - C64::new(1.0, 0.0)).norm() > 1e-14 {
                    return Err(CoreError::numerical(
                        "SSB gate disagrees with its classical truth table",
                    ));
                }
            }
        }
    }
    let _ = id;
    Ok(gate)
}

/// Apply `depth` layers of the SSB convolution gate.
pub fn run_ssb(state: &DenseState, group: &FiniteAbelianGroup, depth: usize) -> Result<(DenseState, LegLayout)> {
    let gate = ssb_gate(group)?;
    run_layers(state, &gate, depth)
}

/// Largest single-renormalized-site order-parameter magnitude
/// `max_{g != e, legs} |<R_g>|` at the given depth.
pub fn para_uniformity(
    evolved: &DenseState,
    layout: &LegLayout,
    group: &FiniteAbelianGroup,
    depth: usize,
) -> Result<f64> {
    let mut max_val: f64 = 0.0;
    for &leg in layout.renorm_legs(depth) {
        for g in group.elements().skip(1) {
            let r = regular_rep(group, &g);
            let val = evolved.expectation(&r, &[leg])?;
            max_val = max_val.max(val.norm());
        }
    }
    Ok(max_val)
}

/// The Ising-like Hamiltonian
/// `H = -sum_i sum_{g != e} (R_{-g,i} R_{g,i+1} + lambda S_{g,i})`
/// assembled with conjugate `g` pairs combined so every stored term is
/// real symmetric.
pub fn ising_hamiltonian(
    group: &FiniteAbelianGroup,
    lambda: f64,
    chain_len: usize,
) -> Result<SparseHamiltonian> {
    let n = group.order() as usize;
    let mut h = SparseHamiltonian::new(n, chain_len);
    let mut done: Vec<bool> = vec![false; n];
    for g in group.elements().skip(1) {
        let gi = group.index_of(&g) as usize;
        if done[gi] {
            continue;
        }
        let neg = group.neg(&g);
        let ni = group.index_of(&neg) as usize;
        done[gi] = true;
        done[ni] = true;
        let r_g = regular_rep(group, &g);
        let r_neg = regular_rep(group, &neg);
        let s_g = shift_rep(group, &g);
        let s_neg = shift_rep(group, &neg);
        let (coupling, field) = if gi == ni {
            (r_neg.kronecker(&r_g), s_g.clone())
        } else {
            (
                r_neg.kronecker(&r_g) + r_g.kronecker(&r_neg),
                &s_g + &s_neg,
            )
        };
        for i in 0..chain_len {
            h.add_term(
                vec![i, (i + 1) % chain_len],
                &(coupling.clone() * C64::new(-1.0, 0.0)),
            )?;
            if lambda != 0.0 {
                h.add_term(vec![i], &(field.clone() * C64::new(-lambda, 0.0)))?;
            }
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::maj_idx;
    use crate::tensor::DEFAULT_SIZE_CAP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn z(n: u32) -> FiniteAbelianGroup {
        FiniteAbelianGroup::new(vec![n]).unwrap()
    }

    #[test]
    fn classical_examples() {
        let z3 = z(3);
        let e = |v: i64| z3.element_from(&[v]).unwrap();
        let (l, m, r) = ssb_gate_classical(&z3, &e(1), &e(1), &e(2)).unwrap();
        assert_eq!((l, m, r), (e(0), e(1), e(1)));
        let (l, m, r) = ssb_gate_classical(&z3, &e(2), &e(2), &e(2)).unwrap();
        assert_eq!((l, m, r), (e(0), e(2), e(0)));
        let (l, m, r) = ssb_gate_classical(&z3, &e(0), &e(1), &e(2)).unwrap();
        assert_eq!((l, m, r), (e(2), e(1), e(1)));
    }

    #[test]
    fn gate_matches_truth_table_exhaustively() {
        // |G| <= 4, including a two-factor group
        for group in [
            z(2),
            z(3),
            z(4),
            FiniteAbelianGroup::new(vec![2, 2]).unwrap(),
        ] {
            let gate = ssb_gate(&group).unwrap();
            assert!(crate::tensor::unitarity_deviation(&gate) < 1e-14);
        }
    }

    #[test]
    fn gate_commutes_with_shift_symmetry() {
        for group in [z(2), z(3)] {
            let gate = ssb_gate(&group).unwrap();
            let n = group.order() as usize;
            let id = CMat::identity(n, n);
            for g in group.elements() {
                let s = shift_rep(&group, &g);
                let lhs = &gate * s.kronecker(&s).kronecker(&s);
                let rhs = id.kronecker(&s).kronecker(&id) * &gate;
                assert!(crate::tensor::matrix_max_diff(&lhs, &rhs) < 1e-14);
            }
        }
    }

    #[test]
    fn ordered_input_renormalizes_cleanly() {
        let group = z(3);
        let state = DenseState::basis_state(3, &[2; 9], DEFAULT_SIZE_CAP).unwrap();
        let (evolved, layout) = run_ssb(&state, &group, 2).unwrap();
        // renormalized leg in |2>, ancillas in |0>
        let leg = layout.renorm_legs(2)[0];
        let marg = evolved.site_marginal(leg);
        assert!((marg[2] - 1.0).abs() < 1e-12);
        for d in 1..=2 {
            for &a in layout.ancilla_legs(d) {
                let marg = evolved.site_marginal(a);
                assert!((marg[0] - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn paramagnet_stays_uniform() {
        let group = z(3);
        let n = 3usize;
        let plus = vec![C64::new(1.0, 0.0); n.pow(9)];
        let state = DenseState::from_amplitudes(n, 9, plus, DEFAULT_SIZE_CAP).unwrap();
        for d in 1..=2usize {
            let (evolved, layout) = run_ssb(&state, &group, d).unwrap();
            let dev = para_uniformity(&evolved, &layout, &group, d).unwrap();
            assert!(dev < 1e-10, "depth {d}: {dev}");
        }
    }

    #[test]
    fn sparse_flips_converge_to_ordered_state() {
        let group = z(3);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // amplitudes concentrated near |1>^9 with sparse flips
        let mut digits = vec![1usize; 9];
        for _ in 0..2 {
            let site = rng.gen_range(0..9);
            digits[site] = rng.gen_range(0..3);
        }
        // keep at most one flip per depth-1 triple
        digits[0] = 2;
        digits[3] = 1;
        digits[4] = 0;
        digits[5] = 1;
        let state = DenseState::basis_state(3, &digits, DEFAULT_SIZE_CAP).unwrap();
        let (evolved, layout) = run_ssb(&state, &group, 2).unwrap();
        let leg = layout.renorm_legs(2)[0];
        let marg = evolved.site_marginal(leg);
        assert!(marg[1] > 0.99, "marginal {marg:?}");
    }

    #[test]
    fn global_relabeling_equivariance() {
        let group = z(3);
        let state = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let amps: Vec<C64> = (0..3usize.pow(9))
                .map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
                .collect();
            DenseState::from_amplitudes(3, 9, amps, DEFAULT_SIZE_CAP).unwrap()
        };
        let g = group.element_from(&[1]).unwrap();
        let s = shift_rep(&group, &g);
        let mut shifted = state.clone();
        for site in 0..9 {
            shifted.apply_unitary(&s, &[site]).unwrap();
        }
        let (ev_a, layout) = run_ssb(&state, &group, 1).unwrap();
        let (ev_b, _) = run_ssb(&shifted, &group, 1).unwrap();
        // outputs related by the same shift on renormalized legs only
        let mut ev_a_shifted = ev_a.clone();
        for &leg in layout.renorm_legs(1) {
            ev_a_shifted.apply_unitary(&s, &[leg]).unwrap();
        }
        assert!((ev_a_shifted.overlap(&ev_b).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ising_ed_orders_at_small_field() {
        let group = z(2);
        let h = ising_hamiltonian(&group, 0.2, 8).unwrap();
        let spec = crate::lanczos::lanczos_lowest(&h, 2, 200, 1e-8, 3).unwrap();
        let amps: Vec<C64> = spec.eigenvectors[0]
            .iter()
            .map(|&v| C64::new(v, 0.0))
            .collect();
        let state = DenseState::from_amplitudes(2, 8, amps, DEFAULT_SIZE_CAP).unwrap();
        // ferromagnetic correlations near 1
        let r = regular_rep(&group, &group.element_from(&[1]).unwrap());
        let rr = r.kronecker(&r);
        let val = state.expectation(&rr, &[0, 4]).unwrap();
        assert!(val.re > 0.9, "correlation {val}");
    }

    #[test]
    fn maj_idx_agrees_with_classical_gate() {
        let group = z(4);
        for g in group.elements() {
            for h in group.elements() {
                for k in group.elements() {
                    let (_, m, _) = ssb_gate_classical(&group, &g, &h, &k).unwrap();
                    let mi = maj_idx(group.index_of(&g), group.index_of(&h), group.index_of(&k));
                    assert_eq!(group.index_of(&m), mi);
                }
            }
        }
    }
}
