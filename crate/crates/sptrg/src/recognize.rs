//! End-to-end phase recognition: state preparation (reference plus errors,
//! cluster-model ground states, random symmetric circuits), indicator
//! measurement (multiscale strings, ancilla purity), sample-complexity
//! reporting, and the measurement-based disentangler protocol.

use crate::blocked::SuperposedMps;
use crate::circuit::{run_circuit, ConvGate, LegLayout};
use crate::error::{CoreError, Result};
use crate::group::{FactorSet, GroupElement};
use crate::lanczos::{lanczos_lowest, SparseHamiltonian};
use crate::mps::{reference_state_dense, reference_tensors, shift_operators, StringOp};
use crate::projective::{clock_shift, regular_rep};
use crate::tensor::{DenseState, DEFAULT_SIZE_CAP};
use crate::{C64, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Either a dense statevector or a blocked MPS superposition (used when the
/// dense vector would exceed the size cap, e.g. |G| = 9 on nine sites).
#[derive(Clone, Debug)]
pub enum StateRep {
    Dense(DenseState),
    Blocked(SuperposedMps),
}

impl StateRep {
    pub fn num_sites(&self) -> usize {
        match self {
            StateRep::Dense(s) => s.num_sites(),
            StateRep::Blocked(s) => s.num_sites,
        }
    }

    pub fn apply_single_site(&mut self, op: &CMat, site: usize) -> Result<()> {
        match self {
            StateRep::Dense(s) => s.apply_local_raw(op, &[site]),
            StateRep::Blocked(s) => s.apply_single_site(op, site),
        }
    }

    pub fn expectation_product(&self, factors: &[(usize, CMat)]) -> Result<C64> {
        match self {
            StateRep::Dense(s) => crate::mps::product_expectation_dense(s, factors),
            StateRep::Blocked(s) => s.expectation_product(factors),
        }
    }
}

/// A state plus the provenance that reproduces it.
#[derive(Clone, Debug)]
pub struct PreparedState {
    pub fs: FactorSet,
    pub rep: StateRep,
    pub provenance: String,
}

/// Error specification for reference-plus-errors preparation.
#[derive(Clone, Debug)]
pub enum ErrorSpec {
    /// one deterministic error string, given as `(site, g)` pairs
    Sites(Vec<(usize, GroupElement)>),
    /// amplitude map over full error strings
    Amplitudes(Vec<(C64, Vec<GroupElement>)>),
}

/// Prepare `sum_g C_g R_g |Psi_omega>`, normalized. Uses the dense
/// representation when the Hilbert space fits under the cap and the blocked
/// MPS superposition otherwise.
pub fn prepare_with_errors(
    fs: &FactorSet,
    chain_len: usize,
    spec: &ErrorSpec,
    cap: u64,
) -> Result<PreparedState> {
    let group = fs.group();
    let order = group.order() as usize;
    let strings: Vec<(C64, Vec<GroupElement>)> = match spec {
        ErrorSpec::Sites(sites) => {
            let mut string = vec![group.identity(); chain_len];
            for (site, g) in sites {
                if *site >= chain_len {
                    return Err(CoreError::structural(format!("error site {site} out of range")));
                }
                string[*site] = group.add(&string[*site], g)?;
            }
            vec![(C64::new(1.0, 0.0), string)]
        }
        ErrorSpec::Amplitudes(map) => {
            if map.is_empty() || map.iter().all(|(c, _)| c.norm_sqr() < 1e-28) {
                return Err(CoreError::structural("all-zero amplitude map"));
            }
            for (_, string) in map {
                if string.len() != chain_len {
                    return Err(CoreError::structural("error string has wrong length"));
                }
            }
            map.clone()
        }
    };

    let dense_fits = crate::tensor::checked_dim(order, chain_len, cap).is_ok();
    let rep = if dense_fits {
        let psi = reference_state_dense(fs, chain_len, cap)?;
        let mut amps = vec![C64::new(0.0, 0.0); psi.amplitudes().len()];
        for (coef, string) in &strings {
            let mut term = psi.clone();
            for (site, g) in string.iter().enumerate() {
                if *g != group.identity() {
                    term.apply_local_raw(&regular_rep(group, g), &[site])?;
                }
            }
            for (a, t) in amps.iter_mut().zip(term.amplitudes()) {
                *a += coef * t;
            }
        }
        StateRep::Dense(DenseState::from_amplitudes(order, chain_len, amps, cap)?)
    } else {
        let tensors = reference_tensors(fs, chain_len)?;
        let mut sup = SuperposedMps::new(order, chain_len);
        for (coef, string) in &strings {
            let mut dressed = tensors.clone();
            for (site, g) in string.iter().enumerate() {
                if *g != group.identity() {
                    // R_g is diagonal: scale physical blocks by characters
                    let r = regular_rep(group, g);
                    for (x, block) in dressed[site].iter_mut().enumerate() {
                        *block *= r[(x, x)];
                    }
                }
            }
            sup.push(*coef, dressed)?;
        }
        sup.normalize()?;
        StateRep::Blocked(sup)
    };
    Ok(PreparedState {
        fs: fs.clone(),
        rep,
        provenance: format!("errors[{} strings]", strings.len()),
    })
}

/// Assemble the perturbed cluster Hamiltonian on `2 L_G` qudits of
/// dimension `N` in the symmetry-diagonal basis:
/// `H = -sum_{i, g != 0} (X_i^{-s_i w g} Z_{i+1}^g X_{i+2}^{s_i w g}
///      + lambda1 Z_i^g + lambda2 Z_i^g Z_{i+1}^g)`, `s_i = (-1)^i`.
pub fn cluster_hamiltonian(
    n: u32,
    omega: i64,
    lambda1: f64,
    lambda2: f64,
    g_sites: usize,
) -> Result<SparseHamiltonian> {
    if n != 2 {
        return Err(CoreError::domain(
            "exact diagonalization is supported for N = 2 only",
        ));
    }
    let qudits = 2 * g_sites;
    let (z, x) = clock_shift(n);
    let pow = |m: &CMat, k: i64| -> CMat {
        let k = k.rem_euclid(n as i64) as u32;
        let mut acc = CMat::identity(n as usize, n as usize);
        for _ in 0..k {
            acc = &acc * m;
        }
        acc
    };
    let mut h = SparseHamiltonian::new(n as usize, qudits);
    for i in 0..qudits {
        let s = if i % 2 == 0 { 1i64 } else { -1 };
        for g in 1..n as i64 {
            let cluster = pow(&x, -s * omega * g)
                .kronecker(&pow(&z, g))
                .kronecker(&pow(&x, s * omega * g))
                * C64::new(-1.0, 0.0);
            h.add_term(vec![i, (i + 1) % qudits, (i + 2) % qudits], &cluster)?;
            if lambda1 != 0.0 {
                h.add_term(vec![i], &(pow(&z, g) * C64::new(-lambda1, 0.0)))?;
            }
            if lambda2 != 0.0 {
                let zz = pow(&z, g).kronecker(&pow(&z, g)) * C64::new(-lambda2, 0.0);
                h.add_term(vec![i, (i + 1) % qudits], &zz)?;
            }
        }
    }
    Ok(h)
}

/// Ground state of the perturbed cluster model by sparse Lanczos, returned
/// as a dense state over `L_G` sites of dimension `N^2` (consecutive qudit
/// pairs form one group site).
pub struct ClusterGroundState {
    pub state: PreparedState,
    pub energy: f64,
    pub residual: f64,
    pub degenerate: bool,
}

pub fn cluster_ground_state(
    n: u32,
    omega: i64,
    lambda1: f64,
    lambda2: f64,
    g_sites: usize,
    cap: u64,
) -> Result<ClusterGroundState> {
    let h = cluster_hamiltonian(n, omega, lambda1, lambda2, g_sites)?;
    crate::tensor::checked_dim((n * n) as usize, g_sites, cap)?;
    let spec = lanczos_lowest(&h, 2, 400, 1e-8, 0x0c1u64)?;
    let amps: Vec<C64> = spec.eigenvectors[0]
        .iter()
        .map(|&v| C64::new(v, 0.0))
        .collect();
    let state = DenseState::from_amplitudes((n * n) as usize, g_sites, amps, cap)?;
    let fs = FactorSet::zn_squared(n, omega);
    Ok(ClusterGroundState {
        state: PreparedState {
            fs,
            rep: StateRep::Dense(state),
            provenance: format!("cluster-ed[N={n} w={omega} l1={lambda1} l2={lambda2}]"),
        },
        energy: spec.eigenvalues[0],
        residual: spec.residuals[0],
        degenerate: spec.degenerate,
    })
}

/// Per-qudit diagonal phase pattern of the random symmetric circuit: for
/// `N = 3` the exact `diag(e^{i phi}, e^{i phi}, e^{-2 i phi})` form, and
/// the traceless-exponent generalization `(1, .., 1, -(N-1)) phi` otherwise.
fn symmetric_diag(n: usize, phi: f64) -> CMat {
    let mut m = CMat::zeros(n, n);
    for a in 0..n {
        let expo = if a + 1 == n {
            -((n - 1) as f64) * phi
        } else {
            phi
        };
        m[(a, a)] = C64::new(0.0, expo).exp();
    }
    m
}

/// Apply the random symmetric depth-1 circuit: one diagonal phase per
/// `Z_N` qudit factor of every group site, angles uniform on `[0, 2 pi)`.
pub fn apply_random_symmetric_circuit(state: &mut PreparedState, seed: u64) -> Result<()> {
    let moduli: Vec<u32> = state.fs.group().moduli().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chain_len = state.rep.num_sites();
    for site in 0..chain_len {
        let mut op = CMat::identity(1, 1);
        for &m in &moduli {
            let phi = rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
            op = op.kronecker(&symmetric_diag(m as usize, phi));
        }
        state.rep.apply_single_site(&op, site)?;
    }
    state.provenance = format!("{}+diag[{seed}]", state.provenance);
    Ok(())
}

/// Normalized ancilla purity from per-site `|0>` probabilities:
/// `(1/n) sum_i (p0_i - 1/|G|) / (1 - 1/|G|)`.
pub fn purity_from_marginals(p0: &[f64], order: usize) -> f64 {
    let base = 1.0 / order as f64;
    p0.iter().map(|p| (p - base) / (1.0 - base)).sum::<f64>() / p0.len() as f64
}

/// Ancilla purity of a dense evolved state at depth `d >= 1`.
pub fn ancilla_purity_dense(evolved: &DenseState, layout: &LegLayout, depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(CoreError::domain("no ancillas exist at depth 0"));
    }
    let legs = layout.ancilla_legs(depth);
    let p0: Vec<f64> = legs.iter().map(|&a| evolved.site_marginal(a)[0]).collect();
    Ok(purity_from_marginals(&p0, evolved.site_dim()))
}

/// Sample complexity `M = ceil(delta^2 p(1-p) / (p - 1/n)^2)` with
/// `p = (1 + (n-1) S)/n`; `None` when the string signal is absent.
pub fn sample_complexity(s: f64, delta: f64, n: u64) -> Option<u64> {
    if s <= 0.0 {
        return None;
    }
    let nf = n as f64;
    let p = ((1.0 + (nf - 1.0) * s) / nf).min(1.0);
    let sep = p - 1.0 / nf;
    if sep <= 0.0 {
        return None;
    }
    let m = (delta * delta * p * (1.0 - p) / (sep * sep)).ceil() as u64;
    Some(m.max(1))
}

/// Decision thresholds for the recognition report.
#[derive(Clone, Copy, Debug)]
pub struct Thresholds {
    pub tau_in: f64,
    pub tau_out: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            tau_in: 0.9,
            tau_out: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    InPhase,
    OutOfPhase,
    Inconclusive,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Decision::InPhase => "in-phase",
            Decision::OutOfPhase => "out-of-phase",
            Decision::Inconclusive => "inconclusive",
        };
        write!(f, "{s}")
    }
}

/// What the per-depth indicator is: a genuine string operator on the
/// renormalized register (protected by the exact selection rule), or the
/// terminal single-leg symmetry readout used once only one leg remains
/// (a convergence diagnostic with no selection rule).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndicatorKind {
    String,
    Terminal,
}

/// One depth of the recognition report.
#[derive(Clone, Debug)]
pub struct DepthRow {
    pub depth: usize,
    pub mso: C64,
    pub kind: IndicatorKind,
    /// ancilla purity; absent at depth 0
    pub purity: Option<f64>,
    pub m_delta: Option<u64>,
    /// shot-sampled estimate of Re<S> via the eigenprojector frequency
    pub shot_estimate: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RecognitionReport {
    pub rows: Vec<DepthRow>,
    pub decision: Decision,
    pub thresholds: Thresholds,
    /// string element used (maximal order) and its order
    pub g_star: Vec<u32>,
    pub order_n: u64,
}

fn maximal_order_element(fs: &FactorSet) -> (GroupElement, u64) {
    let group = fs.group();
    let mut best = (group.identity(), 1u64);
    for g in group.elements().skip(1) {
        let ord = group.element_order(&g);
        if ord > best.1 {
            best = (g, ord);
        }
    }
    best
}

/// String endpoints used at a given depth: separation of a third of the
/// coarse register, but at least two legs apart so an interior symmetry
/// factor is present.
fn string_span(legs: &[usize]) -> Option<(usize, usize)> {
    let m = legs.len();
    if m < 3 {
        return None;
    }
    let sep = (m / 3).clamp(2, m - 1);
    Some((legs[0], legs[sep]))
}

/// Exact MSO value at one depth for either representation, flagged as a
/// string indicator or a terminal single-leg readout.
fn mso_at_depth(
    prepared: &PreparedState,
    fs_target: &FactorSet,
    gate: &ConvGate,
    depth: usize,
    g: &GroupElement,
) -> Result<(C64, IndicatorKind)> {
    match &prepared.rep {
        StateRep::Dense(state) => {
            let (evolved, layout) = run_circuit(state, gate, depth)?;
            let legs = layout.renorm_legs(depth);
            match string_span(legs) {
                Some((i, j)) => Ok((
                    crate::circuit::mso_on_evolved(&evolved, &layout, fs_target, depth, g, i, j)?,
                    IndicatorKind::String,
                )),
                None => Ok((
                    crate::circuit::mso_terminal_indicator(&evolved, &layout, fs_target, depth, g)?,
                    IndicatorKind::Terminal,
                )),
            }
        }
        StateRep::Blocked(sup) => {
            let group = fs_target.group();
            let order = group.order() as usize;
            match depth {
                0 => {
                    let legs: Vec<usize> = (0..sup.num_sites).collect();
                    let (i, j) = string_span(&legs).expect("nine legs");
                    let s = StringOp {
                        g: g.clone(),
                        start: i,
                        end: j,
                    };
                    Ok((
                        sup.expectation_product(&s.factors(fs_target, sup.num_sites)?)?,
                        IndicatorKind::String,
                    ))
                }
                1 => {
                    let rho = sup.renorm_density_depth1(&gate.composite)?;
                    let (s_l, s_r) = shift_operators(fs_target, g)?;
                    let op = s_r.kronecker(&regular_rep(group, g)).kronecker(&s_l);
                    Ok((trace_prod(&rho, &op), IndicatorKind::String))
                }
                2 => {
                    // terminal projector indicator on the center leg of the
                    // final triple
                    let rho = sup.renorm_density_depth1(&gate.composite)?;
                    let rho2 = &gate.composite * rho * gate.composite.adjoint();
                    let mut p0 = 0.0;
                    for idx in 0..order * order * order {
                        if (idx / order) % order == 0 {
                            p0 += rho2[(idx, idx)].re;
                        }
                    }
                    let base = 1.0 / order as f64;
                    Ok((
                        C64::new((p0 - base) / (1.0 - base), 0.0),
                        IndicatorKind::Terminal,
                    ))
                }
                _ => Err(CoreError::structural(
                    "blocked evaluation supports depth <= 2 on nine sites",
                )),
            }
        }
    }
}

fn trace_prod(rho: &CMat, op: &CMat) -> C64 {
    let mut tr = C64::new(0.0, 0.0);
    for r in 0..rho.nrows() {
        for c in 0..rho.ncols() {
            tr += rho[(r, c)] * op[(c, r)];
        }
    }
    tr
}

/// Ancilla purity at one depth for either representation.
pub fn purity_at_depth(
    prepared: &PreparedState,
    gate: &ConvGate,
    depth: usize,
) -> Result<f64> {
    let order = gate.algebra.dim;
    match &prepared.rep {
        StateRep::Dense(state) => {
            let (evolved, layout) = run_circuit(state, gate, depth)?;
            ancilla_purity_dense(&evolved, &layout, depth)
        }
        StateRep::Blocked(sup) => match depth {
            0 => Err(CoreError::domain("no ancillas exist at depth 0")),
            1 => {
                let marg = sup.ancilla_marginals_depth1(&gate.composite)?;
                let p0: Vec<f64> = marg.iter().map(|(_, p)| p[0]).collect();
                Ok(purity_from_marginals(&p0, order))
            }
            2 => {
                let rho = sup.renorm_density_depth1(&gate.composite)?;
                let rho2 = &gate.composite * rho * gate.composite.adjoint();
                // depth-2 ancillas are the outer legs of the final triple
                let mut p0 = Vec::new();
                for pos in [0usize, 2] {
                    let mut prob = 0.0;
                    for idx in 0..order * order * order {
                        let digit = (idx / order.pow(2 - pos as u32)) % order;
                        if digit == 0 {
                            prob += rho2[(idx, idx)].re;
                        }
                    }
                    p0.push(prob);
                }
                Ok(purity_from_marginals(&p0, order))
            }
            _ => Err(CoreError::structural(
                "blocked evaluation supports depth <= 2 on nine sites",
            )),
        },
    }
}

/// Depth-0 analog of the ancilla purity: the same normalized projector
/// average taken over all input sites.
pub fn input_purity(prepared: &PreparedState, order: usize) -> Result<f64> {
    let chain_len = prepared.rep.num_sites();
    let mut proj0 = CMat::zeros(order, order);
    proj0[(0, 0)] = C64::new(1.0, 0.0);
    let mut p0 = Vec::with_capacity(chain_len);
    for site in 0..chain_len {
        let val = prepared
            .rep
            .expectation_product(&[(site, proj0.clone())])?;
        p0.push(val.re);
    }
    Ok(purity_from_marginals(&p0, order))
}

/// Run the full recognition pipeline against a target phase.
pub fn recognize(
    prepared: &PreparedState,
    fs_target: &FactorSet,
    gate: &ConvGate,
    d_max: usize,
    shots: u64,
    delta: f64,
    thresholds: Thresholds,
    seed: u64,
) -> Result<RecognitionReport> {
    let (g_star, order_n) = maximal_order_element(fs_target);
    let mut rows = Vec::with_capacity(d_max + 1);
    for depth in 0..=d_max {
        let (mso, kind) = mso_at_depth(prepared, fs_target, gate, depth, &g_star)?;
        let purity = if depth == 0 {
            None
        } else {
            Some(purity_at_depth(prepared, gate, depth)?)
        };
        let s = mso.re;
        let m_delta = sample_complexity(s, delta, order_n);
        let shot_estimate = if shots > 0 {
            let nf = order_n as f64;
            let p = ((1.0 + (nf - 1.0) * s) / nf).clamp(0.0, 1.0);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(depth as u64 + 1);
            let hits = (0..shots).filter(|_| rng.gen::<f64>() < p).count() as f64;
            let p_hat = hits / shots as f64;
            Some((nf * p_hat - 1.0) / (nf - 1.0))
        } else {
            None
        };
        rows.push(DepthRow {
            depth,
            mso,
            kind,
            purity,
            m_delta,
            shot_estimate,
        });
    }
    // the decision reads the deepest genuine string indicator; the terminal
    // single-leg readout carries no selection rule
    let decisive = rows
        .iter()
        .rev()
        .find(|r| r.kind == IndicatorKind::String)
        .unwrap_or_else(|| rows.last().expect("at least depth 0"));
    let decision = if decisive.mso.re > 1.0 - thresholds.tau_in {
        Decision::InPhase
    } else if decisive.mso.norm() < thresholds.tau_out {
        Decision::OutOfPhase
    } else {
        Decision::Inconclusive
    };
    Ok(RecognitionReport {
        rows,
        decision,
        thresholds,
        g_star: g_star.residues().to_vec(),
        order_n,
    })
}

/// The bond disentangler as a matrix product operator: per site, the
/// `(out, in)` block is the `sqrt(|G|) x sqrt(|G|)` matrix
/// `(A^in)* (A^out)^T / sqrt(|G|)`, with the operator bond traced around
/// the ring. The conjugation/transpose placement is the one that maps the
/// reference state exactly to `|0...0>` in our cocycle gauge; the per-site
/// normalization makes the ring-traced operator unitary.
pub fn disentangler_mpo(fs: &FactorSet) -> Result<Vec<Vec<CMat>>> {
    let tensor = crate::mps::canonical_tensor(fs)?;
    let order = fs.group().order() as usize;
    let norm = C64::new(1.0 / (order as f64).sqrt(), 0.0);
    let mut w = Vec::with_capacity(order);
    for out in 0..order {
        let mut row = Vec::with_capacity(order);
        let out_t = tensor.blocks[out].transpose();
        for inp in 0..order {
            row.push(tensor.blocks[inp].map(|c| c.conj()) * &out_t * norm);
        }
        w.push(row);
    }
    Ok(w)
}

/// The disentangler as a dense matrix on a short ring (diagnostics only).
pub fn disentangler_matrix(fs: &FactorSet, chain_len: usize) -> Result<CMat> {
    let w = disentangler_mpo(fs)?;
    let order = fs.group().order() as usize;
    let dim = order.pow(chain_len as u32);
    let indexing = crate::tensor::SiteIndexing::new(order, chain_len);
    let mut m = CMat::zeros(dim, dim);
    for row in 0..dim {
        let outs = indexing.digits(row);
        for col in 0..dim {
            let ins = indexing.digits(col);
            let mut acc = w[outs[0]][ins[0]].clone();
            for site in 1..chain_len {
                acc *= &w[outs[site]][ins[site]];
            }
            m[(row, col)] = acc.diagonal().iter().sum();
        }
    }
    Ok(m)
}

/// Apply the disentangler MPO to a dense state (exactly, via a bond-indexed
/// sweep) and renormalize.
pub fn apply_disentangler(state: &DenseState, fs: &FactorSet) -> Result<DenseState> {
    let w = disentangler_mpo(fs)?;
    let order = state.site_dim();
    let chain_len = state.num_sites();
    let bond = w[0][0].nrows();
    let total = state.amplitudes().len();
    let mut out = vec![C64::new(0.0, 0.0); total];
    // loop over the traced boundary bond
    for b0 in 0..bond {
        // buf[b * total + flat]
        let mut buf = vec![C64::new(0.0, 0.0); bond * total];
        buf[b0 * total..(b0 + 1) * total].copy_from_slice(state.amplitudes());
        for site in 0..chain_len {
            let stride = state.indexing().stride(site);
            let mut next = vec![C64::new(0.0, 0.0); bond * total];
            for b in 0..bond {
                for bp in 0..bond {
                    for y in 0..order {
                        for x in 0..order {
                            let coef = w[y][x][(b, bp)];
                            if coef.norm_sqr() == 0.0 {
                                continue;
                            }
                            // add coef * buf[b, idx with digit x] into
                            // next[bp, idx with digit y]
                            for base in 0..total / (stride * order) {
                                let lo = base * stride * order;
                                for rest in 0..stride {
                                    let src = b * total + lo + x * stride + rest;
                                    let dst = bp * total + lo + y * stride + rest;
                                    next[dst] += coef * buf[src];
                                }
                            }
                        }
                    }
                }
            }
            buf = next;
        }
        for (o, v) in out.iter_mut().zip(&buf[b0 * total..(b0 + 1) * total]) {
            *o += v;
        }
    }
    DenseState::from_amplitudes(order, chain_len, out, DEFAULT_SIZE_CAP)
}

/// Outcome of disentangler-based error sampling.
#[derive(Clone, Debug)]
pub struct DisentanglerSample {
    /// canonical error strings (first component fixed to the identity) with
    /// observed counts
    pub counts: HashMap<Vec<u64>, u64>,
    pub shots: u64,
}

/// Apply the disentangler, measure all sites, and invert the domain-wall
/// labels into canonical error strings. In our gauge the outcome at site
/// `i` reads `Gamma(g_i - g_{i+1})`, so strings integrate as
/// `g_{i+1} = g_i - Gamma^{-1}(outcome_i)` starting from the identity.
pub fn disentangler_sample(
    fs: &FactorSet,
    state: &DenseState,
    shots: u64,
    seed: u64,
) -> Result<DisentanglerSample> {
    let group = fs.group();
    let disentangled = apply_disentangler(state, fs)?;
    let gamma_inv = fs.gamma_inverse_table()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts: HashMap<Vec<u64>, u64> = HashMap::new();
    for _ in 0..shots {
        let outcome = disentangled.sample_outcome(&mut rng);
        let chain_len = outcome.len();
        let mut string = vec![0u64; chain_len];
        for i in 0..chain_len - 1 {
            let wall = gamma_inv[outcome[i]];
            string[i + 1] = group.add_idx(string[i], group.neg_idx(wall));
        }
        *counts.entry(string).or_insert(0) += 1;
    }
    Ok(DisentanglerSample { counts, shots })
}

/// Canonicalize an error string under the global-shift redundancy: subtract
/// the first component from every site.
pub fn canonical_error_string(group: &crate::group::FiniteAbelianGroup, string: &[u64]) -> Vec<u64> {
    let shift = group.neg_idx(string[0]);
    string.iter().map(|&g| group.add_idx(g, shift)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::SiteAlgebra;
    use crate::group::FiniteAbelianGroup;

    fn z2fs() -> FactorSet {
        FactorSet::zn_squared(2, 1)
    }

    fn elem(fs: &FactorSet, r: &[i64]) -> GroupElement {
        fs.group().element_from(r).unwrap()
    }

    #[test]
    fn empty_spec_gives_reference() {
        let fs = z2fs();
        let prepared =
            prepare_with_errors(&fs, 3, &ErrorSpec::Sites(vec![]), DEFAULT_SIZE_CAP).unwrap();
        let psi = reference_state_dense(&fs, 3, DEFAULT_SIZE_CAP).unwrap();
        let StateRep::Dense(state) = &prepared.rep else {
            panic!("expected dense")
        };
        assert!((state.overlap(&psi).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn global_shift_redundancy() {
        // equal-amplitude pair {g, g+h uniform} equals the single-string state
        let fs = z2fs();
        let group = fs.group().clone();
        let g = elem(&fs, &[1, 0]);
        let h = elem(&fs, &[0, 1]);
        let string: Vec<GroupElement> = vec![g.clone(), group.identity(), group.identity()];
        let shifted: Vec<GroupElement> = string
            .iter()
            .map(|x| group.add(x, &h).unwrap())
            .collect();
        let single = prepare_with_errors(
            &fs,
            3,
            &ErrorSpec::Amplitudes(vec![(C64::new(1.0, 0.0), string.clone())]),
            DEFAULT_SIZE_CAP,
        )
        .unwrap();
        let pair = prepare_with_errors(
            &fs,
            3,
            &ErrorSpec::Amplitudes(vec![
                (C64::new(0.5, 0.0), string),
                (C64::new(0.5, 0.0), shifted),
            ]),
            DEFAULT_SIZE_CAP,
        )
        .unwrap();
        let (StateRep::Dense(a), StateRep::Dense(b)) = (&single.rep, &pair.rep) else {
            panic!("expected dense")
        };
        assert!((a.overlap(b).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_zero_amplitudes() {
        let fs = z2fs();
        let spec = ErrorSpec::Amplitudes(vec![(
            C64::new(0.0, 0.0),
            vec![fs.group().identity(); 3],
        )]);
        assert!(prepare_with_errors(&fs, 3, &spec, DEFAULT_SIZE_CAP).is_err());
    }

    #[test]
    fn cluster_ground_state_at_zero_field_is_reference() {
        let gs = cluster_ground_state(2, 1, 0.0, 0.0, 4, DEFAULT_SIZE_CAP).unwrap();
        assert!(gs.residual < 1e-8);
        let fs = z2fs();
        let psi = reference_state_dense(&fs, 4, DEFAULT_SIZE_CAP).unwrap();
        let StateRep::Dense(state) = &gs.state.rep else {
            panic!("expected dense")
        };
        let fid = state.overlap(&psi).norm();
        assert!(fid > 1.0 - 1e-8, "fidelity {fid}");
        // stabilizer energy is exact: 2 L_G cluster terms of unit weight
        assert!((gs.energy + 8.0).abs() < 1e-8);
    }

    #[test]
    fn large_field_is_trivial_phase() {
        let gs = cluster_ground_state(2, 1, 10.0, 0.0, 6, DEFAULT_SIZE_CAP).unwrap();
        let fs = z2fs();
        let StateRep::Dense(state) = &gs.state.rep else {
            panic!("expected dense")
        };
        for g in fs.group().elements().skip(1) {
            let s = StringOp {
                g: g.clone(),
                start: 0,
                end: 3,
            };
            let val = crate::mps::string_expectation_dense(state, &fs, &s).unwrap();
            assert!(val.norm() < 1e-3, "string {} for {:?}", val, g.residues());
        }
        // the trivial-class string reads 1
        let fs0 = FactorSet::zn_squared(2, 0);
        let s = StringOp {
            g: elem(&fs, &[1, 0]),
            start: 0,
            end: 3,
        };
        let val = crate::mps::string_expectation_dense(state, &fs0, &s).unwrap();
        assert!((val.re - 1.0).abs() < 1e-2, "trivial string {val}");
    }

    #[test]
    fn random_symmetric_circuit_is_symmetric() {
        let fs = z2fs();
        let mut prepared =
            prepare_with_errors(&fs, 3, &ErrorSpec::Sites(vec![]), DEFAULT_SIZE_CAP).unwrap();
        apply_random_symmetric_circuit(&mut prepared, 5).unwrap();
        let StateRep::Dense(state) = &prepared.rep else {
            panic!("expected dense")
        };
        // still an eigenstate of the global symmetry
        for g in fs.group().elements().skip(1) {
            let r = regular_rep(fs.group(), &g);
            let mut moved = state.clone();
            for site in 0..3 {
                moved.apply_unitary(&r, &[site]).unwrap();
            }
            assert!((state.overlap(&moved).norm() - 1.0).abs() < 1e-10);
        }
        // zero angles give the identity
        let mut untouched =
            prepare_with_errors(&fs, 3, &ErrorSpec::Sites(vec![]), DEFAULT_SIZE_CAP).unwrap();
        let before = match &untouched.rep {
            StateRep::Dense(s) => s.clone(),
            _ => unreachable!(),
        };
        let op = symmetric_diag(2, 0.0);
        assert!(crate::tensor::matrix_max_diff(&op, &CMat::identity(2, 2)) < 1e-15);
        untouched.rep.apply_single_site(&CMat::identity(4, 4), 0).unwrap();
        let StateRep::Dense(after) = &untouched.rep else {
            unreachable!()
        };
        assert!((before.overlap(after).re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sample_complexity_examples() {
        assert_eq!(sample_complexity(0.5, 3.0, 3), Some(18));
        assert_eq!(sample_complexity(0.9, 3.0, 3), Some(2));
        assert_eq!(sample_complexity(0.999999, 3.0, 3), Some(1));
        assert_eq!(sample_complexity(0.0, 3.0, 3), None);
    }

    #[test]
    fn recognize_reference_in_phase() {
        let fs = z2fs();
        let gate = ConvGate::build(SiteAlgebra::regular(&fs).unwrap()).unwrap();
        let prepared =
            prepare_with_errors(&fs, 9, &ErrorSpec::Sites(vec![]), DEFAULT_SIZE_CAP).unwrap();
        let report = recognize(
            &prepared,
            &fs,
            &gate,
            2,
            0,
            3.0,
            Thresholds::default(),
            1,
        )
        .unwrap();
        assert_eq!(report.decision, Decision::InPhase);
        for row in &report.rows {
            assert!((row.mso.re - 1.0).abs() < 1e-10, "depth {}", row.depth);
            assert_eq!(row.m_delta, Some(1));
            if row.depth > 0 {
                assert!((row.purity.unwrap() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn recognize_product_state_out_of_phase() {
        let fs = z2fs();
        let gate = ConvGate::build(SiteAlgebra::regular(&fs).unwrap()).unwrap();
        let product = DenseState::basis_state(4, &[0; 9], DEFAULT_SIZE_CAP).unwrap();
        let prepared = PreparedState {
            fs: FactorSet::zn_squared(2, 0),
            rep: StateRep::Dense(product),
            provenance: "product".into(),
        };
        let report = recognize(
            &prepared,
            &fs,
            &gate,
            2,
            0,
            3.0,
            Thresholds::default(),
            1,
        )
        .unwrap();
        assert_eq!(report.decision, Decision::OutOfPhase);
        for row in &report.rows {
            match row.kind {
                IndicatorKind::String => {
                    assert!(row.mso.norm() < 1e-10, "depth {}: {}", row.depth, row.mso)
                }
                // the terminal readout has no selection rule and must not
                // drive the decision (here it even reads 1)
                IndicatorKind::Terminal => {}
            }
        }
    }

    #[test]
    fn sparse_errors_corrected_at_depth_one() {
        let fs = z2fs();
        let gate = ConvGate::build(SiteAlgebra::regular(&fs).unwrap()).unwrap();
        let spec = ErrorSpec::Sites(vec![
            (0, elem(&fs, &[1, 0])),
            (4, elem(&fs, &[0, 1])),
            (8, elem(&fs, &[1, 1])),
        ]);
        let prepared = prepare_with_errors(&fs, 9, &spec, DEFAULT_SIZE_CAP).unwrap();
        let report = recognize(
            &prepared,
            &fs,
            &gate,
            2,
            0,
            3.0,
            Thresholds::default(),
            1,
        )
        .unwrap();
        assert!((report.rows[1].mso.re - 1.0).abs() < 1e-10);
        assert!((report.rows[2].mso.re - 1.0).abs() < 1e-10);
        assert_eq!(report.decision, Decision::InPhase);
    }

    #[test]
    fn disentangler_maps_reference_to_zeros() {
        for fs in [z2fs(), FactorSet::zn_squared(3, 1)] {
            let chain_len = 4;
            let psi = reference_state_dense(&fs, chain_len, DEFAULT_SIZE_CAP).unwrap();
            let out = apply_disentangler(&psi, &fs).unwrap();
            let zeros = DenseState::basis_state(
                fs.group().order() as usize,
                &vec![0; chain_len],
                DEFAULT_SIZE_CAP,
            )
            .unwrap();
            let fid = out.overlap(&zeros).norm();
            assert!(fid > 1.0 - 1e-10, "fidelity {fid}");
        }
    }

    #[test]
    fn disentangler_reads_out_domain_walls() {
        let fs = FactorSet::zn_squared(3, 1);
        let group = fs.group().clone();
        let g = elem(&fs, &[1, 2]);
        let spec = ErrorSpec::Sites(vec![(1, g.clone())]);
        let prepared = prepare_with_errors(&fs, 4, &spec, DEFAULT_SIZE_CAP).unwrap();
        let StateRep::Dense(state) = &prepared.rep else {
            panic!()
        };
        let sample = disentangler_sample(&fs, state, 64, 11).unwrap();
        // deterministic outcome: the canonical form of (e, g, e, e)
        assert_eq!(sample.counts.len(), 1);
        let string = sample.counts.keys().next().unwrap();
        let expect: Vec<u64> = vec![
            0,
            group.index_of(&g),
            0,
            0,
        ];
        let canon = canonical_error_string(&group, &expect);
        assert_eq!(string, &canon);
    }

    #[test]
    fn disentangler_samples_prepared_distribution() {
        let fs = z2fs();
        let group = fs.group().clone();
        let e = group.identity();
        let g = elem(&fs, &[1, 0]);
        let h = elem(&fs, &[0, 1]);
        let s1 = vec![e.clone(), g.clone(), e.clone(), e.clone()];
        let s2 = vec![e.clone(), e.clone(), h.clone(), e.clone()];
        let spec = ErrorSpec::Amplitudes(vec![
            (C64::new(0.8f64.sqrt(), 0.0), s1.clone()),
            (C64::new(0.2f64.sqrt(), 0.0), s2.clone()),
        ]);
        let prepared = prepare_with_errors(&fs, 4, &spec, DEFAULT_SIZE_CAP).unwrap();
        let StateRep::Dense(state) = &prepared.rep else {
            panic!()
        };
        let shots = 10_000;
        let sample = disentangler_sample(&fs, state, shots, 23).unwrap();
        let key1 = canonical_error_string(
            &group,
            &s1.iter().map(|x| group.index_of(x)).collect::<Vec<_>>(),
        );
        let key2 = canonical_error_string(
            &group,
            &s2.iter().map(|x| group.index_of(x)).collect::<Vec<_>>(),
        );
        let p1 = *sample.counts.get(&key1).unwrap_or(&0) as f64 / shots as f64;
        let p2 = *sample.counts.get(&key2).unwrap_or(&0) as f64 / shots as f64;
        let tv = 0.5 * ((p1 - 0.8).abs() + (p2 - 0.2).abs());
        let sigma = (0.8f64 * 0.2 / shots as f64).sqrt();
        assert!(tv < 5.0 * sigma, "tv={tv} sigma={sigma}");
    }
}
