//! Classical majority-vote renormalization of error distributions: the
//! exact single-site flow, gap/convergence diagnostics, and seeded samplers
//! for the correlated error-model zoo.

use crate::circuit::maj_idx;
use crate::error::{CoreError, Result};
use crate::{C64, CMat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// One step of the majority-vote flow: single-site marginals at the next
/// layer from the three-site marginals at this layer,
/// `p'(g) = sum_h p3(g,h,g) + sum_{h,k} p3(h,g,k) - sum_h p3(h,g,h)`.
///
/// Exactly equals brute-force enumeration of `maj` over `G^3` (the sign of
/// the correction term follows the enumeration oracle, not the flipped form
/// that also appears in print).
pub fn maj_flow_step(n: usize, p3: &[f64]) -> Result<Vec<f64>> {
    if p3.len() != n * n * n {
        return Err(CoreError::structural(format!(
            "expected {} three-site probabilities, got {}",
            n * n * n,
            p3.len()
        )));
    }
    if p3.iter().any(|&p| p < -1e-12) {
        return Err(CoreError::structural("negative probability"));
    }
    let total: f64 = p3.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(CoreError::structural(format!(
            "three-site marginals sum to {total}, expected 1"
        )));
    }
    let at = |a: usize, b: usize, c: usize| p3[(a * n + b) * n + c];
    let mut out = vec![0.0; n];
    for (g, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for h in 0..n {
            acc += at(g, h, g) - at(h, g, h);
            for k in 0..n {
                acc += at(h, g, k);
            }
        }
        *o = acc.max(0.0);
    }
    Ok(out)
}

/// Brute-force oracle: push the three-site distribution through `maj`.
pub fn maj_flow_brute(n: usize, p3: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out[maj_idx(a as u64, b as u64, c as u64) as usize] += p3[(a * n + b) * n + c];
            }
        }
    }
    out
}

/// Product (iid) three-site table from single-site marginals.
pub fn iid3(p: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n * n * n];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out[(a * n + b) * n + c] = p[a] * p[b] * p[c];
            }
        }
    }
    out
}

/// Per-element dominance diagnostics:
/// `f(g) = sum_h (p3(g,h,g) - p3(h,g,h))`; the distribution is dominant iff
/// `f` is strictly maximized on the element with the largest single-site
/// (center) marginal.
pub fn dominance_check(n: usize, p3: &[f64]) -> (Vec<f64>, bool) {
    let at = |a: usize, b: usize, c: usize| p3[(a * n + b) * n + c];
    let mut f = vec![0.0; n];
    let mut marginal = vec![0.0; n];
    for g in 0..n {
        for h in 0..n {
            f[g] += at(g, h, g) - at(h, g, h);
            for k in 0..n {
                marginal[g] += at(h, g, k);
            }
        }
    }
    let g1 = (0..n)
        .max_by(|&a, &b| marginal[a].partial_cmp(&marginal[b]).unwrap())
        .unwrap();
    let dominant = (0..n).all(|g| g == g1 || f[g1] > f[g] + 1e-15);
    (f, dominant)
}

/// Exact iid flow diagnostics.
#[derive(Clone, Debug)]
pub struct GapReport {
    /// gap series `delta_d = p_d(g1) - p_d(g2)`, `d = 0..`
    pub deltas: Vec<f64>,
    /// per-depth marginals
    pub marginals: Vec<Vec<f64>>,
    /// first depth with `delta > 1 - eps`, if reached
    pub d_eps: Option<usize>,
    /// analytic bound `ln(1/eps) + |G| ln(1/delta_0)`
    pub bound: f64,
    /// false when the top two marginals are exactly degenerate
    pub generic: bool,
    /// max deviation of the gap recursion identity
    /// `delta_{d+1} - delta_d = p1^2 - p2^2 - delta_d sum_h p_h^2`
    pub recursion_dev: f64,
    /// winning element if converged
    pub winner: Option<usize>,
}

fn top_two(p: &[f64]) -> (usize, usize) {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
    (idx[0], idx[1])
}

/// Iterate the exact iid majority-vote flow until the gap exceeds
/// `1 - eps` (or `max_depth` is hit), asserting the analytic gap recursion
/// at every step.
pub fn gap_and_depth(p0: &[f64], eps: f64, max_depth: usize) -> Result<GapReport> {
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(CoreError::structural("eps must lie in (0,1)"));
    }
    let total: f64 = p0.iter().sum();
    if (total - 1.0).abs() > 1e-9 || p0.iter().any(|&x| x < 0.0) {
        return Err(CoreError::structural("marginals must be a distribution"));
    }
    let n = p0.len();
    let mut p = p0.to_vec();
    let (g1, g2) = top_two(&p);
    let delta0 = p[g1] - p[g2];
    let bound = (1.0 / eps).ln() + n as f64 * (1.0 / delta0.max(f64::MIN_POSITIVE)).ln();
    let generic = delta0 > 0.0;
    let mut report = GapReport {
        deltas: vec![delta0],
        marginals: vec![p.clone()],
        d_eps: if delta0 > 1.0 - eps { Some(0) } else { None },
        bound,
        generic,
        recursion_dev: 0.0,
        winner: if delta0 > 1.0 - eps { Some(g1) } else { None },
    };
    if !generic {
        return Ok(report);
    }
    let mut depth = 0usize;
    while report.d_eps.is_none() && depth < max_depth {
        let (g1, g2) = top_two(&p);
        let delta = p[g1] - p[g2];
        let sum_sq: f64 = p.iter().map(|x| x * x).sum();
        let predicted = p[g1] * p[g1] - p[g2] * p[g2] - delta * sum_sq;
        p = maj_flow_step(n, &iid3(&p))?;
        // cubing the distribution amplifies normalization drift threefold
        // per step; renormalize to keep the long flow exact
        let total: f64 = p.iter().sum();
        for x in p.iter_mut() {
            *x /= total;
        }
        depth += 1;
        let (h1, h2) = top_two(&p);
        let new_delta = p[h1] - p[h2];
        report.recursion_dev = report
            .recursion_dev
            .max(((new_delta - delta) - predicted).abs());
        report.deltas.push(new_delta);
        report.marginals.push(p.clone());
        if new_delta > 1.0 - eps {
            report.d_eps = Some(depth);
            report.winner = Some(h1);
        }
    }
    Ok(report)
}

/// The worst-case iid family: `p(g1) = (1-delta)/|G| + delta`, all other
/// marginals equal.
pub fn almost_uniform(n: usize, delta: f64) -> Vec<f64> {
    let base = (1.0 - delta) / n as f64;
    let mut p = vec![base; n];
    p[0] += delta;
    p
}

/// Seeded samplers over group-element strings.
#[derive(Clone, Debug)]
pub enum ErrorModel {
    /// independent sites with the given marginals
    Iid { p: Vec<f64> },
    /// stationary restart chain `K = (1-beta) I + beta 1 q^T` with
    /// `beta = 1/xi`; stationary distribution `q`
    Markov { q: Vec<f64>, xi: f64 },
    /// hard-core gerrymander: with probability `alpha` a block of three
    /// carries exactly one `gstar`, pinned to a block edge (never a block
    /// center) and at least three sites from any other `gstar`; all other
    /// sites are uniform over the remaining elements
    Gerrymander { n: usize, gstar: usize, alpha: f64 },
    /// Born sampling from a translation-invariant random MPS with iid
    /// complex Gaussian tensor entries
    RandomMps { n: usize, chi: usize, seed: u64 },
    /// Born sampling of the X-basis outcome distribution of the commuting
    /// diagonal phase circuit with string ranges up to `k+1` (|G| = 2)
    CircuitK { k: usize, seed: u64 },
}

impl ErrorModel {
    pub fn num_elements(&self) -> usize {
        match self {
            ErrorModel::Iid { p } => p.len(),
            ErrorModel::Markov { q, .. } => q.len(),
            ErrorModel::Gerrymander { n, .. } => *n,
            ErrorModel::RandomMps { n, .. } => *n,
            ErrorModel::CircuitK { .. } => 2,
        }
    }

    /// Draw one string of length `len`; `rng` must be dedicated to this draw.
    pub fn sample(&self, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        match self {
            ErrorModel::Iid { p } => (0..len).map(|_| sample_from(p, rng)).collect(),
            ErrorModel::Markov { q, xi } => {
                let beta = (1.0 / xi.max(1.0)).clamp(0.0, 1.0);
                let mut out = Vec::with_capacity(len);
                let mut cur = sample_from(q, rng);
                out.push(cur);
                for _ in 1..len {
                    if rng.gen::<f64>() < beta {
                        cur = sample_from(q, rng);
                    }
                    out.push(cur);
                }
                out
            }
            ErrorModel::Gerrymander { n, gstar, alpha } => {
                assert!(len % 3 == 0, "gerrymander strings tile blocks of 3");
                let mut out = vec![usize::MAX; len];
                let mut prev_right = false;
                for b in 0..len / 3 {
                    if rng.gen::<f64>() < *alpha {
                        // a right-edge mark directly followed by a left-edge
                        // mark would violate the min gap of 3
                        let left_ok = !prev_right;
                        let go_right = if left_ok { rng.gen::<bool>() } else { true };
                        if go_right {
                            out[3 * b + 2] = *gstar;
                            prev_right = true;
                        } else {
                            out[3 * b] = *gstar;
                            prev_right = false;
                        }
                    } else {
                        prev_right = false;
                    }
                }
                for v in out.iter_mut() {
                    if *v == usize::MAX {
                        let mut r = rng.gen_range(0..*n - 1);
                        if r >= *gstar {
                            r += 1;
                        }
                        *v = r;
                    }
                }
                out
            }
            ErrorModel::RandomMps { n, chi, seed } => {
                let tensors = random_mps_tensors(*n, *chi, *seed);
                born_sample_periodic(&vec![tensors; len], rng)
            }
            ErrorModel::CircuitK { k, seed } => {
                let tensors = circuit_k_tensors(*k, len, *seed, rng);
                born_sample_periodic(&tensors, rng)
            }
        }
    }

    /// Block-aligned three-site marginal of the gerrymander model (exact up
    /// to the rare edge-collision rejection), used for dominance
    /// diagnostics.
    pub fn gerrymander_block_marginal(&self) -> Option<Vec<f64>> {
        let ErrorModel::Gerrymander { n, gstar, alpha } = self else {
            return None;
        };
        let (n, gstar, alpha) = (*n, *gstar, *alpha);
        let m = n - 1;
        let mut p3 = vec![0.0; n * n * n];
        let edge_weight = alpha / (2.0 * (m * m) as f64);
        let free_weight = (1.0 - alpha) / (m * m * m) as f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let stars = [a, b, c].iter().filter(|&&x| x == gstar).count();
                    let w = match stars {
                        0 => free_weight,
                        1 if b != gstar => edge_weight,
                        _ => 0.0,
                    };
                    p3[(a * n + b) * n + c] = w;
                }
            }
        }
        Some(p3)
    }
}

fn sample_from(p: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let r: f64 = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &w) in p.iter().enumerate() {
        acc += w;
        if r < acc {
            return i;
        }
    }
    p.len() - 1
}

fn random_mps_tensors(n: usize, chi: usize, seed: u64) -> Vec<CMat> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || {
        let u1: f64 = rng.gen::<f64>().max(1e-300);
        let u2: f64 = rng.gen::<f64>();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    (0..n)
        .map(|_| CMat::from_fn(chi, chi, |_, _| C64::new(gauss(), gauss())))
        .collect()
}

/// Site tensors of the X-basis wavefunction of the commuting diagonal
/// circuit `prod_{i,a} exp(i theta_{i,a} Z_i ... Z_{i+a})` on a ring, using
/// a transfer memory over the last `k` computational digits. The angles of
/// one disorder realization are drawn from the caller's stream.
fn circuit_k_tensors(k: usize, len: usize, seed: u64, rng: &mut ChaCha8Rng) -> Vec<Vec<CMat>> {
    let disorder: u64 = rng.gen();
    let mut angle_rng = ChaCha8Rng::seed_from_u64(seed ^ disorder);
    let mut theta = vec![vec![0.0f64; k + 1]; len];
    for row in theta.iter_mut() {
        for a in 1..=k {
            row[a] = angle_rng.gen::<f64>() * 2.0 * std::f64::consts::PI;
        }
    }
    let mem = 1usize << k;
    let mut tensors = Vec::with_capacity(len);
    for j in 0..len {
        // physical outcome g in {0,1}; memory holds (z_{j-k} .. z_{j-1})
        let mut site = vec![CMat::zeros(mem, mem); 2];
        for m in 0..mem {
            for zj in 0..2usize {
                let mprime = ((m << 1) | zj) & (mem - 1);
                let mut phase = 0.0;
                for a in 1..=k {
                    // parity of z_{j-a} + ... + z_j
                    let mut parity = zj;
                    for b in 1..=a {
                        parity ^= (m >> (b - 1)) & 1;
                    }
                    let t = theta[(j + len - a) % len][a];
                    phase += if parity == 1 { -t } else { t };
                }
                let amp = C64::new(0.0, phase).exp() * 0.5;
                for (g, blocks) in site.iter_mut().enumerate() {
                    let sign = if g * zj == 1 { -1.0 } else { 1.0 };
                    blocks[(mprime, m)] += amp * sign;
                }
            }
        }
        tensors.push(site);
    }
    tensors
}

/// Sequential Born sampling of a periodic MPS
/// `sum_g Tr[prod_i T_i^{g_i}] |g>`.
fn born_sample_periodic(tensors: &[Vec<CMat>], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let len = tensors.len();
    let chi = tensors[0][0].nrows();
    let d = tensors[0].len();
    let pair = |m: &CMat| -> CMat {
        let mut out = CMat::zeros(chi * chi, chi * chi);
        for a in 0..chi {
            for b in 0..chi {
                if m[(a, b)].norm_sqr() == 0.0 {
                    continue;
                }
                for c in 0..chi {
                    for e in 0..chi {
                        out[(a * chi + c, b * chi + e)] = m[(a, b)] * m[(c, e)].conj();
                    }
                }
            }
        }
        out
    };
    // suffix[i] = E_i E_{i+1} ... E_{len-1}, rescaled against under/overflow
    let mut suffix = vec![CMat::identity(chi * chi, chi * chi); len + 1];
    for i in (0..len).rev() {
        let mut e = CMat::zeros(chi * chi, chi * chi);
        for g in 0..d {
            e += pair(&tensors[i][g]);
        }
        let mut m = &e * &suffix[i + 1];
        let scale: f64 = m.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale > 0.0 {
            m /= C64::new(scale, 0.0);
        }
        suffix[i] = m;
    }
    let mut prefix = CMat::identity(chi * chi, chi * chi);
    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let mut weights = vec![0.0f64; d];
        for (g, w) in weights.iter_mut().enumerate() {
            let m = &prefix * pair(&tensors[i][g]) * &suffix[i + 1];
            let tr: C64 = m.diagonal().iter().sum();
            *w = tr.re.max(0.0);
        }
        let total: f64 = weights.iter().sum();
        let g = if total <= 0.0 {
            0
        } else {
            for w in weights.iter_mut() {
                *w /= total;
            }
            sample_from(&weights, rng)
        };
        out.push(g);
        prefix *= pair(&tensors[i][g]);
        let scale: f64 = prefix.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale > 0.0 {
            prefix /= C64::new(scale, 0.0);
        }
    }
    out
}

/// Monte Carlo majority-vote renormalization trace.
#[derive(Clone, Debug)]
pub struct TreeSample {
    /// per-depth empirical single-site marginals
    pub marginals: Vec<Vec<f64>>,
    /// per-depth, per-element standard errors (across trials)
    pub stderr: Vec<Vec<f64>>,
    /// per-depth gaps between the two largest marginals
    pub gaps: Vec<f64>,
    pub trials: usize,
}

/// Draw `trials` strings of length `3^l`, apply blockwise majority `depth`
/// times, and tabulate per-depth marginals with per-trial standard errors.
/// Deterministic for a fixed seed (one RNG stream per trial).
pub fn sample_majority_tree(
    model: &ErrorModel,
    chain_len: usize,
    depth: usize,
    trials: usize,
    seed: u64,
) -> Result<TreeSample> {
    let mut l = 0u32;
    let mut n = chain_len;
    while n % 3 == 0 {
        n /= 3;
        l += 1;
    }
    if n != 1 || depth as u32 > l {
        return Err(CoreError::structural(
            "chain length must be 3^l with depth <= l",
        ));
    }
    let ne = model.num_elements();
    let mut sums = vec![vec![0.0f64; ne]; depth + 1];
    let mut sq_sums = vec![vec![0.0f64; ne]; depth + 1];
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let mut string = model.sample(chain_len, &mut rng);
        for d in 0..=depth {
            let mut counts = vec![0.0f64; ne];
            for &g in &string {
                counts[g] += 1.0;
            }
            let len = string.len() as f64;
            for e in 0..ne {
                let frac = counts[e] / len;
                sums[d][e] += frac;
                sq_sums[d][e] += frac * frac;
            }
            if d < depth {
                string = (0..string.len() / 3)
                    .map(|t| {
                        maj_idx(
                            string[3 * t] as u64,
                            string[3 * t + 1] as u64,
                            string[3 * t + 2] as u64,
                        ) as usize
                    })
                    .collect();
            }
        }
    }
    let t = trials as f64;
    let mut marginals = Vec::with_capacity(depth + 1);
    let mut stderr = Vec::with_capacity(depth + 1);
    let mut gaps = Vec::with_capacity(depth + 1);
    for d in 0..=depth {
        let mean: Vec<f64> = sums[d].iter().map(|s| s / t).collect();
        let se: Vec<f64> = (0..ne)
            .map(|e| {
                let var = (sq_sums[d][e] / t - mean[e] * mean[e]).max(0.0);
                (var / t).sqrt()
            })
            .collect();
        let (g1, g2) = top_two(&mean);
        gaps.push(mean[g1] - mean[g2]);
        marginals.push(mean);
        stderr.push(se);
    }
    Ok(TreeSample {
        marginals,
        stderr,
        gaps,
        trials,
    })
}

/// Empirical adjacent-pair correlation `max |p(g,h) - p(g) p(h)|` at a given
/// depth, with a rough standard error, for factorization checks.
pub fn pair_correlation(
    model: &ErrorModel,
    chain_len: usize,
    depth: usize,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let ne = model.num_elements();
    let mut joint = vec![0.0f64; ne * ne];
    let mut single = vec![0.0f64; ne];
    let mut pairs = 0.0f64;
    let mut sites = 0.0f64;
    for trial in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial as u64 + 1);
        let mut string = model.sample(chain_len, &mut rng);
        for _ in 0..depth {
            string = (0..string.len() / 3)
                .map(|t| {
                    maj_idx(
                        string[3 * t] as u64,
                        string[3 * t + 1] as u64,
                        string[3 * t + 2] as u64,
                    ) as usize
                })
                .collect();
        }
        for w in string.windows(2) {
            joint[w[0] * ne + w[1]] += 1.0;
            pairs += 1.0;
        }
        for &g in &string {
            single[g] += 1.0;
            sites += 1.0;
        }
    }
    let mut max_dev = 0.0f64;
    let mut max_se = 0.0f64;
    for g in 0..ne {
        for h in 0..ne {
            let pj = joint[g * ne + h] / pairs;
            let pg = single[g] / sites;
            let ph = single[h] / sites;
            let dev = (pj - pg * ph).abs();
            if dev > max_dev {
                max_dev = dev;
                max_se = (pj * (1.0 - pj) / pairs).sqrt().max(1.0 / pairs);
            }
        }
    }
    Ok((max_dev, max_se))
}
