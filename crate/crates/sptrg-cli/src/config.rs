//! Config parsing and validation. Unknown keys are rejected and every
//! problem is reported, not just the first.

use sptrg::group::{FactorSet, FiniteAbelianGroup};
use sptrg::tensor::DEFAULT_SIZE_CAP;
use toml::Value;

#[derive(Clone, Debug, PartialEq)]
pub enum Kind {
    Recognize,
    Flow,
    Ssb,
    NonMnc,
    Sweep,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Recognize => "recognize",
            Kind::Flow => "flow",
            Kind::Ssb => "ssb",
            Kind::NonMnc => "nonmnc",
            Kind::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Debug)]
pub enum StateSpec {
    Reference,
    Product,
    Errors(Vec<(usize, Vec<i64>)>),
    RandomCircuit { circuit_seed: u64 },
    ClusterEd { lambda1: f64, lambda2: f64 },
}

#[derive(Clone, Debug)]
pub enum FlowSpec {
    Iid { p: Vec<f64>, eps: f64 },
    Markov { q: Vec<f64>, xi: f64 },
    Gerrymander { n: usize, gstar: usize, alpha: f64 },
    RandomMps { n: usize, chi: usize, model_seed: u64 },
    CircuitK { k: usize, model_seed: u64 },
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub lambda1: Vec<f64>,
    pub lambda2: f64,
    pub g_sites: usize,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kind: Kind,
    pub moduli: Vec<u32>,
    pub omega: Vec<(usize, usize, i64)>,
    pub chain_len: usize,
    pub depth: usize,
    pub seed: u64,
    pub shots: u64,
    pub trials: usize,
    pub tau_in: f64,
    pub tau_out: f64,
    pub out: Option<String>,
    pub state: StateSpec,
    pub flow: Option<FlowSpec>,
    pub sweep: Option<SweepSpec>,
    /// original text, echoed into the JSON summary
    pub source: String,
}

impl RunConfig {
    pub fn group(&self) -> Result<FiniteAbelianGroup, String> {
        FiniteAbelianGroup::new(self.moduli.clone()).map_err(|e| e.to_string())
    }

    pub fn factor_set(&self) -> Result<FactorSet, String> {
        let group = self.group()?;
        FactorSet::new(group, &self.omega).map_err(|e| e.to_string())
    }
}

fn known_keys(table: &toml::value::Table, allowed: &[&str], path: &str, errs: &mut Vec<String>) {
    for key in table.keys() {
        if !allowed.contains(&key.as_str()) {
            errs.push(format!("unknown key `{path}{key}`"));
        }
    }
}

fn get_u64(table: &toml::value::Table, key: &str, default: u64, errs: &mut Vec<String>) -> u64 {
    match table.get(key) {
        None => default,
        Some(Value::Integer(v)) if *v >= 0 => *v as u64,
        Some(_) => {
            errs.push(format!("`{key}` must be a non-negative integer"));
            default
        }
    }
}

fn get_f64(table: &toml::value::Table, key: &str, default: f64, errs: &mut Vec<String>) -> f64 {
    match table.get(key) {
        None => default,
        Some(Value::Float(v)) => *v,
        Some(Value::Integer(v)) => *v as f64,
        Some(_) => {
            errs.push(format!("`{key}` must be a number"));
            default
        }
    }
}

fn get_f64_list(table: &toml::value::Table, key: &str, errs: &mut Vec<String>) -> Vec<f64> {
    match table.get(key) {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| match v {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => {
                    errs.push(format!("`{key}` entries must be numbers"));
                    None
                }
            })
            .collect(),
        Some(_) => {
            errs.push(format!("`{key}` must be an array of numbers"));
            vec![]
        }
        None => vec![],
    }
}

/// Parse and fully validate a config; returns either the config or every
/// problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<String>> {
    let mut errs = Vec::new();
    let root: Value = match text.parse() {
        Ok(v) => v,
        Err(e) => return Err(vec![format!("TOML parse error: {e}")]),
    };
    let table = match root.as_table() {
        Some(t) => t,
        None => return Err(vec!["config root must be a table".into()]),
    };
    known_keys(
        table,
        &[
            "kind", "moduli", "omega", "chain_len", "depth", "seed", "shots", "trials", "out",
            "state", "flow", "sweep", "thresholds",
        ],
        "",
        &mut errs,
    );

    let kind = match table.get("kind").and_then(|v| v.as_str()) {
        Some("recognize") => Kind::Recognize,
        Some("flow") => Kind::Flow,
        Some("ssb") => Kind::Ssb,
        Some("nonmnc") => Kind::NonMnc,
        Some("sweep") => Kind::Sweep,
        Some(other) => {
            errs.push(format!(
                "unknown kind `{other}` (expected recognize|flow|ssb|nonmnc|sweep)"
            ));
            Kind::Recognize
        }
        None => {
            errs.push("missing required key `kind`".into());
            Kind::Recognize
        }
    };

    let moduli: Vec<u32> = match table.get("moduli") {
        Some(Value::Array(a)) => a
            .iter()
            .filter_map(|v| match v {
                Value::Integer(n) if *n >= 2 => Some(*n as u32),
                _ => {
                    errs.push("`moduli` entries must be integers >= 2".into());
                    None
                }
            })
            .collect(),
        Some(_) => {
            errs.push("`moduli` must be an array".into());
            vec![]
        }
        None => {
            errs.push("missing required key `moduli`".into());
            vec![]
        }
    };

    let mut omega = Vec::new();
    match table.get("omega") {
        Some(Value::Array(entries)) => {
            for e in entries {
                match e.as_array() {
                    Some(triple) if triple.len() == 3 => {
                        let nums: Vec<i64> =
                            triple.iter().filter_map(|v| v.as_integer()).collect();
                        if nums.len() == 3 && nums[0] >= 0 && nums[1] >= 0 {
                            omega.push((nums[0] as usize, nums[1] as usize, nums[2]));
                        } else {
                            errs.push("`omega` entries must be integer triples [i, j, w]".into());
                        }
                    }
                    _ => errs.push("`omega` entries must be triples [i, j, w]".into()),
                }
            }
        }
        Some(_) => errs.push("`omega` must be an array of [i, j, w] triples".into()),
        None => {}
    }

    let chain_len = get_u64(table, "chain_len", 0, &mut errs) as usize;
    let depth = get_u64(table, "depth", 1, &mut errs) as usize;
    let seed = get_u64(table, "seed", u64::MAX, &mut errs);
    if seed == u64::MAX {
        errs.push("missing required key `seed` (explicit seeds are mandatory)".into());
    }
    let shots = get_u64(table, "shots", 0, &mut errs);
    let trials = get_u64(table, "trials", 10_000, &mut errs) as usize;
    let out = table.get("out").and_then(|v| v.as_str()).map(String::from);

    let (mut tau_in, mut tau_out) = (0.9, 1e-6);
    if let Some(Value::Table(t)) = table.get("thresholds") {
        known_keys(t, &["tau_in", "tau_out"], "thresholds.", &mut errs);
        tau_in = get_f64(t, "tau_in", 0.9, &mut errs);
        tau_out = get_f64(t, "tau_out", 1e-6, &mut errs);
    }

    let state = match table.get("state") {
        Some(Value::Table(t)) => {
            known_keys(
                t,
                &["kind", "errors", "circuit_seed", "lambda1", "lambda2"],
                "state.",
                &mut errs,
            );
            match t.get("kind").and_then(|v| v.as_str()) {
                Some("reference") | None => StateSpec::Reference,
                Some("product") => StateSpec::Product,
                Some("errors") => {
                    let mut list = Vec::new();
                    if let Some(Value::Array(pairs)) = t.get("errors") {
                        for p in pairs {
                            let ok = p.as_array().and_then(|pair| {
                                let site = pair.first()?.as_integer()?;
                                let res: Vec<i64> = pair
                                    .get(1)?
                                    .as_array()?
                                    .iter()
                                    .filter_map(|x| x.as_integer())
                                    .collect();
                                Some((site as usize, res))
                            });
                            match ok {
                                Some(pair) => list.push(pair),
                                None => errs.push(
                                    "state.errors entries must be [site, [residues...]]".into(),
                                ),
                            }
                        }
                    } else {
                        errs.push("state.kind = errors needs a `state.errors` list".into());
                    }
                    StateSpec::Errors(list)
                }
                Some("random-circuit") => StateSpec::RandomCircuit {
                    circuit_seed: get_u64(t, "circuit_seed", 0, &mut errs),
                },
                Some("cluster-ed") => StateSpec::ClusterEd {
                    lambda1: get_f64(t, "lambda1", 0.0, &mut errs),
                    lambda2: get_f64(t, "lambda2", 0.0, &mut errs),
                },
                Some(other) => {
                    errs.push(format!("unknown state.kind `{other}`"));
                    StateSpec::Reference
                }
            }
        }
        Some(_) => {
            errs.push("`state` must be a table".into());
            StateSpec::Reference
        }
        None => StateSpec::Reference,
    };

    let flow = match table.get("flow") {
        Some(Value::Table(t)) => {
            known_keys(
                t,
                &["model", "p", "q", "xi", "n", "gstar", "alpha", "chi", "k", "model_seed", "eps"],
                "flow.",
                &mut errs,
            );
            let spec = match t.get("model").and_then(|v| v.as_str()) {
                Some("iid") | None => FlowSpec::Iid {
                    p: get_f64_list(t, "p", &mut errs),
                    eps: get_f64(t, "eps", 1e-3, &mut errs),
                },
                Some("markov") => FlowSpec::Markov {
                    q: get_f64_list(t, "q", &mut errs),
                    xi: get_f64(t, "xi", 3.0, &mut errs),
                },
                Some("gerrymander") => FlowSpec::Gerrymander {
                    n: get_u64(t, "n", 4, &mut errs) as usize,
                    gstar: get_u64(t, "gstar", 3, &mut errs) as usize,
                    alpha: get_f64(t, "alpha", 0.9, &mut errs),
                },
                Some("random-mps") => FlowSpec::RandomMps {
                    n: get_u64(t, "n", 2, &mut errs) as usize,
                    chi: get_u64(t, "chi", 2, &mut errs) as usize,
                    model_seed: get_u64(t, "model_seed", 0, &mut errs),
                },
                Some("circuit-k") => FlowSpec::CircuitK {
                    k: get_u64(t, "k", 2, &mut errs) as usize,
                    model_seed: get_u64(t, "model_seed", 0, &mut errs),
                },
                Some(other) => {
                    errs.push(format!("unknown flow.model `{other}`"));
                    FlowSpec::Iid {
                        p: vec![],
                        eps: 1e-3,
                    }
                }
            };
            Some(spec)
        }
        Some(_) => {
            errs.push("`flow` must be a table".into());
            None
        }
        None => None,
    };

    let sweep = match table.get("sweep") {
        Some(Value::Table(t)) => {
            known_keys(t, &["lambda1", "lambda2", "g_sites"], "sweep.", &mut errs);
            Some(SweepSpec {
                lambda1: get_f64_list(t, "lambda1", &mut errs),
                lambda2: get_f64(t, "lambda2", 0.0, &mut errs),
                g_sites: get_u64(t, "g_sites", 9, &mut errs) as usize,
            })
        }
        Some(_) => {
            errs.push("`sweep` must be a table".into());
            None
        }
        None => None,
    };

    let cfg = RunConfig {
        kind,
        moduli,
        omega,
        chain_len,
        depth,
        seed,
        shots,
        trials,
        tau_in,
        tau_out,
        out,
        state,
        flow,
        sweep,
        source: text.to_string(),
    };
    validate(&cfg, &mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(errs)
    }
}

fn is_power_of_three(mut n: usize) -> bool {
    if n == 0 {
        return false;
    }
    while n % 3 == 0 {
        n /= 3;
    }
    n == 1
}

fn validate(cfg: &RunConfig, errs: &mut Vec<String>) {
    let circuit_kind = matches!(cfg.kind, Kind::Recognize | Kind::Ssb | Kind::Sweep);
    if circuit_kind && !is_power_of_three(cfg.chain_len) {
        errs.push(format!(
            "chain_len = {} must be a power of 3 for kind = {}",
            cfg.chain_len,
            cfg.kind.as_str()
        ));
    }
    if cfg.moduli.is_empty() {
        return;
    }
    // a nontrivial MNC class needs a square group with paired equal moduli
    let square = cfg.moduli.len() % 2 == 0
        && (0..cfg.moduli.len() / 2).all(|a| cfg.moduli[2 * a] == cfg.moduli[2 * a + 1]);
    if matches!(cfg.kind, Kind::Recognize | Kind::Sweep) && !square {
        errs.push(
            "no maximally non-commutative class exists: the group must be a square G' x G' \
             with paired equal moduli"
                .into(),
        );
    }
    let group = match cfg.group() {
        Ok(g) => g,
        Err(e) => {
            errs.push(e);
            return;
        }
    };
    let fs = match cfg.factor_set() {
        Ok(f) => f,
        Err(e) => {
            errs.push(e);
            return;
        }
    };
    let order = group.order() as usize;
    match cfg.kind {
        Kind::Recognize | Kind::Sweep => {
            if !fs.is_trivial_class() && !fs.is_mnc() {
                errs.push(
                    "factor set is not maximally non-commutative; use kind = nonmnc".into(),
                );
            }
            if fs.is_trivial_class() {
                errs.push("recognize needs a nontrivial MNC omega".into());
            }
            // pre-flight resource check: dense must fit, or the blocked
            // nine-site evaluator must apply
            let dense_ok =
                sptrg::tensor::checked_dim(order, cfg.chain_len, DEFAULT_SIZE_CAP).is_ok();
            if !dense_ok && !(cfg.chain_len == 9 && cfg.depth <= 2) {
                errs.push(format!(
                    "|G|^L = {order}^{} exceeds the dense cap and no blocked path applies",
                    cfg.chain_len
                ));
            }
        }
        Kind::NonMnc => {
            if cfg.moduli.len() != 2 || cfg.moduli[0] != cfg.moduli[1] || cfg.moduli[0] != 6 {
                errs.push("kind = nonmnc supports moduli = [6, 6] (the Z_pq^2 family)".into());
            }
        }
        Kind::Flow => {
            if cfg.flow.is_none() {
                errs.push("kind = flow needs a [flow] table".into());
            }
        }
        Kind::Ssb => {}
    }
    if let Some(FlowSpec::Iid { p, .. }) = &cfg.flow {
        if !p.is_empty() {
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-9 || p.iter().any(|&x| x < 0.0) {
                errs.push("flow.p must be a probability distribution".into());
            }
        } else if cfg.kind == Kind::Flow {
            errs.push("flow.model = iid needs marginals `flow.p`".into());
        }
    }
}

/// Canonical re-serialization of the parsed config (used for the idempotent
/// round-trip check and the JSON echo).
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    use std::fmt::Write;
    writeln!(s, "kind = \"{}\"", cfg.kind.as_str()).ok();
    writeln!(
        s,
        "moduli = [{}]",
        cfg.moduli
            .iter()
            .map(|m| m.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )
    .ok();
    if !cfg.omega.is_empty() {
        writeln!(
            s,
            "omega = [{}]",
            cfg.omega
                .iter()
                .map(|(i, j, w)| format!("[{i}, {j}, {w}]"))
                .collect::<Vec<_>>()
                .join(", ")
        )
        .ok();
    }
    writeln!(s, "chain_len = {}", cfg.chain_len).ok();
    writeln!(s, "depth = {}", cfg.depth).ok();
    writeln!(s, "seed = {}", cfg.seed).ok();
    writeln!(s, "shots = {}", cfg.shots).ok();
    writeln!(s, "trials = {}", cfg.trials).ok();
    s
}
