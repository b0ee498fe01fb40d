//! Configuration-driven experiment runner: recognition, classical flows,
//! symmetry breaking, the non-MNC protocol, cluster-model sweeps, and the
//! acceptance self-test.

mod config;

use clap::{Parser, Subcommand};
use config::{parse_config, FlowSpec, Kind, RunConfig, StateSpec};
use sptrg::circuit::{ConvGate, SiteAlgebra};
use sptrg::error::CoreError;
use sptrg::recognize::{self, Decision, ErrorSpec, Thresholds};
use sptrg::tensor::DEFAULT_SIZE_CAP;
use sptrg::{C64, FactorSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Parser)]
#[command(name = "sptrg", about = "RG-circuit phase recognition experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a phase-recognition experiment from a config file
    Recognize(RunArgs),
    /// Run a classical majority-vote flow experiment
    Flow(RunArgs),
    /// Run the symmetry-breaking recognizer
    Ssb(RunArgs),
    /// Run the non-MNC measure-remainder-correct protocol
    Nonmnc(RunArgs),
    /// Sweep the perturbed cluster model and recognize each ground state
    Sweep(RunArgs),
    /// Run the acceptance invariant suite and print a pass/fail table
    Selftest {
        /// run only the fast checks
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Parser)]
struct RunArgs {
    /// Path to the TOML config
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Include wall time in the JSON summary (breaks byte reproducibility)
    #[arg(long)]
    timing: bool,
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Selftest { quick } => run_selftest(quick),
        Command::Recognize(args) => run(args, Kind::Recognize),
        Command::Flow(args) => run(args, Kind::Flow),
        Command::Ssb(args) => run(args, Kind::Ssb),
        Command::Nonmnc(args) => run(args, Kind::NonMnc),
        Command::Sweep(args) => run(args, Kind::Sweep),
    };
    std::process::exit(code);
}

fn run_selftest(quick: bool) -> i32 {
    let checks = if quick {
        sptrg::selftest::run_quick()
    } else {
        sptrg::selftest::run_all()
    };
    let mut all_ok = true;
    println!("{:-<72}", "");
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        all_ok &= c.passed;
        println!("[{status}] {}", c.name);
        for line in c.detail.lines() {
            println!("       {line}");
        }
    }
    println!("{:-<72}", "");
    let passed = checks.iter().filter(|c| c.passed).count();
    println!("{passed}/{} checks passed", checks.len());
    if all_ok {
        0
    } else {
        3
    }
}

fn exit_code_for(e: &CoreError) -> i32 {
    match e {
        CoreError::SizeCap { .. } => 2,
        CoreError::Numerical(_) | CoreError::NoConvergence(_) => 3,
        _ => 1,
    }
}

fn run(args: RunArgs, expected_kind: Kind) -> i32 {
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cannot read config {}: {e}", args.config.display());
            return 1;
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(errors) => {
            eprintln!("config rejected with {} problem(s):", errors.len());
            for e in errors {
                eprintln!("  - {e}");
            }
            return 1;
        }
    };
    if cfg.kind != expected_kind {
        eprintln!(
            "config kind `{}` does not match the `{}` subcommand",
            cfg.kind.as_str(),
            expected_kind.as_str()
        );
        return 1;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = args
        .out
        .or_else(|| cfg.out.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let started = Instant::now();
    let result = match cfg.kind {
        Kind::Recognize => run_recognize(&cfg),
        Kind::Flow => run_flow(&cfg),
        Kind::Ssb => run_ssb(&cfg),
        Kind::NonMnc => run_nonmnc(&cfg),
        Kind::Sweep => run_sweep(&cfg),
    };
    match result {
        Ok((csv, summary)) => {
            let wall_ms = started.elapsed().as_millis() as u64;
            match emit_results(&cfg, &out_dir, &csv, summary, args.timing.then_some(wall_ms)) {
                Ok(paths) => {
                    for p in paths {
                        println!("wrote {}", p.display());
                    }
                    0
                }
                Err(e) => {
                    eprintln!("emit failed: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            exit_code_for(&e)
        }
    }
}

type RunOutput = (String, serde_json::Value);

fn decision_str(d: Decision) -> String {
    d.to_string()
}

fn recognition_csv_header() -> &'static str {
    "lambda1,lambda2,provenance,depth,kind,mso_re,mso_im,purity,m_delta,decision\n"
}

fn push_report_rows(
    csv: &mut String,
    report: &recognize::RecognitionReport,
    lambda: Option<(f64, f64)>,
    provenance: &str,
) {
    use std::fmt::Write;
    for row in &report.rows {
        let (l1, l2) = match lambda {
            Some((a, b)) => (format!("{a}"), format!("{b}")),
            None => (String::new(), String::new()),
        };
        writeln!(
            csv,
            "{l1},{l2},{provenance},{},{},{:.17e},{:.17e},{},{},{}",
            row.depth,
            match row.kind {
                recognize::IndicatorKind::String => "string",
                recognize::IndicatorKind::Terminal => "terminal",
            },
            row.mso.re,
            row.mso.im,
            row.purity.map(|p| format!("{p:.17e}")).unwrap_or_default(),
            row.m_delta.map(|m| m.to_string()).unwrap_or_default(),
            decision_str(report.decision),
        )
        .ok();
    }
}

fn prepare_state(cfg: &RunConfig, fs: &FactorSet) -> Result<recognize::PreparedState, CoreError> {
    match &cfg.state {
        StateSpec::Reference => {
            recognize::prepare_with_errors(fs, cfg.chain_len, &ErrorSpec::Sites(vec![]), DEFAULT_SIZE_CAP)
        }
        StateSpec::Product => {
            let order = fs.group().order() as usize;
            let state = sptrg::tensor::DenseState::basis_state(
                order,
                &vec![0; cfg.chain_len],
                DEFAULT_SIZE_CAP,
            )?;
            Ok(recognize::PreparedState {
                fs: FactorSet::trivial(fs.group().clone()),
                rep: recognize::StateRep::Dense(state),
                provenance: "product".into(),
            })
        }
        StateSpec::Errors(list) => {
            let group = fs.group();
            let mut sites = Vec::new();
            for (site, residues) in list {
                sites.push((*site, group.element_from(residues)?));
            }
            recognize::prepare_with_errors(fs, cfg.chain_len, &ErrorSpec::Sites(sites), DEFAULT_SIZE_CAP)
        }
        StateSpec::RandomCircuit { circuit_seed } => {
            let mut prepared = recognize::prepare_with_errors(
                fs,
                cfg.chain_len,
                &ErrorSpec::Sites(vec![]),
                DEFAULT_SIZE_CAP,
            )?;
            recognize::apply_random_symmetric_circuit(&mut prepared, *circuit_seed)?;
            Ok(prepared)
        }
        StateSpec::ClusterEd { lambda1, lambda2 } => {
            let n = fs.group().moduli()[0];
            let gs = recognize::cluster_ground_state(
                n,
                cfg.omega.first().map(|(_, _, w)| *w).unwrap_or(1),
                *lambda1,
                *lambda2,
                cfg.chain_len,
                DEFAULT_SIZE_CAP,
            )?;
            Ok(gs.state)
        }
    }
}

fn run_recognize(cfg: &RunConfig) -> Result<RunOutput, CoreError> {
    let fs = cfg.factor_set().map_err(CoreError::structural)?;
    let gate = ConvGate::build(SiteAlgebra::regular(&fs)?)?;
    let prepared = prepare_state(cfg, &fs)?;
    let thresholds = Thresholds {
        tau_in: cfg.tau_in,
        tau_out: cfg.tau_out,
    };
    let report = recognize::recognize(
        &prepared,
        &fs,
        &gate,
        cfg.depth,
        cfg.shots,
        3.0,
        thresholds,
        cfg.seed,
    )?;
    let mut csv = recognition_csv_header().to_string();
    push_report_rows(&mut csv, &report, None, &prepared.provenance);
    let summary = serde_json::json!({
        "decision": decision_str(report.decision),
        "g_star": report.g_star,
        "order_n": report.order_n,
        "rows": report.rows.len(),
        "m_delta_final": report.rows.last().and_then(|r| r.m_delta),
    });
    Ok((csv, summary))
}

fn run_flow(cfg: &RunConfig) -> Result<RunOutput, CoreError> {
    use std::fmt::Write;
    let spec = cfg
        .flow
        .as_ref()
        .ok_or_else(|| CoreError::structural("missing [flow] table"))?;
    let mut csv = String::from("depth,element,marginal,stderr,gap\n");
    let summary;
    match spec {
        FlowSpec::Iid { p, eps } => {
            let report = sptrg::flow::gap_and_depth(p, *eps, 10_000)?;
            for (d, (marg, gap)) in report.marginals.iter().zip(&report.deltas).enumerate() {
                for (e, m) in marg.iter().enumerate() {
                    writeln!(csv, "{d},{e},{m:.17e},0,{gap:.17e}").ok();
                }
            }
            summary = serde_json::json!({
                "d_eps": report.d_eps,
                "bound": report.bound,
                "generic": report.generic,
                "winner": report.winner,
                "recursion_dev": report.recursion_dev,
            });
        }
        _ => {
            let model = match spec {
                FlowSpec::Markov { q, xi } => sptrg::flow::ErrorModel::Markov {
                    q: q.clone(),
                    xi: *xi,
                },
                FlowSpec::Gerrymander { n, gstar, alpha } => sptrg::flow::ErrorModel::Gerrymander {
                    n: *n,
                    gstar: *gstar,
                    alpha: *alpha,
                },
                FlowSpec::RandomMps { n, chi, model_seed } => sptrg::flow::ErrorModel::RandomMps {
                    n: *n,
                    chi: *chi,
                    seed: *model_seed,
                },
                FlowSpec::CircuitK { k, model_seed } => sptrg::flow::ErrorModel::CircuitK {
                    k: *k,
                    seed: *model_seed,
                },
                FlowSpec::Iid { .. } => unreachable!(),
            };
            let sample = sptrg::flow::sample_majority_tree(
                &model,
                cfg.chain_len.max(27),
                cfg.depth,
                cfg.trials,
                cfg.seed,
            )?;
            for d in 0..sample.marginals.len() {
                for e in 0..sample.marginals[d].len() {
                    writeln!(
                        csv,
                        "{d},{e},{:.17e},{:.17e},{:.17e}",
                        sample.marginals[d][e], sample.stderr[d][e], sample.gaps[d]
                    )
                    .ok();
                }
            }
            summary = serde_json::json!({
                "trials": sample.trials,
                "final_gap": sample.gaps.last(),
            });
        }
    }
    Ok((csv, summary))
}

fn run_ssb(cfg: &RunConfig) -> Result<RunOutput, CoreError> {
    use std::fmt::Write;
    let group = cfg.group().map_err(CoreError::structural)?;
    let order = group.order() as usize;
    // input per the state spec: product |0...0> or the uniform paramagnet
    let state = match &cfg.state {
        StateSpec::Product => sptrg::tensor::DenseState::basis_state(
            order,
            &vec![0; cfg.chain_len],
            DEFAULT_SIZE_CAP,
        )?,
        _ => {
            let total = order.pow(cfg.chain_len as u32) as usize;
            sptrg::tensor::DenseState::from_amplitudes(
                order,
                cfg.chain_len,
                vec![C64::new(1.0, 0.0); total],
                DEFAULT_SIZE_CAP,
            )?
        }
    };
    let mut csv = String::from("provenance,depth,indicator,decision\n");
    let mut indicators = Vec::new();
    for d in 0..=cfg.depth {
        let (evolved, layout) = sptrg::ssb::run_ssb(&state, &group, d)?;
        let val = sptrg::ssb::para_uniformity(&evolved, &layout, &group, d)?;
        indicators.push(val);
        let decision = if val > 1.0 - cfg.tau_in {
            "ordered"
        } else if val < cfg.tau_out {
            "uniform"
        } else {
            "inconclusive"
        };
        writeln!(csv, "ssb,{d},{val:.17e},{decision}").ok();
    }
    let summary = serde_json::json!({ "indicators": indicators });
    Ok((csv, summary))
}

fn run_nonmnc(cfg: &RunConfig) -> Result<RunOutput, CoreError> {
    use std::fmt::Write;
    let ext = sptrg::nonmnc::CentralExtension::new(2, 3)?;
    let gate = ConvGate::build(ext.pair_algebra()?)?;
    let psi = ext.general_reference_dense(3, DEFAULT_SIZE_CAP)?;
    let mut csv = String::from(
        "provenance,seed,depth,mso_re,mso_im,flavor_outcome_hash,rem_weight\n",
    );
    let mut reports = Vec::new();
    for offset in 0..cfg.trials.min(8) as u64 {
        let report = sptrg::nonmnc::recognize_non_mnc(&ext, &psi, &gate, cfg.seed + offset)?;
        let hash: u64 = report
            .flavor_outcome
            .iter()
            .flatten()
            .fold(0u64, |acc, &v| acc.wrapping_mul(31).wrapping_add(v as u64));
        writeln!(
            csv,
            "general-reference,{},0,{:.17e},{:.17e},{hash},{}",
            cfg.seed + offset,
            report.mso_depth0.re,
            report.mso_depth0.im,
            report.rem_weight
        )
        .ok();
        writeln!(
            csv,
            "general-reference,{},1,{:.17e},{:.17e},{hash},{}",
            cfg.seed + offset,
            report.mso_depth1.re,
            report.mso_depth1.im,
            report.rem_weight
        )
        .ok();
        reports.push(report.mso_depth1.re);
    }
    let summary = serde_json::json!({ "mso_depth1": reports });
    Ok((csv, summary))
}

fn run_sweep(cfg: &RunConfig) -> Result<RunOutput, CoreError> {
    let fs = cfg.factor_set().map_err(CoreError::structural)?;
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CoreError::structural("missing [sweep] table"))?;
    let gate = ConvGate::build(SiteAlgebra::regular(&fs)?)?;
    let n = fs.group().moduli()[0];
    let omega = cfg.omega.first().map(|(_, _, w)| *w).unwrap_or(1);
    let thresholds = Thresholds {
        tau_in: cfg.tau_in,
        tau_out: cfg.tau_out,
    };
    let mut csv = recognition_csv_header().to_string();
    let mut decisions = Vec::new();
    for &lambda1 in &sweep.lambda1 {
        let gs = recognize::cluster_ground_state(
            n,
            omega,
            lambda1,
            sweep.lambda2,
            sweep.g_sites,
            DEFAULT_SIZE_CAP,
        )?;
        let report = recognize::recognize(
            &gs.state,
            &fs,
            &gate,
            cfg.depth,
            cfg.shots,
            3.0,
            thresholds,
            cfg.seed,
        )?;
        push_report_rows(
            &mut csv,
            &report,
            Some((lambda1, sweep.lambda2)),
            "cluster-ed",
        );
        decisions.push(decision_str(report.decision));
    }
    let summary = serde_json::json!({
        "lambda1": sweep.lambda1,
        "decisions": decisions,
    });
    Ok((csv, summary))
}

/// Write the CSV and JSON summary atomically (temp file + rename).
fn emit_results(
    cfg: &RunConfig,
    out_dir: &Path,
    csv: &str,
    summary: serde_json::Value,
    wall_ms: Option<u64>,
) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let base = cfg.kind.as_str();
    let csv_path = out_dir.join(format!("{base}.csv"));
    let json_path = out_dir.join(format!("{base}.json"));
    let mut doc = serde_json::json!({
        "kind": cfg.kind.as_str(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": config::serialize_config(cfg),
        "summary": summary,
    });
    if let Some(ms) = wall_ms {
        doc["wall_time_ms"] = serde_json::json!(ms);
    }
    let atomic_write = |path: &Path, bytes: &[u8]| -> std::io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    };
    atomic_write(&csv_path, csv.as_bytes())?;
    atomic_write(
        &json_path,
        (serde_json::to_string_pretty(&doc).expect("serializable") + "\n").as_bytes(),
    )?;
    Ok(vec![csv_path, json_path])
}
