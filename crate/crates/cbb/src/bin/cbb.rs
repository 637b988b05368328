//! Command-line front end: instance generation, LP and index dumps, policy
//! simulation, searches, and the experiment sweeps.
//!
//! Exit codes: 0 success, 2 invalid input, 3 internal invariant violation.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cbb::asymptotic::{
    stationary_distribution, verify_counterexamples, MeanFieldModel, StationaryMode,
};
use cbb::experiments::{
    ablate, compare, frontier, frontier_rows_to_csv, heatmap, heatmap_cells_to_csv,
    result_rows_to_csv, write_outputs, CompareConfig,
};
use cbb::generators::{
    gen_appendix_a_example2, gen_blended, gen_churner, gen_fivesix, gen_organic, gen_random,
    gen_theorem1, BlendedParams, ChurnerParams, OrganicParams,
};
use cbb::lp::occupancy::{coip_budget, lp_fixed_budget, solve_occupancy};
use cbb::model::{validate_instance, CbbInstance};
use cbb::search::{bnb, mitosis, SearchConfig};
use cbb::sim::{run_epoch, OracleCtx, Policy, SimConfig};
use cbb::whittle::compute_whittle_table;

#[derive(Parser)]
#[command(name = "cbb", about = "Contextual budgeted bandit toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Random,
    Theorem1,
    Fivesix,
    Example2,
    Organic,
    Churner,
    Blended,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Random,
    Greedy,
    Whittle,
    Coip,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory for the CSV and its metadata sidecar.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also emit an SVG chart next to the CSV.
    #[arg(long)]
    svg: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate an instance and write it as JSON.
    Gen {
        #[arg(long, value_enum)]
        kind: GenKind,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        abundance: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Replica count for the scaled families.
        #[arg(long, default_value_t = 30)]
        rho: usize,
        #[arg(long)]
        out_file: PathBuf,
    },
    /// Solve the relaxed occupancy LP; optionally pin per-context budgets.
    Lp {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        /// Comma-separated per-context budgets for the pinned variant.
        #[arg(long, value_delimiter = ',')]
        fixed: Option<Vec<f64>>,
    },
    /// Dump the Whittle index table as CSV: arm,context,state,index.
    Whittle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0.95)]
        gamma: f64,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
    /// Run one policy and print the outcome as a CSV row.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        horizon: usize,
        #[arg(long, default_value_t = 200)]
        burn_in: usize,
    },
    /// Compare all policies on one instance across seeds.
    Compare {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5,6,7")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 600)]
        timeout_s: u64,
        #[arg(long, default_value_t = 2000)]
        rounds: usize,
        #[arg(long, default_value_t = 2.0)]
        ucb_c: f64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Branch-and-bound budget search; prints JSON.
    Bnb {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 600)]
        timeout_s: u64,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        no_prune: bool,
    },
    /// UCB tree-splitting budget search; prints JSON.
    Mitosis {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2000)]
        rounds: usize,
        #[arg(long, default_value_t = 2.0)]
        ucb_c: f64,
        #[arg(long)]
        theta: Option<f64>,
        /// Optional CSV of the pull history for regret plots.
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// COIP/Mitosis reward ratio over the abundance and budget grids.
    Heatmap {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.25,0.5,0.75,1.0")]
        abundances: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
        budgets: Vec<u32>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 300)]
        rounds: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Reward versus fairness across a theta grid.
    Frontier {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 5)]
        budget: u32,
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.2,0.4,0.6,0.8,1.0")]
        thetas: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        rounds: usize,
        #[arg(long, default_value_t = 120)]
        timeout_s: u64,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Policy comparison across N, K, and budget grids.
    Ablate {
        #[arg(long, value_delimiter = ',', default_value = "50,100,200")]
        ns: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,4,6")]
        budgets: Vec<u32>,
        #[arg(long, default_value_t = 0.5)]
        abundance: f64,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 600)]
        timeout_s: u64,
        #[arg(long, default_value_t = 500)]
        rounds: usize,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Mean-field verification report and stationary-distribution CSV.
    Asymptotic {
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn load_instance(path: &PathBuf) -> Result<CbbInstance, InputError> {
    let inst = CbbInstance::load_json(path)
        .map_err(|e| InputError(format!("cannot read instance {}: {e}", path.display())))?;
    let report = validate_instance(&inst);
    if !report.ok() {
        return Err(InputError(format!(
            "invalid instance {}: {}",
            path.display(),
            report.failures.join("; ")
        )));
    }
    Ok(inst)
}

fn run(cli: Cli) -> Result<(), InputError> {
    match cli.cmd {
        Cmd::Gen {
            kind,
            n,
            k,
            seed,
            abundance,
            epsilon,
            rho,
            out_file,
        } => {
            let inst = match kind {
                GenKind::Random => gen_random(n, k, seed),
                GenKind::Theorem1 => gen_theorem1(n).0,
                GenKind::Fivesix => gen_fivesix(epsilon).base.replicate(rho),
                GenKind::Example2 => gen_appendix_a_example2(epsilon).base.replicate(rho),
                GenKind::Organic => gen_organic(n, k, seed, &OrganicParams::default()),
                GenKind::Churner => {
                    if k < 2 {
                        return Err(InputError("churner family needs k >= 2".into()));
                    }
                    gen_churner(n, k, seed, &ChurnerParams::default_for(k))
                }
                GenKind::Blended => {
                    if k < 2 {
                        return Err(InputError("blended family needs k >= 2".into()));
                    }
                    if !(0.0..=1.0).contains(&abundance) {
                        return Err(InputError("abundance must be in [0,1]".into()));
                    }
                    let params = BlendedParams {
                        abundance,
                        organic: OrganicParams::default(),
                        churner: ChurnerParams::default_for(k),
                    };
                    gen_blended(n, k, seed, &params)
                }
            };
            inst.save_json(&out_file)
                .map_err(|e| InputError(format!("cannot write {}: {e}", out_file.display())))?;
            println!("wrote {}", out_file.display());
        }
        Cmd::Lp {
            instance,
            budget,
            fixed,
        } => {
            let inst = load_instance(&instance)?;
            let sol = match &fixed {
                Some(budgets) => {
                    if budgets.len() != inst.num_contexts {
                        return Err(InputError("fixed budgets must have one entry per context".into()));
                    }
                    lp_fixed_budget(&inst, budgets, budget as f64)
                }
                None => solve_occupancy(&inst, budget as f64),
            }
            .map_err(|e| InputError(format!("LP construction failed: {e}")))?;
            let frac = sol.fractional_budgets(&inst);
            println!(
                "{}",
                serde_json::json!({
                    "status": format!("{:?}", sol.status),
                    "objective": sol.objective_value,
                    "fractional_budgets": frac,
                    "coip_budgets": coip_budget(&sol, &inst, budget).per_context,
                })
            );
        }
        Cmd::Whittle {
            instance,
            gamma,
            tol,
        } => {
            if !(0.0 < gamma && gamma < 1.0) || tol <= 0.0 {
                return Err(InputError("gamma must be in (0,1) and tol positive".into()));
            }
            let inst = load_instance(&instance)?;
            let table = compute_whittle_table(&inst, gamma, tol);
            println!("arm,context,state,index");
            for i in 0..inst.num_arms {
                for k in 0..inst.num_contexts {
                    for s in 0..2 {
                        println!("{i},{k},{s},{}", table.at(i, k, s));
                    }
                }
            }
        }
        Cmd::Simulate {
            instance,
            policy,
            budget,
            seed,
            horizon,
            burn_in,
        } => {
            let inst = load_instance(&instance)?;
            if burn_in >= horizon {
                return Err(InputError("burn_in must be smaller than horizon".into()));
            }
            let pol = match policy {
                PolicyKind::Random => Policy::Random { quota: budget },
                PolicyKind::Greedy => Policy::Greedy { quota: budget },
                PolicyKind::Whittle => Policy::VanillaWhittle {
                    quota: budget,
                    table: compute_whittle_table(&inst, 0.95, 1e-6),
                },
                PolicyKind::Coip => {
                    let sol = solve_occupancy(&inst, budget as f64)
                        .map_err(|e| InputError(format!("LP failed: {e}")))?;
                    Policy::FlexOccupancy {
                        alloc: coip_budget(&sol, &inst, budget),
                        rho: cbb::lp::occupancy::occupancy_index(&sol, &inst),
                    }
                }
            };
            let cfg = SimConfig {
                horizon,
                burn_in,
                epochs: 1,
                initial_state_mode: cbb::sim::InitialStateMode::AllActive,
            };
            let out = run_epoch(&inst, &pol, &cfg, seed)
                .map_err(|e| InputError(format!("simulation aborted: {e}")))?;
            println!("avg_reward,std_error,fairness,budget_violations");
            println!(
                "{},{},{},{}",
                out.avg_reward, out.std_error, out.fairness, out.budget_violations
            );
        }
        Cmd::Compare {
            instance,
            budget,
            seeds,
            epochs,
            timeout_s,
            rounds,
            ucb_c,
            out,
        } => {
            let inst = load_instance(&instance)?;
            if seeds.is_empty() {
                return Err(InputError("need at least one seed".into()));
            }
            let cfg = CompareConfig {
                budget,
                seeds: seeds.clone(),
                eval_epochs: epochs,
                bnb_timeout: Duration::from_secs(timeout_s),
                mitosis_rounds: rounds,
                ucb_c,
                ..CompareConfig::default()
            };
            let rows = compare(&inst, &cfg, &[]);
            let csv = result_rows_to_csv(&rows);
            let meta = serde_json::json!({
                "command": "compare", "budget": budget, "seeds": seeds,
                "epochs": epochs, "timeout_s": timeout_s, "rounds": rounds,
                "ucb_c": ucb_c, "version": env!("CARGO_PKG_VERSION"),
            });
            write_outputs(&out.out, "compare", &csv, &meta)
                .map_err(|e| InputError(format!("cannot write outputs: {e}")))?;
            if out.svg {
                let policies: Vec<String> = rows
                    .iter()
                    .map(|r| r.policy.clone())
                    .collect::<std::collections::BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let mean_norm = |p: &str| {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.policy == p)
                        .map(|r| r.normalized)
                        .collect();
                    v.iter().sum::<f64>() / v.len() as f64
                };
                let series = vec![(
                    "normalized reward".to_string(),
                    policies.iter().map(|p| mean_norm(p)).collect(),
                )];
                let svg = cbb::svg::bar_chart("policy comparison", &policies, &series, 640, 400);
                std::fs::write(out.out.join("compare.svg"), svg)
                    .map_err(|e| InputError(format!("cannot write svg: {e}")))?;
            }
            println!("wrote {}", out.out.join("compare.csv").display());
        }
        Cmd::Bnb {
            instance,
            budget,
            seed,
            timeout_s,
            theta,
            no_prune,
        } => {
            let inst = load_instance(&instance)?;
            let ctx = OracleCtx::new(&inst, budget, seed);
            let mut cfg = SearchConfig::new(&inst, budget);
            cfg.bnb_timeout = Duration::from_secs(timeout_s);
            cfg.theta = theta;
            cfg.prune = !no_prune;
            let t = std::time::Instant::now();
            let res = bnb(&inst, budget, &ctx, &cfg);
            println!(
                "{}",
                serde_json::json!({
                    "best_allocation": res.best.as_ref().map(|b| b.per_context.clone()),
                    "best_value": res.best_value,
                    "best_std_error": res.best_std_error,
                    "nodes_expanded": res.nodes_expanded,
                    "nodes_pruned": res.nodes_pruned,
                    "exhaustive": res.exhaustive,
                    "wall_clock_s": t.elapsed().as_secs_f64(),
                })
            );
        }
        Cmd::Mitosis {
            instance,
            budget,
            seed,
            rounds,
            ucb_c,
            theta,
            history_out,
        } => {
            let inst = load_instance(&instance)?;
            let ctx = OracleCtx::new(&inst, budget, seed);
            let mut cfg = SearchConfig::new(&inst, budget);
            cfg.mitosis_rounds = rounds;
            cfg.ucb_constant = ucb_c;
            cfg.theta = theta;
            let t = std::time::Instant::now();
            let res = mitosis(&inst, budget, &ctx, &cfg);
            if let Some(path) = history_out {
                let mut csv = String::from("round,allocation\n");
                for (i, p) in res.pull_history.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{}\n",
                        i + 1,
                        p.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
                    ));
                }
                std::fs::write(&path, csv)
                    .map_err(|e| InputError(format!("cannot write {}: {e}", path.display())))?;
            }
            println!(
                "{}",
                serde_json::json!({
                    "best_allocation": res.best.per_context,
                    "best_mean": res.best_mean,
                    "arms": res.arms.len(),
                    "rounds": res.pull_history.len(),
                    "wall_clock_s": t.elapsed().as_secs_f64(),
                })
            );
        }
        Cmd::Heatmap {
            n,
            k,
            abundances,
            budgets,
            seeds,
            rounds,
            out,
        } => {
            if abundances.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(InputError("abundances must be in [0,1]".into()));
            }
            let cells = heatmap(n, k, &abundances, &budgets, &seeds, rounds);
            let csv = heatmap_cells_to_csv(&cells);
            let meta = serde_json::json!({
                "command": "heatmap", "n": n, "k": k, "abundances": abundances,
                "budgets": budgets, "seeds": seeds, "rounds": rounds,
                "version": env!("CARGO_PKG_VERSION"),
            });
            write_outputs(&out.out, "heatmap", &csv, &meta)
                .map_err(|e| InputError(format!("cannot write outputs: {e}")))?;
            if out.svg {
                let rows: Vec<String> = abundances.iter().map(|a| format!("{a}")).collect();
                let cols: Vec<String> = budgets.iter().map(|b| format!("B={b}")).collect();
                let values: Vec<Vec<f64>> = abundances
                    .iter()
                    .map(|&a| {
                        cells
                            .iter()
                            .filter(|c| c.abundance == a)
                            .map(|c| c.ratio)
                            .collect()
                    })
                    .collect();
                let svg = cbb::svg::grid_heatmap(
                    "COIP / Mitosis reward", &rows, &cols, &values, 0.5, 1.0, 640, 480,
                );
                std::fs::write(out.out.join("heatmap.svg"), svg)
                    .map_err(|e| InputError(format!("cannot write svg: {e}")))?;
            }
            println!("wrote {}", out.out.join("heatmap.csv").display());
        }
        Cmd::Frontier {
            instance,
            budget,
            thetas,
            seed,
            rounds,
            timeout_s,
            out,
        } => {
            if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
                return Err(InputError("thetas must be in [0,1]".into()));
            }
            let inst = load_instance(&instance)?;
            let rows = frontier(
                &inst,
                budget,
                &thetas,
                seed,
                rounds,
                Duration::from_secs(timeout_s),
            );
            let csv = frontier_rows_to_csv(&rows);
            let meta = serde_json::json!({
                "command": "frontier", "budget": budget, "thetas": thetas, "seed": seed,
                "rounds": rounds, "timeout_s": timeout_s,
                "version": env!("CARGO_PKG_VERSION"),
            });
            write_outputs(&out.out, "frontier", &csv, &meta)
                .map_err(|e| InputError(format!("cannot write outputs: {e}")))?;
            if out.svg {
                let mut series = Vec::new();
                for policy in ["COIP-fair", "Mitosis", "BnB"] {
                    let pts: Vec<(f64, f64)> = rows
                        .iter()
                        .filter(|r| r.policy == policy && r.reward.is_finite())
                        .map(|r| (r.theta, r.reward))
                        .collect();
                    series.push((policy.to_string(), pts));
                }
                let svg = cbb::svg::line_chart("reward vs theta", &series, 640, 400);
                std::fs::write(out.out.join("frontier.svg"), svg)
                    .map_err(|e| InputError(format!("cannot write svg: {e}")))?;
            }
            println!("wrote {}", out.out.join("frontier.csv").display());
        }
        Cmd::Ablate {
            ns,
            ks,
            budgets,
            abundance,
            seeds,
            epochs,
            timeout_s,
            rounds,
            out,
        } => {
            if seeds.is_empty() {
                return Err(InputError("need at least one seed".into()));
            }
            let cfg = CompareConfig {
                seeds,
                eval_epochs: epochs,
                bnb_timeout: Duration::from_secs(timeout_s),
                mitosis_rounds: rounds,
                ..CompareConfig::default()
            };
            let rows = ablate(&ns, &ks, &budgets, abundance, &cfg);
            let csv = result_rows_to_csv(&rows);
            let meta = serde_json::json!({
                "command": "ablate", "ns": ns, "ks": ks, "budgets": budgets,
                "abundance": abundance, "epochs": epochs,
                "version": env!("CARGO_PKG_VERSION"),
            });
            write_outputs(&out.out, "ablate", &csv, &meta)
                .map_err(|e| InputError(format!("cannot write outputs: {e}")))?;
            println!("wrote {}", out.out.join("ablate.csv").display());
        }
        Cmd::Asymptotic { epsilon, out } => {
            if !(0.0..1.0).contains(&epsilon) || epsilon == 0.0 {
                return Err(InputError("epsilon must be in (0,1)".into()));
            }
            let report = verify_counterexamples(epsilon);
            let fam = gen_fivesix(epsilon);
            let sol = solve_occupancy(&fam.base, fam.budget_fraction)
                .map_err(|e| InputError(format!("LP failed: {e}")))?;
            let beta = sol.fractional_budgets(&fam.base);
            let model = MeanFieldModel::from_base(&fam.base, beta);
            let dist = stationary_distribution(&model, StationaryMode::ExactSupport, 1e-13);
            let mut csv = String::from("x,mass\n");
            for (x, m) in dist.support.iter().zip(&dist.mass) {
                csv.push_str(&format!("{x},{m}\n"));
            }
            let meta = serde_json::json!({
                "command": "asymptotic", "epsilon": epsilon,
                "report": {
                    "fivesix_coip_reward_limit": report.fivesix_coip_reward_limit,
                    "fivesix_optimal_reward_limit": report.fivesix_optimal_reward_limit,
                    "fivesix_ratio_exact": report.fivesix_ratio_exact,
                    "fivesix_ratio_limit": report.fivesix_ratio_limit,
                    "example2_coip_reward": report.example2_coip_reward,
                    "example2_lp_value": report.example2_lp_value,
                    "example2_ratio": report.example2_ratio,
                },
                "version": env!("CARGO_PKG_VERSION"),
            });
            write_outputs(&out.out, "stationary", &csv, &meta)
                .map_err(|e| InputError(format!("cannot write outputs: {e}")))?;
            println!("{}", serde_json::to_string_pretty(&meta["report"]).unwrap());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(cli))) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(_) => {
            eprintln!("error: internal invariant violation");
            ExitCode::from(3)
        }
    }
}
