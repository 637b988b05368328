//! Experiment harness: policy comparisons, sweeps, and file emission.
//!
//! Every command writes one flat CSV in deterministic row order plus a JSON
//! sidecar with the flags and seeds that produced it; reruns with the same
//! flags are byte-identical.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::generators::{gen_blended, BlendedParams, ChurnerParams, OrganicParams};
use crate::lp::occupancy::{
    add_fairness_constraints, build_occupancy_lp, coip_budget, occupancy_index, solve_occupancy,
    OccupancySolution,
};
use crate::lp::simplex::{solve_lp, LpStatus};
use crate::model::{BudgetAllocation, CbbInstance};
use crate::search::{bnb, mitosis, SearchConfig};
use crate::sim::{run_epoch, OracleCtx, Policy, SimConfig};
use crate::whittle::compute_whittle_table;

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub budget: u32,
    pub seeds: Vec<u64>,
    pub eval_epochs: usize,
    pub horizon: usize,
    pub burn_in: usize,
    pub bnb_timeout: Duration,
    pub mitosis_rounds: usize,
    pub ucb_c: f64,
    /// Skip BnB/Mitosis for quick baseline-only tables.
    pub include_search: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            budget: 5,
            seeds: (0..32).collect(),
            eval_epochs: 100,
            horizon: 2000,
            burn_in: 200,
            bnb_timeout: Duration::from_secs(600),
            mitosis_rounds: 2000,
            ucb_c: 2.0,
            include_search: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ResultRow {
    /// Sweep coordinates, e.g. [("n", "50"), ("abundance", "0.5")].
    pub labels: Vec<(String, String)>,
    pub policy: String,
    pub seed: u64,
    pub mean_reward: f64,
    pub std_error: f64,
    pub normalized: f64,
    pub fairness: f64,
    pub wall_clock_s: f64,
    pub note: String,
}

/// Mean epoch reward of a policy over eval_epochs independent epochs.
fn eval_policy(
    inst: &CbbInstance,
    policy: &Policy,
    cfg: &CompareConfig,
    seed: u64,
) -> (f64, f64, f64) {
    let sim = SimConfig {
        horizon: cfg.horizon,
        burn_in: cfg.burn_in,
        epochs: 1,
        initial_state_mode: crate::sim::InitialStateMode::AllActive,
    };
    let mut means = Vec::with_capacity(cfg.eval_epochs);
    let mut pooled = vec![0.0; inst.num_contexts];
    for e in 0..cfg.eval_epochs {
        let out = run_epoch(inst, policy, &sim, seed.wrapping_mul(7919).wrapping_add(e as u64))
            .expect("policy violated its quota");
        for (p, r) in pooled.iter_mut().zip(&out.per_context_reward) {
            *p += r;
        }
        means.push(out.avg_reward);
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    let se = if means.len() > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    let total: f64 = pooled.iter().sum();
    let (fairness, _) = crate::sim::fairness_of(&pooled, &inst.context_probs, total);
    (mean, se, fairness)
}

/// Searched allocations plus their search wall-clocks, computed once per
/// instance; the per-seed rows then just evaluate the found allocations.
pub struct SearchedAllocs {
    pub bnb_alloc: Option<BudgetAllocation>,
    pub bnb_secs: f64,
    pub bnb_exhaustive: bool,
    pub mitosis_alloc: BudgetAllocation,
    pub mitosis_secs: f64,
}

pub fn run_searches(inst: &CbbInstance, cfg: &CompareConfig, seed: u64) -> SearchedAllocs {
    let ctx = OracleCtx::new(inst, cfg.budget, seed);
    let mut scfg = SearchConfig::new(inst, cfg.budget);
    scfg.bnb_timeout = cfg.bnb_timeout;
    scfg.mitosis_rounds = cfg.mitosis_rounds;
    scfg.ucb_constant = cfg.ucb_c;
    let t0 = Instant::now();
    let mres = mitosis(inst, cfg.budget, &ctx, &scfg);
    let mitosis_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let bres = bnb(inst, cfg.budget, &ctx, &scfg);
    let bnb_secs = t1.elapsed().as_secs_f64();
    SearchedAllocs {
        bnb_alloc: bres.best,
        bnb_secs,
        bnb_exhaustive: bres.exhaustive,
        mitosis_alloc: mres.best,
        mitosis_secs,
    }
}

/// Figure-style comparison table on one instance: baselines per seed, with
/// search allocations found once and evaluated across seeds.
pub fn compare(
    inst: &CbbInstance,
    cfg: &CompareConfig,
    labels: &[(String, String)],
) -> Vec<ResultRow> {
    let table = compute_whittle_table(inst, crate::whittle::DEFAULT_GAMMA, 1e-6);
    let sol = solve_occupancy(inst, cfg.budget as f64).expect("relaxed LP failed");
    let rho = occupancy_index(&sol, inst);
    let coip_alloc = coip_budget(&sol, inst, cfg.budget);
    let searched = if cfg.include_search {
        Some(run_searches(inst, cfg, cfg.seeds.first().copied().unwrap_or(0)))
    } else {
        None
    };

    let mut named: Vec<(String, Policy, f64, String)> = vec![
        ("Random".into(), Policy::Random { quota: cfg.budget }, 0.0, String::new()),
        ("Greedy".into(), Policy::Greedy { quota: cfg.budget }, 0.0, String::new()),
        (
            "VanillaWhittle".into(),
            Policy::VanillaWhittle { quota: cfg.budget, table },
            0.0,
            String::new(),
        ),
        (
            "COIP".into(),
            Policy::FlexOccupancy { alloc: coip_alloc, rho: rho.clone() },
            0.0,
            String::new(),
        ),
    ];
    if let Some(s) = &searched {
        if let Some(alloc) = &s.bnb_alloc {
            let note = if s.bnb_exhaustive { String::new() } else { "timeout".into() };
            named.push((
                "BnB".into(),
                Policy::FlexOccupancy { alloc: alloc.clone(), rho: rho.clone() },
                s.bnb_secs,
                note,
            ));
        }
        named.push((
            "Mitosis".into(),
            Policy::FlexOccupancy { alloc: s.mitosis_alloc.clone(), rho },
            s.mitosis_secs,
            String::new(),
        ));
    }

    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let mut random_mean = None;
        for (name, policy, search_secs, note) in &named {
            let t = Instant::now();
            let (mean, se, fairness) = eval_policy(inst, policy, cfg, seed);
            let wall = t.elapsed().as_secs_f64() + search_secs;
            if name == "Random" {
                random_mean = Some(mean);
            }
            let base = random_mean.expect("Random row must come first");
            let normalized = if base.abs() > 1e-12 { mean / base } else { f64::NAN };
            rows.push(ResultRow {
                labels: labels.to_vec(),
                policy: name.clone(),
                seed,
                mean_reward: mean,
                std_error: se,
                normalized,
                fairness,
                wall_clock_s: wall,
                note: note.clone(),
            });
        }
    }
    rows
}

/// COIP on the fairness-constrained LP. None when the LP is infeasible at
/// this theta.
pub fn coip_fair(
    inst: &CbbInstance,
    budget: u32,
    theta: f64,
) -> Option<(BudgetAllocation, OccupancySolution)> {
    let (mut lp, map) = build_occupancy_lp(inst, budget as f64);
    add_fairness_constraints(&mut lp, inst, map, theta);
    let sol = solve_lp(&lp).ok()?;
    if sol.status != LpStatus::Optimal {
        return None;
    }
    let occ = OccupancySolution {
        map,
        mu: sol.x,
        objective_value: sol.objective,
        status: sol.status,
    };
    let alloc = coip_budget(&occ, inst, budget);
    Some((alloc, occ))
}

#[derive(Debug, Clone)]
pub struct FrontierRow {
    pub theta: f64,
    pub policy: String,
    pub reward: f64,
    pub fairness: f64,
    pub feasible: bool,
}

/// Reward/fairness trade-off per theta for the fairness-aware searchers
/// and fair-LP COIP. Achieved numbers come from the accurate oracle on the
/// returned allocation.
pub fn frontier(
    inst: &CbbInstance,
    budget: u32,
    thetas: &[f64],
    seed: u64,
    mitosis_rounds: usize,
    bnb_timeout: Duration,
) -> Vec<FrontierRow> {
    let ctx = OracleCtx::new(inst, budget, seed);
    let eval_cfg = SimConfig::accurate();
    let mut rows = Vec::new();
    for &theta in thetas {
        let mut scfg = SearchConfig::new(inst, budget);
        scfg.theta = Some(theta);
        scfg.mitosis_rounds = mitosis_rounds;
        scfg.bnb_timeout = bnb_timeout;
        let mut push = |policy: &str, alloc: Option<BudgetAllocation>| {
            let row = match alloc {
                Some(alloc) => {
                    let est = ctx.oracle(&alloc, &eval_cfg);
                    FrontierRow {
                        theta,
                        policy: policy.into(),
                        reward: est.mean,
                        fairness: est.fairness,
                        feasible: est.fairness >= theta,
                    }
                }
                None => FrontierRow {
                    theta,
                    policy: policy.into(),
                    reward: f64::NAN,
                    fairness: f64::NAN,
                    feasible: false,
                },
            };
            rows.push(row);
        };
        push("COIP-fair", coip_fair(inst, budget, theta).map(|(a, _)| a));
        push("Mitosis", Some(mitosis(inst, budget, &ctx, &scfg).best));
        push("BnB", bnb(inst, budget, &ctx, &scfg).best);
    }
    rows
}

#[derive(Debug, Clone)]
pub struct HeatmapCell {
    pub abundance: f64,
    pub budget: u32,
    pub coip_reward: f64,
    pub mitosis_reward: f64,
    pub ratio: f64,
}

/// COIP-to-Mitosis reward ratio across the abundance and budget grids on
/// blended instances.
pub fn heatmap(
    num_arms: usize,
    num_contexts: usize,
    abundances: &[f64],
    budgets: &[u32],
    seeds: &[u64],
    mitosis_rounds: usize,
) -> Vec<HeatmapCell> {
    let mut cells = Vec::new();
    for &abundance in abundances {
        for &budget in budgets {
            let mut coip_sum = 0.0;
            let mut mit_sum = 0.0;
            for &seed in seeds {
                let params = BlendedParams {
                    abundance,
                    organic: OrganicParams::default(),
                    churner: ChurnerParams::default_for(num_contexts),
                };
                let inst = gen_blended(num_arms, num_contexts, seed, &params);
                let ctx = OracleCtx::new(&inst, budget, seed);
                let sol = solve_occupancy(&inst, budget as f64).expect("relaxed LP failed");
                let coip_alloc = coip_budget(&sol, &inst, budget);
                let eval = SimConfig::accurate();
                coip_sum += ctx.oracle(&coip_alloc, &eval).mean;
                let mut scfg = SearchConfig::new(&inst, budget);
                scfg.mitosis_rounds = mitosis_rounds;
                let best = mitosis(&inst, budget, &ctx, &scfg).best;
                mit_sum += ctx.oracle(&best, &eval).mean;
            }
            let n = seeds.len() as f64;
            let (coip_reward, mitosis_reward) = (coip_sum / n, mit_sum / n);
            cells.push(HeatmapCell {
                abundance,
                budget,
                coip_reward,
                mitosis_reward,
                ratio: coip_reward / mitosis_reward.max(1e-12),
            });
        }
    }
    cells
}

/// Sweep over instance-size grids, emitting the same row schema as
/// `compare`.
pub fn ablate(
    ns: &[usize],
    ks: &[usize],
    budgets: &[u32],
    abundance: f64,
    cfg: &CompareConfig,
) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for &n in ns {
        for &k in ks {
            for &b in budgets {
                let params = BlendedParams {
                    abundance,
                    organic: OrganicParams::default(),
                    churner: ChurnerParams::default_for(k),
                };
                let inst = gen_blended(n, k, cfg.seeds.first().copied().unwrap_or(0), &params);
                let labels = vec![
                    ("n".to_string(), n.to_string()),
                    ("k".to_string(), k.to_string()),
                    ("b".to_string(), b.to_string()),
                ];
                let cell_cfg = CompareConfig { budget: b, ..cfg.clone() };
                rows.extend(compare(&inst, &cell_cfg, &labels));
            }
        }
    }
    rows
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.6}")
    }
}

pub fn result_rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let label_names: Vec<&str> = rows
        .first()
        .map(|r| r.labels.iter().map(|(k, _)| k.as_str()).collect())
        .unwrap_or_default();
    for name in &label_names {
        out.push_str(name);
        out.push(',');
    }
    out.push_str("policy,seed,mean_reward,std_error,normalized,fairness,wall_clock_s,note\n");
    for r in rows {
        for (_, v) in &r.labels {
            out.push_str(v);
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.policy,
            r.seed,
            fmt(r.mean_reward),
            fmt(r.std_error),
            fmt(r.normalized),
            fmt(r.fairness),
            fmt(r.wall_clock_s),
            r.note
        ));
    }
    out
}

pub fn frontier_rows_to_csv(rows: &[FrontierRow]) -> String {
    let mut out = String::from("theta,policy,reward,fairness,feasible\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(r.theta),
            r.policy,
            fmt(r.reward),
            fmt(r.fairness),
            r.feasible
        ));
    }
    out
}

pub fn heatmap_cells_to_csv(cells: &[HeatmapCell]) -> String {
    let mut out = String::from("abundance,budget,coip_reward,mitosis_reward,ratio\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt(c.abundance),
            c.budget,
            fmt(c.coip_reward),
            fmt(c.mitosis_reward),
            fmt(c.ratio)
        ));
    }
    out
}

/// Write a CSV plus a JSON sidecar holding everything nondeterministic or
/// environment-specific, so the CSV itself stays byte-reproducible.
pub fn write_outputs(
    out_dir: &Path,
    stem: &str,
    csv: &str,
    metadata: &serde_json::Value,
) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(format!("{stem}.csv")), csv)?;
    let sidecar = serde_json::to_string_pretty(metadata)?;
    fs::write(out_dir.join(format!("{stem}.meta.json")), sidecar)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_random, gen_theorem1};

    fn quick_cfg(budget: u32) -> CompareConfig {
        CompareConfig {
            budget,
            seeds: vec![0, 1],
            eval_epochs: 6,
            horizon: 600,
            burn_in: 100,
            bnb_timeout: Duration::from_secs(30),
            mitosis_rounds: 60,
            ucb_c: 2.0,
            include_search: false,
        }
    }

    #[test]
    fn compare_normalizes_against_random() {
        let inst = gen_random(5, 2, 31);
        let rows = compare(&inst, &quick_cfg(2), &[]);
        for r in rows.iter().filter(|r| r.policy == "Random") {
            assert!((r.normalized - 1.0).abs() < 1e-12 || r.normalized.is_nan());
        }
        assert_eq!(rows.len(), 2 * 4);
    }

    #[test]
    fn compare_rows_are_reproducible() {
        let inst = gen_random(4, 2, 55);
        let a = compare(&inst, &quick_cfg(2), &[]);
        let b = compare(&inst, &quick_cfg(2), &[]);
        let csv_a = result_rows_to_csv(&a);
        let csv_b = result_rows_to_csv(&b);
        // Wall clock differs between runs; compare everything else.
        let strip = |s: &str| {
            s.lines()
                .map(|l| {
                    let cols: Vec<&str> = l.split(',').collect();
                    cols[..cols.len().saturating_sub(2)].join(",")
                })
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&csv_a), strip(&csv_b));
    }

    #[test]
    fn theorem1_separation_in_compare() {
        let (inst, budget) = gen_theorem1(20);
        let mut cfg = quick_cfg(budget);
        cfg.include_search = true;
        cfg.eval_epochs = 8;
        cfg.horizon = 2000;
        cfg.burn_in = 200;
        cfg.mitosis_rounds = 150;
        let rows = compare(&inst, &cfg, &[]);
        let mean_of = |name: &str| {
            let sel: Vec<f64> = rows
                .iter()
                .filter(|r| r.policy == name)
                .map(|r| r.mean_reward)
                .collect();
            sel.iter().sum::<f64>() / sel.len() as f64
        };
        assert!(mean_of("Mitosis") > 3.0 * mean_of("VanillaWhittle"));
        assert!(mean_of("COIP") > 3.0 * mean_of("VanillaWhittle"));
    }

    #[test]
    fn coip_fair_theta_zero_matches_plain() {
        let inst = gen_random(4, 2, 70);
        let sol = solve_occupancy(&inst, 2.0).unwrap();
        let plain = coip_budget(&sol, &inst, 2);
        let (fair, occ) = coip_fair(&inst, 2, 0.0).unwrap();
        assert!((occ.objective_value - sol.objective_value).abs() < 1e-7);
        assert_eq!(plain.total_budget, fair.total_budget);
    }

    #[test]
    fn frontier_rows_shape() {
        let inst = gen_random(4, 2, 81);
        let rows = frontier(&inst, 2, &[0.0, 0.5], 3, 40, Duration::from_secs(20));
        assert_eq!(rows.len(), 6);
        for r in &rows {
            if r.feasible {
                assert!(r.fairness >= r.theta - 1e-9);
            }
        }
    }

    #[test]
    fn heatmap_cells_cover_grid() {
        let cells = heatmap(6, 2, &[0.0, 1.0], &[1], &[0], 30);
        assert_eq!(cells.len(), 2);
        for c in &cells {
            assert!(c.ratio.is_finite());
        }
    }

    #[test]
    fn csv_and_sidecar_written() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![ResultRow {
            labels: vec![("n".into(), "5".into())],
            policy: "Random".into(),
            seed: 0,
            mean_reward: 1.0,
            std_error: 0.1,
            normalized: 1.0,
            fairness: 0.5,
            wall_clock_s: 0.2,
            note: String::new(),
        }];
        let csv = result_rows_to_csv(&rows);
        assert!(csv.starts_with("n,policy,seed"));
        write_outputs(dir.path(), "compare", &csv, &serde_json::json!({"seeds": [0]})).unwrap();
        assert!(dir.path().join("compare.csv").exists());
        assert!(dir.path().join("compare.meta.json").exists());
    }
}
