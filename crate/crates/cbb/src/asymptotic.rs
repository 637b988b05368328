//! Mean-field analysis of replica-scaled instances: deterministic dynamics
//! of the active-arm fraction, stationary distributions of that fraction
//! under random contexts, and the asymptotic per-arm reward of a budget
//! fraction vector.

use crate::generators::{gen_appendix_a_example2, gen_fivesix, ScaledFamily};
use crate::lp::occupancy::solve_occupancy;
use crate::model::CbbInstance;

pub const DEFAULT_GRID: f64 = 1e-4;
pub const EXACT_MERGE_TOL: f64 = 1e-12;
pub const MAX_EXACT_SUPPORT: usize = 100_000;

/// Single-arm-type mean-field model: one active fraction x evolving under
/// the shared context draw, with pull fraction capped by beta_k.
#[derive(Debug, Clone)]
pub struct MeanFieldModel {
    pub f: Vec<f64>,
    /// P(active' | active, pulled) per context.
    pub stay_pulled: Vec<f64>,
    /// P(active' | active, idle) per context.
    pub stay_idle: Vec<f64>,
    /// P(active' | inactive) per context.
    pub recover: Vec<f64>,
    /// Budget fraction B_k / rho per context.
    pub beta: Vec<f64>,
    /// Reward for pulling an active arm, per context.
    pub reward: Vec<f64>,
}

impl MeanFieldModel {
    /// Lift a one-arm base instance to its replica limit.
    pub fn from_base(base: &CbbInstance, beta: Vec<f64>) -> Self {
        assert_eq!(base.num_arms, 1, "mean field is per arm type");
        assert_eq!(beta.len(), base.num_contexts);
        assert!(beta.iter().all(|&b| b >= 0.0));
        let k_range = 0..base.num_contexts;
        MeanFieldModel {
            f: base.context_probs.clone(),
            stay_pulled: k_range.clone().map(|k| base.p_next_active(0, k, 1, 1)).collect(),
            stay_idle: k_range.clone().map(|k| base.p_next_active(0, k, 1, 0)).collect(),
            recover: k_range.clone().map(|k| base.p_next_active(0, k, 0, 0)).collect(),
            beta,
            reward: k_range.map(|k| base.reward_at(0, k, 1, 1)).collect(),
        }
    }
}

/// One deterministic step of the active fraction at context k. Pulled mass
/// is capped by the budget fraction; the overflow idles.
pub fn mean_field_next(x: f64, k: usize, model: &MeanFieldModel) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x));
    let pulled = x.min(model.beta[k]);
    let idle = (x - model.beta[k]).max(0.0);
    let y = pulled * model.stay_pulled[k] + idle * model.stay_idle[k]
        + (1.0 - x) * model.recover[k];
    y.clamp(0.0, 1.0)
}

/// Distribution of the active fraction on a finite support.
#[derive(Debug, Clone)]
pub struct DiscreteDistribution {
    pub support: Vec<f64>,
    pub mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn point(x: f64) -> Self {
        DiscreteDistribution {
            support: vec![x],
            mass: vec![1.0],
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mass_at(&self, x: f64, tol: f64) -> f64 {
        self.support
            .iter()
            .zip(&self.mass)
            .filter(|(&s, _)| (s - x).abs() <= tol)
            .map(|(_, &m)| m)
            .sum()
    }
}

/// Total variation between two finitely supported distributions, matching
/// support points within EXACT_MERGE_TOL.
fn tv_distance(a: &DiscreteDistribution, b: &DiscreteDistribution) -> f64 {
    let mut points: Vec<f64> = a.support.iter().chain(&b.support).copied().collect();
    points.sort_by(f64::total_cmp);
    points.dedup_by(|x, y| (*x - *y).abs() <= EXACT_MERGE_TOL);
    0.5 * points
        .iter()
        .map(|&x| (a.mass_at(x, EXACT_MERGE_TOL) - b.mass_at(x, EXACT_MERGE_TOL)).abs())
        .sum::<f64>()
}

fn push_forward_exact(dist: &DiscreteDistribution, model: &MeanFieldModel) -> DiscreteDistribution {
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(dist.support.len() * model.f.len());
    for (&x, &m) in dist.support.iter().zip(&dist.mass) {
        for k in 0..model.f.len() {
            pairs.push((mean_field_next(x, k, model), m * model.f[k]));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut support = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    for (x, m) in pairs {
        match support.last() {
            Some(&last) if (x - last) <= EXACT_MERGE_TOL => *mass.last_mut().unwrap() += m,
            _ => {
                support.push(x);
                mass.push(m);
            }
        }
    }
    DiscreteDistribution { support, mass }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationaryMode {
    ExactSupport,
    Grid,
}

/// Fixed point of the push-forward operator, starting from a point mass at
/// x = 1. ExactSupport tracks the reachable support directly and falls
/// back to the grid when it explodes; Grid discretizes [0,1] at spacing
/// DEFAULT_GRID with nearest-cell mass deposition.
pub fn stationary_distribution(
    model: &MeanFieldModel,
    mode: StationaryMode,
    tol: f64,
) -> DiscreteDistribution {
    match mode {
        StationaryMode::ExactSupport => {
            let mut dist = DiscreteDistribution::point(1.0);
            for _ in 0..100_000 {
                let next = push_forward_exact(&dist, model);
                if next.support.len() > MAX_EXACT_SUPPORT {
                    return stationary_distribution(model, StationaryMode::Grid, tol);
                }
                let delta = tv_distance(&dist, &next);
                dist = next;
                if delta <= tol {
                    return dist;
                }
            }
            dist
        }
        StationaryMode::Grid => stationary_grid(model, DEFAULT_GRID, 1e-10),
    }
}

fn stationary_grid(model: &MeanFieldModel, g: f64, tol: f64) -> DiscreteDistribution {
    let cells = (1.0 / g).round() as usize + 1;
    let kk = model.f.len();
    // target[k][i] = nearest cell of the image of cell i under context k.
    let mut target = vec![vec![0usize; cells]; kk];
    for k in 0..kk {
        for i in 0..cells {
            let y = mean_field_next((i as f64 * g).min(1.0), k, model);
            target[k][i] = ((y / g).round() as usize).min(cells - 1);
        }
    }
    let mut mass = vec![0.0; cells];
    mass[cells - 1] = 1.0;
    for _ in 0..1_000_000 {
        let mut next = vec![0.0; cells];
        for k in 0..kk {
            let fk = model.f[k];
            for i in 0..cells {
                if mass[i] > 0.0 {
                    next[target[k][i]] += fk * mass[i];
                }
            }
        }
        let delta: f64 = mass.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        mass = next;
        if 0.5 * delta <= tol {
            break;
        }
    }
    let (support, mass): (Vec<f64>, Vec<f64>) = (0..cells)
        .filter(|&i| mass[i] > 0.0)
        .map(|i| (i as f64 * g, mass[i]))
        .unzip();
    DiscreteDistribution { support, mass }
}

/// Asymptotic per-arm reward rate of the budget fractions in `model` under
/// a stationary active-fraction distribution.
pub fn asymptotic_reward(dist: &DiscreteDistribution, model: &MeanFieldModel) -> f64 {
    (0..model.f.len())
        .map(|k| {
            let pulled: f64 = dist
                .support
                .iter()
                .zip(&dist.mass)
                .map(|(&x, &m)| model.beta[k].min(x) * m)
                .sum();
            model.f[k] * model.reward[k] * pulled
        })
        .sum()
}

/// End-to-end verification of the two adversarial replica families: LP,
/// rounded budget fractions, stationary distributions, rewards, ratios.
#[derive(Debug, Clone)]
pub struct CounterexampleReport {
    /// (support, mass) of the first family's stationary distribution under
    /// the LP-induced budget fractions.
    pub fivesix_stationary: Vec<(f64, f64)>,
    pub fivesix_coip_reward_exact: f64,
    pub fivesix_coip_reward_limit: f64,
    pub fivesix_optimal_reward_exact: f64,
    pub fivesix_optimal_reward_limit: f64,
    pub fivesix_ratio_exact: f64,
    pub fivesix_ratio_limit: f64,
    pub example2_lp_value: f64,
    pub example2_coip_reward: f64,
    pub example2_ratio: f64,
}

fn lp_budget_fractions(fam: &ScaledFamily) -> Vec<f64> {
    let sol = solve_occupancy(&fam.base, fam.budget_fraction).expect("base LP failed");
    sol.fractional_budgets(&fam.base)
}

pub fn verify_counterexamples(epsilon: f64) -> CounterexampleReport {
    // First family: LP prefers the trap context; mean field has a finite
    // reachable support, so the stationary distribution is exact.
    let fam = gen_fivesix(epsilon);
    let beta = lp_budget_fractions(&fam);
    let mut coip = MeanFieldModel::from_base(&fam.base, beta.clone());
    let dist = stationary_distribution(&coip, StationaryMode::ExactSupport, 1e-13);
    let coip_exact = asymptotic_reward(&dist, &coip);
    let limit_rewards = vec![1.0; coip.reward.len()];
    let exact_rewards = coip.reward.clone();
    coip.reward = limit_rewards.clone();
    let coip_limit = asymptotic_reward(&dist, &coip);
    coip.reward = exact_rewards;

    // Best fixed fractions use the whole budget at the benign context.
    let opt_beta: Vec<f64> = vec![fam.budget_fraction / fam.base.context_probs[0], 0.0];
    let mut opt = MeanFieldModel::from_base(&fam.base, opt_beta);
    let opt_dist = stationary_distribution(&opt, StationaryMode::ExactSupport, 1e-13);
    let opt_exact = asymptotic_reward(&opt_dist, &opt);
    opt.reward = limit_rewards;
    let opt_limit = asymptotic_reward(&opt_dist, &opt);

    // Second family: infinite reachable support, gridded stationary
    // distribution, compared against the LP optimum.
    let fam2 = gen_appendix_a_example2(epsilon);
    let sol2 = solve_occupancy(&fam2.base, fam2.budget_fraction).expect("base LP failed");
    let beta2 = sol2.fractional_budgets(&fam2.base);
    let model2 = MeanFieldModel::from_base(&fam2.base, beta2);
    let dist2 = stationary_distribution(&model2, StationaryMode::Grid, 1e-10);
    let coip2 = asymptotic_reward(&dist2, &model2);

    CounterexampleReport {
        fivesix_stationary: dist.support.iter().copied().zip(dist.mass.iter().copied()).collect(),
        fivesix_coip_reward_exact: coip_exact,
        fivesix_coip_reward_limit: coip_limit,
        fivesix_optimal_reward_exact: opt_exact,
        fivesix_optimal_reward_limit: opt_limit,
        fivesix_ratio_exact: coip_exact / opt_exact,
        fivesix_ratio_limit: coip_limit / opt_limit,
        example2_lp_value: sol2.objective_value,
        example2_coip_reward: coip2,
        example2_ratio: coip2 / sol2.objective_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fivesix_model(eps: f64, beta: Vec<f64>) -> MeanFieldModel {
        MeanFieldModel::from_base(&gen_fivesix(eps).base, beta)
    }

    #[test]
    fn next_maps_into_unit_interval() {
        let model = fivesix_model(0.01, vec![0.0, 2.0 / 3.0]);
        for k in 0..2 {
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                let y = mean_field_next(x, k, &model);
                assert!((0.0..=1.0).contains(&y), "k={k} x={x} y={y}");
            }
        }
    }

    #[test]
    fn fivesix_context_maps() {
        let model = fivesix_model(0.01, vec![0.0, 2.0 / 3.0]);
        // Benign context resets everything to active.
        for x in [0.0, 0.3, 1.0] {
            assert!((mean_field_next(x, 0, &model) - 1.0).abs() < 1e-12);
        }
        // Trap context: pulled arms die, the overflow and inactives live.
        for x in [0.0f64, 0.5, 0.8, 1.0] {
            let expect = (x - 2.0 / 3.0).max(0.0) + 1.0 - x;
            assert!((mean_field_next(x, 1, &model) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_dynamics_identity() {
        let model = MeanFieldModel {
            f: vec![1.0],
            stay_pulled: vec![0.0],
            stay_idle: vec![1.0],
            recover: vec![0.0],
            beta: vec![0.0],
            reward: vec![1.0],
        };
        for x in [0.0, 0.25, 0.9] {
            assert_eq!(mean_field_next(x, 0, &model), x);
        }
    }

    #[test]
    fn fivesix_stationary_masses() {
        let model = fivesix_model(0.01, vec![0.0, 2.0 / 3.0]);
        let dist = stationary_distribution(&model, StationaryMode::ExactSupport, 1e-13);
        assert!((dist.total_mass() - 1.0).abs() < 1e-10);
        assert!((dist.mass_at(1.0 / 3.0, 1e-9) - 1.0 / 3.0).abs() < 1e-6);
        assert!((dist.mass_at(2.0 / 3.0, 1e-9) - 1.0 / 6.0).abs() < 1e-6);
        assert!((dist.mass_at(1.0, 1e-9) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn stationary_is_fixed_point() {
        let model = fivesix_model(0.01, vec![0.0, 2.0 / 3.0]);
        let tol = 1e-13;
        let dist = stationary_distribution(&model, StationaryMode::ExactSupport, tol);
        let next = push_forward_exact(&dist, &model);
        assert!(tv_distance(&dist, &next) <= 2.0 * tol);
    }

    #[test]
    fn deterministic_reset_gives_point_mass() {
        let model = MeanFieldModel {
            f: vec![1.0],
            stay_pulled: vec![1.0],
            stay_idle: vec![1.0],
            recover: vec![1.0],
            beta: vec![0.5],
            reward: vec![1.0],
        };
        let dist = stationary_distribution(&model, StationaryMode::ExactSupport, 1e-13);
        assert_eq!(dist.support.len(), 1);
        assert!((dist.support[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_beta_zero_reward() {
        let model = fivesix_model(0.01, vec![0.0, 0.0]);
        let dist = stationary_distribution(&model, StationaryMode::ExactSupport, 1e-13);
        assert_eq!(asymptotic_reward(&dist, &model), 0.0);
    }

    #[test]
    fn counterexample_report_values() {
        let report = verify_counterexamples(0.01);
        assert!((report.fivesix_coip_reward_limit - 5.0 / 18.0).abs() < 0.002);
        assert!((report.fivesix_optimal_reward_limit - 1.0 / 3.0).abs() < 0.002);
        assert!((report.fivesix_ratio_limit - 5.0 / 6.0).abs() < 0.01);
        assert!(
            (report.example2_coip_reward - 0.214 * 1.01).abs() < 0.005,
            "{}",
            report.example2_coip_reward
        );
        assert!((report.example2_ratio - 0.856).abs() < 0.01, "{}", report.example2_ratio);
    }

    #[test]
    fn example2_mass_below_half() {
        let fam = gen_appendix_a_example2(0.01);
        let model = MeanFieldModel::from_base(&fam.base, vec![0.0, 0.5]);
        let dist = stationary_distribution(&model, StationaryMode::Grid, 1e-10);
        let low_mass: f64 = dist
            .support
            .iter()
            .zip(&dist.mass)
            .filter(|(&x, _)| x < 0.5)
            .map(|(_, &m)| m)
            .sum();
        assert!(low_mass > 0.1, "{low_mass}");
        assert!((dist.total_mass() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn replica_simulation_approaches_mean_field() {
        // Finite systems drift toward the deterministic limit as the
        // replica count grows.
        let eps = 0.01;
        let fam = gen_fivesix(eps);
        let expect = 5.0 / 18.0 * (1.0 + eps);
        let base_sol = solve_occupancy(&fam.base, fam.budget_fraction).unwrap();
        let base_rho = crate::lp::occupancy::occupancy_index(&base_sol, &fam.base);
        let mut errs = Vec::new();
        for rho in [50usize, 500] {
            let inst = fam.base.replicate(rho);
            let b2 = (2 * rho) / 3;
            let alloc = crate::model::BudgetAllocation::new(
                vec![0, b2 as u32],
                (fam.budget_fraction * rho as f64).ceil() as u32,
            );
            let ctx = crate::sim::OracleCtx::with_index(&inst, base_rho.replicate(rho), 5);
            let cfg = crate::sim::SimConfig {
                horizon: 4000,
                burn_in: 400,
                epochs: 4,
                initial_state_mode: crate::sim::InitialStateMode::AllActive,
            };
            let est = ctx.oracle(&alloc, &cfg);
            errs.push((est.mean / rho as f64 - expect).abs());
        }
        assert!(
            errs[1] < errs[0] + 0.02,
            "per-arm error did not shrink: {errs:?}"
        );
    }
}
