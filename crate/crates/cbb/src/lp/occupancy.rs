//! The occupancy-measure LP and its variants.
//!
//! Variables are the long-run visitation masses `mu_i(s, a; k)`. The base
//! program carries flow balance, per-arm normalization, a relaxed total
//! budget row, and nonnegativity. Variants pin per-context budgets to exact
//! values, bound them to an integer box, or add proportional-fairness rows.

use crate::lp::simplex::{solve_lp, LinearProgram, LpError, LpStatus, Relation};
use crate::model::CbbInstance;

/// Index map for the `mu_i(s, a; k)` variables of one instance.
#[derive(Debug, Clone, Copy)]
pub struct VarMap {
    pub num_arms: usize,
    pub num_contexts: usize,
}

impl VarMap {
    pub fn for_instance(inst: &CbbInstance) -> Self {
        VarMap {
            num_arms: inst.num_arms,
            num_contexts: inst.num_contexts,
        }
    }

    #[inline]
    pub fn idx(&self, arm: usize, ctx: usize, state: usize, action: usize) -> usize {
        ((arm * self.num_contexts + ctx) * 2 + state) * 2 + action
    }

    pub fn num_vars(&self) -> usize {
        self.num_arms * self.num_contexts * 4
    }
}

/// Solved occupancy masses with the LP status and objective.
#[derive(Debug, Clone)]
pub struct OccupancySolution {
    pub map: VarMap,
    pub mu: Vec<f64>,
    pub objective_value: f64,
    pub status: LpStatus,
}

impl OccupancySolution {
    #[inline]
    pub fn mu_at(&self, arm: usize, ctx: usize, state: usize, action: usize) -> f64 {
        self.mu[self.map.idx(arm, ctx, state, action)]
    }

    /// Average per-context pull budget `(1/f_k) * sum_{i,s} mu_i(s, 1; k)`.
    pub fn fractional_budgets(&self, inst: &CbbInstance) -> Vec<f64> {
        (0..inst.num_contexts)
            .map(|k| {
                let mass: f64 = (0..inst.num_arms)
                    .map(|i| self.mu_at(i, k, 0, 1) + self.mu_at(i, k, 1, 1))
                    .sum();
                mass / inst.context_probs[k]
            })
            .collect()
    }

    /// Largest violation of nonnegativity, per-arm normalization, and flow
    /// balance. Zero-ish for a genuine optimum.
    pub fn residual(&self, inst: &CbbInstance) -> f64 {
        let mut worst = 0.0_f64;
        for &v in &self.mu {
            worst = worst.max(-v);
        }
        for i in 0..inst.num_arms {
            let mut total = 0.0;
            for k in 0..inst.num_contexts {
                for s in 0..2 {
                    for a in 0..2 {
                        total += self.mu_at(i, k, s, a);
                    }
                }
            }
            worst = worst.max((total - 1.0).abs());
            for kp in 0..inst.num_contexts {
                for sp in 0..2 {
                    let mut inflow = 0.0;
                    for k in 0..inst.num_contexts {
                        for s in 0..2 {
                            for a in 0..2 {
                                let p1 = inst.p_next_active(i, k, s, a);
                                let p = if sp == 1 { p1 } else { 1.0 - p1 };
                                inflow += p * self.mu_at(i, k, s, a);
                            }
                        }
                    }
                    let outflow = self.mu_at(i, kp, sp, 0) + self.mu_at(i, kp, sp, 1);
                    worst = worst.max((inst.context_probs[kp] * inflow - outflow).abs());
                }
            }
        }
        worst
    }
}

/// Build the base occupancy-measure LP at total budget `budget` (fractional
/// budgets arise for base instances meant to be scaled).
pub fn build_occupancy_lp(inst: &CbbInstance, budget: f64) -> (LinearProgram, VarMap) {
    let map = VarMap::for_instance(inst);
    let nv = map.num_vars();
    let mut objective = vec![0.0; nv];
    for i in 0..inst.num_arms {
        for k in 0..inst.num_contexts {
            for s in 0..2 {
                for a in 0..2 {
                    objective[map.idx(i, k, s, a)] = inst.reward_at(i, k, s, a);
                }
            }
        }
    }
    let mut lp = LinearProgram::new(objective);

    // Flow balance per (arm, next context, next state).
    for i in 0..inst.num_arms {
        for kp in 0..inst.num_contexts {
            let f_kp = inst.context_probs[kp];
            for sp in 0..2 {
                let mut row = vec![0.0; nv];
                for k in 0..inst.num_contexts {
                    for s in 0..2 {
                        for a in 0..2 {
                            let p1 = inst.p_next_active(i, k, s, a);
                            let p = if sp == 1 { p1 } else { 1.0 - p1 };
                            row[map.idx(i, k, s, a)] += f_kp * p;
                        }
                    }
                }
                for a in 0..2 {
                    row[map.idx(i, kp, sp, a)] -= 1.0;
                }
                lp.add_row(row, Relation::Eq, 0.0);
            }
        }
    }

    // Per-arm normalization.
    for i in 0..inst.num_arms {
        let mut row = vec![0.0; nv];
        for k in 0..inst.num_contexts {
            for s in 0..2 {
                for a in 0..2 {
                    row[map.idx(i, k, s, a)] = 1.0;
                }
            }
        }
        lp.add_row(row, Relation::Eq, 1.0);
    }

    // Relaxed total budget: expected pull mass at most `budget`.
    let mut row = vec![0.0; nv];
    for i in 0..inst.num_arms {
        for k in 0..inst.num_contexts {
            for s in 0..2 {
                row[map.idx(i, k, s, 1)] = 1.0;
            }
        }
    }
    lp.add_row(row, Relation::Le, budget);

    (lp, map)
}

fn extract(map: VarMap, sol: crate::lp::simplex::LpSolution) -> OccupancySolution {
    OccupancySolution {
        map,
        mu: sol.x,
        objective_value: sol.objective,
        status: sol.status,
    }
}

/// Solve the relaxed occupancy LP.
pub fn solve_occupancy(inst: &CbbInstance, budget: f64) -> Result<OccupancySolution, LpError> {
    let (lp, map) = build_occupancy_lp(inst, budget);
    Ok(extract(map, solve_lp(&lp)?))
}

/// One coefficient row of expected pull mass for context `k`, i.e. the lhs
/// of `sum_{i,s} mu_i(s, 1; k)`.
fn pull_mass_row(map: VarMap, k: usize) -> Vec<f64> {
    let mut row = vec![0.0; map.num_vars()];
    for i in 0..map.num_arms {
        for s in 0..2 {
            row[map.idx(i, k, s, 1)] = 1.0;
        }
    }
    row
}

/// Occupancy LP with the per-context budgets pinned exactly:
/// `(1/f_k) sum_{i,s} mu_i(s, 1; k) = budgets[k]`.
pub fn lp_fixed_budget(
    inst: &CbbInstance,
    budgets: &[f64],
    total_budget: f64,
) -> Result<OccupancySolution, LpError> {
    let (mut lp, map) = build_occupancy_lp(inst, total_budget);
    for (k, &bk) in budgets.iter().enumerate() {
        lp.add_row(pull_mass_row(map, k), Relation::Eq, inst.context_probs[k] * bk);
    }
    Ok(extract(map, solve_lp(&lp)?))
}

/// Occupancy LP over an axis-aligned budget box `L_k <= B_k <= U_k`
/// (intersected with the expected-budget cap). Returns the solution; read
/// the most promising fractional budget vector via `fractional_budgets`.
pub fn lp_region(
    inst: &CbbInstance,
    lower: &[u32],
    upper: &[u32],
    total_budget: f64,
) -> Result<OccupancySolution, LpError> {
    let (mut lp, map) = build_occupancy_lp(inst, total_budget);
    for k in 0..inst.num_contexts {
        let f_k = inst.context_probs[k];
        if lower[k] > 0 {
            lp.add_row(pull_mass_row(map, k), Relation::Ge, f_k * lower[k] as f64);
        }
        lp.add_row(pull_mass_row(map, k), Relation::Le, f_k * upper[k] as f64);
    }
    Ok(extract(map, solve_lp(&lp)?))
}

/// Append per-context proportional-fairness rows: each context's
/// frequency-weighted reward share must be at least `theta` times the total.
pub fn add_fairness_constraints(
    lp: &mut LinearProgram,
    inst: &CbbInstance,
    map: VarMap,
    theta: f64,
) {
    assert!((0.0..=1.0).contains(&theta), "theta out of range");
    let nv = map.num_vars();
    for k in 0..inst.num_contexts {
        let f_k = inst.context_probs[k];
        let mut row = vec![0.0; nv];
        for i in 0..inst.num_arms {
            for kp in 0..inst.num_contexts {
                for s in 0..2 {
                    for a in 0..2 {
                        let r = inst.reward_at(i, kp, s, a);
                        let mut coeff = -theta * r;
                        if kp == k {
                            coeff += r / f_k;
                        }
                        row[map.idx(i, kp, s, a)] = coeff;
                    }
                }
            }
        }
        lp.add_row(row, Relation::Ge, 0.0);
    }
}

/// Pull probabilities `chi_i(s, k) = mu(s,1;k) / (mu(s,0;k) + mu(s,1;k))`,
/// zero at unvisited states.
pub fn soft_policy(sol: &OccupancySolution) -> ChiTable {
    let map = sol.map;
    let mut chi = vec![0.0; map.num_arms * 2 * map.num_contexts];
    for i in 0..map.num_arms {
        for s in 0..2 {
            for k in 0..map.num_contexts {
                let pulled = sol.mu_at(i, k, s, 1).max(0.0);
                let idle = sol.mu_at(i, k, s, 0).max(0.0);
                let denom = pulled + idle;
                if denom > 1e-12 {
                    chi[(i * 2 + s) * map.num_contexts + k] = (pulled / denom).clamp(0.0, 1.0);
                }
            }
        }
    }
    ChiTable {
        num_contexts: map.num_contexts,
        values: chi,
    }
}

/// Pull probabilities per (arm, state, context).
#[derive(Debug, Clone)]
pub struct ChiTable {
    num_contexts: usize,
    values: Vec<f64>,
}

impl ChiTable {
    #[inline]
    pub fn at(&self, arm: usize, state: usize, ctx: usize) -> f64 {
        self.values[(arm * 2 + state) * self.num_contexts + ctx]
    }
}

/// Pull-priority index `rho_i(s, k) = chi_i(s, k) * r_i(s, 1; k)`, kept
/// together with chi itself. Zero-reward states can carry positive chi
/// (the LP prescribes recovery pulls there), so chi serves as the
/// secondary ranking key.
#[derive(Debug, Clone)]
pub struct OccupancyIndex {
    num_contexts: usize,
    values: Vec<f64>,
    chi: Vec<f64>,
}

impl OccupancyIndex {
    #[inline]
    pub fn at(&self, arm: usize, state: usize, ctx: usize) -> f64 {
        self.values[(arm * 2 + state) * self.num_contexts + ctx]
    }

    #[inline]
    pub fn chi_at(&self, arm: usize, state: usize, ctx: usize) -> f64 {
        self.chi[(arm * 2 + state) * self.num_contexts + ctx]
    }

    /// Tile the table for `CbbInstance::replicate(copies)`, whose arm
    /// list repeats each base arm in a contiguous block.
    pub fn replicate(&self, copies: usize) -> OccupancyIndex {
        let chunk = 2 * self.num_contexts;
        let tile = |table: &[f64]| {
            let mut out = Vec::with_capacity(table.len() * copies);
            for arm in table.chunks(chunk) {
                for _ in 0..copies {
                    out.extend_from_slice(arm);
                }
            }
            out
        };
        OccupancyIndex {
            num_contexts: self.num_contexts,
            values: tile(&self.values),
            chi: tile(&self.chi),
        }
    }
}

pub fn occupancy_index(sol: &OccupancySolution, inst: &CbbInstance) -> OccupancyIndex {
    let chi = soft_policy(sol);
    let map = sol.map;
    let mut values = vec![0.0; map.num_arms * 2 * map.num_contexts];
    let mut chis = vec![0.0; map.num_arms * 2 * map.num_contexts];
    for i in 0..map.num_arms {
        for s in 0..2 {
            for k in 0..map.num_contexts {
                let idx = (i * 2 + s) * map.num_contexts + k;
                chis[idx] = chi.at(i, s, k);
                values[idx] = chi.at(i, s, k) * inst.reward_at(i, k, s, 1);
            }
        }
    }
    OccupancyIndex {
        num_contexts: map.num_contexts,
        values,
        chi: chis,
    }
}

/// Round the LP's average per-context budgets to a feasible integer
/// allocation: nearest integer clipped to `[0, N]`, then decrement the
/// context with the largest weighted over-rounding until the expected
/// budget fits.
pub fn coip_budget(
    sol: &OccupancySolution,
    inst: &CbbInstance,
    total_budget: u32,
) -> crate::model::BudgetAllocation {
    let raw = sol.fractional_budgets(inst);
    let n = inst.num_arms as u32;
    let mut per_context: Vec<u32> = raw
        .iter()
        .map(|&r| (r.round().max(0.0) as u32).min(n))
        .collect();
    loop {
        let usage: f64 = per_context
            .iter()
            .zip(&inst.context_probs)
            .map(|(&b, &f)| f * b as f64)
            .sum();
        if usage <= total_budget as f64 + crate::model::BUDGET_TOL {
            break;
        }
        let k = (0..per_context.len())
            .filter(|&k| per_context[k] > 0)
            .max_by(|&a, &b| {
                let va = inst.context_probs[a] * (per_context[a] as f64 - raw[a]);
                let vb = inst.context_probs[b] * (per_context[b] as f64 - raw[b]);
                va.total_cmp(&vb)
            })
            .expect("over budget with all-zero allocation");
        per_context[k] -= 1;
    }
    crate::model::BudgetAllocation::new(per_context, total_budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_appendix_a_example2, gen_fivesix, gen_theorem1};

    #[test]
    fn variable_count() {
        let (inst, _) = gen_theorem1(3);
        let (lp, map) = build_occupancy_lp(&inst, 1.0);
        assert_eq!(lp.num_vars(), 3 * 2 * 4);
        assert_eq!(map.num_vars(), 24);
    }

    #[test]
    fn always_active_single_arm_full_budget() {
        // An always-active arm with unit pull rewards in both contexts and
        // budget 1 earns exactly its expected pull reward of 1.
        let mut inst = crate::model::CbbInstance::zeroed(1, 2, vec![0.5, 0.5]);
        for k in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    inst.transition[0][k][s][a] = 1.0;
                }
            }
            inst.reward[0][k][1][1] = 1.0;
        }
        let sol = solve_occupancy(&inst, 1.0).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-7, "{}", sol.objective_value);
    }

    #[test]
    fn theorem1_lp_value_and_budgets() {
        let (inst, budget) = gen_theorem1(10);
        let sol = solve_occupancy(&inst, budget as f64).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // All pull mass goes to the rare context: value = N * f2 * N = N.
        assert!((sol.objective_value - 10.0).abs() < 1e-6, "{}", sol.objective_value);
        assert!(sol.residual(&inst) < 1e-7);
        let frac = sol.fractional_budgets(&inst);
        assert!(frac[0].abs() < 1e-6);
        assert!((frac[1] - 10.0).abs() < 1e-6);
        let alloc = coip_budget(&sol, &inst, budget);
        assert_eq!(alloc.per_context, vec![0, 10]);
    }

    #[test]
    fn fivesix_base_lp() {
        let eps = 0.01;
        let fam = gen_fivesix(eps);
        let sol = solve_occupancy(&fam.base, fam.budget_fraction).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        // Optimum puts mu(1,1;2) = 1/3, nothing on context 1.
        assert!((sol.mu_at(0, 1, 1, 1) - 1.0 / 3.0).abs() < 1e-6);
        assert!(sol.mu_at(0, 0, 1, 1).abs() < 1e-6);
        let frac = sol.fractional_budgets(&fam.base);
        assert!(frac[0].abs() < 1e-6);
        assert!((frac[1] - 2.0 / 3.0).abs() < 1e-6);
        assert!((sol.objective_value - (1.0 + eps) / 3.0).abs() < 1e-6);
        assert!(sol.residual(&fam.base) < 1e-7);
    }

    #[test]
    fn example2_base_lp() {
        let fam = gen_appendix_a_example2(0.01);
        let sol = solve_occupancy(&fam.base, fam.budget_fraction).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.mu_at(0, 1, 1, 1) - 0.25).abs() < 1e-6, "{}", sol.mu_at(0, 1, 1, 1));
        assert!(sol.mu_at(0, 0, 1, 1).abs() < 1e-6);
        let frac = sol.fractional_budgets(&fam.base);
        assert!((frac[1] - 0.5).abs() < 1e-6);
        assert!(frac[0].abs() < 1e-6);
    }

    #[test]
    fn fixed_budget_matches_region_singleton() {
        let inst = crate::generators::gen_random(4, 2, 17);
        let fixed = lp_fixed_budget(&inst, &[1.0, 2.0], 2.0).unwrap();
        let region = lp_region(&inst, &[1, 2], &[1, 2], 2.0).unwrap();
        if fixed.status == LpStatus::Optimal {
            assert_eq!(region.status, LpStatus::Optimal);
            assert!((fixed.objective_value - region.objective_value).abs() < 1e-6);
        } else {
            assert_eq!(region.status, fixed.status);
        }
    }

    #[test]
    fn all_zero_budget_no_reward() {
        let inst = crate::generators::gen_random(4, 2, 3);
        let sol = lp_fixed_budget(&inst, &[0.0, 0.0], 2.0).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!(sol.objective_value.abs() < 1e-7);
    }

    #[test]
    fn region_shrinking_never_increases_value() {
        for seed in 0..5 {
            let inst = crate::generators::gen_random(3, 2, seed);
            let full = lp_region(&inst, &[0, 0], &[3, 3], 2.0).unwrap();
            let shrunk = lp_region(&inst, &[0, 0], &[1, 2], 2.0).unwrap();
            assert!(shrunk.objective_value <= full.objective_value + 1e-7);
        }
    }

    #[test]
    fn vacuous_region_equals_relaxed() {
        let inst = crate::generators::gen_random(3, 2, 8);
        let relaxed = solve_occupancy(&inst, 2.0).unwrap();
        let full = lp_region(&inst, &[0, 0], &[3, 3], 2.0).unwrap();
        assert!((relaxed.objective_value - full.objective_value).abs() < 1e-6);
    }

    #[test]
    fn fairness_theta_zero_keeps_value() {
        for seed in 0..5 {
            let inst = crate::generators::gen_random(4, 3, seed + 50);
            let base = solve_occupancy(&inst, 2.0).unwrap();
            let (mut lp, map) = build_occupancy_lp(&inst, 2.0);
            add_fairness_constraints(&mut lp, &inst, map, 0.0);
            let fair = solve_lp(&lp).unwrap();
            assert!((fair.objective - base.objective_value).abs() < 1e-8);
        }
    }

    #[test]
    fn fairness_value_nonincreasing_in_theta() {
        for seed in 0..5 {
            let inst = crate::generators::gen_random(4, 2, seed + 100);
            let mut prev = f64::INFINITY;
            for step in 0..=10 {
                let theta = step as f64 / 10.0;
                let (mut lp, map) = build_occupancy_lp(&inst, 2.0);
                add_fairness_constraints(&mut lp, &inst, map, theta);
                let sol = solve_lp(&lp).unwrap();
                let value = match sol.status {
                    LpStatus::Optimal => sol.objective,
                    _ => f64::NEG_INFINITY,
                };
                assert!(value <= prev + 1e-7, "seed {seed} theta {theta}");
                prev = value.min(prev);
            }
        }
    }

    #[test]
    fn soft_policy_ratio_and_unvisited() {
        let (inst, budget) = gen_theorem1(5);
        let sol = solve_occupancy(&inst, budget as f64).unwrap();
        let chi = soft_policy(&sol);
        // Unvisited inactive states get chi = 0.
        for i in 0..5 {
            assert_eq!(chi.at(i, 0, 0), 0.0);
            assert_eq!(chi.at(i, 0, 1), 0.0);
        }
        // Full pull mass at the rare context.
        for i in 0..5 {
            assert!((chi.at(i, 1, 1) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn occupancy_index_ranks_rare_context_higher() {
        let (inst, budget) = gen_theorem1(6);
        let sol = solve_occupancy(&inst, budget as f64).unwrap();
        let rho = occupancy_index(&sol, &inst);
        for i in 0..6 {
            assert!(rho.at(i, 1, 1) > rho.at(i, 1, 0));
        }
    }

    #[test]
    fn coip_rounding_respects_budget() {
        for seed in 0..10 {
            let inst = crate::generators::gen_random(5, 3, seed + 30);
            let sol = solve_occupancy(&inst, 2.0).unwrap();
            let alloc = coip_budget(&sol, &inst, 2);
            assert!(alloc.is_feasible(&inst.context_probs, inst.num_arms));
        }
    }

    #[test]
    fn single_context_budget_saturation() {
        let inst = crate::generators::gen_random(5, 1, 2);
        let sol = solve_occupancy(&inst, 2.0).unwrap();
        let frac = sol.fractional_budgets(&inst);
        if (frac[0] - frac[0].round()).abs() < 1e-6 {
            let alloc = coip_budget(&sol, &inst, 2);
            assert_eq!(alloc.per_context[0] as f64, frac[0].round());
        }
    }
}
