//! Decision rules mapping (system state, context) to an action vector under
//! a per-context pull quota.

use rand::seq::index::sample;
use rand::Rng;

use crate::lp::occupancy::{ChiTable, OccupancyIndex};
use crate::model::{ActionVector, BudgetAllocation, CbbInstance, SystemState};
use crate::whittle::WhittleTable;

/// Pulls a uniformly random subset of min(B_k, N) arms, ignoring state.
pub fn act_random<R: Rng>(state: &SystemState, b_k: u32, rng: &mut R) -> ActionVector {
    let n = state.0.len();
    let picks = (b_k as usize).min(n);
    let mut actions = vec![0u8; n];
    for idx in sample(rng, n, picks) {
        actions[idx] = 1;
    }
    ActionVector(actions)
}

/// Pulls up to B_k arms by descending immediate pull reward, skipping arms
/// whose pull pays nothing. Ties go to the lower arm index.
pub fn act_greedy(state: &SystemState, k: usize, b_k: u32, inst: &CbbInstance) -> ActionVector {
    let scored = (0..inst.num_arms)
        .map(|i| inst.reward_at(i, k, state.0[i] as usize, 1))
        .collect::<Vec<_>>();
    pull_top(&scored, b_k, state.0.len())
}

/// Pulls the top-B arms by Whittle index at the current context, skipping
/// non-indexable (-inf) entries.
pub fn act_vanilla_whittle(
    state: &SystemState,
    k: usize,
    b: u32,
    table: &WhittleTable,
) -> ActionVector {
    let n = state.0.len();
    let mut order: Vec<usize> = (0..n)
        .filter(|&i| table.at(i, k, state.0[i] as usize) > f64::NEG_INFINITY)
        .collect();
    order.sort_by(|&a, &b| {
        let wa = table.at(a, k, state.0[a] as usize);
        let wb = table.at(b, k, state.0[b] as usize);
        wb.total_cmp(&wa).then(a.cmp(&b))
    });
    let mut actions = vec![0u8; n];
    for &i in order.iter().take(b as usize) {
        actions[i] = 1;
    }
    ActionVector(actions)
}

/// Pulls up to B_k arms by descending occupancy index, ties broken by
/// descending chi then ascending arm. Only arms with positive index or
/// positive chi are candidates: zero-reward states still get their
/// LP-prescribed recovery pulls, everything else idles.
pub fn act_flex_occupancy(
    state: &SystemState,
    k: usize,
    alloc: &BudgetAllocation,
    rho: &OccupancyIndex,
) -> ActionVector {
    let n = state.0.len();
    let mut cand: Vec<(f64, f64, usize)> = (0..n)
        .filter_map(|i| {
            let s = state.0[i] as usize;
            let (r, c) = (rho.at(i, s, k), rho.chi_at(i, s, k));
            (r > 0.0 || c > 0.0).then_some((r, c, i))
        })
        .collect();
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    let mut actions = vec![0u8; n];
    for &(_, _, i) in cand.iter().take(alloc.per_context[k] as usize) {
        actions[i] = 1;
    }
    ActionVector(actions)
}

/// Pulls each arm independently with probability chi(i, s_i, k). Violates
/// the per-step quota by design; used only to check LP values.
pub fn act_soft<R: Rng>(
    state: &SystemState,
    k: usize,
    chi: &ChiTable,
    rng: &mut R,
) -> ActionVector {
    let actions = (0..state.0.len())
        .map(|i| {
            let p = chi.at(i, state.0[i] as usize, k);
            u8::from(rng.gen::<f64>() < p)
        })
        .collect();
    ActionVector(actions)
}

/// Shared ranking core: pull up to `quota` arms with strictly positive
/// scores, descending score, ties by ascending arm index.
fn pull_top(scores: &[f64], quota: u32, n: usize) -> ActionVector {
    let mut order: Vec<usize> = (0..n).filter(|&i| scores[i] > 0.0).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut actions = vec![0u8; n];
    for &i in order.iter().take(quota as usize) {
        actions[i] = 1;
    }
    ActionVector(actions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::occupancy::{occupancy_index, solve_occupancy};
    use crate::model::EpochRng;
    use crate::whittle::compute_whittle_table;

    fn all_active(n: usize) -> SystemState {
        SystemState(vec![1; n])
    }

    #[test]
    fn random_extremes() {
        let mut rng = EpochRng::new(1);
        let s = all_active(5);
        assert_eq!(act_random(&s, 0, &mut rng.policy).num_pulls(), 0);
        assert_eq!(act_random(&s, 5, &mut rng.policy).num_pulls(), 5);
        assert_eq!(act_random(&s, 9, &mut rng.policy).num_pulls(), 5);
    }

    #[test]
    fn random_is_uniform() {
        let mut rng = EpochRng::new(7);
        let s = all_active(3);
        let mut counts = [0u32; 3];
        let draws = 30_000;
        for _ in 0..draws {
            let a = act_random(&s, 1, &mut rng.policy);
            for i in 0..3 {
                counts[i] += a.0[i] as u32;
            }
        }
        for c in counts {
            let frac = c as f64 / draws as f64;
            assert!((frac - 1.0 / 3.0).abs() < 0.02, "{frac}");
        }
    }

    #[test]
    fn greedy_ranks_by_reward() {
        let mut inst = CbbInstance::zeroed(3, 1, vec![1.0]);
        inst.reward[0][0][1][1] = 3.0;
        inst.reward[1][0][1][1] = 1.0;
        inst.reward[2][0][1][1] = 2.0;
        let a = act_greedy(&all_active(3), 0, 2, &inst);
        assert_eq!(a.0, vec![1, 0, 1]);
    }

    #[test]
    fn greedy_skips_zero_reward() {
        let inst = CbbInstance::zeroed(3, 1, vec![1.0]);
        let a = act_greedy(&all_active(3), 0, 3, &inst);
        assert_eq!(a.num_pulls(), 0);
        // Inactive arms with zero pull reward stay idle too.
        let mut inst2 = inst.clone();
        inst2.reward[0][0][1][1] = 1.0;
        let a2 = act_greedy(&SystemState(vec![0, 0, 0]), 0, 3, &inst2);
        assert_eq!(a2.num_pulls(), 0);
    }

    #[test]
    fn whittle_policy_pulls_top_b() {
        let (inst, _) = crate::generators::gen_theorem1(5);
        let table = compute_whittle_table(&inst, 0.95, 1e-6);
        let a = act_vanilla_whittle(&all_active(5), 1, 1, &table);
        assert_eq!(a.num_pulls(), 1);
        assert_eq!(a.0[0], 1);
        let idle = act_vanilla_whittle(&all_active(5), 1, 0, &table);
        assert_eq!(idle.num_pulls(), 0);
    }

    #[test]
    fn whittle_tie_breaks_to_lowest_arm() {
        let inst = crate::generators::gen_random(1, 1, 4);
        let mut wide = CbbInstance::zeroed(4, 1, vec![1.0]);
        for i in 0..4 {
            wide.reward[i][0] = inst.reward[0][0];
            wide.transition[i][0] = inst.transition[0][0];
        }
        let table = compute_whittle_table(&wide, 0.95, 1e-6);
        let a = act_vanilla_whittle(&all_active(4), 0, 1, &table);
        assert_eq!(a.0, vec![1, 0, 0, 0]);
    }

    #[test]
    fn flex_gates_on_positive_index() {
        let (inst, budget) = crate::generators::gen_theorem1(4);
        let sol = solve_occupancy(&inst, budget as f64).unwrap();
        let rho = occupancy_index(&sol, &inst);
        // Context 0 carries no pull mass: index 0, nothing pulled.
        let alloc = BudgetAllocation::new(vec![4, 4], budget);
        let a0 = act_flex_occupancy(&all_active(4), 0, &alloc, &rho);
        assert_eq!(a0.num_pulls(), 0);
        let a1 = act_flex_occupancy(&all_active(4), 1, &alloc, &rho);
        assert_eq!(a1.num_pulls(), 4);
    }

    #[test]
    fn policies_are_deterministic() {
        let inst = crate::generators::gen_random(6, 2, 21);
        let table = compute_whittle_table(&inst, 0.95, 1e-6);
        let sol = solve_occupancy(&inst, 2.0).unwrap();
        let rho = occupancy_index(&sol, &inst);
        let alloc = crate::lp::occupancy::coip_budget(&sol, &inst, 2);
        let s = SystemState(vec![1, 0, 1, 1, 0, 1]);
        for k in 0..2 {
            assert_eq!(act_greedy(&s, k, 2, &inst).0, act_greedy(&s, k, 2, &inst).0);
            assert_eq!(
                act_vanilla_whittle(&s, k, 2, &table).0,
                act_vanilla_whittle(&s, k, 2, &table).0
            );
            assert_eq!(
                act_flex_occupancy(&s, k, &alloc, &rho).0,
                act_flex_occupancy(&s, k, &alloc, &rho).0
            );
        }
    }

    #[test]
    fn soft_extremes() {
        let (inst, budget) = crate::generators::gen_theorem1(3);
        let sol = solve_occupancy(&inst, budget as f64).unwrap();
        let chi = crate::lp::occupancy::soft_policy(&sol);
        let mut rng = EpochRng::new(3);
        // Rare context: chi = 1 on active arms.
        let a = act_soft(&all_active(3), 1, &chi, &mut rng.policy);
        assert_eq!(a.num_pulls(), 3);
        // Common context: chi = 0 everywhere.
        let b = act_soft(&all_active(3), 0, &chi, &mut rng.policy);
        assert_eq!(b.num_pulls(), 0);
    }
}
