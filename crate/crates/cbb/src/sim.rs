//! Epoch simulation, long-run reward estimation, the fairness index, and
//! the accurate/fast allocation evaluators used by the searchers.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::Rng;

use crate::lp::occupancy::{ChiTable, OccupancyIndex};
use crate::model::{
    sample_context, step_system, ActionVector, BudgetAllocation, CbbInstance, EpochRng,
    SystemState,
};
use crate::policies::{act_flex_occupancy, act_greedy, act_random, act_soft, act_vanilla_whittle};
use crate::whittle::WhittleTable;

/// A ready-to-run decision rule. Index tables are baked in so act calls are
/// pure apart from the explicit RNG.
#[derive(Debug, Clone)]
pub enum Policy {
    Random { quota: u32 },
    Greedy { quota: u32 },
    VanillaWhittle { quota: u32, table: WhittleTable },
    FlexOccupancy { alloc: BudgetAllocation, rho: OccupancyIndex },
    Soft { chi: ChiTable },
}

impl Policy {
    fn act<R: Rng>(
        &self,
        inst: &CbbInstance,
        state: &SystemState,
        k: usize,
        rng: &mut R,
    ) -> ActionVector {
        match self {
            Policy::Random { quota } => act_random(state, *quota, rng),
            Policy::Greedy { quota } => act_greedy(state, k, *quota, inst),
            Policy::VanillaWhittle { quota, table } => {
                act_vanilla_whittle(state, k, *quota, table)
            }
            Policy::FlexOccupancy { alloc, rho } => act_flex_occupancy(state, k, alloc, rho),
            Policy::Soft { chi } => act_soft(state, k, chi, rng),
        }
    }

    /// Per-context pull quota audited by the simulator; None exempts the
    /// soft policy, which is quota-free by construction.
    fn quota(&self, k: usize) -> Option<u32> {
        match self {
            Policy::Random { quota }
            | Policy::Greedy { quota }
            | Policy::VanillaWhittle { quota, .. } => Some(*quota),
            Policy::FlexOccupancy { alloc, .. } => Some(alloc.per_context[k]),
            Policy::Soft { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialStateMode {
    AllActive,
    StationaryDraw,
}

#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub horizon: usize,
    pub burn_in: usize,
    pub epochs: usize,
    pub initial_state_mode: InitialStateMode,
}

impl SimConfig {
    /// Accurate-evaluator defaults.
    pub fn accurate() -> Self {
        SimConfig {
            horizon: 2000,
            burn_in: 200,
            epochs: 16,
            initial_state_mode: InitialStateMode::AllActive,
        }
    }

    /// Fast noisy-evaluator defaults.
    pub fn fast() -> Self {
        SimConfig {
            horizon: 400,
            burn_in: 100,
            epochs: 1,
            initial_state_mode: InitialStateMode::AllActive,
        }
    }

    pub fn validate(&self) {
        assert!(self.burn_in < self.horizon, "burn_in must be < horizon");
        assert!(self.epochs >= 1);
    }
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub avg_reward: f64,
    pub per_context_reward: Vec<f64>,
    pub per_context_visits: Vec<usize>,
    pub fairness: f64,
    pub fairness_undefined: bool,
    pub budget_violations: usize,
    pub std_error: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("budget violated at step {step} in context {context}: {pulls} pulls > quota {quota}")]
    BudgetViolation {
        step: usize,
        context: usize,
        pulls: u32,
        quota: u32,
    },
}

/// Simulate one epoch of `horizon` steps, discard the burn-in, and report
/// per-step average reward plus per-context accumulations. The per-context
/// quota is audited every step.
pub fn run_epoch(
    inst: &CbbInstance,
    policy: &Policy,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimOutcome, SimError> {
    cfg.validate();
    let mut rng = EpochRng::new(seed);
    let mut state = SystemState(vec![1; inst.num_arms]);
    if cfg.initial_state_mode == InitialStateMode::StationaryDraw {
        // Warm start from the policy's own long-run behavior.
        for _ in 0..cfg.burn_in.max(100) {
            let k = sample_context(&inst.context_probs, &mut rng.context);
            let action = policy.act(inst, &state, k, &mut rng.policy);
            let (next, _) = step_system(inst, &state, &action, k, &mut rng.transition);
            state = next;
        }
    }
    let mut per_context_reward = vec![0.0; inst.num_contexts];
    let mut per_context_visits = vec![0usize; inst.num_contexts];
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for step in 0..cfg.horizon {
        let k = sample_context(&inst.context_probs, &mut rng.context);
        let action = policy.act(inst, &state, k, &mut rng.policy);
        if let Some(quota) = policy.quota(k) {
            let pulls = action.num_pulls() as u32;
            if pulls > quota {
                return Err(SimError::BudgetViolation {
                    step,
                    context: k,
                    pulls,
                    quota,
                });
            }
        }
        let (next, reward) = step_system(inst, &state, &action, k, &mut rng.transition);
        state = next;
        if step >= cfg.burn_in {
            per_context_reward[k] += reward;
            per_context_visits[k] += 1;
            total += reward;
            total_sq += reward * reward;
        }
    }
    let steps = (cfg.horizon - cfg.burn_in) as f64;
    let avg = total / steps;
    let var = (total_sq / steps - avg * avg).max(0.0);
    let (fairness, fairness_undefined) =
        fairness_of(&per_context_reward, &inst.context_probs, total);
    Ok(SimOutcome {
        avg_reward: avg,
        per_context_reward,
        per_context_visits,
        fairness,
        fairness_undefined,
        budget_violations: 0,
        std_error: (var / steps).sqrt(),
    })
}

/// Minimum over contexts of the context's reward share divided by its
/// frequency, clamped to [0,1]. Zero total reward yields (0, true).
pub fn fairness_of(per_context_reward: &[f64], f: &[f64], total: f64) -> (f64, bool) {
    if total <= 0.0 {
        return (0.0, true);
    }
    let min_share = per_context_reward
        .iter()
        .zip(f)
        .map(|(&r, &fk)| (r / total) / fk)
        .fold(f64::INFINITY, f64::min);
    (min_share.clamp(0.0, 1.0), false)
}

/// Evaluator estimate with sampling error and the pooled fairness index.
#[derive(Debug, Clone, Copy)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub fairness: f64,
}

/// Shared evaluation context: the occupancy index from the relaxed LP at
/// the total budget, reused for every allocation the searchers probe.
pub struct OracleCtx<'a> {
    pub inst: &'a CbbInstance,
    pub rho: OccupancyIndex,
    pub base_seed: u64,
}

impl<'a> OracleCtx<'a> {
    pub fn new(inst: &'a CbbInstance, total_budget: u32, base_seed: u64) -> Self {
        let sol = crate::lp::occupancy::solve_occupancy(inst, total_budget as f64)
            .expect("relaxed LP failed");
        OracleCtx {
            inst,
            rho: crate::lp::occupancy::occupancy_index(&sol, inst),
            base_seed,
        }
    }

    /// Evaluation context with a precomputed index table, e.g. a tiled
    /// per-type table for replicated instances where the full LP would be
    /// needlessly large.
    pub fn with_index(inst: &'a CbbInstance, rho: OccupancyIndex, base_seed: u64) -> Self {
        OracleCtx { inst, rho, base_seed }
    }

    /// Seed stream for one allocation: a function of the base seed and the
    /// allocation only, so evaluation order never changes results.
    fn alloc_seed(&self, alloc: &BudgetAllocation) -> u64 {
        let mut h = DefaultHasher::new();
        self.base_seed.hash(&mut h);
        alloc.per_context.hash(&mut h);
        h.finish()
    }

    fn policy_for(&self, alloc: &BudgetAllocation) -> Policy {
        Policy::FlexOccupancy {
            alloc: alloc.clone(),
            rho: self.rho.clone(),
        }
    }

    /// Accurate evaluator: flexible policy under `alloc`, averaged over
    /// independent epochs. Returns mean, std error, and pooled fairness.
    pub fn oracle(&self, alloc: &BudgetAllocation, cfg: &SimConfig) -> OracleEstimate {
        let policy = self.policy_for(alloc);
        let seed0 = self.alloc_seed(alloc);
        let mut means = Vec::with_capacity(cfg.epochs);
        let mut pooled = vec![0.0; self.inst.num_contexts];
        for e in 0..cfg.epochs {
            let out = run_epoch(self.inst, &policy, cfg, seed0.wrapping_add(e as u64))
                .expect("flexible policy violated its own quota");
            for (p, r) in pooled.iter_mut().zip(&out.per_context_reward) {
                *p += r;
            }
            means.push(out.avg_reward);
        }
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
        let total: f64 = pooled.iter().sum();
        let (fairness, _) = fairness_of(&pooled, &self.inst.context_probs, total);
        OracleEstimate {
            mean,
            std_error: if cfg.epochs > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 },
            fairness,
        }
    }

    /// Fast noisy evaluator: a single short epoch keyed by `round`.
    pub fn oracle_small(&self, alloc: &BudgetAllocation, round: u64) -> OracleEstimate {
        let policy = self.policy_for(alloc);
        let cfg = SimConfig::fast();
        let seed = self.alloc_seed(alloc).wrapping_add(round.wrapping_mul(0x9e3779b97f4a7c15));
        let out = run_epoch(self.inst, &policy, &cfg, seed)
            .expect("flexible policy violated its own quota");
        OracleEstimate {
            mean: out.avg_reward,
            std_error: out.std_error,
            fairness: out.fairness,
        }
    }

    /// Fairness-masked accurate evaluator: the mean survives only when the
    /// pooled fairness reaches theta.
    pub fn oracle_fair(
        &self,
        alloc: &BudgetAllocation,
        cfg: &SimConfig,
        theta: f64,
    ) -> OracleEstimate {
        let mut est = self.oracle(alloc, cfg);
        if est.fairness < theta {
            est.mean = 0.0;
            est.std_error = 0.0;
        }
        est
    }

    pub fn oracle_small_fair(
        &self,
        alloc: &BudgetAllocation,
        round: u64,
        theta: f64,
    ) -> OracleEstimate {
        let mut est = self.oracle_small(alloc, round);
        if est.fairness < theta {
            est.mean = 0.0;
            est.std_error = 0.0;
        }
        est
    }
}
