//! Problem definition for contextual bandits with per-context budgets:
//! instance data, state/action mechanics, budget feasibility, and the
//! epoch RNG contract shared by every simulation.
//!
//! States and actions are binary. Transition tables store only the
//! probability that the next state is 1; the complement is implied.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io;
use std::path::Path;

pub const PROB_SUM_TOL: f64 = 1e-12;
pub const BUDGET_TOL: f64 = 1e-9;

/// A contextual bandit instance: `num_arms` independent two-state arms,
/// `num_contexts` globally shared contexts drawn i.i.d. from `context_probs`,
/// and per-(arm, context) reward/transition tables.
///
/// `reward[i][k][s][a]` is the reward for taking action `a` on arm `i` in
/// state `s` under context `k`. `transition[i][k][s][a]` is the probability
/// that the arm's next state is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbbInstance {
    pub num_arms: usize,
    pub num_contexts: usize,
    pub context_probs: Vec<f64>,
    pub reward: Vec<Vec<[[f64; 2]; 2]>>,
    pub transition: Vec<Vec<[[f64; 2]; 2]>>,
}

impl CbbInstance {
    /// All-zero tables; a convenient starting point for generators.
    pub fn zeroed(num_arms: usize, num_contexts: usize, context_probs: Vec<f64>) -> Self {
        CbbInstance {
            num_arms,
            num_contexts,
            context_probs,
            reward: vec![vec![[[0.0; 2]; 2]; num_contexts]; num_arms],
            transition: vec![vec![[[0.0; 2]; 2]; num_contexts]; num_arms],
        }
    }

    #[inline]
    pub fn reward_at(&self, arm: usize, ctx: usize, state: usize, action: usize) -> f64 {
        self.reward[arm][ctx][state][action]
    }

    /// Probability that arm `arm` moves to state 1.
    #[inline]
    pub fn p_next_active(&self, arm: usize, ctx: usize, state: usize, action: usize) -> f64 {
        self.transition[arm][ctx][state][action]
    }

    /// Largest absolute reward in the tables.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward
            .iter()
            .flatten()
            .flat_map(|t| t.iter().flatten())
            .fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Replicate every arm `rho` times. Used by the scaled-population
    /// experiments where a small base instance stands in for a large one.
    pub fn replicate(&self, rho: usize) -> CbbInstance {
        let mut reward = Vec::with_capacity(self.num_arms * rho);
        let mut transition = Vec::with_capacity(self.num_arms * rho);
        for i in 0..self.num_arms {
            for _ in 0..rho {
                reward.push(self.reward[i].clone());
                transition.push(self.transition[i].clone());
            }
        }
        CbbInstance {
            num_arms: self.num_arms * rho,
            num_contexts: self.num_contexts,
            context_probs: self.context_probs.clone(),
            reward,
            transition,
        }
    }

    pub fn save_json(&self, path: &Path) -> io::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)
    }

    pub fn load_json(path: &Path) -> io::Result<CbbInstance> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Integer pull quotas per context under an expected-budget cap:
/// `sum_k f_k * per_context[k] <= total_budget` (within `BUDGET_TOL`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BudgetAllocation {
    pub per_context: Vec<u32>,
    pub total_budget: u32,
}

impl BudgetAllocation {
    pub fn new(per_context: Vec<u32>, total_budget: u32) -> Self {
        BudgetAllocation {
            per_context,
            total_budget,
        }
    }

    pub fn is_feasible(&self, context_probs: &[f64], num_arms: usize) -> bool {
        self.per_context.len() == context_probs.len()
            && self.per_context.iter().all(|&b| (b as usize) <= num_arms)
            && expected_budget_usage(self, context_probs) <= self.total_budget as f64 + BUDGET_TOL
    }
}

/// Expected per-step budget usage `sum_k f_k * B_k`.
pub fn expected_budget_usage(alloc: &BudgetAllocation, context_probs: &[f64]) -> f64 {
    alloc
        .per_context
        .iter()
        .zip(context_probs)
        .map(|(&b, &f)| f * b as f64)
        .sum()
}

/// Per-arm binary states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemState(pub Vec<u8>);

impl SystemState {
    pub fn all_active(num_arms: usize) -> Self {
        SystemState(vec![1; num_arms])
    }
}

/// Per-arm binary actions; `1` pulls the arm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionVector(pub Vec<u8>);

impl ActionVector {
    pub fn idle(num_arms: usize) -> Self {
        ActionVector(vec![0; num_arms])
    }

    pub fn num_pulls(&self) -> usize {
        self.0.iter().filter(|&&a| a == 1).count()
    }
}

/// Outcome of checking every instance invariant. `ok()` iff no failures;
/// each failure names the offending index.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub failures: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_instance(inst: &CbbInstance) -> ValidationReport {
    let mut report = ValidationReport::default();
    if inst.num_arms < 1 {
        report.failures.push("num_arms must be >= 1".into());
    }
    if inst.num_contexts < 1 {
        report.failures.push("num_contexts must be >= 1".into());
    }
    if inst.context_probs.len() != inst.num_contexts {
        report.failures.push(format!(
            "context_probs length {} != num_contexts {}",
            inst.context_probs.len(),
            inst.num_contexts
        ));
    }
    for (k, &f) in inst.context_probs.iter().enumerate() {
        if !(f > 0.0) || !f.is_finite() {
            report
                .failures
                .push(format!("context_probs[{k}] = {f} must be > 0"));
        }
    }
    let sum: f64 = inst.context_probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOL {
        report
            .failures
            .push(format!("context_probs sum {sum} != 1"));
    }
    if inst.reward.len() != inst.num_arms || inst.transition.len() != inst.num_arms {
        report
            .failures
            .push("reward/transition tables must have one row per arm".into());
    }
    for (i, (rt, pt)) in inst.reward.iter().zip(&inst.transition).enumerate() {
        if rt.len() != inst.num_contexts || pt.len() != inst.num_contexts {
            report
                .failures
                .push(format!("arm {i} tables must have one entry per context"));
            continue;
        }
        for k in 0..inst.num_contexts {
            for s in 0..2 {
                for a in 0..2 {
                    let r = rt[k][s][a];
                    if !r.is_finite() {
                        report
                            .failures
                            .push(format!("reward[{i}][{k}][{s}][{a}] = {r} not finite"));
                    }
                    let p = pt[k][s][a];
                    if !(0.0..=1.0).contains(&p) {
                        report
                            .failures
                            .push(format!("transition[{i}][{k}][{s}][{a}] = {p} not in [0,1]"));
                    }
                }
            }
        }
    }
    report
}

/// Streams for one simulated epoch. Context draws, arm transitions, and
/// policy randomness consume separate counter-based streams, so a policy's
/// choices never perturb the environment's randomness.
pub struct EpochRng {
    pub context: ChaCha8Rng,
    pub transition: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl EpochRng {
    pub fn new(seed: u64) -> Self {
        let mk = |stream: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            rng
        };
        EpochRng {
            context: mk(0),
            transition: mk(1),
            policy: mk(2),
        }
    }
}

/// Draw a context index with probability `f[k]`.
pub fn sample_context<R: Rng>(context_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cum = 0.0;
    for (k, &f) in context_probs.iter().enumerate() {
        cum += f;
        if u < cum {
            return k;
        }
    }
    context_probs.len() - 1
}

/// Advance every arm one step under context `k`. Returns the next state and
/// the summed per-arm reward table lookups. Every arm consumes exactly one
/// transition draw regardless of its action.
pub fn step_system<R: Rng>(
    inst: &CbbInstance,
    state: &SystemState,
    action: &ActionVector,
    k: usize,
    rng: &mut R,
) -> (SystemState, f64) {
    assert!(k < inst.num_contexts, "context index {k} out of range");
    let mut reward = 0.0;
    let mut next = Vec::with_capacity(inst.num_arms);
    for i in 0..inst.num_arms {
        let s = state.0[i] as usize;
        let a = action.0[i] as usize;
        reward += inst.reward_at(i, k, s, a);
        let p = inst.p_next_active(i, k, s, a);
        let u: f64 = rng.gen();
        next.push(u8::from(u < p));
    }
    (SystemState(next), reward)
}
