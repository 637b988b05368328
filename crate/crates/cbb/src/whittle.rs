//! Whittle indices per (arm, context, state) for the uniform-budget baseline.
//!
//! The index of state s is the subsidy w at which pulling and idling tie in
//! the single-arm subsidized problem. We find it by bisection on the sign of
//! Q_w(s, 1) - Q_w(s, 0), solving each subsidized MDP by value iteration
//! with discount gamma. The discounted index only ranks arms here; judged
//! policies are scored by average reward.

use crate::model::CbbInstance;

pub const DEFAULT_GAMMA: f64 = 0.95;
pub const DEFAULT_TOL: f64 = 1e-6;

/// A single arm's two-state chain under one context.
#[derive(Debug, Clone, Copy)]
pub struct SingleArmMdp {
    /// reward[s][a]
    pub reward: [[f64; 2]; 2],
    /// p_active[s][a] = P(next state is 1 | s, a)
    pub p_active: [[f64; 2]; 2],
    pub gamma: f64,
}

impl SingleArmMdp {
    pub fn from_instance(inst: &CbbInstance, arm: usize, ctx: usize, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "gamma out of (0,1)");
        SingleArmMdp {
            reward: inst.reward[arm][ctx],
            p_active: inst.transition[arm][ctx],
            gamma,
        }
    }
}

/// Fixed point of the subsidized Bellman operator, within tol/(1-gamma).
/// Returns (V, Q) with Q[s][a] = -w*a + r(s,a) + gamma * E[V(s')].
pub fn value_iteration(mdp: &SingleArmMdp, w: f64, tol: f64) -> ([f64; 2], [[f64; 2]; 2]) {
    assert!(tol > 0.0);
    let mut v = [0.0_f64; 2];
    let mut q = [[0.0_f64; 2]; 2];
    loop {
        let mut next = [0.0_f64; 2];
        for s in 0..2 {
            for a in 0..2 {
                let p1 = mdp.p_active[s][a];
                q[s][a] = -w * a as f64
                    + mdp.reward[s][a]
                    + mdp.gamma * (p1 * v[1] + (1.0 - p1) * v[0]);
            }
            next[s] = q[s][0].max(q[s][1]);
        }
        let delta = (next[0] - v[0]).abs().max((next[1] - v[1]).abs());
        v = next;
        if delta <= tol {
            return (v, q);
        }
    }
}

/// Pull-minus-idle advantage at subsidy w.
fn advantage(mdp: &SingleArmMdp, w: f64, s: usize, tol: f64) -> f64 {
    let (_, q) = value_iteration(mdp, w, tol);
    q[s][1] - q[s][0]
}

/// Where no sign change exists in the bisection bracket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonIndexable {
    pub lo: f64,
    pub hi: f64,
    pub advantage_lo: f64,
    pub advantage_hi: f64,
}

/// Subsidy making pull and idle indifferent at state s, within tol.
pub fn whittle_index(mdp: &SingleArmMdp, s: usize, tol: f64) -> Result<f64, NonIndexable> {
    assert!(tol > 0.0);
    let r_max = mdp
        .reward
        .iter()
        .flatten()
        .fold(0.0_f64, |m, &r| m.max(r.abs()))
        .max(1e-12);
    let span = r_max / (1.0 - mdp.gamma);
    let (mut lo, mut hi) = (-span, span);
    // Inner value iteration runs tighter than the bisection gap so the sign
    // of the advantage is trustworthy.
    let vi_tol = tol * 1e-2;
    let adv_lo = advantage(mdp, lo, s, vi_tol);
    let adv_hi = advantage(mdp, hi, s, vi_tol);
    if adv_lo < 0.0 || adv_hi > 0.0 {
        return Err(NonIndexable {
            lo,
            hi,
            advantage_lo: adv_lo,
            advantage_hi: adv_hi,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if advantage(mdp, mid, s, vi_tol) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Indices per (arm, context, state). Non-indexable entries hold -inf so
/// ranking policies never pick them.
#[derive(Debug, Clone)]
pub struct WhittleTable {
    num_contexts: usize,
    values: Vec<f64>,
    pub non_indexable: Vec<(usize, usize, usize)>,
}

impl WhittleTable {
    #[inline]
    pub fn at(&self, arm: usize, ctx: usize, state: usize) -> f64 {
        self.values[(arm * self.num_contexts + ctx) * 2 + state]
    }
}

pub fn compute_whittle_table(inst: &CbbInstance, gamma: f64, tol: f64) -> WhittleTable {
    let mut values = vec![0.0; inst.num_arms * inst.num_contexts * 2];
    let mut non_indexable = Vec::new();
    for i in 0..inst.num_arms {
        for k in 0..inst.num_contexts {
            let mdp = SingleArmMdp::from_instance(inst, i, k, gamma);
            for s in 0..2 {
                values[(i * inst.num_contexts + k) * 2 + s] = match whittle_index(&mdp, s, tol) {
                    Ok(w) => w,
                    Err(_) => {
                        non_indexable.push((i, k, s));
                        f64::NEG_INFINITY
                    }
                };
            }
        }
    }
    WhittleTable {
        num_contexts: inst.num_contexts,
        values,
        non_indexable,
    }
}
