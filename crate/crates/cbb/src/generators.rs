//! Instance families: analytic counterexamples, completely random
//! instances, and the synthetic volunteer-engagement families
//! (organic, churner, blended).
//!
//! Every generator is a pure function of its parameters and seed, and its
//! output passes `validate_instance`.

use crate::model::CbbInstance;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// A base instance meant to be replicated, together with the budget as a
/// fraction of the number of arms.
#[derive(Debug, Clone)]
pub struct ScaledFamily {
    pub base: CbbInstance,
    pub budget_fraction: f64,
}

/// Worst case for the uniform-budget index policy: N always-active arms, a
/// common context paying 1/N per pull and a rare context paying N. The
/// all-or-nothing allocation (0, N) is feasible at total budget 1 and earns
/// average reward N.
pub fn gen_theorem1(num_arms: usize) -> (CbbInstance, u32) {
    assert!(num_arms >= 2, "need at least two arms");
    let n = num_arms as f64;
    let mut inst = CbbInstance::zeroed(num_arms, 2, vec![1.0 - 1.0 / n, 1.0 / n]);
    for i in 0..num_arms {
        for k in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    inst.transition[i][k][s][a] = 1.0; // arms never leave the active state
                }
            }
        }
        inst.reward[i][0][1][1] = 1.0 / n;
        inst.reward[i][1][1][1] = n;
    }
    (inst, 1)
}

fn adversarial_base(epsilon: f64, recover: f64, budget_fraction: f64) -> ScaledFamily {
    assert!(epsilon > 0.0 && epsilon < 1.0, "epsilon out of range");
    let mut inst = CbbInstance::zeroed(1, 2, vec![0.5, 0.5]);
    // Context 1: pulling an active arm risks losing it with probability eps.
    inst.transition[0][0][1][1] = 1.0 - epsilon;
    inst.transition[0][0][1][0] = 1.0;
    inst.reward[0][0][1][1] = 1.0;
    // Context 2: pulling an active arm burns it out for sure, for a premium.
    inst.transition[0][1][1][1] = 0.0;
    inst.transition[0][1][1][0] = 1.0;
    inst.reward[0][1][1][1] = 1.0 + epsilon;
    // Inactive arms recover at the same rate under both contexts and actions.
    for k in 0..2 {
        for a in 0..2 {
            inst.transition[0][k][0][a] = recover;
        }
    }
    ScaledFamily {
        base: inst,
        budget_fraction,
    }
}

/// Single-arm-type base instance behind the 5/6 approximation bound:
/// inactive arms recover immediately and the budget is a third of the arms.
pub fn gen_fivesix(epsilon: f64) -> ScaledFamily {
    adversarial_base(epsilon, 1.0, 1.0 / 3.0)
}

/// Variant with slow (1/2) recovery and a quarter budget; its stationary
/// distribution has no closed form and is solved on a grid.
pub fn gen_appendix_a_example2(epsilon: f64) -> ScaledFamily {
    adversarial_base(epsilon, 0.5, 1.0 / 4.0)
}

/// Completely random instance. Per-context normal parameters are drawn
/// i.i.d. Uniform[0,1]; transition probabilities are normal draws clipped
/// into [0,1]; rewards are paid only for pulling active arms. Fatigue
/// (pulling an active arm hurts retention) and recovery (pulling an
/// inactive arm helps) orderings are enforced by swapping violating pairs.
pub fn gen_random(num_arms: usize, num_contexts: usize, seed: u64) -> CbbInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = num_contexts;

    let weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let f: Vec<f64> = weights.iter().map(|w| (w + 1e-9) / (total + k as f64 * 1e-9)).collect();

    // Per-context, per-(s, a) transition parameters and reward parameters.
    let mut p_params = vec![[[(0.0, 0.0); 2]; 2]; k];
    let mut r_params = vec![(0.0, 0.0); k];
    for ctx in 0..k {
        for s in 0..2 {
            for a in 0..2 {
                p_params[ctx][s][a] = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            }
        }
        r_params[ctx] = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
    }

    let mut inst = CbbInstance::zeroed(num_arms, k, f);
    for i in 0..num_arms {
        for ctx in 0..k {
            for s in 0..2 {
                for a in 0..2 {
                    let (mu, sigma) = p_params[ctx][s][a];
                    let draw: f64 = Normal::new(mu, sigma).unwrap().sample(&mut rng);
                    inst.transition[i][ctx][s][a] = draw.clamp(0.0, 1.0);
                }
            }
            // Fatigue: pulled active arms retain strictly less than idle ones.
            let t = &mut inst.transition[i][ctx];
            if t[1][1] >= t[1][0] {
                t[1].swap(0, 1);
            }
            if t[1][1] >= t[1][0] {
                t[1][1] = (t[1][0] - 1e-6).max(0.0);
                t[1][0] = t[1][1] + 1e-6;
            }
            // Recovery: pulled inactive arms recover strictly more.
            if t[0][1] <= t[0][0] {
                t[0].swap(0, 1);
            }
            if t[0][1] <= t[0][0] {
                t[0][1] = (t[0][0] + 1e-6).min(1.0);
                t[0][0] = t[0][1] - 1e-6;
            }
            let (mu_r, sigma_r) = r_params[ctx];
            let reward: f64 = Normal::new(mu_r, sigma_r).unwrap().sample(&mut rng);
            inst.reward[i][ctx][1][1] = reward.max(0.0);
        }
    }
    inst
}

/// Parameters of the organic volunteer family. The pick-up rate is
/// `clip(exp(alpha*pop_k - gamma*d(i,k) + beta*|H_i|/h_max), 0, 1)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrganicParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub h_max: f64,
    /// Probability an inactive volunteer becomes active again each step.
    pub recovery: f64,
}

impl Default for OrganicParams {
    fn default() -> Self {
        OrganicParams {
            alpha: 0.4,
            gamma: 2.0,
            beta: 0.3,
            h_max: 10.0,
            recovery: 0.3,
        }
    }
}

/// Parameters of the churner family: very likely to claim in preferred
/// regions (then burn out), nearly never elsewhere, and slow to recover.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChurnerParams {
    pub preferred_contexts: Vec<usize>,
    pub preferred_mean: f64,
    pub disliked_mean: f64,
    pub recovery_mean: f64,
    pub reward_uplift: f64,
}

impl ChurnerParams {
    pub fn default_for(num_contexts: usize) -> Self {
        assert!(num_contexts >= 2, "churner family needs a proper preferred subset");
        ChurnerParams {
            preferred_contexts: vec![0],
            preferred_mean: 0.95,
            disliked_mean: 0.05,
            recovery_mean: 0.2,
            reward_uplift: 1.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlendedParams {
    pub abundance: f64,
    pub organic: OrganicParams,
    pub churner: ChurnerParams,
}

const JITTER: f64 = 0.05;

struct Regions {
    positions: Vec<(f64, f64)>,
    popularity: Vec<f64>,
}

fn sample_regions(num_contexts: usize, rng: &mut ChaCha8Rng) -> Regions {
    Regions {
        positions: (0..num_contexts)
            .map(|_| (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)))
            .collect(),
        popularity: (0..num_contexts).map(|_| rng.gen_range(0.0..1.0)).collect(),
    }
}

/// History lengths are geometric; entries are uniform over regions. The
/// per-region history counts drive the context distribution.
fn sample_history(num_contexts: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut h = Vec::new();
    while h.len() < 40 && rng.gen_bool(0.75) {
        h.push(rng.gen_range(0..num_contexts));
    }
    h
}

fn organic_tables(
    inst: &mut CbbInstance,
    arms: std::ops::Range<usize>,
    regions: &Regions,
    params: &OrganicParams,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let k = inst.num_contexts;
    let mut region_counts = vec![1usize; k];
    for i in arms {
        let pos = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
        let history = sample_history(k, rng);
        for &ctx in &history {
            region_counts[ctx] += 1;
        }
        for ctx in 0..k {
            let d = ((pos.0 - regions.positions[ctx].0).powi(2)
                + (pos.1 - regions.positions[ctx].1).powi(2))
            .sqrt();
            let exponent = params.alpha * regions.popularity[ctx] - params.gamma * d
                + params.beta * history.len() as f64 / params.h_max;
            let pickup = exponent.exp().clamp(0.0, 1.0);
            inst.transition[i][ctx][1][1] = 1.0 - pickup;
            inst.transition[i][ctx][1][0] = 1.0;
            inst.transition[i][ctx][0][0] = params.recovery;
            inst.transition[i][ctx][0][1] = params.recovery;
            inst.reward[i][ctx][1][1] = regions.popularity[ctx] * pickup;
        }
    }
    region_counts
}

fn churner_tables(
    inst: &mut CbbInstance,
    arms: std::ops::Range<usize>,
    params: &ChurnerParams,
    rng: &mut ChaCha8Rng,
) {
    let k = inst.num_contexts;
    for i in arms {
        let recover = (params.recovery_mean + rng.gen_range(-JITTER..JITTER)).clamp(0.0, 1.0);
        for ctx in 0..k {
            let preferred = params.preferred_contexts.contains(&ctx);
            let mean = if preferred {
                params.preferred_mean
            } else {
                params.disliked_mean
            };
            let pickup = (mean + rng.gen_range(-JITTER..JITTER)).clamp(0.0, 1.0);
            inst.transition[i][ctx][1][1] = 1.0 - pickup;
            inst.transition[i][ctx][1][0] = 1.0;
            inst.transition[i][ctx][0][0] = recover;
            inst.transition[i][ctx][0][1] = recover;
            let uplift = if preferred { params.reward_uplift } else { 1.0 };
            inst.reward[i][ctx][1][1] = pickup * uplift;
        }
    }
}

fn normalized_counts(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn gen_organic(
    num_arms: usize,
    num_contexts: usize,
    seed: u64,
    params: &OrganicParams,
) -> CbbInstance {
    assert!(params.h_max > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = sample_regions(num_contexts, &mut rng);
    let mut inst = CbbInstance::zeroed(num_arms, num_contexts, vec![0.0; num_contexts]);
    let counts = organic_tables(&mut inst, 0..num_arms, &regions, params, &mut rng);
    inst.context_probs = normalized_counts(&counts);
    inst
}

pub fn gen_churner(
    num_arms: usize,
    num_contexts: usize,
    seed: u64,
    params: &ChurnerParams,
) -> CbbInstance {
    assert!(
        !params.preferred_contexts.is_empty()
            && params.preferred_contexts.len() < num_contexts
            && params.preferred_contexts.iter().all(|&c| c < num_contexts),
        "preferred subset must be proper and nonempty"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = (0..num_contexts).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let mut inst = CbbInstance::zeroed(
        num_arms,
        num_contexts,
        weights.iter().map(|w| w / total).collect(),
    );
    churner_tables(&mut inst, 0..num_arms, params, &mut rng);
    inst
}

/// Blend: the first `floor(abundance * N)` arms are organic, the rest are
/// churners, over the same regions; the organic context distribution is
/// shared. The pure extremes delegate to the single-family generators.
pub fn gen_blended(
    num_arms: usize,
    num_contexts: usize,
    seed: u64,
    params: &BlendedParams,
) -> CbbInstance {
    assert!((0.0..=1.0).contains(&params.abundance), "abundance out of range");
    let n_organic = (params.abundance * num_arms as f64).floor() as usize;
    if n_organic == num_arms {
        return gen_organic(num_arms, num_contexts, seed, &params.organic);
    }
    if n_organic == 0 {
        return gen_churner(num_arms, num_contexts, seed, &params.churner);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let regions = sample_regions(num_contexts, &mut rng);
    let mut inst = CbbInstance::zeroed(num_arms, num_contexts, vec![0.0; num_contexts]);
    let counts = organic_tables(&mut inst, 0..n_organic, &regions, &params.organic, &mut rng);
    churner_tables(&mut inst, n_organic..num_arms, &params.churner, &mut rng);
    inst.context_probs = normalized_counts(&counts);
    inst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn theorem1_shape() {
        let (inst, budget) = gen_theorem1(50);
        assert_eq!(budget, 1);
        assert_eq!(inst.context_probs, vec![0.98, 0.02]);
        assert_eq!(inst.reward[0][1][1][1], 50.0);
        assert_eq!(inst.reward[0][0][1][1], 1.0 / 50.0);
        assert!(validate_instance(&inst).ok());
    }

    #[test]
    fn theorem1_smallest_member() {
        let (inst, _) = gen_theorem1(2);
        assert!(validate_instance(&inst).ok());
    }

    #[test]
    fn fivesix_tables() {
        let fam = gen_fivesix(0.01);
        let inst = &fam.base;
        assert_eq!(inst.transition[0][0][1][1], 0.99);
        assert_eq!(inst.reward[0][1][1][1], 1.01);
        assert_eq!(inst.transition[0][0][0][0], 1.0);
        assert!((fam.budget_fraction - 1.0 / 3.0).abs() < 1e-15);
        assert!(validate_instance(inst).ok());
    }

    #[test]
    fn fivesix_epsilon_limit() {
        let fam = gen_fivesix(1e-9);
        assert!((fam.base.reward[0][0][1][1] - 1.0).abs() < 1e-8);
        assert!((fam.base.reward[0][1][1][1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn example2_tables() {
        let fam = gen_appendix_a_example2(0.01);
        for k in 0..2 {
            for a in 0..2 {
                assert_eq!(fam.base.transition[0][k][0][a], 0.5);
            }
        }
        assert!((fam.budget_fraction - 0.25).abs() < 1e-15);
        assert!(validate_instance(&fam.base).ok());
    }

    #[test]
    fn random_orderings_and_zero_rewards() {
        for seed in 0..20 {
            let inst = gen_random(8, 3, seed);
            assert!(validate_instance(&inst).ok(), "seed {seed}");
            for i in 0..inst.num_arms {
                for k in 0..inst.num_contexts {
                    let t = &inst.transition[i][k];
                    assert!(t[1][1] < t[1][0], "fatigue violated at ({i},{k})");
                    assert!(t[0][1] > t[0][0], "recovery violated at ({i},{k})");
                    assert_eq!(inst.reward[i][k][0][0], 0.0);
                    assert_eq!(inst.reward[i][k][0][1], 0.0);
                    assert_eq!(inst.reward[i][k][1][0], 0.0);
                }
            }
        }
    }

    #[test]
    fn random_is_deterministic() {
        assert_eq!(gen_random(5, 2, 9), gen_random(5, 2, 9));
    }

    #[test]
    fn organic_pickup_rates_in_range() {
        // Pick-up rates land in [0,1] across many draws; with all weights
        // zero the rate clips at exp(0) = 1.
        let params = OrganicParams::default();
        for seed in 0..20 {
            let inst = gen_organic(25, 4, seed, &params);
            assert!(validate_instance(&inst).ok());
            for i in 0..25 {
                for k in 0..4 {
                    let pickup = 1.0 - inst.transition[i][k][1][1];
                    assert!((0.0..=1.0).contains(&pickup));
                }
            }
        }
        let flat = OrganicParams {
            alpha: 0.0,
            gamma: 0.0,
            beta: 0.0,
            ..OrganicParams::default()
        };
        let inst = gen_organic(5, 2, 1, &flat);
        for i in 0..5 {
            for k in 0..2 {
                assert_eq!(inst.transition[i][k][1][1], 0.0); // pickup clipped to 1
            }
        }
        let steep = OrganicParams {
            gamma: 1e6,
            alpha: 0.0,
            beta: 0.0,
            ..OrganicParams::default()
        };
        let inst = gen_organic(5, 2, 1, &steep);
        for i in 0..5 {
            for k in 0..2 {
                assert!(inst.transition[i][k][1][1] > 0.999); // pickup ~ 0
            }
        }
    }

    #[test]
    fn churner_means() {
        let params = ChurnerParams::default_for(3);
        let inst = gen_churner(200, 3, 4, &params);
        assert!(validate_instance(&inst).ok());
        let mut preferred_sum = 0.0;
        let mut disliked_sum = 0.0;
        let mut recover_sum = 0.0;
        for i in 0..200 {
            preferred_sum += 1.0 - inst.transition[i][0][1][1];
            disliked_sum += 1.0 - inst.transition[i][1][1][1];
            recover_sum += inst.transition[i][0][0][0];
        }
        assert!((preferred_sum / 200.0 - 0.95).abs() < 0.02);
        assert!((disliked_sum / 200.0 - 0.05).abs() < 0.02);
        assert!((recover_sum / 200.0 - 0.2).abs() < 0.02);
    }

    #[test]
    fn blended_extremes_and_split() {
        let params = BlendedParams {
            abundance: 1.0,
            organic: OrganicParams::default(),
            churner: ChurnerParams::default_for(3),
        };
        let blended = gen_blended(20, 3, 7, &params);
        assert_eq!(blended, gen_organic(20, 3, 7, &params.organic));

        let params0 = BlendedParams {
            abundance: 0.0,
            ..params.clone()
        };
        assert_eq!(gen_blended(20, 3, 7, &params0), gen_churner(20, 3, 7, &params.churner));

        let half = BlendedParams {
            abundance: 0.5,
            ..params
        };
        let inst = gen_blended(50, 3, 7, &half);
        assert!(validate_instance(&inst).ok());
        // First 25 arms organic (reward = pop * pickup <= 1), the rest are
        // churners whose preferred-region reward carries the 1.5 uplift.
        for i in 0..25 {
            assert!(inst.reward[i][0][1][1] <= 1.0, "arm {i} should be organic");
        }
        for i in 25..50 {
            assert!(inst.reward[i][0][1][1] > 1.3, "arm {i} should be a churner");
            assert!(1.0 - inst.transition[i][0][1][1] >= 0.85);
            assert!(1.0 - inst.transition[i][1][1][1] <= 0.15);
        }
    }
}
