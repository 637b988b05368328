//! Budget-allocation search: branch-and-bound over integer budget boxes
//! with LP-bound pruning, and a UCB bandit over allocations whose candidate
//! set grows by splitting single allocations out of a tree arm.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::lp::occupancy::lp_region;
use crate::lp::simplex::LpStatus;
use crate::model::{BudgetAllocation, CbbInstance};
use crate::sim::{OracleCtx, SimConfig};

/// Axis-aligned integer box of per-context budgets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BudgetBox {
    pub lower: Vec<u32>,
    pub upper: Vec<u32>,
}

impl BudgetBox {
    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }

    pub fn contains(&self, point: &[u32]) -> bool {
        point
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&p, (&l, &u))| l <= p && p <= u)
    }

    /// Number of lattice points ignoring the budget constraint.
    pub fn volume(&self) -> u64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (u - l + 1) as u64)
            .product()
    }

    /// The cheapest corner must satisfy the expected-budget cap, otherwise
    /// no point of the box does.
    pub fn feasible(&self, f: &[f64], budget: u32) -> bool {
        let min_usage: f64 = self.lower.iter().zip(f).map(|(&l, &fk)| fk * l as f64).sum();
        min_usage <= budget as f64 + crate::model::BUDGET_TOL
    }

    /// Feasible lattice points, in lexicographic order.
    pub fn lattice_points(&self, f: &[f64], budget: u32) -> Vec<Vec<u32>> {
        let mut out = Vec::new();
        let mut point: Vec<u32> = self.lower.clone();
        loop {
            let usage: f64 = point.iter().zip(f).map(|(&b, &fk)| fk * b as f64).sum();
            if usage <= budget as f64 + crate::model::BUDGET_TOL {
                out.push(point.clone());
            }
            let mut dim = point.len();
            loop {
                if dim == 0 {
                    return out;
                }
                dim -= 1;
                if point[dim] < self.upper[dim] {
                    point[dim] += 1;
                    break;
                }
                point[dim] = self.lower[dim];
            }
        }
    }
}

/// Full feasible region: L = 0, U_k capped by both the arm count and the
/// largest quota the cap allows at context k alone.
pub fn initial_box(inst: &CbbInstance, budget: u32) -> BudgetBox {
    let n = inst.num_arms as u32;
    let upper = inst
        .context_probs
        .iter()
        .map(|&fk| n.min(((budget as f64 + 1e-9) / fk).floor() as u32))
        .collect();
    BudgetBox {
        lower: vec![0; inst.num_contexts],
        upper,
    }
}

/// Split along the widest dimension (ties to the smallest index) at the
/// floor midpoint. Children partition the parent's lattice exactly.
pub fn split_box(b: &BudgetBox) -> (BudgetBox, BudgetBox) {
    assert!(!b.is_singleton(), "cannot split a singleton box");
    let k = (0..b.lower.len())
        .max_by_key(|&k| b.upper[k] - b.lower[k])
        .unwrap();
    let m = (b.lower[k] + b.upper[k]) / 2;
    let mut low = b.clone();
    let mut high = b.clone();
    low.upper[k] = m;
    high.lower[k] = m + 1;
    (low, high)
}

/// A box annotated with its LP relaxation value (negative infinity when the
/// region is infeasible).
#[derive(Debug, Clone)]
pub struct ScoredBox {
    pub bbox: BudgetBox,
    pub lp_value: f64,
    pub fractional: Vec<f64>,
}

pub fn score_box(inst: &CbbInstance, b: &BudgetBox, budget: u32) -> ScoredBox {
    if !b.feasible(&inst.context_probs, budget) {
        return ScoredBox {
            bbox: b.clone(),
            lp_value: f64::NEG_INFINITY,
            fractional: Vec::new(),
        };
    }
    match lp_region(inst, &b.lower, &b.upper, budget as f64) {
        Ok(sol) if sol.status == LpStatus::Optimal => {
            let fractional = sol.fractional_budgets(inst);
            ScoredBox {
                bbox: b.clone(),
                lp_value: sol.objective_value,
                fractional,
            }
        }
        _ => ScoredBox {
            bbox: b.clone(),
            lp_value: f64::NEG_INFINITY,
            fractional: Vec::new(),
        },
    }
}

fn usage(point: &[u32], f: &[f64]) -> f64 {
    point.iter().zip(f).map(|(&b, &fk)| fk * b as f64).sum()
}

/// Refine a scored box by best-bound-first split-and-solve until the box
/// with the best LP bound is a feasible singleton. That singleton is exact:
/// its pinned-budget LP value dominates every other box's upper bound, so
/// it is the lattice argmax. Returns the point and, when `keep_siblings`
/// is set, the unexplored boxes (they partition the box minus the point).
pub fn descend_to_point(
    inst: &CbbInstance,
    start: &ScoredBox,
    budget: u32,
    keep_siblings: bool,
) -> (BudgetAllocation, Vec<ScoredBox>) {
    assert!(start.lp_value > f64::NEG_INFINITY, "box has no feasible point");
    let mut frontier = vec![start.clone()];
    loop {
        // Ties on the bound go to the smaller box, so flat objective
        // regions descend instead of being enumerated breadth-first.
        let best = (0..frontier.len())
            .max_by(|&a, &b| {
                frontier[a]
                    .lp_value
                    .total_cmp(&frontier[b].lp_value)
                    .then(frontier[b].bbox.volume().cmp(&frontier[a].bbox.volume()))
            })
            .expect("frontier emptied before isolating a point");
        let current = frontier.swap_remove(best);
        if current.bbox.is_singleton() {
            let point = current.bbox.lower.clone();
            debug_assert!(usage(&point, &inst.context_probs) <= budget as f64 + 1e-9);
            return (BudgetAllocation::new(point, budget), frontier);
        }
        // Integral shortcut: only when the caller does not need the
        // leftover partition, since the point would stay inside it.
        if !keep_siblings && !current.fractional.is_empty() {
            let rounded: Vec<u32> = current.fractional.iter().map(|&x| x.round() as u32).collect();
            let integral = current
                .fractional
                .iter()
                .zip(&rounded)
                .all(|(&x, &r)| (x - r as f64).abs() < 1e-9);
            if integral
                && current.bbox.contains(&rounded)
                && usage(&rounded, &inst.context_probs) <= budget as f64 + 1e-9
            {
                return (BudgetAllocation::new(rounded, budget), frontier);
            }
        }
        let (low, high) = split_box(&current.bbox);
        for child in [low, high] {
            let scored = score_box(inst, &child, budget);
            if scored.lp_value > f64::NEG_INFINITY {
                frontier.push(scored);
            } else if keep_siblings && scored.bbox.feasible(&inst.context_probs, budget) {
                frontier.push(scored);
            }
        }
    }
}

/// Most promising feasible allocation of a box by LP descent.
pub fn box_argmax_point(inst: &CbbInstance, b: &BudgetBox, budget: u32) -> BudgetAllocation {
    let scored = score_box(inst, b, budget);
    descend_to_point(inst, &scored, budget, false).0
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    pub bnb_timeout: Duration,
    pub mitosis_rounds: usize,
    pub ucb_constant: f64,
    /// LP value over the full region; normalizes oracle rewards.
    pub reward_scale: f64,
    pub prune: bool,
    /// FIFO node order instead of best-LP-first.
    pub fifo: bool,
    pub theta: Option<f64>,
    pub oracle_cfg: SimConfig,
}

impl SearchConfig {
    pub fn new(inst: &CbbInstance, budget: u32) -> Self {
        let sb = score_box(inst, &initial_box(inst, budget), budget);
        SearchConfig {
            bnb_timeout: Duration::from_secs(600),
            mitosis_rounds: 2000,
            ucb_constant: 2.0,
            reward_scale: sb.lp_value.max(1e-9),
            prune: true,
            fifo: false,
            theta: None,
            oracle_cfg: SimConfig::accurate(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BnbResult {
    pub best: Option<BudgetAllocation>,
    pub best_value: f64,
    pub best_std_error: f64,
    pub nodes_expanded: usize,
    pub nodes_pruned: usize,
    pub exhaustive: bool,
    pub evaluations: Vec<(Vec<u32>, f64)>,
}

fn evaluate(
    ctx: &OracleCtx,
    cfg: &SearchConfig,
    cache: &mut HashMap<Vec<u32>, (f64, f64)>,
    alloc: &BudgetAllocation,
) -> (f64, f64) {
    *cache.entry(alloc.per_context.clone()).or_insert_with(|| {
        let est = match cfg.theta {
            Some(theta) => ctx.oracle_fair(alloc, &cfg.oracle_cfg, theta),
            None => ctx.oracle(alloc, &cfg.oracle_cfg),
        };
        (est.mean, est.std_error)
    })
}

/// Branch-and-bound over budget boxes. Nodes whose LP bound falls below
/// the incumbent's evaluated value are pruned; surviving nodes contribute
/// their LP-descent point to the incumbent and are split.
pub fn bnb(inst: &CbbInstance, budget: u32, ctx: &OracleCtx, cfg: &SearchConfig) -> BnbResult {
    let start_time = Instant::now();
    let root = score_box(inst, &initial_box(inst, budget), budget);
    let mut queue: Vec<ScoredBox> = Vec::new();
    if root.lp_value > f64::NEG_INFINITY {
        queue.push(root);
    }
    let mut cache: HashMap<Vec<u32>, (f64, f64)> = HashMap::new();
    let mut best: Option<BudgetAllocation> = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_se = 0.0;
    let mut expanded = 0usize;
    let mut pruned = 0usize;
    let mut exhaustive = true;
    let mut evaluations = Vec::new();
    while let Some(node) = pop_node(&mut queue, cfg.fifo) {
        if start_time.elapsed() > cfg.bnb_timeout {
            exhaustive = false;
            break;
        }
        if cfg.prune && node.lp_value < best_value {
            pruned += 1;
            continue;
        }
        expanded += 1;
        let (point, _) = descend_to_point(inst, &node, budget, false);
        let (value, se) = evaluate(ctx, cfg, &mut cache, &point);
        evaluations.push((point.per_context.clone(), value));
        if value > best_value {
            best_value = value;
            best_se = se;
            best = Some(point);
        }
        if !node.bbox.is_singleton() {
            let (low, high) = split_box(&node.bbox);
            for child in [low, high] {
                let scored = score_box(inst, &child, budget);
                if scored.lp_value > f64::NEG_INFINITY {
                    queue.push(scored);
                }
            }
        }
    }
    BnbResult {
        best,
        best_value,
        best_std_error: best_se,
        nodes_expanded: expanded,
        nodes_pruned: pruned,
        exhaustive,
        evaluations,
    }
}

fn pop_node(queue: &mut Vec<ScoredBox>, fifo: bool) -> Option<ScoredBox> {
    if queue.is_empty() {
        return None;
    }
    let idx = if fifo {
        0
    } else {
        queue
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.lp_value.total_cmp(&b.1.lp_value))
            .map(|(i, _)| i)
            .unwrap()
    };
    Some(queue.remove(idx))
}

/// Every feasible allocation evaluated with the accurate oracle; the tie
/// goes to the lexicographically first argmax.
pub fn exhaustive_best(
    inst: &CbbInstance,
    budget: u32,
    ctx: &OracleCtx,
    cfg: &SearchConfig,
) -> (BudgetAllocation, f64, f64) {
    let points = initial_box(inst, budget).lattice_points(&inst.context_probs, budget);
    let mut cache = HashMap::new();
    let mut best = None;
    let mut best_value = f64::NEG_INFINITY;
    let mut best_se = 0.0;
    for p in points {
        let alloc = BudgetAllocation::new(p, budget);
        let (v, se) = evaluate(ctx, cfg, &mut cache, &alloc);
        if v > best_value {
            best_value = v;
            best_se = se;
            best = Some(alloc);
        }
    }
    (best.expect("no feasible allocation"), best_value, best_se)
}

#[derive(Debug, Clone)]
pub struct CandidateArm {
    pub allocation: BudgetAllocation,
    pub pulls: u64,
    pub empirical_mean: f64,
}

impl CandidateArm {
    fn update(&mut self, value: f64) {
        self.pulls += 1;
        self.empirical_mean += (value - self.empirical_mean) / self.pulls as f64;
    }
}

pub fn ucb_index(arm: &CandidateArm, t: u64, cfg: &SearchConfig) -> f64 {
    arm.empirical_mean / cfg.reward_scale
        + cfg.ucb_constant * ((t as f64).ln() / arm.pulls as f64).sqrt()
}

/// Composite arm holding the not-yet-materialized regions.
#[derive(Debug, Clone)]
pub struct TreeArm {
    pub boxes: Vec<ScoredBox>,
}

impl TreeArm {
    pub fn index(&self, cfg: &SearchConfig) -> f64 {
        self.max_lp() / cfg.reward_scale
    }

    pub fn max_lp(&self) -> f64 {
        self.boxes
            .iter()
            .map(|b| b.lp_value)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct MitosisResult {
    pub best: BudgetAllocation,
    pub best_mean: f64,
    pub arms: Vec<CandidateArm>,
    /// Allocation pulled each round.
    pub pull_history: Vec<Vec<u32>>,
    /// TreeArm index right before each of its splits.
    pub tree_index_trace: Vec<f64>,
    /// Boxes still held by the tree arm when the search stopped.
    pub remaining_tree_boxes: Vec<ScoredBox>,
}

/// UCB search over allocations. The candidate set starts as a single tree
/// arm covering the whole region; whenever the tree arm carries the best
/// index its most promising allocation is split out as a standard arm and
/// pulled once with the fast evaluator.
pub fn mitosis(
    inst: &CbbInstance,
    budget: u32,
    ctx: &OracleCtx,
    cfg: &SearchConfig,
) -> MitosisResult {
    let root = score_box(inst, &initial_box(inst, budget), budget);
    let mut tree = if root.lp_value > f64::NEG_INFINITY {
        Some(TreeArm { boxes: vec![root] })
    } else {
        None
    };
    let mut arms: Vec<CandidateArm> = Vec::new();
    let mut history = Vec::new();
    let mut tree_trace = Vec::new();
    let round_of = |alloc: &BudgetAllocation, round: u64| match cfg.theta {
        Some(theta) => ctx.oracle_small_fair(alloc, round, theta).mean,
        None => ctx.oracle_small(alloc, round).mean,
    };
    for t in 1..=cfg.mitosis_rounds as u64 {
        let best_standard = (0..arms.len()).max_by(|&a, &b| {
            ucb_index(&arms[a], t, cfg)
                .total_cmp(&ucb_index(&arms[b], t, cfg))
                .then(arms[b].pulls.cmp(&arms[a].pulls))
        });
        let tree_index = tree.as_ref().map(|ta| ta.index(cfg));
        let take_tree = match (tree_index, best_standard) {
            (Some(ti), Some(i)) => ti >= ucb_index(&arms[i], t, cfg),
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        if take_tree {
            let ta = tree.as_mut().unwrap();
            tree_trace.push(ta.index(cfg));
            let best_box = (0..ta.boxes.len())
                .max_by(|&a, &b| ta.boxes[a].lp_value.total_cmp(&ta.boxes[b].lp_value))
                .unwrap();
            let chosen = ta.boxes.swap_remove(best_box);
            let (point, siblings) = descend_to_point(inst, &chosen, budget, true);
            ta.boxes.extend(siblings);
            if ta.boxes.is_empty() {
                tree = None;
            }
            let value = round_of(&point, t);
            history.push(point.per_context.clone());
            arms.push(CandidateArm {
                allocation: point,
                pulls: 1,
                empirical_mean: value,
            });
        } else {
            let i = best_standard.unwrap();
            let value = round_of(&arms[i].allocation, t + (cfg.mitosis_rounds as u64) * i as u64);
            history.push(arms[i].allocation.per_context.clone());
            arms[i].update(value);
        }
    }
    let best_arm = arms
        .iter()
        .max_by(|a, b| a.empirical_mean.total_cmp(&b.empirical_mean))
        .expect("no arms materialized");
    MitosisResult {
        best: best_arm.allocation.clone(),
        best_mean: best_arm.empirical_mean,
        arms: arms.clone(),
        pull_history: history,
        tree_index_trace: tree_trace,
        remaining_tree_boxes: tree.map(|ta| ta.boxes).unwrap_or_default(),
    }
}

/// Cumulative per-round optimality gaps under accurate-oracle values.
pub fn regret_trace(
    history: &[Vec<u32>],
    budget: u32,
    ctx: &OracleCtx,
    cfg: &SearchConfig,
    best_value: f64,
) -> Vec<f64> {
    let mut cache = HashMap::new();
    let mut cum = 0.0;
    history
        .iter()
        .map(|p| {
            let alloc = BudgetAllocation::new(p.clone(), budget);
            let (v, _) = evaluate(ctx, cfg, &mut cache, &alloc);
            cum += (best_value - v).max(0.0);
            cum
        })
        .collect()
}
