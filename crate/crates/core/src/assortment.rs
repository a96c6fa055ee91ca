//! Cardinality-constrained MNL assortment optimisation.
//!
//! Maximises `sum_{i in S} r_i w_i / (1 + sum_{j in S} w_j)` with `w_i = e^{u_i}`
//! over `|S| <= K`. The optimal value `V` is the unique fixed point of
//! `V = g(V)`, where `g(V)` sums the `K` largest positive terms `w_i (r_i - V)`.

use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX_ARMS: usize = 20;

/// Largest utility fed to `exp`; keeps weights finite.
const MAX_UTILITY: f64 = 700.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AssortmentProblem {
    pub rewards: Vec<f64>,
    pub utilities: Vec<f64>,
    pub capacity: usize,
}

impl AssortmentProblem {
    pub fn new(rewards: Vec<f64>, utilities: Vec<f64>, capacity: usize) -> Result<Self> {
        if rewards.len() != utilities.len() {
            return Err(Error::InvalidInput("rewards and utilities differ in length".into()));
        }
        if rewards.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::InvalidInput("rewards must be finite and >= 0".into()));
        }
        if utilities.iter().any(|u| !u.is_finite()) {
            return Err(Error::InvalidInput("utilities must be finite".into()));
        }
        Ok(Self { rewards, utilities, capacity })
    }

    pub fn n_arms(&self) -> usize {
        self.rewards.len()
    }

    fn weight(&self, i: usize) -> f64 {
        self.utilities[i].min(MAX_UTILITY).exp()
    }
}

/// Objective of `set`, evaluated with a max-shift so large utilities cannot overflow.
pub fn objective(set: &[usize], problem: &AssortmentProblem) -> f64 {
    if set.is_empty() {
        return 0.0;
    }
    let m = set.iter().map(|&i| problem.utilities[i]).fold(0.0_f64, f64::max);
    let mut num = 0.0;
    let mut den = (-m).exp();
    for &i in set {
        let w = (problem.utilities[i] - m).exp();
        num += problem.rewards[i] * w;
        den += w;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Selected arms in ascending index order.
    pub set: Vec<usize>,
    pub value: f64,
}

/// Arms contributing to `g(level)`: the `K` largest positive `w_i (r_i - level)`,
/// ties to the lower index.
fn top_contributors(problem: &AssortmentProblem, level: f64) -> (Vec<usize>, f64) {
    let mut terms: Vec<(usize, f64)> = (0..problem.n_arms())
        .filter(|&i| problem.rewards[i] > 0.0)
        .map(|i| (i, problem.weight(i) * (problem.rewards[i] - level)))
        .filter(|&(_, t)| t > 0.0)
        .collect();
    terms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    terms.truncate(problem.capacity);
    let total = terms.iter().map(|t| t.1).sum();
    let mut set: Vec<usize> = terms.into_iter().map(|t| t.0).collect();
    set.sort_unstable();
    (set, total)
}

/// Exact optimum by bisection on the revenue level.
pub fn solve(problem: &AssortmentProblem) -> Solution {
    let r_max = problem.rewards.iter().copied().fold(0.0_f64, f64::max);
    if r_max <= 0.0 || problem.capacity == 0 {
        return Solution { set: Vec::new(), value: 0.0 };
    }
    // g(level) - level is strictly decreasing, nonnegative at 0 and negative at r_max.
    let (mut lo, mut hi) = (0.0_f64, r_max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let (_, g) = top_contributors(problem, mid);
        let gap = g - mid;
        if gap.abs() < 1e-10 * (1.0 + r_max) {
            lo = mid;
            hi = mid;
            break;
        }
        if gap > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * r_max {
            break;
        }
    }

    // The contributing set is piecewise constant in the level; evaluate the
    // candidates on both sides of the bracket and keep the best exactly.
    let mut best = Solution { set: Vec::new(), value: 0.0 };
    for level in [lo, 0.5 * (lo + hi), hi] {
        let (set, _) = top_contributors(problem, level);
        let value = objective(&set, problem);
        if value > best.value || (value == best.value && set < best.set) {
            best = Solution { set, value };
        }
    }
    best
}

/// Exhaustive search over all subsets of size at most `K`; ties go to the
/// lexicographically smallest index set.
pub fn brute_force(problem: &AssortmentProblem) -> Result<Solution> {
    let n = problem.n_arms();
    if n > BRUTE_FORCE_MAX_ARMS {
        return Err(Error::TooLarge(format!("brute force enumerates at most {BRUTE_FORCE_MAX_ARMS} arms, got {n}")));
    }
    let mut best = Solution { set: Vec::new(), value: 0.0 };
    for_each_subset(n, problem.capacity, |set| {
        let value = objective(set, problem);
        if value > best.value {
            best = Solution { set: set.to_vec(), value };
        }
    });
    Ok(best)
}

/// Visits every subset of `0..n` with at most `k` elements in lexicographic order.
pub fn for_each_subset(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    fn recurse(start: usize, n: usize, k: usize, current: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        visit(current);
        if current.len() == k {
            return;
        }
        for i in start..n {
            current.push(i);
            recurse(i + 1, n, k, current, visit);
            current.pop();
        }
    }
    recurse(0, n, k.min(n), &mut Vec::new(), &mut visit);
}
