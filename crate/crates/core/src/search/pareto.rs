//! Nondominated sorting and crowding distance for (maximize accuracy,
//! minimize energy) points.

use serde::{Deserialize, Serialize};

use crate::search::trial::TrialResult;

/// An objective pair: accuracy (higher is better), energy (lower is better).
pub type Point = (f64, f64);

pub fn dominates(a: Point, b: Point) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Fronts of indices into `points`, best first. Equal points share a rank.
pub fn nondominated_sort(points: &[Point]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dominates(points[i], points[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of `front` (same order). Boundary
/// points get infinity.
pub fn crowding_distance(points: &[Point], front: &[usize]) -> Vec<f64> {
    let m = front.len();
    let mut dist = vec![0.0; m];
    if m <= 2 {
        return vec![f64::INFINITY; m];
    }
    let objectives: [fn(&Point) -> f64; 2] = [|p| p.0, |p| p.1];
    for f in objectives {
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| f(&points[front[a]]).total_cmp(&f(&points[front[b]])).then(front[a].cmp(&front[b])));
        let lo = f(&points[front[order[0]]]);
        let hi = f(&points[front[order[m - 1]]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[m - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..m - 1 {
                let gap = f(&points[front[order[k + 1]]]) - f(&points[front[order[k - 1]]]);
                dist[order[k]] += gap / (hi - lo);
            }
        }
    }
    dist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront {
    /// Nondominated complete trials, by ascending energy then trial index.
    pub members: Vec<TrialResult>,
    pub warning: Option<String>,
}

impl ParetoFront {
    /// The member with the best integer-only test accuracy; ties go to
    /// lower energy, then to the earlier trial.
    pub fn best(&self) -> Option<&TrialResult> {
        self.members.iter().max_by(|a, b| {
            let key = |t: &TrialResult| (t.metrics.quant_accuracy.unwrap_or(f64::NEG_INFINITY), t.metrics.energy_mj.unwrap_or(f64::INFINITY));
            let (ka, kb) = (key(a), key(b));
            ka.0.total_cmp(&kb.0).then(kb.1.total_cmp(&ka.1)).then(b.index.cmp(&a.index))
        })
    }
}

/// Rank-0 of all complete trials.
pub fn pareto_front(trials: &[TrialResult]) -> ParetoFront {
    let complete: Vec<&TrialResult> = trials.iter().filter(|t| t.is_complete()).collect();
    if complete.is_empty() {
        let msg = if trials.is_empty() { "study has no trials" } else { "every trial was pruned" };
        log::warn!("empty Pareto front: {msg}");
        return ParetoFront { members: Vec::new(), warning: Some(msg.into()) };
    }
    let points: Vec<Point> = complete.iter().map(|t| t.objectives()).collect();
    let fronts = nondominated_sort(&points);
    let mut members: Vec<TrialResult> = fronts[0].iter().map(|&i| complete[i].clone()).collect();
    members.sort_by(|a, b| a.objectives().1.total_cmp(&b.objectives().1).then(a.index.cmp(&b.index)));
    ParetoFront { members, warning: None }
}
