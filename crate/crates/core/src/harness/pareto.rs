use serde::{Deserialize, Serialize};

/// One (cost, error) operating point with its origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub cost: f64,
    pub error: f64,
    pub family: String,
    pub width: usize,
    pub waves: usize,
    pub seed: u64,
}

impl ParetoPoint {
    pub fn new(cost: f64, error: f64) -> Self {
        ParetoPoint { cost, error, family: String::new(), width: 0, waves: 0, seed: 0 }
    }
}

/// `a` dominates `b`: no worse on both axes and strictly better on one.
pub fn dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Indices of non-dominated points, ordered by cost then error then index.
/// Points with a non-finite coordinate are ignored.
pub fn pareto_indices(cost: &[f64], error: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> =
        (0..cost.len().min(error.len())).filter(|&i| cost[i].is_finite() && error[i].is_finite()).collect();
    idx.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(error[a].total_cmp(&error[b])).then(a.cmp(&b)));
    let mut front = Vec::new();
    let mut best_cheaper = f64::INFINITY;
    let mut i = 0;
    while i < idx.len() {
        let c = cost[idx[i]];
        let mut j = i;
        while j < idx.len() && cost[idx[j]] == c {
            j += 1;
        }
        // Sorted by error within equal cost, so the group minimum comes first.
        let group_min = error[idx[i]];
        if group_min < best_cheaper {
            front.extend(idx[i..j].iter().copied().filter(|&k| error[k] == group_min));
            best_cheaper = group_min;
        }
        i = j;
    }
    front
}

/// Points not dominated by any other, sorted by cost ascending; exact ties
/// on both axes are all kept.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let cost: Vec<f64> = points.iter().map(|p| p.cost).collect();
    let error: Vec<f64> = points.iter().map(|p| p.error).collect();
    pareto_indices(&cost, &error).into_iter().map(|i| points[i].clone()).collect()
}
