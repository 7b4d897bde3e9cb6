//! Minimum-cost assignment and IoU-based label transfer.

use serde::{Deserialize, Serialize};

use crate::formats::Detection;

/// Intersection over union of two pixel boxes `[x0, y0, x1, y1]`.
pub fn box_iou(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let area = |r: &[f64; 4]| (r[2] - r[0]).max(0.0) * (r[3] - r[1]).max(0.0);
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = iw * ih;
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Minimum-cost assignment for a rectangular cost matrix (rows to columns).
///
/// The matrix is padded to square with zero-cost dummy entries, so every row is assigned
/// when rows <= columns and vice versa. Returns, per row, the assigned column.
///
/// Shortest augmenting paths with potentials, O(n^3).
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, |r| r.len());
    assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    let n = rows.max(cols);
    if n == 0 {
        return Vec::new();
    }
    let c = |i: usize, j: usize| if i < rows && j < cols { cost[i][j] } else { 0.0 };

    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![None; rows];
    for j in 1..=n {
        let i = owner[j];
        if i >= 1 && i <= rows && j <= cols {
            out[i - 1] = Some(j - 1);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssignmentResult {
    pub pairs: Vec<MatchedPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTransfer {
    pub assignment: AssignmentResult,
    /// Category inherited by each ground-truth box, if it kept a match.
    pub labels: Vec<Option<String>>,
}

/// Matches detections to ground-truth boxes on cost `1 - IoU` and copies the detection's
/// category onto each matched box. Pairs with IoU below `min_iou` are dropped after the
/// matching, leaving both sides unmatched.
pub fn hungarian_label_transfer(preds: &[Detection], gts: &[[f64; 4]], min_iou: f64) -> LabelTransfer {
    let iou: Vec<Vec<f64>> = preds.iter().map(|p| gts.iter().map(|g| box_iou(&p.bbox, g)).collect()).collect();
    let cost: Vec<Vec<f64>> = iou.iter().map(|r| r.iter().map(|x| 1.0 - x).collect()).collect();
    let assign = if preds.is_empty() || gts.is_empty() { vec![None; preds.len()] } else { min_cost_assignment(&cost) };

    let mut result = AssignmentResult::default();
    let mut labels = vec![None; gts.len()];
    let mut gt_used = vec![false; gts.len()];
    for (p, a) in assign.iter().enumerate() {
        match *a {
            Some(g) if iou[p][g] >= min_iou => {
                result.pairs.push(MatchedPair { pred: p, gt: g, iou: iou[p][g] });
                labels[g] = Some(preds[p].category.clone());
                gt_used[g] = true;
            }
            _ => result.unmatched_preds.push(p),
        }
    }
    result.unmatched_gts = (0..gts.len()).filter(|&g| !gt_used[g]).collect();
    LabelTransfer { assignment: result, labels }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    fn brute_min(cost: &[Vec<f64>]) -> f64 {
        permutations(cost.len())
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    fn det(cat: &str, bbox: [f64; 4]) -> Detection {
        Detection { category: cat.into(), bbox }
    }

    #[test]
    fn iou_basics() {
        assert_eq!(box_iou(&[0.0, 0.0, 2.0, 2.0], &[0.0, 0.0, 2.0, 2.0]), 1.0);
        assert_eq!(box_iou(&[0.0, 0.0, 1.0, 1.0], &[2.0, 2.0, 3.0, 3.0]), 0.0);
        // 1x2 overlap of two 2x2 boxes: 2 / (4 + 4 - 2)
        assert!((box_iou(&[0.0, 0.0, 2.0, 2.0], &[1.0, 0.0, 3.0, 2.0]) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_optimum() {
        let cost = vec![vec![0.1, 0.9], vec![0.8, 0.2]];
        assert_eq!(min_cost_assignment(&cost), vec![Some(0), Some(1)]);
        let swapped = vec![vec![0.9, 0.1], vec![0.2, 0.8]];
        assert_eq!(min_cost_assignment(&swapped), vec![Some(1), Some(0)]);
    }

    #[test]
    fn rectangular() {
        let wide = vec![vec![5.0, 1.0, 3.0]];
        assert_eq!(min_cost_assignment(&wide), vec![Some(1)]);
        let tall = vec![vec![5.0], vec![1.0], vec![3.0]];
        assert_eq!(min_cost_assignment(&tall), vec![None, Some(0), None]);
    }

    #[test]
    fn single_match_transfers_label() {
        let t = hungarian_label_transfer(&[det("chair", [0.0, 0.0, 10.0, 10.0])], &[[0.0, 0.0, 10.0, 9.0]], 0.4);
        assert_eq!(t.labels, vec![Some("chair".to_string())]);
        assert!((t.assignment.pairs[0].iou - 0.9).abs() < 1e-12);
    }

    #[test]
    fn low_iou_pair_is_dropped() {
        // Overlap 35 of union 100: the only possible pairing, but below 0.4.
        let gt = [0.0, 0.0, 10.0, 6.75];
        let pred = [0.0, 3.25, 10.0, 10.0];
        assert!((box_iou(&pred, &gt) - 0.35).abs() < 1e-12);
        let t = hungarian_label_transfer(&[det("lamp", pred)], &[gt], 0.4);
        assert!(t.assignment.pairs.is_empty());
        assert_eq!(t.assignment.unmatched_preds, vec![0]);
        assert_eq!(t.assignment.unmatched_gts, vec![0]);
        assert_eq!(t.labels, vec![None]);
    }

    #[test]
    fn exactly_point_four_is_kept() {
        // Overlap 40 of union 100.
        let gt = [0.0, 0.0, 10.0, 7.0];
        let pred = [0.0, 3.0, 10.0, 10.0];
        let iou = box_iou(&pred, &gt);
        assert!((iou - 0.4).abs() < 1e-12);
        let t = hungarian_label_transfer(&[det("lamp", pred)], &[gt], iou);
        assert_eq!(t.assignment.pairs.len(), 1);
    }

    #[test]
    fn empty_inputs() {
        let t = hungarian_label_transfer(&[], &[], 0.4);
        assert_eq!(t, LabelTransfer::default());
        let t = hungarian_label_transfer(&[det("a", [0.0, 0.0, 1.0, 1.0])], &[], 0.4);
        assert_eq!(t.assignment.unmatched_preds, vec![0]);
    }

    #[test]
    fn global_optimum_beats_greedy() {
        // Greedy would take (0,0) at 0.0 and then pay 10 for (1,1).
        let cost = vec![vec![0.0, 1.0], vec![1.0, 10.0]];
        assert_eq!(min_cost_assignment(&cost), vec![Some(1), Some(0)]);
    }

    proptest! {
        #[test]
        fn matches_exhaustive_search(n in 1usize..=6, seed in prop::collection::vec(0u32..1000, 36)) {
            let cost: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| seed[i * 6 + j] as f64).collect()).collect();
            let a = min_cost_assignment(&cost);
            let total: f64 = a.iter().enumerate().map(|(i, j)| cost[i][j.unwrap()]).sum();
            prop_assert_eq!(total, brute_min(&cost));
            let mut cols: Vec<usize> = a.iter().map(|j| j.unwrap()).collect();
            cols.sort();
            prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
        }
    }
}
