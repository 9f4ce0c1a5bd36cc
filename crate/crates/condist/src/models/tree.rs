//! CART-style regression trees: greedy binary splits minimizing within-node
//! sum of squared deviations, with per-node feature subsampling.

use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::models::Dataset;
use crate::seeding::stream_rng;

/// Nodes with fewer training points than this are not split.
pub const DEFAULT_MIN_NODE: usize = 5;

#[derive(Debug, Clone)]
pub struct TreeSettings {
    pub max_depth: usize,
    pub mtry: usize,
    pub min_node: usize,
}

#[derive(Debug, Clone)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        mean: f64,
        /// Training indices reaching this leaf during fitting, with
        /// multiplicity when the fitting rows contained duplicates.
        members: Vec<u32>,
    },
}

/// A fitted regression tree.
#[derive(Debug, Clone)]
pub struct TreeModel {
    nodes: Vec<Node>,
    max_depth: usize,
}

impl TreeModel {
    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.leaf_mean(self.leaf_id(x))
    }

    /// Index of the leaf node the row is routed to.
    pub fn leaf_id(&self, x: &[f64]) -> u32 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[*feature] <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                Node::Leaf { .. } => return at as u32,
            }
        }
    }

    pub fn leaf_mean(&self, leaf: u32) -> f64 {
        match &self.nodes[leaf as usize] {
            Node::Leaf { mean, .. } => *mean,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Training indices that reached the leaf during fitting.
    pub fn leaf_members(&self, leaf: u32) -> &[u32] {
        match &self.nodes[leaf as usize] {
            Node::Leaf { members, .. } => members,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    /// Indices of all leaf nodes.
    pub fn leaf_ids(&self) -> Vec<u32> {
        (0..self.nodes.len() as u32)
            .filter(|&i| matches!(self.nodes[i as usize], Node::Leaf { .. }))
            .collect()
    }

    /// Replace each leaf value using its members (gradient boosting swaps
    /// in loss-specific leaf updates after fitting on pseudo-targets).
    pub(crate) fn update_leaf_means(&mut self, mut update: impl FnMut(&[u32], f64) -> f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { mean, members } = node {
                *mean = update(members, *mean);
            }
        }
    }
}

/// Fit a regression tree on the dataset's responses.
///
/// `row_subset` is the multiset of training rows to fit on; `mtry` features
/// are sampled uniformly as split candidates at every node; `seed` fixes the
/// feature sampling.
pub fn fit_tree(
    data: &Dataset,
    max_depth: usize,
    mtry: usize,
    row_subset: &[usize],
    seed: u64,
) -> Result<TreeModel> {
    if row_subset.is_empty() {
        return Err(Error::InvalidInput("empty row subset".to_string()));
    }
    if mtry < 1 || mtry > data.n_features() {
        return Err(Error::InvalidInput(format!(
            "mtry must lie in [1, {}], got {mtry}",
            data.n_features()
        )));
    }
    if row_subset.iter().any(|&i| i >= data.n_rows()) {
        return Err(Error::InvalidInput("row index out of range".to_string()));
    }
    let rows: Vec<u32> = row_subset.iter().map(|&i| i as u32).collect();
    let settings = TreeSettings {
        max_depth,
        mtry,
        min_node: DEFAULT_MIN_NODE,
    };
    let mut rng = stream_rng(seed, 0);
    Ok(fit_tree_on_targets(
        data,
        data.responses(),
        rows,
        &settings,
        &mut rng,
    ))
}

/// Fit a tree against arbitrary per-row targets (residuals, gradients).
pub fn fit_tree_on_targets(
    data: &Dataset,
    targets: &[f64],
    rows: Vec<u32>,
    settings: &TreeSettings,
    rng: &mut ChaCha12Rng,
) -> TreeModel {
    debug_assert_eq!(targets.len(), data.n_rows());
    let mut nodes = Vec::new();
    nodes.push(Node::Leaf {
        mean: 0.0,
        members: Vec::new(),
    });

    // Depth-first build with an explicit stack; full-depth trees on large
    // samples would otherwise risk exhausting the call stack.
    let mut stack = vec![(0usize, rows, 0usize)];
    let mut max_depth_seen = 0;
    while let Some((slot, rows, depth)) = stack.pop() {
        max_depth_seen = max_depth_seen.max(depth);
        let sum: f64 = rows.iter().map(|&i| targets[i as usize]).sum();
        let count = rows.len() as f64;
        let mean = sum / count;

        let split = if depth < settings.max_depth && rows.len() >= settings.min_node {
            best_split(data, targets, &rows, sum, count, settings.mtry, rng)
        } else {
            None
        };

        match split {
            None => {
                nodes[slot] = Node::Leaf { mean, members: rows };
            }
            Some((feature, threshold)) => {
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
                    .into_iter()
                    .partition(|&i| data.value(i as usize, feature) <= threshold);
                let left = nodes.len() as u32;
                let right = left + 1;
                nodes.push(Node::Leaf {
                    mean: 0.0,
                    members: Vec::new(),
                });
                nodes.push(Node::Leaf {
                    mean: 0.0,
                    members: Vec::new(),
                });
                nodes[slot] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                stack.push((right as usize, right_rows, depth + 1));
                stack.push((left as usize, left_rows, depth + 1));
            }
        }
    }
    TreeModel {
        nodes,
        max_depth: max_depth_seen,
    }
}

/// The split maximizing `S_L^2/n_L + S_R^2/n_R` (equivalently, minimizing
/// the summed child SSE) over `mtry` sampled features. `None` when no split
/// strictly improves on the parent.
fn best_split(
    data: &Dataset,
    targets: &[f64],
    rows: &[u32],
    sum: f64,
    count: f64,
    mtry: usize,
    rng: &mut ChaCha12Rng,
) -> Option<(usize, f64)> {
    let parent_score = sum * sum / count;
    let mut best: Option<(f64, usize, f64)> = None;

    let features = rand::seq::index::sample(rng, data.n_features(), mtry);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    for feature in features {
        pairs.clear();
        pairs.extend(
            rows.iter()
                .map(|&i| (data.value(i as usize, feature), targets[i as usize])),
        );
        pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            continue; // constant feature in this node
        }

        let mut left_sum = 0.0;
        for i in 0..pairs.len() - 1 {
            left_sum += pairs[i].1;
            let (x, x_next) = (pairs[i].0, pairs[i + 1].0);
            if x == x_next {
                continue;
            }
            let left_count = (i + 1) as f64;
            let right_count = count - left_count;
            let right_sum = sum - left_sum;
            let score = left_sum * left_sum / left_count + right_sum * right_sum / right_count;
            let improved = match best {
                Some((best_score, _, _)) => score > best_score,
                None => score > parent_score,
            };
            if improved {
                // Midpoint threshold; pulled back to the left value when
                // rounding would leak the right neighbour into the left child.
                let mut threshold = 0.5 * (x + x_next);
                if threshold >= x_next {
                    threshold = x;
                }
                best = Some((score, feature, threshold));
            }
        }
    }
    best.map(|(_, feature, threshold)| (feature, threshold))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(xs: &[f64], ys: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys.to_vec()).unwrap()
    }

    #[test]
    fn constant_response_yields_single_leaf() {
        let data = dataset(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[7.0; 6]);
        let rows: Vec<usize> = (0..6).collect();
        let tree = fit_tree(&data, 10, 1, &rows, 3).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.predict_row(&[2.5]), 7.0);
    }

    #[test]
    fn step_function_split_matches_exhaustive_search() {
        // y = I(x > 0) on 20 points; depth-1 tree must find the sign boundary.
        let xs: Vec<f64> = (0..20).map(|i| i as f64 - 9.5).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| f64::from(x > 0.0)).collect();
        let data = dataset(&xs, &ys);
        let rows: Vec<usize> = (0..20).collect();
        let tree = fit_tree(&data, 1, 1, &rows, 5).unwrap();

        // Exhaustive oracle: the best SSE over all single-feature thresholds.
        let mut best_sse = f64::INFINITY;
        for i in 0..19 {
            let thr = 0.5 * (xs[i] + xs[i + 1]);
            let (mut ls, mut lc, mut rs, mut rc) = (0.0, 0.0, 0.0, 0.0);
            for (&x, &y) in xs.iter().zip(&ys) {
                if x <= thr {
                    ls += y;
                    lc += 1.0;
                } else {
                    rs += y;
                    rc += 1.0;
                }
            }
            let mut sse = 0.0;
            for (&x, &y) in xs.iter().zip(&ys) {
                let mean = if x <= thr { ls / lc } else { rs / rc };
                sse += (y - mean).powi(2);
            }
            best_sse = best_sse.min(sse);
        }

        let tree_sse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| (y - tree.predict_row(&[x])).powi(2))
            .sum();
        assert!((tree_sse - best_sse).abs() <= 1e-12);
        assert_eq!(tree.predict_row(&[-3.0]), 0.0);
        assert_eq!(tree.predict_row(&[3.0]), 1.0);
    }

    #[test]
    fn prediction_equals_stored_leaf_mean_of_members() {
        let xs: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| x * x + (x * 5.0).cos()).collect();
        let data = dataset(&xs, &ys);
        let rows: Vec<usize> = (0..40).collect();
        let tree = fit_tree(&data, 4, 1, &rows, 11).unwrap();

        for i in 0..40 {
            let leaf = tree.leaf_id(data.row(i));
            let members = tree.leaf_members(leaf);
            assert!(members.contains(&(i as u32)));
            let mean: f64 =
                members.iter().map(|&j| ys[j as usize]).sum::<f64>() / members.len() as f64;
            assert!((tree.leaf_mean(leaf) - mean).abs() <= 1e-12);
            assert_eq!(tree.predict_row(data.row(i)), tree.leaf_mean(leaf));
        }
    }

    #[test]
    fn empty_row_subset_is_invalid() {
        let data = dataset(&[0.0, 1.0], &[0.0, 1.0]);
        assert!(matches!(
            fit_tree(&data, 3, 1, &[], 0),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn depth_limit_is_respected() {
        let xs: Vec<f64> = (0..64).map(|i| i as f64).collect();
        let ys = xs.clone();
        let data = dataset(&xs, &ys);
        let rows: Vec<usize> = (0..64).collect();
        let tree = fit_tree(&data, 2, 1, &rows, 0).unwrap();
        assert!(tree.max_depth() <= 2);
    }
}
