//! Random forest regression with out-of-bag predictions and per-leaf
//! training membership lists.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::tree::{fit_tree_on_targets, TreeModel, TreeSettings, DEFAULT_MIN_NODE};
use crate::models::{Dataset, FittedValues, MeanModel};
use crate::seeding::stream_rng;

/// Which training points populate the per-leaf membership lists used for
/// forest-weight quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum MembershipMode {
    /// Route every training point through every tree (default).
    AllTrainingPoints,
    /// Only the bootstrap sample each tree was fit on, with multiplicity.
    InBag,
}

#[derive(Debug, Clone)]
pub struct ForestSettings {
    pub n_trees: usize,
    /// Candidate features per split; defaults to `floor(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_node: usize,
    pub membership: MembershipMode,
}

impl Default for ForestSettings {
    fn default() -> Self {
        ForestSettings {
            n_trees: 500,
            mtry: None,
            min_node: DEFAULT_MIN_NODE,
            membership: MembershipMode::AllTrainingPoints,
        }
    }
}

/// A fitted random forest.
#[derive(Debug, Clone)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    /// Per tree: how many times each training row entered its bootstrap.
    in_bag_counts: Vec<Vec<u32>>,
    mtry: usize,
    /// Out-of-bag prediction per training point; `None` when the point was
    /// in-bag for every tree.
    oob_predictions: Vec<Option<f64>>,
    /// Per tree: leaf node id -> training indices in that leaf.
    leaf_memberships: Vec<HashMap<u32, Vec<u32>>>,
    n_train: usize,
    n_features: usize,
}

/// Fit a forest of `n_trees` trees, each on a bootstrap resample, grown to
/// full depth subject to the minimum node size.
pub fn fit_random_forest(
    data: &Dataset,
    n_trees: usize,
    mtry: usize,
    seed: u64,
) -> Result<ForestModel> {
    let settings = ForestSettings {
        n_trees,
        mtry: Some(mtry),
        ..ForestSettings::default()
    };
    fit_random_forest_with(data, &settings, seed)
}

pub fn fit_random_forest_with(
    data: &Dataset,
    settings: &ForestSettings,
    seed: u64,
) -> Result<ForestModel> {
    let n = data.n_rows();
    let p = data.n_features();
    if settings.n_trees < 1 {
        return Err(Error::InvalidInput("need at least one tree".to_string()));
    }
    let mtry = settings.mtry.unwrap_or_else(|| (p as f64).sqrt().floor() as usize);
    let mtry = mtry.clamp(1, p);
    if settings.mtry.is_some_and(|m| m < 1 || m > p) {
        return Err(Error::InvalidInput(format!(
            "mtry must lie in [1, {p}], got {}",
            settings.mtry.unwrap()
        )));
    }

    let tree_settings = TreeSettings {
        max_depth: usize::MAX,
        mtry,
        min_node: settings.min_node,
    };

    // One RNG stream per tree, so parallel and serial fits agree.
    let fitted: Vec<(TreeModel, Vec<u32>, HashMap<u32, Vec<u32>>)> = (0..settings.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(seed, t as u64);
            let mut counts = vec![0u32; n];
            let mut rows = Vec::with_capacity(n);
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                counts[i] += 1;
                rows.push(i as u32);
            }
            let tree = fit_tree_on_targets(data, data.responses(), rows, &tree_settings, &mut rng);
            let membership = leaf_membership(&tree, data, &counts, settings.membership);
            (tree, counts, membership)
        })
        .collect();

    let mut trees = Vec::with_capacity(settings.n_trees);
    let mut in_bag_counts = Vec::with_capacity(settings.n_trees);
    let mut leaf_memberships = Vec::with_capacity(settings.n_trees);
    for (tree, counts, membership) in fitted {
        trees.push(tree);
        in_bag_counts.push(counts);
        leaf_memberships.push(membership);
    }

    // Out-of-bag aggregation over trees, in tree order.
    let mut sums = vec![0.0; n];
    let mut counts = vec![0u32; n];
    for (tree, bag) in trees.iter().zip(&in_bag_counts) {
        for i in 0..n {
            if bag[i] == 0 {
                sums[i] += tree.predict_row(data.row(i));
                counts[i] += 1;
            }
        }
    }
    let oob_predictions = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { Some(s / c as f64) } else { None })
        .collect();

    Ok(ForestModel {
        trees,
        in_bag_counts,
        mtry,
        oob_predictions,
        leaf_memberships,
        n_train: n,
        n_features: p,
    })
}

fn leaf_membership(
    tree: &TreeModel,
    data: &Dataset,
    in_bag_counts: &[u32],
    mode: MembershipMode,
) -> HashMap<u32, Vec<u32>> {
    let mut membership: HashMap<u32, Vec<u32>> = HashMap::new();
    match mode {
        MembershipMode::AllTrainingPoints => {
            for i in 0..data.n_rows() {
                let leaf = tree.leaf_id(data.row(i));
                membership.entry(leaf).or_default().push(i as u32);
            }
        }
        MembershipMode::InBag => {
            for (i, &count) in in_bag_counts.iter().enumerate() {
                if count == 0 {
                    continue;
                }
                let leaf = tree.leaf_id(data.row(i));
                membership
                    .entry(leaf)
                    .or_default()
                    .extend(std::iter::repeat(i as u32).take(count as usize));
            }
        }
    }
    membership
}

impl ForestModel {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    /// Bootstrap multiplicity of each training row in tree `t`.
    pub fn in_bag_counts(&self, t: usize) -> &[u32] {
        &self.in_bag_counts[t]
    }

    pub fn oob_predictions(&self) -> &[Option<f64>] {
        &self.oob_predictions
    }

    /// Training indices sharing leaf `leaf` of tree `t`.
    pub fn leaf_membership(&self, t: usize, leaf: u32) -> &[u32] {
        self.leaf_memberships[t]
            .get(&leaf)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// RMSE of the out-of-bag predictions over the points that have one.
    pub fn oob_rmse(&self, responses: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (pred, &y) in self.oob_predictions.iter().zip(responses) {
            if let Some(p) = pred {
                sum += (p - y).powi(2);
                count += 1;
            }
        }
        if count == 0 {
            f64::INFINITY
        } else {
            (sum / count as f64).sqrt()
        }
    }
}

impl MeanModel for ForestModel {
    /// Mean of the per-tree predictions.
    fn predict_row(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
        sum / self.trees.len() as f64
    }

    /// Out-of-bag predictions; points in-bag for every tree fall back to the
    /// full-forest prediction and are listed in `substituted`.
    fn training_fitted_values(&self, data: &Dataset) -> Result<FittedValues> {
        if data.n_rows() != self.n_train || data.n_features() != self.n_features {
            return Err(Error::InvalidInput(format!(
                "forest was trained on {} x {} data, got {} x {}",
                self.n_train,
                self.n_features,
                data.n_rows(),
                data.n_features()
            )));
        }
        let mut substituted = Vec::new();
        let values = self
            .oob_predictions
            .iter()
            .enumerate()
            .map(|(i, pred)| match pred {
                Some(p) => *p,
                None => {
                    substituted.push(i);
                    self.predict_row(data.row(i))
                }
            })
            .collect();
        Ok(FittedValues { values, substituted })
    }
}
