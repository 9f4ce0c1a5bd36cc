//! Base mean-function regressors and the model-selection protocol.
//!
//! Three regressors are provided: a ridge-penalized linear model, a random
//! forest with out-of-bag predictions, and stagewise gradient boosting.
//! Selection uses 5-fold cross-validation (or out-of-bag error for the
//! forest) with an overfit guard: candidates whose training error falls
//! below half their validation error are discarded, because residuals on
//! overfit training predictions no longer resemble those on unseen points.

mod boost;
mod ridge;
mod tree;

pub mod forest;

pub use boost::{fit_gbm, staged_metric, BoostModel, GbmSettings};
pub use forest::{
    fit_random_forest, fit_random_forest_with, ForestModel, ForestSettings, MembershipMode,
};
pub use ridge::{fit_ridge, ridge_penalty_grid, RidgeModel};
pub use tree::{fit_tree, fit_tree_on_targets, TreeModel, TreeSettings, DEFAULT_MIN_NODE};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::seeding::{derive_seed, stream_rng};

/// A covariate matrix paired with a response vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Vec<f64>, // row-major, n * p
    responses: Vec<f64>,
    n: usize,
    p: usize,
    feature_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::InvalidInput("ragged covariate rows".to_string()));
        }
        let mut flat = Vec::with_capacity(n * p);
        for row in rows {
            flat.extend(row);
        }
        Self::from_flat(flat, n, p, responses, None)
    }

    pub fn from_flat(
        covariates: Vec<f64>,
        n: usize,
        p: usize,
        responses: Vec<f64>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if n < 2 || p < 1 {
            return Err(Error::InvalidInput(format!(
                "dataset needs n >= 2 rows and p >= 1 features, got n = {n}, p = {p}"
            )));
        }
        if covariates.len() != n * p || responses.len() != n {
            return Err(Error::InvalidInput(format!(
                "shape mismatch: {} covariate entries and {} responses for n = {n}, p = {p}",
                covariates.len(),
                responses.len()
            )));
        }
        if covariates.iter().chain(&responses).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dataset entries must be finite".to_string(),
            ));
        }
        if let Some(names) = &feature_names {
            if names.len() != p {
                return Err(Error::InvalidInput(format!(
                    "{} feature names for p = {p} features",
                    names.len()
                )));
            }
        }
        Ok(Dataset {
            covariates,
            responses,
            n,
            p,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.p..(i + 1) * self.p]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.covariates[i * self.p + j]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Rows `indices` as a new dataset (order preserved, duplicates allowed).
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut covariates = Vec::with_capacity(indices.len() * self.p);
        let mut responses = Vec::with_capacity(indices.len());
        for &i in indices {
            covariates.extend_from_slice(self.row(i));
            responses.push(self.responses[i]);
        }
        Dataset::from_flat(
            covariates,
            indices.len(),
            self.p,
            responses,
            self.feature_names.clone(),
        )
    }

    pub fn n_distinct_responses(&self) -> usize {
        let mut sorted = self.responses.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        sorted.dedup();
        sorted.len()
    }
}

/// Per-feature centering and scaling fitted on training data.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    pub centers: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardization {
    /// Centers are feature means; scales are sample standard deviations
    /// (constant features get scale 1 so they standardize to zero).
    pub fn fit(data: &Dataset) -> Self {
        let n = data.n_rows() as f64;
        let p = data.n_features();
        let mut centers = vec![0.0; p];
        for i in 0..data.n_rows() {
            for (j, &x) in data.row(i).iter().enumerate() {
                centers[j] += x;
            }
        }
        for c in &mut centers {
            *c /= n;
        }
        let mut scales = vec![0.0; p];
        for i in 0..data.n_rows() {
            for (j, &x) in data.row(i).iter().enumerate() {
                scales[j] += (x - centers[j]).powi(2);
            }
        }
        for s in &mut scales {
            *s = (*s / (n - 1.0)).sqrt();
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        Standardization { centers, scales }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(self.centers.iter().zip(&self.scales))
                .map(|(&v, (&c, &s))| (v - c) / s),
        );
    }
}

/// Fitted values at the training points, with the indices whose missing
/// out-of-bag entries were substituted by full-model predictions.
#[derive(Debug, Clone)]
pub struct FittedValues {
    pub values: Vec<f64>,
    pub substituted: Vec<usize>,
}

/// A fitted mean-function regressor.
pub trait MeanModel {
    fn predict_row(&self, x: &[f64]) -> f64;

    fn predict(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n_rows()).map(|i| self.predict_row(data.row(i))).collect()
    }

    /// Fitted values at the training points: out-of-bag for bagged models,
    /// in-sample predictions otherwise. `data` must be the training data.
    fn training_fitted_values(&self, data: &Dataset) -> Result<FittedValues>;
}

/// Root mean squared error of predictions against observed responses.
pub fn rmse(predictions: &[f64], responses: &[f64]) -> f64 {
    let n = predictions.len().max(1) as f64;
    (predictions
        .iter()
        .zip(responses)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// The mtry values considered for the random forest:
/// `1/3, 1/2, 1, 2 and sqrt(p)` times the default of `sqrt(p)`, floored,
/// clamped to `[1, p]`, deduplicated, ascending.
pub fn mtry_grid(p: usize) -> Vec<usize> {
    assert!(p >= 1, "p must be at least 1");
    let root = (p as f64).sqrt();
    let mut grid: Vec<usize> = [root / 3.0, root / 2.0, root, 2.0 * root]
        .iter()
        .map(|v| (v.floor() as usize).clamp(1, p))
        .collect();
    grid.push(p); // sqrt(p) * sqrt(p), exact
    grid.sort_unstable();
    grid.dedup();
    grid
}

/// A deterministic partition of `0..n` into cross-validation folds.
#[derive(Debug, Clone)]
pub struct Folds {
    folds: Vec<Vec<usize>>,
}

impl Folds {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if k < 2 || k > n {
            return Err(Error::InvalidConfiguration(format!(
                "cannot split {n} rows into {k} folds"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = stream_rng(seed, 0);
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);

        let base = n / k;
        let extra = n % k;
        let mut folds = Vec::with_capacity(k);
        let mut start = 0;
        for f in 0..k {
            let size = base + usize::from(f < extra);
            folds.push(order[start..start + size].to_vec());
            start += size;
        }
        if folds.iter().any(|f| f.len() < 2) {
            return Err(Error::InvalidConfiguration(format!(
                "fold with fewer than 2 points when splitting {n} rows into {k} folds"
            )));
        }
        Ok(Folds { folds })
    }

    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold(&self, f: usize) -> &[usize] {
        &self.folds[f]
    }

    pub fn complement(&self, f: usize) -> Vec<usize> {
        let mut rest: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != f)
            .flat_map(|(_, fold)| fold.iter().copied())
            .collect();
        rest.sort_unstable();
        rest
    }
}

/// Cross-validated training and validation RMSE of one candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScore {
    pub train_rmse: f64,
    pub validation_rmse: f64,
}

/// Fit the candidate on each fold complement and average the in-fold
/// training RMSE and the held-out validation RMSE.
pub fn cross_validate<M, F>(data: &Dataset, folds: &Folds, fit: F) -> Result<CvScore>
where
    M: MeanModel,
    F: Fn(&Dataset) -> Result<M>,
{
    let mut train_sum = 0.0;
    let mut val_sum = 0.0;
    for f in 0..folds.len() {
        let train_idx = folds.complement(f);
        let train = data.subset(&train_idx)?;
        let val = data.subset(folds.fold(f))?;
        let model = fit(&train)?;
        train_sum += rmse(&model.predict(&train), train.responses());
        val_sum += rmse(&model.predict(&val), val.responses());
    }
    Ok(CvScore {
        train_rmse: train_sum / folds.len() as f64,
        validation_rmse: val_sum / folds.len() as f64,
    })
}

/// Convenience wrapper building the fold partition from a seed.
pub fn cross_validate_seeded<M, F>(
    data: &Dataset,
    fit: F,
    folds: usize,
    seed: u64,
) -> Result<CvScore>
where
    M: MeanModel,
    F: Fn(&Dataset) -> Result<M>,
{
    let partition = Folds::new(data.n_rows(), folds, seed)?;
    cross_validate(data, &partition, fit)
}

/// One candidate entering model selection.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CandidateScore {
    pub label: String,
    pub train_rmse: f64,
    pub validation_rmse: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CandidateReport {
    pub label: String,
    pub train_rmse: f64,
    pub validation_rmse: f64,
    pub admissible: bool,
    pub chosen: bool,
}

/// Outcome of model selection over a candidate set.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SelectionReport {
    pub candidates: Vec<CandidateReport>,
    /// Index of the chosen candidate.
    pub chosen: usize,
    /// True when every candidate failed the overfit guard and the fallback
    /// (maximum train/validation ratio) was used.
    pub fallback: bool,
}

impl SelectionReport {
    pub fn chosen_candidate(&self) -> &CandidateReport {
        &self.candidates[self.chosen]
    }
}

/// Select among candidates scored by training and validation RMSE.
///
/// Admissible candidates have training error at least 50% of their
/// validation error; the admissible candidate with the smallest validation
/// error wins. If nothing is admissible, the candidate with the largest
/// train/validation ratio is chosen and the report is flagged.
pub fn select_mean_model(candidates: Vec<CandidateScore>) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to select from".to_string()));
    }
    let admissible: Vec<bool> = candidates
        .iter()
        .map(|c| c.train_rmse >= 0.5 * c.validation_rmse)
        .collect();

    let best_admissible = candidates
        .iter()
        .enumerate()
        .filter(|(i, _)| admissible[*i])
        .min_by(|(_, a), (_, b)| a.validation_rmse.total_cmp(&b.validation_rmse))
        .map(|(i, _)| i);

    let (chosen, fallback) = match best_admissible {
        Some(i) => (i, false),
        None => {
            let ratio = |c: &CandidateScore| {
                if c.validation_rmse > 0.0 {
                    c.train_rmse / c.validation_rmse
                } else if c.train_rmse == 0.0 {
                    1.0
                } else {
                    f64::INFINITY
                }
            };
            let i = candidates
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| ratio(a).total_cmp(&ratio(b)))
                .map(|(i, _)| i)
                .unwrap();
            (i, true)
        }
    };

    let reports = candidates
        .into_iter()
        .enumerate()
        .map(|(i, c)| CandidateReport {
            label: c.label,
            train_rmse: c.train_rmse,
            validation_rmse: c.validation_rmse,
            admissible: admissible[i],
            chosen: i == chosen,
        })
        .collect();
    Ok(SelectionReport {
        candidates: reports,
        chosen,
        fallback,
    })
}

/// Selection report where candidates are ranked by validation error alone
/// (used for out-of-bag forest selection and direct quantile models, which
/// do not need the overfit guard).
pub fn select_by_validation(candidates: Vec<CandidateScore>) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidates to select from".to_string()));
    }
    let chosen = candidates
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a.validation_rmse.total_cmp(&b.validation_rmse))
        .map(|(i, _)| i)
        .unwrap();
    let reports = candidates
        .into_iter()
        .enumerate()
        .map(|(i, c)| CandidateReport {
            label: c.label,
            train_rmse: c.train_rmse,
            validation_rmse: c.validation_rmse,
            admissible: true,
            chosen: i == chosen,
        })
        .collect();
    Ok(SelectionReport {
        candidates: reports,
        chosen,
        fallback: false,
    })
}

/// Ridge selection: cross-validate every penalty in the grid, apply the
/// overfit guard, and refit the winner on the full data.
pub fn select_ridge(
    data: &Dataset,
    grid_size: usize,
    folds: usize,
    seed: u64,
) -> Result<(RidgeModel, SelectionReport)> {
    let grid = ridge_penalty_grid(data, grid_size)?;
    let partition = Folds::new(data.n_rows(), folds, derive_seed(seed, 0))?;

    let scores: Vec<Result<CvScore>> = grid
        .par_iter()
        .map(|&penalty| cross_validate(data, &partition, |d| fit_ridge(d, penalty)))
        .collect();

    let mut candidates = Vec::with_capacity(grid.len());
    for (penalty, score) in grid.iter().zip(scores) {
        let score = score?;
        candidates.push(CandidateScore {
            label: format!("penalty={penalty}"),
            train_rmse: score.train_rmse,
            validation_rmse: score.validation_rmse,
        });
    }
    let report = select_mean_model(candidates)?;
    let model = fit_ridge(data, grid[report.chosen])?;
    Ok((model, report))
}

/// How the number of boosting stages is chosen from the CV curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSelection {
    /// Overfit guard plus minimum validation error (mean models).
    GuardedMeanModel,
    /// Plain minimum validation error (direct quantile models).
    MinValidation,
}

/// Gradient-boosting selection: build per-prefix train/validation RMSE
/// curves by cross-validation, pick the prefix, and fit the full model once
/// (prefix evaluation makes refitting unnecessary).
pub fn select_gbm(
    data: &Dataset,
    settings: &GbmSettings,
    folds: usize,
    seed: u64,
    selection: StageSelection,
) -> Result<(BoostModel, SelectionReport)> {
    let partition = Folds::new(data.n_rows(), folds, derive_seed(seed, 0))?;

    let curves: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..partition.len())
        .into_par_iter()
        .map(|f| {
            let train = data.subset(&partition.complement(f))?;
            let val = data.subset(partition.fold(f))?;
            let model = fit_gbm(&train, settings, derive_seed(seed, 1 + f as u64))?;
            let train_curve = staged_metric(&model, &train, |p, y| rmse(p, y));
            let val_curve = staged_metric(&model, &val, |p, y| rmse(p, y));
            Ok((train_curve, val_curve))
        })
        .collect();

    let mut train_curve = vec![0.0; settings.max_trees];
    let mut val_curve = vec![0.0; settings.max_trees];
    for curve in curves {
        let (t, v) = curve?;
        for m in 0..settings.max_trees {
            train_curve[m] += t[m];
            val_curve[m] += v[m];
        }
    }
    let k = partition.len() as f64;
    let candidates: Vec<CandidateScore> = (0..settings.max_trees)
        .map(|m| CandidateScore {
            label: format!("n_trees={}", m + 1),
            train_rmse: train_curve[m] / k,
            validation_rmse: val_curve[m] / k,
        })
        .collect();

    let report = match selection {
        StageSelection::GuardedMeanModel => select_mean_model(candidates)?,
        StageSelection::MinValidation => select_by_validation(candidates)?,
    };

    let mut model = fit_gbm(data, settings, derive_seed(seed, 1000))?;
    model.set_prefix(report.chosen + 1)?;
    Ok((model, report))
}

/// Forest selection: fit one forest per mtry value and keep the one with
/// the lowest out-of-bag RMSE.
pub fn select_forest(
    data: &Dataset,
    settings: &ForestSettings,
    seed: u64,
) -> Result<(ForestModel, SelectionReport)> {
    let grid = mtry_grid(data.n_features());
    let fits: Vec<Result<ForestModel>> = grid
        .par_iter()
        .enumerate()
        .map(|(i, &mtry)| {
            let mut s = settings.clone();
            s.mtry = Some(mtry);
            fit_random_forest_with(data, &s, derive_seed(seed, i as u64))
        })
        .collect();

    let mut candidates = Vec::with_capacity(grid.len());
    let mut models = Vec::with_capacity(grid.len());
    for (mtry, fit) in grid.iter().zip(fits) {
        let model = fit?;
        let in_sample = model.predict(data);
        let oob_rmse = model.oob_rmse(data.responses());
        candidates.push(CandidateScore {
            label: format!("mtry={mtry}"),
            train_rmse: rmse(&in_sample, data.responses()),
            validation_rmse: oob_rmse,
        });
        models.push(model);
    }
    let report = select_by_validation(candidates)?;
    Ok((models.swap_remove(report.chosen), report))
}

#[cfg(test)]
mod tests;
