//! Kernel functions, bandwidth selection, and exact evaluation of weighted
//! univariate kernel sums.
//!
//! Both kernel families have unbounded support, are symmetric about zero,
//! strictly positive for finite arguments, and non-increasing in `|u|`. The
//! poly-exponential family additionally admits exact evaluation of weighted
//! sums over sorted points in `O((n + m) log n)` instead of `O(n * m)`.

use crate::error::{Error, Result};

/// Largest supported poly-exponential order. Orders anywhere near this are
/// already indistinguishable from a Gaussian in practice.
pub const MAX_POLY_ORDER: u32 = 32;

/// A smoothing kernel family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum KernelSpec {
    /// Standard normal density `exp(-u^2 / 2) / sqrt(2 pi)`.
    Gaussian,
    /// `K(u) = exp(-|u|) * sum_{j=0..=order} |u|^j / j!  /  (2 (order + 1))`.
    ///
    /// Normalized to integrate to one; order zero is the Laplace kernel and
    /// higher orders are progressively smoother at the origin.
    PolyExponential { order: u32 },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian
    }
}

impl KernelSpec {
    pub fn poly_exponential(order: u32) -> Result<Self> {
        if order > MAX_POLY_ORDER {
            return Err(Error::InvalidInput(format!(
                "poly-exponential order {order} exceeds the supported maximum {MAX_POLY_ORDER}"
            )));
        }
        Ok(KernelSpec::PolyExponential { order })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            KernelSpec::Gaussian => Ok(()),
            KernelSpec::PolyExponential { order } => {
                Self::poly_exponential(*order).map(|_| ())
            }
        }
    }
}

/// How the smoothing bandwidth is chosen.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BandwidthRule {
    /// Silverman's rule of thumb applied to the values being smoothed over.
    Silverman,
    /// A fixed bandwidth in the same units as those values.
    Fixed(f64),
}

impl Default for BandwidthRule {
    fn default() -> Self {
        BandwidthRule::Silverman
    }
}

impl BandwidthRule {
    /// Resolve the rule against a sample of values. The result is always
    /// strictly positive.
    pub fn bandwidth(&self, values: &[f64]) -> Result<f64> {
        match *self {
            BandwidthRule::Silverman => silverman_bandwidth(values),
            BandwidthRule::Fixed(h) => {
                if h.is_finite() && h > 0.0 {
                    Ok(h)
                } else {
                    Err(Error::InvalidInput(format!(
                        "fixed bandwidth must be a positive finite number, got {h}"
                    )))
                }
            }
        }
    }
}

/// Evaluate the kernel at `u`.
pub fn kernel_eval(kernel: KernelSpec, u: f64) -> Result<f64> {
    kernel.validate()?;
    if !u.is_finite() {
        return Err(Error::InvalidInput(format!(
            "kernel argument must be finite, got {u}"
        )));
    }
    Ok(kernel_eval_unchecked(kernel, u))
}

#[inline]
pub(crate) fn kernel_eval_unchecked(kernel: KernelSpec, u: f64) -> f64 {
    match kernel {
        KernelSpec::Gaussian => {
            const INV_SQRT_2PI: f64 = 0.3989422804014327;
            (-0.5 * u * u).exp() * INV_SQRT_2PI
        }
        KernelSpec::PolyExponential { order } => {
            let a = u.abs();
            // sum_{j<=k} a^j / j!, accumulated term by term
            let mut term = 1.0;
            let mut poly = 1.0;
            for j in 1..=order {
                term *= a / j as f64;
                poly += term;
            }
            (-a).exp() * poly / (2.0 * (order as f64 + 1.0))
        }
    }
}

/// Silverman's rule of thumb:
/// `h = 0.9 * min(sd, IQR / 1.34) * n^(-1/5)`.
///
/// If the IQR is zero the standard deviation alone is used; if both scale
/// estimates are zero the sample is degenerate and the caller must supply a
/// fixed bandwidth instead.
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64> {
    let n = values.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "bandwidth selection needs at least 2 values, got {n}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "bandwidth selection requires finite values".to_string(),
        ));
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();

    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let iqr = interpolated_quantile(&sorted, 0.75) - interpolated_quantile(&sorted, 0.25);

    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::DegenerateSample(
            "all values identical; supply a fixed bandwidth".to_string(),
        ));
    }
    Ok(0.9 * spread * (n as f64).powf(-0.2))
}

/// Linear-interpolation sample quantile of pre-sorted values.
fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = (n - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

/// Weighted kernel sums: entry `j` is
/// `sum_i coefficients[i] * K((sample_points[i] - query_points[j]) / h)`.
///
/// `sample_points` must be sorted ascending. Gaussian sums are evaluated
/// directly in `O(n * m)`; poly-exponential sums use an exact sweep over the
/// sorted points, `O((n + m) log n)` including the query sort.
pub fn weighted_kernel_sums(
    kernel: KernelSpec,
    sample_points: &[f64],
    coefficients: &[f64],
    query_points: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    kernel.validate()?;
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!(
            "bandwidth must be a positive finite number, got {h}"
        )));
    }
    if sample_points.len() != coefficients.len() {
        return Err(Error::InvalidInput(format!(
            "{} sample points but {} coefficients",
            sample_points.len(),
            coefficients.len()
        )));
    }
    if sample_points.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::ContractViolation(
            "sample points must be sorted ascending".to_string(),
        ));
    }
    for v in sample_points.iter().chain(coefficients).chain(query_points) {
        if !v.is_finite() {
            return Err(Error::InvalidInput(
                "kernel sums require finite inputs".to_string(),
            ));
        }
    }

    match kernel {
        KernelSpec::Gaussian => Ok(gaussian_sums(sample_points, coefficients, query_points, h)),
        KernelSpec::PolyExponential { order } => Ok(poly_exponential_sums(
            order as usize,
            sample_points,
            coefficients,
            query_points,
            h,
        )),
    }
}

fn gaussian_sums(xs: &[f64], coefs: &[f64], queries: &[f64], h: f64) -> Vec<f64> {
    queries
        .iter()
        .map(|&q| {
            xs.iter()
                .zip(coefs)
                .map(|(&x, &w)| w * kernel_eval_unchecked(KernelSpec::Gaussian, (x - q) / h))
                .sum()
        })
        .collect()
}

/// Exact poly-exponential sums via two sorted sweeps.
///
/// For a query `q`, split the sum at `q`. On each side the scaled distance
/// `d = |x - q| / h` is non-negative, and the running moments
/// `g_l = sum w_i d_i^l exp(-d_i)` can be pushed from one position to the
/// next with the binomial update
/// `g_l(t + delta) = exp(-r) * sum_m C(l, m) r^(l-m) g_m(t)`, `r = delta/h`,
/// which involves only non-negative factors. The kernel sum at `q` is then
/// `sum_l g_l / l!` scaled by the normalizing constant.
fn poly_exponential_sums(
    order: usize,
    xs: &[f64],
    coefs: &[f64],
    queries: &[f64],
    h: f64,
) -> Vec<f64> {
    let m = queries.len();
    let mut out = vec![0.0; m];
    if xs.is_empty() || m == 0 {
        return out;
    }

    let mut qorder: Vec<usize> = (0..m).collect();
    qorder.sort_unstable_by(|&a, &b| queries[a].total_cmp(&queries[b]));

    let consts = SweepConstants::new(order);

    // Points at or below each query.
    sweep(xs, coefs, queries, &qorder, h, true, &consts, &mut out);

    // Points strictly above each query, swept on the mirrored axis.
    let xs_neg: Vec<f64> = xs.iter().rev().map(|&x| -x).collect();
    let coefs_neg: Vec<f64> = coefs.iter().rev().copied().collect();
    let queries_neg: Vec<f64> = queries.iter().map(|&q| -q).collect();
    let qorder_neg: Vec<usize> = qorder.iter().rev().copied().collect();
    sweep(
        &xs_neg,
        &coefs_neg,
        &queries_neg,
        &qorder_neg,
        h,
        false,
        &consts,
        &mut out,
    );

    let norm = 1.0 / (2.0 * (order as f64 + 1.0));
    for v in &mut out {
        *v *= norm;
    }
    out
}

struct SweepConstants {
    order: usize,
    /// Pascal's triangle rows 0..=order.
    binom: Vec<Vec<f64>>,
    /// 1 / l! for l = 0..=order.
    inv_factorial: Vec<f64>,
}

impl SweepConstants {
    fn new(order: usize) -> Self {
        let mut binom = vec![vec![1.0]];
        for l in 1..=order {
            let prev = &binom[l - 1];
            let mut row = vec![1.0; l + 1];
            for m in 1..l {
                row[m] = prev[m - 1] + prev[m];
            }
            binom.push(row);
        }
        let mut inv_factorial = vec![1.0; order + 1];
        for l in 1..=order {
            inv_factorial[l] = inv_factorial[l - 1] / l as f64;
        }
        SweepConstants {
            order,
            binom,
            inv_factorial,
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    xs: &[f64],
    coefs: &[f64],
    queries: &[f64],
    qorder: &[usize],
    h: f64,
    inclusive: bool,
    consts: &SweepConstants,
    out: &mut [f64],
) {
    let k = consts.order;
    let mut g = vec![0.0; k + 1];
    let mut next = vec![0.0; k + 1];
    let mut rpow = vec![1.0; k + 1];
    let mut pos = 0.0;
    let mut has_mass = false;
    let mut i = 0;

    let advance_to = |g: &mut Vec<f64>,
                          next: &mut Vec<f64>,
                          rpow: &mut Vec<f64>,
                          pos: &mut f64,
                          has_mass: bool,
                          t: f64| {
        if !has_mass || t == *pos {
            *pos = t;
            return;
        }
        let r = (t - *pos) / h;
        let decay = (-r).exp();
        if decay == 0.0 {
            g.iter_mut().for_each(|v| *v = 0.0);
        } else {
            for l in 1..=k {
                rpow[l] = rpow[l - 1] * r;
            }
            for l in 0..=k {
                let row = &consts.binom[l];
                let mut acc = 0.0;
                for m in 0..=l {
                    acc += row[m] * rpow[l - m] * g[m];
                }
                next[l] = decay * acc;
            }
            std::mem::swap(g, next);
        }
        *pos = t;
    };

    for &qi in qorder {
        let q = queries[qi];
        while i < xs.len() && (xs[i] < q || (inclusive && xs[i] == q)) {
            advance_to(&mut g, &mut next, &mut rpow, &mut pos, has_mass, xs[i]);
            g[0] += coefs[i];
            has_mass = true;
            i += 1;
        }
        advance_to(&mut g, &mut next, &mut rpow, &mut pos, has_mass, q);
        let mut total = 0.0;
        for l in 0..=k {
            total += consts.inv_factorial[l] * g[l];
        }
        out[qi] += total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::seeding::stream_rng;

    /// Independent evaluation of the poly-exponential closed form.
    fn poly_kernel_reference(order: u32, u: f64) -> f64 {
        let a = u.abs();
        let mut factorial = 1.0;
        let mut poly = 0.0;
        for j in 0..=order {
            if j > 0 {
                factorial *= j as f64;
            }
            poly += a.powi(j as i32) / factorial;
        }
        poly * (-a).exp() / (2.0 * (order as f64 + 1.0))
    }

    /// Naive double-loop oracle for weighted kernel sums.
    fn naive_sums(kernel: KernelSpec, xs: &[f64], coefs: &[f64], queries: &[f64], h: f64) -> Vec<f64> {
        queries
            .iter()
            .map(|&q| {
                xs.iter()
                    .zip(coefs)
                    .map(|(&x, &w)| {
                        let u = (x - q) / h;
                        match kernel {
                            KernelSpec::Gaussian => {
                                w * (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt()
                            }
                            KernelSpec::PolyExponential { order } => {
                                w * poly_kernel_reference(order, u)
                            }
                        }
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn gaussian_at_zero_is_normal_density() {
        let v = kernel_eval(KernelSpec::Gaussian, 0.0).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gaussian_is_symmetric() {
        let a = kernel_eval(KernelSpec::Gaussian, 1.0).unwrap();
        let b = kernel_eval(KernelSpec::Gaussian, -1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn poly_exponential_order_one_closed_form() {
        // K(2) = (1 + 2) e^{-2} / 4, checked against an independent evaluation.
        let v = kernel_eval(KernelSpec::PolyExponential { order: 1 }, 2.0).unwrap();
        let reference = 3.0 * (-2.0f64).exp() / 4.0;
        assert!((v - reference).abs() < 1e-15);
        assert!((v - poly_kernel_reference(1, 2.0)).abs() < 1e-15);
    }

    #[test]
    fn kernels_positive_symmetric_nonincreasing() {
        let kernels = [
            KernelSpec::Gaussian,
            KernelSpec::PolyExponential { order: 0 },
            KernelSpec::PolyExponential { order: 2 },
            KernelSpec::PolyExponential { order: 5 },
        ];
        for kernel in kernels {
            let mut prev = f64::INFINITY;
            for step in 0..300 {
                let u = step as f64 * 0.1;
                let v = kernel_eval(kernel, u).unwrap();
                assert!(v > 0.0, "{kernel:?} not positive at {u}");
                assert_eq!(v, kernel_eval(kernel, -u).unwrap());
                assert!(v <= prev + 1e-15, "{kernel:?} increased at {u}");
                prev = v;
            }
        }
    }

    #[test]
    fn kernel_eval_rejects_non_finite() {
        assert!(kernel_eval(KernelSpec::Gaussian, f64::NAN).is_err());
        assert!(kernel_eval(KernelSpec::Gaussian, f64::INFINITY).is_err());
    }

    #[test]
    fn silverman_matches_sample_scale_statistics() {
        let mut rng = stream_rng(41, 0);
        let values: Vec<f64> = (0..1000)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let h = silverman_bandwidth(&values).unwrap();

        // Independent recomputation of the scale statistics.
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = (sorted.len() - 1) as f64 * p;
            let lo = pos.floor() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[lo + 1] - sorted[lo])
        };
        let iqr = q(0.75) - q(0.25);
        let expected = 0.9 * sd.min(iqr / 1.34) * n.powf(-0.2);
        assert!((h - expected).abs() <= 1e-12 * expected);

        // For standard normal data the rule lands near 0.9 * n^(-1/5).
        assert!((h - 0.9 * 1000f64.powf(-0.2)).abs() < 0.03, "h = {h}");
    }

    #[test]
    fn silverman_degenerate_sample_errors() {
        let err = silverman_bandwidth(&[0.0, 0.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSample(_)));
    }

    #[test]
    fn silverman_is_shift_invariant_and_scale_linear() {
        let values = [0.4, -1.2, 3.3, 0.0, 2.7, -0.5, 1.9, 0.1];
        let h = silverman_bandwidth(&values).unwrap();

        let shifted: Vec<f64> = values.iter().map(|v| v + 17.25).collect();
        assert_eq!(h, silverman_bandwidth(&shifted).unwrap());

        let scaled: Vec<f64> = values.iter().map(|v| v * 3.0).collect();
        let hs = silverman_bandwidth(&scaled).unwrap();
        assert!((hs - 3.0 * h).abs() <= 1e-12 * hs);
    }

    #[test]
    fn silverman_falls_back_to_sd_when_iqr_is_zero() {
        // 27 equal values surround outliers, so IQR = 0 but sd > 0.
        let mut values = vec![1.0; 27];
        values.push(5.0);
        values.push(-3.0);
        let h = silverman_bandwidth(&values).unwrap();
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((h - 0.9 * sd * n.powf(-0.2)).abs() <= 1e-12 * h);
    }

    #[test]
    fn single_point_sum_is_kernel_at_zero() {
        for kernel in [KernelSpec::Gaussian, KernelSpec::PolyExponential { order: 3 }] {
            let sums = weighted_kernel_sums(kernel, &[1.7], &[1.0], &[1.7], 0.5).unwrap();
            assert_eq!(sums.len(), 1);
            assert!((sums[0] - kernel_eval(kernel, 0.0).unwrap()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_coefficients_give_zero_sums() {
        let xs = [-1.0, 0.0, 0.5, 2.0];
        let sums = weighted_kernel_sums(
            KernelSpec::PolyExponential { order: 2 },
            &xs,
            &[0.0; 4],
            &[-3.0, 0.2, 4.0],
            1.0,
        )
        .unwrap();
        assert!(sums.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fast_poly_sums_match_naive_oracle() {
        for (instance, &order) in [0u32, 1, 2, 3, 5].iter().enumerate().flat_map(|(i, o)| {
            (0..8).map(move |r| (i * 8 + r, o))
        }) {
            let mut rng = stream_rng(100, instance as u64);
            let n = rng.gen_range(2..400);
            let m = rng.gen_range(1..120);
            let h = rng.gen_range(0.05..3.0);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
            xs.sort_by(f64::total_cmp);
            let coefs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let queries: Vec<f64> = (0..m).map(|_| rng.gen_range(-12.0..12.0)).collect();

            let kernel = KernelSpec::PolyExponential { order };
            let fast = weighted_kernel_sums(kernel, &xs, &coefs, &queries, h).unwrap();
            let naive = naive_sums(kernel, &xs, &coefs, &queries, h);
            for (f, nv) in fast.iter().zip(&naive) {
                assert!(
                    (f - nv).abs() <= 1e-10 * nv.abs().max(1e-300),
                    "order {order}: fast {f} vs naive {nv}"
                );
            }
        }
    }

    #[test]
    fn fast_poly_sums_handle_ties_between_samples_and_queries() {
        // Queries sitting exactly on sample points must count those points once.
        let xs = [-1.0, 0.0, 0.0, 2.0];
        let coefs = [0.3, 0.5, 0.2, 0.9];
        let queries = [0.0, -1.0, 2.0, 1.0];
        let kernel = KernelSpec::PolyExponential { order: 2 };
        let fast = weighted_kernel_sums(kernel, &xs, &coefs, &queries, 0.7).unwrap();
        let naive = naive_sums(kernel, &xs, &coefs, &queries, 0.7);
        for (f, nv) in fast.iter().zip(&naive) {
            assert!((f - nv).abs() <= 1e-12 * nv.abs());
        }
    }

    #[test]
    fn sums_are_linear_in_coefficients() {
        let mut rng = stream_rng(200, 0);
        let n = 150;
        let mut xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        xs.sort_by(f64::total_cmp);
        let c1: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let queries: Vec<f64> = (0..40).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let (a, b) = (1.75, -0.4);
        let combined: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| a * x + b * y).collect();

        for kernel in [KernelSpec::Gaussian, KernelSpec::PolyExponential { order: 3 }] {
            let s1 = weighted_kernel_sums(kernel, &xs, &c1, &queries, 0.8).unwrap();
            let s2 = weighted_kernel_sums(kernel, &xs, &c2, &queries, 0.8).unwrap();
            let sc = weighted_kernel_sums(kernel, &xs, &combined, &queries, 0.8).unwrap();
            for ((v1, v2), vc) in s1.iter().zip(&s2).zip(&sc) {
                let expected = a * v1 + b * v2;
                let scale = (a * v1).abs() + (b * v2).abs();
                assert!((vc - expected).abs() <= 1e-10 * scale.max(1e-12));
            }
        }
    }

    #[test]
    fn unsorted_sample_points_are_a_contract_violation() {
        let err = weighted_kernel_sums(
            KernelSpec::Gaussian,
            &[1.0, 0.0],
            &[1.0, 1.0],
            &[0.5],
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }

    #[test]
    fn non_positive_bandwidth_is_invalid() {
        for h in [0.0, -1.0, f64::NAN] {
            let err =
                weighted_kernel_sums(KernelSpec::Gaussian, &[0.0], &[1.0], &[0.5], h).unwrap_err();
            assert!(matches!(err, Error::InvalidInput(_)));
        }
    }

    #[test]
    fn distant_mass_decays_without_poisoning_the_sweep() {
        // A huge gap must not produce NaN from inf * 0 in the recursion.
        let xs = [-1e160, 0.0, 1e160];
        let coefs = [1.0, 1.0, 1.0];
        let queries = [0.0, 1e160];
        let sums = weighted_kernel_sums(
            KernelSpec::PolyExponential { order: 4 },
            &xs,
            &coefs,
            &queries,
            1.0,
        )
        .unwrap();
        for (s, q) in sums.iter().zip(&queries) {
            let expected = kernel_eval(KernelSpec::PolyExponential { order: 4 }, 0.0).unwrap();
            assert!(s.is_finite());
            assert!((s - expected).abs() < 1e-12, "query {q}: {s}");
        }
    }
}
