//! Reciprocal point learning head.
//!
//! Every known class `k` owns a reciprocal point `P^k` in embedding space. A
//! sample is scored by how *far* its embedding lies from each reciprocal point
//! (combined distance: mean squared Euclidean distance minus dot product) and
//! assigned to the farthest one. A learnable radius `R` bounds the Euclidean
//! distance of known samples to their own reciprocal point; embeddings that
//! end up closer than the threshold are rejected as unknown.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::{exp, log};

/// One radius for all classes, or one per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryMode {
    #[default]
    Shared,
    PerClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RplHead {
    n_classes: usize,
    dim: usize,
    /// Row-major `N x m`.
    points: Vec<f64>,
    /// Length 1 (shared) or `N` (per class). Never negative.
    radius: Vec<f64>,
    pub gamma: f64,
    pub lambda: f64,
}

impl RplHead {
    /// Points drawn i.i.d. from `N(0, 0.1^2)` under `seed`; radius starts at 1.
    pub fn new(n_classes: usize, dim: usize, gamma: f64, lambda: f64, mode: BoundaryMode, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1).expect("valid std");
        let points = (0..n_classes * dim).map(|_| normal.sample(&mut rng)).collect();
        let radius = match mode {
            BoundaryMode::Shared => vec![1.0],
            BoundaryMode::PerClass => vec![1.0; n_classes],
        };
        Self::from_parts(n_classes, dim, points, radius, gamma, lambda)
    }

    pub fn from_parts(
        n_classes: usize,
        dim: usize,
        points: Vec<f64>,
        radius: Vec<f64>,
        gamma: f64,
        lambda: f64,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::config("n_classes", format!("need at least 2 known classes, got {n_classes}")));
        }
        if dim < 2 {
            return Err(Error::config("embedding_dim", format!("must be >= 2, got {dim}")));
        }
        if points.len() != n_classes * dim {
            return Err(Error::shape(format!("{} point values for {n_classes}x{dim}", points.len())));
        }
        if radius.len() != 1 && radius.len() != n_classes {
            return Err(Error::shape(format!("radius must have 1 or {n_classes} entries, got {}", radius.len())));
        }
        if radius.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::config("radius", "must be >= 0"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("gamma", format!("must be > 0, got {gamma}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", format!("must be >= 0, got {lambda}")));
        }
        Ok(RplHead { n_classes, dim, points, radius, gamma, lambda })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn points_mut(&mut self) -> &mut [f64] {
        &mut self.points
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    /// Mutable radius. Callers must follow up with [`RplHead::clamp_radius`].
    pub fn radius_mut(&mut self) -> &mut [f64] {
        &mut self.radius
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        if self.radius.len() == 1 {
            BoundaryMode::Shared
        } else {
            BoundaryMode::PerClass
        }
    }

    /// Radius applying to class `k`.
    pub fn radius_for(&self, k: usize) -> f64 {
        if self.radius.len() == 1 {
            self.radius[0]
        } else {
            self.radius[k]
        }
    }

    fn radius_slot(&self, k: usize) -> usize {
        if self.radius.len() == 1 {
            0
        } else {
            k
        }
    }

    pub fn clamp_radius(&mut self) {
        self.radius.iter_mut().for_each(|r| *r = r.max(0.0));
    }

    fn check_feature(&self, feature: &[f64]) -> Result<()> {
        if feature.len() != self.dim {
            return Err(Error::shape(format!("feature has {} entries, head expects {}", feature.len(), self.dim)));
        }
        if feature.iter().any(|v| !v.is_finite()) {
            return Err(Error::numerical("feature contains non-finite values"));
        }
        Ok(())
    }

    /// Combined distance to every reciprocal point.
    pub fn distances(&self, feature: &[f64]) -> Result<Vec<f64>> {
        self.check_feature(feature)?;
        (0..self.n_classes).map(|k| dist_combined(feature, self.point(k))).collect()
    }
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::shape(format!("vector lengths {} and {} differ or are empty", a.len(), b.len())));
    }
    Ok(())
}

/// `(1/m) * ||f - p||^2` with `m` the vector length.
pub fn dist_euclid(feature: &[f64], point: &[f64]) -> Result<f64> {
    check_len(feature, point)?;
    let sq: f64 = feature.iter().zip(point).map(|(f, p)| (f - p) * (f - p)).sum();
    Ok(sq / feature.len() as f64)
}

pub fn dist_dot(feature: &[f64], point: &[f64]) -> Result<f64> {
    check_len(feature, point)?;
    Ok(feature.iter().zip(point).map(|(f, p)| f * p).sum())
}

/// `dist_euclid - dist_dot`. May be negative.
pub fn dist_combined(feature: &[f64], point: &[f64]) -> Result<f64> {
    Ok(dist_euclid(feature, point)? - dist_dot(feature, point)?)
}

/// Softmax of `gamma * d_k` with max subtraction.
fn softmax_scaled(distances: &[f64], gamma: f64) -> Vec<f64> {
    let max = distances.iter().map(|d| gamma * d).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = distances.iter().map(|d| exp(gamma * d - max)).collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

/// `p(y = k | x)`, proportional to `exp(gamma * d(f, P^k))`.
pub fn class_probabilities(feature: &[f64], head: &RplHead) -> Result<Vec<f64>> {
    let d = head.distances(feature)?;
    Ok(softmax_scaled(&d, head.gamma))
}

/// Loss value with gradients w.r.t. batch features (`B x m`), points (`N x m`) and radius.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub d_features: Vec<f64>,
    pub d_points: Vec<f64>,
    pub d_radius: Vec<f64>,
}

impl LossGrad {
    fn zeros(head: &RplHead, batch: usize) -> Self {
        LossGrad {
            value: 0.0,
            d_features: vec![0.0; batch * head.dim],
            d_points: vec![0.0; head.points.len()],
            d_radius: vec![0.0; head.radius.len()],
        }
    }

    fn axpy(&mut self, scale: f64, other: &LossGrad) {
        self.value += scale * other.value;
        for (a, b) in self
            .d_features
            .iter_mut()
            .zip(&other.d_features)
            .chain(self.d_points.iter_mut().zip(&other.d_points))
            .chain(self.d_radius.iter_mut().zip(&other.d_radius))
        {
            *a += scale * b;
        }
    }
}

fn check_batch(features: &[f64], labels: &[usize], head: &RplHead) -> Result<usize> {
    let b = labels.len();
    if b == 0 {
        return Err(Error::argument("empty batch"));
    }
    if features.len() != b * head.dim {
        return Err(Error::shape(format!(
            "{} feature values for a batch of {b} with dimension {}",
            features.len(),
            head.dim
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= head.n_classes) {
        return Err(Error::argument(format!("label {bad} outside 0..{}", head.n_classes)));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("features contain non-finite values"));
    }
    Ok(b)
}

/// Mean negative log-likelihood of the labels under [`class_probabilities`].
pub fn loss_classification(features: &[f64], labels: &[usize], head: &RplHead) -> Result<LossGrad> {
    let b = check_batch(features, labels, head)?;
    let m = head.dim;
    let inv_m = 1.0 / m as f64;
    let inv_b = 1.0 / b as f64;
    let mut out = LossGrad::zeros(head, b);
    for (i, &y) in labels.iter().enumerate() {
        let f = &features[i * m..(i + 1) * m];
        let d: Vec<f64> = (0..head.n_classes).map(|k| dist_combined(f, head.point(k))).collect::<Result<_>>()?;
        let p = softmax_scaled(&d, head.gamma);
        // -log p_y = logsumexp(gamma d) - gamma d_y
        let max = d.iter().map(|v| head.gamma * v).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + log(d.iter().map(|v| exp(head.gamma * v - max)).sum::<f64>());
        out.value += (lse - head.gamma * d[y]) * inv_b;

        let df = &mut out.d_features[i * m..(i + 1) * m];
        for k in 0..head.n_classes {
            // dL/dd_k = gamma (p_k - [k == y]) / B
            let gk = head.gamma * (p[k] - if k == y { 1.0 } else { 0.0 }) * inv_b;
            if gk == 0.0 {
                continue;
            }
            let pk = head.point(k);
            let dp = &mut out.d_points[k * m..(k + 1) * m];
            for j in 0..m {
                let diff = f[j] - pk[j];
                // dd/df = 2/m (f - p) - p ; dd/dp = -2/m (f - p) - f
                df[j] += gk * (2.0 * inv_m * diff - pk[j]);
                dp[j] += gk * (-2.0 * inv_m * diff - f[j]);
            }
        }
    }
    Ok(out)
}

/// Mean hinge `max(d_e(f, P^y) - R, 0)`. The subgradient at the kink is 0.
pub fn loss_boundary(features: &[f64], labels: &[usize], head: &RplHead) -> Result<LossGrad> {
    let b = check_batch(features, labels, head)?;
    let m = head.dim;
    let inv_m = 1.0 / m as f64;
    let inv_b = 1.0 / b as f64;
    let mut out = LossGrad::zeros(head, b);
    for (i, &y) in labels.iter().enumerate() {
        let f = &features[i * m..(i + 1) * m];
        let py = head.point(y);
        let de = dist_euclid(f, py)?;
        let excess = de - head.radius_for(y);
        if excess <= 0.0 {
            continue;
        }
        out.value += excess * inv_b;
        out.d_radius[head.radius_slot(y)] -= inv_b;
        let df = &mut out.d_features[i * m..(i + 1) * m];
        let dp = &mut out.d_points[y * m..(y + 1) * m];
        for j in 0..m {
            let g = 2.0 * inv_m * (f[j] - py[j]) * inv_b;
            df[j] += g;
            dp[j] -= g;
        }
    }
    Ok(out)
}

/// `L_c + lambda * L_o` with both components reported.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub classification: f64,
    pub boundary: f64,
    pub grad: LossGrad,
}

impl TotalLoss {
    pub fn total(&self) -> f64 {
        self.grad.value
    }
}

pub fn loss_total(features: &[f64], labels: &[usize], head: &RplHead) -> Result<TotalLoss> {
    let lc = loss_classification(features, labels, head)?;
    let lo = loss_boundary(features, labels, head)?;
    let mut grad = lc.clone();
    if head.lambda != 0.0 {
        grad.axpy(head.lambda, &lo);
    }
    Ok(TotalLoss { classification: lc.value, boundary: lo.value, grad })
}

/// Which distance is compared against the rejection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Gate {
    #[default]
    Euclid,
    Combined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// The learned radius of the predicted class.
    UseR,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenPrediction {
    /// `None` means rejected as unknown.
    pub class: Option<usize>,
    /// Closed-set winner before gating.
    pub closed_class: usize,
    /// Combined distance to every reciprocal point.
    pub distances: Vec<f64>,
    pub gating_distance: f64,
    pub threshold_used: f64,
}

impl OpenPrediction {
    pub fn is_unknown(&self) -> bool {
        self.class.is_none()
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Closed-set winner is the farthest reciprocal point; the sample is unknown
/// when its gating distance to that point is strictly below the threshold.
pub fn predict_open(feature: &[f64], head: &RplHead, gate: Gate, threshold: Threshold) -> Result<OpenPrediction> {
    let distances = head.distances(feature)?;
    let k = argmax(&distances);
    let gating_distance = match gate {
        Gate::Euclid => dist_euclid(feature, head.point(k))?,
        Gate::Combined => distances[k],
    };
    let threshold_used = match threshold {
        Threshold::UseR => head.radius_for(k),
        Threshold::Value(v) => v,
    };
    let class = if gating_distance < threshold_used { None } else { Some(k) };
    Ok(OpenPrediction { class, closed_class: k, distances, gating_distance, threshold_used })
}

/// `q`-th percentile (0..=100, linear interpolation) of gating distances,
/// typically those of the training set.
pub fn calibrate_threshold(gating_distances: &[f64], q: f64) -> Result<f64> {
    if gating_distances.is_empty() {
        return Err(Error::argument("cannot calibrate a threshold from no distances"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::argument(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = gating_distances.to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::numerical("non-finite gating distance"));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(v.len() - 1);
    let t = pos - lo as f64;
    Ok(v[lo] + t * (v[hi] - v[lo]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn head3() -> RplHead {
        RplHead::from_parts(3, 2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], vec![0.5], 1.0, 0.1).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(dist_euclid(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(dist_euclid(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(dist_dot(&[1.0, 2.0], &[3.0, 4.0]).unwrap(), 11.0);
        assert_eq!(dist_dot(&[1.0, 2.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(dist_dot(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(dist_combined(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(dist_combined(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(dist_combined(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), -2.0);
        assert!(matches!(dist_euclid(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
        // scaling both vectors by s scales d_e by s^2
        let s = 3.0;
        let a = dist_euclid(&[1.0, -2.0], &[0.5, 4.0]).unwrap();
        let b = dist_euclid(&[s, -2.0 * s], &[0.5 * s, 4.0 * s]).unwrap();
        assert!((b - s * s * a).abs() < 1e-12);
    }

    #[test]
    fn uniform_probabilities() {
        let head = RplHead::from_parts(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![1.0], 1.0, 0.1).unwrap();
        let p = class_probabilities(&[0.5, 0.5], &head).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn probability_concentrates() {
        // gamma * d = [0, 0, 10]
        let p = softmax_scaled(&[0.0, 0.0, 10.0], 1.0);
        assert!(p[2] > 0.99);
    }

    #[test]
    fn classification_loss_uniform_is_log_n() {
        let head = RplHead::from_parts(3, 2, vec![0.0; 6], vec![1.0], 2.0, 0.1).unwrap();
        let l = loss_classification(&[0.3, -0.2, 1.0, 1.0], &[0, 2], &head).unwrap();
        assert!((l.value - log(3.0)).abs() < 1e-12);
    }

    #[test]
    fn boundary_hinge_examples() {
        // d_e = 0.5 and 1.5 against R = 1, single-dimension pairs padded with zeros
        let head = RplHead::from_parts(2, 2, vec![0.0, 0.0, 5.0, 5.0], vec![1.0], 1.0, 0.1).unwrap();
        let inside = loss_boundary(&[1.0, 0.0], &[0], &head).unwrap();
        assert_eq!(inside.value, 0.0);
        assert_eq!(inside.d_radius, vec![0.0]);
        let outside = loss_boundary(&[1.5_f64.sqrt() * 2.0_f64.sqrt(), 0.0], &[0], &head).unwrap();
        assert!((outside.value - 0.5).abs() < 1e-12);
        assert_eq!(outside.d_radius, vec![-1.0]);
        // kink: d_e == R gives zero subgradient
        let kink = loss_boundary(&[1.0, 1.0], &[0], &head).unwrap();
        assert_eq!(kink.value, 0.0);
        assert!(kink.d_features.iter().chain(&kink.d_points).chain(&kink.d_radius).all(|g| *g == 0.0));
    }

    #[test]
    fn total_combines_components() {
        let head = head3();
        let f = [2.0, -1.0, 0.3, 0.8];
        let labels = [1, 2];
        let t = loss_total(&f, &labels, &head).unwrap();
        assert!((t.total() - (t.classification + 0.1 * t.boundary)).abs() < 1e-12);
        let mut h0 = head.clone();
        h0.lambda = 0.0;
        let t0 = loss_total(&f, &labels, &h0).unwrap();
        assert_eq!(t0.total(), t0.classification);
        assert!(t0.grad.d_radius.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn bad_labels_rejected() {
        let head = head3();
        assert!(matches!(loss_classification(&[0.0, 0.0], &[3], &head), Err(Error::Argument(_))));
        assert!(matches!(loss_boundary(&[0.0, 0.0], &[7], &head), Err(Error::Argument(_))));
    }

    #[test]
    fn prediction_gating() {
        let head = head3();
        // coincident with the winner's reciprocal point => unknown
        let winner = predict_open(&[0.0, 0.0], &head, Gate::Euclid, Threshold::UseR).unwrap();
        let k = winner.closed_class;
        let p = head.point(k).to_vec();
        let pred = predict_open(&p, &head, Gate::Euclid, Threshold::Value(1e-9)).unwrap();
        if pred.closed_class == k {
            assert!(pred.is_unknown());
        }
        // gating distance equal to threshold is accepted
        let f = [3.0, -1.0];
        let base = predict_open(&f, &head, Gate::Euclid, Threshold::Value(f64::NEG_INFINITY)).unwrap();
        let same = predict_open(&f, &head, Gate::Euclid, Threshold::Value(base.gating_distance)).unwrap();
        assert_eq!(same.class, Some(base.closed_class));
        let comb = predict_open(&f, &head, Gate::Combined, Threshold::Value(f64::NEG_INFINITY)).unwrap();
        assert_eq!(comb.gating_distance, comb.distances[comb.closed_class]);
    }

    #[test]
    fn coincident_feature_is_unknown() {
        // single point at the origin region: feature equals the farthest point
        let head = RplHead::from_parts(2, 2, vec![1.0, 1.0, 1.0, 1.0], vec![0.5], 1.0, 0.1).unwrap();
        let pred = predict_open(&[1.0, 1.0], &head, Gate::Euclid, Threshold::UseR).unwrap();
        assert_eq!(pred.gating_distance, 0.0);
        assert!(pred.is_unknown());
    }

    #[test]
    fn percentile_threshold() {
        let d = [5.0, 1.0, 3.0, 2.0, 4.0];
        assert_eq!(calibrate_threshold(&d, 0.0).unwrap(), 1.0);
        assert_eq!(calibrate_threshold(&d, 50.0).unwrap(), 3.0);
        assert_eq!(calibrate_threshold(&d, 100.0).unwrap(), 5.0);
        assert!((calibrate_threshold(&d, 5.0).unwrap() - 1.2).abs() < 1e-12);
        assert!(calibrate_threshold(&[], 5.0).is_err());
    }

    #[test]
    fn head_invariants() {
        assert!(RplHead::new(1, 4, 1.0, 0.1, BoundaryMode::Shared, 0).is_err());
        assert!(RplHead::new(3, 1, 1.0, 0.1, BoundaryMode::Shared, 0).is_err());
        assert!(RplHead::new(3, 4, 0.0, 0.1, BoundaryMode::Shared, 0).is_err());
        let h = RplHead::new(3, 4, 1.0, 0.1, BoundaryMode::PerClass, 9).unwrap();
        assert_eq!(h.radius(), &[1.0, 1.0, 1.0]);
        assert_eq!(h, RplHead::new(3, 4, 1.0, 0.1, BoundaryMode::PerClass, 9).unwrap());
    }
}
