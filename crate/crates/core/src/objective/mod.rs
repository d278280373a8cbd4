//! Joint objective and its analytic gradients.
//!
//! For a minibatch of m samples with hash-like features `u_i`, codes
//! `b_i = sgn(u_i)` and class distributions `t_i`:
//!
//! ```text
//! L2 = Σ_{(i,j)} [ softplus(ψ_ij) − s_ij ψ_ij ] + β Σ_i ‖u_i − b_i‖²,   ψ_ij = ½ u_iᵀu_j
//! L3 = −(1/m) Σ_i log t_i[y_i]
//! J  = η L2 + (1 − η) L3
//! ```
//!
//! Pairs are the unordered pairs of the minibatch. The codes are a snapshot of
//! `sgn(u)` taken at the start of each evaluation and treated as constants when
//! differentiating.

mod gradcheck;

pub use gradcheck::{
    check_gradients, finite_diff_check, random_gradcheck, BlockError, GradCheckReport,
    GradCheckTrial,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, squared_distance, Matrix};
use crate::model::{
    check_dim, class_scores, logistic, sign_vector, softplus, ClassDistribution, ModelParams,
};

/// Floor applied before taking log of a class probability.
pub const PROB_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Weight of the similarity loss against the label loss, in [0, 1].
    pub eta: f64,
    /// Quantization weight, ≥ 0.
    pub beta: f64,
    /// SGD step size, > 0.
    pub lr: f64,
    pub code_bits: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            eta: 0.2,
            beta: 25.0,
            lr: 5e-4,
            code_bits: 32,
            batch_size: 32,
            epochs: 100,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::Config(format!(
                "eta must lie in [0, 1], got {}",
                self.eta
            )));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.code_bits == 0 {
            return Err(Error::Config("bits must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub i: usize,
    pub j: usize,
    pub similar: bool,
}

/// Pairwise similarity labels of a minibatch, `i < j`, no duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairLabelSet {
    pairs: Vec<LabeledPair>,
}

impl PairLabelSet {
    /// Every unordered pair of the batch; `similar` iff the labels agree.
    pub fn from_labels(labels: &[usize]) -> Self {
        let m = labels.len();
        let mut pairs = Vec::with_capacity(m * m.saturating_sub(1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                pairs.push(LabeledPair {
                    i,
                    j,
                    similar: labels[i] == labels[j],
                });
            }
        }
        PairLabelSet { pairs }
    }

    /// Validates an explicit pair list against the batch labels.
    pub fn new(pairs: Vec<LabeledPair>, labels: &[usize]) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            if p.i >= p.j {
                return Err(Error::Data(format!(
                    "pair ({}, {}) must satisfy i < j",
                    p.i, p.j
                )));
            }
            if p.j >= labels.len() {
                return Err(Error::Data(format!("pair index {} out of range", p.j)));
            }
            if (labels[p.i] == labels[p.j]) != p.similar {
                return Err(Error::Data(format!(
                    "pair ({}, {}) similarity disagrees with labels",
                    p.i, p.j
                )));
            }
            if !seen.insert((p.i, p.j)) {
                return Err(Error::Data(format!("duplicate pair ({}, {})", p.i, p.j)));
            }
        }
        Ok(PairLabelSet { pairs })
    }

    pub fn pairs(&self) -> &[LabeledPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Features (m×D) and class indices of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(features: Matrix, labels: Vec<usize>) -> Result<Self> {
        check_dim("batch labels", features.rows(), labels.len())?;
        Ok(Batch { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, params: &ModelParams) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Data("empty batch".into()));
        }
        check_dim(
            "batch feature width",
            params.feature_dim(),
            self.features.cols(),
        )?;
        let classes = params.classes();
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Data(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(())
    }
}

/// Per-sample intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub hash_features: Vec<Vec<f64>>,
    /// ±1 snapshot of `sgn(u)`.
    pub codes: Vec<Vec<f64>>,
    pub distributions: Vec<ClassDistribution>,
}

pub fn forward(batch: &Batch, params: &ModelParams) -> Result<ForwardPass> {
    batch.check(params)?;
    let hash_features: Vec<Vec<f64>> = batch
        .features
        .iter_rows()
        .map(|f| params.hash_weights.affine(f, &params.hash_bias))
        .collect();
    let codes = hash_features.iter().map(|u| sign_vector(u)).collect();
    let distributions = hash_features
        .iter()
        .map(|u| class_scores(u, params))
        .collect::<Result<_>>()?;
    Ok(ForwardPass {
        hash_features,
        codes,
        distributions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// L2: pairwise negative log-likelihood plus quantization.
    pub similarity: f64,
    /// L3: mean cross-entropy.
    pub label: f64,
    /// η L2 + (1 − η) L3.
    pub total: f64,
}

/// ψ = ½ u_iᵀ u_j.
pub fn pair_logit(u_i: &[f64], u_j: &[f64]) -> Result<f64> {
    check_dim("pair logit operands", u_i.len(), u_j.len())?;
    Ok(0.5 * dot(u_i, u_j))
}

/// −(s ψ − ln(1 + e^ψ)), written as softplus(−ψ) for similar pairs so that a
/// large positive ψ yields e^{−ψ} instead of cancelling to zero.
pub fn pair_nll(psi: f64, similar: bool) -> f64 {
    if similar {
        softplus(-psi)
    } else {
        softplus(psi)
    }
}

/// L2 over the given hash-like features and (constant) codes.
pub fn similarity_loss(
    hash_features: &[Vec<f64>],
    codes: &[Vec<f64>],
    pairs: &PairLabelSet,
    beta: f64,
) -> f64 {
    let pairwise: f64 = pairs
        .pairs()
        .iter()
        .map(|p| {
            let psi = 0.5 * dot(&hash_features[p.i], &hash_features[p.j]);
            pair_nll(psi, p.similar)
        })
        .sum();
    let quantization: f64 = hash_features
        .iter()
        .zip(codes)
        .map(|(u, b)| squared_distance(u, b))
        .sum();
    pairwise + beta * quantization
}

/// L3 = −(1/m) Σ log t_i[y_i], with m the number of distributions.
pub fn label_loss(distributions: &[ClassDistribution], labels: &[usize]) -> f64 {
    let m = distributions.len() as f64;
    let sum: f64 = distributions
        .iter()
        .zip(labels)
        .map(|(t, &y)| t[y].max(PROB_FLOOR).ln())
        .sum();
    -sum / m
}

fn combine(eta: f64, similarity: f64, label: f64) -> LossBreakdown {
    LossBreakdown {
        similarity,
        label,
        total: eta * similarity + (1.0 - eta) * label,
    }
}

/// Objective evaluated directly from hash-like features, codes held fixed.
pub fn loss_at_hash_features(
    hash_features: &[Vec<f64>],
    codes: &[Vec<f64>],
    labels: &[usize],
    params: &ModelParams,
    hyper: &Hyperparams,
) -> Result<LossBreakdown> {
    check_dim("codes per batch", hash_features.len(), codes.len())?;
    check_dim("labels per batch", hash_features.len(), labels.len())?;
    let pairs = PairLabelSet::from_labels(labels);
    let distributions = hash_features
        .iter()
        .map(|u| class_scores(u, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(
        hyper.eta,
        similarity_loss(hash_features, codes, &pairs, hyper.beta),
        label_loss(&distributions, labels),
    ))
}

pub fn total_loss(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
) -> Result<LossBreakdown> {
    let fwd = forward(batch, params)?;
    let pairs = PairLabelSet::from_labels(&batch.labels);
    Ok(combine(
        hyper.eta,
        similarity_loss(&fwd.hash_features, &fwd.codes, &pairs, hyper.beta),
        label_loss(&fwd.distributions, &batch.labels),
    ))
}

/// Same as [`total_loss`] but with externally supplied codes instead of the
/// sign snapshot of the current hash-like features.
pub fn total_loss_with_codes(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
    codes: &[Vec<f64>],
) -> Result<LossBreakdown> {
    let fwd = forward(batch, params)?;
    loss_at_hash_features(&fwd.hash_features, codes, &batch.labels, params, hyper)
}

/// Gradients of J with respect to every parameter block and every input feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub hash_weights: Matrix,
    pub hash_bias: Vec<f64>,
    pub class_weights: Matrix,
    pub class_bias: Vec<f64>,
    /// One D-vector per batch sample.
    pub features: Vec<Vec<f64>>,
}

impl GradientSet {
    fn check_finite(&self) -> Result<()> {
        let blocks: [(&str, bool); 5] = [
            ("gradient of hash weights", self.hash_weights.is_finite()),
            (
                "gradient of hash bias",
                self.hash_bias.iter().all(|v| v.is_finite()),
            ),
            ("gradient of class weights", self.class_weights.is_finite()),
            (
                "gradient of class bias",
                self.class_bias.iter().all(|v| v.is_finite()),
            ),
            (
                "gradient of input features",
                self.features.iter().flatten().all(|v| v.is_finite()),
            ),
        ];
        match blocks.iter().find(|(_, ok)| !ok) {
            Some((name, _)) => Err(Error::NonFinite((*name).to_string())),
            None => Ok(()),
        }
    }
}

/// ∂J/∂u_i for every sample, with codes fixed to `codes`.
fn hash_feature_gradients(
    fwd_u: &[Vec<f64>],
    codes: &[Vec<f64>],
    distributions: &[ClassDistribution],
    labels: &[usize],
    params: &ModelParams,
    hyper: &Hyperparams,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let m = fwd_u.len();
    let k = params.code_bits();
    let eta = hyper.eta;
    let label_scale = (1.0 - eta) / m as f64;

    // Pairwise part: ½ Σ_{j≠i} (a_ij − s_ij) u_j, accumulated per unordered pair
    // into both endpoints in fixed pair order.
    let mut pairwise = vec![vec![0.0; k]; m];
    for p in PairLabelSet::from_labels(labels).pairs() {
        let psi = 0.5 * dot(&fwd_u[p.i], &fwd_u[p.j]);
        let coeff = 0.5 * (logistic(psi) - if p.similar { 1.0 } else { 0.0 });
        axpy(coeff, &fwd_u[p.j], &mut pairwise[p.i]);
        axpy(coeff, &fwd_u[p.i], &mut pairwise[p.j]);
    }

    let mut grad_u = Vec::with_capacity(m);
    let mut class_residuals = Vec::with_capacity(m);
    for i in 0..m {
        // g_i = (1 − η)(1/m)(t_i − y_i)
        let mut residual: Vec<f64> = distributions[i].iter().map(|t| label_scale * t).collect();
        residual[labels[i]] -= label_scale;

        let mut g = params.class_weights.transpose_mul(&residual);
        for c in 0..k {
            let sim = pairwise[i][c] + 2.0 * hyper.beta * (fwd_u[i][c] - codes[i][c]);
            g[c] += eta * sim;
        }
        grad_u.push(g);
        class_residuals.push(residual);
    }
    (grad_u, class_residuals)
}

/// All gradient blocks with the codes snapshotted from the current forward pass.
pub fn gradients(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
) -> Result<(LossBreakdown, GradientSet)> {
    let fwd = forward(batch, params)?;
    gradients_from_forward(batch, params, hyper, &fwd)
}

/// All gradient blocks with externally frozen codes.
pub fn gradients_with_codes(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
    codes: &[Vec<f64>],
) -> Result<(LossBreakdown, GradientSet)> {
    check_dim("codes per batch", batch.len(), codes.len())?;
    let mut fwd = forward(batch, params)?;
    fwd.codes = codes.to_vec();
    gradients_from_forward(batch, params, hyper, &fwd)
}

fn gradients_from_forward(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
    fwd: &ForwardPass,
) -> Result<(LossBreakdown, GradientSet)> {
    let pairs = PairLabelSet::from_labels(&batch.labels);
    let loss = combine(
        hyper.eta,
        similarity_loss(&fwd.hash_features, &fwd.codes, &pairs, hyper.beta),
        label_loss(&fwd.distributions, &batch.labels),
    );

    let (grad_u, residuals) = hash_feature_gradients(
        &fwd.hash_features,
        &fwd.codes,
        &fwd.distributions,
        &batch.labels,
        params,
        hyper,
    );

    let k = params.code_bits();
    let c = params.classes();
    let mut grads = GradientSet {
        hash_weights: Matrix::zeros(k, params.feature_dim()),
        hash_bias: vec![0.0; k],
        class_weights: Matrix::zeros(c, k),
        class_bias: vec![0.0; c],
        features: Vec::with_capacity(batch.len()),
    };
    for (i, f) in batch.features.iter_rows().enumerate() {
        grads
            .class_weights
            .add_outer(1.0, &residuals[i], &fwd.hash_features[i]);
        axpy(1.0, &residuals[i], &mut grads.class_bias);
        grads.hash_weights.add_outer(1.0, &grad_u[i], f);
        axpy(1.0, &grad_u[i], &mut grads.hash_bias);
        grads
            .features
            .push(params.hash_weights.transpose_mul(&grad_u[i]));
    }
    grads.check_finite()?;
    Ok((loss, grads))
}

/// ∂J/∂u_i for every sample of the batch.
pub fn grad_u(batch: &Batch, params: &ModelParams, hyper: &Hyperparams) -> Result<Vec<Vec<f64>>> {
    let fwd = forward(batch, params)?;
    let (g, _) = hash_feature_gradients(
        &fwd.hash_features,
        &fwd.codes,
        &fwd.distributions,
        &batch.labels,
        params,
        hyper,
    );
    if g.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient of hash-like features".into()));
    }
    Ok(g)
}

pub fn grad_params(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
) -> Result<GradientSet> {
    gradients(batch, params, hyper).map(|(_, g)| g)
}

/// ∂J/∂f_i = W_hᵀ ∂J/∂u_i for every sample of the batch.
pub fn grad_features(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
) -> Result<Vec<Vec<f64>>> {
    gradients(batch, params, hyper).map(|(_, g)| g.features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hyper(eta: f64, beta: f64) -> Hyperparams {
        Hyperparams {
            eta,
            beta,
            ..Hyperparams::default()
        }
    }

    fn random_setup(
        rng: &mut ChaCha8Rng,
        m: usize,
        d: usize,
        k: usize,
        c: usize,
    ) -> (Batch, ModelParams) {
        let mut params = ModelParams::gaussian(d, k, c, 0.7, rng);
        for b in params
            .hash_bias
            .iter_mut()
            .chain(params.class_bias.iter_mut())
        {
            *b = rng.random_range(-0.5..0.5);
        }
        let features = Matrix::from_vec(
            m,
            d,
            (0..m * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let labels = (0..m).map(|_| rng.random_range(0..c)).collect();
        (Batch::new(features, labels).unwrap(), params)
    }

    #[test]
    fn pair_logit_examples() {
        let ones = vec![1.0; 16];
        assert_eq!(pair_logit(&ones, &ones).unwrap(), 8.0);
        assert_eq!(pair_logit(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let b: Vec<f64> = (0..7).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut naive = 0.0;
        for i in 0..7 {
            naive += a[i] * b[i];
        }
        assert!((pair_logit(&a, &b).unwrap() - 0.5 * naive).abs() < 1e-12);
        assert!(pair_logit(&a, &b[..3]).is_err());
    }

    #[test]
    fn zero_features_give_log_two_per_pair() {
        let u = vec![vec![0.0; 4], vec![0.0; 4]];
        let codes = vec![vec![-1.0; 4], vec![-1.0; 4]];
        for labels in [[0, 0], [0, 1]] {
            let pairs = PairLabelSet::from_labels(&labels);
            let l = similarity_loss(&u, &codes, &pairs, 0.0);
            assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn quantization_vanishes_at_corners() {
        let u = vec![vec![1.0, -1.0, 1.0], vec![-1.0, -1.0, 1.0]];
        let codes: Vec<Vec<f64>> = u.iter().map(|v| sign_vector(v)).collect();
        let empty = PairLabelSet::default();
        assert_eq!(similarity_loss(&u, &codes, &empty, 25.0), 0.0);
        let off = vec![vec![0.9, -1.0, 1.0], vec![-1.0, -1.0, 1.0]];
        assert!(similarity_loss(&off, &codes, &empty, 25.0) > 0.0);
    }

    #[test]
    fn large_similar_logit_does_not_cancel() {
        // ln(1 + e^{-50}) at 50 significant digits
        let oracle = 1.928_749_847_963_917_8e-22;
        let term = pair_nll(50.0, true);
        assert!(((term - oracle) / oracle).abs() < 1e-14);
        assert!(pair_nll(800.0, false).is_finite());
        assert!(pair_nll(-800.0, true).is_finite());
    }

    #[test]
    fn pairwise_term_positive_and_monotone_in_logit() {
        for &psi in &[-30.0, -2.0, -1e-3, 0.0, 1e-3, 2.0, 30.0] {
            assert!(pair_nll(psi, true) > 0.0);
            assert!(pair_nll(psi, false) > 0.0);
            // d/dψ = a − s: negative for similar pairs, positive otherwise
            assert!(logistic(psi) - 1.0 < 0.0);
            assert!(pair_nll(psi + 0.01, true) < pair_nll(psi, true));
            assert!(pair_nll(psi + 0.01, false) > pair_nll(psi, false));
        }
    }

    #[test]
    fn label_loss_examples() {
        let uniform = crate::model::softmax(&[0.0; 10]);
        let l = label_loss(&[uniform.clone(), uniform], &[3, 9]);
        assert!((l - 10f64.ln()).abs() < 1e-12);

        let peaked = crate::model::softmax(&[60.0, 0.0, 0.0]);
        assert!(label_loss(&[peaked], &[0]) < 1e-20);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dists: Vec<_> = (0..6)
            .map(|_| {
                crate::model::softmax(
                    &(0..4)
                        .map(|_| rng.random_range(-3.0..3.0))
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..4)).collect();
        let oracle = dists
            .iter()
            .zip(&labels)
            .map(|(t, &y)| -t.probs()[y].ln())
            .sum::<f64>()
            / 6.0;
        assert!((label_loss(&dists, &labels) - oracle).abs() < 1e-12);
    }

    #[test]
    fn total_loss_endpoints_and_defaults() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (batch, params) = random_setup(&mut rng, 5, 4, 3, 3);
        let l0 = total_loss(&batch, &params, &hyper(0.0, 25.0)).unwrap();
        assert_eq!(l0.total.to_bits(), l0.label.to_bits());
        let l1 = total_loss(&batch, &params, &hyper(1.0, 25.0)).unwrap();
        assert_eq!(l1.total.to_bits(), l1.similarity.to_bits());

        let fwd = forward(&batch, &params).unwrap();
        let pairs = PairLabelSet::from_labels(&batch.labels);
        let l2 = similarity_loss(&fwd.hash_features, &fwd.codes, &pairs, 25.0);
        let l3 = label_loss(&fwd.distributions, &batch.labels);
        let mixed = total_loss(&batch, &params, &Hyperparams::default()).unwrap();
        assert!((mixed.total - (0.2 * l2 + 0.8 * l3)).abs() < 1e-12);
        assert!(mixed.total > 0.0);
    }

    #[test]
    fn grad_u_at_eta_zero_is_softmax_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (batch, params) = random_setup(&mut rng, 4, 3, 5, 3);
        let g = grad_u(&batch, &params, &hyper(0.0, 25.0)).unwrap();
        let fwd = forward(&batch, &params).unwrap();
        for i in 0..4 {
            let mut r: Vec<f64> = fwd.distributions[i].iter().map(|t| t / 4.0).collect();
            r[batch.labels[i]] -= 0.25;
            let expected = params.class_weights.transpose_mul(&r);
            for (a, b) in g[i].iter().zip(&expected) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_sample_class_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (batch, params) = random_setup(&mut rng, 1, 3, 4, 3);
        let g = grad_params(&batch, &params, &hyper(0.0, 0.0)).unwrap();
        let fwd = forward(&batch, &params).unwrap();
        let mut r = fwd.distributions[0].clone().into_inner();
        r[batch.labels[0]] -= 1.0;
        for (c, rc) in r.iter().enumerate() {
            for j in 0..4 {
                let expected = rc * fwd.hash_features[0][j];
                assert!((g.class_weights.get(c, j) - expected).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_features_give_zero_hash_weight_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::gaussian(3, 4, 2, 0.5, &mut rng);
        params.hash_bias = vec![0.0; 4];
        let batch = Batch::new(Matrix::zeros(3, 3), vec![0, 1, 1]).unwrap();
        let g = grad_params(&batch, &params, &Hyperparams::default()).unwrap();
        assert!(g.hash_weights.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_features_special_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (batch, mut params) = random_setup(&mut rng, 4, 3, 3, 2);
        let h = Hyperparams::default();

        params.hash_weights = Matrix::identity(3);
        let gu = grad_u(&batch, &params, &h).unwrap();
        assert_eq!(grad_features(&batch, &params, &h).unwrap(), gu);

        params.hash_weights = Matrix::zeros(3, 3);
        let gf = grad_features(&batch, &params, &h).unwrap();
        assert!(gf.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut params = ModelParams::zeros(2, 2, 2);
        params.hash_weights.set(0, 0, 1e300);
        let batch = Batch::new(
            Matrix::from_vec(2, 2, vec![1e300, 0.0, 1e300, 0.0]).unwrap(),
            vec![0, 0],
        )
        .unwrap();
        let err = grad_params(&batch, &params, &Hyperparams::default()).unwrap_err();
        assert!(
            matches!(err, Error::NonFinite(ref name) if name.contains("gradient")),
            "{err}"
        );
    }

    #[test]
    fn pair_set_validation() {
        let labels = [0, 0, 1];
        let pairs = PairLabelSet::from_labels(&labels);
        assert_eq!(
            pairs.pairs(),
            &[
                LabeledPair {
                    i: 0,
                    j: 1,
                    similar: true
                },
                LabeledPair {
                    i: 0,
                    j: 2,
                    similar: false
                },
                LabeledPair {
                    i: 1,
                    j: 2,
                    similar: false
                },
            ]
        );
        assert!(PairLabelSet::new(pairs.pairs().to_vec(), &labels).is_ok());
        let dup = vec![pairs.pairs()[0], pairs.pairs()[0]];
        assert!(PairLabelSet::new(dup, &labels).is_err());
        let selfpair = vec![LabeledPair {
            i: 1,
            j: 1,
            similar: true,
        }];
        assert!(PairLabelSet::new(selfpair, &labels).is_err());
        let wrong = vec![LabeledPair {
            i: 0,
            j: 2,
            similar: true,
        }];
        assert!(PairLabelSet::new(wrong, &labels).is_err());
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        assert!(hyper(1.5, 0.0).validate().is_err());
        assert!(hyper(0.5, -1.0).validate().is_err());
        assert!(Hyperparams {
            lr: 0.0,
            ..Hyperparams::default()
        }
        .validate()
        .is_err());
    }
}
