//! Domain types and the forward pass of the hash head and the classification head.
//!
//! A feature `f` (length D) is mapped to a hash-like feature `u = W_h f + v_h`
//! (length K), binarized into a ±1 code, and classified through
//! `softmax(W_s u + v_s)` (length C).

use std::fmt;
use std::ops::Deref;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Deep feature of one image, length D.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature vector".into()));
        }
        Ok(FeatureVector(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Real-valued output of the hash layer before binarization, length K.
#[derive(Debug, Clone, PartialEq)]
pub struct HashLikeFeature(Vec<f64>);

impl HashLikeFeature {
    pub fn new(values: Vec<f64>) -> Self {
        HashLikeFeature(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for HashLikeFeature {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Softmax output over C classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ClassDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub feature: FeatureVector,
    pub label: usize,
}

/// K-bit binary code with ±1 semantics.
///
/// Packed 64 positions per word, little-endian within the word: position
/// `64 * w + j` lives in bit `j` of word `w`, and a set bit means +1. Pad bits
/// past K in the last word are always zero, so XOR-popcount needs no mask.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct HashCode {
    bits: usize,
    words: Vec<u64>,
}

pub fn words_for_bits(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl HashCode {
    /// All positions set to −1.
    pub fn negative(bits: usize) -> Self {
        HashCode {
            bits,
            words: vec![0; words_for_bits(bits)],
        }
    }

    /// Packs a slice of ±1 values; anything `> 0` counts as +1.
    pub fn pack(signs: &[i8]) -> Self {
        let mut code = HashCode::negative(signs.len());
        for (pos, &s) in signs.iter().enumerate() {
            if s > 0 {
                code.words[pos / 64] |= 1u64 << (pos % 64);
            }
        }
        code
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut code = HashCode::negative(bits.len());
        for (pos, &b) in bits.iter().enumerate() {
            if b {
                code.words[pos / 64] |= 1u64 << (pos % 64);
            }
        }
        code
    }

    /// Rebuilds a code from stored words, rejecting stray pad bits.
    pub fn from_words(bits: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for_bits(bits) {
            return Err(Error::Dimension {
                context: "packed code words",
                expected: words_for_bits(bits),
                actual: words.len(),
            });
        }
        let code = HashCode { bits, words };
        if code
            .words
            .last()
            .is_some_and(|&w| w & !code.last_word_mask() != 0)
        {
            return Err(Error::Data("hash code has nonzero pad bits".into()));
        }
        Ok(code)
    }

    fn last_word_mask(&self) -> u64 {
        match self.bits % 64 {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }

    pub fn unpack(&self) -> Vec<i8> {
        (0..self.bits).map(|pos| self.sign(pos)).collect()
    }

    /// ±1 values as floats, the form the objective works with.
    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.bits)
            .map(|pos| f64::from(self.sign(pos)))
            .collect()
    }

    pub fn sign(&self, pos: usize) -> i8 {
        if self.words[pos / 64] >> (pos % 64) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for HashCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HashCode(")?;
        for pos in 0..self.bits {
            f.write_str(if self.sign(pos) > 0 { "+" } else { "-" })?;
        }
        write!(f, ")")
    }
}

/// Hash-layer and classifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// K×D.
    pub hash_weights: Matrix,
    /// K.
    pub hash_bias: Vec<f64>,
    /// C×K.
    pub class_weights: Matrix,
    /// C.
    pub class_bias: Vec<f64>,
}

impl ModelParams {
    pub fn new(
        hash_weights: Matrix,
        hash_bias: Vec<f64>,
        class_weights: Matrix,
        class_bias: Vec<f64>,
    ) -> Result<Self> {
        let params = ModelParams {
            hash_weights,
            hash_bias,
            class_weights,
            class_bias,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn zeros(feature_dim: usize, code_bits: usize, classes: usize) -> Self {
        ModelParams {
            hash_weights: Matrix::zeros(code_bits, feature_dim),
            hash_bias: vec![0.0; code_bits],
            class_weights: Matrix::zeros(classes, code_bits),
            class_bias: vec![0.0; classes],
        }
    }

    /// Weights drawn i.i.d. from N(0, std²), biases zero.
    pub fn gaussian<R: Rng + ?Sized>(
        feature_dim: usize,
        code_bits: usize,
        classes: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("std must be finite and non-negative");
        let mut params = ModelParams::zeros(feature_dim, code_bits, classes);
        for w in params.hash_weights.as_mut_slice() {
            *w = normal.sample(rng);
        }
        for w in params.class_weights.as_mut_slice() {
            *w = normal.sample(rng);
        }
        params
    }

    pub fn feature_dim(&self) -> usize {
        self.hash_weights.cols()
    }

    pub fn code_bits(&self) -> usize {
        self.hash_weights.rows()
    }

    pub fn classes(&self) -> usize {
        self.class_weights.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.hash_weights.rows();
        check_dim("hash bias", k, self.hash_bias.len())?;
        check_dim("classifier input width", k, self.class_weights.cols())?;
        check_dim(
            "class bias",
            self.class_weights.rows(),
            self.class_bias.len(),
        )?;
        let finite = self.hash_weights.is_finite()
            && self.class_weights.is_finite()
            && self
                .hash_bias
                .iter()
                .chain(&self.class_bias)
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}

/// `u = W_h f + v_h`.
pub fn affine_hash(f: &[f64], params: &ModelParams) -> Result<HashLikeFeature> {
    check_dim("feature length", params.feature_dim(), f.len())?;
    Ok(HashLikeFeature(
        params.hash_weights.affine(f, &params.hash_bias),
    ))
}

/// Element-wise sign with sgn(x) = +1 iff x > 0, so sgn(0) = −1.
pub fn binarize(u: &[f64]) -> Result<HashCode> {
    if u.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("hash-like feature".into()));
    }
    Ok(HashCode::from_bools(
        &u.iter().map(|&v| v > 0.0).collect::<Vec<_>>(),
    ))
}

/// sgn applied to a real vector, returning ±1 floats.
pub(crate) fn sign_vector(u: &[f64]) -> Vec<f64> {
    u.iter()
        .map(|&v| if v > 0.0 { 1.0 } else { -1.0 })
        .collect()
}

/// 1 / (1 + e^{−x}), branching on the sign of x so neither branch overflows.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) as max(x, 0) + ln(1 + e^{−|x|}).
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> ClassDistribution {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    ClassDistribution(exps.into_iter().map(|e| e / total).collect())
}

/// `softmax(W_s u + v_s)`.
pub fn class_scores(u: &[f64], params: &ModelParams) -> Result<ClassDistribution> {
    check_dim("hash-like feature length", params.code_bits(), u.len())?;
    Ok(softmax(&params.class_weights.affine(u, &params.class_bias)))
}

/// Arg max of the distribution; the lowest index wins ties.
pub fn predict_label(t: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in t.iter().enumerate().skip(1) {
        if p > t[best] {
            best = i;
        }
    }
    best
}

/// Code and predicted class of one feature vector.
pub fn encode(f: &[f64], params: &ModelParams) -> Result<(HashCode, usize)> {
    let u = affine_hash(f, params)?;
    let code = binarize(&u)?;
    let t = class_scores(&u, params)?;
    Ok((code, predict_label(&t)))
}
