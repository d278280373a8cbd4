//! Central finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{
    forward, grad_u, gradients_with_codes, loss_at_hash_features, total_loss_with_codes, Batch,
    Hyperparams,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::ModelParams;

/// Worst relative error between `analytic` and the central difference
/// `(f(x + h e_i) − f(x − h e_i)) / 2h` over every coordinate of `point`.
///
/// Relative error is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(mut loss: F, point: &[f64], analytic: &[f64], h: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(h > 0.0, "step must be positive");
    assert_eq!(
        point.len(),
        analytic.len(),
        "gradient length must match point"
    );
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = loss(&x);
        x[i] = orig - h;
        let minus = loss(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockError {
    pub block: &'static str,
    pub worst: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn worst(&self) -> &BlockError {
        self.blocks
            .iter()
            .max_by(|a, b| a.worst.total_cmp(&b.worst))
            .expect("report has blocks")
    }

    pub fn ensure_below(&self, tolerance: f64) -> Result<()> {
        let worst = self.worst();
        if worst.worst < tolerance {
            Ok(())
        } else {
            Err(Error::GradCheck {
                block: worst.block.to_string(),
                worst: worst.worst,
                tolerance,
            })
        }
    }
}

/// Compares every analytic gradient block against central differences of the
/// objective. Codes are frozen at the unperturbed point for all evaluations.
pub fn check_gradients(
    batch: &Batch,
    params: &ModelParams,
    hyper: &Hyperparams,
    h: f64,
) -> Result<GradCheckReport> {
    let fwd = forward(batch, params)?;
    let codes = fwd.codes.clone();
    let (_, grads) = gradients_with_codes(batch, params, hyper, &codes)?;
    let gu = grad_u(batch, params, hyper)?;
    let mut blocks = Vec::new();

    let k = params.code_bits();
    let flat_u: Vec<f64> = fwd.hash_features.concat();
    let worst = finite_diff_check(
        |x| {
            let u: Vec<Vec<f64>> = x.chunks(k).map(<[f64]>::to_vec).collect();
            loss_at_hash_features(&u, &codes, &batch.labels, params, hyper)
                .expect("shapes fixed")
                .total
        },
        &flat_u,
        &gu.concat(),
        h,
    );
    blocks.push(BlockError {
        block: "hash_features",
        worst,
    });

    let perturb_params =
        |edit: &dyn Fn(&mut ModelParams, &[f64]), point: &[f64], analytic: &[f64]| {
            finite_diff_check(
                |x| {
                    let mut p = params.clone();
                    edit(&mut p, x);
                    total_loss_with_codes(batch, &p, hyper, &codes)
                        .expect("shapes fixed")
                        .total
                },
                point,
                analytic,
                h,
            )
        };

    blocks.push(BlockError {
        block: "hash_weights",
        worst: perturb_params(
            &|p, x| p.hash_weights.as_mut_slice().copy_from_slice(x),
            params.hash_weights.as_slice(),
            grads.hash_weights.as_slice(),
        ),
    });
    blocks.push(BlockError {
        block: "hash_bias",
        worst: perturb_params(
            &|p, x| p.hash_bias.copy_from_slice(x),
            &params.hash_bias,
            &grads.hash_bias,
        ),
    });
    blocks.push(BlockError {
        block: "class_weights",
        worst: perturb_params(
            &|p, x| p.class_weights.as_mut_slice().copy_from_slice(x),
            params.class_weights.as_slice(),
            grads.class_weights.as_slice(),
        ),
    });
    blocks.push(BlockError {
        block: "class_bias",
        worst: perturb_params(
            &|p, x| p.class_bias.copy_from_slice(x),
            &params.class_bias,
            &grads.class_bias,
        ),
    });

    let (m, d) = (batch.features.rows(), batch.features.cols());
    let worst = finite_diff_check(
        |x| {
            let perturbed = Batch {
                features: Matrix::from_vec(m, d, x.to_vec()).expect("shape fixed"),
                labels: batch.labels.clone(),
            };
            total_loss_with_codes(&perturbed, params, hyper, &codes)
                .expect("shapes fixed")
                .total
        },
        batch.features.as_slice(),
        &grads.features.concat(),
        h,
    );
    blocks.push(BlockError {
        block: "features",
        worst,
    });

    Ok(GradCheckReport { blocks })
}

/// Dimensions and weights of one randomized gradient check.
#[derive(Debug, Clone, Serialize)]
pub struct GradCheckTrial {
    pub batch: usize,
    pub dim: usize,
    pub bits: usize,
    pub classes: usize,
    pub eta: f64,
    pub beta: f64,
    pub report: GradCheckReport,
}

/// Gradient checks on `trials` random small problems (batch ≤ 6, D ≤ 8,
/// K ≤ 6, C ≤ 4), cycling η over {0, 0.2, 1} and β over {0, 25}.
pub fn random_gradcheck(seed: u64, trials: usize, h: f64) -> Result<Vec<GradCheckTrial>> {
    const ETAS: [f64; 3] = [0.0, 0.2, 1.0];
    const BETAS: [f64; 2] = [0.0, 25.0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|t| {
            let m = rng.random_range(1..=6);
            let d = rng.random_range(1..=8);
            let k = rng.random_range(1..=6);
            let c = rng.random_range(2..=4);
            let mut params = ModelParams::gaussian(d, k, c, 0.5, &mut rng);
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
            )?;
            let labels = (0..m).map(|_| rng.random_range(0..c)).collect();
            let batch = Batch::new(features, labels)?;
            let hyper = Hyperparams {
                eta: ETAS[t % 3],
                beta: BETAS[(t / 3) % 2],
                code_bits: k,
                ..Hyperparams::default()
            };
            Ok(GradCheckTrial {
                batch: m,
                dim: d,
                bits: k,
                classes: c,
                eta: hyper.eta,
                beta: hyper.beta,
                report: check_gradients(&batch, &params, &hyper, h)?,
            })
        })
        .collect()
}
