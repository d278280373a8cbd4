//! Minibatch SGD over the joint objective, checkpoints, and database encoding.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::Query;
use crate::index::{CodeTable, Tracked};
use crate::linalg::{axpy, Matrix};
use crate::model::{encode, ModelParams};
use crate::objective::{gradients, GradientSet, Hyperparams, PairLabelSet};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DHCN";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.01;

/// Objective magnitude treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub hyper: Hyperparams,
    pub shuffle_seed: u64,
    /// Emit a checkpoint every this many epochs.
    pub checkpoint_interval: Option<usize>,
    /// Multiplicative learning-rate factor applied after each epoch, in (0, 1].
    pub lr_decay: f64,
}

impl TrainConfig {
    pub fn new(hyper: Hyperparams) -> Self {
        TrainConfig {
            hyper,
            shuffle_seed: hyper.seed,
            checkpoint_interval: None,
            lr_decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.checkpoint_interval == Some(0) {
            return Err(Error::Config("checkpoint interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Trained parameters plus everything needed to resume or audit them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub hyper: Hyperparams,
    pub epoch: u32,
}

impl Checkpoint {
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.params.feature_dim(),
            self.params.code_bits(),
            self.params.classes(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let p = &self.params;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u16::<LittleEndian>(CHECKPOINT_VERSION)?;
        w.write_u32::<LittleEndian>(p.feature_dim() as u32)?;
        w.write_u32::<LittleEndian>(p.code_bits() as u32)?;
        w.write_u32::<LittleEndian>(p.classes() as u32)?;
        for block in [
            p.hash_weights.as_slice(),
            &p.hash_bias,
            p.class_weights.as_slice(),
            &p.class_bias,
        ] {
            for &v in block {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        let h = &self.hyper;
        w.write_f64::<LittleEndian>(h.eta)?;
        w.write_f64::<LittleEndian>(h.beta)?;
        w.write_f64::<LittleEndian>(h.lr)?;
        w.write_u32::<LittleEndian>(h.code_bits as u32)?;
        w.write_u32::<LittleEndian>(h.batch_size as u32)?;
        w.write_u32::<LittleEndian>(h.epochs as u32)?;
        w.write_u64::<LittleEndian>(h.seed)?;
        w.write_u32::<LittleEndian>(self.epoch)?;
        w.flush()
    }

    pub fn read_from<R: Read>(r: R, path: &Path) -> Result<Self> {
        let mut r = Tracked::new(r);
        let truncated = |off: u64| Error::format(path, off, "truncated checkpoint");
        macro_rules! read {
            ($method:ident) => {
                r.$method::<LittleEndian>()
                    .map_err(|_| truncated(r.offset))?
            };
        }

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| truncated(r.offset))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::format(path, 0, "bad magic, expected DHCN"));
        }
        let version = read!(read_u16);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                4,
                format!("unsupported version {version}"),
            ));
        }
        let d = read!(read_u32) as usize;
        let k = read!(read_u32) as usize;
        let c = read!(read_u32) as usize;

        let mut block = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                out.push(
                    r.read_f64::<LittleEndian>()
                        .map_err(|_| truncated(r.offset))?,
                );
            }
            Ok(out)
        };
        let hash_weights = Matrix::from_vec(k, d, block(k * d)?)?;
        let hash_bias = block(k)?;
        let class_weights = Matrix::from_vec(c, k, block(c * k)?)?;
        let class_bias = block(c)?;
        let params = ModelParams::new(hash_weights, hash_bias, class_weights, class_bias)
            .map_err(|e| Error::format(path, r.offset, e.to_string()))?;

        let hyper = Hyperparams {
            eta: read!(read_f64),
            beta: read!(read_f64),
            lr: read!(read_f64),
            code_bits: read!(read_u32) as usize,
            batch_size: read!(read_u32) as usize,
            epochs: read!(read_u32) as usize,
            seed: read!(read_u64),
        };
        if hyper.code_bits != k {
            return Err(Error::format(
                path,
                r.offset,
                format!(
                    "hyperparameters say {} bits but parameters have {k}",
                    hyper.code_bits
                ),
            ));
        }
        let epoch = read!(read_u32);
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|e| Error::io(path, e))? != 0 {
            return Err(Error::format(
                path,
                r.offset - 1,
                "trailing bytes after checkpoint",
            ));
        }
        Ok(Checkpoint {
            params,
            hyper,
            epoch,
        })
    }
}

pub fn save_checkpoint(cp: &Checkpoint, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    cp.write_to(BufWriter::new(file))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::read_from(BufReader::new(file), path)
}

/// All unordered pairs of a batch, similar iff the labels match.
pub fn build_pair_labels(labels: &[usize]) -> PairLabelSet {
    PairLabelSet::from_labels(labels)
}

/// ξ ← ξ − lr · ∂J/∂ξ on all four parameter blocks.
pub fn sgd_step(params: &mut ModelParams, grads: &GradientSet, lr: f64) {
    axpy(
        -lr,
        grads.hash_weights.as_slice(),
        params.hash_weights.as_mut_slice(),
    );
    axpy(-lr, &grads.hash_bias, &mut params.hash_bias);
    axpy(
        -lr,
        grads.class_weights.as_slice(),
        params.class_weights.as_mut_slice(),
    );
    axpy(-lr, &grads.class_bias, &mut params.class_bias);
}

/// Per-epoch means over minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub objective: f64,
    pub similarity: f64,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub trace: Vec<EpochStats>,
    /// Snapshots taken every `checkpoint_interval` epochs.
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainOutcome {
    pub fn final_checkpoint(&self, hyper: Hyperparams) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            hyper,
            epoch: self.trace.len() as u32,
        }
    }
}

fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub fn initial_params(dataset: &Dataset, hyper: &Hyperparams) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    ModelParams::gaussian(
        dataset.dim(),
        hyper.code_bits,
        dataset.classes,
        INIT_STD,
        &mut rng,
    )
}

pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut present = vec![false; dataset.classes];
    for &y in &dataset.labels {
        present[y] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::Data(
            "training needs samples from at least two classes".into(),
        ));
    }

    let hyper = config.hyper;
    let mut params = initial_params(dataset, &hyper);
    let mut trace = Vec::with_capacity(hyper.epochs);
    let mut checkpoints = Vec::new();
    let mut lr = hyper.lr;

    for epoch in 0..hyper.epochs {
        let order = epoch_order(dataset.len(), config.shuffle_seed, epoch);
        let (mut j_sum, mut l2_sum, mut l3_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (b, idx) in order.chunks(hyper.batch_size).enumerate() {
            let batch = dataset.batch(idx);
            let (loss, grads) = gradients(&batch, &params, &hyper)?;
            if !loss.total.is_finite() || loss.total.abs() > DIVERGENCE_LIMIT {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    batch: b,
                    value: loss.total,
                });
            }
            sgd_step(&mut params, &grads, lr);
            j_sum += loss.total;
            l2_sum += loss.similarity;
            l3_sum += loss.label;
            batches += 1;
        }
        let n = batches as f64;
        let stats = EpochStats {
            epoch: epoch + 1,
            lr,
            objective: j_sum / n,
            similarity: l2_sum / n,
            label: l3_sum / n,
        };
        debug!(
            "epoch {}: J = {:.6} L2 = {:.6} L3 = {:.6}",
            stats.epoch, stats.objective, stats.similarity, stats.label
        );
        trace.push(stats);
        if config
            .checkpoint_interval
            .is_some_and(|every| (epoch + 1) % every == 0)
        {
            checkpoints.push(Checkpoint {
                params: params.clone(),
                hyper,
                epoch: (epoch + 1) as u32,
            });
        }
        lr *= config.lr_decay;
    }
    if let Some(last) = trace.last() {
        info!(
            "trained {} epochs, final J = {:.6}",
            last.epoch, last.objective
        );
    }
    Ok(TrainOutcome {
        params,
        trace,
        checkpoints,
    })
}

/// Codes and predicted labels for every row, ids 0..N in dataset order.
pub fn encode_database(params: &ModelParams, dataset: &Dataset) -> Result<CodeTable> {
    encode_with_ids(params, dataset, 0)
}

/// As [`encode_database`] with ids starting at `first_id`.
pub fn encode_with_ids(
    params: &ModelParams,
    dataset: &Dataset,
    first_id: u32,
) -> Result<CodeTable> {
    let mut table = CodeTable::new(params.code_bits());
    for i in 0..dataset.len() {
        let (code, predicted) = encode(dataset.row(i), params)?;
        table.push(
            &code,
            first_id + i as u32,
            Some(dataset.labels[i] as u32),
            predicted as u32,
        )?;
    }
    Ok(table)
}

/// Encodes a query set. With `exclude_offset`, query i is row `offset + i` of
/// the database and is left out of its own ranking.
pub fn encode_queries(
    params: &ModelParams,
    queries: &Dataset,
    exclude_offset: Option<usize>,
) -> Result<Vec<Query>> {
    (0..queries.len())
        .map(|i| {
            let (code, predicted) = encode(queries.row(i), params)?;
            Ok(Query {
                code,
                label: queries.labels[i] as u32,
                predicted: predicted as u32,
                exclude: exclude_offset.map(|o| o + i),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, SynthSpec};
    use crate::model::{affine_hash, binarize};
    use crate::objective::total_loss;

    fn small_data() -> Dataset {
        synth_dataset(&SynthSpec {
            classes: 3,
            per_class: 12,
            dim: 6,
            separation: 4.0,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn pair_labels_examples() {
        let p = build_pair_labels(&[0, 0, 1]);
        let got: Vec<(usize, usize, bool)> =
            p.pairs().iter().map(|x| (x.i, x.j, x.similar)).collect();
        assert_eq!(got, vec![(0, 1, true), (0, 2, false), (1, 2, false)]);
        assert!(build_pair_labels(&[4]).is_empty());
        for m in 1..12 {
            assert_eq!(build_pair_labels(&vec![0; m]).len(), m * (m - 1) / 2);
        }
    }

    #[test]
    fn sgd_step_noop_cases() {
        let data = small_data();
        let hyper = Hyperparams {
            code_bits: 4,
            ..Hyperparams::default()
        };
        let params = initial_params(&data, &hyper);
        let batch = data.batch(&[0, 1, 20, 30]);
        let grads = gradients(&batch, &params, &hyper).unwrap().1;

        let mut p = params.clone();
        sgd_step(&mut p, &grads, 0.0);
        assert_eq!(p, params);

        let zero = GradientSet {
            hash_weights: Matrix::zeros(4, 6),
            hash_bias: vec![0.0; 4],
            class_weights: Matrix::zeros(3, 4),
            class_bias: vec![0.0; 3],
            features: vec![],
        };
        let mut p = params.clone();
        sgd_step(&mut p, &zero, 0.1);
        assert_eq!(p, params);
    }

    #[test]
    fn sgd_step_decreases_convex_label_loss() {
        // With η = 0 and fixed hash layer, the loss is convex in the classifier.
        let data = small_data();
        let hyper = Hyperparams {
            eta: 0.0,
            code_bits: 4,
            ..Hyperparams::default()
        };
        let mut params = initial_params(&data, &hyper);
        let batch = data.batch(&(0..36).collect::<Vec<_>>());
        let before = total_loss(&batch, &params, &hyper).unwrap().total;
        let mut grads = gradients(&batch, &params, &hyper).unwrap().1;
        grads.hash_weights = Matrix::zeros(4, 6);
        grads.hash_bias = vec![0.0; 4];
        sgd_step(&mut params, &grads, 0.1);
        let after = total_loss(&batch, &params, &hyper).unwrap().total;
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn label_loss_falls_early_with_eta_zero() {
        let data = small_data();
        let hyper = Hyperparams {
            eta: 0.0,
            lr: 0.05,
            code_bits: 8,
            batch_size: 36,
            epochs: 5,
            seed: 1,
            ..Hyperparams::default()
        };
        let out = train(&data, &TrainConfig::new(hyper)).unwrap();
        let l3: Vec<f64> = out.trace.iter().map(|s| s.label).collect();
        assert!(l3.windows(2).all(|w| w[1] <= w[0]), "{l3:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let data = small_data();
        let hyper = Hyperparams {
            code_bits: 8,
            batch_size: 7,
            epochs: 4,
            seed: 3,
            lr: 1e-3,
            ..Hyperparams::default()
        };
        let mut config = TrainConfig::new(hyper);
        config.checkpoint_interval = Some(2);
        let a = train(&data, &config).unwrap();
        let b = train(&data, &config).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.checkpoints.len(), 2);
        assert_eq!(a.checkpoints[1].params, a.params);
    }

    #[test]
    fn training_rejects_single_class_and_flags_divergence() {
        let data = small_data();
        let one = data.subset(&[0, 1, 2]);
        assert!(matches!(
            train(&one, &TrainConfig::new(Hyperparams::default())),
            Err(Error::Data(_))
        ));
        let hyper = Hyperparams {
            lr: 1e6,
            code_bits: 8,
            epochs: 50,
            ..Hyperparams::default()
        };
        let err = train(&data, &TrainConfig::new(hyper)).unwrap_err();
        assert!(
            matches!(err, Error::Diverged { .. } | Error::NonFinite(_)),
            "{err}"
        );
    }

    #[test]
    fn encode_database_composes_forward_pass() {
        let data = small_data().subset(&[0, 13]);
        let hyper = Hyperparams {
            code_bits: 6,
            ..Hyperparams::default()
        };
        let params = initial_params(&data, &hyper);
        let table = encode_database(&params, &data).unwrap();
        assert_eq!(table.len(), 2);
        for i in 0..2 {
            let expected = binarize(&affine_hash(data.row(i), &params).unwrap()).unwrap();
            assert_eq!(table.code(i), expected);
            assert_eq!(table.ids()[i], i as u32);
        }
        let empty = data.subset(&[]);
        assert!(encode_database(&params, &empty).unwrap().is_empty());

        let mut buf = Vec::new();
        table.write_to(&mut buf).unwrap();
        assert_eq!(
            CodeTable::read_from(&buf[..], Path::new("t")).unwrap(),
            table
        );
    }

    #[test]
    fn checkpoint_roundtrip_and_errors() {
        let data = small_data();
        let hyper = Hyperparams {
            code_bits: 5,
            seed: 9,
            ..Hyperparams::default()
        };
        let cp = Checkpoint {
            params: initial_params(&data, &hyper),
            hyper,
            epoch: 17,
        };
        let mut buf = Vec::new();
        cp.write_to(&mut buf).unwrap();
        let back = Checkpoint::read_from(&buf[..], Path::new("cp")).unwrap();
        assert_eq!(back, cp);
        assert_eq!(back.dims(), (6, 5, 3));

        for cut in [0, 3, 10, buf.len() - 1] {
            let err = Checkpoint::read_from(&buf[..cut], Path::new("cp")).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "{err}");
        }
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(Checkpoint::read_from(&bad[..], Path::new("cp")).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(Checkpoint::read_from(&long[..], Path::new("cp")).is_err());
    }

    #[test]
    fn last_partial_batch_is_kept() {
        let data = small_data();
        let hyper = Hyperparams {
            code_bits: 4,
            batch_size: 10,
            epochs: 1,
            ..Hyperparams::default()
        };
        let order = epoch_order(data.len(), hyper.seed, 0);
        let sizes: Vec<usize> = order.chunks(hyper.batch_size).map(<[usize]>::len).collect();
        assert_eq!(sizes, vec![10, 10, 10, 6]);
    }
}
