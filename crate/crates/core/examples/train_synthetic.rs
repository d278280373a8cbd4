//! Trains on the Gaussian-cluster benchmark and reports retrieval and
//! classification quality on the held-out 20%.
//!
//! ```bash
//! cargo run --release --example train_synthetic -- [bits] [eta] [beta] [lr] [epochs] [seed] [separation]
//! ```

use semhash::data::{synth_dataset, SynthSpec};
use semhash::experiment::{run_experiment, DatabaseChoice};
use semhash::trainer::TrainConfig;
use semhash::Hyperparams;

fn arg<T: std::str::FromStr>(args: &[String], i: usize, default: T) -> T {
    args.get(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> semhash::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let defaults = Hyperparams::default();
    let hyper = Hyperparams {
        code_bits: arg(&args, 0, 16),
        eta: arg(&args, 1, defaults.eta),
        beta: arg(&args, 2, defaults.beta),
        lr: arg(&args, 3, defaults.lr),
        epochs: arg(&args, 4, 50),
        seed: arg(&args, 5, 0),
        ..defaults
    };

    let data = synth_dataset(&SynthSpec {
        separation: arg(&args, 6, SynthSpec::default().separation),
        ..SynthSpec::default()
    })?;
    let (train, test) = data.stratified_split(0.2, 0);
    println!(
        "train {} / query {} items, D = {}, C = {}, K = {}, eta = {}, beta = {}",
        train.len(),
        test.len(),
        data.dim(),
        data.classes,
        hyper.code_bits,
        hyper.eta,
        hyper.beta
    );

    let result = run_experiment(
        &train,
        &test,
        &TrainConfig::new(hyper),
        DatabaseChoice::Train,
    )?;
    for s in result
        .outcome
        .trace
        .iter()
        .step_by(10.max(hyper.epochs / 10))
    {
        println!(
            "epoch {:4}  J = {:10.4}  L2 = {:10.4}  L3 = {:.4}",
            s.epoch, s.objective, s.similarity, s.label
        );
    }
    let r = &result.report;
    println!("MAP = {:.4}  OA = {:.4}", r.map, r.oa);
    for (k, p) in r.ks.iter().zip(&r.precision_at) {
        println!("  P@{k:<5} = {p:.4}");
    }
    Ok(())
}
