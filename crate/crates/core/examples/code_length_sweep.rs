//! MAP and accuracy as a function of code length on the synthetic benchmark.
//!
//! ```bash
//! cargo run --release --example code_length_sweep -- [bits,...]
//! ```

use semhash::data::{synth_dataset, SynthSpec};
use semhash::experiment::{run_experiment, DatabaseChoice};
use semhash::trainer::TrainConfig;
use semhash::Hyperparams;

fn main() -> semhash::Result<()> {
    let bits: Vec<usize> = std::env::args()
        .nth(1)
        .map(|s| s.split(',').filter_map(|b| b.trim().parse().ok()).collect())
        .unwrap_or_else(|| vec![8, 16, 32, 48, 64]);
    let (train, query) = synth_dataset(&SynthSpec::default())?.stratified_split(0.2, 0);

    println!("bits,map,oa,final_objective");
    for k in bits {
        let hyper = Hyperparams {
            code_bits: k,
            ..Hyperparams::default()
        };
        let r = run_experiment(
            &train,
            &query,
            &TrainConfig::new(hyper),
            DatabaseChoice::Train,
        )?;
        let obj = r.outcome.trace.last().map_or(f64::NAN, |t| t.objective);
        println!("{k},{:.4},{:.4},{obj:.4e}", r.report.map, r.report.oa);
    }
    Ok(())
}
