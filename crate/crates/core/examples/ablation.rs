//! Compares the full objective with its pairwise-only, label-only and
//! no-quantization variants on the synthetic benchmark, averaged over seeds.
//!
//! ```bash
//! cargo run --release --example ablation -- [seeds] [bits]
//! ```

use semhash::data::{synth_dataset, SynthSpec};
use semhash::experiment::{run_experiment, DatabaseChoice};
use semhash::trainer::TrainConfig;
use semhash::Hyperparams;

fn main() -> semhash::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().and_then(|s| s.parse().ok()).unwrap_or(3);
    let bits = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(16);

    let (train, query) = synth_dataset(&SynthSpec::default())?.stratified_split(0.2, 0);
    let variants = [
        ("full", 0.2, 25.0),
        ("labels only", 0.0, 25.0),
        ("pairs only", 1.0, 25.0),
        ("no quantization", 0.2, 0.0),
    ];

    println!("{:<16} {:>8} {:>8}", "variant", "MAP", "OA");
    for (name, eta, beta) in variants {
        let (mut map, mut oa) = (0.0, 0.0);
        for seed in 0..seeds {
            let hyper = Hyperparams {
                code_bits: bits,
                eta,
                beta,
                seed,
                ..Hyperparams::default()
            };
            let r = run_experiment(
                &train,
                &query,
                &TrainConfig::new(hyper),
                DatabaseChoice::Train,
            )?;
            map += r.report.map;
            oa += r.report.oa;
        }
        println!(
            "{name:<16} {:>8.4} {:>8.4}",
            map / seeds as f64,
            oa / seeds as f64
        );
    }
    Ok(())
}
