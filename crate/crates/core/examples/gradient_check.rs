//! Verifies the analytic gradients against central finite differences on
//! random small problems and prints the worst relative error per trial.
//!
//! ```bash
//! cargo run --example gradient_check -- [trials] [seed]
//! ```

use semhash::objective::random_gradcheck;

fn main() -> semhash::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let trials = args.first().and_then(|s| s.parse().ok()).unwrap_or(20);
    let seed = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0);

    let results = random_gradcheck(seed, trials, 1e-5)?;
    for (t, r) in results.iter().enumerate() {
        println!(
            "trial {t:2}: m={} D={} K={} C={} eta={:<3} beta={:<2}",
            r.batch, r.dim, r.bits, r.classes, r.eta, r.beta
        );
        for b in &r.report.blocks {
            println!("    {:<14} {:.2e}", b.block, b.worst);
        }
        r.report.ensure_below(1e-4)?;
    }
    println!("all {trials} trials below 1e-4");
    Ok(())
}
