//! Round-trips every on-disk format: features, labels, checkpoints and code
//! tables, then reloads them and checks the encodings agree.
//!
//! ```bash
//! cargo run --example file_formats -- [dir]
//! ```

use std::path::PathBuf;

use semhash::data::{load_dataset, synth_dataset, ElementWidth, SynthSpec};
use semhash::index::CodeTable;
use semhash::trainer::{encode_database, load_checkpoint, save_checkpoint, train, TrainConfig};
use semhash::Hyperparams;

fn main() -> semhash::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("semhash-formats"));
    std::fs::create_dir_all(&dir).map_err(|e| semhash::Error::Data(e.to_string()))?;

    let data = synth_dataset(&SynthSpec {
        per_class: 20,
        dim: 8,
        classes: 4,
        ..SynthSpec::default()
    })?;
    let (feat, labels) = (dir.join("data.feat"), dir.join("data.labels"));
    data.save(&feat, &labels, ElementWidth::F32)?;
    let reloaded = load_dataset(&feat, &labels)?;
    println!(
        "features: {} rows x {} dims, {} classes (f32 on disk)",
        reloaded.len(),
        reloaded.dim(),
        reloaded.classes
    );

    let hyper = Hyperparams {
        code_bits: 12,
        epochs: 10,
        ..Hyperparams::default()
    };
    let outcome = train(&reloaded, &TrainConfig::new(hyper))?;
    let ckpt = dir.join("model.dhcn");
    save_checkpoint(&outcome.final_checkpoint(hyper), &ckpt)?;
    let cp = load_checkpoint(&ckpt)?;
    println!(
        "checkpoint: (D, K, C) = {:?}, epoch {}, eta {}",
        cp.dims(),
        cp.epoch,
        cp.hyper.eta
    );
    assert_eq!(cp.params, outcome.params);

    let table = encode_database(&cp.params, &reloaded)?;
    let codes = dir.join("codes.htbl");
    table.save(&codes)?;
    let back = CodeTable::load(&codes)?;
    assert_eq!(back, table);
    println!(
        "code table: {} codes of {} bits, first = {:?}",
        back.len(),
        back.bits(),
        back.code(0)
    );
    println!("files in {}", dir.display());
    Ok(())
}
