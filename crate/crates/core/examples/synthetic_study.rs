//! Raw vs triplet vs MNR on a synthetic clustered corpus, plus an MNR
//! batch-size sweep.
//!
//! ```text
//! cargo run --release -p dupdetect-core --example synthetic_study
//! ```

use dupdetect::corpus::split;
use dupdetect::eval::{batch_size_sweep, compare_settings, EvalOptions, Setting};
use dupdetect::refine::{LossKind, TrainingConfig};
use dupdetect::synthetic::{clustered, ClusterSpec};

fn main() -> dupdetect::Result<()> {
    let data = clustered(&ClusterSpec::default())?;
    let split = split(&data.corpus, 0.8, 0)?;
    let base = TrainingConfig::default();
    let opts = EvalOptions::default();
    let settings = [Setting::Raw, Setting::trained(LossKind::Triplet, base.clone()), Setting::trained(LossKind::Mnr, base.clone())];
    let table = compare_settings(&data.corpus, &split, &data.store, &settings, &opts)?;
    table.write_csv(std::io::stdout())?;
    for row in &table.rows {
        if let Some(t) = &row.training {
            println!("# {} losses {:?}", row.name, t.epoch_losses);
        }
    }
    println!();
    let sweep = batch_size_sweep(&data.corpus, &split, &data.store, &base, &[4, 8, 16, 32, 64], &opts)?;
    sweep.write_csv(std::io::stdout())?;
    Ok(())
}
