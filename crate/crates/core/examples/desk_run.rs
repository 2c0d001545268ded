//! End-to-end run on a generated dataset: baseline, surgery, per-class
//! heads, and a before/after mask AP table.
//!
//! `cargo run --release --example desk_run -- [seed] [train] [val] [epochs] [head_epochs]`

use std::time::Instant;

use splitseg::eval::render_table;
use splitseg::experiment::{run_protocol, Protocol};

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> splitseg::Result<()> {
    let d = Protocol::default();
    let p = Protocol {
        seed: arg(1, 0) as u64,
        train_samples: arg(2, d.train_samples),
        val_samples: arg(3, d.val_samples),
        baseline_epochs: arg(4, d.baseline_epochs),
        head_epochs: arg(5, d.head_epochs),
    };
    let t0 = Instant::now();
    let out = run_protocol(&p)?;
    println!("baseline: {} epochs, history {:?}", out.baseline_epochs, out.metric_history);
    println!("{}", render_table(&out.report));
    println!(
        "plateau epoch {:?}; {}/{} classes improved",
        out.plateau_epoch,
        out.improved_classes(),
        out.report.classes.len()
    );
    println!("total: {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
