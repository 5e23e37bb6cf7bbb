//! Full pipeline on the in-memory synthetic garden.
//!
//! `cargo run --release --example garden_run -- [out_dir] [frames]`

use panorecon::pipeline::{run_full, PipelineConfig};

fn main() -> panorecon::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let mut config = PipelineConfig::default();
    config.output.dir = args.next().unwrap_or_else(|| "garden_out".into()).into();
    if let Some(n) = args.next() {
        config.synthetic.frames = n.parse().expect("frame count");
    }
    let out = run_full(&config)?;
    for (k, v) in out.report.to_flat() {
        if !k.starts_with("pose.frame") {
            println!("{k:32} {v}");
        }
    }
    println!("wrote {}", out.output_dir.display());
    Ok(())
}
