//! Writes the three figures (CSV and SVG) into a directory.

use std::path::PathBuf;

use mfexec::cli::{cmd_figures, RunOptions};

fn main() -> mfexec::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("out/figures"));
    for which in 1..=3 {
        let opts = RunOptions { out: out.join(format!("figure{which}")), ..RunOptions::default() };
        for line in cmd_figures(&opts, which)?.lines {
            println!("{line}");
        }
    }
    Ok(())
}
