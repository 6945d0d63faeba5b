//! Regenerates the synthetic fixtures:
//! `make_fixtures <dir> [records] [test records] [seed]`.
//!
//! Writes `mini_kb.jsonl` and a captioning dataset with its feature files.

use std::path::PathBuf;

use joganic::pipeline::synth;

fn main() -> joganic::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let n: usize = args.next().map_or(32, |s| s.parse().expect("record count"));
    let test: usize = args.next().map_or(0, |s| s.parse().expect("test record count"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("mini_kb.jsonl"), synth::mini_kb(seed).to_jsonl())?;
    let path = synth::write_captioning_fixture(&dir, n, test, seed, 4, 64)?;
    println!("{}", path.display());
    Ok(())
}
