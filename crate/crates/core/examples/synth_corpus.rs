//! Writes seeded synthetic scenes as native scene JSON.
//!
//! ```text
//! cargo run --example synth_corpus -- OUT_DIR [N_SCENES] [SEED]
//! ```

use std::path::PathBuf;

use spatial_qa::io::scene_to_json;
use spatial_qa::synth::{synth_scene, SynthConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().expect("usage: synth_corpus OUT_DIR [N_SCENES] [SEED]"));
    let n: usize = args.next().map_or(3, |s| s.parse().expect("N_SCENES"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("SEED"));
    std::fs::create_dir_all(&out).expect("create output dir");
    for i in 0..n {
        let cfg = SynthConfig { duplicate_category: i % 3 == 2, ..Default::default() };
        let id = format!("room{i:02}");
        let scene = synth_scene(&id, &cfg, seed);
        std::fs::write(out.join(format!("{id}.json")), scene_to_json(&scene)).expect("write scene");
    }
    println!("{n} scene(s) written to {}", out.display());
}
