//! Writes a small synthetic corpus in the on-disk layout the CLI reads.
//!
//! ```text
//! cargo run -p exophora --example make_synthetic -- <dir> [overfit|topic|masking]
//! ```

use std::path::PathBuf;

use exophora::corpus::{write_dialogues, write_object_pool};
use exophora::synthetic::{Scenario, SyntheticConfig, World};

fn main() -> exophora::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let scenario = match args.next().as_deref() {
        None | Some("topic") => Scenario::TopicSignal,
        Some("overfit") => Scenario::Overfit,
        Some("masking") => Scenario::Masking,
        Some(other) => {
            eprintln!("unknown scenario {other:?} (overfit, topic, masking)");
            std::process::exit(1);
        }
    };
    let world = World::new(SyntheticConfig::new(scenario))?;
    let train = world.sample(200, 1, "train");
    let dev = world.sample(50, 2, "dev");
    let test = world.sample(50, 3, "test");
    std::fs::create_dir_all(&dir).map_err(|e| exophora::Error::Io { path: dir.clone(), source: e })?;
    write_dialogues(dir.join("train.jsonl"), &train.dialogues)?;
    write_dialogues(dir.join("dev.jsonl"), &dev.dialogues)?;
    write_dialogues(dir.join("test.jsonl"), &test.dialogues)?;
    write_object_pool(dir.join("objects.json"), world.pool())?;
    world.store(&[&train, &dev, &test])?.save(dir.join("embeddings"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
