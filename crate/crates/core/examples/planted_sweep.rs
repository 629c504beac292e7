//! Trains the toy configuration on the planted corpus for a range of seeds
//! and prints held-out label F1 and category macro-F1.
//!
//! cargo run --release -p mmfuse-core --example planted_sweep -- 20

use mmfuse::dataset::split;
use mmfuse::evalharness::{f1, macro_f1};
use mmfuse::model::{train, Modality};
use mmfuse::synth::{planted, toy_model_config, toy_train_config, PlantedConfig, Signal, TOY_VOCAB};

fn main() -> mmfuse::Result<()> {
    let seeds: u64 = std::env::args().nth(1).map_or(10, |s| s.parse().expect("seed count"));
    for signal in [Signal::Both, Signal::ImageOnly] {
        for modality in [Modality::Multimodal, Modality::TextOnly] {
            for seed in 1..=seeds {
                let memes = planted(&PlantedConfig { signal, seed, ..Default::default() });
                let parts = split(&memes, |m| m.record.category, seed, 0.5)?;
                let train_set: Vec<_> = parts.train.iter().map(|m| m.example(TOY_VOCAB)).collect();
                let test: Vec<_> = parts.test.iter().map(|m| m.example(TOY_VOCAB)).collect();
                let (model, history) = train(&train_set, toy_model_config(seed, modality), &toy_train_config())?;
                let preds = test.iter().map(|e| model.predict(&e.input)).collect::<mmfuse::Result<Vec<_>>>()?;
                let label_f1 = f1(
                    &preds.iter().map(|p| p.label).collect::<Vec<_>>(),
                    &test.iter().map(|e| e.label).collect::<Vec<_>>(),
                )?;
                let cat_f1 = macro_f1(
                    &preds.iter().map(|p| p.category).collect::<Vec<_>>(),
                    &test.iter().map(|e| e.category).collect::<Vec<_>>(),
                )?;
                println!(
                    "{signal:?} {modality:?} seed {seed}: final loss {:.4}, F1 {label_f1:.3}, macro-F1 {cat_f1:.3}",
                    history.last().copied().unwrap_or(f64::NAN)
                );
            }
        }
    }
    Ok(())
}
