//! Generates artifacts for a model file: `cargo run --example generate -- model.cbm out/`.

use std::path::Path;

use climadash_core::codegen::{generate_all, write_artifacts, GenerationSelection, ModelHash};
use climadash_core::dsl::load_model;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let [_, model_path, out] = args.as_slice() else {
        eprintln!("usage: generate <model.cbm> <out-dir>");
        std::process::exit(2);
    };
    let text = std::fs::read_to_string(model_path).expect("read model");
    let model = load_model(&text).unwrap_or_else(|report| {
        eprintln!("{report}");
        std::process::exit(1);
    });
    let artifacts = generate_all(&model, &ModelHash::of_source(&text), GenerationSelection::all())
        .expect("generate");
    for entry in write_artifacts(Path::new(out), &artifacts).expect("write") {
        println!("{:?} {}", entry.status, entry.path.display());
    }
}
