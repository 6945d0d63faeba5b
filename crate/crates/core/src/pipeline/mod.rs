//! Dataset and feature files, synthetic fixtures and the command line.

mod cli;
mod dataset;
mod features;
mod prepare;
pub mod synth;

pub use cli::{execute, generate_options, read_generated, run_cli, Cli, Command, GeneratedCaption};
pub use dataset::{
    default_features_dir, load_dataset, parse_dataset, resolve_data_path, write_dataset, DatasetRecord, Split,
    DATA_DIR_ENV,
};
pub use features::{features_from_bytes, features_to_bytes, read_features, write_features, FeatureStore};
pub use prepare::{load_tokenizer, Resources, MERGES_FILE, VOCAB_FILE};
