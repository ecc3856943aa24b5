//! Everything around the model: synthetic data, dataset files, checkpoint
//! persistence, configuration, and the CLI.

pub mod checkpoint;
pub mod cli;
pub mod configfile;
pub mod dataset;
pub mod synth;

pub use checkpoint::{checkpoint_load, checkpoint_save};
pub use configfile::{desk_defaults, full_scale_defaults, load_config_file, AppConfig};
pub use dataset::{
    all_captions, features_of, load_dataset, prepare_examples, save_dataset, save_references,
    Example,
};
pub use synth::{synth_generate, SceneSpec, SynthSplits};
