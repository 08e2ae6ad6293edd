//! A small frozen causal language model whose FFN sublayers carry MoRAL
//! adapters, with fine-tuning, a finite-difference gradient audit and
//! checkpointing.

mod checkpoint;
mod config;
mod decode;
mod gradcheck;
pub mod tokenizer;
mod train;
mod transformer;

pub use checkpoint::{
    decode_base_weights, encode_base_weights, load_checkpoint, save_checkpoint, ADAPTER_FILE, BASE_FILE, BASE_MAGIC,
    BASE_VERSION, CONFIG_FILE,
};
pub use config::{ToyModelConfig, TrainConfig};
pub use gradcheck::{gradient_check, randomize_adapters, GradCheckReport, GradEntry, MAX_GRADCHECK_PARAMS};
pub use train::{mean_loss, train, QaPair, TrainOutcome};
pub use transformer::{build_frozen_model, ToyModel};
