//! Mixture of low-rank experts over frozen feed-forward blocks, with a
//! lifelong-learning question-answering benchmark pipeline around it.
//!
//! * [`numerics`]: dense matrices, softmax, cosine similarity, Adam.
//! * [`adapter`]: low-rank experts, router, top-k gating, the MoRAL layer.
//! * [`model`]: a small frozen causal transformer whose FFNs carry adapters,
//!   plus the training loop and gradient audit.
//! * [`retrieval`]: recursive chunking, embedders, thresholded cosine retrieval.
//! * [`curation`]: documents to question/answer records with a train/test split.
//! * [`evaluation`]: scenario routing, metrics and report aggregation.

pub mod adapter;
pub mod curation;
pub mod error;
pub mod evaluation;
mod http;
pub mod model;
pub mod numerics;
pub mod prompts;
pub mod retrieval;
pub mod rng;

pub use adapter::{
    select_top_k, AdaptedFfn, AdapterConfig, FrozenFfn, GatingDecision, LoraExpert, LoraLayer, MoralLayer,
    RouterNetwork,
};
pub use error::{Error, Result};
pub use http::HttpConfig;
pub use numerics::{adam_step, cosine_similarity, matmul, softmax, AdamConfig, AdamState, Matrix};
pub use retrieval::{retrieve, Chunk, Embedder, RetrievalConfig, Retrieved, TrigramEmbedder, VectorIndex};
