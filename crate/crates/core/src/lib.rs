//! navlab-core: a desk-scale instruction-following navigation laboratory.
//!
//! Synthetic graph worlds with panoramic per-direction features, a templated
//! instruction speaker with controlled seen/unseen vocabulary shift, toy
//! pretrained language models (causal and masked), an attention seq2seq
//! navigation agent, imitation-learning strategies (teacher forcing, student
//! forcing, stochastic sampling), and the TL/NE/SR/SPL evaluation protocol —
//! all on top of a small reverse-mode autodiff engine.

pub mod autodiff;
pub mod instructions;
pub mod rng;
pub mod world;

pub use autodiff::{Graph, Tensor, TensorError};
pub use world::{NavGraph, World, WorldConfig};
