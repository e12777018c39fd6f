//! Speaker embeddings from a 1-d convolutional network, with the tooling to
//! look inside them frame by frame.
//!
//! The crate is organised bottom-up:
//!
//! * [`corpus`]: utterances, TIMIT-style phone alignments, trial lists and a
//!   seeded synthetic corpus generator.
//! * [`frontend`]: 40-dimensional MFCCs with per-utterance mean normalisation,
//!   and frame-to-phone labelling at each network layer's rate.
//! * [`nn`]: a small f64 tensor core with hand-written backward passes.
//! * [`model`]: the speaker network, its training loop, segment embeddings and
//!   frame-level embeddings obtained by moving the average pooling past the
//!   affine layers.
//! * [`backend`]: cosine and LDA + PLDA scoring, EER and minDCF.
//! * [`analysis`]: broad-class centroid classification, phone probes, critical
//!   phone statistics, similarity matrices and PCA projections.
//! * [`report`]: CSV and PGM writers shared by the analyses and the CLI.

pub mod analysis;
pub mod backend;
pub mod corpus;
pub mod error;
pub mod frontend;
pub mod model;
pub mod nn;
pub mod report;

pub use error::{Error, Result};
