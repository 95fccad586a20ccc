//! Framework-free binary sentiment classification for movie reviews.
//!
//! The pipeline runs raw CSV → [`corpus`] cleaning and splitting →
//! [`textproc`] vocabulary, encoding and batching → a [`layers::Model`]
//! built on the [`autodiff`] tape → [`optim`] loss and Adam →
//! [`trainer`] loops, ablations and checkpoints.

pub mod autodiff;
pub mod cli;
pub mod corpus;
pub mod layers;
pub mod optim;
pub mod textproc;
pub mod trainer;
