//! Adversarial example crafting and detection.
//!
//! The crate trains the small image classifiers used for MNIST Digit, MNIST
//! Fashion and CIFAR-10, attacks them with FGSM, BIM, PGD, DeepFool and
//! Carlini-Wagner, and scores inputs with five detection features:
//! MC-dropout epistemic, aleatoric and scibilic uncertainty, predictive
//! entropy, and a closeness score computed by an auxiliary MLP on the
//! classifier's last hidden layer. A logistic-regression detector over those
//! features is evaluated by ROC-AUC.
//!
//! Module map:
//!
//! - [`nn`]: networks, exact gradients, Adam, checkpoints
//! - [`data`]: IDX / CIFAR loaders and Gaussian noise
//! - [`attacks`]: the five attacks and the L-inf to L2 budget conversion
//! - [`uncertainty`]: MC-dropout ensembles and the four uncertainty metrics
//! - [`closeness`]: feature-space dataset, MLP, closeness score
//! - [`detector`]: detection samples, logistic regression, ROC-AUC
//! - [`experiment`]: config files and the end-to-end commands behind the CLI

pub mod attacks;
pub mod closeness;
pub mod container;
pub mod data;
pub mod detector;
mod error;
pub mod experiment;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod uncertainty;

pub use error::{Error, Result};
pub use tensor::Tensor;
