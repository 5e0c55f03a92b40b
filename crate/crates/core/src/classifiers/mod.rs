//! Naive Bayes and a single-hidden-layer neural network.

mod nb;
mod nn;

pub use nb::{fit_nb, nb_predict_proba, ColumnKind, NaiveBayes};
pub use nn::{fit_nn, nn_predict_proba, NeuralNet, NnOptions};
