//! Malicious-URL classifier built from jointly trained character-level and
//! word-level convolutional branches over the raw URL string, with
//! bag-of-words linear baselines, ROC evaluation, and dataset tooling.

pub mod tensor;
