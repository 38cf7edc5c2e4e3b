pub mod baselines;
pub mod basis;
pub mod bench;
pub mod dictionary;
pub mod error;
pub mod par;
pub mod ridge;
pub mod synth;
pub mod estimator;
