//! MC-dropout mixtures and the entropy / mutual-information acquisition scores.

mod mc;
mod mixture;
mod scores;

pub use mc::{mc_predict, mc_predict_batch};
pub use mixture::{gaussian_entropy, GaussianMixture};
pub use scores::{
    entropy_score, expected_conditional_entropy, mutual_information_raw, mutual_information_score,
    predictive_entropy, MiFormula,
};
