//! Simulation designs, recovery metrics and synthetic-data utility.

pub mod align;
pub mod margins;
pub mod pmse;
pub mod sample;
pub mod synth;

pub use align::{align_permutations, entrywise_mse, evaluate, graph_recovery, hungarian, Alignment, EvalReport};
pub use margins::{marginal_transform, MarginType};
pub use pmse::{pmse_evaluate, pmse_with, BaggedTrees, Classifier, ConstantClassifier};
pub use sample::{sample_from_fit, sample_from_params};
pub use synth::{block_params, generate_synthetic_dataset, LatentCdf, Preset, SyntheticSpec};
