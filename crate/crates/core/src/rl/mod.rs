//! Contextual-bandit PPO over the global scheduling parameter ω.

pub mod checkpoint;
pub mod features;
pub mod net;
pub mod ppo;

pub use checkpoint::Checkpoint;
pub use features::{build_state, extract_features, InputScale, SemanticFeature, StateMatrix, FEATURE_DIM};
pub use net::{softmax, Adam, PolicyValueNet};
pub use ppo::{
    advantage, clipped_surrogate, greedy_action, ppo_update, sample_action, train, BanditEnv, EpisodeRecord,
    PpoParams, SyntheticBandit, TrainOutcome,
};
