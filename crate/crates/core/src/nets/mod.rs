//! Explicit-gradient networks: the convolutional detector, its classifier
//! head and the augmentation policy MLP.

mod adam;
mod checkpoint;
mod layers;
mod model;
mod params;

pub use adam::{adam_step, cosine_lr, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{conv_out_len, conv_tanh_backward, conv_tanh_forward, Maps};
pub use model::{
    backward_detector, backward_policy, bce_loss, bce_with_logit, build_search_batch, classify,
    detector_loss, extractor_backward, extractor_forward, features, masked_softmax, mean_probs,
    policy_backward, policy_forward, policy_head, sigmoid, soft_mixture_forward,
    soft_mixture_with_draws, DetectorGrads, ExtractorCache, FeatureVector, MixtureCache, NetConfig,
    Networks, OperatorDraws, PolicyCache, PolicyGrads, Prediction, SearchBatch, PROB_CLAMP,
};
pub use params::{ParamStore, Tensor};
