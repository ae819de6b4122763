//! The network's named layers, each with a hand-written backward pass.

pub mod attention;
pub mod batch_norm;
mod bilinear;
mod loss;
mod pixel_shuffle;
mod prelu;

pub use attention::{
    bottleneck_width, channel_attention, channel_attention_backward, AttentionCache, AttentionGrads,
    AttentionParams,
};
pub use batch_norm::{
    batch_norm_backward, batch_norm_forward, batch_norm_train_with_correction, freeze_batch_norm,
    BatchNormState, BnCache, BnGrads, BnMode, BnParams, BnSettings, BnStatUpdate, Renorm, RENORM_D_MAX, RENORM_R_MAX,
};
pub use bilinear::bilinear_upsample;
pub use loss::{charbonnier_loss, LossValue, CHARBONNIER_EPSILON};
pub use pixel_shuffle::{pixel_shuffle, pixel_unshuffle};
pub use prelu::{prelu, prelu_backward, PReluParams, PRELU_INIT};
