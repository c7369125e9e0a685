//! Baseline uncertainty quantifiers: Monte-Carlo dropout and the
//! two-headed mean/variance network.

mod mcdrop;
mod probout;

pub use mcdrop::{mcdrop_uncertainty, McDropConfig};
pub use probout::{
    split_output as probout_split_output,
    decode_variance, probout_forward, probout_init_params, probout_loss, probout_output_grad,
    probout_spec_from_baseline,
};
