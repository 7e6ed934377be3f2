//! Data types and linear operators of the SCI forward model.

pub mod cfa;
pub mod cube;
pub mod forward;
pub mod masks;

pub use cfa::{deinterleave, interleave, BayerComponents, BayerSite, CfaOperator, CfaPattern};
pub use cube::{Plane, VideoCube};
pub use forward::{encode, init_estimate, ForwardModel, Measurement, NoiseRecord, GRAM_EPS};
pub use masks::{adjoint_h, apply_h, gram_diag, MaskStack};
