//! Small dense neural-network toolkit with hand-written backward passes.

mod adam;
mod gradcheck;
mod mat;
mod mlp;
mod params;
pub mod transformer;

pub use adam::Adam;
pub use gradcheck::{gradient_check, GradCheckReport, REL_FLOOR};
pub use mat::{affine, affine_backward, dot, gemm};
pub use mlp::{Linear, Mlp, MlpCache};
pub use params::{ParamSpec, Params};
pub use transformer::{mse, Transformer, TransformerCache, TransformerConfig};
