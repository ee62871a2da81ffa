//! Loss, analytic backward pass and the fitting loop.

pub mod backward;
pub mod chain;
pub mod fit;
pub mod loss;

pub use backward::{backward, flatten_params, render_loss, unflatten_params, ParamGradients};
pub use fit::{fit, FitConfig, FitRecord, FitResult, LearningRates};
pub use loss::{loss, loss_and_grad, ssim};
