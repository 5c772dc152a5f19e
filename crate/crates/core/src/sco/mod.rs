//! Stochastic convex optimization learners that fit the prefix-sum template:
//! variance-reduced Frank-Wolfe, dual averaging and the JL method for GLMs.

mod geometry;
mod jl;
mod loss;
mod solvers;

pub use geometry::ConvexBody;
pub use jl::{
    embedded_radius, jl_dimension_lipschitz, jl_dimension_smooth, jl_embed, jl_lift, rescaled_constants, JlMethod, JlSketch,
};
pub use loss::{GlmLoss, Link, LossModel};
pub use solvers::{
    da_query, da_step_size, da_update, vrfw_query, vrfw_update, DualAveraging, StepSize, VrFrankWolfe,
};
