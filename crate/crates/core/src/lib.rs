//! Metric learning with learned target neighborhoods.
//!
//! A Mahalanobis metric `M` and a binary target-neighbor relation `P` are optimized in
//! alternation: at a fixed metric the best `P` under a neighborhood-size budget is found
//! exactly ([`neighborhood`]), and at a fixed `P` the metric is refitted by a wrapped
//! learner ([`lmnn`] or [`mcml`]). [`eval`] and [`pipeline`] provide the 1-NN
//! cross-validation protocol used to compare methods.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases below fix
//! the common double-precision case.

pub mod assignment;
pub mod data;
pub mod dataset;
pub mod driver;
pub mod error;
pub mod eval;
pub mod lmnn;
pub mod mcml;
pub mod metric;
pub mod neighborhood;
mod optim;
pub mod pipeline;
pub mod scalar;

pub use assignment::{NeighborhoodAssignment, NeighborhoodBudget, PairCostTable};
pub use dataset::Dataset;
pub use driver::{joint_objective, lnml_fit, lnml_fit_with_progress, Learner, LnmlConfig, LnmlReport};
pub use error::{Error, Result};
pub use lmnn::LmnnConfig;
pub use mcml::McmlConfig;
pub use metric::{mahalanobis_distance, pairwise_squared_distances, project_psd, MetricMatrix};
pub use neighborhood::{check_feasibility, solve_assignment, solve_assignment_oracle};
pub use optim::{FitTrace, StopReason};
pub use scalar::Scalar;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Metric64 = MetricMatrix<f64>;
pub type Metric32 = MetricMatrix<f32>;
pub type CostTable64 = PairCostTable<f64>;
pub type Report64 = LnmlReport<f64>;
