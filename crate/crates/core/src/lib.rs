//! Offline decision making on finite instances.
//!
//! The crate computes the log-likelihood-regularized minimax decision (EDD),
//! the empirical and population estimation coefficients, the exact minimax
//! value over dataset-to-decision kernels, and the rate experiments for
//! tabular sequential problems and supervised learning. `lemmalab` turns
//! the supporting inequalities into executable checks.
//!
//! Every game is solved exactly and returned with a duality-gap
//! certificate; every random quantity is derived from a `(seed, indices)`
//! stream so results do not depend on thread scheduling.

pub mod divergence;
pub mod dmof;
pub mod error;
pub mod games;
pub mod generate;
pub mod io;
pub mod lemmalab;
pub mod sequential;
pub mod stats;
pub mod supervised;

pub use divergence::{hellinger_sq, kl, make_dist, product_dist, tv, FiniteDist};
pub use dmof::{
    check_lower_bound, check_up1, check_up2, edd, eoec, lambda_fast_sl, lambda_fast_sq, minimax_algorithm_value, oec,
    DivergenceKind, DivergenceSpec, ExplicitDmof, ExplicitModel, PolicyMixture, RefDistSet, ScoredDmof, ScoredModel,
};
pub use error::{Error, Result};
pub use games::{solve_zero_sum, GameSolution, PayoffMatrix};
pub use io::Instance;
pub use sequential::{BehaviorSpec, EpisodicLoss, MarkovPolicy, PolicyRef, RateRow, TabularMsp, TrajectoryDataset};
pub use stats::{stream_rng, FrequencyCheck};
pub use supervised::SlInstance;
