//! Self-checks shared by the test suites, the acceptance run and the
//! `gradcheck` command: gradients against central differences, forward-model
//! identities and the distance index against brute force.

mod gradcheck;
mod oracles;

pub use gradcheck::{
    gradcheck_model, perturbed_subject, random_subject, run_gradcheck, term_tolerance, GradcheckConfig, TermCheck,
};
pub use oracles::{distance_oracle, forward_model_oracles, DistanceOracle, ForwardOracles};
