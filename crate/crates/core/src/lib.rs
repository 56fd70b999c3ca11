//! Exact piecewise-linear functions on R^n (n <= 3) and checks of first-order
//! nonsmooth optimality statements against brute-force oracles.

pub mod calculus;
pub mod error;
pub mod func_model;
pub mod grid;
pub mod monotone;
pub mod optimality;
pub mod parser;
pub mod polytope;
pub mod suite;
pub mod variational;

pub use calculus::{
    default_schedule, directional_derivative, directional_derivative_active, eps_enlargement,
    eps_enlargement_in, subdiff_contains, subdifferential, sup_support, verify_link, LinkReport,
    LinkStep, Norm, SubgradientSample,
};
pub use error::{Error, Result};
pub use func_model::{
    minimize_on_box, minimize_on_segment, restrict_to_segment, AffinePiece, BoxMinimum, BoxRegion,
    ExtReal, MaxAffine, PLFunction, Point, SegmentMinimum, SegmentProfile,
};
pub use grid::GridSpec;
pub use polytope::Polytope;
pub use variational::{
    ekeland_point, find_enlarged_subgradient, mean_value_witness, perturbed_min_gap,
    EkelandWitness, MVIWitness,
};
pub use optimality::{
    brute_force_is_min, brute_force_minimum, directional_test, minty_sufficient,
    refute_optimality, subdiff_sufficient, subdiff_test, RefutationWitness, TestReport, Verdict,
    Violation,
};
pub use monotone::{
    check_absorbing, check_maximal_monotone, check_monotone, dual_grid_for, monotonically_related,
    polar_samples, sample_subdiff_graph, AbsorbReport, GraphSample, OperatorGraph,
};
pub use parser::{format, normalize, parse, parse_box, parse_function, Ast, Expr};
pub use suite::{generate_instance, run_criterion, run_suite, SuiteConfig, SuiteReport};
