//! Property tests for the structural invariants of the engines.

mod common;

#[test]
fn sse_norm_and_uncertainty() {
    common::sse_norm_and_uncertainty().unwrap();
}

#[test]
fn lindblad_trace_and_hermiticity() {
    common::lindblad_trace_and_hermiticity().unwrap();
}

#[test]
fn wigner_marginals() {
    common::wigner_marginals().unwrap();
}

#[test]
fn force_finite_differences() {
    common::force_finite_differences().unwrap();
}

#[test]
fn noise_determinism() {
    common::noise_determinism().unwrap();
}

#[test]
fn displacement_additivity() {
    common::displacement_additivity().unwrap();
}

#[test]
fn qct_monotonicity() {
    common::qct_monotonicity().unwrap();
}
