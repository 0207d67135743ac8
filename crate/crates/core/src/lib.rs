//! Novikov rings with two period homomorphisms, rank-2 valuations, and t-families of
//! filtered Floer-type complexes over them.

pub mod complex;
pub mod envelope;
pub mod error;
pub mod exponents;
pub mod field;
pub mod format;
pub mod invariants;
pub mod models;
pub mod novikov;
pub mod rational;
pub mod reduce;

pub use complex::{
    verify_continuation, BoundaryFamily, CappedGenerator, Chain, ComplexData, ContinuationBlock,
    ContinuationData, Matrix, Slice, ValidationReport,
};
pub use error::{Error, Result};
pub use exponents::{Exponent, PeriodPair, PeriodSystem, RaySupport};
pub use field::Field;
pub use format::{emit_complex, parse_complex, parse_complex_with, Overrides};
pub use invariants::{
    bottleneck, boundary_depth, rho, scan_semicontinuity, spectrum, SpectralResult,
};
pub use models::{gen_elementary, gen_random, line_family, ModelSpec};
pub use novikov::{NovikovElement, Order, Rank2Value, Ring, RingMode};
pub use rational::{format_rational, parse_rational, Extended, Rational};
pub use reduce::{
    best_approximation, fixed_point, floer_divergence_check, persistence_barcode, Barcode,
    DivergenceCheck, Operator,
};
