//! Numerical laboratory for abstract Wegner estimates.
//!
//! The crate builds finite-volume random self-adjoint operators (tight-binding
//! Anderson Hamiltonians and metric graphs on lattice windows), computes their
//! spectra exactly, and compares empirical eigenvalue counts against explicit
//! Wegner-type right-hand sides assembled from measured constants.
//!
//! All numeric code is generic over the scalar type through [`Real`]; the
//! shipped scenarios and the CLI instantiate everything at `f64` via the
//! aliases at the crate root.

pub mod error;
pub mod graphs;
pub mod lattice;
pub mod measures;
pub mod spectral;
pub mod wegner;

pub use error::{Error, Result};

/// Scalar trait for all core math: `f32`, `f64`, or any other IEEE-style
/// float exposing the `num_traits` surface used here.
pub trait Real:
    num_traits::Float
    + num_traits::FloatConst
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::fmt::Debug
    + std::fmt::Display
    + std::fmt::LowerExp
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Send
    + Sync
    + 'static
{
}

impl<T> Real for T where
    T: num_traits::Float
        + num_traits::FloatConst
        + num_traits::FromPrimitive
        + num_traits::ToPrimitive
        + std::fmt::Debug
        + std::fmt::Display
        + std::fmt::LowerExp
        + std::iter::Sum
        + std::ops::AddAssign
        + std::ops::SubAssign
        + std::ops::MulAssign
        + std::ops::DivAssign
        + Send
        + Sync
        + 'static
{
}

/// Shorthand for lifting an `f64` literal into the generic scalar.
#[inline]
pub(crate) fn r<F: Real>(x: f64) -> F {
    F::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Default scalar used by the shipped scenarios and the CLI.
pub type Scalar = f64;

pub type Measure = measures::MeasureFamily<Scalar>;
pub type Disorder = measures::DisorderModel<Scalar>;
pub type Coupling = measures::Configuration<Scalar>;
pub type Operator = spectral::SymmetricOperator<Scalar>;
pub type Decomposition = spectral::SpectralDecomposition<Scalar>;
pub type Window = spectral::Interval<Scalar>;
pub type Lattice = lattice::LatticeModel<Scalar>;
pub type Cube = lattice::CubeRestriction;
pub type MetricGraph = graphs::MetricGraphModel<Scalar>;
