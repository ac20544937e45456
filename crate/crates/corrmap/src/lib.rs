//! Correlation-order diagnostics and generative-model tooling for bitstring
//! datasets.
//!
//! The crate revolves around two scalar indicators of a binary dataset:
//!
//! * **QCLI**: the Jensen–Shannon divergence between the dataset's
//!   Walsh–Hadamard order spectrum and the binomial spectrum of i.i.d. fair
//!   bits ([`spectrum`]). High values mean the parity power of the data is
//!   concentrated at unusual interaction orders.
//! * **CCI**: the fraction of total correlation that the best tree-structured
//!   (Chow–Liu) pairwise model cannot explain ([`cci`]).
//!
//! Around the indicators sit the pieces needed to exercise them end to end:
//! an invertible float-to-bitstring quantizer ([`codec`]), an exact simulator
//! for commuting phase-polynomial (IQP) circuits ([`iqp`]), Hamming-Gaussian
//! MMD losses in raw and parity-basis form with analytic gradients ([`mmd`]),
//! Adam/SPSA trainers plus a latent-block adaptation workflow ([`train`]),
//! binwise envelope estimators for scatter clouds ([`envelope`]), field
//! snapshot evaluation metrics ([`eval`]), an RBM baseline ([`rbm`]) and the
//! reproducible study harnesses ([`experiments`]).
//!
//! All numeric kernels are generic over the scalar type via [`Scalar`]
//! (`f32` or `f64`); the aliases below pin the `f64` instantiations used by
//! the CLI and the experiment harness.
//!
//! ```
//! use corrmap::datasets::{even_parity, iid_uniform};
//! use corrmap::{cci, spectrum};
//!
//! // Unstructured bits score low on both indicators...
//! let noise = iid_uniform(16, 5_000, 7);
//! let q_noise: f64 = spectrum::qcli_exact(&noise)?;
//!
//! // ...while a parity constraint moves spectral mass to the extreme
//! // orders and is invisible to every pairwise model.
//! let parity = even_parity(16, 5_000, 7);
//! let q_parity: f64 = spectrum::qcli_exact(&parity)?;
//! let report = cci::cci::<f64>(&parity)?;
//!
//! assert!(q_noise < q_parity);
//! assert!(report.cci > 0.5);
//! # Ok::<(), corrmap::Error>(())
//! ```

// Indexed loops are clearer for the transform/convolution kernels, and the
// negated comparisons are deliberate NaN guards.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub mod bits;
pub mod cci;
pub mod codec;
pub mod datasets;
pub mod envelope;
pub mod error;
pub mod eval;
pub mod experiments;
pub mod iqp;
pub mod mmd;
pub mod optim;
pub mod rbm;
pub mod spectrum;
pub mod stats;
pub mod train;
pub mod wht;

pub use error::{Error, Result};

/// Floating-point scalar the numeric kernels are generic over.
///
/// Implemented by `f32` and `f64`. The bound set is what the kernels need:
/// ordinary float arithmetic, conversions from literals, summation and
/// thread-safety for the parallel paths.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant, panicking only for exotic scalar types
    /// that cannot represent ordinary finite values.
    fn from_f64_const(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum<Self>
        + fmt::Debug
        + fmt::Display
        + Send
        + Sync
        + 'static
{
}

/// Scalar type used by the CLI and the experiment presets.
pub type Real = f64;

/// `f64` empirical probability mass function.
pub type Pmf = datasets::EmpiricalPmf<Real>;
/// `f64` order spectrum.
pub type Spectrum = spectrum::OrderSpectrum<Real>;
/// `f64` IQP circuit.
pub type Circuit = iqp::IqpCircuit<Real>;
/// `f64` dense output distribution of an IQP circuit.
pub type Distribution = iqp::OutputDistribution<Real>;
/// `f64` MMD kernel configuration.
pub type Kernel = mmd::KernelSpec<Real>;
/// `f64` latent-parameter trajectory.
pub type Trajectory = train::LatentTrajectory<Real>;
/// `f64` restricted Boltzmann machine.
pub type Rbm = rbm::RbmModel<Real>;
/// `f64` field snapshot.
pub type Field = eval::FieldSnapshot<Real>;
