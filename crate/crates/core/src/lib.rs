//! Constructive spectral theory of band operators with N×N matrix elements.
//!
//! A band operator acts on square-summable sequences of complex N-vectors
//! through an infinite matrix with `s` block subdiagonals and `r` block
//! superdiagonals, the extreme diagonals invertible. This crate builds the
//! machinery that makes the resolvent set of such an operator computable:
//!
//! * [`blockalg`] — N×N complex blocks and exponent-scaled blocks that
//!   survive geometric growth;
//! * [`bandop`] — operator descriptions, validation, finite sections of
//!   `λI − A`, and a banded LU;
//! * [`recurrence`] — the four polynomial solution families `Q`, `P`, `Q⁺`,
//!   `P⁺` pinned by stacked identity/zero initial frames;
//! * [`kernel`] — the resolvent kernel `R_{k,n}` assembled from the families
//!   and a candidate Weyl matrix, with structural self-checks;
//! * [`weyl`] — the Weyl matrix as the corner of finite-section inverses,
//!   with doubling-ladder convergence control;
//! * [`analysis`] — constancy/identity checkers, the geometric decay fit,
//!   and tail growth rates: λ is classified a resolvent point exactly when
//!   the kernel admits a bound `‖R_{k,n}‖ ≤ C·q^{|n−k|}` with `q < 1`;
//! * [`testkit`] — seeded operators and the slow dense oracle every
//!   equivalence test is measured against.
//!
//! All numerics are generic over the real base type through
//! [`scalar::Scalar`]; `f64` aliases for the main types sit at the crate
//! root.

pub mod analysis;
pub mod bandop;
pub mod blockalg;
pub mod error;
pub mod kernel;
pub mod recurrence;
pub mod scalar;
pub mod testkit;
pub mod weyl;

/// Default tolerances and depths shared by the CLI and the test suites.
pub mod defaults {
    /// Condition-estimate cap for blocks that must be invertible.
    pub const COND_CAP: f64 = 1e8;
    /// Blockwise gap accepted by the doubling Weyl estimator.
    pub const WEYL_TOL: f64 = 1e-8;
    /// Dead zone around `q = 1` in the decay classification.
    pub const EPS_CLASS: f64 = 0.02;
    /// Largest acceptable rms of the log-domain decay fit.
    pub const FIT_TOL: f64 = 0.5;
    /// Recurrence depth K.
    pub const RECURRENCE_DEPTH: i64 = 150;
    /// Initial finite-section size M0.
    pub const SECTION_START: usize = 100;
    /// Relative tolerance for the kernel overlap cross-check.
    pub const OVERLAP_TOL: f64 = 1e-6;
    /// Default validation depth for loaded operators.
    pub const VALIDATE_DEPTH: usize = 200;
    /// Bits an entry must stand above its rounding floor to be trusted.
    pub const CERT_MARGIN_BITS: f64 = 8.0;
    /// Fraction of the computed range used as the growth-rate tail window.
    pub const GROWTH_TAIL_FRACTION: f64 = 0.25;
}

pub use analysis::{Classification, DecayFit, GrowthReport};
pub use bandop::{BandOperator, DiagonalRule, FiniteSection, ValidationReport};
pub use blockalg::{Block, ScaledBlock};
pub use error::{Error, Result};
pub use kernel::{KernelWindow, WeylMatrix, WeylSource};
pub use recurrence::{DualSelector, ForwardSelector, SolutionBasis};
pub use scalar::Scalar;

/// `f64` aliases for the main types.
pub type Block64 = Block<f64>;
pub type ScaledBlock64 = ScaledBlock<f64>;
pub type BandOperator64 = BandOperator<f64>;
pub type FiniteSection64 = FiniteSection<f64>;
pub type SolutionBasis64 = SolutionBasis<f64>;
pub type WeylMatrix64 = WeylMatrix<f64>;
pub type KernelWindow64 = KernelWindow<f64>;
pub type DecayFit64 = DecayFit<f64>;
pub type GrowthReport64 = GrowthReport<f64>;

/// `f32` aliases for the block algebra and operator layers.
pub type Block32 = Block<f32>;
pub type ScaledBlock32 = ScaledBlock<f32>;
pub type BandOperator32 = BandOperator<f32>;
