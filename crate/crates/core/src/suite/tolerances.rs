//! Pass thresholds of the acceptance suite. Every comparison in
//! [`super`] reads its bound from here.

/// Identities that hold exactly in exact arithmetic: relative residual.
pub const EXACT_RELATIVE: f64 = 1e-9;

/// Classical Tanaka: ensemble RMS residual at the base resolution.
pub const TANAKA_RMS: f64 = 0.1;

/// Minimum `rms(base) / rms(refined)` under `(N, ε) -> (4N, ε/2)`.
pub const REFINEMENT_FACTOR: f64 = 1.2;

/// Lévy identity: relative RMS error for the validating convention.
pub const LEVY_RELATIVE_RMS: f64 = 0.10;

/// Monte Carlo means: allowed distance in standard errors.
pub const MC_STANDARD_ERRORS: f64 = 3.0;

/// Quadratic-variation and occupation identities: relative gap.
pub const LOCAL_TIME_RELATIVE_GAP: f64 = 0.05;

/// Gaps at or below this are rounding noise; refinement cannot shrink them.
pub const FLOAT_FLOOR: f64 = 1e-12;

/// Incommensurate level spacing used alongside `dy = ε/2`.
pub const INCOMMENSURATE_DY: f64 = 0.0073;

/// Meyer-Tanaka against the classical assemblies, term by term.
pub const ASSEMBLY_MATCH: f64 = 1e-12;

/// `ψ(m̄)` recovered by finite differences.
pub const PSI_RECOVERY: f64 = 1e-4;

/// `∫ρ = 1` under the default quadrature.
pub const KERNEL_NORMALIZATION: f64 = 1e-10;

/// Kernel-differentiated against finite-differenced mollified functionals,
/// relative to `max(1, |value|)`.
pub const KERNEL_DERIVATIVE: f64 = 1e-6;

/// Midpoint convexity of mollified functionals, relative to
/// `max(1, |value|)`.
pub const CONVEXITY_SLACK: f64 = 1e-12;
