//! Numeric tolerances used across the library.
//!
//! These are part of the documented behaviour of the solvers: changing them
//! changes which inputs are accepted and how results are classified.

/// Relative periodicity tolerance for orbit detection: two states are
/// considered equal when their distance is below `PERIOD_TOL * (1 + |x|)`.
pub const PERIOD_TOL: f64 = 1e-8;

/// Absolute slack on first components when checking that cycle points lie on
/// the side of the switching manifold their symbol claims.
pub const ADMISSIBLE_TOL: f64 = 1e-9;

/// A matrix counts as singular when `|det| < SINGULAR_TOL * scale`, with
/// `scale` the max-row-sum norm of the matrix.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Linear solves are refused when the condition estimate exceeds this.
pub const CONDITION_REFUSE: f64 = 1e12;

/// Step factor for finite-difference derivatives: `h = FD_STEP * (1 + |ξ|)`.
pub const FD_STEP: f64 = 1e-6;

/// Iteration cap for Newton solvers.
pub const NEWTON_MAX_ITER: usize = 50;

/// Two eigenvalues competing for "closest to target" within this distance of
/// each other make the selection ambiguous and raise an error.
pub const EIG_SEPARATION: f64 = 1e-6;

/// Threshold on `|λ − 1|` below which the cycle solve for the word with the
/// near-unit multiplier switches to the bordered formulation.
pub const UNIT_EIG_TOL: f64 = 1e-6;

/// Threshold on `|eigenvalue|` for splitting a matrix into near-zero and
/// invertible spectral parts (range tests and restricted inversion).
pub const ZERO_EIG_TOL: f64 = 1e-8;

/// Largest denominator considered when snapping a measured rotation number
/// to a rational.
pub const SNAP_MAX_DEN: i64 = 200;

/// Distance tolerance for rational snapping of rotation numbers.
pub const SNAP_TOL: f64 = 1e-7;

/// Orbit closure tolerance when confirming a snapped rotation number by
/// exact periodicity.
pub const ORBIT_CLOSURE_TOL: f64 = 1e-10;

/// Residual tolerance for boundary-curve root solves.
pub const BOUNDARY_RESIDUAL_TOL: f64 = 1e-10;

/// States larger than this in norm are classified as divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Located pinch points must satisfy `|λ − 1| <` this for the unit
/// eigenvalue of the cycle matrix.
pub const UNIT_EIG_RESIDUAL: f64 = 1e-8;

/// Newton convergence tolerance used when batch experiments locate a
/// shrinking point.
pub const LOCATE_TOL: f64 = 1e-12;

/// Switching values other than the two that vanish at a pinch point must
/// exceed this in magnitude.
pub const T_MARGIN: f64 = 1e-6;
