//! Analysis toolkit for mode-locking in piecewise-linear continuous maps.
//!
//! The library is organized bottom-up:
//!
//! - [`symbolic`]: exact integer algebra on rotational symbol words and the
//!   derived two-parameter word families.
//! - [`plmap`]: piecewise-linear continuous maps with two affine branches,
//!   periodic-cycle solving, admissibility, stability, orbit detection, and
//!   grid scans of mode-locking regions.
//! - [`shrink`]: location of shrinking points in two-parameter slices and the
//!   scalar/eigenvector data attached to them.
//! - [`sectors`]: polar sector coordinates around a shrinking point, boundary
//!   curves of nearby mode-locking regions, sector corners, and the induced
//!   sawtooth parameters.
//! - [`sawtooth`]: the one-dimensional skew sawtooth circle map, rotation
//!   numbers, tongue scans, and Lyapunov exponents.
//! - [`manifold`]: one-dimensional centre-manifold machinery: local frames,
//!   fundamental domains, the induced return map, and its verification
//!   against the sawtooth reduction.
//! - [`scan`]: reproducible batch experiments with manifests.
//! - [`grid`]: grid containers with CSV and PPM/PGM serialization.

pub mod grid;
pub mod linalg;
pub mod manifold;
pub mod plmap;
pub mod sawtooth;
pub mod scan;
pub mod sectors;
pub mod shrink;
pub mod symbolic;
pub mod tol;
