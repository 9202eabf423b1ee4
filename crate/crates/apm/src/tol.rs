//! Numeric tolerances used across the crate.
//!
//! Every floating-point comparison in the library goes through one of these
//! named constants so that the tolerance regime is auditable in one place.
//! The general scheme: exact identities carry 1e-12 absolute slack, derived
//! quantities that pass through a linear program or an eigendecomposition
//! carry 1e-9, and sampled (Monte Carlo) certificates state their own slack
//! at the call site.

/// Absolute slack for quantities that should be exact up to rounding
/// (unit-normal residuals, halfspace arithmetic, ray-hyperplane residuals).
pub const EXACT_ABS: f64 = 1e-12;

/// Relative slack for LP optima and other conditioned linear-algebra output.
pub const LP_REL: f64 = 1e-9;

/// Feasibility slack for a single linear constraint `a·x <= b`:
/// absolute floor plus a relative term in the offset magnitude.
pub fn lp_feas(offset: f64) -> f64 {
    EXACT_ABS + LP_REL * offset.abs().max(1.0)
}

/// Symmetry residual allowed in an ellipsoid shape matrix.
pub const SHAPE_SYMMETRY: f64 = 1e-10;

/// Slack when testing a point against an ellipsoid quadratic form.
pub const ELLIPSOID_MEMBERSHIP: f64 = 1e-10;

/// Quadratic-form slack for ray-ellipsoid intersection tests. Looser than
/// point membership on purpose: a spurious hit only sends a query into an
/// extra (still valid) child or counts a marginal node as covering, both
/// harmless, while a spurious miss on a tangent ray could fail coverage
/// validation. The value dominates the worst-case quadratic inflation of
/// the coverage-repair certificate (an LP overlap verdict with residual
/// `~1e-9` absolute inflates the certified quadratic value by `~1e-4` at
/// the deepest level scales), so the repair loop and the ray test can
/// never disagree about a certified direction.
pub const RAY_HIT: f64 = 1e-3;

/// Slack for containment certificates driven by support comparison.
pub const CONTAINMENT: f64 = 1e-8;

/// Residual allowed when asserting a point lies on a hyperplane.
pub const ON_HYPERPLANE: f64 = 1e-9;

/// A facet is considered active (tight) at a point below this slack.
pub const ACTIVE_FACET: f64 = 1e-7;

/// Convergence threshold for the distance-to-polytope oracle.
pub const DIST_ORACLE: f64 = 1e-7;

/// Relative tolerance for the minimum-volume-ellipsoid iteration.
pub const MVEE: f64 = 1e-4;

/// Angular slack (radians) added to the conservative cone-overlap test.
pub const CONE_SLACK: f64 = 1e-3;

/// Extra slack added to the accuracy bound when checking query answers
/// against the distance oracle.
pub const CONTRACT_SLACK: f64 = 1e-6;
