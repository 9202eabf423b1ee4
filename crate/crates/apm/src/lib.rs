//! Approximate polytope membership and central ray shooting.
//!
//! Given a bounded convex polytope `K` in dimension 2..=8 (halfspace
//! representation) and an accuracy parameter `eps`, this crate builds a
//! layered DAG of ellipsoids derived from Macbeath regions near the boundary
//! of `K`. Descending the DAG answers central ray-shooting queries: for a ray
//! from the centroid region of `K`, it reports a bounding hyperplane of `K`
//! whose intersection with the ray is within `eps` of the true boundary.
//! Membership queries reduce to a single ray shot plus a comparison.
//!
//! The `ann` module layers approximate nearest neighbor search on top: sites
//! are lifted to tangent hyperplanes of a paraboloid, a projective map turns
//! vertical ray shooting against their upper envelope into central ray
//! shooting against a bounded polytope, and a quadtree over the query domain
//! keeps per-cell representative sets small enough to search.
//!
//! Construction is deterministic for a fixed seed: all Monte Carlo steps take
//! explicit seeds and all tie-breaks are by lowest index.

pub mod ann;
pub mod bench;
pub mod bodies;
pub mod canonical;
pub mod error;
pub mod geom;
pub mod hierarchy;
pub mod io;
pub mod macbeath;
pub mod oracle;
pub mod query;
pub mod svg;
pub mod tol;

pub use canonical::{canonicalize, AffineMap, CanonicalBody};
pub use error::{Error, Result};
pub use geom::{Cap, Ellipsoid, Halfspace, HPolytope, Ray, Vector};
pub use hierarchy::{build, DagNode, DagParams, LayeredDag};
pub use query::{membership, ray_shoot, Membership, RayShootAnswer};
