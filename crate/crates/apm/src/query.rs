//! Central ray shooting and membership by DAG descent.
//!
//! A query walks the layered DAG from the virtual root, keeping one node
//! per level: the first child (lowest id) whose ellipsoid meets the query
//! ray. The reached leaf stores witness hyperplanes; the answer point is
//! the nearest intersection of the ray with any of them. Everything here
//! is read-only over the DAG, so concurrent queries need no coordination.
//!
//! Queries are phrased in the canonical frame of the body. Points given
//! in the original frame go through [`CanonicalBody::map_point`] first.

use crate::canonical::CanonicalBody;
use crate::error::{Error, Result};
use crate::geom::{check_dim, Halfspace, Ray, Vector};
use crate::hierarchy::LayeredDag;
use crate::tol;

/// Result of a central ray-shooting query.
///
/// `point` lies on the `witness` hyperplane, a supporting facet of the
/// body, and is never interior; its distance to the body is within the
/// accuracy the DAG was built for.
#[derive(Debug, Clone)]
pub struct RayShootAnswer {
    pub point: Vector,
    pub witness: Halfspace,
    /// Nodes visited during the descent, always the number of levels.
    pub path_length: usize,
    /// Ellipsoid-ray tests performed during the descent.
    pub fanout_checked: usize,
}

/// Outcome of a membership query. `Outside` carries a halfspace of the
/// body that strictly separates the query point.
#[derive(Debug, Clone)]
pub enum Membership {
    Inside,
    Outside { witness: Halfspace },
}

/// Shoots the ray from the origin through `q` and returns the nearest
/// intersection with the reached leaf's witness hyperplanes.
///
/// # Errors
///
/// `q` at the origin (no direction), a dimension mismatch, or a descent
/// dead end; the latter means the DAG violates its coverage invariant
/// and is reported as a verification failure.
pub fn ray_shoot(dag: &LayeredDag, k: &CanonicalBody, q: &Vector) -> Result<RayShootAnswer> {
    check_dim(k.dim(), q.len())?;
    check_dim(k.dim(), dag.params.dim)?;
    let ray = Ray::new(Vector::zeros(k.dim()), q.clone())?;
    let mut fanout_checked = 0usize;
    let mut path_length = 0usize;

    let mut cur = first_hit(&dag.levels[0], 0..dag.levels[0].len(), &ray, &mut fanout_checked)
        .ok_or_else(|| {
            Error::Verification("query ray missed every root child ellipsoid".into())
        })?;
    path_length += 1;

    for lvl in 0..dag.params.ell {
        let node = &dag.levels[lvl][cur];
        let next = first_hit(
            &dag.levels[lvl + 1],
            node.children.iter().map(|&c| c as usize),
            &ray,
            &mut fanout_checked,
        )
        .ok_or_else(|| {
            Error::Verification(format!(
                "descent dead end below level {lvl}: no child ellipsoid meets the ray"
            ))
        })?;
        cur = next;
        path_length += 1;
    }

    let leaf = &dag.levels[dag.params.ell][cur];
    let mut best: Option<(f64, usize)> = None;
    for (wi, h) in leaf.witnesses.iter().enumerate() {
        let den = h.normal().dot(&ray.direction);
        if den > 0.0 {
            let t = h.offset() / den;
            if best.map_or(true, |(bt, _)| t < bt) {
                best = Some((t, wi));
            }
        }
    }
    let (t, wi) = best.ok_or_else(|| {
        Error::Verification("no leaf witness hyperplane lies ahead of the ray".into())
    })?;
    Ok(RayShootAnswer {
        point: ray.at(t),
        witness: leaf.witnesses[wi].clone(),
        path_length,
        fanout_checked,
    })
}

/// Whether `q` lies in the body, up to the accuracy of the DAG: interior
/// points always report `Inside`, points farther outside than the build
/// accuracy always report `Outside`, and the thin band between may go
/// either way.
///
/// # Errors
///
/// Dimension mismatch or a broken DAG (see [`ray_shoot`]).
pub fn membership(dag: &LayeredDag, k: &CanonicalBody, q: &Vector) -> Result<Membership> {
    check_dim(k.dim(), q.len())?;
    let nq = q.norm();
    if nq <= tol::EXACT_ABS {
        return Ok(Membership::Inside);
    }
    let answer = ray_shoot(dag, k, q)?;
    if nq <= answer.point.norm() {
        Ok(Membership::Inside)
    } else {
        Ok(Membership::Outside { witness: answer.witness })
    }
}

/// First node of `ids` whose ellipsoid meets the ray, counting tests.
fn first_hit(
    nodes: &[crate::hierarchy::DagNode],
    ids: impl IntoIterator<Item = usize>,
    ray: &Ray,
    tests: &mut usize,
) -> Option<usize> {
    for id in ids {
        *tests += 1;
        if nodes[id].ellipsoid.intersects_ray(ray) {
            return Some(id);
        }
    }
    None
}
