//! Core geometric types: halfspaces, H-polytopes, rays, ellipsoids, caps.
//!
//! Conventions used throughout the crate:
//! - a halfspace is `{ y : normal · y <= offset }` with a unit normal;
//! - an H-polytope is a finite intersection of halfspaces, duplicates and
//!   redundant halfspaces are kept as given;
//! - an ellipsoid is `{ y : (y - c)^T A (y - c) <= 1 }` with `A` symmetric
//!   positive definite;
//! - a cap of a polytope `K` is `K ∩ { y : direction · y >= cut_offset }`,
//!   i.e. the part of `K` beyond a cut hyperplane, with `direction` pointing
//!   from the body toward its supporting hyperplane.
//!
//! Dimensions 1 through 9 are accepted internally (the nearest neighbor
//! reduction lifts dimension-8 inputs to dimension 9); user-facing input
//! validation restricts to 2..=8.

pub mod lp;
pub mod net;

use nalgebra::{DMatrix, DVector};
use crate::error::{Error, Result};
use crate::tol;

pub use lp::{feasible_point, solve_lp, LpSolution};

/// Dense column vector used for points and directions.
pub type Vector = DVector<f64>;

/// Largest dimension handled by the geometric core.
pub const MAX_DIM: usize = 9;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Closed halfspace `{ y : normal · y <= offset }` with a unit normal.
#[derive(Debug, Clone, PartialEq)]
pub struct Halfspace {
    normal: Vector,
    offset: f64,
}

impl Halfspace {
    /// Builds a halfspace, normalizing `normal` to unit length and scaling
    /// the offset accordingly.
    ///
    /// # Errors
    ///
    /// Rejects zero or non-finite normals and non-finite offsets.
    pub fn new(normal: Vector, offset: f64) -> Result<Self> {
        if !all_finite(normal.as_slice()) || !offset.is_finite() {
            return Err(Error::InvalidInput("halfspace has non-finite entries".into()));
        }
        let norm = normal.norm();
        if norm < 1e-14 {
            return Err(Error::InvalidInput("halfspace normal is zero".into()));
        }
        Ok(Self { normal: normal / norm, offset: offset / norm })
    }

    /// Builds a halfspace from a normal that is already unit length.
    /// Intended for internal construction where renormalization would only
    /// add rounding noise; debug builds verify the invariant.
    pub(crate) fn from_unit(normal: Vector, offset: f64) -> Self {
        debug_assert!((normal.norm() - 1.0).abs() <= 1e-9, "normal must be unit");
        Self { normal, offset }
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed slack `offset - normal · q`; nonnegative inside.
    pub fn slack(&self, q: &Vector) -> f64 {
        self.offset - self.normal.dot(q)
    }

    pub fn contains(&self, q: &Vector) -> bool {
        self.slack(q) >= -tol::EXACT_ABS
    }
}

/// Ray hit record: parameter, entered facet index and the hit point.
#[derive(Debug, Clone)]
pub struct RayHit {
    pub t: f64,
    pub facet: usize,
    pub point: Vector,
}

/// Ray from `origin` along a unit `direction`.
#[derive(Debug, Clone)]
pub struct Ray {
    pub origin: Vector,
    pub direction: Vector,
}

impl Ray {
    /// Builds a ray, normalizing the direction.
    ///
    /// # Errors
    ///
    /// Rejects zero or non-finite directions.
    pub fn new(origin: Vector, direction: Vector) -> Result<Self> {
        if !all_finite(direction.as_slice()) || !all_finite(origin.as_slice()) {
            return Err(Error::InvalidInput("ray has non-finite entries".into()));
        }
        let norm = direction.norm();
        if norm < 1e-14 {
            return Err(Error::InvalidInput("ray direction is zero".into()));
        }
        Ok(Self { origin, direction: direction / norm })
    }

    pub fn at(&self, t: f64) -> Vector {
        &self.origin + &self.direction * t
    }
}

/// Bounded convex polytope as an intersection of halfspaces.
///
/// Halfspaces are stored in the order given; no deduplication or redundancy
/// removal is performed, so facet indices are stable identifiers.
#[derive(Debug, Clone)]
pub struct HPolytope {
    dim: usize,
    halfspaces: Vec<Halfspace>,
}

impl HPolytope {
    /// # Errors
    ///
    /// Rejects an empty halfspace list, unsupported dimensions and
    /// inconsistent halfspace dimensions.
    pub fn new(dim: usize, halfspaces: Vec<Halfspace>) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::UnsupportedDimension(dim, "1..=9"));
        }
        if halfspaces.is_empty() {
            return Err(Error::InvalidInput("polytope needs at least one halfspace".into()));
        }
        for h in &halfspaces {
            check_dim(dim, h.dim())?;
        }
        Ok(Self { dim, halfspaces })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn facet(&self, i: usize) -> &Halfspace {
        &self.halfspaces[i]
    }

    pub fn num_facets(&self) -> usize {
        self.halfspaces.len()
    }

    /// Membership test with absolute slack `tol::EXACT_ABS`.
    ///
    /// # Errors
    ///
    /// Dimension mismatch.
    pub fn contains(&self, q: &Vector) -> Result<bool> {
        check_dim(self.dim, q.len())?;
        Ok(self.min_slack(q).0 >= -tol::EXACT_ABS)
    }

    /// Smallest facet slack at `q` and the facet attaining it (lowest index
    /// on ties). For interior points this equals the distance to the
    /// boundary, since normals are unit.
    pub fn min_slack(&self, q: &Vector) -> (f64, usize) {
        let mut best = f64::INFINITY;
        let mut best_i = 0;
        for (i, h) in self.halfspaces.iter().enumerate() {
            let s = h.slack(q);
            if s < best {
                best = s;
                best_i = i;
            }
        }
        (best, best_i)
    }

    /// First exit of a ray whose origin lies inside the polytope.
    ///
    /// Ties between facets resolve to the lowest facet index.
    ///
    /// # Errors
    ///
    /// Origin outside the polytope, or no facet bounds the ray (unbounded
    /// direction).
    pub fn ray_exit(&self, ray: &Ray) -> Result<RayHit> {
        check_dim(self.dim, ray.origin.len())?;
        if !self.contains(&ray.origin)? {
            return Err(Error::Precondition("ray origin must lie inside the polytope"));
        }
        let mut best_t = f64::INFINITY;
        let mut best_i = usize::MAX;
        for (i, h) in self.halfspaces.iter().enumerate() {
            let den = h.normal.dot(&ray.direction);
            if den > tol::EXACT_ABS {
                let t = h.slack(&ray.origin) / den;
                if t < best_t {
                    best_t = t;
                    best_i = i;
                }
            }
        }
        if best_i == usize::MAX {
            return Err(Error::Unbounded);
        }
        let t = best_t.max(0.0);
        Ok(RayHit { t, facet: best_i, point: ray.at(t) })
    }

    /// Erosion `K(delta)`: every offset reduced by `delta`.
    ///
    /// # Errors
    ///
    /// Negative depth, or the eroded body has empty interior.
    pub fn erode(&self, delta: f64) -> Result<HPolytope> {
        if !(delta >= 0.0) {
            return Err(Error::Precondition("erosion depth must be nonnegative"));
        }
        let halfspaces: Vec<Halfspace> = self
            .halfspaces
            .iter()
            .map(|h| Halfspace::from_unit(h.normal.clone(), h.offset - delta))
            .collect();
        let eroded = HPolytope { dim: self.dim, halfspaces };
        let (_, radius) = eroded.chebyshev()?;
        if radius <= 0.0 {
            return Err(Error::ErosionTooDeep { depth: delta, radius });
        }
        Ok(eroded)
    }

    /// Support value `max { u · y : y in K }`.
    pub fn support(&self, u: &Vector) -> Result<f64> {
        Ok(self.support_point(u)?.1)
    }

    /// Support point and value in direction `u`.
    pub fn support_point(&self, u: &Vector) -> Result<(Vector, f64)> {
        check_dim(self.dim, u.len())?;
        let sol = solve_lp(u, &self.halfspaces)?;
        Ok((sol.point, sol.value))
    }

    /// Directional width `support(u) + support(-u)`.
    pub fn width(&self, u: &Vector) -> Result<f64> {
        Ok(self.support(u)? + self.support(&(-u))?)
    }

    /// Chebyshev center and radius: the largest ball inside the polytope.
    ///
    /// Solved as an LP over `(x, r)`: maximize `r` subject to
    /// `a_i · x + r <= b_i`. A nonpositive radius means empty interior.
    pub fn chebyshev(&self) -> Result<(Vector, f64)> {
        let d = self.dim;
        let mut cons = Vec::with_capacity(self.halfspaces.len());
        for h in &self.halfspaces {
            let mut a = Vector::zeros(d + 1);
            a.rows_mut(0, d).copy_from(&h.normal);
            a[d] = 1.0;
            cons.push(Halfspace::new(a, h.offset)?);
        }
        let mut obj = Vector::zeros(d + 1);
        obj[d] = 1.0;
        let sol = solve_lp(&obj, &cons)?;
        let center = Vector::from_iterator(d, sol.point.iter().take(d).copied());
        // The constraint rows were renormalized by sqrt(1 + |a|^2) = sqrt(2),
        // which rescales both sides equally, so the radius reads off directly.
        Ok((center, sol.point[d]))
    }

    /// Axis-aligned bounding box as (lower, upper) corners.
    pub fn bounding_box(&self) -> Result<(Vector, Vector)> {
        let d = self.dim;
        let mut lo = Vector::zeros(d);
        let mut hi = Vector::zeros(d);
        let mut axis = Vector::zeros(d);
        for i in 0..d {
            axis.fill(0.0);
            axis[i] = 1.0;
            hi[i] = self.support(&axis)?;
            axis[i] = -1.0;
            lo[i] = -self.support(&axis)?;
        }
        Ok((lo, hi))
    }

    /// Checks a nonempty interior (via the Chebyshev radius) and
    /// boundedness (finite support in every axis direction).
    ///
    /// # Errors
    ///
    /// `EmptyInterior` or `Unbounded`.
    pub fn validate_bounded_interior(&self) -> Result<()> {
        let (_, r) = self.chebyshev()?;
        if r <= 0.0 {
            return Err(Error::EmptyInterior(r));
        }
        self.bounding_box()?;
        Ok(())
    }
}

/// Ellipsoid `{ y : (y - center)^T shape (y - center) <= 1 }`.
///
/// The inverse shape matrix and the extreme semi-axis lengths are cached at
/// construction; they are derived data and are not serialized.
#[derive(Debug, Clone)]
pub struct Ellipsoid {
    center: Vector,
    shape: DMatrix<f64>,
    inv_shape: DMatrix<f64>,
    outer_radius: f64,
    inner_radius: f64,
}

impl Ellipsoid {
    /// Builds an ellipsoid from its shape matrix, verifying symmetry and
    /// positive definiteness via an eigendecomposition.
    ///
    /// # Errors
    ///
    /// Asymmetric (beyond `tol::SHAPE_SYMMETRY`) or non positive definite
    /// shapes, and non-finite data.
    pub fn new(center: Vector, shape: DMatrix<f64>) -> Result<Self> {
        let d = center.len();
        if shape.nrows() != d || shape.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: shape.nrows() });
        }
        if !all_finite(center.as_slice()) || !shape.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("ellipsoid has non-finite entries".into()));
        }
        let mut max_asym: f64 = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                max_asym = max_asym.max((shape[(i, j)] - shape[(j, i)]).abs());
            }
        }
        if max_asym > tol::SHAPE_SYMMETRY {
            return Err(Error::InvalidInput(format!(
                "ellipsoid shape asymmetry {max_asym:.3e} exceeds tolerance"
            )));
        }
        let sym = (&shape + shape.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let min_ev = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_ev = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if min_ev <= 0.0 || !min_ev.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ellipsoid shape not positive definite (min eigenvalue {min_ev:.3e})"
            )));
        }
        // inv = Q diag(1/ev) Q^T
        let mut inv = DMatrix::zeros(d, d);
        for k in 0..d {
            let q = eig.eigenvectors.column(k);
            let scale = 1.0 / eig.eigenvalues[k];
            for i in 0..d {
                for j in 0..d {
                    inv[(i, j)] += scale * q[i] * q[j];
                }
            }
        }
        Ok(Self {
            center,
            shape: sym,
            inv_shape: inv,
            outer_radius: (1.0 / min_ev).sqrt(),
            inner_radius: (1.0 / max_ev).sqrt(),
        })
    }

    /// Fast constructor for callers that already hold a consistent pair of
    /// shape and inverse (the minimum-volume-ellipsoid path).
    pub(crate) fn from_parts(
        center: Vector,
        shape: DMatrix<f64>,
        inv_shape: DMatrix<f64>,
        outer_radius: f64,
        inner_radius: f64,
    ) -> Self {
        Self { center, shape, inv_shape, outer_radius, inner_radius }
    }

    pub fn center(&self) -> &Vector {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn inv_shape(&self) -> &DMatrix<f64> {
        &self.inv_shape
    }

    /// Length of the longest semi-axis.
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Length of the shortest semi-axis.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Quadratic form `(q - c)^T A (q - c)`.
    pub fn quad_form(&self, q: &Vector) -> f64 {
        let v = q - &self.center;
        (&self.shape * &v).dot(&v)
    }

    pub fn contains(&self, q: &Vector) -> bool {
        self.quad_form(q) <= 1.0 + tol::ELLIPSOID_MEMBERSHIP
    }

    /// Support value `max { u · y : y in E }` for unit or general `u`.
    pub fn support(&self, u: &Vector) -> f64 {
        self.center.dot(u) + (&self.inv_shape * u).dot(u).max(0.0).sqrt()
    }

    /// Whether the ray meets the ellipsoid at any parameter `t >= 0`.
    ///
    /// The quadratic in `t` is minimized in closed form; membership of the
    /// minimizing point is tested with `tol::RAY_HIT` slack, which leans
    /// conservative (extra hits are harmless, missed tangencies are not).
    pub fn intersects_ray(&self, ray: &Ray) -> bool {
        let w = &ray.origin - &self.center;
        let aw = &self.shape * &w;
        let q0 = aw.dot(&w);
        if q0 <= 1.0 + tol::RAY_HIT {
            return true;
        }
        let au = &self.shape * &ray.direction;
        let quu = au.dot(&ray.direction);
        if quu <= 0.0 {
            return false;
        }
        let quw = au.dot(&w);
        let t_star = -quw / quu;
        if t_star <= 0.0 {
            return false;
        }
        let q_min = q0 + 2.0 * t_star * quw + t_star * t_star * quu;
        q_min <= 1.0 + tol::RAY_HIT
    }

    /// Dilation about the center by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Ellipsoid {
        let f2 = factor * factor;
        Ellipsoid {
            center: self.center.clone(),
            shape: &self.shape / f2,
            inv_shape: &self.inv_shape * f2,
            outer_radius: self.outer_radius * factor,
            inner_radius: self.inner_radius * factor,
        }
    }
}

/// Cap `K ∩ { y : direction · y >= cut_offset }` of a polytope `K`.
///
/// `width` is the distance between the cut hyperplane and the parallel
/// supporting hyperplane touching `apex`; both are cached at construction.
#[derive(Debug, Clone)]
pub struct Cap {
    pub direction: Vector,
    pub cut_offset: f64,
    pub width: f64,
    pub apex: Vector,
}

impl Cap {
    /// Cap of `body` cut perpendicular to `direction` through `base_point`.
    ///
    /// # Errors
    ///
    /// Zero direction, dimension mismatch, or an unbounded support problem.
    pub fn through_point(body: &HPolytope, direction: &Vector, base_point: &Vector) -> Result<Cap> {
        let norm = direction.norm();
        if norm < 1e-14 {
            return Err(Error::InvalidInput("cap direction is zero".into()));
        }
        let u = direction / norm;
        let cut_offset = u.dot(base_point);
        let (apex, support) = body.support_point(&u)?;
        Ok(Cap { direction: u, cut_offset, width: support - cut_offset, apex })
    }

    /// The cut constraint as a halfspace `{ y : -direction · y <= -cut_offset }`.
    pub fn cut_halfspace(&self) -> Halfspace {
        Halfspace::from_unit(-&self.direction, -self.cut_offset)
    }

    /// The cap as an H-polytope: the body's halfspaces plus the cut, which
    /// is appended last so body facet indices are preserved.
    pub fn polytope(&self, body: &HPolytope) -> Result<HPolytope> {
        let mut hs = body.halfspaces().to_vec();
        hs.push(self.cut_halfspace());
        HPolytope::new(body.dim(), hs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bodies;

    fn unit_cube(d: usize) -> HPolytope {
        bodies::hypercube(d, 0.5)
    }

    #[test]
    fn halfspace_normalizes() {
        let h = Halfspace::new(Vector::from_vec(vec![3.0, 4.0]), 10.0).unwrap();
        assert!((h.normal().norm() - 1.0).abs() < 1e-14);
        assert!((h.offset() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn halfspace_rejects_zero_normal() {
        assert!(Halfspace::new(Vector::zeros(3), 1.0).is_err());
    }

    #[test]
    fn cube_contains_origin_and_rejects_outside() {
        let k = unit_cube(3);
        assert!(k.contains(&Vector::zeros(3)).unwrap());
        assert!(k.contains(&Vector::from_vec(vec![0.5, 0.5, 0.5])).unwrap());
        assert!(!k.contains(&Vector::from_vec(vec![0.51, 0.0, 0.0])).unwrap());
    }

    #[test]
    fn contains_checks_dimension() {
        let k = unit_cube(3);
        assert!(matches!(
            k.contains(&Vector::zeros(2)),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn ray_exit_axis_direction() {
        let k = unit_cube(3);
        let ray = Ray::new(Vector::zeros(3), Vector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        let hit = k.ray_exit(&ray).unwrap();
        assert!((hit.t - 0.5).abs() < 1e-12);
        // facet 0 is { x_1 <= 1/2 } in the hypercube construction
        assert_eq!(hit.facet, 0);
    }

    #[test]
    fn ray_exit_diagonal_tie_takes_lowest_facet() {
        let k = unit_cube(2);
        let ray = Ray::new(Vector::zeros(2), Vector::from_vec(vec![1.0, 1.0])).unwrap();
        let hit = k.ray_exit(&ray).unwrap();
        assert!((hit.t - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(hit.facet, 0);
    }

    #[test]
    fn ray_exit_requires_interior_origin() {
        let k = unit_cube(2);
        let ray = Ray::new(Vector::from_vec(vec![2.0, 0.0]), Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(matches!(k.ray_exit(&ray), Err(Error::Precondition(_))));
    }

    #[test]
    fn ray_exit_matches_dense_scan_on_random_bodies() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let k = bodies::random_body(3, 24, rng.gen());
            let mut dir = Vector::zeros(3);
            for i in 0..3 {
                dir[i] = rng.gen::<f64>() - 0.5;
            }
            if dir.norm() < 1e-6 {
                continue;
            }
            let ray = Ray::new(Vector::zeros(3), dir).unwrap();
            let hit = k.ray_exit(&ray).unwrap();
            // point on boundary: inside with slack, one facet tight
            let (slk, _) = k.min_slack(&hit.point);
            assert!(slk.abs() <= 1e-9, "exit point not on boundary: slack {slk:.3e}");
            // dense scan: all strictly earlier points are inside
            for j in 1..100 {
                let t = hit.t * (j as f64) / 101.0;
                assert!(k.contains(&ray.at(t)).unwrap());
            }
        }
    }

    #[test]
    fn erode_cube_by_quarter() {
        let k = unit_cube(2);
        let e = k.erode(0.25).unwrap();
        assert!(e.contains(&Vector::from_vec(vec![0.24, 0.0])).unwrap());
        assert!(!e.contains(&Vector::from_vec(vec![0.26, 0.0])).unwrap());
    }

    #[test]
    fn erode_zero_is_identity() {
        let k = unit_cube(3);
        let e = k.erode(0.0).unwrap();
        for (a, b) in k.halfspaces().iter().zip(e.halfspaces()) {
            assert_eq!(a.offset(), b.offset());
        }
    }

    #[test]
    fn erode_too_deep_errors() {
        let k = unit_cube(2);
        assert!(matches!(k.erode(0.6), Err(Error::ErosionTooDeep { .. })));
    }

    #[test]
    fn chebyshev_of_cube() {
        let k = bodies::hypercube(3, 1.0);
        let (c, r) = k.chebyshev().unwrap();
        assert!(c.norm() < 1e-9);
        assert!((r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn support_cube_axis_and_diagonal() {
        let k = unit_cube(3);
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((k.support(&e1).unwrap() - 0.5).abs() < 1e-9);
        let diag = Vector::from_vec(vec![1.0, 1.0, 1.0]) / 3.0_f64.sqrt();
        assert!((k.support(&diag).unwrap() - 3.0_f64.sqrt() / 2.0).abs() < 1e-9);
    }

    #[test]
    fn width_at_least_twice_chebyshev_radius() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k = bodies::random_body(3, 16, rng.gen());
            let (_, r) = k.chebyshev().unwrap();
            let mut u = Vector::zeros(3);
            for i in 0..3 {
                u[i] = rng.gen::<f64>() - 0.5;
            }
            if u.norm() < 1e-6 {
                continue;
            }
            u /= u.norm();
            assert!(k.width(&u).unwrap() >= 2.0 * r - 1e-9);
        }
    }

    #[test]
    fn ellipsoid_basic_membership() {
        let e = Ellipsoid::new(Vector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(e.contains(&Vector::from_vec(vec![0.5, 0.5])));
        assert!(!e.contains(&Vector::from_vec(vec![1.1, 0.0])));
        assert!((e.outer_radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ellipsoid_rejects_asymmetric_shape() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(Ellipsoid::new(Vector::zeros(2), m).is_err());
    }

    #[test]
    fn ellipsoid_rejects_indefinite_shape() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(Ellipsoid::new(Vector::zeros(2), m).is_err());
    }

    #[test]
    fn ray_hits_unit_ball_ahead() {
        let e = Ellipsoid::new(Vector::from_vec(vec![3.0, 0.0]), DMatrix::identity(2, 2)).unwrap();
        let hit = Ray::new(Vector::zeros(2), Vector::from_vec(vec![1.0, 0.0])).unwrap();
        let miss = Ray::new(Vector::zeros(2), Vector::from_vec(vec![-1.0, 0.0])).unwrap();
        let graze = Ray::new(Vector::zeros(2), Vector::from_vec(vec![3.0, 1.0])).unwrap();
        assert!(e.intersects_ray(&hit));
        assert!(!e.intersects_ray(&miss));
        // tangent-ish ray: passes within distance 0.9.. of the center
        assert!(e.intersects_ray(&graze));
    }

    #[test]
    fn ray_from_inside_always_hits() {
        let e = Ellipsoid::new(Vector::zeros(3), DMatrix::identity(3, 3) * 4.0).unwrap();
        let r = Ray::new(Vector::from_vec(vec![0.2, 0.0, 0.0]), Vector::from_vec(vec![0.0, 1.0, 0.0]))
            .unwrap();
        assert!(e.intersects_ray(&r));
    }

    #[test]
    fn ray_intersection_matches_dense_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut disagreements = 0usize;
        for _ in 0..1000 {
            let d = 2 + (rng.gen::<u32>() % 2) as usize;
            // random SPD shape: B^T B + small ridge
            let b = DMatrix::from_fn(d, d, |_, _| rng.gen::<f64>() - 0.5);
            let shape = b.transpose() * &b + DMatrix::identity(d, d) * 0.05;
            let center = Vector::from_fn(d, |_, _| (rng.gen::<f64>() - 0.5) * 2.0);
            let e = Ellipsoid::new(center, shape).unwrap();
            let origin = Vector::from_fn(d, |_, _| (rng.gen::<f64>() - 0.5) * 2.0);
            let dir = Vector::from_fn(d, |_, _| rng.gen::<f64>() - 0.5);
            if dir.norm() < 1e-6 {
                continue;
            }
            let ray = Ray::new(origin, dir).unwrap();
            let fast = e.intersects_ray(&ray);
            let mut sampled = false;
            for j in 0..10_000 {
                let t = 6.0 * (j as f64) / 10_000.0;
                if e.quad_form(&ray.at(t)) <= 1.0 {
                    sampled = true;
                    break;
                }
            }
            // sampling can miss grazing hits; it must never see a hit the
            // closed form misses
            if sampled && !fast {
                disagreements += 1;
            }
        }
        assert_eq!(disagreements, 0);
    }

    #[test]
    fn cap_through_point_on_cube() {
        let k = unit_cube(2);
        let x = Vector::from_vec(vec![0.4, 0.0]);
        let cap = Cap::through_point(&k, &Vector::from_vec(vec![1.0, 0.0]), &x).unwrap();
        assert!((cap.width - 0.1).abs() < 1e-9);
        assert!((cap.apex[0] - 0.5).abs() < 1e-9);
        let cp = cap.polytope(&k).unwrap();
        assert!(cp.contains(&Vector::from_vec(vec![0.45, 0.2])).unwrap());
        assert!(!cp.contains(&Vector::from_vec(vec![0.35, 0.2])).unwrap());
    }
}
