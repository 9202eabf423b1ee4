//! Canonical positioning of a polytope.
//!
//! All internal machinery assumes the body sits between two origin-centered
//! balls: `ball(gamma/2) ⊆ K ⊆ ball(1/2)` with `gamma` not too small. This
//! module computes an affine map taking arbitrary bounded input there:
//! Chebyshev recentering, inertia alignment of boundary samples, per-axis
//! width normalization (twice, since each step perturbs the others), then
//! one uniform scale chosen from a certified outer-radius bound, never from
//! sampling. Facet order is preserved, so facet indices keep their meaning
//! across the map.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::geom::net::sphere_net;
use crate::geom::{check_dim, Halfspace, HPolytope, Ray, Vector};
use crate::tol;

/// Invertible affine map `x -> matrix * x + translation` with its inverse
/// matrix cached.
#[derive(Debug, Clone)]
pub struct AffineMap {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    translation: Vector,
}

impl AffineMap {
    pub fn identity(d: usize) -> Self {
        Self {
            matrix: DMatrix::identity(d, d),
            inverse: DMatrix::identity(d, d),
            translation: Vector::zeros(d),
        }
    }

    pub fn translation(t: Vector) -> Self {
        let d = t.len();
        Self { matrix: DMatrix::identity(d, d), inverse: DMatrix::identity(d, d), translation: t }
    }

    /// Linear map from an invertible matrix.
    ///
    /// # Errors
    ///
    /// Singular matrices.
    pub fn linear(m: DMatrix<f64>) -> Result<Self> {
        let d = m.nrows();
        let inverse = m
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("singular matrix in affine map".into()))?;
        Ok(Self { matrix: m, inverse, translation: Vector::zeros(d) })
    }

    /// Rotation (or any orthogonal map): the inverse is the transpose.
    pub fn rotation(q: DMatrix<f64>) -> Self {
        let d = q.nrows();
        let inverse = q.transpose();
        Self { matrix: q, inverse, translation: Vector::zeros(d) }
    }

    pub fn uniform_scale(d: usize, s: f64) -> Self {
        Self {
            matrix: DMatrix::identity(d, d) * s,
            inverse: DMatrix::identity(d, d) / s,
            translation: Vector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn translation_part(&self) -> &Vector {
        &self.translation
    }

    pub fn apply(&self, x: &Vector) -> Vector {
        &self.matrix * x + &self.translation
    }

    pub fn apply_inv(&self, y: &Vector) -> Vector {
        &self.inverse * (y - &self.translation)
    }

    /// Composition `next ∘ self`: apply `self` first.
    pub fn then(&self, next: &AffineMap) -> AffineMap {
        AffineMap {
            matrix: &next.matrix * &self.matrix,
            inverse: &self.inverse * &next.inverse,
            translation: &next.matrix * &self.translation + &next.translation,
        }
    }

    /// Image of a halfspace: `{a · x <= b}` maps to
    /// `{(M^-T a) · y <= b + (M^-T a) · t}`, renormalized to a unit normal.
    pub fn transform_halfspace(&self, h: &Halfspace) -> Result<Halfspace> {
        let normal = self.inverse.transpose() * h.normal();
        let offset = h.offset() + normal.dot(&self.translation);
        Halfspace::new(normal, offset)
    }

    /// Smallest singular value of the linear part; distances contract by at
    /// most this factor under the map.
    pub fn min_singular_value(&self) -> f64 {
        self.matrix.clone().svd(false, false).singular_values.min()
    }
}

/// A polytope in canonical position together with the map that put it there.
///
/// Invariants certified at construction:
/// - `ball(gamma / 2) ⊆ body`: `gamma` is twice the smallest facet offset;
/// - `body ⊆ ball(1 / 2)`: from per-axis support widths, so the bound needs
///   no sampling;
/// - `gamma >= 1 / (4 d)`;
/// - `body` facet `i` is the image of input facet `i`.
#[derive(Debug, Clone)]
pub struct CanonicalBody {
    pub body: HPolytope,
    pub gamma: f64,
    pub map: AffineMap,
    /// Multiplying a distance measured in the canonical frame by this
    /// factor bounds the same distance in the original frame, expressed
    /// relative to (a lower bound on) the original diameter.
    pub scale_bound: f64,
}

impl CanonicalBody {
    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    /// Original frame to canonical frame.
    pub fn map_point(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim(), x.len())?;
        Ok(self.map.apply(x))
    }

    /// Canonical frame back to the original frame.
    pub fn unmap_point(&self, y: &Vector) -> Result<Vector> {
        check_dim(self.dim(), y.len())?;
        Ok(self.map.apply_inv(y))
    }

    /// Assembles a body whose canonical position was established by the
    /// caller; used by the reduction pipeline which scales uniformly by
    /// construction. Certifies the two ball bounds rather than trusting
    /// the caller.
    pub(crate) fn from_prescaled(body: HPolytope, map: AffineMap, scale_bound: f64) -> Result<Self> {
        let gamma = body
            .halfspaces()
            .iter()
            .map(|h| h.offset())
            .fold(f64::INFINITY, f64::min)
            * 2.0;
        if !(gamma > 0.0) {
            return Err(Error::Numeric(format!("prescaled body has gamma {gamma:.3e}")));
        }
        let r_bound = certified_outer_radius(&body)?;
        if r_bound > 0.5 + tol::CONTAINMENT {
            return Err(Error::Numeric(format!(
                "prescaled body outer radius bound {r_bound:.6} exceeds 1/2"
            )));
        }
        Ok(Self { body, gamma, map, scale_bound })
    }
}

/// Certified outer radius: the norm of the per-axis symmetric support
/// widths. `K ⊆ ball(0, r)` holds exactly, no sampling involved.
fn certified_outer_radius(body: &HPolytope) -> Result<f64> {
    let d = body.dim();
    let mut axis = Vector::zeros(d);
    let mut acc = 0.0;
    for i in 0..d {
        axis.fill(0.0);
        axis[i] = 1.0;
        let up = body.support(&axis)?;
        axis[i] = -1.0;
        let down = body.support(&axis)?;
        let w = up.max(down).max(0.0);
        acc += w * w;
    }
    Ok(acc.sqrt())
}

/// Brings a bounded polytope with nonempty interior into canonical
/// position.
///
/// # Errors
///
/// Unsupported dimension (outside 2..=8), unbounded or empty input, or a
/// body so degenerate that the achieved `gamma` falls below `1 / (4 d)`.
pub fn canonicalize(input: &HPolytope) -> Result<CanonicalBody> {
    let d = input.dim();
    if !(2..=8).contains(&d) {
        return Err(Error::UnsupportedDimension(d, "2..=8"));
    }
    input.validate_bounded_interior()?;

    // lower bound on the original diameter, before any transformation
    let mut diam_lower: f64 = 0.0;
    {
        let mut axis = Vector::zeros(d);
        for i in 0..d {
            axis.fill(0.0);
            axis[i] = 1.0;
            let up = input.support(&axis)?;
            axis[i] = -1.0;
            diam_lower = diam_lower.max(up + input.support(&axis)?);
        }
    }

    let mut body = input.clone();
    let mut map = AffineMap::identity(d);
    let apply_step = |step: AffineMap, body: &mut HPolytope, map: &mut AffineMap| -> Result<()> {
        let hs: Result<Vec<Halfspace>> =
            body.halfspaces().iter().map(|h| step.transform_halfspace(h)).collect();
        *body = HPolytope::new(d, hs?)?;
        *map = map.then(&step);
        Ok(())
    };

    let (z, _) = body.chebyshev()?;
    apply_step(AffineMap::translation(-z), &mut body, &mut map)?;

    // Two alignment and rescale rounds. The first can change widths a lot
    // for skewed bodies, which shifts the inertia; the second settles it.
    for round in 0..2u64 {
        let dirs = sphere_net(d, 64 * d, 0xca70 + round);
        let mut sigma = DMatrix::zeros(d, d);
        for u in &dirs {
            let hit = body.ray_exit(&Ray::new(Vector::zeros(d), u.clone())?)?;
            for r in 0..d {
                for c in 0..d {
                    sigma[(r, c)] += hit.point[r] * hit.point[c];
                }
            }
        }
        apply_step(AffineMap::rotation(principal_axes(&sigma)), &mut body, &mut map)?;

        let mut scale = DMatrix::identity(d, d);
        let mut axis = Vector::zeros(d);
        for i in 0..d {
            axis.fill(0.0);
            axis[i] = 1.0;
            let up = body.support(&axis)?;
            axis[i] = -1.0;
            let width = up + body.support(&axis)?;
            scale[(i, i)] = 1.0 / width;
        }
        apply_step(AffineMap::linear(scale)?, &mut body, &mut map)?;

        let (z, _) = body.chebyshev()?;
        apply_step(AffineMap::translation(-z), &mut body, &mut map)?;
    }

    let r_bound = certified_outer_radius(&body)?;
    apply_step(AffineMap::uniform_scale(d, 0.5 / r_bound), &mut body, &mut map)?;

    // The Chebyshev center sits at the origin and uniform scaling keeps it
    // there, so the smallest facet offset is the inscribed ball radius.
    let gamma =
        2.0 * body.halfspaces().iter().map(|h| h.offset()).fold(f64::INFINITY, f64::min);
    let floor = 1.0 / (4.0 * d as f64);
    if gamma < floor {
        return Err(Error::Numeric(format!(
            "canonicalization reached gamma {gamma:.4}, below the required {floor:.4}"
        )));
    }

    let sigma_min = map.min_singular_value();
    if !(sigma_min > 0.0) {
        return Err(Error::Numeric("canonical map lost invertibility".into()));
    }
    let scale_bound = 1.0 / (sigma_min * diam_lower);

    Ok(CanonicalBody { body, gamma, map, scale_bound })
}

/// Orthonormal eigenbasis of a symmetric matrix with a deterministic
/// convention: columns sorted by descending eigenvalue, each column's
/// largest-magnitude entry made positive.
fn principal_axes(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let d = sigma.nrows();
    let eig = sigma.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap().then(a.cmp(&b))
    });
    let mut q = DMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let src = eig.eigenvectors.column(k);
        let lead = (0..d).max_by(|&a, &b| src[a].abs().partial_cmp(&src[b].abs()).unwrap()).unwrap();
        let sign = if src[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            q[(r, col)] = sign * src[r];
        }
    }
    // rows of the returned map rotate the body into the eigenbasis
    q.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{bodies, oracle};
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};

    fn sandwich_certificates(c: &CanonicalBody) {
        // inner ball: every facet offset at least gamma / 2
        for h in c.body.halfspaces() {
            assert!(h.offset() >= c.gamma / 2.0 - 1e-12);
        }
        // outer ball: certified bound recomputed independently
        let d = c.dim();
        let mut axis = Vector::zeros(d);
        let mut acc = 0.0;
        for i in 0..d {
            axis.fill(0.0);
            axis[i] = 1.0;
            let up = c.body.support(&axis).unwrap();
            axis[i] = -1.0;
            let w = up.max(c.body.support(&axis).unwrap());
            acc += w * w;
        }
        assert!(acc.sqrt() <= 0.5 + 1e-9, "outer bound {:.6}", acc.sqrt());
        assert!(c.gamma >= 1.0 / (4.0 * d as f64));
        assert!(c.gamma <= 1.0 + 1e-9);
    }

    #[test]
    fn ball_canonicalizes_to_gamma_one_over_sqrt_d() {
        for d in 2..=4 {
            let c = canonicalize(&bodies::ball_like(d, 64 * d)).unwrap();
            sandwich_certificates(&c);
            // a ball has all axis widths equal, so the uniform scale packs
            // it against the sqrt(d) diagonal: gamma = 1 / sqrt(d), minus
            // what the facet discretization costs (the angular gaps of the
            // net inflate the circumradius side)
            let ideal = 1.0 / (d as f64).sqrt();
            assert!(c.gamma <= ideal + 1e-9, "d={d} gamma={}", c.gamma);
            assert!(c.gamma >= 0.85 * ideal, "d={d} gamma={}", c.gamma);
        }
    }

    #[test]
    fn assorted_bodies_meet_the_gamma_floor() {
        for seed in 0..8 {
            for d in 2..=4 {
                sandwich_certificates(&canonicalize(&bodies::random_body(d, 20, seed)).unwrap());
                sandwich_certificates(
                    &canonicalize(&bodies::skewed_body(d, 24, 50.0, seed)).unwrap(),
                );
            }
        }
        sandwich_certificates(&canonicalize(&bodies::hypercube(3, 7.0)).unwrap());
    }

    #[test]
    fn map_round_trips_and_preserves_membership() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let input = bodies::skewed_body(3, 18, 12.0, 4);
        let c = canonicalize(&input).unwrap();
        for _ in 0..300 {
            let x = Vector::from_fn(3, |_, _| (rng.gen::<f64>() - 0.5) * 8.0);
            let y = c.map_point(&x).unwrap();
            assert!((c.unmap_point(&y).unwrap() - &x).norm() < 1e-8);
            // membership is affine-invariant; skip points too close to the
            // boundary for a strict comparison
            let orig_slack = input.min_slack(&x).0;
            if orig_slack.abs() > 1e-6 {
                assert_eq!(
                    input.contains(&x).unwrap(),
                    c.body.contains(&y).unwrap(),
                    "membership changed under the canonical map"
                );
            }
        }
    }

    #[test]
    fn facet_indices_survive_the_map() {
        let input = bodies::random_body(2, 10, 3);
        let c = canonicalize(&input).unwrap();
        assert_eq!(input.num_facets(), c.body.num_facets());
        // pick boundary points of canonical facets and check the preimage
        // lies on the same original facet
        for i in 0..c.body.num_facets() {
            let h = c.body.facet(i);
            let foot = h.normal() * h.offset();
            if c.body.min_slack(&foot).0 < -1e-9 {
                continue; // facet not tight at its foot point (redundant there)
            }
            let back = c.unmap_point(&foot).unwrap();
            assert!(
                input.facet(i).slack(&back).abs() < 1e-7,
                "facet {i} lost correspondence"
            );
        }
    }

    #[test]
    fn scale_bound_controls_distance_distortion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for seed in 0..5 {
            let input = bodies::skewed_body(3, 16, 30.0, seed);
            let c = canonicalize(&input).unwrap();
            let mut diam_lower: f64 = 0.0;
            let mut axis = Vector::zeros(3);
            for i in 0..3 {
                axis.fill(0.0);
                axis[i] = 1.0;
                let up = input.support(&axis).unwrap();
                axis[i] = -1.0;
                diam_lower = diam_lower.max(up + input.support(&axis).unwrap());
            }
            for _ in 0..100 {
                let a = Vector::from_fn(3, |_, _| (rng.gen::<f64>() - 0.5) * 4.0);
                let b = Vector::from_fn(3, |_, _| (rng.gen::<f64>() - 0.5) * 4.0);
                let canon = (c.map_point(&a).unwrap() - c.map_point(&b).unwrap()).norm();
                let orig_rel = (&a - &b).norm() / diam_lower;
                assert!(
                    orig_rel <= canon * c.scale_bound * (1.0 + 1e-9),
                    "distortion bound violated: {orig_rel} vs {}",
                    canon * c.scale_bound
                );
            }
        }
    }

    #[test]
    fn canonical_body_stays_inside_half_ball_exactly() {
        // dimension 2: vertex enumeration makes the outer bound checkable
        // without sampling
        let c = canonicalize(&bodies::random_body(2, 14, 9)).unwrap();
        for v in oracle::polygon_vertices(&c.body).unwrap() {
            assert!(v.norm() <= 0.5 + 1e-9);
        }
    }

    #[test]
    fn rejects_unbounded_empty_and_bad_dims() {
        let slab = HPolytope::new(
            2,
            vec![
                Halfspace::new(dvector![1.0, 0.0], 1.0).unwrap(),
                Halfspace::new(dvector![-1.0, 0.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert!(matches!(canonicalize(&slab), Err(Error::Unbounded)));

        let empty = HPolytope::new(
            2,
            vec![
                Halfspace::new(dvector![1.0, 0.0], -1.0).unwrap(),
                Halfspace::new(dvector![-1.0, 0.0], -1.0).unwrap(),
                Halfspace::new(dvector![0.0, 1.0], 1.0).unwrap(),
                Halfspace::new(dvector![0.0, -1.0], 1.0).unwrap(),
            ],
        )
        .unwrap();
        assert!(matches!(canonicalize(&empty), Err(Error::EmptyInterior(_))));

        let line = bodies::hypercube(1, 1.0);
        assert!(matches!(canonicalize(&line), Err(Error::UnsupportedDimension(1, _))));
    }

    #[test]
    fn canonicalization_is_deterministic() {
        let input = bodies::random_body(3, 22, 77);
        let a = canonicalize(&input).unwrap();
        let b = canonicalize(&input).unwrap();
        assert_eq!(a.gamma, b.gamma);
        for (x, y) in a.body.halfspaces().iter().zip(b.body.halfspaces()) {
            assert_eq!(x.offset(), y.offset());
            assert_eq!(x.normal(), y.normal());
        }
    }
}
