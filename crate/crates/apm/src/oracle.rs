//! Slow, independent reference implementations used by tests, diagnostics
//! and cross-checks.
//!
//! Nothing here is on a query or build hot path. Each routine is written
//! against a different algorithmic idea than its production counterpart so
//! that agreement between the two is meaningful evidence: projection by
//! alternating projections instead of ray shooting, minimum-volume
//! ellipsoids by the general lifted barycentric iteration instead of the
//! centered one, volumes by rejection sampling or exact polygon area.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{Ellipsoid, HPolytope, Vector};

/// Index and distance of the nearest site by exhaustive scan; ties resolve
/// to the lowest index.
///
/// # Errors
///
/// Empty site list or dimension mismatch.
pub fn exact_nn(points: &[Vector], q: &Vector) -> Result<(usize, f64)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("nearest neighbor of an empty set".into()));
    }
    let mut best = f64::INFINITY;
    let mut best_i = 0;
    for (i, p) in points.iter().enumerate() {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch { expected: q.len(), got: p.len() });
        }
        let d = (p - q).norm();
        if d < best {
            best = d;
            best_i = i;
        }
    }
    Ok((best_i, best))
}

/// Euclidean projection of `q` onto the polytope by Dykstra's alternating
/// projections, refined by an active-set correction. Accurate to about
/// `tol::DIST_ORACLE` in the distance.
pub fn project_to_polytope(k: &HPolytope, q: &Vector) -> Result<Vector> {
    if k.contains(q)? {
        return Ok(q.clone());
    }
    let n = k.num_facets();
    let mut x = q.clone();
    let mut increments: Vec<Vector> = vec![Vector::zeros(k.dim()); n];
    let max_sweeps = 100_000 / n.max(1);
    for _ in 0..max_sweeps.max(50) {
        let before = x.clone();
        for (i, h) in k.halfspaces().iter().enumerate() {
            let y = &x + &increments[i];
            let viol = (h.normal().dot(&y) - h.offset()).max(0.0);
            let projected = &y - &(h.normal() * viol);
            increments[i] = &y - &projected;
            x = projected;
        }
        if (&x - &before).norm() < 1e-13 {
            break;
        }
    }
    // active-set polish: solve for multipliers on the tight facets
    let active: Vec<usize> = (0..n).filter(|&i| k.facet(i).slack(&x).abs() <= 1e-5).collect();
    if !active.is_empty() && active.len() <= k.dim() {
        let d = k.dim();
        let m = active.len();
        let mut a = DMatrix::zeros(m, d);
        let mut rhs = Vector::zeros(m);
        for (r, &i) in active.iter().enumerate() {
            for c in 0..d {
                a[(r, c)] = k.facet(i).normal()[c];
            }
            rhs[r] = k.facet(i).normal().dot(q) - k.facet(i).offset();
        }
        let gram = &a * a.transpose();
        if let Some(gram_inv) = gram.try_inverse() {
            let lambda = gram_inv * rhs;
            if lambda.iter().all(|&l| l >= -1e-7) {
                let candidate = q - a.transpose() * lambda;
                if k.min_slack(&candidate).0 >= -1e-9 && (q - &candidate).norm() <= (q - &x).norm() + 1e-9 {
                    return Ok(candidate);
                }
            }
        }
    }
    Ok(x)
}

/// Distance from `q` to the polytope (zero inside).
pub fn dist_to_polytope(k: &HPolytope, q: &Vector) -> Result<f64> {
    Ok((q - project_to_polytope(k, q)?).norm())
}

/// Minimum-volume enclosing ellipsoid by the lifted barycentric coordinate
/// descent (Khachiyan's scheme), dilated at the end so that every input
/// point is strictly inside.
///
/// # Errors
///
/// Fewer than `d + 1` points or degenerate (flat) point sets.
pub fn mvee(points: &[Vector], tolerance: f64) -> Result<Ellipsoid> {
    let n = points.len();
    if n == 0 {
        return Err(Error::InvalidInput("ellipsoid of an empty point set".into()));
    }
    let d = points[0].len();
    if n < d + 1 {
        return Err(Error::InvalidInput(format!(
            "minimum enclosing ellipsoid needs at least {} points, got {n}",
            d + 1
        )));
    }
    // lifted points: columns (p, 1)
    let q = DMatrix::from_fn(d + 1, n, |r, c| if r < d { points[c][r] } else { 1.0 });
    let mut u = Vector::from_element(n, 1.0 / n as f64);
    let lifted = (d + 1) as f64;
    for _ in 0..200_000 {
        let x = &q * DMatrix::from_diagonal(&u) * q.transpose();
        let x_inv = match x.try_inverse() {
            Some(m) => m,
            None => return Err(Error::Numeric("singular moment matrix in enclosing ellipsoid".into())),
        };
        let mut kappa_max = f64::NEG_INFINITY;
        let mut j_max = 0;
        for j in 0..n {
            let col = q.column(j);
            let kappa = (&x_inv * col).dot(&col);
            if kappa > kappa_max {
                kappa_max = kappa;
                j_max = j;
            }
        }
        if kappa_max <= lifted * (1.0 + tolerance) {
            break;
        }
        let step = (kappa_max - lifted) / (lifted * (kappa_max - 1.0));
        u *= 1.0 - step;
        u[j_max] += step;
    }
    let center = Vector::from_fn(d, |r, _| (0..n).map(|j| u[j] * points[j][r]).sum());
    let mut cov = DMatrix::zeros(d, d);
    for j in 0..n {
        let p = &points[j];
        for r in 0..d {
            for c in 0..d {
                cov[(r, c)] += u[j] * p[r] * p[c];
            }
        }
    }
    for r in 0..d {
        for c in 0..d {
            cov[(r, c)] -= center[r] * center[c];
        }
    }
    let shape = match (cov * d as f64).try_inverse() {
        Some(m) => m,
        None => return Err(Error::Numeric("flat point set has no enclosing ellipsoid".into())),
    };
    let shape = (&shape + shape.transpose()) * 0.5;
    let e = Ellipsoid::new(center.clone(), shape.clone())?;
    let worst = points.iter().map(|p| e.quad_form(p)).fold(0.0, f64::max);
    if worst > 1.0 {
        Ellipsoid::new(center, shape / (worst * (1.0 + 1e-12)))
    } else {
        Ok(e)
    }
}

/// Monte Carlo volume by rejection sampling inside the bounding box.
/// Returns the estimate and its standard error.
pub fn mc_volume(k: &HPolytope, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let (lo, hi) = k.bounding_box()?;
    let d = k.dim();
    let mut box_vol = 1.0;
    for i in 0..d {
        box_vol *= (hi[i] - lo[i]).max(0.0);
    }
    if box_vol == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut point = Vector::zeros(d);
    for _ in 0..samples {
        for i in 0..d {
            point[i] = lo[i] + (hi[i] - lo[i]) * rng.gen::<f64>();
        }
        if k.min_slack(&point).0 >= 0.0 {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let std_err = box_vol * (p * (1.0 - p) / samples as f64).sqrt();
    Ok((box_vol * p, std_err))
}

/// Vertices of a 2-polytope by Sutherland-Hodgman clipping of a huge
/// square, in counterclockwise order.
///
/// # Errors
///
/// Non-2d input or an empty body.
pub fn polygon_vertices(k: &HPolytope) -> Result<Vec<Vector>> {
    if k.dim() != 2 {
        return Err(Error::Precondition("polygon vertices need a 2d polytope"));
    }
    let big = 1e6;
    let mut poly: Vec<(f64, f64)> = vec![(-big, -big), (big, -big), (big, big), (-big, big)];
    for h in k.halfspaces() {
        let (a0, a1, b) = (h.normal()[0], h.normal()[1], h.offset());
        let inside = |p: &(f64, f64)| a0 * p.0 + a1 * p.1 <= b + 1e-12;
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let cur = poly[i];
            let nxt = poly[(i + 1) % poly.len()];
            let cur_in = inside(&cur);
            let nxt_in = inside(&nxt);
            if cur_in {
                out.push(cur);
            }
            if cur_in != nxt_in {
                let da = a0 * (nxt.0 - cur.0) + a1 * (nxt.1 - cur.1);
                if da.abs() > 1e-15 {
                    let t = (b - a0 * cur.0 - a1 * cur.1) / da;
                    out.push((cur.0 + t * (nxt.0 - cur.0), cur.1 + t * (nxt.1 - cur.1)));
                }
            }
        }
        poly = out;
        if poly.is_empty() {
            break;
        }
    }
    if poly.is_empty() {
        return Err(Error::EmptyInterior(0.0));
    }
    Ok(poly.into_iter().map(|(x, y)| Vector::from_vec(vec![x, y])).collect())
}

/// Exact area of a 2-polytope by the shoelace formula on its vertices.
pub fn polygon_area(k: &HPolytope) -> Result<f64> {
    let v = polygon_vertices(k)?;
    let mut acc = 0.0;
    for i in 0..v.len() {
        let a = &v[i];
        let b = &v[(i + 1) % v.len()];
        acc += a[0] * b[1] - b[0] * a[1];
    }
    Ok(acc.abs() * 0.5)
}

/// Vertices of a 3-polytope by brute-force triple intersection, deduplicated.
/// Cubic in the facet count; strictly for test-sized bodies.
pub fn vertices_3d(k: &HPolytope) -> Result<Vec<Vector>> {
    if k.dim() != 3 {
        return Err(Error::Precondition("triple-intersection vertices need a 3d polytope"));
    }
    let n = k.num_facets();
    let mut verts: Vec<Vector> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for l in (j + 1)..n {
                let mut m = DMatrix::zeros(3, 3);
                let mut rhs = Vector::zeros(3);
                for (row, &f) in [i, j, l].iter().enumerate() {
                    for c in 0..3 {
                        m[(row, c)] = k.facet(f).normal()[c];
                    }
                    rhs[row] = k.facet(f).offset();
                }
                if m.determinant().abs() < 1e-10 {
                    continue;
                }
                let Some(inv) = m.try_inverse() else { continue };
                let p = inv * rhs;
                if k.min_slack(&p).0 >= -1e-7 && verts.iter().all(|v| (v - &p).norm() > 1e-9) {
                    verts.push(p);
                }
            }
        }
    }
    Ok(verts)
}

/// Outcome of a containment check: `certified` is false when the check had
/// to fall back on boundary sampling, `worst` is the largest constraint
/// value observed (at most 1 means contained, for quadratic checks).
#[derive(Debug, Clone, Copy)]
pub struct ContainmentCheck {
    pub holds: bool,
    pub certified: bool,
    pub worst: f64,
}

/// `inner ⊆ outer` for two polytopes, by comparing support values on every
/// outer facet.
pub fn poly_in_poly(inner: &HPolytope, outer: &HPolytope, slack: f64) -> Result<ContainmentCheck> {
    let mut worst = f64::NEG_INFINITY;
    for h in outer.halfspaces() {
        let excess = inner.support(h.normal())? - h.offset();
        worst = worst.max(excess);
    }
    Ok(ContainmentCheck { holds: worst <= slack, certified: true, worst })
}

/// `e ⊆ k` in closed form: the ellipsoid support in each facet normal.
pub fn ell_in_poly(e: &Ellipsoid, k: &HPolytope, slack: f64) -> ContainmentCheck {
    let mut worst = f64::NEG_INFINITY;
    for h in k.halfspaces() {
        worst = worst.max(e.support(h.normal()) - h.offset());
    }
    ContainmentCheck { holds: worst <= slack, certified: true, worst }
}

/// `k ⊆ e`: exact via vertex enumeration for dimensions 2 and 3, boundary
/// sampled (and so marked uncertified) above.
pub fn poly_in_ell(k: &HPolytope, e: &Ellipsoid, slack: f64) -> Result<ContainmentCheck> {
    match k.dim() {
        2 => {
            let worst = polygon_vertices(k)?
                .iter()
                .map(|v| e.quad_form(v))
                .fold(0.0, f64::max);
            Ok(ContainmentCheck { holds: worst <= 1.0 + slack, certified: true, worst })
        }
        3 => {
            let worst = vertices_3d(k)?.iter().map(|v| e.quad_form(v)).fold(0.0, f64::max);
            Ok(ContainmentCheck { holds: worst <= 1.0 + slack, certified: true, worst })
        }
        d => {
            let (center, _) = k.chebyshev()?;
            let net = crate::geom::net::sphere_net(d, 4096, 0x0e11);
            let mut worst: f64 = 0.0;
            for u in &net {
                let ray = crate::geom::Ray::new(center.clone(), u.clone())?;
                let hit = k.ray_exit(&ray)?;
                worst = worst.max(e.quad_form(&hit.point));
            }
            Ok(ContainmentCheck { holds: worst <= 1.0 + slack, certified: false, worst })
        }
    }
}

/// `inner ⊆ outer` for two ellipsoids, exactly: maximizes the outer
/// quadratic form over the inner ellipsoid. The maximizer solves a
/// trust-region style secular equation in the eigenbasis of the reduced
/// quadratic, including the hard case (gradient orthogonal to the top
/// eigenspace).
pub fn ell_in_ell(inner: &Ellipsoid, outer: &Ellipsoid, slack: f64) -> ContainmentCheck {
    let d = inner.dim();
    // inner = { c1 + L s : |s| <= 1 } with L = A1^{-1/2}
    let eig1 = inner.shape().clone().symmetric_eigen();
    let mut l = DMatrix::zeros(d, d);
    for k in 0..d {
        let q = eig1.eigenvectors.column(k);
        let s = eig1.eigenvalues[k].max(1e-300).sqrt().recip();
        for i in 0..d {
            for j in 0..d {
                l[(i, j)] += s * q[i] * q[j];
            }
        }
    }
    let v = inner.center() - outer.center();
    let h = l.transpose() * outer.shape() * &l;
    let h = (&h + h.transpose()) * 0.5;
    let b = l.transpose() * (outer.shape() * &v);
    let c0 = (outer.shape() * &v).dot(&v);
    let eig = h.clone().symmetric_eigen();
    let lam_max = eig.eigenvalues.amax();
    let bt = eig.eigenvectors.transpose() * &b;
    // phi(mu)^2 = sum bt_i^2 / (mu - lam_i)^2, decreasing for mu > lam_max
    let phi2 = |mu: f64| -> f64 {
        (0..d).map(|i| (bt[i] / (mu - eig.eigenvalues[i])).powi(2)).sum()
    };
    let value = |s: &Vector| -> f64 {
        (&h * s).dot(s) + 2.0 * b.dot(s) + c0
    };
    let worst = if b.norm() < 1e-14 {
        // concentric case: the maximum is the top eigenvalue
        lam_max + c0
    } else {
        let mut lo = lam_max + 1e-14;
        let mut hi = lam_max + b.norm() + 1.0;
        if phi2(lo) < 1.0 {
            // hard case: boundary max mixes the orthogonal solution with
            // the top eigenvector
            let mut s = Vector::zeros(d);
            let mut top = 0;
            for i in 0..d {
                if (eig.eigenvalues[i] - lam_max).abs() > 1e-10 {
                    s += eig.eigenvectors.column(i) * (bt[i] / (lam_max - eig.eigenvalues[i]));
                } else {
                    top = i;
                }
            }
            let rem = (1.0 - s.norm_squared()).max(0.0).sqrt();
            let s = s + eig.eigenvectors.column(top) * rem;
            value(&s)
        } else {
            while phi2(hi) > 1.0 {
                hi = lam_max + (hi - lam_max) * 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if phi2(mid) > 1.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let mu = 0.5 * (lo + hi);
            let s = Vector::from_fn(d, |i, _| bt[i] / (mu - eig.eigenvalues[i]));
            let s = &eig.eigenvectors * s;
            value(&s)
        }
    };
    ContainmentCheck { holds: worst <= 1.0 + slack, certified: true, worst }
}
