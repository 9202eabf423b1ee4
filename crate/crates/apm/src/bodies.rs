//! Deterministic families of test bodies.
//!
//! All generators return bounded H-polytopes with the origin strictly
//! interior. Facet ordering is fixed and documented per family, since facet
//! indices double as witness identifiers elsewhere.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geom::net::sphere_net;
use crate::geom::{Halfspace, HPolytope, Vector};

/// Axis-aligned hypercube `[-half, half]^d`.
///
/// Facets are ordered `+e_1, -e_1, +e_2, -e_2, ...`, so facet `2i` is the
/// upper bound of coordinate `i`.
pub fn hypercube(d: usize, half: f64) -> HPolytope {
    let mut hs = Vec::with_capacity(2 * d);
    for i in 0..d {
        let mut n = Vector::zeros(d);
        n[i] = 1.0;
        hs.push(Halfspace::from_unit(n.clone(), half));
        n[i] = -1.0;
        hs.push(Halfspace::from_unit(n, half));
    }
    HPolytope::new(d, hs).expect("hypercube is always valid")
}

/// Circumscribed approximation of the unit ball: `n` halfspaces tangent to
/// the sphere at a fixed low-discrepancy direction net.
///
/// Deterministic: the same `(d, n)` always yields the same body.
pub fn ball_like(d: usize, n: usize) -> HPolytope {
    let dirs = sphere_net(d, n, 0xba11);
    let hs = dirs.into_iter().map(|u| Halfspace::from_unit(u, 1.0)).collect();
    HPolytope::new(d, hs).expect("ball approximation is always valid")
}

/// Random bounded body: `n` halfspaces tangent to a random ellipsoid, plus
/// a surrounding box appended last in hypercube facet order so the result
/// is bounded even for small `n`.
pub fn random_body(d: usize, n: usize, seed: u64) -> HPolytope {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // random ellipsoid E = B * ball with singular values in [0.6, 1.4]
    let b = random_rotation(d, &mut rng) * scale_matrix(d, &mut rng, 0.6, 1.4);
    let bt = b.transpose();
    let mut hs = Vec::with_capacity(n + 2 * d);
    let mut made = 0usize;
    while made < n {
        let mut u = Vector::zeros(d);
        for i in 0..d {
            u[i] = gaussian(&mut rng);
        }
        let norm = u.norm();
        if norm < 1e-9 {
            continue;
        }
        u /= norm;
        // tangent to E: offset is the support value of E in direction u
        let offset = (&bt * &u).norm();
        hs.push(Halfspace::from_unit(u, offset));
        made += 1;
    }
    let outer = 2.0 * b.norm();
    for facet in hypercube(d, outer).halfspaces() {
        hs.push(facet.clone());
    }
    HPolytope::new(d, hs).expect("random body is always valid")
}

/// Random body with an anisotropic core: the ellipsoid axes span the range
/// `[1/aspect, 1]`, stressing the canonicalization rescaling.
pub fn skewed_body(d: usize, n: usize, aspect: f64, seed: u64) -> HPolytope {
    assert!(aspect >= 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e3d);
    let mut diag = DMatrix::zeros(d, d);
    for i in 0..d {
        // geometric spread of the axes from 1/aspect up to 1
        let t = if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
        diag[(i, i)] = aspect.powf(-1.0 + t);
    }
    let b = random_rotation(d, &mut rng) * diag;
    let bt = b.transpose();
    let mut hs = Vec::with_capacity(n + 2 * d);
    let mut made = 0usize;
    while made < n {
        let mut u = Vector::zeros(d);
        for i in 0..d {
            u[i] = gaussian(&mut rng);
        }
        let norm = u.norm();
        if norm < 1e-9 {
            continue;
        }
        u /= norm;
        let offset = (&bt * &u).norm();
        hs.push(Halfspace::from_unit(u, offset));
        made += 1;
    }
    let outer = 2.0 * b.norm();
    for facet in hypercube(d, outer).halfspaces() {
        hs.push(facet.clone());
    }
    HPolytope::new(d, hs).expect("skewed body is always valid")
}

fn scale_matrix(d: usize, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        m[(i, i)] = lo + (hi - lo) * rng.gen::<f64>();
    }
    m
}

/// Haar-ish random rotation via QR of a Gaussian matrix, with the sign
/// convention that makes the factorization unique.
fn random_rotation(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| gaussian(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            for j in 0..d {
                q[(j, i)] = -q[(j, i)];
            }
        }
    }
    q
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one value per call keeps the stream simple
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypercube_facet_order() {
        let k = hypercube(2, 0.5);
        assert_eq!(k.num_facets(), 4);
        assert_eq!(k.facet(0).normal()[0], 1.0);
        assert_eq!(k.facet(1).normal()[0], -1.0);
        assert_eq!(k.facet(2).normal()[1], 1.0);
    }

    #[test]
    fn ball_like_sandwiches_unit_ball() {
        let k = ball_like(3, 128);
        // contains the unit ball: all offsets are 1 with unit normals
        assert!(k.contains(&Vector::from_vec(vec![0.99, 0.0, 0.0])).unwrap());
        // contained in a modestly larger ball
        let (_, hi) = k.bounding_box().unwrap();
        assert!(hi.amax() < 1.2);
    }

    #[test]
    fn generators_give_valid_bodies() {
        for seed in 0..5 {
            for d in 2..=4 {
                let k = random_body(d, 20, seed);
                k.validate_bounded_interior().unwrap();
                assert!(k.contains(&Vector::zeros(d)).unwrap());
                let s = skewed_body(d, 20, 8.0, seed);
                s.validate_bounded_interior().unwrap();
                assert!(s.contains(&Vector::zeros(d)).unwrap());
            }
        }
    }

    #[test]
    fn generators_are_deterministic() {
        let a = random_body(3, 15, 7);
        let b = random_body(3, 15, 7);
        for (x, y) in a.halfspaces().iter().zip(b.halfspaces()) {
            assert_eq!(x.offset(), y.offset());
            assert_eq!(x.normal(), y.normal());
        }
    }

    #[test]
    fn skewed_body_is_skewed() {
        // Directional widths, not the bounding box: a rotated long axis
        // inflates every coordinate of the box and hides the skew.
        let k = skewed_body(3, 64, 10.0, 1);
        let mut maxw: f64 = 0.0;
        let mut minw = f64::INFINITY;
        for u in crate::geom::net::sphere_net(3, 200, 3) {
            let w = k.width(&u).unwrap();
            maxw = maxw.max(w);
            minw = minw.min(w);
        }
        assert!(maxw / minw > 3.0, "aspect {:.2} too tame", maxw / minw);
    }
}
