//! Macbeath regions of a canonical body, their circumscribing ellipsoids,
//! caps and cap expansions, and per-point distance diagnostics.
//!
//! The region `M^λ(x) = x + λ((K − x) ∩ (x − K))` of a body
//! `K = { y : aᵢ·y ≤ bᵢ }` is itself an H-polytope: with `sᵢ = bᵢ − aᵢ·x`
//! (the facet slacks at `x`) it equals the slab intersection
//! `{ y : |aᵢ·(y − x)| ≤ λ sᵢ }`. All region machinery below works on that
//! slab form, which keeps every operation `O(n)` or a small LP.

use crate::canonical::CanonicalBody;
use crate::error::{Error, Result};
use crate::geom::lp::{feasible_point, solve_lp};
use crate::geom::{check_dim, Cap, Ellipsoid, HPolytope, Halfspace, Ray, Vector};
use crate::{oracle, tol};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Packing scale `λ₀ = 1/(20 √d)` used for disjointness at every level.
pub fn lambda0(dim: usize) -> f64 {
    1.0 / (20.0 * (dim as f64).sqrt())
}

/// Scale of the shrunken region `M'(x) = M^{1/5}(x)`. Note that
/// `4 λ₀ √d = 1/5` identically, so the ellipsoid sandwich below runs
/// from `M^{4λ₀}` up to this scale.
pub const SHRUNK_LAMBDA: f64 = 0.2;

/// Relaxation applied to the outer end of the ellipsoid sandwich: the
/// certified upper containment is `E(x) ⊆ M^{0.2 · 1.05}(x)` rather than
/// `M^{0.2}(x)`. A finite-precision minimum-volume ellipsoid cannot attain
/// the exact tangent configuration, and every downstream argument only
/// needs containment in `M^λ(x)` for some `λ ≤ 1`, so the 5% headroom
/// costs nothing; the ratio actually achieved is measured per node.
pub const SANDWICH_OUTER_SLACK: f64 = 1.05;

/// A scaled Macbeath region `M^λ(x)` in slab form.
///
/// `region` facets come in mirrored pairs: facet `2i` is
/// `(aᵢ, aᵢ·x + λ sᵢ)` and facet `2i+1` is `(−aᵢ, λ sᵢ − aᵢ·x)`, where
/// `aᵢ, sᵢ` are the parent body's `i`-th facet normal and slack at `x`.
#[derive(Debug, Clone)]
pub struct MacbeathRegion {
    pub center: Vector,
    pub lambda: f64,
    pub region: HPolytope,
}

impl MacbeathRegion {
    pub fn dim(&self) -> usize {
        self.region.dim()
    }

    /// Half-width of the pair-`i` slab, `λ sᵢ`.
    pub fn slab_halfwidth(&self, i: usize) -> f64 {
        0.5 * (self.region.facet(2 * i).offset() + self.region.facet(2 * i + 1).offset())
    }

    /// Projection of the center onto the pair-`i` normal, `aᵢ·x`.
    pub fn slab_center(&self, i: usize) -> f64 {
        0.5 * (self.region.facet(2 * i).offset() - self.region.facet(2 * i + 1).offset())
    }

    /// Exact extent of the region along `±u` from its center:
    /// `t(u) = λ · minᵢ sᵢ / |aᵢ·u|`. By central symmetry the extent is
    /// the same on both sides, so `center ± t(u)·u` are boundary points.
    pub fn radial_extent(&self, u: &Vector) -> f64 {
        let n = self.region.num_facets() / 2;
        let mut t = f64::INFINITY;
        for i in 0..n {
            let den = self.region.facet(2 * i).normal().dot(u).abs();
            let hw = self.slab_halfwidth(i);
            if den * t > hw {
                t = hw / den;
            }
        }
        t
    }

    pub fn contains(&self, q: &Vector) -> Result<bool> {
        self.region.contains(q)
    }

    /// Support value `max { u·y : y ∈ M^λ(x) }` via LP; test helper.
    pub fn support(&self, u: &Vector) -> Result<f64> {
        Ok(solve_lp(u, self.region.halfspaces())?.value)
    }
}

/// Builds `M^λ(x)` for a strictly interior `x` and `λ > 0`.
///
/// # Errors
///
/// Non-positive `λ`, dimension mismatch, or `x` not strictly interior.
pub fn macbeath_region(k: &CanonicalBody, x: &Vector, lambda: f64) -> Result<MacbeathRegion> {
    check_dim(k.dim(), x.len())?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Precondition("macbeath region scale must be positive"));
    }
    let body = &k.body;
    let mut halfspaces = Vec::with_capacity(2 * body.num_facets());
    for h in body.halfspaces() {
        let s = h.slack(x);
        if s <= 0.0 {
            return Err(Error::Precondition(
                "macbeath region center must be strictly interior",
            ));
        }
        let dot = h.normal().dot(x);
        halfspaces.push(Halfspace::from_unit(h.normal().clone(), dot + lambda * s));
        halfspaces.push(Halfspace::from_unit(-h.normal(), lambda * s - dot));
    }
    Ok(MacbeathRegion {
        center: x.clone(),
        lambda,
        region: HPolytope::new(k.dim(), halfspaces)?,
    })
}

/// The shrunken region `M'(x) = M^{1/5}(x)`.
pub fn shrunken_region(k: &CanonicalBody, x: &Vector) -> Result<MacbeathRegion> {
    macbeath_region(k, x, SHRUNK_LAMBDA)
}

/// Decides whether two regions of the *same* body have empty intersection.
///
/// Because both regions are slab intersections over one shared normal set,
/// their intersection is again a slab body: per pair `i` the feasible
/// band along `aᵢ` is the overlap of the two regions' bands. Any empty
/// band proves disjointness outright; otherwise a feasibility LP on the
/// merged bands decides. A found feasible point certifies intersection.
pub fn regions_disjoint(a: &MacbeathRegion, b: &MacbeathRegion) -> Result<bool> {
    check_dim(a.dim(), b.dim())?;
    if a.region.num_facets() != b.region.num_facets() {
        return Err(Error::Precondition(
            "disjointness test requires regions of the same body",
        ));
    }
    let n = a.region.num_facets() / 2;
    let mut merged = Vec::with_capacity(2 * n);
    for i in 0..n {
        let (ca, ha) = (a.slab_center(i), a.slab_halfwidth(i));
        let (cb, hb) = (b.slab_center(i), b.slab_halfwidth(i));
        let hi = (ca + ha).min(cb + hb);
        let lo = (ca - ha).max(cb - hb);
        if hi < lo {
            return Ok(true);
        }
        let normal = a.region.facet(2 * i).normal();
        merged.push(Halfspace::from_unit(normal.clone(), hi));
        merged.push(Halfspace::from_unit(-normal, -lo));
    }
    Ok(feasible_point(a.dim(), &merged)?.is_none())
}

/// Certificates produced alongside a Macbeath ellipsoid.
#[derive(Debug, Clone, Copy)]
pub struct SandwichCert {
    /// `maxᵢ √(aᵢᵀ A⁻¹ aᵢ) / (λ_out sᵢ)` with
    /// `λ_out = min(1, 0.2 · SANDWICH_OUTER_SLACK)`: the upper containment
    /// `E ⊆ M^{λ_out}` holds iff this is ≤ 1.
    pub outer_ratio: f64,
    /// `d (1+η)² − κ_max ≥ 0` certifies the lower containment
    /// `M^{4λ₀} ⊆ E`; see the builder for the duality argument.
    pub inner_margin: f64,
    pub iterations: usize,
}

/// Stop the weight iteration once `κ_max ≤ d · KAPPA_TARGET`.
const KAPPA_TARGET: f64 = 1.06;
/// Give up (numeric error) if the final `κ_max` exceeds `d · KAPPA_LIMIT`:
/// beyond this the dilated ellipsoid would overrun the 5% outer headroom.
const KAPPA_LIMIT: f64 = 1.10;
/// Absorbs floating error of the `κ` evaluations into the dilation.
const KAPPA_PAD: f64 = 1e-5;
const KHACHIYAN_MAX_ITERS: usize = 10_000;
/// Refresh the cached `κ` values from scratch this often to stop drift.
const KAPPA_REFRESH: usize = 64;

/// Size of the active facet subset the weight iteration runs on: the most
/// binding facets dominate the region's shape, and everything else only
/// shows up in the final all-facet certificate pass (with on-demand
/// promotion if an outsider sticks out). Keeps per-node cost flat in the
/// facet count.
fn active_target(d: usize) -> usize {
    4 * d + 8
}

/// Computes circumscribing ellipsoids of `M^{4λ₀}(x)` with certified
/// sandwich `M^{4λ₀}(x) ⊆ E(x) ⊆ M^{0.2·1.05}(x)`, reusing scratch
/// buffers across calls so a build can stamp out one per node cheaply.
///
/// The computation runs on the polar of `M^{1/5}(x) − x`, which is the
/// hull of the known points `±vᵢ`, `vᵢ = aᵢ/(0.2 sᵢ)`. For any simplex
/// weights `u` the ellipsoid `{z : zᵀX⁻¹z ≤ 1}` with `X = Σ uᵢvᵢvᵢᵀ` is
/// inside that hull (a convex combination of squares is at most their
/// max), while `{z : zᵀX⁻¹z ≤ κ_max}` contains every `vᵢ` by definition
/// of `κ_max = maxᵢ vᵢᵀX⁻¹vᵢ`. Polarity flips both inclusions into the
/// sandwich `{yᵀ(κ_max X)y ≤ 1} ⊆ M^{1/5}(x) − x ⊆ {yᵀXy ≤ 1}`, and the
/// weight iteration merely drives `κ_max` toward its lower bound `d` so
/// the two ends tighten to the `√d` gap. Dilating the small end by
/// `1+η = √(κ_max/d)` then yields both certified containments at once;
/// no vertex enumeration or sampled direction net is involved. The
/// iteration itself touches only an active subset of binding facets, but
/// `κ_max` and both certificates always range over all of them.
#[derive(Debug)]
pub struct EllipsoidBuilder {
    dim: usize,
    v: Vec<f64>,
    weights: Vec<f64>,
    kappa: Vec<f64>,
    active: Vec<u32>,
    x_mat: DMatrix<f64>,
    x_inv: DMatrix<f64>,
    xv: Vec<f64>,
    basis: Vec<f64>,
}

impl EllipsoidBuilder {
    pub fn new(dim: usize) -> Self {
        EllipsoidBuilder {
            dim,
            v: Vec::new(),
            weights: Vec::new(),
            kappa: Vec::new(),
            active: Vec::new(),
            x_mat: DMatrix::zeros(dim, dim),
            x_inv: DMatrix::zeros(dim, dim),
            xv: vec![0.0; dim],
            basis: Vec::new(),
        }
    }

    pub fn build(&mut self, k: &CanonicalBody, x: &Vector) -> Result<(Ellipsoid, SandwichCert)> {
        let d = self.dim;
        check_dim(d, x.len())?;
        check_dim(d, k.dim())?;
        let body = &k.body;
        let n = body.num_facets();

        self.v.clear();
        self.v.resize(n * d, 0.0);
        for (i, h) in body.halfspaces().iter().enumerate() {
            let s = h.slack(x);
            if s <= 0.0 {
                return Err(Error::Precondition(
                    "ellipsoid center must be strictly interior",
                ));
            }
            let inv = 1.0 / (SHRUNK_LAMBDA * s);
            for j in 0..d {
                self.v[i * d + j] = h.normal()[j] * inv;
            }
        }

        self.init_weights(n)?;
        let mut iterations = 0usize;
        let mut kappa_max;
        loop {
            iterations += self.iterate(KHACHIYAN_MAX_ITERS - iterations)?;
            // Fresh accumulation from the final weights; the certificates
            // must refer to exactly this matrix, not the incrementally
            // updated one, and must range over every facet.
            self.accumulate(n);
            self.invert()?;
            let mut jmax = 0usize;
            kappa_max = 0.0;
            for i in 0..n {
                let q = self.quad(i);
                if q > kappa_max {
                    kappa_max = q;
                    jmax = i;
                }
            }
            if kappa_max <= d as f64 * KAPPA_TARGET || iterations >= KHACHIYAN_MAX_ITERS {
                break;
            }
            // An inactive facet sticks out past the active-set optimum:
            // promote it and resume. Re-entering with an unchanged set is
            // also fine, the iteration restarts from a fresh κ cache.
            if !self.active.contains(&(jmax as u32)) {
                self.active.push(jmax as u32);
            }
        }
        if !(kappa_max.is_finite()) || kappa_max > d as f64 * KAPPA_LIMIT {
            return Err(Error::Numeric(format!(
                "ellipsoid weight iteration stalled at kappa {kappa_max:.6} (dim {d})"
            )));
        }

        let eta = (kappa_max * (1.0 + KAPPA_PAD) / d as f64).sqrt() - 1.0;
        let scale = kappa_max / (1.0 + eta).powi(2);
        let mut shape = DMatrix::zeros(d, d);
        for r in 0..d {
            for c in 0..d {
                shape[(r, c)] = 0.5 * (self.x_mat[(r, c)] + self.x_mat[(c, r)]) * scale;
            }
        }
        let ellipsoid = Ellipsoid::new(x.clone(), shape)?;

        let lambda_out = (SHRUNK_LAMBDA * SANDWICH_OUTER_SLACK).min(1.0);
        let mut outer_ratio: f64 = 0.0;
        for h in body.halfspaces() {
            let q = quad_with(ellipsoid.inv_shape(), h.normal());
            outer_ratio = outer_ratio.max(q.sqrt() / (lambda_out * h.slack(x)));
        }
        let inner_margin = d as f64 * (1.0 + eta).powi(2) - kappa_max;
        if outer_ratio > 1.0 + tol::CONTAINMENT || inner_margin < -tol::CONTAINMENT {
            return Err(Error::Numeric(format!(
                "ellipsoid sandwich certificate failed: outer {outer_ratio:.9}, inner {inner_margin:.3e}"
            )));
        }
        Ok((ellipsoid, SandwichCert { outer_ratio, inner_margin, iterations }))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.v[i * self.dim..(i + 1) * self.dim]
    }

    /// Greedy spread start: the largest point, then whichever point has
    /// the largest component orthogonal to the span so far; uniform
    /// weights on the `d` picks.
    fn init_weights(&mut self, n: usize) -> Result<()> {
        let d = self.dim;
        self.weights.clear();
        self.weights.resize(n, 0.0);
        self.basis.clear();
        let mut residual: Vec<f64> = (0..n).map(|i| norm2(self.row(i))).collect();
        for pick in 0..d {
            let mut best = 0;
            for i in 1..n {
                if residual[i] > residual[best] {
                    best = i;
                }
            }
            if residual[best] <= 1e-24 {
                return Err(Error::Numeric(
                    "macbeath region is numerically degenerate".into(),
                ));
            }
            self.weights[best] = 1.0 / d as f64;
            // Gram-Schmidt: append the normalized residual of the pick.
            let mut q = self.row(best).to_vec();
            for b in 0..pick {
                let basis = &self.basis[b * d..(b + 1) * d];
                let proj: f64 = q.iter().zip(basis).map(|(a, b)| a * b).sum();
                for j in 0..d {
                    q[j] -= proj * basis[j];
                }
            }
            let nrm = norm2(&q).sqrt();
            if nrm <= 1e-12 {
                return Err(Error::Numeric(
                    "macbeath region is numerically degenerate".into(),
                ));
            }
            for qj in q.iter_mut() {
                *qj /= nrm;
            }
            self.basis.extend_from_slice(&q);
            for i in 0..n {
                let basis = &self.basis[pick * d..(pick + 1) * d];
                let proj: f64 = self.row(i).iter().zip(basis).map(|(a, b)| a * b).sum();
                residual[i] = (residual[i] - proj * proj).max(0.0);
            }
        }
        // Active subset: the spanning picks plus the longest polar
        // vertices, which are exactly the smallest-slack facets.
        self.active.clear();
        for i in 0..n {
            if self.weights[i] > 0.0 {
                self.active.push(i as u32);
            }
        }
        let want = active_target(d).min(n);
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.sort_unstable_by(|&a, &b| {
            norm2(self.row(b as usize)).total_cmp(&norm2(self.row(a as usize))).then(a.cmp(&b))
        });
        for &i in order.iter().take(want) {
            if !self.active.contains(&i) {
                self.active.push(i);
            }
        }
        self.active.sort_unstable();
        Ok(())
    }

    fn accumulate(&mut self, n: usize) {
        let d = self.dim;
        self.x_mat.fill(0.0);
        for i in 0..n {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let vi = &self.v[i * d..(i + 1) * d];
            for r in 0..d {
                let wr = w * vi[r];
                for c in 0..d {
                    self.x_mat[(r, c)] += wr * vi[c];
                }
            }
        }
    }

    fn invert(&mut self) -> Result<()> {
        match self.x_mat.clone().try_inverse() {
            Some(inv) => {
                self.x_inv = inv;
                Ok(())
            }
            None => Err(Error::Numeric("macbeath ellipsoid moment matrix is singular".into())),
        }
    }

    fn quad(&self, i: usize) -> f64 {
        quad_with_slice(&self.x_inv, self.row(i))
    }

    fn refresh_kappa(&mut self, n: usize) -> Result<()> {
        self.accumulate(n);
        self.invert()?;
        self.kappa.clear();
        for t in 0..self.active.len() {
            self.kappa.push(self.quad(self.active[t] as usize));
        }
        Ok(())
    }

    fn iterate(&mut self, budget: usize) -> Result<usize> {
        let d = self.dim as f64;
        let n = self.v.len() / self.dim;
        self.refresh_kappa(n)?;
        let m = self.active.len();
        for iter in 0..budget {
            let mut t_best = 0;
            for t in 1..m {
                if self.kappa[t] > self.kappa[t_best] {
                    t_best = t;
                }
            }
            let kmax = self.kappa[t_best];
            if kmax <= d * KAPPA_TARGET {
                return Ok(iter);
            }
            let j = self.active[t_best] as usize;
            // Standard step to the weight-simplex minimizer along e_j.
            let beta = ((kmax - d) / (d * (kmax - 1.0))).clamp(0.0, 0.999);
            for t in 0..m {
                self.weights[self.active[t] as usize] *= 1.0 - beta;
            }
            self.weights[j] += beta;
            if (iter + 1) % KAPPA_REFRESH == 0 {
                self.refresh_kappa(n)?;
                continue;
            }
            // Rank-one update of X⁻¹ (Sherman-Morrison) and of the cached
            // κᵢ, both O(m d): with g = X⁻¹ vⱼ and D = (1-β) + β κⱼ,
            //   κᵢ' = (κᵢ − β (vᵢ·g)² / D) / (1-β).
            let dd = self.dim;
            for r in 0..dd {
                let mut acc = 0.0;
                for c in 0..dd {
                    acc += self.x_inv[(r, c)] * self.v[j * dd + c];
                }
                self.xv[r] = acc;
            }
            let denom = (1.0 - beta) + beta * kmax;
            for t in 0..m {
                let g: f64 =
                    self.row(self.active[t] as usize).iter().zip(&self.xv).map(|(a, b)| a * b).sum();
                self.kappa[t] = (self.kappa[t] - beta * g * g / denom) / (1.0 - beta);
            }
            let factor = beta / denom;
            for r in 0..dd {
                for c in 0..dd {
                    self.x_inv[(r, c)] =
                        (self.x_inv[(r, c)] - factor * self.xv[r] * self.xv[c]) / (1.0 - beta);
                }
            }
        }
        // The caller re-checks κ_max against KAPPA_LIMIT; hitting the
        // iteration cap is only fatal if that final test fails too.
        Ok(budget)
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum()
}

fn quad_with(m: &DMatrix<f64>, v: &Vector) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for r in 0..d {
        let mut row = 0.0;
        for c in 0..d {
            row += m[(r, c)] * v[c];
        }
        acc += v[r] * row;
    }
    acc
}

fn quad_with_slice(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let d = v.len();
    let mut acc = 0.0;
    for r in 0..d {
        let mut row = 0.0;
        for c in 0..d {
            row += m[(r, c)] * v[c];
        }
        acc += v[r] * row;
    }
    acc
}

/// The Macbeath ellipsoid `E(x)`, centered exactly at `x`, with
/// `M^{4λ₀}(x) ⊆ E(x) ⊆ M^{0.2·1.05}(x)` certified.
///
/// # Errors
///
/// `x` not strictly interior, or the weight iteration fails to reach a
/// certifiable state within 10⁴ steps.
pub fn macbeath_ellipsoid(k: &CanonicalBody, x: &Vector) -> Result<Ellipsoid> {
    Ok(macbeath_ellipsoid_certified(k, x)?.0)
}

/// Same as [`macbeath_ellipsoid`] but returns the certificates.
pub fn macbeath_ellipsoid_certified(
    k: &CanonicalBody,
    x: &Vector,
) -> Result<(Ellipsoid, SandwichCert)> {
    EllipsoidBuilder::new(k.dim()).build(k, x)
}

/// Candidate directions for the minimal-cap search: the `3d` facet
/// normals of smallest slack at `x`, 50 fixed random unit directions,
/// and the radial direction when `x` is not at the origin.
fn min_cap_candidates(k: &CanonicalBody, x: &Vector) -> Vec<Vector> {
    let d = k.dim();
    let body = &k.body;
    let mut by_slack: Vec<(f64, usize)> = body
        .halfspaces()
        .iter()
        .enumerate()
        .map(|(i, h)| (h.slack(x), i))
        .collect();
    by_slack.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut dirs: Vec<Vector> = by_slack
        .iter()
        .take(3 * d)
        .map(|&(_, i)| body.facet(i).normal().clone())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x00ca_95ea_4c4e_0001);
    for _ in 0..50 {
        let mut u = Vector::zeros(d);
        loop {
            for j in 0..d {
                let a: f64 = rng.gen::<f64>() * 2.0 - 1.0;
                let b: f64 = rng.gen::<f64>();
                u[j] = a * (-2.0 * b.max(1e-12).ln()).sqrt();
            }
            let nrm = u.norm();
            if nrm > 1e-9 {
                u /= nrm;
                break;
            }
        }
        dirs.push(u);
    }
    let nrm = x.norm();
    if nrm > 1e-12 {
        dirs.push(x / nrm);
    }
    dirs
}

const CAP_VOLUME_SAMPLES: usize = 10_000;
const CAP_VOLUME_SEED: u64 = 0x00ca_70ca_90b5_0002;

/// Shared search used by [`approx_min_cap`] and [`distance_profile`]:
/// picks the candidate cap of smallest volume, exact polygon area in the
/// plane and Monte Carlo beyond. All candidates share one sample stream,
/// so comparisons see the difference of the regions rather than two
/// independent noise terms, and the first winner takes ties: a facet
/// normal (listed before the random directions) beats the tilted
/// candidates that approach it.
fn min_cap_search(k: &CanonicalBody, x: &Vector) -> Result<(Cap, f64)> {
    let planar = k.dim() == 2;
    let mut best: Option<(Cap, f64)> = None;
    for u in min_cap_candidates(k, x) {
        let cap = Cap::through_point(&k.body, &u, x)?;
        let poly = cap.polytope(&k.body)?;
        let vol = if planar {
            oracle::polygon_area(&poly)?
        } else {
            oracle::mc_volume(&poly, CAP_VOLUME_SAMPLES, CAP_VOLUME_SEED)?.0
        };
        // Sheared cuts through the same point can tie in exact area, so a
        // challenger must win by more than rounding dust.
        if best.as_ref().map(|&(_, bv)| vol < bv * (1.0 - 1e-9)).unwrap_or(true) {
            best = Some((cap, vol));
        }
    }
    best.ok_or_else(|| Error::Construction("no cap candidates".into()))
}

/// An approximate minimal-volume cap whose base passes through `x`.
///
/// The direction is chosen by Monte-Carlo volume over the candidate set
/// of [`min_cap_candidates`]; the winner's width is within the sampling
/// error of the best candidate, not of the true continuum minimum.
///
/// # Errors
///
/// `x` not strictly interior, or `δ(x) > γ/4`: beyond a quarter of the
/// inscribed diameter, `x` sits too deep for the minimal-cap machinery
/// (the hierarchy only ever uses depths below `γ/12`), and near-radial
/// candidate caps would start swallowing the origin.
pub fn approx_min_cap(k: &CanonicalBody, x: &Vector) -> Result<Cap> {
    check_dim(k.dim(), x.len())?;
    let (delta, _) = k.body.min_slack(x);
    if delta <= 0.0 {
        return Err(Error::Precondition("cap base point must be strictly interior"));
    }
    let limit = k.gamma / 4.0;
    if delta > limit {
        return Err(Error::OutOfRegime { delta, limit });
    }
    Ok(min_cap_search(k, x)?.0)
}

/// The expanded cap `C^ρ`: same supporting hyperplane at the apex, cut
/// hyperplane moved so the slab width becomes `ρ · width(C)`.
///
/// The stored `width` is the slab width `ρ w` even when the cut drops
/// below the body; [`Cap::polytope`] intersects with the body, so the
/// region automatically clamps to `K` in that case.
pub fn cap_expand(c: &Cap, rho: f64) -> Cap {
    assert!(rho >= 0.0 && rho.is_finite(), "expansion ratio must be nonnegative");
    Cap {
        direction: c.direction.clone(),
        cut_offset: c.cut_offset - (rho - 1.0) * c.width,
        width: rho * c.width,
        apex: c.apex.clone(),
    }
}

/// Distance diagnostics of an interior point.
#[derive(Debug, Clone, Copy)]
pub struct DistanceProfile {
    /// `δ(x)`: minimum facet slack, the distance to the nearest bounding
    /// hyperplane.
    pub delta: f64,
    /// `ray(x)`: distance to the boundary along the ray from the origin
    /// through `x`. Satisfies `δ(x) ≤ ray(x) ≤ δ(x)/γ`.
    pub ray_dist: f64,
    /// Width of the approximate minimal cap through `x`; at least `δ(x)`.
    pub width: f64,
    /// Monte-Carlo volume of that cap, `v(x)`.
    pub cap_volume_estimate: f64,
}

/// Computes the profile of a strictly interior `x ≠ O`.
///
/// # Errors
///
/// `x` at the origin (the ray direction is undefined there) or not
/// strictly interior. Unlike [`approx_min_cap`] this runs at any depth.
pub fn distance_profile(k: &CanonicalBody, x: &Vector) -> Result<DistanceProfile> {
    check_dim(k.dim(), x.len())?;
    if x.norm() <= 1e-12 {
        return Err(Error::Precondition(
            "ray distance is undefined at the body center",
        ));
    }
    let (delta, _) = k.body.min_slack(x);
    if delta <= 0.0 {
        return Err(Error::Precondition("profile point must be strictly interior"));
    }
    let ray = Ray::new(x.clone(), x.clone())?;
    let ray_dist = k.body.ray_exit(&ray)?.t;
    let (cap, vol) = min_cap_search(k, x)?;
    Ok(DistanceProfile { delta, ray_dist, width: cap.width, cap_volume_estimate: vol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::canonical::{canonicalize, AffineMap, CanonicalBody};
    use crate::geom::net::sphere_net;
    use crate::{bodies, oracle};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    /// Axis-aligned square/cube already in canonical position; half-width
    /// 0.35 keeps the circumradius 0.35·√d within the outer ball for
    /// d ≤ 2 (the cube tests stay two-dimensional).
    fn canonical_cube(d: usize, h: f64) -> CanonicalBody {
        CanonicalBody::from_prescaled(bodies::hypercube(d, h), AffineMap::identity(d), 1.0)
            .unwrap()
    }

    fn canonical_ball(d: usize) -> CanonicalBody {
        canonicalize(&bodies::ball_like(d, 64)).unwrap()
    }

    fn vec2(x: f64, y: f64) -> Vector {
        Vector::from_vec(vec![x, y])
    }

    const H: f64 = 0.35;

    #[test]
    fn region_of_symmetric_center_is_the_body() {
        let k = canonical_cube(2, H);
        let m = macbeath_region(&k, &Vector::zeros(2), 1.0).unwrap();
        let net = sphere_net(2, 64, 7);
        for u in &net {
            let region_support = m.support(u).unwrap();
            let body_support = solve_lp(u, k.body.halfspaces()).unwrap().value;
            assert_relative_eq!(region_support, body_support, epsilon = 1e-9);
        }
    }

    #[test]
    fn region_of_offcenter_square_matches_hand_computation() {
        // x = (h/2, 0): the region is [h/2·(1-λ), h/2·(1+λ)] × [-λh, λh].
        let k = canonical_cube(2, H);
        let x = vec2(H / 2.0, 0.0);

        let m1 = macbeath_region(&k, &x, 1.0).unwrap();
        let (lo, hi) = m1.region.bounding_box().unwrap();
        assert_relative_eq!(lo[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(hi[0], H, epsilon = 1e-12);
        assert_relative_eq!(lo[1], -H, epsilon = 1e-12);
        assert_relative_eq!(hi[1], H, epsilon = 1e-12);

        let m5 = macbeath_region(&k, &x, SHRUNK_LAMBDA).unwrap();
        let (lo, hi) = m5.region.bounding_box().unwrap();
        assert_relative_eq!(lo[0], 0.4 * H, epsilon = 1e-12);
        assert_relative_eq!(hi[0], 0.6 * H, epsilon = 1e-12);
        assert_relative_eq!(lo[1], -0.2 * H, epsilon = 1e-12);
        assert_relative_eq!(hi[1], 0.2 * H, epsilon = 1e-12);
    }

    #[test]
    fn region_rejects_boundary_center_and_bad_lambda() {
        let k = canonical_cube(2, H);
        assert!(matches!(
            macbeath_region(&k, &vec2(H, 0.0), 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            macbeath_region(&k, &Vector::zeros(2), 0.0),
            Err(Error::Precondition(_))
        ));
        assert!(matches!(
            macbeath_region(&k, &Vector::zeros(2), -1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn region_is_centrally_symmetric() {
        let body = bodies::random_body(3, 20, 11);
        let k = canonicalize(&body).unwrap();
        let x = Vector::from_vec(vec![0.1, -0.05, 0.12]);
        let m = macbeath_region(&k, &x, 0.3).unwrap();
        for u in sphere_net(3, 40, 3) {
            let plus = m.support(&u).unwrap() - u.dot(&x);
            let minus = m.support(&(-&u)).unwrap() + u.dot(&x);
            assert_relative_eq!(plus, minus, epsilon = 1e-8);
            // The reflection of a support point lies in the region.
            let p = solve_lp(&u, m.region.halfspaces()).unwrap().point;
            let reflected = 2.0 * &x - &p;
            let (worst, _) = m.region.min_slack(&reflected);
            assert!(worst > -1e-8, "reflected support point escaped: {worst}");
        }
    }

    #[test]
    fn region_scales_linearly_about_its_center() {
        let k = canonical_ball(2);
        let x = vec2(0.2, 0.1);
        let (la, mu) = (0.7, 0.25);
        let ma = macbeath_region(&k, &x, la).unwrap();
        let mb = macbeath_region(&k, &x, mu).unwrap();
        for u in sphere_net(2, 32, 5) {
            let ha = ma.support(&u).unwrap() - u.dot(&x);
            let hb = mb.support(&u).unwrap() - u.dot(&x);
            assert_relative_eq!(ha, (la / mu) * hb, epsilon = 1e-8);
        }
    }

    #[test]
    fn region_stays_inside_body_for_unit_lambda() {
        let body = bodies::random_body(2, 16, 21);
        let k = canonicalize(&body).unwrap();
        for (sx, sy) in [(0.15, 0.1), (-0.2, 0.05), (0.0, -0.18)] {
            let x = vec2(sx, sy);
            if k.body.min_slack(&x).0 <= 0.0 {
                continue;
            }
            let m = macbeath_region(&k, &x, 1.0).unwrap();
            let check = oracle::poly_in_poly(&m.region, &k.body, 1e-9).unwrap();
            assert!(check.holds, "M^1 escaped the body: worst {}", check.worst);
        }
    }

    #[test]
    fn radial_extent_matches_the_region_boundary() {
        let k = canonical_ball(2);
        let x = vec2(0.25, -0.1);
        let m = macbeath_region(&k, &x, 0.4).unwrap();
        for u in sphere_net(2, 16, 9) {
            let t = m.radial_extent(&u);
            assert!(t.is_finite() && t > 0.0);
            for sign in [1.0, -1.0] {
                let p = &x + sign * t * &u;
                let (worst, _) = m.region.min_slack(&p);
                // Boundary point: inside, and some facet is tight.
                assert!(worst > -1e-9, "extent point outside: {worst}");
                assert!(worst < 1e-9, "extent point interior: {worst}");
            }
        }
    }

    #[test]
    fn disjointness_agrees_with_hand_cases() {
        let k = canonical_cube(2, H);
        let m = |x: Vector| macbeath_region(&k, &x, SHRUNK_LAMBDA).unwrap();
        // [0.4h,0.6h]×[±0.2h] vs its mirror: separated by the prefilter.
        assert!(regions_disjoint(&m(vec2(H / 2.0, 0.0)), &m(vec2(-H / 2.0, 0.0))).unwrap());
        // Nearly identical centers certainly intersect.
        assert!(!regions_disjoint(&m(vec2(H / 2.0, 0.0)), &m(vec2(H / 2.0 + 1e-3, 0.0))).unwrap());
        // Along x1 the slab of center c is [1.2c - 0.2h, 0.8c + 0.2h]
        // (slack h - c against the near facet). Against [0.4h, 0.6h] of
        // c = h/2, the interval of c = 0.66h starts at 0.592h: a sliver of
        // overlap. At c = 0.68h it starts at 0.616h: cleanly disjoint.
        assert!(!regions_disjoint(&m(vec2(H / 2.0, 0.0)), &m(vec2(0.66 * H, 0.0))).unwrap());
        assert!(regions_disjoint(&m(vec2(H / 2.0, 0.0)), &m(vec2(0.68 * H, 0.0))).unwrap());
    }

    #[test]
    fn disjointness_is_symmetric() {
        let k = canonical_ball(2);
        let pts = [
            vec2(0.3, 0.0),
            vec2(0.28, 0.1),
            vec2(-0.25, 0.2),
            vec2(0.0, 0.33),
            vec2(0.05, 0.0),
        ];
        for a in &pts {
            for b in &pts {
                let ma = macbeath_region(&k, a, SHRUNK_LAMBDA).unwrap();
                let mb = macbeath_region(&k, b, SHRUNK_LAMBDA).unwrap();
                assert_eq!(
                    regions_disjoint(&ma, &mb).unwrap(),
                    regions_disjoint(&mb, &ma).unwrap()
                );
            }
        }
    }

    #[test]
    fn intersecting_shrunken_regions_sit_in_the_quadrupled_region() {
        // If M'(x) meets M'(y), then M'(y) fits inside M^{4/5}(x).
        let k = canonical_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0x2e3);
        let mut tested = 0;
        while tested < 20 {
            let x = vec2(rng.gen::<f64>() * 0.6 - 0.3, rng.gen::<f64>() * 0.6 - 0.3);
            let y = &x + vec2(rng.gen::<f64>() * 0.04 - 0.02, rng.gen::<f64>() * 0.04 - 0.02);
            if k.body.min_slack(&x).0 <= 1e-6 || k.body.min_slack(&y).0 <= 1e-6 {
                continue;
            }
            let mx = macbeath_region(&k, &x, SHRUNK_LAMBDA).unwrap();
            let my = macbeath_region(&k, &y, SHRUNK_LAMBDA).unwrap();
            if regions_disjoint(&mx, &my).unwrap() {
                continue;
            }
            let big = macbeath_region(&k, &x, 4.0 * SHRUNK_LAMBDA).unwrap();
            let check = oracle::poly_in_poly(&my.region, &big.region, 1e-8).unwrap();
            assert!(check.holds, "containment failed: worst {}", check.worst);
            tested += 1;
        }
    }

    #[test]
    fn ellipsoid_of_ball_center_is_round_and_centered() {
        let k = canonical_ball(2);
        let x = Vector::zeros(2);
        let (e, cert) = macbeath_ellipsoid_certified(&k, &x).unwrap();
        assert_eq!(e.center(), &x);
        assert!(cert.outer_ratio <= 1.0 + 1e-9);
        assert!(cert.inner_margin >= -1e-9);
        // Region is a regular 128-gon, so E is nearly a ball with radius
        // in the sandwich range [4λ₀ R, 0.21 R] for facet distance R.
        let r = k.body.halfspaces().iter().map(|h| h.offset()).fold(f64::INFINITY, f64::min);
        assert!(e.inner_radius() / e.outer_radius() > 0.95);
        assert!(e.outer_radius() >= 4.0 * lambda0(2) * r * 0.99);
        assert!(e.outer_radius() <= SHRUNK_LAMBDA * SANDWICH_OUTER_SLACK * r * 1.01);
    }

    #[test]
    fn ellipsoid_center_is_exact() {
        let k = canonical_ball(2);
        let x = vec2(0.21, -0.17);
        let e = macbeath_ellipsoid(&k, &x).unwrap();
        assert_eq!(e.center(), &x);
    }

    #[test]
    fn ellipsoid_sandwich_is_certified_against_the_oracle() {
        for (d, seed) in [(2usize, 31u64), (2, 32), (3, 33)] {
            let k = canonicalize(&bodies::random_body(d, 14, seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xe11);
            let mut tested = 0;
            while tested < 3 {
                let mut x = Vector::zeros(d);
                for j in 0..d {
                    x[j] = rng.gen::<f64>() * 0.5 - 0.25;
                }
                if k.body.min_slack(&x).0 <= 0.01 {
                    continue;
                }
                let (e, _) = macbeath_ellipsoid_certified(&k, &x).unwrap();
                let inner = macbeath_region(&k, &x, 4.0 * lambda0(d)).unwrap();
                let outer = macbeath_region(
                    &k,
                    &x,
                    SHRUNK_LAMBDA * SANDWICH_OUTER_SLACK,
                )
                .unwrap();
                let inner_check = oracle::poly_in_ell(&inner.region, &e, 1e-8).unwrap();
                assert!(inner_check.holds, "inner failed: worst {}", inner_check.worst);
                assert!(inner_check.certified);
                let outer_check = oracle::ell_in_poly(&e, &outer.region, 1e-8);
                assert!(outer_check.holds, "outer failed: worst {}", outer_check.worst);
                tested += 1;
            }
        }
    }

    #[test]
    fn ellipsoid_dominates_region_support_in_random_directions() {
        let k = canonical_cube(2, H);
        let x = vec2(H / 2.0, 0.0);
        let e = macbeath_ellipsoid(&k, &x).unwrap();
        let inner = macbeath_region(&k, &x, 4.0 * lambda0(2)).unwrap();
        for u in sphere_net(2, 100, 13) {
            assert!(inner.support(&u).unwrap() <= e.support(&u) + 1e-9);
        }
    }

    #[test]
    fn ellipsoid_is_deterministic() {
        let k = canonical_ball(2);
        let x = vec2(0.1, 0.28);
        let a = macbeath_ellipsoid(&k, &x).unwrap();
        let b = macbeath_ellipsoid(&k, &x).unwrap();
        assert_eq!(a.shape(), b.shape());
    }

    #[test]
    fn min_cap_on_ball_is_radial() {
        // Canonical scale puts the ball boundary near 1/(2*sqrt(2)), so a
        // point at radius 0.3 is close to it and well inside the regime.
        let k = canonical_ball(2);
        let x = vec2(0.3, 0.0);
        let cap = approx_min_cap(&k, &x).unwrap();
        assert!(cap.direction[0] > 0.99, "direction {:?}", cap.direction);
        let r = k.body.halfspaces().iter().map(|h| h.offset()).fold(f64::INFINITY, f64::min);
        assert!((cap.width - (r - 0.3)).abs() < 0.005, "width {}", cap.width);
    }

    #[test]
    fn min_cap_on_square_facet_is_the_facet_cap() {
        let k = canonical_cube(2, H);
        let x = vec2(0.98 * H, 0.0);
        let cap = approx_min_cap(&k, &x).unwrap();
        assert!(cap.direction[0] > 0.999_999);
        assert_relative_eq!(cap.width, 0.02 * H, epsilon = 1e-9);
    }

    #[test]
    fn min_cap_width_dominates_delta() {
        let k = canonical_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0x77d7);
        for _ in 0..10 {
            let x = vec2(rng.gen::<f64>() * 0.7 - 0.35, rng.gen::<f64>() * 0.7 - 0.35);
            let (delta, _) = k.body.min_slack(&x);
            if delta <= 1e-3 || delta > k.gamma / 4.0 {
                continue;
            }
            let cap = approx_min_cap(&k, &x).unwrap();
            assert!(cap.width >= delta - 1e-9);
        }
    }

    #[test]
    fn min_cap_rejects_deep_points() {
        let k = canonical_ball(2);
        match approx_min_cap(&k, &vec2(0.01, 0.0)) {
            Err(Error::OutOfRegime { delta, limit }) => {
                assert!(delta > limit);
            }
            other => panic!("expected out-of-regime, got {other:?}"),
        }
    }

    #[test]
    fn cap_expand_identity_and_doubling() {
        let k = canonical_cube(2, H);
        let cap = Cap::through_point(&k.body, &vec2(1.0, 0.0), &vec2(0.9 * H, 0.0)).unwrap();
        assert_relative_eq!(cap.width, 0.1 * H, epsilon = 1e-12);

        let same = cap_expand(&cap, 1.0);
        assert_relative_eq!(same.cut_offset, cap.cut_offset, epsilon = 1e-15);
        assert_relative_eq!(same.width, cap.width, epsilon = 1e-15);

        let doubled = cap_expand(&cap, 2.0);
        assert_relative_eq!(doubled.width, 0.2 * H, epsilon = 1e-12);
        assert_relative_eq!(doubled.cut_offset, 0.8 * H, epsilon = 1e-12);
    }

    #[test]
    fn cap_expand_clamps_to_the_body() {
        let k = canonical_cube(2, H);
        let cap = Cap::through_point(&k.body, &vec2(1.0, 0.0), &vec2(0.9 * H, 0.0)).unwrap();
        let huge = cap_expand(&cap, 100.0);
        let clamped = huge.polytope(&k.body).unwrap();
        let area = oracle::polygon_area(&clamped).unwrap();
        let body_area = oracle::polygon_area(&k.body).unwrap();
        assert_relative_eq!(area, body_area, epsilon = 1e-9);
    }

    #[test]
    fn cap_expansion_volume_ratio_is_bounded() {
        // vol(C^ρ) ≤ ρ^d vol(C), within Monte-Carlo error.
        let k = canonical_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0xca9);
        let mut tested = 0;
        while tested < 8 {
            let x = vec2(rng.gen::<f64>() * 0.8 - 0.4, rng.gen::<f64>() * 0.8 - 0.4);
            let (delta, _) = k.body.min_slack(&x);
            if delta <= 0.01 || delta > k.gamma / 4.0 {
                continue;
            }
            let cap = approx_min_cap(&k, &x).unwrap();
            let rho = 1.0 + rng.gen::<f64>() * 2.0;
            let big = cap_expand(&cap, rho);
            let (v1, e1) = oracle::mc_volume(&cap.polytope(&k.body).unwrap(), 20_000, 5).unwrap();
            let (v2, e2) = oracle::mc_volume(&big.polytope(&k.body).unwrap(), 20_000, 6).unwrap();
            assert!(
                v2 - 3.0 * e2 <= rho.powi(2) * (v1 + 3.0 * e1),
                "ratio bound failed: v1={v1} v2={v2} rho={rho}"
            );
            tested += 1;
        }
    }

    #[test]
    fn profile_of_radial_ball_point() {
        let k = canonical_ball(2);
        let p = distance_profile(&k, &vec2(0.3, 0.0)).unwrap();
        // Boundary sits at the minimum facet offset, near 1/(2*sqrt(2)).
        let r = k.body.halfspaces().iter().map(|h| h.offset()).fold(f64::INFINITY, f64::min);
        assert!((p.delta - (r - 0.3)).abs() < 0.002, "delta {}", p.delta);
        assert!((p.ray_dist - (r - 0.3)).abs() < 0.002, "ray {}", p.ray_dist);
        assert!(p.ray_dist >= p.delta - 1e-12);
        assert!(p.width >= p.delta - 1e-9);
    }

    #[test]
    fn profile_of_diagonal_square_point() {
        let k = canonical_cube(2, H);
        let x = vec2(0.6 * H, 0.6 * H);
        let p = distance_profile(&k, &x).unwrap();
        assert_relative_eq!(p.delta, 0.4 * H, epsilon = 1e-12);
        assert_relative_eq!(p.ray_dist, 0.4 * H * 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn profile_rejects_the_center() {
        let k = canonical_ball(2);
        assert!(matches!(
            distance_profile(&k, &Vector::zeros(2)),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn delta_ray_inequality_holds_everywhere() {
        let body = bodies::random_body(2, 18, 40);
        let k = canonicalize(&body).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0xde17a);
        let mut tested = 0;
        while tested < 1000 {
            let x = vec2(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            let (delta, _) = k.body.min_slack(&x);
            if delta <= 1e-9 || x.norm() <= 1e-6 {
                continue;
            }
            let ray = Ray::new(x.clone(), x.clone()).unwrap();
            let t = k.body.ray_exit(&ray).unwrap().t;
            assert!(delta <= t + 1e-12);
            assert!(t <= delta / k.gamma + 1e-9, "t={t} delta={delta} gamma={}", k.gamma);
            tested += 1;
        }
    }

    #[test]
    fn nearby_points_have_comparable_profiles() {
        // x' ∈ M'(x) forces x ∈ M^{1/4}(x') and 4δ(x)/5 ≤ δ(x') ≤ 4δ(x)/3.
        let k = canonical_ball(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0x2b11);
        let mut tested = 0;
        while tested < 30 {
            let x = vec2(rng.gen::<f64>() * 0.8 - 0.4, rng.gen::<f64>() * 0.8 - 0.4);
            if k.body.min_slack(&x).0 <= 1e-3 {
                continue;
            }
            let m = macbeath_region(&k, &x, SHRUNK_LAMBDA).unwrap();
            let mut u = vec2(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
            if u.norm() <= 1e-9 {
                continue;
            }
            u /= u.norm();
            let xp = &x + (rng.gen::<f64>() * m.radial_extent(&u)) * &u;
            if k.body.min_slack(&xp).0 <= 0.0 {
                continue;
            }
            let back = macbeath_region(&k, &xp, 0.25).unwrap();
            assert!(back.contains(&x).unwrap(), "x escaped M^1/4(x')");
            let dx = k.body.min_slack(&x).0;
            let dxp = k.body.min_slack(&xp).0;
            assert!(dxp >= 0.8 * dx - 1e-9);
            assert!(dxp <= 4.0 * dx / 3.0 + 1e-9);
            tested += 1;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn region_scaling_identity(
            lam in 0.05f64..1.0,
            mu in 0.05f64..1.0,
            sx in -0.25f64..0.25,
            sy in -0.25f64..0.25,
        ) {
            let k = canonical_cube(2, H);
            let x = vec2(sx, sy);
            prop_assume!(k.body.min_slack(&x).0 > 1e-3);
            let ma = macbeath_region(&k, &x, lam).unwrap();
            let mb = macbeath_region(&k, &x, mu).unwrap();
            for u in sphere_net(2, 8, 17) {
                let ha = ma.support(&u).unwrap() - u.dot(&x);
                let hb = mb.support(&u).unwrap() - u.dot(&x);
                prop_assert!((ha - (lam / mu) * hb).abs() < 1e-8);
            }
        }

        #[test]
        fn expansion_is_monotone_in_rho(
            rho in 1.0f64..4.0,
            px in -0.3f64..0.3,
        ) {
            let k = canonical_cube(2, H);
            let x = vec2(px.clamp(-0.9 * H, 0.9 * H), 0.0);
            prop_assume!(k.body.min_slack(&x).0 > 1e-3);
            let cap = Cap::through_point(&k.body, &vec2(1.0, 0.0), &x).unwrap();
            let big = cap_expand(&cap, rho);
            prop_assert!(big.width >= cap.width - 1e-12);
            prop_assert!(big.cut_offset <= cap.cut_offset + 1e-12);
        }
    }
}
