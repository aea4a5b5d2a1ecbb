//! Convex bodies, p-convex index sets, intrinsic volumes, Steiner/tube
//! formulas, and the cube-grid approximation of growing index sets.
//!
//! Grid conventions follow the lattice construction used for the extreme
//! value limit: cubes `I_z = z·t + [0,t)^d` are half-open, boxes are treated
//! as products of half-open intervals for classification (so an exactly
//! tiled cube yields `P = Q`), and as their closures for distances and
//! suprema. Balls are closed.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Volume of the m-dimensional unit ball, `π^{m/2}/Γ(m/2+1)`; `ω_0 = 1`.
pub fn unit_ball_volume(m: usize) -> f64 {
    // exact low dimensions keep the Steiner coefficients at full precision
    match m {
        0 => 1.0,
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => std::f64::consts::PI.powf(m as f64 / 2.0) / gamma(m as f64 / 2.0 + 1.0),
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut acc = 1.0;
    for i in 0..k.min(n - k) {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Elementary symmetric polynomials `e_0..e_d` of the side lengths.
fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let mut e = vec![0.0; values.len() + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] += v * e[j - 1];
        }
    }
    e
}

/// A convex body: an axis-aligned box or a Euclidean ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ConvexBody {
    Box { corner: Vec<f64>, sides: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl ConvexBody {
    pub fn cuboid(corner: Vec<f64>, sides: Vec<f64>) -> Result<Self> {
        if corner.len() != sides.len() || corner.is_empty() {
            return Err(Error::domain(
                "corner and sides must have equal positive length",
            ));
        }
        if sides.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::domain("box sides must be positive"));
        }
        Ok(ConvexBody::Box { corner, sides })
    }

    pub fn cube(corner: Vec<f64>, side: f64) -> Result<Self> {
        let d = corner.len();
        Self::cuboid(corner, vec![side; d])
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::domain("ball center must be non-empty"));
        }
        if !(radius > 0.0) {
            return Err(Error::domain("ball radius must be positive"));
        }
        Ok(ConvexBody::Ball { center, radius })
    }

    /// Degenerate single-point index set. Valid everywhere a fixed bounded
    /// set `B` is accepted (suprema, tail constants); grid constructions
    /// reject it through the volume precondition.
    pub fn point(at: Vec<f64>) -> Self {
        let d = at.len();
        ConvexBody::Box {
            corner: at,
            sides: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConvexBody::Box { corner, .. } => corner.len(),
            ConvexBody::Ball { center, .. } => center.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            ConvexBody::Box { sides, .. } => sides.iter().product(),
            ConvexBody::Ball { center, radius } => {
                unit_ball_volume(center.len()) * radius.powi(center.len() as i32)
            }
        }
    }

    /// Intrinsic volumes `(V_0, …, V_d)`.
    ///
    /// Boxes: `V_j` is the j-th elementary symmetric polynomial of the
    /// sides. Balls: `V_j = binom(d,j)·ω_d/ω_{d-j}·r^j`. These are the
    /// coefficients matching the Steiner polynomial below.
    pub fn intrinsic_volumes(&self) -> Vec<f64> {
        match self {
            ConvexBody::Box { sides, .. } => elementary_symmetric(sides),
            ConvexBody::Ball { center, radius } => {
                let d = center.len();
                let wd = unit_ball_volume(d);
                (0..=d)
                    .map(|j| binomial(d, j) * wd / unit_ball_volume(d - j) * radius.powi(j as i32))
                    .collect()
            }
        }
    }

    /// Volume of the dilation `|C ⊕ B(r)| = Σ_j ω_{d-j}·V_j·r^{d-j}`.
    pub fn steiner_volume(&self, r: f64) -> f64 {
        assert!(r >= 0.0, "dilation radius must be non-negative");
        let d = self.dim();
        let v = self.intrinsic_volumes();
        (0..=d)
            .map(|j| unit_ball_volume(d - j) * v[j] * r.powi((d - j) as i32))
            .sum()
    }

    /// Two-sided bounds on the boundary tube volume `|∂C ⊕ B(r)|`:
    /// `Σ_{j<d} ω_{d-j} V_j r^{d-j} ≤ |∂C ⊕ B(r)| ≤ 2·Σ_{j<d} ω_{d-j} V_j r^{d-j}`.
    pub fn boundary_tube_bounds(&self, r: f64) -> (f64, f64) {
        assert!(r > 0.0, "tube radius must be positive");
        let d = self.dim();
        let v = self.intrinsic_volumes();
        let lower: f64 = (0..d)
            .map(|j| unit_ball_volume(d - j) * v[j] * r.powi((d - j) as i32))
            .sum();
        (lower, 2.0 * lower)
    }

    /// Membership. Boxes are half-open `[corner, corner+sides)`, balls closed.
    pub fn contains(&self, u: &[f64]) -> bool {
        match self {
            ConvexBody::Box { corner, sides } => corner
                .iter()
                .zip(sides)
                .zip(u)
                .all(|((&lo, &s), &x)| x >= lo && x < lo + s || (s == 0.0 && x == lo)),
            ConvexBody::Ball { center, radius } => dist_sq(center, u) <= radius * radius,
        }
    }

    /// Euclidean distance from `u` to the closure of the body.
    pub fn distance(&self, u: &[f64]) -> f64 {
        match self {
            ConvexBody::Box { corner, sides } => {
                let mut acc = 0.0;
                for ((&lo, &s), &x) in corner.iter().zip(sides).zip(u) {
                    let clamped = x.clamp(lo, lo + s);
                    acc += (x - clamped) * (x - clamped);
                }
                acc.sqrt()
            }
            ConvexBody::Ball { center, radius } => (dist_sq(center, u).sqrt() - radius).max(0.0),
        }
    }

    /// Distance from `u` to the boundary `∂C` (zero only on the boundary).
    pub fn distance_to_boundary(&self, u: &[f64]) -> f64 {
        match self {
            ConvexBody::Box { corner, sides } => {
                let outside = self.distance(u);
                if outside > 0.0 {
                    return outside;
                }
                corner
                    .iter()
                    .zip(sides)
                    .zip(u)
                    .map(|((&lo, &s), &x)| (x - lo).min(lo + s - x))
                    .fold(f64::INFINITY, f64::min)
            }
            ConvexBody::Ball { center, radius } => (dist_sq(center, u).sqrt() - radius).abs(),
        }
    }

    /// Axis-aligned bounding box `(lo, hi)` of the closure.
    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ConvexBody::Box { corner, sides } => (
                corner.clone(),
                corner.iter().zip(sides).map(|(&lo, &s)| lo + s).collect(),
            ),
            ConvexBody::Ball { center, radius } => (
                center.iter().map(|&c| c - radius).collect(),
                center.iter().map(|&c| c + radius).collect(),
            ),
        }
    }

    /// The scaled body `γ·C` (dilation about the origin).
    pub fn scale(&self, factor: f64) -> ConvexBody {
        assert!(factor > 0.0);
        match self {
            ConvexBody::Box { corner, sides } => ConvexBody::Box {
                corner: corner.iter().map(|&c| c * factor).collect(),
                sides: sides.iter().map(|&s| s * factor).collect(),
            },
            ConvexBody::Ball { center, radius } => ConvexBody::Ball {
                center: center.iter().map(|&c| c * factor).collect(),
                radius: radius * factor,
            },
        }
    }

    /// Whether the half-open cube `z·t + [0,t)^d` is contained in the body.
    ///
    /// Boxes: exact half-open interval inclusion (the upper face may touch).
    /// Balls: the farthest cube corner from the center must be inside; by
    /// convexity this is exact for the closed cube and conservative only on
    /// tangency sets of measure zero.
    fn cube_inside(&self, cube_lo: &[f64], t: f64) -> bool {
        match self {
            ConvexBody::Box { corner, sides } => corner
                .iter()
                .zip(sides)
                .zip(cube_lo)
                .all(|((&lo, &s), &a)| a >= lo && a + t <= lo + s),
            ConvexBody::Ball { center, radius } => {
                let mut acc = 0.0;
                for (&c, &a) in center.iter().zip(cube_lo) {
                    let far = if (a - c).abs() > (a + t - c).abs() {
                        a
                    } else {
                        a + t
                    };
                    acc += (far - c) * (far - c);
                }
                acc <= radius * radius
            }
        }
    }

    /// Whether the half-open cube `z·t + [0,t)^d` meets the body.
    fn cube_intersects(&self, cube_lo: &[f64], t: f64) -> bool {
        match self {
            ConvexBody::Box { corner, sides } => {
                corner
                    .iter()
                    .zip(sides)
                    .zip(cube_lo)
                    .all(|((&lo, &s), &a)| {
                        a < lo + s && lo < a + t || (s == 0.0 && lo >= a && lo < a + t)
                    })
            }
            ConvexBody::Ball { center, radius } => {
                let mut acc = 0.0;
                for (&c, &a) in center.iter().zip(cube_lo) {
                    let clamped = c.clamp(a, a + t);
                    acc += (c - clamped) * (c - clamped);
                }
                acc < radius * radius
            }
        }
    }

    /// Closed-set intersection test between two bodies (touching counts),
    /// used for the connectivity graph of a union.
    pub fn intersects_body(&self, other: &ConvexBody) -> bool {
        match (self, other) {
            (
                ConvexBody::Box {
                    corner: c1,
                    sides: s1,
                },
                ConvexBody::Box {
                    corner: c2,
                    sides: s2,
                },
            ) => c1
                .iter()
                .zip(s1)
                .zip(c2.iter().zip(s2))
                .all(|((&lo1, &w1), (&lo2, &w2))| lo1.max(lo2) <= (lo1 + w1).min(lo2 + w2)),
            (
                ConvexBody::Ball {
                    center: a,
                    radius: ra,
                },
                ConvexBody::Ball {
                    center: b,
                    radius: rb,
                },
            ) => dist_sq(a, b).sqrt() <= ra + rb,
            (bx @ ConvexBody::Box { .. }, ConvexBody::Ball { center, radius })
            | (ConvexBody::Ball { center, radius }, bx @ ConvexBody::Box { .. }) => {
                bx.distance(center) <= *radius
            }
        }
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// A p-convex index set: a connected finite union of convex bodies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PConvexSet {
    pub bodies: Vec<ConvexBody>,
}

impl PConvexSet {
    pub fn new(bodies: Vec<ConvexBody>) -> Result<Self> {
        if bodies.is_empty() {
            return Err(Error::domain("a p-convex set needs at least one body"));
        }
        let d = bodies[0].dim();
        if bodies.iter().any(|b| b.dim() != d) {
            return Err(Error::domain("all bodies must share one dimension"));
        }
        let set = PConvexSet { bodies };
        if !set.is_connected() {
            return Err(Error::domain("the union of bodies must be connected"));
        }
        Ok(set)
    }

    pub fn single(body: ConvexBody) -> Self {
        PConvexSet { bodies: vec![body] }
    }

    pub fn dim(&self) -> usize {
        self.bodies[0].dim()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        self.bodies.iter().any(|b| b.contains(u))
    }

    pub fn contains_origin(&self) -> bool {
        self.contains(&vec![0.0; self.dim()])
    }

    /// Distance from `u` to the closure of the union.
    pub fn distance(&self, u: &[f64]) -> f64 {
        self.bodies
            .iter()
            .map(|b| b.distance(u))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bbox(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for body in &self.bodies {
            let (blo, bhi) = body.bbox();
            for i in 0..d {
                lo[i] = lo[i].min(blo[i]);
                hi[i] = hi[i].max(bhi[i]);
            }
        }
        (lo, hi)
    }

    pub fn scale(&self, factor: f64) -> PConvexSet {
        PConvexSet {
            bodies: self.bodies.iter().map(|b| b.scale(factor)).collect(),
        }
    }

    /// Connectivity of the pairwise body-intersection graph.
    pub fn is_connected(&self) -> bool {
        let n = self.bodies.len();
        if n <= 1 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if !seen[j] && self.bodies[i].intersects_body(&self.bodies[j]) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Default absolute volume tolerance: 1e-4 of the bounding box, tight
    /// enough for grid side lengths while keeping subdivision cheap.
    pub fn default_volume_tol(&self) -> f64 {
        let (lo, hi) = self.bbox();
        let bbox_vol: f64 = lo.iter().zip(&hi).map(|(&a, &b)| b - a).product();
        1e-4 * bbox_vol.max(1.0)
    }

    /// `Σ_i V_j(C_i) / |C|^{j/d}`, the relative intrinsic volume sums whose
    /// boundedness along the sequence the extreme value theorem assumes.
    pub fn relative_intrinsic_volume(&self, j: usize) -> Result<f64> {
        let d = self.dim();
        if j >= d {
            return Err(Error::domain(
                "relative intrinsic volumes are indexed j = 0..d-1",
            ));
        }
        let total: f64 = self.bodies.iter().map(|b| b.intrinsic_volumes()[j]).sum();
        let (vol, _) = self.volume(self.default_volume_tol())?;
        Ok(total / vol.powf(j as f64 / d as f64))
    }

    /// Volume of the union with a certified absolute error bound.
    ///
    /// A single body is exact. Unions subdivide the bounding box, counting
    /// cells certified inside some body, discarding cells certified outside
    /// all, and halving undecided boundary cells until their total measure
    /// is below `tol`.
    pub fn volume(&self, tol: f64) -> Result<(f64, f64)> {
        if self.bodies.len() == 1 {
            return Ok((self.bodies[0].volume(), 0.0));
        }
        self.measure_by_subdivision(tol, |cell_lo, cell_hi| {
            let t = cell_hi[0] - cell_lo[0];
            if self.bodies.iter().any(|b| b.cube_inside(cell_lo, t)) {
                CellClass::Inside
            } else if !self.bodies.iter().any(|b| b.cube_intersects(cell_lo, t)) {
                CellClass::Outside
            } else {
                CellClass::Boundary
            }
        })
    }

    /// Volume of the dilation `C ⊕ B(margin)`, exact (Steiner) for a single
    /// body, subdivision otherwise.
    pub fn dilated_volume(&self, margin: f64, tol: f64) -> Result<(f64, f64)> {
        assert!(margin >= 0.0);
        if self.bodies.len() == 1 {
            return Ok((self.bodies[0].steiner_volume(margin), 0.0));
        }
        let half_diag = |lo: &[f64], hi: &[f64]| {
            0.5 * lo
                .iter()
                .zip(hi)
                .map(|(&a, &b)| (b - a) * (b - a))
                .sum::<f64>()
                .sqrt()
        };
        self.measure_by_subdivision_padded(tol, margin, |cell_lo, cell_hi| {
            let center: Vec<f64> = cell_lo
                .iter()
                .zip(cell_hi)
                .map(|(&a, &b)| 0.5 * (a + b))
                .collect();
            let r = half_diag(cell_lo, cell_hi);
            let dist = self.distance(&center);
            if dist + r <= margin {
                CellClass::Inside
            } else if dist - r > margin {
                CellClass::Outside
            } else {
                CellClass::Boundary
            }
        })
    }

    fn measure_by_subdivision<F>(&self, tol: f64, classify: F) -> Result<(f64, f64)>
    where
        F: Fn(&[f64], &[f64]) -> CellClass,
    {
        self.measure_by_subdivision_padded(tol, 0.0, classify)
    }

    fn measure_by_subdivision_padded<F>(
        &self,
        tol: f64,
        pad: f64,
        classify: F,
    ) -> Result<(f64, f64)>
    where
        F: Fn(&[f64], &[f64]) -> CellClass,
    {
        if !(tol > 0.0) {
            return Err(Error::domain("subdivision tolerance must be positive"));
        }
        let (mut lo, mut hi) = self.bbox();
        for i in 0..lo.len() {
            lo[i] -= pad;
            hi[i] += pad;
        }
        let mut volume = 0.0;
        let mut stack = vec![(lo, hi)];
        let mut boundary: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        let cell_volume =
            |lo: &[f64], hi: &[f64]| -> f64 { lo.iter().zip(hi).map(|(&a, &b)| b - a).product() };
        let max_cells = 40_000_000usize;
        let mut processed = 0usize;
        while let Some((clo, chi)) = stack.pop() {
            processed += 1;
            if processed > max_cells {
                return Err(Error::domain(
                    "subdivision volume did not converge within the cell budget; loosen tol",
                ));
            }
            match classify(&clo, &chi) {
                CellClass::Inside => volume += cell_volume(&clo, &chi),
                CellClass::Outside => {}
                CellClass::Boundary => boundary.push((clo, chi)),
            }
            if stack.is_empty() {
                let uncertain: f64 = boundary.iter().map(|(a, b)| cell_volume(a, b)).sum();
                if uncertain <= 2.0 * tol || boundary.is_empty() {
                    volume += 0.5 * uncertain;
                    return Ok((volume, 0.5 * uncertain));
                }
                // split every boundary cell along its longest axis
                for (clo, chi) in boundary.drain(..) {
                    let (axis, _) = clo
                        .iter()
                        .zip(&chi)
                        .map(|(&a, &b)| b - a)
                        .enumerate()
                        .fold((0, 0.0), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
                    let mid = 0.5 * (clo[axis] + chi[axis]);
                    let mut left_hi = chi.clone();
                    left_hi[axis] = mid;
                    let mut right_lo = clo.clone();
                    right_lo[axis] = mid;
                    stack.push((clo.clone(), left_hi));
                    stack.push((right_lo, chi.clone()));
                }
            }
        }
        Ok((volume, 0.0))
    }
}

enum CellClass {
    Inside,
    Outside,
    Boundary,
}

/// The cube-grid approximation of one index set at one `(k, L)`.
///
/// `t = L·⌊(|C|/k)^{1/d}⌋` is the cube side; `P` indexes cubes contained in
/// the set, `Q` cubes meeting it. The grids `D± = ∪ J_z` of `(L·Z)^d`
/// points sandwich the set between unions of closed L-cubes.
#[derive(Debug, Clone)]
pub struct GridScheme {
    pub k: usize,
    pub l: usize,
    pub t: f64,
    pub volume: f64,
    p_indices: HashSet<Vec<i64>>,
    q_indices: HashSet<Vec<i64>>,
}

impl GridScheme {
    pub fn p_count(&self) -> usize {
        self.p_indices.len()
    }

    pub fn q_count(&self) -> usize {
        self.q_indices.len()
    }

    pub fn is_inner(&self, z: &[i64]) -> bool {
        self.p_indices.contains(z)
    }

    pub fn is_intersecting(&self, z: &[i64]) -> bool {
        self.q_indices.contains(z)
    }

    /// Lattice points of `J_z = I_z ∩ (L·Z)^d` for one cube index.
    pub fn j_points(&self, z: &[i64]) -> Vec<Vec<f64>> {
        let m = (self.t / self.l as f64).round() as i64;
        let d = z.len();
        let mut points = Vec::with_capacity((m as usize).pow(d as u32));
        let mut idx = vec![0i64; d];
        loop {
            points.push(
                z.iter()
                    .zip(&idx)
                    .map(|(&zi, &i)| zi as f64 * self.t + (i * self.l as i64) as f64)
                    .collect(),
            );
            let mut axis = 0;
            loop {
                if axis == d {
                    return points;
                }
                idx[axis] += 1;
                if idx[axis] < m {
                    break;
                }
                idx[axis] = 0;
                axis += 1;
            }
        }
    }

    /// `D⁻` points: grid points of all inner cubes.
    pub fn d_minus(&self) -> Vec<Vec<f64>> {
        let mut zs: Vec<&Vec<i64>> = self.p_indices.iter().collect();
        zs.sort();
        zs.iter().flat_map(|z| self.j_points(z)).collect()
    }

    /// `D⁺` points: grid points of all intersecting cubes.
    pub fn d_plus(&self) -> Vec<Vec<f64>> {
        let mut zs: Vec<&Vec<i64>> = self.q_indices.iter().collect();
        zs.sort();
        zs.iter().flat_map(|z| self.j_points(z)).collect()
    }

    /// Whether `u` lies in `∪_{z∈P} closure(I_z)` (resp. `Q`) — i.e. in the
    /// inner (outer) cube cover. Equivalent to membership in the closed
    /// L-cube union over `D∓` since the `C_L` cubes tile each `I_z` closure.
    pub fn covered(&self, u: &[f64], inner: bool) -> bool {
        let set = if inner {
            &self.p_indices
        } else {
            &self.q_indices
        };
        let mut candidates: Vec<Vec<i64>> = vec![Vec::new()];
        for &x in u {
            let base = (x / self.t).floor() as i64;
            let mut next = Vec::new();
            for c in &candidates {
                let mut with = c.clone();
                with.push(base);
                next.push(with);
                // points exactly on a face belong to the closures of both cubes
                if (x - base as f64 * self.t).abs() < 1e-9 * self.t.max(1.0) {
                    let mut with_prev = c.clone();
                    with_prev.push(base - 1);
                    next.push(with_prev);
                }
            }
            candidates = next;
        }
        candidates.iter().any(|z| set.contains(z))
    }

    /// Bounding-cube constant: the smallest `c` with
    /// `D⁺ ⊆ [-c·|C|^{1/d}, c·|C|^{1/d}]^d`, discovered by enumeration.
    pub fn bounding_constant(&self) -> f64 {
        let d = self.q_indices.iter().next().map(|z| z.len()).unwrap_or(1);
        let scale = self.volume.powf(1.0 / d as f64);
        self.q_indices
            .iter()
            .flat_map(|z| z.iter())
            .map(|&zi| {
                let far = (zi.max(-zi - 1) + 1) as f64 * self.t;
                far / scale
            })
            .fold(0.0, f64::max)
    }

    /// Sorted `(z, class)` rows for CSV dumps; class is `"P"` or `"Q"`.
    pub fn classification_rows(&self) -> Vec<(Vec<i64>, &'static str)> {
        let mut rows: Vec<(Vec<i64>, &'static str)> = self
            .q_indices
            .iter()
            .map(|z| {
                (
                    z.clone(),
                    if self.p_indices.contains(z) { "P" } else { "Q" },
                )
            })
            .collect();
        rows.sort();
        rows
    }
}

/// Builds the cube grid for `set` at parameters `(k, L)`.
///
/// A cube is inner when it is inner to at least one body. For unions this
/// is conservative (a cube straddling two bodies may be misclassified as
/// non-inner), which only shrinks `P` and preserves the sandwich; the
/// misclassified cubes live in the boundary tube that the count limit
/// already discards.
pub fn build_grid(set: &PConvexSet, k: usize, l: usize) -> Result<GridScheme> {
    if k == 0 || l == 0 {
        return Err(Error::domain("k and L must be positive"));
    }
    let d = set.dim();
    let (volume, _) = set.volume(set.default_volume_tol())?;
    if volume < k as f64 {
        return Err(Error::DegenerateGrid(format!(
            "need |C| >= k, got |C| = {volume} < k = {k}"
        )));
    }
    let m = (volume / k as f64).powf(1.0 / d as f64).floor();
    let t = l as f64 * m;

    let (lo, hi) = set.bbox();
    let z_lo: Vec<i64> = lo.iter().map(|&x| (x / t).floor() as i64).collect();
    let z_hi: Vec<i64> = hi.iter().map(|&x| (x / t).ceil() as i64).collect();

    let mut p_indices = HashSet::new();
    let mut q_indices = HashSet::new();
    let mut z = z_lo.clone();
    'outer: loop {
        let cube_lo: Vec<f64> = z.iter().map(|&zi| zi as f64 * t).collect();
        if set.bodies.iter().any(|b| b.cube_intersects(&cube_lo, t)) {
            q_indices.insert(z.clone());
            if set.bodies.iter().any(|b| b.cube_inside(&cube_lo, t)) {
                p_indices.insert(z.clone());
            }
        }
        let mut axis = 0;
        loop {
            if axis == d {
                break 'outer;
            }
            z[axis] += 1;
            if z[axis] < z_hi[axis] {
                break;
            }
            z[axis] = z_lo[axis];
            axis += 1;
        }
    }
    Ok(GridScheme {
        k,
        l,
        t,
        volume,
        p_indices,
        q_indices,
    })
}

/// One row of the count-limit experiment table.
#[derive(Debug, Clone, Serialize)]
pub struct CountLimitRow {
    pub k: usize,
    pub l: usize,
    /// min of `p·L^d/k` over the floor-aligned tail of the scale ladder
    /// (the liminf proxy).
    pub p_ratio_liminf: f64,
    /// max of `q·L^d/k` over the floor-aligned tail (the limsup proxy).
    pub q_ratio_limsup: f64,
    /// ratios at the largest scale in the ladder
    pub p_ratio_last: f64,
    pub q_ratio_last: f64,
    /// floor misalignment `(x/⌊x⌋)^d - 1` with `x = (|C_n|/k)^{1/d}` at the
    /// largest scale
    pub alignment_last: f64,
    /// largest bounding-cube constant `c_L` seen along the ladder
    pub bounding_constant_max: f64,
}

/// Evaluates `p_{n,k,L}·L^d/k` and `q_{n,k,L}·L^d/k` along a scale ladder
/// `C_n = r_n·C` and reports liminf/limsup proxies per `k`.
///
/// The theorem takes `n → ∞` before `k → ∞`, which kills the discretization
/// of `t = L·⌊(|C_n|/k)^{1/d}⌋`. At finite scales that floor oscillates, so
/// the liminf/limsup are taken over the tail entries whose floor
/// misalignment is below `alignment_tol` (falling back to the best-aligned
/// tail entry when none qualifies).
pub fn count_limit_experiment(
    base: &PConvexSet,
    scales: &[f64],
    ks: &[usize],
    l: usize,
    tail_fraction: f64,
    alignment_tol: f64,
) -> Result<Vec<CountLimitRow>> {
    if scales.is_empty() || ks.is_empty() {
        return Err(Error::domain("need non-empty scale ladder and k list"));
    }
    if scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::domain("scale ladder must be increasing"));
    }
    let d = base.dim();
    let mut rows = Vec::new();
    for &k in ks {
        let mut entries: Vec<(f64, f64, f64)> = Vec::new(); // (p_ratio, q_ratio, alignment)
        let mut c_l_max: f64 = 0.0;
        for &r in scales {
            let set = base.scale(r);
            let (volume, _) = set.volume(set.default_volume_tol())?;
            if volume < k as f64 {
                continue;
            }
            let grid = build_grid(&set, k, l)?;
            c_l_max = c_l_max.max(grid.bounding_constant());
            let x = (volume / k as f64).powf(1.0 / d as f64);
            let alignment = (x / x.floor()).powi(d as i32) - 1.0;
            let norm = (l as f64).powi(d as i32) / k as f64;
            entries.push((
                grid.p_count() as f64 * norm,
                grid.q_count() as f64 * norm,
                alignment,
            ));
        }
        if entries.is_empty() {
            return Err(Error::DegenerateGrid(format!("no scale admits k = {k}")));
        }
        let tail_len = ((entries.len() as f64 * tail_fraction).ceil() as usize).max(1);
        let tail = &entries[entries.len() - tail_len..];
        let aligned: Vec<&(f64, f64, f64)> = tail.iter().filter(|e| e.2 <= alignment_tol).collect();
        let chosen: Vec<&(f64, f64, f64)> = if aligned.is_empty() {
            let best = tail
                .iter()
                .min_by(|a, b| a.2.partial_cmp(&b.2).unwrap())
                .expect("tail non-empty");
            vec![best]
        } else {
            aligned
        };
        let last = entries.last().unwrap();
        rows.push(CountLimitRow {
            k,
            l,
            p_ratio_liminf: chosen.iter().map(|e| e.0).fold(f64::INFINITY, f64::min),
            q_ratio_limsup: chosen.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max),
            p_ratio_last: last.0,
            q_ratio_last: last.1,
            alignment_last: last.2,
            bounding_constant_max: c_l_max,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn intrinsic_volumes_of_boxes_and_balls() {
        // square of side 2: e_0 = 1, e_1 = 4, e_2 = 4
        let square = ConvexBody::cube(vec![0.0, 0.0], 2.0).unwrap();
        let v = square.intrinsic_volumes();
        assert_eq!(v.len(), 3);
        assert_relative_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], 4.0);
        assert_relative_eq!(v[2], 4.0);

        // disk of radius r: matching π(r+s)^2 = πr² + 2·(πr)·s + π·s² term by term
        let r = 1.7;
        let disk = ConvexBody::ball(vec![0.0, 0.0], r).unwrap();
        let v = disk.intrinsic_volumes();
        assert_relative_eq!(v[0], 1.0);
        assert_relative_eq!(v[1], std::f64::consts::PI * r, max_relative = 1e-12);
        assert_relative_eq!(v[2], std::f64::consts::PI * r * r, max_relative = 1e-12);

        // d = 3 ball: (1, 4r, 2πr², 4πr³/3)
        let ball = ConvexBody::ball(vec![0.0; 3], r).unwrap();
        let v = ball.intrinsic_volumes();
        assert_relative_eq!(v[1], 4.0 * r, max_relative = 1e-12);
        assert_relative_eq!(
            v[2],
            2.0 * std::f64::consts::PI * r * r,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            v[3],
            4.0 / 3.0 * std::f64::consts::PI * r.powi(3),
            max_relative = 1e-12
        );
    }

    #[test]
    fn intrinsic_volumes_are_homogeneous_and_monotone() {
        let body = ConvexBody::cuboid(vec![0.0, 0.0, 0.0], vec![1.5, 0.7, 2.2]).unwrap();
        let v = body.intrinsic_volumes();
        let scaled = body.scale(3.0).intrinsic_volumes();
        for j in 0..=3 {
            assert_relative_eq!(scaled[j], 3f64.powi(j as i32) * v[j], max_relative = 1e-12);
        }

        let mut rng = substream(11, 0, Stream::Scratch);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..2.0)).collect();
            let b: Vec<f64> = a.iter().map(|&x| x + rng.random_range(0.0..1.0)).collect();
            let inner = ConvexBody::cuboid(vec![0.0; 3], a)
                .unwrap()
                .intrinsic_volumes();
            let outer = ConvexBody::cuboid(vec![0.0; 3], b)
                .unwrap()
                .intrinsic_volumes();
            for j in 0..=3 {
                assert!(inner[j] <= outer[j] + 1e-12);
            }
        }
    }

    #[test]
    fn steiner_volume_closed_cases() {
        // interval: ℓ + 2r
        let interval = ConvexBody::cuboid(vec![0.0], vec![3.0]).unwrap();
        assert_relative_eq!(interval.steiner_volume(0.5), 4.0);
        // square side a: a² + 4ar + πr²
        let a = 2.0;
        let r = 0.3;
        let square = ConvexBody::cube(vec![0.0, 0.0], a).unwrap();
        assert_relative_eq!(
            square.steiner_volume(r),
            a * a + 4.0 * a * r + std::f64::consts::PI * r * r,
            max_relative = 1e-12
        );
        // r = 0 recovers the volume
        assert_relative_eq!(square.steiner_volume(0.0), 4.0);
    }

    /// Direct dilation-volume decomposition for boxes: core, face slabs,
    /// edge cylinder sectors, corner ball sectors. Independent of the
    /// Steiner coefficients.
    fn dilated_box_volume_direct(sides: &[f64], r: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match sides.len() {
            1 => sides[0] + 2.0 * r,
            2 => {
                let (a, b) = (sides[0], sides[1]);
                a * b + 2.0 * (a + b) * r + pi * r * r
            }
            3 => {
                let (a, b, c) = (sides[0], sides[1], sides[2]);
                let faces = 2.0 * (a * b + a * c + b * c) * r;
                let edges = pi * r * r * (a + b + c);
                let corners = 4.0 / 3.0 * pi * r.powi(3);
                a * b * c + faces + edges + corners
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn steiner_matches_direct_decomposition_for_random_boxes() {
        let mut rng = substream(7, 0, Stream::Scratch);
        for d in 1..=3usize {
            for _ in 0..100 {
                let sides: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..5.0)).collect();
                let r = rng.random_range(0.01..2.0);
                let body = ConvexBody::cuboid(vec![0.0; d], sides.clone()).unwrap();
                assert_relative_eq!(
                    body.steiner_volume(r),
                    dilated_box_volume_direct(&sides, r),
                    epsilon = 1e-9
                );
            }
        }
    }

    #[test]
    fn boundary_tube_bounds_bracket_the_true_tube() {
        // unit square, r = 0.1: exact |∂C ⊕ B(r)| = outer (4r + πr²) plus
        // inner (4r - 4r²)
        let r = 0.1;
        let square = ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap();
        let (lower, upper) = square.boundary_tube_bounds(r);
        assert_relative_eq!(
            lower,
            4.0 * r + std::f64::consts::PI * r * r,
            max_relative = 1e-12
        );
        assert_relative_eq!(upper, 2.0 * lower, max_relative = 1e-12);
        let exact = 4.0 * r + std::f64::consts::PI * r * r + 4.0 * r - 4.0 * r * r;
        assert!(lower <= exact && exact <= upper);

        // Monte Carlo hit-rate estimate from a bounding box
        let mut rng = substream(1234, 0, Stream::Scratch);
        let (lo, hi) = (-0.2, 1.2);
        let area = (hi - lo) * (hi - lo);
        let n = 1_000_000;
        let mut hits = 0u64;
        for _ in 0..n {
            let u = [rng.random_range(lo..hi), rng.random_range(lo..hi)];
            if square.distance_to_boundary(&u) <= r {
                hits += 1;
            }
        }
        let estimate = hits as f64 / n as f64 * area;
        assert!(
            (estimate - exact).abs() < 4e-3,
            "MC {estimate} vs exact {exact}"
        );
        assert!(lower <= estimate && estimate <= upper);

        // vanishing tube
        let (lo_small, hi_small) = square.boundary_tube_bounds(1e-9);
        assert!(lo_small < 1e-8 && hi_small < 1e-8);
    }

    #[test]
    fn grid_on_exactly_tiled_squares() {
        // square of side 10, k = 4, L = 1: t = 5 and the four cubes tile it
        let square = PConvexSet::single(ConvexBody::cube(vec![0.0, 0.0], 10.0).unwrap());
        let grid = build_grid(&square, 4, 1).unwrap();
        assert_eq!(grid.t, 5.0);
        assert_eq!(grid.p_count(), 4);
        assert_eq!(grid.q_count(), 4);

        // perfectly tiled cube with k dividing: P = Q and sandwich is equality
        let cube = PConvexSet::single(ConvexBody::cube(vec![0.0, 0.0], 8.0).unwrap());
        let grid = build_grid(&cube, 16, 1).unwrap();
        assert_eq!(grid.t, 2.0);
        assert_eq!(grid.p_count(), 16);
        assert_eq!(grid.q_count(), 16);
    }

    /// Brute-force pixel rasterization: classify each cube by a dense grid
    /// of sample points.
    fn rasterize_counts(set: &PConvexSet, t: f64, span: i64, res: f64) -> (usize, usize) {
        let n = (t / res).ceil() as usize;
        let mut p = 0;
        let mut q = 0;
        for zx in -span..span {
            for zy in -span..span {
                let lo = [zx as f64 * t, zy as f64 * t];
                let mut any = false;
                let mut all = true;
                for i in 0..n {
                    for j in 0..n {
                        let u = [
                            lo[0] + (i as f64 + 0.5) * t / n as f64,
                            lo[1] + (j as f64 + 0.5) * t / n as f64,
                        ];
                        if set.contains(&u) {
                            any = true;
                        } else {
                            all = false;
                        }
                    }
                }
                if any {
                    q += 1;
                    if all {
                        p += 1;
                    }
                }
            }
        }
        (p, q)
    }

    #[test]
    fn grid_counts_match_rasterization_oracle_for_disk() {
        let disk = PConvexSet::single(ConvexBody::ball(vec![0.0, 0.0], 10.0).unwrap());
        let grid = build_grid(&disk, 25, 1).unwrap();
        // t = floor(sqrt(π·100/25)) = floor(3.545) = 3
        assert_eq!(grid.t, 3.0);
        let (p_oracle, q_oracle) = rasterize_counts(&disk, grid.t, 6, 0.01);
        assert_eq!(grid.p_count(), p_oracle);
        assert_eq!(grid.q_count(), q_oracle);
        assert!(grid.p_count() < 25 && 25 < grid.q_count());
    }

    #[test]
    fn sandwich_containment_on_random_points() {
        let set = PConvexSet::new(vec![
            ConvexBody::cube(vec![-6.0, -6.0], 12.0).unwrap(),
            ConvexBody::ball(vec![6.0, 0.0], 5.0).unwrap(),
        ])
        .unwrap();
        let grid = build_grid(&set, 9, 1).unwrap();
        let (lo, hi) = set.bbox();
        let mut rng = substream(99, 0, Stream::Scratch);
        for _ in 0..100_000 {
            let u: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(&a, &b)| rng.random_range(a - 1.0..b + 1.0))
                .collect();
            if grid.covered(&u, true) {
                assert!(
                    set.contains(&u),
                    "inner cover leaked outside the set at {u:?}"
                );
            }
            if set.contains(&u) {
                assert!(
                    grid.covered(&u, false),
                    "outer cover missed a set point at {u:?}"
                );
            }
        }
    }

    #[test]
    fn count_limit_exact_on_tiled_squares() {
        // unit square scaled by multiples of 10 with k = 100: t divides r_n
        // exactly, so both ratios are exactly 1 along the whole ladder.
        let square = PConvexSet::single(ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap());
        let scales: Vec<f64> = (1..=20).map(|i| 10.0 * i as f64).collect();
        let rows = count_limit_experiment(&square, &scales, &[100], 1, 0.5, 0.05).unwrap();
        assert_eq!(rows.len(), 1);
        assert_relative_eq!(rows[0].p_ratio_liminf, 1.0);
        assert_relative_eq!(rows[0].q_ratio_limsup, 1.0);
        assert_relative_eq!(rows[0].p_ratio_last, 1.0);
        assert_relative_eq!(rows[0].q_ratio_last, 1.0);
    }

    #[test]
    fn single_cube_grid_brackets() {
        // k = L = 1: p <= 1 <= q for any set with volume >= 1
        let disk = PConvexSet::single(ConvexBody::ball(vec![0.0, 0.0], 3.0).unwrap());
        let grid = build_grid(&disk, 1, 1).unwrap();
        assert!(grid.p_count() <= 1);
        assert!(grid.q_count() >= 1);
    }

    #[test]
    fn connectivity_is_enforced() {
        let disjoint = PConvexSet::new(vec![
            ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexBody::cube(vec![5.0, 5.0], 1.0).unwrap(),
        ]);
        assert!(disjoint.is_err());

        // chain connected through the middle body
        let chain = PConvexSet::new(vec![
            ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexBody::ball(vec![1.2, 0.5], 0.4).unwrap(),
            ConvexBody::cube(vec![1.4, 0.0], 1.0).unwrap(),
        ]);
        assert!(chain.is_ok());
    }

    #[test]
    fn union_volume_matches_inclusion_exclusion_for_boxes() {
        // two overlapping unit squares: |A ∪ B| = 2 - overlap
        let set = PConvexSet::new(vec![
            ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexBody::cube(vec![0.5, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let (vol, err) = set.volume(1e-4).unwrap();
        assert!(err <= 1e-4 + 1e-12);
        assert_relative_eq!(vol, 1.5, epsilon = 2e-4);
    }

    #[test]
    fn dilated_volume_single_body_is_steiner() {
        let square = PConvexSet::single(ConvexBody::cube(vec![0.0, 0.0], 2.0).unwrap());
        let (vol, err) = square.dilated_volume(0.5, 1e-9).unwrap();
        assert_eq!(err, 0.0);
        assert_relative_eq!(vol, square.bodies[0].steiner_volume(0.5));
    }

    #[test]
    fn dilated_volume_union_approximates_truth() {
        // two touching unit squares form a 2x1 rectangle: dilation volume is
        // the rectangle's Steiner polynomial
        let set = PConvexSet::new(vec![
            ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap(),
            ConvexBody::cube(vec![1.0, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let r = 0.3;
        let exact = ConvexBody::cuboid(vec![0.0, 0.0], vec![2.0, 1.0])
            .unwrap()
            .steiner_volume(r);
        let (vol, err) = set.dilated_volume(r, 1e-4).unwrap();
        assert!(
            (vol - exact).abs() <= err + 1e-3,
            "vol {vol} exact {exact} err {err}"
        );
    }

    #[test]
    fn relative_intrinsic_volumes_constant_under_scaling() {
        let set = PConvexSet::new(vec![
            ConvexBody::cube(vec![-1.0, -1.0], 2.0).unwrap(),
            ConvexBody::ball(vec![1.5, 0.0], 1.0).unwrap(),
        ])
        .unwrap();
        let base = set.relative_intrinsic_volume(1).unwrap();
        for r in [2.0, 5.0, 17.0] {
            let scaled = set.scale(r).relative_intrinsic_volume(1).unwrap();
            assert_relative_eq!(scaled, base, max_relative = 1e-2);
        }
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let small = PConvexSet::single(ConvexBody::cube(vec![0.0, 0.0], 1.0).unwrap());
        assert!(matches!(
            build_grid(&small, 10, 1),
            Err(Error::DegenerateGrid(_))
        ));
    }
}
