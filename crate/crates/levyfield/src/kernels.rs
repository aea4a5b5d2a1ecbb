//! Integration kernels `f` with radial decreasing envelopes, truncated
//! variants, suprema over index sets, and the tail constant
//! `∫_{R^d} sup_{v∈B} f^α(v-u) du`.
//!
//! Both built-in families are exactly radial, `f(u) = g(|u|)` with `g`
//! decreasing, so the supremum over a set reduces to `g(dist(u, B))` and
//! radial integrals have closed forms. For a single convex body the tail
//! constant is then exact via the tube formula: the level sets of
//! `u ↦ dist(u, C)` are the dilation boundaries, whose surface measure is
//! the derivative of the Steiner polynomial.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

/// Γ(s) with the half-integer values that actually occur (s = (m+1)/2 for
/// `m < d ≤ 3`) pinned to their exact closed forms.
fn full_gamma(s: f64) -> f64 {
    let sqrt_pi = std::f64::consts::PI.sqrt();
    if s == 0.5 {
        sqrt_pi
    } else if s == 1.0 || s == 2.0 {
        1.0
    } else if s == 1.5 {
        0.5 * sqrt_pi
    } else {
        gamma(s)
    }
}

use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, ConvexBody, PConvexSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `f(u) = exp(-σ|u|²)`; Hölder continuous with index 1.
    Gaussian { sigma: f64 },
    /// `f(u) = (1+|u|)^{-(d+ε)/γ}`; integrable γ-th power by construction.
    Power { epsilon: f64, gamma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub dimension: usize,
    /// Optional truncation radius: evaluation carries the indicator `|·| < t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<f64>,
}

impl Kernel {
    pub fn gaussian(sigma: f64, dimension: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::domain("gaussian kernel needs sigma > 0"));
        }
        if dimension == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        Ok(Kernel {
            family: KernelFamily::Gaussian { sigma },
            dimension,
            truncation: None,
        })
    }

    pub fn power(epsilon: f64, gamma: f64, dimension: usize) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::domain("power kernel needs epsilon > 0"));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain("power kernel needs gamma in (0,1]"));
        }
        if dimension == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        Ok(Kernel {
            family: KernelFamily::Power { epsilon, gamma },
            dimension,
            truncation: None,
        })
    }

    pub fn truncated(mut self, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::domain("truncation radius must be positive"));
        }
        self.truncation = Some(t);
        Ok(self)
    }

    /// The radial decreasing envelope `g(r)`, without truncation.
    pub fn envelope(&self, r: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian { sigma } => (-sigma * r * r).exp(),
            KernelFamily::Power { epsilon, gamma } => {
                (1.0 + r).powf(-(self.dimension as f64 + epsilon) / gamma)
            }
        }
    }

    /// Kernel value at radius `r`, including the truncation indicator.
    pub fn eval_radial(&self, r: f64) -> f64 {
        match self.truncation {
            Some(t) if r >= t => 0.0,
            _ => self.envelope(r),
        }
    }

    /// Kernel value `f(u)`.
    pub fn eval(&self, u: &[f64]) -> f64 {
        debug_assert_eq!(u.len(), self.dimension);
        let r = u.iter().map(|&x| x * x).sum::<f64>().sqrt();
        self.eval_radial(r)
    }

    /// `sup_{v∈B} f(v-u) = g(dist(u, B))` for radial decreasing kernels;
    /// zero when the set is farther than the truncation radius.
    pub fn sup_over_set(&self, set: &PConvexSet, u: &[f64]) -> f64 {
        self.eval_radial(set.distance(u))
    }

    /// Characteristic length used for default grid steps: `1/√σ` for the
    /// Gaussian family, the unit shoulder for the power family.
    pub fn length_scale(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian { sigma } => 1.0 / sigma.sqrt(),
            KernelFamily::Power { .. } => 1.0,
        }
    }

    /// Hölder constant and index of `f`, when continuous (untruncated):
    /// the Gaussian family has `sup|∇f| = √(2σ/e)`, the power family is
    /// Lipschitz with constant `(d+ε)/γ`. Truncation destroys continuity.
    pub fn holder(&self) -> Option<(f64, f64)> {
        if self.truncation.is_some() {
            return None;
        }
        Some(match self.family {
            KernelFamily::Gaussian { sigma } => ((2.0 * sigma / std::f64::consts::E).sqrt(), 1.0),
            KernelFamily::Power { epsilon, gamma } => {
                ((self.dimension as f64 + epsilon) / gamma, 1.0)
            }
        })
    }

    /// Inverse envelope: smallest radius beyond which `g(r) ≤ threshold`.
    /// Clamped to the truncation radius when present.
    pub fn radius_for_contribution(&self, threshold: f64) -> f64 {
        assert!(threshold > 0.0);
        let r = if threshold >= 1.0 {
            0.0
        } else {
            match self.family {
                KernelFamily::Gaussian { sigma } => ((1.0 / threshold).ln() / sigma).sqrt(),
                KernelFamily::Power { epsilon, gamma } => {
                    threshold.powf(-gamma / (self.dimension as f64 + epsilon)) - 1.0
                }
            }
        };
        match self.truncation {
            Some(t) => r.min(t),
            None => r,
        }
    }

    /// `∫_a^b g(s)^exponent · s^m ds` with `b` the truncation radius or ∞.
    ///
    /// Gaussian reduces to upper incomplete gamma; power to a binomial sum
    /// of power integrals, which diverges unless `exponent·(d+ε)/γ > m+1`.
    pub fn radial_envelope_moment(&self, exponent: f64, m: usize, from: f64) -> Result<f64> {
        if !(exponent > 0.0) {
            return Err(Error::domain("exponent must be positive"));
        }
        let from = from.max(0.0);
        let upper = self.truncation;
        if let Some(t) = upper {
            if from >= t {
                return Ok(0.0);
            }
        }
        match self.family {
            KernelFamily::Gaussian { sigma } => {
                let c = exponent * sigma;
                let s = (m as f64 + 1.0) / 2.0;
                // Γ(s, c·x²), with the x = 0 boundary handled explicitly
                // (statrs rejects x = 0)
                let tail_at = |x: f64| {
                    if x <= 0.0 {
                        full_gamma(s)
                    } else {
                        full_gamma(s) * gamma_ur(s, c * x * x)
                    }
                };
                let hi = match upper {
                    Some(t) => tail_at(t),
                    None => 0.0,
                };
                Ok(0.5 * c.powf(-s) * (tail_at(from) - hi))
            }
            KernelFamily::Power { epsilon, gamma: g } => {
                let q = exponent * (self.dimension as f64 + epsilon) / g;
                if upper.is_none() && q <= m as f64 + 1.0 {
                    return Err(Error::Divergent(format!(
                        "∫ g^{exponent}·s^{m} ds diverges: power tail order {q} <= {}",
                        m + 1
                    )));
                }
                // ∫ (1+s)^{-q} s^m ds = Σ_i C(m,i)(-1)^{m-i} ∫ u^{i-q} du, u = 1+s
                let lo_u = 1.0 + from;
                let hi_u = upper.map(|t| 1.0 + t);
                let mut total = 0.0;
                let mut binom = 1.0;
                for i in 0..=m {
                    if i > 0 {
                        binom = binom * (m - i + 1) as f64 / i as f64;
                    }
                    let sign = if (m - i) % 2 == 0 { 1.0 } else { -1.0 };
                    let p = i as f64 - q;
                    let primitive = |u: f64| {
                        if (p + 1.0).abs() < 1e-12 {
                            u.ln()
                        } else {
                            u.powf(p + 1.0) / (p + 1.0)
                        }
                    };
                    let hi_val = match hi_u {
                        Some(u) => primitive(u),
                        None => 0.0, // p+1 < 0 guaranteed by the divergence guard
                    };
                    total += binom * sign * (hi_val - primitive(lo_u));
                }
                Ok(total)
            }
        }
    }

    /// Exact tail bound `∫_{dist(u,C) > R} g^exponent(dist(u,C)) du` for a
    /// single convex body, via the differentiated Steiner polynomial.
    fn body_far_field(&self, body: &ConvexBody, exponent: f64, from: f64) -> Result<f64> {
        let d = self.dimension;
        let v = body.intrinsic_volumes();
        let mut total = 0.0;
        for j in 0..d {
            let coeff = (d - j) as f64 * unit_ball_volume(d - j) * v[j];
            if coeff > 0.0 {
                total += coeff * self.radial_envelope_moment(exponent, d - j - 1, from)?;
            }
        }
        Ok(total)
    }

    /// Upper bound on `∫_{dist(u,B) > R} sup_{v∈B} (f^{(t)})^exponent du`
    /// for a p-convex set: the sum of the per-body tube tails.
    pub fn far_field_bound(&self, set: &PConvexSet, exponent: f64, from: f64) -> Result<f64> {
        let mut total = 0.0;
        for body in &set.bodies {
            total += self.body_far_field(body, exponent, from)?;
        }
        Ok(total)
    }

    /// Exact `∫ sup_{v∈C} (f^{(t)})^α (v-u) du` for a single convex body:
    /// `|C| + Σ_{j<d} (d-j)·ω_{d-j}·V_j(C)·∫_0^t g^α(s)·s^{d-j-1} ds`.
    pub fn alpha_functional_exact(&self, body: &ConvexBody, alpha: f64) -> Result<f64> {
        if body.dim() != self.dimension {
            return Err(Error::domain("body dimension must match the kernel"));
        }
        Ok(body.volume() + self.body_far_field(body, alpha, 0.0)?)
    }

    /// Numerical tail constant `∫_{R^d} sup_{v∈B} f^α(v-u) du` for any
    /// p-convex (or degenerate) index set.
    ///
    /// The plane splits into a near box around `B ⊕ B(R)` handled by
    /// adaptive tensor Gauss-Legendre quadrature, and a far field whose
    /// contribution is bounded analytically by at most `tol/2` through the
    /// per-body tube integrals.
    pub fn alpha_functional(
        &self,
        set: &PConvexSet,
        alpha: f64,
        tol: f64,
    ) -> Result<AlphaFunctional> {
        if !(alpha > 0.0 && tol > 0.0) {
            return Err(Error::domain("alpha and tol must be positive"));
        }
        if set.dim() != self.dimension {
            return Err(Error::domain("set dimension must match the kernel"));
        }
        // diverges iff the per-body tail moment diverges; probe it once
        let far_at = |r: f64| self.far_field_bound(set, alpha, r);
        // choose R with far field <= tol/2 (monotone decreasing in R)
        let budget = tol / 2.0;
        let mut radius = self.length_scale();
        let mut far = far_at(radius)?;
        let mut guard = 0;
        while far > budget {
            radius *= 2.0;
            far = far_at(radius)?;
            guard += 1;
            if guard > 200 {
                return Err(Error::Divergent(
                    "far-field bound does not reach the budget".into(),
                ));
            }
        }
        // tighten R back down by bisection so the near box stays small
        let mut lo = 0.0;
        let mut hi = radius;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if far_at(mid)? <= budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let radius = hi;
        let far_bound = far_at(radius)?;

        let (mut lo, mut hi) = set.bbox();
        for i in 0..lo.len() {
            lo[i] -= radius;
            hi[i] += radius;
        }
        let integrand = |u: &[f64]| self.sup_over_set(set, u).powf(alpha);
        let quad = adaptive_quadrature(&integrand, &lo, &hi, budget, 2_000_000);
        Ok(AlphaFunctional {
            value: quad.value,
            error_bound: quad.error + far_bound,
            converged: quad.converged,
        })
    }

    /// Radius `R` with `∫_{|u|>R} g^exponent(|u|) du ≤ budget`, from the
    /// radial closed form. Returns 0 when no truncation is needed.
    pub fn tail_radius(&self, exponent: f64, budget: f64) -> Result<f64> {
        if !(budget > 0.0) {
            return Err(Error::domain("budget must be positive"));
        }
        let d = self.dimension;
        let shell = d as f64 * unit_ball_volume(d);
        let tail = |r: f64| -> Result<f64> {
            Ok(shell * self.radial_envelope_moment(exponent, d - 1, r)?)
        };
        if tail(0.0)? <= budget {
            return Ok(0.0);
        }
        let mut hi = self.length_scale();
        let mut guard = 0;
        while tail(hi)? > budget {
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(Error::Divergent(
                    "tail radius search did not converge".into(),
                ));
            }
        }
        let mut lo = 0.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if tail(mid)? <= budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }
}

/// Result of the numerical tail-constant integration.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AlphaFunctional {
    pub value: f64,
    pub error_bound: f64,
    pub converged: bool,
}

struct QuadResult {
    value: f64,
    error: f64,
    converged: bool,
}

// Gauss-Legendre nodes/weights on [-1,1].
const GL2_X: [f64; 2] = [-0.5773502691896257, 0.5773502691896257];
const GL4_X: [f64; 4] = [
    -0.8611363115940526,
    -0.3399810435848563,
    0.3399810435848563,
    0.8611363115940526,
];
const GL4_W: [f64; 4] = [
    0.3478548451374538,
    0.6521451548625461,
    0.6521451548625461,
    0.3478548451374538,
];

fn tensor_gl<F: Fn(&[f64]) -> f64>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    xs: &[f64],
    ws: Option<&[f64]>,
) -> f64 {
    let d = lo.len();
    let n = xs.len();
    let mut point = vec![0.0; d];
    let mut idx = vec![0usize; d];
    let mut total = 0.0;
    let measure: f64 = lo.iter().zip(hi).map(|(&a, &b)| (b - a) / 2.0).product();
    loop {
        let mut weight = 1.0;
        for i in 0..d {
            point[i] = 0.5 * (lo[i] + hi[i]) + 0.5 * (hi[i] - lo[i]) * xs[idx[i]];
            if let Some(w) = ws {
                weight *= w[idx[i]];
            }
        }
        total += weight * f(&point);
        let mut axis = 0;
        loop {
            if axis == d {
                return total
                    * measure
                    * if ws.is_none() {
                        (2.0 / n as f64).powi(d as i32)
                    } else {
                        1.0
                    };
            }
            idx[axis] += 1;
            if idx[axis] < n {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

/// Globally adaptive tensor quadrature: repeatedly bisect the cell with the
/// largest embedded error estimate (GL4 vs GL2) until the total estimate is
/// below `tol` or the evaluation budget runs out.
fn adaptive_quadrature<F: Fn(&[f64]) -> f64>(
    f: &F,
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_cells: usize,
) -> QuadResult {
    use std::cmp::Ordering;
    use std::collections::BinaryHeap;

    struct Cell {
        err: f64,
        value: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
    }
    impl PartialEq for Cell {
        fn eq(&self, other: &Self) -> bool {
            self.err == other.err
        }
    }
    impl Eq for Cell {}
    impl PartialOrd for Cell {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Cell {
        fn cmp(&self, other: &Self) -> Ordering {
            self.err.total_cmp(&other.err)
        }
    }

    let evaluate = |lo: &[f64], hi: &[f64]| -> Cell {
        let fine = tensor_gl(f, lo, hi, &GL4_X, Some(&GL4_W));
        let coarse = tensor_gl(f, lo, hi, &GL2_X, None);
        Cell {
            err: (fine - coarse).abs(),
            value: fine,
            lo: lo.to_vec(),
            hi: hi.to_vec(),
        }
    };

    let mut heap = BinaryHeap::new();
    heap.push(evaluate(lo, hi));
    let mut cells = 1usize;
    loop {
        let total_err: f64 = heap.iter().map(|c| c.err).sum();
        if total_err <= tol {
            let value = heap.iter().map(|c| c.value).sum();
            return QuadResult {
                value,
                error: total_err,
                converged: true,
            };
        }
        if cells >= max_cells {
            let value = heap.iter().map(|c| c.value).sum();
            return QuadResult {
                value,
                error: total_err,
                converged: false,
            };
        }
        let worst = heap.pop().expect("heap is non-empty");
        let (axis, _) = worst
            .lo
            .iter()
            .zip(&worst.hi)
            .map(|(&a, &b)| b - a)
            .enumerate()
            .fold((0, 0.0), |acc, (i, w)| if w > acc.1 { (i, w) } else { acc });
        let mid = 0.5 * (worst.lo[axis] + worst.hi[axis]);
        let mut left_hi = worst.hi.clone();
        left_hi[axis] = mid;
        let mut right_lo = worst.lo.clone();
        right_lo[axis] = mid;
        heap.push(evaluate(&worst.lo, &left_hi));
        heap.push(evaluate(&right_lo, &worst.hi));
        cells += 1;
    }
}
