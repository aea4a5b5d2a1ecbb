//! Regularly varying jump measures and the regular-variation toolkit.
//!
//! A [`TailModel`] is a Lévy jump measure `ρ` on `(0,∞)` (optionally with a
//! finite negative part below `-1`) whose right tail `ρ((x,∞))` is regularly
//! varying of index `-α`. Three analytic families are built in, all with
//! closed-form tail masses and quantiles, so that downstream Monte Carlo
//! checks can separate sampling error from model error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Analytic form of the jump measure restricted to `(0,∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpFamily {
    /// `ρ((x,∞)) = scale·x^{-α}` for `x ≥ 1`, constant `scale` below 1.
    /// No mass in `(0,1]`, so the positive part is a pure compound Poisson.
    Pareto,
    /// Density `scale·y^{-(1+α)}` on all of `(0,∞)` (the α-stable positive
    /// part with `p₊ = scale`); `ρ((x,∞)) = (scale/α)·x^{-α}`.
    Stable,
    /// `ρ((x,∞)) = scale·(1+x)^{-α}`: regularly varying but not a pure
    /// power, exercising the asymptotic-only code paths.
    ShiftedPareto,
}

/// Finite negative jump mass on `(-∞,-1)`.
///
/// The magnitudes below `-1` are Pareto of index `pareto_index`, so the
/// γ-moment `∫_{y<-1}|y|^γ ρ(dy) = mass·idx/(idx-γ)` is finite exactly when
/// `γ < pareto_index`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NegativePart {
    pub mass: f64,
    pub pareto_index: f64,
}

/// A one-sided (optionally two-sided) Lévy jump measure with regularly
/// varying right tail of index `α > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub family: JumpFamily,
    pub alpha: f64,
    pub scale: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_part: Option<NegativePart>,
}

impl TailModel {
    /// `scale = 0` is allowed and denotes the degenerate zero measure
    /// (used by the zero-field CLI path).
    pub fn new(family: JumpFamily, alpha: f64, scale: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(Error::domain(format!(
                "scale must be non-negative, got {scale}"
            )));
        }
        Ok(TailModel {
            family,
            alpha,
            scale,
            negative_part: None,
        })
    }

    pub fn pareto(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(JumpFamily::Pareto, alpha, scale)
    }

    pub fn stable(alpha: f64, p_plus: f64) -> Result<Self> {
        Self::new(JumpFamily::Stable, alpha, p_plus)
    }

    pub fn shifted_pareto(alpha: f64, scale: f64) -> Result<Self> {
        Self::new(JumpFamily::ShiftedPareto, alpha, scale)
    }

    pub fn with_negative_part(mut self, mass: f64, pareto_index: f64) -> Result<Self> {
        if !(mass > 0.0) || !(pareto_index > 0.0) {
            return Err(Error::domain(
                "negative part needs mass > 0 and pareto_index > 0",
            ));
        }
        self.negative_part = Some(NegativePart { mass, pareto_index });
        Ok(self)
    }

    /// Right tail mass `ρ((x,∞))` in closed form.
    pub fn tail_mass(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::domain(format!("tail_mass needs x > 0, got {x}")));
        }
        Ok(match self.family {
            JumpFamily::Pareto => {
                if x >= 1.0 {
                    self.scale * x.powf(-self.alpha)
                } else {
                    self.scale
                }
            }
            JumpFamily::Stable => self.scale / self.alpha * x.powf(-self.alpha),
            JumpFamily::ShiftedPareto => self.scale * (1.0 + x).powf(-self.alpha),
        })
    }

    /// `ρ((1,∞))`, the rate of jumps above level one per unit volume.
    pub fn rho_one(&self) -> f64 {
        self.tail_mass(1.0).expect("x = 1 is in the domain")
    }

    /// Left-continuous generalized inverse of the tail,
    /// `inf{y > 0 : ρ((y,∞)) < p}`.
    ///
    /// On the Pareto plateau `p = scale` this returns 1, which normalizes
    /// the norming constants to `a(1) = 1`; everywhere the tail is
    /// continuous and strictly decreasing it agrees with `inf{tail ≤ p}`.
    pub fn tail_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0) {
            return Err(Error::domain(format!("tail_quantile needs p > 0, got {p}")));
        }
        if self.scale == 0.0 {
            return Ok(0.0);
        }
        Ok(match self.family {
            JumpFamily::Pareto => {
                if p < self.scale {
                    (self.scale / p).powf(1.0 / self.alpha)
                } else if p > self.scale {
                    0.0
                } else {
                    1.0
                }
            }
            JumpFamily::Stable => (self.scale / (self.alpha * p)).powf(1.0 / self.alpha),
            JumpFamily::ShiftedPareto => {
                if p < self.scale {
                    (self.scale / p).powf(1.0 / self.alpha) - 1.0
                } else {
                    0.0
                }
            }
        })
    }

    /// Norming constant `a` relative to `volume`, i.e. the solution of
    /// `volume·ρ((a,∞)) = ρ((1,∞))`, so that
    /// `volume·ρ((a·x,∞)) → x^{-α}·ρ((1,∞))` as `volume → ∞`.
    pub fn norming_constant(&self, volume: f64) -> Result<f64> {
        if !(volume >= 1.0) {
            return Err(Error::domain(format!(
                "norming_constant needs volume >= 1, got {volume}"
            )));
        }
        if self.scale == 0.0 {
            return Err(Error::UnsupportedModel(
                "zero-mass measure has no norming constants".into(),
            ));
        }
        self.tail_quantile(self.rho_one() / volume)
    }

    /// The whole norming sequence as a reusable object.
    pub fn norming_sequence(&self) -> NormingSequence {
        NormingSequence {
            model: self.clone(),
            rho_one: self.rho_one(),
        }
    }

    /// `∫_{(0,δ]} y ρ(dy)` for `δ ∈ (0,1]`, the mean mass of small jumps.
    ///
    /// Finite-variation guard: errors for the stable family with `α ≥ 1`.
    pub fn small_jump_mean(&self, delta: f64) -> Result<f64> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain(format!(
                "delta must lie in (0,1], got {delta}"
            )));
        }
        match self.family {
            JumpFamily::Pareto => Ok(0.0),
            JumpFamily::Stable => {
                if self.alpha >= 1.0 {
                    return Err(Error::UnsupportedModel(format!(
                        "stable family with alpha = {} has infinite variation",
                        self.alpha
                    )));
                }
                Ok(self.scale * delta.powf(1.0 - self.alpha) / (1.0 - self.alpha))
            }
            JumpFamily::ShiftedPareto => {
                let a = self.alpha;
                let u = 1.0 + delta;
                let val = if (a - 1.0).abs() < 1e-12 {
                    u.ln() + (u.powf(-a) - 1.0) / a
                } else {
                    (u.powf(1.0 - a) - 1.0) / (1.0 - a) + (u.powf(-a) - 1.0) / a
                };
                Ok(self.scale * a * val)
            }
        }
    }

    /// Whether the basis restricted to this measure has finite variation
    /// (`∫_{|y|≤1} |y| ρ(dy) < ∞` and no Gaussian part).
    pub fn finite_variation(&self) -> bool {
        match self.family {
            JumpFamily::Pareto => true,
            JumpFamily::Stable => self.alpha < 1.0,
            JumpFamily::ShiftedPareto => true,
        }
    }

    /// Upper bound on `∫_{|y|>1} |y|^γ ρ(dy)` (exact for the pure-power
    /// families). Finite exactly when `γ < α` and, if a negative part is
    /// present, `γ` below its Pareto index.
    pub fn gamma_moment_bound(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::domain("gamma must be positive"));
        }
        if gamma >= self.alpha {
            return Err(Error::Divergent(format!(
                "gamma = {gamma} >= alpha = {}: right γ-moment diverges",
                self.alpha
            )));
        }
        let positive = match self.family {
            JumpFamily::Pareto => self.scale * self.alpha / (self.alpha - gamma),
            JumpFamily::Stable => self.scale / (self.alpha - gamma),
            JumpFamily::ShiftedPareto => {
                self.scale * self.alpha * 2f64.powf(gamma - self.alpha) / (self.alpha - gamma)
            }
        };
        let negative = match &self.negative_part {
            None => 0.0,
            Some(np) => {
                if gamma >= np.pareto_index {
                    return Err(Error::Divergent(format!(
                        "gamma = {gamma} >= negative-part index = {}: left γ-moment diverges",
                        np.pareto_index
                    )));
                }
                np.mass * np.pareto_index / (np.pareto_index - gamma)
            }
        };
        Ok(positive + negative)
    }

    /// Tail of the jump distribution above level one, `ρ((x∨1,∞))/ρ((1,∞))`.
    /// A proper distribution tail in `(0,1]`, suitable for
    /// [`karamata_envelope_check`].
    pub fn normalized_tail(&self, x: f64) -> f64 {
        let x = x.max(1.0);
        self.tail_mass(x).expect("x >= 1") / self.rho_one()
    }
}

/// Norming constants `a(volume)` of a fixed model, with `ρ((1,∞))` cached.
#[derive(Debug, Clone)]
pub struct NormingSequence {
    model: TailModel,
    rho_one: f64,
}

impl NormingSequence {
    pub fn a(&self, volume: f64) -> Result<f64> {
        self.model.norming_constant(volume)
    }

    pub fn rho_one(&self) -> f64 {
        self.rho_one
    }

    /// `|volume·ρ((a·x,∞)) - x^{-α}·ρ((1,∞))|`, the defect of the norming
    /// limit at finite volume. Zero (up to rounding) for pure Pareto tails
    /// whenever `a·x ≥ 1`.
    pub fn limit_defect(&self, volume: f64, x: f64) -> Result<f64> {
        let a = self.a(volume)?;
        let lhs = volume * self.model.tail_mass(a * x)?;
        let rhs = x.powf(-self.model.alpha) * self.rho_one;
        Ok((lhs - rhs).abs())
    }
}

/// Generic monotone bisection for `inf{y > 0 : tail(y) < p}`, the fallback
/// quantile for tails without closed-form inverses. Relative tolerance is
/// fixed at 1e-12 crate-wide because the series sampler consumes quantiles
/// millions of times.
pub fn quantile_by_bisection<F: Fn(f64) -> f64>(tail: F, p: f64) -> Result<f64> {
    if !(p > 0.0) {
        return Err(Error::domain("bisection quantile needs p > 0"));
    }
    let rel_tol = 1e-12;
    let mut hi = 1.0;
    let mut doublings = 0;
    while tail(hi) >= p {
        hi *= 2.0;
        doublings += 1;
        if doublings > 2000 {
            return Err(Error::domain(
                "tail does not drop below p within search range",
            ));
        }
    }
    let mut lo = 0.0;
    // 200 halvings reach relative tolerance 1e-12 from any bracket.
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) < p {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= rel_tol * hi {
            break;
        }
    }
    Ok(hi)
}

/// Certificate returned by [`karamata_envelope_check`].
#[derive(Debug, Clone, Serialize)]
pub struct KaramataCertificate {
    pub c: f64,
    pub k: f64,
    pub x0: f64,
    pub holds: bool,
    pub budget: f64,
    /// Grid point realizing the largest required constant.
    pub worst_x: f64,
    pub worst_y: f64,
}

/// Grid-scan certificate for the regular-variation envelope
/// `tail(x-y) ≤ tail(x)·C·(K + y₊^β)` for all grid `x ≥ x0`, `y`.
///
/// For `β` above the regular-variation index such constants exist; the scan
/// finds the smallest `C` for `K = 1` and reports whether it stays within
/// `budget`. For `β` below the index the required `C` grows along the grid
/// and the check fails on a long enough grid. This is a property-test
/// harness, not a hot-path routine.
pub fn karamata_envelope_check<F: Fn(f64) -> f64>(
    tail: F,
    beta: f64,
    x_grid: &[f64],
    y_grid: &[f64],
    budget: f64,
) -> Result<KaramataCertificate> {
    if !(beta > 0.0) {
        return Err(Error::domain("beta must be positive"));
    }
    if x_grid.is_empty() || y_grid.is_empty() {
        return Err(Error::domain("grids must be non-empty"));
    }
    if x_grid.iter().chain(y_grid.iter()).any(|v| !v.is_finite()) {
        return Err(Error::domain("grids must be finite"));
    }
    let x0 = x_grid
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .max(1.0);
    let k = 1.0;
    let mut c: f64 = 0.0;
    let mut worst = (x0, 0.0);
    for &x in x_grid.iter().filter(|&&x| x >= x0) {
        let tx = tail(x);
        if !(tx > 0.0) {
            return Err(Error::domain(format!("tail({x}) must be positive")));
        }
        for &y in y_grid {
            let ratio = tail(x - y) / tx;
            let required = ratio / (k + y.max(0.0).powf(beta));
            if required > c {
                c = required;
                worst = (x, y);
            }
        }
    }
    Ok(KaramataCertificate {
        c,
        k,
        x0,
        holds: c.is_finite() && c <= budget,
        budget,
        worst_x: worst.0,
        worst_y: worst.1,
    })
}

/// Slow sequence `d_n = a_n^{1-ε/(2β)}` with `ε = β - α`, which tends to
/// infinity while `d_n = o(a_n)`, and outruns the tail of any distribution
/// with finite β-moment relative to `ρ((a_n,∞))`.
pub fn slow_sequence(model: &TailModel, beta: f64, volumes: &[f64]) -> Result<Vec<f64>> {
    if beta <= model.alpha {
        return Err(Error::domain(format!(
            "slow_sequence needs beta > alpha, got beta = {beta}, alpha = {}",
            model.alpha
        )));
    }
    let epsilon = beta - model.alpha;
    let exponent = 1.0 - epsilon / (2.0 * beta);
    volumes
        .iter()
        .map(|&v| model.norming_constant(v).map(|a| a.powf(exponent)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geometric_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
        let n = ((hi / lo).log10() * per_decade as f64).ceil() as usize;
        (0..=n)
            .map(|i| lo * 10f64.powf(i as f64 / per_decade as f64))
            .collect()
    }

    #[test]
    fn tail_mass_closed_forms() {
        let pareto = TailModel::pareto(1.0, 1.0).unwrap();
        assert_relative_eq!(pareto.tail_mass(2.0).unwrap(), 0.5);
        assert_relative_eq!(pareto.tail_mass(1.0).unwrap(), 1.0);
        assert_relative_eq!(pareto.tail_mass(0.5).unwrap(), 1.0);

        // integral of y^{-3/2} over (4,∞) = 2·4^{-1/2} = 1
        let stable = TailModel::stable(0.5, 1.0).unwrap();
        assert_relative_eq!(stable.tail_mass(4.0).unwrap(), 1.0);

        let shifted = TailModel::shifted_pareto(2.0, 3.0).unwrap();
        assert_relative_eq!(shifted.tail_mass(2.0).unwrap(), 3.0 / 9.0);

        assert!(pareto.tail_mass(0.0).is_err());
        assert!(pareto.tail_mass(-1.0).is_err());
    }

    #[test]
    fn tail_quantile_closed_forms() {
        let pareto1 = TailModel::pareto(1.0, 1.0).unwrap();
        assert_relative_eq!(pareto1.tail_quantile(1.0).unwrap(), 1.0);

        let pareto2 = TailModel::pareto(2.0, 1.0).unwrap();
        assert_relative_eq!(pareto2.tail_quantile(0.01).unwrap(), 10.0);

        // closed-form inversion of 2·y^{-1/2} at p = 1e6
        let stable = TailModel::stable(0.5, 1.0).unwrap();
        assert_relative_eq!(
            stable.tail_quantile(1e6).unwrap(),
            4e-12,
            max_relative = 1e-12
        );

        // past the full mass the infimum collapses to the 0 boundary
        assert_relative_eq!(pareto1.tail_quantile(2.0).unwrap(), 0.0);

        assert!(pareto1.tail_quantile(0.0).is_err());
    }

    #[test]
    fn quantile_matches_bisection_at_continuity_points() {
        let models = [
            TailModel::pareto(1.3, 2.0).unwrap(),
            TailModel::stable(0.7, 0.4).unwrap(),
            TailModel::shifted_pareto(2.2, 1.5).unwrap(),
        ];
        for model in &models {
            for &p in &[1e-6, 1e-3, 0.05, 0.3] {
                let closed = model.tail_quantile(p).unwrap();
                let m = model.clone();
                let bisected =
                    quantile_by_bisection(move |y| m.tail_mass(y.max(1e-300)).unwrap(), p).unwrap();
                assert_relative_eq!(closed, bisected, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn generalized_inverse_contract() {
        let models = [
            TailModel::pareto(1.0, 1.0).unwrap(),
            TailModel::pareto(2.5, 0.7).unwrap(),
            TailModel::stable(0.5, 1.0).unwrap(),
            TailModel::shifted_pareto(1.7, 2.0).unwrap(),
        ];
        for model in &models {
            for &p in &[1e-8, 1e-5, 1e-2, 0.11, 0.47] {
                let q = model.tail_quantile(p).unwrap();
                if q > 0.0 {
                    assert!(
                        model.tail_mass(q).unwrap() <= p + 1e-9 * p,
                        "tail(q) > p for {model:?} at p = {p}"
                    );
                    // strictly left of q the tail must still exceed p
                    let y = q * (1.0 - 1e-9);
                    assert!(model.tail_mass(y).unwrap() > p * (1.0 - 1e-6));
                }
            }
        }
    }

    #[test]
    fn regular_variation_ratio_limit() {
        // pure-power families are exact at every x >= 1; the shifted family
        // converges, within 1e-3 by x = 1e6.
        for t in [2.0, 5.0, 10.0] {
            let pareto = TailModel::pareto(1.5, 1.0).unwrap();
            for x in geometric_grid(1.0, 1e6, 2) {
                let ratio =
                    pareto.tail_mass(t * x).unwrap() / pareto.tail_mass(x.max(1.0)).unwrap();
                assert_relative_eq!(ratio, t.powf(-1.5), max_relative = 1e-12);
            }
            let shifted = TailModel::shifted_pareto(1.5, 1.0).unwrap();
            let mut last_err = f64::INFINITY;
            for x in [1e2, 1e3, 1e4, 1e5, 1e6] {
                let ratio = shifted.tail_mass(t * x).unwrap() / shifted.tail_mass(x).unwrap();
                let err = (ratio - t.powf(-1.5)).abs();
                assert!(err < last_err, "ratio error not shrinking at x = {x}");
                last_err = err;
            }
            assert!(last_err < 1e-3);
        }
    }

    #[test]
    fn norming_constant_examples() {
        let pareto2 = TailModel::pareto(2.0, 1.0).unwrap();
        assert_relative_eq!(pareto2.norming_constant(100.0).unwrap(), 10.0);

        let pareto1 = TailModel::pareto(1.0, 1.0).unwrap();
        assert_relative_eq!(pareto1.norming_constant(1.0).unwrap(), 1.0);

        // closed-form inversion check: volume·tail_mass(a) = rho_one to 1e-9
        let stable = TailModel::stable(0.5, 1.0).unwrap();
        for volume in [2.0, 10.0, 1e4] {
            let a = stable.norming_constant(volume).unwrap();
            assert_relative_eq!(
                volume * stable.tail_mass(a).unwrap(),
                stable.rho_one(),
                epsilon = 1e-9
            );
        }

        assert!(pareto1.norming_constant(0.5).is_err());
    }

    #[test]
    fn norming_limit_defect_vanishes() {
        // exact (<= 1e-9) for Pareto whenever a·x >= 1; decreasing for the
        // shifted family
        let pareto = TailModel::pareto(2.0, 1.0).unwrap().norming_sequence();
        for &volume in &[4.0, 100.0, 1e6] {
            for &x in &[0.5, 1.0, 2.0] {
                let a = TailModel::pareto(2.0, 1.0)
                    .unwrap()
                    .norming_constant(volume)
                    .unwrap();
                if a * x >= 1.0 {
                    assert!(pareto.limit_defect(volume, x).unwrap() <= 1e-9);
                }
            }
        }
        let shifted = TailModel::shifted_pareto(2.0, 1.0)
            .unwrap()
            .norming_sequence();
        // at x = 1 the norming equation holds exactly at every volume
        assert!(shifted.limit_defect(1e2, 1.0).unwrap() < 1e-12);
        for &x in &[0.5, 2.0] {
            let defects: Vec<f64> = [1e2, 1e4, 1e6]
                .iter()
                .map(|&v| shifted.limit_defect(v, x).unwrap())
                .collect();
            assert!(defects[0] > defects[1] && defects[1] > defects[2]);
            assert!(defects[2] < 1e-2);
        }
    }

    #[test]
    fn norming_sequence_nondecreasing() {
        for model in [
            TailModel::pareto(0.8, 1.3).unwrap(),
            TailModel::stable(0.5, 1.0).unwrap(),
            TailModel::shifted_pareto(2.0, 0.5).unwrap(),
        ] {
            let seq = model.norming_sequence();
            let mut last = 0.0;
            for v in geometric_grid(1.0, 1e8, 1) {
                let a = seq.a(v).unwrap();
                assert!(a >= last);
                last = a;
            }
            assert!(last > 1.0);
        }
    }

    #[test]
    fn small_jump_mean_closed_forms() {
        let pareto = TailModel::pareto(1.0, 1.0).unwrap();
        assert_eq!(pareto.small_jump_mean(0.3).unwrap(), 0.0);
        assert_eq!(pareto.small_jump_mean(1.0).unwrap(), 0.0);

        // ∫_0^1 y·y^{-3/2} dy = 2
        let stable = TailModel::stable(0.5, 1.0).unwrap();
        assert_relative_eq!(stable.small_jump_mean(1.0).unwrap(), 2.0);
        // monotone decay to zero on shrinking intervals
        let mut last = f64::INFINITY;
        for delta in [1.0, 0.1, 0.01, 1e-4, 1e-8] {
            let m = stable.small_jump_mean(delta).unwrap();
            assert!(m < last && m >= 0.0);
            last = m;
        }
        assert!(last < 1e-3);

        assert!(TailModel::stable(1.5, 1.0)
            .unwrap()
            .small_jump_mean(0.5)
            .is_err());
        assert!(stable.small_jump_mean(0.0).is_err());
        assert!(stable.small_jump_mean(1.5).is_err());

        // shifted-pareto closed form vs numerical quadrature oracle
        let shifted = TailModel::shifted_pareto(0.5, 1.0).unwrap();
        let n = 200_000;
        let delta = 0.8;
        let h = delta / n as f64;
        let numeric: f64 = (0..n)
            .map(|i| {
                let y = (i as f64 + 0.5) * h;
                y * 0.5 * (1.0 + y).powf(-1.5) * h
            })
            .sum();
        assert_relative_eq!(
            shifted.small_jump_mean(delta).unwrap(),
            numeric,
            max_relative = 1e-6
        );
    }

    #[test]
    fn karamata_envelope_holds_above_index() {
        // Pareto normalized tail with β = 2 > α = 1 on the standard grids.
        let model = TailModel::pareto(1.0, 1.0).unwrap();
        let x_grid = geometric_grid(10.0, 1e4, 4);
        let mut y_grid = geometric_grid(0.1, 1e3, 4);
        let negs: Vec<f64> = y_grid.iter().map(|y| -y).collect();
        y_grid.extend(negs);
        let m = model.clone();
        let cert =
            karamata_envelope_check(move |x| m.normalized_tail(x), 2.0, &x_grid, &y_grid, 1e3)
                .unwrap();
        assert!(cert.holds, "C = {}", cert.c);
        // pure monotone case: y <= 0 reduces to C·K >= 1
        assert!(cert.c >= 1.0);
    }

    #[test]
    fn karamata_envelope_fails_below_index() {
        // β = 0.5 < α = 1: required C grows like x^α/x^β along the diagonal,
        // so a long enough grid exceeds any fixed budget.
        let model = TailModel::pareto(1.0, 1.0).unwrap();
        let x_grid = geometric_grid(10.0, 1e8, 2);
        let y_grid = geometric_grid(0.1, 1e8, 2);
        let m = model.clone();
        let cert =
            karamata_envelope_check(move |x| m.normalized_tail(x), 0.5, &x_grid, &y_grid, 1e3)
                .unwrap();
        assert!(!cert.holds, "C = {} unexpectedly within budget", cert.c);
    }

    #[test]
    fn slow_sequence_orders() {
        // α = 1, β = 2, a_n = n: d_n = n^{3/4}
        let model = TailModel::pareto(1.0, 1.0).unwrap();
        let volumes: Vec<f64> = (1..=6).map(|i| 10f64.powi(i)).collect();
        let d = slow_sequence(&model, 2.0, &volumes).unwrap();
        for (v, d_n) in volumes.iter().zip(&d) {
            // a_n = v for this model
            assert_relative_eq!(*d_n, v.powf(0.75), max_relative = 1e-12);
        }
        // d_n → ∞ and d_n/a_n → 0
        assert!(d.windows(2).all(|w| w[1] > w[0]));
        let ratios: Vec<f64> = volumes.iter().zip(&d).map(|(v, d_n)| d_n / v).collect();
        assert!(ratios.windows(2).all(|w| w[1] < w[0]));

        assert!(slow_sequence(&model, 0.9, &volumes).is_err());
    }

    #[test]
    fn gamma_moment_bounds() {
        let pareto = TailModel::pareto(1.0, 1.0).unwrap();
        // ∫_1^∞ y^γ α y^{-α-1} dy = α/(α-γ): γ = 0.5, α = 1 → 2
        assert_relative_eq!(pareto.gamma_moment_bound(0.5).unwrap(), 2.0);
        assert!(pareto.gamma_moment_bound(1.0).is_err());

        let with_neg = TailModel::pareto(1.0, 1.0)
            .unwrap()
            .with_negative_part(0.5, 2.0)
            .unwrap();
        // adds 0.5·2/(2-0.5) = 2/3
        assert_relative_eq!(with_neg.gamma_moment_bound(0.5).unwrap(), 2.0 + 2.0 / 3.0);
        let steep = TailModel::pareto(3.0, 1.0)
            .unwrap()
            .with_negative_part(0.5, 1.0)
            .unwrap();
        assert!(steep.gamma_moment_bound(2.0).is_err());
    }

    proptest::proptest! {
        // generalized-inverse contract across random families and levels,
        // kept strictly below the Pareto plateau where the inverse is set-valued
        #[test]
        fn prop_quantile_inversion(
            alpha in 0.3f64..3.0,
            scale in 0.1f64..5.0,
            p_exp in -8.0f64..-0.15,
            family in 0usize..3,
        ) {
            let model = match family {
                0 => TailModel::pareto(alpha, scale),
                1 => TailModel::stable(alpha.min(1.9), scale),
                _ => TailModel::shifted_pareto(alpha, scale),
            }
            .unwrap();
            let p = scale * 10f64.powf(p_exp);
            let q = model.tail_quantile(p).unwrap();
            proptest::prop_assert!(q > 0.0);
            proptest::prop_assert!(model.tail_mass(q).unwrap() <= p * (1.0 + 1e-9));
            proptest::prop_assert!(model.tail_mass(q * (1.0 - 1e-9)).unwrap() > p * (1.0 - 1e-6));
        }

        // tail ratio approaches t^{-α}: exact for pure powers, within 1e-3
        // at x = 1e6 for the shifted family
        #[test]
        fn prop_regular_variation_ratio(
            alpha in 0.3f64..3.0,
            scale in 0.1f64..5.0,
            t in 2.0f64..10.0,
            family in 0usize..3,
        ) {
            let model = match family {
                0 => TailModel::pareto(alpha, scale),
                1 => TailModel::stable(alpha.min(1.9), scale),
                _ => TailModel::shifted_pareto(alpha, scale),
            }
            .unwrap();
            let x = 1e6;
            let ratio = model.tail_mass(t * x).unwrap() / model.tail_mass(x).unwrap();
            let tol = match model.family {
                JumpFamily::ShiftedPareto => 1e-3,
                _ => 1e-12,
            };
            proptest::prop_assert!((ratio - t.powf(-model.alpha)).abs() <= tol * ratio.max(1.0));
        }
    }

    #[test]
    fn zero_mass_model_degenerates_cleanly() {
        let zero = TailModel::pareto(1.0, 0.0).unwrap();
        assert_eq!(zero.tail_mass(5.0).unwrap(), 0.0);
        assert_eq!(zero.tail_quantile(0.1).unwrap(), 0.0);
        assert!(zero.norming_constant(10.0).is_err());
    }
}
