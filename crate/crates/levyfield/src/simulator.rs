//! Simulation of the decomposed field `X = Z + Y` on evaluation grids.
//!
//! The heavy part `Z` (jumps above 1) is a compound Poisson sum with
//! finitely many atoms in any bounded window, simulated exactly either
//! directly or through the Poisson-arrival series; the light part (jumps in
//! `(δ,1]`, finite-variation track only) is simulated by the same series
//! with an explicit uniform bias bound `|W|·∫_{(0,δ]} y ρ(dy)` for the
//! discarded sub-δ jumps. Field evaluation is a pruned atom-kernel sum over
//! a regular grid; suprema carry Hölder discretization bounds when the
//! kernel admits one.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PConvexSet;
use crate::kernels::Kernel;
use crate::regvar::TailModel;

/// One jump atom: a location in the window and a (signed) magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub location: Vec<f64>,
    pub magnitude: f64,
}

/// A realized compound-Poisson / series field: atoms plus the kernel.
/// The field value at `v` is `Σ magnitude·f(v - location)`.
#[derive(Debug, Clone)]
pub struct JumpField {
    pub atoms: Vec<Atom>,
    pub kernel: Kernel,
    /// Uniform upper bound on the mean field mass discarded by the
    /// small-jump truncation (zero for exact simulations).
    pub truncation_bias_bound: f64,
}

impl JumpField {
    pub fn empty(kernel: Kernel) -> Self {
        JumpField {
            atoms: Vec::new(),
            kernel,
            truncation_bias_bound: 0.0,
        }
    }

    /// Exact field value at a point (no pruning).
    pub fn value_at(&self, v: &[f64]) -> f64 {
        let mut total = 0.0;
        let mut diff = vec![0.0; v.len()];
        for atom in &self.atoms {
            for (i, d) in diff.iter_mut().enumerate() {
                *d = v[i] - atom.location[i];
            }
            total += atom.magnitude * self.kernel.eval(&diff);
        }
        total
    }

    /// Largest single-atom contribution at a point, for the one-big-jump
    /// diagnostics.
    pub fn max_single_contribution(&self, v: &[f64]) -> f64 {
        let mut best = 0.0f64;
        let mut diff = vec![0.0; v.len()];
        for atom in &self.atoms {
            for (i, d) in diff.iter_mut().enumerate() {
                *d = v[i] - atom.location[i];
            }
            best = best.max(atom.magnitude * self.kernel.eval(&diff));
        }
        best
    }
}

/// The finite simulation window: suprema are taken over `target`, atoms are
/// sown on `target ⊕ B(margin)`.
#[derive(Debug, Clone)]
pub struct SimulationWindow {
    pub target: PConvexSet,
    pub margin: f64,
    pub grid_step: f64,
    pub seed: u64,
    pub replicate_id: u64,
    volume: f64,
}

impl SimulationWindow {
    pub fn new(
        target: PConvexSet,
        margin: f64,
        grid_step: f64,
        seed: u64,
        replicate_id: u64,
    ) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::domain("margin must be non-negative"));
        }
        if !(grid_step > 0.0) {
            return Err(Error::domain("grid step must be positive"));
        }
        let (volume, _) = target.dilated_volume(margin, target.default_volume_tol())?;
        Ok(SimulationWindow {
            target,
            margin,
            grid_step,
            seed,
            replicate_id,
            volume,
        })
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Lebesgue volume `|W|` of the window `target ⊕ B(margin)`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    /// Uniform sample from the window by rejection from the inflated
    /// bounding box.
    pub fn sample_point(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (lo, hi) = self.target.bbox();
        loop {
            let u: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(&a, &b)| rng.random_range(a - self.margin..b + self.margin))
                .collect();
            if self.target.distance(&u) <= self.margin {
                return u;
            }
        }
    }
}

/// Margin large enough that atoms beyond it lift the field on the target by
/// more than `epsilon` with expected count at most `miss_probability`.
///
/// Uses `ρ((y,∞)) ≤ C·y^{-α}` (exact for the built-in families) and the
/// per-body tube tail of `∫ g^α`.
pub fn neglect_margin(
    kernel: &Kernel,
    model: &TailModel,
    target: &PConvexSet,
    epsilon: f64,
    miss_probability: f64,
) -> Result<f64> {
    if !(epsilon > 0.0 && miss_probability > 0.0) {
        return Err(Error::domain(
            "epsilon and miss_probability must be positive",
        ));
    }
    let power_bound = match model.family {
        crate::regvar::JumpFamily::Pareto => model.scale,
        crate::regvar::JumpFamily::Stable => model.scale / model.alpha,
        crate::regvar::JumpFamily::ShiftedPareto => model.scale,
    };
    if power_bound == 0.0 {
        return Ok(0.0);
    }
    let budget = miss_probability * epsilon.powf(model.alpha) / power_bound;
    let far = |r: f64| kernel.far_field_bound(target, model.alpha, r);
    if far(0.0)? <= budget {
        return Ok(0.0);
    }
    let mut hi = kernel.length_scale();
    let mut guard = 0;
    while far(hi)? > budget {
        hi *= 2.0;
        guard += 1;
        if guard > 200 {
            return Err(Error::Divergent(
                "neglect margin search did not converge".into(),
            ));
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if far(mid)? <= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn sample_poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(mean).expect("positive finite mean");
    dist.sample(rng) as u64
}

/// Open-unit draw in `(0, 1]`, avoiding the zero quantile argument.
fn open_unit(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

fn negative_atoms(
    window: &SimulationWindow,
    model: &TailModel,
    rng: &mut ChaCha8Rng,
    atoms: &mut Vec<Atom>,
) {
    if let Some(np) = &model.negative_part {
        let n = sample_poisson(rng, window.volume() * np.mass);
        for _ in 0..n {
            let location = window.sample_point(rng);
            let magnitude = -open_unit(rng).powf(-1.0 / np.pareto_index);
            atoms.push(Atom {
                location,
                magnitude,
            });
        }
    }
}

/// Exact simulation of the heavy part `Z` (all jumps above 1 plus the
/// optional negative part): `N ~ Poisson(|W|·ρ((1,∞)))`, i.i.d. uniform
/// locations, magnitudes by inverse sampling of the tail above 1.
pub fn simulate_heavy(
    window: &SimulationWindow,
    model: &TailModel,
    kernel: &Kernel,
    rng: &mut ChaCha8Rng,
) -> JumpField {
    let mut atoms = Vec::new();
    if model.scale > 0.0 {
        let rho_one = model.rho_one();
        let n = sample_poisson(rng, window.volume() * rho_one);
        atoms.reserve(n as usize);
        for _ in 0..n {
            let location = window.sample_point(rng);
            let p = open_unit(rng) * rho_one;
            let magnitude = model.tail_quantile(p).expect("p > 0").max(1.0);
            atoms.push(Atom {
                location,
                magnitude,
            });
        }
    }
    negative_atoms(window, model, rng, &mut atoms);
    JumpField {
        atoms,
        kernel: *kernel,
        truncation_bias_bound: 0.0,
    }
}

/// The same heavy part through the Poisson-arrival series
/// `Σ G(Γ_n)·f(v - U_n)` with `G` the generalized tail inverse relative to
/// the window volume; magnitudes come out nonincreasing. Equal in law to
/// [`simulate_heavy`].
pub fn simulate_heavy_series(
    window: &SimulationWindow,
    model: &TailModel,
    kernel: &Kernel,
    rng: &mut ChaCha8Rng,
) -> JumpField {
    let mut atoms = Vec::new();
    if model.scale > 0.0 {
        let mut gamma = 0.0f64;
        loop {
            let step: f64 = Exp1.sample(rng);
            gamma += step;
            let magnitude = model.tail_quantile(gamma / window.volume()).expect("p > 0");
            if magnitude < 1.0 {
                break;
            }
            let location = window.sample_point(rng);
            atoms.push(Atom {
                location,
                magnitude,
            });
        }
    }
    negative_atoms(window, model, rng, &mut atoms);
    JumpField {
        atoms,
        kernel: *kernel,
        truncation_bias_bound: 0.0,
    }
}

/// Series simulation of the light part: jumps with magnitudes in `(δ, 1]`,
/// exact on that range, with the discarded sub-δ mass bounded uniformly by
/// `|W|·∫_{(0,δ]} y ρ(dy)` (the kernel is at most 1).
///
/// Requires the finite-variation track.
pub fn simulate_series_light(
    window: &SimulationWindow,
    model: &TailModel,
    kernel: &Kernel,
    delta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<JumpField> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::domain("delta must lie in (0,1]"));
    }
    if !model.finite_variation() {
        return Err(Error::UnsupportedModel(
            "light-part simulation needs a finite-variation measure".into(),
        ));
    }
    let bias = window.volume() * model.small_jump_mean(delta)?;
    let mut atoms = Vec::new();
    if model.scale > 0.0 {
        let rho_one = model.rho_one();
        let cutoff_mass = model.tail_mass(delta)?;
        let mut gamma = 0.0f64;
        loop {
            let step: f64 = Exp1.sample(rng);
            gamma += step;
            let p = rho_one + gamma / window.volume();
            if p >= cutoff_mass {
                break;
            }
            let magnitude = model.tail_quantile(p).expect("p > 0");
            if magnitude <= delta {
                break;
            }
            let location = window.sample_point(rng);
            atoms.push(Atom {
                location,
                magnitude,
            });
        }
    }
    Ok(JumpField {
        atoms,
        kernel: *kernel,
        truncation_bias_bound: bias,
    })
}

/// A regular evaluation grid over an axis-aligned box.
#[derive(Debug, Clone)]
pub struct FieldGrid {
    pub origin: Vec<f64>,
    pub step: f64,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl FieldGrid {
    /// Grid of spacing `step` covering `[lo, hi]`; every point of the box is
    /// within `step·√d/2` of a node.
    pub fn covering(lo: &[f64], hi: &[f64], step: f64) -> Result<FieldGrid> {
        if !(step > 0.0) {
            return Err(Error::domain("grid step must be positive"));
        }
        let shape: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(&a, &b)| ((b - a) / step).ceil() as usize + 1)
            .collect();
        let len = shape.iter().product();
        Ok(FieldGrid {
            origin: lo.to_vec(),
            step,
            shape,
            values: vec![0.0; len],
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        let mut idx = flat;
        let mut coords = vec![0.0; self.shape.len()];
        for (axis, &n) in self.shape.iter().enumerate() {
            coords[axis] = self.origin[axis] + (idx % n) as f64 * self.step;
            idx /= n;
        }
        coords
    }

    fn axis_range(&self, axis: usize, center: f64, radius: f64) -> (usize, usize) {
        let lo = ((center - radius - self.origin[axis]) / self.step)
            .ceil()
            .max(0.0) as usize;
        let hi_f = ((center + radius - self.origin[axis]) / self.step).floor();
        let hi = if hi_f < 0.0 {
            0
        } else {
            (hi_f as usize + 1).min(self.shape[axis])
        };
        (lo.min(self.shape[axis]), hi)
    }
}

/// Accumulates `field` onto `grid`, pruning atom contributions below
/// `prune_threshold`. Returns an additive bound on the pruning error at any
/// single node (the truncation bias bound of the field is separate).
pub fn accumulate_field(field: &JumpField, grid: &mut FieldGrid, prune_threshold: f64) -> f64 {
    assert!(prune_threshold > 0.0);
    let d = grid.shape.len();
    let mut error = 0.0;
    for atom in &field.atoms {
        let mag = atom.magnitude.abs();
        if mag <= prune_threshold {
            error += mag;
            continue;
        }
        error += prune_threshold;
        let radius = field.kernel.radius_for_contribution(prune_threshold / mag);
        match d {
            1 => stamp_1d(field, atom, grid, radius),
            2 => stamp_2d(field, atom, grid, radius),
            _ => stamp_nd(field, atom, grid, radius),
        }
    }
    error
}

fn stamp_1d(field: &JumpField, atom: &Atom, grid: &mut FieldGrid, radius: f64) {
    let (i0, i1) = grid.axis_range(0, atom.location[0], radius);
    for i in i0..i1 {
        let x = grid.origin[0] + i as f64 * grid.step;
        grid.values[i] += atom.magnitude * field.kernel.eval_radial((x - atom.location[0]).abs());
    }
}

fn stamp_2d(field: &JumpField, atom: &Atom, grid: &mut FieldGrid, radius: f64) {
    let (i0, i1) = grid.axis_range(0, atom.location[0], radius);
    let (j0, j1) = grid.axis_range(1, atom.location[1], radius);
    let nx = grid.shape[0];
    // the untruncated Gaussian factorizes across axes; other kernels
    // evaluate directly
    if let (crate::kernels::KernelFamily::Gaussian { sigma }, None) =
        (field.kernel.family, field.kernel.truncation)
    {
        let ex: Vec<f64> = (i0..i1)
            .map(|i| {
                let dx = grid.origin[0] + i as f64 * grid.step - atom.location[0];
                (-sigma * dx * dx).exp()
            })
            .collect();
        for j in j0..j1 {
            let dy = grid.origin[1] + j as f64 * grid.step - atom.location[1];
            let ey = atom.magnitude * (-sigma * dy * dy).exp();
            let row = j * nx;
            for (off, &e) in ex.iter().enumerate() {
                grid.values[row + i0 + off] += ey * e;
            }
        }
    } else {
        for j in j0..j1 {
            let dy = grid.origin[1] + j as f64 * grid.step - atom.location[1];
            let row = j * nx;
            for i in i0..i1 {
                let dx = grid.origin[0] + i as f64 * grid.step - atom.location[0];
                let r = (dx * dx + dy * dy).sqrt();
                grid.values[row + i] += atom.magnitude * field.kernel.eval_radial(r);
            }
        }
    }
}

fn stamp_nd(field: &JumpField, atom: &Atom, grid: &mut FieldGrid, radius: f64) {
    let d = grid.shape.len();
    let ranges: Vec<(usize, usize)> = (0..d)
        .map(|a| grid.axis_range(a, atom.location[a], radius))
        .collect();
    if ranges.iter().any(|&(a, b)| a >= b) {
        return;
    }
    let mut idx: Vec<usize> = ranges.iter().map(|&(a, _)| a).collect();
    loop {
        let mut flat = 0;
        let mut stride = 1;
        let mut r2 = 0.0;
        for a in 0..d {
            let x = grid.origin[a] + idx[a] as f64 * grid.step;
            let dx = x - atom.location[a];
            r2 += dx * dx;
            flat += idx[a] * stride;
            stride *= grid.shape[a];
        }
        grid.values[flat] += atom.magnitude * field.kernel.eval_radial(r2.sqrt());
        let mut axis = 0;
        loop {
            if axis == d {
                return;
            }
            idx[axis] += 1;
            if idx[axis] < ranges[axis].1 {
                break;
            }
            idx[axis] = ranges[axis].0;
            axis += 1;
        }
    }
}

/// Node mask for suprema over an index set (inflated by `slack`).
#[derive(Debug, Clone)]
pub struct GridMask {
    pub inside: Vec<bool>,
}

impl GridMask {
    pub fn over(grid: &FieldGrid, set: &PConvexSet, slack: f64) -> GridMask {
        let inside = (0..grid.len())
            .map(|i| {
                let node = grid.node(i);
                set.distance(&node) <= slack
            })
            .collect();
        GridMask { inside }
    }
}

/// Result of a grid supremum with optional Hölder discretization bound.
#[derive(Debug, Clone, Serialize)]
pub struct SupEstimate {
    pub sup_estimate: f64,
    /// `sup_estimate + C_H·(h·√d/2)^ζ` when a Hölder constant for the
    /// realized field is available; the true supremum lies in
    /// `[sup_estimate, upper_bound]`.
    pub upper_bound: Option<f64>,
    pub argmax: Vec<f64>,
}

/// Max of the accumulated grid over masked nodes.
///
/// `field_holder` is the Hölder pair `(C_H, ζ)` of the realized field,
/// `C_H = (Σ|magnitudes|)·C_kernel`; absent for discontinuous (truncated)
/// kernels, in which case the supremum estimate is reported without an
/// upper bound.
pub fn grid_supremum(
    grid: &FieldGrid,
    mask: Option<&GridMask>,
    field_holder: Option<(f64, f64)>,
) -> SupEstimate {
    let mut best = f64::NEG_INFINITY;
    let mut best_idx = 0;
    for i in 0..grid.len() {
        if let Some(m) = mask {
            if !m.inside[i] {
                continue;
            }
        }
        if grid.values[i] > best {
            best = grid.values[i];
            best_idx = i;
        }
    }
    let d = grid.shape.len() as f64;
    SupEstimate {
        sup_estimate: best,
        upper_bound: field_holder
            .map(|(c, zeta)| best + c * (grid.step * d.sqrt() / 2.0).powf(zeta)),
        argmax: grid.node(best_idx),
    }
}

/// Hölder constant of a realized field sum: `(Σ |magnitudes|)·C_kernel` per
/// field, `None` as soon as one kernel is discontinuous.
pub fn field_holder_constant(fields: &[&JumpField]) -> Option<(f64, f64)> {
    let mut total_c = 0.0;
    let mut zeta = f64::INFINITY;
    for field in fields {
        let (ck, z) = field.kernel.holder()?;
        let mass: f64 = field.atoms.iter().map(|a| a.magnitude.abs()).sum();
        total_c += mass * ck;
        zeta = zeta.min(z);
    }
    if zeta.is_infinite() {
        zeta = 1.0;
    }
    Some((total_c, zeta))
}

/// Specification of the independent stationary side fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SideFieldSpec {
    #[default]
    Zero,
    /// Kernel-smoothed Poisson shot noise with magnitudes uniform on
    /// `(0, cap]`, clipped at `cap`: stationary, ergodic (a factor of a
    /// mixing Poisson field), and bounded, so every moment condition holds.
    BoundedShot { rate: f64, cap: f64, sigma: f64 },
    /// Gaussian-smoothed i.i.d. standard-normal noise on a uniformly
    /// phase-shifted unit lattice: stationary with all moments of the
    /// supremum over the unit cube finite.
    SmoothedLatticeNoise { amplitude: f64, sigma: f64 },
}

/// A realized side field: an atom field plus an optional clip level.
#[derive(Debug, Clone)]
pub struct SideField {
    pub field: JumpField,
    pub clip: Option<f64>,
}

impl SideField {
    pub fn value_at(&self, v: &[f64]) -> f64 {
        let raw = self.field.value_at(v);
        match self.clip {
            Some(c) => raw.min(c),
            None => raw,
        }
    }
}

/// The two independent perturbation fields `(Y¹, Y²)` drawn from their own
/// substreams of the replicate.
pub fn simulate_side_fields(
    y1: &SideFieldSpec,
    y2: &SideFieldSpec,
    window: &SimulationWindow,
) -> Result<(Option<SideField>, Option<SideField>)> {
    let mut rng1 = crate::rng::substream(
        window.seed,
        window.replicate_id,
        crate::rng::Stream::SideField1,
    );
    let mut rng2 = crate::rng::substream(
        window.seed,
        window.replicate_id,
        crate::rng::Stream::SideField2,
    );
    Ok((
        simulate_side_field(y1, window, &mut rng1)?,
        simulate_side_field(y2, window, &mut rng2)?,
    ))
}

/// Simulates one side field over the window (including enough margin for
/// its own truncated kernel, so the restriction to the window is exactly
/// stationary).
pub fn simulate_side_field(
    spec: &SideFieldSpec,
    window: &SimulationWindow,
    rng: &mut ChaCha8Rng,
) -> Result<Option<SideField>> {
    let d = window.dim();
    match *spec {
        SideFieldSpec::Zero => Ok(None),
        SideFieldSpec::BoundedShot { rate, cap, sigma } => {
            if !(rate > 0.0 && cap > 0.0 && sigma > 0.0) {
                return Err(Error::domain(
                    "bounded shot noise needs positive parameters",
                ));
            }
            let reach = 3.0 / sigma.sqrt();
            let kernel = Kernel::gaussian(sigma, d)?.truncated(reach)?;
            let (lo, hi) = window.target.bbox();
            let pad = window.margin + reach;
            let region_vol: f64 = lo
                .iter()
                .zip(&hi)
                .map(|(&a, &b)| b - a + 2.0 * pad)
                .product();
            let n = sample_poisson(rng, rate * region_vol);
            let mut atoms = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let location: Vec<f64> = lo
                    .iter()
                    .zip(&hi)
                    .map(|(&a, &b)| rng.random_range(a - pad..b + pad))
                    .collect();
                let magnitude = cap * open_unit(rng);
                atoms.push(Atom {
                    location,
                    magnitude,
                });
            }
            Ok(Some(SideField {
                field: JumpField {
                    atoms,
                    kernel,
                    truncation_bias_bound: 0.0,
                },
                clip: Some(cap),
            }))
        }
        SideFieldSpec::SmoothedLatticeNoise { amplitude, sigma } => {
            if !(amplitude > 0.0 && sigma > 0.0) {
                return Err(Error::domain("lattice noise needs positive parameters"));
            }
            let reach = 3.0 / sigma.sqrt();
            let kernel = Kernel::gaussian(sigma, d)?.truncated(reach)?;
            let (lo, hi) = window.target.bbox();
            let pad = window.margin + reach;
            let phase: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            let mut sites: Vec<Vec<f64>> = vec![Vec::new()];
            for axis in 0..d {
                let a = (lo[axis] - pad).floor() as i64;
                let b = (hi[axis] + pad).ceil() as i64;
                let mut next = Vec::new();
                for s in &sites {
                    for z in a..=b {
                        let mut v = s.clone();
                        v.push(z as f64 + phase[axis]);
                        next.push(v);
                    }
                }
                sites = next;
            }
            let atoms = sites
                .into_iter()
                .map(|location| {
                    let noise: f64 = StandardNormal.sample(rng);
                    Atom {
                        location,
                        magnitude: amplitude * noise,
                    }
                })
                .collect();
            Ok(Some(SideField {
                field: JumpField {
                    atoms,
                    kernel,
                    truncation_bias_bound: 0.0,
                },
                clip: None,
            }))
        }
    }
}
