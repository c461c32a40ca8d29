use serde::{Deserialize, Serialize};

use super::finite::Atom;
use super::{FiniteMeasure, MeasureError, TestFunction};

/// Uniform spatial grid `x_j = x_min + j Δx`, `j = 0..=cells`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub cells: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, cells: usize) -> Result<Self, MeasureError> {
        let grid = Self { x_min, x_max, cells };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), MeasureError> {
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) || self.cells == 0 {
            return Err(MeasureError::BadGrid(*self));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.cells as f64
    }

    pub fn nodes_len(&self) -> usize {
        self.cells + 1
    }

    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j == self.cells {
            self.x_max
        } else {
            self.x_min + j as f64 * self.dx()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.cells).map(|j| self.node(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }
}

/// Nondecreasing nonnegative function sampled at the nodes of a grid.
///
/// Between nodes the value of the left node is used, so `evaluate`
/// is right-continuous like `μ((−∞, y])`. Left of the window the function
/// is 0; right of it, the last node value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl DistributionFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, MeasureError> {
        grid.validate()?;
        if values.len() != grid.nodes_len() {
            return Err(MeasureError::LengthMismatch {
                expected: grid.nodes_len(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) || values[0] < 0.0 {
            return Err(MeasureError::Negative);
        }
        if let Some(j) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(MeasureError::NotMonotone { node: j + 1 });
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_parts_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.nodes_len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.nodes_len()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn right_end(&self) -> f64 {
        *self.values.last().expect("grid has at least two nodes")
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if x < self.grid.x_min {
            return 0.0;
        }
        if x >= self.grid.x_max {
            return self.right_end();
        }
        let j = ((x - self.grid.x_min) / self.grid.dx()).floor() as usize;
        // rounding can put x just below node j
        let j = j.min(self.grid.cells);
        if self.grid.node(j) > x && j > 0 {
            self.values[j - 1]
        } else {
            self.values[j]
        }
    }

    /// Atoms at the grid nodes with the increments as weights; the first
    /// node carries `values[0]`. Zero increments are dropped.
    pub fn to_measure(&self) -> FiniteMeasure {
        let mut atoms = Vec::with_capacity(self.values.len());
        let mut previous = 0.0;
        for (j, &v) in self.values.iter().enumerate() {
            let w = v - previous;
            if w > 0.0 {
                atoms.push(Atom {
                    position: self.grid.node(j),
                    weight: w,
                });
            }
            previous = v;
        }
        FiniteMeasure::from_sorted_unchecked(atoms)
    }
}

/// `values[j] = μ((−∞, x_j])`.
pub fn cdf(mu: &FiniteMeasure, grid: &Grid) -> Result<DistributionFunction, MeasureError> {
    grid.validate()?;
    if let Some((lo, hi)) = mu.hull() {
        if lo < grid.x_min || hi > grid.x_max {
            let position = if lo < grid.x_min { lo } else { hi };
            return Err(MeasureError::AtomOutsideWindow {
                position,
                x_min: grid.x_min,
                x_max: grid.x_max,
            });
        }
    }
    let atoms = mu.atoms();
    let mut values = Vec::with_capacity(grid.nodes_len());
    let mut k = 0;
    let mut acc = 0.0;
    for j in 0..=grid.cells {
        let x = grid.node(j);
        while k < atoms.len() && atoms[k].position <= x {
            acc += atoms[k].weight;
            k += 1;
        }
        values.push(acc);
    }
    // the last node sees every atom; use the cached sum so values[J] = total mass
    if let Some(last) = values.last_mut() {
        *last = mu.total_mass();
    }
    Ok(DistributionFunction { grid: *grid, values })
}

/// Distribution function of `μ` with each atom spread uniformly over the
/// cell of width `Δx` centred on it, so the trapezoid rule recovers atom
/// positions exactly. Under linear interpolation `cdf` shifts an atom half a
/// cell to the left.
pub fn cell_averaged_cdf(mu: &FiniteMeasure, grid: &Grid) -> Result<DistributionFunction, MeasureError> {
    let mut u = cdf(mu, grid)?;
    let dx = grid.dx();
    for (j, v) in u.values.iter_mut().enumerate().take(grid.cells) {
        let x = grid.node(j);
        *v = mu
            .atoms()
            .iter()
            .map(|a| a.weight * ((x - a.position) / dx + 0.5).clamp(0.0, 1.0))
            .sum();
    }
    Ok(u)
}

/// `∫_a^b e^{−|x|} dx` for `a ≤ b`, either end possibly infinite.
pub(crate) fn exp_weight(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    if b <= 0.0 {
        // e^b − e^a
        if a == f64::NEG_INFINITY {
            b.exp()
        } else {
            a.exp() * (b - a).exp_m1()
        }
    } else if a >= 0.0 {
        // e^{−a} − e^{−b}
        if b == f64::INFINITY {
            (-a).exp()
        } else {
            (-a).exp() * (-(-(b - a)).exp_m1())
        }
    } else {
        exp_weight(a, 0.0) + exp_weight(0.0, b)
    }
}

/// Exact `ρ(ν₁, ν₂) = ∫ e^{−|x|} |v₁(x) − v₂(x)| dx` for atomic measures.
///
/// The CDF difference is constant between consecutive atom positions, so
/// each piece integrates in closed form.
pub fn rho(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> f64 {
    let a = nu1.atoms();
    let b = nu2.atoms();
    let (mut i, mut j) = (0, 0);
    let (mut f1, mut f2) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.position.min(q.position),
            (Some(p), None) => p.position,
            (None, Some(q)) => q.position,
            (None, None) => unreachable!(),
        };
        if let Some(start) = prev {
            let diff = (f1 - f2).abs();
            if diff > 0.0 {
                total += diff * exp_weight(start, x);
            }
        }
        while i < a.len() && a[i].position == x {
            f1 += a[i].weight;
            i += 1;
        }
        while j < b.len() && b[j].position == x {
            f2 += b[j].weight;
            j += 1;
        }
        prev = Some(x);
    }
    if let Some(start) = prev {
        // past the last atom both CDFs sit at their total masses
        let diff = (nu1.total_mass() - nu2.total_mass()).abs();
        if diff > 0.0 {
            total += diff * exp_weight(start, f64::INFINITY);
        }
    }
    total
}

/// `ρ` for grid distribution functions: exact integral of the
/// piecewise-constant (left-node) interpolants over `[x_min, ∞)`, with the
/// right tail held at the last node. Mass left of the window is ignored.
pub fn windowed_rho(u1: &DistributionFunction, u2: &DistributionFunction) -> Result<f64, MeasureError> {
    if u1.grid != u2.grid {
        return Err(MeasureError::GridMismatch);
    }
    let grid = u1.grid;
    let mut total = 0.0;
    for j in 0..grid.cells {
        let diff = (u1.values[j] - u2.values[j]).abs();
        if diff > 0.0 {
            total += diff * exp_weight(grid.node(j), grid.node(j + 1));
        }
    }
    let tail = (u1.right_end() - u2.right_end()).abs();
    if tail > 0.0 {
        total += tail * exp_weight(grid.x_max, f64::INFINITY);
    }
    Ok(total)
}

/// Composite Simpson rule over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub lo: f64,
    pub hi: f64,
    /// Panels per unit length; each sub-interval gets at least 2.
    pub panels_per_unit: f64,
}

impl Quadrature {
    fn simpson<F: Fn(f64) -> f64>(&self, a: f64, b: f64, g: &F) -> f64 {
        if b <= a {
            return 0.0;
        }
        let mut panels = ((b - a) * self.panels_per_unit).ceil() as usize;
        panels = panels.max(2);
        if panels % 2 == 1 {
            panels += 1;
        }
        let step = (b - a) / panels as f64;
        let mut sum = g(a) + g(b);
        for k in 1..panels {
            let x = a + k as f64 * step;
            sum += if k % 2 == 1 { 4.0 } else { 2.0 } * g(x);
        }
        sum * step / 3.0
    }

    /// Integrates `g` splitting at every breakpoint that lies inside the window.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F, breakpoints: &[f64]) -> f64 {
        let mut cuts = vec![self.lo, self.hi];
        cuts.extend(
            breakpoints
                .iter()
                .copied()
                .filter(|&x| x.is_finite() && x > self.lo && x < self.hi),
        );
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        cuts.windows(2).map(|w| self.simpson(w[0], w[1], &g)).sum()
    }
}

/// `‖f‖₀ = (∫ f² e^{−|x|} dx)^{1/2}`.
pub fn weighted_l2_norm(f: &TestFunction, quadrature: &Quadrature) -> f64 {
    let (s0, s1) = f.support();
    // f vanishes off its support and may jump at the ends, so integrate over
    // the support only; the weight has a kink at 0
    let window = Quadrature {
        lo: quadrature.lo.max(s0),
        hi: quadrature.hi.min(s1),
        ..*quadrature
    };
    window
        .integrate(|x| f.value(x).powi(2) * (-x.abs()).exp(), &[0.0])
        .sqrt()
}

/// `u^{-1}(a) = inf{x_j : u(x_j) > a}`; `+∞` when no node exceeds `a`.
pub fn generalized_inverse(u: &DistributionFunction, a: f64) -> f64 {
    let j = u.values.partition_point(|&v| v <= a);
    if j == u.values.len() {
        f64::INFINITY
    } else {
        u.grid.node(j)
    }
}

/// Midpoint Riemann sum of `∫_0^{A} f(u^{-1}(a)) da` with `A = u(x_max)`.
///
/// The `+∞` sentinel contributes 0 (f vanishes at infinity).
pub fn integrate_inverse(u: &DistributionFunction, f: &TestFunction, da: f64) -> f64 {
    let top = u.right_end();
    if top <= 0.0 || da <= 0.0 {
        return 0.0;
    }
    let steps = (top / da).ceil() as usize;
    let step = top / steps as f64;
    (0..steps)
        .map(|k| {
            let a = (k as f64 + 0.5) * step;
            let x = generalized_inverse(u, a);
            if x.is_finite() {
                f.value(x)
            } else {
                0.0
            }
        })
        .sum::<f64>()
        * step
}

/// Trapezoid approximation of `⟨u, f⟩₁ = ∫ u(x) f(x) dx` on the grid.
pub fn pair_l1(u: &DistributionFunction, f: &TestFunction) -> Result<f64, MeasureError> {
    let (s0, s1) = f.support();
    let grid = u.grid;
    if s0 < grid.x_min || s1 > grid.x_max {
        return Err(MeasureError::SupportOutsideWindow {
            support: (s0, s1),
            x_min: grid.x_min,
            x_max: grid.x_max,
        });
    }
    let dx = grid.dx();
    let n = grid.cells;
    let mut sum = 0.0;
    for (j, &v) in u.values.iter().enumerate() {
        let w = if j == 0 || j == n { 0.5 } else { 1.0 };
        sum += w * v * f.value(grid.node(j));
    }
    Ok(sum * dx)
}
