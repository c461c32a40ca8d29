//! The nested white-noise increment `√γ ∫₀^{u(y)} W(ds da)` over one time
//! step, discretized on cells `[kΔa, (k+1)Δa)` of the height axis.

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Which height cells a node at level `u` integrates over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    /// Cells whose midpoint lies below `u`: `(k + ½)Δa < u`.
    #[default]
    Midpoint,
    /// Cells entirely below `u`: `(k + 1)Δa ≤ u`.
    Floor,
    /// Full cells below `u` plus the partial top cell scaled by
    /// `√(fraction covered)`, which makes the variance exactly `γΔt·u`.
    Fractional,
}

/// Full cells counted at level `u` and the weight of the partial cell.
#[inline]
pub fn cell_membership(u: f64, da: f64, rule: CellRule, max_cells: usize) -> (usize, f64) {
    let r = u / da;
    let (count, partial) = match rule {
        CellRule::Midpoint => ((r - 0.5).ceil().max(0.0), 0.0),
        CellRule::Floor => (r.floor().max(0.0), 0.0),
        CellRule::Fractional => {
            let c = r.floor().max(0.0);
            (c, (r - c).max(0.0).sqrt())
        }
    };
    let count = (count as usize).min(max_cells);
    if count == max_cells {
        (count, 0.0)
    } else {
        (count, partial)
    }
}

/// Cell memberships at every node.
pub fn cell_counts(values: &[f64], da: f64, rule: CellRule, max_cells: usize) -> Vec<(usize, f64)> {
    values
        .iter()
        .map(|&u| cell_membership(u, da, rule, max_cells))
        .collect()
}

/// Draws the cell increments `ΔW_k ~ N(0, Δt·Δa)` needed for `counts` and
/// returns `√γ · (Σ_{k < c_j} ΔW_k + p_j ΔW_{c_j})` at every node.
///
/// The increments are drawn in cell order from `rng`, so the first cells
/// do not depend on how many are drawn.
pub fn nested_noise<R: RngCore>(counts: &[(usize, f64)], gamma: f64, dt: f64, da: f64, rng: &mut R) -> Vec<f64> {
    let needed = counts
        .iter()
        .map(|&(c, p)| if p > 0.0 { c + 1 } else { c })
        .max()
        .unwrap_or(0);
    let sd = (dt * da).sqrt();
    let mut prefix = Vec::with_capacity(needed + 1);
    let mut cells = Vec::with_capacity(needed);
    prefix.push(0.0);
    let mut acc = 0.0;
    for _ in 0..needed {
        let z: f64 = StandardNormal.sample(rng);
        let dw = sd * z;
        cells.push(dw);
        acc += dw;
        prefix.push(acc);
    }
    let scale = gamma.sqrt();
    counts
        .iter()
        .map(|&(c, p)| {
            let partial = if p > 0.0 { p * cells[c] } else { 0.0 };
            scale * (prefix[c] + partial)
        })
        .collect()
}

/// Conditional variance per unit time of `Σ_j d_j · noise_j`, i.e.
/// `γ Δa Σ_k (Σ_j d_j a_{jk})²` where `a_{jk}` is the coefficient of cell
/// `k` at node `j`.
pub fn linear_functional_variance_rate(counts: &[(usize, f64)], d: &[f64], gamma: f64, da: f64) -> f64 {
    let cells = counts
        .iter()
        .map(|&(c, p)| if p > 0.0 { c + 1 } else { c })
        .max()
        .unwrap_or(0);
    let mut diff = vec![0.0; cells + 1];
    let mut partial = vec![0.0; cells + 1];
    for (&(c, p), &dj) in counts.iter().zip(d) {
        diff[0] += dj;
        diff[c] -= dj;
        if p > 0.0 {
            partial[c] += dj * p;
        }
    }
    let mut run = 0.0;
    let mut total = 0.0;
    for k in 0..cells {
        run += diff[k];
        let coef = run + partial[k];
        total += coef * coef;
    }
    gamma * da * total
}
