//! Emigration intensities `η(x, μ¹, μ²)`, the cumulative functional
//! `ξ(y, μ¹, μ²) = ∫_{(−∞, y]} η(x, μ¹, μ²) μ¹(dx)` and the immigration
//! target `χ`.

use serde::{Deserialize, Serialize};

use crate::measures::{cell_averaged_cdf, DistributionFunction, FiniteMeasure, Grid, MeasureError};

/// Bounded nonnegative emigration intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MigrationIntensity {
    /// `η ≡ c`.
    Constant {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_max: Option<f64>,
    },
    /// `η = c · m₂ / (1 + m₂)` with `m₂ = ⟨μ², 1⟩`.
    MassCoupled {
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eta_max: Option<f64>,
    },
    /// `η = min(c · μ¹([x − r, x + r]), eta_max)`.
    LocalWindow { c: f64, r: f64, eta_max: f64 },
}

impl MigrationIntensity {
    pub fn zero() -> Self {
        MigrationIntensity::Constant { c: 0.0, eta_max: None }
    }

    pub fn eta_max(&self) -> f64 {
        match *self {
            MigrationIntensity::Constant { c, eta_max } | MigrationIntensity::MassCoupled { c, eta_max } => {
                eta_max.unwrap_or(c)
            }
            MigrationIntensity::LocalWindow { eta_max, .. } => eta_max,
        }
    }

    /// Parameter problems, phrased for a config report.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let (c, declared) = match *self {
            MigrationIntensity::Constant { c, eta_max } | MigrationIntensity::MassCoupled { c, eta_max } => {
                (c, eta_max)
            }
            MigrationIntensity::LocalWindow { c, r, eta_max } => {
                if !(r.is_finite() && r > 0.0) {
                    out.push(format!("eta.r must be positive, got {r}"));
                }
                (c, Some(eta_max))
            }
        };
        if !(c.is_finite() && c >= 0.0) {
            out.push(format!("eta.c must be a nonnegative number, got {c}"));
        }
        if let Some(m) = declared {
            if !(m.is_finite() && m >= 0.0) {
                out.push(format!("eta.eta_max must be a nonnegative number, got {m}"));
            } else if !matches!(self, MigrationIntensity::LocalWindow { .. }) && m < c {
                out.push(format!("eta.eta_max = {m} is below eta.c = {c}"));
            }
        }
        out
    }

    /// Whether evaluation needs atom positions of colony 1 (not just masses).
    pub fn needs_positions(&self) -> bool {
        matches!(self, MigrationIntensity::LocalWindow { .. })
    }

    /// Freezes the intensity at the pair `(μ¹, μ²)`.
    pub fn freeze<'a>(&self, mu1: &'a FiniteMeasure, mu2: &FiniteMeasure) -> FrozenIntensity<'a> {
        self.freeze_with(Some(mu1), mu2.total_mass())
    }

    /// Same as [`freeze`](Self::freeze), for models that only read the
    /// colony-2 mass. Panics for position-dependent models without `mu1`.
    pub fn freeze_with<'a>(&self, mu1: Option<&'a FiniteMeasure>, mass2: f64) -> FrozenIntensity<'a> {
        let kind = match *self {
            MigrationIntensity::Constant { c, .. } => FrozenKind::Value(c),
            MigrationIntensity::MassCoupled { c, .. } => FrozenKind::Value(c * mass2 / (1.0 + mass2)),
            MigrationIntensity::LocalWindow { c, r, eta_max } => FrozenKind::Window {
                c,
                r,
                eta_max,
                colony1: mu1.expect("local-window intensity needs colony-1 positions"),
            },
        };
        FrozenIntensity {
            kind,
            bound: self.eta_max(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum FrozenKind<'a> {
    Value(f64),
    Window {
        c: f64,
        r: f64,
        eta_max: f64,
        colony1: &'a FiniteMeasure,
    },
}

/// `x ↦ η(x, μ¹, μ²)` for fixed measures.
#[derive(Debug, Clone, Copy)]
pub struct FrozenIntensity<'a> {
    kind: FrozenKind<'a>,
    bound: f64,
}

impl FrozenIntensity<'_> {
    #[inline]
    pub fn at(&self, x: f64) -> f64 {
        let v = match self.kind {
            FrozenKind::Value(v) => v,
            FrozenKind::Window { c, r, eta_max, colony1 } => (c * colony1.mass_in(x - r, x + r)).min(eta_max),
        };
        debug_assert!(
            v >= 0.0 && v <= self.bound * (1.0 + 1e-12),
            "intensity {v} outside [0, {}]",
            self.bound
        );
        v
    }

    /// Position-independent value, if any.
    pub fn uniform_value(&self) -> Option<f64> {
        match self.kind {
            FrozenKind::Value(v) => Some(v),
            FrozenKind::Window { .. } => None,
        }
    }
}

/// `η(x, μ¹, μ²)`.
pub fn eta_eval(model: &MigrationIntensity, x: f64, mu1: &FiniteMeasure, mu2: &FiniteMeasure) -> f64 {
    model.freeze(mu1, mu2).at(x)
}

/// `ξ(y, μ¹, μ²)`; `y = +∞` sums every atom of `μ¹`.
pub fn xi_eval(y: f64, mu1: &FiniteMeasure, mu2: &FiniteMeasure, model: &MigrationIntensity) -> f64 {
    xi_profile(&[y], mu1, mu2, model)[0]
}

/// `ξ(y_k, μ¹, μ²)` for ascending `ys` in a single pass over the atoms.
pub fn xi_profile(ys: &[f64], mu1: &FiniteMeasure, mu2: &FiniteMeasure, model: &MigrationIntensity) -> Vec<f64> {
    debug_assert!(ys.windows(2).all(|w| w[0] <= w[1]));
    let eta = model.freeze(mu1, mu2);
    let atoms = mu1.atoms();
    let mut out = Vec::with_capacity(ys.len());
    let mut k = 0;
    let mut acc = 0.0;
    for &y in ys {
        while k < atoms.len() && atoms[k].position <= y {
            acc += atoms[k].weight * eta.at(atoms[k].position);
            k += 1;
        }
        out.push(acc);
    }
    out
}

/// The immigration measure `χ` and its distribution function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmigrationTarget {
    chi: FiniteMeasure,
    chi_cdf: DistributionFunction,
}

impl ImmigrationTarget {
    /// Atoms of `χ` outside the grid are an error, not truncated.
    pub fn new(chi: FiniteMeasure, grid: &Grid) -> Result<Self, MeasureError> {
        let chi_cdf = cell_averaged_cdf(&chi, grid)?;
        Ok(Self { chi, chi_cdf })
    }

    pub fn chi(&self) -> &FiniteMeasure {
        &self.chi
    }

    pub fn chi_cdf(&self) -> &DistributionFunction {
        &self.chi_cdf
    }
}
