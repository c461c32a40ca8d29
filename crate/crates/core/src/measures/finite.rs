use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{MeasureError, TestFunction};

/// A single weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub weight: f64,
}

/// Atomic finite measure on the real line.
///
/// Atoms are kept sorted by position with strictly positive weights; atoms
/// sharing a position are merged by adding their weights. A prefix-sum of
/// the weights is cached so interval masses are `O(log n)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FiniteMeasure {
    atoms: Vec<Atom>,
    cumulative: Vec<f64>,
    total_mass: f64,
}

impl FiniteMeasure {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn dirac(position: f64, weight: f64) -> Result<Self, MeasureError> {
        Self::from_atoms([(position, weight)])
    }

    /// Builds a measure from `(position, weight)` pairs in any order.
    ///
    /// Zero weights are dropped. Negative or non-finite entries are rejected.
    pub fn from_atoms<I>(atoms: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut raw: Vec<Atom> = Vec::new();
        for (position, weight) in atoms {
            if !position.is_finite() || !weight.is_finite() {
                return Err(MeasureError::NonFinite { position, weight });
            }
            if weight < 0.0 {
                return Err(MeasureError::NegativeWeight { position, weight });
            }
            if weight > 0.0 {
                raw.push(Atom { position, weight });
            }
        }
        raw.sort_by(|a, b| a.position.total_cmp(&b.position));
        Ok(Self::from_sorted_unchecked(raw))
    }

    /// Caller guarantees ascending positions and positive finite weights;
    /// equal positions are still merged here.
    pub(crate) fn from_sorted_unchecked(sorted: Vec<Atom>) -> Self {
        let mut atoms: Vec<Atom> = Vec::with_capacity(sorted.len());
        for atom in sorted {
            match atoms.last_mut() {
                Some(last) if last.position == atom.position => last.weight += atom.weight,
                _ => atoms.push(atom),
            }
        }
        let mut cumulative = Vec::with_capacity(atoms.len());
        let mut acc = 0.0;
        for atom in &atoms {
            acc += atom.weight;
            cumulative.push(acc);
        }
        Self {
            atoms,
            cumulative,
            total_mass: acc,
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// `μ((−∞, y])`. `y = +∞` gives the total mass.
    pub fn mass_up_to(&self, y: f64) -> f64 {
        let idx = self.atoms.partition_point(|a| a.position <= y);
        if idx == 0 {
            0.0
        } else {
            self.cumulative[idx - 1]
        }
    }

    /// `μ([lo, hi])`.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        if hi < lo {
            return 0.0;
        }
        let below = self.atoms.partition_point(|a| a.position < lo);
        let upto = self.atoms.partition_point(|a| a.position <= hi);
        if upto <= below {
            return 0.0;
        }
        let lower = if below == 0 { 0.0 } else { self.cumulative[below - 1] };
        self.cumulative[upto - 1] - lower
    }

    pub fn scaled(&self, factor: f64) -> Result<Self, MeasureError> {
        Self::from_atoms(self.atoms.iter().map(|a| (a.position, a.weight * factor)))
    }

    /// Draws a position from the normalized measure given `u ∈ [0, 1)`.
    ///
    /// Returns `None` for the zero measure.
    pub fn quantile_sample(&self, u: f64) -> Option<f64> {
        if self.atoms.is_empty() {
            return None;
        }
        let target = u * self.total_mass;
        let idx = self.cumulative.partition_point(|&c| c <= target);
        Some(self.atoms[idx.min(self.atoms.len() - 1)].position)
    }

    /// Smallest closed interval containing every atom.
    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.atoms.first()?.position, self.atoms.last()?.position))
    }
}

/// `⟨μ, f⟩ = Σ_k w_k f(x_k)`.
pub fn integrate(mu: &FiniteMeasure, f: &TestFunction) -> f64 {
    mu.atoms.iter().map(|a| a.weight * f.value(a.position)).sum()
}

impl Serialize for FiniteMeasure {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<(f64, f64)> = self.atoms.iter().map(|a| (a.position, a.weight)).collect();
        pairs.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FiniteMeasure {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(f64, f64)>::deserialize(deserializer)?;
        FiniteMeasure::from_atoms(pairs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_equal_positions_and_drops_zeros() {
        let mu = FiniteMeasure::from_atoms([(1.0, 0.5), (-1.0, 0.25), (1.0, 0.25), (3.0, 0.0)]).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(
            mu.atoms()[0],
            Atom {
                position: -1.0,
                weight: 0.25
            }
        );
        assert_eq!(
            mu.atoms()[1],
            Atom {
                position: 1.0,
                weight: 0.75
            }
        );
        assert_eq!(mu.total_mass(), 1.0);
    }

    #[test]
    fn rejects_negative_weight() {
        assert!(matches!(
            FiniteMeasure::from_atoms([(0.0, -1.0)]),
            Err(MeasureError::NegativeWeight { .. })
        ));
    }

    #[test]
    fn interval_masses() {
        let mu = FiniteMeasure::from_atoms([(0.0, 1.0), (1.0, 2.0), (2.0, 4.0)]).unwrap();
        assert_eq!(mu.mass_up_to(-0.5), 0.0);
        assert_eq!(mu.mass_up_to(1.0), 3.0);
        assert_eq!(mu.mass_up_to(f64::INFINITY), 7.0);
        assert_eq!(mu.mass_in(0.5, 2.0), 6.0);
        assert_eq!(mu.mass_in(0.0, 0.0), 1.0);
        assert_eq!(mu.mass_in(2.5, 3.0), 0.0);
    }

    #[test]
    fn quantile_sampling_hits_each_atom_by_weight() {
        let mu = FiniteMeasure::from_atoms([(0.0, 1.0), (5.0, 3.0)]).unwrap();
        assert_eq!(mu.quantile_sample(0.0), Some(0.0));
        assert_eq!(mu.quantile_sample(0.2499), Some(0.0));
        assert_eq!(mu.quantile_sample(0.25), Some(5.0));
        assert_eq!(mu.quantile_sample(0.9999), Some(5.0));
        assert_eq!(FiniteMeasure::empty().quantile_sample(0.5), None);
    }

    #[test]
    fn integrate_examples() {
        let two = FiniteMeasure::dirac(0.0, 2.0).unwrap();
        assert_eq!(integrate(&two, &TestFunction::constant(1.0)), 2.0);
        assert_eq!(integrate(&FiniteMeasure::empty(), &TestFunction::constant(3.0)), 0.0);

        let mu = FiniteMeasure::from_atoms([(-1.0, 0.5), (1.0, 0.25)]).unwrap();
        let square = TestFunction::custom("x^2", (-2.0, 2.0), |x| x * x, |x| 2.0 * x, |_| 2.0);
        let oracle: f64 = [(-1.0f64, 0.5), (1.0, 0.25)].iter().map(|(x, w)| w * x * x).sum();
        assert_eq!(oracle, 0.75);
        assert_eq!(integrate(&mu, &square), oracle);
    }

    #[test]
    fn serde_is_position_weight_pairs() {
        let mu = FiniteMeasure::from_atoms([(0.5, 1.0), (-0.5, 2.0)]).unwrap();
        let json = serde_json::to_string(&mu).unwrap();
        assert_eq!(json, "[[-0.5,2.0],[0.5,1.0]]");
        let back: FiniteMeasure = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mu);
    }
}
