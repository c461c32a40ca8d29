//! Atomic finite measures on ℝ, grid distribution functions and the
//! functionals the rest of the crate is built on: integration against test
//! functions, the metric `ρ`, the weighted norm `‖·‖₀`, generalized
//! inverses and the `⟨u, f⟩₁` pairing.

mod distribution;
mod finite;
mod test_function;

use std::io::{Read, Write};

use thiserror::Error;

pub use distribution::{
    cdf, cell_averaged_cdf, generalized_inverse, integrate_inverse, pair_l1, rho, weighted_l2_norm, windowed_rho,
    DistributionFunction, Grid, Quadrature,
};
pub use finite::{integrate, Atom, FiniteMeasure};
pub use test_function::{TestFunction, TestFunctionSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("atom at {position} lies outside the window [{x_min}, {x_max}]")]
    AtomOutsideWindow { position: f64, x_min: f64, x_max: f64 },
    #[error("test function support {support:?} is not inside the window [{x_min}, {x_max}]")]
    SupportOutsideWindow {
        support: (f64, f64),
        x_min: f64,
        x_max: f64,
    },
    #[error("negative weight {weight} at {position}")]
    NegativeWeight { position: f64, weight: f64 },
    #[error("non-finite atom ({position}, {weight})")]
    NonFinite { position: f64, weight: f64 },
    #[error("invalid grid {0:?}")]
    BadGrid(Grid),
    #[error("expected {expected} grid values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("distribution function decreases at node {node}")]
    NotMonotone { node: usize },
    #[error("distribution function must be finite and nonnegative")]
    Negative,
    #[error("distribution functions live on different grids")]
    GridMismatch,
    #[error("csv: {0}")]
    Csv(String),
}

impl From<csv::Error> for MeasureError {
    fn from(e: csv::Error) -> Self {
        MeasureError::Csv(e.to_string())
    }
}

/// Reads a `position,weight` CSV.
pub fn read_measure_csv<R: Read>(reader: R) -> Result<FiniteMeasure, MeasureError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "position" || &headers[1] != "weight" {
        return Err(MeasureError::Csv(format!(
            "expected header `position,weight`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut atoms = Vec::new();
    for row in rdr.deserialize::<(f64, f64)>() {
        atoms.push(row?);
    }
    FiniteMeasure::from_atoms(atoms)
}

/// Writes a `position,weight` CSV with ascending positions.
pub fn write_measure_csv<W: Write>(mu: &FiniteMeasure, writer: W) -> Result<(), MeasureError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["position", "weight"])?;
    for atom in mu.atoms() {
        wtr.serialize((atom.position, atom.weight))?;
    }
    wtr.flush().map_err(|e| MeasureError::Csv(e.to_string()))
}

/// Writes an `x,value` CSV, one row per grid node.
pub fn write_distribution_csv<W: Write>(u: &DistributionFunction, writer: W) -> Result<(), MeasureError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["x", "value"])?;
    for (j, v) in u.values().iter().enumerate() {
        wtr.serialize((u.grid().node(j), v))?;
    }
    wtr.flush().map_err(|e| MeasureError::Csv(e.to_string()))
}

/// Reads an `x,value` CSV written by [`write_distribution_csv`]; the nodes
/// must form a uniform grid.
pub fn read_distribution_csv<R: Read>(reader: R) -> Result<DistributionFunction, MeasureError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for row in rdr.deserialize::<(f64, f64)>() {
        let (x, v) = row?;
        xs.push(x);
        values.push(v);
    }
    if xs.len() < 2 {
        return Err(MeasureError::Csv("need at least two grid nodes".into()));
    }
    let grid = Grid::new(xs[0], *xs.last().unwrap(), xs.len() - 1)?;
    let tol = 1e-9 * grid.dx().max(1.0);
    if xs.iter().enumerate().any(|(j, &x)| (x - grid.node(j)).abs() > tol) {
        return Err(MeasureError::Csv("grid nodes are not uniformly spaced".into()));
    }
    DistributionFunction::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_csv_round_trip() {
        let mu = FiniteMeasure::from_atoms([(0.25, 1.5), (-1.0, 0.5)]).unwrap();
        let mut buf = Vec::new();
        write_measure_csv(&mu, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("position,weight\n-1.0,0.5\n"));
        assert_eq!(read_measure_csv(buf.as_slice()).unwrap(), mu);
    }

    #[test]
    fn measure_csv_requires_header() {
        assert!(read_measure_csv("x,y\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn distribution_csv_round_trip() {
        let g = Grid::new(-1.0, 1.0, 4).unwrap();
        let u = DistributionFunction::new(g, vec![0.0, 0.0, 1.0, 1.5, 2.0]).unwrap();
        let mut buf = Vec::new();
        write_distribution_csv(&u, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("x,value\n"));
        assert_eq!(read_distribution_csv(buf.as_slice()).unwrap(), u);
    }
}
