use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{finite_difference_space, finite_difference_time, LibraryMode};
use crate::error::{Error, Result};
use crate::systems::{Field, Trajectory};

/// Where a dataset row came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum RowSource {
    /// Row `index` of the generating grid (time index, or flattened
    /// time-major space-time index for fields).
    Grid { index: usize },
    /// Acquired from a candidate pool during active learning.
    Acquired { pool_index: usize, round: usize },
}

/// Observations `U` with optional derivatives `U̇`.
///
/// ODE datasets hold `N × d` states. PDE datasets hold `N × 1` field samples
/// together with the spatial derivatives `u_x`, `u_xx` and the `(x, t)`
/// coordinates of every sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub spatial: Option<DMatrix<f64>>,
    pub coords: Option<Vec<[f64; 2]>>,
    pub derivatives: Option<DMatrix<f64>>,
    pub provenance: Vec<RowSource>,
}

impl Dataset {
    pub fn from_states(inputs: DMatrix<f64>, derivatives: Option<DMatrix<f64>>) -> Self {
        let provenance = (0..inputs.nrows()).map(|index| RowSource::Grid { index }).collect();
        Self { inputs, spatial: None, coords: None, derivatives, provenance }
    }

    /// Trajectory states with finite-difference time derivatives.
    pub fn from_trajectory(traj: &Trajectory) -> Result<Self> {
        let derivatives = finite_difference_time(&traj.states, &traj.grid)?;
        Ok(Self::from_states(traj.states.clone(), Some(derivatives)))
    }

    /// Flattens a field time-major into `n_t·n_x` rows, attaching
    /// finite-difference `u_x`, `u_xx` and `u_t`.
    pub fn from_field(field: &Field) -> Result<Self> {
        let (ux, uxx) = finite_difference_space(field)?;
        let ut = finite_difference_time(&field.values, &field.time)?;
        let (nt, nx) = field.values.shape();
        let n = nt * nx;
        let xs = field.space.points();
        let ts = field.time.times();
        let mut inputs = DMatrix::zeros(n, 1);
        let mut spatial = DMatrix::zeros(n, 2);
        let mut derivatives = DMatrix::zeros(n, 1);
        let mut coords = Vec::with_capacity(n);
        for i in 0..nt {
            for j in 0..nx {
                let r = i * nx + j;
                inputs[(r, 0)] = field.values[(i, j)];
                spatial[(r, 0)] = ux[(i, j)];
                spatial[(r, 1)] = uxx[(i, j)];
                derivatives[(r, 0)] = ut[(i, j)];
                coords.push([xs[j], ts[i]]);
            }
        }
        Ok(Self {
            inputs,
            spatial: Some(spatial),
            coords: Some(coords),
            derivatives: Some(derivatives),
            provenance: (0..n).map(|index| RowSource::Grid { index }).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }

    /// Number of derivative (target) dimensions.
    pub fn target_dims(&self) -> usize {
        self.derivatives.as_ref().map_or(self.inputs.ncols(), |d| d.ncols())
    }

    pub fn require_derivatives(&self) -> Result<&DMatrix<f64>> {
        self.derivatives.as_ref().ok_or_else(|| Error::Precondition("dataset has no time derivatives".into()))
    }

    /// Per-row variables the library is built from.
    pub fn library_variables(&self, mode: LibraryMode) -> Result<DMatrix<f64>> {
        match mode {
            LibraryMode::Ode => Ok(self.inputs.clone()),
            LibraryMode::Pde => {
                let spatial = self.spatial.as_ref().ok_or_else(|| {
                    Error::Precondition("PDE library needs spatial derivatives attached to the dataset".into())
                })?;
                let n = self.n_rows();
                Ok(DMatrix::from_fn(n, 3, |i, j| if j == 0 { self.inputs[(i, 0)] } else { spatial[(i, j - 1)] }))
            }
        }
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let pick = |m: &DMatrix<f64>| DMatrix::from_fn(indices.len(), m.ncols(), |i, j| m[(indices[i], j)]);
        Dataset {
            inputs: pick(&self.inputs),
            spatial: self.spatial.as_ref().map(pick),
            coords: self.coords.as_ref().map(|c| indices.iter().map(|&i| c[i]).collect()),
            derivatives: self.derivatives.as_ref().map(pick),
            provenance: indices.iter().map(|&i| self.provenance[i]).collect(),
        }
    }

    /// Appends the rows of `other`.
    pub fn extend(&mut self, other: &Dataset) -> Result<()> {
        if other.inputs.ncols() != self.inputs.ncols() {
            return Err(Error::arg("cannot concatenate datasets with different widths"));
        }
        let stack = |a: &DMatrix<f64>, b: &DMatrix<f64>| {
            let mut m = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
            m.rows_mut(0, a.nrows()).copy_from(a);
            m.rows_mut(a.nrows(), b.nrows()).copy_from(b);
            m
        };
        self.inputs = stack(&self.inputs, &other.inputs);
        self.spatial = match (&self.spatial, &other.spatial) {
            (Some(a), Some(b)) => Some(stack(a, b)),
            (None, None) => None,
            _ => return Err(Error::arg("cannot mix PDE and ODE rows")),
        };
        self.derivatives = match (&self.derivatives, &other.derivatives) {
            (Some(a), Some(b)) => Some(stack(a, b)),
            (None, None) => None,
            _ => return Err(Error::arg("cannot mix rows with and without derivatives")),
        };
        self.coords = match (self.coords.take(), &other.coords) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self.provenance.extend_from_slice(&other.provenance);
        Ok(())
    }
}
