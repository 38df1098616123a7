use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LibraryMode {
    /// Monomials of the state variables.
    Ode,
    /// Monomials of `(u, u_x, u_xx)`.
    Pde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    StateMonomial,
    FieldMonomial,
}

/// One candidate function: a monomial given by its exponent tuple.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub kind: BasisKind,
    pub exponents: Vec<u32>,
    pub name: String,
}

impl BasisDescriptor {
    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    pub fn evaluate(&self, vars: &[f64]) -> f64 {
        self.exponents.iter().zip(vars).map(|(&e, &v)| v.powi(e as i32)).product()
    }
}

fn state_names(d: usize) -> Vec<String> {
    match d {
        1 => vec!["x".into()],
        2 => vec!["x".into(), "y".into()],
        3 => vec!["x".into(), "y".into(), "z".into()],
        _ => (1..=d).map(|i| format!("x{i}")).collect(),
    }
}

fn monomial_name(exponents: &[u32], vars: &[String]) -> String {
    let name: String = exponents
        .iter()
        .zip(vars)
        .filter(|(&e, _)| e > 0)
        .map(|(&e, v)| if e == 1 { v.clone() } else { format!("{v}^{e}") })
        .collect();
    if name.is_empty() {
        "1".into()
    } else {
        name
    }
}

/// Exponent tuples of total degree `degree`, graded-lexicographic order
/// (`x², xy, xz, y², yz, z²` for three variables).
fn exponents_of_degree(n_vars: usize, degree: u32) -> Vec<Vec<u32>> {
    fn rec(start: usize, left: u32, n: usize, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if left == 0 {
            out.push(cur.clone());
            return;
        }
        for v in start..n {
            cur[v] += 1;
            rec(v, left - 1, n, cur, out);
            cur[v] -= 1;
        }
    }
    let mut out = Vec::new();
    rec(0, degree, n_vars, &mut vec![0; n_vars], &mut out);
    out
}

/// Ordered set of candidate functions over a fixed variable list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSet {
    pub mode: LibraryMode,
    pub variables: Vec<String>,
    pub descriptors: Vec<BasisDescriptor>,
}

impl BasisSet {
    /// All monomials of total degree `≤ max_degree` in `n_vars` state variables.
    pub fn polynomial(n_vars: usize, max_degree: u32) -> Result<Self> {
        if n_vars == 0 {
            return Err(Error::arg("library needs at least one state variable"));
        }
        if max_degree < 1 {
            return Err(Error::arg("polynomial library needs max degree >= 1"));
        }
        Ok(Self::monomials(LibraryMode::Ode, state_names(n_vars), max_degree))
    }

    /// Monomials over `(u, u_x, u_xx)`; degree 2 gives the ten-term basis
    /// `1, u, u_x, u_xx, u^2, uu_x, uu_xx, u_x^2, u_xu_xx, u_xx^2`.
    pub fn pde(max_degree: u32) -> Result<Self> {
        if max_degree < 1 {
            return Err(Error::arg("PDE library needs max degree >= 1"));
        }
        Ok(Self::monomials(LibraryMode::Pde, vec!["u".into(), "u_x".into(), "u_xx".into()], max_degree))
    }

    fn monomials(mode: LibraryMode, variables: Vec<String>, max_degree: u32) -> Self {
        let kind = match mode {
            LibraryMode::Ode => BasisKind::StateMonomial,
            LibraryMode::Pde => BasisKind::FieldMonomial,
        };
        let descriptors = (0..=max_degree)
            .flat_map(|deg| exponents_of_degree(variables.len(), deg))
            .map(|exponents| BasisDescriptor { kind, name: monomial_name(&exponents, &variables), exponents })
            .collect();
        Self { mode, variables, descriptors }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.descriptors.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }

    pub fn evaluate_row(&self, vars: &[f64]) -> Vec<f64> {
        self.descriptors.iter().map(|d| d.evaluate(vars)).collect()
    }

    /// Evaluates every descriptor on each row of `vars` (one variable per column).
    pub fn evaluate(&self, vars: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(vars.nrows(), self.len(), |i, j| {
            let d = &self.descriptors[j];
            d.exponents.iter().enumerate().map(|(k, &e)| vars[(i, k)].powi(e as i32)).product()
        })
    }
}

/// Descriptors plus the evaluated `N × m` feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateLibrary {
    pub basis: BasisSet,
    pub theta: DMatrix<f64>,
}

impl CandidateLibrary {
    pub fn new(basis: BasisSet, dataset: &Dataset) -> Result<Self> {
        let vars = dataset.library_variables(basis.mode)?;
        if vars.ncols() != basis.variables.len() {
            return Err(Error::arg(format!(
                "library expects {} variables, dataset provides {}",
                basis.variables.len(),
                vars.ncols()
            )));
        }
        let theta = basis.evaluate(&vars);
        Ok(Self { basis, theta })
    }

    pub fn n_rows(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_basis(&self) -> usize {
        self.theta.ncols()
    }
}

/// Builds the candidate library for `dataset`.
pub fn build_library(dataset: &Dataset, max_degree: u32, mode: LibraryMode) -> Result<CandidateLibrary> {
    let basis = match mode {
        LibraryMode::Ode => BasisSet::polynomial(dataset.inputs.ncols(), max_degree)?,
        LibraryMode::Pde => BasisSet::pde(max_degree)?,
    };
    CandidateLibrary::new(basis, dataset)
}
