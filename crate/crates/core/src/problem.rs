//! The data `(Ω, a, V)` of a magnetic Schrödinger operator on one lattice.

use crate::error::{Error, Result};
use crate::gauge::CubeProblem;
use crate::grid::{CubeWindow, DomainMask, Lattice, ScalarField, VectorField};
use crate::spectrum::MagneticOperator;

#[derive(Clone, Debug)]
pub struct Problem {
    pub omega: DomainMask,
    pub a: VectorField,
    pub v: ScalarField,
}

impl Problem {
    pub fn new(omega: DomainMask, a: VectorField, v: ScalarField) -> Result<Self> {
        if omega.lattice() != a.lattice() || omega.lattice() != v.lattice() {
            return Err(Error::ShapeMismatch("Ω, a and V must share a lattice".into()));
        }
        let v = v.into_potential()?;
        Ok(Self { omega, a, v })
    }

    pub fn lattice(&self) -> &Lattice {
        self.omega.lattice()
    }

    pub fn dim(&self) -> usize {
        self.lattice().dim()
    }

    pub fn cube(&self, cube: &CubeWindow) -> Result<CubeProblem> {
        CubeProblem::new(cube, &self.omega, &self.a, &self.v)
    }

    /// Dirichlet operator on Ω.
    pub fn operator(&self) -> Result<MagneticOperator> {
        MagneticOperator::new(&self.omega, &self.a, &self.v)
    }

    /// `Ω ∖ B̄_R(center)` with the same fields.
    pub fn without_ball(&self, center: &[f64; 3], radius: f64) -> Self {
        Self {
            omega: self.omega.without_ball(center, radius),
            ..self.clone()
        }
    }

    pub fn with_omega(&self, omega: DomainMask) -> Result<Self> {
        Self::new(omega, self.a.clone(), self.v.clone())
    }
}
