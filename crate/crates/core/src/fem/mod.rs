//! Transient coupled heat and moisture transport on linear triangles.

mod assembly;
mod band;
mod mesh;
mod solver;

pub use assembly::{
    assemble_system, dof_bandwidth, heat_residual, phi_dof, theta_dof, FrozenCoefficients, Kunzel,
    Operators, TransportModel,
};
pub use band::BandMatrix;
pub use mesh::{build_mesh, ElementGeometry, Mesh, MeshSpec};
pub use solver::{BoundaryConditions, ForwardModel, SolverConfig, Trajectory};

use thiserror::Error;

use crate::material::MaterialError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FemError {
    #[error("mesh: {0}")]
    Mesh(String),
    #[error("element {element}: {source}")]
    Material {
        element: usize,
        #[source]
        source: MaterialError,
    },
    #[error("field has {got} entries, expected {expected}")]
    FieldSize { got: usize, expected: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("singular linear system at t = {t} s")]
    Singular { t: f64 },
    #[error(
        "Picard iteration diverged at t = {t} s after {iterations} iterations \
         (last relative increment {increment:e})"
    )]
    Diverged {
        t: f64,
        iterations: usize,
        increment: f64,
    },
}

/// Nodal temperatures [°C] and relative humidities [-] at time `t` [s].
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub t: f64,
}

impl SimState {
    pub fn uniform(nodes: usize, theta: f64, phi: f64) -> Self {
        SimState {
            theta: vec![theta; nodes],
            phi: vec![phi; nodes],
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().chain(&self.phi).all(|v| v.is_finite())
    }
}
