use crate::material::{
    saturation_pressure, saturation_pressure_slope, Coefficients, LocalState, MaterialError,
    MaterialParams,
};
use crate::randfield::ParameterFields;

use super::band::BandMatrix;
use super::mesh::Mesh;
use super::{FemError, SimState};

/// Source of the transport coefficients at one element.
pub trait TransportModel: Send + Sync {
    fn coefficients(&self, p: &MaterialParams, s: LocalState) -> Result<Coefficients, MaterialError>;
}

/// Künzel's state dependent coefficient laws.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kunzel;

impl TransportModel for Kunzel {
    fn coefficients(&self, p: &MaterialParams, s: LocalState) -> Result<Coefficients, MaterialError> {
        Coefficients::evaluate(p, s)
    }
}

/// Fixed coefficients, independent of material and state. Used for
/// verification against linear problems with known solutions.
#[derive(Debug, Clone, Copy)]
pub struct FrozenCoefficients(pub Coefficients);

impl FrozenCoefficients {
    /// Pure heat conduction with conductivity `k` and volumetric capacity `c`;
    /// the moisture equation becomes an independent unit diffusion problem.
    pub fn heat_only(k: f64, c: f64) -> Self {
        FrozenCoefficients(Coefficients {
            heat_capacity: c,
            moisture_capacity: 1.0,
            conductivity: k,
            liquid_conduction: 0.0,
            vapour_permeability: 0.0,
            evaporation_enthalpy: 0.0,
            saturation_pressure: 0.0,
            saturation_pressure_slope: 0.0,
        })
    }
}

impl TransportModel for FrozenCoefficients {
    fn coefficients(&self, _: &MaterialParams, _: LocalState) -> Result<Coefficients, MaterialError> {
        Ok(self.0)
    }
}

/// Index of the temperature unknown of `node`.
#[inline]
pub fn theta_dof(node: usize) -> usize {
    2 * node
}

/// Index of the moisture unknown of `node`.
#[inline]
pub fn phi_dof(node: usize) -> usize {
    2 * node + 1
}

/// Half bandwidth in degrees of freedom of operators on `mesh`.
pub fn dof_bandwidth(mesh: &Mesh) -> usize {
    2 * mesh.node_bandwidth() + 1
}

/// Discrete operators of the linearized system `C du/dt + K u = f`.
///
/// Unknowns are interleaved per node as (θ, φ). The vapour pressure
/// `φ p_sat(θ)` is interpolated nodally and linearized around the state the
/// operators were assembled at, which contributes the source `f`.
#[derive(Debug, Clone)]
pub struct Operators {
    /// Lumped capacity, one entry per unknown.
    pub capacity: Vec<f64>,
    pub conductivity: BandMatrix,
    pub source: Vec<f64>,
}

fn element_state(mesh: &Mesh, e: usize, state: &SimState) -> LocalState {
    let n = mesh.elements[e];
    LocalState::new(
        (state.theta[n[0]] + state.theta[n[1]] + state.theta[n[2]]) / 3.0,
        (state.phi[n[0]] + state.phi[n[1]] + state.phi[n[2]]) / 3.0,
    )
}

fn check_sizes(mesh: &Mesh, fields: &ParameterFields, state: &SimState) -> Result<(), FemError> {
    if fields.len() != mesh.element_count() {
        return Err(FemError::FieldSize {
            got: fields.len(),
            expected: mesh.element_count(),
        });
    }
    if state.theta.len() != mesh.node_count() || state.phi.len() != mesh.node_count() {
        return Err(FemError::FieldSize {
            got: state.theta.len(),
            expected: mesh.node_count(),
        });
    }
    Ok(())
}

/// Assembles capacity, conductivity and linearization source at `state`.
pub fn assemble_system<M: TransportModel + ?Sized>(
    mesh: &Mesh,
    fields: &ParameterFields,
    state: &SimState,
    model: &M,
) -> Result<Operators, FemError> {
    let dofs = 2 * mesh.node_count();
    let bw = dof_bandwidth(mesh);
    let mut ops = Operators {
        capacity: vec![0.0; dofs],
        conductivity: BandMatrix::new(dofs, bw, bw),
        source: vec![0.0; dofs],
    };
    assemble_into(mesh, fields, state, model, &mut ops)?;
    Ok(ops)
}

pub(crate) fn assemble_into<M: TransportModel + ?Sized>(
    mesh: &Mesh,
    fields: &ParameterFields,
    state: &SimState,
    model: &M,
    ops: &mut Operators,
) -> Result<(), FemError> {
    check_sizes(mesh, fields, state)?;
    ops.capacity.iter_mut().for_each(|v| *v = 0.0);
    ops.source.iter_mut().for_each(|v| *v = 0.0);
    ops.conductivity.clear();

    // Nodal linearization of the vapour pressure: p ≈ a φ + s (θ - θ_k).
    let nodal: Vec<(f64, f64)> = state
        .theta
        .iter()
        .zip(&state.phi)
        .map(|(&t, &p)| {
            let s = LocalState::new(t, p);
            (saturation_pressure(s), p * saturation_pressure_slope(s))
        })
        .collect();

    for (e, (nodes, geo)) in mesh.elements.iter().zip(&mesh.geometry).enumerate() {
        let local = element_state(mesh, e, state);
        let c = model
            .coefficients(&fields.values[e], local)
            .map_err(|source| FemError::Material { element: e, source })?;
        let lumped = geo.area / 3.0;
        let delta = c.vapour_permeability;
        let latent = c.evaporation_enthalpy * delta;
        for (i, &ni) in nodes.iter().enumerate() {
            ops.capacity[theta_dof(ni)] += c.heat_capacity * lumped;
            ops.capacity[phi_dof(ni)] += c.moisture_capacity * lumped;
            for (j, &nj) in nodes.iter().enumerate() {
                let g = geo.stiffness[i][j];
                let (a, s) = nodal[nj];
                let k = &mut ops.conductivity;
                k.add(theta_dof(ni), theta_dof(nj), (c.conductivity + latent * s) * g);
                k.add(theta_dof(ni), phi_dof(nj), latent * a * g);
                k.add(phi_dof(ni), theta_dof(nj), delta * s * g);
                k.add(phi_dof(ni), phi_dof(nj), (c.liquid_conduction + delta * a) * g);
                ops.source[theta_dof(ni)] += latent * s * g * state.theta[nj];
                ops.source[phi_dof(ni)] += delta * s * g * state.theta[nj];
            }
        }
    }
    Ok(())
}

/// Net heat flow out of the domain at every node, `Σ (λ∇θ + h_v δ_p ∇p)·n`
/// in discrete form, with coefficients evaluated at `state` itself.
///
/// At a steady state the entries of free nodes vanish and the Dirichlet
/// nodes carry the boundary heat flows [W per metre of depth].
pub fn heat_residual<M: TransportModel + ?Sized>(
    mesh: &Mesh,
    fields: &ParameterFields,
    state: &SimState,
    model: &M,
) -> Result<Vec<f64>, FemError> {
    check_sizes(mesh, fields, state)?;
    let pressure: Vec<f64> = state
        .theta
        .iter()
        .zip(&state.phi)
        .map(|(&t, &p)| p * saturation_pressure(LocalState::new(t, p)))
        .collect();
    let mut r = vec![0.0; mesh.node_count()];
    for (e, (nodes, geo)) in mesh.elements.iter().zip(&mesh.geometry).enumerate() {
        let c = model
            .coefficients(&fields.values[e], element_state(mesh, e, state))
            .map_err(|source| FemError::Material { element: e, source })?;
        let latent = c.evaporation_enthalpy * c.vapour_permeability;
        for (i, &ni) in nodes.iter().enumerate() {
            for (j, &nj) in nodes.iter().enumerate() {
                let g = geo.stiffness[i][j];
                r[ni] += g * (c.conductivity * state.theta[nj] + latent * pressure[nj]);
            }
        }
    }
    Ok(r)
}
