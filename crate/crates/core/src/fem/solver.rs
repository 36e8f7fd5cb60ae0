use serde::{Deserialize, Serialize};

use crate::randfield::ParameterFields;

use super::assembly::{assemble_into, dof_bandwidth, phi_dof, theta_dof, Operators, TransportModel};
use super::band::BandMatrix;
use super::mesh::Mesh;
use super::{FemError, SimState};

/// Time stepping and Picard controls. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FemError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(FemError::Config(format!("t_end must be non-negative, got {}", self.t_end)));
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return Err(FemError::Config("Picard tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Prescribed (θ, φ) on the exterior (x₁ = 0) and interior (x₁ = width) edges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConditions {
    pub exterior_theta: f64,
    pub exterior_phi: f64,
    pub interior_theta: f64,
    pub interior_phi: f64,
}

/// Snapshots at the requested record times.
pub type Trajectory = Vec<SimState>;

struct Workspace {
    ops: Operators,
    system: BandMatrix,
    rhs: Vec<f64>,
}

impl Workspace {
    fn new(mesh: &Mesh) -> Self {
        let dofs = 2 * mesh.node_count();
        let bw = dof_bandwidth(mesh);
        Workspace {
            ops: Operators {
                capacity: vec![0.0; dofs],
                conductivity: BandMatrix::new(dofs, bw, bw),
                source: vec![0.0; dofs],
            },
            system: BandMatrix::new(dofs, bw, bw),
            rhs: vec![0.0; dofs],
        }
    }
}

/// Backward Euler in time with a Picard loop that re-evaluates every
/// coefficient at the latest iterate.
#[derive(Debug, Clone)]
pub struct ForwardModel<M> {
    pub mesh: Mesh,
    pub bc: BoundaryConditions,
    pub config: SolverConfig,
    pub model: M,
}

impl<M: TransportModel> ForwardModel<M> {
    pub fn new(mesh: Mesh, bc: BoundaryConditions, config: SolverConfig, model: M) -> Result<Self, FemError> {
        config.validate()?;
        Ok(ForwardModel { mesh, bc, config, model })
    }

    /// Writes the Dirichlet values into `state`.
    pub fn apply_boundary(&self, state: &mut SimState) {
        for &n in &self.mesh.dirichlet_left {
            state.theta[n] = self.bc.exterior_theta;
            state.phi[n] = self.bc.exterior_phi;
        }
        for &n in &self.mesh.dirichlet_right {
            state.theta[n] = self.bc.interior_theta;
            state.phi[n] = self.bc.interior_phi;
        }
    }

    fn dirichlet_values(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let ext = self.mesh.dirichlet_left.iter().flat_map(move |&n| {
            [(theta_dof(n), self.bc.exterior_theta), (phi_dof(n), self.bc.exterior_phi)]
        });
        let int = self.mesh.dirichlet_right.iter().flat_map(move |&n| {
            [(theta_dof(n), self.bc.interior_theta), (phi_dof(n), self.bc.interior_phi)]
        });
        ext.chain(int)
    }

    /// Advances `state` by one implicit Euler step of length `dt`.
    pub fn step(&self, state: &SimState, fields: &ParameterFields, dt: f64) -> Result<SimState, FemError> {
        let mut ws = Workspace::new(&self.mesh);
        self.step_with(state, fields, dt, &mut ws)
    }

    fn step_with(
        &self,
        previous: &SimState,
        fields: &ParameterFields,
        dt: f64,
        ws: &mut Workspace,
    ) -> Result<SimState, FemError> {
        let t = previous.t + dt;
        let mut iterate = previous.clone();
        iterate.t = t;
        self.apply_boundary(&mut iterate);
        let mut increment = f64::INFINITY;
        for _ in 0..self.config.picard_max {
            assemble_into(&self.mesh, fields, &iterate, &self.model, &mut ws.ops)?;

            ws.system.clone_from(&ws.ops.conductivity);
            for (n, cap) in ws.ops.capacity.iter().enumerate() {
                ws.system.add(n, n, cap / dt);
            }
            for n in 0..self.mesh.node_count() {
                ws.rhs[theta_dof(n)] =
                    ws.ops.capacity[theta_dof(n)] / dt * previous.theta[n] + ws.ops.source[theta_dof(n)];
                ws.rhs[phi_dof(n)] =
                    ws.ops.capacity[phi_dof(n)] / dt * previous.phi[n] + ws.ops.source[phi_dof(n)];
            }
            for (dof, value) in self.dirichlet_values() {
                ws.system.impose_dirichlet(&mut ws.rhs, dof, value);
            }
            ws.system
                .solve_in_place(&mut ws.rhs)
                .ok_or(FemError::Singular { t })?;

            let mut d_theta = 0.0f64;
            let mut d_phi = 0.0f64;
            let mut max_theta = 1.0f64;
            let mut max_phi = f64::MIN_POSITIVE;
            for n in 0..self.mesh.node_count() {
                let th = ws.rhs[theta_dof(n)];
                let ph = ws.rhs[phi_dof(n)];
                d_theta = d_theta.max((th - iterate.theta[n]).abs());
                d_phi = d_phi.max((ph - iterate.phi[n]).abs());
                max_theta = max_theta.max(th.abs());
                max_phi = max_phi.max(ph.abs());
                iterate.theta[n] = th;
                iterate.phi[n] = ph;
            }
            if !iterate.is_finite() {
                return Err(FemError::Diverged {
                    t,
                    iterations: self.config.picard_max,
                    increment: f64::NAN,
                });
            }
            increment = (d_theta / max_theta).max(d_phi / max_phi);
            if increment < self.config.picard_tol {
                return Ok(iterate);
            }
        }
        Err(FemError::Diverged {
            t,
            iterations: self.config.picard_max,
            increment,
        })
    }

    /// Integrates from `initial` and returns snapshots at `record_times`
    /// (ascending, within `[initial.t, t_end]`). Steps are shortened so that
    /// every record time is hit exactly.
    pub fn solve(
        &self,
        initial: &SimState,
        fields: &ParameterFields,
        record_times: &[f64],
    ) -> Result<Trajectory, FemError> {
        if record_times.windows(2).any(|w| w[1] < w[0]) {
            return Err(FemError::Config("record times must be ascending".into()));
        }
        if let Some(&last) = record_times.last() {
            if last > self.config.t_end * (1.0 + 1e-12) {
                return Err(FemError::Config(format!(
                    "record time {last} s beyond t_end {} s",
                    self.config.t_end
                )));
            }
        }
        if let Some(&first) = record_times.first() {
            if first < initial.t {
                return Err(FemError::Config(format!("record time {first} s precedes initial state")));
            }
        }
        let mut ws = Workspace::new(&self.mesh);
        let mut state = initial.clone();
        let mut out = Vec::with_capacity(record_times.len());
        let eps = 1e-9 * self.config.dt;
        for &target in record_times {
            while target - state.t > eps {
                let dt = self.config.dt.min(target - state.t);
                let mut next = self.step_with(&state, fields, dt, &mut ws)?;
                if (target - next.t).abs() <= eps {
                    next.t = target;
                }
                state = next;
            }
            let mut snap = state.clone();
            snap.t = target;
            out.push(snap);
        }
        Ok(out)
    }

    /// Runs fixed steps until the max-norm change per step drops below `tol`.
    /// Returns the final state and the number of steps taken.
    pub fn run_to_steady(
        &self,
        initial: &SimState,
        fields: &ParameterFields,
        tol: f64,
        max_steps: usize,
    ) -> Result<(SimState, usize), FemError> {
        let mut ws = Workspace::new(&self.mesh);
        let mut state = initial.clone();
        for k in 1..=max_steps {
            let next = self.step_with(&state, fields, self.config.dt, &mut ws)?;
            let change = state
                .theta
                .iter()
                .zip(&next.theta)
                .chain(state.phi.iter().zip(&next.phi))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            state = next;
            if change < tol {
                return Ok((state, k));
            }
        }
        Err(FemError::Diverged {
            t: state.t,
            iterations: max_steps,
            increment: f64::NAN,
        })
    }
}
