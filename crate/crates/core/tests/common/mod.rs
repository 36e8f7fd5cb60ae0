#![allow(dead_code)]

use std::f64::consts::PI;

use hygro::fem::{build_mesh, BoundaryConditions, ForwardModel, FrozenCoefficients, SimState, SolverConfig};
use hygro::material::MaterialParams;
use hygro::randfield::ParameterFields;

pub const HOUR: f64 = 3600.0;

pub fn exterior_interior_bc() -> BoundaryConditions {
    BoundaryConditions {
        exterior_theta: 5.0,
        exterior_phi: 0.5,
        interior_theta: 24.0,
        interior_phi: 0.8,
    }
}

pub fn config(dt_h: f64, t_end_h: f64, tol: f64) -> SolverConfig {
    SolverConfig {
        dt: dt_h * HOUR,
        t_end: t_end_h * HOUR,
        picard_tol: tol,
        picard_max: 100,
    }
}

/// Separation-of-variables solution of u_t = α u_xx on (0, L) with
/// u(0) = left, u(L) = right and u(x, 0) = init.
pub fn strip_solution(x: f64, t: f64, len: f64, alpha: f64, init: f64, left: f64, right: f64) -> f64 {
    let c0 = init - left;
    let d = right - left;
    let mut u = left + d * x / len;
    for n in 1..=2000 {
        let nf = n as f64;
        let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
        let b = 2.0 / (nf * PI) * (c0 * (1.0 - sign) + d * sign);
        let k = nf * PI / len;
        let decay = (-alpha * k * k * t).exp();
        if decay < 1e-300 {
            break;
        }
        u += b * (k * x).sin() * decay;
    }
    u
}

/// Relative max-norm error of a frozen-coefficient heat run against the
/// series solution after 50 h.
pub fn frozen_heat_error(nx: usize, dt_h: f64) -> f64 {
    let (k, c) = (0.3, 1.485e6);
    let mesh = build_mesh(0.5, 0.06, nx, 3).unwrap();
    let model = ForwardModel::new(
        mesh.clone(),
        exterior_interior_bc(),
        config(dt_h, 50.0, 1e-12),
        FrozenCoefficients::heat_only(k, c),
    )
    .unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let traj = model.solve(&init, &fields, &[50.0 * HOUR]).unwrap();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for (n, x) in mesh.nodes.iter().enumerate() {
        let exact = strip_solution(x[0], 50.0 * HOUR, 0.5, k / c, 14.0, 5.0, 24.0);
        err = err.max((traj[0].theta[n] - exact).abs());
        scale = scale.max(exact.abs());
    }
    err / scale
}
