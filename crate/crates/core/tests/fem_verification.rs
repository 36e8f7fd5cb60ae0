use hygro::fem::{
    build_mesh, heat_residual, BoundaryConditions, ForwardModel, Kunzel, Mesh,
    MeshSpec, SimState, SolverConfig,
};
use hygro::material::MaterialParams;
use hygro::randfield::ParameterFields;

mod common;

use common::{config, frozen_heat_error, exterior_interior_bc, strip_solution, HOUR};

#[test]
fn strip_oracle_reproduces_initial_and_boundary_data() {
    let (len, alpha) = (0.5, 2e-7);
    assert!((strip_solution(0.0, 1000.0, len, alpha, 14.0, 5.0, 24.0) - 5.0).abs() < 1e-12);
    assert!((strip_solution(len, 1000.0, len, alpha, 14.0, 5.0, 24.0) - 24.0).abs() < 1e-9);
    assert!((strip_solution(0.25, 1.0, len, alpha, 14.0, 5.0, 24.0) - 14.0).abs() < 1e-3);
    let late = strip_solution(0.2, 1e9, len, alpha, 14.0, 5.0, 24.0);
    assert!((late - (5.0 + 19.0 * 0.4)).abs() < 1e-12);
}

#[test]
fn frozen_heat_conduction_matches_series_solution() {
    let coarse = frozen_heat_error(11, 2.0);
    let fine = frozen_heat_error(21, 1.0);
    println!("frozen heat relative max error: coarse {coarse:.3e}, refined {fine:.3e}");
    assert!(fine < 0.01);
    assert!(fine < coarse);
}

#[test]
fn equilibrium_is_a_fixed_point() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let bc = BoundaryConditions {
        exterior_theta: 14.0,
        exterior_phi: 0.5,
        interior_theta: 14.0,
        interior_phi: 0.5,
    };
    let model = ForwardModel::new(mesh.clone(), bc, config(1.0, 20.0, 1e-10), Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let traj = model.solve(&init, &fields, &[10.0 * HOUR, 20.0 * HOUR]).unwrap();
    for s in &traj {
        for n in 0..mesh.node_count() {
            assert!((s.theta[n] - 14.0).abs() < 1e-12);
            assert!((s.phi[n] - 0.5).abs() < 1e-12);
        }
    }
}

#[test]
fn steady_state_heat_flux_balances() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let model = ForwardModel::new(mesh.clone(), exterior_interior_bc(), config(24.0, 1e6, 1e-13), Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let (steady, steps) = model.run_to_steady(&init, &fields, 1e-10, 10_000).unwrap();
    let r = heat_residual(&mesh, &fields, &steady, &Kunzel).unwrap();
    let left: f64 = mesh.dirichlet_left.iter().map(|&n| r[n]).sum();
    let right: f64 = mesh.dirichlet_right.iter().map(|&n| r[n]).sum();
    let balance = (left + right).abs() / left.abs();
    println!("steady after {steps} steps: exterior {left:.6e} W/m, interior {right:.6e} W/m, imbalance {balance:.2e}");
    assert!(left.abs() > 0.0);
    assert!(balance < 1e-6);
}

#[test]
fn default_setup_stays_within_boundary_data() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let model = ForwardModel::new(mesh.clone(), exterior_interior_bc(), config(1.0, 200.0, 1e-8), Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let times: Vec<f64> = (1..=20).map(|k| 10.0 * k as f64 * HOUR).collect();
    let start = std::time::Instant::now();
    let traj = model.solve(&init, &fields, &times).unwrap();
    println!("homogeneous 200 h solve: {:?}", start.elapsed());
    assert_eq!(traj.len(), 20);
    let tol = 1e-6;
    for s in &traj {
        assert!(s.is_finite());
        assert!(s.theta.iter().all(|&t| (5.0 - tol..=24.0 + tol).contains(&t)));
        assert!(s.phi.iter().all(|&p| (0.5 - tol..=0.8 + tol).contains(&p)));
    }
    assert_eq!(traj.last().unwrap().t, 200.0 * HOUR);
}

#[test]
fn empty_and_invalid_record_times() {
    let mesh = build_mesh(0.5, 0.06, 4, 3).unwrap();
    let model = ForwardModel::new(mesh.clone(), exterior_interior_bc(), config(1.0, 10.0, 1e-8), Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    assert!(model.solve(&init, &fields, &[]).unwrap().is_empty());
    assert!(model.solve(&init, &fields, &[11.0 * HOUR]).is_err());
    assert!(model.solve(&init, &fields, &[5.0 * HOUR, 2.0 * HOUR]).is_err());
    let bad = SolverConfig { dt: 0.0, ..config(1.0, 10.0, 1e-8) };
    assert!(ForwardModel::new(mesh, exterior_interior_bc(), bad, Kunzel).is_err());
}

#[test]
fn picard_tolerance_self_convergence() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let run = |tol: f64| {
        ForwardModel::new(mesh.clone(), exterior_interior_bc(), config(2.0, 100.0, tol), Kunzel)
            .unwrap()
            .solve(&init, &fields, &[50.0 * HOUR, 100.0 * HOUR])
            .unwrap()
    };
    let tol = 1e-6;
    let (a, b) = (run(tol), run(2.0 * tol));
    for (sa, sb) in a.iter().zip(&b) {
        for n in 0..mesh.node_count() {
            assert!((sa.theta[n] - sb.theta[n]).abs() / sa.theta[n].abs() < 10.0 * tol);
            assert!((sa.phi[n] - sb.phi[n]).abs() / sa.phi[n].abs() < 10.0 * tol);
        }
    }
}

#[test]
fn diverged_step_reports_diagnostics() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let cfg = SolverConfig {
        picard_max: 1,
        ..config(50.0, 100.0, 1e-14)
    };
    let model = ForwardModel::new(mesh.clone(), exterior_interior_bc(), cfg, Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    match model.solve(&init, &fields, &[50.0 * HOUR]) {
        Err(hygro::fem::FemError::Diverged { iterations, increment, .. }) => {
            assert_eq!(iterations, 1);
            assert!(increment > 1e-14);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn bit_identical_reruns() {
    let mesh = Mesh::from_spec(&MeshSpec::WALL).unwrap();
    let model = ForwardModel::new(mesh.clone(), exterior_interior_bc(), config(4.0, 40.0, 1e-8), Kunzel).unwrap();
    let fields = ParameterFields::uniform(MaterialParams::MASONRY_MEAN, mesh.element_count());
    let init = SimState::uniform(mesh.node_count(), 14.0, 0.5);
    let a = model.solve(&init, &fields, &[40.0 * HOUR]).unwrap();
    let b = model.solve(&init, &fields, &[40.0 * HOUR]).unwrap();
    assert_eq!(a, b);
}
