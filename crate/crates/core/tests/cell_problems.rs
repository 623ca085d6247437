mod common;

use bidomain_homog::cell_problems::{
    compute_effective, dual_forms, scalar_tensor, solve_cell_problems, solve_zeta, Coefficients, EffectiveTensors,
    InterfaceParams, KernelParams,
};
use bidomain_homog::geometry::{build_unit_cell, CellGeometry, CellSpec, Inclusion, Phase, Topology};
use common::*;
use nalgebra::DMatrix;

fn cell(n: usize, topology: Topology, inclusion: Inclusion) -> CellGeometry {
    build_unit_cell(&CellSpec {
        dim: 2,
        n,
        topology,
        inclusion,
    })
    .unwrap()
}

fn boxed(n: usize) -> CellGeometry {
    cell(
        n,
        Topology::Disconnected,
        Inclusion::Box {
            lo: vec![0.25, 0.25],
            hi: vec![0.75, 0.75],
        },
    )
}

fn stationary(cell: &CellGeometry, coeffs: &Coefficients) -> EffectiveTensors {
    let iface = InterfaceParams {
        alpha: 1.0,
        beta: 1.0,
        ell: 0.0,
    };
    let kp = KernelParams::default_for(&iface);
    let corr = solve_cell_problems(cell, coeffs, &iface, &kp, None, false, 1e-13).unwrap();
    compute_effective(cell, coeffs, &iface, &corr, iface.regime()).unwrap()
}

/// Deterministic scalar in `[0.5, 3.5)` for cell `c`.
fn pseudo(c: usize) -> f64 {
    let x = ((c as u64 + 1).wrapping_mul(2654435761) % 1000) as f64 / 1000.0;
    0.5 + 3.0 * x
}

#[test]
fn laminate_gives_harmonic_and_arithmetic_means() {
    let n = 8;
    let g = cell(n, Topology::Disconnected, Inclusion::Empty);
    let layer = |c: usize| 1.0 + (g.mesh.grid.cell_coords(c)[0] % 4) as f64;
    let mut coeffs = Coefficients::scalar(2, n * n, 1.0, 1.0, 1.0);
    for c in 0..n * n {
        coeffs.sigma_int[c] = scalar_tensor(2, layer(c));
    }
    let t = stationary(&g, &coeffs);
    let layers = [1.0, 2.0, 3.0, 4.0];
    let harmonic = 4.0 / layers.iter().map(|s| 1.0 / s).sum::<f64>();
    let arithmetic = layers.iter().sum::<f64>() / 4.0;
    assert!((t.a1[(0, 0)] - harmonic).abs() < 1e-9, "{}", t.a1[(0, 0)]);
    assert!((t.a1[(1, 1)] - arithmetic).abs() < 1e-9, "{}", t.a1[(1, 1)]);
    assert!(t.a1[(0, 1)].abs() < 1e-9);
    // σ_out = 1 everywhere and no inclusion: A2 = I.
    assert!((&t.a2 - DMatrix::identity(2, 2)).amax() < 1e-9);
}

#[test]
fn perforated_a1_matches_dense_energy_minimum() {
    let n = 8;
    let g = boxed(n);
    let mut coeffs = Coefficients::scalar(2, n * n, 1.0, 1.0, 1.0);
    for c in 0..n * n {
        coeffs.sigma_int[c] = scalar_tensor(2, pseudo(c));
    }
    let t = stationary(&g, &coeffs);

    // min over periodic ψ of ∫_{Y_out} σ |e_j + ∇ψ|² / |Y_out|, solved densely.
    let map = solve_zeta(&g, &coeffs, 1e-12).unwrap().map;
    let m = map.len();
    let sigma = |c: usize, p: Phase| (p == Phase::Out).then(|| pseudo(c));
    let mut k = DMatrix::zeros(m, m);
    add_dense_stiffness_2d(&mut k, &g.mesh, (&map, 0), (&map, 0), &sigma);
    let h = g.mesh.grid.h();
    let mut loads = vec![vec![0.0; m]; 2];
    let mut c0 = 0.0;
    for c in 0..n * n {
        let Some(s) = sigma(c, g.mesh.phases[c]) else { continue };
        c0 += s * h * h;
        let nodes = g.mesh.grid.cell_nodes(c);
        for a in 0..4 {
            let r = map.dof(nodes[a], Phase::Out).unwrap();
            for (j, l) in loads.iter_mut().enumerate() {
                l[r] += s * if a >> j & 1 == 1 { h / 2.0 } else { -h / 2.0 };
            }
        }
    }
    // Pin one unknown to remove the constants.
    for i in 0..m {
        k[(0, i)] = 0.0;
        k[(i, 0)] = 0.0;
    }
    k[(0, 0)] = 1.0;
    let psi: Vec<Vec<f64>> = loads
        .iter()
        .map(|l| {
            let mut b: Vec<f64> = l.iter().map(|x| -x).collect();
            b[0] = 0.0;
            solve(&k, &b)
        })
        .collect();
    let vol = g.vol_out();
    for i in 0..2 {
        for j in 0..2 {
            let dot: f64 = loads[i].iter().zip(&psi[j]).map(|(a, b)| a * b).sum();
            let want = (if i == j { c0 } else { 0.0 } + dot) / vol;
            let got = 0.5 * (t.a1[(i, j)] + t.a1[(j, i)]);
            assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "A1[{i}{j}] {got} vs {want}");
        }
    }
}

#[test]
fn dual_forms_agree_with_inclusion() {
    let n = 8;
    let g = boxed(n);
    let mut coeffs = Coefficients::scalar(2, n * n, 1.0, 2.0, 5.0);
    for c in 0..n * n {
        coeffs.sigma_out[c] = scalar_tensor(2, pseudo(c));
    }
    let iface = InterfaceParams {
        alpha: 1.0,
        beta: 1.0,
        ell: 0.0,
    };
    let corr = solve_cell_problems(&g, &coeffs, &iface, &KernelParams::default_for(&iface), None, false, 1e-13)
        .unwrap();
    for f in dual_forms(&g, &coeffs, &corr).unwrap() {
        assert!(f.gap() < 1e-8, "gap {}", f.gap());
    }
}

#[test]
fn disconnected_inclusion_has_zero_a2d() {
    let t = stationary(&boxed(8), &Coefficients::scalar(2, 64, 1.0, 1.0, 5.0));
    assert!(t.a2_d.amax() < 1e-12);
    assert!(t.a2_b[(0, 0)] > 0.0 && t.a2_b[(0, 0)] < 1.0);
    // Symmetric geometry: isotropic tensors.
    assert!((t.a2_b[(0, 0)] - t.a2_b[(1, 1)]).abs() < 1e-9);
}

#[test]
fn connected_inclusion_has_positive_a2d() {
    let g = build_unit_cell(&CellSpec {
        dim: 3,
        n: 8,
        topology: Topology::Connected,
        inclusion: Inclusion::TubeCross { width: 0.25 },
    })
    .unwrap();
    assert_eq!(g.mesh.phase_components(Phase::Int), 1);
    assert_eq!(g.mesh.phase_components(Phase::Out), 1);
    let t = stationary(&g, &Coefficients::scalar(3, 512, 1.0, 1.0, 2.0));
    let ev = t.a2_d.symmetric_eigenvalues();
    assert!(ev.min() > 1e-3, "{ev}");
    // Allowing a jump can only lower the energy: Ã2 ≤ A2.
    let tilde = t.a2_tilde();
    for i in 0..3 {
        assert!(tilde[(i, i)] <= t.a2[(i, i)] + 1e-9);
    }
}

#[test]
fn tensors_scale_with_conductivities() {
    let g = boxed(8);
    let a = stationary(&g, &Coefficients::scalar(2, 64, 1.0, 2.0, 3.0));
    let b = stationary(&g, &Coefficients::scalar(2, 64, 2.5, 5.0, 7.5));
    assert!((&a.a1 * 2.5 - &b.a1).amax() < 1e-9);
    assert!((&a.a2 * 2.5 - &b.a2).amax() < 1e-9);
    assert!((&a.a2_b * 2.5 - &b.a2_b).amax() < 1e-9);
}

#[test]
fn memory_kernel_decays() {
    let g = boxed(8);
    let coeffs = Coefficients::scalar(2, 64, 1.0, 1.0, 5.0);
    let iface = InterfaceParams {
        alpha: 1.0,
        beta: 2.0,
        ell: 1.0,
    };
    let kp = KernelParams::default_for(&iface);
    let corr = solve_cell_problems(&g, &coeffs, &iface, &kp, None, false, 1e-12).unwrap();
    let t = compute_effective(&g, &coeffs, &iface, &corr, iface.regime()).unwrap();
    let kt = t.kernel.unwrap();
    assert_eq!(kt.values.len(), kp.steps + 1);
    assert!(kt.asymmetry() < 1e-6);
    let first = kt.values[0].amax();
    let last = kt.values.last().unwrap().amax();
    assert!(first > 0.0);
    assert!(last < 1e-2 * first, "{last} vs {first}");
}
