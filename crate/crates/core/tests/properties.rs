use bidomain_homog::cell_problems::{EffectiveTensors, InterfaceParams, KernelTable, TensorMeta};
use bidomain_homog::expr::{Expr, Vars};
use bidomain_homog::fem::{assemble_stiffness, DofLayout, DofMap, Region, Tensor};
use bidomain_homog::geometry::{build_unit_cell, CellSpec, Inclusion, Topology};
use bidomain_homog::harness::cache::{decode, encode};
use bidomain_homog::harness::report::{csv_string, fmt_num, svg_plot, PlotSpec, Series};
use bidomain_homog::ionics::{IonicModel, MitchellSchaeffer};
use bidomain_homog::macro_solver::{
    run_macro, KernelConvolution, MacroCoefficients, MacroOptions, MacroSolver, MacroVariant,
};
use bidomain_homog::micro_solver::block_average;
use bidomain_homog::problem::ProblemData;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn spd(d: f64, off: f64) -> Tensor {
    let mut t = Tensor::identity() * d;
    t[(0, 1)] = off;
    t[(1, 0)] = off;
    t[(2, 2)] = 0.0;
    t
}

fn box_cell(n: usize) -> bidomain_homog::geometry::CellGeometry {
    build_unit_cell(&CellSpec {
        dim: 2,
        n,
        topology: Topology::Disconnected,
        inclusion: Inclusion::Box {
            lo: vec![0.25, 0.25],
            hi: vec![0.75, 0.75],
        },
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gating_stays_in_unit_interval(w in 0.0f64..=1.0, p in -2.0f64..2.0, dt in 1e-4f64..1.0) {
        let m = IonicModel::MitchellSchaeffer(MitchellSchaeffer::default());
        let w1 = m.step_gating_value(w, p, dt);
        prop_assert!((0.0..=1.0).contains(&w1), "{w1}");
    }

    #[test]
    fn stiffness_is_symmetric_and_kills_constants(
        diag in prop::collection::vec(0.5f64..4.0, 64),
        off in prop::collection::vec(-0.2f64..0.2, 64),
    ) {
        let g = box_cell(8);
        let sigma: Vec<Option<Tensor>> = diag.iter().zip(&off).map(|(d, o)| Some(spd(*d, *o))).collect();
        let map = DofMap::new(&g.mesh, DofLayout::Continuous);
        let k = assemble_stiffness(&g.mesh, &map, &sigma).unwrap();
        let n = map.len();
        let ones = vec![1.0; n];
        let r = k.matvec(&ones);
        prop_assert!(r.iter().all(|x| x.abs() < 1e-12));
        for i in 0..n {
            for j in 0..n {
                prop_assert!((k.get(i, j) - k.get(j, i)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn block_average_of_constant(c in -10.0f64..10.0, k in prop::sample::select(vec![1usize, 2, 4])) {
        let g = box_cell(8);
        let map = DofMap::new(&g.mesh, DofLayout::Continuous);
        let x = vec![c; map.len()];
        for region in [Region::Y, Region::Out, Region::Int] {
            let avg = block_average(&g.mesh, &map, &x, region, k);
            prop_assert_eq!(avg.len(), k * k);
            // Blocks without cells of the region report 0.
            prop_assert!(avg.iter().all(|a| *a == 0.0 || (a - c).abs() < 1e-12 * c.abs().max(1.0)));
            prop_assert!(avg.iter().any(|a| (a - c).abs() < 1e-12 * c.abs().max(1.0)));
        }
    }

    #[test]
    fn cache_payload_round_trips(
        vals in prop::collection::vec(-1e3f64..1e3, 16),
        kernel_len in 1usize..5,
        area in 0.0f64..4.0,
    ) {
        let m = |o: usize| DMatrix::from_row_slice(2, 2, &vals[o..o + 4]);
        let t = EffectiveTensors {
            dim: 2,
            a1: m(0),
            a2: m(4),
            a2_b: m(8),
            a2_d: m(12),
            kernel: Some(KernelTable { dt: 0.1, values: vec![m(0) * 1e-7; kernel_len] }),
            f_cellflux: Some(vec![[vals[0], vals[1], 0.0]; kernel_len]),
            meta: TensorMeta {
                geometry_hash: "g".into(),
                coefficient_hash: "c".into(),
                vol_out: 0.75,
                vol_int: 0.25,
                interface_area: area,
                dt_kernel: 0.1,
                k: kernel_len - 1,
                tail_bound: vals[3].abs(),
                dual_gap: 1e-13,
            },
        };
        let (key, back) = decode(&encode("abc", &t)).unwrap();
        prop_assert_eq!(key, "abc");
        prop_assert_eq!(back, t);
    }

    #[test]
    fn convolution_is_linear(
        kv in prop::collection::vec(-2.0f64..2.0, 12),
        g in prop::collection::vec(-1.0f64..1.0, 12),
        h in prop::collection::vec(-1.0f64..1.0, 12),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let kernel = KernelTable {
            dt: 0.1,
            values: kv.chunks(4).map(|c| DMatrix::from_row_slice(2, 2, c)).collect(),
        };
        let run = |f: &dyn Fn(usize) -> [f64; 3]| {
            let mut c = KernelConvolution::new(kernel.clone(), 0.05);
            for m in 0..6 {
                c.push(vec![f(m)]);
            }
            (c.convolve(0.25)[0], c.history_term()[0])
        };
        let pick = |v: &[f64], m: usize| [v[2 * m], v[2 * m + 1], 0.0];
        let (cg, hg) = run(&|m| pick(&g, m));
        let (ch, hh) = run(&|m| pick(&h, m));
        let (cs, hs) = run(&|m| {
            let (x, y) = (pick(&g, m), pick(&h, m));
            [a * x[0] + b * y[0], a * x[1] + b * y[1], 0.0]
        });
        for i in 0..2 {
            prop_assert!((cs[i] - (a * cg[i] + b * ch[i])).abs() < 1e-12);
            prop_assert!((hs[i] - (a * hg[i] + b * hh[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn csv_and_svg_are_deterministic(pts in prop::collection::vec((1e-3f64..1.0, 1e-6f64..1.0), 1..8)) {
        let rows: Vec<Vec<String>> = pts.iter().map(|(x, y)| vec![fmt_num(*x), fmt_num(*y)]).collect();
        let a = csv_string(&["x", "y"], &rows).unwrap();
        prop_assert_eq!(&a, &csv_string(&["x", "y"], &rows).unwrap());
        for (r, (x, _)) in rows.iter().zip(&pts) {
            let back: f64 = r[0].parse().unwrap();
            prop_assert!((back - x).abs() <= 1e-12 * x.abs());
        }
        let series = vec![Series { label: "e".into(), points: pts.clone() }];
        let spec = PlotSpec { title: "t".into(), x_label: "x".into(), y_label: "y".into(), log_log: true };
        prop_assert_eq!(svg_plot(&series, &spec), svg_plot(&series, &spec));
    }

    #[test]
    fn affine_expressions_evaluate(a in -5.0f64..5.0, b in -5.0f64..5.0, x in -1.0f64..1.0, t in 0.0f64..2.0) {
        let e = Expr::parse(&format!("({a:e})*x1 + ({b:e})*t")).unwrap();
        let got = e.eval(&Vars::at(&[x, 0.0, 0.0], t));
        prop_assert!((got - (a * x + b * t)).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Without an ionic current the macro bidomain map is linear in its data.
    #[test]
    fn macro_solution_is_linear_in_data(lambda in -4.0f64..4.0) {
        let zero = IonicModel::AffineHh(bidomain_homog::ionics::AffineHh {
            h1: Expr::constant(0.0),
            h2: Expr::constant(0.0),
            ..Default::default()
        });
        let mk = |s: f64| ProblemData {
            f1: Expr::parse(&format!("({s:e})*sin(3*x1)*x2")).unwrap(),
            f2: Expr::parse(&format!("({s:e})*x1")).unwrap(),
            v0: Expr::parse(&format!("({s:e})*x1*(1 - x1)*x2*(1 - x2)")).unwrap(),
            horizon: 0.05,
            ..ProblemData::default()
        };
        let coeffs = MacroCoefficients {
            dim: 2,
            a1: Tensor::identity(),
            a2: Tensor::identity() * 2.0,
            a2_d: Tensor::zeros(),
            kernel: None,
            cellflux: None,
            gamma_ratio: 1.0,
        };
        let iface = InterfaceParams { alpha: 1.0, beta: 1.0, ell: 0.0 };
        let opts = MacroOptions { tol: 1e-14, ..MacroOptions::new(6, 0.01) };
        let run = |s: f64| {
            let sol = MacroSolver::new(MacroVariant::Mid, coeffs.clone(), &iface, &zero, &mk(s), opts).unwrap();
            run_macro(&sol, &[], |_| {}).unwrap().last
        };
        let (one, scaled) = (run(1.0), run(lambda));
        for (x, y) in one.v.iter().chain(&one.u_b).zip(scaled.v.iter().chain(&scaled.u_b)) {
            prop_assert!((lambda * x - y).abs() < 1e-9);
        }
    }
}
