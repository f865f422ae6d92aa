use dirac_edge::edge::{envelope_coords, evolve_envelope};
use dirac_edge::expr::Expr;
use dirac_edge::haldane::{edge_speed_strained, find_dirac_point, pseudo_geometry, HaldaneModel, StrainField, StrainSources};
use dirac_edge::io::{read_dump, write_dump, Dump, DumpData};
use dirac_edge::model::evolve1d::{BlockEvolver, BlockOperator, Grid1};
use dirac_edge::model::ModelCoefficients;
use dirac_edge::pauli::{c, Hermitian2, C64};
use dirac_edge::symbol::{bracket, edge_vector_field, DiracSymbol, PhasePoint};
use dirac_edge::symplectic::{
    reduce_linear_symbol, reduce_linear_symbol_via_quadratic, so3_from_su2, su2_from_so3, symplectic_residual, verify_normal_form, LinearDiracSymbol,
};
use proptest::prelude::*;

fn coeffs() -> impl Strategy<Value = [[f64; 4]; 3]> {
    prop::array::uniform3(prop::array::uniform4(-1.0f64..1.0))
}

fn well_conditioned(c: &[[f64; 4]; 3]) -> bool {
    let s = LinearDiracSymbol::new(*c);
    let k = s.kernel();
    s.min_singular_value() > 0.05 && s.lambda() > 0.1 && k.fixed_rows::<2>(0).norm() > 0.05
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn both_reduction_routes_reach_the_normal_form(cm in coeffs().prop_filter("conditioned", well_conditioned)) {
        let sym = LinearDiracSymbol::new(cm);
        let a = reduce_linear_symbol(&sym).unwrap();
        let b = reduce_linear_symbol_via_quadratic(&sym).unwrap();
        let ra = verify_normal_form(&sym, &a.s, &a.u, a.lambda);
        let rb = verify_normal_form(&sym, &b.s, &b.u, b.lambda);
        prop_assert!(ra.normal_form_residual < 1e-9, "{ra:?}");
        prop_assert!(rb.normal_form_residual < 1e-9, "{rb:?}");
        prop_assert!(symplectic_residual(&a.s) < 1e-9 && symplectic_residual(&b.s) < 1e-9);
        prop_assert!((a.lambda - b.lambda).abs() < 1e-9 * a.lambda.max(1.0));
        prop_assert!((a.lambda - ra.lambda_from_brackets).abs() < 1e-9);
        prop_assert!((a.u.determinant() - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn bracket_is_antisymmetric(f in prop::array::uniform4(-2.0f64..2.0), g in prop::array::uniform4(-2.0f64..2.0)) {
        prop_assert!((bracket(&f, &g) + bracket(&g, &f)).abs() < 1e-12);
        prop_assert!(bracket(&f, &f).abs() < 1e-12);
    }

    #[test]
    fn su2_and_so3_round_trip(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        prop_assume!(n > 0.1);
        let (w, x, y, z) = (w / n, x / n, y / n, z / n);
        let u = dirac_edge::pauli::Mat2::new(c(w, -z), c(-y, -x), c(y, -x), c(w, z));
        let r = so3_from_su2(&u);
        let back = su2_from_so3(&r).unwrap();
        let err = (back - u).norm().min((back + u).norm());
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn eigenvectors_diagonalize_hermitian_matrices(a in -2.0f64..2.0, b in -2.0f64..2.0, cc in -2.0f64..2.0) {
        let m = Hermitian2::new(a, b, cc, 0.0);
        prop_assume!(m.norm_vec() > 1e-3);
        for sign in [-1.0, 1.0] {
            let v = m.eigenvector(sign, 0.0).unwrap();
            let mv = m.apply(&v);
            let lam = C64::new(sign * m.norm_vec(), 0.0);
            prop_assert!((mv - v * lam).norm() < 1e-12 * m.norm_vec().max(1.0));
            prop_assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn edge_field_is_tangent_to_straight_walls(k in -2.0f64..2.0, x1 in -3.0f64..3.0, b in 0.0f64..2.0) {
        let m = format!("x2 - ({k})*x1");
        let sym = DiracSymbol::magnetic(&m, &format!("-({b})*x2"), "0").unwrap();
        let x2 = k * x1;
        let z = PhasePoint::new([x1, x2], [-b * x2, 0.0]);
        let v = edge_vector_field(&sym, &z).unwrap();
        let grad = [-k, 1.0];
        let speed = v[0].hypot(v[1]);
        prop_assert!((grad[0] * v[0] + grad[1] * v[1]).abs() < 1e-9 * speed.max(1.0));
        let expected = (1.0 + k * k).sqrt() / (1.0 + k * k + b * b).sqrt();
        prop_assert!((speed - expected).abs() < 1e-9, "speed {speed} expected {expected}");
    }

    #[test]
    fn envelope_evolution_preserves_norm(rho in 1.0f64..1.6, nu in -0.3f64..0.3, s in -5.0f64..5.0) {
        let (n, len) = (512, 48.0);
        let a0: Vec<C64> = envelope_coords(n, len).iter().map(|&y| c(std::f64::consts::PI.powf(-0.25) * (-0.5 * y * y).exp(), 0.0)).collect();
        let env = evolve_envelope(&a0, len, 0.0, rho, nu, s).unwrap();
        prop_assert!((env.l2() - 1.0).abs() < 1e-10, "l2 {}", env.l2());
    }

    #[test]
    fn symbolic_derivatives_match_differences(a in -2.0f64..2.0, b in -2.0f64..2.0, x in -1.5f64..1.5, y in -1.5f64..1.5) {
        let e = Expr::parse(&format!("({a})*x1^3 + sin(({b})*x2)*exp(x1) + tanh(x1*x2)")).unwrap();
        let h = 1e-5;
        for i in 0..2 {
            let mut p = [x, y];
            let mut q = [x, y];
            p[i] += h;
            q[i] -= h;
            let fd = (e.eval(p) - e.eval(q)) / (2.0 * h);
            let d = e.diff(i).eval([x, y]);
            prop_assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0), "axis {i}: {fd} vs {d}");
        }
    }

    #[test]
    fn dumps_round_trip(rows in 1usize..6, cols in 1usize..6, complex in any::<bool>(), seed in any::<u32>()) {
        let count = rows * cols;
        let vals: Vec<f64> = (0..2 * count).map(|k| ((k as f64 + 1.0) * (seed as f64 + 0.5)).sin()).collect();
        let data = if complex {
            DumpData::Complex(vals.chunks(2).map(|p| c(p[0], p[1])).collect())
        } else {
            DumpData::Real(vals[..count].to_vec())
        };
        let dump = Dump { dims: vec![rows as u64, cols as u64], data };
        let dir = tempfile_dir();
        let p = dir.join(format!("d-{rows}-{cols}-{complex}-{seed}.bin"));
        write_dump(&p, &dump).unwrap();
        prop_assert_eq!(read_dump(&p).unwrap(), dump);
        let _ = std::fs::remove_file(p);
    }

    #[test]
    fn dirac_points_are_zeros_of_omega(a1 in -0.15f64..0.15, a2 in -0.15f64..0.15, m in -0.5f64..0.5) {
        prop_assume!(a1.hypot(a2) < 0.19);
        let model = HaldaneModel::new([a1, a2], m);
        let cone = find_dirac_point(&model, None).unwrap();
        prop_assert!(cone.omega_residual < 1e-12);
        let e = model.bands(cone.xi);
        prop_assert!((e[1] - e[0] - 2.0 * cone.mass.abs()).abs() < 1e-9);
        prop_assert!((cone.mass - 2.0 * m * cone.beta).abs() < 1e-12);
    }

    #[test]
    fn strained_speed_is_below_one(s11 in 0.5f64..1.5, s12 in -0.4f64..0.4, s22 in 0.5f64..1.5, k in -0.5f64..0.5, x1 in -1.0f64..1.0) {
        let src = StrainSources {
            alpha: [[format!("{s11} + ({k})*x2"), format!("{s12}")], [format!("({k})*x1"), format!("{s22}")]],
            shift: ["0".into(), "0".into()],
            m: "x2".into(),
        };
        let strain = StrainField::parse(&src).unwrap();
        let x = [x1, 0.0];
        let geo = pseudo_geometry(&strain, x).unwrap();
        let sp = edge_speed_strained(&strain, x).unwrap();
        prop_assert!(sp.speed <= 1.0 + 1e-12);
        if geo.field_norm > 1e-9 {
            prop_assert!(sp.speed < 1.0);
        }
    }
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join(format!("dirac-edge-props-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn l_block_conserves_mass_and_reverses(amp in 0.0f64..0.4, s0 in -1.0f64..1.0, h in 0.05f64..0.2) {
        let co = ModelCoefficients::parse(&format!("1 + ({amp})*tanh(x)"), "0", &format!("{s0}*cos(x)")).unwrap();
        let grid = Grid1::new(256, 12.0).unwrap();
        let f0: Vec<C64> = grid.coords().iter().map(|&x| C64::from_polar((-x * x / (2.0 * h)).exp(), 0.3 * x / h)).collect();
        let ev = BlockEvolver::new(&co, &grid, BlockOperator::L { h }).unwrap();
        let dt = ev.max_dt() / 8.0;
        let f = ev.evolve(&vec![f0.clone()], 0.3, dt).unwrap();
        let m0 = ev.mass(&vec![f0.clone()]);
        prop_assert!((ev.mass(&f) - m0).abs() < 1e-6 * m0);
        let back = ev.evolve(&f, -0.3, dt).unwrap();
        let err: f64 = back[0].iter().zip(&f0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        prop_assert!(err < 1e-6 * m0.sqrt() / grid.dx().sqrt(), "return error {err}");
    }
}
