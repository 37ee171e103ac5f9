use diffract::config::{parse_config, ExperimentConfig};
use diffract::forward::{data_fidelity, simulate_measurements, ScatteringDataset, SimulationOptions};
use diffract::geometry::{build_grid, circular_layout, Layout, PhysicsConfig};
use diffract::gradient::gradient_data_fidelity;
use diffract::io::{read_dataset, write_dataset};
use diffract::krylov::KrylovOptions;
use diffract::operators::{BoxConstraint, OperatorBundle};
use diffract::optim::next_t;
use diffract::phantom::{shepp_logan, snr_db};
use diffract::special::scalar_green;
use diffract::tv::{prox_tv_box, tv_value};
use diffract::Complex64;
use proptest::prelude::*;

fn phys() -> PhysicsConfig {
    PhysicsConfig::new(0.0749, 1.0).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_is_centred(dim in 2usize..=3, side in 2usize..10, pitch in 1e-3f64..1.0) {
        let g = build_grid(dim, side, pitch).unwrap();
        let pts = g.points();
        for a in 0..dim {
            let s: f64 = pts.iter().map(|p| p[a]).sum();
            prop_assert!(s.abs() <= 1e-12 * pitch * pts.len() as f64 * side as f64);
            let lo = pts.iter().map(|p| p[a]).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p[a]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!((lo + hi).abs() <= 1e-12 * side as f64 * pitch);
            prop_assert!((hi - lo - (side - 1) as f64 * pitch).abs() <= 1e-12 * side as f64 * pitch);
        }
    }

    #[test]
    fn green_is_reciprocal(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, dim in 2usize..=3) {
        let z = if dim == 2 { 0.0 } else { z };
        prop_assume!((x * x + y * y + z * z).sqrt() > 1e-6);
        let a = scalar_green(&[x, y, z], &phys(), dim).unwrap();
        let b = scalar_green(&[-x, -y, -z], &phys(), dim).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn system_operator_is_linear(u in complex_vec(64), v in complex_vec(64), a in -2.0f64..2.0, b in -2.0f64..2.0,
                                 f in prop::collection::vec(0.0f64..1.0, 64)) {
        let grid = build_grid(2, 8, 0.01).unwrap();
        let bundle = OperatorBundle::new(&grid, &phys(), &circular_layout(2, 6, 0.3, 0.0)).unwrap();
        let combo: Vec<Complex64> = u.iter().zip(&v).map(|(p, q)| p * a + q * b).collect();
        let lhs = bundle.apply_a(&f, &combo).unwrap();
        let (au, av) = (bundle.apply_a(&f, &u).unwrap(), bundle.apply_a(&f, &v).unwrap());
        let rhs: Vec<Complex64> = au.iter().zip(&av).map(|(p, q)| p * a + q * b).collect();
        let diff: Vec<Complex64> = lhs.iter().zip(&rhs).map(|(p, q)| p - q).collect();
        prop_assert!(cnorm(&diff) <= 1e-12 * (1.0 + cnorm(&rhs)));
        let hl = bundle.apply_h(1, &combo).unwrap();
        let (hu, hv) = (bundle.apply_h(1, &u).unwrap(), bundle.apply_h(1, &v).unwrap());
        let diff: Vec<Complex64> = hl.iter().zip(hu.iter().zip(&hv)).map(|(l, (p, q))| l - (p * a + q * b)).collect();
        prop_assert!(cnorm(&diff) <= 1e-12 * (1.0 + cnorm(&hl)));
    }

    #[test]
    fn prox_is_feasible_and_beats_clipping(z in prop::collection::vec(-1.0f64..2.0, 64), lambda in 0.0f64..0.5) {
        let grid = build_grid(2, 8, 0.01).unwrap();
        let bounds = BoxConstraint::new(0.0, 1.0).unwrap();
        let x = prox_tv_box(&grid, &z, lambda, bounds, 200).unwrap();
        prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
        let obj = |w: &[f64]| {
            0.5 * w.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + lambda * tv_value(w, &grid).unwrap()
        };
        let clip: Vec<f64> = z.iter().map(|&v| bounds.clip(v)).collect();
        prop_assert!(obj(&x) <= obj(&clip) + 1e-9);
    }

    #[test]
    fn prox_is_nonexpansive(z1 in prop::collection::vec(-1.0f64..2.0, 64), z2 in prop::collection::vec(-1.0f64..2.0, 64),
                            lambda in 0.0f64..0.5) {
        let grid = build_grid(2, 8, 0.01).unwrap();
        let bounds = BoxConstraint::new(0.0, 1.0).unwrap();
        let x1 = prox_tv_box(&grid, &z1, lambda, bounds, 50).unwrap();
        let x2 = prox_tv_box(&grid, &z2, lambda, bounds, 50).unwrap();
        let dx: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| a - b).collect();
        let dz: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&dx) <= (1.0 + 1e-3) * norm(&dz));
    }

    #[test]
    fn momentum_sequence(k in 1usize..500) {
        let mut t = 1.0;
        for _ in 0..k {
            let t1 = next_t(t);
            prop_assert!(t1 > t);
            let beta = (t - 1.0) / t1;
            prop_assert!((0.0..1.0).contains(&beta));
            t = t1;
        }
    }

    #[test]
    fn snr_ignores_common_scale(truth in prop::collection::vec(0.1f64..1.0, 16), noise in prop::collection::vec(-0.1f64..0.1, 16),
                                c in 1e-3f64..1e3) {
        let est: Vec<f64> = truth.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let s1 = snr_db(&est, &truth).unwrap();
        let s2 = snr_db(&est.iter().map(|v| v * c).collect::<Vec<_>>(), &truth.iter().map(|v| v * c).collect::<Vec<_>>()).unwrap();
        prop_assert!((s1 - s2).abs() <= 1e-9 * (1.0 + s1.abs()));
    }

    #[test]
    fn phantom_is_deterministic(side in 8usize..40, c in 1e-3f64..3.0) {
        let a = shepp_logan(side, c).unwrap();
        let b = shepp_logan(side, c).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        prop_assert!(a.values.iter().all(|v| (0.0..=c).contains(v)));
    }

    #[test]
    fn config_round_trip(side in 8usize..100, extent in 0.01f64..0.2, seed in any::<u64>(), tau in prop::option::of(1e-6f64..1.0),
                         alpha in 0.0f64..=1.0) {
        let mut c = ExperimentConfig::desk_2d();
        c.grid.side = side;
        c.grid.pitch = extent / side as f64;
        c.seed = seed;
        c.tau_rel = tau;
        c.solver.alpha = alpha;
        let back = parse_config(&c.to_json().unwrap()).unwrap();
        prop_assert_eq!(back, c);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fidelity_and_gradient_structure(f in prop::collection::vec(0.0f64..0.5, 64), seed in any::<u64>()) {
        let grid = build_grid(2, 8, 0.01).unwrap();
        let layout = circular_layout(3, 10, 0.3, 0.0);
        let truth = shepp_logan(8, 0.5).unwrap();
        let opts = SimulationOptions { noise_snr_db: Some(30.0), seed, ..Default::default() };
        let ds = simulate_measurements(&grid, &truth.values, &layout, &phys(), &opts).unwrap();
        let bundle = OperatorBundle::new(&grid, &phys(), &layout).unwrap();
        let k = KrylovOptions::default().with_tol(1e-12);
        let d1 = data_fidelity(&bundle, &f, &ds, &k).unwrap();
        let d2 = data_fidelity(&bundle, &f, &ds, &k).unwrap();
        prop_assert!(d1 >= 0.0);
        prop_assert_eq!(d1.to_bits(), d2.to_bits());

        // the gradient splits over transmitters
        let full = gradient_data_fidelity(&bundle, &f, &ds, &k).unwrap().gradient;
        let mut sum = vec![0.0; f.len()];
        for p in 0..layout.num_transmitters() {
            let rx = layout.active_receivers(p).iter().map(|&m| layout.receivers[m]).collect();
            let single = Layout::all_active(vec![layout.transmitters[p]], rx);
            let sub_ds = ScatteringDataset {
                layout: single.clone(),
                measurements: vec![ds.measurements[p].clone()],
                noise: None,
                ..ds.clone()
            };
            let b = OperatorBundle::new(&grid, &phys(), &single).unwrap();
            let g = gradient_data_fidelity(&b, &f, &sub_ds, &k).unwrap().gradient;
            sum.iter_mut().zip(g).for_each(|(a, b)| *a += b);
        }
        let diff: Vec<f64> = full.iter().zip(&sum).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&diff) <= 1e-9 * norm(&full));
    }

    #[test]
    fn dataset_round_trip(seed in any::<u64>(), snr in 5.0f64..40.0) {
        let grid = build_grid(2, 8, 0.01).unwrap();
        let layout = circular_layout(2, 7, 0.3, 40.0);
        let truth = shepp_logan(8, 1.0).unwrap();
        let opts = SimulationOptions { noise_snr_db: Some(snr), seed, ..Default::default() };
        let mut ds = simulate_measurements(&grid, &truth.values, &layout, &phys(), &opts).unwrap();
        ds.noise = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &ds, 2).unwrap();
        let (back, dim) = read_dataset(&path).unwrap();
        prop_assert_eq!(dim, 2);
        prop_assert_eq!(back, ds);
    }
}
