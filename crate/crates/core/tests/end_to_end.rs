use std::fs;

use diffract::cli::cli_main;
use diffract::forward::SimulationOptions;
use diffract::geometry::{build_grid, IncidentMode, Layout, PhysicsConfig};
use diffract::io::read_telemetry;
use diffract::optim::{Method, SolverConfig, StepRule};
use diffract::phantom::two_spheres;
use diffract::vectorial::{reconstruct_3d, simulate_measurements_3d, VectorBundle};

#[test]
fn mirrored_scene_gives_mirrored_image() {
    // two spheres on the x axis, lit from ±y: the problem is symmetric under x → -x
    let phys = PhysicsConfig::new(0.0749, 1.0).unwrap();
    let grid = build_grid(3, 8, 0.1 / 8.0).unwrap();
    let truth = two_spheres(&grid, 0.5).unwrap();
    let r = 0.5;
    let rx = (0..12)
        .map(|m| {
            let a = m as f64 * std::f64::consts::PI / 6.0;
            [r * a.cos(), r * a.sin(), 0.0]
        })
        .collect();
    let layout = Layout::all_active(vec![[0.0, r, 0.0], [0.0, -r, 0.0]], rx);
    let opts = SimulationOptions {
        incident: IncidentMode::PlaneWave,
        ..Default::default()
    };
    let ds = simulate_measurements_3d(&grid, &truth.values, &layout, &phys, &opts).unwrap();
    let bundle = VectorBundle::new(&grid, &phys, &layout, IncidentMode::PlaneWave).unwrap();
    // forward-difference TV is not itself mirror-symmetric (≈1% asymmetry at tau_rel 1e-3),
    // so the equivariance of the data term is checked unregularised
    let config = SolverConfig {
        step: StepRule::Born { factor: 1.0 },
        tau: 0.0,
        max_iter: 15,
        monitor: false,
        ..Default::default()
    };
    let rec = reconstruct_3d(&bundle, &ds, &config, Method::Cisor).unwrap();
    let f = rec.image.values();
    let s = grid.side();
    let mut diff = 0.0;
    for n in 0..grid.len() {
        let [i, j, k] = grid.unravel(n);
        let m = grid.ravel([s - 1 - i, j, k]);
        diff += (f[n] - f[m]).powi(2);
    }
    let total: f64 = f.iter().map(|v| v * v).sum();
    assert!(total > 0.0);
    let asym = (diff / total).sqrt();
    assert!(asym <= 1e-2, "asymmetry {asym:e}");
}

#[test]
fn simulate_then_reconstruct_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{
            "grid": {"dim": 2, "side": 16, "pitch": 0.00625},
            "layout": {"preset": "circular", "transmitters": 4, "receivers": 20, "radius": 0.3},
            "phantom": {"kind": "shepp-logan", "contrast": 0.5},
            "simulation": {"noise_snr_db": 40},
            "solver": {"max_iter": 12, "step": {"rule": "born", "factor": 1.0}},
            "method": "cisor"
        }"#,
    )
    .unwrap();
    let sim = dir.path().join("sim");
    let rec = dir.path().join("rec");
    let c = cfg.to_str().unwrap();
    assert_eq!(cli_main(["diffract", "simulate", "-c", c, "-o", sim.to_str().unwrap()]), 0);
    let data = sim.join("data.csv");
    assert!(data.exists() && sim.join("phantom.pgm").exists() && sim.join("config.json").exists());
    let code = cli_main([
        "diffract",
        "reconstruct",
        "-c",
        c,
        "-o",
        rec.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows = read_telemetry(&rec.join("telemetry.csv")).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.windows(2).all(|w| w[1].k > w[0].k));
    assert!(rows.iter().all(|r| r.objective.is_finite()));
    assert!(rec.join("image.csv").exists() && rec.join("image.pgm").exists());
    // a dataset of the wrong dimension is rejected as bad input
    fs::write(&cfg, fs::read_to_string(&cfg).unwrap().replace(r#""dim": 2, "side": 16"#, r#""dim": 3, "side": 6"#)).unwrap();
    let code = cli_main(["diffract", "reconstruct", "-c", c, "--data", data.to_str().unwrap(), "-o", rec.to_str().unwrap()]);
    assert_eq!(code, 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let config = diffract::config::parse_config(&fs::read_to_string(&path).unwrap());
        assert!(config.is_ok(), "{}: {:?}", path.display(), config.err());
        n += 1;
    }
    assert!(n >= 3);
}
