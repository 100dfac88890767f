use std::f64::consts::PI;
use std::fs;

use dualdress::spinmath::bessel_j;
use dualdress_cli::run_with;
use dualdress_cli::table::{Cell, Table};

fn run(args: &str) -> (i32, String, String) {
    let argv = std::iter::once("dualdress")
        .chain(args.split_whitespace())
        .map(String::from)
        .collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn table(args: &str) -> Table {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{err}");
    Table::read_csv(&out).unwrap()
}

#[test]
fn floquet_without_dressing_returns_the_static_field() {
    let t = table("floquet --omega-x 0 --omega-y 0 --b0 0,0,0.1");
    assert!((t.lookup("h_x").unwrap()).abs() < 1e-12);
    assert!((t.lookup("h_y").unwrap()).abs() < 1e-12);
    assert!((t.lookup("h_z").unwrap() - 0.1).abs() < 1e-12);
    assert!((t.lookup("larmor").unwrap() - 0.1).abs() < 1e-12);
}

#[test]
fn perturb_synthetic_field_is_bessel() {
    let t = table("perturb --omega-x 5.11 --omega-y 3 --p 1 --phi 1.5707963");
    let want = 3.0 * bessel_j(1, 5.11).unwrap();
    assert!((t.lookup("hs1_z").unwrap() - want).abs() < 1e-6);
    assert!(t.lookup("Q_x").is_some());
}

#[test]
fn angle_fractions_are_normalized_in_the_echo() {
    let (_, out, _) = run("floquet --omega-x 1 --phi pi/2 --b0 0,0,0.1");
    let t = Table::read_csv(&out).unwrap();
    let phi = t.metadata.iter().find(|(k, _)| k == "phi").unwrap();
    assert_eq!(phi.1.parse::<f64>().unwrap(), PI / 2.0);
}

#[test]
fn exit_codes() {
    assert_eq!(run("floquet --bogus 1").0, 1);
    assert_eq!(run("nosuch").0, 1);
    assert_eq!(run("scan --grid omega_x:0:1:1,omega_y:0:1:3").0, 1);
    assert_eq!(run("floquet --omega-x -1").0, 1);
    // zero static field has no acceleration
    let (code, _, err) = run("accelerate --omega-x 1");
    assert_eq!(code, 2);
    assert!(err.contains("zero static field"));
    assert_eq!(run("--help").0, 0);
    assert_eq!(run("--version").0, 0);
}

#[test]
fn scan_layout_and_null_plane() {
    let t = table("scan --quantity h_y --grid omega_x:0:8:5,omega_y:0:8:4 --p 1 --phi pi/2 --b0 0,0,0.1");
    assert_eq!(t.columns, ["omega_x", "omega_y", "value", "h_x", "h_y", "h_z", "fold", "ok"]);
    assert_eq!(t.rows.len(), 20);
    for row in &t.rows {
        let Cell::Num(v) = row[2] else { panic!() };
        assert!(v.abs() < 1e-8);
    }
    // axis1 is the outer loop
    assert_eq!(t.rows[3][0], Cell::Num(0.0));
    assert_eq!(t.rows[4][0], Cell::Num(2.0));
}

#[test]
fn output_files_are_deterministic_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let cmd = "scan --quantity larmor --grid omega_x:0:3:4,phi:0:pi:3 --omega-y 0.7 --p 2 --b0 0.02,0,0.1";
    for path in [&a, &b] {
        assert_eq!(run(&format!("{cmd} --out {}", path.display())).0, 0);
    }
    let (ta, tb) = (fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let parsed = Table::read_csv(std::str::from_utf8(&ta).unwrap()).unwrap();
    let mut again = Vec::new();
    parsed.write_csv(&mut again).unwrap();
    assert_eq!(again, ta);

    let json = dir.path().join("a.json");
    assert_eq!(run(&format!("{cmd} --format json --out {}", json.display())).0, 0);
    let from_json = Table::read_json(&fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(from_json.rows, parsed.rows);
}

#[test]
fn csv_numbers_match_the_library_bit_for_bit() {
    use dualdress::floquet::solve_floquet;
    use dualdress::propagator::{DriveConfig, IntegratorSettings, StaticField};
    let t = table("floquet --omega-x 2.2 --omega-y 0.4 --p 3 --phi 0.3 --b0 0.01,0.02,0.03");
    let sol = solve_floquet(
        &DriveConfig::cosine(2.2, 0.4, 3, 0.3),
        &StaticField::new(0.01, 0.02, 0.03),
        &IntegratorSettings::default(),
    )
    .unwrap();
    assert_eq!(t.lookup("h_x").unwrap().to_bits(), sol.h.x.to_bits());
    assert_eq!(t.lookup("lambda_plus").unwrap().to_bits(), sol.lambda_plus.to_bits());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    fs::write(&conf, "# Larmor check\nomega_x = 0\nb0 = 0,0,0.25\n").unwrap();
    let t = table(&format!("floquet --config {}", conf.display()));
    assert!((t.lookup("h_z").unwrap() - 0.25).abs() < 1e-12);
    let t = table(&format!("floquet --config {} --b0 0,0,0.125", conf.display()));
    assert!((t.lookup("h_z").unwrap() - 0.125).abs() < 1e-12);
    assert_eq!(run("floquet --config /nonexistent/file").0, 1);
}

#[test]
fn trajectories_and_detection() {
    let t = table("traj --method both --omega-x 1.8 --omega-y 0.01 --phi pi/2 --b0 0,0,0.01 --t-end 20 --samples 21");
    assert_eq!(t.columns.len(), 7);
    assert_eq!(t.rows.len(), 21);
    assert_eq!(run("traj --method analytic --initial 0,0,1").0, 1);

    let t = table("landre --omega-x 1.7 --b0 0,0.02,0 --t-end 300 --samples 1200");
    let want = 0.02 * bessel_j(0, 1.7).unwrap().abs();
    assert!((t.lookup("larmor").unwrap() - want).abs() < 1e-15);
    let s1 = t.lookup("sideband_y_1").unwrap();
    assert!((s1 - 2.0 * bessel_j(1, 1.7).unwrap().abs()).abs() < 1e-9);

    let t = table("cs --omega-x 1.833 --omega-y 0.0118 --phi pi/2 --b0 0.05,0,0.1993");
    assert!((t.lookup("a_x").unwrap() + t.lookup("dc_offset").unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn compensation_run() {
    let t = table("compensate --omega-x 1.4 --b0 0,0,1e-4 --harmonic 1:0:pi/2 --targets z");
    assert!(t.lookup("residual").unwrap() < 1e-9);
    let seed = -bessel_j(0, 1.4).unwrap() * 1e-4 / bessel_j(1, 1.4).unwrap();
    assert!((t.lookup("amplitude_0").unwrap() - seed).abs() < 1e-2 * seed.abs());
    assert_eq!(run("compensate --omega-x 1.4 --b0 0,1e-4,1e-4 --harmonic 1:0:pi/2 --targets y,z").0, 2);
}

#[test]
fn tensors_and_acceleration() {
    let t = table("tensors --omega-x 2");
    let j0 = bessel_j(0, 2.0).unwrap();
    assert!((t.lookup("g_yy").unwrap() - j0).abs() < 1e-6);
    assert_eq!(t.lookup("kind"), Some(0.0));

    let t = table("accelerate --omega-x 1 --b0 0,0,0.01 --grid omega_x:0.5:1.5:5,omega_y:0:1:5");
    assert!(t.lookup("acceleration").unwrap() <= 1.0);
    assert!(t.lookup("refined_value").is_some());
}
