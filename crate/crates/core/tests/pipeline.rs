use std::f64::consts::PI;

use dualdress::applications::{compensate, CompensationProblem};
use dualdress::dynamics::trajectory_exact;
use dualdress::floquet::solve_floquet;
use dualdress::perturbation::Perturbation;
use dualdress::propagator::{DriveConfig, HarmonicTerm, IntegratorSettings, StaticField};
use dualdress::spinmath::Vec3;

fn rotate(v: Vec3, axis: Vec3, angle: f64) -> Vec3 {
    let k = axis * (1.0 / axis.norm());
    let (s, c) = angle.sin_cos();
    v * c + k.cross(v) * s + k * (k.dot(v) * (1.0 - c))
}

#[test]
fn stroboscopic_samples_precess_about_h() {
    let cfg = DriveConfig::cosine(2.2, 0.3, 2, 0.4);
    let field = StaticField::new(0.02, -0.01, 0.03);
    let s = IntegratorSettings::default();
    let h = solve_floquet(&cfg, &field, &s).unwrap().h;
    let start = Vec3::new(0.0, 0.6, 0.8);
    let taus: Vec<f64> = (0..6).map(|n| 2.0 * PI * n as f64).collect();
    let traj = trajectory_exact(&cfg, &field, start, &taus, &s).unwrap();
    for (k, tau) in taus.iter().enumerate() {
        let want = rotate(start, h, h.norm() * tau);
        assert!((traj.bloch(k) - want).norm() < 1e-8, "tau = {tau}");
    }
}

#[test]
fn extra_harmonics_follow_second_order_theory() {
    let cfg = DriveConfig::cosine(2.9, 2e-3, 1, 0.3).with_harmonics(vec![
        HarmonicTerm::new(1.5e-3, 5, PI / 2.0),
        HarmonicTerm::new(-1e-3, 6, 0.0),
    ]);
    let field = StaticField::new(1e-3, 5e-4, -8e-4);
    let exact = solve_floquet(&cfg, &field, &IntegratorSettings::precise()).unwrap().h;
    let theory = Perturbation::new(&cfg).unwrap().field(&field);
    assert!((exact - theory).norm() < 1e-8, "{:e}", (exact - theory).norm());
}

#[test]
fn compensated_field_is_longitudinal() {
    let problem = CompensationProblem::transverse(2.7, StaticField::new(0.05, 2e-4, -1e-4), (6, 0.0), (5, PI / 2.0));
    let sol = compensate(&problem).unwrap();
    let check = solve_floquet(&sol.drive, &problem.field, &problem.settings).unwrap().h;
    assert!(check.y.abs() < 1e-9 && check.z.abs() < 1e-9);
    assert!(check.x > 0.0);
}
