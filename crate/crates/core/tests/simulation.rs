use imeac_core::assessment::{cct_bisect, run_assessment, AssessOptions, Verdict};
use imeac_core::dynamics::{simulate, Trajectory};
use imeac_core::imeac::{detect_event, kimbark_curve, EventKind, Tolerances};
use imeac_core::network::StagedNetwork;
use imeac_core::ts1;

fn run(bus: u32, t_clear: f64, t_end: f64, h: f64) -> Trajectory {
    let case = ts1();
    let net = StagedNetwork::build(&case, bus).unwrap();
    simulate(&net, &case, t_clear, t_end, h).unwrap()
}

/// Largest state difference between two runs on the coarser run's grid.
fn max_diff(coarse: &Trajectory, fine: &Trajectory) -> f64 {
    let ratio = (coarse.step / fine.step).round() as usize;
    let mut worst = 0.0f64;
    let (c_post, f_post) = (coarse.post_fault(), fine.post_fault());
    for (k, c) in c_post.iter().enumerate() {
        let f = &f_post[k * ratio];
        assert!((c.t - f.t).abs() < 1e-9);
        for i in 0..c.delta.len() {
            worst = worst
                .max((c.delta[i] - f.delta[i]).abs())
                .max((c.omega[i] - f.omega[i]).abs());
        }
    }
    worst
}

#[test]
fn rk4_converges_at_fourth_order() {
    let (a, b, c) = (
        run(34, 0.202, 1.5, 2e-3),
        run(34, 0.202, 1.5, 1e-3),
        run(34, 0.202, 1.5, 5e-4),
    );
    let ratio = max_diff(&a, &b) / max_diff(&b, &c);
    assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn event_times_converge_with_the_step() {
    let tol = Tolerances::default();
    let time = |h: f64| {
        let traj = run(34, 0.18, 1.0, h);
        detect_event(&kimbark_curve(&traj, 34, &tol).unwrap(), &tol)
            .unwrap()
            .unwrap()
            .time
    };
    let (t1, t2, t3) = (time(2e-3), time(1e-3), time(5e-4));
    assert!(
        (t2 - t3).abs() <= (t1 - t2).abs().max(1e-6),
        "{t1} {t2} {t3}"
    );
    assert!((t2 - t3).abs() <= 1e-5);
}

#[test]
fn energy_identities_hold_across_faults() {
    let tol = Tolerances::default();
    for (bus, t_clear) in [(34, 0.18), (34, 0.219), (2, 0.43), (16, 0.2), (29, 0.1)] {
        let traj = run(bus, t_clear, 1.5, 1e-3);
        for &id in &traj.machine_ids {
            let curve = kimbark_curve(&traj, id, &tol).unwrap();
            let (work, ke) = (curve.fault_on_work(), curve.a_acc());
            assert!(
                (work - ke).abs() <= 1e-3 * ke.max(1e-6),
                "bus {bus} machine {id}: {work} vs {ke}"
            );
            let r = curve.energy_balance_residual(tol.eps_energy);
            assert!(r <= 1e-3, "bus {bus} machine {id}: {r}");
            if let Some(e) = detect_event(&curve, &tol).unwrap() {
                match e.kind {
                    EventKind::Dlp => assert!(e.residual_ke > 0.0 && e.a_acc > e.a_dec),
                    _ => assert!((e.a_acc - e.a_dec).abs() <= (1e-3 * e.a_acc).max(tol.eps_energy)),
                }
            }
        }
    }
}

#[test]
fn trajectories_replay_bit_for_bit() {
    let mut a = Vec::new();
    let mut b = Vec::new();
    run(2, 0.43, 1.0, 1e-3).write_csv(&mut a).unwrap();
    run(2, 0.43, 1.0, 1e-3).write_csv(&mut b).unwrap();
    assert_eq!(a, b);
}

#[test]
fn one_step_fault_is_stable_and_eventless() {
    let case = ts1();
    let net = StagedNetwork::build(&case, 34).unwrap();
    let a = run_assessment(&case, &net, 1e-3, &AssessOptions::default(), None).unwrap();
    assert!(a.report.no_disturbance);
    assert_eq!(a.report.verdict, Verdict::Stable);
    assert!(a.report.timeline.is_empty());
}

#[test]
fn bus34_bisection_is_monotone_around_the_bracket() {
    let case = ts1();
    let opts = AssessOptions::default();
    let res = cct_bisect(&case, 34, 0.10, 0.30, 1e-3, &opts).unwrap();
    assert!(res.t_unstable - res.t_stable <= 1e-3 + 1e-12);
    for p in &res.log {
        if p.t_clear <= res.t_stable + 1e-12 {
            assert!(p.verdict.is_stable_side(), "{p:?}");
        } else {
            assert!(!p.verdict.is_stable_side(), "{p:?}");
        }
    }
    let net = StagedNetwork::build(&case, 34).unwrap();
    for ms in -8..=8 {
        let t = ((res.t_stable + ms as f64 * 1e-3) * 1e3).round() * 1e-3;
        let v = run_assessment(&case, &net, t, &opts, None)
            .unwrap()
            .report
            .verdict;
        assert_eq!(
            v.is_stable_side(),
            t <= res.t_stable + 1e-9,
            "t_clear {t}: {v}"
        );
    }
}
