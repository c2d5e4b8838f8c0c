use imeac_core::assessment::{assess_subset, Verdict};
use imeac_core::dynamics::{coi_aggregate, relative_state, simulate};
use imeac_core::format::sig9;
use imeac_core::imeac::{detect_event, kimbark_curve, EventKind, SwingEvent, Tolerances};
use imeac_core::network::{
    asymmetry, full_network_currents, kron_reduce, CMatrix, StagedNetwork, C64,
};
use imeac_core::testcases::{omib_case, omib_mirrored_case};
use nalgebra::DVector;
use proptest::prelude::*;

/// Symmetric, diagonally dominant complex matrix built from branch
/// admittances plus shunts, like a real bus admittance matrix.
fn admittance(n: usize) -> impl Strategy<Value = CMatrix> {
    let pairs = n * (n - 1) / 2;
    (
        prop::collection::vec((0.0..2.0f64, -20.0..-0.5f64), pairs),
        prop::collection::vec((0.01..1.0f64, -1.0..1.0f64), n),
    )
        .prop_map(move |(branches, shunts)| {
            let mut y = CMatrix::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                for j in 0..i {
                    let ys = C64::new(branches[k].0, branches[k].1);
                    k += 1;
                    y[(i, j)] -= ys;
                    y[(j, i)] -= ys;
                    y[(i, i)] += ys;
                    y[(j, j)] += ys;
                }
                y[(i, i)] += C64::new(shunts[i].0, shunts[i].1);
            }
            y
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_reduction_is_symmetric_and_exact(
        y in admittance(6),
        keep in 1usize..6,
        v in prop::collection::vec((0.9..1.1f64, -0.5..0.5f64), 6),
    ) {
        let retained: Vec<usize> = (6 - keep..6).collect();
        let red = kron_reduce(&y, &retained).unwrap();
        prop_assert!(asymmetry(&red) <= 1e-10);
        let v_r = DVector::from_iterator(keep, v.iter().take(keep).map(|&(m, a)| C64::from_polar(m, a)));
        let direct = &red * &v_r;
        let full = full_network_currents(&y, &retained, &v_r).unwrap();
        for k in 0..keep {
            prop_assert!((direct[k] - full[k]).norm() <= 1e-10 * (1.0 + direct[k].norm()));
        }
    }

    #[test]
    fn coi_identities_for_any_state(
        state in prop::collection::vec((-3.0..3.0f64, -5.0..5.0f64, 0.0..10.0f64, -10.0..10.0f64, 0.01..2.0f64), 1..12),
    ) {
        let d: Vec<f64> = state.iter().map(|s| s.0).collect();
        let w: Vec<f64> = state.iter().map(|s| s.1).collect();
        let pm: Vec<f64> = state.iter().map(|s| s.2).collect();
        let pe: Vec<f64> = state.iter().map(|s| s.3).collect();
        let m: Vec<f64> = state.iter().map(|s| s.4).collect();
        let coi = coi_aggregate(&d, &w, &pm, &pe, &m);
        let (theta, omega_rel, f) = relative_state(&d, &w, &pm, &pe, &m, &coi);
        let mt: f64 = m.iter().sum();
        let s_theta: f64 = m.iter().zip(&theta).map(|(a, b)| a * b).sum();
        let s_omega: f64 = m.iter().zip(&omega_rel).map(|(a, b)| a * b).sum();
        let s_f: f64 = f.iter().sum();
        prop_assert!(s_theta.abs() <= 1e-12 * mt);
        prop_assert!(s_omega.abs() <= 1e-12 * mt);
        prop_assert!(s_f.abs() <= 1e-12 * (1.0 + pm.iter().chain(&pe).map(|x| x.abs()).sum::<f64>()));
    }

    #[test]
    fn sig9_keeps_nine_digits(x in prop::num::f64::NORMAL) {
        let back: f64 = sig9(x).parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-9 * x.abs());
    }

    #[test]
    fn subset_never_confirms_stability(
        kinds in prop::collection::vec(prop::option::of(0u8..3), 2..6),
        mask in prop::collection::vec(any::<bool>(), 6),
    ) {
        let critical: Vec<u32> = (0..kinds.len() as u32).collect();
        let events: Vec<SwingEvent> = kinds
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|k| SwingEvent {
                machine: i as u32,
                kind: [EventKind::Dlp, EventKind::Dsp, EventKind::Cdsp][k as usize],
                time: 0.5 + 0.01 * i as f64,
                theta: 1.0,
                residual_ke: 0.0,
                a_acc: 1.0,
                a_dec: 1.0,
            }))
            .collect();
        let monitored: Vec<u32> = critical.iter().copied().filter(|&i| mask[i as usize]).collect();
        prop_assume!(!monitored.is_empty() && monitored.len() < critical.len());
        let r = assess_subset(&events, &critical, &monitored).unwrap();
        prop_assert!(!r.verdict.is_stable_side());
        let liberated = events.iter().any(|e| e.kind == EventKind::Dlp && monitored.contains(&e.machine));
        prop_assert_eq!(r.verdict == Verdict::Unstable, liberated);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn mirrored_omib_gives_mirrored_event(ms in 50u32..400) {
        let t_clear = ms as f64 * 1e-3;
        let tol = Tolerances::default();
        let run = |case: imeac_core::PowerSystemCase| {
            let net = StagedNetwork::build(&case, 1).unwrap();
            let traj = simulate(&net, &case, t_clear, 1.5, 1e-3).unwrap();
            let curve = kimbark_curve(&traj, 1, &tol).unwrap();
            (curve.sigma, detect_event(&curve, &tol).unwrap(), curve.energy_balance_residual(tol.eps_energy))
        };
        let (s_a, e_a, r_a) = run(omib_case());
        let (s_b, e_b, r_b) = run(omib_mirrored_case());
        prop_assert_eq!(s_a, -s_b);
        prop_assert!(r_a <= 1e-3 && r_b <= 1e-3);
        match (e_a, e_b) {
            (Some(a), Some(b)) => {
                prop_assert_eq!(a.kind, b.kind);
                prop_assert!((a.time - b.time).abs() <= 1e-9);
                prop_assert!((a.theta + b.theta).abs() <= 1e-9);
                prop_assert!((a.a_acc - b.a_acc).abs() <= 1e-9 * a.a_acc.max(1.0));
            }
            (None, None) => {}
            other => prop_assert!(false, "asymmetric outcome {:?}", other),
        }
    }
}
