//! Small hand-built cases with closed-form answers, shared by unit and
//! integration tests.

use std::f64::consts::PI;

use crate::case::{Branch, Bus, BusType, Generator, InertiaUnit, PowerSystemCase, SystemInfo};
use crate::network::{internal_emf, C64};

/// Parameters of the two-bus, two-machine "one machine against an
/// infinite bus" case. Machine 1 sits behind `xd1` on bus 1, a lossless line
/// `x_line` ties bus 1 to bus 2, and a very heavy machine 2 behind `xd2`
/// holds bus 2.
#[derive(Debug, Clone, Copy)]
pub struct OmibParams {
    pub xd1: f64,
    pub x_line: f64,
    pub xd2: f64,
    pub h1: f64,
    pub h2: f64,
    pub p_transfer: f64,
    pub frequency_hz: f64,
}

pub const OMIB: OmibParams = OmibParams {
    xd1: 0.3,
    x_line: 0.5,
    xd2: 0.01,
    h1: 5.0,
    h2: 1000.0,
    p_transfer: 0.8,
    frequency_hz: 60.0,
};

fn omib_with_sign(sign: f64) -> PowerSystemCase {
    let p = OMIB;
    let angle = sign * (p.p_transfer * p.x_line).asin();
    let v1 = C64::from_polar(1.0, angle);
    let v2 = C64::new(1.0, 0.0);
    let current = (v1 - v2) / C64::new(0.0, p.x_line);
    let s1 = v1 * current.conj();
    let s2 = v2 * (-current).conj();
    PowerSystemCase {
        system: SystemInfo {
            name: "two-machine OMIB check".into(),
            base_mva: 100.0,
            frequency_hz: p.frequency_hz,
            inertia_unit: InertiaUnit::H,
        },
        buses: vec![
            Bus {
                id: 1,
                bus_type: BusType::Pv,
                vm: 1.0,
                va: angle,
                p_load: 0.0,
                q_load: 0.0,
            },
            Bus {
                id: 2,
                bus_type: BusType::Slack,
                vm: 1.0,
                va: 0.0,
                p_load: 0.0,
                q_load: 0.0,
            },
        ],
        branches: vec![Branch {
            from: 1,
            to: 2,
            r: 0.0,
            x: p.x_line,
            b: 0.0,
            tap: 1.0,
        }],
        generators: vec![
            Generator {
                id: 1,
                bus: 1,
                inertia: p.h1,
                xd_prime: p.xd1,
                pm: s1.re,
                p_gen: s1.re,
                q_gen: s1.im,
            },
            Generator {
                id: 2,
                bus: 2,
                inertia: p.h2,
                xd_prime: p.xd2,
                pm: s2.re,
                p_gen: s2.re,
                q_gen: s2.im,
            },
        ],
    }
}

/// Machine 1 exporting `p_transfer` to the heavy machine.
pub fn omib_case() -> PowerSystemCase {
    omib_with_sign(1.0)
}

/// Mirror image of [`omib_case`]: machine 1 imports `p_transfer`, so every
/// angle, speed and accelerating power changes sign.
pub fn omib_mirrored_case() -> PowerSystemCase {
    omib_with_sign(-1.0)
}

/// Closed-form critical clearing time of [`omib_case`] for a solid fault on
/// bus 1 (both machines see zero electrical power while it lasts, and the
/// post-fault network equals the pre-fault one).
pub fn omib_analytic_cct() -> f64 {
    let case = omib_case();
    let e = internal_emf(&case);
    let p = OMIB;
    let p_max = e[0].norm() * e[1].norm() / (p.xd1 + p.x_line + p.xd2);
    let delta0 = e[0].arg() - e[1].arg();
    let ws = 2.0 * PI * p.frequency_hz;
    let (m1, m2) = (2.0 * p.h1 / ws, 2.0 * p.h2 / ws);
    let m_eq = m1 * m2 / (m1 + m2);
    let pm = p_max * delta0.sin();
    let delta_c = ((PI - 2.0 * delta0) * delta0.sin() - delta0.cos()).acos();
    (2.0 * m_eq * (delta_c - delta0) / pm).sqrt()
}
