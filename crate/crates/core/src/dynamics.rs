//! Swing-equation integration through the fault-on and post-fault stages,
//! with center-of-inertia (COI) aggregates and per-machine relative motion
//! recorded at every step.

use std::io::{self, Write};

use thiserror::Error;

use crate::case::PowerSystemCase;
use crate::format::sig9;
use crate::network::{PowerModel, Stage, StagedNetwork};

/// Default integration step, s.
pub const DEFAULT_STEP: f64 = 1e-3;

/// How far `t / h` may sit from an integer and still count as on the grid.
const GRID_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum SimulationError {
    #[error("step must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("times must satisfy 0 < t_clear < t_end, got t_clear = {t_clear}, t_end = {t_end}")]
    InvalidTimes { t_clear: f64, t_end: f64 },
    #[error("{name} = {value} s is not an integer multiple of the step {step} s")]
    OffGrid {
        name: &'static str,
        value: f64,
        step: f64,
    },
    #[error("network has {network} machines but the case has {case}")]
    MachineMismatch { network: usize, case: usize },
    #[error("state became non-finite at t = {t} s")]
    NonFinite { t: f64 },
}

/// COI angle, speed and total accelerating power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coi {
    pub delta: f64,
    pub omega: f64,
    pub power: f64,
}

/// One recorded instant. Angles in rad, speeds in rad/s (deviation from
/// synchronous), powers in p.u.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub t: f64,
    pub stage: Stage,
    pub delta: Vec<f64>,
    pub omega: Vec<f64>,
    /// θ_i = δ_i − δ_COI.
    pub theta: Vec<f64>,
    /// ω̃_i = ω_i − ω_COI.
    pub omega_rel: Vec<f64>,
    pub pe: Vec<f64>,
    /// f_i = Pm_i − Pe_i − (M_i/M_T)·P_COI.
    pub f: Vec<f64>,
    pub coi: Coi,
}

/// `δ_COI = ΣMδ/M_T`, `ω_COI = ΣMω/M_T`, `P_COI = Σ(Pm − Pe)`.
pub fn coi_aggregate(delta: &[f64], omega: &[f64], pm: &[f64], pe: &[f64], m: &[f64]) -> Coi {
    let mt: f64 = m.iter().sum();
    Coi {
        delta: m.iter().zip(delta).map(|(m, d)| m * d).sum::<f64>() / mt,
        omega: m.iter().zip(omega).map(|(m, w)| m * w).sum::<f64>() / mt,
        power: pm.iter().zip(pe).map(|(pm, pe)| pm - pe).sum(),
    }
}

/// Per-machine motion relative to the COI: `(θ, ω̃, f)`.
pub fn relative_state(
    delta: &[f64],
    omega: &[f64],
    pm: &[f64],
    pe: &[f64],
    m: &[f64],
    coi: &Coi,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mt: f64 = m.iter().sum();
    let theta = delta.iter().map(|d| d - coi.delta).collect();
    let omega_rel = omega.iter().map(|w| w - coi.omega).collect();
    let f = (0..m.len())
        .map(|i| pm[i] - pe[i] - m[i] / mt * coi.power)
        .collect();
    (theta, omega_rel, f)
}

/// Time-ordered samples on a fixed grid. The clearing instant appears
/// twice: once closing the fault-on stage and once opening the post-fault
/// stage, since `f` jumps there.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub machine_ids: Vec<u32>,
    pub inertia: Vec<f64>,
    pub pm: Vec<f64>,
    pub step: f64,
    pub t_clear: f64,
    pub t_end: f64,
    /// Index of the first post-fault sample (the duplicate at `t_clear`).
    pub clearing_index: usize,
    pub samples: Vec<SystemState>,
}

impl Trajectory {
    pub fn n_machines(&self) -> usize {
        self.machine_ids.len()
    }

    pub fn machine_index(&self, id: u32) -> Option<usize> {
        self.machine_ids.iter().position(|&m| m == id)
    }

    pub fn total_inertia(&self) -> f64 {
        self.inertia.iter().sum()
    }

    /// Number of distinct time points (samples minus the clearing duplicate).
    pub fn time_points(&self) -> usize {
        self.samples.len() - 1
    }

    pub fn fault_on(&self) -> &[SystemState] {
        &self.samples[..self.clearing_index]
    }

    pub fn post_fault(&self) -> &[SystemState] {
        &self.samples[self.clearing_index..]
    }

    /// Latest post-fault sample with `t <= time`.
    pub fn post_fault_at(&self, time: f64) -> Option<&SystemState> {
        let k = ((time - self.t_clear) / self.step + GRID_TOL).floor();
        if k < 0.0 {
            return None;
        }
        self.post_fault().get(k as usize)
    }

    /// Largest |ΣMθ|, |ΣMω̃| (both divided by M_T) and |Σf| over all samples.
    pub fn coi_residuals(&self) -> (f64, f64, f64) {
        let mt = self.total_inertia();
        let mut worst = (0.0f64, 0.0f64, 0.0f64);
        for s in &self.samples {
            let mth: f64 = self.inertia.iter().zip(&s.theta).map(|(m, x)| m * x).sum();
            let mw: f64 = self
                .inertia
                .iter()
                .zip(&s.omega_rel)
                .map(|(m, x)| m * x)
                .sum();
            let sf: f64 = s.f.iter().sum();
            worst.0 = worst.0.max(mth.abs() / mt);
            worst.1 = worst.1.max(mw.abs() / mt);
            worst.2 = worst.2.max(sf.abs());
        }
        worst
    }

    /// Largest |θ_i| over the whole trajectory.
    pub fn max_abs_theta(&self) -> f64 {
        self.samples
            .iter()
            .flat_map(|s| s.theta.iter())
            .fold(0.0, |a, &x| a.max(x.abs()))
    }

    /// CSV with header `t,stage,machine,delta,omega,theta,omega_rel,pe,f`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,stage,machine,delta,omega,theta,omega_rel,pe,f")?;
        for s in &self.samples {
            for (i, id) in self.machine_ids.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    sig9(s.t),
                    s.stage.as_str(),
                    id,
                    sig9(s.delta[i]),
                    sig9(s.omega[i]),
                    sig9(s.theta[i]),
                    sig9(s.omega_rel[i]),
                    sig9(s.pe[i]),
                    sig9(s.f[i]),
                )?;
            }
        }
        Ok(())
    }
}

fn grid_steps(name: &'static str, value: f64, step: f64) -> Result<usize, SimulationError> {
    let ratio = value / step;
    let k = ratio.round();
    if (ratio - k).abs() > GRID_TOL {
        return Err(SimulationError::OffGrid { name, value, step });
    }
    Ok(k as usize)
}

struct Integrator<'a> {
    pm: &'a [f64],
    m: &'a [f64],
    pe: Vec<f64>,
}

impl Integrator<'_> {
    /// Writes `(δ', ω')` for state `(δ, ω)` into `dd`, `dw`.
    fn rhs(
        &mut self,
        model: &PowerModel,
        delta: &[f64],
        omega: &[f64],
        dd: &mut [f64],
        dw: &mut [f64],
    ) {
        model.power_into(delta, &mut self.pe);
        for i in 0..delta.len() {
            dd[i] = omega[i];
            dw[i] = (self.pm[i] - self.pe[i]) / self.m[i];
        }
    }

    /// One classical RK4 step of size `h`.
    fn step(&mut self, model: &PowerModel, delta: &mut [f64], omega: &mut [f64], h: f64) {
        let n = delta.len();
        let mut k = [
            [vec![0.0; n], vec![0.0; n]],
            [vec![0.0; n], vec![0.0; n]],
            [vec![0.0; n], vec![0.0; n]],
            [vec![0.0; n], vec![0.0; n]],
        ];
        let (mut td, mut tw) = (vec![0.0; n], vec![0.0; n]);

        {
            let [kd, kw] = &mut k[0];
            self.rhs(model, delta, omega, kd, kw);
        }
        for (stage, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
            for i in 0..n {
                td[i] = delta[i] + c * h * k[stage - 1][0][i];
                tw[i] = omega[i] + c * h * k[stage - 1][1][i];
            }
            let [kd, kw] = &mut k[stage];
            self.rhs(model, &td, &tw, kd, kw);
        }
        for i in 0..n {
            delta[i] += h / 6.0 * (k[0][0][i] + 2.0 * k[1][0][i] + 2.0 * k[2][0][i] + k[3][0][i]);
            omega[i] += h / 6.0 * (k[0][1][i] + 2.0 * k[1][1][i] + 2.0 * k[2][1][i] + k[3][1][i]);
        }
    }
}

fn record(
    t: f64,
    stage: Stage,
    model: &PowerModel,
    delta: &[f64],
    omega: &[f64],
    pm: &[f64],
    m: &[f64],
) -> SystemState {
    let mut pe = vec![0.0; delta.len()];
    model.power_into(delta, &mut pe);
    let coi = coi_aggregate(delta, omega, pm, &pe, m);
    let (theta, omega_rel, f) = relative_state(delta, omega, pm, &pe, m, &coi);
    SystemState {
        t,
        stage,
        delta: delta.to_vec(),
        omega: omega.to_vec(),
        theta,
        omega_rel,
        pe,
        f,
        coi,
    }
}

/// Integrates `δ' = ω`, `M ω' = Pm − Pe` with fixed-step RK4: fault-on
/// network on `[0, t_clear]`, post-fault network afterwards.
pub fn simulate(
    net: &StagedNetwork,
    case: &PowerSystemCase,
    t_clear: f64,
    t_end: f64,
    step: f64,
) -> Result<Trajectory, SimulationError> {
    if !(step.is_finite() && step > 0.0) {
        return Err(SimulationError::InvalidStep(step));
    }
    if !(t_clear.is_finite() && t_end.is_finite() && 0.0 < t_clear && t_clear < t_end) {
        return Err(SimulationError::InvalidTimes { t_clear, t_end });
    }
    let n_clear = grid_steps("t_clear", t_clear, step)?;
    let n_end = grid_steps("t_end", t_end, step)?;
    let m = case.inertia_m();
    if m.len() != net.n_machines() {
        return Err(SimulationError::MachineMismatch {
            network: net.n_machines(),
            case: m.len(),
        });
    }

    let pm = net.pm.clone();
    let fault_model = PowerModel::new(&net.fault_on, &net.emf);
    let post_model = PowerModel::new(&net.post_fault, &net.emf);
    let mut delta = net.delta0.clone();
    let mut omega = vec![0.0; delta.len()];
    let mut integ = Integrator {
        pm: &pm,
        m: &m,
        pe: vec![0.0; delta.len()],
    };

    let mut samples = Vec::with_capacity(n_end + 2);
    samples.push(record(
        0.0,
        Stage::FaultOn,
        &fault_model,
        &delta,
        &omega,
        &pm,
        &m,
    ));
    let mut clearing_index = 0;
    for k in 0..n_end {
        let (model, stage) = if k < n_clear {
            (&fault_model, Stage::FaultOn)
        } else {
            (&post_model, Stage::PostFault)
        };
        integ.step(model, &mut delta, &mut omega, step);
        let t = (k + 1) as f64 * step;
        if delta.iter().chain(&omega).any(|x| !x.is_finite()) {
            return Err(SimulationError::NonFinite { t });
        }
        samples.push(record(t, stage, model, &delta, &omega, &pm, &m));
        if k + 1 == n_clear {
            clearing_index = samples.len();
            samples.push(record(
                t,
                Stage::PostFault,
                &post_model,
                &delta,
                &omega,
                &pm,
                &m,
            ));
        }
    }

    Ok(Trajectory {
        machine_ids: net.machine_ids.clone(),
        inertia: m,
        pm,
        step,
        t_clear: n_clear as f64 * step,
        t_end: n_end as f64 * step,
        clearing_index,
        samples,
    })
}
