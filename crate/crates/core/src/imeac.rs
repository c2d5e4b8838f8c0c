//! Individual-machine equal-area analysis of a simulated trajectory.
//!
//! Every machine is paired with the COI into a two-machine system whose
//! Kimbark curve (θᵢ against fᵢ) is taken straight from the samples. On the
//! post-fault part of that curve a machine either reaches a dynamic
//! stationary point (DSP, ω̃ᵢ = 0 while still decelerating) and is
//! first-swing stable, or a dynamic liberation point (DLP, fᵢ back to zero
//! while still moving away) and separates. A DSP that also sits on fᵢ = 0 is
//! the critically stable CDSP.

use std::fmt;
use std::io::{self, Write};

use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::format::sig9;
use crate::network::Stage;

#[derive(Debug, Error, PartialEq)]
pub enum ImeacError {
    #[error("machine {0} is not part of the trajectory")]
    UnknownMachine(u32),
    #[error("trajectory ends at {t_end} s, before the observation instant {needed} s")]
    ShortTrajectory { t_end: f64, needed: f64 },
    #[error("curve has no post-fault motion to analyse")]
    EndsDuringFault,
    #[error("area requested at {upto} s, outside the post-fault span [{t_clear}, {t_end}] s")]
    OutOfRange { upto: f64, t_clear: f64, t_end: f64 },
}

/// Numerical thresholds used to classify events.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// ε_f, p.u.
    pub eps_f: f64,
    /// ε_ω, rad/s.
    pub eps_omega: f64,
    /// ε_E, p.u.·rad.
    pub eps_energy: f64,
    /// ε_t, s. `None` means one tenth of the integration step.
    pub eps_t: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_f: 1e-6,
            eps_omega: 1e-6,
            eps_energy: 1e-6,
            eps_t: None,
        }
    }
}

impl Tolerances {
    pub fn eps_t(&self, step: f64) -> f64 {
        self.eps_t.unwrap_or(step / 10.0)
    }
}

/// Thresholds for picking the severely disturbed machines.
///
/// Shortly after clearing (`window` seconds) each machine gets two
/// measures: its share of the total relative kinetic energy and its angle
/// excursion `|θᵢ(t) − θᵢ(0)|` relative to the largest excursion. A machine is
/// critical when either measure reaches its threshold; the machine with the
/// largest excursion is always critical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalParams {
    pub window: f64,
    pub kinetic_share: f64,
    pub angle_ratio: f64,
    /// Below this excursion (rad) for every machine the case counts as
    /// undisturbed.
    pub min_disturbance: f64,
}

impl Default for CriticalParams {
    fn default() -> Self {
        Self {
            window: 0.05,
            kinetic_share: 0.035,
            angle_ratio: 0.5,
            min_disturbance: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticalSet {
    /// Critical machines, most severe first.
    pub machines: Vec<u32>,
    pub no_disturbance: bool,
}

/// Picks the critical machines of a trajectory (see [`CriticalParams`]).
pub fn identify_critical(
    traj: &Trajectory,
    params: &CriticalParams,
) -> Result<CriticalSet, ImeacError> {
    let needed = traj.t_clear + params.window;
    let obs = traj
        .post_fault_at(needed)
        .filter(|s| s.t >= needed - 1e-9 * needed.max(1.0))
        .ok_or(ImeacError::ShortTrajectory {
            t_end: traj.t_end,
            needed,
        })?;
    let start = &traj.samples[0];
    let n = traj.n_machines();

    let excursion: Vec<f64> = (0..n)
        .map(|i| (obs.theta[i] - start.theta[i]).abs())
        .collect();
    let max_exc = excursion.iter().cloned().fold(0.0, f64::max);
    if max_exc < params.min_disturbance {
        return Ok(CriticalSet {
            machines: Vec::new(),
            no_disturbance: true,
        });
    }
    let ke: Vec<f64> = (0..n)
        .map(|i| 0.5 * traj.inertia[i] * obs.omega_rel[i].powi(2))
        .collect();
    let ke_total: f64 = ke.iter().sum();

    let mut scored: Vec<(f64, u32)> = (0..n)
        .filter_map(|i| {
            let share = if ke_total > 0.0 {
                ke[i] / ke_total
            } else {
                0.0
            };
            let ratio = excursion[i] / max_exc;
            let critical = share >= params.kinetic_share
                || ratio >= params.angle_ratio
                || excursion[i] == max_exc;
            critical.then_some((share + ratio, traj.machine_ids[i]))
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(CriticalSet {
        machines: scored.into_iter().map(|(_, id)| id).collect(),
        no_disturbance: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KimbarkSample {
    pub t: f64,
    pub theta: f64,
    pub f: f64,
    pub omega_rel: f64,
    pub stage: Stage,
}

/// One machine's path through `(t, θ, f)`, with ω̃ carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct KimbarkCurve {
    pub machine: u32,
    pub inertia: f64,
    pub step: f64,
    pub samples: Vec<KimbarkSample>,
    /// Index of the first post-fault sample.
    pub clearing_index: usize,
    /// Direction of motion right after clearing: +1, −1, or 0 when the
    /// machine never leaves rest.
    pub sigma: f64,
}

/// Projects the trajectory onto one machine.
pub fn kimbark_curve(
    traj: &Trajectory,
    machine: u32,
    tol: &Tolerances,
) -> Result<KimbarkCurve, ImeacError> {
    let i = traj
        .machine_index(machine)
        .ok_or(ImeacError::UnknownMachine(machine))?;
    let samples: Vec<KimbarkSample> = traj
        .samples
        .iter()
        .map(|s| KimbarkSample {
            t: s.t,
            theta: s.theta[i],
            f: s.f[i],
            omega_rel: s.omega_rel[i],
            stage: s.stage,
        })
        .collect();
    let sigma = samples[traj.clearing_index..]
        .iter()
        .find(|s| s.omega_rel.abs() > tol.eps_omega)
        .map_or(0.0, |s| s.omega_rel.signum());
    Ok(KimbarkCurve {
        machine,
        inertia: traj.inertia[i],
        step: traj.step,
        samples,
        clearing_index: traj.clearing_index,
        sigma,
    })
}

impl KimbarkCurve {
    pub fn post_fault(&self) -> &[KimbarkSample] {
        &self.samples[self.clearing_index..]
    }

    pub fn t_clear(&self) -> f64 {
        self.samples[self.clearing_index].t
    }

    pub fn t_end(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn kinetic_energy(&self, omega_rel: f64) -> f64 {
        0.5 * self.inertia * omega_rel * omega_rel
    }

    /// Kinetic energy gained during the fault, ½Mω̃(t_cl)².
    pub fn a_acc(&self) -> f64 {
        self.kinetic_energy(self.samples[self.clearing_index].omega_rel)
    }

    /// ∫₀^{t_cl} f·ω̃ dt over the fault-on samples (trapezoidal).
    pub fn fault_on_work(&self) -> f64 {
        trapezoid(&self.samples[..self.clearing_index])
    }

    /// Locates `time` in the post-fault samples as (segment index, fraction).
    fn locate(&self, time: f64) -> Result<(usize, f64), ImeacError> {
        let post = self.post_fault();
        let (t0, t1) = (self.t_clear(), self.t_end());
        let slack = 1e-9 * self.step;
        if !(time >= t0 - slack && time <= t1 + slack) || post.len() < 2 {
            return Err(ImeacError::OutOfRange {
                upto: time,
                t_clear: t0,
                t_end: t1,
            });
        }
        let k = (((time - t0) / self.step).floor() as usize).min(post.len() - 2);
        let s = ((time - post[k].t) / (post[k + 1].t - post[k].t)).clamp(0.0, 1.0);
        Ok((k, s))
    }

    /// Linearly interpolated post-fault sample at `time`.
    pub fn sample_at(&self, time: f64) -> Result<KimbarkSample, ImeacError> {
        let (k, s) = self.locate(time)?;
        let post = self.post_fault();
        Ok(lerp_sample(&post[k], &post[k + 1], s))
    }

    /// Cumulative `A_DEC` at every post-fault sample.
    pub fn a_dec_profile(&self) -> Vec<f64> {
        let post = self.post_fault();
        let mut out = Vec::with_capacity(post.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in post.windows(2) {
            acc -= 0.5 * (w[1].t - w[0].t) * (w[0].f * w[0].omega_rel + w[1].f * w[1].omega_rel);
            out.push(acc);
        }
        out
    }

    /// Largest `|A_ACC − A_DEC(t) − ½Mω̃(t)²|` over the post-fault samples,
    /// relative to the energy scale of the swing (the larger of `A_ACC`, the
    /// peak post-fault kinetic energy and `eps_energy`).
    pub fn energy_balance_residual(&self, eps_energy: f64) -> f64 {
        let a_acc = self.a_acc();
        let post = self.post_fault();
        let a_dec = self.a_dec_profile();
        let mut scale = a_acc.max(eps_energy);
        let mut worst = 0.0f64;
        for (s, d) in post.iter().zip(&a_dec) {
            let ke = self.kinetic_energy(s.omega_rel);
            scale = scale.max(ke);
            worst = worst.max((a_acc - d - ke).abs());
        }
        worst / scale
    }

    /// Writes `t,theta,f,omega_rel,stage`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,theta,f,omega_rel,stage")?;
        for s in &self.samples {
            writeln!(
                out,
                "{},{},{},{},{}",
                sig9(s.t),
                sig9(s.theta),
                sig9(s.f),
                sig9(s.omega_rel),
                s.stage.as_str()
            )?;
        }
        Ok(())
    }
}

fn lerp(a: f64, b: f64, s: f64) -> f64 {
    a + s * (b - a)
}

fn lerp_sample(a: &KimbarkSample, b: &KimbarkSample, s: f64) -> KimbarkSample {
    KimbarkSample {
        t: lerp(a.t, b.t, s),
        theta: lerp(a.theta, b.theta, s),
        f: lerp(a.f, b.f, s),
        omega_rel: lerp(a.omega_rel, b.omega_rel, s),
        stage: b.stage,
    }
}

fn trapezoid(samples: &[KimbarkSample]) -> f64 {
    samples
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (w[0].f * w[0].omega_rel + w[1].f * w[1].omega_rel))
        .sum()
}

/// `(A_ACC, A_DEC(upto))`, where `A_ACC = ½Mω̃(t_cl)²` and
/// `A_DEC(upto) = −∫_{t_cl}^{upto} f·ω̃ dt`.
pub fn areas(curve: &KimbarkCurve, upto: f64) -> Result<(f64, f64), ImeacError> {
    let (k, s) = curve.locate(upto)?;
    let post = curve.post_fault();
    let mut a_dec = -trapezoid(&post[..=k]);
    let end = lerp_sample(&post[k], &post[k + 1], s);
    a_dec -= 0.5 * (end.t - post[k].t) * (post[k].f * post[k].omega_rel + end.f * end.omega_rel);
    Ok((curve.a_acc(), a_dec))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Dlp,
    Dsp,
    Cdsp,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Dlp => "DLP",
            EventKind::Dsp => "DSP",
            EventKind::Cdsp => "CDSP",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwingEvent {
    pub machine: u32,
    pub kind: EventKind,
    pub time: f64,
    pub theta: f64,
    /// ½Mω̃² at the event.
    pub residual_ke: f64,
    pub a_acc: f64,
    pub a_dec: f64,
}

fn make_event(curve: &KimbarkCurve, kind: EventKind, time: f64) -> Result<SwingEvent, ImeacError> {
    let at = curve.sample_at(time)?;
    let (a_acc, a_dec) = areas(curve, time)?;
    Ok(SwingEvent {
        machine: curve.machine,
        kind,
        time,
        theta: at.theta,
        residual_ke: curve.kinetic_energy(at.omega_rel),
        a_acc,
        a_dec,
    })
}

/// Fraction of the segment `[a, b]` at which the linear interpolant of a
/// quantity crosses zero.
fn zero_fraction(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a / (a - b)).clamp(0.0, 1.0)
    }
}

/// Finds the first DSP, DLP or CDSP on the post-fault part of the curve.
///
/// Returns `Ok(None)` when the horizon ends before either happens, and also
/// for a machine that never leaves equilibrium.
pub fn detect_event(
    curve: &KimbarkCurve,
    tol: &Tolerances,
) -> Result<Option<SwingEvent>, ImeacError> {
    let post = curve.post_fault();
    if post.len() < 2 {
        return Err(ImeacError::EndsDuringFault);
    }
    let sigma = curve.sigma;
    if sigma == 0.0 {
        if post.iter().all(|s| s.f.abs() <= tol.eps_f) {
            return Ok(None);
        }
        let kind = if post[0].f.abs() <= tol.eps_f {
            EventKind::Cdsp
        } else {
            EventKind::Dsp
        };
        return make_event(curve, kind, curve.t_clear()).map(Some);
    }
    let eps_t = tol.eps_t(curve.step);

    for k in 0..post.len() - 1 {
        let (a, b) = (&post[k], &post[k + 1]);
        let (wa, wb) = (sigma * a.omega_rel, sigma * b.omega_rel);
        let (fa, fb) = (sigma * a.f, sigma * b.f);

        let dsp = (wa > 0.0 && wb <= 0.0).then(|| lerp(a.t, b.t, zero_fraction(wa, wb)));
        let dlp = (fa < 0.0
            && fb >= 0.0
            && wa > tol.eps_omega
            && wb > tol.eps_omega
            && post.get(k + 2).is_some_and(|c| sigma * c.f > tol.eps_f))
        .then(|| lerp(a.t, b.t, zero_fraction(fa, fb)));

        let event = match (dsp, dlp) {
            (None, None) => continue,
            (Some(ts), Some(tl)) if (ts - tl).abs() <= eps_t => (EventKind::Cdsp, ts.min(tl)),
            (Some(ts), Some(tl)) if tl < ts => (EventKind::Dlp, tl),
            (Some(ts), _) => {
                let f_at = lerp(a.f, b.f, (ts - a.t) / (b.t - a.t));
                if f_at.abs() <= tol.eps_f {
                    (EventKind::Cdsp, ts)
                } else {
                    (EventKind::Dsp, ts)
                }
            }
            (None, Some(tl)) => (EventKind::Dlp, tl),
        };
        return make_event(curve, event.0, event.1).map(Some);
    }
    Ok(None)
}

/// Writes `machine,kind,time,theta,residual_ke,a_acc,a_dec`.
pub fn write_events_csv<W: Write>(events: &[SwingEvent], mut out: W) -> io::Result<()> {
    writeln!(out, "machine,kind,time,theta,residual_ke,a_acc,a_dec")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            e.machine,
            e.kind,
            sig9(e.time),
            sig9(e.theta),
            sig9(e.residual_ke),
            sig9(e.a_acc),
            sig9(e.a_dec)
        )?;
    }
    Ok(())
}
