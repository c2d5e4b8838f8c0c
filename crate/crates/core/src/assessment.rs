//! System-level stability verdicts from per-machine swing events, and
//! critical clearing time search.
//!
//! The system is unstable as soon as any critical machine liberates (the
//! earliest such DLP is the leading loss-of-synchronism point, later ones
//! are lagging), and stable only once every critical machine has reached a
//! stationary point.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::io::{self, Write};

use thiserror::Error;

use crate::case::PowerSystemCase;
use crate::dynamics::{simulate, SimulationError, Trajectory, DEFAULT_STEP};
use crate::format::sig9;
use crate::imeac::{
    detect_event, identify_critical, kimbark_curve, CriticalParams, EventKind, ImeacError,
    SwingEvent, Tolerances,
};
use crate::network::{NetworkError, StagedNetwork};

#[derive(Debug, Error)]
pub enum AssessmentError {
    #[error("monitored machine {0} is not a critical machine")]
    NotCritical(u32),
    #[error("the monitored machine set is empty")]
    EmptyMonitor,
    #[error("bracket [{t_lo}, {t_hi}] is not increasing")]
    InvalidBracket { t_lo: f64, t_hi: f64 },
    #[error("bracket is not bracketed: {t_lo} s is {lo}, {t_hi} s is {hi}")]
    NotBracketed {
        t_lo: f64,
        lo: Verdict,
        t_hi: f64,
        hi: Verdict,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Imeac(#[from] ImeacError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Stable,
    Unstable,
    CriticalStable,
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::CriticalStable => "critical-stable",
            Verdict::Undecided => "undecided",
        }
    }

    /// Process exit status for the verdict.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::Unstable => 1,
            Verdict::Undecided => 2,
            Verdict::CriticalStable => 3,
        }
    }

    /// Which side of the stability boundary the verdict falls on during a
    /// clearing-time search. Undecided counts as unstable.
    pub fn is_stable_side(self) -> bool {
        matches!(self, Verdict::Stable | Verdict::CriticalStable)
    }

    fn of_event(kind: EventKind) -> Self {
        match kind {
            EventKind::Dlp => Verdict::Unstable,
            EventKind::Dsp => Verdict::Stable,
            EventKind::Cdsp => Verdict::CriticalStable,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losp {
    pub machine: u32,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentReport {
    pub critical: Vec<u32>,
    pub monitored: Vec<u32>,
    pub no_disturbance: bool,
    /// Verdict of each monitored machine, in monitoring order.
    pub machine_verdicts: Vec<(u32, Verdict)>,
    /// Events of the monitored machines sorted by time.
    pub timeline: Vec<SwingEvent>,
    pub verdict: Verdict,
    /// When the verdict became final: the leading LOSP if unstable, the
    /// last stationary point if stable.
    pub verdict_time: Option<f64>,
    pub leading_losp: Option<Losp>,
    pub lagging_losp: Vec<Losp>,
    /// For subset monitoring: whether the subset's first DLP is the
    /// system's leading LOSP. `None` when the whole critical set is
    /// monitored or the subset saw no DLP.
    pub leading_losp_available: Option<bool>,
    /// Monitored machines with no event before the horizon.
    pub missing: Vec<u32>,
}

fn sort_by_time(events: &mut [SwingEvent]) {
    events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.machine.cmp(&b.machine)));
}

fn judge(events: &[SwingEvent], critical: &[u32], monitored: &[u32]) -> AssessmentReport {
    let by_machine: BTreeMap<u32, &SwingEvent> = events.iter().map(|e| (e.machine, e)).collect();
    let mut timeline: Vec<SwingEvent> = monitored
        .iter()
        .filter_map(|id| by_machine.get(id).map(|e| (*e).clone()))
        .collect();
    sort_by_time(&mut timeline);

    let machine_verdicts = monitored
        .iter()
        .map(|id| {
            (
                *id,
                by_machine
                    .get(id)
                    .map_or(Verdict::Undecided, |e| Verdict::of_event(e.kind)),
            )
        })
        .collect();
    let missing: Vec<u32> = monitored
        .iter()
        .copied()
        .filter(|id| !by_machine.contains_key(id))
        .collect();

    let dlps: Vec<Losp> = timeline
        .iter()
        .filter(|e| e.kind == EventKind::Dlp)
        .map(|e| Losp {
            machine: e.machine,
            time: e.time,
        })
        .collect();
    let complete = monitored.len() == critical.len();

    let (verdict, verdict_time) = if let Some(first) = dlps.first() {
        (Verdict::Unstable, Some(first.time))
    } else if !missing.is_empty() || !complete {
        (Verdict::Undecided, None)
    } else if timeline.iter().any(|e| e.kind == EventKind::Cdsp) {
        (Verdict::CriticalStable, timeline.last().map(|e| e.time))
    } else {
        (Verdict::Stable, timeline.last().map(|e| e.time))
    };

    let leading_losp_available = if complete || dlps.is_empty() {
        None
    } else {
        let system_first = events
            .iter()
            .filter(|e| e.kind == EventKind::Dlp && critical.contains(&e.machine))
            .map(|e| e.time)
            .fold(f64::INFINITY, f64::min);
        Some(dlps[0].time <= system_first)
    };

    AssessmentReport {
        critical: critical.to_vec(),
        monitored: monitored.to_vec(),
        no_disturbance: false,
        machine_verdicts,
        timeline,
        verdict,
        verdict_time,
        leading_losp: dlps.first().copied(),
        lagging_losp: dlps.iter().skip(1).copied().collect(),
        leading_losp_available,
        missing,
    }
}

/// Applies the unity principle to the events of the critical machines.
/// Events of machines outside `critical` are ignored.
pub fn assess(events: &[SwingEvent], critical: &[u32]) -> AssessmentReport {
    judge(events, critical, critical)
}

/// Judges the system from a subset of the critical machines only. A DLP in
/// the subset is enough for instability; stability can only be confirmed
/// when the subset is the whole critical set.
pub fn assess_subset(
    events: &[SwingEvent],
    critical: &[u32],
    monitored: &[u32],
) -> Result<AssessmentReport, AssessmentError> {
    if monitored.is_empty() {
        return Err(AssessmentError::EmptyMonitor);
    }
    if let Some(&id) = monitored.iter().find(|id| !critical.contains(id)) {
        return Err(AssessmentError::NotCritical(id));
    }
    let mut uniq: Vec<u32> = Vec::with_capacity(monitored.len());
    for &id in monitored {
        if !uniq.contains(&id) {
            uniq.push(id);
        }
    }
    let full = uniq.len() == critical.len();
    let mut report = judge(events, critical, if full { critical } else { &uniq });
    if full {
        report.leading_losp_available = None;
    }
    Ok(report)
}

impl AssessmentReport {
    /// An undisturbed case: nothing is critical, so the system is stable.
    pub fn undisturbed() -> Self {
        let mut r = assess(&[], &[]);
        r.no_disturbance = true;
        r
    }

    /// Writes `event_order,time,machine,kind,verdict_so_far`.
    pub fn write_timeline_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "event_order,time,machine,kind,verdict_so_far")?;
        let complete = self.monitored.len() == self.critical.len();
        let mut unstable = false;
        let mut cdsp = false;
        for (k, e) in self.timeline.iter().enumerate() {
            unstable |= e.kind == EventKind::Dlp;
            cdsp |= e.kind == EventKind::Cdsp;
            let so_far = if unstable {
                Verdict::Unstable
            } else if complete && k + 1 == self.monitored.len() {
                if cdsp {
                    Verdict::CriticalStable
                } else {
                    Verdict::Stable
                }
            } else {
                Verdict::Undecided
            };
            writeln!(
                out,
                "{},{},{},{},{}",
                k + 1,
                sig9(e.time),
                e.machine,
                e.kind,
                so_far
            )?;
        }
        Ok(())
    }

    /// Human-readable judgement timeline.
    pub fn to_text(&self) -> String {
        let ids = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        if self.no_disturbance {
            let _ = writeln!(s, "no disturbance: no critical machines");
        }
        let _ = writeln!(s, "critical machines: {{{}}}", ids(&self.critical));
        if self.monitored != self.critical {
            let _ = writeln!(s, "monitored machines: {{{}}}", ids(&self.monitored));
        }
        let _ = writeln!(s, "timeline:");
        for e in &self.timeline {
            let _ = writeln!(
                s,
                "  {} s  {}{}  theta {} rad  residual KE {}  A_ACC {}  A_DEC {}",
                sig9(e.time),
                e.kind,
                e.machine,
                sig9(e.theta),
                sig9(e.residual_ke),
                sig9(e.a_acc),
                sig9(e.a_dec)
            );
        }
        for id in &self.missing {
            let _ = writeln!(s, "  machine {id}: no event before the horizon");
        }
        let _ = writeln!(s, "machine verdicts:");
        for (id, v) in &self.machine_verdicts {
            let _ = writeln!(s, "  {id}: {v}");
        }
        match self.verdict_time {
            Some(t) => {
                let _ = writeln!(s, "system verdict: {} (at {} s)", self.verdict, sig9(t));
            }
            None => {
                let _ = writeln!(s, "system verdict: {}", self.verdict);
            }
        }
        if let Some(l) = self.leading_losp {
            let _ = writeln!(s, "leading LOSP: DLP{} at {} s", l.machine, sig9(l.time));
        }
        for l in &self.lagging_losp {
            let _ = writeln!(s, "lagging LOSP: DLP{} at {} s", l.machine, sig9(l.time));
        }
        match self.leading_losp_available {
            Some(true) => s.push_str("leading LOSP available from the monitored machines\n"),
            Some(false) => s.push_str("leading LOSP not available: only lagging LOSPs observed\n"),
            None => {}
        }
        s
    }
}

/// Settings of one simulate-and-assess run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssessOptions {
    pub t_end: f64,
    pub step: f64,
    pub tolerances: Tolerances,
    pub critical: CriticalParams,
    /// Re-run once with twice the horizon when the first verdict is
    /// undecided.
    pub extend_horizon: bool,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self {
            t_end: 1.5,
            step: DEFAULT_STEP,
            tolerances: Tolerances::default(),
            critical: CriticalParams::default(),
            extend_horizon: true,
        }
    }
}

/// Everything produced by [`run_assessment`].
#[derive(Debug, Clone)]
pub struct Assessment {
    /// The trajectory the verdict was read from (the extended one if the
    /// horizon was extended).
    pub trajectory: Trajectory,
    pub horizon_extended: bool,
    /// First event of every machine in the system, not only critical ones.
    pub events: Vec<SwingEvent>,
    pub report: AssessmentReport,
}

fn analyse(
    traj: &Trajectory,
    opts: &AssessOptions,
    monitored: Option<&[u32]>,
) -> Result<(Vec<SwingEvent>, AssessmentReport), AssessmentError> {
    let set = identify_critical(traj, &opts.critical)?;
    let mut events = Vec::new();
    for &id in &traj.machine_ids {
        let curve = kimbark_curve(traj, id, &opts.tolerances)?;
        if let Some(e) = detect_event(&curve, &opts.tolerances)? {
            events.push(e);
        }
    }
    if set.no_disturbance {
        if let Some(m) = monitored.and_then(|m| m.first()) {
            return Err(AssessmentError::NotCritical(*m));
        }
        return Ok((events, AssessmentReport::undisturbed()));
    }
    let report = match monitored {
        Some(m) => assess_subset(&events, &set.machines, m)?,
        None => assess(&events, &set.machines),
    };
    Ok((events, report))
}

/// Simulates a fault cleared at `t_clear` and judges the system, optionally
/// from a subset of the critical machines.
pub fn run_assessment(
    case: &PowerSystemCase,
    net: &StagedNetwork,
    t_clear: f64,
    opts: &AssessOptions,
    monitored: Option<&[u32]>,
) -> Result<Assessment, AssessmentError> {
    let traj = simulate(net, case, t_clear, opts.t_end, opts.step)?;
    let (events, report) = analyse(&traj, opts, monitored)?;
    // A longer horizon only helps when a monitored machine has no event yet.
    if report.verdict != Verdict::Undecided || !opts.extend_horizon || report.missing.is_empty() {
        return Ok(Assessment {
            trajectory: traj,
            horizon_extended: false,
            events,
            report,
        });
    }
    let long = simulate(net, case, t_clear, 2.0 * opts.t_end, opts.step)?;
    let (events, report) = analyse(&long, opts, monitored)?;
    Ok(Assessment {
        trajectory: long,
        horizon_extended: true,
        events,
        report,
    })
}

/// One evaluated clearing time during bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CctProbe {
    pub t_clear: f64,
    pub verdict: Verdict,
    pub horizon_extended: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CctResult {
    pub t_stable: f64,
    pub t_unstable: f64,
    /// Tolerance actually used (never below the step).
    pub tol: f64,
    pub tol_clamped: bool,
    /// Endpoint checks followed by midpoints, in evaluation order.
    pub log: Vec<CctProbe>,
}

impl CctResult {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for p in &self.log {
            let _ = writeln!(
                s,
                "t_clear {} s: {}{}",
                sig9(p.t_clear),
                p.verdict,
                if p.horizon_extended {
                    " (horizon extended)"
                } else {
                    ""
                }
            );
        }
        let _ = writeln!(s, "t_stable = {} s", sig9(self.t_stable));
        let _ = writeln!(s, "t_unstable = {} s", sig9(self.t_unstable));
        s
    }
}

fn snap(t: f64, step: f64) -> f64 {
    (t / step).round() * step
}

/// Bisects the clearing time between a stable `t_lo` and an unstable
/// `t_hi` until the bracket is no wider than `tol` (at least one step).
pub fn cct_bisect(
    case: &PowerSystemCase,
    fault_bus: u32,
    t_lo: f64,
    t_hi: f64,
    tol: f64,
    opts: &AssessOptions,
) -> Result<CctResult, AssessmentError> {
    if !(t_lo < t_hi) {
        return Err(AssessmentError::InvalidBracket { t_lo, t_hi });
    }
    let net = StagedNetwork::build(case, fault_bus)?;
    let h = opts.step;
    let tol_clamped = tol < h;
    let tol = tol.max(h);
    let mut log = Vec::new();
    let mut probe = |t: f64| -> Result<Verdict, AssessmentError> {
        let a = run_assessment(case, &net, t, opts, None)?;
        log.push(CctProbe {
            t_clear: t,
            verdict: a.report.verdict,
            horizon_extended: a.horizon_extended,
        });
        Ok(a.report.verdict)
    };

    let (mut lo, mut hi) = (snap(t_lo, h), snap(t_hi, h));
    let v_lo = probe(lo)?;
    let v_hi = probe(hi)?;
    if !v_lo.is_stable_side() || v_hi.is_stable_side() {
        return Err(AssessmentError::NotBracketed {
            t_lo: lo,
            lo: v_lo,
            t_hi: hi,
            hi: v_hi,
        });
    }
    let slack = 1e-9 * h;
    while hi - lo > tol + slack {
        let mid = snap(0.5 * (lo + hi), h);
        if mid <= lo + slack || mid >= hi - slack {
            break;
        }
        if probe(mid)?.is_stable_side() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CctResult {
        t_stable: lo,
        t_unstable: hi,
        tol,
        tol_clamped,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testcases::{omib_analytic_cct, omib_case};

    fn ev(machine: u32, kind: EventKind, time: f64) -> SwingEvent {
        SwingEvent {
            machine,
            kind,
            time,
            theta: 1.0,
            residual_ke: 0.0,
            a_acc: 1.0,
            a_dec: 1.0,
        }
    }

    fn bus2_like() -> Vec<SwingEvent> {
        vec![
            ev(38, EventKind::Dlp, 0.614),
            ev(39, EventKind::Dsp, 0.686),
            ev(37, EventKind::Dlp, 0.777),
        ]
    }

    #[test]
    fn any_dlp_means_unstable() {
        let r = assess(&bus2_like(), &[37, 38, 39]);
        assert_eq!(r.verdict, Verdict::Unstable);
        assert_eq!(r.verdict_time, Some(0.614));
        assert_eq!(
            r.leading_losp,
            Some(Losp {
                machine: 38,
                time: 0.614
            })
        );
        assert_eq!(
            r.lagging_losp,
            vec![Losp {
                machine: 37,
                time: 0.777
            }]
        );
        assert_eq!(
            r.timeline.iter().map(|e| e.machine).collect::<Vec<_>>(),
            vec![38, 39, 37]
        );
        assert_eq!(r.leading_losp_available, None);
    }

    #[test]
    fn all_dsp_means_stable() {
        let events = [
            ev(33, EventKind::Dsp, 0.5),
            ev(34, EventKind::Dsp, 0.45),
            ev(39, EventKind::Dsp, 0.6),
        ];
        let r = assess(&events, &[34, 33, 39]);
        assert_eq!(r.verdict, Verdict::Stable);
        assert_eq!(r.verdict_time, Some(0.6));
    }

    #[test]
    fn cdsp_with_dsps_is_critical_stable() {
        let events = [
            ev(33, EventKind::Dsp, 0.5),
            ev(34, EventKind::Cdsp, 0.45),
            ev(39, EventKind::Dsp, 0.6),
        ];
        assert_eq!(
            assess(&events, &[34, 33, 39]).verdict,
            Verdict::CriticalStable
        );
    }

    #[test]
    fn missing_event_is_undecided_unless_something_liberated() {
        let r = assess(&[ev(33, EventKind::Dsp, 0.5)], &[33, 34]);
        assert_eq!(r.verdict, Verdict::Undecided);
        assert_eq!(r.missing, vec![34]);
        let r = assess(&[ev(33, EventKind::Dlp, 0.5)], &[33, 34]);
        assert_eq!(r.verdict, Verdict::Unstable);
    }

    #[test]
    fn empty_critical_set_is_stable() {
        let r = assess(&[], &[]);
        assert_eq!(r.verdict, Verdict::Stable);
        assert!(r.timeline.is_empty());
    }

    #[test]
    fn non_critical_events_are_ignored() {
        let events = [ev(30, EventKind::Dlp, 0.3), ev(34, EventKind::Dsp, 0.4)];
        assert_eq!(assess(&events, &[34]).verdict, Verdict::Stable);
    }

    #[test]
    fn subset_monitoring() {
        let events = bus2_like();
        let crit = [37, 38, 39];
        let r = assess_subset(&events, &crit, &[38]).unwrap();
        assert_eq!(
            (r.verdict, r.leading_losp_available),
            (Verdict::Unstable, Some(true))
        );
        let r = assess_subset(&events, &crit, &[37]).unwrap();
        assert_eq!(
            (r.verdict, r.leading_losp_available),
            (Verdict::Unstable, Some(false))
        );
        let r = assess_subset(&events, &crit, &[39]).unwrap();
        assert_eq!(r.verdict, Verdict::Undecided);
        let r = assess_subset(&events, &crit, &[39, 38, 37]).unwrap();
        assert_eq!(
            (r.verdict, r.leading_losp_available),
            (Verdict::Unstable, None)
        );
        assert!(matches!(
            assess_subset(&events, &crit, &[30]),
            Err(AssessmentError::NotCritical(30))
        ));
        assert!(matches!(
            assess_subset(&events, &crit, &[]),
            Err(AssessmentError::EmptyMonitor)
        ));
    }

    #[test]
    fn timeline_csv_tracks_verdict() {
        let r = assess(&bus2_like(), &[37, 38, 39]);
        let mut buf = Vec::new();
        r.write_timeline_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "event_order,time,machine,kind,verdict_so_far\n\
             1,0.614,38,DLP,unstable\n2,0.686,39,DSP,unstable\n3,0.777,37,DLP,unstable\n"
        );
        let events = [ev(33, EventKind::Dsp, 0.5), ev(34, EventKind::Dsp, 0.45)];
        let mut buf = Vec::new();
        assess(&events, &[33, 34])
            .write_timeline_csv(&mut buf)
            .unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .ends_with("1,0.45,34,DSP,undecided\n2,0.5,33,DSP,stable\n"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::Stable.exit_code(), 0);
        assert_eq!(Verdict::Unstable.exit_code(), 1);
        assert_eq!(Verdict::Undecided.exit_code(), 2);
        assert_eq!(Verdict::CriticalStable.exit_code(), 3);
    }

    #[test]
    fn omib_bisection_brackets_the_analytic_cct() {
        let case = omib_case();
        let exact = omib_analytic_cct();
        let opts = AssessOptions {
            t_end: 1.5,
            ..AssessOptions::default()
        };
        let res = cct_bisect(&case, 1, 0.05, 0.6, 1e-3, &opts).unwrap();
        assert!(res.t_unstable - res.t_stable <= 1e-3 + 1e-12);
        assert!(
            res.t_stable - 2e-3 <= exact && exact <= res.t_unstable + 2e-3,
            "{exact} not in [{}, {}]",
            res.t_stable,
            res.t_unstable
        );
    }

    #[test]
    fn bisection_rejects_bad_brackets() {
        let case = omib_case();
        let opts = AssessOptions::default();
        assert!(matches!(
            cct_bisect(&case, 1, 0.3, 0.1, 1e-3, &opts),
            Err(AssessmentError::InvalidBracket { .. })
        ));
        assert!(matches!(
            cct_bisect(&case, 1, 0.05, 0.06, 1e-3, &opts),
            Err(AssessmentError::NotBracketed { .. })
        ));
    }

    #[test]
    fn converged_bracket_returns_immediately() {
        let case = omib_case();
        let res = cct_bisect(&case, 1, 0.1, 0.6, 1e-4, &AssessOptions::default()).unwrap();
        assert!(res.tol_clamped && res.tol == 1e-3);
        let again = cct_bisect(
            &case,
            1,
            res.t_stable,
            res.t_unstable,
            1e-3,
            &AssessOptions::default(),
        )
        .unwrap();
        assert_eq!(again.log.len(), 2);
        assert_eq!(
            (again.t_stable, again.t_unstable),
            (res.t_stable, res.t_unstable)
        );
    }
}
