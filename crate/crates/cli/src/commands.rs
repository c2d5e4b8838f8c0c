use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use imeac_core::assessment::{cct_bisect, run_assessment, CctResult};
use imeac_core::dynamics::{simulate as run_simulation, Trajectory};
use imeac_core::format::sig9;
use imeac_core::imeac::{identify_critical, kimbark_curve, write_events_csv, SwingEvent};
use imeac_core::network::{Stage, StagedNetwork};
use imeac_core::PowerSystemCase;
use log::{info, warn};
use rayon::prelude::*;

use crate::config::{RunArgs, UsageError};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    body(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn fault_label(case: &PowerSystemCase, bus: u32, t_clear: f64) -> String {
    format!("[{}, bus-{}, {}s]", case.system.name, bus, sig9(t_clear))
}

fn summary(case: &PowerSystemCase, bus: u32, traj: &Trajectory) -> String {
    let (r_theta, r_omega, r_f) = traj.coi_residuals();
    let fault_on = traj
        .samples
        .iter()
        .filter(|s| s.stage == Stage::FaultOn)
        .count();
    let mut s = String::new();
    let _ = writeln!(s, "fault: {}", fault_label(case, bus, traj.t_clear));
    let _ = writeln!(s, "machines: {}", traj.n_machines());
    let _ = writeln!(s, "step: {} s", sig9(traj.step));
    let _ = writeln!(s, "end time: {} s", sig9(traj.t_end));
    let _ = writeln!(
        s,
        "samples: {} fault-on, {} post-fault",
        fault_on,
        traj.samples.len() - fault_on
    );
    let _ = writeln!(s, "max |sum M*theta| / M_T: {}", sig9(r_theta));
    let _ = writeln!(s, "max |sum M*omega_rel| / M_T: {}", sig9(r_omega));
    let _ = writeln!(s, "max |sum f|: {}", sig9(r_f));
    let _ = writeln!(s, "machine,max_abs_theta,final_theta,departed");
    let last = traj.samples.last().expect("trajectory has samples");
    for (i, id) in traj.machine_ids.iter().enumerate() {
        let peak = traj
            .samples
            .iter()
            .map(|x| x.theta[i].abs())
            .fold(0.0, f64::max);
        let _ = writeln!(
            s,
            "{},{},{},{}",
            id,
            sig9(peak),
            sig9(last.theta[i]),
            if peak > TWO_PI { "yes" } else { "no" }
        );
    }
    s
}

pub fn simulate(args: &RunArgs) -> Result<u8> {
    let case = args.load_case()?;
    let bus = args.fault_bus()?;
    let t_clear = args.tcl()?;
    let opts = args.options()?;
    let net = StagedNetwork::build(&case, bus)?;
    let traj = run_simulation(&net, &case, t_clear, opts.t_end, opts.step)?;
    let dir = args.out_dir()?;
    write_file(&dir, "trajectory.csv", |w| traj.write_csv(w))?;
    let text = summary(&case, bus, &traj);
    write_file(&dir, "summary.txt", |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    Ok(0)
}

pub fn assess(args: &RunArgs) -> Result<u8> {
    let case = args.load_case()?;
    let bus = args.fault_bus()?;
    let t_clear = args.tcl()?;
    let opts = args.options()?;
    let net = StagedNetwork::build(&case, bus)?;
    let run = run_assessment(&case, &net, t_clear, &opts, args.monitor.as_deref())?;
    let report = &run.report;
    let dir = args.out_dir()?;

    let critical_events: Vec<SwingEvent> = report
        .critical
        .iter()
        .filter_map(|id| run.events.iter().find(|e| e.machine == *id).cloned())
        .collect();
    write_file(&dir, "events.csv", |w| {
        write_events_csv(&critical_events, w)
    })?;
    write_file(&dir, "timeline.csv", |w| report.write_timeline_csv(w))?;
    for &id in &report.critical {
        let curve = kimbark_curve(&run.trajectory, id, &opts.tolerances)?;
        write_file(&dir, &format!("kimbark_{id}.csv"), |w| curve.write_csv(w))?;
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "fault: {}",
        fault_label(&case, bus, run.trajectory.t_clear)
    );
    let _ = writeln!(
        text,
        "horizon: {} s{}",
        sig9(run.trajectory.t_end),
        if run.horizon_extended {
            " (extended)"
        } else {
            ""
        }
    );
    text.push_str(&report.to_text());
    write_file(&dir, "report.txt", |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    Ok(report.verdict.exit_code() as u8)
}

pub fn cct(args: &RunArgs) -> Result<u8> {
    let case = args.load_case()?;
    let buses = args.fault_buses()?;
    let opts = args.options()?;
    let (t_lo, t_hi) = (args.t_lo.unwrap_or(0.1), args.t_hi.unwrap_or(0.3));
    if !(t_lo < t_hi) {
        return Err(UsageError(format!("bracket [{t_lo}, {t_hi}] must have t-lo < t-hi")).into());
    }
    let tol = args.tol.unwrap_or(1e-3);
    if tol < opts.step {
        warn!(
            "tolerance {tol} s is below the step {} s; using {} s",
            opts.step, opts.step
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs())
        .build()
        .context("starting worker threads")?;
    let results: Vec<Result<CctResult>> = pool.install(|| {
        buses
            .par_iter()
            .map(|&bus| {
                cct_bisect(&case, bus, t_lo, t_hi, tol, &opts)
                    .with_context(|| format!("fault bus {bus}"))
            })
            .collect()
    });

    let mut text = String::new();
    for (bus, res) in buses.iter().zip(results) {
        let res = res?;
        let _ = writeln!(
            text,
            "fault bus {bus}, bracket [{}, {}] s, tolerance {} s",
            sig9(t_lo),
            sig9(t_hi),
            sig9(res.tol)
        );
        text.push_str(&res.to_text());
    }
    let dir = args.out_dir()?;
    write_file(&dir, "cct.txt", |w| w.write_all(text.as_bytes()))?;
    print!("{text}");
    Ok(0)
}

pub fn export_kimbark(args: &RunArgs) -> Result<u8> {
    let case = args.load_case()?;
    let bus = args.fault_bus()?;
    let t_clear = args.tcl()?;
    let opts = args.options()?;
    let net = StagedNetwork::build(&case, bus)?;
    let traj = run_simulation(&net, &case, t_clear, opts.t_end, opts.step)?;
    let machines = match &args.machine {
        Some(m) => m.clone(),
        None => identify_critical(&traj, &opts.critical)?.machines,
    };
    let dir = args.out_dir()?;
    for &id in &machines {
        let curve = kimbark_curve(&traj, id, &opts.tolerances)?;
        write_file(&dir, &format!("kimbark_{id}.csv"), |w| curve.write_csv(w))?;
        println!("kimbark_{id}.csv");
    }
    if machines.is_empty() {
        println!("no disturbed machines; nothing exported");
    }
    Ok(0)
}
