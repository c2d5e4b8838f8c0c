use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use imeac_core::assessment::AssessOptions;
use imeac_core::case::{load_case_file, ts1, PowerSystemCase};
use imeac_core::dynamics::DEFAULT_STEP;
use imeac_core::imeac::{CriticalParams, Tolerances};
use serde::Deserialize;

/// A problem with the arguments or configuration rather than the run.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

macro_rules! usage {
    ($($t:tt)*) => { return Err(UsageError(format!($($t)*)).into()) };
}

/// Environment variable naming the directory searched for `--case NAME`.
pub const CASE_DIR_ENV: &str = "IMEAC_CASE_DIR";

/// Options shared by every subcommand. Each can also come from the
/// `--config` file; a flag on the command line wins over the file.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with any of these options (same names as the flags)
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Case file path, or a case name looked up as NAME.json in $IMEAC_CASE_DIR
    /// ("ts1" is always available)
    #[arg(long, global = true)]
    pub case: Option<String>,

    /// Faulted bus id (comma-separated list for `cct`)
    #[arg(long, global = true, value_delimiter = ',')]
    pub fault_bus: Option<Vec<u32>>,

    /// Fault clearing time, s
    #[arg(long, global = true)]
    pub tcl: Option<f64>,

    /// Simulation end time, s [default: 1.5]
    #[arg(long, global = true)]
    pub tend: Option<f64>,

    /// Integration step, s [default: 0.001]
    #[arg(long, global = true)]
    pub step: Option<f64>,

    /// Output directory [default: out]
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true)]
    pub eps_f: Option<f64>,
    #[arg(long, global = true)]
    pub eps_omega: Option<f64>,
    #[arg(long, global = true)]
    pub eps_energy: Option<f64>,
    /// Event-time coincidence tolerance, s [default: step/10]
    #[arg(long, global = true)]
    pub eps_t: Option<f64>,

    /// Critical-machine observation window after clearing, s
    #[arg(long, global = true)]
    pub crit_window: Option<f64>,
    /// Kinetic-energy share that makes a machine critical
    #[arg(long, global = true)]
    pub crit_kinetic_share: Option<f64>,
    /// Angle-excursion ratio (to the largest) that makes a machine critical
    #[arg(long, global = true)]
    pub crit_angle_ratio: Option<f64>,
    /// Excursion below which the case counts as undisturbed, rad
    #[arg(long, global = true)]
    pub crit_min_disturbance: Option<f64>,

    /// Judge from these critical machines only (comma-separated)
    #[arg(long, global = true, value_delimiter = ',')]
    pub monitor: Option<Vec<u32>>,

    /// Lower end of the clearing-time bracket, s
    #[arg(long, global = true)]
    pub t_lo: Option<f64>,
    /// Upper end of the clearing-time bracket, s
    #[arg(long, global = true)]
    pub t_hi: Option<f64>,
    /// Bracket width to stop at, s [default: 0.001]
    #[arg(long, global = true)]
    pub tol: Option<f64>,

    /// Machines to export (default: the critical machines)
    #[arg(long, global = true, value_delimiter = ',')]
    pub machine: Option<Vec<u32>>,

    /// Do not extend the horizon when the first verdict is undecided
    #[arg(long, global = true)]
    #[serde(default)]
    pub no_extend: bool,

    /// Worker threads for independent simulations [default: 1]
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

macro_rules! merge_fields {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $dst.$f.is_none() { $dst.$f = $src.$f; } )*
    };
}

impl RunArgs {
    /// Fills unset options from the `--config` file, if any.
    pub fn with_config(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let file: RunArgs =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        merge_fields!(self, file;
            case, fault_bus, tcl, tend, step, out, eps_f, eps_omega, eps_energy, eps_t,
            crit_window, crit_kinetic_share, crit_angle_ratio, crit_min_disturbance,
            monitor, t_lo, t_hi, tol, machine, jobs,
        );
        self.no_extend |= file.no_extend;
        Ok(self)
    }

    pub fn load_case(&self) -> Result<PowerSystemCase> {
        let spec = self.case.as_deref().unwrap_or("ts1");
        resolve_case(
            spec,
            std::env::var_os(CASE_DIR_ENV).map(PathBuf::from).as_deref(),
        )
    }

    pub fn fault_buses(&self) -> Result<Vec<u32>> {
        match &self.fault_bus {
            Some(v) if !v.is_empty() => Ok(v.clone()),
            _ => usage!("--fault-bus is required"),
        }
    }

    pub fn fault_bus(&self) -> Result<u32> {
        let buses = self.fault_buses()?;
        if buses.len() != 1 {
            usage!("this command takes exactly one --fault-bus");
        }
        Ok(buses[0])
    }

    pub fn tcl(&self) -> Result<f64> {
        match self.tcl {
            None => usage!("--tcl is required"),
            Some(t) if !(t > 0.0) => usage!("--tcl must be positive, got {t}"),
            Some(t) => Ok(t),
        }
    }

    pub fn step(&self) -> Result<f64> {
        let h = self.step.unwrap_or(DEFAULT_STEP);
        if !(h.is_finite() && h > 0.0) {
            usage!("--step must be positive, got {h}");
        }
        Ok(h)
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir)
            .with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(dir)
    }

    pub fn jobs(&self) -> usize {
        self.jobs.unwrap_or(1).max(1)
    }

    pub fn options(&self) -> Result<AssessOptions> {
        let t = Tolerances::default();
        let c = CriticalParams::default();
        Ok(AssessOptions {
            t_end: self.tend.unwrap_or(1.5),
            step: self.step()?,
            tolerances: Tolerances {
                eps_f: self.eps_f.unwrap_or(t.eps_f),
                eps_omega: self.eps_omega.unwrap_or(t.eps_omega),
                eps_energy: self.eps_energy.unwrap_or(t.eps_energy),
                eps_t: self.eps_t.or(t.eps_t),
            },
            critical: CriticalParams {
                window: self.crit_window.unwrap_or(c.window),
                kinetic_share: self.crit_kinetic_share.unwrap_or(c.kinetic_share),
                angle_ratio: self.crit_angle_ratio.unwrap_or(c.angle_ratio),
                min_disturbance: self.crit_min_disturbance.unwrap_or(c.min_disturbance),
            },
            extend_horizon: !self.no_extend,
        })
    }
}

/// An existing path is loaded directly; otherwise `NAME.json` is looked up
/// in `case_dir`, and finally the bundled cases are tried.
pub fn resolve_case(spec: &str, case_dir: Option<&Path>) -> Result<PowerSystemCase> {
    let direct = Path::new(spec);
    if direct.is_file() {
        return Ok(load_case_file(direct)?);
    }
    if let Some(dir) = case_dir {
        let candidate = dir.join(format!("{spec}.json"));
        if candidate.is_file() {
            return Ok(load_case_file(&candidate)?);
        }
    }
    match spec.to_ascii_lowercase().as_str() {
        "ts1" | "ts-1" => Ok(ts1()),
        _ => usage!("case {spec:?} is neither a file nor a known case name"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_fills_only_unset_fields() {
        let dir = std::env::temp_dir().join(format!("imeac-config-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.toml");
        std::fs::write(
            &path,
            "fault-bus = [34]\ntcl = 0.18\ntend = 2.0\neps-f = 1e-7\n",
        )
        .unwrap();
        let args = RunArgs {
            config: Some(path),
            tcl: Some(0.2),
            ..RunArgs::default()
        }
        .with_config()
        .unwrap();
        assert_eq!(args.fault_bus, Some(vec![34]));
        assert_eq!(args.tcl, Some(0.2));
        assert_eq!(args.tend, Some(2.0));
        assert_eq!(args.options().unwrap().tolerances.eps_f, 1e-7);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        assert!(toml::from_str::<RunArgs>("bogus = 1").is_err());
    }

    #[test]
    fn zero_clearing_time_is_rejected() {
        let args = RunArgs {
            tcl: Some(0.0),
            ..RunArgs::default()
        };
        assert!(args.tcl().is_err());
    }

    #[test]
    fn bundled_case_by_name() {
        assert_eq!(resolve_case("ts1", None).unwrap().generators.len(), 10);
        assert!(resolve_case("nope", None).is_err());
    }
}
