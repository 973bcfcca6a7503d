//! Command-line front end.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::io::{exit_code, parse_key_values, RunDirectory, RunManifest};
use crate::scenarios::{run, NullObserver, Observer, RunOutput, ScenarioConfig, ScenarioId};

#[derive(Debug, Parser)]
#[command(
    name = "lrvlasov",
    version,
    about = "Low-rank solvers for advection and Vlasov-Poisson benchmarks",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub scenario: ScenarioCmd,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Constant advection in four dimensions (hierarchical Tucker solver).
    #[command(name = "advection4d")]
    Advection4d(RunArgs),
    /// Diagonal advection of a cross-shaped indicator.
    #[command(name = "advection-cross")]
    AdvectionCross(RunArgs),
    /// Solid-body rotation.
    #[command(name = "rotation")]
    Rotation(RunArgs),
    /// Swirling deformation that reverses at half period.
    #[command(name = "swirl")]
    Swirl(RunArgs),
    /// 1D1V transport in a prescribed electric field.
    #[command(name = "linear-vp")]
    LinearVp(RunArgs),
    /// 1D1V two-stream instability.
    #[command(name = "two-stream")]
    TwoStream(RunArgs),
    /// 2D2V weak Landau damping.
    #[command(name = "landau-weak-2d2v")]
    LandauWeak(RunArgs),
    /// 2D2V strong Landau damping.
    #[command(name = "landau-strong-2d2v")]
    LandauStrong(RunArgs),
}

impl ScenarioCmd {
    fn parts(&self) -> (ScenarioId, &RunArgs) {
        match self {
            ScenarioCmd::Advection4d(a) => (ScenarioId::Advection4d, a),
            ScenarioCmd::AdvectionCross(a) => (ScenarioId::AdvectionCross, a),
            ScenarioCmd::Rotation(a) => (ScenarioId::Rotation, a),
            ScenarioCmd::Swirl(a) => (ScenarioId::Swirl, a),
            ScenarioCmd::LinearVp(a) => (ScenarioId::LinearVp, a),
            ScenarioCmd::TwoStream(a) => (ScenarioId::TwoStream, a),
            ScenarioCmd::LandauWeak(a) => (ScenarioId::LandauWeak2d2v, a),
            ScenarioCmd::LandauStrong(a) => (ScenarioId::LandauStrong2d2v, a),
        }
    }
}

/// Flags shared by all scenarios. Unset flags fall back to the config file,
/// then to the scenario defaults listed under each subcommand's help.
#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// Points per dimension; give once for all, or once per dimension.
    #[arg(long = "n", value_name = "N")]
    pub n: Vec<usize>,
    /// Relative truncation accuracy.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Rank cap applied at every truncation.
    #[arg(long = "rmax")]
    pub r_max: Option<usize>,
    /// Courant number.
    #[arg(long, allow_negative_numbers = true)]
    pub cfl: Option<f64>,
    /// Final time.
    #[arg(long = "t-end", allow_negative_numbers = true)]
    pub t_end: Option<f64>,
    /// Time integrator: fe, ssp2 or ssp3.
    #[arg(long)]
    pub integrator: Option<String>,
    /// Interface reconstruction: linear5 or weno5.
    #[arg(long)]
    pub recon: Option<String>,
    /// solution or flowmap.
    #[arg(long)]
    pub method: Option<String>,
    /// Output directory for diag.csv, snapshots and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Snapshot cadence in steps (0 disables).
    #[arg(long = "snap-every")]
    pub snap_every: Option<usize>,
    /// Diagnostics cadence in steps.
    #[arg(long = "diag-every")]
    pub diag_every: Option<usize>,
    /// Recorded in the manifest.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial profile for rotation and swirl: smooth or cross.
    #[arg(long)]
    pub ic: Option<String>,
    /// Perturbation amplitude.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Flip velocities at this time and continue to --t-end.
    #[arg(long = "reverse-at")]
    pub reverse_at: Option<f64>,
    /// key = value file applied before the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Disable data parallelism.
    #[arg(long)]
    pub sequential: bool,
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| Error::InvalidInput(format!("bad value '{v}' for {key}: {e}")))
}

/// Apply one named setting to a configuration.
pub fn apply_setting(cfg: &mut ScenarioConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "n" => {
            let n = value
                .split([',', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| parse::<usize>(key, s))
                .collect::<Result<Vec<_>>>()?;
            cfg.set_n(&n)?;
        }
        "eps" => cfg.eps = parse(key, value)?,
        "rmax" | "r_max" => cfg.r_max = parse(key, value)?,
        "cfl" => cfg.cfl = parse(key, value)?,
        "t-end" | "t_end" => cfg.t_end = parse(key, value)?,
        "integrator" => cfg.integrator = value.parse()?,
        "recon" => cfg.recon = value.parse()?,
        "method" => cfg.method = value.parse()?,
        "out" => cfg.out = Some(PathBuf::from(value)),
        "snap-every" | "snap_every" => cfg.snap_every = parse(key, value)?,
        "diag-every" | "diag_every" => cfg.diag_every = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "ic" => cfg.shape = value.parse()?,
        "alpha" => cfg.alpha = parse(key, value)?,
        "reverse-at" | "reverse_at" => cfg.reverse_at = Some(parse(key, value)?),
        _ => return Err(Error::InvalidInput(format!("unknown setting '{key}'"))),
    }
    Ok(())
}

/// Resolve the configuration: scenario defaults, then the config file, then flags.
pub fn build_config(id: ScenarioId, a: &RunArgs) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::new(id);
    if let Some(path) = &a.config {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (k, v) in parse_key_values(&text)? {
            apply_setting(&mut cfg, &k, &v)?;
        }
    }
    if !a.n.is_empty() {
        cfg.set_n(&a.n)?;
    }
    let s = |x: &Option<String>| x.clone();
    let pairs: [(&str, Option<String>); 14] = [
        ("eps", a.eps.map(|x| x.to_string())),
        ("rmax", a.r_max.map(|x| x.to_string())),
        ("cfl", a.cfl.map(|x| x.to_string())),
        ("t-end", a.t_end.map(|x| x.to_string())),
        ("integrator", s(&a.integrator)),
        ("recon", s(&a.recon)),
        ("method", s(&a.method)),
        ("out", a.out.as_ref().map(|p| p.to_string_lossy().into_owned())),
        ("snap-every", a.snap_every.map(|x| x.to_string())),
        ("diag-every", a.diag_every.map(|x| x.to_string())),
        ("seed", a.seed.map(|x| x.to_string())),
        ("ic", s(&a.ic)),
        ("alpha", a.alpha.map(|x| x.to_string())),
        ("reverse-at", a.reverse_at.map(|x| x.to_string())),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            apply_setting(&mut cfg, k, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn defaults_help(id: ScenarioId) -> String {
    let c = ScenarioConfig::new(id);
    let bounds: Vec<String> = c.bounds.iter().map(|(a, b)| format!("[{a:.4}, {b:.4}]")).collect();
    format!(
        "Defaults: n={:?} domain={} eps={:e} rmax={} cfl={:.4} t-end={:.4} integrator={:?} recon={:?} method={:?}",
        c.n,
        bounds.join("x"),
        c.eps,
        c.r_max,
        c.cfl,
        c.t_end,
        c.integrator,
        c.recon,
        c.method
    )
    .to_lowercase()
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for id in ScenarioId::ALL {
        cmd = cmd.mut_subcommand(id.name(), |c| c.after_help(defaults_help(id)));
    }
    cmd
}

/// Parse arguments; clap errors carry their own exit codes.
pub fn parse_args<I, T>(args: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let m = command().try_get_matches_from(args)?;
    Cli::from_arg_matches(&m)
}

fn summary(cfg: &ScenarioConfig, o: &RunOutput) -> String {
    let mut s = format!(
        "{}: {} steps of dt={:.6e} to t={:.6}, max rank {}, {:.3}s in steps",
        cfg.scenario, o.steps, o.dt, o.t_final, o.max_rank, o.step_seconds_total
    );
    if let Some(e) = o.error {
        s += &format!(", error ({:?}) {e:.6e}", o.error_norm);
    }
    if let Some((ex, ey)) = o.map_errors {
        s += &format!(", map errors {ex:.6e} {ey:.6e}");
    }
    s
}

/// Run the program and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match parse_args(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (id, a) = cli.scenario.parts();
    let cfg = match build_config(id, a) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    crate::par::set_sequential(a.sequential);
    let result = execute(&cfg);
    match result {
        Ok(o) => {
            println!("{}", summary(&cfg, &o));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Run a resolved configuration, writing the run directory when `out` is set.
pub fn execute(cfg: &ScenarioConfig) -> Result<RunOutput> {
    let Some(dir) = &cfg.out else {
        let mut obs = NullObserver;
        return run(cfg, &mut obs as &mut dyn Observer);
    };
    let mut manifest = RunManifest::new(cfg)?;
    let mut rd = RunDirectory::create(dir)?;
    let outcome = run(cfg, &mut rd);
    manifest.snapshots = rd.snapshots().to_vec();
    manifest.finish(&outcome);
    manifest.write(&dir.join("manifest.json"))?;
    outcome
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_flags() {
        let cli = parse_args(["lrvlasov", "rotation", "--n", "128", "--eps", "1e-5", "--t-end", "6.5"]).unwrap();
        let (id, a) = cli.scenario.parts();
        let cfg = build_config(id, a).unwrap();
        assert_eq!(cfg.n, vec![128, 128]);
        assert_eq!(cfg.eps, 1e-5);
        assert_eq!(cfg.t_end, 6.5);
    }

    #[test]
    fn no_args_is_usage_error() {
        let e = parse_args(["lrvlasov"]).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn negative_eps_rejected() {
        let cli = parse_args(["lrvlasov", "swirl", "--eps", "-1"]).unwrap();
        let (id, a) = cli.scenario.parts();
        assert!(matches!(build_config(id, a), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn flowmap_in_4d_conflicts() {
        let cli = parse_args(["lrvlasov", "advection4d", "--method", "flowmap"]).unwrap();
        let (id, a) = cli.scenario.parts();
        assert!(build_config(id, a).is_err());
    }
}
