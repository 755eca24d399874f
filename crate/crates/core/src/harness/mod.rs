//! Single runs and sweeps: build a world from a config, run it, and render
//! the STAT report, CSV rows and figure tables.

mod sweep;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use sweep::{
    figure_csv, mean_rows, plan_runs, run_sweep, write_sweep, Figure, MeanRow, RunSpec, SweepOutput,
    SweepSpec,
};

use crate::adversary::AttackKind;
use crate::config::{Protocol, ScenarioConfig};
use crate::telemetry::{fmt_metric, render_stat, MetricsReport};
use crate::world::{SetupError, World};

pub const CSV_HEADER: &str = "protocol,attack,fraction,seed,pdf,avg_delay,throughput,route_errors";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("setup failed: {source}\n--- failing config ---\n{config}")]
    Setup { source: SetupError, config: String },
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    let io = |source| RunError::Io { path: path.to_path_buf(), source };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, contents).map_err(io)
}

/// Everything a finished run produces.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub protocol: Protocol,
    pub attack: Option<AttackKind>,
    pub fraction: f64,
    pub seed: u64,
    pub report: MetricsReport,
    pub stat: String,
    pub mobility: Option<String>,
}

impl RunResult {
    pub fn attack_label(&self) -> &'static str {
        self.attack.map_or("none", AttackKind::as_str)
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.protocol.as_str(),
            self.attack_label(),
            fmt_fraction(self.fraction),
            self.seed,
            fmt_metric(self.report.pdf()),
            fmt_metric(self.report.avg_delay()),
            fmt_metric(Some(self.report.throughput())),
            self.report.route_errors
        )
    }

    /// File stem shared by this run's STAT and mobility files.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_f{}_s{}",
            self.protocol.as_str(),
            self.attack_label(),
            fmt_fraction(self.fraction),
            self.seed
        )
    }
}

pub fn fmt_fraction(f: f64) -> String {
    if f.fract() == 0.0 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

/// Runs one simulation in memory.
pub fn simulate(cfg: &ScenarioConfig, mobility_trace: bool) -> Result<RunResult, RunError> {
    let mut world = World::new(cfg.clone())
        .map_err(|source| RunError::Setup { source, config: cfg.to_toml_string() })?;
    if mobility_trace {
        world.enable_mobility_log();
    }
    let report = world.run();
    let stat = render_stat(&report, &cfg.echo(), world.telemetry.nodes());
    let mobility = mobility_trace.then(|| {
        let mut s = String::from("time,node,x,y\n");
        for (t, n, p) in world.mobility_log() {
            let _ = writeln!(s, "{:.6},{},{:.6},{:.6}", t.as_secs_f64(), n.0, p.x, p.y);
        }
        s
    });
    let attack = cfg.attack.as_ref().map(|a| a.kind);
    let fraction = cfg.attack.as_ref().map_or(0.0, |a| if a.nodes.is_empty() { a.malicious_fraction } else { 0.0 });
    Ok(RunResult {
        protocol: cfg.protocol,
        attack,
        fraction,
        seed: cfg.seed,
        report,
        stat,
        mobility,
    })
}

/// Runs one simulation and writes `GLOMO.STAT` and `run.csv` under `out_dir`.
pub fn run_one(cfg: &ScenarioConfig, out_dir: &Path, mobility_trace: bool) -> Result<RunResult, RunError> {
    let result = simulate(cfg, mobility_trace)?;
    write_file(&out_dir.join("GLOMO.STAT"), &result.stat)?;
    write_file(&out_dir.join("run.csv"), &format!("{CSV_HEADER}\n{}\n", result.csv_row()))?;
    if let Some(m) = &result.mobility {
        write_file(&out_dir.join("mobility.csv"), m)?;
    }
    Ok(result)
}

/// Maps `f` over `items`, on the rayon pool when `parallel` is set and the
/// feature is compiled in. Output order always matches input order.
pub fn map_runs<T, R, F>(items: &[T], parallel: bool, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(&f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_duration_is_empty() {
        let cfg = ScenarioConfig { sim_duration: 0.0, node_count: 5, ..ScenarioConfig::default() };
        let r = simulate(&cfg, false).unwrap();
        assert_eq!(r.report.generated, 0);
        assert_eq!(r.report.pdf(), None);
        assert!(r.csv_row().starts_with("aodv,none,0,1,NA,NA,0.000000000,0"));
    }

    #[test]
    fn map_runs_keeps_order() {
        let xs: Vec<u32> = (0..50).collect();
        assert_eq!(map_runs(&xs, true, |x| x * 2), map_runs(&xs, false, |x| x * 2));
    }
}
