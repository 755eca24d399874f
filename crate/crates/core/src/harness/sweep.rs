use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::Path;

use super::{fmt_fraction, map_runs, simulate, write_file, RunError, RunResult, CSV_HEADER};
use crate::adversary::{AttackKind, AttackProfile};
use crate::config::{Protocol, ScenarioConfig};
use crate::telemetry::fmt_metric;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    /// Malicious percentages.
    pub fractions: Vec<f64>,
    pub seeds: Vec<u64>,
    pub protocols: Vec<Protocol>,
    pub attacks: Vec<AttackKind>,
    /// One SD-AODV column per attack instead of their mean.
    pub separate_sdaodv_curves: bool,
    pub mobility_trace: bool,
    pub parallel: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            fractions: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            seeds: (1..=5).collect(),
            protocols: Protocol::ALL.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
            separate_sdaodv_curves: false,
            mobility_trace: false,
            parallel: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub protocol: Protocol,
    pub attack: Option<AttackKind>,
    pub fraction: f64,
    pub seed: u64,
}

impl RunSpec {
    pub fn config(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = base.clone();
        cfg.seed = self.seed;
        cfg.protocol = self.protocol;
        cfg.attack = self.attack.map(|kind| AttackProfile {
            kind,
            malicious_fraction: self.fraction,
            nodes: Vec::new(),
            tunnel_pairs: Vec::new(),
            ..base.attack.clone().unwrap_or_default()
        });
        cfg
    }
}

fn order(a: &RunSpec, b: &RunSpec) -> Ordering {
    (a.protocol, a.attack)
        .cmp(&(b.protocol, b.attack))
        .then(a.fraction.total_cmp(&b.fraction))
        .then(a.seed.cmp(&b.seed))
}

/// Attack-free baselines per protocol and seed, then every
/// `(protocol, attack, fraction, seed)` point, in output order.
pub fn plan_runs(spec: &SweepSpec) -> Vec<RunSpec> {
    let mut runs = Vec::new();
    for &protocol in &spec.protocols {
        for &seed in &spec.seeds {
            runs.push(RunSpec { protocol, attack: None, fraction: 0.0, seed });
        }
        for &attack in &spec.attacks {
            for &fraction in &spec.fractions {
                for &seed in &spec.seeds {
                    runs.push(RunSpec { protocol, attack: Some(attack), fraction, seed });
                }
            }
        }
    }
    runs.sort_by(order);
    runs.dedup_by(|a, b| order(a, b) == Ordering::Equal);
    runs
}

pub struct SweepOutput {
    /// Sorted by `(protocol, attack, fraction, seed)`.
    pub runs: Vec<RunResult>,
    pub spec: SweepSpec,
}

/// Runs every planned point. The first failure aborts the sweep.
pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec) -> Result<SweepOutput, RunError> {
    let plan = plan_runs(spec);
    let results = map_runs(&plan, spec.parallel, |r| simulate(&r.config(base), spec.mobility_trace));
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(SweepOutput { runs, spec: spec.clone() })
}

/// Mean over seeds of one `(protocol, attack, fraction)` point.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanRow {
    pub protocol: Protocol,
    pub attack: Option<AttackKind>,
    pub fraction: f64,
    pub seeds: usize,
    pub pdf: Option<f64>,
    pub avg_delay: Option<f64>,
    pub throughput: f64,
    pub route_errors: f64,
}

impl MeanRow {
    pub fn metric(&self, figure: Figure) -> Option<f64> {
        match figure {
            Figure::Pdf => self.pdf,
            Figure::Delay => self.avg_delay,
            Figure::Throughput => Some(self.throughput),
            Figure::RouteErrors => Some(self.route_errors),
        }
    }

    fn csv_row(&self) -> String {
        format!(
            "{},{},{},mean,{},{},{},{}",
            self.protocol.as_str(),
            self.attack.map_or("none", AttackKind::as_str),
            fmt_fraction(self.fraction),
            fmt_metric(self.pdf),
            fmt_metric(self.avg_delay),
            fmt_metric(Some(self.throughput)),
            fmt_metric(Some(self.route_errors)),
        )
    }
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Undefined per-seed values (no traffic, no deliveries) are left out of the
/// mean rather than counted as zero.
pub fn mean_rows(runs: &[RunResult]) -> Vec<MeanRow> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < runs.len() {
        let key = (runs[i].protocol, runs[i].attack, runs[i].fraction);
        let mut j = i;
        while j < runs.len() && (runs[j].protocol, runs[j].attack, runs[j].fraction) == key {
            j += 1;
        }
        let group = &runs[i..j];
        let n = group.len() as f64;
        out.push(MeanRow {
            protocol: key.0,
            attack: key.1,
            fraction: key.2,
            seeds: group.len(),
            pdf: mean_defined(group.iter().map(|r| r.report.pdf())),
            avg_delay: mean_defined(group.iter().map(|r| r.report.avg_delay())),
            throughput: group.iter().map(|r| r.report.throughput()).sum::<f64>() / n,
            route_errors: group.iter().map(|r| r.report.route_errors as f64).sum::<f64>() / n,
        });
        i = j;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    Pdf,
    Delay,
    Throughput,
    RouteErrors,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Pdf, Figure::Delay, Figure::Throughput, Figure::RouteErrors];

    pub fn file_name(self) -> &'static str {
        match self {
            Figure::Pdf => "fig_pdf.csv",
            Figure::Delay => "fig_delay.csv",
            Figure::Throughput => "fig_throughput.csv",
            Figure::RouteErrors => "fig_rerr.csv",
        }
    }
}

fn lookup(means: &[MeanRow], protocol: Protocol, attack: AttackKind, fraction: f64) -> Option<&MeanRow> {
    means.iter().find(|m| m.protocol == protocol && m.attack == Some(attack) && m.fraction == fraction)
}

/// Fraction against one metric: three attack-on-AODV curves plus SD-AODV,
/// either averaged over attacks or one column each.
pub fn figure_csv(means: &[MeanRow], fractions: &[f64], figure: Figure, separate_sdaodv: bool) -> String {
    let mut fractions = fractions.to_vec();
    fractions.sort_by(f64::total_cmp);
    fractions.dedup();
    let mut s = String::from("fraction,wormhole_aodv,byzantine_aodv,blackhole_aodv");
    if separate_sdaodv {
        s.push_str(",wormhole_sdaodv,byzantine_sdaodv,blackhole_sdaodv\n");
    } else {
        s.push_str(",sdaodv\n");
    }
    for f in fractions {
        let _ = write!(s, "{}", fmt_fraction(f));
        for kind in AttackKind::ALL {
            let v = lookup(means, Protocol::Aodv, kind, f).and_then(|m| m.metric(figure));
            let _ = write!(s, ",{}", fmt_metric(v));
        }
        let sd: Vec<Option<f64>> = AttackKind::ALL
            .iter()
            .map(|&kind| lookup(means, Protocol::Sdaodv, kind, f).and_then(|m| m.metric(figure)))
            .collect();
        if separate_sdaodv {
            for v in sd {
                let _ = write!(s, ",{}", fmt_metric(v));
            }
        } else {
            let _ = write!(s, ",{}", fmt_metric(mean_defined(sd.into_iter())));
        }
        s.push('\n');
    }
    s
}

/// Writes `runs.csv`, the four figure tables, `baseline.csv` and one STAT
/// file per run under `out_dir`.
pub fn write_sweep(out: &SweepOutput, out_dir: &Path) -> Result<(), RunError> {
    let means = mean_rows(&out.runs);
    let mut table = format!("{CSV_HEADER}\n");
    for r in &out.runs {
        table.push_str(&r.csv_row());
        table.push('\n');
    }
    for m in &means {
        table.push_str(&m.csv_row());
        table.push('\n');
    }
    write_file(&out_dir.join("runs.csv"), &table)?;
    for figure in Figure::ALL {
        let csv = figure_csv(&means, &out.spec.fractions, figure, out.spec.separate_sdaodv_curves);
        write_file(&out_dir.join(figure.file_name()), &csv)?;
    }
    let mut baseline = String::from("protocol,pdf,avg_delay,throughput,route_errors\n");
    for m in means.iter().filter(|m| m.attack.is_none()) {
        let _ = writeln!(
            baseline,
            "{},{},{},{},{}",
            m.protocol.as_str(),
            fmt_metric(m.pdf),
            fmt_metric(m.avg_delay),
            fmt_metric(Some(m.throughput)),
            fmt_metric(Some(m.route_errors))
        );
    }
    write_file(&out_dir.join("baseline.csv"), &baseline)?;
    for r in &out.runs {
        write_file(&out_dir.join("stat").join(format!("{}.stat", r.stem())), &r.stat)?;
        if let Some(m) = &r.mobility {
            write_file(&out_dir.join("mobility").join(format!("{}.csv", r.stem())), m)?;
        }
    }
    Ok(())
}
