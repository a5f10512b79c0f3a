//! Aggregation of per-run summaries and capacity sweeps.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use scenemux::metrics::{mean, std_dev};
use scenemux::runtime::Method;
use scenemux::store::{self, SimulationReport, SweepReport};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            std: std_dev(xs),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct MethodAggregate {
    pub method: Method,
    pub runs: usize,
    pub seeds: Vec<u64>,
    pub mean_window_f1: Stat,
    pub miss_rate: Stat,
    pub switches: Stat,
    pub top5_coverage: Stat,
}

#[derive(Debug, Serialize)]
pub struct SweepCheck {
    pub path: PathBuf,
    pub method: Method,
    pub seed: u64,
    pub capacities: Vec<usize>,
    pub miss_rate_non_increasing: bool,
}

#[derive(Debug, Serialize)]
pub struct Aggregate {
    pub methods: Vec<MethodAggregate>,
    pub sweeps: Vec<SweepCheck>,
}

fn collect(path: &Path, out: &mut Vec<PathBuf>) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for e in entries {
            collect(&e, out)?;
        }
    } else {
        out.push(path.to_path_buf());
    }
    Ok(())
}

fn file_name(path: &Path) -> &str {
    path.file_name().and_then(|n| n.to_str()).unwrap_or("")
}

pub fn aggregate(inputs: &[PathBuf]) -> scenemux::Result<Aggregate> {
    let mut files = Vec::new();
    for input in inputs {
        if !input.exists() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} does not exist", input.display()),
            )
            .into());
        }
        collect(input, &mut files)?;
    }

    let mut by_method: BTreeMap<Method, Vec<SimulationReport>> = BTreeMap::new();
    let mut sweeps = Vec::new();
    for path in files {
        let name = file_name(&path);
        if !name.ends_with(".json") {
            continue;
        }
        if name.starts_with("summary-") {
            let (file, _) = store::read_stamped::<SimulationReport>(&path)?;
            by_method.entry(file.body.method).or_default().push(file.body);
        } else if name.starts_with("sweep-") {
            let (file, _) = store::read_stamped::<SweepReport>(&path)?;
            sweeps.push(SweepCheck {
                method: file.body.method,
                seed: file.body.seed,
                capacities: file.body.rows.iter().map(|r| r.capacity).collect(),
                miss_rate_non_increasing: file.body.miss_rate_non_increasing(),
                path,
            });
        }
    }
    if by_method.is_empty() && sweeps.is_empty() {
        return Err(scenemux::Error::Empty("summary or sweep files"));
    }

    let methods = by_method
        .into_iter()
        .map(|(method, reports)| {
            let pick =
                |f: &dyn Fn(&SimulationReport) -> f64| -> Stat { Stat::of(&reports.iter().map(f).collect::<Vec<_>>()) };
            MethodAggregate {
                method,
                runs: reports.len(),
                seeds: reports.iter().map(|r| r.seed).collect(),
                mean_window_f1: pick(&|r| r.summary.mean_window_f1),
                miss_rate: pick(&|r| r.summary.miss_rate),
                switches: pick(&|r| r.summary.switches as f64),
                top5_coverage: pick(&|r| r.summary.top5_coverage),
            }
        })
        .collect();
    Ok(Aggregate { methods, sweeps })
}

impl Aggregate {
    pub fn table(&self) -> String {
        let mut s = String::new();
        if !self.methods.is_empty() {
            let _ = writeln!(s, "method  runs  mean_window_f1     miss_rate          top5_coverage");
        }
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<6}  {:>4}  {:.4} ± {:.4}    {:.4} ± {:.4}    {:.3} ± {:.3}",
                m.method.name(),
                m.runs,
                m.mean_window_f1.mean,
                m.mean_window_f1.std,
                m.miss_rate.mean,
                m.miss_rate.std,
                m.top5_coverage.mean,
                m.top5_coverage.std,
            );
        }
        for sw in &self.sweeps {
            let _ = writeln!(
                s,
                "sweep {} seed {} capacities {}..{}: miss rate {}",
                sw.method,
                sw.seed,
                sw.capacities.first().copied().unwrap_or(0),
                sw.capacities.last().copied().unwrap_or(0),
                if sw.miss_rate_non_increasing {
                    "non-increasing"
                } else {
                    "INCREASES"
                }
            );
        }
        s
    }
}
