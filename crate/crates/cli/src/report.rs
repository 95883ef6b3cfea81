//! `report`: aggregate run directories across seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use groundgram::evalsuite::{mean_stderr, paired_t_test, svg, TTest};
use groundgram::trainer::{read_metrics_csv, MetricsRecord, ScheduleKind, TrainConfig};

use crate::config;
use crate::manifest::{CONFIG_FILE, METRICS_FILE};
use crate::{create_dir, write_file, CliError};

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Run directories written by `train`.
    #[arg(required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Metrics to aggregate.
    #[arg(long, value_delimiter = ',', default_value = "span_f1,verb_match,role_match,v_measure,loss_total")]
    metrics: Vec<String>,
    /// Epochs at which schedules are compared by paired t-test; defaults to the last.
    #[arg(long, value_delimiter = ',')]
    epochs: Vec<usize>,
    /// Epochs averaged on each side of a switch for the pre/post test.
    #[arg(long, default_value_t = 5)]
    window: usize,
}

#[derive(Clone, Debug)]
pub struct Run {
    pub dir: PathBuf,
    pub schedule: String,
    pub seed: u64,
    pub switch_epoch: Option<usize>,
    pub rows: Vec<MetricsRecord>,
}

impl Run {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let rows = read_metrics_csv(&dir.join(METRICS_FILE))?;
        let first = rows
            .first()
            .ok_or_else(|| CliError::Data(format!("{}: no metric rows", dir.display())))?;
        let mut cfg = TrainConfig::default();
        let cfg_path = dir.join(CONFIG_FILE);
        if cfg_path.exists() {
            config::apply_file(&mut cfg, &cfg_path)?;
        } else {
            cfg.epochs = rows.len();
        }
        let kind: ScheduleKind = first.schedule.parse().map_err(|e: groundgram::Error| CliError::Data(e.to_string()))?;
        let switch_epoch = match kind {
            ScheduleKind::SyntaxFirst | ScheduleKind::SemanticsFirst => Some(
                groundgram::trainer::Schedule::new(kind, cfg.epochs, cfg.switch_epoch)?.switch_epoch,
            ),
            _ => None,
        };
        Ok(Run {
            dir: dir.to_path_buf(),
            schedule: first.schedule.clone(),
            seed: first.seed,
            switch_epoch,
            rows,
        })
    }

    pub fn value(&self, metric: &str, epoch: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.epoch == epoch).and_then(|r| r.get(metric))
    }

    fn epochs(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.epoch).collect()
    }
}

/// Mean of `metric` over `lo..hi` (clamped to the recorded epochs).
pub fn window_mean(run: &Run, metric: &str, lo: usize, hi: usize) -> Option<f64> {
    let v: Vec<f64> = (lo..hi).filter_map(|e| run.value(metric, e)).collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn fmt_test(t: &Result<TTest, groundgram::Error>) -> String {
    match t {
        Ok(t) => format!("{},{},{}", t.t, t.df, t.p),
        Err(_) => "NaN,NaN,NaN".into(),
    }
}

/// Paired samples of two schedules at one epoch, matched by seed.
fn paired(a: &[&Run], b: &[&Run], metric: &str, epoch: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for ra in a {
        if let Some(rb) = b.iter().find(|r| r.seed == ra.seed) {
            if let (Some(x), Some(y)) = (ra.value(metric, epoch), rb.value(metric, epoch)) {
                xs.push(x);
                ys.push(y);
            }
        }
    }
    (xs, ys)
}

pub fn run(a: &ReportArgs) -> Result<(), CliError> {
    if a.runs.len() < 2 {
        return Err(CliError::Usage("report needs at least two run directories".into()));
    }
    let runs = a.runs.iter().map(|d| Run::load(d)).collect::<Result<Vec<_>, _>>()?;
    let grid = runs[0].epochs();
    if let Some(bad) = runs.iter().find(|r| r.epochs() != grid) {
        return Err(CliError::Data(format!(
            "mismatched epoch grids: {} and {}",
            runs[0].dir.display(),
            bad.dir.display()
        )));
    }
    for m in &a.metrics {
        if runs[0].rows[0].get(m).is_none() {
            return Err(CliError::Usage(format!("unknown metric {m:?}")));
        }
    }
    let mut by_schedule: BTreeMap<&str, Vec<&Run>> = BTreeMap::new();
    for r in &runs {
        by_schedule.entry(r.schedule.as_str()).or_default().push(r);
    }
    create_dir(&a.out)?;

    let mut summary = String::from("schedule,metric,epoch,mean,stderr,sd_seeds,runs\n");
    for (sched, rs) in &by_schedule {
        for m in &a.metrics {
            for &e in &grid {
                let v: Vec<f64> = rs.iter().filter_map(|r| r.value(m, e)).collect();
                let (mean, se) = mean_stderr(&v);
                let sd = se * (v.len() as f64).sqrt();
                summary.push_str(&format!("{sched},{m},{e},{mean},{se},{sd},{}\n", v.len()));
            }
        }
    }
    write_file(&a.out.join("summary.csv"), &summary)?;

    let markers: Vec<f64> = runs
        .iter()
        .filter_map(|r| r.switch_epoch)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(|e| e as f64)
        .collect();
    for m in &a.metrics {
        let series: Vec<svg::Series> = by_schedule
            .iter()
            .map(|(sched, rs)| {
                let (mean, band) = grid
                    .iter()
                    .map(|&e| mean_stderr(&rs.iter().filter_map(|r| r.value(m, e)).collect::<Vec<_>>()))
                    .unzip();
                svg::Series {
                    name: sched.to_string(),
                    x: grid.iter().map(|&e| e as f64).collect(),
                    mean,
                    band,
                }
            })
            .collect();
        let chart = svg::line_chart(&format!("{m} by epoch (mean ± s.e.)"), m, &series, &markers);
        write_file(&a.out.join(format!("{m}.svg")), &chart)?;
    }

    let last = *grid.last().expect("non-empty grid");
    let epochs: Vec<usize> = if a.epochs.is_empty() { vec![last] } else { a.epochs.clone() };
    let mut tests = String::from("comparison,metric,epoch,a,b,n,mean_a,mean_b,t,df,p\n");
    let names: Vec<&str> = by_schedule.keys().copied().collect();
    for (i, &sa) in names.iter().enumerate() {
        for &sb in &names[i + 1..] {
            for m in &a.metrics {
                for &e in &epochs {
                    let (xs, ys) = paired(&by_schedule[sa], &by_schedule[sb], m, e);
                    let t = paired_t_test(&xs, &ys);
                    tests.push_str(&format!(
                        "schedules,{m},{e},{sa},{sb},{},{},{},{}\n",
                        xs.len(),
                        mean_stderr(&xs).0,
                        mean_stderr(&ys).0,
                        fmt_test(&t)
                    ));
                }
            }
        }
    }
    for (sched, rs) in &by_schedule {
        let Some(switch) = rs[0].switch_epoch else { continue };
        if switch == 0 {
            continue;
        }
        for m in &a.metrics {
            let mut post = Vec::new();
            let mut pre = Vec::new();
            for r in rs {
                let before = window_mean(r, m, switch.saturating_sub(a.window), switch);
                let after = window_mean(r, m, switch, switch + a.window);
                if let (Some(x), Some(y)) = (after, before) {
                    post.push(x);
                    pre.push(y);
                }
            }
            let t = paired_t_test(&post, &pre);
            tests.push_str(&format!(
                "switch,{m},{switch},{sched}:post,{sched}:pre,{},{},{},{}\n",
                post.len(),
                mean_stderr(&post).0,
                mean_stderr(&pre).0,
                fmt_test(&t)
            ));
        }
    }
    write_file(&a.out.join("ttests.csv"), &tests)?;
    Ok(())
}
