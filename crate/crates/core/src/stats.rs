//! Post-processing of raw results: IQR outlier removal, unbiased sample
//! standard deviation, per-scale median trends and the summary table.
//!
//! Quartiles use linear interpolation between order statistics at
//! positions `(n-1)*q` (the "type 7" convention); the convention is named
//! in every emitted summary header.

use std::collections::BTreeMap;

use crate::harness::{KpiRecord, Scenario};
use crate::reconcilers::ProfileId;

pub const QUARTILE_NOTE: &str = "quartile method: linear interpolation of order statistics (type 7); outliers filtered per (tool, scenario, metric) group";

/// Percentile of a sorted slice by linear interpolation (type 7).
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of an empty sample set");
    assert!((0.0..=1.0).contains(&q));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// `(Q1, median, Q3)` of an unsorted sample set.
pub fn quartiles(samples: &[f64]) -> (f64, f64, f64) {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        percentile_sorted(&sorted, 0.25),
        percentile_sorted(&sorted, 0.50),
        percentile_sorted(&sorted, 0.75),
    )
}

/// Split samples into those inside the closed IQR fence
/// `[Q1 - 1.5*IQR, Q3 + 1.5*IQR]` and those outside it.
pub fn iqr_filter(samples: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert!(!samples.is_empty(), "iqr_filter needs at least one sample");
    let (q1, _, q3) = quartiles(samples);
    let iqr = q3 - q1;
    let lo = q1 - 1.5 * iqr;
    let hi = q3 + 1.5 * iqr;
    let mut kept = Vec::with_capacity(samples.len());
    let mut removed = Vec::new();
    for &x in samples {
        if x >= lo && x <= hi {
            kept.push(x);
        } else {
            removed.push(x);
        }
    }
    (kept, removed)
}

pub fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Unbiased sample standard deviation; undefined below two samples.
pub fn sample_sigma(samples: &[f64]) -> Option<f64> {
    if samples.len() < 2 {
        return None;
    }
    let m = mean(samples);
    let ss: f64 = samples.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (samples.len() - 1) as f64).sqrt())
}

/// Median (mean of the two central values for even counts).
pub fn median(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, 0.5)
}

/// The KPI attributes a summary can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Metric {
    Push,
    Sync,
    Recon,
    Deploy,
    Healthy,
    Cpu,
    Mem,
    Inproc,
    Hydrate,
    Oh,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Push => "t_push",
            Metric::Sync => "t_sync",
            Metric::Recon => "t_recon",
            Metric::Deploy => "t_deploy",
            Metric::Healthy => "t_healthy",
            Metric::Cpu => "u_cpu",
            Metric::Mem => "u_mem",
            Metric::Inproc => "t_inproc",
            Metric::Hydrate => "t_hydrate",
            Metric::Oh => "t_oh",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Cpu => "millicore",
            Metric::Mem => "MiB",
            _ => "s",
        }
    }

    pub fn extract(&self, r: &KpiRecord) -> Option<f64> {
        match self {
            Metric::Push => Some(r.t_push_s),
            Metric::Sync => Some(r.t_sync_s),
            Metric::Recon => Some(r.t_recon_s),
            Metric::Deploy => Some(r.t_deploy_s),
            Metric::Healthy => Some(r.t_healthy_s),
            Metric::Cpu => Some(r.u_cpu_millicore),
            Metric::Mem => Some(r.u_mem_mib),
            Metric::Inproc => r.nephio.map(|n| n.t_inproc_s),
            Metric::Hydrate => r.nephio.map(|n| n.t_hydrate_s),
            Metric::Oh => r.nephio.map(|n| n.t_oh_s),
        }
    }
}

/// Metrics collected per scenario; everything else renders as `-`.
pub fn collected_metrics(scenario: Scenario) -> &'static [Metric] {
    match scenario {
        Scenario::SingleApp => &[Metric::Push, Metric::Sync, Metric::Recon, Metric::Deploy],
        Scenario::MultiApp => &[
            Metric::Recon,
            Metric::Deploy,
            Metric::Healthy,
            Metric::Cpu,
            Metric::Mem,
        ],
        Scenario::NephioSingle | Scenario::NephioMulti => {
            &[Metric::Inproc, Metric::Hydrate, Metric::Oh]
        }
    }
}

/// One summary cell: IQR-filtered mean and unbiased sigma of a metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub tool: String,
    pub scenario: Scenario,
    pub metric: Metric,
    pub mu: f64,
    /// `None` when fewer than two samples survive filtering.
    pub sigma: Option<f64>,
    pub n_used: usize,
    pub n_removed: usize,
}

fn tool_name(profile: &str) -> String {
    match ProfileId::parse(profile) {
        Ok(id) => id.display_name().to_string(),
        Err(_) if profile == "nephio" => "Nephio".to_string(),
        Err(_) => profile.to_string(),
    }
}

/// Group records per `(tool, scenario, metric)`, apply the IQR filter
/// inside each group and report mean and unbiased sigma over the kept
/// values. Pure: identical inputs give identical rows.
pub fn summarize(records: &[KpiRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Scenario, Metric), Vec<f64>> = BTreeMap::new();
    for r in records {
        for metric in collected_metrics(r.scenario) {
            if let Some(v) = metric.extract(r) {
                groups
                    .entry((r.profile.clone(), r.scenario, *metric))
                    .or_default()
                    .push(v);
            }
        }
    }
    groups
        .into_iter()
        .map(|((profile, scenario, metric), samples)| {
            let (kept, removed) = iqr_filter(&samples);
            SummaryRow {
                tool: tool_name(&profile),
                scenario,
                metric,
                mu: mean(&kept),
                sigma: sample_sigma(&kept),
                n_used: kept.len(),
                n_removed: removed.len(),
            }
        })
        .collect()
}

/// Median of a metric per scale point, ordered by `k`.
pub fn median_trend(records: &[KpiRecord], metric: Metric) -> Vec<(u32, f64)> {
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records {
        if let Some(v) = metric.extract(r) {
            groups.entry(r.k).or_default().push(v);
        }
    }
    groups
        .into_iter()
        .map(|(k, samples)| (k, median(&samples)))
        .collect()
}

fn fmt_stat(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn find_row<'a>(
    rows: &'a [SummaryRow],
    tool: &str,
    scenario: Scenario,
    metric: Metric,
) -> Option<&'a SummaryRow> {
    rows.iter()
        .find(|r| r.tool == tool && r.scenario == scenario && r.metric == metric)
}

/// One row of a rendered block: display label plus the (tool, scenario)
/// key its cells are looked up under.
struct BlockEntry {
    label: String,
    tool: String,
    scenario: Scenario,
}

fn render_block(
    out: &mut String,
    rows: &[SummaryRow],
    title: &str,
    row_label: &str,
    entries: &[BlockEntry],
    metrics: &[Metric],
) {
    let width = 12usize;
    out.push_str(title);
    out.push('\n');
    let mut header = format!("{row_label:<14}");
    let mut subheader = format!("{:<14}", "");
    for m in metrics {
        header.push_str(&format!("{:<24}", format!("{} ({})", m.name(), m.unit())));
        subheader.push_str(&format!("{:<width$}{:<width$}", "mu", "sigma"));
    }
    out.push_str(header.trim_end());
    out.push('\n');
    out.push_str(subheader.trim_end());
    out.push('\n');
    for entry in entries {
        let mut line = format!("{:<14}", entry.label);
        for m in metrics {
            match find_row(rows, &entry.tool, entry.scenario, *m) {
                Some(row) => {
                    line.push_str(&format!("{:<width$}", fmt_stat(row.mu)));
                    match row.sigma {
                        Some(s) => line.push_str(&format!("{:<width$}", fmt_stat(s))),
                        None => line.push_str(&format!("{:<width$}", "-")),
                    }
                }
                None => {
                    line.push_str(&format!("{:<width$}{:<width$}", "-", "-"));
                }
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
}

/// Aligned text table over the summary rows, one block per scenario
/// family, mirroring the per-tool mu/sigma layout.
pub fn render_summary_text(rows: &[SummaryRow], source_note: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {QUARTILE_NOTE}\n"));
    out.push_str(&format!("# source: {source_note}\n"));

    let tools: Vec<String> = ["Argo CD", "Flux CD", "Config Sync"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let single_present = rows.iter().any(|r| r.scenario == Scenario::SingleApp);
    let multi_present = rows.iter().any(|r| r.scenario == Scenario::MultiApp);
    let nephio_single = rows.iter().any(|r| r.scenario == Scenario::NephioSingle);
    let nephio_multi = rows.iter().any(|r| r.scenario == Scenario::NephioMulti);

    if single_present {
        let entries: Vec<BlockEntry> = tools
            .iter()
            .map(|t| BlockEntry {
                label: t.clone(),
                tool: t.clone(),
                scenario: Scenario::SingleApp,
            })
            .collect();
        render_block(
            &mut out,
            rows,
            "\nSingle Intent Deployment",
            "Tool",
            &entries,
            &[
                Metric::Push,
                Metric::Sync,
                Metric::Recon,
                Metric::Deploy,
                Metric::Healthy,
            ],
        );
    }
    if multi_present {
        let entries: Vec<BlockEntry> = tools
            .iter()
            .map(|t| BlockEntry {
                label: t.clone(),
                tool: t.clone(),
                scenario: Scenario::MultiApp,
            })
            .collect();
        render_block(
            &mut out,
            rows,
            "\nMultiple Intent Deployment",
            "Tool",
            &entries,
            &[
                Metric::Recon,
                Metric::Deploy,
                Metric::Healthy,
                Metric::Cpu,
                Metric::Mem,
            ],
        );
    }
    if nephio_single || nephio_multi {
        let mut entries: Vec<BlockEntry> = Vec::new();
        for (present, scenario) in [
            (nephio_single, Scenario::NephioSingle),
            (nephio_multi, Scenario::NephioMulti),
        ] {
            if present {
                entries.push(BlockEntry {
                    label: scenario.as_str().to_string(),
                    tool: "Nephio".to_string(),
                    scenario,
                });
            }
        }
        render_block(
            &mut out,
            rows,
            "\nIntent Processing (Nephio)",
            "Scenario",
            &entries,
            &[Metric::Inproc, Metric::Hydrate, Metric::Oh],
        );
    }
    out
}

/// `tool,scenario,metric,mu,sigma,n_used,n_removed` rows.
pub fn render_summary_csv(rows: &[SummaryRow], source_note: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("# {QUARTILE_NOTE}\n"));
    out.push_str(&format!("# source: {source_note}\n"));
    out.push_str("tool,scenario,metric,mu,sigma,n_used,n_removed\n");
    for row in rows {
        let sigma = match row.sigma {
            Some(s) => format!("{s:.6}"),
            None => "-".to_string(),
        };
        out.push_str(&format!(
            "{},{},{},{:.6},{},{},{}\n",
            row.tool,
            row.scenario.as_str(),
            row.metric.name(),
            row.mu,
            sigma,
            row.n_used,
            row.n_removed
        ));
    }
    out
}
