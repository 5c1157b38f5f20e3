//! Per-scene driving metrics, the weighted overall score, and scenario aggregates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SceneTrace;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trace has no frames")]
    EmptyTrace,
    #[error("ADE needs at least two trajectories, got {0}")]
    FewerThanTwo(usize),
    #[error("trajectory {0} is empty")]
    EmptyTrajectory(usize),
    #[error("invalid metric weights: {0}")]
    BadWeights(String),
}

/// Sub-metrics of one scene plus its overall score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMetrics {
    /// Collision, 0 or 1.
    pub cr: u8,
    /// Red-light violations.
    pub rr: u32,
    /// Stop-sign violations.
    pub ss: u32,
    /// Integrated out-of-road distance, m·s.
    pub or_: f64,
    /// Route-following stability.
    pub rf: f64,
    /// Route completion.
    pub comp: f64,
    /// Fraction of the horizon used.
    pub ts: f64,
    /// Mean |longitudinal acceleration|, m/s².
    pub acc: f64,
    /// Mean |yaw rate|, rad/s.
    pub yv: f64,
    /// Lane invasions.
    pub li: u32,
    pub os: f64,
}

/// Sub-metric weights and caps for unbounded means.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricWeights {
    pub cr: f64,
    pub rr: f64,
    pub ss: f64,
    pub or_: f64,
    pub rf: f64,
    pub comp: f64,
    pub ts: f64,
    pub acc: f64,
    pub yv: f64,
    pub li: f64,
    pub acc_cap: f64,
    pub yv_cap: f64,
    pub or_cap: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            cr: 0.4,
            rr: 0.1,
            ss: 0.05,
            or_: 0.05,
            rf: 0.1,
            comp: 0.1,
            ts: 0.05,
            acc: 0.05,
            yv: 0.05,
            li: 0.05,
            acc_cap: 6.0,
            yv_cap: 0.6,
            or_cap: 10.0,
        }
    }
}

impl MetricWeights {
    fn weights(&self) -> [f64; 10] {
        [
            self.cr, self.rr, self.ss, self.or_, self.rf, self.comp, self.ts, self.acc, self.yv, self.li,
        ]
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        let w = self.weights();
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(MetricsError::BadWeights(
                "weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricsError::BadWeights(format!("weights sum to {sum}, not 1")));
        }
        if [self.acc_cap, self.yv_cap, self.or_cap]
            .iter()
            .any(|c| !(c.is_finite() && *c > 0.0))
        {
            return Err(MetricsError::BadWeights("caps must be positive".into()));
        }
        Ok(())
    }
}

fn count_goodness(n: u32) -> f64 {
    1.0 / (1.0 + n as f64)
}

fn capped_goodness(x: f64, cap: f64) -> f64 {
    1.0 - (x.max(0.0) / cap).min(1.0)
}

/// Goodness of each sub-metric in `[0, 1]`, in weight order.
pub fn goodness(m: &SceneMetrics, w: &MetricWeights) -> [f64; 10] {
    [
        1.0 - m.cr.min(1) as f64,
        count_goodness(m.rr),
        count_goodness(m.ss),
        capped_goodness(m.or_, w.or_cap),
        m.rf.clamp(0.0, 1.0),
        m.comp.clamp(0.0, 1.0),
        1.0 - m.ts.clamp(0.0, 1.0),
        capped_goodness(m.acc, w.acc_cap),
        capped_goodness(m.yv, w.yv_cap),
        count_goodness(m.li),
    ]
}

/// Weighted sum of goodness values.
pub fn overall_score(m: &SceneMetrics, w: &MetricWeights) -> f64 {
    let g = goodness(m, w);
    let os: f64 = w.weights().iter().zip(g).map(|(a, b)| a * b).sum();
    os.clamp(0.0, 1.0)
}

/// Compute every sub-metric of the ego in `trace` and score it with `w`.
pub fn compute_scene_metrics(trace: &SceneTrace, w: &MetricWeights) -> Result<SceneMetrics, MetricsError> {
    let frames = &trace.frames;
    if frames.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let h = &trace.header;
    let n = frames.len() as f64;
    let mut li = 0;
    let mut prev = false;
    for f in frames {
        if f.lane_invasion && !prev {
            li += 1;
        }
        prev = f.lane_invasion;
    }
    let mean = |g: &dyn Fn(&crate::sim::Frame) -> f64| frames.iter().map(g).sum::<f64>() / n;
    let mean_lat = mean(&|f| f.lateral_offset.abs());
    let mut m = SceneMetrics {
        cr: frames.iter().any(|f| f.collision) as u8,
        rr: frames.iter().filter(|f| f.red_light_violation).count() as u32,
        ss: frames.iter().filter(|f| f.stop_sign_violation).count() as u32,
        or_: frames.iter().map(|f| f.out_of_road).sum::<f64>() * h.dt,
        rf: (1.0 - mean_lat / (h.lane_width / 2.0)).clamp(0.0, 1.0),
        comp: frames.last().unwrap().progress.clamp(0.0, 1.0),
        ts: (n / h.max_steps as f64).min(1.0),
        acc: mean(&|f| f.agents[0].a.abs()),
        yv: mean(&|f| f.agents[0].w.abs()),
        li,
        os: 0.0,
    };
    m.os = overall_score(&m, w);
    Ok(m)
}

/// Mean over unordered pairs of the per-step Euclidean distance, each pair truncated to its shorter length.
pub fn ade(trajectories: &[Vec<(f64, f64)>]) -> Result<f64, MetricsError> {
    if trajectories.len() < 2 {
        return Err(MetricsError::FewerThanTwo(trajectories.len()));
    }
    if let Some(i) = trajectories.iter().position(|t| t.is_empty()) {
        return Err(MetricsError::EmptyTrajectory(i));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, a) in trajectories.iter().enumerate() {
        for b in &trajectories[i + 1..] {
            let t = a.len().min(b.len());
            let sum: f64 = a.iter().zip(b).map(|(p, q)| (p.0 - q.0).hypot(p.1 - q.1)).sum();
            total += sum / t as f64;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// One evaluated scene, tagged for aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub base: String,
    pub scenario: String,
    pub policy: String,
    pub metrics: SceneMetrics,
    pub adversary_path: Vec<(f64, f64)>,
    /// Selected only to fill the quota, without a collision.
    #[serde(default)]
    pub padded: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub base: String,
    pub scenario: String,
    pub policy: String,
    pub scenes: usize,
    pub cr: f64,
    pub os: f64,
    pub ade: Option<f64>,
}

/// Per-scenario rows, per-base means, and an `Avg.` row per policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub v: u32,
    pub rows: Vec<ReportRow>,
    pub bases: Vec<ReportRow>,
    pub totals: Vec<ReportRow>,
}

fn summarize(base: &str, scenario: &str, policy: &str, recs: &[&SceneRecord]) -> ReportRow {
    let n = recs.len().max(1) as f64;
    let paths: Vec<Vec<(f64, f64)>> = recs.iter().map(|r| r.adversary_path.clone()).collect();
    ReportRow {
        base: base.to_string(),
        scenario: scenario.to_string(),
        policy: policy.to_string(),
        scenes: recs.len(),
        cr: recs.iter().map(|r| r.metrics.cr as f64).sum::<f64>() / n,
        os: recs.iter().map(|r| r.metrics.os).sum::<f64>() / n,
        ade: ade(&paths).ok(),
    }
}

fn mean_rows(base: &str, policy: &str, rows: &[&ReportRow]) -> ReportRow {
    let n = rows.len().max(1) as f64;
    let ades: Vec<f64> = rows.iter().filter_map(|r| r.ade).collect();
    ReportRow {
        base: base.to_string(),
        scenario: "*".to_string(),
        policy: policy.to_string(),
        scenes: rows.iter().map(|r| r.scenes).sum(),
        cr: rows.iter().map(|r| r.cr).sum::<f64>() / n,
        os: rows.iter().map(|r| r.os).sum::<f64>() / n,
        ade: (!ades.is_empty()).then(|| ades.iter().sum::<f64>() / ades.len() as f64),
    }
}

/// Group scene records by (base, scenario, policy); padded records are dropped unless `include_padded`.
pub fn aggregate(records: &[SceneRecord], include_padded: bool) -> ScenarioReport {
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&SceneRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| include_padded || !r.padded) {
        groups
            .entry((r.base.as_str(), r.scenario.as_str(), r.policy.as_str()))
            .or_default()
            .push(r);
    }
    let rows: Vec<ReportRow> = groups
        .iter()
        .map(|((b, s, p), recs)| summarize(b, s, p, recs))
        .collect();
    let mut by_base: BTreeMap<(&str, &str), Vec<&ReportRow>> = BTreeMap::new();
    for r in &rows {
        by_base.entry((r.base.as_str(), r.policy.as_str())).or_default().push(r);
    }
    let bases: Vec<ReportRow> = by_base.iter().map(|((b, p), rs)| mean_rows(b, p, rs)).collect();
    let mut by_policy: BTreeMap<&str, Vec<&ReportRow>> = BTreeMap::new();
    for r in &bases {
        by_policy.entry(r.policy.as_str()).or_default().push(r);
    }
    let totals = by_policy.iter().map(|(p, rs)| mean_rows("Avg.", p, rs)).collect();
    ScenarioReport {
        v: REPORT_SCHEMA_VERSION,
        rows,
        bases,
        totals,
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"))
}

impl ScenarioReport {
    /// Long-form tab-separated table of every row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("base\tscenario\tpolicy\tscenes\tcr\tos\tade\n");
        for r in self.rows.iter().chain(&self.bases).chain(&self.totals) {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{}\n",
                r.base,
                r.scenario,
                r.policy,
                r.scenes,
                r.cr,
                r.os,
                fmt_opt(r.ade)
            ));
        }
        out
    }

    /// Wide table: one line per (policy, metric), one column per base plus `Avg.`.
    pub fn to_table(&self) -> String {
        let mut bases: Vec<&str> = self.bases.iter().map(|r| r.base.as_str()).collect();
        bases.sort_unstable();
        bases.dedup();
        let mut out = format!("policy\tmetric\t{}\tAvg.\n", bases.join("\t"));
        for t in &self.totals {
            for (name, get) in [
                ("CR", (|r: &ReportRow| Some(r.cr)) as fn(&ReportRow) -> Option<f64>),
                ("OS", |r: &ReportRow| Some(r.os)),
                ("ADE", |r: &ReportRow| r.ade),
            ] {
                out.push_str(&format!("{}\t{name}", t.policy));
                for b in &bases {
                    let v = self
                        .bases
                        .iter()
                        .find(|r| r.base == *b && r.policy == t.policy)
                        .and_then(get);
                    out.push_str(&format!("\t{}", fmt_opt(v)));
                }
                out.push_str(&format!("\t{}\n", fmt_opt(get(t))));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
