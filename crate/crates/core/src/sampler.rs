//! Uniform parameter sampling with collision-driven range refinement.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::ParamSpec;

pub const STATE_SCHEMA_VERSION: u32 = 1;

/// Minimum number of recorded collisions before a range is refitted.
pub const MIN_COLLISIONS: usize = 3;

/// Parameter name to sampled value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamAssignment(pub BTreeMap<String, f64>);

impl ParamAssignment {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.get(name).copied()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.0.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<const N: usize> From<[(&str, f64); N]> for ParamAssignment {
    fn from(pairs: [(&str, f64); N]) -> Self {
        ParamAssignment(pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
    }
}

/// Per-parameter sampling state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub name: String,
    pub original: (f64, f64),
    pub current: (f64, f64),
    pub collision_values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleState {
    pub v: u32,
    pub seed: u64,
    pub samples_drawn: u64,
    pub params: Vec<ParamState>,
}

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("parameter `{0}` is not tracked by this state")]
    UnknownParam(String),
    #[error("parameter `{name}` has invalid range [{lo}, {hi}]")]
    BadRange { name: String, lo: f64, hi: f64 },
    #[error("schedule needs n_total >= refine_every >= 1 (got {n_total}, {refine_every})")]
    BadSchedule { n_total: usize, refine_every: usize },
    #[error("state record: {0}")]
    Record(String),
}

/// `[mu - sigma, mu + sigma]` fitted on `values`, clipped to `original`.
///
/// Returns `None` when there are fewer than [`MIN_COLLISIONS`] values, and
/// `original` when the clipped interval is empty or degenerate.
pub fn fit_range(values: &[f64], original: (f64, f64)) -> Option<(f64, f64)> {
    if values.len() < MIN_COLLISIONS {
        return None;
    }
    let n = values.len() as f64;
    let mu = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (n - 1.0);
    let sigma = var.sqrt();
    let lo = (mu - sigma).max(original.0);
    let hi = (mu + sigma).min(original.1);
    let width = original.1 - original.0;
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(hi - lo >= 1e-6 * width) || hi - lo <= 0.0 {
        return Some(original);
    }
    Some((lo, hi))
}

impl SampleState {
    pub fn new(specs: &[ParamSpec], seed: u64) -> Result<Self, SamplerError> {
        let mut params = Vec::with_capacity(specs.len());
        for p in specs {
            if !(p.lo.is_finite() && p.hi.is_finite() && p.lo <= p.hi) {
                return Err(SamplerError::BadRange {
                    name: p.name.clone(),
                    lo: p.lo,
                    hi: p.hi,
                });
            }
            params.push(ParamState {
                name: p.name.clone(),
                original: (p.lo, p.hi),
                current: (p.lo, p.hi),
                collision_values: Vec::new(),
            });
        }
        Ok(SampleState {
            v: STATE_SCHEMA_VERSION,
            seed,
            samples_drawn: 0,
            params,
        })
    }

    pub fn param(&self, name: &str) -> Option<&ParamState> {
        self.params.iter().find(|p| p.name == name)
    }

    /// The assignment that draw number `index` produces under the current ranges.
    pub fn sample_at(&self, index: u64) -> ParamAssignment {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut out = ParamAssignment::default();
        for p in &self.params {
            let (lo, hi) = p.current;
            let v = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            out.insert(p.name.clone(), v);
        }
        out
    }

    /// Draw the next assignment from the current ranges.
    pub fn sample(&mut self) -> ParamAssignment {
        let a = self.sample_at(self.samples_drawn);
        self.samples_drawn += 1;
        a
    }

    /// Keep the assignment's values when the scene collided.
    pub fn record_outcome(&mut self, assignment: &ParamAssignment, collided: bool) -> Result<(), SamplerError> {
        if !collided {
            return Ok(());
        }
        for (name, _) in assignment.iter() {
            if self.param(name).is_none() {
                return Err(SamplerError::UnknownParam(name.to_string()));
            }
        }
        for p in &mut self.params {
            if let Some(v) = assignment.get(&p.name) {
                p.collision_values.push(v);
            }
        }
        Ok(())
    }

    /// Refit every parameter with enough recorded collisions.
    pub fn refine(&mut self) {
        for p in &mut self.params {
            if let Some(r) = fit_range(&p.collision_values, p.original) {
                p.current = r;
            }
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sample state serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SamplerError> {
        let s: SampleState = serde_json::from_str(text).map_err(|e| SamplerError::Record(e.to_string()))?;
        if s.v != STATE_SCHEMA_VERSION {
            return Err(SamplerError::Record(format!("unsupported schema version {}", s.v)));
        }
        Ok(s)
    }
}

/// Draw count and refinement period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub n_total: usize,
    pub refine_every: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n_total: 50,
            refine_every: 10,
        }
    }
}

impl Schedule {
    pub fn check(&self) -> Result<(), SamplerError> {
        if self.refine_every == 0 || self.n_total < self.refine_every {
            return Err(SamplerError::BadSchedule {
                n_total: self.n_total,
                refine_every: self.refine_every,
            });
        }
        Ok(())
    }

    /// Refinements performed by a full run; none after the final sample.
    pub fn refine_count(&self) -> usize {
        self.n_total.saturating_sub(1) / self.refine_every.max(1)
    }
}

/// Scene outcomes that report whether the ego collided.
pub trait Outcome {
    fn collided(&self) -> bool;
}

impl Outcome for bool {
    fn collided(&self) -> bool {
        *self
    }
}

/// One scheduled run.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledRun<T> {
    pub index: u64,
    pub assignment: ParamAssignment,
    pub outcome: T,
}

/// Run the next refinement window, starting at `state.samples_drawn`.
///
/// Scenes within the window run in parallel. Returns an empty vector when
/// the schedule is exhausted.
pub fn run_window<T, E, F>(state: &mut SampleState, schedule: Schedule, runner: &F) -> Result<Vec<ScheduledRun<T>>, E>
where
    T: Outcome + Send,
    E: Send,
    F: Fn(u64, &ParamAssignment) -> Result<T, E> + Sync,
{
    let start = state.samples_drawn as usize;
    if start >= schedule.n_total {
        return Ok(Vec::new());
    }
    // Refinement skipped at the end of an earlier, shorter schedule.
    if start > 0 && start.is_multiple_of(schedule.refine_every) {
        state.refine();
    }
    let end = (start + schedule.refine_every - start % schedule.refine_every).min(schedule.n_total);
    let draws: Vec<(u64, ParamAssignment)> = (start..end).map(|_| (state.samples_drawn, state.sample())).collect();
    let outcomes: Vec<Result<T, E>> = draws.par_iter().map(|(i, a)| runner(*i, a)).collect();
    let mut out = Vec::with_capacity(draws.len());
    for ((index, assignment), outcome) in draws.into_iter().zip(outcomes) {
        let outcome = outcome?;
        state
            .record_outcome(&assignment, outcome.collided())
            .expect("assignment drawn from this state");
        out.push(ScheduledRun {
            index,
            assignment,
            outcome,
        });
    }
    if end < schedule.n_total {
        state.refine();
    }
    Ok(out)
}

/// Draw, run and record `n_total` scenes, refining after every full window
/// except the last.
pub fn run_batch_schedule<T, E, F>(
    state: &mut SampleState,
    schedule: Schedule,
    runner: F,
) -> Result<Vec<ScheduledRun<T>>, E>
where
    T: Outcome + Send,
    E: Send + From<SamplerError>,
    F: Fn(u64, &ParamAssignment) -> Result<T, E> + Sync,
{
    schedule.check()?;
    let mut all = Vec::with_capacity(schedule.n_total);
    loop {
        let window = run_window(state, schedule, &runner)?;
        if window.is_empty() {
            return Ok(all);
        }
        all.extend(window);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn speed_state(seed: u64) -> SampleState {
        SampleState::new(&[ParamSpec::new("ADV_SPEED", 0.0, 10.0)], seed).unwrap()
    }

    #[test]
    fn draws_stay_in_range_and_repeat() {
        let mut a = speed_state(7);
        let mut b = speed_state(7);
        for _ in 0..100 {
            let x = a.sample();
            assert_eq!(x, b.sample());
            let v = x.get("ADV_SPEED").unwrap();
            assert!((0.0..=10.0).contains(&v));
        }
        assert_eq!(a.samples_drawn, 100);
    }

    #[test]
    fn uniform_mean() {
        let mut s = speed_state(3);
        let n = 10_000;
        let mean = (0..n).map(|_| s.sample().get("ADV_SPEED").unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 5.0).abs() <= 0.15, "{mean}");
    }

    #[test]
    fn fit_examples() {
        let r = fit_range(&[4.0, 5.0, 6.0], (0.0, 10.0)).unwrap();
        assert!((r.0 - 4.0).abs() < 1e-12 && (r.1 - 6.0).abs() < 1e-12);
        assert_eq!(fit_range(&[], (0.0, 10.0)), None);
        assert_eq!(fit_range(&[1.0, 2.0], (0.0, 10.0)), None);
        let r = fit_range(&[9.5, 10.0, 10.0], (0.0, 10.0)).unwrap();
        let mu: f64 = 29.5 / 3.0;
        let sigma = (((9.5 - mu).powi(2) + 2.0 * (10.0 - mu).powi(2)) / 2.0).sqrt();
        assert!((r.0 - (mu - sigma)).abs() < 1e-12);
        assert!((r.0 - 9.545).abs() < 1e-3);
        assert_eq!(r.1, 10.0);
        assert_eq!(fit_range(&[3.0, 3.0, 3.0], (0.0, 10.0)), Some((0.0, 10.0)));
    }

    #[test]
    fn default_schedule_refines_four_times() {
        assert_eq!(Schedule::default().refine_count(), 4);
        let s = Schedule {
            n_total: 10,
            refine_every: 10,
        };
        assert_eq!(s.refine_count(), 0);
        let mut st = speed_state(1);
        let runs = run_batch_schedule(&mut st, s, |_, _| Ok::<_, SamplerError>(true)).unwrap();
        assert_eq!(runs.len(), 10);
        assert_eq!(st.param("ADV_SPEED").unwrap().current, (0.0, 10.0));
    }

    #[test]
    fn bad_schedule_rejected() {
        let mut st = speed_state(1);
        let s = Schedule {
            n_total: 5,
            refine_every: 10,
        };
        assert!(run_batch_schedule(&mut st, s, |_, _| Ok::<_, SamplerError>(false)).is_err());
    }

    #[test]
    fn window_resume_matches_full_run() {
        let runner = |_: u64, a: &ParamAssignment| {
            let v = a.get("ADV_SPEED").unwrap();
            Ok::<_, SamplerError>((4.0..=6.0).contains(&v))
        };
        let mut full = speed_state(11);
        let all = run_batch_schedule(&mut full, Schedule::default(), runner).unwrap();

        let mut part = speed_state(11);
        let mut got = run_window(&mut part, Schedule::default(), &runner).unwrap();
        got.extend(run_window(&mut part, Schedule::default(), &runner).unwrap());
        let mut resumed = SampleState::from_json(&part.to_json()).unwrap();
        let rest = run_batch_schedule(&mut resumed, Schedule::default(), runner).unwrap();
        got.extend(rest);
        assert_eq!(got, all);
        assert_eq!(resumed, full);
    }

    #[test]
    fn unknown_param_is_rejected() {
        let mut st = speed_state(1);
        let a = ParamAssignment::from([("OTHER", 1.0)]);
        assert!(st.record_outcome(&a, true).is_err());
        assert!(st.record_outcome(&a, false).is_ok());
    }

    #[test]
    fn bad_range_rejected() {
        assert!(SampleState::new(&[ParamSpec::new("X", 2.0, 1.0)], 0).is_err());
    }
}
