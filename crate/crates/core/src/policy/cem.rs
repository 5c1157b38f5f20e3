use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{PolicyError, PolicyParams};
use crate::metrics::{compute_scene_metrics, MetricWeights};
use crate::sim::{run, SceneConfig};

/// Cross-entropy search settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemConfig {
    pub population: usize,
    pub elite_fraction: f64,
    pub generations: usize,
    /// Candidates whose mean route completion falls below this are never accepted.
    pub min_completion: f64,
    /// Weight of the new elite statistics when updating the sampling distribution.
    pub smoothing: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        CemConfig {
            population: 32,
            elite_fraction: 0.25,
            generations: 10,
            min_completion: 0.3,
            smoothing: 0.7,
        }
    }
}

/// Mean outcome of one policy over the training scenes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingScore {
    pub cr: f64,
    pub os: f64,
    pub comp: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub evaluations: usize,
    pub elite_cr: f64,
    pub elite_os: f64,
    pub best: PolicyParams,
    pub best_score: TrainingScore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneResult {
    pub params: PolicyParams,
    pub initial: TrainingScore,
    pub score: TrainingScore,
    pub log: Vec<GenerationLog>,
}

/// Searched dimensions and their bounds; detection geometry stays fixed.
const BOUNDS: [(f64, f64); 4] = [(2.0, 15.0), (0.5, 30.0), (1.0, 6.0), (0.3, 2.0)];

fn to_vec(p: &PolicyParams) -> [f64; 4] {
    [p.target_speed, p.brake_trigger_distance, p.brake_decel, p.steering_gain]
}

fn from_vec(base: &PolicyParams, x: [f64; 4]) -> PolicyParams {
    PolicyParams {
        target_speed: x[0],
        brake_trigger_distance: x[1],
        brake_decel: x[2],
        steering_gain: x[3],
        ..*base
    }
}

/// Run `params` on every scene and average collision, score and completion.
pub fn evaluate(params: &PolicyParams, scenes: &[SceneConfig], weights: &MetricWeights) -> TrainingScore {
    let mut cr = 0.0;
    let mut os = 0.0;
    let mut comp = 0.0;
    for scene in scenes {
        let trace = run(scene, params, 0);
        if let Ok(m) = compute_scene_metrics(&trace, weights) {
            cr += m.cr as f64;
            os += m.os;
            comp += m.comp;
        }
    }
    let n = scenes.len().max(1) as f64;
    TrainingScore {
        cr: cr / n,
        os: os / n,
        comp: comp / n,
    }
}

fn improves(cand: &TrainingScore, best: &TrainingScore, min_comp: f64) -> bool {
    cand.comp >= min_comp
        && (cand.cr < best.cr - 1e-12 || ((cand.cr - best.cr).abs() <= 1e-12 && cand.os > best.os + 1e-12))
}

fn rank_key(s: &TrainingScore, min_comp: f64) -> (bool, f64, f64) {
    (s.comp < min_comp, s.cr, -s.os)
}

/// Cross-entropy search over speed, braking and steering parameters.
///
/// Minimizes training collision rate, then maximizes overall score. The
/// incumbent is kept unless a candidate beats it, so the returned collision
/// rate never exceeds the input's. At most `eval_budget` candidates are evaluated.
pub fn finetune(
    params: &PolicyParams,
    scenes: &[SceneConfig],
    eval_budget: usize,
    seed: u64,
    config: &CemConfig,
    weights: &MetricWeights,
) -> Result<FinetuneResult, PolicyError> {
    if scenes.is_empty() {
        return Err(PolicyError::NoTrainingScenes);
    }
    params.validate()?;
    let initial = evaluate(params, scenes, weights);
    let mut best = *params;
    let mut best_score = initial;
    let mut log = Vec::new();

    let mut mean = to_vec(params);
    for (i, m) in mean.iter_mut().enumerate() {
        *m = m.clamp(BOUNDS[i].0, BOUNDS[i].1);
    }
    let mut std: [f64; 4] = std::array::from_fn(|i| (BOUNDS[i].1 - BOUNDS[i].0) / 4.0);
    let n_elite =
        ((config.population as f64 * config.elite_fraction).ceil() as usize).clamp(1, config.population.max(1));
    let mut spent = 0usize;

    for gen in 0..config.generations {
        let n = config.population.min(eval_budget - spent);
        if n == 0 {
            break;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(gen as u64);
        let candidates: Vec<PolicyParams> = (0..n)
            .map(|_| {
                let x: [f64; 4] = std::array::from_fn(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (mean[i] + std[i] * z).clamp(BOUNDS[i].0, BOUNDS[i].1)
                });
                from_vec(params, x)
            })
            .collect();
        let scores: Vec<TrainingScore> = candidates.par_iter().map(|c| evaluate(c, scenes, weights)).collect();
        spent += n;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (ka, kb) = (
                rank_key(&scores[a], config.min_completion),
                rank_key(&scores[b], config.min_completion),
            );
            ka.0.cmp(&kb.0)
                .then(ka.1.total_cmp(&kb.1))
                .then(ka.2.total_cmp(&kb.2))
                .then(a.cmp(&b))
        });
        let elites = &order[..n_elite.min(n)];
        for &i in &order {
            if improves(&scores[i], &best_score, config.min_completion) {
                best = candidates[i];
                best_score = scores[i];
            }
        }
        let k = elites.len() as f64;
        for d in 0..4 {
            let vals: Vec<f64> = elites.iter().map(|&i| to_vec(&candidates[i])[d]).collect();
            let m = vals.iter().sum::<f64>() / k;
            let s = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / k).sqrt();
            let floor = (BOUNDS[d].1 - BOUNDS[d].0) * 0.02;
            mean[d] = config.smoothing * m + (1.0 - config.smoothing) * mean[d];
            std[d] = (config.smoothing * s + (1.0 - config.smoothing) * std[d]).max(floor);
        }
        log.push(GenerationLog {
            generation: gen,
            evaluations: spent,
            elite_cr: elites.iter().map(|&i| scores[i].cr).sum::<f64>() / k,
            elite_os: elites.iter().map(|&i| scores[i].os).sum::<f64>() / k,
            best,
            best_score,
        });
    }
    Ok(FinetuneResult {
        params: best,
        initial,
        score: best_score,
        log,
    })
}
