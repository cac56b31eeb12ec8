//! Monte Carlo validation: sample parameter realizations (static
//! vectors or Markov memory trajectories), run the plan cost formulas
//! on each, and compare realized means against analytic expectations.
//!
//! Sampling draws bucket representatives only, so the simulator targets
//! exactly the bucketed model the optimizer sees; Monte Carlo error is
//! never conflated with modeling error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, EnvMode, Environment, QuerySpec};
use crate::distributions::BucketedDistribution;
use crate::error::{Error, Result};
use crate::optimizer::{deterministic_cost, Plan, Resolved};

/// Identifier of the generator scheme recorded in every report.
/// Reports are reproducible across implementations only when the
/// generator matches.
pub const RNG_ALGORITHM: &str = "chacha8/splitmix64-per-trial";

/// Per-plan statistics inside a comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    /// Index of the plan in the caller's list.
    pub plan: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Result of a simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub trials: u64,
    pub mean: f64,
    pub std_error: f64,
    pub rng: String,
    /// Present for `compare`: one entry per plan, ranked by realized
    /// mean ascending.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_plan: Option<Vec<PlanStats>>,
}

/// splitmix64 finalizer; decorrelates per-trial seeds derived from a
/// single base seed.
fn mix(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, trial))
}

/// Inverse-CDF draw of a bucket index.
fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn sample_dist(d: &BucketedDistribution, rng: &mut ChaCha8Rng) -> f64 {
    let probs: Vec<f64> = d.iter().map(|(_, p)| p).collect();
    let i = sample_index(&probs, rng.gen::<f64>());
    d.buckets()[i].rep
}

fn trajectory_with(env: &Environment, phases: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let reps = env.memory.reps();
    let probs: Vec<f64> = env.memory.iter().map(|(_, p)| p).collect();
    let mut state = sample_index(&probs, rng.gen::<f64>());
    let mut out = vec![reps[state]];
    match (&env.transition, env.mode()) {
        (Some(t), EnvMode::Dynamic) => {
            for _ in 1..phases {
                state = sample_index(&t.matrix[state], rng.gen::<f64>());
                out.push(reps[state]);
            }
        }
        // Static memory holds for the whole execution: a constant
        // trajectory, by definition rather than by error.
        _ => out.resize(phases, reps[state]),
    }
    out
}

/// One memory trajectory of the given length, reproducible per seed.
pub fn sample_trajectory(env: &Environment, phases: usize, seed: u64) -> Result<Vec<f64>> {
    if phases == 0 {
        return Err(Error::Usage("sample_trajectory needs phases >= 1".into()));
    }
    env.validate("environment")?;
    let mut rng = trial_rng(seed, 0);
    Ok(trajectory_with(env, phases, &mut rng))
}

/// Sum with pairwise (cascade) reduction; order-independent enough to
/// keep error growth logarithmic in the trial count.
fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let devs: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&devs) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn plan_phases(n: usize, plan: &Plan) -> usize {
    if n == 1 {
        1
    } else {
        n - 1 + usize::from(plan.final_sort)
    }
}

struct Realization {
    sizes: Vec<f64>,
    sels: Vec<f64>,
    trajectory: Vec<f64>,
}

fn sample_realization(
    r: &Resolved,
    env: &Environment,
    max_phases: usize,
    rng: &mut ChaCha8Rng,
) -> Realization {
    let sizes = r.pages.iter().map(|d| sample_dist(d, rng)).collect();
    let sels = r.preds.iter().map(|(_, _, d)| sample_dist(d, rng)).collect();
    let trajectory = trajectory_with(env, max_phases, rng);
    Realization { sizes, sels, trajectory }
}

/// Monte Carlo estimate of a plan's expected cost: mean and standard
/// error over `trials` independent realizations. Deterministic per
/// seed.
pub fn simulate(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    plan: &Plan,
    trials: u64,
    seed: u64,
) -> Result<SimReport> {
    if trials == 0 {
        return Err(Error::Usage("simulate needs trials >= 1".into()));
    }
    env.validate("environment")?;
    let r = Resolved::new(catalog, query)?;
    let order = r.order_indices(plan)?;
    let phases = plan_phases(r.n(), plan);
    let mut costs = Vec::with_capacity(trials as usize);
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let real = sample_realization(&r, env, phases, &mut rng);
        let c = deterministic_cost(
            &r,
            &order,
            &plan.methods,
            plan.final_sort,
            &real.sizes,
            &real.sels,
            &real.trajectory,
        );
        costs.push(c.total);
    }
    let (mean, std_error) = mean_and_std_error(&costs);
    Ok(SimReport {
        trials,
        mean,
        std_error,
        rng: RNG_ALGORITHM.to_string(),
        per_plan: None,
    })
}

/// Paired comparison: every plan is costed on the same sampled
/// realizations (common random numbers), and the report ranks plans by
/// realized mean. The top-level mean and error are the first-ranked
/// plan's.
pub fn compare(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    plans: &[Plan],
    trials: u64,
    seed: u64,
) -> Result<SimReport> {
    if plans.is_empty() {
        return Err(Error::Usage("compare needs at least one plan".into()));
    }
    if trials == 0 {
        return Err(Error::Usage("compare needs trials >= 1".into()));
    }
    env.validate("environment")?;
    let r = Resolved::new(catalog, query)?;
    let orders: Vec<Vec<usize>> = plans
        .iter()
        .map(|p| r.order_indices(p))
        .collect::<Result<_>>()?;
    let max_phases = plans.iter().map(|p| plan_phases(r.n(), p)).max().unwrap();
    let mut costs: Vec<Vec<f64>> = vec![Vec::with_capacity(trials as usize); plans.len()];
    for t in 0..trials {
        let mut rng = trial_rng(seed, t);
        let real = sample_realization(&r, env, max_phases, &mut rng);
        for (i, plan) in plans.iter().enumerate() {
            let phases = plan_phases(r.n(), plan);
            let c = deterministic_cost(
                &r,
                &orders[i],
                &plan.methods,
                plan.final_sort,
                &real.sizes,
                &real.sels,
                &real.trajectory[..phases],
            );
            costs[i].push(c.total);
        }
    }
    let mut per_plan: Vec<PlanStats> = costs
        .iter()
        .enumerate()
        .map(|(i, xs)| {
            let (mean, std_error) = mean_and_std_error(xs);
            PlanStats { plan: i, mean, std_error }
        })
        .collect();
    per_plan.sort_by(|a, b| a.mean.total_cmp(&b.mean).then(a.plan.cmp(&b.plan)));
    let first = per_plan[0].clone();
    Ok(SimReport {
        trials,
        mean: first.mean,
        std_error: first.std_error,
        rng: RNG_ALGORITHM.to_string(),
        per_plan: Some(per_plan),
    })
}
