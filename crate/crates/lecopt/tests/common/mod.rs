//! Seeded random instance generators for the acceptance suite.
//!
//! Exact-comparison criteria need every float operation to be exact, so
//! these instances are built from dyadic numbers: integer sizes and
//! memory values, power-of-two selectivities, and probabilities that
//! are multiples of 1/8. Products and sums of such values round to
//! nothing at the magnitudes used here.

use lecopt::catalog::{Catalog, Environment, Predicate, QuerySpec, Relation};
use lecopt::distributions::{BucketedDistribution, TransitionModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub struct Instance {
    pub catalog: Catalog,
    pub query: QuerySpec,
    pub env: Environment,
}

/// `k` probabilities, each a multiple of 1/8, summing to exactly 1.
pub fn dyadic_probs(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    assert!((1..=8).contains(&k));
    let mut units = vec![1u32; k];
    for _ in 0..(8 - k as u32) {
        let i = rng.gen_range(0..k);
        units[i] += 1;
    }
    units.iter().map(|&u| f64::from(u) / 8.0).collect()
}

const MEMORY_POOL: [f64; 12] = [
    2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 48.0, 96.0, 256.0, 1024.0,
];

/// Sorted distinct values drawn from a pool.
fn pick_sorted(rng: &mut ChaCha8Rng, pool: &[f64], k: usize) -> Vec<f64> {
    assert!(k <= pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut vals: Vec<f64> = idx[..k].iter().map(|&i| pool[i]).collect();
    vals.sort_by(f64::total_cmp);
    vals
}

fn dyadic_dist(rng: &mut ChaCha8Rng, pool: &[f64], k: usize) -> BucketedDistribution {
    let vals = pick_sorted(rng, pool, k);
    let probs = dyadic_probs(rng, k);
    let pairs: Vec<(f64, f64)> = vals.into_iter().zip(probs).collect();
    BucketedDistribution::from_weighted(&pairs).unwrap()
}

fn point(v: f64) -> BucketedDistribution {
    BucketedDistribution::point(v).unwrap()
}

fn random_predicates(rng: &mut ChaCha8Rng, names: &[String]) -> Vec<Predicate> {
    let n = names.len();
    let mut preds = Vec::new();
    // Random spanning tree keeps the query connected; an optional extra
    // edge adds a second predicate on some pair.
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let sel = 0.5f64.powi(rng.gen_range(1..=4));
        preds.push(Predicate {
            left: names[parent].clone(),
            right: names[i].clone(),
            selectivity: point(sel),
        });
    }
    if n >= 3 && rng.gen_bool(0.3) {
        let a = rng.gen_range(0..n - 1);
        let b = rng.gen_range(a + 1..n);
        preds.push(Predicate {
            left: names[a].clone(),
            right: names[b].clone(),
            selectivity: point(0.5f64.powi(rng.gen_range(1..=3))),
        });
    }
    preds
}

fn build(
    rng: &mut ChaCha8Rng,
    n: usize,
    sizes: Vec<BucketedDistribution>,
    memory: BucketedDistribution,
) -> Instance {
    let names: Vec<String> = (0..n).map(|i| format!("R{i}")).collect();
    let catalog = Catalog {
        relations: names
            .iter()
            .cloned()
            .zip(sizes)
            .map(|(name, pages)| Relation { name, pages })
            .collect(),
    };
    let query = QuerySpec {
        relations: names.clone(),
        predicates: random_predicates(rng, &names),
        sorted_result: rng.gen_bool(0.5),
        order_owner: None,
    };
    Instance {
        catalog,
        query,
        env: Environment::fixed(memory),
    }
}

/// Point-mass sizes and selectivities; `nb_m` memory buckets with
/// dyadic probabilities. The model the LECopt theorem is stated in.
pub fn point_size_instance(seed: u64, n: usize, nb_m: usize) -> Instance {
    let mut r = rng(seed);
    let sizes = (0..n).map(|_| point(f64::from(r.gen_range(2..=32)))).collect();
    let memory = dyadic_dist(&mut r, &MEMORY_POOL, nb_m);
    build(&mut r, n, sizes, memory)
}

/// As `point_size_instance`, but memory is a single point mass: the
/// traditional one-bucket special case.
pub fn point_env_instance(seed: u64, n: usize) -> Instance {
    let mut r = rng(seed);
    let sizes = (0..n).map(|_| point(f64::from(r.gen_range(2..=32)))).collect();
    let memory = point(MEMORY_POOL[r.gen_range(0..MEMORY_POOL.len())]);
    build(&mut r, n, sizes, memory)
}

/// Two-bucket relation sizes with dyadic probabilities; point
/// selectivities; `nb_m` memory buckets.
pub fn bucketed_size_instance(seed: u64, n: usize, nb_m: usize) -> Instance {
    let mut r = rng(seed);
    let size_pool: Vec<f64> = (2..=32).map(f64::from).collect();
    let sizes = (0..n).map(|_| dyadic_dist(&mut r, &size_pool, 2)).collect();
    let memory = dyadic_dist(&mut r, &MEMORY_POOL, nb_m);
    build(&mut r, n, sizes, memory)
}

/// Replace the environment with a dynamic one: same memory buckets plus
/// a random row-stochastic transition matrix with dyadic rows.
pub fn make_dynamic(seed: u64, inst: &mut Instance) {
    let mut r = rng(seed ^ 0xd1ac);
    let states = inst.env.memory.reps();
    let k = states.len();
    let matrix: Vec<Vec<f64>> = (0..k).map(|_| dyadic_probs(&mut r, k)).collect();
    inst.env = Environment {
        memory: inst.env.memory.clone(),
        transition: Some(TransitionModel::new(states, matrix).unwrap()),
    };
}

/// A random distribution with `k` buckets at arbitrary (non-dyadic)
/// positive values; for tolerance-based criteria.
pub fn continuous_dist(rng: &mut ChaCha8Rng, k: usize) -> BucketedDistribution {
    let mut v = 0.0;
    let mut pairs = Vec::with_capacity(k);
    for _ in 0..k {
        v += rng.gen_range(0.1..10.0);
        pairs.push((v, rng.gen_range(0.05..1.0)));
    }
    let total: f64 = pairs.iter().map(|&(_, p)| p).sum();
    for pair in &mut pairs {
        pair.1 /= total;
    }
    BucketedDistribution::from_weighted(&pairs).unwrap()
}
