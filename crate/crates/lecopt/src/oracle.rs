//! Brute-force ground truth: exhaustive left-deep plan enumeration and
//! exact expectation by full joint (or memory-sequence) summation, with
//! no bucketed propagation of intermediate sizes.

use itertools::Itertools;

use crate::catalog::{Catalog, EnvMode, Environment, QuerySpec};
use crate::cost_models::ALL_METHODS;
use crate::error::{Error, Result};
use crate::optimizer::{deterministic_cost, Plan, Resolved};

/// Explicit refusal thresholds. The oracle declines rather than
/// silently truncating when a problem exceeds them.
#[derive(Debug, Clone, Copy)]
pub struct OracleConfig {
    /// Enumeration refuses above this many relations.
    pub max_relations: usize,
    /// Exact expectation refuses when the joint parameter space (size
    /// and selectivity tuples times memory values or sequences) exceeds
    /// this many points.
    pub max_joint_space: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { max_relations: 7, max_joint_space: 2_000_000 }
    }
}

/// All left-deep plans for the query: every permutation of the
/// relations with every method assignment, final sort set exactly when
/// the ordering requirement is not already met.
pub fn enumerate_left_deep(
    catalog: &Catalog,
    query: &QuerySpec,
    cfg: &OracleConfig,
) -> Result<Vec<Plan>> {
    let r = Resolved::new(catalog, query)?;
    let n = r.n();
    if n > cfg.max_relations {
        return Err(Error::Refused(format!(
            "enumeration over {n} relations exceeds the limit of {} \
             ({} plans); raise the limit explicitly to proceed",
            cfg.max_relations,
            plan_count(n)
        )));
    }
    if n == 1 {
        return Ok(vec![Plan {
            order: vec![r.names[0].clone()],
            methods: vec![],
            final_sort: query.sorted_result,
            expected_cost: 0.0,
            per_phase_costs: vec![],
        }]);
    }
    let mut plans = Vec::new();
    for perm in (0..n).permutations(n) {
        for methods in std::iter::repeat(ALL_METHODS.iter().copied())
            .take(n - 1)
            .multi_cartesian_product()
        {
            let final_sort =
                query.sorted_result && !methods.last().copied().unwrap().emits_sorted();
            plans.push(Plan {
                order: perm.iter().map(|&i| r.names[i].clone()).collect(),
                methods: methods.clone(),
                final_sort,
                expected_cost: 0.0,
                per_phase_costs: vec![],
            });
        }
    }
    Ok(plans)
}

fn plan_count(n: usize) -> u64 {
    let fact: u64 = (1..=n as u64).product();
    fact * 3u64.pow(n.saturating_sub(1) as u32)
}

/// Odometer over one index per axis; calls `visit` with each index
/// vector.
fn for_each_combination(dims: &[usize], mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dims.len()];
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    loop {
        visit(&idx);
        let mut pos = dims.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dims[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn phase_count(n: usize, final_sort: bool) -> usize {
    if n == 1 {
        usize::from(final_sort)
    } else {
        n - 1 + usize::from(final_sort)
    }
}

/// Exact expected cost of a plan: the full sum over every combination
/// of size representatives, selectivity representatives, and memory
/// values (static) or memory sequences (dynamic). Intermediate sizes
/// are derived per tuple; nothing is rebucketed. Returns the total and
/// the exact per-phase expectations.
pub fn exact_expected_cost(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    plan: &Plan,
    cfg: &OracleConfig,
) -> Result<(f64, Vec<f64>)> {
    env.validate("environment")?;
    let r = Resolved::new(catalog, query)?;
    let order = r.order_indices(plan)?;
    let n = r.n();
    if plan.methods.len() != n.saturating_sub(1) {
        return Err(Error::Usage(format!(
            "plan has {} methods for {n} relations",
            plan.methods.len()
        )));
    }
    let phases = phase_count(n, plan.final_sort);

    let mem_reps = r_env_reps(env);
    let nb_m = mem_reps.len() as u64;
    let mut space: u64 = match env.mode() {
        EnvMode::Static => nb_m,
        EnvMode::Dynamic => nb_m.saturating_pow(phases.max(1) as u32),
    };
    for d in &r.pages {
        space = space.saturating_mul(d.len() as u64);
    }
    for (_, _, d) in &r.preds {
        space = space.saturating_mul(d.len() as u64);
    }
    if space > cfg.max_joint_space {
        return Err(Error::Refused(format!(
            "joint parameter space has {space} points, above the limit of {}",
            cfg.max_joint_space
        )));
    }

    // Axes: one per relation size, one per predicate selectivity.
    let dims: Vec<usize> = r
        .pages
        .iter()
        .map(|d| d.len())
        .chain(r.preds.iter().map(|(_, _, d)| d.len()))
        .collect();
    let page_axes: Vec<Vec<(f64, f64)>> = r.pages.iter().map(|d| d.iter().collect()).collect();
    let pred_axes: Vec<Vec<(f64, f64)>> =
        r.preds.iter().map(|(_, _, d)| d.iter().collect()).collect();

    // Memory scenarios: (probability, per-phase memory vector).
    let scenarios: Vec<(f64, Vec<f64>)> = match env.mode() {
        EnvMode::Static => env
            .memory
            .iter()
            .map(|(m, p)| (p, vec![m; phases.max(1)]))
            .collect(),
        EnvMode::Dynamic => {
            let t = env.transition.as_ref().expect("dynamic mode");
            let init: Vec<(f64, f64)> = env.memory.iter().collect();
            let mut seqs: Vec<(f64, Vec<usize>)> =
                init.iter().enumerate().map(|(i, &(_, p))| (p, vec![i])).collect();
            for _ in 1..phases.max(1) {
                let mut next = Vec::with_capacity(seqs.len() * init.len());
                for (p, seq) in &seqs {
                    let last = *seq.last().unwrap();
                    for (j, &pj) in t.matrix[last].iter().enumerate() {
                        let mut s = seq.clone();
                        s.push(j);
                        next.push((p * pj, s));
                    }
                }
                seqs = next;
            }
            seqs.into_iter()
                .map(|(p, seq)| (p, seq.into_iter().map(|i| mem_reps[i]).collect()))
                .collect()
        }
    };

    let mut total = 0.0;
    // A single-relation plan has a scan phase the memory model ignores.
    let phase_slots = if n == 1 { 1 + usize::from(plan.final_sort) } else { phases };
    let mut per_phase = vec![0.0; phase_slots];
    let n_axes = r.pages.len();
    for_each_combination(&dims, |idx| {
        let mut prob = 1.0;
        let mut sizes = vec![0.0; n];
        for (i, axis) in page_axes.iter().enumerate() {
            let (v, p) = axis[idx[i]];
            sizes[i] = v;
            prob *= p;
        }
        let mut sels = vec![0.0; pred_axes.len()];
        for (i, axis) in pred_axes.iter().enumerate() {
            let (v, p) = axis[idx[n_axes + i]];
            sels[i] = v;
            prob *= p;
        }
        for (mp, memory) in &scenarios {
            let breakdown = deterministic_cost(
                &r,
                &order,
                &plan.methods,
                plan.final_sort,
                &sizes,
                &sels,
                memory,
            );
            let w = prob * mp;
            total += breakdown.total * w;
            for (slot, c) in per_phase.iter_mut().zip(&breakdown.per_phase) {
                *slot += c * w;
            }
        }
    });
    Ok((total, per_phase))
}

fn r_env_reps(env: &Environment) -> Vec<f64> {
    env.memory.reps()
}

/// The oracle's verdict: the exact-best plan and the full ranked list.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub best: Plan,
    /// Every enumerated plan annotated with its exact expected cost,
    /// ascending.
    pub ranked: Vec<Plan>,
}

/// Argmin of `exact_expected_cost` over `enumerate_left_deep`, with the
/// optimizer's tie-breaking (cost, then join order by relation name,
/// then methods).
pub fn oracle_best(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    cfg: &OracleConfig,
) -> Result<OracleResult> {
    let mut ranked = Vec::new();
    for mut plan in enumerate_left_deep(catalog, query, cfg)? {
        let (total, per_phase) = exact_expected_cost(catalog, query, env, &plan, cfg)?;
        plan.expected_cost = total;
        plan.per_phase_costs = per_phase;
        ranked.push(plan);
    }
    ranked.sort_by(|a, b| {
        a.expected_cost
            .total_cmp(&b.expected_cost)
            .then_with(|| a.order.cmp(&b.order))
            .then_with(|| a.methods.cmp(&b.methods))
    });
    let best = ranked[0].clone();
    debug_assert!(ranked.iter().all(|p| best.expected_cost <= p.expected_cost));
    Ok(OracleResult { best, ranked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Predicate, Relation};
    use crate::cost_models::JoinMethod;
    use crate::distributions::{BucketedDistribution, TransitionModel};
    use crate::optimizer::{optimize_lec_c, optimize_lec_c_dynamic};

    fn dist(pairs: &[(f64, f64)]) -> BucketedDistribution {
        BucketedDistribution::from_weighted(pairs).unwrap()
    }

    fn point(v: f64) -> BucketedDistribution {
        BucketedDistribution::point(v).unwrap()
    }

    fn example1() -> (Catalog, QuerySpec, Environment) {
        let catalog = Catalog {
            relations: vec![
                Relation { name: "A".into(), pages: point(1_000_000.0) },
                Relation { name: "B".into(), pages: point(400_000.0) },
            ],
        };
        let query = QuerySpec {
            relations: vec!["A".into(), "B".into()],
            predicates: vec![Predicate {
                left: "A".into(),
                right: "B".into(),
                selectivity: point(3000.0 / (1_000_000.0 * 400_000.0)),
            }],
            sorted_result: true,
            order_owner: Some("A".into()),
        };
        let env = Environment::fixed(dist(&[(700.0, 0.2), (2000.0, 0.8)]));
        (catalog, query, env)
    }

    #[test]
    fn enumeration_counts() {
        let (catalog, mut query, _) = example1();
        query.sorted_result = false;
        let cfg = OracleConfig::default();
        assert_eq!(enumerate_left_deep(&catalog, &query, &cfg).unwrap().len(), 6);

        let catalog1 = Catalog {
            relations: vec![Relation { name: "A".into(), pages: point(10.0) }],
        };
        let query1 = QuerySpec {
            relations: vec!["A".into()],
            predicates: vec![],
            sorted_result: false,
            order_owner: None,
        };
        assert_eq!(enumerate_left_deep(&catalog1, &query1, &cfg).unwrap().len(), 1);
    }

    #[test]
    fn enumeration_refuses_large_n() {
        let names: Vec<String> = (0..8).map(|i| format!("R{i}")).collect();
        let catalog = Catalog {
            relations: names
                .iter()
                .map(|n| Relation { name: n.clone(), pages: point(10.0) })
                .collect(),
        };
        let query = QuerySpec {
            relations: names,
            predicates: vec![],
            sorted_result: false,
            order_owner: None,
        };
        let err = enumerate_left_deep(&catalog, &query, &OracleConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Refused(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn example1_plan_costs() {
        let (catalog, query, env) = example1();
        let cfg = OracleConfig::default();
        let plan1 = Plan {
            order: vec!["A".into(), "B".into()],
            methods: vec![JoinMethod::SortMerge],
            final_sort: false,
            expected_cost: 0.0,
            per_phase_costs: vec![],
        };
        let (c1, _) = exact_expected_cost(&catalog, &query, &env, &plan1, &cfg).unwrap();
        assert!((c1 - 3_360_000.0).abs() < 1e-3);

        let plan2 = Plan {
            order: vec!["A".into(), "B".into()],
            methods: vec![JoinMethod::GraceHash],
            final_sort: true,
            expected_cost: 0.0,
            per_phase_costs: vec![],
        };
        let (c2, phases) = exact_expected_cost(&catalog, &query, &env, &plan2, &cfg).unwrap();
        assert!((c2 - 2_812_000.0).abs() < 1e-3);
        assert_eq!(phases.len(), 2);
        assert!((phases[0] - 2_800_000.0).abs() < 1e-3);
        assert!((phases[1] - 12_000.0).abs() < 1e-3);
    }

    #[test]
    fn point_everything_equals_deterministic() {
        let catalog = Catalog {
            relations: vec![
                Relation { name: "R".into(), pages: point(16.0) },
                Relation { name: "S".into(), pages: point(8.0) },
            ],
        };
        let query = QuerySpec {
            relations: vec!["R".into(), "S".into()],
            predicates: vec![Predicate {
                left: "R".into(),
                right: "S".into(),
                selectivity: point(0.0625),
            }],
            sorted_result: false,
            order_owner: None,
        };
        let env = Environment::fixed(point(4.0));
        let plan = Plan {
            order: vec!["R".into(), "S".into()],
            methods: vec![JoinMethod::SortMerge],
            final_sort: false,
            expected_cost: 0.0,
            per_phase_costs: vec![],
        };
        let (c, _) =
            exact_expected_cost(&catalog, &query, &env, &plan, &OracleConfig::default()).unwrap();
        // m = 4 <= cbrt(16) is false (cbrt 16 ~ 2.52), sqrt(16) = 4 >= m,
        // so the 4(a+b) branch applies.
        assert_eq!(c, 4.0 * 24.0);
    }

    #[test]
    fn oracle_best_example1_is_grace_hash() {
        let (catalog, query, env) = example1();
        let result = oracle_best(&catalog, &query, &env, &OracleConfig::default()).unwrap();
        assert_eq!(result.best.methods, vec![JoinMethod::GraceHash]);
        assert!(result.best.final_sort);
        assert!((result.best.expected_cost - 2_812_000.0).abs() < 1e-3);
        for w in result.ranked.windows(2) {
            assert!(w[0].expected_cost <= w[1].expected_cost);
        }
    }

    #[test]
    fn lec_c_matches_oracle_on_three_relations() {
        // Dyadic probabilities and small integer sizes: every float
        // operation is exact, so equality is bitwise.
        let catalog = Catalog {
            relations: vec![
                Relation { name: "R".into(), pages: point(8.0) },
                Relation { name: "S".into(), pages: point(16.0) },
                Relation { name: "T".into(), pages: point(4.0) },
            ],
        };
        let query = QuerySpec {
            relations: vec!["R".into(), "S".into(), "T".into()],
            predicates: vec![
                Predicate {
                    left: "R".into(),
                    right: "S".into(),
                    selectivity: point(0.125),
                },
                Predicate {
                    left: "S".into(),
                    right: "T".into(),
                    selectivity: point(0.25),
                },
            ],
            sorted_result: true,
            order_owner: None,
        };
        let env = Environment::fixed(dist(&[(3.0, 0.25), (20.0, 0.75)]));
        let plan = optimize_lec_c(&catalog, &query, &env).unwrap();
        let oracle = oracle_best(&catalog, &query, &env, &OracleConfig::default()).unwrap();
        assert_eq!(plan.expected_cost, oracle.best.expected_cost);
    }

    #[test]
    fn dynamic_matches_sequence_sum() {
        let catalog = Catalog {
            relations: vec![
                Relation { name: "R".into(), pages: point(8.0) },
                Relation { name: "S".into(), pages: point(16.0) },
                Relation { name: "T".into(), pages: point(4.0) },
            ],
        };
        let query = QuerySpec {
            relations: vec!["R".into(), "S".into(), "T".into()],
            predicates: vec![Predicate {
                left: "R".into(),
                right: "S".into(),
                selectivity: point(0.125),
            }],
            sorted_result: false,
            order_owner: None,
        };
        let env = Environment {
            memory: dist(&[(3.0, 0.5), (20.0, 0.5)]),
            transition: Some(
                TransitionModel::new(
                    vec![3.0, 20.0],
                    vec![vec![0.75, 0.25], vec![0.5, 0.5]],
                )
                .unwrap(),
            ),
        };
        let plan = optimize_lec_c_dynamic(&catalog, &query, &env).unwrap();
        let (exact, _) =
            exact_expected_cost(&catalog, &query, &env, &plan, &OracleConfig::default()).unwrap();
        assert_eq!(plan.expected_cost, exact);
    }

    #[test]
    fn joint_space_refusal() {
        let (catalog, query, env) = example1();
        let cfg = OracleConfig { max_relations: 7, max_joint_space: 1 };
        let plan = Plan {
            order: vec!["A".into(), "B".into()],
            methods: vec![JoinMethod::SortMerge],
            final_sort: false,
            expected_cost: 0.0,
            per_phase_costs: vec![],
        };
        let err = exact_expected_cost(&catalog, &query, &env, &plan, &cfg).unwrap_err();
        assert!(matches!(err, Error::Refused(_)));
    }
}
