//! The subset-dag dynamic program over left-deep join orders, in five
//! flavors:
//!
//! * `optimize_lsc` — classic System-R: least cost at one fixed
//!   parameter point.
//! * `optimize_lec_a` — one LSC run per memory bucket, then exact
//!   expected-cost selection among the candidates.
//! * `optimize_lec_b` — same, but keeping the top `c` plans per dag node.
//! * `optimize_lec_c` — expected cost minimized directly inside the DP;
//!   returns the least-expected-cost left-deep plan. A dynamic variant
//!   evolves the memory distribution between phases with a Markov chain.
//! * `optimize_lec_d` — sizes and selectivities carried as full
//!   distributions, with result-size propagation and rebucketing.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::catalog::{selectivity_between, Catalog, EnvMode, Environment, QuerySpec};
use crate::cost_models::{
    expected_cost_generic, expected_cost_nested_loop_fast,
    expected_cost_sort_merge_fast, expected_over_memory, external_sort, CostBreakdown, JoinMethod,
    ALL_METHODS,
};
use crate::distributions::BucketedDistribution;
use crate::error::{Error, Result};

/// A left-deep join plan: the join order, one method per join, and
/// whether an external sort is appended to satisfy an ordering
/// requirement. Annotated with its expected cost under the environment
/// it was optimized for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub order: Vec<String>,
    pub methods: Vec<JoinMethod>,
    pub final_sort: bool,
    pub expected_cost: f64,
    pub per_phase_costs: Vec<f64>,
}

impl Plan {
    /// Indented text tree for humans; leaves are scans, each join nests
    /// its left input.
    pub fn render_tree(&self) -> String {
        let mut out = String::new();
        if self.final_sort {
            out.push_str("external-sort\n");
        }
        let base_indent = usize::from(self.final_sort);
        let n = self.order.len();
        for depth in 0..n.saturating_sub(1) {
            let indent = "  ".repeat(base_indent + depth);
            let method = self.methods[n - 2 - depth];
            out.push_str(&format!("{indent}join[{}]\n", method.name()));
        }
        // Scans, innermost first: the deepest join holds the first two
        // relations, every join above adds one relation on the right.
        let mut lines: Vec<(usize, String)> = Vec::new();
        for (i, name) in self.order.iter().enumerate() {
            let depth = if i == 0 { n - 1 } else { n - i };
            lines.push((depth, name.clone()));
        }
        if n == 1 {
            out.push_str(&format!("{}scan {}\n", "  ".repeat(base_indent), self.order[0]));
        } else {
            lines.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            for (depth, name) in lines {
                let indent = "  ".repeat(base_indent + depth);
                out.push_str(&format!("{indent}scan {name}\n"));
            }
        }
        out.push_str(&format!("expected cost: {}\n", format_cost(self.expected_cost)));
        out
    }
}

fn format_cost(c: f64) -> String {
    if c == c.round() && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

/// A query resolved against a catalog: relation indices, page
/// distributions and their means, and indexed predicates.
pub(crate) struct Resolved<'a> {
    pub names: Vec<String>,
    pub pages: Vec<&'a BucketedDistribution>,
    pub pages_mean: Vec<f64>,
    pub preds: Vec<(usize, usize, &'a BucketedDistribution)>,
    pub pred_mean: Vec<f64>,
    pub sorted_result: bool,
    pub query: &'a QuerySpec,
}

impl<'a> Resolved<'a> {
    pub fn new(catalog: &'a Catalog, query: &'a QuerySpec) -> Result<Self> {
        query.validate("query")?;
        query.check_against(catalog, "query")?;
        let names: Vec<String> = query.relations.clone();
        let pages: Vec<&BucketedDistribution> = names
            .iter()
            .map(|n| &catalog.relation(n).expect("checked above").pages)
            .collect();
        let pages_mean = pages.iter().map(|d| d.expectation()).collect();
        let idx_of = |name: &str| names.iter().position(|n| n == name).expect("validated");
        let preds: Vec<(usize, usize, &BucketedDistribution)> = query
            .predicates
            .iter()
            .map(|p| (idx_of(&p.left), idx_of(&p.right), &p.selectivity))
            .collect();
        let pred_mean = preds.iter().map(|(_, _, d)| d.expectation()).collect();
        Ok(Self {
            names,
            pages,
            pages_mean,
            preds,
            pred_mean,
            sorted_result: query.sorted_result,
            query,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    /// Indices of predicates joining relation `j` to any member of `mask`.
    pub fn preds_between(&self, j: usize, mask: u32) -> impl Iterator<Item = usize> + '_ {
        self.preds
            .iter()
            .enumerate()
            .filter(move |(_, &(a, b, _))| {
                (a == j && mask & (1 << b) != 0) || (b == j && mask & (1 << a) != 0)
            })
            .map(|(i, _)| i)
    }

    /// Collapsed selectivity for joining `j` against `mask`: the product
    /// of the connecting predicates' mean selectivities.
    pub fn sel_mean(&self, j: usize, mask: u32) -> f64 {
        self.preds_between(j, mask).map(|i| self.pred_mean[i]).product()
    }

    /// Collapsed result size for the join over `mask`: product of mean
    /// page counts and of mean selectivities internal to the subset.
    pub fn result_size_mean(&self, mask: u32) -> f64 {
        let mut size = 1.0;
        for i in 0..self.n() {
            if mask & (1 << i) != 0 {
                size *= self.pages_mean[i];
            }
        }
        for (idx, &(a, b, _)) in self.preds.iter().enumerate() {
            if mask & (1 << a) != 0 && mask & (1 << b) != 0 {
                size *= self.pred_mean[idx];
            }
        }
        size
    }

    fn plan(&self, order: &[usize], methods: &[JoinMethod], final_sort: bool) -> Plan {
        Plan {
            order: order.iter().map(|&i| self.names[i].clone()).collect(),
            methods: methods.to_vec(),
            final_sort,
            expected_cost: 0.0,
            per_phase_costs: Vec::new(),
        }
    }

    pub fn order_indices(&self, plan: &Plan) -> Result<Vec<usize>> {
        plan.order
            .iter()
            .map(|name| {
                self.names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| Error::UnknownRelation {
                        context: "plan".into(),
                        name: name.clone(),
                    })
            })
            .collect()
    }
}

/// Whether the plan needs an appended sort: a sorted result is required
/// and the final join does not already emit sorted output.
fn needs_final_sort(r: &Resolved, methods: &[JoinMethod]) -> bool {
    r.sorted_result && !methods.last().map_or(false, |m| m.emits_sorted())
}

/// Deterministic cost of a plan at one full parameter assignment.
/// `memory` holds one value per phase: each join in order, then the
/// final sort if the plan has one.
pub(crate) fn deterministic_cost(
    r: &Resolved,
    order: &[usize],
    methods: &[JoinMethod],
    final_sort: bool,
    sizes: &[f64],
    pred_sels: &[f64],
    memory: &[f64],
) -> CostBreakdown {
    let n = order.len();
    let mut phases = Vec::with_capacity(n);
    if n == 1 {
        let size = sizes[order[0]];
        phases.push(size);
        if final_sort {
            phases.push(external_sort(size, memory[0]));
        }
        return CostBreakdown::from_phases(phases);
    }
    let mut left = sizes[order[0]];
    let mut mask = 1u32 << order[0];
    for (i, &j) in order.iter().enumerate().skip(1) {
        let right = sizes[j];
        phases.push(methods[i - 1].cost(left, right, memory[i - 1]));
        let sel: f64 = r.preds_between(j, mask).map(|p| pred_sels[p]).product();
        left = left * right * sel;
        mask |= 1 << j;
    }
    if final_sort {
        phases.push(external_sort(left, memory[n - 1]));
    }
    CostBreakdown::from_phases(phases)
}

/// Deterministic order on plans used to break exact cost ties: smaller
/// join order (by relation name), then methods in
/// `SortMerge < GraceHash < PageNestedLoop` order.
fn plan_tie_cmp(r: &Resolved, a: (&[usize], &[JoinMethod]), b: (&[usize], &[JoinMethod])) -> Ordering {
    let names = |order: &[usize]| -> Vec<&str> {
        order.iter().map(|&i| r.names[i].as_str()).collect()
    };
    names(a.0)
        .cmp(&names(b.0))
        .then_with(|| a.1.cmp(b.1))
}

#[derive(Debug, Clone)]
struct Entry {
    cost: f64,
    order: Vec<usize>,
    methods: Vec<JoinMethod>,
}

fn entry_cmp(r: &Resolved, a: &Entry, b: &Entry) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then_with(|| plan_tie_cmp(r, (&a.order, &a.methods), (&b.order, &b.methods)))
}

/// Single-best DP over the subset dag. `join_cost(subset_size, left,
/// right, method)` prices the join that completes a subset of the given
/// size; `sort_cost(result_size)` prices the root sort when one is
/// needed.
fn dp_single(
    r: &Resolved,
    join_cost: impl Fn(usize, f64, f64, JoinMethod) -> f64,
    sort_cost: impl Fn(f64) -> f64,
) -> Entry {
    let n = r.n();
    let full: u32 = (1 << n) - 1;
    if n == 1 {
        let size = r.pages_mean[0];
        let cost = size + if r.sorted_result { sort_cost(size) } else { 0.0 };
        return Entry { cost, order: vec![0], methods: vec![] };
    }
    let mut table: Vec<Option<Entry>> = vec![None; 1 << n];
    for i in 0..n {
        // Access is a bare scan; its pages are charged inside the join
        // formulas, so the leaf entry carries zero cost.
        table[1 << i] = Some(Entry { cost: 0.0, order: vec![i], methods: vec![] });
    }
    for mask in 1u32..=full {
        let k = mask.count_ones() as usize;
        if k < 2 {
            continue;
        }
        let is_root = mask == full;
        let result_root = if is_root && r.sorted_result {
            r.result_size_mean(full)
        } else {
            0.0
        };
        let mut best: Option<Entry> = None;
        for j in 0..n {
            if mask & (1 << j) == 0 {
                continue;
            }
            let left_mask = mask & !(1 << j);
            let left = table[left_mask as usize].clone().expect("smaller subsets done");
            let left_size = r.result_size_mean(left_mask);
            let right_size = r.pages_mean[j];
            for method in ALL_METHODS {
                let mut cost = left.cost + join_cost(k, left_size, right_size, method);
                if is_root && r.sorted_result && !method.emits_sorted() {
                    cost += sort_cost(result_root);
                }
                let mut order = left.order.clone();
                order.push(j);
                let mut methods = left.methods.clone();
                methods.push(method);
                let cand = Entry { cost, order, methods };
                if best
                    .as_ref()
                    .map_or(true, |b| entry_cmp(r, &cand, b) == Ordering::Less)
                {
                    best = Some(cand);
                }
            }
        }
        table[mask as usize] = best;
    }
    table[full as usize].clone().expect("root computed")
}

fn finish_plan(
    r: &Resolved,
    entry: Entry,
    per_phase: Vec<f64>,
) -> Plan {
    let final_sort = needs_final_sort(r, &entry.methods) || (r.n() == 1 && r.sorted_result);
    let mut plan = r.plan(&entry.order, &entry.methods, final_sort);
    plan.expected_cost = entry.cost;
    plan.per_phase_costs = per_phase;
    plan
}

/// Expected per-phase costs of a plan with sizes and selectivities
/// collapsed to their means, memory drawn per phase from `memory_at`.
fn expected_phases(
    r: &Resolved,
    order: &[usize],
    methods: &[JoinMethod],
    final_sort: bool,
    memory_at: impl Fn(usize) -> BucketedDistribution,
) -> Vec<f64> {
    let n = order.len();
    let mut phases = Vec::new();
    if n == 1 {
        phases.push(r.pages_mean[order[0]]);
        if final_sort {
            let size = r.pages_mean[order[0]];
            phases.push(expected_over_memory(|m| external_sort(size, m), &memory_at(0), None));
        }
        return phases;
    }
    let mut left = r.pages_mean[order[0]];
    let mut mask = 1u32 << order[0];
    for (i, &j) in order.iter().enumerate().skip(1) {
        let right = r.pages_mean[j];
        let (l, rr) = (left, right);
        let method = methods[i - 1];
        phases.push(expected_over_memory(
            |m| method.cost(l, rr, m),
            &memory_at(i - 1),
            None,
        ));
        left = left * right * r.sel_mean(j, mask);
        mask |= 1 << j;
    }
    if final_sort {
        let size = left;
        phases.push(expected_over_memory(
            |m| external_sort(size, m),
            &memory_at(n - 1),
            None,
        ));
    }
    phases
}

fn require_static(env: &Environment, algo: &str) -> Result<()> {
    env.validate("environment")?;
    if env.mode() != EnvMode::Static {
        return Err(Error::Usage(format!(
            "{algo} requires a static environment (no transition model)"
        )));
    }
    Ok(())
}

/// Exact expected cost of a plan under a static environment, with sizes
/// and selectivities collapsed to their means (memory is the only
/// random parameter).
pub fn expected_cost_static(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    plan: &Plan,
) -> Result<f64> {
    require_static(env, "expected_cost_static")?;
    let r = Resolved::new(catalog, query)?;
    let order = r.order_indices(plan)?;
    let phases = expected_phases(&r, &order, &plan.methods, plan.final_sort, |_| {
        env.memory.clone()
    });
    Ok(phases.iter().sum())
}

/// Exact expected cost under a dynamic environment: phase `k` is costed
/// under the initial memory distribution advanced `k` steps.
pub fn expected_cost_dynamic(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    plan: &Plan,
) -> Result<f64> {
    env.validate("environment")?;
    let t = env
        .transition
        .as_ref()
        .ok_or_else(|| Error::Usage("expected_cost_dynamic requires a transition model".into()))?;
    let r = Resolved::new(catalog, query)?;
    let order = r.order_indices(plan)?;
    let n = order.len();
    let mut dists = vec![env.memory.clone()];
    for _ in 0..n {
        dists.push(dists.last().unwrap().advance(t)?);
    }
    let phases = expected_phases(&r, &order, &plan.methods, plan.final_sort, |phase| {
        dists[phase].clone()
    });
    Ok(phases.iter().sum())
}

/// System-R: the least-cost left-deep plan at one fixed memory value,
/// with sizes and selectivities collapsed to their means.
pub fn optimize_lsc(catalog: &Catalog, query: &QuerySpec, fixed_memory: f64) -> Result<Plan> {
    if !(fixed_memory.is_finite() && fixed_memory > 0.0) {
        return Err(Error::Domain(format!(
            "fixed memory must be positive, got {fixed_memory}"
        )));
    }
    let r = Resolved::new(catalog, query)?;
    let entry = dp_single(
        &r,
        |_, l, rr, method| method.cost(l, rr, fixed_memory),
        |size| external_sort(size, fixed_memory),
    );
    let point = BucketedDistribution::point(fixed_memory)?;
    let final_sort = needs_final_sort(&r, &entry.methods) || (r.n() == 1 && r.sorted_result);
    let phases = expected_phases(&r, &entry.order, &entry.methods, final_sort, |_| point.clone());
    Ok(finish_plan(&r, entry, phases))
}

/// Memory values at which candidate plans are generated: the bucket
/// representatives plus the distribution mean, so the traditional
/// mean-value plan is always among the candidates.
fn candidate_memory_points(env: &Environment) -> Vec<f64> {
    let mut points = env.memory.reps();
    let mean = env.memory.expectation();
    if !points.contains(&mean) {
        points.push(mean);
    }
    points.sort_by(f64::total_cmp);
    points
}

fn select_best_candidate(
    r: &Resolved,
    env: &Environment,
    candidates: Vec<(Vec<usize>, Vec<JoinMethod>)>,
) -> Result<Plan> {
    let mut best: Option<(Entry, Vec<f64>)> = None;
    let mut seen: Vec<(Vec<usize>, Vec<JoinMethod>)> = Vec::new();
    for (order, methods) in candidates {
        if seen.contains(&(order.clone(), methods.clone())) {
            continue;
        }
        seen.push((order.clone(), methods.clone()));
        let final_sort = needs_final_sort(r, &methods) || (r.n() == 1 && r.sorted_result);
        let phases = expected_phases(r, &order, &methods, final_sort, |_| env.memory.clone());
        let cost = phases.iter().sum();
        let cand = Entry { cost, order, methods };
        if best
            .as_ref()
            .map_or(true, |(b, _)| entry_cmp(r, &cand, b) == Ordering::Less)
        {
            best = Some((cand, phases));
        }
    }
    let (entry, phases) = best.expect("at least one candidate");
    Ok(finish_plan(r, entry, phases))
}

/// Least-expected-cost approximation using the optimizer as a black
/// box: one LSC run per candidate memory point, then exact expected-cost
/// selection under the environment.
pub fn optimize_lec_a(catalog: &Catalog, query: &QuerySpec, env: &Environment) -> Result<Plan> {
    require_static(env, "optimize_lec_a")?;
    let r = Resolved::new(catalog, query)?;
    let mut candidates = Vec::new();
    for m in candidate_memory_points(env) {
        let entry = dp_single(
            &r,
            |_, l, rr, method| method.cost(l, rr, m),
            |size| external_sort(size, m),
        );
        candidates.push((entry.order, entry.methods));
    }
    select_best_candidate(&r, env, candidates)
}

/// The exact top-`c` sums `left[i] + right[k]` of two ascending lists,
/// examining only pairs with `(i+1) * (k+1) <= c` (1-based rank product).
/// Returns the sums and the number of pairs examined, which is at most
/// `c + c ln c`.
pub fn top_c_merge(left: &[f64], right: &[f64], c: usize) -> Result<(Vec<f64>, u64)> {
    let (pairs, examined) = top_c_merge_indexed(left.len(), right.len(), c, |i, k| {
        left[i] + right[k]
    })?;
    if left.windows(2).any(|w| w[0] > w[1]) || right.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Usage("top_c_merge inputs must be sorted ascending".into()));
    }
    Ok((
        pairs.into_iter().map(|(i, k)| left[i] + right[k]).collect(),
        examined,
    ))
}

/// Index form of `top_c_merge`: yields the `(i, k)` pairs of the top-`c`
/// sums in ascending sum order.
fn top_c_merge_indexed(
    left_len: usize,
    right_len: usize,
    c: usize,
    sum: impl Fn(usize, usize) -> f64,
) -> Result<(Vec<(usize, usize)>, u64)> {
    if c == 0 {
        return Err(Error::Usage("top_c_merge needs c >= 1".into()));
    }
    if left_len == 0 || right_len == 0 {
        return Ok((Vec::new(), 0));
    }
    let mut examined = 0u64;
    let mut cands: Vec<(usize, usize)> = Vec::new();
    // Any pair of 1-based rank product above c is dominated by at least
    // c cheaper pairs, so it can never be in the top c.
    for i in 0..left_len.min(c) {
        let k_max = (c / (i + 1)).min(right_len);
        for k in 0..k_max {
            examined += 1;
            cands.push((i, k));
        }
    }
    cands.sort_by(|&(i1, k1), &(i2, k2)| {
        sum(i1, k1)
            .total_cmp(&sum(i2, k2))
            .then(i1.cmp(&i2))
            .then(k1.cmp(&k2))
    });
    cands.truncate(c);
    Ok((cands, examined))
}

/// Top-`c` DP over the subset dag at one fixed memory value.
fn dp_topc(r: &Resolved, m: f64, c: usize) -> Vec<Entry> {
    let n = r.n();
    let full: u32 = (1 << n) - 1;
    if n == 1 {
        let size = r.pages_mean[0];
        let cost = size + if r.sorted_result { external_sort(size, m) } else { 0.0 };
        return vec![Entry { cost, order: vec![0], methods: vec![] }];
    }
    let mut table: Vec<Vec<Entry>> = vec![Vec::new(); 1 << n];
    for i in 0..n {
        table[1 << i] = vec![Entry { cost: 0.0, order: vec![i], methods: vec![] }];
    }
    for mask in 1u32..=full {
        let k = mask.count_ones() as usize;
        if k < 2 {
            continue;
        }
        let is_root = mask == full;
        let mut pool: Vec<Entry> = Vec::new();
        for j in 0..n {
            if mask & (1 << j) == 0 {
                continue;
            }
            let left_mask = mask & !(1 << j);
            let lefts = table[left_mask as usize].clone();
            let left_costs: Vec<f64> = lefts.iter().map(|e| e.cost).collect();
            let left_size = r.result_size_mean(left_mask);
            let right_size = r.pages_mean[j];
            for method in ALL_METHODS {
                let mut join = method.cost(left_size, right_size, m);
                if is_root && r.sorted_result && !method.emits_sorted() {
                    join += external_sort(r.result_size_mean(full), m);
                }
                // One access path per relation, so the right-hand list is
                // the single zero-cost scan.
                let (picks, _) =
                    top_c_merge_indexed(left_costs.len(), 1, c, |i, _| left_costs[i])
                        .expect("c >= 1");
                for (i, _) in picks {
                    let left = &lefts[i];
                    let mut order = left.order.clone();
                    order.push(j);
                    let mut methods = left.methods.clone();
                    methods.push(method);
                    pool.push(Entry { cost: left.cost + join, order, methods });
                }
            }
        }
        pool.sort_by(|a, b| entry_cmp(r, a, b));
        pool.truncate(c);
        table[mask as usize] = pool;
    }
    table[full as usize].clone()
}

/// Least-expected-cost approximation keeping the top `c` plans per dag
/// node at each candidate memory point, then exact expected-cost
/// selection over the pooled candidates.
pub fn optimize_lec_b(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    c: usize,
) -> Result<Plan> {
    if c == 0 {
        return Err(Error::Usage("optimize_lec_b needs c >= 1".into()));
    }
    require_static(env, "optimize_lec_b")?;
    let r = Resolved::new(catalog, query)?;
    let mut candidates = Vec::new();
    for m in candidate_memory_points(env) {
        for entry in dp_topc(&r, m, c) {
            candidates.push((entry.order, entry.methods));
        }
    }
    select_best_candidate(&r, env, candidates)
}

fn breakpoints_for(method: JoinMethod, a: f64, b: f64) -> Vec<f64> {
    match method {
        JoinMethod::SortMerge => {
            let l = a.max(b);
            vec![l.cbrt(), l.sqrt()]
        }
        JoinMethod::GraceHash => {
            let s = a.min(b);
            vec![s.cbrt(), s.sqrt()]
        }
        JoinMethod::PageNestedLoop => vec![a.min(b) + 2.0],
    }
}

fn lec_c_entry(
    r: &Resolved,
    memory_at: &dyn Fn(usize) -> BucketedDistribution,
    sort_memory: &BucketedDistribution,
    auto_buckets: bool,
) -> Entry {
    dp_single(
        r,
        |k, l, rr, method| {
            let d_m = memory_at(k - 2);
            let bps;
            let grouping = if auto_buckets {
                bps = breakpoints_for(method, l, rr);
                Some((bps.as_slice(), method.branch_boundary()))
            } else {
                None
            };
            expected_over_memory(|m| method.cost(l, rr, m), &d_m, grouping)
        },
        |size| expected_over_memory(|m| external_sort(size, m), sort_memory, None),
    )
}

/// The least-expected-cost left-deep plan under a static environment,
/// computed directly inside the DP.
pub fn optimize_lec_c(catalog: &Catalog, query: &QuerySpec, env: &Environment) -> Result<Plan> {
    optimize_lec_c_opts(catalog, query, env, false)
}

/// `optimize_lec_c` with optional per-node formula-breakpoint bucketing
/// of the memory distribution (one formula evaluation per branch).
pub fn optimize_lec_c_opts(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    auto_buckets: bool,
) -> Result<Plan> {
    require_static(env, "optimize_lec_c")?;
    let r = Resolved::new(catalog, query)?;
    let memory = env.memory.clone();
    let entry = lec_c_entry(&r, &|_| memory.clone(), &memory, auto_buckets);
    let final_sort = needs_final_sort(&r, &entry.methods) || (r.n() == 1 && r.sorted_result);
    let phases = expected_phases(&r, &entry.order, &entry.methods, final_sort, |_| memory.clone());
    Ok(finish_plan(&r, entry, phases))
}

/// The least-expected-cost left-deep plan when memory evolves between
/// phases: the join completing a depth-`k` subset is phase `k-1` and is
/// costed under the initial distribution advanced `k-2` steps; the final
/// sort, when present, under one additional step.
pub fn optimize_lec_c_dynamic(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
) -> Result<Plan> {
    env.validate("environment")?;
    let t = env
        .transition
        .as_ref()
        .ok_or_else(|| Error::Usage("optimize_lec_c_dynamic requires a transition model".into()))?;
    let r = Resolved::new(catalog, query)?;
    let n = r.n();
    let mut dists = vec![env.memory.clone()];
    for _ in 0..n {
        let next = dists.last().unwrap().advance(t)?;
        dists.push(next);
    }
    let entry = lec_c_entry(&r, &|step| dists[step].clone(), &dists[n - 1].clone(), false);
    let final_sort = needs_final_sort(&r, &entry.methods) || (n == 1 && r.sorted_result);
    let phases = expected_phases(&r, &entry.order, &entry.methods, final_sort, |phase| {
        dists[phase].clone()
    });
    Ok(finish_plan(&r, entry, phases))
}

/// Options for the multi-parameter algorithm.
#[derive(Debug, Clone)]
pub struct LecDOptions {
    /// Bucket budget applied after every result-size product; `None`
    /// keeps the exact product distribution.
    pub rebucket_budget: Option<usize>,
    /// Pre-rebucket each product input to the cube root of the budget
    /// instead of rebucketing the product afterwards.
    pub cube_root_inputs: bool,
}

impl Default for LecDOptions {
    fn default() -> Self {
        Self { rebucket_budget: Some(16), cube_root_inputs: false }
    }
}

/// The least-expected-cost plan with sizes and selectivities carried as
/// full distributions. Each dag node stores the distribution of its
/// result size; join expected costs use the linear-time evaluators
/// where one exists.
pub fn optimize_lec_d(
    catalog: &Catalog,
    query: &QuerySpec,
    env: &Environment,
    opts: &LecDOptions,
) -> Result<Plan> {
    require_static(env, "optimize_lec_d")?;
    let r = Resolved::new(catalog, query)?;
    let n = r.n();
    let full: u32 = (1 << n) - 1;
    let d_m = &env.memory;

    let expected_join = |method: JoinMethod,
                         left: &BucketedDistribution,
                         right: &BucketedDistribution|
     -> f64 {
        match method {
            JoinMethod::SortMerge => expected_cost_sort_merge_fast(d_m, left, right),
            JoinMethod::PageNestedLoop => expected_cost_nested_loop_fast(d_m, left, right),
            JoinMethod::GraceHash => {
                expected_cost_generic(|a, b, m| method.cost(a, b, m), d_m, left, right)
            }
        }
    };

    if n == 1 {
        let size_dist = r.pages[0];
        let mut cost = size_dist.expectation();
        if r.sorted_result {
            cost += size_dist
                .iter()
                .map(|(s, p)| p * expected_over_memory(|m| external_sort(s, m), d_m, None))
                .sum::<f64>();
        }
        let entry = Entry { cost, order: vec![0], methods: vec![] };
        let phases = vec![cost];
        return Ok(finish_plan(&r, entry, phases));
    }

    struct DEntry {
        best: Entry,
        result: BucketedDistribution,
    }
    let mut table: Vec<Option<DEntry>> = Vec::with_capacity(1 << n);
    for _ in 0..(1 << n) {
        table.push(None);
    }
    for i in 0..n {
        table[1 << i] = Some(DEntry {
            best: Entry { cost: 0.0, order: vec![i], methods: vec![] },
            result: r.pages[i].clone(),
        });
    }
    let member_names = |mask: u32| -> Vec<&str> {
        (0..n)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| r.names[i].as_str())
            .collect()
    };
    for mask in 1u32..=full {
        let k = mask.count_ones() as usize;
        if k < 2 {
            continue;
        }
        let is_root = mask == full;
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();

        // Result-size distribution: computed once per subset from the j
        // minimizing the bucket-count product; pre-rebucketing aside, it
        // does not depend on the choice of j.
        let j_star = *members
            .iter()
            .min_by_key(|&&j| {
                let left = table[(mask & !(1 << j)) as usize].as_ref().unwrap();
                left.result.len() * r.pages[j].len()
            })
            .expect("nonempty subset");
        let left_mask_star = mask & !(1 << j_star);
        let sel_names = member_names(left_mask_star);
        let sel = selectivity_between(
            r.query,
            &r.names[j_star],
            &sel_names,
            opts.rebucket_budget,
        )?;
        let left_star = table[left_mask_star as usize].as_ref().unwrap().result.clone();
        let result = {
            let (la, ra, sa) = if opts.cube_root_inputs {
                let budget = opts.rebucket_budget.unwrap_or(usize::MAX);
                let cube = ((budget as f64).cbrt().ceil() as usize).max(1);
                (
                    left_star.rebucket(cube)?,
                    r.pages[j_star].rebucket(cube)?,
                    sel.rebucket(cube)?,
                )
            } else {
                (left_star, r.pages[j_star].clone(), sel)
            };
            let prod = BucketedDistribution::product_distribution(&la, &ra, &sa)?;
            match (opts.rebucket_budget, opts.cube_root_inputs) {
                (Some(b), false) => prod.rebucket(b)?,
                _ => prod,
            }
        };

        let sort_root = |result: &BucketedDistribution| -> f64 {
            result
                .iter()
                .map(|(s, p)| p * expected_over_memory(|m| external_sort(s, m), d_m, None))
                .sum()
        };

        let mut best: Option<Entry> = None;
        for &j in &members {
            let left_mask = mask & !(1 << j);
            let left = table[left_mask as usize].as_ref().unwrap();
            let left_entry = left.best.clone();
            let left_dist = left.result.clone();
            for method in ALL_METHODS {
                let mut cost = left_entry.cost + expected_join(method, &left_dist, r.pages[j]);
                if is_root && r.sorted_result && !method.emits_sorted() {
                    cost += sort_root(&result);
                }
                let mut order = left_entry.order.clone();
                order.push(j);
                let mut methods = left_entry.methods.clone();
                methods.push(method);
                let cand = Entry { cost, order, methods };
                if best
                    .as_ref()
                    .map_or(true, |b| entry_cmp(&r, &cand, b) == Ordering::Less)
                {
                    best = Some(cand);
                }
            }
        }
        table[mask as usize] = Some(DEntry { best: best.expect("candidates exist"), result });
    }

    let root = table[full as usize].take().expect("root computed");
    let entry = root.best;
    let final_sort = needs_final_sort(&r, &entry.methods);
    // Per-phase annotation re-walks the plan with the same evaluators.
    let mut phases = Vec::new();
    {
        let mut left_dist = r.pages[entry.order[0]].clone();
        let mut mask = 1u32 << entry.order[0];
        for (i, &j) in entry.order.iter().enumerate().skip(1) {
            phases.push(expected_join(entry.methods[i - 1], &left_dist, r.pages[j]));
            let sel_names = member_names(mask);
            let sel = selectivity_between(r.query, &r.names[j], &sel_names, opts.rebucket_budget)?;
            let prod =
                BucketedDistribution::product_distribution(&left_dist, r.pages[j], &sel)?;
            left_dist = match opts.rebucket_budget {
                Some(b) if !opts.cube_root_inputs => prod.rebucket(b)?,
                _ => prod,
            };
            mask |= 1 << j;
        }
        if final_sort {
            phases.push(
                root.result
                    .iter()
                    .map(|(s, p)| p * expected_over_memory(|m| external_sort(s, m), d_m, None))
                    .sum(),
            );
        }
    }
    let mut plan = r.plan(&entry.order, &entry.methods, final_sort);
    plan.expected_cost = entry.cost;
    plan.per_phase_costs = phases;
    Ok(plan)
}
