//! Bucketed probability distributions and the operations every
//! expected-cost computation is built from: expectation, prefix tables,
//! Markov evolution, product distributions, and rebucketing.
//!
//! A distribution is a sorted list of non-overlapping buckets, each with
//! a representative value and a probability mass. All arithmetic is done
//! on the representatives, so a distribution behaves like a discrete
//! point-mass distribution whose support is the representative set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance under which input probabilities are renormalized to sum to 1.
const NORMALIZE_TOL: f64 = 1e-6;
/// Tolerance within which a validated distribution must sum to 1.
const SUM_TOL: f64 = 1e-9;

/// One interval of a parameter's range: `[lo, hi)` with representative
/// `rep` and probability mass `prob`. `hi` may be infinite for the last
/// bucket (serialized as the string `"inf"`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: f64,
    #[serde(with = "inf_string")]
    pub hi: f64,
    pub rep: f64,
    pub prob: f64,
}

/// Serializes an upper bound as a number, or as `"inf"` when infinite.
mod inf_string {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, ser: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            ser.serialize_str("inf")
        } else {
            ser.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum NumOrStr {
            Num(f64),
            Str(String),
        }
        match NumOrStr::deserialize(de)? {
            NumOrStr::Num(v) => Ok(v),
            NumOrStr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            NumOrStr::Str(s) => Err(D::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// A discrete approximation of a random parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BucketedDistribution {
    buckets: Vec<Bucket>,
}

impl BucketedDistribution {
    /// Validates bucket ordering and probability mass. Inputs whose mass
    /// is within `1e-6` of 1 are renormalized; anything worse is rejected.
    pub fn new(buckets: Vec<Bucket>) -> Result<Self> {
        if buckets.is_empty() {
            return Err(Error::InvalidDistribution("no buckets".into()));
        }
        for (i, b) in buckets.iter().enumerate() {
            if !b.lo.is_finite() || b.hi.is_nan() || !b.rep.is_finite() || !b.prob.is_finite() {
                return Err(Error::InvalidDistribution(format!(
                    "bucket {i} has a non-finite field"
                )));
            }
            if !(b.lo <= b.rep && b.rep < b.hi) {
                return Err(Error::InvalidDistribution(format!(
                    "bucket {i}: rep {} outside [{}, {})",
                    b.rep, b.lo, b.hi
                )));
            }
            if b.prob < 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "bucket {i}: negative probability {}",
                    b.prob
                )));
            }
            if i > 0 && buckets[i - 1].hi > b.lo {
                return Err(Error::InvalidDistribution(format!(
                    "bucket {i} overlaps its predecessor"
                )));
            }
        }
        let sum: f64 = buckets.iter().map(|b| b.prob).sum();
        let mut buckets = buckets;
        if (sum - 1.0).abs() > NORMALIZE_TOL {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        if sum != 1.0 {
            for b in &mut buckets {
                b.prob /= sum;
            }
        }
        Ok(Self { buckets })
    }

    /// Degenerate one-bucket distribution: all mass on `value`.
    pub fn point(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::Domain(format!(
                "point mass must be finite and non-negative, got {value}"
            )));
        }
        let hi = if value == 0.0 {
            f64::MIN_POSITIVE
        } else {
            value + (value * 1e-9).max(f64::MIN_POSITIVE)
        };
        Self::new(vec![Bucket {
            lo: value,
            hi,
            rep: value,
            prob: 1.0,
        }])
    }

    /// Builds a distribution from `(rep, prob)` pairs. Each bucket spans
    /// from its representative to the next one; the last is unbounded.
    pub fn from_weighted(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut pairs = pairs.to_vec();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let buckets = pairs
            .iter()
            .enumerate()
            .map(|(i, &(rep, prob))| Bucket {
                lo: rep,
                hi: pairs.get(i + 1).map_or(f64::INFINITY, |p| p.0),
                rep,
                prob,
            })
            .collect();
        Self::new(buckets)
    }

    pub fn buckets(&self) -> &[Bucket] {
        &self.buckets
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_point(&self) -> bool {
        self.buckets.len() == 1
    }

    /// Iterator over `(rep, prob)` pairs in ascending rep order.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.buckets.iter().map(|b| (b.rep, b.prob))
    }

    pub fn reps(&self) -> Vec<f64> {
        self.buckets.iter().map(|b| b.rep).collect()
    }

    /// Mean of the representatives under the bucket probabilities.
    pub fn expectation(&self) -> f64 {
        self.buckets.iter().map(|b| b.rep * b.prob).sum()
    }

    /// One step of a time-homogeneous Markov chain: the probability
    /// vector is multiplied by the transition matrix, representatives
    /// stay fixed.
    pub fn advance(&self, t: &TransitionModel) -> Result<Self> {
        if self.reps() != t.states {
            return Err(Error::Usage(
                "transition states do not match the distribution's representatives".into(),
            ));
        }
        let n = self.buckets.len();
        let mut probs = vec![0.0; n];
        for (i, b) in self.buckets.iter().enumerate() {
            for (j, p) in probs.iter_mut().enumerate() {
                *p += b.prob * t.matrix[i][j];
            }
        }
        let buckets = self
            .buckets
            .iter()
            .zip(probs)
            .map(|(b, prob)| Bucket { prob, ..*b })
            .collect();
        // Row-stochasticity preserves total mass; skip renormalization so
        // exact probability arithmetic survives repeated steps.
        Ok(Self { buckets })
    }

    /// Applies `advance` `steps` times.
    pub fn advance_n(&self, t: &TransitionModel, steps: usize) -> Result<Self> {
        let mut d = self.clone();
        for _ in 0..steps {
            d = d.advance(t)?;
        }
        Ok(d)
    }

    /// Distribution of `a * b * sigma` for independent inputs: one point
    /// mass per triple of representatives, masses at equal values merged.
    pub fn product_distribution(a: &Self, b: &Self, sigma: &Self) -> Result<Self> {
        let mut masses: Vec<(f64, f64)> = Vec::with_capacity(a.len() * b.len() * sigma.len());
        for (va, pa) in a.iter() {
            for (vb, pb) in b.iter() {
                for (vs, ps) in sigma.iter() {
                    masses.push((va * vb * vs, pa * pb * ps));
                }
            }
        }
        masses.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(masses.len());
        for (v, p) in masses {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += p,
                _ => merged.push((v, p)),
            }
        }
        Self::from_weighted(&merged)
    }

    /// Coalesces adjacent buckets down to at most `k`, splitting mass as
    /// evenly as the bucket granularity allows. A merged bucket's
    /// representative is the probability-weighted mean of its members, so
    /// the overall expectation is preserved.
    pub fn rebucket(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Usage("rebucket budget must be at least 1".into()));
        }
        if self.buckets.len() <= k {
            return Ok(self.clone());
        }
        let total: f64 = self.buckets.iter().map(|b| b.prob).sum();
        let mut out: Vec<Bucket> = Vec::with_capacity(k);
        let mut group: Vec<&Bucket> = Vec::new();
        let mut cum = 0.0;
        let n = self.buckets.len();
        for (i, b) in self.buckets.iter().enumerate() {
            group.push(b);
            cum += b.prob;
            let groups_done = out.len();
            let quantile = total * (groups_done + 1) as f64 / k as f64;
            let buckets_left = n - i - 1;
            let groups_left = k - groups_done - 1;
            if (cum >= quantile || buckets_left == groups_left) && groups_done + 1 <= k {
                let mass: f64 = group.iter().map(|g| g.prob).sum();
                let rep = if mass > 0.0 {
                    group.iter().map(|g| g.rep * g.prob).sum::<f64>() / mass
                } else {
                    group[0].rep
                };
                out.push(Bucket {
                    lo: group[0].lo,
                    hi: group.last().unwrap().hi,
                    rep,
                    prob: mass,
                });
                group.clear();
            }
        }
        debug_assert!(group.is_empty());
        Ok(Self { buckets: out })
    }

    /// Builds prefix tables for this distribution at the given sorted
    /// thresholds, in a single sweep over buckets and thresholds.
    pub fn prefix_tables(&self, thresholds: &[f64]) -> Result<PrefixTables> {
        if thresholds.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Usage("thresholds must be sorted ascending".into()));
        }
        let total_prob: f64 = self.buckets.iter().map(|b| b.prob).sum();
        let total_e: f64 = self.buckets.iter().map(|b| b.rep * b.prob).sum();

        // Pr(X >= rep_i): suffix sums over the distribution's own reps.
        let mut geq = vec![0.0; self.len()];
        let mut suffix = 0.0;
        for (i, b) in self.buckets.iter().enumerate().rev() {
            suffix += b.prob;
            geq[i] = suffix;
        }

        let mut entries = Vec::with_capacity(thresholds.len());
        let mut idx = 0;
        let mut p_lt = 0.0;
        let mut e_lt = 0.0;
        for &t in thresholds {
            while idx < self.len() && self.buckets[idx].rep < t {
                p_lt += self.buckets[idx].prob;
                e_lt += self.buckets[idx].rep * self.buckets[idx].prob;
                idx += 1;
            }
            // Mass exactly at t, if any; reps are unique so at most one bucket.
            let (p_at, e_at) = if idx < self.len() && self.buckets[idx].rep == t {
                let b = &self.buckets[idx];
                (b.prob, b.rep * b.prob)
            } else {
                (0.0, 0.0)
            };
            entries.push(ThresholdEntry {
                threshold: t,
                prob_lt: p_lt,
                prob_leq: p_lt + p_at,
                partial_e_lt: e_lt,
                partial_e_leq: e_lt + e_at,
            });
        }

        Ok(PrefixTables {
            reps: self.reps(),
            geq,
            entries,
            total_prob,
            total_e,
        })
    }
}

/// Probability and partial-expectation prefixes at one threshold.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdEntry {
    pub threshold: f64,
    pub prob_lt: f64,
    pub prob_leq: f64,
    /// E(X * 1[X < t]), unnormalized.
    pub partial_e_lt: f64,
    /// E(X * 1[X <= t]), unnormalized.
    pub partial_e_leq: f64,
}

/// Lookup tables for tail probabilities and conditional means, computed
/// in one sweep. Conditional means over empty events are `None`.
#[derive(Debug, Clone)]
pub struct PrefixTables {
    reps: Vec<f64>,
    geq: Vec<f64>,
    entries: Vec<ThresholdEntry>,
    total_prob: f64,
    total_e: f64,
}

impl PrefixTables {
    /// Pr(X >= rep) for a representative of the underlying distribution.
    pub fn geq(&self, rep: f64) -> Option<f64> {
        let i = self.reps.iter().position(|&r| r == rep)?;
        Some(self.geq[i])
    }

    fn entry(&self, t: f64) -> Option<&ThresholdEntry> {
        self.entries
            .binary_search_by(|e| e.threshold.total_cmp(&t))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Pr(X <= t) for one of the requested thresholds.
    pub fn leq_at(&self, t: f64) -> Option<f64> {
        self.entry(t).map(|e| e.prob_leq)
    }

    /// E(X : X <= t), or `None` when Pr(X <= t) = 0.
    pub fn cond_mean_leq(&self, t: f64) -> Option<f64> {
        let e = self.entry(t)?;
        if e.prob_leq > 0.0 {
            Some(e.partial_e_leq / e.prob_leq)
        } else {
            None
        }
    }

    /// E(X : X >= t), or `None` when Pr(X >= t) = 0.
    pub fn cond_mean_geq(&self, t: f64) -> Option<f64> {
        let e = self.entry(t)?;
        let p = self.total_prob - e.prob_lt;
        if p > 0.0 {
            Some((self.total_e - e.partial_e_lt) / p)
        } else {
            None
        }
    }

    pub fn entries(&self) -> &[ThresholdEntry] {
        &self.entries
    }

    pub fn total_prob(&self) -> f64 {
        self.total_prob
    }
}

/// Row-stochastic transition matrix over the representatives of a memory
/// distribution; `matrix[i][j]` is the probability of moving from state
/// `i` to state `j` between execution phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModel {
    pub states: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl TransitionModel {
    pub fn new(states: Vec<f64>, matrix: Vec<Vec<f64>>) -> Result<Self> {
        let m = Self { states, matrix };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n == 0 {
            return Err(Error::InvalidDistribution("transition has no states".into()));
        }
        if self.states.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidDistribution(
                "transition states must be strictly increasing".into(),
            ));
        }
        if self.matrix.len() != n {
            return Err(Error::InvalidDistribution(format!(
                "transition matrix has {} rows for {n} states",
                self.matrix.len()
            )));
        }
        for (i, row) in self.matrix.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidDistribution(format!(
                    "transition row {i} has {} entries for {n} states",
                    row.len()
                )));
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(Error::InvalidDistribution(format!(
                    "transition row {i} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidDistribution(format!(
                    "transition row {i} sums to {sum}, not 1"
                )));
            }
        }
        Ok(())
    }

    /// Identity chain over the given states: memory never changes.
    pub fn identity(states: Vec<f64>) -> Result<Self> {
        let n = states.len();
        let matrix = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(states, matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(pairs: &[(f64, f64)]) -> BucketedDistribution {
        BucketedDistribution::from_weighted(pairs).unwrap()
    }

    #[test]
    fn point_mass_basics() {
        let d = BucketedDistribution::point(2000.0).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.buckets()[0].rep, 2000.0);
        assert_eq!(d.buckets()[0].prob, 1.0);
        assert_eq!(BucketedDistribution::point(5.0).unwrap().expectation(), 5.0);
        assert!(matches!(
            BucketedDistribution::point(-1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn expectation_of_memory_distribution() {
        // 0.2 * 700 + 0.8 * 2000 = 1740
        let d = dist(&[(700.0, 0.2), (2000.0, 0.8)]);
        assert!((d.expectation() - 1740.0).abs() < 1e-9);
        let sym = dist(&[(1.0, 0.5), (3.0, 0.5)]);
        assert_eq!(sym.expectation(), 2.0);
    }

    #[test]
    fn rejects_bad_probability_mass() {
        assert!(BucketedDistribution::from_weighted(&[(1.0, 0.5), (2.0, 0.4)]).is_err());
        // Within 1e-6 of 1: renormalized.
        let d = BucketedDistribution::from_weighted(&[(1.0, 0.5), (2.0, 0.4999999)]).unwrap();
        let sum: f64 = d.iter().map(|(_, p)| p).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn rejects_overlapping_buckets() {
        let r = BucketedDistribution::new(vec![
            Bucket { lo: 0.0, hi: 10.0, rep: 5.0, prob: 0.5 },
            Bucket { lo: 8.0, hi: 20.0, rep: 9.0, prob: 0.5 },
        ]);
        assert!(matches!(r, Err(Error::InvalidDistribution(_))));
    }

    #[test]
    fn prefix_tables_two_bucket_example() {
        let d = dist(&[(700.0, 0.2), (2000.0, 0.8)]);
        let t = d.prefix_tables(&[1000.0]).unwrap();
        assert_eq!(t.geq(700.0), Some(1.0));
        assert_eq!(t.geq(2000.0), Some(0.8));
        assert!((t.leq_at(1000.0).unwrap() - 0.2).abs() < 1e-12);
        assert!((t.cond_mean_leq(1000.0).unwrap() - 700.0).abs() < 1e-9);
    }

    #[test]
    fn prefix_tables_empty_condition_is_absent() {
        let d = dist(&[(700.0, 0.2), (2000.0, 0.8)]);
        let t = d.prefix_tables(&[100.0]).unwrap();
        assert_eq!(t.leq_at(100.0), Some(0.0));
        assert_eq!(t.cond_mean_leq(100.0), None);
    }

    #[test]
    fn prefix_tables_rejects_unsorted_thresholds() {
        let d = dist(&[(1.0, 1.0)]);
        assert!(matches!(
            d.prefix_tables(&[2.0, 1.0]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn advance_matrix_vector_product() {
        let t = TransitionModel::new(
            vec![100.0, 200.0],
            vec![vec![0.5, 0.5], vec![0.0, 1.0]],
        )
        .unwrap();
        let d = dist(&[(100.0, 1.0), (200.0, 0.0)]);
        let d1 = d.advance(&t).unwrap();
        let probs: Vec<f64> = d1.iter().map(|(_, p)| p).collect();
        assert_eq!(probs, vec![0.5, 0.5]);
    }

    #[test]
    fn advance_identity_is_noop() {
        let d = dist(&[(100.0, 0.25), (200.0, 0.75)]);
        let t = TransitionModel::identity(vec![100.0, 200.0]).unwrap();
        assert_eq!(d.advance(&t).unwrap(), d);
    }

    #[test]
    fn advance_fixes_stationary_vector() {
        // Chain [[0.75, 0.25], [0.5, 0.5]]: stationary pi solves pi T = pi,
        // giving pi = (2/3, 1/3).
        let t = TransitionModel::new(
            vec![10.0, 20.0],
            vec![vec![0.75, 0.25], vec![0.5, 0.5]],
        )
        .unwrap();
        let pi = dist(&[(10.0, 2.0 / 3.0), (20.0, 1.0 / 3.0)]);
        let next = pi.advance(&t).unwrap();
        for ((_, p0), (_, p1)) in pi.iter().zip(next.iter()) {
            assert!((p0 - p1).abs() < 1e-12);
        }
    }

    #[test]
    fn advance_converges_to_stationary_mean() {
        let t = TransitionModel::new(
            vec![10.0, 20.0],
            vec![vec![0.75, 0.25], vec![0.5, 0.5]],
        )
        .unwrap();
        let d = dist(&[(10.0, 0.0), (20.0, 1.0)]);
        let evolved = d.advance_n(&t, 200).unwrap();
        let stationary_mean = 10.0 * 2.0 / 3.0 + 20.0 / 3.0;
        assert!((evolved.expectation() - stationary_mean).abs() < 1e-6);
    }

    #[test]
    fn advance_rejects_state_mismatch() {
        let t = TransitionModel::identity(vec![1.0, 2.0]).unwrap();
        let d = dist(&[(1.0, 0.5), (3.0, 0.5)]);
        assert!(matches!(d.advance(&t), Err(Error::Usage(_))));
    }

    #[test]
    fn product_distribution_examples() {
        let a = dist(&[(10.0, 0.5), (20.0, 0.5)]);
        let b = BucketedDistribution::point(3.0).unwrap();
        let s = BucketedDistribution::point(0.1).unwrap();
        let p = BucketedDistribution::product_distribution(&a, &b, &s).unwrap();
        let got: Vec<(f64, f64)> = p.iter().collect();
        assert_eq!(got.len(), 2);
        assert!((got[0].0 - 3.0).abs() < 1e-12 && (got[0].1 - 0.5).abs() < 1e-12);
        assert!((got[1].0 - 6.0).abs() < 1e-12 && (got[1].1 - 0.5).abs() < 1e-12);

        // All point masses.
        let p = BucketedDistribution::product_distribution(
            &BucketedDistribution::point(2.0).unwrap(),
            &BucketedDistribution::point(3.0).unwrap(),
            &BucketedDistribution::point(0.5).unwrap(),
        )
        .unwrap();
        assert!(p.is_point());
        assert_eq!(p.buckets()[0].rep, 3.0);
    }

    #[test]
    fn product_distribution_merges_equal_values() {
        let a = dist(&[(1.0, 0.5), (2.0, 0.5)]);
        let b = dist(&[(1.0, 0.5), (2.0, 0.5)]);
        let s = BucketedDistribution::point(1.0).unwrap();
        let p = BucketedDistribution::product_distribution(&a, &b, &s).unwrap();
        let got: Vec<(f64, f64)> = p.iter().collect();
        assert_eq!(got, vec![(1.0, 0.25), (2.0, 0.5), (4.0, 0.25)]);
    }

    #[test]
    fn product_mean_is_product_of_means() {
        let a = dist(&[(10.0, 0.25), (20.0, 0.5), (40.0, 0.25)]);
        let b = dist(&[(3.0, 0.5), (7.0, 0.5)]);
        let s = dist(&[(0.125, 0.5), (0.25, 0.5)]);
        let p = BucketedDistribution::product_distribution(&a, &b, &s).unwrap();
        let expect = a.expectation() * b.expectation() * s.expectation();
        assert!((p.expectation() - expect).abs() / expect < 1e-9);
    }

    #[test]
    fn rebucket_equal_probability_split() {
        let d = dist(&[(1.0, 0.25), (2.0, 0.25), (3.0, 0.25), (4.0, 0.25)]);
        let r = d.rebucket(2).unwrap();
        let got: Vec<(f64, f64)> = r.iter().collect();
        assert_eq!(got, vec![(1.5, 0.5), (3.5, 0.5)]);
    }

    #[test]
    fn rebucket_noop_and_errors() {
        let d = dist(&[(1.0, 0.5), (2.0, 0.5)]);
        assert_eq!(d.rebucket(2).unwrap(), d);
        assert_eq!(d.rebucket(10).unwrap(), d);
        assert!(matches!(d.rebucket(0), Err(Error::Usage(_))));
    }

    #[test]
    fn rebucket_is_idempotent() {
        let d = dist(&[
            (1.0, 0.1),
            (2.0, 0.3),
            (5.0, 0.2),
            (9.0, 0.15),
            (11.0, 0.25),
        ]);
        let once = d.rebucket(3).unwrap();
        let twice = once.rebucket(3).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn serde_round_trip_with_infinite_hi() {
        let d = dist(&[(700.0, 0.2), (2000.0, 0.8)]);
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"inf\""));
        let back: BucketedDistribution = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_dist(max_buckets: usize) -> impl Strategy<Value = BucketedDistribution> {
            prop::collection::vec((1u32..10_000, 1u32..100), 1..=max_buckets).prop_map(|raw| {
                let mut vals: Vec<u32> = raw.iter().map(|r| r.0).collect();
                vals.sort_unstable();
                vals.dedup();
                let total: f64 = raw[..vals.len()].iter().map(|r| r.1 as f64).sum();
                let pairs: Vec<(f64, f64)> = vals
                    .iter()
                    .zip(&raw)
                    .map(|(&v, r)| (v as f64, r.1 as f64 / total))
                    .collect();
                BucketedDistribution::from_weighted(&pairs).unwrap()
            })
        }

        proptest! {
            #[test]
            fn total_probability_is_one(d in arb_dist(12)) {
                let sum: f64 = d.iter().map(|(_, p)| p).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }

            #[test]
            fn rebucket_preserves_expectation(d in arb_dist(12), k in 1usize..8) {
                let r = d.rebucket(k).unwrap();
                prop_assert!(r.len() <= k);
                let e0 = d.expectation();
                let e1 = r.expectation();
                prop_assert!((e0 - e1).abs() <= 1e-9 * e0.abs().max(1.0));
                let sum: f64 = r.iter().map(|(_, p)| p).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }

            #[test]
            fn geq_starts_at_one_and_is_non_increasing(d in arb_dist(12)) {
                let t = d.prefix_tables(&[]).unwrap();
                let reps = d.reps();
                prop_assert!((t.geq(reps[0]).unwrap() - 1.0).abs() <= 1e-9);
                let vals: Vec<f64> = reps.iter().map(|&r| t.geq(r).unwrap()).collect();
                prop_assert!(vals.windows(2).all(|w| w[0] >= w[1] - 1e-12));
            }

            #[test]
            fn advance_preserves_total_probability(d in arb_dist(6), rows in prop::collection::vec(prop::collection::vec(1u32..10, 6), 6)) {
                let n = d.len();
                let matrix: Vec<Vec<f64>> = rows[..n].iter().map(|row| {
                    let total: f64 = row[..n].iter().map(|&x| x as f64).sum();
                    row[..n].iter().map(|&x| x as f64 / total).collect()
                }).collect();
                let t = TransitionModel::new(d.reps(), matrix).unwrap();
                let d1 = d.advance(&t).unwrap();
                let sum: f64 = d1.iter().map(|(_, p)| p).sum();
                prop_assert!((sum - 1.0).abs() <= 1e-9);
            }
        }
    }
}
