//! Packing-sequence planners over a preference matrix.
//!
//! Maximum-consistency planning is a linear ordering problem with pair
//! weights `ln prob[i][k]`. Zero-probability pairs are tracked separately so
//! that candidates scoring `-inf` still compare by how many hard
//! violations they contain.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::ClassLabel;
use crate::preference::PreferenceMatrix;
use crate::scoring::{LogScore, PackingSequence};

pub const DEFAULT_EXACT_MAX_ITEMS: usize = 10;
/// Largest item count the exact planner accepts whatever the configured limit.
pub const EXACT_ITEMS_CEILING: usize = 20;
pub const DEFAULT_LOCAL_SEARCH_RESTARTS: usize = 8;

/// Relative slack under which two objectives count as tied.
const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlannerError {
    #[error("no items to plan")]
    NoItems,
    #[error("item `{0}` is listed more than once")]
    DuplicateItem(String),
    #[error("item `{0}` is not a class of the preference model")]
    UnknownItem(String),
    #[error("exact search handles at most {max} items, got {requested}; use greedy or local_search")]
    TooManyItems { requested: usize, max: usize },
    #[error("local search needs at least one restart")]
    NoRestarts,
    #[error("the llm method needs a chat provider; run it through the pipeline")]
    RequiresProvider,
    #[error("unknown planning method `{0}`")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Greedy,
    LocalSearch,
    Random,
    Llm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Exact, Method::Greedy, Method::LocalSearch, Method::Random, Method::Llm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Greedy => "greedy",
            Method::LocalSearch => "local_search",
            Method::Random => "random",
            Method::Llm => "llm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = PlannerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s || m.as_str().replace('_', "-") == s)
            .ok_or_else(|| PlannerError::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerLimits {
    pub exact_max_items: usize,
    pub local_search_restarts: usize,
}

impl Default for PlannerLimits {
    fn default() -> Self {
        Self {
            exact_max_items: DEFAULT_EXACT_MAX_ITEMS,
            local_search_restarts: DEFAULT_LOCAL_SEARCH_RESTARTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    items: Vec<ClassLabel>,
    pub method: Method,
    pub seed: Option<u64>,
    pub limits: PlannerLimits,
}

impl PlanRequest {
    pub fn new(items: Vec<ClassLabel>, method: Method) -> Result<Self, PlannerError> {
        check_items(&items)?;
        Ok(Self {
            items,
            method,
            seed: None,
            limits: PlannerLimits::default(),
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_limits(mut self, limits: PlannerLimits) -> Self {
        self.limits = limits;
        self
    }

    pub fn items(&self) -> &[ClassLabel] {
        &self.items
    }
}

fn check_items(items: &[ClassLabel]) -> Result<(), PlannerError> {
    if items.is_empty() {
        return Err(PlannerError::NoItems);
    }
    let mut seen = std::collections::HashSet::new();
    for item in items {
        if !seen.insert(item) {
            return Err(PlannerError::DuplicateItem(item.to_string()));
        }
    }
    Ok(())
}

/// Runs the non-LLM planner named by the request.
pub fn plan(request: &PlanRequest, m: &PreferenceMatrix) -> Result<PackingSequence, PlannerError> {
    let seed = request.seed.unwrap_or(0);
    match request.method {
        Method::Exact => plan_exact(&request.items, m, request.limits.exact_max_items),
        Method::Greedy => plan_greedy(&request.items, m),
        Method::LocalSearch => plan_local_search(&request.items, m, seed, request.limits.local_search_restarts),
        Method::Random => plan_random(&request.items, seed),
        Method::Llm => Err(PlannerError::RequiresProvider),
    }
}

/// Objective of an ordering: hard violations first, then the finite log sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Objective {
    pub zero_pairs: u32,
    pub log_sum: f64,
}

impl Objective {
    fn add(self, other: Objective) -> Objective {
        Objective {
            zero_pairs: self.zero_pairs + other.zero_pairs,
            log_sum: self.log_sum + other.log_sum,
        }
    }

    /// Strictly better beyond the tie tolerance.
    pub fn beats(&self, other: &Objective) -> bool {
        match self.zero_pairs.cmp(&other.zero_pairs) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.log_sum > other.log_sum + TIE_EPSILON * (1.0 + other.log_sum.abs()),
        }
    }

    pub fn score(&self) -> LogScore {
        if self.zero_pairs > 0 {
            LogScore::NegInfinity
        } else {
            LogScore::Finite(self.log_sum)
        }
    }
}

/// Pair weights restricted to the planned items, in local index space.
#[derive(Debug, Clone)]
pub struct PairTable {
    n: usize,
    weight: Vec<Objective>,
}

impl PairTable {
    pub fn new(indices: &[usize], m: &PreferenceMatrix) -> Self {
        let n = indices.len();
        let mut weight = vec![Objective::default(); n * n];
        for (a, &ca) in indices.iter().enumerate() {
            for (b, &cb) in indices.iter().enumerate() {
                if ca == cb {
                    continue;
                }
                let p = m.prob(ca, cb);
                weight[a * n + b] = if p <= 0.0 {
                    Objective { zero_pairs: 1, log_sum: 0.0 }
                } else {
                    Objective { zero_pairs: 0, log_sum: p.ln() }
                };
            }
        }
        Self { n, weight }
    }

    #[inline]
    fn w(&self, lower: usize, upper: usize) -> Objective {
        self.weight[lower * self.n + upper]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Objective of an order given in local indices.
    pub fn objective(&self, order: &[usize]) -> Objective {
        let mut total = Objective::default();
        for (p, &lower) in order.iter().enumerate() {
            for &upper in &order[p + 1..] {
                total = total.add(self.w(lower, upper));
            }
        }
        total
    }
}

/// Catalog indices of the items, sorted ascending.
fn resolve_sorted(items: &[ClassLabel], m: &PreferenceMatrix) -> Result<Vec<usize>, PlannerError> {
    check_items(items)?;
    let mut indices = items
        .iter()
        .map(|item| m.index_of(item).ok_or_else(|| PlannerError::UnknownItem(item.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    indices.sort_unstable();
    Ok(indices)
}

fn to_sequence(m: &PreferenceMatrix, indices: &[usize], local_order: &[usize]) -> PackingSequence {
    let global: Vec<usize> = local_order.iter().map(|&l| indices[l]).collect();
    PackingSequence::from_indices(m.catalog(), &global)
}

/// Brute-force maximum-consistency order.
///
/// Permutations are enumerated in lexicographic order of catalog indices and
/// only a strictly better candidate replaces the incumbent, so ties resolve to
/// the lexicographically smallest sequence.
pub fn plan_exact(items: &[ClassLabel], m: &PreferenceMatrix, max_items: usize) -> Result<PackingSequence, PlannerError> {
    let max_items = max_items.min(EXACT_ITEMS_CEILING);
    if items.len() > max_items {
        return Err(PlannerError::TooManyItems {
            requested: items.len(),
            max: max_items,
        });
    }
    let indices = resolve_sorted(items, m)?;
    let table = PairTable::new(&indices, m);
    let order = exact_order(&table);
    Ok(to_sequence(m, &indices, &order))
}

/// Optimal order over local indices by dynamic programming over item
/// subsets; ties go to the lexicographically smallest order.
pub fn exact_order(table: &PairTable) -> Vec<usize> {
    let n = table.len();
    let full = (1usize << n) - 1;
    // best[s]: optimal objective of the items in `s` stacked in some order
    let mut best = vec![Objective::default(); full + 1];
    for s in 1..=full {
        let mut acc: Option<Objective> = None;
        for x in members(s, n) {
            let candidate = base_gain(table, x, s).add(best[s & !(1 << x)]);
            if acc.as_ref().is_none_or(|a| candidate.beats(a)) {
                acc = Some(candidate);
            }
        }
        best[s] = acc.expect("non-empty subset");
    }

    let mut order = Vec::with_capacity(n);
    let mut s = full;
    while s != 0 {
        let x = members(s, n)
            .find(|&x| !best[s].beats(&base_gain(table, x, s).add(best[s & !(1 << x)])))
            .expect("an optimal choice exists");
        order.push(x);
        s &= !(1 << x);
    }
    order
}

fn members(s: usize, n: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |&x| s & (1 << x) != 0)
}

// Objective of placing `x` below every other member of `s`.
fn base_gain(table: &PairTable, x: usize, s: usize) -> Objective {
    members(s, table.len())
        .filter(|&y| y != x)
        .fold(Objective::default(), |acc, y| acc.add(table.w(x, y)))
}

/// Sorts items by their summed propensity to sit below the other items,
/// largest first; ties by catalog index.
pub fn plan_greedy(items: &[ClassLabel], m: &PreferenceMatrix) -> Result<PackingSequence, PlannerError> {
    let indices = resolve_sorted(items, m)?;
    let order = greedy_order(&indices, m);
    Ok(to_sequence(m, &indices, &order))
}

/// Greedy order in local indices; `indices` must be sorted ascending.
pub fn greedy_order(indices: &[usize], m: &PreferenceMatrix) -> Vec<usize> {
    let weights: Vec<f64> = indices
        .iter()
        .map(|&i| indices.iter().filter(|&&k| k != i).map(|&k| m.prob(i, k)).sum())
        .collect();
    let mut order: Vec<usize> = (0..indices.len()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order
}

/// Below-propensity weight of each item, in input order.
pub fn greedy_weights(items: &[ClassLabel], m: &PreferenceMatrix) -> Result<Vec<f64>, PlannerError> {
    let sorted = resolve_sorted(items, m)?;
    items
        .iter()
        .map(|item| {
            let i = m.index_of(item).ok_or_else(|| PlannerError::UnknownItem(item.to_string()))?;
            Ok(sorted.iter().filter(|&&k| k != i).map(|&k| m.prob(i, k)).sum())
        })
        .collect()
}

/// Best-insertion local search with restarts.
///
/// Restart 0 starts from the greedy order, restart `r >= 1` from a random
/// permutation drawn from stream `r` of the seeded generator. Restarts run in
/// parallel; the best result is picked in restart order.
pub fn plan_local_search(
    items: &[ClassLabel],
    m: &PreferenceMatrix,
    seed: u64,
    restarts: usize,
) -> Result<PackingSequence, PlannerError> {
    if restarts == 0 {
        return Err(PlannerError::NoRestarts);
    }
    let indices = resolve_sorted(items, m)?;
    let table = PairTable::new(&indices, m);
    let greedy = greedy_order(&indices, m);
    let order = local_search_order(&table, greedy, seed, restarts);
    Ok(to_sequence(m, &indices, &order))
}

pub fn local_search_order(table: &PairTable, greedy: Vec<usize>, seed: u64, restarts: usize) -> Vec<usize> {
    let n = table.len();
    let optima: Vec<(Objective, Vec<usize>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let start = if r == 0 {
                greedy.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(r as u64);
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng);
                perm
            };
            let order = insertion_descent(table, start);
            (table.objective(&order), order)
        })
        .collect();

    let mut best: Option<(Objective, Vec<usize>)> = None;
    for (objective, order) in optima {
        let better = match &best {
            None => true,
            Some((b, _)) => objective.beats(b),
        };
        if better {
            best = Some((objective, order));
        }
    }
    best.map(|(_, o)| o).unwrap_or_default()
}

#[derive(Debug, Clone, Copy)]
struct Delta {
    zero_pairs: i64,
    log_sum: f64,
}

impl Delta {
    fn improves(&self) -> bool {
        self.zero_pairs < 0 || (self.zero_pairs == 0 && self.log_sum > TIE_EPSILON)
    }

    fn beats(&self, other: &Delta) -> bool {
        match self.zero_pairs.cmp(&other.zero_pairs) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => self.log_sum > other.log_sum + TIE_EPSILON,
        }
    }

    // Effect of `lower` ending up below `upper` when it used to be above.
    fn flip(&mut self, now: Objective, before: Objective) {
        self.zero_pairs += i64::from(now.zero_pairs) - i64::from(before.zero_pairs);
        self.log_sum += now.log_sum - before.log_sum;
    }
}

/// Repeatedly applies the best improving insertion move until none remains.
fn insertion_descent(table: &PairTable, mut order: Vec<usize>) -> Vec<usize> {
    let n = order.len();
    loop {
        let mut best: Option<(Delta, usize, usize)> = None;
        for from in 0..n {
            let x = order[from];
            let mut consider = |delta: Delta, to: usize| {
                if best.as_ref().is_none_or(|(b, _, _)| delta.beats(b)) {
                    best = Some((delta, from, to));
                }
            };
            let mut delta = Delta { zero_pairs: 0, log_sum: 0.0 };
            for (to, &y) in order.iter().enumerate().skip(from + 1) {
                delta.flip(table.w(y, x), table.w(x, y));
                consider(delta, to);
            }
            let mut delta = Delta { zero_pairs: 0, log_sum: 0.0 };
            for to in (0..from).rev() {
                let y = order[to];
                delta.flip(table.w(x, y), table.w(y, x));
                consider(delta, to);
            }
        }
        match best {
            Some((delta, from, to)) if delta.improves() => {
                let x = order.remove(from);
                order.insert(to, x);
            }
            _ => return order,
        }
    }
}

/// Uniform random permutation of the items from a seeded generator.
pub fn plan_random(items: &[ClassLabel], seed: u64) -> Result<PackingSequence, PlannerError> {
    check_items(items)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shuffled = items.to_vec();
    shuffled.shuffle(&mut rng);
    Ok(PackingSequence::new(shuffled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::ClassCatalog;
    use crate::preference::MatrixOrigin;
    use crate::scoring::score;

    fn labels(names: &[&str]) -> Vec<ClassLabel> {
        names.iter().map(|n| ClassLabel::new(n).unwrap()).collect()
    }

    fn uniform(n: usize) -> PreferenceMatrix {
        let names: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let catalog = ClassCatalog::from_names(&names).unwrap();
        let rows = (0..n).map(|i| (0..n).map(|k| if i == k { 0.0 } else { 0.5 }).collect()).collect();
        PreferenceMatrix::from_probabilities(catalog, rows, MatrixOrigin::Built).unwrap()
    }

    fn strict_order(names: &[&str]) -> PreferenceMatrix {
        // names[0] must go lowest
        let n = names.len();
        let catalog = ClassCatalog::from_names(names).unwrap();
        let rows = (0..n)
            .map(|i| (0..n).map(|k| if i < k { 1.0 } else { 0.0 }).collect())
            .collect();
        PreferenceMatrix::from_probabilities(catalog, rows, MatrixOrigin::Built).unwrap()
    }

    #[test]
    fn single_item() {
        let m = uniform(3);
        let items = labels(&["c1"]);
        assert_eq!(plan_exact(&items, &m, 10).unwrap().items(), &items[..]);
        assert_eq!(plan_random(&items, 7).unwrap().items(), &items[..]);
    }

    #[test]
    fn uniform_matrix_ties_break_to_catalog_order() {
        let m = uniform(3);
        let items = labels(&["c2", "c0", "c1"]);
        let expected = labels(&["c0", "c1", "c2"]);
        assert_eq!(plan_exact(&items, &m, 10).unwrap().items(), &expected[..]);
        assert_eq!(plan_greedy(&items, &m).unwrap().items(), &expected[..]);
    }

    #[test]
    fn greedy_two_items() {
        let m = strict_order(&["b", "a"]);
        let seq = plan_greedy(&labels(&["a", "b"]), &m).unwrap();
        assert_eq!(seq.items(), &labels(&["b", "a"])[..]);
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for at in 0..=p.len() {
                let mut q = p.clone();
                q.insert(at, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn exact_matches_enumeration() {
        let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
        let catalog = ClassCatalog::from_names(&names).unwrap();
        let mut state = 0x9e37_79b9_7f4a_7c15_u64;
        for round in 0..20 {
            let mut rows = vec![vec![0.0; 6]; 6];
            for i in 0..6 {
                for k in i + 1..6 {
                    state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
                    let p = match (state >> 40) % 10 {
                        0 if round % 2 == 0 => 0.0,
                        v => v as f64 / 10.0,
                    };
                    rows[i][k] = p;
                    rows[k][i] = 1.0 - p;
                }
            }
            let m = PreferenceMatrix::from_probabilities(catalog.clone(), rows, MatrixOrigin::Built).unwrap();
            let table = PairTable::new(&[0, 1, 2, 3, 4, 5], &m);
            let mut perms = permutations(6);
            perms.sort();
            let mut best = perms[0].clone();
            for p in &perms {
                if table.objective(p).beats(&table.objective(&best)) {
                    best = p.clone();
                }
            }
            assert_eq!(exact_order(&table), best, "round {round}");
        }
    }

    #[test]
    fn exact_capacity_error() {
        let m = uniform(4);
        let err = plan_exact(&labels(&["c0", "c1", "c2", "c3"]), &m, 3).unwrap_err();
        assert_eq!(err, PlannerError::TooManyItems { requested: 4, max: 3 });
        let names: Vec<String> = (0..21).map(|i| format!("c{i}")).collect();
        let err = plan_exact(&labels(&names.iter().map(String::as_str).collect::<Vec<_>>()), &uniform(21), 100).unwrap_err();
        assert_eq!(err, PlannerError::TooManyItems { requested: 21, max: EXACT_ITEMS_CEILING });
    }

    #[test]
    fn rejects_bad_items() {
        let m = uniform(2);
        assert_eq!(plan_greedy(&[], &m).unwrap_err(), PlannerError::NoItems);
        assert_eq!(
            plan_greedy(&labels(&["c0", "c0"]), &m).unwrap_err(),
            PlannerError::DuplicateItem("c0".into())
        );
        assert_eq!(
            plan_greedy(&labels(&["kiwi"]), &m).unwrap_err(),
            PlannerError::UnknownItem("kiwi".into())
        );
        assert_eq!(plan_local_search(&labels(&["c0"]), &m, 0, 0).unwrap_err(), PlannerError::NoRestarts);
    }

    #[test]
    fn local_search_recovers_strict_order() {
        let names = ["f", "c", "a", "e", "b", "d", "g"];
        let m = strict_order(&names);
        let shuffled = labels(&["a", "b", "c", "d", "e", "f", "g"]);
        let seq = plan_local_search(&shuffled, &m, 3, 4).unwrap();
        assert_eq!(seq.items(), &labels(&names)[..]);
        assert!(score(&seq, &m).unwrap().value.is_finite());
    }

    #[test]
    fn random_is_reproducible() {
        let items = labels(&["a", "b", "c", "d", "e"]);
        assert_eq!(plan_random(&items, 42).unwrap(), plan_random(&items, 42).unwrap());
    }

    #[test]
    fn llm_method_needs_provider() {
        let req = PlanRequest::new(labels(&["c0"]), Method::Llm).unwrap();
        assert_eq!(plan(&req, &uniform(1)).unwrap_err(), PlannerError::RequiresProvider);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("local_search".parse::<Method>().unwrap(), Method::LocalSearch);
        assert_eq!("local-search".parse::<Method>().unwrap(), Method::LocalSearch);
        assert!("annealing".parse::<Method>().is_err());
    }

    #[test]
    fn objective_prefers_fewer_violations() {
        let one = Objective { zero_pairs: 1, log_sum: 0.0 };
        let none = Objective { zero_pairs: 0, log_sum: -100.0 };
        assert!(none.beats(&one));
        assert!(!one.beats(&none));
        assert_eq!(one.score(), LogScore::NegInfinity);
    }
}
