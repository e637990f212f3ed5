//! Route optimization for a single sensor.
//!
//! The problem is an open-path ("delivery") travelling salesman: start at the
//! sensor's position, visit every assigned point exactly once, no return leg.
//! Chromosomes are permutations of point ids. The genetic algorithm uses
//! tournament selection, cycle crossover, swap mutation and elitism, and
//! records the best-ever length after each generation. A child identical to
//! one already admitted to the next generation is swap-mutated again (up to
//! a bounded number of tries), which keeps the population from collapsing
//! onto copies of the elite.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::campaign::{euclidean_distance, MeasurementPoint, Point2D, Route};
use crate::rng::{seeded, SimRng};

/// Perturbation attempts for a child that already exists in the next
/// generation before it is admitted anyway.
const DUPLICATE_RETRIES: usize = 20;

/// Largest instance `brute_force_route` accepts.
pub const BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouteError {
    #[error("EmptyPointSet: no points to route")]
    EmptyPointSet,
    #[error("TooManyPoints: {0} points exceeds the exhaustive-search limit of {BRUTE_FORCE_LIMIT}")]
    TooManyPoints(usize),
    #[error("MismatchedIdSets: parents are not permutations of the same id set")]
    MismatchedIdSets,
    #[error("InvalidParams: {0}")]
    InvalidParams(String),
    #[error("DuplicateVisit: point {0} appears more than once")]
    DuplicateVisit(u32),
    #[error("UnknownPoint: {0}")]
    UnknownPoint(u32),
}

impl RouteError {
    pub fn name(&self) -> &'static str {
        match self {
            RouteError::EmptyPointSet => "EmptyPointSet",
            RouteError::TooManyPoints(_) => "TooManyPoints",
            RouteError::MismatchedIdSets => "MismatchedIdSets",
            RouteError::InvalidParams(_) => "InvalidParams",
            RouteError::DuplicateVisit(_) => "DuplicateVisit",
            RouteError::UnknownPoint(_) => "UnknownPoint",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaParams {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    /// Per-position swap probability.
    pub mutation_rate: f64,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population_size: 1000,
            generations: 500,
            crossover_rate: 0.9,
            mutation_rate: 0.005,
            elite_count: 2,
            tournament_size: 20,
            seed: 0,
        }
    }
}

impl GaParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), RouteError> {
        let bad = |m: String| Err(RouteError::InvalidParams(m));
        if self.population_size < 2 {
            return bad(format!("population_size must be >= 2, got {}", self.population_size));
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad(format!("crossover_rate must be in [0, 1], got {}", self.crossover_rate));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad(format!("mutation_rate must be in [0, 1], got {}", self.mutation_rate));
        }
        if self.elite_count >= self.population_size {
            return bad(format!(
                "elite_count ({}) must be below population_size ({})",
                self.elite_count, self.population_size
            ));
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be >= 1".into());
        }
        Ok(())
    }
}

/// A candidate visiting order and its path length.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub order: Vec<u32>,
    pub length: f64,
}

/// Best-ever path length after each generation; entry `g - 1` is the value
/// after generation `g`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub best_length: Vec<f64>,
}

impl ConvergenceTrace {
    /// Best length after `generation` (1-based).
    pub fn at_generation(&self, generation: usize) -> Option<f64> {
        generation.checked_sub(1).and_then(|i| self.best_length.get(i).copied())
    }

    /// CSV with header `generation,best_length_m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generation,best_length_m\n");
        for (i, l) in self.best_length.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, l));
        }
        out
    }
}

/// Fitness of a path: `1 / (1 + length)`. Strictly decreasing in length.
pub fn fitness(length: f64) -> f64 {
    1.0 / (1.0 + length)
}

/// Distance tables for one routing instance. Indices refer to `points`.
pub struct RouteProblem<'a> {
    start: Point2D,
    points: &'a [MeasurementPoint],
    from_start: Vec<f64>,
    dist: Vec<f64>,
    index_of: HashMap<u32, usize>,
}

impl<'a> RouteProblem<'a> {
    pub fn new(start: Point2D, points: &'a [MeasurementPoint]) -> Result<Self, RouteError> {
        let n = points.len();
        let mut index_of = HashMap::with_capacity(n);
        for (i, p) in points.iter().enumerate() {
            if index_of.insert(p.id, i).is_some() {
                return Err(RouteError::DuplicateVisit(p.id));
            }
        }
        let from_start = points.iter().map(|p| euclidean_distance(start, p.position)).collect();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = euclidean_distance(points[i].position, points[j].position);
            }
        }
        Ok(Self { start, points, from_start, dist, index_of })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Length of an order given as indices into `points`. Legs are summed
    /// left to right, matching `path_length`.
    fn indexed_length(&self, order: &[usize]) -> f64 {
        let n = self.points.len();
        let Some(&first) = order.first() else {
            return 0.0;
        };
        let mut total = self.from_start[first];
        for w in order.windows(2) {
            total += self.dist[w[0] * n + w[1]];
        }
        total
    }

    fn to_indices(&self, order: &[u32]) -> Result<Vec<usize>, RouteError> {
        if order.len() != self.points.len() {
            return Err(RouteError::MismatchedIdSets);
        }
        let mut seen = vec![false; self.points.len()];
        order
            .iter()
            .map(|id| {
                let i = *self.index_of.get(id).ok_or(RouteError::UnknownPoint(*id))?;
                if std::mem::replace(&mut seen[i], true) {
                    return Err(RouteError::DuplicateVisit(*id));
                }
                Ok(i)
            })
            .collect()
    }

    fn to_ids(&self, order: &[usize]) -> Vec<u32> {
        order.iter().map(|&i| self.points[i].id).collect()
    }

    /// Builds an individual from an id order, checking it is a permutation
    /// of this instance's points.
    pub fn individual(&self, order: Vec<u32>) -> Result<Individual, RouteError> {
        let idx = self.to_indices(&order)?;
        Ok(Individual { length: self.indexed_length(&idx), order })
    }

    pub fn route(&self, ind: &Individual) -> Route {
        Route { start: self.start, order: ind.order.clone(), length: ind.length }
    }

    pub fn cycle_crossover(
        &self,
        p1: &Individual,
        p2: &Individual,
    ) -> Result<(Individual, Individual), RouteError> {
        let (c1, c2) = cycle_crossover(&p1.order, &p2.order)?;
        Ok((self.individual(c1)?, self.individual(c2)?))
    }

    pub fn mutate(&self, ind: &Individual, rate: f64, rng: &mut SimRng) -> Individual {
        let mut order = ind.order.clone();
        swap_mutate(&mut order, rate, rng);
        let idx = self.to_indices(&order).expect("swap mutation preserves the permutation");
        Individual { length: self.indexed_length(&idx), order }
    }
}

/// Cycle crossover.
///
/// Positions are partitioned into the cycles of the two parents, starting
/// from position 0. Child 1 takes odd-numbered cycles (first, third, ...)
/// from `p1` and the rest from `p2`; child 2 is the mirror image.
pub fn cycle_crossover<T>(p1: &[T], p2: &[T]) -> Result<(Vec<T>, Vec<T>), RouteError>
where
    T: Copy + Eq + std::hash::Hash,
{
    if p1.len() != p2.len() {
        return Err(RouteError::MismatchedIdSets);
    }
    let pos_in_p1: HashMap<T, usize> = p1.iter().enumerate().map(|(i, v)| (*v, i)).collect();
    if pos_in_p1.len() != p1.len() {
        return Err(RouteError::MismatchedIdSets);
    }
    let mut from_p2 = Vec::with_capacity(p2.len());
    for v in p2 {
        from_p2.push(*pos_in_p1.get(v).ok_or(RouteError::MismatchedIdSets)?);
    }
    let mask = cycle_mask(&from_p2);
    Ok(apply_mask(p1, p2, &mask))
}

/// `next[i]` is the p1-position of the allele p2 holds at position `i`.
/// Returns, per position, whether child 1 takes it from p1.
fn cycle_mask(next: &[usize]) -> Vec<bool> {
    let n = next.len();
    let mut assigned = vec![false; n];
    let mut take_p1 = vec![false; n];
    let mut from_first = true;
    for start in 0..n {
        if assigned[start] {
            continue;
        }
        let mut i = start;
        while !assigned[i] {
            assigned[i] = true;
            take_p1[i] = from_first;
            i = next[i];
        }
        from_first = !from_first;
    }
    take_p1
}

fn apply_mask<T: Copy>(p1: &[T], p2: &[T], take_p1: &[bool]) -> (Vec<T>, Vec<T>) {
    let c1 = (0..p1.len()).map(|i| if take_p1[i] { p1[i] } else { p2[i] }).collect();
    let c2 = (0..p1.len()).map(|i| if take_p1[i] { p2[i] } else { p1[i] }).collect();
    (c1, c2)
}

/// Swap mutation. Each position, with probability `rate`, is exchanged with
/// a uniformly chosen other position. A position already moved by an
/// earlier swap in the same pass is left alone, so `rate = 1` on two
/// elements swaps them exactly once.
pub fn swap_mutate<T, R: Rng + ?Sized>(order: &mut [T], rate: f64, rng: &mut R) {
    let n = order.len();
    if n < 2 || rate <= 0.0 {
        return;
    }
    let mut moved = vec![false; n];
    for i in 0..n {
        if moved[i] || !rng.gen_bool(rate.min(1.0)) {
            continue;
        }
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        order.swap(i, j);
        moved[i] = true;
        moved[j] = true;
    }
}

#[derive(Clone)]
struct Tour {
    order: Vec<usize>,
    length: f64,
}

fn tournament<'p>(pop: &'p [Tour], size: usize, rng: &mut SimRng) -> &'p Tour {
    let mut best = &pop[rng.gen_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.gen_range(0..pop.len())];
        if fitness(c.length) > fitness(best.length) {
            best = c;
        }
    }
    best
}

/// Orders `points` into a short open path from `start` with a genetic
/// algorithm. Returns the best individual ever seen and the per-generation
/// convergence trace (`params.generations` entries).
pub fn optimize_route(
    start: Point2D,
    points: &[MeasurementPoint],
    params: &GaParams,
) -> Result<(Route, ConvergenceTrace), RouteError> {
    params.validate()?;
    if points.is_empty() {
        return Err(RouteError::EmptyPointSet);
    }
    let problem = RouteProblem::new(start, points)?;
    let n = problem.len();
    let mut rng = seeded(params.seed);

    let mut pop: Vec<Tour> = (0..params.population_size)
        .map(|_| {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let length = problem.indexed_length(&order);
            Tour { order, length }
        })
        .collect();

    let mut best = pop
        .iter()
        .min_by(|a, b| a.length.total_cmp(&b.length))
        .cloned()
        .expect("population is non-empty");
    let mut trace = ConvergenceTrace { best_length: Vec::with_capacity(params.generations) };
    let mut ranking: Vec<usize> = (0..pop.len()).collect();
    let mut pos_scratch = vec![0usize; n];
    let mut next_scratch = vec![0usize; n];

    for _ in 0..params.generations {
        ranking.sort_by(|&a, &b| pop[a].length.total_cmp(&pop[b].length).then(a.cmp(&b)));
        let mut next: Vec<Tour> = Vec::with_capacity(params.population_size);
        next.extend(ranking.iter().take(params.elite_count).map(|&i| pop[i].clone()));
        let mut seen: HashSet<Vec<usize>> = next.iter().map(|t| t.order.clone()).collect();

        while next.len() < params.population_size {
            let a = tournament(&pop, params.tournament_size, &mut rng);
            let b = tournament(&pop, params.tournament_size, &mut rng);
            let (mut c1, mut c2) = if rng.gen_bool(params.crossover_rate) {
                for (i, &v) in a.order.iter().enumerate() {
                    pos_scratch[v] = i;
                }
                for (i, &v) in b.order.iter().enumerate() {
                    next_scratch[i] = pos_scratch[v];
                }
                apply_mask(&a.order, &b.order, &cycle_mask(&next_scratch))
            } else {
                (a.order.clone(), b.order.clone())
            };
            swap_mutate(&mut c1, params.mutation_rate, &mut rng);
            swap_mutate(&mut c2, params.mutation_rate, &mut rng);
            for mut order in [c1, c2] {
                if next.len() == params.population_size {
                    break;
                }
                let mut tries = 0;
                while tries < DUPLICATE_RETRIES && seen.contains(&order) {
                    swap_mutate(&mut order, 1.0 / n as f64, &mut rng);
                    tries += 1;
                }
                seen.insert(order.clone());
                let length = problem.indexed_length(&order);
                next.push(Tour { order, length });
            }
        }
        pop = next;

        for t in &pop {
            if t.length < best.length {
                best = t.clone();
            }
        }
        trace.best_length.push(best.length);
    }

    let ind = Individual { order: problem.to_ids(&best.order), length: best.length };
    Ok((problem.route(&ind), trace))
}

/// Exhaustive optimum for up to [`BRUTE_FORCE_LIMIT`] points.
///
/// Candidates are explored depth-first in ascending id order, and only a
/// strictly shorter path replaces the incumbent, so among equal-length
/// optima the lexicographically smallest id sequence is returned.
pub fn brute_force_route(start: Point2D, points: &[MeasurementPoint]) -> Result<Route, RouteError> {
    if points.is_empty() {
        return Err(RouteError::EmptyPointSet);
    }
    if points.len() > BRUTE_FORCE_LIMIT {
        return Err(RouteError::TooManyPoints(points.len()));
    }
    let problem = RouteProblem::new(start, points)?;
    let n = problem.len();
    let mut by_id: Vec<usize> = (0..n).collect();
    by_id.sort_by_key(|&i| points[i].id);

    struct Search<'s, 'p> {
        problem: &'s RouteProblem<'p>,
        by_id: Vec<usize>,
        used: Vec<bool>,
        current: Vec<usize>,
        best: Vec<usize>,
        best_len: f64,
    }

    impl Search<'_, '_> {
        fn go(&mut self, partial: f64) {
            if partial > self.best_len {
                return;
            }
            let n = self.by_id.len();
            if self.current.len() == n {
                if partial < self.best_len {
                    self.best_len = partial;
                    self.best.clone_from(&self.current);
                }
                return;
            }
            for k in 0..n {
                let i = self.by_id[k];
                if self.used[i] {
                    continue;
                }
                let leg = match self.current.last() {
                    None => self.problem.from_start[i],
                    Some(&prev) => self.problem.dist[prev * n + i],
                };
                self.used[i] = true;
                self.current.push(i);
                self.go(partial + leg);
                self.current.pop();
                self.used[i] = false;
            }
        }
    }

    let mut search = Search {
        problem: &problem,
        by_id,
        used: vec![false; n],
        current: Vec::with_capacity(n),
        best: Vec::new(),
        best_len: f64::INFINITY,
    };
    search.go(0.0);
    let ind = Individual { order: problem.to_ids(&search.best), length: search.best_len };
    Ok(problem.route(&ind))
}
