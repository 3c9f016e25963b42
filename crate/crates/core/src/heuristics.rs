//! Permutation-encoded genetic algorithm for the capacitated QAP.
//!
//! A chromosome is a task priority order. Decoding walks the order and puts
//! each task on the agent with room for it that adds the least to the
//! objective so far. Tasks that fit nowhere stay unassigned and are
//! penalized in the fitness.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cqap::{check_feasible, cqap_objective, AssignmentMatrix, CqapInstance};
use crate::error::{Error, Result};
use crate::types::SeedPolicy;

/// Fitness penalty per task the decoder could not place.
pub const UNASSIGNED_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub seed: SeedPolicy,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            tournament_size: 3,
            seed: SeedPolicy::new(0, 0),
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be at least 2".into()));
        }
        if self.tournament_size == 0 {
            return Err(Error::InvalidConfig("tournament size must be at least 1".into()));
        }
        for (name, p) in [("crossover", self.crossover_rate), ("mutation", self.mutation_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} rate {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// A permutation of `0..m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Chromosome(Vec<usize>);

impl Chromosome {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &t in &order {
            if t >= order.len() || std::mem::replace(&mut seen[t], true) {
                return Err(Error::InvalidConfig(format!("{order:?} is not a permutation")));
            }
        }
        Ok(Self(order))
    }

    pub fn random(m: usize, rng: &mut impl Rng) -> Self {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        Self(order)
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub assignment: AssignmentMatrix,
    /// Tasks no agent had room for.
    pub unassigned: Vec<usize>,
}

/// Greedy decode; ties in the marginal cost go to the lowest agent index.
pub fn decode(inst: &CqapInstance, chrom: &Chromosome) -> Result<Decoded> {
    let (n, m) = (inst.n_agents(), inst.n_tasks());
    if chrom.len() != m {
        return Err(Error::DimensionMismatch {
            context: "chromosome length",
            expected: m,
            found: chrom.len(),
        });
    }
    let f = inst.flow().matrix();
    let d = inst.distance().matrix();
    let c = inst.linear_cost().matrix();
    let u = inst.capacity();
    let dem = inst.demand();

    let mut load = vec![0u64; n];
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(m);
    let mut assignment = AssignmentMatrix::zeros(n, m);
    let mut unassigned = Vec::new();
    for &j in chrom.order() {
        let mut best: Option<(f64, usize)> = None;
        for i in 0..n {
            if load[i] + dem[j] as u64 > u[i] as u64 {
                continue;
            }
            let mut delta = c[[i, j]] + f[[i, i]] * d[[j, j]];
            for &(k, l) in &pairs {
                delta += f[[i, k]] * d[[j, l]] + f[[k, i]] * d[[l, j]];
            }
            if best.is_none_or(|(b, _)| delta < b) {
                best = Some((delta, i));
            }
        }
        match best {
            Some((_, i)) => {
                load[i] += dem[j] as u64;
                pairs.push((i, j));
                assignment.set(i, j, true);
            }
            None => unassigned.push(j),
        }
    }
    Ok(Decoded { assignment, unassigned })
}

/// Objective plus [`UNASSIGNED_PENALTY`] per unplaced task.
pub fn fitness(inst: &CqapInstance, decoded: &Decoded) -> Result<f64> {
    Ok(cqap_objective(inst, &decoded.assignment)? + UNASSIGNED_PENALTY * decoded.unassigned.len() as f64)
}

/// Order crossover: keeps a random slice of `a` in place and fills the rest
/// with the remaining genes in the order they appear in `b`, starting after
/// the slice.
pub fn order_crossover(a: &Chromosome, b: &Chromosome, rng: &mut impl Rng) -> Chromosome {
    let m = a.len();
    if m < 2 {
        return a.clone();
    }
    let mut lo = rng.random_range(0..m);
    let mut hi = rng.random_range(0..m);
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut child = vec![usize::MAX; m];
    let mut used = vec![false; m];
    for k in lo..=hi {
        child[k] = a.0[k];
        used[a.0[k]] = true;
    }
    let mut pos = (hi + 1) % m;
    for step in 0..m {
        let gene = b.0[(hi + 1 + step) % m];
        if used[gene] {
            continue;
        }
        child[pos] = gene;
        used[gene] = true;
        pos = (pos + 1) % m;
    }
    Chromosome(child)
}

/// Swaps two random positions.
pub fn swap_mutation(chrom: &mut Chromosome, rng: &mut impl Rng) {
    let m = chrom.len();
    if m < 2 {
        return;
    }
    let a = rng.random_range(0..m);
    let b = rng.random_range(0..m);
    chrom.0.swap(a, b);
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaResult {
    pub assignment: AssignmentMatrix,
    /// Unpenalized objective of `assignment`.
    pub objective: f64,
    pub fitness: f64,
    pub unassigned: Vec<usize>,
    pub feasible: bool,
    /// Best fitness after initialization and after every generation.
    pub history: Vec<f64>,
}

fn tournament<'p>(pop: &'p [(Chromosome, f64)], k: usize, rng: &mut ChaCha8Rng) -> &'p Chromosome {
    let mut best = rng.random_range(0..pop.len());
    for _ in 1..k {
        let other = rng.random_range(0..pop.len());
        if pop[other].1 < pop[best].1 || (pop[other].1 == pop[best].1 && other < best) {
            best = other;
        }
    }
    &pop[best].0
}

fn best_index(pop: &[(Chromosome, f64)]) -> usize {
    let mut best = 0;
    for (k, (_, fit)) in pop.iter().enumerate() {
        if *fit < pop[best].1 {
            best = k;
        }
    }
    best
}

/// Generational GA with tournament selection, order crossover, swap
/// mutation and single-elite survival. Deterministic for a fixed seed.
pub fn solve_ga(inst: &CqapInstance, config: &GaConfig) -> Result<GaResult> {
    config.validate()?;
    let m = inst.n_tasks();
    let mut rng = config.seed.rng();
    let evaluate = |c: Chromosome| -> Result<(Chromosome, f64)> {
        let fit = fitness(inst, &decode(inst, &c)?)?;
        Ok((c, fit))
    };

    let mut pop = (0..config.population)
        .map(|_| evaluate(Chromosome::random(m, &mut rng)))
        .collect::<Result<Vec<_>>>()?;
    let mut history = vec![pop[best_index(&pop)].1];

    for _ in 0..config.generations {
        let elite = pop[best_index(&pop)].clone();
        let mut next = Vec::with_capacity(config.population);
        next.push(elite);
        while next.len() < config.population {
            let a = tournament(&pop, config.tournament_size, &mut rng).clone();
            let b = tournament(&pop, config.tournament_size, &mut rng);
            let mut child = if rng.random::<f64>() < config.crossover_rate {
                order_crossover(&a, b, &mut rng)
            } else {
                a
            };
            if rng.random::<f64>() < config.mutation_rate {
                swap_mutation(&mut child, &mut rng);
            }
            next.push(evaluate(child)?);
        }
        pop = next;
        history.push(pop[best_index(&pop)].1);
    }

    let (best, fit) = pop.swap_remove(best_index(&pop));
    let decoded = decode(inst, &best)?;
    let objective = cqap_objective(inst, &decoded.assignment)?;
    let feasible = decoded.unassigned.is_empty() && check_feasible(inst, &decoded.assignment)?.ok;
    Ok(GaResult {
        assignment: decoded.assignment,
        objective,
        fitness: fit,
        unassigned: decoded.unassigned,
        feasible,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cqap::solve_exact_enum;
    use crate::cqap::test_support::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn is_permutation(c: &Chromosome) -> bool {
        Chromosome::new(c.order().to_vec()).is_ok()
    }

    #[test]
    fn chromosome_validation() {
        assert!(Chromosome::new(vec![2, 0, 1]).is_ok());
        assert!(Chromosome::new(vec![0, 0, 1]).is_err());
        assert!(Chromosome::new(vec![0, 3]).is_err());
    }

    #[test]
    fn order_crossover_known_cut() {
        // Slice [2..=3] of a is kept; b fills from position 4 onward.
        let a = Chromosome::new(vec![0, 1, 2, 3, 4, 5]).unwrap();
        let b = Chromosome::new(vec![5, 4, 3, 2, 1, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let child = order_crossover(&a, &b, &mut rng);
            assert!(is_permutation(&child));
        }
        assert_eq!(order_crossover(&a, &a, &mut rng), a);
    }

    #[test]
    fn decoded_assignments_are_feasible_or_flagged() {
        for seed in 0..30 {
            let inst = random_instance(seed, 4, 6);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let dec = decode(&inst, &Chromosome::random(6, &mut rng)).unwrap();
                let ok = check_feasible(&inst, &dec.assignment).unwrap().ok;
                assert!(ok || !dec.unassigned.is_empty());
                // Each task goes to at most one agent.
                for j in 0..6 {
                    assert!((0..4).filter(|&i| dec.assignment.get(i, j)).count() <= 1);
                }
            }
        }
    }

    #[test]
    fn decode_rejects_wrong_length() {
        let inst = random_instance(0, 2, 3);
        assert!(decode(&inst, &Chromosome::new(vec![0, 1]).unwrap()).is_err());
    }

    #[test]
    fn history_is_monotone_and_runs_are_reproducible() {
        let inst = random_instance(9, 5, 6);
        let config = GaConfig {
            population: 30,
            generations: 40,
            seed: SeedPolicy::new(5, 1),
            ..Default::default()
        };
        let a = solve_ga(&inst, &config).unwrap();
        assert_eq!(a.history.len(), 41);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*a.history.last().unwrap(), a.fitness);
        assert_eq!(a, solve_ga(&inst, &config).unwrap());
    }

    #[test]
    fn small_instances_reach_the_optimum() {
        let mut hits = 0;
        let mut total = 0;
        for seed in 0..10 {
            let inst = random_instance(seed, 3, 3);
            let Ok(exact) = solve_exact_enum(&inst, 1_000_000) else {
                continue;
            };
            total += 1;
            let ga = solve_ga(&inst, &GaConfig::default()).unwrap();
            assert!(ga.objective >= exact.objective - 1e-9 || !ga.feasible);
            if ga.feasible && ga.objective <= exact.objective * 1.01 {
                hits += 1;
            }
        }
        assert!(total > 0 && hits * 10 >= total * 7, "{hits}/{total}");
    }

    #[test]
    fn config_validation() {
        let inst = random_instance(0, 2, 2);
        for bad in [
            GaConfig { population: 1, ..Default::default() },
            GaConfig { tournament_size: 0, ..Default::default() },
            GaConfig { mutation_rate: 1.5, ..Default::default() },
        ] {
            assert!(solve_ga(&inst, &bad).is_err());
        }
    }

    proptest! {
        #[test]
        fn operators_preserve_permutations(seed in any::<u64>(), m in 1usize..30) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut a = Chromosome::random(m, &mut rng);
            let b = Chromosome::random(m, &mut rng);
            for _ in 0..100 {
                let mut child = order_crossover(&a, &b, &mut rng);
                swap_mutation(&mut child, &mut rng);
                prop_assert!(is_permutation(&child));
                a = child;
            }
        }
    }
}
