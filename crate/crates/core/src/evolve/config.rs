use serde::{Deserialize, Serialize};

use super::EvolveError;

/// Relative frequencies of the variation operators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationWeights {
    pub point_mutation: f64,
    pub subtree_replace: f64,
    pub insert_node: f64,
    pub delete_subtree: f64,
    pub constant_perturb: f64,
    pub crossover: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights {
            point_mutation: 1.0,
            subtree_replace: 0.5,
            insert_node: 1.0,
            delete_subtree: 0.7,
            constant_perturb: 1.0,
            crossover: 0.5,
        }
    }
}

impl MutationWeights {
    pub(crate) fn as_array(&self) -> [f64; 6] {
        [
            self.point_mutation,
            self.subtree_replace,
            self.insert_node,
            self.delete_subtree,
            self.constant_perturb,
            self.crossover,
        ]
    }
}

/// Numerical refitting of the constants of hall-of-fame entrants.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOptConfig {
    pub max_iters: usize,
    /// Extra starts from perturbed constants after the start at the current values.
    pub restarts: usize,
}

impl Default for ConstantOptConfig {
    fn default() -> Self {
        ConstantOptConfig {
            max_iters: 50,
            restarts: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolutionConfig {
    /// Outer rounds; each ends with a migration.
    pub iterations: usize,
    /// Number of islands.
    pub populations: usize,
    /// Worker threads. Results do not depend on this value.
    pub workers: usize,
    pub population_size: usize,
    /// Largest admissible node count.
    pub maxsize: usize,
    pub tournament_k: usize,
    /// Generations per island between migrations.
    pub migration_interval: usize,
    pub migration_fraction: f64,
    /// Fraction of each population copied unchanged into the next generation.
    pub elite_fraction: f64,
    pub mutation_weights: MutationWeights,
    pub constant_opt: ConstantOptConfig,
    pub rng_seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            iterations: 100,
            populations: 30,
            workers: 4,
            population_size: 64,
            maxsize: 18,
            tournament_k: 5,
            migration_interval: 10,
            migration_fraction: 0.1,
            elite_fraction: 0.1,
            mutation_weights: MutationWeights::default(),
            constant_opt: ConstantOptConfig::default(),
            rng_seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |field: &str, reason: &str| Err(EvolveError::Config(format!("{field}: {reason}")));
        if self.maxsize < 3 {
            return bad("maxsize", "must be at least 3");
        }
        if self.populations == 0 {
            return bad("populations", "must be at least 1");
        }
        if self.population_size < 2 {
            return bad("population_size", "must be at least 2");
        }
        if self.tournament_k == 0 {
            return bad("tournament_k", "must be at least 1");
        }
        if self.migration_interval == 0 {
            return bad("migration_interval", "must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.migration_fraction) {
            return bad("migration_fraction", "must lie in [0, 1]");
        }
        if !(0.0..1.0).contains(&self.elite_fraction) {
            return bad("elite_fraction", "must lie in [0, 1)");
        }
        let w = self.mutation_weights.as_array();
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return bad("mutation_weights", "must be finite and non-negative");
        }
        if w.iter().all(|x| *x == 0.0) {
            return bad("mutation_weights", "at least one must be positive");
        }
        Ok(())
    }
}
