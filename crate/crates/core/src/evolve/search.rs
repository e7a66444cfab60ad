use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::EvolutionConfig;
use super::constants::optimize_constants;
use super::hall::HallOfFame;
use super::variation::Variation;
use super::EvolveError;
use crate::data::Dataset;
use crate::expr::Expr;
use crate::fitness::{FitnessContext, FitnessReport, InvalidReason};
use crate::skills::Skill;

const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub expr: Expr,
    pub report: FitnessReport,
}

/// Evaluation counts by outcome.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationCounts {
    pub valid: u64,
    pub non_finite_stress: u64,
    pub non_finite_constraint: u64,
}

impl EvaluationCounts {
    fn record(&mut self, r: &FitnessReport) {
        match r.invalid_reason {
            None if r.valid => self.valid += 1,
            Some(InvalidReason::NonFiniteStress) => self.non_finite_stress += 1,
            _ => self.non_finite_constraint += 1,
        }
    }

    fn add(&mut self, o: &EvaluationCounts) {
        self.valid += o.valid;
        self.non_finite_stress += o.non_finite_stress;
        self.non_finite_constraint += o.non_finite_constraint;
    }

    pub fn total(&self) -> u64 {
        self.valid + self.non_finite_stress + self.non_finite_constraint
    }

    /// Most frequent failure, if any evaluation failed.
    pub fn dominant_failure(&self) -> Option<InvalidReason> {
        if self.non_finite_stress == 0 && self.non_finite_constraint == 0 {
            None
        } else if self.non_finite_stress >= self.non_finite_constraint {
            Some(InvalidReason::NonFiniteStress)
        } else {
            Some(InvalidReason::NonFiniteConstraint)
        }
    }
}

struct Island {
    population: Vec<Individual>,
    rng: ChaCha8Rng,
    hall: HallOfFame,
    counts: EvaluationCounts,
}

/// Shared immutable inputs of one search.
struct Env<'a> {
    ctx: &'a FitnessContext,
    variation: &'a Variation,
    config: &'a EvolutionConfig,
}

impl Env<'_> {
    fn evaluate(&self, expr: Expr, island: &mut Island) -> Individual {
        let report = self.ctx.evaluate_unchecked(&expr);
        island.counts.record(&report);
        let mut ind = Individual { expr, report };
        if island.hall.insert(&ind.expr, &ind.report) {
            let (e, r) = optimize_constants(&ind.expr, &ind.report, self.ctx, &self.config.constant_opt, &mut island.rng);
            if r.composite < ind.report.composite {
                island.hall.insert(&e, &r);
                ind = Individual { expr: e, report: r };
            }
        }
        ind
    }

    fn tournament<'p>(&self, pop: &'p [Individual], rng: &mut ChaCha8Rng) -> &'p Individual {
        let mut best = rng.random_range(0..pop.len());
        for _ in 1..self.config.tournament_k {
            let i = rng.random_range(0..pop.len());
            if pop[i].report.composite < pop[best].report.composite || (pop[i].report.composite == pop[best].report.composite && i < best) {
                best = i;
            }
        }
        &pop[best]
    }

    fn generation(&self, island: &mut Island) {
        let n = self.config.population_size;
        sort_population(&mut island.population);
        let elites = ((self.config.elite_fraction * n as f64).ceil() as usize).min(n);
        let parents = std::mem::take(&mut island.population);
        let mut next: Vec<Individual> = parents[..elites.min(parents.len())].to_vec();
        let w = self.config.mutation_weights.as_array();
        let total: f64 = w.iter().sum();
        let p_cross = if total > 0.0 { w[5] / total } else { 0.0 };
        while next.len() < n {
            if p_cross > 0.0 && island.rng.random_bool(p_cross) {
                let a = self.tournament(&parents, &mut island.rng).expr.clone();
                let b = self.tournament(&parents, &mut island.rng).expr.clone();
                let (c1, c2) = self.variation.crossover(&a, &b, &mut island.rng);
                for c in [c1, c2] {
                    if next.len() < n {
                        let c = c.simplify();
                        debug_assert!(self.variation.is_admissible(&c), "{c}");
                        next.push(self.evaluate(c, island));
                    }
                }
            } else {
                let p = self.tournament(&parents, &mut island.rng).expr.clone();
                let c = self.variation.mutate(&p, &mut island.rng);
                debug_assert!(self.variation.is_admissible(&c), "{c}");
                next.push(self.evaluate(c, island));
            }
        }
        island.population = next;
    }

    fn seed_island(&self, index: usize) -> Island {
        let mut rng = island_rng(self.config.rng_seed, index);
        let mut island = Island {
            population: Vec::with_capacity(self.config.population_size),
            rng: rng.clone(),
            hall: HallOfFame::new(),
            counts: EvaluationCounts::default(),
        };
        let trees: Vec<Expr> = (0..self.config.population_size)
            .map(|_| {
                let budget = rng.random_range(1..=self.config.maxsize);
                self.variation.random_tree(budget, &mut rng).simplify()
            })
            .collect();
        island.rng = rng;
        for t in trees {
            let ind = self.evaluate(t, &mut island);
            island.population.push(ind);
        }
        island
    }
}

fn island_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Ascending composite; stable, so earlier individuals win ties.
fn sort_population(pop: &mut [Individual]) {
    pop.sort_by(|a, b| a.report.composite.total_cmp(&b.report.composite));
}

/// Ring migration: each island's best `fraction` (at most half of either
/// island) replaces the worst of the next island. Sizes are unchanged.
pub fn migrate(populations: &mut [Vec<Individual>], fraction: f64) {
    let p = populations.len();
    if p < 2 {
        return;
    }
    let emigrants: Vec<Vec<Individual>> = populations
        .iter_mut()
        .map(|pop| {
            sort_population(pop);
            let k = ((fraction * pop.len() as f64).ceil() as usize).min(pop.len() / 2);
            pop[..k].to_vec()
        })
        .collect();
    for (i, group) in emigrants.into_iter().enumerate() {
        let dest = &mut populations[(i + 1) % p];
        let len = dest.len();
        for (j, ind) in group.into_iter().take(len / 2).enumerate() {
            dest[len - 1 - j] = ind;
        }
    }
}

/// Result of a completed search.
#[derive(Clone, Debug)]
pub struct DiscoveryOutcome {
    pub hall: HallOfFame,
    /// Best composite in the global hall after each round.
    pub history: Vec<f64>,
    pub counts: EvaluationCounts,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IslandState {
    population: Vec<Expr>,
    hall: Vec<Expr>,
    rng: ChaCha8Rng,
    counts: EvaluationCounts,
}

/// Resumable search state. Only expressions are stored; reports are
/// recomputed on load against the same skill and data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    version: u32,
    skill: String,
    train_points: usize,
    config: EvolutionConfig,
    round: usize,
    history: Vec<f64>,
    hall: Vec<Expr>,
    islands: Vec<IslandState>,
}

impl Checkpoint {
    pub fn round(&self) -> usize {
        self.round
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    pub fn save(&self, path: &Path) -> Result<(), EvolveError> {
        let text = serde_json::to_string(self).map_err(|e| EvolveError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| EvolveError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Checkpoint, EvolveError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvolveError::Checkpoint(format!("{}: {e}", path.display())))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| EvolveError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(EvolveError::Checkpoint(format!("unsupported checkpoint version {}", c.version)));
        }
        Ok(c)
    }
}

/// Island-model search that can be advanced round by round.
pub struct Search {
    ctx: FitnessContext,
    config: EvolutionConfig,
    variation: Variation,
    islands: Vec<Island>,
    hall: HallOfFame,
    round: usize,
    history: Vec<f64>,
    pool: rayon::ThreadPool,
}

fn hall_from_exprs(exprs: &[Expr], ctx: &FitnessContext) -> HallOfFame {
    let mut h = HallOfFame::new();
    for e in exprs {
        h.insert(e, &ctx.evaluate_unchecked(e));
    }
    h
}

impl Search {
    pub fn new(skill: &Skill, train: &[Dataset], config: EvolutionConfig) -> Result<Search, EvolveError> {
        let ctx = FitnessContext::from_skill(skill, train)?;
        Search::with_context(ctx, config)
    }

    /// Search against a prepared context (custom penalty weights).
    pub fn with_context(ctx: FitnessContext, config: EvolutionConfig) -> Result<Search, EvolveError> {
        config.validate()?;
        if ctx.point_count() == 0 {
            return Err(EvolveError::Fitness(crate::fitness::FitnessError::NoData));
        }
        let variation = Variation::new(ctx.skill(), config.maxsize, config.mutation_weights);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.max(1))
            .build()
            .map_err(|e| EvolveError::Config(format!("workers: {e}")))?;
        let islands = {
            let env = Env {
                ctx: &ctx,
                variation: &variation,
                config: &config,
            };
            pool.install(|| (0..config.populations).into_par_iter().map(|i| env.seed_island(i)).collect::<Vec<_>>())
        };
        let mut s = Search {
            ctx,
            config,
            variation,
            islands,
            hall: HallOfFame::new(),
            round: 0,
            history: Vec::new(),
            pool,
        };
        s.merge_halls();
        Ok(s)
    }

    /// Restores a checkpoint written by [`checkpoint`](Self::checkpoint).
    pub fn resume(checkpoint: Checkpoint, skill: &Skill, train: &[Dataset]) -> Result<Search, EvolveError> {
        let ctx = FitnessContext::from_skill(skill, train)?;
        if checkpoint.skill != skill.name || checkpoint.train_points != ctx.point_count() {
            return Err(EvolveError::Checkpoint("checkpoint was written for a different skill or training set".into()));
        }
        let config = checkpoint.config;
        config.validate()?;
        let variation = Variation::new(ctx.skill(), config.maxsize, config.mutation_weights);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.max(1))
            .build()
            .map_err(|e| EvolveError::Config(format!("workers: {e}")))?;
        for e in checkpoint.islands.iter().flat_map(|i| i.population.iter().chain(&i.hall)) {
            if !variation.is_admissible(e) {
                return Err(EvolveError::Checkpoint(format!("expression `{e}` violates the skill")));
            }
        }
        let islands = checkpoint
            .islands
            .into_iter()
            .map(|st| Island {
                population: st
                    .population
                    .into_iter()
                    .map(|expr| Individual {
                        report: ctx.evaluate_unchecked(&expr),
                        expr,
                    })
                    .collect(),
                hall: hall_from_exprs(&st.hall, &ctx),
                rng: st.rng,
                counts: st.counts,
            })
            .collect();
        let hall = hall_from_exprs(&checkpoint.hall, &ctx);
        Ok(Search {
            ctx,
            config,
            variation,
            islands,
            hall,
            round: checkpoint.round,
            history: checkpoint.history,
            pool,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let exprs = |h: &HallOfFame| h.entries().map(|(_, e)| e.expr.clone()).collect::<Vec<_>>();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            skill: self.ctx.skill().name.clone(),
            train_points: self.ctx.point_count(),
            config: self.config.clone(),
            round: self.round,
            history: self.history.clone(),
            hall: exprs(&self.hall),
            islands: self
                .islands
                .iter()
                .map(|i| IslandState {
                    population: i.population.iter().map(|p| p.expr.clone()).collect(),
                    hall: exprs(&i.hall),
                    rng: i.rng.clone(),
                    counts: i.counts,
                })
                .collect(),
        }
    }

    fn merge_halls(&mut self) {
        for island in &self.islands {
            self.hall.merge(&island.hall);
        }
    }

    /// Runs one round: `migration_interval` generations per island, then
    /// migration and hall merge.
    pub fn step(&mut self) {
        let env = Env {
            ctx: &self.ctx,
            variation: &self.variation,
            config: &self.config,
        };
        let gens = self.config.migration_interval;
        let islands = &mut self.islands;
        self.pool.install(|| {
            islands.par_iter_mut().for_each(|island| {
                for _ in 0..gens {
                    env.generation(island);
                }
            })
        });
        let mut pops: Vec<Vec<Individual>> = self.islands.iter_mut().map(|i| std::mem::take(&mut i.population)).collect();
        migrate(&mut pops, self.config.migration_fraction);
        for (island, pop) in self.islands.iter_mut().zip(pops) {
            island.population = pop;
        }
        self.merge_halls();
        self.round += 1;
        self.history.push(self.hall.best().map_or(f64::INFINITY, |e| e.report.composite));
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.config.iterations
    }

    pub fn hall(&self) -> &HallOfFame {
        &self.hall
    }

    pub fn context(&self) -> &FitnessContext {
        &self.ctx
    }

    pub fn config(&self) -> &EvolutionConfig {
        &self.config
    }

    /// Current island populations, in island order.
    pub fn populations(&self) -> impl Iterator<Item = &[Individual]> {
        self.islands.iter().map(|i| i.population.as_slice())
    }

    pub fn counts(&self) -> EvaluationCounts {
        let mut c = EvaluationCounts::default();
        for i in &self.islands {
            c.add(&i.counts);
        }
        c
    }

    /// Runs the remaining rounds and returns the outcome.
    pub fn finish(mut self) -> Result<DiscoveryOutcome, EvolveError> {
        while !self.is_finished() {
            self.step();
        }
        self.outcome()
    }

    pub fn outcome(&self) -> Result<DiscoveryOutcome, EvolveError> {
        let counts = self.counts();
        if self.hall.is_empty() {
            return Err(EvolveError::AllInvalid {
                dominant: counts.dominant_failure(),
                counts,
            });
        }
        Ok(DiscoveryOutcome {
            hall: self.hall.clone(),
            history: self.history.clone(),
            counts,
        })
    }
}

/// Full search with the skill's default penalty weights.
pub fn run_discovery(skill: &Skill, train: &[Dataset], config: &EvolutionConfig) -> Result<DiscoveryOutcome, EvolveError> {
    Search::new(skill, train, config.clone())?.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_generate;
    use crate::mechanics::{DeformationMode, MaterialModel};
    use crate::skills::builtin_isotropic;

    fn train() -> Vec<Dataset> {
        let m = MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 };
        let g: Vec<f64> = (0..15).map(|i| 1.0 + 0.3 * i as f64).collect();
        vec![
            synth_generate(&m, DeformationMode::UT, &g, 0.0, 0).unwrap(),
            synth_generate(&m, DeformationMode::ET, &g[..8], 0.0, 0).unwrap(),
        ]
    }

    fn small(seed: u64, workers: usize) -> EvolutionConfig {
        EvolutionConfig {
            iterations: 3,
            populations: 3,
            workers,
            population_size: 20,
            migration_interval: 3,
            rng_seed: seed,
            ..EvolutionConfig::default()
        }
    }

    fn exprs(h: &HallOfFame) -> Vec<String> {
        h.entries().map(|(_, e)| format!("{:?}", e.expr)).collect()
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let a = run_discovery(&builtin_isotropic(), &train(), &small(7, 1)).unwrap();
        let b = run_discovery(&builtin_isotropic(), &train(), &small(7, 3)).unwrap();
        assert_eq!(exprs(&a.hall), exprs(&b.hall));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn history_is_non_increasing() {
        let out = run_discovery(&builtin_isotropic(), &train(), &small(1, 2)).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn maxsize_three_limits_forms() {
        let cfg = EvolutionConfig { maxsize: 3, ..small(3, 1) };
        let out = run_discovery(&builtin_isotropic(), &train(), &cfg).unwrap();
        for (c, e) in out.hall.entries() {
            assert!(c <= 3 && e.expr.depth() <= 2, "{}", e.expr);
        }
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted_run() {
        let cfg = small(11, 2);
        let full = run_discovery(&builtin_isotropic(), &train(), &cfg).unwrap();
        let mut s = Search::new(&builtin_isotropic(), &train(), cfg).unwrap();
        s.step();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        s.checkpoint().save(&path).unwrap();
        let resumed = Search::resume(Checkpoint::load(&path).unwrap(), &builtin_isotropic(), &train()).unwrap().finish().unwrap();
        assert_eq!(exprs(&full.hall), exprs(&resumed.hall));
    }

    #[test]
    fn migration_keeps_sizes_and_best() {
        let ctx = FitnessContext::from_skill(&builtin_isotropic(), &train()).unwrap();
        let ind = |s: &str| {
            let e: Expr = s.parse().unwrap();
            Individual {
                report: ctx.evaluate_unchecked(&e),
                expr: e,
            }
        };
        let mut pops = vec![
            vec![ind("0.2*I1 + 0.05*I2"), ind("I1"), ind("I2"), ind("3*I1")],
            vec![ind("I1*I1"), ind("I2*I2"), ind("2*I2")],
        ];
        let best = |p: &[Vec<Individual>]| p.iter().flatten().map(|i| i.report.composite).fold(f64::INFINITY, f64::min);
        let before = best(&pops);
        migrate(&mut pops, 0.1);
        assert_eq!((pops[0].len(), pops[1].len()), (4, 3));
        assert!(best(&pops) <= before);
        assert!(pops[1].iter().any(|i| i.expr.to_infix() == "0.2*I1 + 0.05*I2" || i.report.composite == before));
        let mut single = vec![pops[0].clone()];
        let copy = single.clone();
        migrate(&mut single, 0.5);
        assert_eq!(single[0].len(), copy[0].len());
    }
}
