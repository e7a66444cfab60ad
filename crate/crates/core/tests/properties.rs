use hyperlaw::data::{synth_generate, Dataset};
use hyperlaw::evolve::{migrate, Individual, MutationKind, MutationWeights, Variation};
use hyperlaw::expr::{parse, Expr};
use hyperlaw::fitness::{
    build_sample_grid, evaluate_fitness, hessian_field, hessian_penalty, FitnessReport, PenaltyConfig, SampleGrid,
};
use hyperlaw::evolve::HallOfFame;
use hyperlaw::mechanics::{invariants, nominal_stress, DeformationMode, MaterialModel};
use hyperlaw::pareto::{extract_front, is_non_dominated, rank_candidates, rank_order, structural_audit, Convexity, ParetoPoint};
use hyperlaw::skills::{builtin_isotropic, SamplingDomain, SamplingMode, Skill};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOCKING_LAW: &str = "0.031*(3.75*I1 + I2) + I1/(77.9 - 1.05*I1)";

fn variation(maxsize: usize) -> Variation {
    Variation::new(&builtin_isotropic(), maxsize, MutationWeights::default())
}

fn random_tree(seed: u64, budget: usize) -> Expr {
    variation(budget).random_tree(budget, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn random_point(rng: &mut impl Rng) -> [f64; 2] {
    let l1 = rng.random_range(0.5f64..3.0);
    let l2 = rng.random_range(0.5f64..3.0);
    let (i1, i2) = hyperlaw::mechanics::invariants_from_stretches(l1, l2, 1.0 / (l1 * l2));
    [i1, i2]
}

fn same_value(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

fn constants_sorted(e: &Expr) -> Vec<u64> {
    let mut c: Vec<u64> = e.constants().iter().map(|v| v.to_bits()).collect();
    c.sort_unstable();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn format_then_parse_preserves_evaluation(seed in any::<u64>()) {
        let tree = random_tree(seed, 20);
        let back = parse(&tree.to_infix()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let p = random_point(&mut rng);
            prop_assert!(same_value(tree.evaluate(&p), back.evaluate(&p)), "{tree} vs {back}");
        }
    }

    #[test]
    fn simplify_preserves_evaluation(seed in any::<u64>()) {
        let tree = random_tree(seed, 20);
        let s = tree.simplify();
        prop_assert!(s.complexity() <= tree.complexity());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..10 {
            let p = random_point(&mut rng);
            let (a, b) = (tree.evaluate(&p), s.evaluate(&p));
            if a.is_finite() {
                // Reassociated constant products round differently; the scale is the
                // largest intermediate the unsimplified tree produces.
                let scale = tree.nodes().map(|n| n.evaluate(&p).abs()).filter(|v| v.is_finite()).fold(a.abs(), f64::max);
                prop_assert!((a - b).abs() <= 1e-12 * scale, "{tree} -> {s} at {p:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn hessian_is_bit_symmetric(seed in any::<u64>(), x in -5.0f64..80.0, y in -5.0f64..80.0) {
        let d = random_tree(seed, 24).evaluate_with_derivatives(&[x, y]);
        prop_assert!(same_value(d.hessian[0][1], d.hessian[1][0]));
    }

    #[test]
    fn duality_and_shear_symmetry(l in 0.05f64..20.0) {
        let (a1, a2) = invariants(DeformationMode::UT, l.powi(-2)).unwrap();
        let (b1, b2) = invariants(DeformationMode::ET, l).unwrap();
        let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
        prop_assert!(rel(a1, b1) && rel(a2, b2));
        let (p1, p2) = invariants(DeformationMode::PS, l).unwrap();
        let (q1, q2) = invariants(DeformationMode::PS, 1.0 / l).unwrap();
        prop_assert_eq!(p1, p2);
        prop_assert!(rel(p1, q1) && rel(p2, q2));
    }

    #[test]
    fn closed_and_symbolic_mooney_rivlin_agree(c10 in 0.01f64..2.0, c01 in -0.5f64..0.5, l in 0.3f64..6.0) {
        let closed = MaterialModel::MooneyRivlin { c10, c01 };
        let sym = MaterialModel::symbolic(closed.to_expr().unwrap());
        for mode in DeformationMode::ALL {
            let a = nominal_stress(&closed, mode, l).unwrap();
            let b = nominal_stress(&sym, mode, l).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300), "{mode:?}: {a} vs {b}");
            prop_assert_eq!(nominal_stress(&closed, mode, 1.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn stress_at_reference_is_zero(seed in any::<u64>()) {
        let model = MaterialModel::symbolic(random_tree(seed, 16));
        for mode in DeformationMode::ALL {
            if let Ok(p) = nominal_stress(&model, mode, 1.0) {
                prop_assert_eq!(p, 0.0);
            }
        }
    }
}

fn treloar_like() -> Vec<Dataset> {
    let m = MaterialModel::MooneyRivlin { c10: 0.16, c01: 0.02 };
    let ut: Vec<f64> = (0..15).map(|i| 1.0 + 0.4 * i as f64).collect();
    let et: Vec<f64> = (0..10).map(|i| 1.0 + 0.3 * i as f64).collect();
    vec![
        synth_generate(&m, DeformationMode::UT, &ut, 0.01, 1).unwrap(),
        synth_generate(&m, DeformationMode::ET, &et, 0.01, 2).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn hessian_penalty_vanishes_iff_pointwise_psd(seed in any::<u64>()) {
        let tree = random_tree(seed, 16);
        let grid = build_sample_grid(&treloar_like(), &builtin_isotropic().sampling).unwrap();
        let penalty = hessian_penalty(&tree, &grid);
        let field = hessian_field(&tree, &grid);
        let psd = field.iter().all(|&(det, tr)| det >= 0.0 && tr >= 0.0);
        let finite = grid.invariants.iter().all(|p| tree.evaluate(p).is_finite());
        prop_assert_eq!(penalty == 0.0, psd && finite, "{} penalty {}", tree, penalty);
    }

    #[test]
    fn composite_is_monotone_in_weights(seed in any::<u64>(), bump in 1.0f64..100.0) {
        let tree = random_tree(seed, 14);
        let skill = builtin_isotropic();
        let train = treloar_like();
        let base = PenaltyConfig::from_skill(&skill, &train).unwrap();
        let a = evaluate_fitness(&tree, &train, &base, &skill).unwrap();
        for k in 0..3 {
            let mut c = base.clone();
            match k {
                0 => c.lambda_hessian = c.lambda_hessian * bump + bump,
                1 => c.lambda_reference = c.lambda_reference * bump + bump,
                _ => c.lambda_reg = c.lambda_reg * bump + bump,
            }
            let b = evaluate_fitness(&tree, &train, &c, &skill).unwrap();
            prop_assert!(b.composite >= a.composite || (a.composite.is_infinite() && b.composite.is_infinite()));
        }
        let again = evaluate_fitness(&tree, &train, &base, &skill).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&again).unwrap());
        if a.valid {
            let n: Vec<f64> = train.iter().map(|d| d.len() as f64).collect();
            let pooled = train.iter().zip(&n).map(|(d, n)| a.mse_per_mode[&d.mode] * n).sum::<f64>() / n.iter().sum::<f64>();
            prop_assert!((pooled - a.train_mse).abs() <= 1e-12 * a.train_mse.max(1e-300));
        }
    }
}

#[test]
fn convex_fixtures_have_zero_penalty() {
    let grid = build_sample_grid(&treloar_like(), &builtin_isotropic().sampling).unwrap();
    let models = [
        MaterialModel::NeoHookean { c1: 0.2 },
        MaterialModel::MooneyRivlin { c10: 0.2, c01: 0.05 },
        MaterialModel::Yeoh3 { c10: 0.2, c20: 0.01, c30: 0.001 },
        MaterialModel::symbolic(parse(LOCKING_LAW).unwrap()),
    ];
    for m in models {
        assert_eq!(hessian_penalty(&m.to_expr().unwrap(), &grid), 0.0, "{}", m.name());
    }
}

#[test]
fn locking_law_hessian_has_one_nonzero_entry() {
    let e = parse(LOCKING_LAW).unwrap();
    for i in 0..200 {
        let i1 = 74.0 * i as f64 / 200.0;
        for i2 in [0.0, 1.0, 30.0] {
            let h = e.evaluate_with_derivatives(&[i1, i2]).hessian;
            assert_eq!((h[0][1], h[1][1]), (0.0, 0.0));
            assert!(h[0][0] > 0.0);
        }
    }
}

fn box_grid() -> SampleGrid {
    let mut s = builtin_isotropic().sampling;
    s.auto_from_data = false;
    build_sample_grid(&[], &s).unwrap()
}

fn report(mse: f64, complexity: usize) -> FitnessReport {
    FitnessReport {
        mse_per_mode: Default::default(),
        train_mse: mse,
        complexity,
        penalty_hessian: 0.0,
        penalty_reference: 0.0,
        penalty_fiber_compression: 0.0,
        penalty_fiber_convexity: 0.0,
        composite: mse,
        valid: true,
        invalid_reason: None,
    }
}

fn random_front(seed: u64, n: usize, grid: &SampleGrid) -> Vec<ParetoPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = variation(25);
    let mut hall = HallOfFame::new();
    for _ in 0..n {
        let e = v.random_tree(25, &mut rng);
        let mse = if rng.random_bool(0.2) { 0.5 } else { rng.random_range(1e-4..1.0) };
        hall.insert(&e, &report(mse, e.complexity()));
    }
    extract_front(&hall, &[], grid)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn exported_front_is_non_dominated(seed in any::<u64>(), n in 1usize..80) {
        let grid = box_grid();
        let front = random_front(seed, n, &grid);
        prop_assert!(is_non_dominated(&front));
        prop_assert!(front.windows(2).all(|w| w[0].complexity < w[1].complexity));
    }

    #[test]
    fn ranking_is_a_total_order(seed in any::<u64>()) {
        let grid = box_grid();
        let mut front = random_front(seed, 60, &grid);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for p in &mut front {
            p.holdout_mse = rng.random_bool(0.7).then(|| rng.random_range(1e-4..1.0));
        }
        for a in &front {
            for b in &front {
                prop_assert_eq!(rank_order(a, b), rank_order(b, a).reverse());
            }
        }
        let reference = rank_candidates(&front).candidates;
        for _ in 0..5 {
            front.shuffle(&mut rng);
            prop_assert_eq!(&rank_candidates(&front).candidates, &reference);
        }
    }

    /// Random admissible grids: arbitrary stretch box and resolution.
    #[test]
    fn certified_forms_have_zero_grid_penalty(seed in any::<u64>(), lo in 0.05f64..0.95, hi in 1.05f64..12.0, n in 4usize..40) {
        let domain = SamplingDomain {
            mode: SamplingMode::PrincipalStretchGrid,
            lambda_min: lo,
            lambda_max: hi,
            grid_n: n,
            path_points: 16 + n,
            auto_from_data: false,
            data_margin: 1.1,
        };
        let grid = build_sample_grid(&[], &domain).unwrap();
        let v = variation(21);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..300 {
            let e = v.random_tree(21, &mut rng).simplify();
            let audit = structural_audit(&e, &grid);
            if audit.convexity == Convexity::CertifiedAnalytic {
                prop_assert_eq!(hessian_penalty(&e, &grid), 0.0, "{}", e);
            }
            if audit.convexity == Convexity::Violated {
                prop_assert!(audit.hessian_penalty > 0.0);
            }
        }
    }
}

#[test]
fn mutation_respects_the_skill() {
    let skill: Skill = builtin_isotropic();
    let v = variation(20);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut pool: Vec<Expr> = (0..64).map(|_| v.random_tree(20, &mut rng)).collect();
    for t in 0..100_000 {
        let i = t % pool.len();
        let m = v.mutate(&pool[i], &mut rng);
        assert!(m.complexity() <= 20 && v.is_admissible(&m), "{m}");
        if let Some(p) = v.apply(MutationKind::PointMutation, &pool[i], &mut rng) {
            assert!(p.operators().iter().all(|&op| skill.allows(op)), "{p}");
        }
        if let Some(d) = v.apply(MutationKind::DeleteSubtree, &pool[i], &mut rng) {
            assert!(d.complexity() >= 1 && d.complexity() < pool[i].complexity(), "{} -> {d}", pool[i]);
        }
        pool[i] = m;
    }
}

#[test]
fn crossover_conserves_constants_and_size() {
    let v = variation(20);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pool: Vec<Expr> = (0..64).map(|_| v.random_tree(20, &mut rng)).collect();
    for t in 0..100_000 {
        let (i, j) = (t % 64, (t * 7 + 3) % 64);
        let (a, b) = (pool[i].clone(), pool[j].clone());
        let (ca, cb) = v.crossover(&a, &b, &mut rng);
        assert!(ca.complexity() <= 20 && cb.complexity() <= 20);
        let mut parents = [constants_sorted(&a), constants_sorted(&b)].concat();
        let mut children = [constants_sorted(&ca), constants_sorted(&cb)].concat();
        parents.sort_unstable();
        children.sort_unstable();
        assert_eq!(parents, children);
        pool[i] = ca;
        pool[j] = cb;
    }
}

#[test]
fn migration_conserves_sizes_and_best() {
    let v = variation(15);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..200 {
        let islands = rng.random_range(1..6);
        let mut pops: Vec<Vec<Individual>> = (0..islands)
            .map(|_| {
                (0..rng.random_range(2..12))
                    .map(|_| {
                        let expr = v.random_tree(15, &mut rng);
                        let mse = rng.random_range(0.0..1.0);
                        Individual {
                            report: report(mse, expr.complexity()),
                            expr,
                        }
                    })
                    .collect()
            })
            .collect();
        let sizes: Vec<usize> = pops.iter().map(Vec::len).collect();
        let best = |p: &[Vec<Individual>]| p.iter().flatten().map(|i| i.report.composite).fold(f64::INFINITY, f64::min);
        let before = best(&pops);
        migrate(&mut pops, rng.random_range(0.0..0.6));
        assert_eq!(pops.iter().map(Vec::len).collect::<Vec<_>>(), sizes);
        assert!(best(&pops) <= before);
    }
}
