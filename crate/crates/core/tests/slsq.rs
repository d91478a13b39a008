mod common;

use common::{all_phase_codes, fixture, random_instance, series, simulate};
use nalgebra::DMatrix;
use phaseid::mmle::truth_assignment;
use phaseid::slsq::{
    brute_force, build_subproblem, round_solution, rounded_phases, solve_relaxed, solve_relaxed_with, SolverOptions,
    SubproblemInstance,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn binary_minimum(inst: &SubproblemInstance) -> f64 {
    all_phase_codes(inst.dim() / 3)
        .map(|ph| inst.objective_at_phases(&ph))
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn rounding_matches_enumeration_on_noiseless_four_load_fixture() {
    let model = fixture("four_load");
    let out = simulate(&model, 0.0, 300, 8, false);
    let (ds, rs) = series(&model, &out);
    let truth = truth_assignment(&ds, &out.truth).unwrap();
    for m in 0..ds.m() {
        let inst = build_subproblem(m, truth.phase(m), &ds, &rs).unwrap();
        let rel = solve_relaxed(&inst).unwrap();
        let bf = brute_force(&inst).unwrap();
        assert_eq!(round_solution(&rel), bf.x, "load {m}");
        let expected: Vec<usize> = inst.others.iter().map(|&k| truth.phase(k)).collect();
        assert_eq!(bf.phases, expected, "load {m}");
        assert!(bf.objective <= 1e-20, "load {m}: {}", bf.objective);
    }
}

#[test]
fn enumeration_never_loses_to_rounding_on_noisy_data() {
    let model = fixture("five_load");
    let mut gaps = Vec::new();
    for seed in 0..5 {
        let out = simulate(&model, 0.02, 60, seed, true);
        let (ds, rs) = series(&model, &out);
        for m in 0..ds.m() {
            for i in 0..3 {
                let inst = build_subproblem(m, i, &ds, &rs).unwrap();
                let rel = solve_relaxed(&inst).unwrap();
                let rounded = inst.objective_at_phases(&rounded_phases(&rel.x));
                let bf = brute_force(&inst).unwrap();
                assert!(bf.objective <= rounded, "m={m} i={i}: {} > {rounded}", bf.objective);
                assert!(rel.objective <= bf.objective + 1e-10 * bf.objective.max(1e-30));
                gaps.push(rounded - bf.objective);
            }
        }
    }
    assert!(gaps.iter().all(|g| *g >= 0.0));
}

#[test]
fn accelerated_variant_agrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, 5, 40);
        let plain = solve_relaxed(&inst).unwrap();
        let fast = solve_relaxed_with(&inst, &SolverOptions { accelerated: true, ..Default::default() }).unwrap();
        assert!(fast.kkt_residual <= 1e-8, "kkt {:e}", fast.kkt_residual);
        let scale = plain.objective.abs().max(1e-12);
        assert!((plain.objective - fast.objective).abs() <= 1e-9 * scale);
    }
}

#[test]
fn zero_design_returns_flagged_barycenter() {
    let inst = SubproblemInstance {
        m: 0,
        i: 0,
        target: vec![1.0, -1.0, 0.5],
        design: DMatrix::zeros(3, 6),
        others: vec![1, 2],
    };
    let rel = solve_relaxed(&inst).unwrap();
    assert!(rel.degenerate);
    assert!(rel.x.iter().all(|&v| v == 1.0 / 3.0));
    assert_eq!(round_solution(&rel), vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
}

#[test]
fn already_binary_optimum_is_kept() {
    // Target generated exactly by a binary point: the relaxation lands on it.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut inst = random_instance(&mut rng, 3, 30);
    let x = [0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
    inst.target = (0..30).map(|t| (0..9).map(|j| inst.design[(t, j)] * x[j]).sum()).collect();
    let rel = solve_relaxed(&inst).unwrap();
    assert_eq!(round_solution(&rel), x.to_vec());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relaxation_is_a_lower_bound_with_small_kkt(seed in any::<u64>(), others in 1usize..=4, t in 10usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_instance(&mut rng, others, t);
        let rel = solve_relaxed(&inst).unwrap();
        prop_assert!(rel.kkt_residual <= 1e-8, "kkt {:e}", rel.kkt_residual);
        prop_assert!(rel.x.chunks(3).all(|c| c.iter().all(|&v| v >= 0.0) && (c.iter().sum::<f64>() - 1.0).abs() <= 1e-12));
        let best = binary_minimum(&inst);
        prop_assert!(rel.objective <= best + 1e-10, "{} > {}", rel.objective, best);
    }
}
