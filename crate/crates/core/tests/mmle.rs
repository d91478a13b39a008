mod common;

use common::{fixture, series, simulate, FIXTURES, SMALL_FIXTURES};
use phaseid::connection::{marginal_objectives, PhaseAssignment};
use phaseid::mmle::{
    aggregate_target_only, aggregate_voting, compare_with_oracle, exhaustive_minimizers, identify, identify_series,
    select_final, solve_load, truth_assignment, vote_tallies, DiagnosticsLevel, IdentifyOptions, LoadSolution,
    Method,
};
use phaseid::sim::{generate, SimulationSpec, SubstationProfile};
use phaseid::slsq::SolverOptions;
use phaseid::{ConnectionClass, Exec};

fn solution(m: usize, x: PhaseAssignment) -> LoadSolution {
    LoadSolution {
        m,
        phase: x.phase(m),
        assignment: x,
        f_m: 0.0,
        candidates: Vec::new(),
    }
}

fn singles(m: usize) -> (Vec<String>, Vec<ConnectionClass>) {
    ((0..m).map(|k| format!("L{k}")).collect(), vec![ConnectionClass::Single; m])
}

#[test]
fn noiseless_linear_data_is_recovered_exactly_on_every_fixture() {
    for name in FIXTURES {
        let model = fixture(name);
        let out = simulate(&model, 0.0, 400, 12, false);
        let mut report = identify(&model, &out.readings, &IdentifyOptions::default()).unwrap();
        assert_eq!(report.score(&out.truth).unwrap(), 1.0, "{name}");
        assert_eq!(report.assignments.len(), model.m());
        assert!(report.assignments.iter().all(|a| a.f_m <= 1e-20), "{name}");
    }
}

#[test]
fn single_load_feeder_picks_truth_with_zero_objective() {
    let mut model = fixture("two_node");
    model.loads.truncate(1);
    let out = simulate(&model, 0.0, 100, 3, false);
    let (ds, rs) = series(&model, &out);
    let sol = solve_load(0, &ds, &rs, &SolverOptions::default()).unwrap();
    assert_eq!(sol.phase, out.truth["L1"].index());
    assert!(sol.f_m <= 1e-24);
}

#[test]
fn each_load_picks_truth_on_noiseless_four_load_fixture() {
    let model = fixture("four_load");
    let out = simulate(&model, 0.0, 300, 6, false);
    let (ds, rs) = series(&model, &out);
    let truth = truth_assignment(&ds, &out.truth).unwrap();
    for m in 0..ds.m() {
        let sol = solve_load(m, &ds, &rs, &SolverOptions::default()).unwrap();
        assert_eq!(sol.phase, truth.phase(m), "load {m}");
    }
    assert_eq!(aggregate_target_only(&phaseid::mmle::solve_all_loads(&ds, &rs, &SolverOptions::default(), Exec::Sequential).unwrap()).unwrap(), truth);
}

#[test]
fn three_phase_neighbour_leaves_candidate_objectives_tied() {
    let model = fixture("five_load");
    let out = simulate(&model, 0.001, 300, 2, true);
    let (ds, rs) = series(&model, &out);
    let k = ds.classes.iter().position(|&c| c == ConnectionClass::Three).unwrap();
    for m in (0..ds.m()).filter(|&m| m != k) {
        let sol = solve_load(m, &ds, &rs, &SolverOptions::default()).unwrap();
        let f = marginal_objectives(&sol.assignment, &ds, &rs).unwrap()[m];
        for j in 0..3 {
            let g = marginal_objectives(&sol.assignment.with_phase(k, j), &ds, &rs).unwrap()[m];
            assert_eq!(f.to_bits(), g.to_bits());
        }
    }
}

#[test]
fn target_only_examples() {
    let (ids, classes) = singles(3);
    let x = PhaseAssignment::new(ids.clone(), classes.clone(), vec![2, 0, 1]).unwrap();
    let sols: Vec<_> = (0..3).map(|m| solution(m, x.clone())).collect();
    assert_eq!(aggregate_target_only(&sols).unwrap(), x);

    let (ids, classes) = singles(2);
    let a = PhaseAssignment::new(ids.clone(), classes.clone(), vec![0, 2]).unwrap();
    let b = PhaseAssignment::new(ids.clone(), classes.clone(), vec![1, 1]).unwrap();
    let out = aggregate_target_only(&[solution(0, a), solution(1, b)]).unwrap();
    assert_eq!(out.phases().collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn voting_examples() {
    let (ids, classes) = singles(4);
    let x = PhaseAssignment::new(ids.clone(), classes.clone(), vec![1, 1, 2, 0]).unwrap();
    let sols: Vec<_> = (0..4).map(|m| solution(m, x.clone())).collect();
    assert_eq!(vote_tallies(&sols)[0], [0, 4, 0]);
    assert_eq!(aggregate_voting(&sols).unwrap(), x);

    // Votes (3, 3, 1) on load 0 whose own solution says option 1.
    let (ids, classes) = singles(7);
    let votes = [1, 0, 0, 0, 1, 1, 2];
    let sols: Vec<_> = votes
        .iter()
        .enumerate()
        .map(|(m, &v)| solution(m, PhaseAssignment::new(ids.clone(), classes.clone(), vec![v; 7]).unwrap()))
        .collect();
    let sols: Vec<_> = sols
        .into_iter()
        .enumerate()
        .map(|(m, s)| {
            let x = s.assignment.with_phase(0, votes[m]);
            solution(m, x)
        })
        .collect();
    assert_eq!(vote_tallies(&sols)[0], [3, 3, 1]);
    assert_eq!(aggregate_voting(&sols).unwrap().phase(0), 1);

    // A three-phase load keeps its own solution whatever the votes say.
    let ids: Vec<String> = (0..3).map(|k| format!("L{k}")).collect();
    let classes = vec![ConnectionClass::Three, ConnectionClass::Single, ConnectionClass::Single];
    let own = PhaseAssignment::new(ids.clone(), classes.clone(), vec![2, 0, 0]).unwrap();
    let other = PhaseAssignment::new(ids, classes, vec![0, 0, 0]).unwrap();
    let sols = vec![solution(0, own), solution(1, other.clone()), solution(2, other)];
    assert_eq!(vote_tallies(&sols)[0], [2, 0, 1]);
    assert_eq!(aggregate_voting(&sols).unwrap().phase(0), 2);
}

#[test]
fn selection_prefers_truth_over_a_corrupted_assignment() {
    let model = fixture("four_load");
    let out = simulate(&model, 0.0, 200, 1, false);
    let (ds, rs) = series(&model, &out);
    let truth = truth_assignment(&ds, &out.truth).unwrap();
    let corrupted = truth.with_phase(2, (truth.phase(2) + 1) % 3);
    let (method, f_t, f_v) = select_final(&truth, &corrupted, &ds, &rs).unwrap();
    assert_eq!(method, Method::TargetOnly);
    assert!(f_t.iter().sum::<f64>() <= 1e-20);
    assert!(f_v.iter().sum::<f64>() > 1e-12);
    let (method, f_t, f_v) = select_final(&corrupted, &truth, &ds, &rs).unwrap();
    assert_eq!(method, Method::Voting);
    assert!(f_v.iter().sum::<f64>() < f_t.iter().sum::<f64>());
    let (method, f_t, f_v) = select_final(&truth, &truth, &ds, &rs).unwrap();
    assert_eq!((method, f_t), (Method::TargetOnly, f_v));
}

#[test]
fn report_invariants_hold() {
    let model = fixture("feeder_8node");
    let out = simulate(&model, 0.002, 300, 9, true);
    let report = identify(&model, &out.readings, &IdentifyOptions::default()).unwrap();
    let m = model.m();
    assert!(report.assignments.iter().all(|a| a.votes.iter().sum::<usize>() == m));
    let (chosen, other) = match report.method {
        Method::TargetOnly => (report.sum_f_target_only, report.sum_f_voting),
        Method::Voting => (report.sum_f_voting, report.sum_f_target_only),
    };
    assert!(chosen <= other);
    assert!(report.assignments.iter().all(|a| a.f_m >= 0.0));
}

#[test]
fn identification_is_deterministic_across_executors() {
    let model = fixture("feeder_8node");
    let out = simulate(&model, 0.001, 500, 4, true);
    let seq = IdentifyOptions {
        exec: Exec::Sequential,
        diagnostics: DiagnosticsLevel::Summary,
        ..Default::default()
    };
    let par = IdentifyOptions {
        exec: Exec::Parallel,
        ..seq.clone()
    };
    let a = identify(&model, &out.readings, &seq).unwrap().to_json().unwrap();
    let b = identify(&model, &out.readings, &seq).unwrap().to_json().unwrap();
    let c = identify(&model, &out.readings, &par).unwrap().to_json().unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn diagnostics_levels_control_report_content() {
    let model = fixture("four_load");
    let out = simulate(&model, 0.001, 200, 4, true);
    let (ds, rs) = series(&model, &out);
    let none = identify_series(&ds, &rs, &IdentifyOptions::default()).unwrap();
    assert!(none.residual_diagnostics.is_none() && none.subproblems.is_none());
    let full_opts = IdentifyOptions {
        diagnostics: DiagnosticsLevel::Full,
        solver: SolverOptions { trace: true, ..Default::default() },
        ..Default::default()
    };
    let mut full = identify_series(&ds, &rs, &full_opts).unwrap();
    let subs = full.subproblems.as_ref().unwrap();
    assert_eq!(subs.len(), 3 * ds.m());
    assert!(subs.iter().all(|s| !s.trace.is_empty() || s.iterations == 0));
    assert_eq!(full.residual_diagnostics.as_ref().unwrap().len(), ds.m());
    full.score(&out.truth).unwrap();
    let json: serde_json::Value = serde_json::from_str(&full.to_json().unwrap()).unwrap();
    for key in ["method", "assignments", "sum_f_target_only", "sum_f_voting", "accuracy", "residual_diagnostics"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    let first = &json["assignments"][0];
    for key in ["load", "class", "phase", "votes", "f_m"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn small_fixtures_match_exhaustive_minimizers() {
    for name in SMALL_FIXTURES {
        let model = fixture(name);
        let out = simulate(&model, 0.0, 300, 10, false);
        let (ds, rs) = series(&model, &out);
        let report = identify_series(&ds, &rs, &IdentifyOptions::default()).unwrap();
        let labels: Vec<_> = ds.load_ids.iter().map(|id| report.labels()[id]).collect();
        let estimate = PhaseAssignment::from_labels(ds.load_ids.clone(), ds.classes.clone(), &labels).unwrap();
        let (mins, best) = exhaustive_minimizers(&ds, &rs, Exec::Parallel).unwrap();
        let cmp = compare_with_oracle(&estimate, &ds, &rs, &mins, best).unwrap();
        assert!(cmp.matches, "{name}: differs on {:?}", cmp.differing);
        // Each load's own term pins its triple, so the noiseless minimizer is
        // unique and equal to the truth even with a three-phase load present.
        assert_eq!(mins, vec![truth_assignment(&ds, &out.truth).unwrap()], "{name}");
    }
}

#[test]
fn corrupted_sensitivities_break_oracle_agreement() {
    let model = fixture("four_load");
    // Identical phases at the substation leave the sensitivities as the only
    // source of phase information.
    let spec = SimulationSpec {
        samples: 300,
        seed: 10,
        substation: SubstationProfile { per_phase: 0.0, ..Default::default() },
        ..Default::default()
    };
    let out = generate(&model, &spec).unwrap();
    let (ds, rs) = series(&model, &out);
    let (mins, best) = exhaustive_minimizers(&ds, &rs, Exec::Parallel).unwrap();
    let wrong: Vec<_> = rs.iter().map(|r| r.rotate_phases(1)).collect();
    let report = identify_series(&ds, &wrong, &IdentifyOptions::default()).unwrap();
    let labels: Vec<_> = ds.load_ids.iter().map(|id| report.labels()[id]).collect();
    let estimate = PhaseAssignment::from_labels(ds.load_ids.clone(), ds.classes.clone(), &labels).unwrap();
    let cmp = compare_with_oracle(&estimate, &ds, &rs, &mins, best).unwrap();
    assert!(!cmp.matches);
    assert!(!cmp.differing.is_empty());
}

#[test]
fn more_data_does_not_lower_accuracy_in_aggregate() {
    let model = fixture("feeder_8node");
    let (mut short, mut long) = (0.0, 0.0);
    for seed in 0..20 {
        let out = simulate(&model, 0.005, 360, 100 + seed, true);
        let mut r = identify(&model, &out.readings, &IdentifyOptions::default()).unwrap();
        long += r.score(&out.truth).unwrap();
        let mut cut = out.readings.clone();
        cut.times.truncate(120);
        for s in cut.v.iter_mut().chain(cut.p.iter_mut()).chain(cut.q.iter_mut()).chain(cut.substation.iter_mut()) {
            s.truncate(120);
        }
        let mut r = identify(&model, &cut, &IdentifyOptions::default()).unwrap();
        short += r.score(&out.truth).unwrap();
    }
    assert!(short <= long, "T/3 {short} vs T {long}");
}
