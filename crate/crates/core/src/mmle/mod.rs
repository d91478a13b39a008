//! Per-load marginal estimation, aggregation across loads, and the end-to-end
//! identification pipeline.

mod oracle;
mod report;

pub use oracle::{compare_with_oracle, exhaustive_minimizers, OracleComparison, ORACLE_MAX_LOADS};
pub use report::{
    DiagnosticsLevel, IdentificationReport, LoadReport, Method, SolverSummary, SubproblemReport,
};

use std::collections::BTreeMap;

use crate::connection::{
    build_block_tables, build_reduced_sensitivity, difference_series, load_residuals, marginal_objective,
    marginal_objectives, DifferencedSeries, IngestOptions, MeasurementSet, MeterReadings, PhaseAssignment,
    ReducedSensitivity, TopologySchedule,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::feeder::{assemble_admittance, reduce_network, FeederModel, ReducedNetwork};
use crate::linear_pf::{build_a, remove_substation, sensitivities_with, SensitivityMatrices};
use crate::phase::{ConnectionClass, PhaseLabel};
use crate::slsq::{build_subproblem, rounded_phases, solve_relaxed_with, RelaxedSolution, SolverOptions};
use crate::stats::summarize_residuals;

/// Outcome of one `(m, i)` subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub phase: usize,
    pub assignment: PhaseAssignment,
    pub f_m: f64,
    pub relaxed: RelaxedSolution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSolution {
    pub m: usize,
    /// Chosen phase option for the target load.
    pub phase: usize,
    /// Full assignment recorded for this load.
    pub assignment: PhaseAssignment,
    pub f_m: f64,
    pub candidates: Vec<Candidate>,
}

fn solve_candidate(
    m: usize,
    i: usize,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    opts: &SolverOptions,
) -> Result<Candidate> {
    let inst = build_subproblem(m, i, ds, rs)?;
    let relaxed = solve_relaxed_with(&inst, opts)?;
    let rounded = rounded_phases(&relaxed.x);
    let mut phases = vec![0; ds.m()];
    phases[m] = i;
    for (&k, &j) in inst.others.iter().zip(&rounded) {
        phases[k] = j;
    }
    let assignment = PhaseAssignment::new(ds.load_ids.clone(), ds.classes.clone(), phases)?;
    let f_m = marginal_objective(m, &assignment, ds, rs)?;
    Ok(Candidate {
        phase: i,
        assignment,
        f_m,
        relaxed,
    })
}

fn pick(m: usize, candidates: Vec<Candidate>) -> LoadSolution {
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate() {
        if c.f_m < candidates[best].f_m {
            best = i;
        }
    }
    LoadSolution {
        m,
        phase: candidates[best].phase,
        assignment: candidates[best].assignment.clone(),
        f_m: candidates[best].f_m,
        candidates,
    }
}

/// Solves the three subproblems of load `m` and keeps the candidate with the
/// lowest marginal objective (lowest phase index on ties).
pub fn solve_load(
    m: usize,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    opts: &SolverOptions,
) -> Result<LoadSolution> {
    let candidates = (0..3)
        .map(|i| solve_candidate(m, i, ds, rs, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(pick(m, candidates))
}

/// All loads, with the `3M` subproblems spread over `exec`.
pub fn solve_all_loads(
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    opts: &SolverOptions,
    exec: Exec,
) -> Result<Vec<LoadSolution>> {
    let m = ds.m();
    let mut flat = exec.try_map_range(3 * m, |j| solve_candidate(j / 3, j % 3, ds, rs, opts))?;
    let mut out = Vec::with_capacity(m);
    for load in (0..m).rev() {
        let c = flat.split_off(3 * load);
        out.push(pick(load, c));
    }
    out.reverse();
    Ok(out)
}

fn template(sols: &[LoadSolution]) -> Result<&PhaseAssignment> {
    sols.first()
        .map(|s| &s.assignment)
        .ok_or_else(|| Error::Dimension("no load solutions".into()))
}

/// Each load keeps the phase from its own solution.
pub fn aggregate_target_only(sols: &[LoadSolution]) -> Result<PhaseAssignment> {
    let mut out = template(sols)?.clone();
    for (m, s) in sols.iter().enumerate() {
        out.set_phase(m, s.assignment.phase(m));
    }
    Ok(out)
}

/// Vote counts `[k][j]`: how many load solutions put load `k` on option `j`.
pub fn vote_tallies(sols: &[LoadSolution]) -> Vec<[usize; 3]> {
    let m = sols.len();
    let mut tallies = vec![[0usize; 3]; m];
    for s in sols {
        for (k, tally) in tallies.iter_mut().enumerate() {
            tally[s.assignment.phase(k)] += 1;
        }
    }
    tallies
}

/// Majority vote for single- and two-phase loads; three-phase loads and
/// tied votes that include the target-only choice defer to it, other ties
/// take the lowest index.
pub fn aggregate_voting(sols: &[LoadSolution]) -> Result<PhaseAssignment> {
    let target = aggregate_target_only(sols)?;
    let tallies = vote_tallies(sols);
    let mut out = target.clone();
    for (k, tally) in tallies.iter().enumerate() {
        if target.class(k) == ConnectionClass::Three {
            continue;
        }
        let top = *tally.iter().max().unwrap();
        let own = target.phase(k);
        let phase = if tally[own] == top {
            own
        } else {
            (0..3).find(|&j| tally[j] == top).unwrap()
        };
        out.set_phase(k, phase);
    }
    Ok(out)
}

/// Chooses between the two aggregates by total marginal objective; ties go
/// to the target-only assignment.
pub fn select_final(
    target_only: &PhaseAssignment,
    voting: &PhaseAssignment,
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
) -> Result<(Method, Vec<f64>, Vec<f64>)> {
    let f_t = marginal_objectives(target_only, ds, rs)?;
    let f_v = if voting == target_only {
        f_t.clone()
    } else {
        marginal_objectives(voting, ds, rs)?
    };
    let (st, sv): (f64, f64) = (f_t.iter().sum(), f_v.iter().sum());
    let method = if sv < st { Method::Voting } else { Method::TargetOnly };
    Ok((method, f_t, f_v))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IdentifyOptions {
    pub exec: Exec,
    pub solver: SolverOptions,
    pub diagnostics: DiagnosticsLevel,
    pub ingest: IngestOptions,
    pub schedule: TopologySchedule,
}

/// Reduced network and its voltage sensitivities.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedModel {
    pub net: ReducedNetwork,
    pub sensitivities: SensitivityMatrices,
}

impl PreparedModel {
    /// Reduced sensitivities for the listed loads of the network.
    pub fn reduced_sensitivity(&self, loads: &[usize]) -> Result<ReducedSensitivity> {
        build_reduced_sensitivity(&build_block_tables(&self.net.with_loads(loads)), &self.sensitivities)
    }

    /// As [`PreparedModel::reduced_sensitivity`] with loads named by id.
    pub fn reduced_sensitivity_for_ids(&self, ids: &[String]) -> Result<ReducedSensitivity> {
        let idx = ids
            .iter()
            .map(|id| {
                self.net
                    .load_index(id)
                    .ok_or_else(|| Error::Measurement(format!("load `{id}` missing from a topology")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.reduced_sensitivity(&idx)
    }
}

pub fn prepare_model(model: &FeederModel, exec: Exec) -> Result<PreparedModel> {
    let net = reduce_network(model).map_err(|e| e.at("reduction"))?;
    let y = assemble_admittance(&net).map_err(|e| e.at("admittance"))?;
    let a = build_a(&y).map_err(|e| e.at("linearization"))?;
    let sensitivities = sensitivities_with(&remove_substation(a), exec).map_err(|e| e.at("sensitivities"))?;
    Ok(PreparedModel { net, sensitivities })
}

/// Full pipeline on one feeder model.
pub fn identify(model: &FeederModel, readings: &MeterReadings, opts: &IdentifyOptions) -> Result<IdentificationReport> {
    identify_topologies(std::slice::from_ref(model), readings, opts)
}

/// Full pipeline with one feeder model per topology in `opts.schedule`.
pub fn identify_topologies(
    models: &[FeederModel],
    readings: &MeterReadings,
    opts: &IdentifyOptions,
) -> Result<IdentificationReport> {
    let (ds, rs) = prepare_series(models, readings, opts)?;
    identify_series(&ds, &rs, opts)
}

/// Ingestion, differencing and reduced sensitivities: everything the
/// estimator needs, with one sensitivity set per topology.
pub fn prepare_series(
    models: &[FeederModel],
    readings: &MeterReadings,
    opts: &IdentifyOptions,
) -> Result<(DifferencedSeries, Vec<ReducedSensitivity>)> {
    if models.len() != opts.schedule.count() {
        return Err(Error::Dimension(format!(
            "{} feeder models for {} topologies",
            models.len(),
            opts.schedule.count()
        )));
    }
    let prepared = models
        .iter()
        .map(|m| prepare_model(m, opts.exec))
        .collect::<Result<Vec<_>>>()?;
    let ms = MeasurementSet::from_readings(readings, &prepared[0].net, &opts.schedule, opts.ingest)
        .map_err(|e| e.at("ingestion"))?;
    let ds = difference_series(&ms).map_err(|e| e.at("differencing"))?;
    let rs = prepared
        .iter()
        .map(|p| p.reduced_sensitivity_for_ids(&ds.load_ids))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.at("reduced sensitivities"))?;
    Ok((ds, rs))
}

/// Estimation and aggregation on prepared differenced data.
pub fn identify_series(
    ds: &DifferencedSeries,
    rs: &[ReducedSensitivity],
    opts: &IdentifyOptions,
) -> Result<IdentificationReport> {
    let sols = solve_all_loads(ds, rs, &opts.solver, opts.exec).map_err(|e| e.at("estimation"))?;
    let target = aggregate_target_only(&sols)?;
    let voting = aggregate_voting(&sols)?;
    let (method, f_t, f_v) = select_final(&target, &voting, ds, rs)?;
    let (chosen, f_chosen) = match method {
        Method::TargetOnly => (&target, &f_t),
        Method::Voting => (&voting, &f_v),
    };
    let tallies = vote_tallies(&sols);
    let assignments = (0..ds.m())
        .map(|m| LoadReport {
            load: ds.load_ids[m].clone(),
            class: ds.classes[m],
            phase: chosen.label(m),
            votes: tallies[m],
            f_m: f_chosen[m],
            target_only: target.label(m),
            voting: voting.label(m),
        })
        .collect();

    let mut report = IdentificationReport {
        method,
        assignments,
        sum_f_target_only: f_t.iter().sum(),
        sum_f_voting: f_v.iter().sum(),
        accuracy: None,
        residual_diagnostics: None,
        solver: None,
        subproblems: None,
    };
    if opts.diagnostics != DiagnosticsLevel::None {
        let summaries = opts.exec.try_map_range(ds.m(), |m| {
            let r = load_residuals(m, chosen, ds, rs)?;
            Ok::<_, Error>(summarize_residuals(&ds.load_ids[m], &r))
        })?;
        report.residual_diagnostics = Some(summaries);
        report.solver = Some(SolverSummary::from_solutions(&sols));
    }
    if opts.diagnostics == DiagnosticsLevel::Full {
        report.subproblems = Some(
            sols.iter()
                .flat_map(|s| {
                    s.candidates.iter().map(move |c| SubproblemReport {
                        load: ds.load_ids[s.m].clone(),
                        phase: c.phase,
                        relaxed_objective: c.relaxed.objective,
                        kkt_residual: c.relaxed.kkt_residual,
                        iterations: c.relaxed.iterations,
                        degenerate: c.relaxed.degenerate,
                        f_m: c.f_m,
                        trace: c.relaxed.trace.clone(),
                    })
                })
                .collect(),
        );
    }
    Ok(report)
}

/// Truth labels as an assignment over the series' loads.
pub fn truth_assignment(ds: &DifferencedSeries, truth: &BTreeMap<String, PhaseLabel>) -> Result<PhaseAssignment> {
    let labels = ds
        .load_ids
        .iter()
        .map(|id| {
            truth
                .get(id)
                .copied()
                .ok_or_else(|| Error::Measurement(format!("load `{id}` has no truth label")))
        })
        .collect::<Result<Vec<_>>>()?;
    PhaseAssignment::from_labels(ds.load_ids.clone(), ds.classes.clone(), &labels)
}
