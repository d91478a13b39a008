use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{anyhow, Context};
use phaseid::connection::{load_residuals, IngestOptions, MeterReadings, PhaseAssignment};
use phaseid::feeder::{assemble_admittance, parse_feeder, reduce_network, FeederModel};
use phaseid::linear_pf::{build_a, remove_substation, sensitivities_with, write_matrix, MatrixFormat};
use phaseid::mmle::{
    compare_with_oracle, exhaustive_minimizers, identify, identify_series, prepare_series, IdentificationReport,
    IdentifyOptions, ORACLE_MAX_LOADS,
};
use phaseid::sim::{
    generate, parse_truth_json, perturb_model, read_profiles_csv, ProfileSource, SimulationSpec,
    SubstationProfile,
};
use phaseid::stats::{accuracy, summarize_residuals, ResidualSummary, AUTOCORRELATION_LAGS};
use phaseid::{ErrorClass, Exec, PhaseLabel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{Cli, Command, EvaluateArgs, IdentifyArgs, ModelArgs, OracleArgs, SimulateArgs, ValidateArgs};

pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_SIMULATION: u8 = 3;
pub const EXIT_SOLVER: u8 = 4;
pub const EXIT_ORACLE_MISMATCH: u8 = 5;

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Outcome<T> = Result<T, Failure>;

fn code_of(e: &phaseid::Error) -> u8 {
    match e.class() {
        ErrorClass::Validation | ErrorClass::Io => EXIT_VALIDATION,
        ErrorClass::Simulation => EXIT_SIMULATION,
        ErrorClass::Solver => EXIT_SOLVER,
    }
}

trait LibContext<T> {
    /// Wraps a library error with its class's exit code.
    fn ctx(self, context: &str) -> Outcome<T>;
}

impl<T> LibContext<T> for Result<T, phaseid::Error> {
    fn ctx(self, context: &str) -> Outcome<T> {
        self.map_err(|e| Failure {
            code: code_of(&e),
            error: anyhow::Error::new(e).context(context.to_string()),
        })
    }
}

trait ExitContext<T> {
    fn exit(self, code: u8, context: &str) -> Outcome<T>;
}

impl<T> ExitContext<T> for anyhow::Result<T> {
    fn exit(self, code: u8, context: &str) -> Outcome<T> {
        self.map_err(|e| Failure {
            code,
            error: e.context(context.to_string()),
        })
    }
}

fn read_text(path: &Path) -> Outcome<String> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .exit(EXIT_VALIDATION, "input")
}

fn load_feeder(path: &Path) -> Outcome<FeederModel> {
    parse_feeder(&read_text(path)?).ctx(&format!("feeder {}", path.display()))
}

fn load_truth(path: &Path) -> Outcome<BTreeMap<String, PhaseLabel>> {
    parse_truth_json(&read_text(path)?).ctx(&format!("truth {}", path.display()))
}

fn load_readings(path: &Path) -> Outcome<MeterReadings> {
    let file = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .exit(EXIT_VALIDATION, "input")?;
    MeterReadings::read_csv(BufReader::new(file)).ctx(&format!("measurements {}", path.display()))
}

fn write_output(path: Option<&Path>, text: &str) -> Outcome<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n"))
            .with_context(|| format!("writing {}", p.display()))
            .exit(EXIT_VALIDATION, "output"),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: Serialize>(value: &T) -> Outcome<String> {
    serde_json::to_string_pretty(value)
        .map_err(anyhow::Error::from)
        .exit(EXIT_VALIDATION, "serializing output")
}

fn configure_jobs(jobs: Option<usize>) -> Outcome<Exec> {
    match jobs {
        Some(0) => Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("--jobs must be at least 1"),
        }),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(anyhow::Error::from)
                .exit(EXIT_VALIDATION, "configuring worker threads")?;
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None => Ok(Exec::Parallel),
    }
}

pub fn run(cli: Cli) -> Outcome<()> {
    let exec = configure_jobs(cli.jobs)?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Identify(a) => identify_cmd(a, exec),
        Command::Evaluate(a) => evaluate(a),
        Command::Validate(a) => validate(a, exec),
        Command::OracleCheck(a) => oracle_check(a, exec),
    }
}

fn simulate(a: SimulateArgs) -> Outcome<()> {
    let model = load_feeder(&a.feeder)?;
    let profiles = match &a.profiles {
        Some(path) => {
            let file = File::open(path)
                .with_context(|| format!("opening {}", path.display()))
                .exit(EXIT_VALIDATION, "input")?;
            let ids: Vec<String> = model.loads.iter().map(|l| l.id.clone()).collect();
            ProfileSource::Given(read_profiles_csv(BufReader::new(file), &ids, a.samples).ctx("profiles")?)
        }
        None => SimulationSpec::default().profiles,
    };
    if a.interval_min <= 0 {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("--interval-min must be positive"),
        });
    }
    let truth = a.truth.as_deref().map(load_truth).transpose()?;
    let spec = SimulationSpec {
        mode: a.mode,
        samples: a.samples,
        profiles,
        noise: a.noise,
        noise_model: a.noise_model,
        quantize: a.quantize,
        penetration: a.penetration,
        seed: a.seed,
        interval: chrono::TimeDelta::minutes(a.interval_min),
        substation: substation(a.substation_phase_sd)?,
        truth,
        ..Default::default()
    };
    let out = generate(&model, &spec).ctx("simulation")?;

    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .exit(EXIT_VALIDATION, "output")?;
    let csv_path = a.out.join("measurements.csv");
    let file = File::create(&csv_path)
        .with_context(|| format!("creating {}", csv_path.display()))
        .exit(EXIT_VALIDATION, "output")?;
    let mut w = BufWriter::new(file);
    out.readings.write_csv(&mut w).ctx("writing measurements")?;
    w.flush()
        .map_err(anyhow::Error::from)
        .exit(EXIT_VALIDATION, "writing measurements")?;
    let truth_json = out.truth_json().ctx("truth")?;
    write_output(Some(&a.out.join("truth.json")), &truth_json)?;
    eprintln!(
        "simulated {} samples for {} of {} loads ({} mode) into {}",
        a.samples,
        out.metered.len(),
        out.truth.len(),
        a.mode,
        a.out.display()
    );
    Ok(())
}

fn substation(phase_sd: f64) -> Outcome<SubstationProfile> {
    if !(phase_sd >= 0.0) {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("--substation-phase-sd must be non-negative"),
        });
    }
    Ok(SubstationProfile {
        per_phase: phase_sd,
        ..Default::default()
    })
}

/// Feeder model used for estimation, with the requested perturbation.
fn estimation_model(m: &ModelArgs) -> Outcome<FeederModel> {
    let model = load_feeder(&m.feeder)?;
    if m.perturb == 0.0 && m.missing_branches.is_empty() {
        return Ok(model);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    perturb_model(&model, m.perturb, &m.missing_branches, &mut rng).ctx("perturbing the feeder model")
}

fn options(m: &ModelArgs, exec: Exec) -> IdentifyOptions {
    IdentifyOptions {
        exec,
        ingest: IngestOptions {
            consumption_positive: m.consumption_positive,
        },
        ..Default::default()
    }
}

fn dump_matrices(model: &FeederModel, dir: &Path, format: MatrixFormat, exec: Exec) -> Outcome<()> {
    let net = reduce_network(model).ctx("reducing the feeder")?;
    let a = remove_substation(
        build_a(&assemble_admittance(&net).ctx("admittance")?).ctx("linearization")?,
    );
    let s = sensitivities_with(&a, exec).ctx("sensitivities")?;
    let reduced = a
        .reduced
        .as_ref()
        .ok_or_else(|| anyhow!("reduced system is unavailable"))
        .exit(EXIT_SOLVER, "dumping matrices")?;
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .exit(EXIT_VALIDATION, "output")?;
    let ext = match format {
        MatrixFormat::Csv => "csv",
        MatrixFormat::Binary => "bin",
    };
    let po = &s.phase_ordered;
    for (name, m) in [
        ("a_reduced", &reduced.matrix),
        ("k", &po.k),
        ("l", &po.l),
        ("k_theta", &po.k_theta),
        ("l_theta", &po.l_theta),
    ] {
        let path = dir.join(format!("{name}.{ext}"));
        let file = File::create(&path)
            .with_context(|| format!("creating {}", path.display()))
            .exit(EXIT_VALIDATION, "output")?;
        write_matrix(m, format, BufWriter::new(file)).ctx("writing matrix")?;
    }
    Ok(())
}

fn identify_cmd(a: IdentifyArgs, exec: Exec) -> Outcome<()> {
    let model = estimation_model(&a.model)?;
    let readings = load_readings(&a.model.measurements)?;
    if let Some(dir) = &a.dump_matrices {
        dump_matrices(&model, dir, a.matrix_format, exec)?;
    }
    let opts = IdentifyOptions {
        diagnostics: a.diagnostics,
        solver: phaseid::slsq::SolverOptions {
            trace: a.diagnostics == phaseid::mmle::DiagnosticsLevel::Full,
            ..Default::default()
        },
        ..options(&a.model, exec)
    };
    let mut report = identify(&model, &readings, &opts).ctx("identification")?;
    if let Some(path) = &a.truth {
        report.score(&load_truth(path)?).ctx("scoring")?;
    }
    let json = report.to_json().ctx("report")?;
    write_output(a.out.as_deref(), &json)?;
    let acc = report.accuracy.map(|x| format!(", accuracy {x:.4}")).unwrap_or_default();
    eprintln!(
        "method {}, sum f_m {:.6e}, {} loads{acc}",
        report.method,
        report.sum_f(),
        report.assignments.len()
    );
    Ok(())
}

#[derive(Serialize)]
struct Evaluation {
    accuracy: f64,
    loads: usize,
    mismatches: Vec<Mismatch>,
}

#[derive(Serialize)]
struct Mismatch {
    load: String,
    assigned: String,
    truth: String,
}

fn read_report(path: &Path) -> Outcome<IdentificationReport> {
    serde_json::from_str(&read_text(path)?)
        .map_err(anyhow::Error::from)
        .exit(EXIT_VALIDATION, &format!("report {}", path.display()))
}

fn evaluate(a: EvaluateArgs) -> Outcome<()> {
    let report = read_report(&a.report)?;
    let truth = load_truth(&a.truth)?;
    let labels = report.labels();
    let acc = accuracy(&labels, &truth).ctx("scoring")?;
    let mismatches = labels
        .iter()
        .filter(|(id, l)| truth[*id] != **l)
        .map(|(id, l)| Mismatch {
            load: id.clone(),
            assigned: l.to_string(),
            truth: truth[id].to_string(),
        })
        .collect();
    let eval = Evaluation {
        accuracy: acc,
        loads: labels.len(),
        mismatches,
    };
    write_output(None, &to_json(&eval)?)
}

#[derive(Serialize)]
struct Validation {
    level: f64,
    autocorrelation_band: f64,
    ks_pass_rate: f64,
    autocorrelation_pass_rate: f64,
    loads: Vec<ResidualSummary>,
}

/// Labels from a truth file or an identification report.
fn read_assignment(path: &Path) -> Outcome<BTreeMap<String, PhaseLabel>> {
    let text = read_text(path)?;
    if let Ok(report) = serde_json::from_str::<IdentificationReport>(&text) {
        return Ok(report.labels());
    }
    parse_truth_json(&text).ctx(&format!("assignment {}", path.display()))
}

fn validate(a: ValidateArgs, exec: Exec) -> Outcome<()> {
    let model = estimation_model(&a.model)?;
    let readings = load_readings(&a.model.measurements)?;
    let opts = options(&a.model, exec);
    let (ds, rs) = prepare_series(std::slice::from_ref(&model), &readings, &opts).ctx("ingestion")?;
    let labels = match &a.assignment {
        Some(path) => read_assignment(path)?,
        None => identify_series(&ds, &rs, &opts).ctx("identification")?.labels(),
    };
    let ordered = ds
        .load_ids
        .iter()
        .map(|id| {
            labels
                .get(id)
                .copied()
                .ok_or_else(|| anyhow!("assignment has no label for load `{id}`"))
        })
        .collect::<anyhow::Result<Vec<_>>>()
        .exit(EXIT_VALIDATION, "assignment")?;
    let x = PhaseAssignment::from_labels(ds.load_ids.clone(), ds.classes.clone(), &ordered).ctx("assignment")?;
    let summaries = (0..ds.m())
        .map(|m| load_residuals(m, &x, &ds, &rs).map(|r| summarize_residuals(&ds.load_ids[m], &r)))
        .collect::<Result<Vec<_>, _>>()
        .ctx("residuals")?;
    let band = 4.0 / (ds.t() as f64).sqrt();
    let n = summaries.len() as f64;
    let ks = summaries.iter().filter(|s| s.ks_p_value.is_some_and(|p| p >= a.level)).count() as f64 / n;
    let ac = summaries
        .iter()
        .filter(|s| s.max_abs_autocorrelation.is_some_and(|r| r <= band))
        .count() as f64
        / n;
    eprintln!(
        "{} loads: KS pass rate {:.1}% at level {}, max |autocorrelation| over lags 1..={AUTOCORRELATION_LAGS} within {band:.4} for {:.1}%",
        summaries.len(),
        100.0 * ks,
        a.level,
        100.0 * ac
    );
    let out = Validation {
        level: a.level,
        autocorrelation_band: band,
        ks_pass_rate: ks,
        autocorrelation_pass_rate: ac,
        loads: summaries,
    };
    write_output(a.out.as_deref(), &to_json(&out)?)
}

fn oracle_check(a: OracleArgs, exec: Exec) -> Outcome<()> {
    let model = load_feeder(&a.feeder)?;
    if model.m() > ORACLE_MAX_LOADS {
        return Err(Failure {
            code: EXIT_VALIDATION,
            error: anyhow!("{} loads; enumeration supports at most {ORACLE_MAX_LOADS}", model.m()),
        });
    }
    let readings = match &a.measurements {
        Some(path) => load_readings(path)?,
        None => {
            let spec = SimulationSpec {
                samples: a.samples,
                seed: a.seed,
                substation: substation(a.substation_phase_sd)?,
                ..Default::default()
            };
            generate(&model, &spec).ctx("simulation")?.readings
        }
    };
    let opts = IdentifyOptions { exec, ..Default::default() };
    let (ds, rs) = prepare_series(std::slice::from_ref(&model), &readings, &opts).ctx("ingestion")?;
    let used = if a.corrupt_sensitivities {
        rs.iter().map(|r| r.rotate_phases(1)).collect()
    } else {
        rs.clone()
    };
    let report = identify_series(&ds, &used, &opts).ctx("identification")?;
    let labels = report.labels();
    let ordered: Vec<PhaseLabel> = ds.load_ids.iter().map(|id| labels[id]).collect();
    let estimate =
        PhaseAssignment::from_labels(ds.load_ids.clone(), ds.classes.clone(), &ordered).ctx("assignment")?;
    let (mins, best) = exhaustive_minimizers(&ds, &rs, exec).ctx("enumeration")?;
    let cmp = compare_with_oracle(&estimate, &ds, &rs, &mins, best).ctx("comparison")?;
    if cmp.matches {
        let note = if cmp.degenerate {
            " (three-phase loads differ only where their triple leaves the objective unchanged)"
        } else {
            ""
        };
        println!("oracle check passed: {} loads, sum f_m {:.6e}{note}", ds.m(), cmp.estimate_sum);
        return Ok(());
    }
    let closest = mins
        .iter()
        .min_by_key(|x| estimate.differences(x, false).len())
        .expect("at least one minimizer");
    let mut diff = String::new();
    for id in &cmp.differing {
        let k = ds.load_ids.iter().position(|x| x == id).expect("known load");
        diff.push_str(&format!("\n  {id}: estimate {}, oracle {}", estimate.label(k), closest.label(k)));
    }
    Err(Failure {
        code: EXIT_ORACLE_MISMATCH,
        error: anyhow!(
            "estimate differs from the exhaustive minimizer (sum f_m {:.6e} vs {:.6e}):{diff}",
            cmp.estimate_sum,
            cmp.oracle_sum
        ),
    })
}
