use cheaptalk_core::classify::{classify, Existence};
use cheaptalk_core::equilibrium::{
    construct_reveal_plus_quantize, solve_fixed_point, solve_scalar_biased, verify_equilibrium,
    verify_linear_equilibrium, ActionSet, ConvergenceStatus, EncoderPolicy, SolverConfig,
};
use cheaptalk_core::ratedist::{
    achievable_tuple, asymptotic_experiment, game_rate_bound, team_rate_distortion, write_asymptotic_csv,
};
use cheaptalk_core::sources::{Budget, SourceModel};
use cheaptalk_core::transforms::{bias_aligning_transform, helmert_transform, pair_transform_2d};
use cheaptalk_core::Error;
use serde_json::{json, Value};

use crate::config::{Command, PolicyBlock, RdBlock, RunConfig, SweepBlock, TransformBlock, TransformKind};

pub const EXIT_OK: u8 = 0;
pub const EXIT_REJECTED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Why a run produced no record.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::BinDeath { .. } | Error::InsufficientWindow { .. } | Error::BudgetTooSmall(_) | Error::Infeasible { .. } => {
                Failure::Numerical(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

/// A computed result: the record payload, an optional CSV table and the
/// exit code it implies.
pub struct Outcome {
    pub result: Value,
    pub table: Option<Table>,
    pub code: u8,
}

pub enum Table {
    Rows { header: Vec<String>, rows: Vec<Vec<String>> },
    Asymptotic(Vec<cheaptalk_core::ratedist::AsymptoticRow>),
}

impl Table {
    fn rows(header: &[&str], rows: Vec<Vec<String>>) -> Self {
        Table::Rows { header: header.iter().map(|h| h.to_string()).collect(), rows }
    }

    pub fn write<W: std::io::Write>(&self, writer: W) -> Result<(), String> {
        match self {
            Table::Asymptotic(rows) => write_asymptotic_csv(rows, writer).map_err(|e| e.to_string()),
            Table::Rows { header, rows } => {
                let mut out = csv::Writer::from_writer(writer);
                out.write_record(header).map_err(|e| e.to_string())?;
                for r in rows {
                    out.write_record(r).map_err(|e| e.to_string())?;
                }
                out.flush().map_err(|e| e.to_string())
            }
        }
    }
}

/// A validated command, ready to run.
pub enum Job {
    Solve { source: SourceModel, bias: Vec<f64>, k: usize, solver: SolverConfig },
    Verify { source: SourceModel, bias: Vec<f64>, policy: PlannedPolicy, budget: Budget },
    Classify { source: SourceModel, bias: Vec<f64> },
    Rd(RdBlock),
    Transform { block: TransformBlock, bias: Vec<f64> },
    Sweep { block: SweepBlock, budget: Budget },
}

pub enum PlannedPolicy {
    FixedPoint { k: usize, solver: SolverConfig },
    Fixed(EncoderPolicy),
    RevealPlusQuantize { k_last: usize, grid_levels: usize },
    Linear,
}

fn source_and_bias(config: &RunConfig) -> Result<(SourceModel, Vec<f64>), Failure> {
    let block = config.source.as_ref().ok_or_else(|| Failure::Config("a [source] block is required".into()))?;
    let source = block.build()?;
    if config.bias.len() != source.dim() {
        return Err(Failure::Config(format!(
            "bias has {} components but the source has dimension {}",
            config.bias.len(),
            source.dim()
        )));
    }
    if config.bias.iter().any(|b| !b.is_finite()) {
        return Err(Failure::Config("bias must be finite".into()));
    }
    Ok((source, config.bias.clone()))
}

fn budget(config: &RunConfig) -> Budget {
    Budget::with_samples(config.solver.samples, config.solver.seed)
}

fn solver(config: &RunConfig) -> Result<SolverConfig, Failure> {
    let s = &config.solver;
    let solver = SolverConfig {
        tolerance: s.tolerance,
        max_iterations: s.max_iterations,
        damping: s.damping,
        budget: budget(config),
        init: s.init,
    };
    solver.validate()?;
    if s.k == 0 {
        return Err(Failure::Config("solver.k must be at least 1".into()));
    }
    Ok(solver)
}

fn required<T: Clone>(block: &Option<T>, name: &str) -> Result<T, Failure> {
    block.clone().ok_or_else(|| Failure::Config(format!("a [{name}] block is required")))
}

/// Checks everything that can be checked without computing.
pub fn plan(command: Command, config: &RunConfig) -> Result<Job, Failure> {
    if let Some(c) = config.command {
        if c != command {
            return Err(Failure::Config(format!("config is for `{}`, not `{}`", c.name(), command.name())));
        }
    }
    Ok(match command {
        Command::Solve => {
            let (source, bias) = source_and_bias(config)?;
            Job::Solve { source, bias, k: config.solver.k, solver: solver(config)? }
        }
        Command::Verify => {
            let (source, bias) = source_and_bias(config)?;
            let policy = match config.policy.clone().unwrap_or(PolicyBlock::FixedPoint) {
                PolicyBlock::FixedPoint => PlannedPolicy::FixedPoint { k: config.solver.k, solver: solver(config)? },
                PolicyBlock::Actions { actions } => {
                    let actions = ActionSet::new(actions)?;
                    if actions.dim() != source.dim() {
                        return Err(Failure::Config(format!(
                            "actions have dimension {} but the source has {}",
                            actions.dim(),
                            source.dim()
                        )));
                    }
                    PlannedPolicy::Fixed(EncoderPolicy::Quantizer { actions })
                }
                PolicyBlock::RevealPlusQuantize => {
                    PlannedPolicy::RevealPlusQuantize { k_last: config.solver.k, grid_levels: config.solver.grid_levels }
                }
                PolicyBlock::Linear => PlannedPolicy::Linear,
            };
            Job::Verify { source, bias, policy, budget: budget(config) }
        }
        Command::Classify => {
            let (source, bias) = source_and_bias(config)?;
            Job::Classify { source, bias }
        }
        Command::Rd => Job::Rd(required(&config.rd, "rd")?),
        Command::Transform => Job::Transform { block: required(&config.transform, "transform")?, bias: config.bias.clone() },
        Command::Sweep => Job::Sweep { block: required(&config.sweep, "sweep")?, budget: budget(config) },
    })
}

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn passed_code(passed: bool) -> u8 {
    if passed {
        EXIT_OK
    } else {
        EXIT_REJECTED
    }
}

pub fn execute(job: Job) -> Result<Outcome, Failure> {
    match job {
        Job::Solve { source, bias, k, .. } if source.dim() == 1 => {
            let q = match solve_scalar_biased(&source, bias[0], k) {
                Ok(q) => q,
                Err(Error::Infeasible { requested, max_feasible }) => {
                    return Ok(Outcome {
                        result: json!({
                            "method": "scalar-shooting",
                            "infeasible": { "requested": requested, "max_feasible": max_feasible },
                        }),
                        table: None,
                        code: EXIT_REJECTED,
                    });
                }
                Err(e) => return Err(e.into()),
            };
            let mut lower = vec![f64::NEG_INFINITY];
            lower.extend_from_slice(&q.boundaries);
            let rows = q
                .actions
                .iter()
                .enumerate()
                .map(|(i, u)| {
                    let upper = q.boundaries.get(i).copied().unwrap_or(f64::INFINITY);
                    vec![i.to_string(), lower[i].to_string(), upper.to_string(), u.to_string()]
                })
                .collect();
            Ok(Outcome {
                result: json!({ "method": "scalar-shooting", "quantizer": q }),
                table: Some(Table::rows(&["bin", "lower", "upper", "action"], rows)),
                code: EXIT_OK,
            })
        }
        Job::Solve { source, bias, k, solver } => {
            let out = solve_fixed_point(&source, &bias, k, &solver)?;
            let rows = out
                .trace
                .iter()
                .map(|r| vec![r.iteration.to_string(), r.movement.to_string(), r.damping.to_string()])
                .collect();
            let code = match out.status {
                ConvergenceStatus::Converged => EXIT_OK,
                ConvergenceStatus::MaxIterations => EXIT_NUMERICAL,
            };
            Ok(Outcome {
                result: json!({
                    "method": "fixed-point",
                    "actions": out.actions.to_vecs(),
                    "status": out.status,
                    "iterations": out.iterations,
                    "restarts": out.restarts,
                }),
                table: Some(Table::rows(&["iteration", "movement", "damping"], rows)),
                code,
            })
        }
        Job::Verify { source, bias, policy, budget } => {
            let policy = match policy {
                PlannedPolicy::Linear => {
                    let report = verify_linear_equilibrium(&source, &bias, &budget)?;
                    let rows = report
                        .curve
                        .grid
                        .iter()
                        .zip(&report.curve.values)
                        .map(|(t, v)| vec![t.to_string(), v.value.to_string(), v.stderr.to_string()])
                        .collect();
                    return Ok(Outcome {
                        code: passed_code(report.passed),
                        result: json!({ "policy": "linear-reveal", "report": report }),
                        table: Some(Table::rows(&["t", "curve", "stderr"], rows)),
                    });
                }
                PlannedPolicy::Fixed(p) => p,
                PlannedPolicy::FixedPoint { k, solver } => {
                    let out = solve_fixed_point(&source, &bias, k, &solver)?;
                    EncoderPolicy::Quantizer { actions: out.actions }
                }
                PlannedPolicy::RevealPlusQuantize { k_last, grid_levels } => {
                    construct_reveal_plus_quantize(&source, &bias, k_last, Some(grid_levels))?
                }
            };
            let cert = verify_equilibrium(&policy, &source, &bias, &budget)?;
            let rows = cert
                .centroids
                .iter()
                .map(|c| {
                    vec![
                        c.index.to_string(),
                        c.samples.to_string(),
                        c.mass.to_string(),
                        c.residual.to_string(),
                        c.stderr.to_string(),
                        c.analytic.to_string(),
                        c.passed.to_string(),
                    ]
                })
                .collect();
            Ok(Outcome {
                code: passed_code(cert.passed),
                result: json!({ "policy": policy, "certificate": cert }),
                table: Some(Table::rows(&["bin", "samples", "mass", "residual", "stderr", "analytic", "passed"], rows)),
            })
        }
        Job::Classify { source, bias } => {
            let verdict = classify(&source, &bias)?;
            let code = if verdict.exists == Existence::No { EXIT_REJECTED } else { EXIT_OK };
            Ok(Outcome { result: to_value(&verdict), table: None, code })
        }
        Job::Rd(rd) => {
            let achievable = match (rd.rate_team, rd.d_team) {
                (Some(r), Some(d)) => Some(achievable_tuple(rd.sigma_sq, r, d, rd.b)?),
                (None, None) => None,
                _ => return Err(Failure::Config("rd.rate_team and rd.d_team go together".into())),
            };
            Ok(Outcome {
                result: json!({
                    "team_rate": team_rate_distortion(rd.sigma_sq, rd.dd)?,
                    "game_rate_bound": game_rate_bound(rd.sigma_sq, rd.b, rd.de, rd.dd)?,
                    "achievable": achievable,
                }),
                table: None,
                code: EXIT_OK,
            })
        }
        Job::Transform { block, bias } => {
            let t = match block.kind {
                TransformKind::Pair => pair_transform_2d(&bias)?,
                TransformKind::BiasAligning => bias_aligning_transform(&bias)?,
                TransformKind::Helmert => {
                    let n = block.dim.unwrap_or(bias.len());
                    let t = helmert_transform(n)?;
                    if bias.is_empty() {
                        t
                    } else {
                        t.with_bias(&bias)?
                    }
                }
            };
            let header: Vec<String> = (1..=t.forward.dim()).map(|j| format!("m{j}")).collect();
            let rows = t.forward.rows().map(|r| r.iter().map(f64::to_string).collect()).collect();
            Ok(Outcome { result: to_value(&t), table: Some(Table::Rows { header, rows }), code: EXIT_OK })
        }
        Job::Sweep { block, budget } => {
            let rows = asymptotic_experiment(block.sigma_sq, block.b, block.rate, &block.n_list, &budget)?;
            Ok(Outcome { result: json!({ "rows": rows }), table: Some(Table::Asymptotic(rows)), code: EXIT_OK })
        }
    }
}
