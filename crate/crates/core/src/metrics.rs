//! Per-round diagnostics and their CSV container.
//!
//! Three quantities summarize a trajectory: the augmented Lagrangian (the
//! merit function the analysis monitors), the proximal-gradient gap `G`
//! (stationarity of the network-average iterate), and the disagreement gap
//! `D` (how far agents have drifted apart). The CSV schema below is the
//! contract shared by the plotting command and the acceptance suite.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{AgentState, RoundOutcome};
use crate::problem::ProblemSpec;
use nalgebra::DVector;

/// Column order of the CSV schema.
pub const CSV_HEADER: [&str; 9] = [
    "r",
    "L",
    "G",
    "D",
    "grad_res",
    "subgrad_res",
    "feas_res",
    "t_r",
    "cumulative_comm",
];

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: header {found:?} does not match the metrics schema {expected:?}")]
    Schema {
        path: PathBuf,
        expected: Vec<String>,
        found: Vec<String>,
    },
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Round index.
    pub r: u64,
    /// Augmented Lagrangian; `inf` when a shared variable violates the
    /// regularizer's constraint set.
    #[serde(rename = "L")]
    pub lagrangian: f64,
    /// Proximal-gradient gap of the average iterate.
    #[serde(rename = "G")]
    pub prox_gradient_gap: f64,
    /// Largest distance of any agent from the average iterate.
    #[serde(rename = "D")]
    pub disagreement_gap: f64,
    pub grad_res: f64,
    pub subgrad_res: f64,
    pub feas_res: f64,
    /// Consensus steps spent this round.
    pub t_r: u64,
    /// Running total of consensus steps.
    pub cumulative_comm: u64,
}

/// Augmented Lagrangian
/// `Σ_i f_i(x_i) + ⟨λ_i, x_i − x_{0,i}⟩ + (β/2)‖x_i − x_{0,i}‖² + (1/n)g(x_{0,i})`.
///
/// Returns `inf` when any shared variable lies outside the regularizer's
/// constraint set (the indicator part of `g` fires); feasible prox outputs
/// make that unreachable in normal runs.
pub fn augmented_lagrangian(states: &[AgentState], problem: &ProblemSpec, beta: f64) -> f64 {
    let n = states.len() as f64;
    let mut total = 0.0;
    for (i, state) in states.iter().enumerate() {
        let gap = &state.x - &state.shared;
        total += problem.local(i).value(&state.x)
            + state.dual.dot(&gap)
            + 0.5 * beta * gap.norm_squared()
            + problem.regularizer().value(&state.shared) / n;
    }
    total
}

/// Proximal-gradient gap
/// `G = ‖x̄ − prox_g(x̄ − Σ_i ∇f_i(x̄))‖` with unit prox parameter and the
/// plain (unscaled) sum of local gradients — the literal benchmark metric,
/// not the `1/n`-scaled proximal-gradient mapping.
pub fn prox_gradient_gap(states: &[AgentState], problem: &ProblemSpec) -> f64 {
    let mean = average_x(states);
    let mut gradient_sum = DVector::<f64>::zeros(mean.len());
    for local in problem.locals() {
        gradient_sum += local.gradient(&mean);
    }
    let target = problem.regularizer().prox(1.0, &(&mean - gradient_sum));
    (mean - target).norm()
}

/// Disagreement gap `D = max_i ‖x_i − x̄‖`.
pub fn disagreement_gap(states: &[AgentState]) -> f64 {
    assert!(!states.is_empty(), "disagreement gap needs at least one agent");
    let mean = average_x(states);
    states
        .iter()
        .map(|s| (&s.x - &mean).norm())
        .fold(0.0f64, f64::max)
}

fn average_x(states: &[AgentState]) -> DVector<f64> {
    let mut mean = DVector::zeros(states[0].x.len());
    for state in states {
        mean += &state.x;
    }
    mean / states.len() as f64
}

/// Assembles the record for a completed round.
pub fn evaluate(
    outcome: &RoundOutcome,
    cumulative_comm: u64,
    states: &[AgentState],
    problem: &ProblemSpec,
    beta: f64,
) -> MetricsRecord {
    MetricsRecord {
        r: outcome.round as u64,
        lagrangian: augmented_lagrangian(states, problem, beta),
        prox_gradient_gap: prox_gradient_gap(states, problem),
        disagreement_gap: disagreement_gap(states),
        grad_res: outcome.residuals.gradient,
        subgrad_res: outcome.residuals.subgradient,
        feas_res: outcome.residuals.feasibility,
        t_r: outcome.consensus_steps as u64,
        cumulative_comm,
    }
}

/// Writes records under the fixed schema. Floats use shortest round-trip
/// formatting (17 significant digits suffice to recover every bit) and
/// `+infinity` serializes as `inf`.
pub fn write_csv(records: &[MetricsRecord], path: &Path) -> Result<(), MetricsError> {
    let mut writer = csv::Writer::from_path(path).map_err(|source| MetricsError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    if records.is_empty() {
        writer
            .write_record(CSV_HEADER)
            .map_err(|source| MetricsError::Csv { path: path.to_path_buf(), source })?;
    }
    for record in records {
        writer
            .serialize(record)
            .map_err(|source| MetricsError::Csv { path: path.to_path_buf(), source })?;
    }
    writer
        .flush()
        .map_err(|source| MetricsError::Io { path: path.to_path_buf(), source })
}

/// Reads a metrics CSV, validating the header against the schema first.
pub fn read_csv(path: &Path) -> Result<Vec<MetricsRecord>, MetricsError> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| MetricsError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let found: Vec<String> = reader
        .headers()
        .map_err(|source| MetricsError::Csv { path: path.to_path_buf(), source })?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != CSV_HEADER {
        return Err(MetricsError::Schema {
            path: path.to_path_buf(),
            expected: CSV_HEADER.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    reader
        .deserialize()
        .collect::<Result<Vec<MetricsRecord>, csv::Error>>()
        .map_err(|source| MetricsError::Csv { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::admm::{RoundOutcome, StopResiduals};
    use crate::problem::instances::QuadraticConsensusInstance;
    use crate::problem::{ConvexRegularizer, ProblemSpec, SmoothLocal};
    use nalgebra::{DMatrix, DVector};

    fn state(x: Vec<f64>, dual: Vec<f64>, shared: Vec<f64>) -> AgentState {
        let x = DVector::from_vec(x);
        let dual = DVector::from_vec(dual);
        AgentState {
            avg_x: x.clone(),
            avg_dual: dual.clone(),
            x,
            dual,
            shared: DVector::from_vec(shared),
        }
    }

    fn half_norm_problem(agents: usize, dim: usize) -> ProblemSpec {
        // f_i(x) = ½‖x‖², g = 0.
        let locals = (0..agents)
            .map(|_| {
                SmoothLocal::quadratic_with_lipschitz(
                    DMatrix::identity(dim, dim) * 0.5,
                    DVector::zeros(dim),
                    0.0,
                    1.0,
                )
            })
            .collect();
        ProblemSpec::new(locals, ConvexRegularizer::zero()).unwrap()
    }

    #[test]
    fn lagrangian_vanishes_at_the_origin() {
        let problem = half_norm_problem(3, 2);
        let states: Vec<_> = (0..3)
            .map(|_| state(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.0, 0.0]))
            .collect();
        assert_eq!(augmented_lagrangian(&states, &problem, 2.0), 0.0);
    }

    #[test]
    fn lagrangian_coupling_terms_vanish_on_consensus() {
        // x_i = x_{0,i}: only Σf_i + (1/n)Σg survive, any duals.
        let problem = half_norm_problem(2, 2);
        let states = vec![
            state(vec![1.0, 1.0], vec![5.0, -3.0], vec![1.0, 1.0]),
            state(vec![-2.0, 0.0], vec![0.1, 0.2], vec![-2.0, 0.0]),
        ];
        let expected = 0.5 * (2.0) + 0.5 * (4.0);
        assert!((augmented_lagrangian(&states, &problem, 7.0) - expected).abs() < 1e-14);
    }

    #[test]
    fn lagrangian_matches_term_by_term_recomputation() {
        let instance = QuadraticConsensusInstance::generate(2, 2, 40);
        let problem = instance.problem();
        let states = vec![
            state(vec![0.3, -0.1], vec![0.2, 0.4], vec![0.1, 0.0]),
            state(vec![-0.2, 0.5], vec![-0.3, 0.1], vec![0.0, 0.4]),
        ];
        let beta = 2.5;
        // Independent summation, scalar by scalar.
        let mut expected = 0.0;
        for (i, s) in states.iter().enumerate() {
            let fx = 0.5 * (&s.x - &instance.centers[i]).norm_squared();
            let mut coupling = 0.0;
            let mut penalty = 0.0;
            for k in 0..2 {
                let gap = s.x[k] - s.shared[k];
                coupling += s.dual[k] * gap;
                penalty += gap * gap;
            }
            expected += fx + coupling + 0.5 * beta * penalty;
        }
        let got = augmented_lagrangian(&states, &problem, beta);
        assert!((got - expected).abs() < 1e-12, "got {got}, expected {expected}");
    }

    #[test]
    fn lagrangian_is_infinite_outside_the_constraint_set() {
        let locals = vec![SmoothLocal::quadratic_with_lipschitz(
            DMatrix::identity(1, 1) * 0.5,
            DVector::zeros(1),
            0.0,
            1.0,
        )];
        let problem = ProblemSpec::new(locals, ConvexRegularizer::l1_ball(1.0, 1.0)).unwrap();
        let states = vec![state(vec![0.0], vec![0.0], vec![5.0])];
        assert!(augmented_lagrangian(&states, &problem, 2.0).is_infinite());
    }

    #[test]
    fn gap_reduces_to_gradient_norm_without_regularizer() {
        let problem = half_norm_problem(2, 2);
        let states = vec![
            state(vec![1.0, 0.0], vec![0.0; 2], vec![0.0; 2]),
            state(vec![3.0, 2.0], vec![0.0; 2], vec![0.0; 2]),
        ];
        // x̄ = (2, 1), Σ∇f_i(x̄) = 2x̄ = (4, 2), gap = ‖x̄ − (x̄ − 2x̄)‖ = ‖2x̄‖.
        let expected: f64 = (DVector::from_vec(vec![2.0, 1.0]) * 2.0).norm();
        assert!((prox_gradient_gap(&states, &problem) - expected).abs() < 1e-14);
    }

    #[test]
    fn gap_vanishes_at_the_quadratic_optimum() {
        let instance = QuadraticConsensusInstance::generate(3, 4, 6);
        let problem = instance.problem();
        let target = instance.minimizer();
        let states: Vec<_> = (0..3)
            .map(|_| AgentState {
                x: target.clone(),
                dual: DVector::zeros(4),
                shared: target.clone(),
                avg_x: target.clone(),
                avg_dual: DVector::zeros(4),
            })
            .collect();
        assert!(prox_gradient_gap(&states, &problem) < 1e-10);
    }

    #[test]
    fn disagreement_examples() {
        let problem = half_norm_problem(2, 1);
        let _ = &problem;
        let equal = vec![
            state(vec![2.0], vec![0.0], vec![0.0]),
            state(vec![2.0], vec![0.0], vec![0.0]),
        ];
        assert_eq!(disagreement_gap(&equal), 0.0);
        let spread = vec![
            state(vec![0.0], vec![0.0], vec![0.0]),
            state(vec![2.0], vec![0.0], vec![0.0]),
        ];
        assert!((disagreement_gap(&spread) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disagreement_matches_brute_force_on_random_states() {
        let states = vec![
            state(vec![0.4, -1.0], vec![0.0; 2], vec![0.0; 2]),
            state(vec![1.2, 0.3], vec![0.0; 2], vec![0.0; 2]),
            state(vec![-0.7, 0.9], vec![0.0; 2], vec![0.0; 2]),
        ];
        let mut mean = [0.0; 2];
        for s in &states {
            mean[0] += s.x[0] / 3.0;
            mean[1] += s.x[1] / 3.0;
        }
        let brute = states
            .iter()
            .map(|s| ((s.x[0] - mean[0]).powi(2) + (s.x[1] - mean[1]).powi(2)).sqrt())
            .fold(0.0f64, f64::max);
        assert!((disagreement_gap(&states) - brute).abs() < 1e-12);
    }

    fn sample_records() -> Vec<MetricsRecord> {
        vec![
            MetricsRecord {
                r: 0,
                lagrangian: -1.25e-3,
                prox_gradient_gap: 0.1 + 0.2, // deliberately non-representable
                disagreement_gap: 1e-300,
                grad_res: 0.0,
                subgrad_res: 3.5,
                feas_res: 7.0 / 3.0,
                t_r: 1,
                cumulative_comm: 1,
            },
            MetricsRecord {
                r: 1,
                lagrangian: f64::INFINITY,
                prox_gradient_gap: 2.0,
                disagreement_gap: 0.0,
                grad_res: 1e-17,
                subgrad_res: 0.5,
                feas_res: 0.25,
                t_r: 3,
                cumulative_comm: 4,
            },
        ]
    }

    #[test]
    fn csv_round_trips_bit_exactly_including_infinity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        let records = sample_records();
        write_csv(&records, &path).unwrap();
        let reread = read_csv(&path).unwrap();
        assert_eq!(records, reread);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("r,L,G,D,grad_res,subgrad_res,feas_res,t_r,cumulative_comm\n"));
        assert!(text.contains("inf"));
    }

    #[test]
    fn empty_record_list_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        write_csv(&[], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "r,L,G,D,grad_res,subgrad_res,feas_res,t_r,cumulative_comm\n");
        assert!(read_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn schema_mismatch_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "r,L,G\n0,1,2\n").unwrap();
        match read_csv(&path) {
            Err(MetricsError::Schema { path: p, .. }) => assert_eq!(p, path),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn missing_file_carries_path_context() {
        let err = read_csv(Path::new("/nonexistent/metrics.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/metrics.csv"));
    }

    #[test]
    fn evaluate_collects_round_fields() {
        let problem = half_norm_problem(2, 1);
        let states = vec![
            state(vec![1.0], vec![-1.0], vec![1.0]),
            state(vec![1.0], vec![-1.0], vec![1.0]),
        ];
        let outcome = RoundOutcome {
            round: 7,
            consensus_steps: 4,
            residuals: StopResiduals { gradient: 0.1, subgradient: 0.2, feasibility: 0.3 },
            stopped: false,
        };
        let record = evaluate(&outcome, 11, &states, &problem, 2.0);
        assert_eq!(record.r, 7);
        assert_eq!(record.t_r, 4);
        assert_eq!(record.cumulative_comm, 11);
        assert_eq!(record.grad_res, 0.1);
        assert_eq!(record.disagreement_gap, 0.0);
    }
}
