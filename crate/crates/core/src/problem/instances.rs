//! Shipped problem instances and their reproducible on-disk container.
//!
//! Instances are fully determined by their header parameters plus a seed, and
//! the container stores the sampled data anyway so a run can be replayed from
//! the file alone, independent of generator evolution.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use super::{ConvexRegularizer, ProblemSpec, SmoothLocal};

/// Penalty margin over `L_max` used when a run does not pin `beta` itself.
/// For the sparse-PCA instance this equals a factor 2.05 over
/// `max_i λ_max(P_iᵀP_i)`, a 2.5% margin above the threshold that makes every
/// agent subproblem strongly convex with a closed-form solve.
pub const DEFAULT_PENALTY_MARGIN: f64 = 1.025;

/// Default penalty for a problem: `DEFAULT_PENALTY_MARGIN · L_max`.
pub fn default_penalty(problem: &ProblemSpec) -> f64 {
    DEFAULT_PENALTY_MARGIN * problem.l_max()
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("instance file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Sparse-PCA benchmark: agent `i` holds a data block `P_i` and the local
/// term `f_i(x) = −‖P_i x‖²`; the shared regularizer is
/// `lambda·‖·‖₁ + indicator(‖·‖ ≤ 1)`.
#[derive(Debug, Clone)]
pub struct SparsePcaInstance {
    pub agents: usize,
    pub dim: usize,
    pub rows_per_agent: usize,
    pub l1_weight: f64,
    pub noise_std: f64,
    pub seed: u64,
    /// One `rows_per_agent × dim` block per agent.
    pub data_blocks: Vec<DMatrix<f64>>,
}

impl SparsePcaInstance {
    /// Samples every entry of every block i.i.d. from `N(0, noise_std²)`,
    /// agent by agent in row-major order, so a seed pins the bytes.
    pub fn generate(
        agents: usize,
        dim: usize,
        rows_per_agent: usize,
        l1_weight: f64,
        noise_std: f64,
        seed: u64,
    ) -> Self {
        assert!(agents >= 1 && dim >= 1 && rows_per_agent >= 1);
        assert!(l1_weight >= 0.0 && noise_std > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, noise_std).expect("valid std");
        let data_blocks = (0..agents)
            .map(|_| {
                let entries: Vec<f64> = (0..rows_per_agent * dim)
                    .map(|_| normal.sample(&mut rng))
                    .collect();
                DMatrix::from_row_slice(rows_per_agent, dim, &entries)
            })
            .collect();
        SparsePcaInstance {
            agents,
            dim,
            rows_per_agent,
            l1_weight,
            noise_std,
            seed,
            data_blocks,
        }
    }

    /// Local terms `f_i(x) = −xᵀP_iᵀP_i x` with `L_i = 2·λ_max(P_iᵀP_i)`,
    /// plus the l1-plus-ball regularizer.
    pub fn problem(&self) -> ProblemSpec {
        let locals = self
            .data_blocks
            .iter()
            .map(|p| {
                let gram = p.transpose() * p;
                let top_eigenvalue = gram
                    .symmetric_eigenvalues()
                    .iter()
                    .fold(0.0f64, |acc, &v| acc.max(v));
                SmoothLocal::quadratic_with_lipschitz(
                    -gram,
                    DVector::zeros(self.dim),
                    0.0,
                    2.0 * top_eigenvalue,
                )
            })
            .collect();
        ProblemSpec::new(locals, ConvexRegularizer::l1_ball(self.l1_weight, 1.0))
            .expect("generated instance is well formed")
    }
}

/// Convex smoke-test instance: `f_i(x) = ½‖x − a_i‖²` with `g = 0`. The
/// global minimizer is the mean of the centers, which gives every driver a
/// closed-form target.
#[derive(Debug, Clone)]
pub struct QuadraticConsensusInstance {
    pub centers: Vec<DVector<f64>>,
    pub scale: f64,
    pub seed: u64,
}

impl QuadraticConsensusInstance {
    pub fn generate(agents: usize, dim: usize, seed: u64) -> Self {
        assert!(agents >= 1 && dim >= 1);
        let scale = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("valid std");
        let centers = (0..agents)
            .map(|_| DVector::from_iterator(dim, (0..dim).map(|_| normal.sample(&mut rng))))
            .collect();
        QuadraticConsensusInstance { centers, scale, seed }
    }

    pub fn with_centers(centers: Vec<DVector<f64>>) -> Self {
        assert!(!centers.is_empty());
        QuadraticConsensusInstance { centers, scale: 1.0, seed: 0 }
    }

    pub fn agents(&self) -> usize {
        self.centers.len()
    }

    pub fn dim(&self) -> usize {
        self.centers[0].len()
    }

    /// Mean of the centers: the unique global minimizer.
    pub fn minimizer(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for c in &self.centers {
            mean += c;
        }
        mean / self.agents() as f64
    }

    pub fn problem(&self) -> ProblemSpec {
        let dim = self.dim();
        let locals = self
            .centers
            .iter()
            .map(|a| {
                SmoothLocal::quadratic_with_lipschitz(
                    DMatrix::identity(dim, dim) * 0.5,
                    -a.clone(),
                    0.5 * a.norm_squared(),
                    1.0,
                )
            })
            .collect();
        ProblemSpec::new(locals, ConvexRegularizer::zero())
            .expect("generated instance is well formed")
    }
}

/// Sparse-PCA instance as a [`ProblemSpec`].
pub fn make_sparse_pca(
    agents: usize,
    dim: usize,
    rows_per_agent: usize,
    l1_weight: f64,
    noise_std: f64,
    seed: u64,
) -> ProblemSpec {
    SparsePcaInstance::generate(agents, dim, rows_per_agent, l1_weight, noise_std, seed).problem()
}

/// Quadratic-consensus instance as a [`ProblemSpec`].
pub fn make_quadratic_consensus(agents: usize, dim: usize, seed: u64) -> ProblemSpec {
    QuadraticConsensusInstance::generate(agents, dim, seed).problem()
}

/// A serializable instance of either shipped family.
#[derive(Debug, Clone)]
pub enum Instance {
    SparsePca(SparsePcaInstance),
    QuadraticConsensus(QuadraticConsensusInstance),
}

impl Instance {
    pub fn problem(&self) -> ProblemSpec {
        match self {
            Instance::SparsePca(i) => i.problem(),
            Instance::QuadraticConsensus(i) => i.problem(),
        }
    }

    pub fn agents(&self) -> usize {
        match self {
            Instance::SparsePca(i) => i.agents,
            Instance::QuadraticConsensus(i) => i.agents(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Instance::SparsePca(i) => i.dim,
            Instance::QuadraticConsensus(i) => i.dim(),
        }
    }

    /// Text container: a kind line, a header line
    /// (`n p m lambda sigma seed`), then the matrix payload row-major, one
    /// whitespace-separated row per line. Floats use Rust's shortest
    /// round-trip formatting, so writing is bit-deterministic and reading
    /// recovers every value exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Instance::SparsePca(i) => {
                out.push_str("dadmm-instance v1 sparse_pca\n");
                out.push_str(&format!(
                    "n={} p={} m={} lambda={} sigma={} seed={}\n",
                    i.agents, i.dim, i.rows_per_agent, i.l1_weight, i.noise_std, i.seed
                ));
                for block in &i.data_blocks {
                    for r in 0..block.nrows() {
                        push_row(&mut out, block.row(r).iter());
                    }
                }
            }
            Instance::QuadraticConsensus(i) => {
                out.push_str("dadmm-instance v1 quadratic\n");
                out.push_str(&format!(
                    "n={} p={} m=0 lambda=0 sigma={} seed={}\n",
                    i.agents(),
                    i.dim(),
                    i.scale,
                    i.seed
                ));
                for center in &i.centers {
                    push_row(&mut out, center.iter());
                }
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, InstanceError> {
        let mut lines = text.lines().enumerate();
        let (_, kind_line) = lines.next().ok_or_else(|| InstanceError::Parse {
            line: 1,
            reason: "empty file".into(),
        })?;
        let kind = match kind_line.trim() {
            "dadmm-instance v1 sparse_pca" => "sparse_pca",
            "dadmm-instance v1 quadratic" => "quadratic",
            other => {
                return Err(InstanceError::Parse {
                    line: 1,
                    reason: format!("unrecognized header {other:?}"),
                })
            }
        };
        let (_, header) = lines.next().ok_or_else(|| InstanceError::Parse {
            line: 2,
            reason: "missing parameter line".into(),
        })?;
        let header = parse_header(header)?;

        let expected_rows = if kind == "sparse_pca" {
            header.agents * header.rows
        } else {
            header.agents
        };
        let mut rows = Vec::with_capacity(expected_rows);
        for (idx, raw) in lines {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(header.dim);
            for field in trimmed.split_whitespace() {
                row.push(field.parse::<f64>().map_err(|_| InstanceError::Parse {
                    line,
                    reason: format!("invalid float {field:?}"),
                })?);
            }
            if row.len() != header.dim {
                return Err(InstanceError::Parse {
                    line,
                    reason: format!("row has {} entries, expected {}", row.len(), header.dim),
                });
            }
            rows.push(row);
        }
        if rows.len() != expected_rows {
            return Err(InstanceError::Parse {
                line: text.lines().count(),
                reason: format!("found {} data rows, expected {expected_rows}", rows.len()),
            });
        }

        if kind == "sparse_pca" {
            let data_blocks = (0..header.agents)
                .map(|i| {
                    let flat: Vec<f64> = rows[i * header.rows..(i + 1) * header.rows]
                        .iter()
                        .flatten()
                        .copied()
                        .collect();
                    DMatrix::from_row_slice(header.rows, header.dim, &flat)
                })
                .collect();
            Ok(Instance::SparsePca(SparsePcaInstance {
                agents: header.agents,
                dim: header.dim,
                rows_per_agent: header.rows,
                l1_weight: header.lambda,
                noise_std: header.sigma,
                seed: header.seed,
                data_blocks,
            }))
        } else {
            let centers = rows
                .into_iter()
                .map(|r| DVector::from_vec(r))
                .collect();
            Ok(Instance::QuadraticConsensus(QuadraticConsensusInstance {
                centers,
                scale: header.sigma,
                seed: header.seed,
            }))
        }
    }

    pub fn write_file(&self, path: &Path) -> Result<(), InstanceError> {
        let io_err = |source| InstanceError::Io { path: path.to_path_buf(), source };
        let mut file = std::fs::File::create(path).map_err(io_err)?;
        file.write_all(self.to_text().as_bytes())
            .map_err(|source| InstanceError::Io { path: path.to_path_buf(), source })
    }

    pub fn read_file(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

fn push_row<'a>(out: &mut String, values: impl Iterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{v}"));
        first = false;
    }
    out.push('\n');
}

struct Header {
    agents: usize,
    dim: usize,
    rows: usize,
    lambda: f64,
    sigma: f64,
    seed: u64,
}

fn parse_header(line: &str) -> Result<Header, InstanceError> {
    let mut agents = None;
    let mut dim = None;
    let mut rows = None;
    let mut lambda = None;
    let mut sigma = None;
    let mut seed = None;
    for field in line.split_whitespace() {
        let (key, value) = field.split_once('=').ok_or_else(|| InstanceError::Parse {
            line: 2,
            reason: format!("expected key=value, got {field:?}"),
        })?;
        let bad = |reason: String| InstanceError::Parse { line: 2, reason };
        match key {
            "n" => agents = Some(value.parse().map_err(|_| bad(format!("bad n {value:?}")))?),
            "p" => dim = Some(value.parse().map_err(|_| bad(format!("bad p {value:?}")))?),
            "m" => rows = Some(value.parse().map_err(|_| bad(format!("bad m {value:?}")))?),
            "lambda" => {
                lambda = Some(value.parse().map_err(|_| bad(format!("bad lambda {value:?}")))?)
            }
            "sigma" => {
                sigma = Some(value.parse().map_err(|_| bad(format!("bad sigma {value:?}")))?)
            }
            "seed" => seed = Some(value.parse().map_err(|_| bad(format!("bad seed {value:?}")))?),
            other => {
                return Err(InstanceError::Parse {
                    line: 2,
                    reason: format!("unknown header key {other:?}"),
                })
            }
        }
    }
    let missing = |name: &str| InstanceError::Parse {
        line: 2,
        reason: format!("missing header key {name}"),
    };
    Ok(Header {
        agents: agents.ok_or_else(|| missing("n"))?,
        dim: dim.ok_or_else(|| missing("p"))?,
        rows: rows.ok_or_else(|| missing("m"))?,
        lambda: lambda.ok_or_else(|| missing("lambda"))?,
        sigma: sigma.ok_or_else(|| missing("sigma"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_pca_is_deterministic_per_seed() {
        let a = SparsePcaInstance::generate(3, 4, 2, 1.0, 0.1, 7);
        let b = SparsePcaInstance::generate(3, 4, 2, 1.0, 0.1, 7);
        let c = SparsePcaInstance::generate(3, 4, 2, 1.0, 0.1, 8);
        assert_eq!(a.data_blocks, b.data_blocks);
        assert_ne!(a.data_blocks, c.data_blocks);
    }

    #[test]
    fn sparse_pca_lipschitz_matches_hand_value() {
        // Force P = [2]: f(x) = −4x², L = 2·λ_max(PᵀP) = 8.
        let mut instance = SparsePcaInstance::generate(1, 1, 1, 0.5, 0.1, 0);
        instance.data_blocks[0][(0, 0)] = 2.0;
        let problem = instance.problem();
        assert!((problem.l_max() - 8.0).abs() < 1e-12);
        // Gradient −2PᵀP·x = −8x.
        let g = problem.local(0).gradient(&DVector::from_vec(vec![3.0]));
        assert!((g[0] + 24.0).abs() < 1e-12);
    }

    #[test]
    fn paper_scale_shape_is_generated_lazily_checked_small() {
        // Same generator as the full-scale experiment, desk-sized here.
        let instance = SparsePcaInstance::generate(4, 8, 5, 10.0, 0.1, 3);
        assert_eq!(instance.data_blocks.len(), 4);
        assert_eq!(instance.data_blocks[0].nrows(), 5);
        assert_eq!(instance.data_blocks[0].ncols(), 8);
    }

    #[test]
    fn quadratic_minimizer_of_basis_centers_is_uniform() {
        let n = 4;
        let centers = (0..n)
            .map(|i| DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 }))
            .collect();
        let instance = QuadraticConsensusInstance::with_centers(centers);
        let m = instance.minimizer();
        for k in 0..n {
            assert!((m[k] - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn single_agent_minimizer_is_its_center() {
        let center = DVector::from_vec(vec![2.0, -1.0]);
        let instance = QuadraticConsensusInstance::with_centers(vec![center.clone()]);
        assert_eq!(instance.minimizer(), center);
    }

    #[test]
    fn instance_text_round_trips_exactly() {
        let original = Instance::SparsePca(SparsePcaInstance::generate(2, 3, 2, 1.5, 0.1, 11));
        let text = original.to_text();
        let reread = Instance::from_text(&text).unwrap();
        assert_eq!(text, reread.to_text());
        match (&original, &reread) {
            (Instance::SparsePca(a), Instance::SparsePca(b)) => {
                assert_eq!(a.data_blocks, b.data_blocks);
                assert_eq!(a.seed, b.seed);
            }
            _ => panic!("kind changed in round trip"),
        }

        let quad = Instance::QuadraticConsensus(QuadraticConsensusInstance::generate(3, 2, 5));
        let requad = Instance::from_text(&quad.to_text()).unwrap();
        assert_eq!(quad.to_text(), requad.to_text());
    }

    #[test]
    fn instance_parse_errors_carry_line_numbers() {
        let err = Instance::from_text("dadmm-instance v1 sparse_pca\nn=2 p=2\n").unwrap_err();
        match err {
            InstanceError::Parse { line: 2, .. } => {}
            other => panic!("expected parse error on line 2, got {other:?}"),
        }
        let err = Instance::from_text(
            "dadmm-instance v1 quadratic\nn=1 p=2 m=0 lambda=0 sigma=1 seed=0\n1 stop\n",
        )
        .unwrap_err();
        match err {
            InstanceError::Parse { line: 3, .. } => {}
            other => panic!("expected parse error on line 3, got {other:?}"),
        }
    }

    #[test]
    fn default_penalty_clears_l_max() {
        let problem = make_sparse_pca(3, 5, 4, 1.0, 0.1, 2);
        assert!(default_penalty(&problem) > problem.l_max());
    }
}
