//! Objective oracles and the per-agent subproblem solver.
//!
//! An instance of the composite objective is a set of smooth local terms
//! ([`SmoothLocal`]) plus one convex, possibly nonsmooth regularizer
//! ([`ConvexRegularizer`]) shared by all agents. Each outer round asks every
//! agent to minimize its local term plus a dual pairing and a quadratic
//! penalty tying it to the shared variable; with a penalty above the local
//! Lipschitz constant that subproblem is strongly convex and is solved here
//! either by a cached symmetric factorization (quadratic objectives) or by
//! accelerated gradient descent (arbitrary smooth oracles).

pub mod instances;
pub mod prox;

use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

use prox::{prox_l1_ball, soft_threshold};

/// Relative stationarity tolerance enforced by every subproblem solve:
/// `‖∇f(x) + λ + β(x − x0)‖ ≤ SUBPROBLEM_TOL·(1 + ‖x‖)`.
pub const SUBPROBLEM_TOL: f64 = 1e-9;

/// Relative slack when testing membership of the regularizer's constraint
/// set, absorbing the rounding of a radial projection.
const FEASIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("penalty beta = {beta} must exceed the local Lipschitz constant {lipschitz}")]
    PenaltyTooSmall { beta: f64, lipschitz: f64 },
    #[error("subproblem system beta*I + 2A is not positive definite")]
    IndefiniteSubproblem,
    #[error("subproblem solver stalled after {iterations} iterations (residual {residual:.3e})")]
    SubproblemStalled { iterations: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("a problem needs at least one local objective")]
    Empty,
}

/// Quadratic data `f(x) = xᵀ·matrix·x + linear·x + constant` with a symmetric
/// `matrix`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub matrix: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

enum LocalOracle {
    Quadratic(QuadraticForm),
    Custom {
        value: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
        gradient: Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>,
    },
}

/// One agent's smooth objective term: value and gradient oracles plus a
/// gradient Lipschitz constant.
pub struct SmoothLocal {
    dim: usize,
    lipschitz: f64,
    oracle: LocalOracle,
}

impl SmoothLocal {
    /// Quadratic local term; the Lipschitz constant `2·max|eig(matrix)|` is
    /// computed by a dense symmetric eigendecomposition.
    pub fn quadratic(matrix: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Self {
        let lipschitz = 2.0 * matrix
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()));
        Self::quadratic_with_lipschitz(matrix, linear, constant, lipschitz)
    }

    /// Quadratic local term with a caller-supplied Lipschitz constant, for
    /// callers that already know `2·max|eig(matrix)|`.
    pub fn quadratic_with_lipschitz(
        matrix: DMatrix<f64>,
        linear: DVector<f64>,
        constant: f64,
        lipschitz: f64,
    ) -> Self {
        let dim = linear.len();
        assert_eq!(matrix.nrows(), dim, "quadratic matrix/vector size mismatch");
        assert_eq!(matrix.ncols(), dim, "quadratic matrix must be square");
        let scale = matrix.norm().max(1.0);
        for i in 0..dim {
            for j in 0..i {
                assert!(
                    (matrix[(i, j)] - matrix[(j, i)]).abs() <= 1e-9 * scale,
                    "quadratic matrix must be symmetric"
                );
            }
        }
        assert!(lipschitz > 0.0, "Lipschitz constant must be positive");
        SmoothLocal {
            dim,
            lipschitz,
            oracle: LocalOracle::Quadratic(QuadraticForm { matrix, linear, constant }),
        }
    }

    /// Local term defined by arbitrary value/gradient oracles.
    pub fn from_oracles(
        dim: usize,
        lipschitz: f64,
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        assert!(lipschitz > 0.0, "Lipschitz constant must be positive");
        SmoothLocal {
            dim,
            lipschitz,
            oracle: LocalOracle::Custom {
                value: Arc::new(value),
                gradient: Arc::new(gradient),
            },
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Gradient Lipschitz constant `L`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Quadratic data when this local term was built from one.
    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        match &self.oracle {
            LocalOracle::Quadratic(q) => Some(q),
            LocalOracle::Custom { .. } => None,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.oracle {
            LocalOracle::Quadratic(q) => x.dot(&(&q.matrix * x)) + q.linear.dot(x) + q.constant,
            LocalOracle::Custom { value, .. } => value(x),
        }
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.oracle {
            LocalOracle::Quadratic(q) => 2.0 * (&q.matrix * x) + &q.linear,
            LocalOracle::Custom { gradient, .. } => gradient(x),
        }
    }
}

impl Clone for SmoothLocal {
    fn clone(&self) -> Self {
        SmoothLocal {
            dim: self.dim,
            lipschitz: self.lipschitz,
            oracle: match &self.oracle {
                LocalOracle::Quadratic(q) => LocalOracle::Quadratic(q.clone()),
                LocalOracle::Custom { value, gradient } => LocalOracle::Custom {
                    value: Arc::clone(value),
                    gradient: Arc::clone(gradient),
                },
            },
        }
    }
}

impl std::fmt::Debug for SmoothLocal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SmoothLocal")
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field(
                "oracle",
                &match self.oracle {
                    LocalOracle::Quadratic(_) => "quadratic",
                    LocalOracle::Custom { .. } => "custom",
                },
            )
            .finish()
    }
}

/// Convex regularizer given by a value oracle (extended-real: may return
/// `f64::INFINITY` outside its constraint set) and a prox oracle
/// `prox(gamma, y) = argmin g(u) + ‖u − y‖²/(2·gamma)`.
#[derive(Clone)]
pub struct ConvexRegularizer {
    value: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    prox: Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>,
}

impl ConvexRegularizer {
    pub fn new(
        value: impl Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        prox: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        ConvexRegularizer {
            value: Arc::new(value),
            prox: Arc::new(prox),
        }
    }

    /// The zero function; its prox is the identity.
    pub fn zero() -> Self {
        Self::new(|_| 0.0, |_, y| y.clone())
    }

    /// `lambda·‖·‖₁`.
    pub fn l1(lambda: f64) -> Self {
        assert!(lambda >= 0.0);
        Self::new(
            move |x| lambda * x.iter().map(|v| v.abs()).sum::<f64>(),
            move |gamma, y| soft_threshold(y, gamma * lambda),
        )
    }

    /// `lambda·‖·‖₁ + indicator(‖·‖ ≤ radius)`, the sparse-PCA regularizer.
    pub fn l1_ball(lambda: f64, radius: f64) -> Self {
        assert!(lambda >= 0.0 && radius > 0.0);
        Self::new(
            move |x| {
                if x.norm() > radius * (1.0 + FEASIBILITY_SLACK) {
                    f64::INFINITY
                } else {
                    lambda * x.iter().map(|v| v.abs()).sum::<f64>()
                }
            },
            move |gamma, y| prox_l1_ball(y, gamma, lambda, radius),
        )
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn prox(&self, gamma: f64, y: &DVector<f64>) -> DVector<f64> {
        assert!(gamma > 0.0, "prox parameter must be positive, got {gamma}");
        (self.prox)(gamma, y)
    }
}

impl std::fmt::Debug for ConvexRegularizer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("ConvexRegularizer")
    }
}

/// A full problem instance: `n` smooth local terms sharing one regularizer.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    locals: Vec<SmoothLocal>,
    regularizer: ConvexRegularizer,
    l_max: f64,
}

impl ProblemSpec {
    pub fn new(
        locals: Vec<SmoothLocal>,
        regularizer: ConvexRegularizer,
    ) -> Result<Self, ProblemError> {
        let first_dim = locals.first().ok_or(ProblemError::Empty)?.dim();
        for (i, local) in locals.iter().enumerate() {
            if local.dim() != first_dim {
                return Err(ProblemError::DimensionMismatch(format!(
                    "local {i} has dimension {}, expected {first_dim}",
                    local.dim()
                )));
            }
        }
        let l_max = locals.iter().map(|l| l.lipschitz()).fold(0.0, f64::max);
        Ok(ProblemSpec { locals, regularizer, l_max })
    }

    pub fn agents(&self) -> usize {
        self.locals.len()
    }

    pub fn dim(&self) -> usize {
        self.locals[0].dim()
    }

    pub fn locals(&self) -> &[SmoothLocal] {
        &self.locals
    }

    pub fn local(&self, i: usize) -> &SmoothLocal {
        &self.locals[i]
    }

    pub fn regularizer(&self) -> &ConvexRegularizer {
        &self.regularizer
    }

    /// Largest local gradient Lipschitz constant.
    pub fn l_max(&self) -> f64 {
        self.l_max
    }
}

/// Stationarity residual `‖∇f(x) + λ + β(x − x0)‖` of the agent subproblem.
pub fn subproblem_residual(
    local: &SmoothLocal,
    x: &DVector<f64>,
    lambda: &DVector<f64>,
    x0: &DVector<f64>,
    beta: f64,
) -> f64 {
    (local.gradient(x) + lambda + beta * (x - x0)).norm()
}

enum SubproblemKind {
    /// Cached Cholesky factorization of `beta·I + 2A`, reused across rounds.
    Direct(Cholesky<f64, Dyn>),
    /// Accelerated gradient descent tuned to a `(beta − L)`-strongly convex,
    /// `(beta + L)`-smooth objective.
    Gradient { step: f64, momentum: f64 },
}

/// Per-agent subproblem solver with whatever can be precomputed for a fixed
/// penalty: minimize `f(x) + ⟨λ, x⟩ + (β/2)‖x − x0‖²`.
pub struct PreparedSubproblem {
    beta: f64,
    kind: SubproblemKind,
}

impl PreparedSubproblem {
    pub fn new(local: &SmoothLocal, beta: f64) -> Result<Self, ProblemError> {
        if beta <= local.lipschitz() {
            return Err(ProblemError::PenaltyTooSmall {
                beta,
                lipschitz: local.lipschitz(),
            });
        }
        let kind = match local.quadratic_form() {
            Some(q) => {
                let mut system = q.matrix.clone() * 2.0;
                for i in 0..local.dim() {
                    system[(i, i)] += beta;
                }
                let chol =
                    Cholesky::new(system).ok_or(ProblemError::IndefiniteSubproblem)?;
                SubproblemKind::Direct(chol)
            }
            None => Self::gradient_kind(local, beta),
        };
        Ok(PreparedSubproblem { beta, kind })
    }

    /// Builds the iterative solver even when quadratic data is available;
    /// used to cross-check the direct path.
    pub fn new_iterative(local: &SmoothLocal, beta: f64) -> Result<Self, ProblemError> {
        if beta <= local.lipschitz() {
            return Err(ProblemError::PenaltyTooSmall {
                beta,
                lipschitz: local.lipschitz(),
            });
        }
        Ok(PreparedSubproblem {
            beta,
            kind: Self::gradient_kind(local, beta),
        })
    }

    fn gradient_kind(local: &SmoothLocal, beta: f64) -> SubproblemKind {
        let smoothness = beta + local.lipschitz();
        let strong_convexity = beta - local.lipschitz();
        let kappa = smoothness / strong_convexity;
        let sqrt_kappa = kappa.sqrt();
        SubproblemKind::Gradient {
            step: 1.0 / smoothness,
            momentum: (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Solves the subproblem to the [`SUBPROBLEM_TOL`] stationarity residual.
    pub fn solve(
        &self,
        local: &SmoothLocal,
        lambda: &DVector<f64>,
        x0: &DVector<f64>,
    ) -> Result<DVector<f64>, ProblemError> {
        if lambda.len() != local.dim() || x0.len() != local.dim() {
            return Err(ProblemError::DimensionMismatch(format!(
                "subproblem inputs have lengths ({}, {}), expected {}",
                lambda.len(),
                x0.len(),
                local.dim()
            )));
        }
        match &self.kind {
            SubproblemKind::Direct(chol) => {
                let q = local.quadratic_form().expect("direct solver needs quadratic data");
                let rhs = self.beta * x0 - lambda - &q.linear;
                let x = chol.solve(&rhs);
                let residual = subproblem_residual(local, &x, lambda, x0, self.beta);
                let bound = SUBPROBLEM_TOL * (1.0 + x.norm());
                if residual > bound {
                    return Err(ProblemError::SubproblemStalled { iterations: 0, residual });
                }
                Ok(x)
            }
            SubproblemKind::Gradient { step, momentum } => {
                self.solve_accelerated(local, lambda, x0, *step, *momentum)
            }
        }
    }

    fn solve_accelerated(
        &self,
        local: &SmoothLocal,
        lambda: &DVector<f64>,
        x0: &DVector<f64>,
        step: f64,
        momentum: f64,
    ) -> Result<DVector<f64>, ProblemError> {
        const MAX_ITERATIONS: usize = 200_000;
        let beta = self.beta;
        let grad = |x: &DVector<f64>| local.gradient(x) + lambda + beta * (x - x0);
        let mut x = x0.clone();
        let mut y = x0.clone();
        let mut residual = grad(&x).norm();
        if residual <= SUBPROBLEM_TOL * (1.0 + x.norm()) {
            return Ok(x);
        }
        for iteration in 1..=MAX_ITERATIONS {
            let x_next = &y - step * grad(&y);
            y = &x_next + momentum * (&x_next - &x);
            x = x_next;
            residual = grad(&x).norm();
            if !residual.is_finite() {
                return Err(ProblemError::SubproblemStalled { iterations: iteration, residual });
            }
            if residual <= SUBPROBLEM_TOL * (1.0 + x.norm()) {
                return Ok(x);
            }
        }
        Err(ProblemError::SubproblemStalled { iterations: MAX_ITERATIONS, residual })
    }
}

/// One-shot subproblem solve; drivers that call this every round should hold
/// a [`PreparedSubproblem`] instead to reuse the factorization.
pub fn solve_local_subproblem(
    local: &SmoothLocal,
    lambda: &DVector<f64>,
    x0: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>, ProblemError> {
    PreparedSubproblem::new(local, beta)?.solve(local, lambda, x0)
}

/// Subproblem solve forced onto the accelerated-gradient path, bypassing any
/// quadratic structure; the two routes must agree and the tests hold them to
/// that.
pub fn solve_local_subproblem_iterative(
    local: &SmoothLocal,
    lambda: &DVector<f64>,
    x0: &DVector<f64>,
    beta: f64,
) -> Result<DVector<f64>, ProblemError> {
    PreparedSubproblem::new_iterative(local, beta)?.solve(local, lambda, x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    /// f(x) = ½‖x − a‖² as a quadratic form: A = I/2, b = −a, c = ½‖a‖².
    fn half_distance_squared(a: &DVector<f64>) -> SmoothLocal {
        let dim = a.len();
        SmoothLocal::quadratic_with_lipschitz(
            DMatrix::identity(dim, dim) * 0.5,
            -a.clone(),
            0.5 * a.norm_squared(),
            1.0,
        )
    }

    #[test]
    fn quadratic_oracles_evaluate_correctly() {
        let a = DVector::from_vec(vec![1.0, -2.0]);
        let local = half_distance_squared(&a);
        let x = DVector::from_vec(vec![3.0, 1.0]);
        assert!((local.value(&x) - 0.5 * (&x - &a).norm_squared()).abs() < 1e-14);
        assert!((local.gradient(&x) - (&x - &a)).norm() < 1e-14);
        assert_eq!(local.lipschitz(), 1.0);
    }

    #[test]
    fn lipschitz_constant_from_eigendecomposition() {
        // f(x) = xᵀAx with A = diag(1, -3): L = 2·max|eig| = 6.
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -3.0]));
        let local = SmoothLocal::quadratic(a, DVector::zeros(2), 0.0);
        assert!((local.lipschitz() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn subproblem_matches_hand_solution() {
        // f(x) = ½(x−1)², λ = 0, x0 = 0, β = 2: stationarity 3x = 1.
        let local = half_distance_squared(&DVector::from_vec(vec![1.0]));
        let x = solve_local_subproblem(
            &local,
            &DVector::zeros(1),
            &DVector::zeros(1),
            2.0,
        )
        .unwrap();
        assert!((x[0] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_start_is_returned_unchanged() {
        let a = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        let local = half_distance_squared(&a);
        let x0 = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let lambda = -local.gradient(&x0);
        let x = solve_local_subproblem(&local, &lambda, &x0, 2.0).unwrap();
        assert!((&x - &x0).norm() < 1e-9 * (1.0 + x0.norm()));
    }

    #[test]
    fn direct_and_iterative_paths_agree() {
        let a = DVector::from_vec(vec![2.0, -1.0, 0.25, 3.0]);
        let local = half_distance_squared(&a);
        let lambda = DVector::from_vec(vec![0.3, -0.7, 0.1, 0.0]);
        let x0 = DVector::from_vec(vec![0.5, 0.5, -0.5, 1.0]);
        let direct = solve_local_subproblem(&local, &lambda, &x0, 1.8).unwrap();
        let iterative = solve_local_subproblem_iterative(&local, &lambda, &x0, 1.8).unwrap();
        assert!((direct - iterative).norm() < 1e-7);
    }

    #[test]
    fn penalty_at_or_below_lipschitz_is_rejected() {
        let local = half_distance_squared(&DVector::from_vec(vec![1.0]));
        let err = solve_local_subproblem(
            &local,
            &DVector::zeros(1),
            &DVector::zeros(1),
            1.0,
        )
        .unwrap_err();
        assert!(matches!(err, ProblemError::PenaltyTooSmall { .. }));
    }

    #[test]
    fn custom_oracle_path_solves_to_tolerance() {
        // Smooth nonquadratic term: f(x) = Σ cosh(x_k) has L = cosh(bound)
        // on the region the solver visits; β far above it keeps things safe.
        let local = SmoothLocal::from_oracles(
            2,
            3.0,
            |x| x.iter().map(|v| v.cosh()).sum(),
            |x| x.map(f64::sinh),
        );
        let lambda = DVector::from_vec(vec![0.2, -0.1]);
        let x0 = DVector::from_vec(vec![0.4, -0.3]);
        let x = solve_local_subproblem(&local, &lambda, &x0, 10.0).unwrap();
        let residual = subproblem_residual(&local, &x, &lambda, &x0, 10.0);
        assert!(residual <= SUBPROBLEM_TOL * (1.0 + x.norm()));
    }

    #[test]
    fn problem_spec_rejects_mixed_dimensions() {
        let locals = vec![
            half_distance_squared(&DVector::zeros(2)),
            half_distance_squared(&DVector::zeros(3)),
        ];
        assert!(matches!(
            ProblemSpec::new(locals, ConvexRegularizer::zero()),
            Err(ProblemError::DimensionMismatch(_))
        ));
        assert!(matches!(
            ProblemSpec::new(vec![], ConvexRegularizer::zero()),
            Err(ProblemError::Empty)
        ));
    }

    #[test]
    fn l_max_is_the_largest_local_constant() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.5]));
        let locals = vec![
            half_distance_squared(&DVector::zeros(2)),
            SmoothLocal::quadratic(a, DVector::zeros(2), 0.0),
        ];
        let spec = ProblemSpec::new(locals, ConvexRegularizer::zero()).unwrap();
        assert!((spec.l_max() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_regularizer_prox_is_identity() {
        let g = ConvexRegularizer::zero();
        let y = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(g.prox(0.7, &y), y);
        assert_eq!(g.value(&y), 0.0);
    }

    #[test]
    fn l1_ball_value_is_extended_real() {
        let g = ConvexRegularizer::l1_ball(2.0, 1.0);
        let inside = DVector::from_vec(vec![0.3, -0.4]);
        assert!((g.value(&inside) - 1.4).abs() < 1e-14);
        let outside = DVector::from_vec(vec![3.0, 0.0]);
        assert!(g.value(&outside).is_infinite());
    }
}
