//! Decentralized ADMM over gossip networks.
//!
//! This crate simulates `n` agents minimizing `Σ f_i(x) + g(x)` — smooth,
//! possibly nonconvex local terms `f_i` plus one convex, possibly nonsmooth
//! regularizer `g` — over an undirected connected communication graph. No
//! node ever sees the whole objective: the coordination that a centralized
//! ADMM performs in one averaging step is approximated by an inner loop of
//! gossip averaging whose length grows logarithmically with the round count,
//! which is enough for the trajectory to reach stationary points while the
//! total communication stays near-linear.
//!
//! The pieces map onto modules:
//!
//! - [`graph`]: topologies, Metropolis-Hastings mixing matrices, and the
//!   spectral constants `(ρ, c)` that bound averaging error.
//! - [`consensus`]: the synchronous averaging loop and the per-round step
//!   schedule built from `(ρ, c)`.
//! - [`problem`]: objective oracles, proximal operators, and the strongly
//!   convex per-agent subproblem solver.
//! - [`admm`]: the centralized, distributed, and naive drivers.
//! - [`metrics`]: per-round diagnostics and their CSV container.
//!
//! A narrative guide with runnable examples lives in the `book/` directory of
//! the repository; its code blocks compile as doc-tests of this crate.

pub mod admm;
pub mod consensus;
pub mod graph;
pub mod metrics;
pub mod problem;

#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(unused)]
            mod $name {}
        };
    }

    chapter!(introduction, "../../../book/src/introduction.md");
    chapter!(graphs, "../../../book/src/graphs.md");
    chapter!(consensus, "../../../book/src/consensus.md");
    chapter!(proximal, "../../../book/src/proximal.md");
    chapter!(admm, "../../../book/src/admm.md");
    chapter!(metrics, "../../../book/src/metrics.md");
    chapter!(cli, "../../../book/src/cli.md");
}
