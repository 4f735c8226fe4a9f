//! Fixed-domain shape and topology optimization with Hamiltonian boundary
//! tracing.
//!
//! The toolkit minimizes boundary-observation cost functionals over
//! implicitly parametrized planar domains. A level function on a fixed
//! triangulated rectangle defines the domain through its negativity set; the
//! domain boundary is traced as periodic orbits of the Hamiltonian system
//! driven by the recovered gradient of the level function. The Dirichlet
//! condition on the moving boundary is enforced through a penalty supported
//! on the traced curve together with a fictitious control active outside the
//! domain, so no remeshing ever happens. Analytic directional derivatives of
//! the penalized cost feed a descent loop that can change both the shape and
//! the topology of the iterates.

pub mod config;
pub mod error;
pub mod fem;
pub mod io;
pub mod level;
pub mod optimizer;
pub mod problem;
pub mod runner;
pub mod sensitivity;

pub use error::{Error, Result};
