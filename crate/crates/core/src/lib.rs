//! Monte Carlo engine for biased random walks among heavy-tailed random
//! conductances on Z^d: lazy procedural environments, quenched walk
//! dynamics, regeneration structures for one and two walks, and the
//! estimators used to check their scaling behaviour.

pub mod env;
pub mod stats;
pub mod twowalk;
pub mod experiment;
pub mod io;
pub mod regen;
pub mod walk;
