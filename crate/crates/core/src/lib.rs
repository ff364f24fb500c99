//! Forward solver, observables and coefficient identification for a coupled
//! substrate/biofilm reaction-diffusion system on `(0,1)`.

pub mod cases;
pub mod error;
pub mod fit;
pub mod forward;
pub mod lm;
pub mod model;
pub mod observables;
pub mod quadrature;
pub mod recovery;
pub mod tridiag;

pub use error::{Error, ErrorKind, Result};
pub use model::{Field, FieldSolution, Grid, Param, ParamVector, ProblemData, Table};
pub use observables::MeasurementSet;
