//! Mean curvature flow of isoparametric submanifolds, reduced to the Weyl
//! chamber of the associated Coxeter group.

pub mod analysis;
pub mod cli;
pub mod flow;
pub mod invariants;
pub mod io;
pub mod ode;
pub mod poly;
pub mod rank2;
pub mod svg;
pub mod weyl;
