//! Labor demand under search frictions.
//!
//! The crate bundles a closed-form structural model of hiring costs, a
//! synthetic economy generator with known elasticities, construction of
//! market and firm-level tightness, commuting-zone delineation, shift-share
//! instruments, a first-difference panel IV engine, and policy simulations.

pub mod estimator;
pub mod model;
pub mod io;
pub mod market_sim;
pub mod policy;
pub mod shift_share;
pub mod tightness;
pub mod zones;
pub mod pipeline;
