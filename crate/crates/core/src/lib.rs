//! First-passage percolation on the hypercubic lattice Z^d.
//!
//! The crate builds quenched edge-weight environments on finite boxes and
//! studies the random metric they induce: passage times and geodesics,
//! geodesic trees and their boundary structure, competing growth started
//! from several sources, Busemann-type difference series with their linear
//! asymptotics, and Monte Carlo estimates of the limit shape.
//!
//! Everything is deterministic given a seed: randomness is counter-based,
//! so no result depends on evaluation order or thread count.

pub mod busemann;
pub mod compete;
pub mod env;
pub mod error;
pub mod geodesics;
pub mod lattice;
pub mod metric;
pub mod oracle;
pub mod rng;
pub mod shape;
pub mod stats;
pub mod weights;

pub use env::Environment;
pub use error::{FppError, Result};
pub use lattice::BoxRegion;
pub use metric::{GeodesicTree, LatticePath, PassageMap};
pub use weights::WeightSpec;
