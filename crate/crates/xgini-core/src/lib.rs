//! Economic-complexity analytics over long-form export tables: export
//! shares, Balassa RCA, diversity/ubiquity, ECI/PCI, the product-space
//! proximity network, the Product Gini Index and the Xgini coefficient,
//! plus the ranking/treemap/overlay/time-series artifacts built on top.
//!
//! The crate is a pure library: every function is deterministic, no file is
//! written unless a caller asks for it, and per-year computations are
//! independent (safe to run in parallel).

pub mod complexity;
pub mod error;
pub mod inequality;
pub mod ingest;
pub mod matrices;
pub mod prodspace;
pub mod report;

pub use error::{Error, ErrorClass, Result};
pub use ingest::{FilterConfig, GiniTable, TradeRecord, TradeTable};
pub use matrices::{SpecializationMatrices, YearSlice};
pub use complexity::{ComplexityScores, EigenOptions, ReflectionsOptions};
pub use inequality::{PgiTable, RegionRosters, XginiTable};
pub use prodspace::{ProductSpaceGraph, ProductSpaceOptions, ProximityMatrix};
