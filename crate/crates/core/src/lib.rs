//! Numerical verification of closed G2-structures presented by coframes and structure equations.

pub mod catalog;
pub mod coframe;
pub mod g2ops;
pub mod multivec;
pub mod report;
pub mod symexpr;

pub use catalog::{build, list_entries, Built, CatalogError, EntryInfo, Expected};
pub use coframe::{FieldForm, Model, ModelBuilder, ModelError, Sample};
pub use g2ops::{G2Error, G2Field, PointData, Torsion, TorsionType};
pub use multivec::NumForm;
pub use report::{
    emit_report, run_verify, Check, EntryReport, Format, ReportError, VerificationReport,
    VerifyOptions,
};
pub use symexpr::{Assignment, Evaluator, Expr};
