//! The abstract model interface: what the evaluator needs from a row
//! model, and the three backends implementing it.

pub mod bn;
pub mod event;
pub mod math;
pub mod spe;
pub mod spec;
pub mod tmvg;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::table::{Column, Row};
use crate::value::Value;

pub use event::{ColSet, Event, EventExpr, Interval, Rect};

/// An event-0: values for a set of column positions.
pub type Assign = Vec<(usize, Value)>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AmiError {
    #[error("conditioning on null-measure event")]
    NullMeasure,
    #[error("truncation region unreachable after {0} attempts")]
    Unreachable(usize),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("{0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendKind {
    Spe,
    Tmvg,
    Bn,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Spe => "spe",
            BackendKind::Tmvg => "tmvg",
            BackendKind::Bn => "bn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Independence {
    Independent,
    Unknown,
}

/// Randomness and compute budget for one call.
pub struct AmiCtx<'a> {
    pub rng: &'a mut dyn RngCore,
    pub particles: usize,
}

pub trait RowModel: Send + Sync + fmt::Debug {
    fn columns(&self) -> &[Column];

    fn kind(&self) -> BackendKind;

    /// Exact backends answer `logpdf`/`prob` without sampling error.
    fn is_exact(&self) -> bool;

    /// The model conditioned on `c0` then on `c1`. Errors with
    /// [`AmiError::NullMeasure`] when the condition has zero measure and the
    /// backend can tell.
    fn condition(&self, c0: &Assign, c1: &Event, ctx: &mut AmiCtx<'_>) -> Result<Arc<dyn RowModel>, AmiError>;

    /// One row over all columns. Approximate backends return a row of Nulls
    /// when no particle satisfies the conditions.
    fn sample(&self, ctx: &mut AmiCtx<'_>) -> Result<Row, AmiError>;

    /// Log marginal density (mass for discrete columns) of `x`.
    fn logpdf(&self, x: &Assign, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError>;

    /// Probability of `e`, in [0, 1].
    fn prob(&self, e: &Event, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError>;

    /// Whether the column sets `a` and `b` are independent.
    fn independence(&self, _a: &BTreeSet<usize>, _b: &BTreeSet<usize>) -> Independence {
        Independence::Unknown
    }

    fn column_index(&self, name: &str) -> Option<usize> {
        self.columns().iter().position(|c| c.name == name)
    }
}

pub fn simulate(m: &dyn RowModel, c0: &Assign, c1: &Event, ctx: &mut AmiCtx<'_>) -> Result<Row, AmiError> {
    m.condition(c0, c1, ctx)?.sample(ctx)
}

pub fn logpdf(m: &dyn RowModel, c0: &Assign, c1: &Event, x: &Assign, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
    m.condition(c0, c1, ctx)?.logpdf(x, ctx)
}

pub fn prob(m: &dyn RowModel, c0: &Assign, c1: &Event, e: &Event, ctx: &mut AmiCtx<'_>) -> Result<f64, AmiError> {
    m.condition(c0, c1, ctx)?.prob(e, ctx)
}

pub fn null_row(n: usize) -> Row {
    vec![Value::Null; n]
}
