//! Sampling from the MWU distribution `λ(η, C, D, P)` without materializing
//! its `2n²` entries.

pub mod arbitrary;
pub mod constant;
pub mod duals;
pub mod estimate;
pub mod rectangles;
pub mod shatter;

pub use arbitrary::{arbitrary_sampler, ExplicitSampler, SampleBatch, SamplerDiagnostics};
pub use constant::{constant_sampler, ConstantSampler, SamplerConfig, SamplerStats, Triple};
pub use duals::{round_duals, DualClass, DualState, RoundedDuals};
pub use estimate::{estimate_weight_sum, WeightSumMode};
pub use rectangles::{partition_rectangles, Rect, RectanglePartition};
pub use shatter::{draw_rounding_set, shatter_check, ShatterSet};

use crate::error::Result;
use crate::exact::{explicit_lambda, LambdaTable, Matrix};
use crate::geometry::RoundingState;

/// Explicit `λ(η, C, D, P)` by enumeration, for desk-scale checks.
pub fn explicit_table(rounding: &RoundingState, duals: &RoundedDuals, eta: f64) -> Result<LambdaTable> {
    let n = rounding.n();
    let c = Matrix::from_fn(n, n, |i, j| rounding.cost(i, j));
    let d = Matrix::from_fn(n, n, |i, j| duals.d(i, j));
    let p = Matrix::from_fn(n, n, |i, j| f64::from(duals.p(i, j)));
    explicit_lambda(eta, &c, &d, &p)
}
