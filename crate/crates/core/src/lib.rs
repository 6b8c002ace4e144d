//! Bit-exact functional and cycle-approximate model of a spatiotemporal
//! spiking-neural-network accelerator.
//!
//! The accelerator executes quantized SNNs through a fixed pipeline:
//! bit-plane decomposition of multi-bit spike operands, an output-stationary
//! systolic spike engine running in a doubled clock domain, a flexible
//! partial-sum merge stage, a two-phase neurodynamics unit, pooling and
//! spike-element-wise residual units, and a spike-count readout. Everything
//! the engine computes is checked against a naive golden reference
//! ([`oracle`]), element exact, and a roofline-style scheduler/bandwidth
//! model ([`sched`]) reports cycle, bandwidth and throughput estimates.
//!
//! Module map:
//! - [`ir`]: network description, tensors, quantization metadata, manifests.
//! - [`blob`]: on-disk tensor container format.
//! - [`oracle`]: naive reference implementation of every network-level op.
//! - [`bitplane`]: bit-serial decomposition of non-binary spike operands.
//! - [`engine`]: systolic spike computing engine (functional + cycle ledger).
//! - [`postproc`]: psum merge, bias/shift, neurodynamics, pooling, residual.
//! - [`sched`]: loop-nest planning, im2col banking, bandwidth arbiter,
//!   performance reports.
//! - [`pipeline`]: end-to-end accelerator path with oracle diffing.
//! - [`gen`]: seeded random-but-legal stimulus generation for testing.

pub mod bitplane;
pub mod blob;
pub mod engine;
pub mod gen;
pub mod ir;
pub mod oracle;
pub mod pipeline;
pub mod postproc;
pub mod sched;

/// Engine-stage partial sums are 12-bit: |p| <= `ENGINE_PSUM_MAX`.
pub const ENGINE_PSUM_MAX: i32 = (1 << 11) - 1;
/// Post-merge partial sums, biases, thresholds and membrane potentials are
/// 18-bit: |x| <= `MERGED_PSUM_MAX`.
pub const MERGED_PSUM_MAX: i32 = (1 << 17) - 1;

/// Bit-plane ordering convention shared by [`bitplane`] and [`postproc`]:
/// the decomposer emits the most significant plane of each source time step
/// first. The merge unit consumes planes in its own shift-add order; see
/// [`bitplane::merge_arrival_order`] for the bridge between the two.
pub const PLANE_ORDER_MSB_FIRST: bool = true;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("bit-width violation: {0}")]
    BitWidth(String),

    #[error("{stage} overflow: |{value}| exceeds {bits}-bit range")]
    Overflow {
        stage: &'static str,
        value: i64,
        bits: u32,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("blob error: {0}")]
    Blob(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Saturating 18-bit range check used by every post-merge stage.
    pub fn check_merged(stage: &'static str, value: i64) -> Result<i32> {
        if value.unsigned_abs() > MERGED_PSUM_MAX as u64 {
            Err(Error::Overflow {
                stage,
                value,
                bits: 18,
            })
        } else {
            Ok(value as i32)
        }
    }

    /// 12-bit engine-stage range check.
    pub fn check_engine(stage: &'static str, value: i64) -> Result<i32> {
        if value.unsigned_abs() > ENGINE_PSUM_MAX as u64 {
            Err(Error::Overflow {
                stage,
                value,
                bits: 12,
            })
        } else {
            Ok(value as i32)
        }
    }
}
