//! Network intermediate representation: tensor containers, layer and
//! parallelism configuration, quantization metadata, and manifest loading.
//!
//! A network arrives as a JSON manifest plus one raw tensor blob per
//! weight/bias store (see [`crate::blob`]). Everything is validated on load;
//! the resulting [`NetworkDesc`] is immutable and safe to share read-only.
//!
//! Spike activations use the axis order `(t, c, h, w)` with `t` outermost,
//! matching the traversal order of the accelerator dataflow.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result, MERGED_PSUM_MAX};

/// Convolution geometry of one layer, including the time dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    /// Simulation time steps.
    pub t: usize,
    pub h_i: usize,
    pub w_i: usize,
    pub h_o: usize,
    pub w_o: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub pad: usize,
    pub c_i: usize,
    pub c_o: usize,
}

/// Output length of one convolution axis: `floor((len + 2*pad - k)/stride) + 1`.
pub fn derive_output_dim(len: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if len == 0 || k == 0 || stride == 0 {
        return Err(Error::Shape(format!(
            "dimensions must be positive (len={len}, k={k}, stride={stride})"
        )));
    }
    if k > len + 2 * pad {
        return Err(Error::Shape(format!(
            "kernel {k} larger than padded input {}",
            len + 2 * pad
        )));
    }
    Ok((len + 2 * pad - k) / stride + 1)
}

/// Output feature-map size for a square-ish kernel applied to `(h_i, w_i)`.
pub fn derive_output_shape(
    h_i: usize,
    w_i: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Result<(usize, usize)> {
    Ok((
        derive_output_dim(h_i, k, stride, pad)?,
        derive_output_dim(w_i, k, stride, pad)?,
    ))
}

impl LayerShape {
    /// Build a shape, deriving the output size from the convolution formula.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        t: usize,
        h_i: usize,
        w_i: usize,
        k_h: usize,
        k_w: usize,
        stride: usize,
        pad: usize,
        c_i: usize,
        c_o: usize,
    ) -> Result<Self> {
        if t == 0 || c_i == 0 || c_o == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be >= 1 (t={t}, c_i={c_i}, c_o={c_o})"
            )));
        }
        let h_o = derive_output_dim(h_i, k_h, stride, pad)?;
        let w_o = derive_output_dim(w_i, k_w, stride, pad)?;
        Ok(LayerShape {
            t,
            h_i,
            w_i,
            h_o,
            w_o,
            k_h,
            k_w,
            stride,
            pad,
            c_i,
            c_o,
        })
    }

    /// Synaptic multiply-accumulates per time step (unpadded).
    pub fn macs_per_step(&self) -> u64 {
        (self.c_o * self.h_o * self.w_o) as u64 * (self.c_i * self.k_h * self.k_w) as u64
    }
}

/// Multi-bit spike activations over `t` time steps.
///
/// Every element is bounded by `2^bits`; `bits == 8` is only legal as a
/// direct-coding input image (raw pixels, `t == 1`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeTensor {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    bits: u8,
    data: Vec<u8>,
}

pub const LEGAL_SPIKE_BITS: [u8; 4] = [1, 2, 4, 8];

impl SpikeTensor {
    pub fn zeros(t: usize, c: usize, h: usize, w: usize, bits: u8) -> Result<Self> {
        Self::from_data(t, c, h, w, bits, vec![0; t * c * h * w])
    }

    pub fn from_data(t: usize, c: usize, h: usize, w: usize, bits: u8, data: Vec<u8>) -> Result<Self> {
        if !LEGAL_SPIKE_BITS.contains(&bits) {
            return Err(Error::BitWidth(format!("illegal spike bit-width {bits}")));
        }
        if data.len() != t * c * h * w {
            return Err(Error::Shape(format!(
                "spike data length {} != {}x{}x{}x{}",
                data.len(),
                t,
                c,
                h,
                w
            )));
        }
        let limit = Self::max_value(bits);
        if let Some(&bad) = data.iter().find(|&&x| x > limit) {
            return Err(Error::BitWidth(format!(
                "spike value {bad} exceeds {bits}-bit range"
            )));
        }
        Ok(SpikeTensor { t, c, h, w, bits, data })
    }

    pub fn from_fn(
        t: usize,
        c: usize,
        h: usize,
        w: usize,
        bits: u8,
        mut f: impl FnMut(usize, usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(t * c * h * w);
        for ti in 0..t {
            for ci in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(ti, ci, y, x));
                    }
                }
            }
        }
        Self::from_data(t, c, h, w, bits, data)
    }

    pub fn max_value(bits: u8) -> u8 {
        ((1u16 << bits) - 1) as u8
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    #[inline]
    fn idx(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> u8 {
        self.data[self.idx(t, c, y, x)]
    }

    /// Zero-extended read with `(y, x)` interpreted in unpadded coordinates;
    /// out-of-range positions read as 0 (zero-padding semantics).
    #[inline]
    pub fn get_padded(&self, t: usize, c: usize, y: isize, x: isize) -> u8 {
        if y < 0 || x < 0 || y as usize >= self.h || x as usize >= self.w {
            0
        } else {
            self.get(t, c, y as usize, x as usize)
        }
    }

    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, value: u8) -> Result<()> {
        if value > Self::max_value(self.bits) {
            return Err(Error::BitWidth(format!(
                "spike value {value} exceeds {}-bit range",
                self.bits
            )));
        }
        let i = self.idx(t, c, y, x);
        self.data[i] = value;
        Ok(())
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Re-declare the bit-width (e.g. after a policy narrowed the values).
    /// Fails if any element does not fit the new width.
    pub fn with_bits(self, bits: u8) -> Result<Self> {
        Self::from_data(self.t, self.c, self.h, self.w, bits, self.data)
    }
}

/// Signed 8-bit synaptic weights, laid out `(c_o, c_i, k_h, k_w)` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightTensor {
    pub c_o: usize,
    pub c_i: usize,
    pub k_h: usize,
    pub k_w: usize,
    data: Vec<i8>,
}

impl WeightTensor {
    pub fn from_data(c_o: usize, c_i: usize, k_h: usize, k_w: usize, data: Vec<i8>) -> Result<Self> {
        if data.len() != c_o * c_i * k_h * k_w {
            return Err(Error::Shape(format!(
                "weight data length {} != {}x{}x{}x{}",
                data.len(),
                c_o,
                c_i,
                k_h,
                k_w
            )));
        }
        Ok(WeightTensor { c_o, c_i, k_h, k_w, data })
    }

    pub fn zeros(c_o: usize, c_i: usize, k_h: usize, k_w: usize) -> Self {
        WeightTensor {
            c_o,
            c_i,
            k_h,
            k_w,
            data: vec![0; c_o * c_i * k_h * k_w],
        }
    }

    #[inline]
    pub fn get(&self, co: usize, ci: usize, ky: usize, kx: usize) -> i8 {
        self.data[((co * self.c_i + ci) * self.k_h + ky) * self.k_w + kx]
    }

    pub fn set(&mut self, co: usize, ci: usize, ky: usize, kx: usize, value: i8) {
        self.data[((co * self.c_i + ci) * self.k_h + ky) * self.k_w + kx] = value;
    }

    pub fn data(&self) -> &[i8] {
        &self.data
    }

    /// Sum of |w| over one output channel's receptive field. Bounds the
    /// engine-stage psum magnitude for binary spike planes.
    pub fn abs_sum(&self, co: usize) -> u64 {
        let per = self.c_i * self.k_h * self.k_w;
        self.data[co * per..(co + 1) * per]
            .iter()
            .map(|&w| (w as i64).unsigned_abs())
            .sum()
    }
}

/// Signed partial sums / synaptic currents, axis order `(t, c, h, w)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsumTensor {
    pub t: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<i32>,
}

impl PsumTensor {
    pub fn zeros(t: usize, c: usize, h: usize, w: usize) -> Self {
        PsumTensor {
            t,
            c,
            h,
            w,
            data: vec![0; t * c * h * w],
        }
    }

    #[inline]
    pub fn idx(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.c + c) * self.h + y) * self.w + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> i32 {
        self.data[self.idx(t, c, y, x)]
    }

    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, value: i32) {
        let i = self.idx(t, c, y, x);
        self.data[i] = value;
    }
}

/// Neurodynamics selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeuronType {
    /// Integrate-and-fire: hard reset to 0 on firing.
    If,
    /// Leaky integrate-and-fire: `v -= v >> leak_shift` before integration,
    /// hard reset to 0 on firing.
    Lif,
    /// Residual membrane potential: soft reset, `v -= threshold` once per
    /// firing time step.
    Rmp,
}

/// Per-layer neuron parameters. Threshold and bias live in the 18-bit
/// post-merge psum scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronParams {
    pub neuron_type: NeuronType,
    pub threshold: i32,
    pub leak_shift: u8,
    /// Per-output-channel bias, added to the merged psum each time step.
    pub bias: Vec<i32>,
}

impl NeuronParams {
    pub fn validate(&self, c_o: usize) -> Result<()> {
        if self.threshold <= 0 || self.threshold > MERGED_PSUM_MAX {
            return Err(Error::Config(format!(
                "threshold {} outside (0, {MERGED_PSUM_MAX}]",
                self.threshold
            )));
        }
        if self.leak_shift > 17 {
            return Err(Error::Config(format!(
                "leak_shift {} > 17",
                self.leak_shift
            )));
        }
        if self.bias.len() != c_o {
            return Err(Error::Config(format!(
                "bias length {} != output channels {c_o}",
                self.bias.len()
            )));
        }
        if let Some(&b) = self.bias.iter().find(|b| b.unsigned_abs() > MERGED_PSUM_MAX as u32) {
            return Err(Error::Config(format!("bias {b} outside 18-bit range")));
        }
        Ok(())
    }
}

/// Input coding of a layer: the declared bit-width of its input spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    #[serde(rename = "binary")]
    BinarySpike,
    #[serde(rename = "spike2")]
    Spike2Bit,
    #[serde(rename = "spike4")]
    Spike4Bit,
    #[serde(rename = "direct8")]
    Direct8Bit,
}

impl Coding {
    pub fn bits(self) -> u8 {
        match self {
            Coding::BinarySpike => 1,
            Coding::Spike2Bit => 2,
            Coding::Spike4Bit => 4,
            Coding::Direct8Bit => 8,
        }
    }

    pub fn from_bits(bits: u8) -> Result<Self> {
        Ok(match bits {
            1 => Coding::BinarySpike,
            2 => Coding::Spike2Bit,
            4 => Coding::Spike4Bit,
            8 => Coding::Direct8Bit,
            _ => return Err(Error::BitWidth(format!("no coding for {bits}-bit spikes"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolMode {
    None,
    #[serde(rename = "max2")]
    Max2x2,
    #[serde(rename = "avg2")]
    Avg2x2,
}

/// Spike-element-wise residual function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SewFunction {
    Add,
    Iand,
}

/// What to do when a spike-element-wise ADD outgrows 2 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverflowPolicy {
    /// Widen to 4 bits, saturating at 15.
    Extend4,
    /// Clamp to 3 (2-bit range).
    Saturate2,
    /// Halve the values; the next layer compensates with a psum left-shift.
    Shift2,
}

/// Which residual operand the IAND negates. The convention here matches
/// `IAND(g(s), x) = (NOT backbone) AND shortcut`; the alternative is exposed
/// because both orders appear in SEW-style networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IandOrder {
    #[default]
    NegateBackbone,
    NegateShortcut,
}

/// Saturate-or-shift policy confining widened spike values to 2 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PolicyMode {
    #[default]
    Saturate,
    Shift,
}

/// Residual connection configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualConfig {
    pub function: SewFunction,
    /// Declared shortcut bit-width; byte-aligned storage restricts this
    /// to 1, 2 or 4.
    pub shortcut_bits: u8,
    pub overflow_policy: OverflowPolicy,
    /// Index of the layer whose output feeds the shortcut. `None` means the
    /// shortcut is supplied externally (single-layer harnesses).
    #[serde(default, rename = "from", skip_serializing_if = "Option::is_none")]
    pub shortcut_from: Option<usize>,
    #[serde(default, rename = "iand_negates")]
    pub iand_order: IandOrder,
}

impl ResidualConfig {
    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4].contains(&self.shortcut_bits) {
            return Err(Error::BitWidth(format!(
                "shortcut bit-width {} not in {{1, 2, 4}}",
                self.shortcut_bits
            )));
        }
        if self.function == SewFunction::Iand && self.shortcut_bits != 1 {
            return Err(Error::Config(
                "IAND residual requires binary shortcut spikes".into(),
            ));
        }
        Ok(())
    }

    /// Declared output bit-width of the residual stage (backbone is binary).
    pub fn output_bits(&self) -> u8 {
        match self.function {
            SewFunction::Iand => 1,
            SewFunction::Add => match self.overflow_policy {
                OverflowPolicy::Extend4 => 4,
                OverflowPolicy::Saturate2 => 2,
                OverflowPolicy::Shift2 => {
                    let max = (1u16 + ((1u16 << self.shortcut_bits) - 1)) >> 1;
                    bits_for(max as u32)
                }
            },
        }
    }
}

fn bits_for(max: u32) -> u8 {
    match max {
        0..=1 => 1,
        2..=3 => 2,
        4..=15 => 4,
        _ => 8,
    }
}

/// Full configuration of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerConfig {
    pub name: String,
    pub shape: LayerShape,
    pub coding: Coding,
    pub neuron: NeuronParams,
    pub pool: PoolMode,
    /// Saturate-or-shift policy applied where this layer widens spike values
    /// (average-pooling output). Set offline by calibration.
    pub width_policy: PolicyMode,
    pub residual: Option<ResidualConfig>,
    /// 1 if the previous layer halved its outputs (shift policy); the psums
    /// of this layer are left-shifted by 1 to recover the scale.
    pub post_shift_left: u8,
}

impl LayerConfig {
    /// Per-layer invariants that do not need neighbouring layers.
    pub fn validate(&self) -> Result<()> {
        self.neuron.validate(self.shape.c_o)?;
        if let Some(res) = &self.residual {
            res.validate()?;
            if self.pool == PoolMode::Avg2x2 {
                return Err(Error::Config(
                    "residual connection after average pooling is not supported".into(),
                ));
            }
        }
        if self.post_shift_left > 1 {
            return Err(Error::Config(format!(
                "post_shift_left {} not in {{0, 1}}",
                self.post_shift_left
            )));
        }
        if self.pool != PoolMode::None && (self.shape.h_o % 2 != 0 || self.shape.w_o % 2 != 0) {
            return Err(Error::Shape(format!(
                "2x2 pooling requires even output map, got {}x{}",
                self.shape.h_o, self.shape.w_o
            )));
        }
        Ok(())
    }

    /// Spatial output size after optional pooling.
    pub fn output_dims(&self) -> (usize, usize) {
        match self.pool {
            PoolMode::None => (self.shape.h_o, self.shape.w_o),
            PoolMode::Max2x2 | PoolMode::Avg2x2 => (self.shape.h_o / 2, self.shape.w_o / 2),
        }
    }

    /// Declared output bit-width after pooling policy and residual.
    pub fn output_bits(&self) -> u8 {
        let mut bits = 1u8; // neurodynamics emits binary spikes
        if self.pool == PoolMode::Avg2x2 {
            bits = 2; // window sums 0..4 confined by saturate-or-shift
        }
        if let Some(res) = &self.residual {
            bits = res.output_bits();
        }
        bits
    }

    /// True when this layer's output values were halved by a shift policy,
    /// so the next layer must set `post_shift_left = 1`.
    pub fn shifts_output(&self) -> bool {
        (self.pool == PoolMode::Avg2x2 && self.width_policy == PolicyMode::Shift)
            || self
                .residual
                .as_ref()
                .is_some_and(|r| {
                    r.function == SewFunction::Add && r.overflow_policy == OverflowPolicy::Shift2
                })
    }

    /// Equivalent binary time steps this layer's input decomposes into.
    pub fn equivalent_steps(&self) -> usize {
        match self.coding {
            Coding::Direct8Bit => 8, // single image step, eight planes
            c => c.bits() as usize * self.shape.t,
        }
    }
}

/// Parallelism degrees and clocking of the engine instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParallelismConfig {
    /// Output-channel parallelism; multiple of 4.
    pub m: usize,
    /// Input-channel parallelism; multiple of 4.
    pub v: usize,
    /// Pixel parallelism.
    pub n: usize,
    /// Time-step parallelism; 4 unless explicitly overridden.
    pub s: usize,
    /// Compute-domain clock; the fabric runs at half this rate.
    pub f_fast_mhz: f64,
}

impl ParallelismConfig {
    pub fn new(m: usize, v: usize, n: usize, s: usize, f_fast_mhz: f64) -> Result<Self> {
        let cfg = ParallelismConfig { m, v, n, s, f_fast_mhz };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Default configuration: the xczu5ev build point, (16,16,8,4) @ 500 MHz.
    pub fn default_xczu5ev() -> Self {
        ParallelismConfig {
            m: 16,
            v: 16,
            n: 8,
            s: 4,
            f_fast_mhz: 500.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m % 4 != 0 {
            return Err(Error::Config(format!("m = {} must be a positive multiple of 4", self.m)));
        }
        if self.v == 0 || self.v % 4 != 0 {
            return Err(Error::Config(format!("v = {} must be a positive multiple of 4", self.v)));
        }
        if self.n == 0 || self.s == 0 {
            return Err(Error::Config("n and s must be positive".into()));
        }
        if self.f_fast_mhz.is_nan() || self.f_fast_mhz <= 0.0 {
            return Err(Error::Config("fast clock must be positive".into()));
        }
        Ok(())
    }

    pub fn f_slow_mhz(&self) -> f64 {
        self.f_fast_mhz / 2.0
    }

    /// Peak throughput in MOP/s as an exact integer: m*v*n*s*f_fast.
    pub fn peak_mops(&self) -> u64 {
        (self.m * self.v * self.n * self.s) as u64 * self.f_fast_mhz as u64
    }
}

/// Chain-validation finding. Diagnostics are returned, never thrown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub layer: usize,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "layer {}: {}", self.layer, self.message)
    }
}

/// A fully loaded network: ordered layers plus their weight stores and the
/// spike-count classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDesc {
    pub name: String,
    /// Simulation time steps, shared by every layer.
    pub t: usize,
    pub layers: Vec<LayerConfig>,
    pub weights: Vec<WeightTensor>,
    /// Class count of the spike-count readout; equals the last layer's c_o.
    pub classes: usize,
    /// Optional ANN-equivalent FLOP count used for reporting achieved GOP/s
    /// the way accelerator papers do.
    pub ann_flops: Option<u64>,
}

impl NetworkDesc {
    /// Hard invariants: per-layer validity, weight shapes, classifier wiring,
    /// direct coding only at the input.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Manifest("network has no layers".into()));
        }
        if self.layers.len() != self.weights.len() {
            return Err(Error::Manifest(format!(
                "{} layers but {} weight tensors",
                self.layers.len(),
                self.weights.len()
            )));
        }
        for (i, (layer, w)) in self.layers.iter().zip(&self.weights).enumerate() {
            layer.validate().map_err(|e| {
                Error::Manifest(format!("layer {i} ({}): {e}", layer.name))
            })?;
            if layer.shape.t != self.t {
                return Err(Error::Manifest(format!(
                    "layer {i}: time steps {} != network {}",
                    layer.shape.t, self.t
                )));
            }
            if layer.coding == Coding::Direct8Bit && i != 0 {
                return Err(Error::Manifest(format!(
                    "layer {i}: direct coding is only legal for the input-encoding layer"
                )));
            }
            let s = &layer.shape;
            if (w.c_o, w.c_i, w.k_h, w.k_w) != (s.c_o, s.c_i, s.k_h, s.k_w) {
                return Err(Error::Manifest(format!(
                    "layer {i}: weight shape ({},{},{},{}) != ({},{},{},{})",
                    w.c_o, w.c_i, w.k_h, w.k_w, s.c_o, s.c_i, s.k_h, s.k_w
                )));
            }
        }
        let last = self.layers.last().unwrap();
        if self.classes != last.shape.c_o {
            return Err(Error::Manifest(format!(
                "classifier expects {} classes but last layer has {} channels",
                self.classes,
                last.shape.c_o
            )));
        }
        Ok(())
    }

    /// Inter-layer contract check: shape chaining, bit-width chaining under
    /// the declared overflow policies, shift compensation, residual wiring.
    pub fn validate_chain(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let mut push = |layer: usize, message: String| diags.push(Diagnostic { layer, message });

        for (i, layer) in self.layers.iter().enumerate() {
            if layer.residual.is_some() && layer.pool == PoolMode::Avg2x2 {
                push(i, "residual connection after average-pool downsampling is unsupported".into());
            }
            if layer.coding == Coding::Direct8Bit && i != 0 {
                push(i, "direct coding used past the input-encoding layer".into());
            }
            if let Some(res) = &layer.residual {
                if let Some(src) = res.shortcut_from {
                    if src >= i {
                        push(i, format!("shortcut source {src} does not precede this layer"));
                    } else {
                        let source = &self.layers[src];
                        if source.output_bits() != res.shortcut_bits {
                            push(
                                i,
                                format!(
                                    "shortcut declared {}-bit but layer {src} emits {}-bit spikes",
                                    res.shortcut_bits,
                                    source.output_bits()
                                ),
                            );
                        }
                        if source.output_dims() != layer.output_dims()
                            || source.shape.c_o != layer.shape.c_o
                        {
                            push(
                                i,
                                format!(
                                    "shortcut stream {:?}x{} does not match backbone {:?}x{}",
                                    source.output_dims(),
                                    source.shape.c_o,
                                    layer.output_dims(),
                                    layer.shape.c_o
                                ),
                            );
                        }
                    }
                }
            }
            if i + 1 < self.layers.len() {
                let next = &self.layers[i + 1];
                if layer.output_bits() != next.coding.bits() {
                    push(
                        i + 1,
                        format!(
                            "declared {}-bit input but layer {i} emits {}-bit spikes",
                            next.coding.bits(),
                            layer.output_bits()
                        ),
                    );
                }
                let (h, w) = layer.output_dims();
                if (next.shape.h_i, next.shape.w_i, next.shape.c_i)
                    != (h, w, layer.shape.c_o)
                {
                    push(
                        i + 1,
                        format!(
                            "input {}x{}x{} does not chain from layer {i} output {}x{}x{}",
                            next.shape.h_i, next.shape.w_i, next.shape.c_i, h, w, layer.shape.c_o
                        ),
                    );
                }
                let want = u8::from(layer.shifts_output());
                if next.post_shift_left != want {
                    push(
                        i + 1,
                        format!(
                            "post_shift_left = {} but upstream shift policy requires {}",
                            next.post_shift_left, want
                        ),
                    );
                }
            }
        }
        diags
    }

    /// Expected input tensor geometry: `(t, c, h, w, bits)`.
    pub fn input_spec(&self) -> (usize, usize, usize, usize, u8) {
        let first = &self.layers[0];
        let t = if first.coding == Coding::Direct8Bit { 1 } else { self.t };
        (
            t,
            first.shape.c_i,
            first.shape.h_i,
            first.shape.w_i,
            first.coding.bits(),
        )
    }
}

// ── manifest documents ──────────────────────────────────────────────────────
//
// The manifest is a plain JSON file; tensor payloads live in sibling blob
// files so fixtures stay diffable. Field-by-field documentation lives in
// docs/formats.md.

#[derive(Debug, Serialize, Deserialize)]
struct ManifestDoc {
    name: String,
    time_steps: usize,
    classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ann_flops: Option<u64>,
    layers: Vec<LayerDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    name: String,
    coding: Coding,
    input: DimsDoc,
    out_channels: usize,
    kernel: KernelDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    output: Option<OutDoc>,
    neuron: NeuronDoc,
    weights: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<String>,
    #[serde(default = "default_pool")]
    pool: PoolMode,
    #[serde(default)]
    width_policy: PolicyMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    calibration: Option<CalibrationDoc>,
    #[serde(default)]
    post_shift_left: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    residual: Option<ResidualConfig>,
}

fn default_pool() -> PoolMode {
    PoolMode::None
}

#[derive(Debug, Serialize, Deserialize)]
struct DimsDoc {
    h: usize,
    w: usize,
    c: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelDoc {
    h: usize,
    w: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OutDoc {
    h: usize,
    w: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct NeuronDoc {
    #[serde(rename = "type")]
    neuron_type: NeuronType,
    threshold: i32,
    #[serde(default)]
    leak_shift: u8,
}

/// Calibration statistics recorded next to the chosen width policy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationDoc {
    pub exceeded_count: u64,
    pub total_count: u64,
    pub shifted_mass: u64,
}

/// Load and fully validate a network manifest. Blob paths are resolved
/// relative to the manifest file.
pub fn load_manifest(path: &Path) -> Result<NetworkDesc> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let doc: ManifestDoc = serde_json::from_str(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));

    let mut layers = Vec::with_capacity(doc.layers.len());
    let mut weights = Vec::with_capacity(doc.layers.len());
    for (i, ld) in doc.layers.iter().enumerate() {
        let shape = LayerShape::new(
            doc.time_steps,
            ld.input.h,
            ld.input.w,
            ld.kernel.h,
            ld.kernel.w,
            ld.kernel.stride,
            ld.kernel.pad,
            ld.input.c,
            ld.out_channels,
        )
        .map_err(|e| Error::Manifest(format!("layer {i} ({}): {e}", ld.name)))?;
        if let Some(out) = &ld.output {
            if (out.h, out.w) != (shape.h_o, shape.w_o) {
                return Err(Error::Manifest(format!(
                    "layer {i} ({}): declared output {}x{} but stride formula gives {}x{}",
                    ld.name, out.h, out.w, shape.h_o, shape.w_o
                )));
            }
        }
        let w = crate::blob::read_weight_tensor(&dir.join(&ld.weights))?;
        let bias = match &ld.bias {
            Some(p) => crate::blob::read_i32_vector(&dir.join(p))?,
            None => vec![0; ld.out_channels],
        };
        layers.push(LayerConfig {
            name: ld.name.clone(),
            shape,
            coding: ld.coding,
            neuron: NeuronParams {
                neuron_type: ld.neuron.neuron_type,
                threshold: ld.neuron.threshold,
                leak_shift: ld.neuron.leak_shift,
                bias,
            },
            pool: ld.pool,
            width_policy: ld.width_policy,
            residual: ld.residual.clone(),
            post_shift_left: ld.post_shift_left,
        });
        weights.push(w);
    }

    let net = NetworkDesc {
        name: doc.name,
        t: doc.time_steps,
        layers,
        weights,
        classes: doc.classes,
        ann_flops: doc.ann_flops,
    };
    net.validate()?;
    let diags = net.validate_chain();
    if !diags.is_empty() {
        let joined = diags
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join("; ");
        return Err(Error::Manifest(format!("chain validation failed: {joined}")));
    }
    Ok(net)
}

/// Write `net` as `manifest.json` plus blob files under `dir`.
/// Returns the manifest path. Loading it back reproduces `net` exactly.
pub fn save_manifest(net: &NetworkDesc, dir: &Path) -> Result<PathBuf> {
    save_manifest_with_stats(net, dir, &[])
}

/// Like [`save_manifest`], with optional per-layer calibration statistics
/// (indexed by layer) recorded next to the width policies.
pub fn save_manifest_with_stats(
    net: &NetworkDesc,
    dir: &Path,
    stats: &[(usize, CalibrationDoc)],
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut layer_docs = Vec::with_capacity(net.layers.len());
    for (i, (layer, w)) in net.layers.iter().zip(&net.weights).enumerate() {
        let w_name = format!("{}.w.bin", sanitize(&layer.name));
        crate::blob::write_weight_tensor(&dir.join(&w_name), w)?;
        let bias = if layer.neuron.bias.iter().any(|&b| b != 0) {
            let b_name = format!("{}.b.bin", sanitize(&layer.name));
            crate::blob::write_i32_vector(&dir.join(&b_name), &layer.neuron.bias)?;
            Some(b_name)
        } else {
            None
        };
        layer_docs.push(LayerDoc {
            name: layer.name.clone(),
            coding: layer.coding,
            input: DimsDoc {
                h: layer.shape.h_i,
                w: layer.shape.w_i,
                c: layer.shape.c_i,
            },
            out_channels: layer.shape.c_o,
            kernel: KernelDoc {
                h: layer.shape.k_h,
                w: layer.shape.k_w,
                stride: layer.shape.stride,
                pad: layer.shape.pad,
            },
            output: Some(OutDoc {
                h: layer.shape.h_o,
                w: layer.shape.w_o,
            }),
            neuron: NeuronDoc {
                neuron_type: layer.neuron.neuron_type,
                threshold: layer.neuron.threshold,
                leak_shift: layer.neuron.leak_shift,
            },
            weights: w_name,
            bias,
            pool: layer.pool,
            width_policy: layer.width_policy,
            calibration: stats
                .iter()
                .find(|(idx, _)| *idx == i)
                .map(|(_, c)| c.clone()),
            post_shift_left: layer.post_shift_left,
            residual: layer.residual.clone(),
        });
    }
    let doc = ManifestDoc {
        name: net.name.clone(),
        time_steps: net.t,
        classes: net.classes,
        ann_flops: net.ann_flops,
        layers: layer_docs,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    Ok(path)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
