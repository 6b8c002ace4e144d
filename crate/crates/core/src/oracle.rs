//! Naive, obviously-correct reference implementation of every network-level
//! computation: nested-loop convolution, strictly serial neurodynamics,
//! pooling, spike-element-wise residuals, direct input encoding and the
//! spike-count readout.
//!
//! This is the ground truth the accelerator path is diffed against. Nothing
//! here is optimized; everything is exact integer arithmetic with explicit
//! overflow checks.

use crate::ir::{
    Coding, IandOrder, LayerConfig, LayerShape, NetworkDesc, NeuronParams, NeuronType,
    OverflowPolicy, PolicyMode, PoolMode, PsumTensor, ResidualConfig, SewFunction, SpikeTensor,
    WeightTensor,
};
use crate::{Error, Result};

/// Membrane potentials of one layer's neurons, `(c_o, h_o, w_o)` row-major,
/// in the 18-bit post-merge psum scale.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronState {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<i32>,
}

impl NeuronState {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        NeuronState {
            c,
            h,
            w,
            v: vec![0; c * h * w],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.h + y) * self.w + x
    }
}

/// Exact integer convolution with zero padding: one partial sum per output
/// neuron per time step, summed over `(c_i, k_h, k_w)`.
///
/// The time extent follows the input tensor (`input.t`), so the same routine
/// serves normal layers, bit-plane streams and single-step direct coding.
pub fn conv_integrate(
    input: &SpikeTensor,
    weights: &WeightTensor,
    shape: &LayerShape,
) -> Result<PsumTensor> {
    if (input.c, input.h, input.w) != (shape.c_i, shape.h_i, shape.w_i) {
        return Err(Error::Shape(format!(
            "input {}x{}x{} does not match layer input {}x{}x{}",
            input.c, input.h, input.w, shape.c_i, shape.h_i, shape.w_i
        )));
    }
    if (weights.c_o, weights.c_i, weights.k_h, weights.k_w)
        != (shape.c_o, shape.c_i, shape.k_h, shape.k_w)
    {
        return Err(Error::Shape("weight tensor does not match layer".into()));
    }
    let mut out = PsumTensor::zeros(input.t, shape.c_o, shape.h_o, shape.w_o);
    for t in 0..input.t {
        for co in 0..shape.c_o {
            for yo in 0..shape.h_o {
                for xo in 0..shape.w_o {
                    let mut acc: i64 = 0;
                    for ci in 0..shape.c_i {
                        for ky in 0..shape.k_h {
                            let y = (yo * shape.stride + ky) as isize - shape.pad as isize;
                            for kx in 0..shape.k_w {
                                let x = (xo * shape.stride + kx) as isize - shape.pad as isize;
                                let s = input.get_padded(t, ci, y, x) as i64;
                                if s != 0 {
                                    acc += s * weights.get(co, ci, ky, kx) as i64;
                                }
                            }
                        }
                    }
                    out.set(t, co, yo, xo, Error::check_merged("conv psum", acc)?);
                }
            }
        }
    }
    Ok(out)
}

/// One neuron stepped serially over its per-time-step synaptic currents.
/// Returns the binary spike train and the carried membrane potential, so
/// the time loop may be split at any point.
pub fn neuron_serial(currents: &[i32], params: &NeuronParams, v0: i32) -> Result<(Vec<u8>, i32)> {
    let theta = params.threshold as i64;
    let mut v = v0 as i64;
    let mut spikes = Vec::with_capacity(currents.len());
    for &i_t in currents {
        if params.neuron_type == NeuronType::Lif {
            v -= v >> params.leak_shift;
        }
        v += i_t as i64;
        Error::check_merged("membrane potential", v)?;
        if v >= theta {
            spikes.push(1);
            v = match params.neuron_type {
                NeuronType::Rmp => v - theta, // soft reset, subtract once
                NeuronType::If | NeuronType::Lif => 0,
            };
        } else {
            spikes.push(0);
        }
    }
    Ok((spikes, v as i32))
}

/// Layer-level neurodynamics: per-channel bias and the optional compensation
/// left-shift are applied to each psum, then every neuron runs serially.
/// `state` carries membrane potentials across calls (time chunking).
pub fn neuron_layer(
    psums: &PsumTensor,
    params: &NeuronParams,
    post_shift_left: u8,
    state: &mut NeuronState,
) -> Result<SpikeTensor> {
    let mut out = SpikeTensor::zeros(psums.t, psums.c, psums.h, psums.w, 1)?;
    let mut currents = Vec::with_capacity(psums.t);
    for c in 0..psums.c {
        let bias = params.bias[c] as i64;
        for y in 0..psums.h {
            for x in 0..psums.w {
                currents.clear();
                for t in 0..psums.t {
                    let cur = ((psums.get(t, c, y, x) as i64) << post_shift_left) + bias;
                    currents.push(Error::check_merged("synaptic current", cur)?);
                }
                let idx = state.idx(c, y, x);
                let (spikes, v_next) = neuron_serial(&currents, params, state.v[idx])?;
                state.v[idx] = v_next;
                for (t, &s) in spikes.iter().enumerate() {
                    out.set(t, c, y, x, s)?;
                }
            }
        }
    }
    Ok(out)
}

/// 2x2 average pooling modeled as window sums: binary inputs yield values
/// 0..4 (3-bit). The fractional average is recovered downstream by a psum
/// right-shift recorded in layer metadata, never by fractional arithmetic.
pub fn avg_pool_2x2(spikes: &SpikeTensor) -> Result<SpikeTensor> {
    if spikes.bits() != 1 {
        return Err(Error::BitWidth(
            "average pooling expects binary spikes".into(),
        ));
    }
    pool_2x2(spikes, 4, |w| w.iter().sum())
}

/// 2x2 max pooling; bit-width is preserved.
pub fn max_pool_2x2(spikes: &SpikeTensor) -> Result<SpikeTensor> {
    pool_2x2(spikes, spikes.bits(), |w| *w.iter().max().unwrap())
}

fn pool_2x2(spikes: &SpikeTensor, out_bits: u8, f: impl Fn(&[u8; 4]) -> u8) -> Result<SpikeTensor> {
    if spikes.h % 2 != 0 || spikes.w % 2 != 0 {
        return Err(Error::Shape(format!(
            "2x2 pooling requires even dimensions, got {}x{}",
            spikes.h, spikes.w
        )));
    }
    SpikeTensor::from_fn(spikes.t, spikes.c, spikes.h / 2, spikes.w / 2, out_bits, |t, c, y, x| {
        f(&[
            spikes.get(t, c, 2 * y, 2 * x),
            spikes.get(t, c, 2 * y, 2 * x + 1),
            spikes.get(t, c, 2 * y + 1, 2 * x),
            spikes.get(t, c, 2 * y + 1, 2 * x + 1),
        ])
    })
}

/// Saturate-or-shift confinement of widened spike values to 2 bits:
/// saturate clamps to 3, shift halves every value (the next layer's psums
/// are left-shifted once to compensate).
pub fn apply_width_policy(spikes: &SpikeTensor, mode: PolicyMode) -> Result<SpikeTensor> {
    let out = SpikeTensor::from_fn(spikes.t, spikes.c, spikes.h, spikes.w, 2, |t, c, y, x| {
        let v = spikes.get(t, c, y, x);
        match mode {
            PolicyMode::Saturate => v.min(3),
            PolicyMode::Shift => v >> 1,
        }
    })?;
    Ok(out)
}

/// Spike-element-wise residual combination of a binary backbone stream with
/// a 1/2/4-bit shortcut stream.
pub fn sew_residual(
    backbone: &SpikeTensor,
    shortcut: &SpikeTensor,
    cfg: &ResidualConfig,
) -> Result<SpikeTensor> {
    cfg.validate()?;
    if (backbone.t, backbone.c, backbone.h, backbone.w)
        != (shortcut.t, shortcut.c, shortcut.h, shortcut.w)
    {
        return Err(Error::Shape("residual operand shapes differ".into()));
    }
    if backbone.bits() != 1 {
        return Err(Error::BitWidth(
            "residual backbone must carry binary spikes".into(),
        ));
    }
    if shortcut.bits() != cfg.shortcut_bits {
        return Err(Error::BitWidth(format!(
            "shortcut carries {}-bit spikes but {} were declared",
            shortcut.bits(),
            cfg.shortcut_bits
        )));
    }
    let out_bits = cfg.output_bits();
    SpikeTensor::from_fn(backbone.t, backbone.c, backbone.h, backbone.w, out_bits, |t, c, y, x| {
        let b = backbone.get(t, c, y, x);
        let s = shortcut.get(t, c, y, x);
        match cfg.function {
            SewFunction::Iand => match cfg.iand_order {
                IandOrder::NegateBackbone => (1 - b) & s,
                IandOrder::NegateShortcut => b & (1 - s),
            },
            SewFunction::Add => {
                let sum = b + s;
                match cfg.overflow_policy {
                    OverflowPolicy::Extend4 => sum.min(15),
                    OverflowPolicy::Saturate2 => sum.min(3),
                    OverflowPolicy::Shift2 => sum >> 1,
                }
            }
        }
    })
}

/// Direct input encoding: the 8-bit image is convolved once, the resulting
/// currents are replicated across all `t_out` time steps, and the neurons
/// run serially on the replicated stream.
pub fn direct_encode(
    image: &SpikeTensor,
    weights: &WeightTensor,
    shape: &LayerShape,
    params: &NeuronParams,
    post_shift_left: u8,
    t_out: usize,
) -> Result<SpikeTensor> {
    if image.t != 1 || image.bits() != 8 {
        return Err(Error::BitWidth(
            "direct coding expects a single-step 8-bit image".into(),
        ));
    }
    let psum = conv_integrate(image, weights, shape)?;
    let mut replicated = PsumTensor::zeros(t_out, shape.c_o, shape.h_o, shape.w_o);
    for t in 0..t_out {
        for c in 0..shape.c_o {
            for y in 0..shape.h_o {
                for x in 0..shape.w_o {
                    replicated.set(t, c, y, x, psum.get(0, c, y, x));
                }
            }
        }
    }
    let mut state = NeuronState::zeros(shape.c_o, shape.h_o, shape.w_o);
    neuron_layer(&replicated, params, post_shift_left, &mut state)
}

/// Spike counts over all time steps and pixels, one per channel: the
/// firing-rate readout of the classification layer.
pub fn spike_count(spikes: &SpikeTensor) -> Vec<u32> {
    let mut counts = vec![0u32; spikes.c];
    for t in 0..spikes.t {
        for c in 0..spikes.c {
            for y in 0..spikes.h {
                for x in 0..spikes.w {
                    counts[c] += spikes.get(t, c, y, x) as u32;
                }
            }
        }
    }
    counts
}

/// Result of a full reference run.
#[derive(Debug, Clone)]
pub struct RefRun {
    /// Output spike tensor of every layer, in order.
    pub layer_outputs: Vec<SpikeTensor>,
    /// Per-class spike counts at the readout.
    pub scores: Vec<u32>,
}

/// Execute one layer the reference way. `shortcut` must be provided iff the
/// layer has an externally-fed residual connection.
pub fn run_layer(
    layer: &LayerConfig,
    weights: &WeightTensor,
    input: &SpikeTensor,
    shortcut: Option<&SpikeTensor>,
) -> Result<SpikeTensor> {
    let mut spikes = if layer.coding == Coding::Direct8Bit {
        direct_encode(
            input,
            weights,
            &layer.shape,
            &layer.neuron,
            layer.post_shift_left,
            layer.shape.t,
        )?
    } else {
        if input.bits() != layer.coding.bits() {
            return Err(Error::BitWidth(format!(
                "layer {} expects {}-bit input, got {}-bit",
                layer.name,
                layer.coding.bits(),
                input.bits()
            )));
        }
        if input.t != layer.shape.t {
            return Err(Error::Shape(format!(
                "layer {} expects {} time steps, got {}",
                layer.name, layer.shape.t, input.t
            )));
        }
        let psums = conv_integrate(input, weights, &layer.shape)?;
        let mut state = NeuronState::zeros(layer.shape.c_o, layer.shape.h_o, layer.shape.w_o);
        neuron_layer(&psums, &layer.neuron, layer.post_shift_left, &mut state)?
    };
    spikes = match layer.pool {
        PoolMode::None => spikes,
        PoolMode::Max2x2 => max_pool_2x2(&spikes)?,
        PoolMode::Avg2x2 => apply_width_policy(&avg_pool_2x2(&spikes)?, layer.width_policy)?,
    };
    if let Some(res) = &layer.residual {
        let sc = shortcut.ok_or_else(|| {
            Error::Config(format!("layer {} needs a shortcut stream", layer.name))
        })?;
        spikes = sew_residual(&spikes, sc, res)?;
    }
    Ok(spikes)
}

/// Execute the whole network the reference way, recording every layer's
/// output and the final class scores.
pub fn run_reference(net: &NetworkDesc, input: &SpikeTensor) -> Result<RefRun> {
    let mut outputs: Vec<SpikeTensor> = Vec::with_capacity(net.layers.len());
    let mut cur = input.clone();
    for (i, (layer, weights)) in net.layers.iter().zip(&net.weights).enumerate() {
        let shortcut = match &layer.residual {
            Some(res) => {
                let src = res.shortcut_from.ok_or_else(|| {
                    Error::Config(format!("layer {i}: residual shortcut is not wired"))
                })?;
                Some(&outputs[src])
            }
            None => None,
        };
        let out = run_layer(layer, weights, &cur, shortcut)?;
        cur = out.clone();
        outputs.push(out);
    }
    let scores = spike_count(outputs.last().unwrap());
    Ok(RefRun {
        layer_outputs: outputs,
        scores,
    })
}
