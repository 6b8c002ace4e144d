//! End-to-end accelerator path: bit-plane preprocessing, loop-nest planned
//! tiling, the systolic engine with its gearboxes, psum merge, bias/shift,
//! two-phase neurodynamics, pooling and residual units, composed per layer
//! and chained across the network, with an element-exact diff against the
//! naive reference.

use crate::bitplane::{bitplane_decompose, merge_arrival_order};
use crate::engine::{
    collect_psums, gearbox_in, run_tile, EngineGeometry, SpikeBlock, WeightBlock,
};
use crate::ir::{
    Coding, LayerConfig, NetworkDesc, ParallelismConfig, SpikeTensor, WeightTensor,
};
use crate::postproc::{
    bias_shift, pool_unit, residual_unit, two_phase_neurodynamics, MergeCase, PsumMergeUnit,
};
use crate::sched::{estimate, estimate_layer, pad_stream, plan_loop_nest, LayerPerf, PerfConfig, PerfReport};
use crate::{oracle, Error, Result};

/// Output of one accelerated layer.
#[derive(Debug, Clone)]
pub struct LayerRun {
    pub output: SpikeTensor,
    pub perf: LayerPerf,
}

/// First mismatching element between the accelerator and reference paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DivergenceInfo {
    pub layer: usize,
    pub t: usize,
    pub c: usize,
    pub y: usize,
    pub x: usize,
    pub oracle: u8,
    pub accel: u8,
}

impl std::fmt::Display for DivergenceInfo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "layer {} at (t={}, c={}, y={}, x={}): reference {} vs accelerator {}",
            self.layer, self.t, self.c, self.y, self.x, self.oracle, self.accel
        )
    }
}

/// Result of a full accelerated network run.
#[derive(Debug, Clone)]
pub struct AccelRun {
    pub scores: Vec<u32>,
    pub oracle_scores: Vec<u32>,
    pub layer_outputs: Vec<SpikeTensor>,
    pub perf: PerfReport,
    /// `None` when every layer output matched the reference element-exactly.
    pub divergence: Option<DivergenceInfo>,
}

/// Build the binary equivalent-step stream of a layer input, already ordered
/// the way the merge unit's shift-add trees consume it.
fn equivalent_stream(layer: &LayerConfig, input: &SpikeTensor) -> Result<SpikeTensor> {
    match layer.coding {
        Coding::BinarySpike => Ok(input.clone()),
        _ => {
            let (planes, plan) = bitplane_decompose(input)?;
            let b = plan.bits as usize;
            let order = merge_arrival_order(plan.bits);
            SpikeTensor::from_fn(plan.t_e, input.c, input.h, input.w, 1, |te, c, y, x| {
                let (t, j) = (te / b, te % b);
                planes.get(t * b + order[j], c, y, x)
            })
        }
    }
}

/// Execute one layer on the accelerator path.
///
/// `shortcut` feeds the residual unit when the layer has one; network runs
/// wire it from the recorded output of the source layer. The returned perf
/// row comes from the static model, cross-checked against the actual tile
/// cycle ledger.
pub fn run_layer_accel(
    layer: &LayerConfig,
    weights: &WeightTensor,
    input: &SpikeTensor,
    shortcut: Option<&SpikeTensor>,
    par: &ParallelismConfig,
    cfg: &PerfConfig,
) -> Result<LayerRun> {
    layer.validate()?;
    let shape = &layer.shape;
    if input.bits() != layer.coding.bits() {
        return Err(Error::BitWidth(format!(
            "layer {} expects {}-bit input, got {}-bit",
            layer.name,
            layer.coding.bits(),
            input.bits()
        )));
    }
    let expect_t = if layer.coding == Coding::Direct8Bit { 1 } else { shape.t };
    if input.t != expect_t || (input.c, input.h, input.w) != (shape.c_i, shape.h_i, shape.w_i) {
        return Err(Error::Shape(format!(
            "layer {} expects input ({expect_t},{},{},{}), got ({},{},{},{})",
            layer.name, shape.c_i, shape.h_i, shape.w_i, input.t, input.c, input.h, input.w
        )));
    }

    let geom = EngineGeometry::from_par(par)?;
    let case = MergeCase::from_bits(layer.coding.bits())?;
    let nest = plan_loop_nest(layer, par)?;
    let (m, v, n, s) = (par.m, par.v, par.n, par.s);

    let stream = equivalent_stream(layer, input)?;
    let t_e = stream.t;
    let (padded, _meta) = pad_stream(&stream, shape.pad, n)?;

    let co_tiles = shape.c_o.div_ceil(m);
    let wo_tiles = shape.w_o.div_ceil(n);
    let te_tiles = t_e.div_ceil(s);
    let ci_tiles = shape.c_i.div_ceil(v);

    let mut spikes_out = SpikeTensor::zeros(shape.t, shape.c_o, shape.h_o, shape.w_o, 1)?;
    let mut actual_cycles = 0u64;

    for cot in 0..co_tiles {
        for y in 0..shape.h_o {
            for wot in 0..wo_tiles {
                // merged per-time-step currents of the m x n neurons at this
                // tile position, gathered across the t_e/s rounds
                let mut merged: Vec<Vec<i32>> = vec![Vec::new(); m * n];
                let mut units: Vec<PsumMergeUnit> = (0..m * n)
                    .map(|_| PsumMergeUnit::new(case, s))
                    .collect::<Result<_>>()?;

                for tet in 0..te_tiles {
                    // spatial reduction: one block per (k_h, k_w, c_i/v)
                    let mut spike_words: Vec<Vec<u8>> = Vec::new();
                    let mut weight_words: Vec<Vec<i8>> = Vec::new();
                    for kh in 0..shape.k_h {
                        let row = y * shape.stride + kh;
                        for kw in 0..shape.k_w {
                            for cit in 0..ci_tiles {
                                let block = SpikeBlock::from_fn(v, n, s, |vi, ni, si| {
                                    let ci = cit * v + vi;
                                    let te = tet * s + si;
                                    let col = (wot * n + ni) * shape.stride + kw;
                                    if ci >= shape.c_i || te >= t_e || col >= padded.w {
                                        0
                                    } else {
                                        padded.get(te, ci, row, col)
                                    }
                                })?;
                                let wblock = WeightBlock::from_fn(m, v, |mi, vi| {
                                    let co = cot * m + mi;
                                    let ci = cit * v + vi;
                                    if co >= shape.c_o || ci >= shape.c_i {
                                        0
                                    } else {
                                        weights.get(co, ci, kh, kw)
                                    }
                                });
                                spike_words.push(block.to_word());
                                weight_words.push(wblock.to_word());
                            }
                        }
                    }
                    // clock crossing into the fast domain and back
                    let fast_spikes = gearbox_in(&spike_words)?;
                    let fast_weights = gearbox_in(&weight_words)?;
                    let (tile, cycles) = run_tile(&fast_spikes, &fast_weights, &geom)?;
                    actual_cycles += cycles.accumulation;

                    let records = collect_psums(&tile);
                    for ni in 0..n {
                        for mi in 0..m {
                            let base = (ni * m + mi) * s;
                            let round: Vec<i32> =
                                records[base..base + s].iter().map(|r| r.value).collect();
                            if let Some(emission) = units[mi * n + ni].push_round(&round)? {
                                merged[mi * n + ni].extend(emission);
                            }
                        }
                    }
                }
                for (i, unit) in units.iter_mut().enumerate() {
                    if let Some(tail) = unit.flush() {
                        merged[i].extend(tail);
                    }
                }

                // neurodynamics per neuron, s time steps per batch
                for mi in 0..m {
                    let co = cot * m + mi;
                    if co >= shape.c_o {
                        continue;
                    }
                    for ni in 0..n {
                        let x = wot * n + ni;
                        if x >= shape.w_o {
                            continue;
                        }
                        let lane = &merged[mi * n + ni];
                        let currents: Vec<i32> = if layer.coding == Coding::Direct8Bit {
                            // the merged image convolution repeats every step
                            let r1 = *lane.first().ok_or_else(|| {
                                Error::Stream("direct coding produced no merged psum".into())
                            })?;
                            vec![r1; shape.t]
                        } else {
                            if lane.len() < shape.t {
                                return Err(Error::Stream(format!(
                                    "merged stream carries {} steps, layer needs {}",
                                    lane.len(),
                                    shape.t
                                )));
                            }
                            lane[..shape.t].to_vec()
                        };
                        let mut v_state = 0i32;
                        let mut t0 = 0usize;
                        for chunk in currents.chunks(s) {
                            let biased: Vec<i32> = chunk
                                .iter()
                                .map(|&c| {
                                    bias_shift(c, layer.neuron.bias[co], layer.post_shift_left)
                                })
                                .collect::<Result<_>>()?;
                            let (sp, v_next) =
                                two_phase_neurodynamics(&biased, &layer.neuron, v_state)?;
                            v_state = v_next;
                            for (dt, &bit) in sp.iter().enumerate() {
                                spikes_out.set(t0 + dt, co, y, x, bit)?;
                            }
                            t0 += chunk.len();
                        }
                    }
                }
            }
        }
    }

    if actual_cycles != nest.compute_cycles() {
        return Err(Error::Stream(format!(
            "cycle ledger mismatch (internal): ran {actual_cycles}, planned {}",
            nest.compute_cycles()
        )));
    }

    let mut out = pool_unit(&spikes_out, layer.pool, layer.width_policy)?;
    if let Some(res) = &layer.residual {
        let sc = shortcut.ok_or_else(|| {
            Error::Config(format!("layer {} needs a shortcut stream", layer.name))
        })?;
        out = residual_unit(&out, sc, res)?;
    }

    let perf = estimate_layer(layer, par, cfg)?;
    Ok(LayerRun { output: out, perf })
}

fn first_diff(layer: usize, reference: &SpikeTensor, accel: &SpikeTensor) -> Option<DivergenceInfo> {
    for t in 0..reference.t {
        for c in 0..reference.c {
            for y in 0..reference.h {
                for x in 0..reference.w {
                    let o = reference.get(t, c, y, x);
                    let a = accel.get(t, c, y, x);
                    if o != a {
                        return Some(DivergenceInfo {
                            layer,
                            t,
                            c,
                            y,
                            x,
                            oracle: o,
                            accel: a,
                        });
                    }
                }
            }
        }
    }
    None
}

/// Execute the whole network on the accelerator path and diff every layer
/// output against the reference implementation.
pub fn run_network_accel(
    net: &NetworkDesc,
    input: &SpikeTensor,
    par: &ParallelismConfig,
    cfg: &PerfConfig,
) -> Result<AccelRun> {
    net.validate()?;
    let reference = oracle::run_reference(net, input)?;

    let mut outputs: Vec<SpikeTensor> = Vec::with_capacity(net.layers.len());
    let mut divergence = None;
    let mut cur = input.clone();
    for (i, (layer, weights)) in net.layers.iter().zip(&net.weights).enumerate() {
        let shortcut = match &layer.residual {
            Some(res) => {
                let src = res.shortcut_from.ok_or_else(|| {
                    Error::Config(format!("layer {i}: residual shortcut is not wired"))
                })?;
                Some(outputs[src].clone())
            }
            None => None,
        };
        let run = run_layer_accel(layer, weights, &cur, shortcut.as_ref(), par, cfg)?;
        if divergence.is_none() {
            divergence = first_diff(i, &reference.layer_outputs[i], &run.output);
        }
        cur = run.output.clone();
        outputs.push(run.output);
    }

    let scores = crate::postproc::spike_accumulate(outputs.last().unwrap());
    let perf = estimate(net, par, cfg)?;
    Ok(AccelRun {
        scores,
        oracle_scores: reference.scores,
        layer_outputs: outputs,
        perf,
        divergence,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{
        IandOrder, LayerShape, NeuronParams, NeuronType, OverflowPolicy, PolicyMode, PoolMode,
        ResidualConfig, SewFunction,
    };

    fn par_small() -> ParallelismConfig {
        ParallelismConfig::new(8, 8, 4, 4, 500.0).unwrap()
    }

    fn if_layer(
        t: usize,
        h: usize,
        w: usize,
        k: usize,
        stride: usize,
        pad: usize,
        c_i: usize,
        c_o: usize,
        coding: Coding,
        threshold: i32,
    ) -> LayerConfig {
        LayerConfig {
            name: "t".into(),
            shape: LayerShape::new(t, h, w, k, k, stride, pad, c_i, c_o).unwrap(),
            coding,
            neuron: NeuronParams {
                neuron_type: NeuronType::If,
                threshold,
                leak_shift: 0,
                bias: vec![0; c_o],
            },
            pool: PoolMode::None,
            width_policy: PolicyMode::Saturate,
            residual: None,
            post_shift_left: 0,
        }
    }

    fn lcg_stream(seed: u32) -> impl FnMut() -> u32 {
        let mut state = seed;
        move || {
            state = state.wrapping_mul(1664525).wrapping_add(1013904223);
            state >> 16
        }
    }

    #[test]
    fn identity_conv_thresholds_the_input() {
        // 1x1 conv, weight 1, threshold 1: the layer reproduces its input
        let layer = if_layer(2, 2, 2, 1, 1, 0, 1, 1, Coding::BinarySpike, 1);
        let w = WeightTensor::from_data(1, 1, 1, 1, vec![1]).unwrap();
        let input =
            SpikeTensor::from_data(2, 1, 2, 2, 1, vec![1, 0, 0, 1, 0, 1, 1, 0]).unwrap();
        let run = run_layer_accel(&layer, &w, &input, None, &par_small(), &PerfConfig::default())
            .unwrap();
        assert_eq!(run.output, input);
    }

    #[test]
    fn random_binary_layer_matches_oracle() {
        let layer = if_layer(4, 6, 6, 3, 1, 1, 3, 5, Coding::BinarySpike, 7);
        let mut next = lcg_stream(11);
        let input = SpikeTensor::from_fn(4, 3, 6, 6, 1, |_, _, _, _| (next() % 2) as u8).unwrap();
        let w = WeightTensor::from_data(
            5,
            3,
            3,
            3,
            (0..5 * 27).map(|_| (next() % 9) as i8 - 4).collect(),
        )
        .unwrap();
        let accel =
            run_layer_accel(&layer, &w, &input, None, &par_small(), &PerfConfig::default())
                .unwrap();
        let reference = oracle::run_layer(&layer, &w, &input, None).unwrap();
        assert_eq!(accel.output, reference);
    }

    #[test]
    fn multi_bit_layers_match_oracle() {
        let mut next = lcg_stream(23);
        for coding in [Coding::Spike2Bit, Coding::Spike4Bit] {
            let layer = if_layer(2, 4, 4, 3, 1, 1, 2, 3, coding, 9);
            let maxv = coding.bits();
            let input = SpikeTensor::from_fn(2, 2, 4, 4, maxv, |_, _, _, _| {
                (next() % (1 << maxv.min(4)) as u32) as u8
            })
            .unwrap();
            let w = WeightTensor::from_data(
                3,
                2,
                3,
                3,
                (0..54).map(|_| (next() % 7) as i8 - 3).collect(),
            )
            .unwrap();
            let accel =
                run_layer_accel(&layer, &w, &input, None, &par_small(), &PerfConfig::default())
                    .unwrap();
            let reference = oracle::run_layer(&layer, &w, &input, None).unwrap();
            assert_eq!(accel.output, reference, "{coding:?}");
        }
    }

    #[test]
    fn direct_coding_layer_matches_oracle() {
        let mut next = lcg_stream(31);
        let layer = if_layer(4, 2, 2, 1, 1, 0, 1, 2, Coding::Direct8Bit, 100);
        let input = SpikeTensor::from_fn(1, 1, 2, 2, 8, |_, _, _, _| (next() % 256) as u8).unwrap();
        let w = WeightTensor::from_data(2, 1, 1, 1, vec![1, -2]).unwrap();
        let accel =
            run_layer_accel(&layer, &w, &input, None, &par_small(), &PerfConfig::default())
                .unwrap();
        let reference = oracle::run_layer(&layer, &w, &input, None).unwrap();
        assert_eq!(accel.output, reference);
    }

    #[test]
    fn three_layer_network_matches_oracle_scores() {
        // direct encoding, a pooled hidden layer with bias, and a residual
        // readout layer chained end to end
        let mut next = lcg_stream(47);
        let t = 4;
        let mut l0 = if_layer(t, 4, 4, 3, 1, 1, 1, 4, Coding::Direct8Bit, 60);
        l0.neuron.bias = vec![3, -3, 5, 0];
        let mut l1 = if_layer(t, 4, 4, 3, 1, 1, 4, 4, Coding::BinarySpike, 5);
        l1.pool = PoolMode::Max2x2;
        let mut l2 = if_layer(t, 2, 2, 1, 1, 0, 4, 4, Coding::BinarySpike, 2);
        l2.residual = Some(ResidualConfig {
            function: SewFunction::Add,
            shortcut_bits: 1,
            overflow_policy: OverflowPolicy::Saturate2,
            shortcut_from: Some(1),
            iand_order: IandOrder::NegateBackbone,
        });
        // saturate2 keeps 2-bit outputs; the readout accepts them as counts
        let l2_bits = l2.output_bits();
        assert_eq!(l2_bits, 2);

        let weights = vec![
            WeightTensor::from_data(4, 1, 3, 3, (0..36).map(|_| (next() % 11) as i8 - 5).collect())
                .unwrap(),
            WeightTensor::from_data(4, 4, 3, 3, (0..144).map(|_| (next() % 5) as i8 - 2).collect())
                .unwrap(),
            WeightTensor::from_data(4, 4, 1, 1, (0..16).map(|_| (next() % 5) as i8 - 2).collect())
                .unwrap(),
        ];
        let net = NetworkDesc {
            name: "three".into(),
            t,
            layers: vec![l0, l1, l2],
            weights,
            classes: 4,
            ann_flops: Some(1_000_000),
        };
        net.validate().unwrap();
        let input = SpikeTensor::from_fn(1, 1, 4, 4, 8, |_, _, _, _| (next() % 256) as u8).unwrap();
        let run = run_network_accel(
            &net,
            &input,
            &par_small(),
            &PerfConfig::default(),
        )
        .unwrap();
        assert_eq!(run.divergence, None, "{:?}", run.divergence);
        assert_eq!(run.scores, run.oracle_scores);
        assert!(run.perf.totals.utilization <= 1.0);
        assert!(run.perf.totals.ann_equiv_gops.is_some());
    }

    #[test]
    fn divergence_reports_first_mismatch_coordinates() {
        // a deliberately corrupted accel output is localized exactly
        let a = SpikeTensor::zeros(2, 2, 2, 2, 1).unwrap();
        let mut b = a.clone();
        b.set(1, 0, 1, 0, 1).unwrap();
        let d = first_diff(3, &a, &b).unwrap();
        assert_eq!((d.layer, d.t, d.c, d.y, d.x), (3, 1, 0, 1, 0));
        assert_eq!((d.oracle, d.accel), (0, 1));
    }

    #[test]
    fn chunked_time_execution_is_invariant() {
        // the same layer at different time parallelism gives identical spikes
        let layer = if_layer(8, 4, 4, 3, 1, 1, 2, 4, Coding::BinarySpike, 6);
        let mut next = lcg_stream(91);
        let input = SpikeTensor::from_fn(8, 2, 4, 4, 1, |_, _, _, _| (next() % 2) as u8).unwrap();
        let w = WeightTensor::from_data(
            4,
            2,
            3,
            3,
            (0..72).map(|_| (next() % 9) as i8 - 4).collect(),
        )
        .unwrap();
        let cfg = PerfConfig::default();
        let s4 = run_layer_accel(
            &layer,
            &w,
            &input,
            None,
            &ParallelismConfig::new(8, 8, 4, 4, 500.0).unwrap(),
            &cfg,
        )
        .unwrap();
        let s2 = run_layer_accel(
            &layer,
            &w,
            &input,
            None,
            &ParallelismConfig::new(8, 8, 4, 2, 500.0).unwrap(),
            &cfg,
        )
        .unwrap();
        let s8 = run_layer_accel(
            &layer,
            &w,
            &input,
            None,
            &ParallelismConfig::new(8, 8, 4, 8, 500.0).unwrap(),
            &cfg,
        )
        .unwrap();
        assert_eq!(s4.output, s2.output);
        assert_eq!(s4.output, s8.output);
    }
}
