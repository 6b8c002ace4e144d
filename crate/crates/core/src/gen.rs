//! Seeded generation of random but legal layers, networks and stimuli.
//!
//! Used by the equivalence test suites and the fixture tooling. Generated
//! cases stay inside the hardware number ranges by construction: per-channel
//! weight mass is budgeted so engine psums fit 12 bits, merged psums fit 18
//! bits, and membrane potentials cannot overflow even on worst-case input.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ir::{
    Coding, IandOrder, LayerConfig, LayerShape, NetworkDesc, NeuronParams, NeuronType,
    OverflowPolicy, PolicyMode, PoolMode, ResidualConfig, SewFunction, SpikeTensor, WeightTensor,
};
use crate::MERGED_PSUM_MAX;

/// One standalone layer case: configuration, weights, input and (when the
/// layer carries a residual) a matching shortcut stream.
#[derive(Debug, Clone)]
pub struct LayerCase {
    pub layer: LayerConfig,
    pub weights: WeightTensor,
    pub input: SpikeTensor,
    pub shortcut: Option<SpikeTensor>,
}

const KERNELS: [usize; 4] = [1, 3, 5, 7];
const STRIDES: [usize; 2] = [1, 2];
const TIME_STEPS: [usize; 4] = [1, 2, 4, 8];
const CODINGS: [Coding; 4] = [
    Coding::BinarySpike,
    Coding::Spike2Bit,
    Coding::Spike4Bit,
    Coding::Direct8Bit,
];
const NEURONS: [NeuronType; 3] = [NeuronType::If, NeuronType::Lif, NeuronType::Rmp];

/// Largest per-output-channel weight mass that keeps every stage in range
/// for this layer: engine psums within 12 bits and the worst-case membrane
/// excursion within 18 bits over all `t` steps.
fn weight_budget(t: usize, coding: Coding, post_shift_left: u8, bias_max: i64) -> u64 {
    let max_val = SpikeTensor::max_value(coding.bits()) as i64;
    let headroom = (MERGED_PSUM_MAX as i64 / t as i64 - bias_max) >> post_shift_left;
    let by_membrane = (headroom / max_val).max(1) as u64;
    by_membrane.min(2000) // engine stage: per-plane |psum| <= sum|w| < 2^11
}

fn random_weights(
    rng: &mut ChaCha8Rng,
    c_o: usize,
    c_i: usize,
    k_h: usize,
    k_w: usize,
    budget: u64,
) -> WeightTensor {
    let mut w = WeightTensor::zeros(c_o, c_i, k_h, k_w);
    for co in 0..c_o {
        let mut mass = 0u64;
        for ci in 0..c_i {
            for ky in 0..k_h {
                for kx in 0..k_w {
                    let cand: i8 = rng.gen_range(-5..=5);
                    if mass + cand.unsigned_abs() as u64 <= budget {
                        mass += cand.unsigned_abs() as u64;
                        w.set(co, ci, ky, kx, cand);
                    }
                }
            }
        }
    }
    w
}

fn random_spikes(rng: &mut ChaCha8Rng, t: usize, c: usize, h: usize, w: usize, bits: u8) -> SpikeTensor {
    let max = SpikeTensor::max_value(bits);
    SpikeTensor::from_fn(t, c, h, w, bits, |_, _, _, _| rng.gen_range(0..=max)).unwrap()
}

/// Generate one layer case. Consecutive seeds sweep the whole configuration
/// grid: kernel 1/3/5/7, stride 1/2, pad 0..3, T 1/2/4/8 are indexed by the
/// seed, and coding, neuron type, pooling and residual variants are drawn
/// from the seeded stream.
pub fn layer_case(seed: u64) -> LayerCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = KERNELS[(seed % 4) as usize];
    let stride = STRIDES[((seed / 4) % 2) as usize];
    let pad = ((seed / 8) % 4) as usize;
    let t = TIME_STEPS[((seed / 32) % 4) as usize];
    let coding = CODINGS[rng.gen_range(0..CODINGS.len())];
    let neuron_type = NEURONS[rng.gen_range(0..NEURONS.len())];

    // desk-scale dims, shrunk for big kernels to bound the op count
    let (c_max, hw_max) = match k {
        1 | 3 => (10, 14),
        5 => (6, 12),
        _ => (4, 12),
    };
    let c_i = rng.gen_range(1..=c_max);
    let c_o = rng.gen_range(1..=c_max);
    let mut h = rng.gen_range(k.saturating_sub(2 * pad).max(2)..=hw_max);

    let mut pool = match rng.gen_range(0..4) {
        0 => PoolMode::Max2x2,
        1 => PoolMode::Avg2x2,
        _ => PoolMode::None,
    };
    if pool != PoolMode::None {
        // make the output map even
        let h_o = (h + 2 * pad - k) / stride + 1;
        if h_o % 2 == 1 {
            h += stride;
        }
    }
    let shape = LayerShape::new(t, h, h, k, k, stride, pad, c_i, c_o).unwrap();
    if shape.h_o % 2 != 0 {
        pool = PoolMode::None;
    }

    let residual = if pool != PoolMode::Avg2x2 && rng.gen_bool(0.35) {
        let function = if rng.gen_bool(0.5) { SewFunction::Add } else { SewFunction::Iand };
        let shortcut_bits = match function {
            SewFunction::Iand => 1,
            SewFunction::Add => [1u8, 2, 4][rng.gen_range(0..3)],
        };
        let overflow_policy = match rng.gen_range(0..3) {
            0 => OverflowPolicy::Extend4,
            1 => OverflowPolicy::Saturate2,
            _ => OverflowPolicy::Shift2,
        };
        Some(ResidualConfig {
            function,
            shortcut_bits,
            overflow_policy,
            shortcut_from: None,
            iand_order: IandOrder::NegateBackbone,
        })
    } else {
        None
    };

    let post_shift_left = if coding != Coding::Direct8Bit && rng.gen_bool(0.25) { 1 } else { 0 };
    let bias_max = 200i64;
    let budget = weight_budget(t, coding, post_shift_left, bias_max);
    let mut rng_w = ChaCha8Rng::seed_from_u64(seed ^ 0x57ED_517E);
    let weights = random_weights(&mut rng_w, c_o, c_i, k, k, budget);

    let threshold = rng.gen_range(1..=400);
    let leak_shift = rng.gen_range(0..=6);
    let bias = (0..c_o)
        .map(|_| rng.gen_range(-(bias_max as i32)..=bias_max as i32))
        .collect();

    let layer = LayerConfig {
        name: format!("case{seed}"),
        shape,
        coding,
        neuron: NeuronParams {
            neuron_type,
            threshold,
            leak_shift,
            bias,
        },
        pool,
        width_policy: if rng.gen_bool(0.5) { PolicyMode::Saturate } else { PolicyMode::Shift },
        residual,
        post_shift_left,
    };

    let t_in = if coding == Coding::Direct8Bit { 1 } else { t };
    let input = random_spikes(&mut rng, t_in, c_i, h, h, coding.bits());
    let shortcut = layer.residual.as_ref().map(|res| {
        let (ho, wo) = layer.output_dims();
        random_spikes(&mut rng, t, c_o, ho, wo, res.shortcut_bits)
    });

    LayerCase {
        layer,
        weights,
        input,
        shortcut,
    }
}

/// Generate a legal multi-layer network plus a matching input tensor.
/// Layer widths, codings and shift compensation chain correctly; one layer
/// may pool and a later layer may take a residual shortcut when the maps
/// still line up.
pub fn random_network(seed: u64) -> (NetworkDesc, SpikeTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = TIME_STEPS[rng.gen_range(1..TIME_STEPS.len())]; // at least 2 steps
    let n_layers = rng.gen_range(2..=4);
    let direct_front = rng.gen_bool(0.5);
    let base_c = rng.gen_range(2..=5);
    let mut h = [8usize, 12][rng.gen_range(0..2)];

    let mut layers: Vec<LayerConfig> = Vec::new();
    let mut weights = Vec::new();
    let mut prev_bits: u8 = if direct_front { 8 } else { 1 };
    let mut prev_shift = false;
    let mut c_in = rng.gen_range(1..=3);
    let pool_at = rng.gen_range(0..n_layers);

    for i in 0..n_layers {
        let coding = if i == 0 && direct_front {
            Coding::Direct8Bit
        } else {
            Coding::from_bits(prev_bits).unwrap()
        };
        let c_out = if i + 1 == n_layers { rng.gen_range(2..=6) } else { base_c };
        let shape = LayerShape::new(t, h, h, 3, 3, 1, 1, c_in, c_out).unwrap();
        let pool = if i == pool_at && shape.h_o % 2 == 0 && h > 4 {
            PoolMode::Max2x2
        } else {
            PoolMode::None
        };
        // residual from the previous layer when maps and widths line up
        let residual = if i > 0
            && pool == PoolMode::None
            && layers[i - 1].output_dims() == (shape.h_o, shape.w_o)
            && layers[i - 1].shape.c_o == c_out
            && rng.gen_bool(0.4)
        {
            let src_bits = layers[i - 1].output_bits();
            if [1, 2, 4].contains(&src_bits) {
                Some(ResidualConfig {
                    function: if src_bits == 1 && rng.gen_bool(0.4) {
                        SewFunction::Iand
                    } else {
                        SewFunction::Add
                    },
                    shortcut_bits: src_bits,
                    overflow_policy: OverflowPolicy::Saturate2,
                    shortcut_from: Some(i - 1),
                    iand_order: IandOrder::NegateBackbone,
                })
            } else {
                None
            }
        } else {
            None
        };

        let post_shift_left = u8::from(prev_shift);
        let bias_max = 100i64;
        let budget = weight_budget(t, coding, post_shift_left, bias_max);
        let mut rng_w = ChaCha8Rng::seed_from_u64(seed ^ (0xBEE5 + i as u64));
        let w = random_weights(&mut rng_w, c_out, c_in, 3, 3, budget);

        let layer = LayerConfig {
            name: format!("l{i}"),
            shape,
            coding,
            neuron: NeuronParams {
                neuron_type: NEURONS[rng.gen_range(0..NEURONS.len())],
                threshold: rng.gen_range(1..=150),
                leak_shift: rng.gen_range(0..=4),
                bias: (0..c_out)
                    .map(|_| rng.gen_range(-(bias_max as i32)..=bias_max as i32))
                    .collect(),
            },
            pool,
            width_policy: PolicyMode::Saturate,
            residual,
            post_shift_left,
        };
        prev_shift = layer.shifts_output();
        prev_bits = layer.output_bits();
        let (ho, _) = layer.output_dims();
        h = ho;
        c_in = c_out;
        layers.push(layer);
        weights.push(w);
    }

    let classes = layers.last().unwrap().shape.c_o;
    let first = &layers[0];
    let input = random_spikes(
        &mut rng,
        if first.coding == Coding::Direct8Bit { 1 } else { t },
        first.shape.c_i,
        first.shape.h_i,
        first.shape.w_i,
        first.coding.bits(),
    );
    let net = NetworkDesc {
        name: format!("net{seed}"),
        t,
        layers,
        weights,
        classes,
        ann_flops: Some(rng.gen_range(1_000_000..100_000_000)),
    };
    (net, input)
}

/// Desk-scale stretch cases at the top of the supported envelope (feature
/// maps up to 32x32, up to 64 channels): heavier than the seeded sweep but
/// still minutes-free.
pub fn stretch_cases() -> Vec<LayerCase> {
    let specs: [(usize, usize, usize, usize, usize, usize, usize, Coding, PoolMode); 6] = [
        (4, 32, 3, 1, 1, 64, 64, Coding::BinarySpike, PoolMode::None),
        (8, 32, 1, 1, 0, 16, 64, Coding::Spike2Bit, PoolMode::None),
        (2, 28, 5, 2, 2, 32, 32, Coding::Spike4Bit, PoolMode::Max2x2),
        (4, 32, 7, 2, 3, 3, 64, Coding::Direct8Bit, PoolMode::Max2x2),
        (4, 16, 3, 1, 1, 64, 64, Coding::BinarySpike, PoolMode::Max2x2),
        (4, 32, 3, 1, 1, 8, 16, Coding::BinarySpike, PoolMode::Avg2x2),
    ];
    specs
        .iter()
        .enumerate()
        .map(|(i, &(t, h, k, stride, pad, c_i, c_o, coding, pool))| {
            let mut rng = ChaCha8Rng::seed_from_u64(0x57E7C4 + i as u64);
            let shape = LayerShape::new(t, h, h, k, k, stride, pad, c_i, c_o).unwrap();
            let budget = weight_budget(t, coding, 0, 100);
            let weights = random_weights(&mut rng, c_o, c_i, k, k, budget);
            let layer = LayerConfig {
                name: format!("stretch{i}"),
                shape,
                coding,
                neuron: NeuronParams {
                    neuron_type: NEURONS[i % 3],
                    threshold: 40,
                    leak_shift: 2,
                    bias: (0..c_o).map(|_| rng.gen_range(-100..=100)).collect(),
                },
                pool,
                width_policy: PolicyMode::Saturate,
                residual: None,
                post_shift_left: 0,
            };
            let t_in = if coding == Coding::Direct8Bit { 1 } else { t };
            let input = random_spikes(&mut rng, t_in, c_i, h, h, coding.bits());
            LayerCase {
                layer,
                weights,
                input,
                shortcut: None,
            }
        })
        .collect()
}

/// Seven-convolution CIFAR-10 style network: direct-coded 32x32x3 front end,
/// three max-pool stages, ten output classes, T = 4. Deterministic weights;
/// useful as a perf-model fixture and CLI demo.
pub fn snn7_cifar10() -> NetworkDesc {
    let t = 4;
    // (c_in, c_out, h, pool)
    let plan = [
        (3usize, 16usize, 32usize, PoolMode::None),
        (16, 16, 32, PoolMode::Max2x2),
        (16, 32, 16, PoolMode::None),
        (32, 32, 16, PoolMode::Max2x2),
        (32, 64, 8, PoolMode::None),
        (64, 64, 8, PoolMode::Max2x2),
        (64, 10, 4, PoolMode::None),
    ];
    let mut layers = Vec::new();
    let mut weights = Vec::new();
    for (i, &(c_in, c_out, h, pool)) in plan.iter().enumerate() {
        let coding = if i == 0 { Coding::Direct8Bit } else { Coding::BinarySpike };
        let budget = weight_budget(t, coding, 0, 50);
        let mut rng_w = ChaCha8Rng::seed_from_u64(0xC1FA_0 + i as u64);
        weights.push(random_weights(&mut rng_w, c_out, c_in, 3, 3, budget));
        layers.push(LayerConfig {
            name: format!("conv{i}"),
            shape: LayerShape::new(t, h, h, 3, 3, 1, 1, c_in, c_out).unwrap(),
            coding,
            neuron: NeuronParams {
                neuron_type: NeuronType::If,
                threshold: if i == 0 { 96 } else { 24 },
                leak_shift: 0,
                bias: vec![0; c_out],
            },
            pool,
            width_policy: PolicyMode::Saturate,
            residual: None,
            post_shift_left: 0,
        });
    }
    NetworkDesc {
        name: "snn7-cifar10".into(),
        t,
        layers,
        weights,
        classes: 10,
        ann_flops: Some(284_000_000),
    }
}
