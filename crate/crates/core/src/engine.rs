//! Functional and cycle-counted model of the spike computing engine.
//!
//! The engine is an output-stationary systolic array of processing elements
//! built from 2x4 synaptic-crossbar cells (one DSP slice each): two binary
//! spike inputs, eight 8-bit weights, four 12-bit SIMD accumulators chained
//! through a cascade path. Spike and weight streams enter through 2:1
//! gearboxes that halve the word width while doubling the clock, so the
//! array runs in a doubled clock domain at constant bandwidth.
//!
//! One accumulation step multiplies a `v x n x s` spike block with an
//! `m x v` weight block and adds into the resident `m x n x s` tile; a tile
//! completes every `k_h * k_w * ceil(c_i/v)` steps. The double-rate spike
//! pairing is folded into the functional step; only the cycle ledger
//! distinguishes the clock domains.

use crate::ir::ParallelismConfig;
use crate::{Error, Result};

/// Systolic-array and PE dimensions derived from the parallelism config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineGeometry {
    pub m: usize,
    pub v: usize,
    pub n: usize,
    pub s: usize,
    /// Systolic array height: m/4 (each PE column computes 4 channels).
    pub sa_h: usize,
    /// Systolic array width: n.
    pub sa_w: usize,
    /// PE height: v/4 (each cell integrates 4 input channels per step,
    /// two per double-rate half).
    pub pe_h: usize,
    /// PE width: s.
    pub pe_w: usize,
}

impl EngineGeometry {
    pub fn from_par(par: &ParallelismConfig) -> Result<Self> {
        par.validate()?;
        Ok(EngineGeometry {
            m: par.m,
            v: par.v,
            n: par.n,
            s: par.s,
            sa_h: par.m / 4,
            sa_w: par.n,
            pe_h: par.v / 4,
            pe_w: par.s,
        })
    }

    /// DSP slices instantiated: one per crossbar cell.
    pub fn dsp_count(&self) -> u64 {
        (self.sa_h * self.sa_w * self.pe_h * self.pe_w) as u64
    }

    /// Synaptic operations retired per accumulation cycle.
    pub fn ops_per_cycle(&self) -> u64 {
        (self.m * self.v * self.n * self.s) as u64
    }

    /// Linear pipeline skew charged once per tile sequence. The real
    /// collection latency is unspecified; this constant only affects cycle
    /// counts, never values.
    pub fn pipeline_fill(&self) -> u64 {
        (self.sa_h + self.sa_w + self.pe_h) as u64
    }
}

/// One `v x n x s` block of binary spikes (one accumulation step's input).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeBlock {
    pub v: usize,
    pub n: usize,
    pub s: usize,
    data: Vec<u8>,
}

impl SpikeBlock {
    pub fn from_fn(
        v: usize,
        n: usize,
        s: usize,
        mut f: impl FnMut(usize, usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(v * n * s);
        for vi in 0..v {
            for ni in 0..n {
                for si in 0..s {
                    let bit = f(vi, ni, si);
                    if bit > 1 {
                        return Err(Error::BitWidth(format!("spike block value {bit} not binary")));
                    }
                    data.push(bit);
                }
            }
        }
        Ok(SpikeBlock { v, n, s, data })
    }

    pub fn zeros(v: usize, n: usize, s: usize) -> Self {
        SpikeBlock {
            v,
            n,
            s,
            data: vec![0; v * n * s],
        }
    }

    #[inline]
    pub fn get(&self, vi: usize, ni: usize, si: usize) -> u8 {
        self.data[(vi * self.n + ni) * self.s + si]
    }

    /// Flatten to one slow-clock stream word, v-major.
    pub fn to_word(&self) -> Vec<u8> {
        self.data.clone()
    }

    pub fn from_word(v: usize, n: usize, s: usize, word: Vec<u8>) -> Result<Self> {
        if word.len() != v * n * s {
            return Err(Error::Stream(format!(
                "spike word length {} != {v}x{n}x{s}",
                word.len()
            )));
        }
        Ok(SpikeBlock { v, n, s, data: word })
    }
}

/// One `m x v` block of weights (shared across the n and s dimensions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightBlock {
    pub m: usize,
    pub v: usize,
    data: Vec<i8>,
}

impl WeightBlock {
    pub fn from_fn(m: usize, v: usize, mut f: impl FnMut(usize, usize) -> i8) -> Self {
        let mut data = Vec::with_capacity(m * v);
        for mi in 0..m {
            for vi in 0..v {
                data.push(f(mi, vi));
            }
        }
        WeightBlock { m, v, data }
    }

    #[inline]
    pub fn get(&self, mi: usize, vi: usize) -> i8 {
        self.data[mi * self.v + vi]
    }

    pub fn to_word(&self) -> Vec<i8> {
        self.data.clone()
    }

    pub fn from_word(m: usize, v: usize, word: Vec<i8>) -> Result<Self> {
        if word.len() != m * v {
            return Err(Error::Stream(format!(
                "weight word length {} != {m}x{v}",
                word.len()
            )));
        }
        Ok(WeightBlock { m, v, data: word })
    }
}

/// Output-stationary `m x n x s` partial-sum tile, 12-bit at this stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsumTile {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    values: Vec<i32>,
    /// Fast-clock cycle at which the tile contents became valid.
    pub valid_at_cycle: u64,
}

impl PsumTile {
    pub fn zeros(m: usize, n: usize, s: usize) -> Self {
        PsumTile {
            m,
            n,
            s,
            values: vec![0; m * n * s],
            valid_at_cycle: 0,
        }
    }

    #[inline]
    pub fn get(&self, mi: usize, ni: usize, si: usize) -> i32 {
        self.values[(mi * self.n + ni) * self.s + si]
    }

    #[inline]
    fn add(&mut self, mi: usize, ni: usize, si: usize, delta: i32) -> Result<()> {
        let idx = (mi * self.n + ni) * self.s + si;
        let next = self.values[idx] as i64 + delta as i64;
        self.values[idx] = Error::check_engine("engine psum", next)?;
        Ok(())
    }
}

/// Semantic model of one DSP slice: a 2x4 synaptic crossbar with four
/// 12-bit accumulators fed through a cascade input.
#[derive(Debug, Clone, Copy)]
pub struct CrossbarCell {
    /// Indexed `weights[spike_input][channel]`.
    pub weights: [[i8; 4]; 2],
}

impl CrossbarCell {
    /// One fast-clock step: each accumulator adds
    /// `(spike0 ? w0c : 0) + (spike1 ? w1c : 0) + cascade_in`.
    pub fn step(&self, spikes: [u8; 2], cascade_in: [i32; 4]) -> [i32; 4] {
        let mut out = cascade_in;
        for (c, o) in out.iter_mut().enumerate() {
            if spikes[0] != 0 {
                *o += self.weights[0][c] as i32;
            }
            if spikes[1] != 0 {
                *o += self.weights[1][c] as i32;
            }
        }
        out
    }
}

/// 2:1 serializer: each slow-clock word of 2k elements becomes two
/// consecutive fast-clock words of k elements, first half first.
pub fn gearbox_in<T: Clone>(slow: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    let mut fast = Vec::with_capacity(slow.len() * 2);
    for word in slow {
        if word.len() % 2 != 0 {
            return Err(Error::Stream(format!(
                "gearbox needs an even slow word, got {}",
                word.len()
            )));
        }
        let half = word.len() / 2;
        fast.push(word[..half].to_vec());
        fast.push(word[half..].to_vec());
    }
    Ok(fast)
}

/// 2:1 deserializer, inverse of [`gearbox_in`].
pub fn gearbox_out<T: Clone>(fast: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
    if fast.len() % 2 != 0 {
        return Err(Error::Stream(format!(
            "gearbox needs an even fast stream, got {} words",
            fast.len()
        )));
    }
    let mut slow = Vec::with_capacity(fast.len() / 2);
    for pair in fast.chunks(2) {
        if pair[0].len() != pair[1].len() {
            return Err(Error::Stream("gearbox word widths differ".into()));
        }
        let mut word = pair[0].clone();
        word.extend_from_slice(&pair[1]);
        slow.push(word);
    }
    Ok(slow)
}

/// One functional accumulation step:
/// `tile[m,n,s] += sum_v spike[v,n,s] * weight[m,v]`, built from the
/// crossbar-cell cascade (v/4 cells per column, two spikes per double-rate
/// half). Exact integers; 12-bit overflow is a hard error.
pub fn systolic_step(
    spikes: &SpikeBlock,
    weights: &WeightBlock,
    tile: &mut PsumTile,
) -> Result<()> {
    let (m, v, n, s) = (weights.m, spikes.v, spikes.n, spikes.s);
    if spikes.n != tile.n || spikes.s != tile.s || weights.m != tile.m || weights.v != spikes.v {
        return Err(Error::Shape("block shapes do not match tile".into()));
    }
    if v % 4 != 0 || m % 4 != 0 {
        return Err(Error::Config("m and v must be multiples of 4".into()));
    }
    for ni in 0..n {
        for si in 0..s {
            for mg in 0..m / 4 {
                // cascade chain down one PE column
                let mut acc = [0i32; 4];
                for cell_idx in 0..v / 4 {
                    let v0 = cell_idx * 4;
                    for half in 0..2 {
                        let cell = CrossbarCell {
                            weights: [
                                [
                                    weights.get(mg * 4, v0 + 2 * half),
                                    weights.get(mg * 4 + 1, v0 + 2 * half),
                                    weights.get(mg * 4 + 2, v0 + 2 * half),
                                    weights.get(mg * 4 + 3, v0 + 2 * half),
                                ],
                                [
                                    weights.get(mg * 4, v0 + 2 * half + 1),
                                    weights.get(mg * 4 + 1, v0 + 2 * half + 1),
                                    weights.get(mg * 4 + 2, v0 + 2 * half + 1),
                                    weights.get(mg * 4 + 3, v0 + 2 * half + 1),
                                ],
                            ],
                        };
                        acc = cell.step(
                            [
                                spikes.get(v0 + 2 * half, ni, si),
                                spikes.get(v0 + 2 * half + 1, ni, si),
                            ],
                            acc,
                        );
                    }
                }
                for lane in 0..4 {
                    tile.add(mg * 4 + lane, ni, si, acc[lane])?;
                }
            }
        }
    }
    Ok(())
}

/// Cycle ledger of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCycles {
    /// Fast-clock accumulation cycles: `k_h * k_w * ceil(c_i/v)` blocks.
    pub accumulation: u64,
    /// Declared systolic skew constant (`sa_h + sa_w + pe_h`).
    pub fill: u64,
}

impl TileCycles {
    pub fn total(&self) -> u64 {
        self.accumulation + self.fill
    }
}

/// Drive one output tile to completion from the fast-clock streams produced
/// by the input gearboxes. Consecutive fast-word pairs form one block; the
/// streams must pair up exactly.
pub fn run_tile(
    spike_fast: &[Vec<u8>],
    weight_fast: &[Vec<i8>],
    geom: &EngineGeometry,
) -> Result<(PsumTile, TileCycles)> {
    if spike_fast.len() != weight_fast.len() {
        return Err(Error::Stream(format!(
            "spike stream has {} fast words, weight stream {}",
            spike_fast.len(),
            weight_fast.len()
        )));
    }
    let spike_slow = gearbox_out(spike_fast)?;
    let weight_slow = gearbox_out(weight_fast)?;
    let mut tile = PsumTile::zeros(geom.m, geom.n, geom.s);
    for (sw, ww) in spike_slow.into_iter().zip(weight_slow) {
        let block = SpikeBlock::from_word(geom.v, geom.n, geom.s, sw)?;
        let wblock = WeightBlock::from_word(geom.m, geom.v, ww)?;
        systolic_step(&block, &wblock, &mut tile)?;
    }
    let cycles = TileCycles {
        accumulation: spike_fast.len() as u64 / 2,
        fill: geom.pipeline_fill(),
    };
    tile.valid_at_cycle = cycles.total();
    Ok((tile, cycles))
}

/// One psum in the collection stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsumRecord {
    pub n: usize,
    pub m: usize,
    pub s: usize,
    pub value: i32,
}

/// Emit the completed tile in collection order: psums are aggregated n in a
/// group, with all m channels aligned per group and the s steps innermost,
/// i.e. lexicographic `(n, m, s)`. The stream then crosses back to the slow
/// clock domain through the 2:1 output gearbox.
pub fn collect_psums(tile: &PsumTile) -> Vec<PsumRecord> {
    let mut records = Vec::with_capacity(tile.m * tile.n * tile.s);
    for ni in 0..tile.n {
        for mi in 0..tile.m {
            for si in 0..tile.s {
                records.push(PsumRecord {
                    n: ni,
                    m: mi,
                    s: si,
                    value: tile.get(mi, ni, si),
                });
            }
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(m: usize, v: usize, n: usize, s: usize) -> EngineGeometry {
        EngineGeometry::from_par(&ParallelismConfig::new(m, v, n, s, 500.0).unwrap()).unwrap()
    }

    fn block_streams(blocks: &[(SpikeBlock, WeightBlock)]) -> (Vec<Vec<u8>>, Vec<Vec<i8>>) {
        let slow_s: Vec<Vec<u8>> = blocks.iter().map(|(s, _)| s.to_word()).collect();
        let slow_w: Vec<Vec<i8>> = blocks.iter().map(|(_, w)| w.to_word()).collect();
        (gearbox_in(&slow_s).unwrap(), gearbox_in(&slow_w).unwrap())
    }

    #[test]
    fn geometry_matches_parallelism_relations() {
        let g = geom(16, 16, 8, 4);
        assert_eq!((g.sa_h, g.sa_w, g.pe_h, g.pe_w), (4, 8, 4, 4));
        assert_eq!(g.dsp_count(), 512);
        assert_eq!(g.ops_per_cycle(), 8192);

        assert_eq!(geom(16, 16, 4, 4).dsp_count(), 256);
        assert_eq!(geom(32, 16, 8, 4).dsp_count(), 1024);
    }

    #[test]
    fn gearbox_serializes_halves_in_order() {
        let fast = gearbox_in(&[vec![1, 2, 3, 4]]).unwrap();
        assert_eq!(fast, vec![vec![1, 2], vec![3, 4]]);
        assert!(gearbox_in::<u8>(&[]).unwrap().is_empty());
    }

    #[test]
    fn gearbox_round_trip_preserves_streams() {
        let slow = vec![vec![1, 2, 3, 4], vec![5, 6, 7, 8], vec![9, 10, 11, 12]];
        let fast = gearbox_in(&slow).unwrap();
        assert_eq!(fast.len(), 6);
        let flat_fast: Vec<i32> = fast.iter().flatten().copied().collect();
        let flat_slow: Vec<i32> = slow.iter().flatten().copied().collect();
        assert_eq!(flat_fast, flat_slow);
        assert_eq!(gearbox_out(&fast).unwrap(), slow);
    }

    #[test]
    fn systolic_step_zero_spikes_leave_tile_unchanged() {
        let g = geom(8, 8, 2, 4);
        let mut tile = PsumTile::zeros(g.m, g.n, g.s);
        let spikes = SpikeBlock::zeros(g.v, g.n, g.s);
        let weights = WeightBlock::from_fn(g.m, g.v, |mi, vi| (mi as i8) - (vi as i8));
        systolic_step(&spikes, &weights, &mut tile).unwrap();
        assert!((0..g.m).all(|m| (0..g.n).all(|n| (0..g.s).all(|s| tile.get(m, n, s) == 0))));
    }

    #[test]
    fn systolic_step_one_hot_selects_weight_column() {
        let g = geom(8, 8, 2, 4);
        let (v0, n0, s0) = (5, 1, 2);
        let spikes =
            SpikeBlock::from_fn(g.v, g.n, g.s, |v, n, s| u8::from((v, n, s) == (v0, n0, s0)))
                .unwrap();
        let weights = WeightBlock::from_fn(g.m, g.v, |mi, vi| (3 * mi as i32 - 2 * vi as i32) as i8);
        let mut tile = PsumTile::zeros(g.m, g.n, g.s);
        systolic_step(&spikes, &weights, &mut tile).unwrap();
        for mi in 0..g.m {
            for ni in 0..g.n {
                for si in 0..g.s {
                    let want = if (ni, si) == (n0, s0) {
                        weights.get(mi, v0) as i32
                    } else {
                        0
                    };
                    assert_eq!(tile.get(mi, ni, si), want);
                }
            }
        }
    }

    #[test]
    fn systolic_step_matches_naive_matmul() {
        let g = geom(8, 8, 4, 4);
        let mut lcg = 42u32;
        let mut next = move || {
            lcg = lcg.wrapping_mul(1664525).wrapping_add(1013904223);
            lcg >> 16
        };
        let spikes = SpikeBlock::from_fn(g.v, g.n, g.s, |_, _, _| (next() % 2) as u8).unwrap();
        let weights = WeightBlock::from_fn(g.m, g.v, |_, _| (next() % 17) as i8 - 8);
        let mut tile = PsumTile::zeros(g.m, g.n, g.s);
        systolic_step(&spikes, &weights, &mut tile).unwrap();
        for mi in 0..g.m {
            for ni in 0..g.n {
                for si in 0..g.s {
                    let mut want = 0i32;
                    for vi in 0..g.v {
                        want += spikes.get(vi, ni, si) as i32 * weights.get(mi, vi) as i32;
                    }
                    assert_eq!(tile.get(mi, ni, si), want);
                }
            }
        }
    }

    #[test]
    fn psum_overflow_is_a_hard_error() {
        let g = geom(4, 4, 1, 1);
        let spikes = SpikeBlock::from_fn(g.v, g.n, g.s, |_, _, _| 1).unwrap();
        let weights = WeightBlock::from_fn(g.m, g.v, |_, _| 127);
        let mut tile = PsumTile::zeros(g.m, g.n, g.s);
        // 4 * 127 = 508 per step; the fifth step exceeds 2047
        for _ in 0..4 {
            systolic_step(&spikes, &weights, &mut tile).unwrap();
        }
        let r = systolic_step(&spikes, &weights, &mut tile);
        assert!(matches!(r, Err(Error::Overflow { bits: 12, .. })));
    }

    #[test]
    fn run_tile_reports_the_psum_production_interval() {
        // 3x3 kernel with c_i = v = 16: psums ready every 9 accumulation
        // cycles plus the declared fill
        let g = geom(16, 16, 8, 4);
        let blocks: Vec<_> = (0..9)
            .map(|_| {
                (
                    SpikeBlock::zeros(g.v, g.n, g.s),
                    WeightBlock::from_fn(g.m, g.v, |_, _| 0),
                )
            })
            .collect();
        let (s, w) = block_streams(&blocks);
        let (tile, cycles) = run_tile(&s, &w, &g).unwrap();
        assert_eq!(cycles.accumulation, 9);
        assert_eq!(cycles.fill, (4 + 8 + 4) as u64);
        assert_eq!(tile.valid_at_cycle, 9 + 16);
    }

    #[test]
    fn run_tile_single_block_single_cycle() {
        let g = geom(8, 8, 2, 4);
        let blocks = vec![(
            SpikeBlock::zeros(g.v, g.n, g.s),
            WeightBlock::from_fn(g.m, g.v, |_, _| 1),
        )];
        let (s, w) = block_streams(&blocks);
        let (_, cycles) = run_tile(&s, &w, &g).unwrap();
        assert_eq!(cycles.accumulation, 1);
    }

    #[test]
    fn run_tile_cycles_are_independent_of_spike_content() {
        let g = geom(8, 8, 2, 4);
        let mk = |bit: u8| {
            let blocks: Vec<_> = (0..5)
                .map(|_| {
                    (
                        SpikeBlock::from_fn(g.v, g.n, g.s, |_, _, _| bit).unwrap(),
                        WeightBlock::from_fn(g.m, g.v, |_, _| 1),
                    )
                })
                .collect();
            let (s, w) = block_streams(&blocks);
            run_tile(&s, &w, &g).unwrap().1
        };
        assert_eq!(mk(0), mk(1)); // dense engine: no sparsity shortcut
    }

    #[test]
    fn run_tile_accumulates_across_blocks() {
        let g = geom(4, 4, 1, 1);
        let blocks: Vec<_> = (0..3)
            .map(|i| {
                (
                    SpikeBlock::from_fn(g.v, g.n, g.s, |vi, _, _| u8::from(vi == i)).unwrap(),
                    WeightBlock::from_fn(g.m, g.v, |mi, vi| (mi * 4 + vi) as i8),
                )
            })
            .collect();
        let (s, w) = block_streams(&blocks);
        let (tile, _) = run_tile(&s, &w, &g).unwrap();
        for mi in 0..g.m {
            // the spike hit column vi = block index across the three blocks
            let want = (0..3).map(|vi| (mi * 4 + vi) as i32).sum::<i32>();
            assert_eq!(tile.get(mi, 0, 0), want);
        }
    }

    #[test]
    fn tile_psums_equal_the_reference_convolution() {
        // one full output tile driven block by block reproduces the naive
        // convolution psums on its window
        use crate::ir::{LayerShape, SpikeTensor, WeightTensor};
        let g = geom(8, 8, 4, 4);
        let shape = LayerShape::new(4, 6, 6, 3, 3, 1, 1, 8, 8).unwrap();
        let mut lcg = 77u32;
        let mut next = move || {
            lcg = lcg.wrapping_mul(1664525).wrapping_add(1013904223);
            lcg >> 16
        };
        let input = SpikeTensor::from_fn(4, 8, 6, 6, 1, |_, _, _, _| (next() % 2) as u8).unwrap();
        let mut w = WeightTensor::zeros(8, 8, 3, 3);
        for co in 0..8 {
            for ci in 0..8 {
                for ky in 0..3 {
                    for kx in 0..3 {
                        w.set(co, ci, ky, kx, (next() % 7) as i8 - 3);
                    }
                }
            }
        }
        let psums = crate::oracle::conv_integrate(&input, &w, &shape).unwrap();

        // tile at output row 2, columns 0..4, all 4 time steps
        let y = 2usize;
        let mut blocks = Vec::new();
        for kh in 0..3usize {
            for kw in 0..3usize {
                let block = SpikeBlock::from_fn(8, 4, 4, |vi, ni, si| {
                    let iy = (y + kh) as isize - 1;
                    let ix = (ni + kw) as isize - 1;
                    input.get_padded(si, vi, iy, ix)
                })
                .unwrap();
                let wblock = WeightBlock::from_fn(8, 8, |mi, vi| w.get(mi, vi, kh, kw));
                blocks.push((block, wblock));
            }
        }
        let (s, wd) = block_streams(&blocks);
        let (tile, cycles) = run_tile(&s, &wd, &g).unwrap();
        assert_eq!(cycles.accumulation, 9);
        for mi in 0..8 {
            for ni in 0..4 {
                for si in 0..4 {
                    assert_eq!(tile.get(mi, ni, si), psums.get(si, mi, y, ni));
                }
            }
        }
    }

    #[test]
    fn collection_order_is_frozen() {
        let g = geom(8, 8, 2, 4);
        let mut tile = PsumTile::zeros(g.m, g.n, g.s);
        let spikes = SpikeBlock::from_fn(g.v, g.n, g.s, |v, n, s| {
            u8::from((v + n + s) % 3 == 0)
        })
        .unwrap();
        let weights = WeightBlock::from_fn(g.m, g.v, |mi, vi| (mi as i8) - (vi as i8));
        systolic_step(&spikes, &weights, &mut tile).unwrap();

        let records = collect_psums(&tile);
        assert_eq!(records.len(), 8 * 2 * 4);
        // n-group major, m aligned within the group, s innermost
        let mut expect = Vec::new();
        for n in 0..2 {
            for m in 0..8 {
                for s in 0..4 {
                    expect.push((n, m, s));
                }
            }
        }
        let got: Vec<_> = records.iter().map(|r| (r.n, r.m, r.s)).collect();
        assert_eq!(got, expect);
        // content identity
        for r in &records {
            assert_eq!(r.value, tile.get(r.m, r.n, r.s));
        }
        // all-zero tile emits zero-valued records
        let zero = PsumTile::zeros(g.m, g.n, g.s);
        assert!(collect_psums(&zero).iter().all(|r| r.value == 0));
    }
}
