//! Post-engine pipeline: the flexible partial-sum merge unit, the bias/shift
//! stage, the two-phase neurodynamics unit, pooling, the residual connection
//! unit and spike accumulation.
//!
//! The merge unit reconstructs full-precision psums from the bit-plane
//! stream with shift-add trees, `S = 4` values per round:
//!
//! ```text
//! 2-bit:  Q0 = P0 + (P1 << 1), Q1 = P2 + (P3 << 1); emit after 2 rounds
//! 4-bit:  R0 = Q0 + (Q1 << 2);                      emit after 4 rounds
//! 8-bit:  R1 = R0 + (R0' << 4), R0' = previous round; replicate S times
//! ```
//!
//! `P1`/`P3` carry the higher bit of each pair, so planes arrive in the
//! shift-add order given by [`crate::bitplane::merge_arrival_order`].
//! Psums enter at 12 bits and leave the merge/bias stage extended to 18.

use crate::ir::{NeuronParams, NeuronType, PolicyMode, PoolMode, ResidualConfig, SpikeTensor};
use crate::oracle;
use crate::{Error, Result};

/// The four spike / non-spike cases of the merge unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeCase {
    Bypass1Bit,
    Merge2Bit,
    Merge4Bit,
    Direct8Bit,
}

impl MergeCase {
    pub fn from_bits(bits: u8) -> Result<Self> {
        Ok(match bits {
            1 => MergeCase::Bypass1Bit,
            2 => MergeCase::Merge2Bit,
            4 => MergeCase::Merge4Bit,
            8 => MergeCase::Direct8Bit,
            _ => return Err(Error::BitWidth(format!("no merge case for {bits}-bit spikes"))),
        })
    }
}

/// First shift-add stage: pairs partial sums, second operand scaled by 2.
pub fn q_stage(p0: i32, p1: i32) -> Result<i32> {
    Error::check_merged("psum merge Q", p0 as i64 + ((p1 as i64) << 1))
}

/// Second stage: pairs Q values, second operand scaled by 4.
pub fn r_stage(q0: i32, q1: i32) -> Result<i32> {
    Error::check_merged("psum merge R0", q0 as i64 + ((q1 as i64) << 2))
}

/// Direct-coding stage: combines two R0 rounds, the earlier round carrying
/// the high nibble.
pub fn r1_stage(r0: i32, r0_prev: i32) -> Result<i32> {
    Error::check_merged("psum merge R1", r0 as i64 + ((r0_prev as i64) << 4))
}

/// Streaming merge unit for one (channel, pixel) psum lane.
///
/// Rounds of `s` engine psums go in; emissions of `s` merged per-time-step
/// values come out once enough rounds accumulated. `flush` drains a partial
/// emission at the end of a stream (tail time steps).
#[derive(Debug, Clone)]
pub struct PsumMergeUnit {
    case: MergeCase,
    s: usize,
    pending: Vec<i32>,
    r0_prev: Option<i32>,
}

impl PsumMergeUnit {
    pub fn new(case: MergeCase, s: usize) -> Result<Self> {
        let ok = match case {
            MergeCase::Bypass1Bit => s > 0,
            MergeCase::Merge2Bit => s > 0 && s % 2 == 0,
            MergeCase::Merge4Bit | MergeCase::Direct8Bit => s > 0 && s % 4 == 0,
        };
        if !ok {
            return Err(Error::Config(format!(
                "time parallelism {s} incompatible with {case:?}"
            )));
        }
        Ok(PsumMergeUnit {
            case,
            s,
            pending: Vec::new(),
            r0_prev: None,
        })
    }

    /// Feed one round of `s` psums. Returns a full emission of `s` merged
    /// values when one completes.
    pub fn push_round(&mut self, psums: &[i32]) -> Result<Option<Vec<i32>>> {
        if psums.len() != self.s {
            return Err(Error::Stream(format!(
                "merge round carries {} psums, expected {}",
                psums.len(),
                self.s
            )));
        }
        match self.case {
            MergeCase::Bypass1Bit => {
                self.pending.extend_from_slice(psums);
            }
            MergeCase::Merge2Bit => {
                for pair in psums.chunks(2) {
                    self.pending.push(q_stage(pair[0], pair[1])?);
                }
            }
            MergeCase::Merge4Bit => {
                for quad in psums.chunks(4) {
                    let q0 = q_stage(quad[0], quad[1])?;
                    let q1 = q_stage(quad[2], quad[3])?;
                    self.pending.push(r_stage(q0, q1)?);
                }
            }
            MergeCase::Direct8Bit => {
                for quad in psums.chunks(4) {
                    let q0 = q_stage(quad[0], quad[1])?;
                    let q1 = q_stage(quad[2], quad[3])?;
                    let r0 = r_stage(q0, q1)?;
                    match self.r0_prev.take() {
                        None => self.r0_prev = Some(r0),
                        Some(prev) => {
                            let r1 = r1_stage(r0, prev)?;
                            // static image: the merged current repeats
                            self.pending.extend(std::iter::repeat(r1).take(self.s));
                        }
                    }
                }
            }
        }
        if self.pending.len() >= self.s {
            let out = self.pending.drain(..self.s).collect();
            Ok(Some(out))
        } else {
            Ok(None)
        }
    }

    /// Drain a trailing partial emission (fewer than `s` values).
    pub fn flush(&mut self) -> Option<Vec<i32>> {
        if self.pending.is_empty() {
            None
        } else {
            Some(std::mem::take(&mut self.pending))
        }
    }
}

/// Merge an entire psum lane at once; convenience over the streaming unit.
pub fn merge_stream(case: MergeCase, s: usize, rounds: &[Vec<i32>]) -> Result<Vec<i32>> {
    let mut unit = PsumMergeUnit::new(case, s)?;
    let mut out = Vec::new();
    for round in rounds {
        if let Some(mut emission) = unit.push_round(round)? {
            out.append(&mut emission);
        }
    }
    if let Some(mut tail) = unit.flush() {
        out.append(&mut tail);
    }
    Ok(out)
}

/// Worst-case |output| of the merge stage for inputs bounded by
/// `max_abs_input`. Used by the static 18-bit bound check.
pub fn merge_output_bound(case: MergeCase, max_abs_input: i64) -> i64 {
    let q = max_abs_input * 3; // p0 + 2*p1
    let r0 = q * 5; // q0 + 4*q1
    match case {
        MergeCase::Bypass1Bit => max_abs_input,
        MergeCase::Merge2Bit => q,
        MergeCase::Merge4Bit => r0,
        MergeCase::Direct8Bit => r0 * 17, // r0 + 16*r0'
    }
}

/// Bias and optional compensation shift: `(current << post_shift_left) + bias`,
/// exact, 18-bit checked. The shift is applied before the bias so the bias
/// stays calibrated in the restored scale.
pub fn bias_shift(current: i32, bias: i32, post_shift_left: u8) -> Result<i32> {
    Error::check_merged(
        "bias/shift stage",
        ((current as i64) << post_shift_left) + bias as i64,
    )
}

/// Two-phase neurodynamics unit.
///
/// Phase 1 precomputes spike candidates for every reachable predecessor
/// state from window/prefix sums of the batch currents (no serial
/// dependency); phase 2 selects through a multiplexer chain. The observable
/// contract is exact serial semantics: identical spikes and carried
/// potential to [`oracle::neuron_serial`] on the same batch.
pub fn two_phase_neurodynamics(
    currents: &[i32],
    params: &NeuronParams,
    v_pre: i32,
) -> Result<(Vec<u8>, i32)> {
    let len = currents.len();
    if len == 0 {
        return Ok((Vec::new(), v_pre));
    }
    let theta = params.threshold as i64;
    match params.neuron_type {
        NeuronType::If => {
            let mut prefix = vec![0i64; len + 1];
            for (i, &c) in currents.iter().enumerate() {
                prefix[i + 1] = prefix[i] + c as i64;
            }
            // candidate membrane value at step t given the last hard reset
            // happened right after step r (r = 0: carry-in state)
            let v_at = |r: usize, t: usize| -> i64 {
                let base = if r == 0 { v_pre as i64 } else { 0 };
                base + prefix[t] - prefix[r]
            };
            // phase 1: candidate compares, no serial dependency
            let mut cand = vec![vec![false; len + 1]; len + 1];
            for r in 0..len {
                for t in (r + 1)..=len {
                    cand[r][t] = v_at(r, t) >= theta;
                }
            }
            // phase 2: mux chain
            let mut spikes = Vec::with_capacity(len);
            let mut reset_at = 0usize;
            for t in 1..=len {
                Error::check_merged("membrane potential", v_at(reset_at, t))?;
                if cand[reset_at][t] {
                    spikes.push(1);
                    reset_at = t;
                } else {
                    spikes.push(0);
                }
            }
            let v_next = if reset_at == len { 0 } else { v_at(reset_at, len) };
            Ok((spikes, v_next as i32))
        }
        NeuronType::Lif => {
            // the leak shift floors, so candidate trajectories are computed
            // independently per reset point instead of from window sums
            let trajectory = |start: i64, from: usize| -> Vec<i64> {
                let mut v = start;
                currents[from..]
                    .iter()
                    .map(|&c| {
                        v -= v >> params.leak_shift;
                        v += c as i64;
                        v
                    })
                    .collect()
            };
            // phase 1: one pipelined trajectory per possible reset point
            let mut traj: Vec<Vec<i64>> = Vec::with_capacity(len + 1);
            traj.push(trajectory(v_pre as i64, 0));
            for r in 1..=len {
                traj.push(trajectory(0, r));
            }
            // phase 2
            let mut spikes = Vec::with_capacity(len);
            let mut reset_at = 0usize;
            let mut v_next = 0i64;
            for t in 1..=len {
                let v = traj[reset_at][t - 1 - reset_at];
                Error::check_merged("membrane potential", v)?;
                if v >= theta {
                    spikes.push(1);
                    reset_at = t;
                    v_next = 0;
                } else {
                    spikes.push(0);
                    v_next = v;
                }
            }
            Ok((spikes, v_next as i32))
        }
        NeuronType::Rmp => {
            // soft reset: v at step t is v_pre + prefix(t) - k*theta where k
            // counts earlier firings, so candidates are indexed by k
            let mut prefix = vec![0i64; len + 1];
            for (i, &c) in currents.iter().enumerate() {
                prefix[i + 1] = prefix[i] + c as i64;
            }
            // phase 1
            let mut cand = vec![vec![false; len]; len + 1];
            for t in 1..=len {
                for k in 0..len {
                    cand[t][k] = v_pre as i64 + prefix[t] - (k as i64) * theta >= theta;
                }
            }
            // phase 2: spike-count chain
            let mut spikes = Vec::with_capacity(len);
            let mut k = 0usize;
            for t in 1..=len {
                Error::check_merged(
                    "membrane potential",
                    v_pre as i64 + prefix[t] - (k as i64) * theta,
                )?;
                if cand[t][k] {
                    spikes.push(1);
                    k += 1;
                } else {
                    spikes.push(0);
                }
            }
            let v_next = v_pre as i64 + prefix[len] - (k as i64) * theta;
            Ok((spikes, v_next as i32))
        }
    }
}

/// Pooling unit: bypass, 2x2 max, or 2x2 average with the layer's
/// saturate-or-shift policy applied to the window sums.
pub fn pool_unit(spikes: &SpikeTensor, mode: PoolMode, policy: PolicyMode) -> Result<SpikeTensor> {
    match mode {
        PoolMode::None => Ok(spikes.clone()),
        PoolMode::Max2x2 => oracle::max_pool_2x2(spikes),
        PoolMode::Avg2x2 => oracle::apply_width_policy(&oracle::avg_pool_2x2(spikes)?, policy),
    }
}

/// Residual connection unit; the backbone stream is always binary here.
pub fn residual_unit(
    backbone: &SpikeTensor,
    shortcut: &SpikeTensor,
    cfg: &ResidualConfig,
) -> Result<SpikeTensor> {
    if backbone.bits() != 1 {
        return Err(Error::BitWidth(
            "residual backbone must carry binary spikes".into(),
        ));
    }
    oracle::sew_residual(backbone, shortcut, cfg)
}

/// Spike accumulation: per-channel spike counts over the whole stream.
/// Multi-bit spikes count their value (a sum of spikes is that many spikes).
pub fn spike_accumulate(spikes: &SpikeTensor) -> Vec<u32> {
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
