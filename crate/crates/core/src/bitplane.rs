//! Bit-serial treatment of non-binary spike operands.
//!
//! A B-bit spike tensor over T time steps is decomposed into binary planes
//! spanning `B*T` equivalent time steps; the engine computes plain
//! spike-weight products on the planes and the partial sums are later
//! shifted and merged back to full precision. Planes are emitted most
//! significant first within each source step (scale order 8, 4, 2, 1 for
//! 4-bit operands); see [`merge_arrival_order`] for the order the merge
//! unit's shift-add trees consume them in.

use crate::ir::{PolicyMode, PsumTensor, SpikeTensor};
use crate::{Error, Result};

/// Mapping between a B-bit tensor and its binary plane stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitPlanePlan {
    /// Source bit-width.
    pub bits: u8,
    /// Source time steps.
    pub t: usize,
    /// Equivalent binary time steps: `bits * t`.
    pub t_e: usize,
    /// Left-shift weight of each equivalent step, MSB first per source step
    /// (e.g. B=4: 3,2,1,0 repeating).
    pub plane_shifts: Vec<u8>,
}

/// Decompose a 2/4/8-bit spike tensor into its binary planes.
/// Equivalent step `t*B + p` holds bit `B-1-p` of source step `t`.
pub fn bitplane_decompose(x: &SpikeTensor) -> Result<(SpikeTensor, BitPlanePlan)> {
    let bits = x.bits();
    if ![2, 4, 8].contains(&bits) {
        return Err(Error::BitWidth(format!(
            "bit-plane decomposition expects 2/4/8-bit operands, got {bits}"
        )));
    }
    let b = bits as usize;
    let t_e = x.t * b;
    let planes = SpikeTensor::from_fn(t_e, x.c, x.h, x.w, 1, |te, c, y, x_| {
        let (t, p) = (te / b, te % b);
        let shift = bits - 1 - p as u8;
        (x.get(t, c, y, x_) >> shift) & 1
    })?;
    let plane_shifts = (0..t_e).map(|te| bits - 1 - (te % b) as u8).collect();
    Ok((
        planes,
        BitPlanePlan {
            bits,
            t: x.t,
            t_e,
            plane_shifts,
        },
    ))
}

/// Merge per-plane partial sums back into full-precision psums:
/// `out[t] = sum_p psum[t*B + p] << plane_shifts[t*B + p]`, exact.
pub fn reconstruct(psums: &PsumTensor, plan: &BitPlanePlan) -> Result<PsumTensor> {
    if psums.t != plan.t_e {
        return Err(Error::Shape(format!(
            "psum stream has {} steps, plan expects {}",
            psums.t, plan.t_e
        )));
    }
    let b = plan.bits as usize;
    let mut out = PsumTensor::zeros(plan.t, psums.c, psums.h, psums.w);
    for t in 0..plan.t {
        for c in 0..psums.c {
            for y in 0..psums.h {
                for x in 0..psums.w {
                    let mut acc: i64 = 0;
                    for p in 0..b {
                        let te = t * b + p;
                        acc += (psums.get(te, c, y, x) as i64) << plan.plane_shifts[te];
                    }
                    out.set(t, c, y, x, Error::check_merged("merged psum", acc)?);
                }
            }
        }
    }
    Ok(out)
}

/// Order in which the merge unit's shift-add trees consume one source step's
/// planes, as indices into the decomposer's MSB-first output.
///
/// The merge stage adds `P0 + (P1<<1)` within pairs and `Q0 + (Q1<<2)`
/// across pairs, i.e. later arrivals carry higher significance inside each
/// four-step round, while the 8-bit stage scales the *earlier* round by 16
/// (`R1 = R0 + (R0' << 4)`). Reversing each group of `min(B,4)` MSB-first
/// planes satisfies both.
pub fn merge_arrival_order(bits: u8) -> Vec<usize> {
    let b = bits as usize;
    let group = b.min(4);
    let mut order = Vec::with_capacity(b);
    for g in 0..b / group {
        for i in 0..group {
            order.push(g * group + (group - 1 - i));
        }
    }
    order
}

/// Outcome of the offline saturate-or-shift calibration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitWidthPolicy {
    pub mode: PolicyMode,
    /// Elements whose value exceeded the 2-bit ceiling (value > 3).
    pub exceeded_count: u64,
    pub total_count: u64,
    /// Sum of the least-significant bits a shift would drop.
    pub shifted_mass: u64,
}

/// Default fraction of out-of-range elements above which shifting is chosen
/// over saturation.
pub const DEFAULT_POLICY_CUTOFF: f64 = 0.01;

/// Pick saturate or shift from a batch of representative pre-confinement
/// value tensors. Saturate when the fraction of elements above 3 is at or
/// below `cutoff` (ties break toward saturate), shift otherwise.
pub fn calibrate_policy(samples: &[SpikeTensor], cutoff: f64) -> Result<BitWidthPolicy> {
    if samples.is_empty() {
        return Err(Error::Config("calibration needs at least one sample".into()));
    }
    let mut exceeded = 0u64;
    let mut total = 0u64;
    let mut mass = 0u64;
    for s in samples {
        for &v in s.data() {
            total += 1;
            if v > 3 {
                exceeded += 1;
            }
            mass += (v & 1) as u64;
        }
    }
    let mode = if (exceeded as f64) > cutoff * (total as f64) {
        PolicyMode::Shift
    } else {
        PolicyMode::Saturate
    };
    Ok(BitWidthPolicy {
        mode,
        exceeded_count: exceeded,
        total_count: total,
        shifted_mass: mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{LayerShape, WeightTensor};
    use crate::oracle::conv_integrate;

    #[test]
    fn four_bit_nine_decomposes_msb_first() {
        let x = SpikeTensor::from_data(1, 1, 1, 1, 4, vec![9]).unwrap();
        let (planes, plan) = bitplane_decompose(&x).unwrap();
        let got: Vec<u8> = (0..4).map(|te| planes.get(te, 0, 0, 0)).collect();
        assert_eq!(got, vec![1, 0, 0, 1]);
        assert_eq!(plan.plane_shifts, vec![3, 2, 1, 0]);
        assert_eq!(plan.t_e, 4);
    }

    #[test]
    fn zero_decomposes_to_zero_planes() {
        let x = SpikeTensor::from_data(1, 1, 1, 1, 4, vec![0]).unwrap();
        let (planes, _) = bitplane_decompose(&x).unwrap();
        assert!(planes.data().iter().all(|&p| p == 0));
    }

    #[test]
    fn two_bit_sequence_over_two_steps() {
        let x = SpikeTensor::from_data(2, 1, 1, 1, 2, vec![3, 1]).unwrap();
        let (planes, plan) = bitplane_decompose(&x).unwrap();
        let got: Vec<u8> = (0..4).map(|te| planes.get(te, 0, 0, 0)).collect();
        assert_eq!(got, vec![1, 1, 0, 1]);
        assert_eq!(plan.plane_shifts, vec![1, 0, 1, 0]);
        // sum(bit << shift) recovers the source values
        let mut psums = PsumTensor::zeros(4, 1, 1, 1);
        for te in 0..4 {
            psums.set(te, 0, 0, 0, planes.get(te, 0, 0, 0) as i32);
        }
        let rec = reconstruct(&psums, &plan).unwrap();
        assert_eq!(rec.get(0, 0, 0, 0), 3);
        assert_eq!(rec.get(1, 0, 0, 0), 1);
    }

    #[test]
    fn unit_weight_reconstruction_is_the_identity() {
        // every 4-bit and 8-bit value survives decompose + reconstruct
        for bits in [4u8, 8] {
            let max = if bits == 4 { 15 } else { 255 };
            for v in 0..=max {
                let x = SpikeTensor::from_data(1, 1, 1, 1, bits, vec![v]).unwrap();
                let (planes, plan) = bitplane_decompose(&x).unwrap();
                let mut psums = PsumTensor::zeros(plan.t_e, 1, 1, 1);
                for te in 0..plan.t_e {
                    psums.set(te, 0, 0, 0, planes.get(te, 0, 0, 0) as i32);
                }
                let rec = reconstruct(&psums, &plan).unwrap();
                assert_eq!(rec.get(0, 0, 0, 0), v as i32, "bits={bits} v={v}");
            }
        }
    }

    #[test]
    fn conv_level_round_trip_matches_full_precision() {
        // the central claim: decompose -> per-plane conv -> shift-merge is
        // exactly the full-precision convolution
        let shape = LayerShape::new(2, 4, 4, 3, 3, 1, 1, 2, 2).unwrap();
        let mut lcg = 7u32;
        let mut next = move || {
            lcg = lcg.wrapping_mul(1664525).wrapping_add(1013904223);
            lcg >> 16
        };
        for bits in [2u8, 4, 8] {
            let maxv = SpikeTensor::max_value(bits) as u32;
            let x = SpikeTensor::from_fn(2, 2, 4, 4, bits, |_, _, _, _| {
                (next() % (maxv + 1)) as u8
            })
            .unwrap();
            let w = WeightTensor::from_data(
                2,
                2,
                3,
                3,
                (0..36).map(|_| (next() % 7) as i8 - 3).collect(),
            )
            .unwrap();
            let full = conv_integrate(&x, &w, &shape).unwrap();
            let (planes, plan) = bitplane_decompose(&x).unwrap();
            let per_plane = conv_integrate(&planes, &w, &shape).unwrap();
            let merged = reconstruct(&per_plane, &plan).unwrap();
            assert_eq!(merged, full, "bits={bits}");
        }
    }

    #[test]
    fn shift_mode_error_is_bounded_by_weight_mass() {
        // halving inputs and left-shifting psums once differs from the exact
        // result by at most sum(|w|) per output neuron (the dropped LSBs)
        let shape = LayerShape::new(1, 4, 4, 3, 3, 1, 1, 1, 1).unwrap();
        let mut lcg = 99u32;
        let mut next = move || {
            lcg = lcg.wrapping_mul(1664525).wrapping_add(1013904223);
            lcg >> 16
        };
        let x = SpikeTensor::from_fn(1, 1, 4, 4, 4, |_, _, _, _| (next() % 5) as u8).unwrap();
        let w = WeightTensor::from_data(1, 1, 3, 3, (0..9).map(|_| (next() % 9) as i8 - 4).collect())
            .unwrap();
        let exact = conv_integrate(&x, &w, &shape).unwrap();
        let halved = SpikeTensor::from_fn(1, 1, 4, 4, 2, |t, c, y, xx| x.get(t, c, y, xx) >> 1)
            .unwrap();
        let approx = conv_integrate(&halved, &w, &shape).unwrap();
        let bound = w.abs_sum(0) as i64;
        for i in 0..exact.data.len() {
            let err = (exact.data[i] as i64) - ((approx.data[i] as i64) << 1);
            assert!(err.abs() <= bound, "err {err} exceeds bound {bound}");
        }
    }

    #[test]
    fn calibration_prefers_saturate_when_values_are_small() {
        let s = SpikeTensor::from_data(1, 1, 1, 4, 4, vec![0, 1, 2, 3]).unwrap();
        let p = calibrate_policy(&[s], DEFAULT_POLICY_CUTOFF).unwrap();
        assert_eq!(p.mode, PolicyMode::Saturate);
        assert_eq!(p.exceeded_count, 0);
    }

    #[test]
    fn calibration_shifts_on_heavy_tails() {
        let s = SpikeTensor::from_data(1, 1, 1, 4, 4, vec![4, 4, 1, 0]).unwrap();
        let p = calibrate_policy(&[s], DEFAULT_POLICY_CUTOFF).unwrap();
        assert_eq!(p.mode, PolicyMode::Shift);
        assert_eq!(p.exceeded_count, 2);
    }

    #[test]
    fn calibration_tie_breaks_toward_saturate() {
        // exactly at the cutoff: 1 of 100 elements above 3 with cutoff 0.01
        let mut data = vec![0u8; 100];
        data[0] = 4;
        let s = SpikeTensor::from_data(1, 1, 10, 10, 4, data).unwrap();
        let p = calibrate_policy(&[s], 0.01).unwrap();
        assert_eq!(p.mode, PolicyMode::Saturate);
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(calibrate_policy(&[], DEFAULT_POLICY_CUTOFF).is_err());
    }

    #[test]
    fn arrival_order_groups() {
        assert_eq!(merge_arrival_order(1), vec![0]);
        assert_eq!(merge_arrival_order(2), vec![1, 0]);
        assert_eq!(merge_arrival_order(4), vec![3, 2, 1, 0]);
        assert_eq!(merge_arrival_order(8), vec![3, 2, 1, 0, 7, 6, 5, 4]);
    }
}
