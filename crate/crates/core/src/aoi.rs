//! Age-of-Information bookkeeping: Bernoulli arrivals into a keep-latest
//! buffer, the system time of the buffered packet, and the per-slot age
//! recursion.
//!
//! Slot timeline (slot `t`): arrivals are sampled first, the scheduler then
//! sees `(A_i(t), z_i(t), k_i(t))`, and [`AoiState::step`] produces
//! `A_i(t+1)` from the delivery outcome. The system time is advanced inside
//! `step`; an arrival in the next slot resets it to zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ComplexVec, RngStream};

/// Relative slack applied when re-checking a realized SNR against the threshold.
pub const DELIVERY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    /// Age of information `A_i`, in slots.
    pub age: u64,
    /// Age of the buffered packet `z_i`, in slots.
    pub system_time: u64,
    /// Whether an undelivered packet is buffered (`k_i`).
    pub buffered: bool,
    /// Per-slot arrival probability `λ_i`.
    pub arrival_prob: f64,
}

impl StreamState {
    /// Weight of this stream in the per-slot objective: the AoI reduction a
    /// delivery would achieve, `(A_i - z_i) k_i`.
    pub fn weight(&self) -> f64 {
        if self.buffered {
            (self.age - self.system_time) as f64
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AoiState {
    pub streams: Vec<StreamState>,
}

/// What happened to each stream (and each EU) during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub scheduled: Vec<bool>,
    pub delivered: Vec<bool>,
    /// Realized SNR per stream (linear).
    pub snr: Vec<f64>,
    /// Harvested power per EU, watts.
    pub harvested: Vec<f64>,
}

impl SlotOutcome {
    /// Evaluates delivery: a packet goes through when the stream is
    /// scheduled, has something buffered, and its realized SNR clears the
    /// threshold up to [`DELIVERY_SLACK`].
    pub fn evaluate(
        state: &AoiState,
        scheduled: Vec<bool>,
        snr: Vec<f64>,
        gamma_th: f64,
        harvested: Vec<f64>,
    ) -> Result<Self> {
        let n = state.streams.len();
        if scheduled.len() != n || snr.len() != n {
            return Err(Error::DimensionMismatch {
                op: "SlotOutcome::evaluate",
                left: (n, 1),
                right: (scheduled.len(), snr.len()),
            });
        }
        let delivered = state
            .streams
            .iter()
            .zip(&scheduled)
            .zip(&snr)
            .map(|((s, &a), &g)| a && s.buffered && g >= gamma_th * (1.0 - DELIVERY_SLACK))
            .collect();
        Ok(Self { scheduled, delivered, snr, harvested })
    }
}

impl AoiState {
    /// Fresh state with `A_i(0) = 1`, `z_i(0) = 0` and an empty buffer.
    pub fn new(arrival_probs: &[f64]) -> Result<Self> {
        if let Some(p) = arrival_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("arrival probability {p} outside [0, 1]")));
        }
        Ok(Self {
            streams: arrival_probs
                .iter()
                .map(|&p| StreamState { age: 1, system_time: 0, buffered: false, arrival_prob: p })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.streams.iter().map(StreamState::weight).collect()
    }

    pub fn buffered(&self) -> Vec<bool> {
        self.streams.iter().map(|s| s.buffered).collect()
    }

    pub fn sum_age(&self) -> u64 {
        self.streams.iter().map(|s| s.age).sum()
    }

    /// Draws this slot's arrivals. An arrival replaces whatever is buffered
    /// and resets the system time to zero.
    pub fn sample_arrivals(&mut self, rng: &mut RngStream) -> Vec<bool> {
        self.streams
            .iter_mut()
            .map(|s| {
                let arrived = rng.bernoulli(s.arrival_prob);
                if arrived {
                    s.buffered = true;
                    s.system_time = 0;
                }
                arrived
            })
            .collect()
    }

    /// Applies a slot outcome, returning the next state.
    ///
    /// The age follows the four-term recursion
    /// `A' = δkz + (1-δ)(1-k)A + (1-δ)kA + δ(1-k)A + 1` where `δ` is the
    /// successful-delivery indicator, so an unsuccessful transmission ages
    /// like an unscheduled one.
    pub fn step(&self, outcome: &SlotOutcome) -> Result<AoiState> {
        let n = self.streams.len();
        if outcome.scheduled.len() != n || outcome.delivered.len() != n {
            return Err(Error::DimensionMismatch {
                op: "AoiState::step",
                left: (n, 1),
                right: (outcome.scheduled.len(), outcome.delivered.len()),
            });
        }
        let mut next = self.clone();
        for (i, s) in next.streams.iter_mut().enumerate() {
            let delivered = outcome.delivered[i];
            if delivered && !outcome.scheduled[i] {
                return Err(Error::InconsistentOutcome {
                    stream: i,
                    reason: "delivered without being scheduled".into(),
                });
            }
            if delivered && !s.buffered {
                return Err(Error::InconsistentOutcome {
                    stream: i,
                    reason: "delivered with an empty buffer".into(),
                });
            }
            let d = delivered as u64;
            let k = s.buffered as u64;
            let (a, z) = (s.age, s.system_time);
            s.age = d * k * z + (1 - d) * (1 - k) * a + (1 - d) * k * a + d * (1 - k) * a + 1;
            s.system_time = z + 1;
            if delivered {
                s.buffered = false;
            }
        }
        Ok(next)
    }
}

/// `|hᴴ w|² / σ²`.
pub fn realized_snr(h: &ComplexVec, w: &ComplexVec, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::InvalidArgument(format!("noise power must be positive, got {noise_power}")));
    }
    Ok(h.hermitian_product(w)?.norm_sqr() / noise_power)
}

/// `|gᴴ v|²`, in watts.
pub fn harvested_energy(g: &ComplexVec, v: &ComplexVec) -> Result<f64> {
    Ok(g.hermitian_product(v)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_cn_vec, Complex64};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn state(age: u64, z: u64, buffered: bool) -> AoiState {
        AoiState {
            streams: vec![StreamState { age, system_time: z, buffered, arrival_prob: 0.5 }],
        }
    }

    fn outcome(scheduled: bool, delivered: bool) -> SlotOutcome {
        SlotOutcome {
            scheduled: vec![scheduled],
            delivered: vec![delivered],
            snr: vec![0.0],
            harvested: vec![],
        }
    }

    fn real(v: &[f64]) -> ComplexVec {
        ComplexVec::from(v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn delivery_resets_age_to_system_time_plus_one() {
        let next = state(10, 2, true).step(&outcome(true, true)).unwrap();
        assert_eq!(next.streams[0].age, 3);
        assert!(!next.streams[0].buffered);
        assert_eq!(next.streams[0].system_time, 3);
    }

    #[test]
    fn no_delivery_ages_by_one() {
        for k in [false, true] {
            let next = state(10, 4, k).step(&outcome(false, false)).unwrap();
            assert_eq!(next.streams[0].age, 11);
            assert_eq!(next.streams[0].buffered, k);
        }
        // scheduled but the SNR fell short
        let next = state(10, 4, true).step(&outcome(true, false)).unwrap();
        assert_eq!(next.streams[0].age, 11);
        assert!(next.streams[0].buffered);
    }

    #[test]
    fn inconsistent_outcomes_are_rejected() {
        assert!(matches!(
            state(3, 1, true).step(&outcome(false, true)),
            Err(Error::InconsistentOutcome { .. })
        ));
        assert!(matches!(
            state(3, 1, false).step(&outcome(true, true)),
            Err(Error::InconsistentOutcome { .. })
        ));
    }

    #[test]
    fn no_arrivals_means_linear_growth() {
        let mut s = AoiState::new(&[0.0, 0.0]).unwrap();
        let mut rng = RngStream::new(1, 1);
        for t in 1..=100u64 {
            let arrivals = s.sample_arrivals(&mut rng);
            assert_eq!(arrivals, vec![false, false]);
            let out = SlotOutcome::evaluate(&s, vec![true, true], vec![1e9, 1e9], 1.0, vec![]).unwrap();
            assert_eq!(out.delivered, vec![false, false]);
            s = s.step(&out).unwrap();
            assert!(s.streams.iter().all(|st| st.age == 1 + t && st.system_time == t));
        }
    }

    #[test]
    fn certain_arrivals_reset_system_time_every_slot() {
        let mut s = AoiState::new(&[1.0]).unwrap();
        let mut rng = RngStream::new(1, 2);
        for _ in 0..20 {
            assert_eq!(s.sample_arrivals(&mut rng), vec![true]);
            assert_eq!(s.streams[0].system_time, 0);
            assert!(s.streams[0].buffered);
            s = s.step(&outcome(false, false)).unwrap();
        }
    }

    #[test]
    fn arrival_rate_matches_probability() {
        let mut s = AoiState::new(&[0.6]).unwrap();
        let mut rng = RngStream::new(42, 9);
        let n = 100_000;
        let hits = (0..n).filter(|_| s.sample_arrivals(&mut rng)[0]).count();
        let rate = hits as f64 / n as f64;
        assert!((rate - 0.6).abs() <= 0.01, "rate {rate}");
    }

    #[test]
    fn rejects_bad_probabilities() {
        assert!(AoiState::new(&[1.2]).is_err());
        assert!(AoiState::new(&[-0.1]).is_err());
    }

    #[test]
    fn snr_and_energy_examples() {
        assert_eq!(realized_snr(&real(&[1.0, 0.0]), &real(&[2.0, 0.0]), 1.0).unwrap(), 4.0);
        assert_eq!(realized_snr(&real(&[1.0, 0.0]), &real(&[0.0, 3.0]), 1.0).unwrap(), 0.0);
        assert!(realized_snr(&real(&[1.0]), &real(&[1.0]), 0.0).is_err());
        assert_abs_diff_eq!(harvested_energy(&real(&[1.0, 0.0]), &real(&[0.1, 0.0])).unwrap(), 0.01, epsilon = 1e-15);
        assert_eq!(harvested_energy(&real(&[1.0, 2.0]), &ComplexVec::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn snr_and_energy_match_scalar_loop() {
        let mut rng = RngStream::new(8, 8);
        let h = sample_cn_vec(4, &mut rng);
        let w = sample_cn_vec(4, &mut rng);
        let (mut re, mut im) = (0.0, 0.0);
        for k in 0..4 {
            re += h[k].re * w[k].re + h[k].im * w[k].im;
            im += h[k].re * w[k].im - h[k].im * w[k].re;
        }
        let want = (re * re + im * im) / 0.3;
        assert_abs_diff_eq!(realized_snr(&h, &w, 0.3).unwrap(), want, epsilon = 1e-12 * want.max(1.0));
        assert_abs_diff_eq!(harvested_energy(&h, &w).unwrap(), want * 0.3, epsilon = 1e-12);
    }

    /// Definitional age: slots since the generation of the freshest delivered
    /// packet, replayed from an event log. The initial age of one slot is a
    /// virtual packet generated at time -1.
    fn oracle_ages(arrivals: &[Vec<bool>], deliveries: &[Vec<bool>]) -> Vec<Vec<i64>> {
        let n = arrivals[0].len();
        let mut newest_arrival = vec![None::<i64>; n];
        let mut last_delivered_gen = vec![-1i64; n];
        let mut out = Vec::new();
        for t in 0..arrivals.len() {
            for i in 0..n {
                if arrivals[t][i] {
                    newest_arrival[i] = Some(t as i64);
                }
                if deliveries[t][i] {
                    last_delivered_gen[i] = newest_arrival[i].expect("delivery needs an arrival");
                }
            }
            out.push((0..n).map(|i| t as i64 + 1 - last_delivered_gen[i]).collect());
        }
        out
    }

    #[test]
    fn scripted_trajectory_matches_definitional_oracle() {
        // two streams, six slots, arrivals and delivery attempts scripted
        let arrivals = [[true, false], [false, true], [true, false], [false, false], [false, true], [true, true]];
        let attempts = [[false, false], [true, true], [true, false], [true, true], [false, true], [true, false]];
        let mut s = AoiState::new(&[0.0, 0.0]).unwrap();
        let mut arrival_log = Vec::new();
        let mut delivery_log = Vec::new();
        let mut ages = Vec::new();
        for t in 0..6 {
            for i in 0..2 {
                if arrivals[t][i] {
                    s.streams[i].buffered = true;
                    s.streams[i].system_time = 0;
                }
            }
            let snr = vec![10.0, 10.0];
            let out = SlotOutcome::evaluate(&s, attempts[t].to_vec(), snr, 1.0, vec![]).unwrap();
            arrival_log.push(arrivals[t].to_vec());
            delivery_log.push(out.delivered.clone());
            s = s.step(&out).unwrap();
            ages.push(s.streams.iter().map(|st| st.age as i64).collect::<Vec<_>>());
            for st in &s.streams {
                assert!(!st.buffered || st.age > st.system_time);
            }
        }
        assert_eq!(ages, oracle_ages(&arrival_log, &delivery_log));
        assert_eq!(ages[5], vec![1, 2]);
    }

    proptest! {
        #[test]
        fn recursion_matches_reduced_form(age in 1u64..1000, z in 0u64..1000, d in any::<bool>(), k in any::<bool>()) {
            prop_assume!(!(d && !k));
            let z = z.min(age - 1);
            let next = state(age, z, k).step(&outcome(d, d)).unwrap();
            let (d, k) = (d as u64, k as u64);
            prop_assert_eq!(next.streams[0].age, d * k * z + (1 - d * k) * age + 1);
            if d * k == 1 {
                // AoI reduction equals the objective weight A - z
                prop_assert_eq!(age + 1 - next.streams[0].age, age - z);
            }
        }

        #[test]
        fn random_trajectories_match_oracle(seed in any::<u64>(), p in 0.0f64..1.0, q in 0.0f64..1.0) {
            let mut s = AoiState::new(&[p, p]).unwrap();
            let mut rng = RngStream::new(seed, 0);
            let (mut arr, mut del, mut ages) = (Vec::new(), Vec::new(), Vec::new());
            for _ in 0..40 {
                arr.push(s.sample_arrivals(&mut rng));
                let sched: Vec<bool> = (0..2).map(|_| rng.bernoulli(q)).collect();
                let snr: Vec<f64> = (0..2).map(|_| rng.uniform() * 2.0).collect();
                let out = SlotOutcome::evaluate(&s, sched, snr, 1.0, vec![]).unwrap();
                del.push(out.delivered.clone());
                s = s.step(&out).unwrap();
                ages.push(s.streams.iter().map(|st| st.age as i64).collect::<Vec<_>>());
            }
            prop_assert_eq!(ages, oracle_ages(&arr, &del));
        }
    }
}
