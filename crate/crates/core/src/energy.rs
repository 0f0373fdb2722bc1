//! Round latency and UAV energy accounting.
//!
//! A round is a global-model broadcast at full bandwidth, then parallel local
//! training on the selected UEs, then parallel OFDMA uploads. The round ends
//! when the slowest selected UE finishes its upload. The UAV hovers for the
//! whole round, so flight energy is charged on total round time, while
//! dissemination energy is charged on broadcast airtime only.

use serde::{Deserialize, Serialize};

use crate::channel::{self, LinkParams};
use crate::error::{Error, Result};
use crate::fl::UeId;

pub const BITS_PER_PIXEL: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub propulsion_w: f64,
    pub uav_tx_w: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            propulsion_w: 100.0,
            uav_tx_w: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub cpu_hz: f64,
    pub cycles_per_bit: f64,
    pub shard_bits: f64,
}

/// What the timing model needs to know about one selected UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeLink {
    pub id: UeId,
    pub horizontal_dist_m: f64,
    pub compute: ComputeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientTiming {
    pub ue: UeId,
    pub t_compute_s: f64,
    pub t_up_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTiming {
    pub t_down_s: f64,
    pub t_compute_max_s: f64,
    pub t_up_max_s: f64,
    pub t_round_s: f64,
    pub per_client: Vec<ClientTiming>,
}

impl RoundTiming {
    /// Checks `t_round = t_down + max(t_compute + t_up)` and non-negativity.
    pub fn is_consistent(&self) -> bool {
        let slowest = self
            .per_client
            .iter()
            .map(|c| c.t_compute_s + c.t_up_s)
            .fold(0.0, f64::max);
        let all_nonneg = [self.t_down_s, self.t_compute_max_s, self.t_up_max_s, self.t_round_s]
            .iter()
            .chain(self.per_client.iter().flat_map(|c| [&c.t_compute_s, &c.t_up_s]))
            .all(|&t| t >= 0.0);
        all_nonneg && self.t_round_s == self.t_down_s + slowest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UavEnergy {
    pub flight_j: f64,
    pub dissemination_j: f64,
    pub total_j: f64,
}

pub fn model_payload_bits(param_count: usize, bits_per_param: u32) -> Result<f64> {
    if param_count == 0 || bits_per_param == 0 {
        return Err(Error::invalid("param count and bits per param must be >= 1"));
    }
    Ok(param_count as f64 * bits_per_param as f64)
}

/// Raw local dataset size: 8 bits per feature value.
pub fn shard_bits(num_samples: usize, feature_dim: usize) -> f64 {
    (num_samples as u64 * feature_dim as u64 * BITS_PER_PIXEL) as f64
}

/// `epochs * cycles_per_bit * shard_bits / cpu_hz`.
pub fn compute_time(spec: &ComputeSpec, epochs: u32) -> Result<f64> {
    if epochs == 0 {
        return Err(Error::invalid("epochs must be >= 1"));
    }
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(spec.cpu_hz) || !positive(spec.cycles_per_bit) || spec.shard_bits.is_nan() || spec.shard_bits < 0.0 {
        return Err(Error::invalid(format!("invalid compute spec {spec:?}")));
    }
    Ok(epochs as f64 * spec.cycles_per_bit * spec.shard_bits / spec.cpu_hz)
}

/// Timing of one round for the given selected UEs.
///
/// The broadcast must reach every selected UE, so its duration is set by the
/// lowest downlink rate among them (the farthest UE).
pub fn round_timing(selected: &[UeLink], link: &LinkParams, payload_bits: f64, epochs: u32) -> Result<RoundTiming> {
    if selected.is_empty() {
        return Err(Error::invalid("round timing needs at least one selected UE"));
    }
    let k = selected.len();
    let mut t_down_s = 0.0f64;
    let mut per_client = Vec::with_capacity(k);
    for ue in selected {
        let down = channel::downlink_rate(link, ue.horizontal_dist_m)?;
        t_down_s = t_down_s.max(channel::transmission_time(payload_bits, down)?);
        let up = channel::uplink_rate(link, ue.horizontal_dist_m, k)?;
        per_client.push(ClientTiming {
            ue: ue.id,
            t_compute_s: compute_time(&ue.compute, epochs)?,
            t_up_s: channel::transmission_time(payload_bits, up)?,
        });
    }
    let t_compute_max_s = per_client.iter().map(|c| c.t_compute_s).fold(0.0, f64::max);
    let t_up_max_s = per_client.iter().map(|c| c.t_up_s).fold(0.0, f64::max);
    let slowest = per_client
        .iter()
        .map(|c| c.t_compute_s + c.t_up_s)
        .fold(0.0, f64::max);
    Ok(RoundTiming {
        t_down_s,
        t_compute_max_s,
        t_up_max_s,
        t_round_s: t_down_s + slowest,
        per_client,
    })
}

pub fn uav_energy<'a>(timings: impl IntoIterator<Item = &'a RoundTiming>, power: &PowerModel) -> UavEnergy {
    let (mut round_s, mut down_s) = (0.0, 0.0);
    for t in timings {
        round_s += t.t_round_s;
        down_s += t.t_down_s;
    }
    let flight_j = power.propulsion_w * round_s;
    let dissemination_j = power.uav_tx_w * down_s;
    UavEnergy {
        flight_j,
        dissemination_j,
        total_j: flight_j + dissemination_j,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // mpmath reference values
    const T_DOWN_R0: f64 = 0.081_707_786_986_176_87;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn ue(id: UeId, r: f64) -> UeLink {
        UeLink {
            id,
            horizontal_dist_m: r,
            compute: ComputeSpec {
                cpu_hz: 2.0e9,
                cycles_per_bit: 20.0,
                shard_bits: shard_bits(600, 784),
            },
        }
    }

    #[test]
    fn payload_examples() {
        assert_eq!(model_payload_bits(25_450, 32).unwrap(), 814_400.0);
        assert_eq!(model_payload_bits(1, 1).unwrap(), 1.0);
        assert_eq!(model_payload_bits(10, 64).unwrap(), 640.0);
        assert!(model_payload_bits(0, 32).is_err());
    }

    #[test]
    fn compute_time_examples() {
        let spec = ComputeSpec {
            cpu_hz: 2.0e9,
            cycles_per_bit: 20.0,
            shard_bits: shard_bits(600, 784),
        };
        assert_eq!(spec.shard_bits, 3_763_200.0);
        let t1 = compute_time(&spec, 1).unwrap();
        assert!(rel(t1, 0.037632) < 1e-12);
        assert_eq!(compute_time(&spec, 2).unwrap(), 2.0 * t1);
        let empty = ComputeSpec { shard_bits: 0.0, ..spec };
        assert_eq!(compute_time(&empty, 5).unwrap(), 0.0);
        assert!(compute_time(&spec, 0).is_err());
    }

    #[test]
    fn single_ue_downlink() {
        let t = round_timing(&[ue(0, 0.0)], &LinkParams::default(), 814_400.0, 1).unwrap();
        assert!(rel(t.t_down_s, T_DOWN_R0) < 1e-9);
        assert!(t.is_consistent());
        // a lone UE gets the whole band at UE power: 1e6 * log2(1 + 1e4)
        let up = 1e6 * (1.0f64 + 1e4).log2();
        assert!(rel(t.t_up_max_s, 814_400.0 / up) < 1e-12);
    }

    #[test]
    fn two_ues_halve_uplink_band() {
        let link = LinkParams::default();
        let two = round_timing(&[ue(0, 0.0), ue(1, 0.0)], &link, 814_400.0, 1).unwrap();
        let halved = LinkParams {
            system_bandwidth_hz: link.system_bandwidth_hz / 2.0,
            ..link
        };
        let one_half_band = round_timing(&[ue(0, 0.0)], &halved, 814_400.0, 1).unwrap();
        let one = round_timing(&[ue(0, 0.0)], &link, 814_400.0, 1).unwrap();
        assert!(rel(two.t_up_max_s, one_half_band.t_up_max_s) < 1e-12);
        // downlink broadcast still uses the full band
        assert_eq!(two.t_down_s, one.t_down_s);
        assert!(rel(two.t_round_s, one.t_down_s + one.t_compute_max_s + one_half_band.t_up_max_s) < 1e-12);
        assert!(two.is_consistent());
    }

    #[test]
    fn broadcast_waits_for_farthest_ue() {
        let link = LinkParams::default();
        let t = round_timing(&[ue(0, 0.0), ue(1, 10.0)], &link, 814_400.0, 1).unwrap();
        let far = round_timing(&[ue(1, 10.0)], &link, 814_400.0, 1).unwrap();
        assert_eq!(t.t_down_s, far.t_down_s);
    }

    #[test]
    fn zero_payload_round_is_compute_bound() {
        let t = round_timing(&[ue(0, 3.0), ue(1, 7.0)], &LinkParams::default(), 0.0, 5).unwrap();
        assert_eq!(t.t_round_s, t.t_compute_max_s);
        assert!(round_timing(&[], &LinkParams::default(), 1.0, 1).is_err());
    }

    #[test]
    fn energy_examples() {
        let round = RoundTiming {
            t_down_s: 0.01,
            t_compute_max_s: 0.5,
            t_up_max_s: 0.49,
            t_round_s: 1.0,
            per_client: vec![],
        };
        let e = uav_energy([&round], &PowerModel::default());
        assert_eq!(e.flight_j, 100.0);
        assert!(rel(e.dissemination_j, 1e-4) < 1e-12);
        assert!(rel(e.total_j, 100.0001) < 1e-12);
        assert_eq!(e.total_j, e.flight_j + e.dissemination_j);

        let none = uav_energy(std::iter::empty(), &PowerModel::default());
        assert_eq!(none, UavEnergy::default());
    }

    #[test]
    fn energy_monotone_in_epochs_and_payload() {
        let link = LinkParams::default();
        let power = PowerModel::default();
        let sel = [ue(0, 2.0), ue(1, 9.0), ue(2, 4.5)];
        let mut last = 0.0;
        for epochs in [1, 2, 5, 20] {
            let t = round_timing(&sel, &link, 814_400.0, epochs).unwrap();
            let e = uav_energy([&t], &power).total_j;
            assert!(e >= last);
            last = e;
        }
        let mut last = 0.0;
        for payload in [0.0, 1.0, 1e3, 1e6, 1e7] {
            let t = round_timing(&sel, &link, payload, 1).unwrap();
            let e = uav_energy([&t], &power).total_j;
            assert!(e >= last);
            last = e;
        }
    }
}
