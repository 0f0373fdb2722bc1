//! Air-to-ground link budget.
//!
//! The channel is a line-of-sight free-space model: the received SNR of a
//! node at horizontal distance `R` from a UAV hovering at height `H` is
//! `beta0 * p / (sigma^2 * (H^2 + R^2))`, and the achievable rate over a
//! bandwidth `B` is the Shannon capacity `B * log2(1 + snr)`.
//!
//! All quantities are SI (Hz, W, m). Decibel values stay in [`LinkParams`]
//! as configured and are linearized at the call site.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel constants shared by every UE in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkParams {
    /// Channel power gain at the 1 m reference distance, dB.
    pub beta0_db: f64,
    /// Noise power, dBm.
    pub noise_dbm: f64,
    /// Total system bandwidth, Hz.
    pub system_bandwidth_hz: f64,
    pub uav_height_m: f64,
    pub uav_tx_power_w: f64,
    pub ue_tx_power_w: f64,
}

impl Default for LinkParams {
    fn default() -> Self {
        LinkParams {
            beta0_db: -50.0,
            noise_dbm: -110.0,
            system_bandwidth_hz: 1.0e6,
            uav_height_m: 100.0,
            uav_tx_power_w: 0.01,
            ue_tx_power_w: 0.1,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.system_bandwidth_hz > 0.0 && self.system_bandwidth_hz.is_finite()) {
            errs.push(format!(
                "system bandwidth must be positive, got {}",
                self.system_bandwidth_hz
            ));
        }
        if !(self.uav_height_m > 0.0 && self.uav_height_m.is_finite()) {
            errs.push(format!("UAV height must be positive, got {}", self.uav_height_m));
        }
        if !(self.uav_tx_power_w >= 0.0 && self.uav_tx_power_w.is_finite()) {
            errs.push(format!("UAV tx power must be >= 0, got {}", self.uav_tx_power_w));
        }
        if !(self.ue_tx_power_w >= 0.0 && self.ue_tx_power_w.is_finite()) {
            errs.push(format!("UE tx power must be >= 0, got {}", self.ue_tx_power_w));
        }
        for (name, v) in [
            ("beta0", db_to_linear(self.beta0_db)),
            ("noise power", dbm_to_watts(self.noise_dbm)),
        ] {
            match v {
                Ok(x) if x > 0.0 && x.is_finite() => {}
                _ => errs.push(format!("{name} does not linearize to a positive finite value")),
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn beta0_linear(&self) -> f64 {
        10f64.powf(self.beta0_db / 10.0)
    }

    pub fn noise_w(&self) -> f64 {
        10f64.powf(self.noise_dbm / 10.0) * 1e-3
    }
}

pub fn db_to_linear(x_db: f64) -> Result<f64> {
    if !x_db.is_finite() {
        return Err(Error::invalid(format!("dB value must be finite, got {x_db}")));
    }
    Ok(10f64.powf(x_db / 10.0))
}

pub fn linear_to_db(x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!(
            "linear ratio must be positive and finite, got {x}"
        )));
    }
    Ok(10.0 * x.log10())
}

pub fn dbm_to_watts(x_dbm: f64) -> Result<f64> {
    if !x_dbm.is_finite() {
        return Err(Error::invalid(format!("dBm value must be finite, got {x_dbm}")));
    }
    Ok(10f64.powf(x_dbm / 10.0) * 1e-3)
}

/// Received SNR for transmit power `p_tx` at horizontal distance `horizontal_dist_m`.
pub fn a2g_snr(p_tx: f64, params: &LinkParams, horizontal_dist_m: f64) -> Result<f64> {
    if !(p_tx >= 0.0 && p_tx.is_finite()) {
        return Err(Error::invalid(format!("transmit power must be >= 0, got {p_tx}")));
    }
    if !(horizontal_dist_m >= 0.0 && horizontal_dist_m.is_finite()) {
        return Err(Error::invalid(format!(
            "horizontal distance must be >= 0, got {horizontal_dist_m}"
        )));
    }
    let h = params.uav_height_m;
    let dist_sq = h * h + horizontal_dist_m * horizontal_dist_m;
    Ok(params.beta0_linear() * p_tx / (params.noise_w() * dist_sq))
}

/// Shannon rate in bits per second.
pub fn a2g_rate(bandwidth_hz: f64, snr: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0 && bandwidth_hz.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    if snr.is_nan() || snr < 0.0 {
        return Err(Error::invalid(format!("snr must be >= 0, got {snr}")));
    }
    Ok(bandwidth_hz * (1.0 + snr).log2())
}

/// Equal OFDMA split of the system bandwidth among the selected UEs.
pub fn ofdma_share(system_bandwidth_hz: f64, num_selected: usize) -> Result<f64> {
    if num_selected == 0 {
        return Err(Error::invalid("OFDMA share needs at least one selected UE"));
    }
    Ok(system_bandwidth_hz / num_selected as f64)
}

pub fn transmission_time(payload_bits: f64, rate_bps: f64) -> Result<f64> {
    if rate_bps.is_nan() || rate_bps <= 0.0 {
        return Err(Error::invalid(format!("rate must be positive, got {rate_bps}")));
    }
    if payload_bits.is_nan() || payload_bits < 0.0 {
        return Err(Error::invalid(format!("payload must be >= 0, got {payload_bits}")));
    }
    Ok(payload_bits / rate_bps)
}

/// Uplink rate of one UE when `num_selected` UEs share the band.
pub fn uplink_rate(params: &LinkParams, horizontal_dist_m: f64, num_selected: usize) -> Result<f64> {
    let bw = ofdma_share(params.system_bandwidth_hz, num_selected)?;
    let snr = a2g_snr(params.ue_tx_power_w, params, horizontal_dist_m)?;
    a2g_rate(bw, snr)
}

/// Downlink broadcast rate towards a UE: full system bandwidth at UAV power.
pub fn downlink_rate(params: &LinkParams, horizontal_dist_m: f64) -> Result<f64> {
    let snr = a2g_snr(params.uav_tx_power_w, params, horizontal_dist_m)?;
    a2g_rate(params.system_bandwidth_hz, snr)
}
