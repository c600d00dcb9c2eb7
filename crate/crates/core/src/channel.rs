//! Radio-layer math for the downlink SU pairs.
//!
//! Powers are carried in linear milliwatts everywhere; dB and dBm appear only
//! at the edges (configuration and path loss).

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Intercept of the log-distance path loss model, dB.
pub const PATH_LOSS_INTERCEPT_DB: f64 = 41.0;
/// Slope of the log-distance path loss model, dB per decade of distance.
pub const PATH_LOSS_SLOPE_DB: f64 = 22.7;

/// A point in the square deployment area, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodePosition {
    pub x: f64,
    pub y: f64,
}

impl NodePosition {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &NodePosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn inside_square(&self, side: f64) -> bool {
        (0.0..=side).contains(&self.x) && (0.0..=side).contains(&self.y)
    }
}

/// Log-distance path loss with configurable coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathLossModel {
    pub intercept_db: f64,
    pub slope_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            intercept_db: PATH_LOSS_INTERCEPT_DB,
            slope_db: PATH_LOSS_SLOPE_DB,
        }
    }
}

impl PathLossModel {
    pub fn loss_db(&self, distance_m: f64) -> Result<f64> {
        if !(distance_m > 0.0) || !distance_m.is_finite() {
            return Err(Error::input(format!(
                "path loss needs a positive finite distance, got {distance_m}"
            )));
        }
        Ok(self.intercept_db + self.slope_db * distance_m.log10())
    }
}

/// Path loss in dB at `distance_m` meters: `41 + 22.7 log10(d)`.
pub fn path_loss_db(distance_m: f64) -> Result<f64> {
    PathLossModel::default().loss_db(distance_m)
}

/// Draws the power gain `|h|^2` of a unit-mean Rician channel with K-factor
/// `k_factor`. `k_factor = 0` is Rayleigh fading; `f64::INFINITY` is a pure
/// line-of-sight channel with gain exactly 1.
pub fn sample_rician_power_gain<R: Rng + ?Sized>(k_factor: f64, rng: &mut R) -> Result<f64> {
    if k_factor.is_nan() || k_factor < 0.0 {
        return Err(Error::input(format!(
            "Rician K-factor must be non-negative, got {k_factor}"
        )));
    }
    if k_factor.is_infinite() {
        return Ok(1.0);
    }
    let los_amp = (k_factor / (k_factor + 1.0)).sqrt();
    let scatter_amp = (1.0 / (k_factor + 1.0)).sqrt();
    let phase = rng.random::<f64>() * 2.0 * PI;
    // unit-variance circularly-symmetric complex Gaussian: each quadrature has variance 1/2
    let g_re: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
    let g_im: f64 = rng.sample::<f64, _>(StandardNormal) * std::f64::consts::FRAC_1_SQRT_2;
    let re = los_amp * phase.cos() + scatter_amp * g_re;
    let im = los_amp * phase.sin() + scatter_amp * g_im;
    Ok(re * re + im * im)
}

/// Converts dBm to milliwatts.
pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// One evaluated link: transmit power, path loss, fading and the resulting
/// received power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub path_loss_db: f64,
    pub fading_power_gain: f64,
    pub rx_power_mw: f64,
}

impl LinkBudget {
    pub fn evaluate(tx_power_dbm: f64, path_loss_db: f64, fading_power_gain: f64) -> Result<Self> {
        if fading_power_gain.is_nan() || fading_power_gain < 0.0 {
            return Err(Error::input(format!(
                "fading power gain must be non-negative, got {fading_power_gain}"
            )));
        }
        Ok(Self {
            tx_power_dbm,
            path_loss_db,
            fading_power_gain,
            rx_power_mw: dbm_to_mw(tx_power_dbm - path_loss_db) * fading_power_gain,
        })
    }
}

/// Received power in mW from `tx` at `rx` under the default path loss model.
pub fn received_power_mw(
    tx_power_dbm: f64,
    tx: NodePosition,
    rx: NodePosition,
    fading_power_gain: f64,
) -> Result<f64> {
    let d = tx.distance(&rx);
    if d <= 0.0 {
        return Err(Error::input("transmitter and receiver are coincident"));
    }
    Ok(LinkBudget::evaluate(tx_power_dbm, path_loss_db(d)?, fading_power_gain)?.rx_power_mw)
}

/// Signal-to-interference-plus-noise ratio, all powers in mW.
pub fn sinr(signal_mw: f64, interference_mw: &[f64], noise_mw: f64) -> Result<f64> {
    if !(noise_mw > 0.0) {
        return Err(Error::input(format!(
            "noise power must be positive, got {noise_mw}"
        )));
    }
    if signal_mw.is_nan() || signal_mw < 0.0 {
        return Err(Error::input(format!(
            "signal power must be non-negative, got {signal_mw}"
        )));
    }
    if let Some(bad) = interference_mw.iter().find(|p| p.is_nan() || **p < 0.0) {
        return Err(Error::input(format!(
            "interference power must be non-negative, got {bad}"
        )));
    }
    let interference: f64 = interference_mw.iter().sum();
    Ok(signal_mw / (noise_mw + interference))
}

/// Shannon rate `B log2(1 + sinr)` in bits per second.
pub fn throughput_bps(sinr: f64, bandwidth_hz: f64) -> Result<f64> {
    if sinr.is_nan() || sinr < 0.0 {
        return Err(Error::input(format!(
            "SINR must be non-negative, got {sinr}"
        )));
    }
    if !(bandwidth_hz > 0.0) {
        return Err(Error::input(format!(
            "bandwidth must be positive, got {bandwidth_hz}"
        )));
    }
    Ok(bandwidth_hz * sinr.ln_1p() / std::f64::consts::LN_2)
}

/// Thermal noise power in mW over `bandwidth_hz`.
pub fn noise_power_mw(noise_density_dbm_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::input(format!(
            "bandwidth must be positive, got {bandwidth_hz}"
        )));
    }
    Ok(dbm_to_mw(noise_density_dbm_hz) * bandwidth_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn path_loss_reference_points() {
        assert_eq!(path_loss_db(1.0).unwrap(), 41.0);
        assert!((path_loss_db(10.0).unwrap() - 63.7).abs() < 1e-12);
        assert!((path_loss_db(100.0).unwrap() - 86.4).abs() < 1e-12);
    }

    #[test]
    fn path_loss_rejects_non_positive_distance() {
        assert!(path_loss_db(0.0).is_err());
        assert!(path_loss_db(-3.0).is_err());
        assert!(path_loss_db(f64::NAN).is_err());
    }

    #[test]
    fn rician_pure_los_is_unity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(
                sample_rician_power_gain(f64::INFINITY, &mut rng).unwrap(),
                1.0
            );
        }
    }

    #[test]
    fn rician_rejects_negative_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_rician_power_gain(-0.1, &mut rng).is_err());
    }

    fn moments(k: f64, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples: Vec<f64> = (0..n)
            .map(|_| sample_rician_power_gain(k, &mut rng).unwrap())
            .collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var)
    }

    #[test]
    fn rician_k5_unit_mean_and_analytic_variance() {
        let (mean, var) = moments(5.0, 1_000_000, 7);
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        // Var|h|^2 = (2K + 1) / (K + 1)^2 for unit-mean Rician power
        assert!((var - 11.0 / 36.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn rayleigh_special_case_is_exponential() {
        let (mean, var) = moments(0.0, 1_000_000, 8);
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn received_power_examples() {
        let a = NodePosition::new(0.0, 0.0);
        let b = NodePosition::new(1.0, 0.0);
        let c = NodePosition::new(10.0, 0.0);
        assert!(close(
            received_power_mw(0.0, a, b, 1.0).unwrap(),
            10f64.powf(-4.1),
            1e-12
        ));
        assert_eq!(received_power_mw(0.0, a, b, 0.0).unwrap(), 0.0);
        let expected = 10f64.powf((30.0 - 63.7) / 10.0);
        assert!(close(
            received_power_mw(30.0, a, c, 1.0).unwrap(),
            expected,
            1e-12
        ));
        assert!(received_power_mw(0.0, a, a, 1.0).is_err());
    }

    #[test]
    fn sinr_examples() {
        assert_eq!(sinr(1.0, &[], 1.0).unwrap(), 1.0);
        assert_eq!(sinr(0.0, &[0.5], 1.0).unwrap(), 0.0);
        assert_eq!(sinr(4.0, &[1.0, 1.0], 2.0).unwrap(), 1.0);
        assert!(sinr(1.0, &[], 0.0).is_err());
        assert!(sinr(1.0, &[-1.0], 1.0).is_err());
    }

    #[test]
    fn throughput_examples() {
        assert_eq!(throughput_bps(0.0, 10e6).unwrap(), 0.0);
        assert!(close(throughput_bps(1.0, 10e6).unwrap(), 10e6, 1e-12));
        assert!(close(throughput_bps(3.0, 10e6).unwrap(), 20e6, 1e-12));
        assert!(throughput_bps(-0.5, 10e6).is_err());
        assert!(throughput_bps(1.0, 0.0).is_err());
    }

    #[test]
    fn noise_power_examples() {
        assert!(close(
            noise_power_mw(-174.0, 1.0).unwrap(),
            10f64.powf(-17.4),
            1e-12
        ));
        let n = noise_power_mw(-174.0, 10e6).unwrap();
        assert!(close(n, 10f64.powf(-17.4) * 1e7, 1e-12));
        assert!((n - 3.98e-11).abs() < 0.01e-11);
        assert_eq!(noise_power_mw(0.0, 1.0).unwrap(), 1.0);
        assert!(noise_power_mw(-174.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn path_loss_strictly_increasing(d in 0.01f64..1e5, f in 1.0001f64..10.0) {
            prop_assert!(path_loss_db(d * f).unwrap() > path_loss_db(d).unwrap());
        }

        #[test]
        fn sinr_monotone(
            s in 0.0f64..10.0,
            ds in 1e-3f64..10.0,
            i in proptest::collection::vec(0.0f64..10.0, 0..5),
            di in 1e-3f64..10.0,
            n in 1e-3f64..10.0,
        ) {
            let base = sinr(s, &i, n).unwrap();
            prop_assert!(base >= 0.0);
            prop_assert!(sinr(s + ds, &i, n).unwrap() > base);
            prop_assert!(sinr(s, &i, n + di).unwrap() <= base);
            let mut more = i.clone();
            more.push(di);
            prop_assert!(sinr(s, &more, n).unwrap() <= base);
        }

        #[test]
        fn throughput_strictly_increasing(s in 0.0f64..1e4, ds in 1e-6f64..10.0) {
            prop_assert!(throughput_bps(s + ds, 1e6).unwrap() > throughput_bps(s, 1e6).unwrap());
        }

        #[test]
        fn powers_stay_non_negative(k in 0.0f64..50.0, seed in any::<u64>(), tx in -30.0f64..40.0, d in 0.5f64..600.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = sample_rician_power_gain(k, &mut rng).unwrap();
            prop_assert!(g >= 0.0);
            let p = received_power_mw(tx, NodePosition::new(0.0, 0.0), NodePosition::new(d, 0.0), g).unwrap();
            prop_assert!(p >= 0.0);
        }
    }
}
