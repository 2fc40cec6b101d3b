//! Closed-form TCP rate bounds and the parameters behind them.
//!
//! Units: rates in Mb/s, times in ms, sizes in bytes.

use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Per-profile transport parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateParams<F = f64> {
    /// RTT with no bridge delay configured, ms.
    pub base_rtt: F,
    /// RTT added per ms of configured one-way bridge delay.
    pub delay_multiplier: F,
    /// Radio access capacity per eNB, Mb/s.
    pub access_cap: F,
    pub mss: F,
    pub mathis_c: F,
    /// Receive window in bytes; no window bound when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<F>,
}

pub const DEFAULT_MSS: f64 = 1460.0;
pub const DEFAULT_MATHIS_C: f64 = 1.22;
pub const DEFAULT_DELAY_MULTIPLIER: f64 = 2.0;

impl<F: Float> RateParams<F> {
    /// Defaults: 200 ms base RTT, k = 2, 1.9 Mb/s access, 1460 B MSS, C = 1.22.
    pub fn nominal() -> Self {
        let f = |x: f64| F::from(x).expect("representable constant");
        Self {
            base_rtt: f(200.0),
            delay_multiplier: f(DEFAULT_DELAY_MULTIPLIER),
            access_cap: f(1.9),
            mss: f(DEFAULT_MSS),
            mathis_c: f(DEFAULT_MATHIS_C),
            window: None,
        }
    }

    /// Every parameter strictly positive and finite.
    pub fn is_valid(&self) -> bool {
        let ok = |x: F| x.is_finite() && x > F::zero();
        ok(self.base_rtt)
            && ok(self.delay_multiplier)
            && ok(self.access_cap)
            && ok(self.mss)
            && ok(self.mathis_c)
            && self.window.is_none_or(ok)
    }

    /// `base_rtt + k * sum(one-way delays)`.
    pub fn rtt_ms(&self, delays: impl IntoIterator<Item = F>) -> F {
        let total = delays.into_iter().fold(F::zero(), |a, d| a + d);
        self.base_rtt + self.delay_multiplier * total
    }

    /// Window bound `window * 8 / rtt`.
    pub fn window_cap(&self, rtt_ms: F) -> Option<F> {
        self.window.map(|w| bits(w) / rtt_ms / thousand())
    }

    /// Mathis bound `C * MSS * 8 / (rtt * sqrt(p))`; `None` for a lossless path.
    pub fn mathis_cap(&self, rtt_ms: F, loss: F) -> Option<F> {
        if loss <= F::zero() {
            return None;
        }
        if loss >= F::one() {
            return Some(F::zero());
        }
        Some(self.mathis_c * bits(self.mss) / (rtt_ms * loss.sqrt()) / thousand())
    }

    /// Loss probability at which the Mathis bound equals `rate` at `rtt_ms`.
    pub fn inverse_mathis(&self, rtt_ms: F, rate: F) -> F {
        let r = self.mathis_c * bits(self.mss) / (rtt_ms * rate * thousand());
        r * r
    }
}

// bytes -> bits
fn bits<F: Float>(bytes: F) -> F {
    bytes * F::from(8.0).expect("8")
}

// bit/ms -> Mb/s
fn thousand<F: Float>() -> F {
    F::from(1000.0).expect("1000")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rtt_additivity() {
        let p = RateParams::<f64>::nominal();
        assert_eq!(p.rtt_ms([]), 200.0);
        assert_eq!(p.rtt_ms([10.0, 20.0]), 260.0);
        let fitted = RateParams {
            delay_multiplier: 2.8,
            ..p
        };
        assert!((fitted.rtt_ms([50.0]) - 340.0).abs() < 1e-9);
    }

    #[test]
    fn mathis_round_trip() {
        let p = RateParams::<f64>::nominal();
        let loss = p.inverse_mathis(340.0, 0.52);
        assert!((loss - 6.4959e-3).abs() < 1e-6, "{loss}");
        let rate = p.mathis_cap(340.0, loss).unwrap();
        assert!((rate - 0.52).abs() < 1e-12);
        assert_eq!(p.mathis_cap(340.0, 0.0), None);
        assert_eq!(p.mathis_cap(340.0, 1.0), Some(0.0));
    }

    #[test]
    fn window_bound() {
        let p = RateParams {
            window: Some(65_536.0),
            ..RateParams::<f64>::nominal()
        };
        // 64 KiB over 200 ms = 2.62144 Mb/s
        assert!((p.window_cap(200.0).unwrap() - 2.62144).abs() < 1e-12);
        assert_eq!(RateParams::<f64>::nominal().window_cap(200.0), None);
    }

    #[test]
    fn works_in_single_precision() {
        let p = RateParams::<f32>::nominal();
        let loss = p.inverse_mathis(340.0, 0.52);
        assert!((p.mathis_cap(340.0, loss).unwrap() - 0.52).abs() < 1e-5);
    }

    #[test]
    fn validity() {
        assert!(RateParams::<f64>::nominal().is_valid());
        let bad = RateParams {
            mss: 0.0,
            ..RateParams::<f64>::nominal()
        };
        assert!(!bad.is_valid());
    }
}
