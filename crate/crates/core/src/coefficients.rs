//! Nonlinear diffusion coefficients `k(p)` and their closed-form derivatives.
//!
//! Three families are supported: the porous medium law `k = p^m`, the
//! superslow law `k = exp(-1/p)`, and the linear law `k = p` (kept separate
//! from `p^1` for the smooth baseline runs). The modified-harmonic correction
//! needs `k`, `k_p`, `k_pp` and `k_ppp`, so all three derivatives are exact.

use serde::{Deserialize, Serialize};

use crate::error::{GpmeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum CoefficientModel {
    /// `k(p) = p^m`, `m >= 1`.
    Pme { m: f64 },
    /// `k(p) = exp(-1/p)`.
    Superslow,
    /// `k(p) = p`.
    Linear,
}

/// `k` and its first three `p`-derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KDerivatives {
    pub k: f64,
    pub k_p: f64,
    pub k_pp: f64,
    pub k_ppp: f64,
}

impl KDerivatives {
    pub fn order(&self, order: u8) -> f64 {
        match order {
            0 => self.k,
            1 => self.k_p,
            2 => self.k_pp,
            _ => self.k_ppp,
        }
    }
}

impl CoefficientModel {
    pub fn pme(m: f64) -> Result<Self> {
        if !(m.is_finite() && m >= 1.0) {
            return Err(GpmeError::Config(format!(
                "PME exponent must be >= 1, got {m}"
            )));
        }
        Ok(CoefficientModel::Pme { m })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CoefficientModel::Pme { m } => CoefficientModel::pme(m).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match *self {
            CoefficientModel::Pme { m } => format!("pme{m}"),
            CoefficientModel::Superslow => "superslow".to_string(),
            CoefficientModel::Linear => "linear".to_string(),
        }
    }

    /// Unchecked `k(p)` for the inner loops. Superslow returns NaN for `p <= 0`
    /// so that the caller's finiteness check reports the offending node.
    #[inline]
    pub fn k(&self, p: f64) -> f64 {
        match *self {
            CoefficientModel::Pme { m } => pow_exponent(p, m),
            CoefficientModel::Superslow => {
                if p > 0.0 {
                    (-1.0 / p).exp()
                } else {
                    f64::NAN
                }
            }
            CoefficientModel::Linear => p,
        }
    }

    /// All derivatives up to third order at `p`.
    pub fn derivatives(&self, p: f64) -> Result<KDerivatives> {
        if !p.is_finite() {
            return Err(GpmeError::Domain(format!("non-finite p = {p}")));
        }
        match *self {
            CoefficientModel::Pme { m } => {
                if p < 0.0 {
                    return Err(GpmeError::Domain(format!("PME requires p >= 0, got {p}")));
                }
                let mut out = [0.0; 4];
                let mut coeff = 1.0;
                for (j, slot) in out.iter_mut().enumerate() {
                    if j > 0 {
                        coeff *= m - (j as f64 - 1.0);
                    }
                    // a vanishing falling factorial kills the (possibly singular) power
                    *slot = if coeff == 0.0 {
                        0.0
                    } else {
                        coeff * pow_exponent(p, m - j as f64)
                    };
                }
                Ok(KDerivatives {
                    k: out[0],
                    k_p: out[1],
                    k_pp: out[2],
                    k_ppp: out[3],
                })
            }
            CoefficientModel::Superslow => {
                if p <= 0.0 {
                    return Err(GpmeError::Domain(format!(
                        "superslow coefficient requires p > 0, got {p}"
                    )));
                }
                // exp(-1/p) is evaluated once; every derivative is a multiple of it
                let k = (-1.0 / p).exp();
                let r = 1.0 / p;
                let r2 = r * r;
                let r3 = r2 * r;
                let r4 = r2 * r2;
                Ok(KDerivatives {
                    k,
                    k_p: k * r2,
                    k_pp: k * (r4 - 2.0 * r3),
                    k_ppp: k * (r4 * r2 - 6.0 * r4 * r + 6.0 * r4),
                })
            }
            CoefficientModel::Linear => Ok(KDerivatives {
                k: p,
                k_p: 1.0,
                k_pp: 0.0,
                k_ppp: 0.0,
            }),
        }
    }

    /// The `order`-th derivative of `k` at `p`, `order` in `0..=3`.
    pub fn evaluate(&self, p: f64, order: u8) -> Result<f64> {
        if order > 3 {
            return Err(GpmeError::Argument(format!(
                "derivative order must be in 0..=3, got {order}"
            )));
        }
        Ok(self.derivatives(p)?.order(order))
    }
}

#[inline]
fn pow_exponent(p: f64, e: f64) -> f64 {
    if e.fract() == 0.0 && e.abs() < i32::MAX as f64 {
        p.powi(e as i32)
    } else {
        p.powf(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegeneracyReport {
    /// `C(p) = k k_pp / k_p^2` per sample; `None` where `k_p = 0`.
    pub c_values: Vec<Option<f64>>,
    /// `k(p) -> 0` as `p -> 0`.
    pub condition1_ok: bool,
    /// `C(p) < 1` at every sample.
    pub condition2_ok: bool,
}

/// Evaluate the degeneracy indicator `C(p)` on `p_samples` and check both
/// degeneracy conditions.
pub fn degeneracy_check(model: &CoefficientModel, p_samples: &[f64]) -> Result<DegeneracyReport> {
    let mut c_values = Vec::with_capacity(p_samples.len());
    for &p in p_samples {
        if !(p > 0.0) {
            return Err(GpmeError::Domain(format!(
                "degeneracy samples must be positive, got {p}"
            )));
        }
        let d = model.derivatives(p)?;
        c_values.push(if d.k_p == 0.0 {
            None
        } else {
            Some(d.k * d.k_pp / (d.k_p * d.k_p))
        });
    }
    // k must decay to zero: probe a decade ladder towards the origin
    let ladder: Vec<f64> = (1..=12).map(|e| model.k(10f64.powi(-e))).collect();
    let condition1_ok = ladder.iter().all(|k| *k >= 0.0)
        && ladder.windows(2).all(|w| w[1] <= w[0])
        && *ladder.last().unwrap() <= 1e-12;
    let condition2_ok = c_values.iter().all(|c| matches!(c, Some(c) if *c < 1.0));
    Ok(DegeneracyReport {
        c_values,
        condition1_ok,
        condition2_ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pme_values() {
        let m3 = CoefficientModel::pme(3.0).unwrap();
        assert_eq!(m3.evaluate(0.5, 0).unwrap(), 0.125);
        assert_eq!(m3.evaluate(2.0, 2).unwrap(), 12.0);
        assert_eq!(m3.evaluate(2.0, 1).unwrap(), 12.0);
        assert_eq!(m3.evaluate(2.0, 3).unwrap(), 6.0);
    }

    #[test]
    fn superslow_first_derivative() {
        let v = CoefficientModel::Superslow.evaluate(0.5, 1).unwrap();
        assert_relative_eq!(v, (-2.0f64).exp() * 4.0, max_relative = 1e-15);
        assert!((v - 0.5413).abs() < 1e-4);
    }

    #[test]
    fn domain_and_argument_errors() {
        assert!(matches!(
            CoefficientModel::Superslow.evaluate(0.0, 0),
            Err(GpmeError::Domain(_))
        ));
        assert!(matches!(
            CoefficientModel::Superslow.evaluate(-1.0, 2),
            Err(GpmeError::Domain(_))
        ));
        assert!(matches!(
            CoefficientModel::Linear.evaluate(1.0, 4),
            Err(GpmeError::Argument(_))
        ));
        assert!(CoefficientModel::pme(0.5).is_err());
    }

    #[test]
    fn pme_linear_higher_derivatives_vanish_at_zero() {
        let m1 = CoefficientModel::pme(1.0).unwrap();
        let d = m1.derivatives(0.0).unwrap();
        assert_eq!((d.k, d.k_p, d.k_pp, d.k_ppp), (0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn degeneracy_indicator() {
        let samples: Vec<f64> = (1..=100).map(|i| i as f64 * 0.1).collect();
        let r = degeneracy_check(&CoefficientModel::pme(3.0).unwrap(), &samples).unwrap();
        for c in &r.c_values {
            assert!((c.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        }
        assert!(r.condition1_ok && r.condition2_ok);

        let r = degeneracy_check(&CoefficientModel::Superslow, &[0.25]).unwrap();
        assert!((r.c_values[0].unwrap() - 0.5).abs() < 1e-15);

        let r = degeneracy_check(&CoefficientModel::pme(1.0).unwrap(), &[0.3, 7.0]).unwrap();
        assert_eq!(r.c_values, vec![Some(0.0), Some(0.0)]);

        // superslow violates C < 1 only where 1 - 2p >= 1, i.e. never for p > 0
        let r = degeneracy_check(&CoefficientModel::Superslow, &samples).unwrap();
        assert!(r.condition1_ok && r.condition2_ok);
    }

    #[test]
    fn degeneracy_rejects_nonpositive_samples() {
        assert!(degeneracy_check(&CoefficientModel::Linear, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn superslow_beats_every_power() {
        for n in 1..=6 {
            let ratios: Vec<f64> = [0.2, 0.1, 0.05, 0.02, 0.01]
                .iter()
                .map(|&p: &f64| CoefficientModel::Superslow.k(p) / p.powi(n))
                .collect();
            assert!(
                ratios.windows(2).all(|w| w[1] < w[0]),
                "n = {n}: {ratios:?}"
            );
            assert!(*ratios.last().unwrap() < 1e-30);
        }
    }

    #[test]
    fn derivatives_match_central_differences() {
        let models = [
            CoefficientModel::pme(1.0).unwrap(),
            CoefficientModel::pme(2.0).unwrap(),
            CoefficientModel::pme(3.0).unwrap(),
            CoefficientModel::pme(1.405).unwrap(),
            CoefficientModel::Superslow,
            CoefficientModel::Linear,
        ];
        for model in models {
            for &p in &[0.3, 0.7, 1.3, 2.0] {
                for order in 1..=3u8 {
                    let exact = model.evaluate(p, order).unwrap();
                    let fd = |h: f64| {
                        (model.evaluate(p + h, order - 1).unwrap()
                            - model.evaluate(p - h, order - 1).unwrap())
                            / (2.0 * h)
                    };
                    let e1 = (fd(1e-2) - exact).abs();
                    let e2 = (fd(5e-3) - exact).abs();
                    let scale = exact.abs().max(1.0);
                    assert!(e1 < 1e-2 * scale, "{model:?} p={p} order={order}");
                    // second-order: halving h quarters the error (unless already at round-off)
                    if e1 > 1e-9 * scale {
                        let ratio = e1 / e2;
                        assert!(
                            (ratio - 4.0).abs() < 0.2,
                            "{model:?} p={p} order={order} ratio={ratio}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn config_json_shape() {
        let m: CoefficientModel = serde_json::from_str(r#"{"model": "pme", "m": 3}"#).unwrap();
        assert_eq!(m, CoefficientModel::Pme { m: 3.0 });
        let s: CoefficientModel = serde_json::from_str(r#"{"model": "superslow"}"#).unwrap();
        assert_eq!(s, CoefficientModel::Superslow);
    }
}
