use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingLoss<T> {
    pub loss_db: T,
    /// The system SPDE exceeds what the SPAD SPDE and channel loss allow,
    /// so the inferred coupling loss is negative.
    pub negative: bool,
}

/// Optical coupling loss inferred from the system SPDE measured through a
/// channel of known loss and the bare SPAD SPDE:
/// `10 log10(spad / system) - channel_loss`.
pub fn coupling_loss<T: Real>(system_spde: T, channel_loss_db: T, spad_spde: T) -> Result<CouplingLoss<T>> {
    let (s, c, d) = (to_f64(system_spde), to_f64(channel_loss_db), to_f64(spad_spde));
    if !(s > 0.0 && s <= d && d <= 1.0) {
        return Err(Error::Domain {
            what: "system_spde, spad_spde",
            value: s,
            domain: "0 < system_spde <= spad_spde <= 1",
        });
    }
    if !c.is_finite() {
        return Err(Error::Domain {
            what: "channel_loss_db",
            value: c,
            domain: "finite",
        });
    }
    let loss = lit::<T>(10.0) * (spad_spde / system_spde).log10() - channel_loss_db;
    Ok(CouplingLoss {
        loss_db: loss,
        negative: loss < T::zero(),
    })
}

/// Tabulated bias-to-SPDE curve of one pixel, linearly interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCurve<T> {
    /// `(bias_v, spde)` with strictly increasing bias and nondecreasing SPDE.
    points: Vec<(T, T)>,
}

impl<T: Real> BiasCurve<T> {
    pub fn new(points: Vec<(T, T)>) -> Result<Self> {
        let bad = |msg: &str| Error::Model(format!("bias curve: {msg}"));
        if points.len() < 2 {
            return Err(bad("needs at least two points"));
        }
        for w in points.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(bad("bias values must be strictly increasing"));
            }
            if w[1].1 < w[0].1 {
                return Err(bad("SPDE must be nondecreasing in bias"));
            }
        }
        if points.iter().any(|p| !(p.1 >= T::zero() && p.1 <= T::one())) {
            return Err(bad("SPDE values must lie in [0, 1]"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    pub fn bias_range(&self) -> (T, T) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    pub fn spde_range(&self) -> (T, T) {
        (self.points[0].1, self.points[self.points.len() - 1].1)
    }

    /// SPDE at `bias`, clamped to the tabulated range.
    pub fn spde(&self, bias: T) -> T {
        let p = &self.points;
        if bias <= p[0].0 {
            return p[0].1;
        }
        let i = p.partition_point(|x| x.0 < bias);
        if i >= p.len() {
            return p[p.len() - 1].1;
        }
        let (b0, e0) = p[i - 1];
        let (b1, e1) = p[i];
        e0 + (e1 - e0) * (bias - b0) / (b1 - b0)
    }

    /// Smallest bias reaching `spde`, by bisection.
    pub fn bias_for(&self, spde: T) -> Option<T> {
        let (lo_e, hi_e) = self.spde_range();
        if spde < lo_e || spde > hi_e {
            return None;
        }
        let (mut lo, mut hi) = self.bias_range();
        if self.spde(lo) >= spde {
            return Some(lo);
        }
        for _ in 0..200 {
            let mid = (lo + hi) * lit(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.spde(mid) < spde {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedBiases<T> {
    pub biases: Vec<T>,
    pub achieved_system_spde: Vec<T>,
    /// `(max - min) / mean` of the achieved system SPDEs.
    pub mismatch: T,
}

/// Chooses each pixel's bias so that `spde(bias) * 10^(-loss/10)` equals
/// `target_system_spde`.
pub fn balance_biases<T: Real>(
    curves: &[BiasCurve<T>],
    channel_losses_db: &[T],
    target_system_spde: T,
) -> Result<BalancedBiases<T>> {
    if curves.len() != channel_losses_db.len() || curves.is_empty() {
        return Err(Error::Model(format!(
            "{} bias curves but {} channel losses",
            curves.len(),
            channel_losses_db.len()
        )));
    }
    let ten = lit::<T>(10.0);
    let mut biases = Vec::with_capacity(curves.len());
    let mut achieved = Vec::with_capacity(curves.len());
    for (i, (curve, &loss)) in curves.iter().zip(channel_losses_db).enumerate() {
        let t = ten.powf(-loss / ten);
        let needed = target_system_spde / t;
        let bias = curve.bias_for(needed).ok_or_else(|| {
            let (min, max) = curve.spde_range();
            Error::UnreachableTarget {
                pixel: i,
                needed: to_f64(needed),
                min: to_f64(min),
                max: to_f64(max),
            }
        })?;
        biases.push(bias);
        achieved.push(curve.spde(bias) * t);
    }
    let max = achieved.iter().copied().fold(T::neg_infinity(), T::max);
    let min = achieved.iter().copied().fold(T::infinity(), T::min);
    let mean = achieved.iter().copied().fold(T::zero(), |a, b| a + b) / lit(achieved.len() as f64);
    Ok(BalancedBiases {
        biases,
        achieved_system_spde: achieved,
        mismatch: (max - min) / mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_rows() {
        let c = coupling_loss(0.1025_f64, 1.97, 0.170).unwrap();
        assert!((c.loss_db - 0.227_250_559_865_008).abs() < 1e-12, "{}", c.loss_db);
        let c = coupling_loss(0.1036_f64, 0.72, 0.143).unwrap();
        assert!((c.loss_db - 0.679_762_820_558_476).abs() < 1e-12, "{}", c.loss_db);
        assert_eq!(coupling_loss(0.12, 0.0, 0.12).unwrap().loss_db, 0.0);
    }

    #[test]
    fn rejects_system_above_spad() {
        assert!(coupling_loss(0.2, 0.0, 0.1).is_err());
        assert!(coupling_loss(0.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn negative_loss_is_flagged() {
        let c = coupling_loss(0.15, 1.0, 0.16).unwrap();
        assert!(c.negative && c.loss_db < 0.0);
    }

    #[test]
    fn works_in_f32() {
        let c = coupling_loss(0.1025f32, 1.97, 0.170).unwrap();
        assert!((c.loss_db - 0.2273).abs() < 1e-3);
    }

    #[test]
    fn curve_rejects_non_monotone() {
        assert!(BiasCurve::new(vec![(0.0, 0.1), (1.0, 0.05)]).is_err());
        assert!(BiasCurve::new(vec![(0.0, 0.1), (0.0, 0.2)]).is_err());
    }

    #[test]
    fn unreachable_names_pixel_and_range() {
        let ok = BiasCurve::new(vec![(0.0, 0.0), (1.0, 0.2)]).unwrap();
        let capped = BiasCurve::new(vec![(0.0, 0.0), (1.0, 0.12)]).unwrap();
        let err = balance_biases(&[ok, capped], &[0.0, 3.0], 0.10).unwrap_err();
        match err {
            Error::UnreachableTarget { pixel, needed, max, .. } => {
                assert_eq!(pixel, 1);
                assert!((needed - 0.199_526_231_496_888).abs() < 1e-12, "{needed}");
                assert_eq!(max, 0.12);
            }
            other => panic!("{other}"),
        }
    }
}
