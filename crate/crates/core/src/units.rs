//! Unit conversions and small information-theoretic helpers.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Power transmittance of an element with the given loss in dB.
pub fn db_to_transmittance<T: Real>(loss_db: T) -> Result<T> {
    if !loss_db.is_finite() {
        return Err(Error::Domain {
            what: "loss_db",
            value: to_f64(loss_db),
            domain: "finite",
        });
    }
    Ok(lit::<T>(10.0).powf(-loss_db / lit(10.0)))
}

/// Inverse of [`db_to_transmittance`].
pub fn transmittance_to_db<T: Real>(t: T) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::Domain {
            what: "transmittance",
            value: to_f64(t),
            domain: "(0, inf)",
        });
    }
    Ok(-lit::<T>(10.0) * t.log10())
}

/// Binary Shannon entropy in bits.
pub fn binary_entropy<T: Real>(p: T) -> Result<T> {
    if !(p >= T::zero() && p <= T::one()) {
        return Err(Error::Domain {
            what: "p",
            value: to_f64(p),
            domain: "[0, 1]",
        });
    }
    Ok(h2(p))
}

/// Binary entropy with the argument clamped into `[0, 1]`.
pub(crate) fn h2<T: Real>(p: T) -> T {
    if !(p > T::zero()) || p >= T::one() {
        return T::zero();
    }
    let q = T::one() - p;
    -(p * p.log2() + q * q.log2())
}

/// Per-gate probability for an event rate quoted in Hz.
///
/// Plain division by the gate frequency; no dead-time or illumination
/// correction is applied.
pub fn per_gate_probability(rate_hz: f64, gate_rate_ghz: f64) -> f64 {
    rate_hz / (gate_rate_ghz * 1e9)
}

/// Fibre length equivalent to a channel loss.
pub fn equivalent_km(attenuation_db: f64, db_per_km: f64) -> f64 {
    attenuation_db / db_per_km
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn transmittance_examples() {
        assert_eq!(db_to_transmittance(0.0_f64).unwrap(), 1.0);
        assert_relative_eq!(db_to_transmittance(10.0_f64).unwrap(), 0.1, max_relative = 1e-15);
        // 10^-1.92
        assert_relative_eq!(
            db_to_transmittance(19.2_f64).unwrap(),
            0.012_022_644_346_174_129,
            max_relative = 1e-12
        );
        assert!(db_to_transmittance(f64::NAN).is_err());
        assert!(db_to_transmittance(f64::INFINITY).is_err());
    }

    #[test]
    fn transmittance_f32() {
        assert!((db_to_transmittance(3.0_f32).unwrap() - 0.501_187_2).abs() < 1e-6);
    }

    #[test]
    fn db_round_trip() {
        for &db in &[0.0, 0.5, 4.2, 19.2, 37.0] {
            let t = db_to_transmittance(db).unwrap();
            assert_relative_eq!(transmittance_to_db(t).unwrap(), db, epsilon = 1e-12);
        }
        assert!(transmittance_to_db(0.0).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(binary_entropy(0.0_f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0_f64).unwrap(), 0.0);
        assert_eq!(binary_entropy(0.5_f64).unwrap(), 1.0);
        // -0.11 log2 0.11 - 0.89 log2 0.89, evaluated with 50-digit arithmetic
        assert_relative_eq!(
            binary_entropy(0.11_f64).unwrap(),
            0.499_915_958_164_528,
            max_relative = 1e-13
        );
        assert!(binary_entropy(-0.01_f64).is_err());
        assert!(binary_entropy(1.5_f64).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn per_gate_division() {
        assert_relative_eq!(per_gate_probability(1930.0, 1.0), 1.93e-6);
        assert_relative_eq!(equivalent_km(18.0, 0.18), 100.0);
    }
}
