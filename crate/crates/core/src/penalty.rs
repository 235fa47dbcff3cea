//! Scalar penalties: the Huber weight penalty and the smoothed hinge loss,
//! with their first derivatives.

use crate::error::{Error, Result};

/// Huber penalty with width `epsilon > 0`: quadratic `t²/(2ε)` inside
/// `[-ε, ε]`, linear `|t| - ε/2` outside.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Huber {
    epsilon: f64,
}

impl Huber {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                value: epsilon,
                reason: "Huber width must be positive and finite",
            });
        }
        Ok(Huber { epsilon })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        let a = t.abs();
        if a <= self.epsilon {
            t * t / (2.0 * self.epsilon)
        } else {
            a - self.epsilon / 2.0
        }
    }

    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        if t.abs() <= self.epsilon {
            t / self.epsilon
        } else {
            t.signum()
        }
    }
}

/// Region of the smoothed hinge loss a soft margin falls in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HingeRegion {
    /// `t >= 1`: no loss.
    Inactive,
    /// `1 - 2δ <= t < 1`: quadratic blend.
    Quadratic,
    /// `t < 1 - 2δ`: slope -1.
    Linear,
}

/// Smoothed hinge loss with smoothing `delta >= 0`. `delta = 0` is the exact
/// hinge `max(0, 1 - t)`, whose quadratic region is empty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothedHinge {
    delta: f64,
}

impl SmoothedHinge {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: delta,
                reason: "hinge smoothing must be non-negative and finite",
            });
        }
        Ok(SmoothedHinge { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    #[inline]
    pub fn region(&self, t: f64) -> HingeRegion {
        if t >= 1.0 {
            HingeRegion::Inactive
        } else if t > 1.0 - 2.0 * self.delta {
            HingeRegion::Quadratic
        } else {
            HingeRegion::Linear
        }
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self.region(t) {
            HingeRegion::Inactive => 0.0,
            HingeRegion::Quadratic => (1.0 - t) * (1.0 - t) / (4.0 * self.delta),
            HingeRegion::Linear => 1.0 - t - self.delta,
        }
    }

    /// Derivative; at `delta = 0` the subgradient element -1 (t < 1) or 0.
    #[inline]
    pub fn derivative(&self, t: f64) -> f64 {
        match self.region(t) {
            HingeRegion::Inactive => 0.0,
            // clamped so rounding never pushes the slope below -1
            HingeRegion::Quadratic => ((t - 1.0) / (2.0 * self.delta)).max(-1.0),
            HingeRegion::Linear => -1.0,
        }
    }
}

pub fn huber(t: f64, epsilon: f64) -> Result<f64> {
    Ok(Huber::new(epsilon)?.value(t))
}

pub fn huber_prime(t: f64, epsilon: f64) -> Result<f64> {
    Ok(Huber::new(epsilon)?.derivative(t))
}

pub fn smoothed_hinge(t: f64, delta: f64) -> Result<f64> {
    Ok(SmoothedHinge::new(delta)?.value(t))
}

pub fn smoothed_hinge_prime(t: f64, delta: f64) -> Result<f64> {
    Ok(SmoothedHinge::new(delta)?.derivative(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hinge(t: f64) -> f64 {
        (1.0 - t).max(0.0)
    }

    #[test]
    fn huber_examples() {
        assert_eq!(huber(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(huber(2.0, 1.0).unwrap(), 1.5);
        assert_eq!(huber(0.5, 1.0).unwrap(), 0.125);
        assert_eq!(huber(-2.0, 1.0).unwrap(), 1.5);
    }

    #[test]
    fn huber_prime_examples() {
        assert_eq!(huber_prime(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(huber_prime(3.0, 0.5).unwrap(), 1.0);
        assert_eq!(huber_prime(-0.25, 1.0).unwrap(), -0.25);
        assert_eq!(huber_prime(-3.0, 0.5).unwrap(), -1.0);
    }

    #[test]
    fn huber_rejects_nonpositive_width() {
        assert!(huber(1.0, 0.0).is_err());
        assert!(huber(1.0, -1.0).is_err());
        assert!(huber_prime(1.0, f64::NAN).is_err());
    }

    #[test]
    fn smoothed_hinge_examples() {
        let r = smoothed_hinge(-0.5, 0.5).unwrap() / smoothed_hinge(0.5, 0.5).unwrap();
        assert_eq!(r, 8.0);
        assert_eq!(smoothed_hinge(1.7, 0.5).unwrap(), 0.0);
        assert_eq!(smoothed_hinge(0.0, 0.5).unwrap(), 0.5);
        let pure = smoothed_hinge(-0.5, 0.0).unwrap() / smoothed_hinge(0.5, 0.0).unwrap();
        assert_eq!(pure, 3.0);
    }

    #[test]
    fn smoothed_hinge_prime_examples() {
        assert_eq!(smoothed_hinge_prime(1.0, 0.5).unwrap(), 0.0);
        assert_eq!(smoothed_hinge_prime(0.0, 0.5).unwrap(), -1.0);
        assert_eq!(smoothed_hinge_prime(0.5, 0.5).unwrap(), -0.5);
    }

    #[test]
    fn exact_hinge_at_zero_delta() {
        for &t in &[-3.0, -0.5, 0.0, 0.5, 0.999, 1.0, 2.0] {
            assert_eq!(smoothed_hinge(t, 0.0).unwrap(), hinge(t));
        }
        assert_eq!(smoothed_hinge_prime(0.999, 0.0).unwrap(), -1.0);
        assert_eq!(smoothed_hinge_prime(1.0, 0.0).unwrap(), 0.0);
        assert!(smoothed_hinge(0.0, -0.1).is_err());
    }

    #[test]
    fn branches_agree_at_boundaries() {
        for &delta in &[0.1, 0.5, 1.0] {
            let h = SmoothedHinge::new(delta).unwrap();
            let lo = 1.0 - 2.0 * delta;
            // quadratic formula evaluated at the linear/quadratic boundary
            let quad_at_lo = (1.0 - lo) * (1.0 - lo) / (4.0 * delta);
            assert!((quad_at_lo - (1.0 - lo - delta)).abs() < 1e-15);
            assert_eq!(h.region(lo), HingeRegion::Linear);
            assert_eq!(h.region(lo.next_up()), HingeRegion::Quadratic);
            assert_eq!(h.derivative(lo), -1.0);
            assert!((h.derivative(lo.next_up()) + 1.0).abs() <= 1e-15);
            assert_eq!(h.derivative(lo - f64::EPSILON), -1.0);
            assert_eq!(h.derivative(1.0), 0.0);
            assert!(h.derivative(f64::from_bits(1f64.to_bits() - 1)).abs() < 1e-15);
        }
        for &eps in &[0.3, 1.0, 2.5] {
            let h = Huber::new(eps).unwrap();
            assert_eq!(h.derivative(eps), 1.0);
            assert_eq!(h.derivative(-eps), -1.0);
            assert!((h.value(eps) - (eps - eps / 2.0)).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn convex_chords(
            t1 in -10.0f64..10.0, t2 in -10.0f64..10.0, a in 0.0f64..=1.0,
            eps in 0.05f64..5.0, delta in 0.0f64..2.0,
        ) {
            let hub = Huber::new(eps).unwrap();
            let sh = SmoothedHinge::new(delta).unwrap();
            let m = a * t1 + (1.0 - a) * t2;
            prop_assert!(hub.value(m) <= a * hub.value(t1) + (1.0 - a) * hub.value(t2) + 1e-12);
            prop_assert!(sh.value(m) <= a * sh.value(t1) + (1.0 - a) * sh.value(t2) + 1e-12);
        }

        #[test]
        fn hinge_within_delta(t in -10.0f64..10.0, delta in 0.0f64..2.0) {
            let sh = SmoothedHinge::new(delta).unwrap();
            prop_assert!((sh.value(t) - hinge(t)).abs() <= delta + 1e-15);
        }

        #[test]
        fn huber_sandwich(t in -10.0f64..10.0, eps in 0.05f64..5.0) {
            let h = Huber::new(eps).unwrap();
            prop_assert!(h.value(t) <= t.abs());
            if t.abs() <= eps {
                prop_assert_eq!(h.value(t), t * t / (2.0 * eps));
            }
        }

        #[test]
        fn derivatives_match_central_differences(
            t in -5.0f64..5.0, eps in 0.1f64..3.0, delta in 0.05f64..1.5,
        ) {
            let step = 1e-6;
            let h = Huber::new(eps).unwrap();
            if (t.abs() - eps).abs() > 1e-3 {
                let fd = (h.value(t + step) - h.value(t - step)) / (2.0 * step);
                prop_assert!((fd - h.derivative(t)).abs() <= 1e-6);
            }
            let s = SmoothedHinge::new(delta).unwrap();
            if (t - 1.0).abs() > 1e-3 && (t - (1.0 - 2.0 * delta)).abs() > 1e-3 {
                let fd = (s.value(t + step) - s.value(t - step)) / (2.0 * step);
                prop_assert!((fd - s.derivative(t)).abs() <= 1e-6);
            }
        }
    }
}
