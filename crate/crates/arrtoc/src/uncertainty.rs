//! Ellipsoidal implementation-error sets.
//!
//! A set is described by per-axis radii `Γᵢ` and contains every `Δx` with
//! `Σ (Δxᵢ/Γᵢ)² ≤ 1`. Everything downstream works in the scaled coordinates
//! `wᵢ = Δxᵢ/Γᵢ`, where the set is the unit ball.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const BOUNDARY_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySet {
    radii: Vec<f64>,
}

impl UncertaintySet {
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(Error::InvalidParameter {
                name: "radius",
                reason: format!("{r} is not a positive finite number"),
            });
        }
        Ok(Self { radii })
    }

    pub fn sphere(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(vec![gamma; dim])
    }

    pub fn dim(&self) -> usize {
        self.radii.len()
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Same shape with every radius multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.radii.iter().map(|r| r * factor).collect())
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.radii.len() {
            return Err(Error::DimensionMismatch { expected: self.radii.len(), got: v.len() });
        }
        Ok(())
    }

    /// `Σ (Δxᵢ/Γᵢ)²`.
    pub fn quadratic_form(&self, delta: &[f64]) -> Result<f64> {
        self.check(delta)?;
        Ok(delta.iter().zip(&self.radii).map(|(d, r)| (d / r).powi(2)).sum())
    }

    pub fn contains(&self, delta: &[f64]) -> Result<bool> {
        Ok(self.quadratic_form(delta)? <= 1.0 + BOUNDARY_RTOL)
    }

    /// Membership excluding the boundary shell of relative width 1e-9.
    pub fn strictly_contains(&self, delta: &[f64]) -> Result<bool> {
        Ok(self.quadratic_form(delta)? < 1.0 - BOUNDARY_RTOL)
    }

    pub fn to_unit_ball(&self, delta: &[f64]) -> Result<Vec<f64>> {
        self.check(delta)?;
        Ok(delta.iter().zip(&self.radii).map(|(d, r)| d / r).collect())
    }

    pub fn from_unit_ball(&self, w: &[f64]) -> Result<Vec<f64>> {
        self.check(w)?;
        Ok(w.iter().zip(&self.radii).map(|(w, r)| w * r).collect())
    }

    pub fn neighbourhood_contains(&self, center: &[f64], candidate: &[f64]) -> Result<bool> {
        self.check(center)?;
        self.check(candidate)?;
        let delta: Vec<f64> = candidate.iter().zip(center).map(|(c, x)| c - x).collect();
        self.contains(&delta)
    }

    /// Scaled offset of `candidate` from `center`.
    pub fn scaled_offset(&self, center: &[f64], candidate: &[f64]) -> Result<Vec<f64>> {
        self.check(center)?;
        self.check(candidate)?;
        Ok(candidate
            .iter()
            .zip(center)
            .zip(&self.radii)
            .map(|((c, x), r)| (c - x) / r)
            .collect())
    }

    /// Point reached from `center` by the scaled offset `w`.
    pub fn offset_point(&self, center: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        self.check(center)?;
        self.check(w)?;
        Ok(center.iter().zip(w).zip(&self.radii).map(|((x, w), r)| x + w * r).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(r: &[f64]) -> UncertaintySet {
        UncertaintySet::new(r.to_vec()).unwrap()
    }

    #[test]
    fn membership_examples() {
        let s = set(&[0.3, 0.3]);
        assert!(s.contains(&[0.0, 0.0]).unwrap());
        assert!(!s.contains(&[0.3, 0.001]).unwrap());
        assert!(set(&[0.4, 0.15]).contains(&[0.4, 0.0]).unwrap());
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(set(&[0.4, 0.15]).to_unit_ball(&[0.4, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(set(&[2.0, 2.0]).to_unit_ball(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(set(&[0.4, 0.15]).from_unit_ball(&[1.0, 0.0]).unwrap(), vec![0.4, 0.0]);
        assert_eq!(set(&[1.0, 1.0]).from_unit_ball(&[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
    }

    #[test]
    fn neighbourhood_examples() {
        let s = set(&[0.3, 0.3]);
        assert!(s.neighbourhood_contains(&[0.0, 0.0], &[0.2, 0.2]).unwrap());
        assert!(s.neighbourhood_contains(&[1.5, -2.0], &[1.5, -2.0]).unwrap());
        assert!(!s.neighbourhood_contains(&[0.0, 0.0], &[0.31, 0.0]).unwrap());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(UncertaintySet::new(vec![0.3, 0.0]).is_err());
        assert!(UncertaintySet::new(vec![f64::NAN]).is_err());
        assert!(UncertaintySet::new(vec![]).is_err());
        assert_eq!(
            set(&[1.0, 1.0]).contains(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        );
    }

    fn radii_and_delta() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (1usize..5).prop_flat_map(|n| {
            (
                proptest::collection::vec(0.01f64..10.0, n),
                proptest::collection::vec(-10.0f64..10.0, n),
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip((r, d) in radii_and_delta()) {
            let s = set(&r);
            let back = s.from_unit_ball(&s.to_unit_ball(&d).unwrap()).unwrap();
            for (a, b) in back.iter().zip(&d) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn scaling_conjugacy((r, d) in radii_and_delta()) {
            let s = set(&r);
            let w = s.to_unit_ball(&d).unwrap();
            let n2: f64 = w.iter().map(|x| x * x).sum();
            prop_assert_eq!(s.contains(&d).unwrap(), n2 <= 1.0 + 1e-9);
        }

        #[test]
        fn symmetric((r, d) in radii_and_delta()) {
            let s = set(&r);
            let neg: Vec<f64> = d.iter().map(|x| -x).collect();
            prop_assert_eq!(s.contains(&d).unwrap(), s.contains(&neg).unwrap());
        }

        #[test]
        fn sphere_reduction(g in 0.01f64..5.0, d in proptest::collection::vec(-5.0f64..5.0, 3)) {
            let s = UncertaintySet::sphere(3, g).unwrap();
            let n = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - g).abs() > 1e-6 * g {
                prop_assert_eq!(s.contains(&d).unwrap(), n <= g);
            }
        }
    }
}
