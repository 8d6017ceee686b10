use serde::{Deserialize, Serialize};

use crate::dataset::DataSetZ;
use crate::error::{Error, Result};
use crate::plant::{CurrentPair, ForceVector};
use crate::transform::{FixedCommutation, MagnitudePhaseCommand};

/// One identification record with the star-reduced currents that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub y: f64,
    pub i: CurrentPair,
    pub force: ForceVector,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
}

impl TrainingSet {
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    /// Joins the two data sets of one coil set. Currents are reconstructed
    /// from `(F_y*, delta)` through the fixed commutation used while recording.
    pub fn from_datasets(z1: &DataSetZ, z2: &DataSetZ, fixed: &FixedCommutation) -> Result<Self> {
        if z1.coil != z2.coil {
            return Err(Error::invalid(format!(
                "data sets belong to different coil sets ({} and {})",
                z1.coil, z2.coil
            )));
        }
        if z1.is_empty() || z2.is_empty() {
            return Err(Error::invalid("identification data sets must not be empty"));
        }
        let samples = [z1, z2]
            .into_iter()
            .flat_map(|z| {
                z.records.iter().map(move |r| Sample {
                    y: r.y,
                    i: fixed.to_currents(MagnitudePhaseCommand::new(r.fy_star, z.delta), r.y),
                    force: r.force,
                })
            })
            .collect();
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Smallest and largest position in the data.
    pub fn position_range(&self) -> Option<(f64, f64)> {
        let mut it = self.samples.iter().map(|s| s.y);
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), y| (lo.min(y), hi.max(y))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ZRecord;

    #[test]
    fn currents_follow_offset_commutation() {
        let fixed = FixedCommutation {
            k_hat: 60.0,
            zeta_hat: 0.0,
            pole_pitch: 0.024,
        };
        let rec = ZRecord {
            y: 0.0,
            force: ForceVector::ZERO,
            fy_star: 60.0,
        };
        let z1 = DataSetZ {
            coil: 0,
            delta: std::f64::consts::FRAC_PI_2,
            records: vec![rec],
        };
        let z2 = DataSetZ {
            coil: 0,
            delta: 0.0,
            records: vec![rec, rec],
        };
        let set = TrainingSet::from_datasets(&z1, &z2, &fixed).unwrap();
        assert_eq!(set.len(), 3);
        assert!((set.samples[0].i.a - 1.0).abs() < 1e-12);
        assert!((set.samples[0].i.b + 0.5).abs() < 1e-12);
        assert!(set.samples[1].i.a.abs() < 1e-12);

        let other = DataSetZ {
            coil: 1,
            ..z2.clone()
        };
        assert!(TrainingSet::from_datasets(&z1, &other, &fixed).is_err());
        let empty = DataSetZ {
            records: vec![],
            ..z2
        };
        assert!(TrainingSet::from_datasets(&z1, &empty, &fixed).is_err());
    }
}
