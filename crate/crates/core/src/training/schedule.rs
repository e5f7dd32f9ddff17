use super::TrainError;
use crate::dataset::SampleStore;

pub const DEFAULT_RAMP_EPOCHS: u32 = 200;
pub const DEFAULT_S_MIN: f64 = 1e-3;

/// Linear ramp of the unoccupied-voxel weight from `s0` up to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceSchedule {
    pub s0: f64,
    pub ramp_epochs: u32,
    pub s_min: f64,
}

impl ImbalanceSchedule {
    pub fn new(s0: f64, ramp_epochs: u32, s_min: f64) -> Result<Self, TrainError> {
        if !(s_min > 0.0 && s_min <= 1.0) {
            return Err(TrainError::Config(format!("s_min must lie in (0, 1], got {s_min}")));
        }
        if !s0.is_finite() || s0 <= 0.0 {
            return Err(TrainError::Config(format!("s0 must be positive, got {s0}")));
        }
        Ok(Self {
            s0: s0.max(s_min),
            ramp_epochs,
            s_min,
        })
    }

    /// `s0 + (1 - s0) * min(1, e / ramp)`. A zero-length ramp is 1 everywhere.
    pub fn weight_at(&self, epoch: u32) -> f64 {
        if self.ramp_epochs == 0 {
            return 1.0;
        }
        let t = (epoch as f64 / self.ramp_epochs as f64).min(1.0);
        if t >= 1.0 {
            1.0
        } else {
            self.s0 + (1.0 - self.s0) * t
        }
    }
}

/// Pooled occupied / unoccupied count, clamped below by `s_min`.
pub fn ratio_from_counts(occupied: u64, unoccupied: u64, s_min: f64) -> f64 {
    if unoccupied == 0 {
        return 1.0;
    }
    (occupied as f64 / unoccupied as f64).max(s_min)
}

pub fn occupancy_ratio(store: &SampleStore, s_min: f64) -> Result<f64, TrainError> {
    if store.is_empty() {
        return Err(TrainError::Argument("empty store".into()));
    }
    let (occ, unocc) = store.occupancy_counts();
    Ok(ratio_from_counts(occ, unocc, s_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DepthMap, VoxelGrid};
    use crate::dataset::Sample;

    fn store_with(occupied: &[usize]) -> SampleStore {
        let records = occupied
            .iter()
            .map(|&n| {
                let mut occ = vec![false; 27000];
                occ[..n].iter_mut().for_each(|o| *o = true);
                Sample {
                    depth: DepthMap::from_values(8, 8, vec![1.0; 64]).unwrap(),
                    target: VoxelGrid::from_occupancy(30, occ).unwrap(),
                    class_id: 0,
                    view_index: 0,
                }
            })
            .collect();
        SampleStore {
            resolution: 30,
            depth_width: 8,
            depth_height: 8,
            n_views: 1,
            n_classes: 1,
            flags: 0,
            seed: 0,
            records,
        }
    }

    #[test]
    fn ratio_examples() {
        let r = occupancy_ratio(&store_with(&[2700]), DEFAULT_S_MIN).unwrap();
        assert!((r - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(occupancy_ratio(&store_with(&[0, 0]), 0.01).unwrap(), 0.01);
        let r = occupancy_ratio(&store_with(&[100, 300]), DEFAULT_S_MIN).unwrap();
        assert_eq!(r, 400.0 / 53600.0);
        assert!(matches!(
            occupancy_ratio(&store_with(&[]), DEFAULT_S_MIN),
            Err(TrainError::Argument(_))
        ));
    }

    #[test]
    fn ramp_points() {
        let s = ImbalanceSchedule::new(0.2, 200, DEFAULT_S_MIN).unwrap();
        assert_eq!(s.weight_at(0), 0.2);
        assert_eq!(s.weight_at(200), 1.0);
        assert_eq!(s.weight_at(5000), 1.0);
        assert!((s.weight_at(100) - 0.6).abs() < 1e-15);
        assert_eq!(ImbalanceSchedule::new(0.2, 0, 0.01).unwrap().weight_at(0), 1.0);
        assert!(ImbalanceSchedule::new(0.2, 10, 0.0).is_err());
    }
}
