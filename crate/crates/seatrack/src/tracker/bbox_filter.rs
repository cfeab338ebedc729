//! Constant-velocity Kalman filter over bounding-box center and size in
//! image space. State is `[cx, cy, w, h, vcx, vcy, vw, vh]` with one frame as
//! the time unit; noise scales with box height, the usual choice for image
//! trackers.

use crate::projection::BBox;
use nalgebra::{SMatrix, SVector};

type State = SVector<f64, 8>;
type Cov = SMatrix<f64, 8, 8>;

const STD_WEIGHT_POSITION: f64 = 1.0 / 20.0;
const STD_WEIGHT_VELOCITY: f64 = 1.0 / 160.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BboxFilter {
    mean: State,
    covariance: Cov,
}

impl BboxFilter {
    pub fn new(bbox: &BBox) -> Self {
        let mean = State::from_column_slice(&[
            bbox.center_x_px,
            bbox.center_y_px,
            bbox.width_px,
            bbox.height_px,
            0.0,
            0.0,
            0.0,
            0.0,
        ]);
        let h = bbox.height_px.max(1.0);
        let pos = 2.0 * STD_WEIGHT_POSITION * h;
        let vel = 10.0 * STD_WEIGHT_VELOCITY * h;
        let mut covariance = Cov::zeros();
        for i in 0..4 {
            covariance[(i, i)] = pos * pos;
            covariance[(i + 4, i + 4)] = vel * vel;
        }
        Self { mean, covariance }
    }

    /// Advances the state one frame under the constant-velocity model.
    pub fn predict(&mut self) {
        let mut motion = Cov::identity();
        for i in 0..4 {
            motion[(i, i + 4)] = 1.0;
        }
        let h = self.mean[3].max(1.0);
        let pos = STD_WEIGHT_POSITION * h;
        let vel = STD_WEIGHT_VELOCITY * h;
        let mut process = Cov::zeros();
        for i in 0..4 {
            process[(i, i)] = pos * pos;
            process[(i + 4, i + 4)] = vel * vel;
        }
        self.mean = motion * self.mean;
        self.covariance = motion * self.covariance * motion.transpose() + process;
        self.symmetrize();
    }

    /// Folds a measured box into the state.
    pub fn update(&mut self, bbox: &BBox) {
        let z = nalgebra::SVector::<f64, 4>::from_column_slice(&[
            bbox.center_x_px,
            bbox.center_y_px,
            bbox.width_px,
            bbox.height_px,
        ]);
        let obs = SMatrix::<f64, 4, 8>::identity();
        let h = self.mean[3].max(1.0);
        let r = STD_WEIGHT_POSITION * h;
        let noise = SMatrix::<f64, 4, 4>::identity() * (r * r);

        let innovation = z - obs * self.mean;
        let innovation_cov = obs * self.covariance * obs.transpose() + noise;
        let Some(inv) = innovation_cov.try_inverse() else {
            return;
        };
        let gain = self.covariance * obs.transpose() * inv;
        self.mean += gain * innovation;
        self.covariance = (Cov::identity() - gain * obs) * self.covariance;
        self.symmetrize();
        // Keep the size physically meaningful.
        self.mean[2] = self.mean[2].max(1.0);
        self.mean[3] = self.mean[3].max(1.0);
    }

    pub fn bbox(&self) -> BBox {
        BBox::new(self.mean[0], self.mean[1], self.mean[2].max(1.0), self.mean[3].max(1.0))
    }

    fn symmetrize(&mut self) {
        self.covariance = (self.covariance + self.covariance.transpose()) * 0.5;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prediction_converges_on_constant_velocity_truth() {
        // Box slides 3 px/frame in x, 1 px/frame in y at fixed size.
        let make = |k: f64| BBox::new(100.0 + 3.0 * k, 50.0 + k, 24.0, 16.0);
        let mut filter = BboxFilter::new(&make(0.0));
        let mut last_error = f64::INFINITY;
        for k in 1..=60 {
            filter.predict();
            let predicted = filter.bbox();
            let truth = make(k as f64);
            let err = (predicted.center_x_px - truth.center_x_px)
                .hypot(predicted.center_y_px - truth.center_y_px);
            if k > 10 {
                assert!(err <= last_error + 1e-6);
            }
            last_error = err;
            filter.update(&truth);
        }
        assert!(last_error < 0.05, "prediction error {last_error} px");
    }

    #[test]
    fn stationary_box_stays_put() {
        let b = BBox::new(320.0, 240.0, 30.0, 20.0);
        let mut filter = BboxFilter::new(&b);
        for _ in 0..20 {
            filter.predict();
            filter.update(&b);
        }
        let out = filter.bbox();
        assert!((out.center_x_px - 320.0).abs() < 1e-6);
        assert!((out.center_y_px - 240.0).abs() < 1e-6);
        assert!((out.width_px - 30.0).abs() < 1e-6);
    }
}
