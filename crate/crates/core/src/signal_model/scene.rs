//! Rotating two-sphere bistatic scene with analytic ground truth.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PathParams, RadarGrid};
use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Two point scatterers on a beam rotating about the vertical axis through
/// `turntable_center`, observed by a transmitter and a receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub tx_pos: Vec3,
    pub rx_pos: Vec3,
    pub turntable_center: Vec3,
    /// Distance of each sphere from the rotation axis (m).
    pub sphere_radii: [f64; 2],
    /// Beam angle of each sphere at `t = 0` (rad).
    pub initial_phases: [f64; 2],
    /// Angular rate (rad/s).
    pub rotation_rate: f64,
    /// Carrier wavelength (m).
    pub wavelength: f64,
    /// LOS amplitude relative to a unit sphere path (dB).
    pub los_gain_db: f64,
    pub static_clutter: Vec<PathParams>,
    /// Noise standard deviation per complex sample.
    pub noise_std: f64,
}

/// Delay (s) and Doppler (Hz) of one sphere at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereTruth {
    pub delay: f64,
    pub doppler: f64,
}

/// Ground truth for a sequence of frames, two spheres each.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    pub frames: Vec<[SphereTruth; 2]>,
}

impl Default for Scene {
    /// Antennas 3 m from the axis at a 20 degree bistatic angle, spheres at
    /// 0.5 m and 0.35 m on opposite ends of the beam, 4 rev/s, 5.9 GHz carrier.
    fn default() -> Self {
        let delta = 20f64.to_radians();
        Self {
            tx_pos: [3.0, 0.0, 0.0],
            rx_pos: [3.0 * delta.cos(), 3.0 * delta.sin(), 0.0],
            turntable_center: [0.0, 0.0, 0.0],
            sphere_radii: [0.5, 0.35],
            initial_phases: [0.0, PI],
            rotation_rate: 8.0 * PI,
            wavelength: SPEED_OF_LIGHT / 5.9e9,
            los_gain_db: 0.0,
            static_clutter: Vec::new(),
            noise_std: 0.1,
        }
    }
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        let finite = |v: &Vec3| v.iter().all(|x| x.is_finite());
        if !(finite(&self.tx_pos) && finite(&self.rx_pos) && finite(&self.turntable_center)) {
            return Err(Error::Validation("scene positions must be finite".into()));
        }
        if !self.rotation_rate.is_finite() {
            return Err(Error::Validation("rotation rate must be finite".into()));
        }
        if !(self.wavelength.is_finite() && self.wavelength > 0.0) {
            return Err(Error::Validation(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        let [r1, r2] = self.sphere_radii;
        if !(r1.is_finite() && r2.is_finite() && r1 > 0.0 && r2 > 0.0) {
            return Err(Error::Validation(
                "sphere mount distances must be positive".into(),
            ));
        }
        if r1 == r2 {
            return Err(Error::Validation(
                "sphere mount distances must differ".into(),
            ));
        }
        if !self.initial_phases.iter().all(|p| p.is_finite()) || !self.los_gain_db.is_finite() {
            return Err(Error::Validation(
                "scene angles and gains must be finite".into(),
            ));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Validation(format!(
                "noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    /// Angle TX - center - RX in the horizontal plane, degrees in [0, 360).
    pub fn bistatic_angle_deg(&self) -> f64 {
        let a = sub(self.tx_pos, self.turntable_center);
        let b = sub(self.rx_pos, self.turntable_center);
        let ang = (b[1].atan2(b[0]) - a[1].atan2(a[0])).to_degrees();
        let wrapped = ang.rem_euclid(360.0);
        if wrapped >= 360.0 {
            0.0
        } else {
            wrapped
        }
    }

    /// Copy of the scene with the receiver rotated about the turntable axis so
    /// that the bistatic angle equals `delta_deg`. Receiver range and height
    /// are kept.
    pub fn with_bistatic_angle(&self, delta_deg: f64) -> Scene {
        let a = sub(self.tx_pos, self.turntable_center);
        let b = sub(self.rx_pos, self.turntable_center);
        let rx_range = (b[0] * b[0] + b[1] * b[1]).sqrt();
        let theta = a[1].atan2(a[0]) + delta_deg.to_radians();
        let c = self.turntable_center;
        Scene {
            rx_pos: [
                c[0] + rx_range * theta.cos(),
                c[1] + rx_range * theta.sin(),
                self.rx_pos[2],
            ],
            ..self.clone()
        }
    }

    /// Positions of both spheres at time `t`.
    pub fn sphere_positions(&self, t: f64) -> [Vec3; 2] {
        let c = self.turntable_center;
        std::array::from_fn(|i| {
            let phi = self.rotation_rate * t + self.initial_phases[i];
            let r = self.sphere_radii[i];
            [c[0] + r * phi.cos(), c[1] + r * phi.sin(), c[2]]
        })
    }

    fn sphere_velocities(&self, t: f64) -> [Vec3; 2] {
        std::array::from_fn(|i| {
            let phi = self.rotation_rate * t + self.initial_phases[i];
            let v = self.sphere_radii[i] * self.rotation_rate;
            [-v * phi.sin(), v * phi.cos(), 0.0]
        })
    }

    /// Bistatic delay and Doppler of both spheres at time `t`.
    ///
    /// Delay is the TX-sphere-RX path length over `c`; Doppler is the negative
    /// time derivative of that path length divided by the wavelength.
    pub fn ground_truth(&self, t: f64) -> Result<[SphereTruth; 2]> {
        let pos = self.sphere_positions(t);
        let vel = self.sphere_velocities(t);
        let mut out = [SphereTruth {
            delay: 0.0,
            doppler: 0.0,
        }; 2];
        for i in 0..2 {
            let to_tx = sub(pos[i], self.tx_pos);
            let to_rx = sub(pos[i], self.rx_pos);
            let (d_tx, d_rx) = (norm(to_tx), norm(to_rx));
            if d_tx < 1e-9 || d_rx < 1e-9 {
                return Err(Error::DegenerateGeometry(format!(
                    "sphere {i} coincides with the {} at t={t}",
                    if d_tx < 1e-9 {
                        "transmitter"
                    } else {
                        "receiver"
                    }
                )));
            }
            let rate = dot(to_tx, vel[i]) / d_tx + dot(to_rx, vel[i]) / d_rx;
            out[i] = SphereTruth {
                delay: (d_tx + d_rx) / SPEED_OF_LIGHT,
                doppler: -rate / self.wavelength,
            };
        }
        Ok(out)
    }

    /// LOS delay `|tx - rx| / c`.
    pub fn los_delay(&self) -> f64 {
        norm(sub(self.tx_pos, self.rx_pos)) / SPEED_OF_LIGHT
    }

    /// All paths present at time `t`: LOS, static clutter, then the two
    /// spheres. Path phases come from `seed`.
    pub fn scene_paths(&self, t: f64, grid: &RadarGrid, seed: u64) -> Result<Vec<PathParams>> {
        let truth = self.ground_truth(t)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut phase = || Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI));

        let los = PathParams::new(
            phase() * 10f64.powf(self.los_gain_db / 20.0),
            self.los_delay(),
            0.0,
        );
        los.validate(grid).map_err(|e| match e {
            Error::Range { reason, .. } => Error::Range {
                index: None,
                reason: format!("LOS path: {reason}"),
            },
            other => other,
        })?;

        let mut paths = Vec::with_capacity(3 + self.static_clutter.len());
        paths.push(los);
        for (i, c) in self.static_clutter.iter().enumerate() {
            c.validate(grid).map_err(|e| match e {
                Error::Range { reason, .. } => Error::Range {
                    index: None,
                    reason: format!("clutter path {i}: {reason}"),
                },
                other => other,
            })?;
            paths.push(*c);
        }
        for (i, s) in truth.iter().enumerate() {
            let p = PathParams::new(phase(), s.delay, s.doppler);
            p.validate_indexed(grid, Some(i))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Mid-time of frame `n` when frames are recorded back to back.
pub fn frame_mid_time(n: usize, grid: &RadarGrid) -> f64 {
    (n as f64 + 0.5) * grid.frame_duration()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(a: Vec3, b: Vec3) -> f64 {
        norm(sub(a, b))
    }

    #[test]
    fn default_scene_is_valid_at_twenty_degrees() {
        let s = Scene::default();
        s.validate().unwrap();
        assert!((s.bistatic_angle_deg() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn bistatic_angle_rotation_round_trips() {
        let s = Scene::default();
        for d in [0.0, 45.0, 179.0, 180.0, 270.5, 359.0] {
            let r = s.with_bistatic_angle(d);
            let got = r.bistatic_angle_deg();
            let diff = (got - d).rem_euclid(360.0);
            assert!(!(1e-9..=360.0 - 1e-9).contains(&diff), "{d} -> {got}");
            assert!((dist(r.rx_pos, r.turntable_center) - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_beam_keeps_positions() {
        let s = Scene {
            rotation_rate: 0.0,
            ..Scene::default()
        };
        let p0 = s.sphere_positions(0.0);
        let p1 = s.sphere_positions(12.3);
        assert_eq!(p0, p1);
        let gt = s.ground_truth(3.0).unwrap();
        assert_eq!(gt[0].doppler, 0.0);
        assert_eq!(gt[1].doppler, 0.0);
    }

    #[test]
    fn positions_are_periodic() {
        let s = Scene::default();
        let period = 2.0 * PI / s.rotation_rate;
        let (a, b) = (s.sphere_positions(0.0), s.sphere_positions(period));
        for i in 0..2 {
            assert!(dist(a[i], b[i]) < 1e-9);
        }
    }

    #[test]
    fn antipodal_phases_straddle_center() {
        let s = Scene {
            sphere_radii: [0.5, 0.5 + 1e-3],
            ..Scene::default()
        };
        for t in [0.0, 0.01, 0.123] {
            let [a, b] = s.sphere_positions(t);
            let c = s.turntable_center;
            let (u, v) = (sub(a, c), sub(b, c));
            let cos = dot(u, v) / (norm(u) * norm(v));
            assert!((cos + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn monostatic_delay_is_twice_range_over_c() {
        let s = Scene {
            tx_pos: [4.0, 0.0, 0.0],
            rx_pos: [4.0, 0.0, 0.0],
            rotation_rate: 0.0,
            ..Scene::default()
        };
        let pos = s.sphere_positions(0.0);
        let gt = s.ground_truth(0.0).unwrap();
        for i in 0..2 {
            let d = dist(pos[i], s.tx_pos);
            assert!((gt[i].delay - 2.0 * d / SPEED_OF_LIGHT).abs() < 1e-20);
        }
    }

    #[test]
    fn doppler_matches_finite_difference_of_delay() {
        let s = Scene::default();
        let h = 1e-6;
        let period = 2.0 * PI / s.rotation_rate;
        for step in 0..64 {
            let t = period * step as f64 / 64.0;
            let gt = s.ground_truth(t).unwrap();
            let fwd = s.ground_truth(t + h).unwrap();
            let bwd = s.ground_truth(t - h).unwrap();
            for i in 0..2 {
                let fd =
                    -(SPEED_OF_LIGHT / s.wavelength) * (fwd[i].delay - bwd[i].delay) / (2.0 * h);
                assert!(
                    (gt[i].doppler - fd).abs() < 1e-3,
                    "t={t} sphere {i}: {} vs {fd}",
                    gt[i].doppler
                );
            }
        }
    }

    #[test]
    fn ground_truth_is_periodic() {
        let s = Scene::default();
        let period = 2.0 * PI / s.rotation_rate;
        for t in [0.0, 0.03, 0.11] {
            let a = s.ground_truth(t).unwrap();
            let b = s.ground_truth(t + period).unwrap();
            for i in 0..2 {
                assert!((a[i].delay - b[i].delay).abs() < 1e-9);
                assert!((a[i].doppler - b[i].doppler).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sphere_on_antenna_is_degenerate() {
        let s = Scene {
            tx_pos: [0.5, 0.0, 0.0],
            ..Scene::default()
        };
        assert!(matches!(
            s.ground_truth(0.0),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn scene_paths_layout_and_gains() {
        let grid = RadarGrid::default_measurement();
        let s = Scene::default();
        let paths = s.scene_paths(0.01, &grid, 5).unwrap();
        assert_eq!(paths.len(), 3);
        assert!((paths[0].weight.norm() - 1.0).abs() < 1e-12);
        assert_eq!(paths[0].doppler, 0.0);
        assert!((paths[0].delay - s.los_delay()).abs() < 1e-24);
        assert!((paths[1].weight.norm() - 1.0).abs() < 1e-12);

        let loud = Scene {
            los_gain_db: 40.0,
            ..Scene::default()
        };
        let p = loud.scene_paths(0.01, &grid, 5).unwrap();
        assert!((p[0].weight.norm() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn scene_paths_reuse_ground_truth_bit_exactly() {
        let grid = RadarGrid::default_measurement();
        let s = Scene::default();
        let t = 0.0417;
        let gt = s.ground_truth(t).unwrap();
        let paths = s.scene_paths(t, &grid, 77).unwrap();
        for i in 0..2 {
            assert_eq!(paths[1 + i].delay, gt[i].delay);
            assert_eq!(paths[1 + i].doppler, gt[i].doppler);
        }
        assert_eq!(paths, s.scene_paths(t, &grid, 77).unwrap());
    }

    #[test]
    fn out_of_range_sphere_reports_index() {
        // 1.6 kHz Doppler limit with these spacings; a fast beam exceeds it.
        let grid = RadarGrid::new(64, 16, 1e6, 3e-4).unwrap();
        let s = Scene {
            rotation_rate: 200.0,
            ..Scene::default()
        };
        let err = (0..200)
            .map(|i| s.scene_paths(i as f64 * 1e-3, &grid, 0))
            .find_map(|r| r.err())
            .expect("some instant must be out of range");
        assert!(
            matches!(err, Error::Range { index: Some(_), .. }),
            "{err:?}"
        );
    }
}
