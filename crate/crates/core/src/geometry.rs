//! Master/slave layout and loiter motion.
//!
//! The ground station sits at the origin and the master hovers straight above
//! it. Slave formation points lie on a regular hexagon around the master in the
//! master's horizontal plane; each slave circles its formation point.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = [f64; 3];

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("slave index {index} out of range for {n} slaves")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("angular separation requires distinct slaves (got {0} twice)")]
    SameSlave(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formation {
    pub n_slaves: usize,
    pub master_pos: Vec3,
    pub hex_radius: f64,
    pub loiter_radius: f64,
    /// rad/s
    pub loiter_angular_rate: f64,
    pub phase_offsets: Vec<f64>,
}

impl Formation {
    /// Hexagonal formation with the master at `altitude` and phases staggered
    /// by `2 pi / n`.
    pub fn hexagonal(n_slaves: usize, altitude: f64, hex_radius: f64, loiter_radius: f64, rate: f64) -> Self {
        let phase_offsets = (0..n_slaves).map(|i| std::f64::consts::TAU * i as f64 / n_slaves.max(1) as f64).collect();
        Self {
            n_slaves,
            master_pos: [0.0, 0.0, altitude],
            hex_radius,
            loiter_radius,
            loiter_angular_rate: rate,
            phase_offsets,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_slaves == 0 || self.n_slaves > 6 {
            return Err(format!("n_slaves must be in 1..=6 (got {})", self.n_slaves));
        }
        if self.phase_offsets.len() != self.n_slaves {
            return Err("phase_offsets length must equal n_slaves".into());
        }
        if self.hex_radius.is_nan() || self.hex_radius <= 0.0 || self.loiter_radius.is_nan() || self.loiter_radius < 0.0
        {
            return Err("hex_radius must be > 0 and loiter_radius >= 0".into());
        }
        if self.loiter_radius >= self.hex_radius {
            return Err(format!(
                "loiter_radius {} must be below hex_radius {} to keep ranges positive",
                self.loiter_radius, self.hex_radius
            ));
        }
        if !self.loiter_angular_rate.is_finite() {
            return Err("loiter_angular_rate must be finite".into());
        }
        Ok(())
    }

    /// Loiter period in seconds; infinite when the slaves hold still.
    pub fn loiter_period(&self) -> f64 {
        if self.loiter_angular_rate == 0.0 {
            f64::INFINITY
        } else {
            std::f64::consts::TAU / self.loiter_angular_rate.abs()
        }
    }

    /// Peak slave speed in m/s.
    pub fn slave_speed(&self) -> f64 {
        self.loiter_radius * self.loiter_angular_rate.abs()
    }

    pub fn formation_point(&self, i: usize) -> Result<Vec3, GeometryError> {
        self.check(i)?;
        let a = std::f64::consts::FRAC_PI_3 * i as f64;
        let m = self.master_pos;
        Ok([m[0] + self.hex_radius * a.cos(), m[1] + self.hex_radius * a.sin(), m[2]])
    }

    pub fn slave_position(&self, i: usize, t: f64) -> Result<Vec3, GeometryError> {
        let p = self.formation_point(i)?;
        let phase = self.phase_offsets[i] + self.loiter_angular_rate * t;
        Ok([p[0] + self.loiter_radius * phase.cos(), p[1] + self.loiter_radius * phase.sin(), p[2]])
    }

    pub fn range_to_master(&self, i: usize, t: f64) -> Result<f64, GeometryError> {
        Ok(norm(sub(self.slave_position(i, t)?, self.master_pos)))
    }

    /// Angle at the master between the lines of sight to slaves `i` and `j`.
    pub fn angular_separation(&self, i: usize, j: usize, t: f64) -> Result<f64, GeometryError> {
        if i == j {
            self.check(i)?;
            return Err(GeometryError::SameSlave(i));
        }
        let a = sub(self.slave_position(i, t)?, self.master_pos);
        let b = sub(self.slave_position(j, t)?, self.master_pos);
        Ok(angle_between(a, b))
    }

    /// Ranges and line-of-sight unit vectors for all slaves at time `t`.
    pub fn snapshot(&self, t: f64) -> GeometrySnapshot {
        let mut ranges = Vec::with_capacity(self.n_slaves);
        let mut los = Vec::with_capacity(self.n_slaves);
        for i in 0..self.n_slaves {
            let v = sub(self.slave_position(i, t).expect("index in range"), self.master_pos);
            ranges.push(norm(v));
            los.push(v);
        }
        GeometrySnapshot { ranges, los }
    }

    fn check(&self, i: usize) -> Result<(), GeometryError> {
        if i >= self.n_slaves {
            Err(GeometryError::IndexOutOfRange { index: i, n: self.n_slaves })
        } else {
            Ok(())
        }
    }
}

/// Geometry frozen at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySnapshot {
    pub ranges: Vec<f64>,
    los: Vec<Vec3>,
}

impl GeometrySnapshot {
    /// Angle in radians; zero for `i == j`.
    pub fn angle(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            angle_between(self.los[i], self.los[j])
        }
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(a: Vec3) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// `atan2(|a x b|, a . b)`, accurate near 0 and pi.
fn angle_between(a: Vec3, b: Vec3) -> f64 {
    let c = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
    let d = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    norm(c).atan2(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn still() -> Formation {
        Formation::hexagonal(6, 500.0, 250.0, 0.0, 0.1)
    }

    fn table() -> Formation {
        Formation::hexagonal(6, 500.0, 250.0, 150.0, 0.1)
    }

    #[test]
    fn no_loiter_is_static() {
        let f = still();
        for t in [0.0, 1.0, 37.5] {
            assert_eq!(f.slave_position(2, t).unwrap(), f.formation_point(2).unwrap());
            assert_abs_diff_eq!(f.range_to_master(2, t).unwrap(), 250.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn loiter_is_periodic() {
        let f = table();
        let p = f.loiter_period();
        let a = f.slave_position(3, 4.2).unwrap();
        let b = f.slave_position(3, 4.2 + p).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(a[k], b[k], epsilon = 1e-9);
        }
    }

    #[test]
    fn hexagon_angles() {
        let f = still();
        assert_abs_diff_eq!(f.angular_separation(0, 1, 0.0).unwrap().to_degrees(), 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.angular_separation(0, 2, 0.0).unwrap().to_degrees(), 120.0, epsilon = 1e-9);
        assert_abs_diff_eq!(f.angular_separation(0, 3, 0.0).unwrap().to_degrees(), 180.0, epsilon = 1e-9);
    }

    #[test]
    fn index_errors() {
        let f = still();
        assert_eq!(f.slave_position(6, 0.0), Err(GeometryError::IndexOutOfRange { index: 6, n: 6 }));
        assert_eq!(f.angular_separation(1, 1, 0.0), Err(GeometryError::SameSlave(1)));
    }

    #[test]
    fn range_bounds_over_a_period() {
        let f = table();
        let p = f.loiter_period();
        for i in 0..6 {
            for k in 0..1000 {
                let z = f.range_to_master(i, p * k as f64 / 1000.0).unwrap();
                assert!((100.0 - 1e-9..=400.0 + 1e-9).contains(&z), "{z}");
            }
        }
    }

    #[test]
    fn range_speed_bound() {
        let f = table();
        let dt = 0.01041;
        let v = f.slave_speed();
        for k in 0..5000 {
            let t = k as f64 * dt;
            let dz = (f.range_to_master(1, t + dt).unwrap() - f.range_to_master(1, t).unwrap()).abs();
            assert!(dz <= v * dt + 1e-9);
        }
    }

    #[test]
    fn snapshot_matches_pointwise() {
        let f = table();
        let s = f.snapshot(12.3);
        for i in 0..6 {
            assert_abs_diff_eq!(s.ranges[i], f.range_to_master(i, 12.3).unwrap(), epsilon = 1e-12);
            for j in 0..6 {
                let want = if i == j { 0.0 } else { f.angular_separation(i, j, 12.3).unwrap() };
                assert_abs_diff_eq!(s.angle(i, j), want, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn separation_symmetric_and_bounded(i in 0usize..6, j in 0usize..6, t in 0.0f64..200.0) {
            prop_assume!(i != j);
            let f = table();
            let a = f.angular_separation(i, j, t).unwrap();
            let b = f.angular_separation(j, i, t).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=std::f64::consts::PI).contains(&a));
        }

        #[test]
        fn separation_continuous(t in 0.0f64..200.0) {
            let f = table();
            let a = f.angular_separation(0, 1, t).unwrap();
            let b = f.angular_separation(0, 1, t + 1e-3).unwrap();
            // angular speed of a slave seen from the master is at most v / Z_min
            prop_assert!((a - b).abs() <= 2.0 * f.slave_speed() / 100.0 * 1e-3 + 1e-12);
        }
    }
}
