//! Scene geometry: microphone arrays, shoebox rooms, source positions and
//! azimuth arithmetic.
//!
//! Azimuths are degrees in `[-180, 180)`, counterclockwise from `+x` in the
//! array plane. Elevation `phi` is measured from `+z`, so `phi = 90` is the
//! array plane.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3(pub [f64; 3]);

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3([x, y, z])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }

    pub fn y(&self) -> f64 {
        self.0[1]
    }

    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, other: &Vec3) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Vec3) -> f64 {
        (*self - *other).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Rotates about `+z` by `deg` degrees.
    pub fn rotate_z(&self, deg: f64) -> Vec3 {
        let (s, c) = deg.to_radians().sin_cos();
        Vec3::new(c * self.x() - s * self.y(), s * self.x() + c * self.y(), self.z())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        self * -1.0
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from(v: [f64; 3]) -> Self {
        Vec3(v)
    }
}

/// Sensor positions in meters, relative to the array center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    positions: Vec<Vec3>,
}

impl MicArray {
    pub fn new(positions: Vec<Vec3>) -> Result<Self> {
        if positions.len() < 2 {
            return Err(Error::Geometry(format!(
                "a microphone array needs at least 2 sensors, got {}",
                positions.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.is_finite()) {
            return Err(Error::Geometry(format!("microphone {i} has a non-finite position")));
        }
        Ok(Self { positions })
    }

    /// The 7-sensor UMA-8 layout: one center capsule and six on a 4 cm
    /// radius circle at 0°, 60°, ..., 300°.
    pub fn uma8() -> Self {
        let mut positions = vec![Vec3::ZERO];
        for k in 0..6 {
            let az = (60.0 * k as f64).to_radians();
            positions.push(Vec3::new(0.04 * az.cos(), 0.04 * az.sin(), 0.0));
        }
        Self { positions }
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest sensor distance from the array center.
    pub fn radius(&self) -> f64 {
        self.positions.iter().map(Vec3::norm).fold(0.0, f64::max)
    }

    pub fn rotated(&self, deg: f64) -> Self {
        Self {
            positions: self.positions.iter().map(|p| p.rotate_z(deg)).collect(),
        }
    }
}

/// Shoebox room with uniform wall absorption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub dims: Vec3,
    pub absorption: f64,
    pub array_origin: Vec3,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_rt: Option<f64>,
}

impl Room {
    pub fn new(dims: Vec3, absorption: f64, array_origin: Vec3) -> Result<Self> {
        let room = Self {
            dims,
            absorption,
            array_origin,
            target_rt: None,
        };
        room.validate()?;
        Ok(room)
    }

    /// Room whose uniform absorption is derived from a target reverberation
    /// time via Eyring's formula.
    pub fn with_target_rt(dims: Vec3, target_rt: f64, array_origin: Vec3) -> Result<Self> {
        let absorption = crate::rir::eyring_absorption(dims, target_rt)?;
        let room = Self {
            dims,
            absorption,
            array_origin,
            target_rt: Some(target_rt),
        };
        room.validate()?;
        Ok(room)
    }

    /// 7 x 10 x 3.7 m classroom, array at (4, 6, 1.5) m, RT 0.5 s.
    pub fn room1() -> Self {
        Self::with_target_rt(Vec3::new(7.0, 10.0, 3.7), 0.5, Vec3::new(4.0, 6.0, 1.5)).expect("room1 preset is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dims.0.iter().all(|&d| d.is_finite() && d > 0.0) {
            return Err(Error::Geometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dims.0
            )));
        }
        if !(self.absorption > 0.0 && self.absorption <= 1.0) {
            return Err(Error::Geometry(format!(
                "absorption must lie in (0, 1], got {}",
                self.absorption
            )));
        }
        if !self.contains(&self.array_origin) {
            return Err(Error::Geometry(format!(
                "array origin {:?} is not strictly inside the room",
                self.array_origin.0
            )));
        }
        Ok(())
    }

    /// Strict interior test in room coordinates.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p.0[i] > 0.0 && p.0[i] < self.dims.0[i])
    }

    pub fn volume(&self) -> f64 {
        self.dims.0.iter().product()
    }

    /// Wall reflection coefficient `sqrt(1 - alpha)`.
    pub fn reflection(&self) -> f64 {
        (1.0 - self.absorption).sqrt()
    }
}

/// Spherical source coordinates around the array center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePosition {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SourcePosition {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Geometry(format!("source radius must be positive, got {r}")));
        }
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::Geometry("source angles must be finite".into()));
        }
        Ok(Self {
            r,
            theta: wrap_azimuth(theta),
            phi,
        })
    }

    pub fn to_cartesian(&self) -> Vec3 {
        spherical_to_cartesian(self)
    }

    /// Inverse of [`spherical_to_cartesian`]. The azimuth is wrapped into
    /// `[-180, 180)`.
    pub fn from_cartesian(v: Vec3) -> Self {
        let r = v.norm();
        let theta = wrap_azimuth(v.y().atan2(v.x()).to_degrees());
        let phi = if r > 0.0 {
            (v.z() / r).clamp(-1.0, 1.0).acos().to_degrees()
        } else {
            0.0
        };
        Self { r, theta, phi }
    }
}

pub fn spherical_to_cartesian(p: &SourcePosition) -> Vec3 {
    let (st, ct) = p.theta.to_radians().sin_cos();
    let (sp, cp) = p.phi.to_radians().sin_cos();
    Vec3::new(p.r * sp * ct, p.r * sp * st, p.r * cp)
}

/// Maps any angle in degrees into `[-180, 180)`.
pub fn wrap_azimuth(deg: f64) -> f64 {
    let w = (deg + 180.0).rem_euclid(360.0) - 180.0;
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Wrapped absolute angular difference in degrees, in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(360.0);
    d.min(360.0 - d)
}

/// Angular partition of `theta` among `n` equal sectors starting at -180°:
/// returns the sector index and its center azimuth. `180` wraps to `-180`.
pub fn classify_azimuth(theta: f64, n: usize) -> Result<(usize, f64)> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 classes, got {n}")));
    }
    if !theta.is_finite() {
        return Err(Error::InvalidArgument("azimuth must be finite".into()));
    }
    let width = 360.0 / n as f64;
    let t = wrap_azimuth(theta);
    let i = (((t + 180.0) * n as f64 / 360.0).floor() as usize).min(n - 1);
    Ok((i, (i as f64 + 0.5) * width - 180.0))
}
