//! Orthonormal frame with its third axis along the mean momentum.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::model::PacketSpec;

/// Right-handed orthonormal frame `(e1, e2, e3)` with `e3` along `p`.
///
/// For `p = 0` the lab frame is used, so `e3 = +z`. The transverse pair is
/// any orthonormal completion; the packet is isotropic about `e3` so nothing
/// depends on that choice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PacketFrame {
    pub e1: Vector3<f64>,
    pub e2: Vector3<f64>,
    pub e3: Vector3<f64>,
}

impl PacketFrame {
    pub fn lab() -> Self {
        PacketFrame {
            e1: Vector3::x(),
            e2: Vector3::y(),
            e3: Vector3::z(),
        }
    }

    pub fn of(spec: &PacketSpec) -> Self {
        Self::along(&spec.mean_momentum())
    }

    pub fn along(direction: &Vector3<f64>) -> Self {
        let norm = direction.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Self::lab();
        }
        let e3 = direction / norm;
        if e3.x == 0.0 && e3.y == 0.0 {
            return if e3.z > 0.0 {
                Self::lab()
            } else {
                PacketFrame {
                    e1: Vector3::x(),
                    e2: -Vector3::y(),
                    e3: -Vector3::z(),
                }
            };
        }
        // least-aligned lab axis gives a well conditioned cross product
        let helper = if e3.x.abs() <= e3.y.abs() && e3.x.abs() <= e3.z.abs() {
            Vector3::x()
        } else if e3.y.abs() <= e3.z.abs() {
            Vector3::y()
        } else {
            Vector3::z()
        };
        let e1 = helper.cross(&e3).normalize();
        let e2 = e3.cross(&e1);
        PacketFrame { e1, e2, e3 }
    }

    /// Components of a lab vector in this frame.
    pub fn to_frame(&self, v: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.e1.dot(v), self.e2.dot(v), self.e3.dot(v))
    }

    /// Lab vector from frame components.
    pub fn to_lab(&self, c: &Vector3<f64>) -> Vector3<f64> {
        self.e1 * c.x + self.e2 * c.y + self.e3 * c.z
    }
}
