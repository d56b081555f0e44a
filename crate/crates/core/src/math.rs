//! Minimal 3-D vector/matrix arithmetic.
//!
//! Hand-rolled on purpose: every hot loop in the crate works on packed
//! [`Vec3`] values and 3x3 blocks, and the crate is `no_std`, so a general
//! linear-algebra dependency would add nothing.  Transcendentals come from
//! `libm`.

use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

pub use libm::{atan2, cos, fabs, sin, sqrt};

/// Column vector in R^3.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const fn vec3(x: f64, y: f64, z: f64) -> Vec3 {
    Vec3 { x, y, z }
}

impl Vec3 {
    pub const ZERO: Vec3 = vec3(0.0, 0.0, 0.0);
    pub const EX: Vec3 = vec3(1.0, 0.0, 0.0);
    pub const EY: Vec3 = vec3(0.0, 1.0, 0.0);
    pub const EZ: Vec3 = vec3(0.0, 0.0, 1.0);

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        vec3(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        sqrt(self.norm_sq())
    }

    /// Unit vector; caller guarantees a nonzero argument.
    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    /// Unit vector, or `None` when shorter than `floor`.
    pub fn try_normalized(self, floor: f64) -> Option<Vec3> {
        let n = self.norm();
        if n > floor {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Component by axis index 0/1/2.
    pub fn axis(self, k: usize) -> f64 {
        match k {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn axis_mut(&mut self, k: usize) -> &mut f64 {
        match k {
            0 => &mut self.x,
            1 => &mut self.y,
            _ => &mut self.z,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        vec3(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        vec3(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        vec3(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        vec3(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        vec3(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        vec3(self.x / s, self.y / s, self.z / s)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl SubAssign for Vec3 {
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

/// Row-major 3x3 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    };

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Mat3 {
        Mat3 {
            m: [r0.to_array(), r1.to_array(), r2.to_array()],
        }
    }

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Mat3 {
        Mat3 {
            m: [
                [c0.x, c1.x, c2.x],
                [c0.y, c1.y, c2.y],
                [c0.z, c1.z, c2.z],
            ],
        }
    }

    pub fn col(&self, j: usize) -> Vec3 {
        vec3(self.m[0][j], self.m[1][j], self.m[2][j])
    }

    pub fn transpose(&self) -> Mat3 {
        let m = &self.m;
        Mat3 {
            m: [
                [m[0][0], m[1][0], m[2][0]],
                [m[0][1], m[1][1], m[2][1]],
                [m[0][2], m[1][2], m[2][2]],
            ],
        }
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        let m = &self.m;
        vec3(
            m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z,
        )
    }

    pub fn mul_mat(&self, o: &Mat3) -> Mat3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = (0..3).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        Mat3 { m: out }
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Rodrigues rotation about a unit axis.
    pub fn rotation(axis: Vec3, angle: f64) -> Mat3 {
        let (s, c) = (sin(angle), cos(angle));
        let t = 1.0 - c;
        let (x, y, z) = (axis.x, axis.y, axis.z);
        Mat3 {
            m: [
                [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
                [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
                [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
            ],
        }
    }

    pub fn rotation_x(angle: f64) -> Mat3 {
        Mat3::rotation(Vec3::EX, angle)
    }

    pub fn rotation_y(angle: f64) -> Mat3 {
        Mat3::rotation(Vec3::EY, angle)
    }

    pub fn rotation_z(angle: f64) -> Mat3 {
        Mat3::rotation(Vec3::EZ, angle)
    }
}

/// Solves a well-conditioned 3x3 system by Gaussian elimination with partial
/// pivoting.  Returns `None` when the matrix is numerically singular.
pub fn solve3(a: &Mat3, b: Vec3) -> Option<Vec3> {
    let mut aug = [
        [a.m[0][0], a.m[0][1], a.m[0][2], b.x],
        [a.m[1][0], a.m[1][1], a.m[1][2], b.y],
        [a.m[2][0], a.m[2][1], a.m[2][2], b.z],
    ];
    let scale = aug
        .iter()
        .flat_map(|r| r[..3].iter())
        .fold(0.0f64, |acc, &v| acc.max(fabs(v)));
    if scale == 0.0 {
        return None;
    }
    for k in 0..3 {
        let pivot_row = (k..3)
            .max_by(|&i, &j| fabs(aug[i][k]).total_cmp(&fabs(aug[j][k])))
            .unwrap();
        if fabs(aug[pivot_row][k]) < 1e-14 * scale {
            return None;
        }
        aug.swap(k, pivot_row);
        for i in k + 1..3 {
            let f = aug[i][k] / aug[k][k];
            for j in k..4 {
                aug[i][j] -= f * aug[k][j];
            }
        }
    }
    let mut x = [0.0; 3];
    for k in (0..3).rev() {
        let mut s = aug[k][3];
        for j in k + 1..3 {
            s -= aug[k][j] * x[j];
        }
        x[k] = s / aug[k][k];
    }
    Some(vec3(x[0], x[1], x[2]))
}

pub fn deg_to_rad(deg: f64) -> f64 {
    deg * core::f64::consts::PI / 180.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_follows_right_hand_rule() {
        assert_eq!(Vec3::EX.cross(Vec3::EY), Vec3::EZ);
        assert_eq!(Vec3::EY.cross(Vec3::EZ), Vec3::EX);
        assert_eq!(Vec3::EZ.cross(Vec3::EX), Vec3::EY);
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let r = Mat3::rotation(vec3(1.0, 2.0, -0.5).normalized(), 0.83);
        let rtr = r.transpose().mul_mat(&r);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!(fabs(rtr.m[i][j] - want) < 1e-14);
            }
        }
        assert!(fabs(r.det() - 1.0) < 1e-14);
    }

    #[test]
    fn rotation_about_z_turns_x_into_y() {
        let r = Mat3::rotation_z(core::f64::consts::FRAC_PI_2);
        let v = r.mul_vec(Vec3::EX);
        assert!((v - Vec3::EY).norm() < 1e-15);
    }

    #[test]
    fn solve3_recovers_known_solution() {
        let a = Mat3::from_rows(
            vec3(4.0, 1.0, -0.5),
            vec3(1.0, 3.0, 0.2),
            vec3(-0.5, 0.2, 5.0),
        );
        let x = vec3(0.3, -1.2, 2.5);
        let b = a.mul_vec(x);
        let got = solve3(&a, b).unwrap();
        assert!((got - x).norm() < 1e-12);
    }

    #[test]
    fn solve3_rejects_singular_matrix() {
        let a = Mat3::from_rows(
            vec3(1.0, 2.0, 3.0),
            vec3(2.0, 4.0, 6.0),
            vec3(0.0, 1.0, 1.0),
        );
        assert!(solve3(&a, Vec3::EX).is_none());
    }
}
