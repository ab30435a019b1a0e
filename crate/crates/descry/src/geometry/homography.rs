//! 3x3 homography over pixel coordinates.

use super::GeometryError;

/// A planar projective transform. Stored row-major; points are column
/// vectors, so `apply` computes `H * (x, y, 1)` and dehomogenizes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    m: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn matrix(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation by `theta` radians, counterclockwise for y pointing down the
    /// way screen coordinates do: positive angles send +x toward +y.
    pub fn rotation(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn rotation_about(theta: f64, cx: f64, cy: f64) -> Self {
        Self::translation(cx, cy)
            .compose(&Self::rotation(theta))
            .compose(&Self::translation(-cx, -cy))
    }

    pub fn scale(s: f64) -> Self {
        Self {
            m: [[s, 0.0, 0.0], [0.0, s, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scale_about(s: f64, cx: f64, cy: f64) -> Self {
        Self::translation(cx, cy)
            .compose(&Self::scale(s))
            .compose(&Self::translation(-cx, -cy))
    }

    /// Pure perspective component: identity except the bottom row.
    pub fn perspective(p1: f64, p2: f64) -> Self {
        Self {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [p1, p2, 1.0]],
        }
    }

    /// Matrix product `self * other`: the composite applies `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (k, row) in other.m.iter().enumerate() {
                    m[i][j] += self.m[i][k] * row[j];
                }
            }
        }
        Homography { m }
    }

    /// Maps one point, failing if it lies on the line sent to infinity.
    pub fn apply(&self, x: f64, y: f64) -> Result<(f64, f64), GeometryError> {
        let w = self.m[2][0] * x + self.m[2][1] * y + self.m[2][2];
        if w.abs() < 1e-12 {
            return Err(GeometryError::PointAtInfinity { x, y });
        }
        let u = self.m[0][0] * x + self.m[0][1] * y + self.m[0][2];
        let v = self.m[1][0] * x + self.m[1][1] * y + self.m[1][2];
        Ok((u / w, v / w))
    }

    /// Adjugate-based inverse.
    pub fn inverse(&self) -> Result<Homography, GeometryError> {
        let m = &self.m;
        let c00 = m[1][1] * m[2][2] - m[1][2] * m[2][1];
        let c01 = m[1][2] * m[2][0] - m[1][0] * m[2][2];
        let c02 = m[1][0] * m[2][1] - m[1][1] * m[2][0];
        let det = m[0][0] * c00 + m[0][1] * c01 + m[0][2] * c02;
        if det.abs() < 1e-12 {
            return Err(GeometryError::NonInvertible(det.abs()));
        }
        let inv = [
            [
                c00 / det,
                (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det,
                (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det,
            ],
            [
                c01 / det,
                (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det,
                (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det,
            ],
            [
                c02 / det,
                (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det,
                (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det,
            ],
        ];
        Ok(Homography { m: inv })
    }

    /// Scales so the bottom-right entry is exactly 1.
    pub fn normalized(&self) -> Result<Homography, GeometryError> {
        let w = self.m[2][2];
        if w.abs() < 1e-12 {
            return Err(GeometryError::NotNormalizable(w));
        }
        let mut m = self.m;
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                *v /= w;
            }
        }
        m[2][2] = 1.0;
        Ok(Homography { m })
    }
}

/// Mean Euclidean distance between the images of the four frame corners
/// under two homographies. Infinity when either transform sends a corner to
/// infinity, which ranks such estimates as maximally wrong.
pub fn corner_error(est: &Homography, truth: &Homography, width: usize, height: usize) -> f64 {
    let w = width as f64;
    let h = height as f64;
    let corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    let mut total = 0.0;
    for (x, y) in corners {
        match (est.apply(x, y), truth.apply(x, y)) {
            (Ok((ex, ey)), Ok((tx, ty))) => {
                total += ((ex - tx).powi(2) + (ey - ty).powi(2)).sqrt();
            }
            _ => return f64::INFINITY,
        }
    }
    total / 4.0
}
