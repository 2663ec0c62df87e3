//! Planar agent pose and egocentric deltas.

/// World axes: x right, y up (plan view), yaw counter-clockwise from +x,
/// wrapped to (-pi, pi]. One world unit is one meter is one grid cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Egocentric delta expressed in the source pose's frame: forward along the
/// heading, lateral positive to the left.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseDelta {
    pub forward: f64,
    pub lateral: f64,
    pub dyaw: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % std::f64::consts::TAU;
    if a > std::f64::consts::PI {
        a -= std::f64::consts::TAU;
    } else if a <= -std::f64::consts::PI {
        a += std::f64::consts::TAU;
    }
    a
}

impl Pose2D {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw: wrap_angle(yaw) }
    }

    pub fn forward_axis(&self) -> (f64, f64) {
        (self.yaw.cos(), self.yaw.sin())
    }

    pub fn left_axis(&self) -> (f64, f64) {
        (-self.yaw.sin(), self.yaw.cos())
    }
}

/// Delta such that `apply(a, pose_delta(a, b)) == b`.
pub fn pose_delta(a: &Pose2D, b: &Pose2D) -> PoseDelta {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (fx, fy) = a.forward_axis();
    let (lx, ly) = a.left_axis();
    PoseDelta {
        forward: dx * fx + dy * fy,
        lateral: dx * lx + dy * ly,
        dyaw: wrap_angle(b.yaw - a.yaw),
    }
}

pub fn apply_delta(a: &Pose2D, d: &PoseDelta) -> Pose2D {
    let (fx, fy) = a.forward_axis();
    let (lx, ly) = a.left_axis();
    Pose2D::new(
        a.x + d.forward * fx + d.lateral * lx,
        a.y + d.forward * fy + d.lateral * ly,
        a.yaw + d.dyaw,
    )
}
