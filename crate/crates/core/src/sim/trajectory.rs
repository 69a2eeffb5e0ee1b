use std::f64::consts::TAU;

use nalgebra::{UnitQuaternion, Vector3};

use crate::geometry::RigidTransform;

/// Parametric camera motion. Every model stays near the world origin
/// looking along +z and is smooth in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrajectoryModel {
    /// Camera center runs around a circle of `radius` about the origin in
    /// the `x`/`y` plane while rolling gently about the optical axis in
    /// phase with the circle.
    Circle {
        radius: f64,
        period: f64,
        roll_deg: f64,
    },
    /// Slow lateral sway, with a fast orientation oscillation that fades in
    /// over one second starting at `shake_start`.
    Shake {
        sway_amplitude: f64,
        sway_period: f64,
        shake_deg: f64,
        shake_hz: f64,
        shake_start: f64,
    },
    /// Vertical sinusoidal bouncing with `amplitude` peak-to-trough, plus a
    /// slow lateral sway.
    Jump {
        amplitude: f64,
        period: f64,
        sway_amplitude: f64,
    },
    /// Lissajous wander through a box of half-size `extent` with a slow yaw.
    Long { extent: f64, period: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Circle,
    Shake,
    Jump,
    Long,
}

impl TrajectoryKind {
    pub fn name(&self) -> &'static str {
        match self {
            TrajectoryKind::Circle => "circle",
            TrajectoryKind::Shake => "shake",
            TrajectoryKind::Jump => "jump",
            TrajectoryKind::Long => "long",
        }
    }
}

impl std::fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TrajectoryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "circle" => Ok(TrajectoryKind::Circle),
            "shake" => Ok(TrajectoryKind::Shake),
            "jump" => Ok(TrajectoryKind::Jump),
            "long" => Ok(TrajectoryKind::Long),
            other => Err(format!("unknown trajectory kind `{other}`")),
        }
    }
}

impl TrajectoryModel {
    pub fn default_for(kind: TrajectoryKind) -> Self {
        match kind {
            TrajectoryKind::Circle => TrajectoryModel::Circle {
                radius: 0.8,
                period: 8.0,
                roll_deg: 5.0,
            },
            TrajectoryKind::Shake => TrajectoryModel::Shake {
                sway_amplitude: 0.6,
                sway_period: 4.0,
                shake_deg: 6.0,
                shake_hz: 4.5,
                shake_start: 3.0,
            },
            TrajectoryKind::Jump => TrajectoryModel::Jump {
                amplitude: 0.8,
                period: 1.5,
                sway_amplitude: 0.3,
            },
            TrajectoryKind::Long => TrajectoryModel::Long {
                extent: 1.0,
                period: 20.0,
            },
        }
    }

    pub fn kind(&self) -> TrajectoryKind {
        match self {
            TrajectoryModel::Circle { .. } => TrajectoryKind::Circle,
            TrajectoryModel::Shake { .. } => TrajectoryKind::Shake,
            TrajectoryModel::Jump { .. } => TrajectoryKind::Jump,
            TrajectoryModel::Long { .. } => TrajectoryKind::Long,
        }
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// Camera-to-world pose `T_wc` at time `t` (seconds, `t >= 0`).
pub fn sample_trajectory(model: &TrajectoryModel, t: f64) -> RigidTransform {
    match *model {
        TrajectoryModel::Circle {
            radius,
            period,
            roll_deg,
        } => {
            let phase = TAU * t / period;
            let center = Vector3::new(radius * phase.cos(), radius * phase.sin(), 0.0);
            let roll = roll_deg.to_radians() * phase.sin();
            RigidTransform::new(
                UnitQuaternion::from_axis_angle(&Vector3::z_axis(), roll),
                center,
            )
        }
        TrajectoryModel::Shake {
            sway_amplitude,
            sway_period,
            shake_deg,
            shake_hz,
            shake_start,
        } => {
            let sway = TAU * t / sway_period;
            let center = Vector3::new(
                sway_amplitude * sway.sin(),
                0.3 * sway_amplitude * (1.0 - sway.cos()),
                0.0,
            );
            let envelope = shake_deg.to_radians() * smoothstep(t - shake_start);
            let shake = TAU * shake_hz * t;
            // Yaw, pitch and roll oscillate at the same frequency with
            // distinct phases and amplitudes.
            let rotation = UnitQuaternion::from_euler_angles(
                0.5 * envelope * (shake + 2.1).sin(),
                0.7 * envelope * (shake + 1.3).sin(),
                envelope * shake.sin(),
            );
            RigidTransform::new(rotation, center)
        }
        TrajectoryModel::Jump {
            amplitude,
            period,
            sway_amplitude,
        } => {
            let phase = TAU * t / period;
            let center = Vector3::new(
                sway_amplitude * (TAU * t / (4.0 * period)).sin(),
                0.5 * amplitude * phase.sin(),
                0.0,
            );
            RigidTransform::new(UnitQuaternion::identity(), center)
        }
        TrajectoryModel::Long { extent, period } => {
            let w = TAU * t / period;
            let center = Vector3::new(
                extent * w.sin(),
                0.3 * extent * (2.3 * w).sin(),
                0.4 * extent * (1.0 - (1.7 * w).cos()) * -0.5,
            );
            let yaw = 12f64.to_radians() * (0.8 * w).sin();
            RigidTransform::new(UnitQuaternion::from_axis_angle(&Vector3::y_axis(), yaw), center)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_models() -> Vec<TrajectoryModel> {
        [
            TrajectoryKind::Circle,
            TrajectoryKind::Shake,
            TrajectoryKind::Jump,
            TrajectoryKind::Long,
        ]
        .into_iter()
        .map(TrajectoryModel::default_for)
        .collect()
    }

    #[test]
    fn circle_is_periodic() {
        let m = TrajectoryModel::default_for(TrajectoryKind::Circle);
        let TrajectoryModel::Circle { period, .. } = m else {
            unreachable!()
        };
        let a = sample_trajectory(&m, 0.0);
        let b = sample_trajectory(&m, period);
        assert!(a.rotation_distance(&b) < 1e-12);
        assert!((a.translation - b.translation).norm() < 1e-12);
    }

    #[test]
    fn shake_oscillates_at_configured_frequency() {
        let m = TrajectoryModel::default_for(TrajectoryKind::Shake);
        let TrajectoryModel::Shake {
            shake_hz,
            shake_start,
            ..
        } = m
        else {
            unreachable!()
        };
        assert_eq!(shake_hz, 4.5);
        // Count sign changes of the yaw rate over ten seconds past the ramp.
        let dt = 1e-3;
        let t0 = shake_start + 1.0;
        let yaw = |t: f64| sample_trajectory(&m, t).rotation.euler_angles().2;
        let mut crossings = 0;
        let mut prev = yaw(t0 + dt) - yaw(t0);
        let n = (10.0 / dt) as usize;
        for i in 1..n {
            let t = t0 + i as f64 * dt;
            let d = yaw(t + dt) - yaw(t);
            if d.signum() != prev.signum() {
                crossings += 1;
            }
            prev = d;
        }
        let measured = crossings as f64 / 2.0 / 10.0;
        assert!((measured - 4.5).abs() < 0.15, "measured {measured} Hz");
    }

    #[test]
    fn jump_spans_eighty_centimeters() {
        let m = TrajectoryModel::default_for(TrajectoryKind::Jump);
        let ys: Vec<f64> = (0..3000)
            .map(|i| sample_trajectory(&m, i as f64 / 300.0).translation.y)
            .collect();
        let max = ys.iter().cloned().fold(f64::MIN, f64::max);
        let min = ys.iter().cloned().fold(f64::MAX, f64::min);
        assert!((max - min - 0.8).abs() < 1e-4, "{}", max - min);
    }

    #[test]
    fn models_are_continuous() {
        for m in all_models() {
            let mut prev = sample_trajectory(&m, 0.0);
            for i in 1..6000 {
                let cur = sample_trajectory(&m, i as f64 / 300.0);
                assert!((cur.translation - prev.translation).norm() < 0.02);
                assert!(cur.rotation_distance(&prev) < 0.02);
                prev = cur;
            }
        }
    }
}
