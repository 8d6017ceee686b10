//! Jerk-limited point-to-point references.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub start: f64,
    pub end: f64,
    pub v_max: f64,
    pub a_max: f64,
    pub j_max: f64,
    /// Rest time appended after the move (s).
    #[serde(default)]
    pub dwell: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(Error::invalid("trajectory end points must be finite"));
        }
        if !(pos(self.v_max) && pos(self.a_max) && pos(self.j_max)) {
            return Err(Error::invalid("trajectory limits must be positive"));
        }
        if !(self.dwell.is_finite() && self.dwell >= 0.0) {
            return Err(Error::invalid("dwell must be >= 0"));
        }
        Ok(())
    }
}

/// Sampled position, velocity and acceleration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Reference {
    pub sample_rate: f64,
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl Reference {
    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn max_abs_position(&self) -> f64 {
        self.position.iter().fold(0.0, |m, p| m.max(p.abs()))
    }

    pub fn append(&mut self, mut other: Reference) {
        self.position.append(&mut other.position);
        self.velocity.append(&mut other.velocity);
        self.acceleration.append(&mut other.acceleration);
    }
}

/// Seven-segment profile: jerk up, hold, down; cruise; jerk down, hold, up.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    start: f64,
    end: f64,
    direction: f64,
    segments: [(f64, f64); 7],
}

/// Jerk time, constant-acceleration time and distance of a rest-to-`vp` ramp.
fn ramp(vp: f64, a: f64, j: f64) -> (f64, f64, f64) {
    let (tj, ta) = if vp * j >= a * a {
        (a / j, vp / a - a / j)
    } else {
        ((vp / j).sqrt(), 0.0)
    };
    (tj, ta, vp * (2.0 * tj + ta) / 2.0)
}

impl Profile {
    pub fn plan(spec: &TrajectorySpec) -> Result<Self> {
        spec.validate()?;
        let dist = (spec.end - spec.start).abs();
        let direction = (spec.end - spec.start).signum();
        let (a, j) = (spec.a_max, spec.j_max);
        let (mut vp, mut tv) = (spec.v_max, 0.0);
        let (mut tj, mut ta, d) = ramp(vp, a, j);
        if dist == 0.0 {
            (tj, ta, vp) = (0.0, 0.0, 0.0);
        } else if 2.0 * d <= dist {
            tv = (dist - 2.0 * d) / vp;
        } else {
            // peak velocity not reached: bisect on the peak velocity
            let (mut lo, mut hi) = (0.0, spec.v_max);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 2.0 * ramp(mid, a, j).2 > dist {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            vp = lo;
            let r = ramp(vp, a, j);
            (tj, ta) = (r.0, r.1);
            tv = ((dist - 2.0 * r.2) / vp).max(0.0);
        }
        let _ = vp;
        Ok(Self {
            start: spec.start,
            end: spec.end,
            direction,
            segments: [
                (tj, j),
                (ta, 0.0),
                (tj, -j),
                (tv, 0.0),
                (tj, -j),
                (ta, 0.0),
                (tj, j),
            ],
        })
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.0).sum()
    }

    /// `(position, velocity, acceleration)` at time `t` after the start.
    pub fn state_at(&self, t: f64) -> (f64, f64, f64) {
        if t >= self.duration() {
            return (self.end, 0.0, 0.0);
        }
        let (mut p, mut v, mut a) = (0.0, 0.0, 0.0);
        let mut left = t.max(0.0);
        for &(dur, jerk) in &self.segments {
            let dt = left.min(dur);
            p += v * dt + a * dt * dt / 2.0 + jerk * dt * dt * dt / 6.0;
            v += a * dt + jerk * dt * dt / 2.0;
            a += jerk * dt;
            left -= dt;
            if left <= 0.0 {
                break;
            }
        }
        let d = self.direction;
        (self.start + d * p, d * v, d * a)
    }
}

/// Samples one move followed by its dwell at `sample_rate`.
pub fn third_order_trajectory(spec: &TrajectorySpec, sample_rate: f64) -> Result<Reference> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::invalid("sample rate must be positive"));
    }
    let profile = Profile::plan(spec)?;
    let n = (profile.duration() * sample_rate).ceil() as usize
        + (spec.dwell * sample_rate).round() as usize;
    let mut r = Reference {
        sample_rate,
        position: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
        acceleration: Vec::with_capacity(n),
    };
    for k in 0..n.max(1) {
        let (p, v, a) = profile.state_at(k as f64 / sample_rate);
        r.position.push(p);
        r.velocity.push(v);
        r.acceleration.push(a);
    }
    Ok(r)
}

/// Concatenates moves; each must start where the previous one ended.
pub fn reference_set(specs: &[TrajectorySpec], sample_rate: f64) -> Result<Reference> {
    let first = specs
        .first()
        .ok_or_else(|| Error::invalid("trajectory set is empty"))?;
    let mut out = third_order_trajectory(first, sample_rate)?;
    for w in specs.windows(2) {
        if (w[1].start - w[0].end).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "move starting at {} does not continue from {}",
                w[1].start, w[0].end
            )));
        }
        out.append(third_order_trajectory(&w[1], sample_rate)?);
    }
    Ok(out)
}

/// Back-and-forth moves between `lo` and `hi`, one pair per velocity.
pub fn back_and_forth(
    lo: f64,
    hi: f64,
    velocities: &[f64],
    a_max: f64,
    j_max: f64,
    dwell: f64,
) -> Vec<TrajectorySpec> {
    velocities
        .iter()
        .flat_map(|&v| {
            [(lo, hi), (hi, lo)].map(|(start, end)| TrajectorySpec {
                start,
                end,
                v_max: v,
                a_max,
                j_max,
                dwell,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(v: f64) -> TrajectorySpec {
        TrajectorySpec {
            start: -0.1,
            end: 0.1,
            v_max: v,
            a_max: 1.0,
            j_max: 1000.0,
            dwell: 0.1,
        }
    }

    #[test]
    fn standing_still() {
        let r = third_order_trajectory(
            &TrajectorySpec {
                start: 0.05,
                end: 0.05,
                ..spec(0.1)
            },
            1000.0,
        )
        .unwrap();
        assert_eq!(r.len(), 100);
        assert!(r.position.iter().all(|p| *p == 0.05));
        assert!(r.velocity.iter().chain(&r.acceleration).all(|v| *v == 0.0));
    }

    #[test]
    fn fast_move_respects_limits() {
        let fs = 10_000.0;
        let r = third_order_trajectory(&spec(0.15), fs).unwrap();
        let vmax = r.velocity.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((vmax - 0.15).abs() < 1e-6, "{vmax}");
        assert!(r.acceleration.iter().all(|a| a.abs() <= 1.0 + 1e-9));
        for w in r.acceleration.windows(2) {
            assert!(((w[1] - w[0]) * fs).abs() <= 1000.0 + 1e-6);
        }
        assert_eq!(*r.position.first().unwrap(), -0.1);
        assert_eq!(*r.position.last().unwrap(), 0.1);
        // derivatives agree with finite differences
        for k in 0..r.len() - 1 {
            let dv = (r.position[k + 1] - r.position[k]) * fs;
            assert!((dv - r.velocity[k]).abs() < 1e-3);
        }
    }

    #[test]
    fn short_move_lowers_the_peak_velocity() {
        let s = TrajectorySpec {
            start: 0.0,
            end: 0.001,
            ..spec(0.15)
        };
        let p = Profile::plan(&s).unwrap();
        let (pe, ve, ae) = p.state_at(p.duration() - 1e-12);
        assert!((pe - 0.001).abs() < 1e-9 && ve.abs() < 1e-6 && ae.abs() < 1e-6);
        let vpk = (0..1000)
            .map(|k| p.state_at(p.duration() * k as f64 / 1000.0).1)
            .fold(0.0f64, f64::max);
        assert!(vpk < 0.15 && vpk > 0.0);
    }

    #[test]
    fn velocity_is_time_symmetric() {
        for v in [0.025, 0.075, 0.15] {
            let p = Profile::plan(&spec(v)).unwrap();
            let t = p.duration();
            for k in 0..=200 {
                let s = t * k as f64 / 200.0;
                let (_, a, _) = p.state_at(s);
                let (_, b, _) = p.state_at(t - s);
                assert!((a - b).abs() < 1e-9);
            }
            assert!((p.state_at(t / 2.0).0).abs() < 1e-9);
        }
    }

    #[test]
    fn sets_must_be_continuous() {
        let moves = back_and_forth(-0.1, 0.1, &[0.025, 0.15], 1.0, 1000.0, 0.0);
        assert_eq!(moves.len(), 4);
        assert!(reference_set(&moves, 1000.0).is_ok());
        let broken = [spec(0.1), spec(0.1)];
        assert!(reference_set(&broken, 1000.0).is_err());
        assert!(reference_set(&[], 1000.0).is_err());
        assert!(third_order_trajectory(
            &TrajectorySpec {
                v_max: 0.0,
                ..spec(0.1)
            },
            1e3
        )
        .is_err());
    }
}
