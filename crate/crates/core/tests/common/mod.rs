#![allow(dead_code)]

use lanetune::data::{ProfilePoint, Section};
use lanetune::geometry::{Curve, CurveNode};
use lanetune::kinematics::LateralState;

/// Straight line along `heading`, shifted by `offset` to the left.
pub fn straight(heading: f64, offset: f64, s0: f64, length: f64) -> Curve {
    let (sn, cs) = heading.sin_cos();
    let (ox, oy) = (-offset * sn, offset * cs);
    let n = (length / 5.0).ceil() as usize;
    let nodes: Vec<CurveNode> = (0..=n)
        .map(|i| {
            let s = s0 + length * i as f64 / n as f64;
            CurveNode::new(s, ox + cs * s, oy + sn * s, heading, 0.0, 0.0)
        })
        .collect();
    Curve::from_nodes(&nodes).unwrap()
}

/// Circle of signed `radius` through the origin with initial heading 0.
pub fn circle(radius: f64, length: f64) -> Curve {
    let sign = radius.signum();
    let r = radius.abs();
    let n = length.ceil() as usize;
    let nodes: Vec<CurveNode> = (0..=n)
        .map(|i| {
            let s = length * i as f64 / n as f64;
            let th = sign * s / r;
            CurveNode::new(s, sign * r * th.sin(), sign * r * (1.0 - th.cos()), th, sign / r, 0.0)
        })
        .collect();
    Curve::from_nodes(&nodes).unwrap()
}

/// Section of `steps` steps at constant speed whose estimates are all `est`.
pub fn section(id: &str, true_curve: Curve, est: Curve, v: f64, steps: usize, x0: LateralState) -> Section {
    let ts = 0.1;
    Section {
        id: id.into(),
        sample_time: ts,
        true_curve,
        estimates: vec![est; steps],
        profile: (0..=steps)
            .map(|j| ProfilePoint {
                t: j as f64 * ts,
                v,
                s: j as f64 * ts * v,
            })
            .collect(),
        x0,
    }
}
