use thiserror::Error;

use super::types::Detection;
use crate::geometry::pose::{Intrinsics, Pose};
use crate::graph::Aabb;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SkipReason {
    #[error("only {got} valid depth samples (need {need})")]
    InsufficientDepth { got: usize, need: usize },
    #[error("embedding is not unit norm")]
    BadEmbedding,
    #[error("bbox2d lies outside the image")]
    BadBox,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolated percentile of sorted data, `q` in [0, 1].
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// World centroid and box of a detection from its depth samples.
///
/// The centroid unprojects the median pixel at the median depth; the box
/// spans the 5th to 95th percentile of the unprojected samples per axis.
pub fn backproject(
    det: &Detection,
    pose: &Pose,
    k: &Intrinsics,
    k_min: usize,
) -> Result<([f64; 3], Aabb), SkipReason> {
    let valid: Vec<[f64; 3]> = det
        .depth_samples
        .iter()
        .filter(|s| s[2].is_finite() && s[2] > 0.0)
        .map(|s| [s[0] as f64, s[1] as f64, s[2] as f64])
        .collect();
    if valid.len() < k_min.max(1) {
        return Err(SkipReason::InsufficientDepth { got: valid.len(), need: k_min.max(1) });
    }
    let mut us: Vec<f64> = valid.iter().map(|s| s[0]).collect();
    let mut vs: Vec<f64> = valid.iter().map(|s| s[1]).collect();
    let mut ds: Vec<f64> = valid.iter().map(|s| s[2]).collect();
    let centroid = pose.camera_to_world(k.unproject(median(&mut us), median(&mut vs), median(&mut ds)));

    let pts: Vec<[f64; 3]> = valid.iter().map(|s| pose.camera_to_world(k.unproject(s[0], s[1], s[2]))).collect();
    let mut min = [0.0; 3];
    let mut max = [0.0; 3];
    for a in 0..3 {
        let mut axis: Vec<f64> = pts.iter().map(|p| p[a]).collect();
        axis.sort_by(f64::total_cmp);
        min[a] = percentile(&axis, 0.05).min(centroid[a]);
        max[a] = percentile(&axis, 0.95).max(centroid[a]);
    }
    Ok((centroid, Aabb { min, max }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::pose::Quat;
    use crate::graph::PixelRect;

    fn k() -> Intrinsics {
        Intrinsics { fx: 500.0, fy: 500.0, cx: 320.0, cy: 240.0, width: 640, height: 480 }
    }

    fn det(samples: Vec<[f32; 3]>) -> Detection {
        Detection {
            bbox2d: PixelRect { x0: 300, y0: 220, x1: 340, y1: 260 },
            mask: None,
            label: "box".into(),
            known_category: true,
            embedding: vec![1.0],
            description: None,
            depth_samples: samples,
        }
    }

    #[test]
    fn principal_ray() {
        let d = det(vec![[320.0, 240.0, 2.0]; 12]);
        let (c, _) = backproject(&d, &Pose::new(0.0, [0.0; 3], Quat::IDENTITY), &k(), 10).unwrap();
        assert!((c[0]).abs() < 1e-9 && (c[1]).abs() < 1e-9 && (c[2] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn translation_equivariance() {
        let d = det((0..20).map(|i| [310.0 + i as f32, 235.0, 2.0 + 0.01 * i as f32]).collect());
        let a = backproject(&d, &Pose::new(0.0, [0.0; 3], Quat::IDENTITY), &k(), 10).unwrap().0;
        let b = backproject(&d, &Pose::new(0.0, [1.0, 0.0, 0.0], Quat::IDENTITY), &k(), 10).unwrap().0;
        assert!((b[0] - a[0] - 1.0).abs() < 1e-9 && (b[1] - a[1]).abs() < 1e-9);
    }

    #[test]
    fn too_few_samples_skipped() {
        let d = det(vec![[320.0, 240.0, 2.0]; 5]);
        let r = backproject(&d, &Pose::new(0.0, [0.0; 3], Quat::IDENTITY), &k(), 10);
        assert_eq!(r.unwrap_err(), SkipReason::InsufficientDepth { got: 5, need: 10 });
    }

    #[test]
    fn rendered_box_centroid_recovered() {
        // oracle: render the front face of a thin box centred at a known world
        // point from a level camera, then invert.
        let pose = Pose::looking(0.0, [0.0, 0.0, 1.2], 0.0);
        let k = k();
        let target = [3.0, 0.4, 0.6];
        let mut samples = Vec::new();
        for a in -5..=5 {
            for b in -5..=5 {
                let p = [target[0] - 0.05, target[1] + a as f64 * 0.03, target[2] + b as f64 * 0.03];
                // world → camera: x_cam = -y, y_cam = -(z - 1.2), z_cam = x
                let cam = [-p[1], -(p[2] - 1.2), p[0]];
                let uv = k.project(cam).unwrap();
                samples.push([uv[0] as f32, uv[1] as f32, cam[2] as f32]);
            }
        }
        let (c, bbox) = backproject(&det(samples), &pose, &k, 10).unwrap();
        let err = (0..3).map(|a| (c[a] - target[a]).powi(2)).sum::<f64>().sqrt();
        assert!(err < 0.1, "centroid error {err}");
        assert!(bbox.contains(c));
    }
}
