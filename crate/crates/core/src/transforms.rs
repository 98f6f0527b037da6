//! Random viewpoint transformations and farthest point sampling.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::TAU;

use crate::scene::SceneMesh;
use crate::seed::{self, tag};
use crate::{Error, Result};

/// Default chroma jitter std, `255 * 0.05`.
pub const DEFAULT_JITTER_SIGMA: f64 = 255.0 * 0.05;

/// One sampled viewpoint transformation: rotation about z, per-axis
/// mirroring, chromatic jitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    /// Rotation angle about the z axis, in `[0, 2pi)`.
    pub rotation_angle_z: f64,
    pub mirror_mask: [bool; 3],
    /// Std of the per-channel Gaussian color noise.
    pub jitter_sigma: f64,
    pub rng_seed: u64,
}

impl TransformSpec {
    pub fn identity(seed: u64) -> Self {
        TransformSpec {
            rotation_angle_z: 0.0,
            mirror_mask: [false; 3],
            jitter_sigma: 0.0,
            rng_seed: seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..TAU).contains(&self.rotation_angle_z) {
            return Err(Error::InvalidArgument(format!(
                "rotation angle {} outside [0, 2pi)",
                self.rotation_angle_z
            )));
        }
        if self.jitter_sigma < 0.0 {
            return Err(Error::InvalidArgument("negative jitter sigma".into()));
        }
        Ok(())
    }
}

/// Apply a viewpoint transformation: rotate positions about z, mirror per
/// mask, jitter colors with clamping to `[0, 255]`. Faces are untouched.
pub fn apply_transform(spec: &TransformSpec, mesh: &SceneMesh) -> Result<SceneMesh> {
    spec.validate()?;
    let (sin, cos) = spec.rotation_angle_z.sin_cos();
    let vertices: Vec<Point3<f64>> = mesh
        .vertices
        .iter()
        .map(|p| {
            let mut q = Point3::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y, p.z);
            for a in 0..3 {
                if spec.mirror_mask[a] {
                    q[a] = -q[a];
                }
            }
            q
        })
        .collect();

    let colors = mesh.colors.as_ref().map(|colors| {
        if spec.jitter_sigma == 0.0 {
            return colors.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(spec.rng_seed, tag::JITTER));
        let normal = Normal::new(0.0, spec.jitter_sigma).expect("sigma validated");
        colors
            .iter()
            .map(|rgb| {
                let mut out = [0u8; 3];
                for c in 0..3 {
                    let jittered = rgb[c] as f64 + normal.sample(&mut rng);
                    out[c] = jittered.clamp(0.0, 255.0).round() as u8;
                }
                out
            })
            .collect()
    });

    Ok(SceneMesh {
        scene_id: mesh.scene_id.clone(),
        vertices,
        colors,
        faces: mesh.faces.clone(),
    })
}

/// Draw a pair of independent transformations: angle uniform on `[0, 2pi)`,
/// each mirror axis with probability one half, jitter sigma fixed at the
/// default. Deterministic per seed.
pub fn sample_transform_pair(seed: u64) -> (TransformSpec, TransformSpec) {
    let draw = |sub: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        TransformSpec {
            rotation_angle_z: rng.random::<f64>() * TAU,
            mirror_mask: [rng.random_bool(0.5), rng.random_bool(0.5), rng.random_bool(0.5)],
            jitter_sigma: DEFAULT_JITTER_SIGMA,
            rng_seed: rng.random::<u64>(),
        }
    };
    (
        draw(seed::mix(seed, tag::TRANSFORM_P)),
        draw(seed::mix(seed, tag::TRANSFORM_Q)),
    )
}

/// Indices selected by farthest point sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndexSet {
    indices: Vec<u32>,
    target_size: usize,
}

impl SampleIndexSet {
    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn target_size(&self) -> usize {
        self.target_size
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// The identity selection over a whole mesh.
    pub fn full(n: usize) -> Self {
        SampleIndexSet {
            indices: (0..n as u32).collect(),
            target_size: n,
        }
    }

    /// An explicit selection; indices must be unique.
    pub fn from_indices(indices: Vec<u32>) -> Self {
        debug_assert!({
            let mut sorted = indices.clone();
            sorted.sort_unstable();
            sorted.windows(2).all(|w| w[0] != w[1])
        });
        let target_size = indices.len();
        SampleIndexSet {
            indices,
            target_size,
        }
    }
}

/// Greedy max-min farthest point sampling in Euclidean distance.
///
/// The first element is `start_index`; every following pick maximizes the
/// distance to the already selected prefix, ties broken toward the lowest
/// vertex index. Selects `min(target, N)` vertices.
pub fn fps(mesh: &SceneMesh, target: usize, start_index: u32) -> Result<SampleIndexSet> {
    let n = mesh.vertex_count();
    if n == 0 {
        return Err(Error::InvalidArgument("farthest point sampling on empty cloud".into()));
    }
    if target == 0 {
        return Err(Error::InvalidArgument("farthest point sampling target must be >= 1".into()));
    }
    if start_index as usize >= n {
        return Err(Error::InvalidArgument(format!(
            "start index {start_index} out of range for {n} vertices"
        )));
    }
    let count = target.min(n);
    let mut indices = Vec::with_capacity(count);
    let mut min_dist2 = vec![f64::INFINITY; n];
    let mut current = start_index as usize;
    indices.push(start_index);
    for _ in 1..count {
        let cp = mesh.vertices[current];
        let mut best = 0usize;
        let mut best_d = f64::NEG_INFINITY;
        for (i, p) in mesh.vertices.iter().enumerate() {
            let d2 = (p - cp).norm_squared();
            if d2 < min_dist2[i] {
                min_dist2[i] = d2;
            }
            if min_dist2[i] > best_d {
                best_d = min_dist2[i];
                best = i;
            }
        }
        // the selected prefix has distance 0 to itself, so `best` is fresh
        indices.push(best as u32);
        current = best;
    }
    Ok(SampleIndexSet {
        indices,
        target_size: target,
    })
}

/// FPS from a seeded random start vertex.
pub fn fps_seeded(mesh: &SceneMesh, target: usize, seed: u64) -> Result<SampleIndexSet> {
    let n = mesh.vertex_count();
    if n == 0 {
        return Err(Error::InvalidArgument("farthest point sampling on empty cloud".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, tag::FPS_START));
    let start = rng.random_range(0..n as u32);
    fps(mesh, target, start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cloud(points: &[[f64; 3]]) -> SceneMesh {
        SceneMesh::new(
            "c",
            points.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect(),
            None,
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn quarter_turn_maps_x_to_y() {
        let mesh = cloud(&[[1.0, 0.0, 0.0]]);
        let spec = TransformSpec {
            rotation_angle_z: std::f64::consts::FRAC_PI_2,
            ..TransformSpec::identity(0)
        };
        let out = apply_transform(&spec, &mesh).unwrap();
        assert_relative_eq!(out.vertices[0].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.vertices[0].y, 1.0, epsilon = 1e-12);
        assert_relative_eq!(out.vertices[0].z, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn mirror_x_negates_first_axis() {
        let mesh = cloud(&[[1.0, 2.0, 3.0]]);
        let spec = TransformSpec {
            mirror_mask: [true, false, false],
            ..TransformSpec::identity(0)
        };
        let out = apply_transform(&spec, &mesh).unwrap();
        assert_eq!(out.vertices[0], Point3::new(-1.0, 2.0, 3.0));
    }

    #[test]
    fn isometry_preserves_pairwise_distances() {
        let mesh = cloud(&[
            [0.3, -1.2, 0.5],
            [2.0, 0.7, -0.4],
            [-1.1, 0.2, 1.9],
            [0.0, 0.0, 0.0],
        ]);
        let (spec, _) = sample_transform_pair(42);
        let spec = TransformSpec { jitter_sigma: 0.0, ..spec };
        let out = apply_transform(&spec, &mesh).unwrap();
        for i in 0..4 {
            for j in (i + 1)..4 {
                let before = (mesh.vertices[i] - mesh.vertices[j]).norm();
                let after = (out.vertices[i] - out.vertices[j]).norm();
                assert_relative_eq!(before, after, epsilon = 1e-12);
            }
        }
    }

    /// Sample-statistics oracle: the empirical std of ~1e5 jitter draws must
    /// sit within 2% of sigma. Mid-range base colors keep clamping inactive.
    #[test]
    fn jitter_std_matches_sigma() {
        let n = 34_000;
        let mesh = SceneMesh::new(
            "j",
            (0..n).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect(),
            Some(vec![[128, 128, 128]; n]),
            vec![],
        )
        .unwrap();
        let sigma = 12.75;
        let spec = TransformSpec {
            jitter_sigma: sigma,
            ..TransformSpec::identity(77)
        };
        let out = apply_transform(&spec, &mesh).unwrap();
        let samples: Vec<f64> = out
            .colors
            .unwrap()
            .iter()
            .flat_map(|rgb| rgb.iter().map(|&c| c as f64 - 128.0).collect::<Vec<_>>())
            .collect();
        assert!(samples.len() >= 100_000);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
            / (samples.len() - 1) as f64;
        let std = var.sqrt();
        // rounding to u8 adds ~1/12 quantization variance, well inside 2%
        assert!(
            (std - sigma).abs() / sigma < 0.02,
            "std {std} vs sigma {sigma}"
        );
    }

    #[test]
    fn transform_pair_is_deterministic() {
        assert_eq!(sample_transform_pair(9), sample_transform_pair(9));
        let (p, q) = sample_transform_pair(9);
        assert_ne!(p, q);
    }

    /// Chi-square uniformity oracle on rotation angles at 1% significance:
    /// 16 bins, 10^4 draws, critical value chi^2(15, 0.99) = 30.578.
    #[test]
    fn rotation_angles_are_uniform() {
        let bins = 16usize;
        let n = 10_000usize;
        let mut counts = vec![0usize; bins];
        for s in 0..n as u64 {
            let (p, _) = sample_transform_pair(s);
            assert!((0.0..TAU).contains(&p.rotation_angle_z));
            let b = ((p.rotation_angle_z / TAU) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 30.578, "chi2 = {chi2}");
    }

    /// Mirror-frequency oracle: each axis flips with frequency 0.5 +/- 0.02.
    #[test]
    fn mirror_frequencies_are_balanced() {
        let n = 10_000usize;
        let mut flips = [0usize; 3];
        for s in 0..n as u64 {
            let (p, _) = sample_transform_pair(s);
            for a in 0..3 {
                if p.mirror_mask[a] {
                    flips[a] += 1;
                }
            }
        }
        for a in 0..3 {
            let freq = flips[a] as f64 / n as f64;
            assert!((freq - 0.5).abs() <= 0.02, "axis {a} frequency {freq}");
        }
    }

    #[test]
    fn fps_hand_case() {
        let mesh = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.1, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let picks = fps(&mesh, 3, 0).unwrap();
        assert_eq!(picks.indices(), &[0, 3, 1]);
    }

    #[test]
    fn fps_full_and_single() {
        let mesh = cloud(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]]);
        let all = fps(&mesh, 3, 1).unwrap();
        assert_eq!(all.len(), 3);
        assert_eq!(all.indices()[0], 1);
        let mut sorted = all.indices().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);

        let one = fps(&mesh, 1, 2).unwrap();
        assert_eq!(one.indices(), &[2]);
    }

    /// Brute-force greedy oracle: every selected point's distance to the
    /// prefix dominates every unselected point's distance to that prefix.
    #[test]
    fn fps_maxmin_property_on_random_clouds() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let n = rng.random_range(20..200);
            let pts: Vec<[f64; 3]> =
                (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
            let mesh = cloud(&pts);
            let h = rng.random_range(2..n);
            let picks = fps(&mesh, h, 0).unwrap();
            let idx = picks.indices();
            let dist = |a: u32, b: u32| {
                (mesh.vertices[a as usize] - mesh.vertices[b as usize]).norm()
            };
            for k in 1..idx.len() {
                let prefix = &idx[..k];
                let d_sel = prefix.iter().map(|&p| dist(idx[k], p)).fold(f64::INFINITY, f64::min);
                for v in 0..n as u32 {
                    if prefix.contains(&v) {
                        continue;
                    }
                    let d_v =
                        prefix.iter().map(|&p| dist(v, p)).fold(f64::INFINITY, f64::min);
                    assert!(
                        d_sel >= d_v - 1e-12,
                        "pick {k} violates max-min: {d_sel} < {d_v}"
                    );
                }
            }
        }
    }

    /// FPS spreads points better than uniform random subsets, in expectation.
    #[test]
    fn fps_beats_random_subsets_on_spread() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let n = 300usize;
        let pts: Vec<[f64; 3]> =
            (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let mesh = cloud(&pts);
        let h = 24usize;
        let min_pairwise = |idx: &[u32]| {
            let mut best = f64::INFINITY;
            for i in 0..idx.len() {
                for j in (i + 1)..idx.len() {
                    let d = (mesh.vertices[idx[i] as usize] - mesh.vertices[idx[j] as usize])
                        .norm();
                    best = best.min(d);
                }
            }
            best
        };
        let fps_spread = min_pairwise(fps(&mesh, h, 0).unwrap().indices());
        let mut random_spread = 0.0;
        let trials = 100;
        for _ in 0..trials {
            let mut chosen: Vec<u32> = Vec::with_capacity(h);
            while chosen.len() < h {
                let c = rng.random_range(0..n as u32);
                if !chosen.contains(&c) {
                    chosen.push(c);
                }
            }
            random_spread += min_pairwise(&chosen);
        }
        random_spread /= trials as f64;
        assert!(
            fps_spread >= random_spread,
            "fps {fps_spread} vs random mean {random_spread}"
        );
    }
}
