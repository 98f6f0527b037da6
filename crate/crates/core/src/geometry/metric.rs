//! Angular distances, the combined geodesic/angular metric, and the binary
//! distance cache.

use nalgebra::Vector3;
use ndarray::Array2;
use std::fs;
use std::path::Path;

use super::{DistanceKind, DistanceMatrix, NormalField};
use crate::{Error, Result};

/// Default geodesic share of the combined metric.
pub const DEFAULT_DELTA: f64 = 0.6;

/// Mixing weight between normalized geodesic and angular distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CombinedDistanceConfig {
    pub delta: f64,
}

impl Default for CombinedDistanceConfig {
    fn default() -> Self {
        CombinedDistanceConfig {
            delta: DEFAULT_DELTA,
        }
    }
}

impl CombinedDistanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::InvalidArgument(format!(
                "delta {} outside [0, 1]",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `1 - |n1 . n2|` for unit normals.
pub fn angular_distance(n1: &Vector3<f64>, n2: &Vector3<f64>) -> Result<f64> {
    for n in [n1, n2] {
        if (n.norm() - 1.0).abs() > 1e-4 {
            return Err(Error::InvalidArgument(format!(
                "angular distance needs unit normals, got norm {}",
                n.norm()
            )));
        }
    }
    Ok((1.0 - n1.dot(n2).abs()).clamp(0.0, 1.0))
}

/// Pairwise angular distances. Degenerate vertices are maximally distant
/// (1) from everything; the diagonal stays zero.
pub fn angular_distance_matrix(field: &NormalField) -> Result<DistanceMatrix> {
    let n = field.len();
    let mut values = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = if field.is_degenerate(i) || field.is_degenerate(j) {
                1.0
            } else {
                (1.0 - field.normals()[i].dot(&field.normals()[j]).abs()).clamp(0.0, 1.0)
            };
            values[[i, j]] = d;
            values[[j, i]] = d;
        }
    }
    DistanceMatrix::new(values, DistanceKind::Angular)
}

/// `delta * dg / mean(dg) + (1 - delta) * da / mean(da)`, with the means
/// taken over off-diagonal entries.
pub fn combined_distance_matrix(
    dg: &DistanceMatrix,
    da: &DistanceMatrix,
    cfg: &CombinedDistanceConfig,
) -> Result<DistanceMatrix> {
    cfg.validate()?;
    if dg.kind() != DistanceKind::Geodesic || da.kind() != DistanceKind::Angular {
        return Err(Error::InvalidArgument(format!(
            "combined metric expects (geodesic, angular), got ({:?}, {:?})",
            dg.kind(),
            da.kind()
        )));
    }
    if dg.values().dim() != da.values().dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            dg.values().dim(),
            da.values().dim()
        )));
    }
    let mg = dg.off_diagonal_mean();
    let ma = da.off_diagonal_mean();
    if mg <= 0.0 || ma <= 0.0 {
        return Err(Error::Domain(format!(
            "cannot normalize all-zero distances (geodesic mean {mg}, angular mean {ma})"
        )));
    }
    let values = dg.values() * (cfg.delta / mg) + da.values() * ((1.0 - cfg.delta) / ma);
    DistanceMatrix::new(values, DistanceKind::Combined)
}

const CACHE_MAGIC: &[u8; 4] = b"VIBD";
const CACHE_VERSION: u32 = 1;

/// A distance matrix plus the parameters it was computed with.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCache {
    pub matrix: DistanceMatrix,
    pub delta: f64,
    pub heat_time_scale: f64,
}

/// Write a distance matrix as float32 row-major with an (N, kind, delta, t)
/// header. Reload is byte-identical.
pub fn save_distance_cache(cache: &DistanceCache, path: &Path) -> Result<()> {
    let n = cache.matrix.len();
    let mut out = Vec::with_capacity(4 + 4 + 4 + 1 + 16 + 4 * n * n);
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(match cache.matrix.kind() {
        DistanceKind::Geodesic => 0u8,
        DistanceKind::Angular => 1,
        DistanceKind::Combined => 2,
    });
    out.extend_from_slice(&cache.delta.to_le_bytes());
    out.extend_from_slice(&cache.heat_time_scale.to_le_bytes());
    for &v in cache.matrix.values().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn load_distance_cache(path: &Path) -> Result<DistanceCache> {
    let data = fs::read(path)?;
    let fail = |msg: &str| Error::InvalidArgument(format!("{msg} in {}", path.display()));
    if data.len() < 29 || &data[0..4] != CACHE_MAGIC {
        return Err(fail("not a distance cache"));
    }
    let version = u32::from_le_bytes(data[4..8].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(fail("unsupported cache version"));
    }
    let n = u32::from_le_bytes(data[8..12].try_into().unwrap()) as usize;
    let kind = match data[12] {
        0 => DistanceKind::Geodesic,
        1 => DistanceKind::Angular,
        2 => DistanceKind::Combined,
        _ => return Err(fail("unknown distance kind")),
    };
    let delta = f64::from_le_bytes(data[13..21].try_into().unwrap());
    let heat_time_scale = f64::from_le_bytes(data[21..29].try_into().unwrap());
    let body = &data[29..];
    if body.len() != 4 * n * n {
        return Err(fail("truncated distance payload"));
    }
    let mut values = Array2::<f64>::zeros((n, n));
    for (idx, chunk) in body.chunks_exact(4).enumerate() {
        values[[idx / n, idx % n]] = f32::from_le_bytes(chunk.try_into().unwrap()) as f64;
    }
    Ok(DistanceCache {
        matrix: DistanceMatrix::new(values, kind)?,
        delta,
        heat_time_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_distance(n: usize, kind: DistanceKind, seed: u64) -> DistanceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                // f32-exact entries keep the cache round trip bitwise
                let v = (rng.random::<f32>() as f64).abs();
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        DistanceMatrix::new(values, kind).unwrap()
    }

    #[test]
    fn angular_distance_hand_values() {
        let ex = Vector3::new(1.0, 0.0, 0.0);
        let ey = Vector3::new(0.0, 1.0, 0.0);
        assert_eq!(angular_distance(&ex, &ex).unwrap(), 0.0);
        assert_eq!(angular_distance(&ex, &(-ex)).unwrap(), 0.0);
        assert_eq!(angular_distance(&ex, &ey).unwrap(), 1.0);
        let diag = Vector3::new(1.0, 1.0, 0.0).normalize();
        assert_relative_eq!(
            angular_distance(&ex, &diag).unwrap(),
            1.0 - 2f64.sqrt() / 2.0,
            epsilon = 1e-12
        );
        assert!(angular_distance(&ex, &(ex * 1.01)).is_err());
    }

    #[test]
    fn combined_extremes_reproduce_inputs() {
        let dg = random_distance(6, DistanceKind::Geodesic, 1);
        let da = random_distance(6, DistanceKind::Angular, 2);
        let all_g =
            combined_distance_matrix(&dg, &da, &CombinedDistanceConfig { delta: 1.0 }).unwrap();
        let mg = dg.off_diagonal_mean();
        for (a, b) in all_g.values().iter().zip(dg.values().iter()) {
            assert_relative_eq!(*a, b / mg, epsilon = 1e-12);
        }
        let all_a =
            combined_distance_matrix(&dg, &da, &CombinedDistanceConfig { delta: 0.0 }).unwrap();
        let ma = da.off_diagonal_mean();
        for (a, b) in all_a.values().iter().zip(da.values().iter()) {
            assert_relative_eq!(*a, b / ma, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_matrices_combine_to_ones() {
        let n = 5;
        let constant = |v: f64, kind| {
            let mut m = Array2::<f64>::from_elem((n, n), v);
            for i in 0..n {
                m[[i, i]] = 0.0;
            }
            DistanceMatrix::new(m, kind).unwrap()
        };
        let dg = constant(3.0, DistanceKind::Geodesic);
        let da = constant(0.25, DistanceKind::Angular);
        let combined =
            combined_distance_matrix(&dg, &da, &CombinedDistanceConfig { delta: 0.37 }).unwrap();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert_relative_eq!(combined.values()[[i, j]], 1.0, epsilon = 1e-12);
                }
            }
        }
    }

    /// Scale invariance: a uniform mesh rescale multiplies dg and its mean
    /// identically, so the combined matrix is unchanged.
    #[test]
    fn combined_is_scale_invariant() {
        let dg = random_distance(7, DistanceKind::Geodesic, 3);
        let da = random_distance(7, DistanceKind::Angular, 4);
        let cfg = CombinedDistanceConfig::default();
        let a = combined_distance_matrix(&dg, &da, &cfg).unwrap();
        let scaled =
            DistanceMatrix::new(dg.values() * 17.0, DistanceKind::Geodesic).unwrap();
        let b = combined_distance_matrix(&scaled, &da, &cfg).unwrap();
        for (x, y) in a.values().iter().zip(b.values().iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn all_zero_matrix_errors() {
        let n = 4;
        let zero = DistanceMatrix::new(Array2::zeros((n, n)), DistanceKind::Geodesic).unwrap();
        let da = random_distance(n, DistanceKind::Angular, 5);
        assert!(
            combined_distance_matrix(&zero, &da, &CombinedDistanceConfig::default()).is_err()
        );
    }

    /// Byte-identity oracle for the cache file.
    #[test]
    fn cache_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dist.bin");
        let cache = DistanceCache {
            matrix: random_distance(9, DistanceKind::Combined, 6),
            delta: 0.6,
            heat_time_scale: 1.0,
        };
        save_distance_cache(&cache, &path).unwrap();
        let bytes_a = fs::read(&path).unwrap();
        let reloaded = load_distance_cache(&path).unwrap();
        assert_eq!(reloaded, cache);
        save_distance_cache(&reloaded, &path).unwrap();
        let bytes_b = fs::read(&path).unwrap();
        assert_eq!(bytes_a, bytes_b);
    }
}
