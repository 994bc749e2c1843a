//! Deterministic synthetic avatars for tests, benchmarks and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::avatar::{BlendShapeAvatar, DeltaSet, GaussianPrimitive, PrimitiveSet};

fn random_unit_quaternion(rng: &mut impl Rng) -> [f32; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 0.1 {
            return q.map(|c| (c / n) as f32);
        }
    }
}

/// Uniformly random primitives inside the unit cube with small `K`-shape deltas.
pub fn random_avatar(n: usize, k: usize, seed: u64) -> BlendShapeAvatar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: PrimitiveSet = (0..n)
        .map(|_| GaussianPrimitive {
            position: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
            rotation: random_unit_quaternion(&mut rng),
            log_scale: std::array::from_fn(|_| rng.random_range(-4.0..-1.5)),
            opacity: rng.random_range(0.05..1.0),
            color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
        })
        .collect();
    let deltas = (0..k)
        .map(|_| DeltaSet {
            positions: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-0.1..0.1)))
                .collect(),
            rotations: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-0.05..0.05)))
                .collect(),
            log_scales: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-0.2..0.2)))
                .collect(),
            opacities: (0..n).map(|_| rng.random_range(-0.1..0.1)).collect(),
            colors: (0..n)
                .map(|_| std::array::from_fn(|_| rng.random_range(-0.1..0.1)))
                .collect(),
        })
        .collect();
    BlendShapeAvatar {
        base,
        deltas,
        names: (0..k).map(|i| format!("shape_{i}")).collect(),
    }
}

/// Blend-shape labels used by [`synthetic_head`].
pub const HEAD_SHAPES: [&str; 4] = ["jaw_open", "smile", "brow_raise", "eye_close"];

/// A head-like ellipsoid of `n` surface Gaussians facing +z, radius about 0.8,
/// with the four [`HEAD_SHAPES`] acting on mouth, cheeks, brows and eyes.
pub fn synthetic_head(n: usize, seed: u64) -> BlendShapeAvatar {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let radii = [0.62f32, 0.8, 0.68];
    let area_per_splat = 4.0 * std::f32::consts::PI * 0.7 * 0.7 / n.max(1) as f32;
    let sigma = (area_per_splat.sqrt() * 0.6).max(1e-3);

    let mut base = PrimitiveSet::with_capacity(n);
    let mut deltas: Vec<DeltaSet> = HEAD_SHAPES.iter().map(|_| DeltaSet::zeros(n)).collect();

    for i in 0..n {
        // Fibonacci sphere keeps coverage even for any n.
        let golden = std::f32::consts::PI * (3.0 - 5f32.sqrt());
        let y = 1.0 - 2.0 * (i as f32 + 0.5) / n as f32;
        let r = (1.0 - y * y).max(0.0).sqrt();
        let theta = golden * i as f32;
        let dir = [r * theta.sin(), y, r * theta.cos()];
        let position = [dir[0] * radii[0], dir[1] * radii[1], dir[2] * radii[2]];

        let front = dir[2] > 0.3;
        let mut color = [0.86f32, 0.67, 0.55];
        if !front && dir[1] > -0.2 {
            color = [0.25, 0.17, 0.12];
        }
        // Eyes, mouth.
        let eye = front && dir[1] > 0.1 && dir[1] < 0.3 && dir[0].abs() > 0.15 && dir[0].abs() < 0.45;
        let mouth = front && dir[1] > -0.55 && dir[1] < -0.35 && dir[0].abs() < 0.3;
        if eye {
            color = [0.12, 0.1, 0.1];
        } else if mouth {
            color = [0.7, 0.3, 0.3];
        }
        let jitter: f32 = rng.random_range(-0.04..0.04);
        let color = color.map(|c| (c + jitter).clamp(0.0, 1.0));
        let flatten = [sigma.ln(), sigma.ln(), (sigma * 0.4).ln()];

        base.push(GaussianPrimitive {
            position,
            rotation: random_unit_quaternion(&mut rng),
            log_scale: flatten,
            opacity: rng.random_range(0.6..0.95),
            color,
        });

        if front && dir[1] < -0.3 {
            let w = (-0.3 - dir[1]).min(0.4) / 0.4;
            deltas[0].positions[i] = [0.0, -0.18 * w, 0.02 * w];
        }
        if front && dir[1] < -0.2 && dir[1] > -0.6 && dir[0].abs() > 0.2 {
            deltas[1].positions[i] = [0.04 * dir[0].signum(), 0.06, 0.0];
            deltas[1].colors[i] = [0.05, -0.02, -0.02];
        }
        if front && dir[1] > 0.3 && dir[1] < 0.55 {
            deltas[2].positions[i] = [0.0, 0.07, 0.01];
        }
        if eye {
            deltas[3].colors[i] = [0.74, 0.57, 0.45];
            deltas[3].log_scales[i] = [0.0, -0.7, 0.0];
        }
    }

    BlendShapeAvatar {
        base,
        deltas,
        names: HEAD_SHAPES.iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::avatar::validate_avatar;

    #[test]
    fn generators_are_valid_and_deterministic() {
        let a = synthetic_head(500, 1);
        assert!(validate_avatar(&a).is_empty());
        assert_eq!(a, synthetic_head(500, 1));
        let r = random_avatar(50, 3, 2);
        assert!(validate_avatar(&r).is_empty());
        assert_eq!(r, random_avatar(50, 3, 2));
    }
}
