//! Synthetic images with known topology, for demos and tests.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::RgbImageGrid;

/// Tiles `3x3` rings (border `low`, center `high`) on a `high` background,
/// one ring every 4 pixels starting at (1, 1), so neighbouring rings never touch.
///
/// Every channel whose `low < high` has exactly one loop per ring, born at
/// `low` and filled at `high`, so with the per-channel range every sample of
/// its Betti curve equals [`ring_count`].
pub fn ring_texture(width: usize, height: usize, low: [u8; 3], high: [u8; 3]) -> RgbImageGrid {
    RgbImageGrid::from_fn(width, height, |x, y| {
        let in_ring =
            |v: usize, len: usize| v >= 1 && (v - 1) / 4 < rings_along(len) && (v - 1) % 4 < 3;
        if in_ring(x, width) && in_ring(y, height) {
            let (cx, cy) = ((x - 1) % 4, (y - 1) % 4);
            if (cx, cy) == (1, 1) {
                high
            } else {
                low
            }
        } else {
            high
        }
    })
}

fn rings_along(len: usize) -> usize {
    // ring i covers pixels 4i+1 ..= 4i+3 and keeps a background pixel after it
    len.saturating_sub(1) / 4
}

/// Number of rings [`ring_texture`] places in a `width x height` image.
pub fn ring_count(width: usize, height: usize) -> usize {
    rings_along(width) * rings_along(height)
}

/// Uniform noise image.
pub fn noise(width: usize, height: usize, seed: u64) -> RgbImageGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RgbImageGrid::from_fn(width, height, |_, _| rng.random())
}

/// Writes `n_each` constant-color images under `root/benign/` and `n_each`
/// ring-textured images under `root/malignant/`, colors drawn from `seed`.
pub fn write_separable_fixture(root: &Path, n_each: usize, size: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (dir, textured) in [("benign", false), ("malignant", true)] {
        let dir = root.join(dir);
        fs::create_dir_all(&dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
        for i in 0..n_each {
            let img = if textured {
                let low: [u8; 3] = std::array::from_fn(|_| rng.random_range(0..120));
                let high: [u8; 3] = std::array::from_fn(|c| rng.random_range(low[c] + 10..=255));
                ring_texture(size, size, low, high)
            } else {
                RgbImageGrid::filled(size, size, rng.random())
            };
            let path = dir.join(format!("{i:03}.png"));
            fs::write(&path, img.to_png()).map_err(|source| Error::Io { path, source })?;
        }
    }
    Ok(())
}
