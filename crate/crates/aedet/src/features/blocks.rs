//! Fixed 32x32 block decomposition of grayscale images.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Side length of the patches the descriptor network consumes.
pub const BLOCK_SIZE: usize = 32;

/// Splits `gray` into non-overlapping [`BLOCK_SIZE`] squares, row-major
/// (left to right, then top to bottom). Both dimensions must be multiples
/// of the block size; canonical model resolutions always are.
pub fn split_blocks(gray: &Array2<f32>) -> Result<Vec<Array2<f32>>> {
    let (h, w) = gray.dim();
    if h % BLOCK_SIZE != 0 || w % BLOCK_SIZE != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} image cannot be split into {BLOCK_SIZE}x{BLOCK_SIZE} blocks"
        )));
    }
    let rows = h / BLOCK_SIZE;
    let cols = w / BLOCK_SIZE;
    let mut out = Vec::with_capacity(rows * cols);
    for by in 0..rows {
        for bx in 0..cols {
            let mut block = Array2::zeros((BLOCK_SIZE, BLOCK_SIZE));
            for y in 0..BLOCK_SIZE {
                for x in 0..BLOCK_SIZE {
                    block[[y, x]] = gray[[by * BLOCK_SIZE + y, bx * BLOCK_SIZE + x]];
                }
            }
            out.push(block);
        }
    }
    Ok(out)
}

/// Number of blocks a `(height, width)` image yields.
pub fn block_count(height: usize, width: usize) -> usize {
    (height / BLOCK_SIZE) * (width / BLOCK_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_row_major() {
        let gray = Array2::from_shape_fn((64, 96), |(y, x)| (y / 32 * 3 + x / 32) as f32);
        let blocks = split_blocks(&gray).unwrap();
        assert_eq!(blocks.len(), 6);
        for (i, block) in blocks.iter().enumerate() {
            assert!(block.iter().all(|&v| v == i as f32), "block {i} holds its own index");
        }
    }

    #[test]
    fn off_grid_sizes_are_shape_errors() {
        let gray = Array2::zeros((60, 64));
        assert!(matches!(split_blocks(&gray).unwrap_err(), Error::Shape(_)));
    }

    #[test]
    fn block_count_matches_split() {
        let gray = Array2::zeros((128, 256));
        assert_eq!(split_blocks(&gray).unwrap().len(), block_count(128, 256));
        assert_eq!(block_count(128, 256), 32);
    }
}
