use crate::error::{Error, Result};

/// Default cap on materialized voxels (2^24).
pub const DEFAULT_DENSE_CAP: usize = 1 << 24;

/// Dense scalar voxel array indexed `(i, j, k)` with `k` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid<T> {
    pub resolution: [usize; 3],
    pub data: Vec<T>,
}

impl<T: Copy> DenseGrid<T> {
    pub fn new(resolution: [usize; 3], data: Vec<T>) -> Self {
        assert_eq!(data.len(), resolution.iter().product::<usize>());
        Self { resolution, data }
    }

    pub(crate) fn check_cap(resolution: [usize; 3], channels: usize, cap: usize) -> Result<()> {
        let voxels = resolution.iter().product::<usize>();
        if voxels > cap {
            return Err(Error::DenseTooLarge {
                voxels,
                channels,
                cap,
            });
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.resolution[1] + idx[1]) * self.resolution[2] + idx[2]
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> T {
        self.data[self.index(idx)]
    }
}
