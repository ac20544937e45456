//! In-place fast Walsh–Hadamard transform.
//!
//! `wht_in_place` computes the unnormalized transform
//! `F[z] = sum_x (-1)^(popcount(x & z)) f[x]` with the standard butterfly
//! ordering; callers apply whatever normalization their formula needs once at
//! the end. Applying the transform twice multiplies by `len`.

use std::ops::{Add, Sub};

/// Unnormalized in-place WHT. `data.len()` must be a power of two. Works for
/// real scalars and for `Complex<T>`.
pub fn wht_in_place<V>(data: &mut [V])
where
    V: Copy + Add<Output = V> + Sub<Output = V>,
{
    let len = data.len();
    assert!(len.is_power_of_two(), "WHT length must be a power of two");
    let mut h = 1;
    while h < len {
        let mut i = 0;
        while i < len {
            for j in i..i + h {
                let (x, y) = (data[j], data[j + h]);
                data[j] = x + y;
                data[j + h] = x - y;
            }
            i += 2 * h;
        }
        h *= 2;
    }
}
