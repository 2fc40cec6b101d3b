//! Numeric abstraction for the rate allocator.
//!
//! Allocation only needs field arithmetic and ordering, so it runs on floats
//! and on exact rationals alike. TCP models need `sqrt` and stay on
//! [`num_traits::Float`].

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};

pub trait Scalar: Copy + PartialOrd + Num + FromPrimitive + Debug {
    /// Equality up to the representation's rounding.
    fn close(a: Self, b: Self) -> bool;

    fn min_of(a: Self, b: Self) -> Self {
        if b < a {
            b
        } else {
            a
        }
    }
}

impl Scalar for f64 {
    fn close(a: Self, b: Self) -> bool {
        (a - b).abs() <= 1e-12 * 1f64.max(a.abs()).max(b.abs())
    }
}

impl Scalar for f32 {
    fn close(a: Self, b: Self) -> bool {
        (a - b).abs() <= 1e-5 * 1f32.max(a.abs()).max(b.abs())
    }
}

impl Scalar for Ratio<i64> {
    fn close(a: Self, b: Self) -> bool {
        a == b
    }
}

impl Scalar for Ratio<i128> {
    fn close(a: Self, b: Self) -> bool {
        a == b
    }
}
