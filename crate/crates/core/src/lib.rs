//! Core kernels for a numerical laboratory around joint ergodicity of Hardy
//! sequences: a symbolic growth calculus, exactly-evaluable measure-preserving
//! systems, multiple ergodic average engines, closed-form exponential sums with
//! brute-force counterparts, and generalized box seminorms.
//!
//! The crate is `no_std` (with `alloc`); all IO, configuration and parallel
//! drivers live in the companion `hardy-ergo` crate. Every floating-point
//! routine goes through `libm` and fixed summation orders, so results are
//! bit-identical across platforms and thread counts.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod averages;
pub mod dd;
pub mod expsums;
pub mod hardy;
pub mod mp;
pub mod seminorms;
pub mod sum;
pub mod systems;
pub mod tagged;

pub use dd::Dd;
pub use sum::Cx;
pub use tagged::TaggedReal;
