#![allow(clippy::neg_cmp_op_on_partial_ord)] // NaN must fail these checks

pub mod energy;
pub mod error;
pub mod fields;
pub mod harness;
pub mod imf;
pub mod minmode;
pub mod schemes;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/fields.md")]
    mod fields {}
    #[doc = include_str!("../../../book/src/energies.md")]
    mod energies {}
    #[doc = include_str!("../../../book/src/minmode.md")]
    mod minmode {}
    #[doc = include_str!("../../../book/src/schemes.md")]
    mod schemes {}
    #[doc = include_str!("../../../book/src/imf.md")]
    mod imf {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
