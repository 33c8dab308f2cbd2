//! The guide in `book/`, compiled so that its listings run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/spectrograms.md")]
pub mod spectrograms {}

#[doc = include_str!("../../../book/src/tokens.md")]
pub mod tokens {}

#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}

#[doc = include_str!("../../../book/src/migration.md")]
pub mod migration {}

#[doc = include_str!("../../../book/src/flops.md")]
pub mod flops {}

#[doc = include_str!("../../../book/src/schedules.md")]
pub mod schedules {}

#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}

#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}
