//! Text-driven facial expression transfer.
//!
//! Text is classified into one of seven emotions by an LSTM over word
//! vectors. The emotion picks an expression domain, and a conditional
//! generator redraws a prepared face photo in that domain. The guide in
//! `book/` walks through each stage.

pub mod classifier;
pub mod embedding;
pub mod face;
pub mod gan;
pub mod mapping;
pub mod optim;
pub mod pipeline;
pub mod synth;
pub mod text;

/// The guide's chapters, compiled so that their examples run as doc-tests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/text.md")]
    pub mod text {}
    #[doc = include_str!("../../../book/src/embeddings.md")]
    pub mod embeddings {}
    #[doc = include_str!("../../../book/src/classifier.md")]
    pub mod classifier {}
    #[doc = include_str!("../../../book/src/faces.md")]
    pub mod faces {}
    #[doc = include_str!("../../../book/src/gan.md")]
    pub mod gan {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    pub mod mapping {}
    #[doc = include_str!("../../../book/src/service.md")]
    pub mod service {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
}
