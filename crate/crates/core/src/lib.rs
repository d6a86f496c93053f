pub mod ccpe;
pub mod classify;
pub mod confident;
pub mod data;
pub mod error;
pub mod numerics;
pub mod prior_est;
pub mod scorer;
pub mod seed;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/bags.md")]
    mod bags {}
    #[doc = include_str!("../../../book/src/mixture-proportions.md")]
    mod mixture_proportions {}
    #[doc = include_str!("../../../book/src/confident-examples.md")]
    mod confident_examples {}
    #[doc = include_str!("../../../book/src/prior-estimation.md")]
    mod prior_estimation {}
    #[doc = include_str!("../../../book/src/pair-pipelines.md")]
    mod pair_pipelines {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
