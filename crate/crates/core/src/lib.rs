//! Production planning games on a capacitated lot-sizing market.
//!
//! Several firms sell one good over `T` periods into a market with linear,
//! price-responsive demand. Each firm decides in which periods to set up
//! production (paying a fixed cost), how much to produce up to its capacity,
//! how much to carry in inventory, and how much to place in the market.
//!
//! The crate provides:
//!
//! - [`model`]: market and firm data, plan feasibility, cost and profit.
//! - [`best_response`]: the exact profit-maximizing plan of one firm against
//!   fixed opponent quantities (setup enumeration plus an active-set QP).
//! - [`equilibrium`]: monopoly plans, best-response iteration towards Cournot
//!   equilibria, Nash verification and deterrence quantities.
//! - [`iterated`]: period-by-period repeated play with tit-for-tat style
//!   strategies.
//! - [`cli`]: scenario files and the report writer behind the `lotgame` binary.
//!
//! ```
//! use lotgame::model::{FirmParams, MarketInstance};
//! use lotgame::equilibrium::solve_monopoly;
//! use lotgame::best_response::BestResponseOptions;
//!
//! let market = MarketInstance::with_constant_intercept(10.0, vec![1.0, 1.0, 1.0, 0.5, 0.5, 0.5])?;
//! let firm = FirmParams::new(10.0, 1.0, 10.0)?;
//! let (plan, profit) = solve_monopoly(&market, &firm, &BestResponseOptions::default())?;
//! assert!((profit - 170.25).abs() < 1e-6);
//! assert_eq!(plan.y, vec![true, false, true, true, true, true]);
//! # Ok::<(), lotgame::Error>(())
//! ```

// Negated comparisons are how inputs reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod best_response;
pub mod cli;
pub mod equilibrium;
pub mod error;
pub mod iterated;
pub mod model;
pub mod qp;

pub use error::{Error, Result};

// The guide's chapters are compiled as doc tests so their snippets stay in
// sync with the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/best_response.md")]
    mod best_response {}
    #[doc = include_str!("../../../book/src/equilibrium.md")]
    mod equilibrium {}
    #[doc = include_str!("../../../book/src/deterrence.md")]
    mod deterrence {}
    #[doc = include_str!("../../../book/src/iterated.md")]
    mod iterated {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
