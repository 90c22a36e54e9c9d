//! Temporal ambiguity detection for open-domain questions.
//!
//! A question is temporally ambiguous over a year range when its answer
//! changes somewhere inside that range. Detection pins the question to
//! concrete years ("... as of 2011?") and asks an [`oracle::Oracle`] whether
//! two pinned versions share an answer. The [`search`] strategies decide
//! which years to compare against the range start.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod detection;
pub mod domain;
pub mod evaluation;
pub mod oracle;
pub mod search;
pub mod seeding;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/disambiguation.md")]
mod book_disambiguation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/oracles.md")]
mod book_oracles {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/search.md")]
mod book_search {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/baselines.md")]
mod book_baselines {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/efficiency.md")]
mod book_efficiency {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/evaluation.md")]
mod book_evaluation {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
