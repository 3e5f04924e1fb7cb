// SPDX-License-Identifier: MIT OR Apache-2.0

//! Measurement toolkit for test preservation, determinism and correctness of
//! LLM code generation, plus a small attention-intervention testbed.

pub mod corpus;
pub mod error;
pub mod extraction;
pub mod layout;
pub mod mechanism;
pub mod metrics;
pub mod pipeline;
pub mod providers;
pub mod report;
pub mod runners;
pub mod stats;

pub use error::{Error, Result};
