//! Signal detection for spontaneous adverse-event reporting data.
//!
//! The crate builds AE × drug contingency tables from report-level or
//! aggregate data and runs several families of methods on them:
//!
//! * [`disprop`]: proportional reporting ratio and reporting odds ratio;
//! * [`bcpnn`]: BCPNN information components;
//! * [`lrt`]: likelihood ratio tests with Monte Carlo null distributions,
//!   including Poisson and zero-inflated Poisson bootstrap variants;
//! * [`ebayes`]: empirical Bayes shrinkage under gamma-mixture and
//!   nonparametric priors;
//! * [`simulate`]: synthetic tables with planted signals for evaluation.
//!
//! ```
//! use pvkit::table::{expected_baseline, ContingencyTable};
//!
//! let table = ContingencyTable::new(
//!     vec!["Rash".into(), "other AEs".into()],
//!     vec!["X".into(), "other drugs".into()],
//!     vec![vec![12, 40], vec![30, 900]],
//! )?
//! .detect_references();
//! let e = expected_baseline(&table)?;
//! assert!((e.get(0, 0) - 42.0 * 52.0 / 982.0).abs() < 1e-12);
//! # Ok::<(), pvkit::Error>(())
//! ```

pub mod bcpnn;
pub mod disprop;
pub mod ebayes;
pub mod error;
pub mod grid;
pub mod io;
pub mod lrt;
pub mod rng;
pub mod simulate;
pub mod table;

mod optim;
mod parallel;
mod special;

pub use error::{Error, Result};
pub use grid::Grid;
pub use table::{BaselineMatrix, ContingencyTable};
