//! Kernel density estimation and mean-shift mode seeking on the unit
//! hypersphere Ω_q, the EM view of the mean-shift step, von Mises–Fisher
//! mixture fitting and convergence-rate diagnostics.
//!
//! ```
//! use dirms::{dms, KdeModel, Kernel, UnitVector};
//!
//! let data: Vec<UnitVector> = [[1.0, 0.1, 0.0], [0.9, 0.0, 0.2], [1.0, -0.1, 0.1]]
//!     .iter()
//!     .map(|v| UnitVector::normalize(v).unwrap())
//!     .collect();
//! let model = KdeModel::new(data, Kernel::VonMises, 0.3).unwrap();
//! let start = UnitVector::normalize(&[0.5, 0.5, 0.5]).unwrap();
//! let traj = dms::run(&model, &start, 1e-7, 1000).unwrap();
//! assert_eq!(traj.status, dms::Status::Converged);
//! ```

pub mod cli;
pub mod diagnostics;
pub mod dms;
pub mod em;
pub mod error;
pub mod kde;
pub mod kernel;
pub mod quadrature;
pub mod special;
pub mod sphere;
pub mod sum;
pub mod vmf;

pub use error::{Error, Result};
pub use kde::KdeModel;
pub use kernel::Kernel;
pub use sphere::UnitVector;
pub use vmf::VmfMixture;
