//! Quaternion matrix algebra and high-order hyperpower iterations for the
//! Moore–Penrose pseudoinverse, with a preconditioned global Krylov solver and
//! two applications (low-rank image completion, chaotic-signal filtering).

pub mod cmat;
pub mod cur;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod krylov;
pub mod mm;
pub mod pinv;
pub mod qmat;
pub mod quat;
pub mod signal;
pub mod spectral;

pub use cmat::{embed, unembed, CMat};
pub use error::{Error, Result};
pub use pinv::{cei, penrose_errors, pinv, Backend, HyperCoeffs, Method, Penrose, PinvConfig, PinvReport, StopReason};
pub use qmat::{MulTally, QMat};
pub use quat::{quat_mul, Quat};
pub use spectral::{jacobi_svd, qsvd_pinv, scaling_alpha, sigma_max, AlphaMode, SvdResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
