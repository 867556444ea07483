//! Solver toolkit for the one-dimensional time-fractional diffusion-wave
//! equation with Robin boundary conditions,
//!
//! ```text
//!   D_t^alpha u = u_xx - p(x) u          on (0,1) x (0,T),
//!   u_x(0,t) - h u(0,t) = 0,   u_x(1,t) + H u(1,t) = 0,
//! ```
//!
//! where `D_t^alpha` is the Caputo derivative of order `alpha` in `(0,2)`.
//! The crate synthesizes boundary measurements `u(0,t)`, `u(1,t)` from known
//! parameters `(alpha, p, h, H, a)` via eigenfunction series, and recovers
//! those parameters back from the measurements:
//!
//! * [`mittag_leffler`] — the two-parameter Mittag-Leffler function and the
//!   time kernels of the series solution,
//! * [`sturm`] — eigenvalues, eigenfunctions and mode expansions of the
//!   operator `-d^2/dx^2 + p` with Robin conditions,
//! * [`forward`] — series solutions, boundary traces, the source problem and
//!   the Duhamel identity connecting the two,
//! * [`kernel`] — the Goursat transformation kernel connecting two operators
//!   and the endpoint identities it satisfies,
//! * [`inverse`] — order/eigenvalue fitting by variable projection, operator
//!   and initial-data recovery, and source deconvolution,
//! * [`config`], [`trace_io`], [`svg`], [`experiments`] — experiment
//!   configuration, dataset persistence and plot output used by the CLI.

pub mod config;
pub mod error;
pub mod experiments;
pub mod forward;
pub mod grid;
pub mod inverse;
pub mod kernel;
pub mod mittag_leffler;
pub mod ode;
pub mod quad;
pub mod report;
pub mod sturm;
pub mod svg;
pub mod trace_io;

mod gamma;
mod varpro;

pub use error::{Error, Result};
