//! Simulation and analysis toolkit for single-shot spin-blockade spectroscopy
//! of two-electron quantum-dot systems.
//!
//! The library generates synthetic (detuning, current) single-shot records for
//! a singlet/triplet mixture swept through a charge anticrossing, bins them
//! into 2D histograms, and extracts the singlet-triplet splitting `Δ_SB`
//! (plus tunnel couplings, temperatures, and calibration constants) by
//! weighted nonlinear least squares, with finite-statistics confidence
//! intervals.
//!
//! Unit conventions, used everywhere unless a name says otherwise:
//!
//! * energies and detunings in μeV,
//! * currents in pA,
//! * temperatures converted at the boundary via `k_B = 86.173 μeV/K`,
//! * rates in 1/μs, magnetic fields in μT.
//!
//! Modules map onto the analysis stages:
//!
//! * [`model`] — the two-branch anticrossing fit model and derived quantities
//! * [`sim`] — seeded Monte Carlo single-shot generator and 2D histogramming
//! * [`fit`] — histogram fit engine (Levenberg–Marquardt) and the
//!   model-light branch-midpoint estimator
//! * [`uncertainty`] — finite-statistics error analysis of the splitting
//! * [`lindblad`] — steady state of the two-level charge system under
//!   thermalization and charge dephasing
//! * [`calibration`] — lever arms and voltage-to-energy scale factors
//! * [`noise`] — current-noise budget of the readout chain
//! * [`funnel`] — spin-funnel peak extraction and tunnel-coupling fit

pub mod calibration;
pub mod consts;
pub mod error;
pub mod fit;
pub mod funnel;
pub mod io;
pub mod lindblad;
pub mod lm;
pub mod mixture;
pub mod model;
pub mod noise;
pub mod sim;
pub mod special;
pub mod uncertainty;

pub use error::{Error, Result};
pub use model::ModelParams;
pub use sim::{Histogram2D, RelaxationSpec, ShotMatrix, SweepSpec};
