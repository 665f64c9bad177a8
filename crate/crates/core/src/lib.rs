//! Simulation of a Landau-Zener qubit coupled to a quantum spectator
//! (second qubit or truncated harmonic oscillator): instantaneous spectra,
//! state-vector and Lindblad propagation, and parameter sweeps of the
//! transfer infidelity and purity.

pub mod dynamics;
pub mod model;
pub mod output;
pub mod qcore;
pub mod spectrum;
pub mod sweep;
