//! Identification of a qubit Hamiltonian from σz measurements alone.
//!
//! A qubit evolving under H = ½(d·σ) with piecewise-constant controls
//! rotates its Bloch vector about the axis d = d₀ + Σ f_m d_m. This crate
//! simulates such a system behind an opaque experiment interface and
//! identifies the hidden d-vectors from nothing but z-axis shot statistics,
//! in three stages: rotation frequency and tilt per axis, relative azimuths
//! via equatorial state preparation, and per-component linear regression
//! over field strengths.
//!
//! Module map:
//! - [`bloch`] — rotation geometry and the closed-form z-curves.
//! - [`rng`] — the explicitly specified PRNG behind all shot noise.
//! - [`signal`] — DFT peak, parabola vertex, line fit, zero crossing.
//! - [`experiment`] — pulse sequences and the experiment trait.
//! - [`blackbox`] — the simulated hidden system.
//! - [`estimator`] — the three-stage identification pipeline.
//! - [`config`] — JSON run configuration.
//! - [`report`] — gauge-aligned truth comparison and the run report.
//! - [`pipeline`] — the identify/sweep/figures commands and artifacts.

pub mod blackbox;
pub mod bloch;
pub mod config;
pub mod estimator;
pub mod experiment;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod signal;
