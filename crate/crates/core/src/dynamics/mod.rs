//! Effective band dynamics in slowly varying external fields and the full
//! wave-packet propagation it approximates.
//!
//! Fields enter through `phi(eps x)` and `A(eps x)`. The semiclassical
//! flow runs in macroscopic variables `r = eps x`, `s = eps t` generated by
//! `h0 = E_n(k - A(r)) + phi(r)` and optionally `eps h1`.

pub mod compare;
pub mod fields;
pub mod interp;
pub mod semiclassics;
pub mod split_step;
pub mod wavepacket;

pub use compare::{compare_centers, fit_order, run_comparison, CenterErrors, SweepConfig, SweepPoint};
pub use fields::{ExternalFields, FieldSample, FieldTerm, ScalarField};
pub use interp::{Jet, TrigInterpolant};
pub use semiclassics::{
    canonical_state, h0_eval, h1_eval, integrate_semiclassics, physical_momentum, physical_position, symbol_eval,
    BandModel, Order, SemiclassicalState, SymbolEval, Trajectory,
};
pub use split_step::{split_step_propagate, Observables, Propagation, NORM_TOL};
pub use wavepacket::{band_wavepacket, edge_weight, Envelope, WavePacket};
