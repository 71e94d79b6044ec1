//! Power-swing simulation and impedance-trajectory analytics for a
//! current-limited grid-forming inverter on a single-machine infinite-bus network.

pub mod analytic;
pub mod csa;
pub mod dynamics;
pub mod harness;
pub mod phasor;
pub mod protection;
