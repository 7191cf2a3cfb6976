//! Simulated clocks, single-port message passing, RTT estimation, clock
//! averaging collectives and a mobile-agent synchronisation model.

pub mod agents;
pub mod collectives;
pub mod netsim;
pub mod rtt;
pub mod timebase;
