//! Message passing over a complete graph `K_N` under the single-port duplex
//! model, with circulant overlays and a configurable latency model.

mod network;
mod schedule;
mod topology;

use thiserror::Error;

pub use network::{
    execute, Asymmetry, Channel, Delivery, Exchange, ExecError, Jitter, LatencyModel, Link,
    Message, Network, RequestKind, RoundHandler, Trace, READING_BITS, REQUEST_BITS,
};
pub use schedule::{CommSchedule, Round, ScheduleViolation, Transfer, ViolationKind};
pub use topology::{CirculantTopology, Embedding};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetError {
    #[error("circulant graph of order {order} cannot have jump {jump}")]
    InvalidJump { order: usize, jump: usize },
    #[error("topology of order {topology} does not fit in K_{host}")]
    OrderMismatch { topology: usize, host: usize },
}
