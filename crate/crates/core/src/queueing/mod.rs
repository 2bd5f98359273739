//! Exact chain oracles, analytic queue bounds and queue simulation for the
//! relay-queue delay analysis.

pub mod bounds;
pub mod compare;
pub mod oracle;
pub mod sim;

pub use bounds::{kingman_bound, q4_analysis, MomentSource, MomentSummary, Q4Analysis};
pub use compare::{compare_queues, run_q3, run_q4, QueuesReport};
pub use oracle::{ChainKind, HittingTable, OracleSummary, TorusChainOracle};
pub use sim::{simulate_queue, simulate_relay_tandem, EventProcess, QueueRun, QueueStats, QueueTrace, SlotQueue};
