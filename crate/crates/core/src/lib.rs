//! Receipt-enforced cross-ledger transaction sets with need-based snapshot
//! archival, encrypted content-addressed storage and auditor-based dispute
//! resolution, driven by a deterministic discrete-event simulator.

pub mod auditor;
pub mod cas;
pub mod codec;
pub mod crosschain;
pub mod crypto;
pub mod ledger;
pub mod par;
pub mod sim;
pub mod snapshot;
