// SPDX-License-Identifier: Apache-2.0

//! Committee-based Byzantine agreement: per-node protocol state machine,
//! deterministic network simulator, analytic estimators and reward accounting.

use std::fmt;

use serde::{Deserialize, Serialize};

pub mod crypto;
pub mod engine;
pub mod estimators;
pub mod incentives;
pub mod ledger;
pub mod message;
pub mod netsim;
pub mod pbft;
pub mod reduction;
pub mod report;
pub mod scenario;
pub mod sortition;

/// Index of a node in the simulated network.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
