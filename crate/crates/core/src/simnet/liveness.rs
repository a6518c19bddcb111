use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::blocklace::{AgentId, Blocklace};
use crate::dissemination::SocialGraph;
use crate::flashpay::consumes;

/// A payment whose acceptance liveness guarantees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Claim {
    pub payment: String,
    pub from: String,
    pub to: String,
    pub currency: String,
    pub amount: u64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LivenessReport {
    /// Payments among correct agents with a common friend.
    pub claims: Vec<Claim>,
    /// Payments outside the guarantee: some party is not correct, or payer,
    /// payee and sovereign share no friend.
    pub excluded: usize,
    /// Payments of any kind not accepted by their recipient.
    pub unaccepted: usize,
}

impl LivenessReport {
    pub fn failures(&self) -> impl Iterator<Item = &Claim> + '_ {
        self.claims.iter().filter(|c| !c.accepted)
    }

    pub fn holds(&self) -> bool {
        self.failures().next().is_none()
    }
}

/// Checks that every payment covered by the liveness guarantee was accepted
/// in `global`: issued by a correct agent to another correct agent in the
/// coins of a correct sovereign, where the three are friends of one agent.
pub fn check_liveness(
    global: &Blocklace,
    correct: &BTreeSet<AgentId>,
    names: &BTreeMap<AgentId, String>,
) -> LivenessReport {
    let graph = SocialGraph::of(global);
    let name = |id: &AgentId| names.get(id).cloned().unwrap_or_else(|| id.short());
    let mut report = LivenessReport::default();
    for b in global.iter() {
        let Some(tx) = b.transaction() else { continue };
        let p = b.creator();
        for pay in tx.payments.iter().filter(|x| x.recipient != p) {
            let q = pay.recipient;
            let accepted = global
                .children(&b.digest())
                .any(|c| c.creator() == q && consumes(c, b));
            if !accepted {
                report.unaccepted += 1;
            }
            let parties = [p, q, tx.currency];
            let eligible = parties.iter().all(|a| correct.contains(a))
                && graph.common_friend(&parties).is_some();
            if !eligible {
                report.excluded += 1;
                continue;
            }
            report.claims.push(Claim {
                payment: b.digest().to_hex(),
                from: name(&p),
                to: name(&q),
                currency: name(&tx.currency),
                amount: pay.amount,
                accepted,
            });
        }
    }
    report
}
