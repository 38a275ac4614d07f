use std::time::{SystemTime, UNIX_EPOCH};

use prefrl_core::query::OracleVerdict;
use serde::Serialize;

use crate::render::RenderDocument;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TicketStatus {
    Pending,
    Labeled,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryTicket {
    pub id: String,
    pub session: usize,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
    pub status: TicketStatus,
    pub segment_0: RenderDocument,
    pub segment_1: RenderDocument,
    #[serde(skip)]
    pub(crate) slot: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatusView {
    pub env: String,
    pub active_session: Option<usize>,
    pub env_step: u64,
    pub feedback_used: usize,
    pub feedback_total: usize,
    pub feedback_remaining: usize,
    pub pending: usize,
    pub labeled: usize,
    pub skipped: usize,
    pub finished: bool,
}

#[derive(Debug, PartialEq, Eq)]
pub enum Resolve {
    Resolved { slot: usize, status: TicketStatus },
    NotFound,
    AlreadyResolved(TicketStatus),
}

/// Every ticket of the run plus the progress numbers shown by `/status`.
#[derive(Debug, Default)]
pub struct Board {
    pub(crate) env: String,
    pub(crate) active_session: Option<usize>,
    pub(crate) env_step: u64,
    pub(crate) feedback_used: usize,
    pub(crate) feedback_total: usize,
    pub(crate) finished: bool,
    pub(crate) tickets: Vec<QueryTicket>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

impl Board {
    pub fn status(&self) -> StatusView {
        let count = |s: TicketStatus| self.tickets.iter().filter(|t| t.status == s).count();
        StatusView {
            env: self.env.clone(),
            active_session: self.active_session,
            env_step: self.env_step,
            feedback_used: self.feedback_used,
            feedback_total: self.feedback_total,
            feedback_remaining: self.feedback_total.saturating_sub(self.feedback_used),
            pending: count(TicketStatus::Pending),
            labeled: count(TicketStatus::Labeled),
            skipped: count(TicketStatus::Skipped),
            finished: self.finished,
        }
    }

    pub fn pending(&self) -> Vec<QueryTicket> {
        self.tickets.iter().filter(|t| t.status == TicketStatus::Pending).cloned().collect()
    }

    /// Moves a pending ticket to its final state; any other transition is refused.
    pub fn resolve(&mut self, id: &str, verdict: OracleVerdict) -> Resolve {
        let Some(ticket) = self.tickets.iter_mut().find(|t| t.id == id) else {
            return Resolve::NotFound;
        };
        if ticket.status != TicketStatus::Pending {
            return Resolve::AlreadyResolved(ticket.status);
        }
        ticket.status = match verdict {
            OracleVerdict::Skip => TicketStatus::Skipped,
            _ => TicketStatus::Labeled,
        };
        Resolve::Resolved {
            slot: ticket.slot,
            status: ticket.status,
        }
    }
}
