use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;

pub const METRICS_HEADER: &str =
    "env_step,episode_return,feedback_used,reward_loss,critic_loss,actor_loss,query_log_likelihood";

/// One evaluation point. Losses are means over the interval since the previous row;
/// `None` renders as an empty CSV field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub env_step: u64,
    /// Mean ground-truth return of deterministic evaluation episodes.
    pub episode_return: f64,
    pub feedback_used: usize,
    /// Mean final loss of the most recent reward training.
    pub reward_loss: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    /// Mean policy log-likelihood of the segments queried in this interval.
    pub query_log_likelihood: Option<f64>,
}

fn field(out: &mut String, value: Option<f64>) {
    out.push(',');
    if let Some(v) = value {
        let _ = write!(out, "{v}");
    }
}

impl MetricsRow {
    pub fn to_csv_line(&self) -> String {
        let mut line = format!("{},{},{}", self.env_step, self.episode_return, self.feedback_used);
        field(&mut line, self.reward_loss);
        field(&mut line, self.critic_loss);
        field(&mut line, self.actor_loss);
        field(&mut line, self.query_log_likelihood);
        line
    }
}

pub fn write_metrics_csv<W: Write>(out: &mut W, rows: &[MetricsRow]) -> Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.to_csv_line())?;
    }
    Ok(())
}

pub const SESSIONS_HEADER: &str =
    "session,env_step,scheme,queried,stored,feedback_used,selected_log_likelihood,policy_aligned_log_likelihood,uniform_log_likelihood";

/// What happened at one feedback session, with the log-likelihood diagnostic
/// computed on the checkpoint that selected the queries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRecord {
    pub session: usize,
    pub env_step: u64,
    pub scheme: &'static str,
    pub queried: usize,
    pub stored: usize,
    pub feedback_used: usize,
    pub selected_log_likelihood: f64,
    /// Fresh draw from the policy-aligned buffer.
    pub policy_aligned_log_likelihood: Option<f64>,
    /// Fresh uniform draw from the whole replay buffer.
    pub uniform_log_likelihood: Option<f64>,
}

pub fn write_sessions_csv<W: Write>(out: &mut W, sessions: &[SessionRecord]) -> Result<()> {
    writeln!(out, "{SESSIONS_HEADER}")?;
    for s in sessions {
        let mut line = format!(
            "{},{},{},{},{},{},{}",
            s.session, s.env_step, s.scheme, s.queried, s.stored, s.feedback_used, s.selected_log_likelihood
        );
        field(&mut line, s.policy_aligned_log_likelihood);
        field(&mut line, s.uniform_log_likelihood);
        writeln!(out, "{line}")?;
    }
    Ok(())
}
