use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ConsistencyLedger, Expert, ExpertError, ExpertQuery, ExpertResponse, QueryContext};
use crate::gp::PriorSpec;

/// Handle returned by [`ExpertQueue::enqueue`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingToken {
    pub query_id: String,
    pub run_id: String,
}

/// A query waiting for a human, as listed to the console.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingQuery {
    pub seq: u64,
    pub enqueued_unix_ms: u64,
    pub query: ExpertQuery,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RespondError {
    #[error("unknown or closed query {0}")]
    Unknown(String),
    #[error("{0}")]
    Contradiction(String),
}

struct Entry {
    pending: PendingQuery,
    ledger: ConsistencyLedger,
    answer: Option<ExpertResponse>,
}

#[derive(Default)]
struct State {
    seq: u64,
    open: BTreeMap<String, Entry>,
    by_run: HashMap<String, String>,
    closed: HashSet<String>,
}

/// Rendezvous between search drivers waiting on priors and whoever answers
/// them over the wire.
///
/// Each run has at most one open query. A response is checked against the
/// ledger snapshot attached at enqueue time; a contradiction leaves the
/// query open. Every query is answered at most once and its answer
/// delivered at most once.
#[derive(Default)]
pub struct ExpertQueue {
    state: Mutex<State>,
    answered: Condvar,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl ExpertQueue {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers `query`. Re-enqueueing the id already open for the run is a
    /// no-op, so a resumed driver can ask again.
    pub fn enqueue(&self, query: ExpertQuery, ledger: ConsistencyLedger) -> Result<PendingToken, ExpertError> {
        let mut st = self.lock();
        let token = PendingToken { query_id: query.query_id.clone(), run_id: query.run_id.clone() };
        if let Some(open) = st.by_run.get(&query.run_id) {
            if *open == query.query_id {
                return Ok(token);
            }
            return Err(ExpertError::Busy { run_id: query.run_id, pending: open.clone() });
        }
        if st.closed.contains(&query.query_id) || st.open.contains_key(&query.query_id) {
            return Err(ExpertError::Unavailable(format!("query id {} was already used", query.query_id)));
        }
        st.seq += 1;
        let pending = PendingQuery { seq: st.seq, enqueued_unix_ms: now_ms(), query };
        st.by_run.insert(token.run_id.clone(), token.query_id.clone());
        st.open.insert(token.query_id.clone(), Entry { pending, ledger, answer: None });
        Ok(token)
    }

    /// Unanswered queries in arrival order.
    pub fn pending(&self) -> Vec<PendingQuery> {
        let st = self.lock();
        let mut out: Vec<PendingQuery> =
            st.open.values().filter(|e| e.answer.is_none()).map(|e| e.pending.clone()).collect();
        out.sort_by_key(|p| p.seq);
        out
    }

    pub fn get(&self, query_id: &str) -> Option<PendingQuery> {
        self.lock().open.get(query_id).map(|e| e.pending.clone())
    }

    pub fn respond(&self, query_id: &str, prior: PriorSpec, annotation: String) -> Result<(), RespondError> {
        let mut st = self.lock();
        let entry = match st.open.get_mut(query_id) {
            Some(e) if e.answer.is_none() => e,
            _ => return Err(RespondError::Unknown(query_id.to_string())),
        };
        let q = &entry.pending.query;
        entry.ledger.check(q.lo, q.hi, &prior).map_err(|c| RespondError::Contradiction(c.to_string()))?;
        entry.answer = Some(ExpertResponse { query_id: query_id.to_string(), prior, annotation });
        drop(st);
        self.answered.notify_all();
        Ok(())
    }

    /// Blocks until `token` is answered or `timeout` passes. On timeout the
    /// query stays open.
    pub fn await_response(&self, token: &PendingToken, timeout: Duration) -> Result<ExpertResponse, ExpertError> {
        let start = Instant::now();
        let mut st = self.lock();
        loop {
            match st.open.get(&token.query_id) {
                None => return Err(ExpertError::UnknownQuery(token.query_id.clone())),
                Some(e) if e.answer.is_some() => {
                    let e = st.open.remove(&token.query_id).expect("entry present");
                    st.by_run.remove(&token.run_id);
                    st.closed.insert(token.query_id.clone());
                    return Ok(e.answer.expect("answered"));
                }
                Some(_) => {}
            }
            let waited = start.elapsed();
            if waited >= timeout {
                return Err(ExpertError::Timeout {
                    query_id: token.query_id.clone(),
                    waited_ms: waited.as_millis() as u64,
                });
            }
            st = self.answered.wait_timeout(st, timeout - waited).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Drops every open query of `run_id`.
    pub fn cancel_run(&self, run_id: &str) {
        let mut st = self.lock();
        if let Some(id) = st.by_run.remove(run_id) {
            st.open.remove(&id);
            st.closed.insert(id);
        }
        drop(st);
        self.answered.notify_all();
    }
}

/// An expert reached through an [`ExpertQueue`].
#[derive(Clone)]
pub struct RemoteExpert {
    queue: Arc<ExpertQueue>,
    timeout: Duration,
}

impl RemoteExpert {
    pub fn new(queue: Arc<ExpertQueue>, timeout: Duration) -> Self {
        RemoteExpert { queue, timeout }
    }

    pub fn queue(&self) -> &Arc<ExpertQueue> {
        &self.queue
    }
}

impl Expert for RemoteExpert {
    fn respond(&mut self, query: &ExpertQuery, ctx: &QueryContext<'_>) -> Result<ExpertResponse, ExpertError> {
        let token = self.queue.enqueue(query.clone(), ctx.ledger.clone())?;
        self.queue.await_response(&token, self.timeout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expert::test_query;
    use crate::gp::ObservationSet;
    use std::thread;

    fn w(v: f64) -> PriorSpec {
        PriorSpec::wiener(v).unwrap()
    }

    #[test]
    fn round_trip() {
        let q = ExpertQueue::new();
        let t = q.enqueue(test_query("a", 1, 8), ConsistencyLedger::default()).unwrap();
        assert_eq!(q.pending().len(), 1);
        q.respond("a", w(1.0), "hi".into()).unwrap();
        assert!(q.pending().is_empty());
        let r = q.await_response(&t, Duration::ZERO).unwrap();
        assert_eq!((r.prior, r.annotation.as_str()), (w(1.0), "hi"));
        // Delivered once only.
        assert!(matches!(q.await_response(&t, Duration::ZERO), Err(ExpertError::UnknownQuery(_))));
        assert!(matches!(q.respond("a", w(1.0), String::new()), Err(RespondError::Unknown(_))));
    }

    #[test]
    fn unknown_id_leaves_queue_unchanged() {
        let q = ExpertQueue::new();
        q.enqueue(test_query("a", 1, 8), ConsistencyLedger::default()).unwrap();
        let before = q.pending();
        assert!(matches!(q.respond("zzz", w(1.0), String::new()), Err(RespondError::Unknown(_))));
        assert_eq!(q.pending(), before);
    }

    #[test]
    fn contradiction_keeps_query_pending() {
        let mut ledger = ConsistencyLedger::new(0.10);
        ledger.admit(1, 8, &w(5.0)).unwrap();
        let q = ExpertQueue::new();
        let t = q.enqueue(test_query("a", 1, 8), ledger).unwrap();
        let err = q.respond("a", w(1.0), String::new()).unwrap_err();
        assert!(matches!(err, RespondError::Contradiction(ref m) if m.contains("variance")));
        assert_eq!(q.pending().len(), 1);
        q.respond("a", w(5.2), String::new()).unwrap();
        assert_eq!(q.await_response(&t, Duration::ZERO).unwrap().prior, w(5.2));
    }

    #[test]
    fn one_open_query_per_run() {
        let q = ExpertQueue::new();
        q.enqueue(test_query("a", 1, 8), ConsistencyLedger::default()).unwrap();
        q.enqueue(test_query("a", 1, 8), ConsistencyLedger::default()).unwrap();
        assert!(matches!(
            q.enqueue(test_query("b", 1, 8), ConsistencyLedger::default()),
            Err(ExpertError::Busy { .. })
        ));
        let mut other = test_query("c", 1, 8);
        other.run_id = "other".into();
        q.enqueue(other, ConsistencyLedger::default()).unwrap();
        let ids: Vec<String> = q.pending().into_iter().map(|p| p.query.query_id).collect();
        assert_eq!(ids, ["a", "c"]);
    }

    #[test]
    fn timeout_then_late_answer() {
        let q = ExpertQueue::new();
        let t = q.enqueue(test_query("a", 1, 8), ConsistencyLedger::default()).unwrap();
        assert!(matches!(q.await_response(&t, Duration::from_millis(20)), Err(ExpertError::Timeout { .. })));
        q.respond("a", w(2.0), String::new()).unwrap();
        assert_eq!(q.await_response(&t, Duration::ZERO).unwrap().prior, w(2.0));
    }

    #[test]
    fn remote_expert_across_threads() {
        let queue = Arc::new(ExpertQueue::new());
        let answerer = {
            let queue = queue.clone();
            thread::spawn(move || loop {
                if let Some(p) = queue.pending().first() {
                    queue.respond(&p.query.query_id, w(3.0), "human".into()).unwrap();
                    return;
                }
                thread::sleep(Duration::from_millis(2));
            })
        };
        let mut expert = RemoteExpert::new(queue.clone(), Duration::from_secs(10));
        let ledger = ConsistencyLedger::default();
        let history = ObservationSet::new();
        let r = expert.respond(&test_query("x", 1, 4), &QueryContext { history: &history, ledger: &ledger }).unwrap();
        answerer.join().unwrap();
        assert_eq!(r.prior, w(3.0));
        assert!(queue.pending().is_empty());
    }
}
