use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use adaptest_core::bank::ItemBank;
use adaptest_core::engine::{Session, SessionResult};
use adaptest_core::store::{AttemptRecord, AttemptStore, CohortDataset, StoreError};
use chrono::{DateTime, Utc};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
pub struct ManualClock(Mutex<DateTime<Utc>>);

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        ManualClock(Mutex::new(start))
    }

    pub fn advance(&self, by: chrono::Duration) {
        *self.0.lock().unwrap() += by;
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.0.lock().unwrap() = t;
    }
}

impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().unwrap()
    }
}

pub enum IdSource {
    Random,
    /// `s000001`, `s000002`, ... for reproducible tests.
    Sequential(AtomicU64),
}

impl IdSource {
    fn next(&self) -> String {
        match self {
            IdSource::Random => uuid::Uuid::new_v4().simple().to_string(),
            IdSource::Sequential(n) => format!("s{:06}", n.fetch_add(1, Ordering::Relaxed) + 1),
        }
    }
}

/// A live or finished session plus who it belongs to.
pub struct SessionEntry {
    pub session: Session,
    pub student_id: String,
    pub cohort_id: String,
    pub test_id: String,
    pub recorded: bool,
}

impl SessionEntry {
    /// Writes the attempt record once the session has ended. Safe to call
    /// repeatedly: only the first call stores anything.
    pub fn record(&mut self, store: &AttemptStore, result: &SessionResult) -> Result<(), StoreError> {
        if self.recorded {
            return Ok(());
        }
        let record = AttemptRecord::from_session(result, &self.student_id, &self.cohort_id, &self.test_id);
        store.append(record)?;
        self.recorded = true;
        Ok(())
    }
}

pub struct AppState {
    pub banks: RwLock<HashMap<String, Arc<ItemBank>>>,
    pub sessions: RwLock<HashMap<String, Arc<Mutex<SessionEntry>>>>,
    pub store: Arc<AttemptStore>,
    /// Read-only datasets loaded at startup, reported alongside live records.
    pub datasets: Vec<CohortDataset>,
    pub clock: Arc<dyn Clock>,
    pub ids: IdSource,
    /// Bearer token required on every request, when set.
    pub token: Option<String>,
}

impl AppState {
    pub fn new(store: Arc<AttemptStore>, clock: Arc<dyn Clock>) -> AppState {
        AppState {
            banks: RwLock::default(),
            sessions: RwLock::default(),
            store,
            datasets: Vec::new(),
            clock,
            ids: IdSource::Random,
            token: None,
        }
    }

    pub fn next_id(&self) -> String {
        self.ids.next()
    }

    pub fn add_bank(&self, bank: ItemBank) -> bool {
        let mut banks = self.banks.write().unwrap();
        if banks.contains_key(&bank.bank_id) {
            return false;
        }
        banks.insert(bank.bank_id.clone(), Arc::new(bank));
        true
    }

    pub fn session(&self, id: &str) -> Option<Arc<Mutex<SessionEntry>>> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    /// Expires every session past its deadline and records it. Returns how
    /// many were expired by this call.
    pub fn sweep_expired(&self) -> usize {
        let now = self.clock.now();
        let entries: Vec<_> = self.sessions.read().unwrap().values().cloned().collect();
        let mut expired = 0;
        for entry in entries {
            let mut e = entry.lock().unwrap();
            if e.recorded || !e.session.check_expiry(now) {
                continue;
            }
            if let Ok(result) = e.session.result() {
                match e.record(&self.store, &result) {
                    Ok(()) => expired += 1,
                    Err(err) => tracing::error!(session = e.session.id(), "cannot record attempt: {err}"),
                }
            }
        }
        expired
    }

    /// Stored records merged with the startup datasets, by cohort.
    pub fn cohorts(&self) -> Vec<CohortDataset> {
        let mut out = self.datasets.clone();
        for d in CohortDataset::partition(self.store.records()) {
            match out.iter_mut().find(|o| o.cohort_id == d.cohort_id) {
                Some(o) => o.attempts.extend(d.attempts),
                None => out.push(d),
            }
        }
        out
    }
}
