use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    build_prompt, check_unique, ChatMessage, ChatProvider, Completion, GenError, GenerationJob, JobStatus,
    PromptTemplate,
};
use crate::corpus::{PersonaDocument, Source};
use crate::net::{bounded_map, HttpError, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JournalEvent {
    Retry,
    Done,
    Failed,
}

/// One line of the batch journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub job: String,
    pub document_id: String,
    pub event: JournalEvent,
    pub attempt: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub age_in_prompt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<Completion>,
}

/// Append-only JSONL record of a batch, keyed by job hash. Reopening a
/// journal makes its completed jobs available for resumption.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    writer: Mutex<File>,
    done: HashMap<String, Completion>,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self, GenError> {
        let err = |e: std::io::Error| GenError::Journal { path: path.display().to_string(), message: e.to_string() };
        let mut done = HashMap::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path).map_err(err)?).lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from a killed run is skipped, not fatal.
                let entry: JournalEntry = match serde_json::from_str(&line) {
                    Ok(e) => e,
                    Err(e) => {
                        log::warn!("{}:{}: skipping unreadable journal line: {e}", path.display(), i + 1);
                        continue;
                    }
                };
                if let (JournalEvent::Done, Some(c)) = (entry.event, entry.completion) {
                    done.insert(entry.job, c);
                }
            }
        }
        let writer = OpenOptions::new().create(true).append(true).open(path).map_err(err)?;
        Ok(Journal { path: path.to_owned(), writer: Mutex::new(writer), done })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn completed(&self, job_hash: &str) -> Option<&Completion> {
        self.done.get(job_hash)
    }

    pub fn append(&self, entry: &JournalEntry) -> Result<(), GenError> {
        let mut line = serde_json::to_string(entry).expect("journal entry serializes");
        line.push('\n');
        let mut w = self.writer.lock().expect("journal lock");
        w.write_all(line.as_bytes())
            .and_then(|_| w.flush())
            .map_err(|e| GenError::Journal { path: self.path.display().to_string(), message: e.to_string() })
    }

    pub fn entries(&self) -> Result<Vec<JournalEntry>, GenError> {
        let text = std::fs::read_to_string(&self.path)
            .map_err(|e| GenError::Journal { path: self.path.display().to_string(), message: e.to_string() })?;
        Ok(text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLimits {
    pub max_inflight: usize,
    pub retry: RetryPolicy,
}

impl Default for BatchLimits {
    fn default() -> Self {
        BatchLimits { max_inflight: 4, retry: RetryPolicy::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobFailure {
    pub document_id: String,
    pub job: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct BatchOutcome {
    /// One per successful job, in job order.
    pub documents: Vec<PersonaDocument>,
    pub failures: Vec<JobFailure>,
    /// Jobs taken from the journal without a request.
    pub resumed: usize,
    /// Requests issued, including retries.
    pub requests: usize,
    pub retries: usize,
}

fn document_for(job: &GenerationJob, text: String) -> PersonaDocument {
    PersonaDocument {
        id: job.document_id(),
        text,
        question: job.question,
        source: Source::Model(job.model.clone()),
        prompt_setting: Some(job.setting),
        profile: job.profile.profile.clone(),
        participant: Some(job.persona_id()),
    }
}

enum JobResult {
    Done(Completion),
    Failed(String),
}

/// Run every job against its model's provider.
///
/// Jobs already completed in the journal are not re-requested. Transient
/// failures are retried per `limits.retry`; a job that still fails is
/// recorded and the batch carries on. Quota exhaustion stops new requests
/// and returns [`GenError::QuotaExceeded`] once in-flight jobs settle; the
/// journal then holds everything finished so far.
pub fn run_batch(
    jobs: &mut [GenerationJob],
    providers: &BTreeMap<String, Arc<dyn ChatProvider>>,
    template: &PromptTemplate,
    limits: &BatchLimits,
    journal: Option<&Journal>,
) -> Result<BatchOutcome, GenError> {
    check_unique(jobs)?;
    let prompts: Vec<String> = jobs.iter().map(|j| build_prompt(j, template)).collect::<Result<_, _>>()?;
    for j in jobs.iter() {
        if !providers.contains_key(&j.model) {
            return Err(GenError::UnknownModel(j.model.clone()));
        }
    }
    let hashes: Vec<String> = jobs.iter().map(GenerationJob::hash).collect();
    let requests = AtomicUsize::new(0);
    let retries = AtomicUsize::new(0);
    let mut resumed = 0;

    let mut results: Vec<Option<JobResult>> = Vec::with_capacity(jobs.len());
    let mut todo = Vec::new();
    for (i, h) in hashes.iter().enumerate() {
        match journal.and_then(|jr| jr.completed(h)) {
            Some(c) => {
                resumed += 1;
                results.push(Some(JobResult::Done(c.clone())));
            }
            None => {
                results.push(None);
                todo.push(i);
            }
        }
    }

    let jobs_ref: &[GenerationJob] = jobs;
    let run_one = |_: usize, &i: &usize| -> Result<Completion, (HttpError, u32)> {
        let job = &jobs_ref[i];
        let provider = &providers[&job.model];
        let messages = [ChatMessage::user(prompts[i].clone())];
        let mut last_attempt = 0;
        let mut last_error = String::new();
        limits
            .retry
            .run(
                |attempt| {
                    last_attempt = attempt;
                    if attempt > 0 {
                        retries.fetch_add(1, Ordering::SeqCst);
                        if let Some(jr) = journal {
                            let _ = jr.append(&JournalEntry {
                                job: hashes[i].clone(),
                                document_id: job.document_id(),
                                event: JournalEvent::Retry,
                                attempt,
                                error: Some(last_error.clone()),
                                age_in_prompt: None,
                                completion: None,
                            });
                        }
                    }
                    requests.fetch_add(1, Ordering::SeqCst);
                    provider.complete(&messages, job.temperature).inspect_err(|e| last_error = e.to_string())
                },
                HttpError::is_retryable,
            )
            .map_err(|e| (e, last_attempt))
    };
    let fresh = bounded_map(&todo, limits.max_inflight, run_one, |(e, _)| matches!(e, HttpError::Quota(_)));

    let mut quota: Option<String> = None;
    for (&i, r) in todo.iter().zip(fresh) {
        let job = &jobs[i];
        let entry = |event, attempt, error, completion| JournalEntry {
            job: hashes[i].clone(),
            document_id: job.document_id(),
            event,
            attempt,
            error,
            age_in_prompt: Some(job.profile.profile.age_band.representative_age()),
            completion,
        };
        match r {
            None => {}
            Some(Ok(c)) => {
                if let Some(jr) = journal {
                    jr.append(&entry(JournalEvent::Done, 0, None, Some(c.clone())))?;
                }
                results[i] = Some(JobResult::Done(c));
            }
            Some(Err((HttpError::Quota(m), _))) => {
                quota.get_or_insert(m);
            }
            Some(Err((e, attempt))) => {
                let reason = format!("provider unavailable after {} attempt(s): {e}", attempt + 1);
                if let Some(jr) = journal {
                    jr.append(&entry(JournalEvent::Failed, attempt, Some(reason.clone()), None))?;
                }
                results[i] = Some(JobResult::Failed(reason));
            }
        }
    }

    let mut outcome = BatchOutcome {
        resumed,
        requests: requests.into_inner(),
        retries: retries.into_inner(),
        ..BatchOutcome::default()
    };
    for (job, r) in jobs.iter_mut().zip(results) {
        match r {
            Some(JobResult::Done(c)) => {
                job.status = JobStatus::Done;
                outcome.documents.push(document_for(job, c.text));
            }
            Some(JobResult::Failed(reason)) => {
                job.status = JobStatus::Failed(reason.clone());
                outcome.failures.push(JobFailure { document_id: job.document_id(), job: job.hash(), reason });
            }
            None => job.status = JobStatus::Pending,
        }
    }
    if let Some(m) = quota {
        return Err(GenError::QuotaExceeded(m));
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::PromptSetting;
    use crate::genharness::tests::full_profile;
    use crate::genharness::{plan_jobs, StubProvider};

    type Providers = BTreeMap<String, Arc<dyn ChatProvider>>;

    fn setup(models: &[&str]) -> (Vec<GenerationJob>, Vec<Arc<StubProvider>>, Providers) {
        let models: Vec<String> = models.iter().map(|s| s.to_string()).collect();
        let jobs = plan_jobs(&[full_profile("a"), full_profile("b")], &PromptSetting::ALL, &models, 1.0).unwrap();
        let stubs: Vec<Arc<StubProvider>> = models.iter().map(|m| Arc::new(StubProvider::new(m.clone()))).collect();
        let providers =
            models.iter().zip(&stubs).map(|(m, s)| (m.clone(), s.clone() as Arc<dyn ChatProvider>)).collect();
        (jobs, stubs, providers)
    }

    fn limits(retries: u32) -> BatchLimits {
        BatchLimits { max_inflight: 3, retry: RetryPolicy::immediate(retries) }
    }

    #[test]
    fn full_batch_and_retry() {
        let (mut jobs, stubs, providers) = setup(&["stub"]);
        let t = PromptTemplate::default();
        stubs[0].fail_prompt(&build_prompt(&jobs[3], &t).unwrap(), 1, HttpError::Transient("flaky".into()));
        let dir = tempfile::tempdir().unwrap();
        let journal = Journal::open(&dir.path().join("j.jsonl")).unwrap();
        let out = run_batch(&mut jobs, &providers, &t, &limits(1), Some(&journal)).unwrap();
        assert_eq!(out.documents.len(), 48);
        assert_eq!(out.retries, 1);
        assert_eq!(out.requests, 49);
        let entries = journal.entries().unwrap();
        let retry: Vec<_> = entries.iter().filter(|e| e.event == JournalEvent::Retry).collect();
        assert_eq!(retry.len(), 1);
        assert_eq!(retry[0].document_id, jobs[3].document_id());
        assert!(jobs.iter().all(|j| j.status == JobStatus::Done));
        let d = &out.documents[0];
        assert_eq!(d.source, Source::Model("stub".into()));
        assert_eq!(d.prompt_setting, Some(PromptSetting::RaceOnly));
    }

    #[test]
    fn exhausted_retries_are_recorded() {
        let (mut jobs, stubs, providers) = setup(&["stub"]);
        let t = PromptTemplate::default();
        stubs[0].fail_prompt(&build_prompt(&jobs[0], &t).unwrap(), 5, HttpError::Transient("down".into()));
        let out = run_batch(&mut jobs, &providers, &t, &limits(2), None).unwrap();
        assert_eq!(out.documents.len(), 47);
        assert_eq!(out.failures.len(), 1);
        assert!(matches!(jobs[0].status, JobStatus::Failed(_)));
    }

    #[test]
    fn resume_only_requests_unfinished_jobs() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("j.jsonl");
        let t = PromptTemplate::default();

        let (mut jobs, _, _) = setup(&["stub"]);
        let quota_stub = Arc::new(StubProvider::new("stub").with_quota(20));
        let providers: BTreeMap<String, Arc<dyn ChatProvider>> =
            [("stub".to_string(), quota_stub as Arc<dyn ChatProvider>)].into();
        let journal = Journal::open(&path).unwrap();
        let r = run_batch(&mut jobs, &providers, &t, &limits(0), Some(&journal));
        assert!(matches!(r, Err(GenError::QuotaExceeded(_))));
        drop(journal);

        let (mut jobs, stubs, providers) = setup(&["stub"]);
        let journal = Journal::open(&path).unwrap();
        let out = run_batch(&mut jobs, &providers, &t, &limits(0), Some(&journal)).unwrap();
        assert_eq!(out.documents.len(), 48);
        assert_eq!(out.resumed, 20);
        assert_eq!(stubs[0].calls(), 28);

        let (mut fresh_jobs, _, fresh_providers) = setup(&["stub"]);
        let clean = run_batch(&mut fresh_jobs, &fresh_providers, &t, &limits(0), None).unwrap();
        assert_eq!(clean.documents, out.documents);
    }

    #[test]
    fn unknown_model_rejected() {
        let (mut jobs, _, _) = setup(&["stub"]);
        let r = run_batch(&mut jobs, &BTreeMap::new(), &PromptTemplate::default(), &limits(0), None);
        assert!(matches!(r, Err(GenError::UnknownModel(_))));
    }
}
