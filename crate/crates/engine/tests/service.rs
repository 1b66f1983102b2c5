mod common;

use std::fs::OpenOptions;
use std::io::Write;
use std::sync::Arc;
use std::time::Duration;

use common::*;
use stepwise::service::{FileStorage, MemoryStorage, Service, ServiceError, Storage, EVENTS_JOURNAL};
use stepwise_core::{ResponseMode, StepStatus};

#[test]
fn replay_after_kill_matches_uninterrupted_run() {
    let reference = drive(Service::open(Arc::new(MemoryStorage::new()), scripted_pipeline()).unwrap(), 7, |_, s, _| s);

    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let open = || Service::open(Arc::new(FileStorage::new(&root)), scripted_pipeline()).unwrap();
    let killed = drive(open(), 7, |op, service, id| {
        if op % 3 != 2 {
            return service;
        }
        drop(service);
        // A write torn by the crash.
        let path = FileStorage::new(&root).session_dir(id).join(EVENTS_JOURNAL);
        let mut f = OpenOptions::new().append(true).open(path).unwrap();
        f.write_all(br#"{"seq": 999, "events": [{"type": "sent"#).unwrap();
        open()
    });
    assert_eq!(killed, reference);

    let again = open();
    let ids = again.session_ids();
    assert_eq!(ids.len(), 1);
    let state = again.state(&ids[0]).unwrap();
    assert_eq!(state.steps.len(), 8);
    assert_eq!(state.questions.len(), 2);
}

#[test]
fn batching_does_not_change_the_outcome() {
    let one = drive(Service::open(Arc::new(MemoryStorage::new()), scripted_pipeline()).unwrap(), 1, |_, s, _| s);
    let many = drive(Service::open(Arc::new(MemoryStorage::new()), scripted_pipeline()).unwrap(), 13, |_, s, _| s);
    assert_eq!(one.steps, many.steps);
    assert_eq!(
        one.questions.iter().map(|q| &q.0).collect::<Vec<_>>(),
        many.questions.iter().map(|q| &q.0).collect::<Vec<_>>()
    );
}

fn golden_service() -> (Service, String) {
    let service = Service::open(Arc::new(MemoryStorage::new()), oracle_pipeline()).unwrap();
    let id = service.create_session().unwrap();
    service.append_events(&id, golden_events()).unwrap();
    (service, id)
}

#[test]
fn accepted_inference_resolves_strong_and_repeats_are_idempotent() {
    let (service, id) = golden_service();
    let qid = format!("{id}.s4");
    let first = service.submit_response(&qid, body(ResponseMode::Accepted, None)).unwrap();
    assert_eq!(first.status, StepStatus::ResolvedStrong);
    let step = service.steps(&id).unwrap().steps.into_iter().find(|s| s.step_id == "s4").unwrap();
    let inferred = step.exchange.as_ref().unwrap().inferred_rationale.as_ref().unwrap().text.clone();
    assert_eq!(step.summary.as_ref().unwrap().rationale, inferred);

    let repeat = service.submit_response(&qid, body(ResponseMode::Accepted, None)).unwrap();
    assert_eq!(repeat, first);
    let other = service.submit_response(&qid, body(ResponseMode::Answered, Some("because")));
    assert!(matches!(other, Err(ServiceError::AlreadyResolved)));
}

#[test]
fn rejection_leaves_the_question_open() {
    let (service, id) = golden_service();
    let qid = format!("{id}.s4");
    let rejected = service.submit_response(&qid, body(ResponseMode::Rejected, None)).unwrap();
    assert_eq!(rejected.status, StepStatus::QuestionPending);
    let answered = service
        .submit_response(&qid, body(ResponseMode::Supplemented, Some("The cards needed room for the price line.")))
        .unwrap();
    assert!(answered.status.is_resolved());
    assert!(answered.revision > rejected.revision);
}

#[test]
fn answer_without_inference_is_reevaluated() {
    let (service, id) = golden_service();
    let qid = format!("{id}.s2");
    let r = service
        .submit_response(&qid, body(ResponseMode::Answered, Some("Orange reads as warm and matches the brand.")))
        .unwrap();
    assert_eq!(r.status, StepStatus::ResolvedStrong);
    let doc = service.documentation(&id).unwrap();
    let entry = doc.steps.iter().find(|s| s.step_id == "s2").unwrap();
    assert_eq!(entry.rationale.as_deref(), Some("Orange reads as warm and matches the brand."));
    assert!(entry.qa.as_ref().unwrap().response.is_some());
}

#[test]
fn unknown_ids_and_bad_events() {
    let (service, id) = golden_service();
    assert!(matches!(service.submit_response("nope.s1", body(ResponseMode::Accepted, None)), Err(ServiceError::UnknownQuestion(_))));
    assert!(matches!(
        service.submit_response(&format!("{id}.s0"), body(ResponseMode::Accepted, None)),
        Err(ServiceError::UnknownQuestion(_))
    ));
    assert!(matches!(service.append_events("missing", vec![]), Err(ServiceError::UnknownSession(_))));
    let before = service.state(&id).unwrap().revision;
    let stale = golden_events().into_iter().find(|e| matches!(e, stepwise_core::SessionEvent::Action(_))).unwrap();
    assert!(matches!(service.append_events(&id, vec![stale]), Err(ServiceError::InvalidEvent { .. })));
    assert_eq!(service.state(&id).unwrap().revision, before);
}

#[test]
fn storage_failure_leaves_state_unchanged() {
    let storage = Arc::new(MemoryStorage::new());
    let service = Service::open(storage.clone(), oracle_pipeline()).unwrap();
    let id = service.create_session().unwrap();
    let events = golden_events();
    service.append_events(&id, events[..10].to_vec()).unwrap();
    let before = service.steps(&id).unwrap();
    storage.set_failing(true);
    assert!(matches!(service.append_events(&id, events[10..].to_vec()), Err(ServiceError::StorageFailure(_))));
    assert_eq!(service.steps(&id).unwrap(), before);
    storage.set_failing(false);
    service.append_events(&id, events[10..].to_vec()).unwrap();
    assert_eq!(service.state(&id).unwrap().steps.len(), 8);
    assert_eq!(storage.sessions().unwrap(), vec![id]);
}

#[tokio::test]
async fn poll_waits_for_new_questions() {
    let service = Arc::new(
        Service::open(Arc::new(MemoryStorage::new()), oracle_pipeline())
            .unwrap()
            .with_poll_timeout(Duration::from_secs(5)),
    );
    let id = service.create_session().unwrap();
    let rev = service.state(&id).unwrap().revision;

    let idle = service.poll_questions(&id, rev, Duration::from_millis(50)).await.unwrap();
    assert!(idle.questions.is_empty());
    assert_eq!(idle.revision, rev);

    let waiter = {
        let service = Arc::clone(&service);
        let id = id.clone();
        tokio::spawn(async move { service.poll_questions(&id, rev, Duration::from_secs(5)).await })
    };
    let appender = {
        let service = Arc::clone(&service);
        let id = id.clone();
        tokio::task::spawn_blocking(move || service.append_events(&id, golden_events()).unwrap())
    };
    appender.await.unwrap();
    let page = waiter.await.unwrap().unwrap();
    assert!(page.revision > rev);

    let all = service.poll_questions(&id, 0, Duration::from_millis(10)).await.unwrap();
    let ids: Vec<&str> = all.questions.iter().map(|q| q.step_id.as_str()).collect();
    assert_eq!(ids, ["s2", "s4"]);
    assert!(all.questions[1].inferred_rationale.is_some());
    assert!(all.questions.iter().all(|q| q.open && q.anchor.is_some()));
}
