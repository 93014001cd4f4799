use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use sentifuse_annotation::{
    Campaign, CampaignError, CampaignStore, CompletionReason, FormStatus, GradeInput, NextBlock,
    DEFAULT_LEASE_SECS,
};
use sentifuse_core::dataset::{aggregate_per_image, dedupe_grades};

fn images(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("img{i:03}")).collect()
}

fn grades_for(images: &[String], grade: i64) -> Vec<GradeInput> {
    images
        .iter()
        .map(|image_id| GradeInput {
            image_id: image_id.clone(),
            grade,
        })
        .collect()
}

fn lease(store: &CampaignStore, campaign: &str, volunteer: &str) -> (String, Vec<String>) {
    match store.next_block(campaign, volunteer).unwrap() {
        NextBlock::Form {
            form_id, images, ..
        } => (form_id, images),
        other => panic!("expected a form, got {other:?}"),
    }
}

fn fake_clock(start: u64) -> (Arc<AtomicU64>, sentifuse_annotation::Clock) {
    let now = Arc::new(AtomicU64::new(start));
    let c = now.clone();
    (now, Arc::new(move || c.load(Ordering::SeqCst)))
}

#[test]
fn simulated_campaign_drains_with_enough_distinct_raters() {
    let store = CampaignStore::in_memory();
    store
        .create_campaign(Campaign::new("sim", images(60), 11))
        .unwrap();
    let volunteers: Vec<String> = (0..12).map(|v| format!("vol{v:02}")).collect();
    let mut done: HashSet<String> = HashSet::new();
    let mut graded: HashMap<String, HashSet<String>> = HashMap::new();
    let mut rounds = 0;
    while done.len() < volunteers.len() {
        rounds += 1;
        assert!(rounds < 100, "campaign did not drain");
        for (k, v) in volunteers.iter().enumerate() {
            if done.contains(v) {
                continue;
            }
            match store.next_block("sim", v).unwrap() {
                NextBlock::Form {
                    form_id, images, ..
                } => {
                    let seen = graded.entry(v.clone()).or_default();
                    for img in &images {
                        assert!(seen.insert(img.clone()), "{v} got {img} twice");
                    }
                    let grade = 1 + ((k + images.len()) % 5) as i64;
                    store
                        .submit_grades(&form_id, v, &grades_for(&images, grade))
                        .unwrap();
                }
                NextBlock::Complete { .. } => {
                    done.insert(v.clone());
                }
            }
        }
    }
    let status = store.status("sim").unwrap();
    assert_eq!(status.submitted, 20);
    assert!(status.complete);
    let export = store.export("sim").unwrap();
    assert!(export.complete);
    assert_eq!(export.images.len(), 60);
    assert!(export.images.iter().all(|i| i.distinct_raters >= 5));
    let mut pairs = HashSet::new();
    for g in &export.grades {
        assert!(pairs.insert((g.image_id.clone(), g.volunteer_id.clone())));
    }
    // The export feeds straight into label aggregation.
    let deduped = dedupe_grades(&export.grades);
    assert_eq!(deduped.len(), export.grades.len());
    assert_eq!(aggregate_per_image(&deduped).unwrap().len(), 60);
    assert_eq!(
        store.next_block("sim", "latecomer").unwrap(),
        NextBlock::Complete {
            reason: CompletionReason::CampaignComplete
        }
    );
}

#[test]
fn submission_errors_have_distinct_codes() {
    let store = CampaignStore::in_memory();
    store
        .create_campaign(Campaign::new("c", images(30), 2))
        .unwrap();
    let (form, imgs) = lease(&store, "c", "alice");

    let err = store
        .submit_grades(&form, "alice", &grades_for(&imgs[..14], 3))
        .unwrap_err();
    assert_eq!(err.code(), "incomplete_block");
    assert!(err.to_string().contains("incomplete block"));

    let mut bad = grades_for(&imgs, 3);
    bad[4].grade = 6;
    let err = store.submit_grades(&form, "alice", &bad).unwrap_err();
    assert_eq!(err.code(), "grade_out_of_range");
    assert!(err.to_string().contains("grade out of range"));
    bad[4].grade = 0;
    assert_eq!(
        store
            .submit_grades(&form, "alice", &bad)
            .unwrap_err()
            .code(),
        "grade_out_of_range"
    );

    let mut dup = grades_for(&imgs, 3);
    dup[1].image_id = dup[0].image_id.clone();
    assert_eq!(
        store
            .submit_grades(&form, "alice", &dup)
            .unwrap_err()
            .code(),
        "invalid_grades"
    );

    let err = store
        .submit_grades(&form, "bob", &grades_for(&imgs, 3))
        .unwrap_err();
    assert_eq!(err.code(), "lease_mismatch");

    assert_eq!(
        store
            .submit_grades("nope", "alice", &grades_for(&imgs, 3))
            .unwrap_err()
            .code(),
        "unknown_form"
    );

    assert_eq!(
        store
            .submit_grades(&form, "alice", &grades_for(&imgs, 4))
            .unwrap(),
        15
    );
    let err = store
        .submit_grades(&form, "alice", &grades_for(&imgs, 4))
        .unwrap_err();
    assert!(matches!(err, CampaignError::AlreadySubmitted(_)));
    assert_eq!(err.code(), "already_submitted");

    let codes: HashSet<&str> = [
        "incomplete_block",
        "grade_out_of_range",
        "lease_mismatch",
        "already_submitted",
        "unknown_form",
        "invalid_grades",
    ]
    .into();
    assert_eq!(codes.len(), 6);
}

#[test]
fn volunteer_never_receives_overlapping_forms() {
    let store = CampaignStore::in_memory();
    let mut c = Campaign::new("c", images(30), 3);
    c.min_raters = 3;
    store.create_campaign(c).unwrap();
    let (f1, i1) = lease(&store, "c", "v");
    // Retrying returns the held lease.
    assert_eq!(lease(&store, "c", "v").0, f1);
    store.submit_grades(&f1, "v", &grades_for(&i1, 2)).unwrap();
    let (f2, i2) = lease(&store, "c", "v");
    assert!(i2.iter().all(|i| !i1.contains(i)));
    store.submit_grades(&f2, "v", &grades_for(&i2, 2)).unwrap();
    assert_eq!(
        store.next_block("c", "v").unwrap(),
        NextBlock::Complete {
            reason: CompletionReason::NoEligibleForm
        }
    );
}

#[test]
fn forms_per_volunteer_caps_assignments() {
    let store = CampaignStore::in_memory();
    let mut c = Campaign::new("c", images(60), 3);
    c.forms_per_volunteer = 2;
    store.create_campaign(c).unwrap();
    for _ in 0..2 {
        let (f, i) = lease(&store, "c", "v");
        store.submit_grades(&f, "v", &grades_for(&i, 5)).unwrap();
    }
    assert_eq!(
        store.next_block("c", "v").unwrap(),
        NextBlock::Complete {
            reason: CompletionReason::VolunteerLimit
        }
    );
}

#[test]
fn leases_expire_back_to_open() {
    let (now, clock) = fake_clock(1_000);
    let store = CampaignStore::in_memory().with_clock(clock);
    store
        .create_campaign(Campaign::new("c", images(15), 1))
        .unwrap();
    let (form, imgs) = lease(&store, "c", "slow");
    assert_eq!(store.status("c").unwrap().in_progress, 1);
    now.store(1_000 + DEFAULT_LEASE_SECS - 1, Ordering::SeqCst);
    assert_eq!(store.status("c").unwrap().in_progress, 1);
    now.store(1_000 + DEFAULT_LEASE_SECS, Ordering::SeqCst);
    let status = store.status("c").unwrap();
    assert_eq!((status.open, status.in_progress), (5, 0));
    let err = store
        .submit_grades(&form, "slow", &grades_for(&imgs, 3))
        .unwrap_err();
    assert_eq!(err.code(), "lease_mismatch");
    let (again, _) = lease(&store, "c", "fast");
    assert_eq!(again, form);
}

#[test]
fn custom_lease_timeout() {
    let (now, clock) = fake_clock(0);
    let store = CampaignStore::in_memory()
        .with_clock(clock)
        .with_lease_secs(60);
    store
        .create_campaign(Campaign::new("c", images(15), 1))
        .unwrap();
    lease(&store, "c", "a");
    now.store(60, Ordering::SeqCst);
    let forms = store.forms("c").unwrap();
    assert!(forms.iter().all(|f| f.status == FormStatus::Open));
}

#[test]
fn concurrent_volunteers_never_share_a_form() {
    let store = Arc::new(CampaignStore::in_memory());
    let mut c = Campaign::new("c", images(150), 5);
    c.min_raters = 4;
    store.create_campaign(c).unwrap();
    let handles: Vec<_> = (0..16)
        .map(|v| {
            let store = store.clone();
            std::thread::spawn(
                move || match store.next_block("c", &format!("v{v}")).unwrap() {
                    NextBlock::Form { form_id, .. } => Some(form_id),
                    NextBlock::Complete { .. } => None,
                },
            )
        })
        .collect();
    let forms: Vec<String> = handles
        .into_iter()
        .filter_map(|h| h.join().unwrap())
        .collect();
    let distinct: HashSet<_> = forms.iter().collect();
    assert_eq!(forms.len(), 16);
    assert_eq!(distinct.len(), 16);
}

#[test]
fn campaign_validation() {
    let store = CampaignStore::in_memory();
    assert_eq!(
        store
            .create_campaign(Campaign::new("c", images(10), 0))
            .unwrap_err()
            .code(),
        "block_larger_than_campaign"
    );
    assert_eq!(
        store
            .create_campaign(Campaign::new("c", vec![], 0))
            .unwrap_err()
            .code(),
        "invalid_campaign"
    );
    store
        .create_campaign(Campaign::new("c", images(15), 0))
        .unwrap();
    assert_eq!(
        store
            .create_campaign(Campaign::new("c", images(15), 0))
            .unwrap_err()
            .code(),
        "duplicate_campaign"
    );
    assert_eq!(
        store.next_block("zzz", "v").unwrap_err().code(),
        "unknown_campaign"
    );
    assert_eq!(
        store.next_block("c", "").unwrap_err().code(),
        "invalid_volunteer"
    );
}

#[test]
fn event_log_replays_to_the_same_state() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("campaigns.log");
    let (_, clock) = fake_clock(500);
    {
        let store = CampaignStore::open_with(&path, DEFAULT_LEASE_SECS, clock.clone()).unwrap();
        store
            .create_campaign(Campaign::new("c", images(30), 8))
            .unwrap();
        let (f, i) = lease(&store, "c", "a");
        store.submit_grades(&f, "a", &grades_for(&i, 4)).unwrap();
        lease(&store, "c", "b");
    }
    let reopened = CampaignStore::open_with(&path, DEFAULT_LEASE_SECS, clock.clone()).unwrap();
    let status = reopened.status("c").unwrap();
    assert_eq!((status.submitted, status.in_progress), (1, 1));
    assert_eq!(reopened.export("c").unwrap().grades.len(), 15);

    // A torn trailing write is discarded and the log stays appendable.
    {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(&path)
            .unwrap();
        f.write_all(b"{\"event\":\"submitted\",\"campa").unwrap();
    }
    let store = CampaignStore::open_with(&path, DEFAULT_LEASE_SECS, clock.clone()).unwrap();
    let (f, i) = lease(&store, "c", "b");
    store.submit_grades(&f, "b", &grades_for(&i, 2)).unwrap();
    drop(store);
    let again = CampaignStore::open_with(&path, DEFAULT_LEASE_SECS, clock).unwrap();
    assert_eq!(again.status("c").unwrap().submitted, 2);
}

#[test]
fn corrupt_log_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("campaigns.log");
    std::fs::write(&path, "not json\n{}\n").unwrap();
    assert_eq!(CampaignStore::open(&path).unwrap_err().code(), "storage");
}
