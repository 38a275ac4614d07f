use std::thread;
use std::time::{Duration, Instant};

use prefrl_core::buffers::{Segment, SegmentPair};
use prefrl_core::query::{OracleVerdict, Overseer, SessionContext};
use prefrl_core::trainer::{OracleKind, Precision, RunConfig, Trainer};
use prefrl_label_service::{parse_label, serialize_segment, LabelService, RenderDocument};
use serde_json::{json, Value};

fn client() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

fn get(agent: &ureq::Agent, url: &str) -> (u16, Value) {
    let mut r = agent.get(url).call().unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn post(agent: &ureq::Agent, url: &str, body: &str) -> (u16, Value) {
    let mut r = agent.post(url).header("content-type", "application/json").send(body).unwrap();
    (r.status().as_u16(), r.body_mut().read_json().unwrap())
}

fn segment(id: u64, start: [f64; 2], step: [f64; 2]) -> Segment<f64> {
    let states: Vec<Vec<f64>> = (0..5).map(|k| vec![start[0] + k as f64 * step[0], start[1] + k as f64 * step[1]]).collect();
    let rewards = states.iter().map(|s| -((10.0 - s[0]).hypot(10.0 - s[1]))).collect();
    Segment::new(id, 0, states, vec![step.to_vec(); 5], rewards)
}

fn pairs(n: usize) -> Vec<SegmentPair<f64>> {
    (0..n)
        .map(|k| SegmentPair::new(segment(2 * k as u64, [1.0, 1.0], [0.5, 0.5]), segment(2 * k as u64 + 1, [5.0, 1.0], [-0.5, 0.25])).unwrap())
        .collect()
}

fn context(session: usize) -> SessionContext {
    SessionContext {
        session,
        env_step: 1000,
        feedback_used: 0,
        feedback_total: 8,
        env_name: "point_nav_2d".into(),
    }
}

fn wait_for_pending(agent: &ureq::Agent, base: &str, n: usize) -> Vec<Value> {
    let deadline = Instant::now() + Duration::from_secs(30);
    loop {
        let (code, body) = get(agent, &format!("{base}/queries/pending"));
        assert_eq!(code, 200);
        let list = body.as_array().unwrap().clone();
        if list.len() >= n {
            return list;
        }
        assert!(Instant::now() < deadline, "tickets never appeared");
        thread::sleep(Duration::from_millis(5));
    }
}

#[test]
fn idle_service_has_nothing_pending() {
    let (service, _overseer) = LabelService::start("127.0.0.1:0", None).unwrap();
    let agent = client();
    let (code, body) = get(&agent, &format!("{}/queries/pending", service.url()));
    assert_eq!((code, body), (200, json!([])));
    let (code, status) = get(&agent, &format!("{}/status", service.url()));
    assert_eq!(code, 200);
    assert_eq!(status["pending"], 0);
    assert_eq!(status["active_session"], Value::Null);
    assert_eq!(status["finished"], false);
}

#[test]
fn labels_resolve_tickets_and_reach_the_trainer() {
    let (service, mut overseer) = LabelService::start("127.0.0.1:0", None).unwrap();
    let base = service.url();
    let trainer = thread::spawn(move || {
        let verdicts = Overseer::<f64>::label(&mut overseer, &pairs(3), &context(0)).unwrap();
        (verdicts, overseer)
    });
    let agent = client();
    let tickets = wait_for_pending(&agent, &base, 3);
    let ids: Vec<String> = tickets.iter().map(|t| t["id"].as_str().unwrap().to_string()).collect();
    assert_eq!(ids.len(), 3);
    assert!(ids.iter().all(|id| ids.iter().filter(|o| *o == id).count() == 1));
    for t in &tickets {
        assert_eq!(t["status"], "pending");
        assert_eq!(t["session"], 0);
        assert_eq!(t["segment_0"]["length"], 5);
        assert_eq!(t["segment_1"]["points"].as_array().unwrap().len(), 5);
    }
    let text = serde_json::to_string(&tickets).unwrap();
    assert!(!text.contains("return"), "ground truth leaked: {text}");

    let label = |id: &str| format!("{base}/queries/{id}/label");
    assert_eq!(post(&agent, &label("nope"), r#"{"preference": 1}"#).0, 404);
    for bad in [r#"{"preference": 2}"#, r#"{"preference": "left"}"#, "not json", r#"{}"#, r#"{"preference": 1, "x": 0}"#, r#"[1]"#] {
        assert_eq!(post(&agent, &label(&ids[0]), bad).0, 400, "{bad}");
    }
    let (code, body) = post(&agent, &label(&ids[0]), r#"{"preference": 1}"#);
    assert_eq!((code, body["status"].clone()), (200, json!("labeled")));
    assert_eq!(post(&agent, &label(&ids[0]), r#"{"preference": 0}"#).0, 409);
    let (code, body) = post(&agent, &label(&ids[1]), r#"{"preference": "skip"}"#);
    assert_eq!((code, body["status"].clone()), (200, json!("skipped")));
    assert_eq!(post(&agent, &label(&ids[1]), r#"{"preference": "skip"}"#).0, 409);

    let (_, status) = get(&agent, &format!("{base}/status"));
    assert_eq!((status["pending"].clone(), status["labeled"].clone(), status["skipped"].clone()), (json!(1), json!(1), json!(1)));
    assert_eq!(status["active_session"], 0);
    assert_eq!(post(&agent, &label(&ids[2]), r#"{"preference": 0}"#).0, 200);

    let (verdicts, overseer) = trainer.join().unwrap();
    assert_eq!(verdicts, vec![OracleVerdict::Prefer1, OracleVerdict::Skip, OracleVerdict::Prefer0]);
    let status = overseer.status();
    assert_eq!(status.feedback_used, 2);
    assert_eq!(status.feedback_remaining, 6);
    assert_eq!(status.active_session, None);
    assert!(get(&agent, &format!("{base}/queries/pending")).1.as_array().unwrap().is_empty());
}

#[test]
fn ticket_ids_stay_unique_across_sessions() {
    let (service, mut overseer) = LabelService::start("127.0.0.1:0", None).unwrap();
    let base = service.url();
    let trainer = thread::spawn(move || {
        for s in 0..3 {
            Overseer::<f32>::label(&mut overseer, &narrow(pairs(2)), &context(s)).unwrap();
        }
    });
    let agent = client();
    let mut seen = Vec::new();
    for _ in 0..3 {
        let tickets = wait_for_pending(&agent, &base, 2);
        for t in tickets {
            let id = t["id"].as_str().unwrap().to_string();
            assert!(!seen.contains(&id));
            assert_eq!(post(&agent, &format!("{base}/queries/{id}/label"), r#"{"preference": 0}"#).0, 200);
            seen.push(id);
        }
    }
    trainer.join().unwrap();
    assert_eq!(seen.len(), 6);
}

fn narrow(pairs: Vec<SegmentPair<f64>>) -> Vec<SegmentPair<f32>> {
    let f = |s: &Segment<f64>| {
        let cast = |rows: &[Vec<f64>]| rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        Segment::new(s.trajectory_id, s.start, cast(&s.states), cast(&s.actions), vec![0.0; s.len()])
    };
    pairs.iter().map(|p| SegmentPair::new(f(&p.segment_0), f(&p.segment_1)).unwrap()).collect()
}

#[test]
fn waiting_times_out_when_configured() {
    let (_service, overseer) = LabelService::start("127.0.0.1:0", None).unwrap();
    let mut overseer = overseer.with_timeout(Duration::from_millis(50));
    assert!(Overseer::<f64>::label(&mut overseer, &pairs(1), &context(0)).is_err());
    assert!(Overseer::<f64>::label(&mut overseer, &[], &context(1)).unwrap().is_empty());
}

#[test]
fn render_document_mirrors_the_segment() {
    let seg = segment(3, [1.25, 2.5], [0.1, -0.3]);
    let doc = serialize_segment(&seg, "point_nav_2d");
    assert_eq!(doc.length, 5);
    assert_eq!(doc.points, seg.states);
    assert_eq!(doc.actions, seg.actions);
    let text = serde_json::to_string(&doc).unwrap();
    let keys: Vec<String> = serde_json::from_str::<Value>(&text).unwrap().as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, vec!["actions", "env", "length", "points"]);
    let back: RenderDocument = serde_json::from_str(&text).unwrap();
    for (a, b) in back.points.iter().flatten().zip(doc.points.iter().flatten()) {
        assert!((a - b).abs() <= 1e-12);
    }
    assert_eq!(back, doc);
}

#[test]
fn label_bodies_parse_strictly() {
    assert_eq!(parse_label(br#"{"preference":0}"#), Ok(OracleVerdict::Prefer0));
    assert_eq!(parse_label(br#"{"preference":1}"#), Ok(OracleVerdict::Prefer1));
    assert_eq!(parse_label(br#"{"preference":"skip"}"#), Ok(OracleVerdict::Skip));
    for bad in [&br#"{"preference":1.0}"#[..], br#"{"preference":-1}"#, br#"{"preference":"0"}"#, br#"{"preference":null}"#, b""] {
        assert!(parse_label(bad).is_err());
    }
}

#[test]
fn static_directory_is_served() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>labels</html>").unwrap();
    let (service, _overseer) = LabelService::start("127.0.0.1:0", Some(dir.path().to_path_buf())).unwrap();
    let mut r = client().get(&format!("{}/", service.url())).call().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    assert_eq!(r.body_mut().read_to_string().unwrap(), "<html>labels</html>");
    assert_eq!(client().get(&format!("{}/status", service.url())).call().unwrap().status().as_u16(), 200);
}

/// Judges a rendered segment the way a person would: by how close it ends to the goal.
fn closeness(doc: &Value) -> f64 {
    doc["points"].as_array().unwrap().iter().map(|p| -((10.0 - p[0].as_f64().unwrap()).hypot(10.0 - p[1].as_f64().unwrap()))).sum()
}

#[test]
fn human_labeled_run_spends_exactly_its_budget() {
    let cfg = RunConfig {
        oracle: OracleKind::Human,
        precision: Precision::F64,
        total_steps: 3500,
        warmup_steps: 300,
        feedback_frequency: 200,
        last_feedback_step: 100_000,
        eval_interval: 500,
        eval_episodes: 1,
        sac_hidden: vec![16, 16],
        sac_batch_size: 32,
        reward_hidden: vec![16],
        reward_epochs: 5,
        ensemble_size: 2,
        ..RunConfig::default()
    };
    let (service, mut overseer) = LabelService::start("127.0.0.1:0", None).unwrap();
    let base = service.url();
    let labeler = thread::spawn(move || {
        let agent = client();
        let mut handled = 0usize;
        let mut skipped = 0usize;
        loop {
            let (_, status) = get(&agent, &format!("{base}/status"));
            let (_, pending) = get(&agent, &format!("{base}/queries/pending"));
            let pending = pending.as_array().unwrap().clone();
            if pending.is_empty() {
                if status["finished"] == true {
                    return (handled, skipped);
                }
                thread::sleep(Duration::from_millis(2));
                continue;
            }
            let remaining_before = status["feedback_remaining"].as_u64().unwrap();
            for t in pending {
                let body = if handled % 3 == 1 {
                    skipped += 1;
                    r#"{"preference": "skip"}"#.to_string()
                } else {
                    let pick = u8::from(closeness(&t["segment_1"]) > closeness(&t["segment_0"]));
                    format!(r#"{{"preference": {pick}}}"#)
                };
                let id = t["id"].as_str().unwrap();
                let (code, reply) = post(&agent, &format!("{base}/queries/{id}/label"), &body);
                assert_eq!(code, 200, "{reply}");
                handled += 1;
                if body.contains("skip") {
                    let (_, after) = get(&agent, &format!("{base}/status"));
                    assert!(after["feedback_remaining"].as_u64().unwrap() >= remaining_before);
                }
            }
        }
    });
    let mut trainer = Trainer::<f64>::new(cfg).unwrap();
    let summary = trainer.run(&mut overseer).unwrap();
    overseer.finish();
    let (handled, skipped) = labeler.join().unwrap();
    assert_eq!(summary.feedback_used, 8);
    assert_eq!(trainer.preferences().len(), 8);
    assert_eq!(handled, 8 + skipped);
    assert_eq!(summary.sessions.len(), handled);
    assert_eq!(summary.sessions.iter().filter(|s| s.stored == 0).count(), skipped);
    assert!(skipped >= 3);
    assert_eq!(overseer.status().feedback_used, 8);
    assert_eq!(summary.steps_run, 3500);
}
