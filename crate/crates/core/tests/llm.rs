mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use proptest::prelude::*;
use trajbench::llm::*;
use trajbench::model::{Dataset, GeoPoint, Label, LabelSet, OutlierType, PlaceType, StayPoint, Trajectory};
use trajbench::Error;

use common::*;

#[test]
fn separate_prompts_match_golden_files() {
    let t = sample_trajectory();
    let p = build_prompt(PromptMode::Separate, &[(&t, None)], TemplateVersion::PaperV1).unwrap();
    assert_eq!(p.text, golden("separate_paper-v1.txt"));
    let p = build_prompt(PromptMode::SeparateHint, &[(&t, Some(SAMPLE_DEVIATE))], TemplateVersion::PaperV1).unwrap();
    assert_eq!(p.text, golden("separate-hint_paper-v1.txt"));
    assert!(p.text.ends_with("inside a pair of square brackets [] :"));
}

#[test]
fn sample_trajectory_renders_published_tokens() {
    let s = render_stay_sequence(&sample_trajectory(), None).unwrap();
    assert!(s.starts_with("Sat 10:36, Pub, 0.4 km ->Sat 10:57, Apartment"));
    assert_eq!(s.matches(" ->").count(), 20);
}

#[test]
fn prompt_mode_rules() {
    let t = sample_trajectory();
    let u = Trajectory::new("other", t.points.clone());
    let err = build_prompt(PromptMode::Separate, &[(&t, None), (&u, None)], TemplateVersion::PaperV1);
    assert!(matches!(err, Err(Error::Config(_))));
    let err = build_prompt(PromptMode::SeparateHint, &[(&t, None)], TemplateVersion::PaperV1);
    assert!(matches!(err, Err(Error::Config(_))));

    let v = Trajectory::new("third", t.points.clone());
    let items = [(&t, Some(3)), (&u, Some(5)), (&v, Some(7))];
    let p = build_prompt(PromptMode::CombineHint, &items, TemplateVersion::PaperV1).unwrap();
    assert_eq!(p.text.matches("Here is the sequence of user").count(), 3);
    // the hint paragraph quotes the marker once more
    assert_eq!(p.text.matches(DEVIATE_MARKER).count(), 4);
    assert!(p.text.contains("Given a set of 3 users'"));
    assert_eq!(p.agent_ids, vec!["sample", "other", "third"]);
}

#[test]
fn clean_template_fixes_spelling() {
    let t = sample_trajectory();
    let p = build_prompt(PromptMode::Separate, &[(&t, None)], TemplateVersion::CleanV1).unwrap();
    assert!(p.text.contains("sequence of trajectory: "));
    assert!(p.text.contains("estimated anomaly score"));
    assert!(!p.text.contains("esimated"));
}

#[test]
fn combine_batches_respect_budget() {
    let t = sample_trajectory();
    let ts: Vec<Trajectory> = (0..7).map(|i| Trajectory::new(format!("a{i}"), t.points.clone())).collect();
    let items: Vec<(&Trajectory, Option<usize>)> = ts.iter().map(|t| (t, None)).collect();
    let one = build_prompt(PromptMode::Combine, &items[..2], TemplateVersion::PaperV1).unwrap();
    let budget = one.text.chars().count();
    let batches = build_combine_batches(PromptMode::Combine, &items, TemplateVersion::PaperV1, budget).unwrap();
    assert_eq!(batches.iter().map(|b| b.agent_ids.len()).collect::<Vec<_>>(), vec![2, 2, 2, 1]);
    assert!(batches.iter().all(|b| b.text.chars().count() <= budget));
    assert_eq!(batches[0].text, one.text);
    let ids: Vec<String> = batches.iter().flat_map(|b| b.agent_ids.clone()).collect();
    assert_eq!(ids, (0..7).map(|i| format!("a{i}")).collect::<Vec<_>>());
}

#[test]
fn published_answers_parse() {
    assert_eq!(parse_separate_score(&answer("gpt35_no_hint")).unwrap(), 0.85);
    assert_eq!(parse_separate_score(&answer("gpt4_no_hint")).unwrap(), 0.65);
    assert_eq!(parse_separate_score(&answer("gpt35_hint")).unwrap(), 0.9);
    assert_eq!(parse_separate_score(&answer("gpt4_hint")).unwrap(), 0.7);
    assert!(matches!(parse_separate_score("no brackets here"), Err(LlmError::NoScore { .. })));
}

fn pt(k: i64, lat: f64) -> StayPoint {
    StayPoint {
        arrive: 1_704_067_200 + k * 3600,
        depart: 1_704_067_200 + k * 3600 + 600,
        place_id: format!("p{k}"),
        place_type: PlaceType::new(if k % 2 == 0 { "Apartment" } else { "Pub" }).unwrap(),
        location: GeoPoint { lat, lon: 116.3 },
    }
}

proptest! {
    #[test]
    fn separators_match_point_count(lats in prop::collection::vec(39.0f64..41.0, 1..40)) {
        let pts: Vec<StayPoint> = lats.iter().enumerate().map(|(k, &l)| pt(k as i64, l)).collect();
        let n = pts.len();
        let s = render_stay_sequence(&Trajectory::new("a", pts), None).unwrap();
        prop_assert_eq!(s.matches(" ->").count(), n - 1);
        prop_assert_eq!(s.matches(" km").count(), n - 1);
    }

    #[test]
    fn canonical_answer_round_trips(tenths in 0u32..=10, filler in "[a-zA-Z ,.]{0,60}") {
        let s = tenths as f64 / 10.0;
        let text = format!("{filler} anomaly score is [{s:.1}]");
        prop_assert_eq!(parse_separate_score(&text).unwrap(), s);
    }
}

fn small_dataset() -> (Dataset, LabelSet) {
    // distinct start hours so every agent renders differently
    let trajs: Vec<Trajectory> = (0..6)
        .map(|i| Trajectory::new(format!("u{i}"), (0..8).map(|k| pt(k + i, 39.9 + k as f64 * 0.01)).collect()))
        .collect();
    let mut labels = LabelSet::default();
    for i in 0..6 {
        let l = if i < 2 { Label::outlier(OutlierType::Hunger, 5) } else { Label::normal() };
        labels.insert(format!("u{i}"), l);
    }
    (Dataset::new(trajs).unwrap(), labels)
}

#[test]
fn mock_passthrough_and_cache() {
    let (ds, labels) = small_dataset();
    let dir = tempfile::tempdir().unwrap();
    let cfg = LlmEndpointConfig {
        provider: Provider::Mock,
        mock_answer: "score [0.85]".into(),
        cache_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let client = LlmClient::from_config(cfg.clone()).unwrap();
    let run = run_llm_detection(&ds, &labels, PromptMode::Separate, TemplateVersion::PaperV1, &client).unwrap();
    assert_eq!(run.table.len(), 6);
    assert!(run.table.scores.values().all(|&s| s == 0.85));
    assert_eq!(client.network_calls(), 6);

    let warm = LlmClient::from_config(cfg).unwrap();
    let again = run_llm_detection(&ds, &labels, PromptMode::Separate, TemplateVersion::PaperV1, &warm).unwrap();
    assert_eq!(warm.network_calls(), 0);
    assert_eq!(again.table, run.table);
    assert!(again.answers.iter().all(|a| a.cached));
}

#[test]
fn oracle_combine_ranks_outliers_first() {
    let (ds, labels) = small_dataset();
    for mode in [PromptMode::Combine, PromptMode::CombineHint, PromptMode::SeparateHint] {
        let cfg = LlmEndpointConfig { provider: Provider::OracleMock, combine_char_budget: 1500, ..Default::default() };
        let client = oracle_client(cfg, &ds, &labels, mode, TemplateVersion::PaperV1).unwrap();
        let run = run_llm_detection(&ds, &labels, mode, TemplateVersion::PaperV1, &client).unwrap();
        assert_eq!(run.table.len(), 6, "{mode}");
        assert_eq!(trajbench::eval::roc_auc(&run.table, &labels).unwrap(), 1.0);
    }
}

#[test]
fn unparseable_answers_are_omitted() {
    let (ds, labels) = small_dataset();
    let client = LlmClient::new(LlmEndpointConfig::default(), Box::new(MockTransport { answer: "I cannot say.".into() }));
    let run = run_llm_detection(&ds, &labels, PromptMode::Separate, TemplateVersion::PaperV1, &client).unwrap();
    assert!(run.table.is_empty());
    assert_eq!(run.table.omitted.len(), 6);
}

struct Server {
    url: String,
    requests: Arc<Mutex<Vec<(String, String)>>>,
}

/// Serves the scripted `(status, body)` replies in order, one per connection.
fn serve(replies: Vec<(u16, String)>) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    std::thread::spawn(move || {
        for (status, body) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
            }
            let mut req_body = vec![0; len];
            reader.read_exact(&mut req_body).unwrap();
            seen.lock().unwrap().push((head, String::from_utf8(req_body).unwrap()));
            let mut stream = stream;
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    Server { url, requests }
}

fn openai_reply(text: &str) -> String {
    serde_json::json!({
        "choices": [{ "message": { "role": "assistant", "content": text } }],
        "usage": { "prompt_tokens": 11, "completion_tokens": 3 }
    })
    .to_string()
}

#[test]
fn http_retries_transient_failures() {
    let server = serve(vec![(500, "{}".into()), (429, "{}".into()), (200, openai_reply("fine [0.3]"))]);
    std::env::set_var("TRAJBENCH_TEST_TOKEN_A", "secret-a");
    let cfg = LlmEndpointConfig {
        base_url: server.url.clone(),
        model_name: "m1".into(),
        auth_token_env_var: "TRAJBENCH_TEST_TOKEN_A".into(),
        backoff_base_ms: 1,
        ..Default::default()
    };
    let client = LlmClient::from_config(cfg).unwrap();
    let c = client.complete("hello", "paper-v1").unwrap();
    assert_eq!(c.response.text, "fine [0.3]");
    assert_eq!((c.response.input_tokens, c.response.output_tokens), (11, 3));
    assert_eq!(client.network_calls(), 3);
    let reqs = server.requests.lock().unwrap();
    let (head, body) = &reqs[2];
    assert!(head.starts_with("POST /chat/completions"));
    assert!(head.to_ascii_lowercase().contains("authorization: bearer secret-a"));
    let v: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(v["model"], "m1");
    assert_eq!(v["messages"][0]["content"], "hello");
    assert_eq!(v["temperature"], 0.0);
}

#[test]
fn http_auth_failure_is_fatal() {
    let server = serve(vec![(401, "{}".into())]);
    std::env::set_var("TRAJBENCH_TEST_TOKEN_B", "bad");
    let cfg = LlmEndpointConfig {
        base_url: server.url.clone(),
        auth_token_env_var: "TRAJBENCH_TEST_TOKEN_B".into(),
        ..Default::default()
    };
    let client = LlmClient::from_config(cfg).unwrap();
    let (ds, labels) = small_dataset();
    let ds = Dataset::new(vec![ds.trajectories[0].clone()]).unwrap();
    let err = run_llm_detection(&ds, &labels, PromptMode::Separate, TemplateVersion::PaperV1, &client);
    assert!(matches!(err, Err(Error::Llm(LlmError::Auth { status: 401 }))));
    assert_eq!(client.network_calls(), 1);
}

#[test]
fn http_gives_up_after_max_retries() {
    let server = serve(vec![(503, "{}".into()), (503, "{}".into())]);
    std::env::set_var("TRAJBENCH_TEST_TOKEN_C", "x");
    let cfg = LlmEndpointConfig {
        base_url: server.url.clone(),
        auth_token_env_var: "TRAJBENCH_TEST_TOKEN_C".into(),
        max_retries: 1,
        backoff_base_ms: 1,
        ..Default::default()
    };
    let client = LlmClient::from_config(cfg).unwrap();
    assert!(matches!(client.complete("p", "paper-v1"), Err(LlmError::Transport(_))));
    assert_eq!(client.network_calls(), 2);
}

#[test]
fn anthropic_adapter_fields() {
    let reply = serde_json::json!({
        "content": [{ "type": "text", "text": "user 1: [0.4]" }],
        "usage": { "input_tokens": 5, "output_tokens": 2 }
    })
    .to_string();
    let server = serve(vec![(200, reply)]);
    std::env::set_var("TRAJBENCH_TEST_TOKEN_D", "k");
    let cfg = LlmEndpointConfig {
        provider: Provider::Anthropic,
        base_url: server.url.clone(),
        auth_token_env_var: "TRAJBENCH_TEST_TOKEN_D".into(),
        ..Default::default()
    };
    let c = LlmClient::from_config(cfg).unwrap().complete("p", "paper-v1").unwrap();
    assert_eq!(c.response.text, "user 1: [0.4]");
    let reqs = server.requests.lock().unwrap();
    assert!(reqs[0].0.starts_with("POST /messages"));
    assert!(reqs[0].0.to_ascii_lowercase().contains("x-api-key: k"));
}

#[test]
fn missing_token_variable() {
    let cfg = LlmEndpointConfig { auth_token_env_var: "TRAJBENCH_TEST_TOKEN_UNSET".into(), ..Default::default() };
    assert!(matches!(LlmClient::from_config(cfg), Err(LlmError::MissingToken(_))));
}

#[test]
fn dump_prompts_writes_index() {
    let (ds, labels) = small_dataset();
    let dir = tempfile::tempdir().unwrap();
    let n = dump_prompts(&ds, &labels, PromptMode::SeparateHint, TemplateVersion::PaperV1, 10_000, dir.path()).unwrap();
    assert_eq!(n, 6);
    let index = std::fs::read_to_string(dir.path().join("index.jsonl")).unwrap();
    assert_eq!(index.lines().count(), 6);
    let first = std::fs::read_to_string(dir.path().join("0000.txt")).unwrap();
    assert_eq!(first.matches(DEVIATE_MARKER).count(), 2);
}
