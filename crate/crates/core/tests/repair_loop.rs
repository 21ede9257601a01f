mod common;

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Instant;

use chartforge::corpus::{CategoryLabel, TaskSet};
use chartforge::gateway::{complete, MockProvider, MockReply, ProviderHandle};
use chartforge::pipeline::{
    build_draft_request, extract_code, run_suite, run_task, FinalStatus, PipelineConfig, PipelineRecord, PromptMode,
    ScriptOrigin,
};
use chartforge::sandbox::{prepare_workspace, FakeBackend, FakeOutcome};

use common::task;

fn code_reply(marker: &str) -> MockReply {
    MockReply::text(format!("```python\nimport matplotlib.pyplot as plt\nplot('{marker}')\n```"))
}

fn backend() -> FakeBackend {
    (0..4).fold(FakeBackend::always_ok(), |b, j| {
        b.rule(
            format!("BAD_{j}"),
            FakeOutcome::Raised(format!("Traceback (most recent call last):\nValueError: failure number {j}")),
        )
    })
}

fn config(max: u32) -> PipelineConfig {
    PipelineConfig {
        max_repair_iterations: max,
        ..PipelineConfig::default()
    }
}

/// Mock script for a fail/success pattern: `fails[j]` says whether attempt
/// j fails.
fn scripted(fails: [bool; 4]) -> Arc<MockProvider> {
    let mut replies = Vec::new();
    for (j, fail) in fails.iter().enumerate() {
        if j > 0 {
            replies.push(MockReply::text(format!("suggestion for attempt {j}")));
        }
        replies.push(code_reply(&if *fail { format!("BAD_{j}") } else { format!("GOOD_{j}") }));
    }
    Arc::new(MockProvider::sequential(replies))
}

#[test]
fn all_sixteen_patterns_at_three_iterations() {
    let started = Instant::now();
    for bits in 0u8..16 {
        let fails: [bool; 4] = std::array::from_fn(|j| bits & (1 << j) != 0);
        let mock = scripted(fails);
        let handle = ProviderHandle::new(mock.clone());
        let r = run_task(&task("p", CategoryLabel::Pairwise), &config(3), &handle, &backend());
        match fails.iter().position(|f| !f) {
            Some(k) => {
                assert_eq!(r.attempts.len(), k + 1, "pattern {bits:04b}");
                assert_eq!(r.final_status, FinalStatus::Success { iteration_fixed: k as u32 });
            }
            None => {
                assert_eq!(r.attempts.len(), 4, "pattern {bits:04b}");
                assert_eq!(r.final_status, FinalStatus::Failed);
            }
        }
        assert_eq!(r.suggestions.len(), r.attempts.len() - 1);
        for (k, a) in r.attempts.iter().enumerate() {
            let expected = if k == 0 {
                ScriptOrigin::Draft
            } else {
                ScriptOrigin::Repair { iteration: k as u32 }
            };
            assert_eq!(a.script.origin, expected);
        }
        // Each repair round is a reflection call then a rewrite call; the
        // reflection carries the latest failing code and its full traceback.
        let requests = mock.requests();
        assert_eq!(requests.len(), 1 + 2 * (r.attempts.len() - 1));
        for k in 1..r.attempts.len() {
            let reflection = requests[2 * k - 1].messages[0].text();
            let prev = &r.attempts[k - 1];
            assert!(reflection.contains(&prev.script.code));
            assert!(reflection.contains(prev.outcome.traceback.as_deref().unwrap()));
            assert!(requests[2 * k].messages[1].text().contains(&format!("suggestion for attempt {k}")));
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn draft_fails_then_second_repair_succeeds() {
    let handle = ProviderHandle::new(scripted([true, true, false, false]));
    let r = run_task(&task("a", CategoryLabel::Pairwise), &config(3), &handle, &backend());
    assert_eq!(r.attempts.len(), 3);
    assert_eq!(r.final_status, FinalStatus::Success { iteration_fixed: 2 });
    assert!(r.final_image().is_some());
}

/// Draft-only execution done by hand, without the loop.
fn draft_only(task: &chartforge::ChartTask, provider: &ProviderHandle, backend: &FakeBackend) -> PipelineRecord {
    let cfg = config(0);
    let request = build_draft_request(task, &cfg.prompt_mode, &cfg.model_name).unwrap();
    let text = complete(&request, provider).unwrap().text;
    let script = extract_code(&text, ScriptOrigin::Draft).unwrap();
    let ws = prepare_workspace(task).unwrap();
    let outcome = chartforge::sandbox::execute(&script, &ws, &cfg.execution_limits, backend).unwrap();
    let final_status = if outcome.is_success() {
        FinalStatus::Success { iteration_fixed: 0 }
    } else {
        FinalStatus::Failed
    };
    PipelineRecord {
        task_id: task.id.clone(),
        category: task.category,
        draft: Some(script.clone()),
        attempts: vec![chartforge::pipeline::Attempt { script, outcome }],
        final_status,
        suggestions: Vec::new(),
        error: None,
    }
}

#[test]
fn zero_budget_is_draft_only() {
    for marker in ["GOOD_0", "BAD_0", "BAD_2"] {
        let t = task("b", CategoryLabel::Gridded);
        let provider = || ProviderHandle::new(Arc::new(MockProvider::sequential(vec![code_reply(marker)])));
        let via_loop = run_task(&t, &config(0), &provider(), &backend());
        let by_hand = draft_only(&t, &provider(), &backend());
        assert_eq!(via_loop, by_hand);
        assert_eq!(via_loop.attempts.len(), 1);
    }
}

#[test]
fn gateway_failure_on_draft_leaves_no_attempts() {
    let mock = MockProvider::sequential(vec![MockReply::Fail(chartforge::GatewayError::AuthFailed("no".into()))]);
    let r = run_task(&task("c", CategoryLabel::Pairwise), &config(3), &ProviderHandle::new(Arc::new(mock)), &backend());
    assert!(r.attempts.is_empty());
    assert!(r.draft.is_none());
    assert_eq!(r.final_status, FinalStatus::Failed);
    assert!(r.error.is_some());
}

#[test]
fn few_shot_run_matches_across_worker_counts() {
    let tasks: Vec<_> = (0..24).map(|i| task(&format!("t{i:02}"), CategoryLabel::Pairwise)).collect();
    let set = TaskSet::new("s", tasks);
    let script = || {
        let mut map = HashMap::new();
        for (i, t) in set.tasks.iter().enumerate() {
            let replies = if i % 3 == 0 {
                vec![code_reply("BAD_0"), MockReply::text("fix"), code_reply("GOOD")]
            } else {
                vec![code_reply("GOOD")]
            };
            map.insert(t.id.clone(), replies);
        }
        ProviderHandle::new(Arc::new(MockProvider::keyed(map)))
    };
    let mut cfg = config(3);
    cfg.prompt_mode = PromptMode::default_few_shot();
    cfg.workers = 1;
    let serial = run_suite(&set, &cfg, &script(), &backend());
    cfg.workers = 6;
    let parallel = run_suite(&set, &cfg, &script(), &backend());
    assert_eq!(serial, parallel);
    assert_eq!(serial.iter().filter(|r| r.attempts.len() == 2).count(), 8);
}
