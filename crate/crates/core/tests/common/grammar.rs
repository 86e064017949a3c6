//! Generators for transcript turns.

use proptest::prelude::*;
use proptest::strategy::ValueTree;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use visagent::transcript::parse_turn;

fn body_line() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,.()?'-]{0,30}"
}

fn body() -> impl Strategy<Value = String> {
    prop::collection::vec(body_line(), 1..4).prop_map(|lines| lines.join("\n"))
}

fn section(label: &'static str) -> impl Strategy<Value = String> {
    body().prop_map(move |b| format!("{label} {b}\n"))
}

fn code() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z_]{1,12}\\(\"[a-z]{1,8}\\.jpg\"\\)", 1..4)
        .prop_map(|lines| format!("```python\n{}\n```\n", lines.join("\n")))
}

/// Turns accepted by the grammar: optional requirement, thoughts, then an
/// action, a final answer or nothing.
pub fn well_formed_turn() -> impl Strategy<Value = String> {
    let ending = prop_oneof![
        Just(String::new()),
        section("Final Answer:"),
        ("[a-z_]{1,12}", code()).prop_map(|(name, code)| format!("Action: {name}\nAction Input:\n{code}")),
    ];
    (
        prop::option::of(section("Task Requirement:")),
        prop::collection::vec(section("Thought:"), 1..3),
        ending,
        any::<bool>(),
    )
        .prop_map(|(requirement, thoughts, ending, trim)| {
            let mut turn = requirement.unwrap_or_default();
            turn.push_str(&thoughts.concat());
            turn.push_str(&ending);
            if trim {
                turn.truncate(turn.trim_end_matches('\n').len());
            }
            turn
        })
}

/// Arbitrary text, half of it built from grammar fragments.
pub fn fuzz_input() -> impl Strategy<Value = String> {
    let token = prop_oneof![
        Just("Thought:".to_string()),
        Just("Final Answer:".to_string()),
        Just("Action Input:".to_string()),
        Just("Observation:".to_string()),
        Just("Task Requirement:".to_string()),
        Just("Action:".to_string()),
        Just("```python".to_string()),
        Just("```".to_string()),
        Just("\n".to_string()),
        Just("\r\n".to_string()),
        ".{0,12}",
    ];
    prop_oneof![
        any::<String>(),
        prop::collection::vec(token, 0..24).prop_map(|t| t.concat()),
    ]
}

/// Re-parsing the concatenated sections reproduces the same turn.
pub fn check_round_trip(turn: &str) -> Result<(), TestCaseError> {
    let parsed = parse_turn(turn).map_err(|m| TestCaseError::fail(format!("rejected: {:?}", m.reason)))?;
    prop_assert_eq!(&parsed.text(), turn);
    let reparsed = parse_turn(&parsed.text()).map_err(|_| TestCaseError::fail("re-parse rejected"))?;
    prop_assert_eq!(reparsed, parsed);
    Ok(())
}

/// Parsing never panics and accounts for every byte.
pub fn check_total(input: &str) -> Result<(), TestCaseError> {
    match std::panic::catch_unwind(|| parse_turn(input)) {
        Err(_) => Err(TestCaseError::fail("parse_turn panicked")),
        Ok(Ok(parsed)) => {
            prop_assert_eq!(parsed.text(), input);
            Ok(())
        }
        Ok(Err(malformed)) => {
            prop_assert_eq!(malformed.raw.as_str(), input);
            Ok(())
        }
    }
}

/// Runs `check` on `cases` inputs from a deterministic runner.
pub fn run_cases<S, F>(cases: u32, strategy: S, check: F) -> Result<(), String>
where
    S: Strategy,
    S::Value: std::fmt::Debug,
    F: Fn(S::Value) -> Result<(), TestCaseError>,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(
        config,
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    for _ in 0..cases {
        let value = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
        let shown = format!("{value:?}");
        check(value).map_err(|e| format!("{e} on {shown}"))?;
    }
    Ok(())
}
