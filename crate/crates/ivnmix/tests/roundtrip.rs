//! Serialization invariants across the two network formats: parse-serialize-
//! parse is an exact fixpoint, and single-token deletions of a valid BIF
//! file never slip through as the same network.

use ivnmix::bif::{network_to_bif, parse_bif};
use ivnmix::bn::CausalNetwork;
use ivnmix::fixtures::{alarm, random_network};
use ivnmix::io::{network_from_json, network_to_json};

fn assert_identical(a: &CausalNetwork, b: &CausalNetwork, what: &str) {
    // the JSON codec captures every field, so document equality is
    // field-for-field equality (including exact probability bits)
    assert_eq!(network_to_json(a), network_to_json(b), "{what}");
}

#[test]
fn bif_fixpoint_on_alarm() {
    let first = alarm();
    let text = network_to_bif(&first, "alarm");
    let second = parse_bif(&text).expect("serialized network parses");
    assert_identical(&first, &second, "alarm BIF fixpoint");
}

#[test]
fn bif_fixpoint_on_random_networks() {
    for seed in 0..100 {
        let first = random_network(seed, 8, 4, 3);
        let text = network_to_bif(&first, "random");
        let second = parse_bif(&text).expect("serialized network parses");
        assert_identical(&first, &second, &format!("BIF fixpoint, seed {seed}"));
    }
}

#[test]
fn json_fixpoint_on_alarm_and_random_networks() {
    let first = alarm();
    let second = network_from_json(&network_to_json(&first)).expect("alarm round-trip");
    assert_identical(&first, &second, "alarm JSON fixpoint");
    for seed in 0..100 {
        let first = random_network(seed, 8, 4, 3);
        let second = network_from_json(&network_to_json(&first)).expect("round-trip");
        assert_identical(&first, &second, &format!("JSON fixpoint, seed {seed}"));
    }
}

/// Byte spans of the grammar's tokens: runs of word/number characters, or a
/// single punctuation byte. Whitespace separates.
fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_whitespace() {
            i += 1;
        } else if "(){}[]|,;".contains(c) {
            spans.push((i, i + 1));
            i += 1;
        } else {
            let start = i;
            while i < bytes.len() {
                let c = bytes[i] as char;
                if c.is_whitespace() || "(){}[]|,;".contains(c) {
                    break;
                }
                i += 1;
            }
            spans.push((start, i));
        }
    }
    spans
}

#[test]
fn single_token_deletions_never_parse_to_the_same_network() {
    let doc = "\
network mutation_probe {\n\
}\n\
variable A {\n\
  type discrete [ 2 ] { lo, hi };\n\
}\n\
variable B {\n\
  type discrete [ 3 ] { x, y, z };\n\
}\n\
probability ( A ) {\n\
  table 0.25, 0.75;\n\
}\n\
probability ( B | A ) {\n\
  (lo) 0.5, 0.25, 0.25;\n\
  (hi) 0.125, 0.375, 0.5;\n\
}\n";
    let original = network_to_json(&parse_bif(doc).expect("probe document is valid"));
    let spans = token_spans(doc);
    assert!(spans.len() > 60, "probe document is token-rich");
    let mut rejected = 0;
    for &(start, end) in &spans {
        let mutated = format!("{}{}", &doc[..start], &doc[end..]);
        match parse_bif(&mutated) {
            Err(_) => rejected += 1,
            Ok(net) => assert_ne!(
                network_to_json(&net),
                original,
                "deleting bytes {start}..{end} silently preserved the network"
            ),
        }
    }
    // nearly every deletion breaks the grammar outright; the assert above
    // guards the rare survivors
    assert!(
        rejected * 10 >= spans.len() * 9,
        "only {rejected} of {} deletions rejected",
        spans.len()
    );
}
