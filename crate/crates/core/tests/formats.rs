mod common;

use cmdp::io::builtin::{counterexample, gridworld, GridworldSpec, COUNTEREXAMPLE_TOML};
use cmdp::io::{parse_instance, parse_policy, serialize_instance, serialize_policy, InstanceDocument, ParseErrorKind};
use cmdp::mdp::{validate, Policy};
use proptest::prelude::*;

use common::{random_instance, rng, RandomShape};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn instance_round_trip(seed in any::<u64>(), named in any::<bool>()) {
        let mdp = random_instance(&mut rng(seed), &RandomShape::default());
        let name = named.then_some("random \"quoted\" name");
        let doc = InstanceDocument::from_mdp(&mdp, name, Some("line one\nline two"));
        let text = serialize_instance(&doc);
        let parsed = parse_instance(&text).unwrap();
        prop_assert_eq!(&parsed, &doc);
        prop_assert_eq!(serialize_instance(&parsed), text);
        prop_assert_eq!(parsed.to_mdp().unwrap(), mdp);
    }

    #[test]
    fn policy_round_trip(seed in any::<u64>()) {
        let mdp = random_instance(&mut rng(seed), &RandomShape::default());
        let rows = (0..mdp.n_transient())
            .map(|i| {
                let w: Vec<f64> = (0..mdp.n_actions()).map(|a| ((seed >> (i + a)) % 7) as f64 + 0.5).collect();
                let t: f64 = w.iter().sum();
                w.iter().map(|x| x / t).collect()
            })
            .collect();
        let policy = Policy::new(rows).unwrap();
        let text = serialize_policy(&mdp, &policy);
        prop_assert_eq!(parse_policy(&text).unwrap().to_policy(&mdp).unwrap(), policy);
    }

    #[test]
    fn arbitrary_text_never_panics(text in "\\PC{0,200}") {
        let _ = parse_instance(&text);
        let _ = parse_policy(&text);
    }
}

#[test]
fn builtin_text_is_valid() {
    let doc = parse_instance(COUNTEREXAMPLE_TOML).unwrap();
    let mdp = doc.to_mdp().unwrap();
    assert_eq!(mdp.transient_states(), &["i", "j"]);
    assert_eq!(mdp.n_actions(), 2);
    assert!(validate(&mdp).is_empty());
    assert_eq!(mdp, counterexample());
}

#[test]
fn gridworld_round_trips() {
    let mdp = gridworld(&GridworldSpec {
        targets: Some(vec![(2, 2)]),
        unsafe_cells: Some(vec![(1, 1)]),
        slip: 0.1,
        threshold: 0.2,
        ..GridworldSpec::new(3, 3)
    })
    .unwrap();
    let text = serialize_instance(&InstanceDocument::from_mdp(&mdp, Some("grid"), None));
    assert_eq!(parse_instance(&text).unwrap().to_mdp().unwrap(), mdp);
}

#[test]
fn error_classes() {
    let cases = [
        ("", ParseErrorKind::Missing),
        ("format_version = 1\nactions = [", ParseErrorKind::Syntax),
        ("format_version = 9\n[[states]]\nid = \"x\"\nrole = \"transient\"\n", ParseErrorKind::Version),
        ("[[states]]\nid = \"x\"\nrole = \"transient\"\n", ParseErrorKind::Missing),
        (
            "format_version = 1\nactions = [\"a\", \"a\"]\nthreshold = 0.1\n[[states]]\nid = \"x\"\nrole = \"transient\"\n",
            ParseErrorKind::Duplicate,
        ),
        (
            "format_version = 1\nactions = [\"a\"]\nthreshold = 1.5\n[[states]]\nid = \"x\"\nrole = \"transient\"\n",
            ParseErrorKind::OutOfRange,
        ),
        (
            "format_version = 1\nactions = [\"a\"]\nthreshold = 0.1\n[[states]]\nid = \"x\"\nrole = \"sideways\"\n",
            ParseErrorKind::Syntax,
        ),
    ];
    for (text, kind) in cases {
        assert_eq!(parse_instance(text).unwrap_err().kind, kind, "{text:?}");
    }
}

/// Runs the checked-in fuzz seeds through the same checks as the fuzz targets.
#[test]
fn fuzz_corpus_seeds() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus");
    let mut seen = 0;
    for target in ["parse_instance", "instance_round_trip", "parse_policy"] {
        for entry in std::fs::read_dir(root.join(target)).unwrap() {
            let text = std::fs::read_to_string(entry.unwrap().path()).unwrap();
            seen += 1;
            if target == "parse_policy" {
                if let Ok(doc) = parse_policy(&text) {
                    let _ = doc.to_policy(&counterexample());
                }
                continue;
            }
            if let Ok(doc) = parse_instance(&text) {
                let canonical = serialize_instance(&doc);
                let again = parse_instance(&canonical).unwrap();
                assert_eq!(again, doc);
                assert_eq!(serialize_instance(&again), canonical);
                if let Ok(mdp) = doc.to_mdp() {
                    let _ = validate(&mdp);
                }
            }
        }
    }
    assert!(seen >= 8);
}
