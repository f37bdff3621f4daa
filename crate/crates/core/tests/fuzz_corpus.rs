//! Replays the checked-in fuzz corpus through the parsers on stable.

use std::path::Path;

use bai_core::harness::{parse_config, parse_instance};
use bai_core::samplers::Policy;

fn corpus(target: &str) -> Vec<(String, String)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read_to_string(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "empty corpus for {target}");
    out
}

#[test]
fn config_corpus() {
    let ok: Vec<String> = corpus("parse_config")
        .into_iter()
        .filter_map(|(name, text)| parse_config(&text).ok().map(|c| {
            c.validate().unwrap();
            name
        }))
        .collect();
    assert_eq!(ok, ["bernoulli.toml", "diag.toml", "exp.toml"]);
}

#[test]
fn policy_corpus() {
    for (name, text) in corpus("parse_policy") {
        let parsed = text.parse::<Policy>();
        let expect_ok = !matches!(name.as_str(), "empty" | "eb-tcb_1_5" | "iat2_");
        assert_eq!(parsed.is_ok(), expect_ok, "{name}: {parsed:?}");
        if let Ok(p) = parsed {
            p.validate().unwrap();
        }
    }
}

#[test]
fn instance_corpus() {
    for (name, text) in corpus("parse_instance") {
        let parsed = parse_instance(&text);
        let expect_ok = !matches!(name.as_str(), "bernoulli_1_5_0_2" | "gaussian_1" | "nope_1_2");
        assert_eq!(parsed.is_ok(), expect_ok, "{name}: {parsed:?}");
    }
}

proptest::proptest! {
    #[test]
    fn parsers_never_panic(text in "\\PC{0,80}") {
        let _ = parse_config(&text);
        let _ = parse_instance(&text);
        let _ = text.parse::<Policy>();
    }

    #[test]
    fn near_valid_inputs_never_panic(
        means in proptest::collection::vec(-1e3..1e3f64, 0..5),
        family in "(gaussian|bernoulli|poisson|exponential|gaussian/[0-9.e-]{1,5})",
        sigma in proptest::num::f64::ANY,
    ) {
        let list = means.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(",");
        let _ = parse_instance(&format!("{family}:{list}"));
        let _ = parse_config(&format!("family = \"gaussian\"\nsigma = {sigma:?}\nmeans = [{list}]\n"));
        let _ = format!("eb-tcb:{sigma}").parse::<Policy>();
    }
}
