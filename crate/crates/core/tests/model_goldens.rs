//! The shipped model files must stay byte-identical to the canonical
//! serialization of the built-in networks, and loading one back must
//! reproduce the same bytes.

use std::fs;

use stochsens::builtin;
use stochsens::model::{canonical_json, load_model};

#[test]
fn shipped_model_files_match_their_builtins() {
    for (file, net) in [
        ("pure_birth", builtin::pure_birth(0.1, 1.0)),
        ("birth_death", builtin::birth_death(0.1, 5.0)),
        ("gene_expression", builtin::gene_expression(0.0116, 10.0)),
    ] {
        let path = format!("../../models/{file}.json");
        let text = fs::read_to_string(&path).unwrap_or_else(|e| panic!("reading {path}: {e}"));
        assert_eq!(
            text,
            canonical_json(&net),
            "{path} drifted from the built-in definition"
        );
        let reloaded = load_model(&path).unwrap();
        assert_eq!(
            canonical_json(&reloaded),
            text,
            "{path} does not round-trip through load and save"
        );
    }
}
