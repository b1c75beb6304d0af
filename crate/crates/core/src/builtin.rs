//! Reference networks used by the test suite and the benchmark tables.

use std::collections::BTreeMap;

use crate::model::{Observable, ParameterSet, Reaction, ReactionNetwork};

pub const GENE_K_R: f64 = 0.6;
pub const GENE_K_P: f64 = 1.7329;
pub const GENE_GAMMA_R: f64 = 0.3466;

/// Single birth channel 0 -> S at rate theta, started empty. X(T) is
/// Poisson(theta T), so every estimator has a closed-form target.
pub fn pure_birth(theta: f64, t_horizon: f64) -> ReactionNetwork {
    let params = ParameterSet::new(BTreeMap::from([("theta".to_string(), theta)]), "theta")
        .expect("valid parameters");
    ReactionNetwork::new(
        vec!["S".into()],
        vec![0],
        vec![Reaction::new(vec![0], vec![1], "theta").expect("valid reaction")],
        params,
        Observable {
            coeffs: vec![1.0],
            offset: 0.0,
        },
        t_horizon,
    )
    .expect("valid network")
}

/// Immigration at unit rate plus linear death S -> 0 at rate theta, started
/// empty; the death rate is the sensitive parameter.
pub fn birth_death(theta: f64, t_horizon: f64) -> ReactionNetwork {
    let params = ParameterSet::new(
        BTreeMap::from([("b".to_string(), 1.0), ("theta".to_string(), theta)]),
        "theta",
    )
    .expect("valid parameters");
    ReactionNetwork::new(
        vec!["S".into()],
        vec![0],
        vec![
            Reaction::new(vec![0], vec![1], "b").expect("valid reaction"),
            Reaction::new(vec![1], vec![0], "theta").expect("valid reaction"),
        ],
        params,
        Observable {
            coeffs: vec![1.0],
            offset: 0.0,
        },
        t_horizon,
    )
    .expect("valid network")
}

/// Constitutive gene expression: transcription from a single gene copy,
/// translation, and first-order decay of both mRNA and protein. The protein
/// decay rate gamma_p is the sensitive parameter and the observable is the
/// protein count.
pub fn gene_expression(gamma_p: f64, t_horizon: f64) -> ReactionNetwork {
    let params = ParameterSet::new(
        BTreeMap::from([
            ("gamma_p".to_string(), gamma_p),
            ("gamma_r".to_string(), GENE_GAMMA_R),
            ("k_p".to_string(), GENE_K_P),
            ("k_r".to_string(), GENE_K_R),
        ]),
        "gamma_p",
    )
    .expect("valid parameters");
    let reactions = vec![
        // gene -> gene + mrna
        Reaction::new(vec![1, 0, 0], vec![1, 1, 0], "k_r").expect("valid reaction"),
        // mrna -> mrna + protein
        Reaction::new(vec![0, 1, 0], vec![0, 1, 1], "k_p").expect("valid reaction"),
        // mrna -> 0
        Reaction::new(vec![0, 1, 0], vec![0, 0, 0], "gamma_r").expect("valid reaction"),
        // protein -> 0
        Reaction::new(vec![0, 0, 1], vec![0, 0, 0], "gamma_p").expect("valid reaction"),
    ];
    ReactionNetwork::new(
        vec!["gene".into(), "mrna".into(), "protein".into()],
        vec![1, 0, 0],
        reactions,
        params,
        Observable {
            coeffs: vec![0.0, 0.0, 1.0],
            offset: 0.0,
        },
        t_horizon,
    )
    .expect("valid network")
}

/// Inert network for edge-case tests: its only reaction has rate zero and
/// the sensitive parameter steers nothing, so every path sits at x0 and
/// every sensitivity is exactly zero.
pub fn frozen(t_horizon: f64) -> ReactionNetwork {
    let params = ParameterSet::new(
        BTreeMap::from([("dead".to_string(), 0.0), ("theta".to_string(), 0.3)]),
        "theta",
    )
    .expect("valid parameters");
    ReactionNetwork::new(
        vec!["S".into()],
        vec![2],
        vec![Reaction::new(vec![0], vec![1], "dead").expect("valid reaction")],
        params,
        Observable {
            coeffs: vec![1.0],
            offset: 0.0,
        },
        t_horizon,
    )
    .expect("valid network")
}

/// Look up a shipped model by CLI name.
pub fn by_name(name: &str) -> Option<ReactionNetwork> {
    match name {
        "pure-birth" => Some(pure_birth(0.1, 1.0)),
        "birth-death" => Some(birth_death(0.1, 5.0)),
        "gene-expression" => Some(gene_expression(0.0116, 10.0)),
        _ => None,
    }
}
