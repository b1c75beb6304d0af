//! Mass-action reaction networks over integer copy-number states.
//!
//! A network couples named species, reactions with small reactant
//! multiplicities, a named parameter set with one parameter marked
//! sensitive, and a linear observable. Propensities follow the
//! stochastic mass-action convention: the rate constant times the
//! number of ordered reactant tuples the current state can supply.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total reactant order (sum of multiplicities) a reaction may have.
pub const MAX_REACTANT_ORDER: u32 = 3;

/// Copy-number state, one count per species.
pub type State = Vec<i64>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Species {
    pub name: String,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reaction {
    /// Reactant multiplicity per species index.
    pub reactants: Vec<u32>,
    /// Product multiplicity per species index.
    pub products: Vec<u32>,
    /// Name of this reaction's rate constant.
    pub rate_param: String,
    /// Net state change: products minus reactants.
    pub stoich: Vec<i64>,
}

impl Reaction {
    pub fn new(
        reactants: Vec<u32>,
        products: Vec<u32>,
        rate_param: impl Into<String>,
    ) -> Result<Self> {
        if reactants.len() != products.len() {
            return Err(Error::Model(format!(
                "reactant vector has length {} but product vector has length {}",
                reactants.len(),
                products.len()
            )));
        }
        let order: u32 = reactants.iter().sum();
        if order > MAX_REACTANT_ORDER {
            return Err(Error::Model(format!(
                "total reactant order {order} exceeds the supported maximum {MAX_REACTANT_ORDER}"
            )));
        }
        let stoich = reactants
            .iter()
            .zip(&products)
            .map(|(&r, &p)| i64::from(p) - i64::from(r))
            .collect();
        Ok(Self {
            reactants,
            products,
            rate_param: rate_param.into(),
            stoich,
        })
    }

    /// Total reactant order (sum of multiplicities).
    pub fn order(&self) -> u32 {
        self.reactants.iter().sum()
    }

    /// Net change in total population when the reaction fires.
    pub fn net_gain(&self) -> i64 {
        self.stoich.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet {
    /// Parameter values by name; all finite and nonnegative.
    pub values: BTreeMap<String, f64>,
    /// Name of the parameter sensitivities are taken with respect to.
    pub sensitive: String,
}

impl ParameterSet {
    pub fn new(values: BTreeMap<String, f64>, sensitive: impl Into<String>) -> Result<Self> {
        let sensitive = sensitive.into();
        for (name, v) in &values {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::Model(format!(
                    "parameter {name:?} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if !values.contains_key(&sensitive) {
            return Err(Error::Model(format!(
                "sensitive parameter {sensitive:?} is not in the parameter set"
            )));
        }
        Ok(Self { values, sensitive })
    }
}

/// Linear readout f(x) = <coeffs, x> + offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl Observable {
    pub fn eval(&self, x: &[i64]) -> f64 {
        debug_assert_eq!(x.len(), self.coeffs.len());
        let mut acc = self.offset;
        for (c, &xi) in self.coeffs.iter().zip(x) {
            acc += c * xi as f64;
        }
        acc
    }

    /// Change in f when the state moves by `shift`; independent of the state
    /// because f is linear.
    pub fn delta(&self, shift: &[i64]) -> f64 {
        debug_assert_eq!(shift.len(), self.coeffs.len());
        self.coeffs
            .iter()
            .zip(shift)
            .map(|(c, &z)| c * z as f64)
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNetwork {
    pub species: Vec<Species>,
    pub x0: State,
    pub reactions: Vec<Reaction>,
    pub params: ParameterSet,
    pub observable: Observable,
    /// Default time horizon carried by the model file.
    pub t_horizon: f64,
}

impl ReactionNetwork {
    pub fn new(
        species_names: Vec<String>,
        x0: State,
        reactions: Vec<Reaction>,
        params: ParameterSet,
        observable: Observable,
        t_horizon: f64,
    ) -> Result<Self> {
        let d = species_names.len();
        if d == 0 {
            return Err(Error::Model("network needs at least one species".into()));
        }
        if reactions.is_empty() {
            return Err(Error::Model("network needs at least one reaction".into()));
        }
        for (i, a) in species_names.iter().enumerate() {
            if species_names[..i].contains(a) {
                return Err(Error::Model(format!("duplicate species name {a:?}")));
            }
        }
        if x0.len() != d {
            return Err(Error::Dimension {
                got: x0.len(),
                want: d,
            });
        }
        if let Some(s) = x0.iter().position(|&v| v < 0) {
            return Err(Error::NegativeState {
                species: s,
                value: x0[s],
            });
        }
        for (k, r) in reactions.iter().enumerate() {
            if r.reactants.len() != d {
                return Err(Error::Model(format!(
                    "reaction {k} is over {} species, network has {d}",
                    r.reactants.len()
                )));
            }
            if !params.values.contains_key(&r.rate_param) {
                return Err(Error::Model(format!(
                    "reaction {k} references unknown rate parameter {:?}",
                    r.rate_param
                )));
            }
        }
        if observable.coeffs.len() != d {
            return Err(Error::Dimension {
                got: observable.coeffs.len(),
                want: d,
            });
        }
        if !observable.coeffs.iter().all(|c| c.is_finite()) || !observable.offset.is_finite() {
            return Err(Error::Model(
                "observable coefficients must be finite".into(),
            ));
        }
        if !t_horizon.is_finite() || t_horizon < 0.0 {
            return Err(Error::Model(format!(
                "time horizon must be finite and nonnegative, got {t_horizon}"
            )));
        }
        Ok(Self {
            species: species_names
                .into_iter()
                .enumerate()
                .map(|(index, name)| Species { name, index })
                .collect(),
            x0,
            reactions,
            params,
            observable,
            t_horizon,
        })
    }

    pub fn dim(&self) -> usize {
        self.species.len()
    }

    pub fn n_reactions(&self) -> usize {
        self.reactions.len()
    }

    /// Current value of the sensitive parameter.
    pub fn theta(&self) -> f64 {
        self.params.values[&self.params.sensitive]
    }

    /// Copy of the network with the sensitive parameter set to `theta`.
    pub fn with_theta(&self, theta: f64) -> Self {
        let mut out = self.clone();
        out.params
            .values
            .insert(out.params.sensitive.clone(), theta);
        out
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Indices of reactions whose rate constant is the sensitive parameter.
    pub fn sensitive_reactions(&self) -> Vec<usize> {
        self.reactions
            .iter()
            .enumerate()
            .filter(|(_, r)| r.rate_param == self.params.sensitive)
            .map(|(k, _)| k)
            .collect()
    }

    /// Rate constant of reaction k, with the sensitive parameter optionally
    /// replaced by `theta_override`.
    pub fn rate_constant(&self, k: usize, theta_override: Option<f64>) -> f64 {
        let r = &self.reactions[k];
        match theta_override {
            Some(theta) if r.rate_param == self.params.sensitive => theta,
            _ => self.params.values[&r.rate_param],
        }
    }

    fn check_reaction(&self, k: usize) -> Result<()> {
        if k >= self.reactions.len() {
            return Err(Error::ReactionIndex {
                index: k,
                count: self.reactions.len(),
            });
        }
        Ok(())
    }

    fn check_state(&self, x: &[i64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                got: x.len(),
                want: self.dim(),
            });
        }
        if let Some(s) = x.iter().position(|&v| v < 0) {
            return Err(Error::NegativeState {
                species: s,
                value: x[s],
            });
        }
        Ok(())
    }
}

/// Number of ordered reactant tuples state `x` supplies for `r`, as a float.
/// Zero whenever some species is below its multiplicity.
pub(crate) fn intensity(r: &Reaction, x: &[i64]) -> f64 {
    let mut acc = 1.0;
    for (s, &m) in r.reactants.iter().enumerate() {
        for j in 0..i64::from(m) {
            acc *= (x[s] - j) as f64;
        }
        if acc == 0.0 {
            return 0.0;
        }
    }
    acc
}

/// lambda_k(x, theta): mass-action propensity of reaction `k` at state `x`.
pub fn propensity(
    net: &ReactionNetwork,
    k: usize,
    x: &[i64],
    theta_override: Option<f64>,
) -> Result<f64> {
    net.check_reaction(k)?;
    net.check_state(x)?;
    Ok(net.rate_constant(k, theta_override) * intensity(&net.reactions[k], x))
}

/// lambda_0(x, theta): sum of all propensities at the stored parameter values.
pub fn total_propensity(net: &ReactionNetwork, x: &[i64]) -> Result<f64> {
    net.check_state(x)?;
    Ok(net
        .reactions
        .iter()
        .enumerate()
        .map(|(k, r)| net.rate_constant(k, None) * intensity(r, x))
        .sum())
}

/// d lambda_k / d theta at state `x`. For mass-action kinetics this is the
/// reactant-tuple count when reaction `k` is driven by the sensitive
/// parameter and zero otherwise.
pub fn propensity_dtheta(net: &ReactionNetwork, k: usize, x: &[i64]) -> Result<f64> {
    net.check_reaction(k)?;
    net.check_state(x)?;
    let r = &net.reactions[k];
    if r.rate_param == net.params.sensitive {
        Ok(intensity(r, x))
    } else {
        Ok(0.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// Stored net change disagrees with products minus reactants.
    InconsistentStoichiometry { reaction: usize, species: usize },
    /// Firing the reaction can push a species count below zero.
    NegativeReachable { reaction: usize, species: usize },
    /// Net population gain with total reactant order above one; moments can
    /// explode in finite time, so long-horizon runs may not terminate.
    UnstableGain { reaction: usize, order: u32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InconsistentStoichiometry { reaction, species } => write!(
                f,
                "reaction {reaction}: stoichiometry for species {species} is not products minus reactants"
            ),
            Violation::NegativeReachable { reaction, species } => write!(
                f,
                "reaction {reaction}: firing can drive species {species} negative"
            ),
            Violation::UnstableGain { reaction, order } => write!(
                f,
                "reaction {reaction}: net population gain with reactant order {order} > 1 (moment growth unbounded)"
            ),
        }
    }
}

/// Static well-posedness checks. Nonnegativity of reachable states and the
/// order restriction on net-gain reactions are sufficient conditions, so a
/// flagged model is suspect rather than certainly broken.
pub fn validate(net: &ReactionNetwork) -> Vec<Violation> {
    let mut out = Vec::new();
    for (k, r) in net.reactions.iter().enumerate() {
        for s in 0..net.dim() {
            let expect = i64::from(r.products[s]) - i64::from(r.reactants[s]);
            if r.stoich[s] != expect {
                out.push(Violation::InconsistentStoichiometry {
                    reaction: k,
                    species: s,
                });
            }
            // A firing is only possible when x_s >= multiplicity, so the new
            // count is x_s + stoich >= multiplicity + stoich.
            if i64::from(r.reactants[s]) + r.stoich[s] < 0 {
                out.push(Violation::NegativeReachable {
                    reaction: k,
                    species: s,
                });
            }
        }
        if r.net_gain() > 0 && r.order() > 1 {
            out.push(Violation::UnstableGain {
                reaction: k,
                order: r.order(),
            });
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical JSON model files.
//
// Keys appear in sorted order at every level and nested maps are keyed by
// species/parameter name, so serialisation is byte-stable: load followed by
// save reproduces a canonical file exactly.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(rename = "T")]
    t: f64,
    observable: ObservableFile,
    params: BTreeMap<String, f64>,
    reactions: Vec<ReactionFile>,
    sensitive: String,
    species: Vec<String>,
    x0: Vec<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservableFile {
    coeffs: BTreeMap<String, f64>,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionFile {
    products: BTreeMap<String, u32>,
    rate: String,
    reactants: BTreeMap<String, u32>,
}

impl ModelFile {
    fn to_network(&self) -> Result<ReactionNetwork> {
        let index_of = |name: &str, what: &str| -> Result<usize> {
            self.species
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Model(format!("{what} references unknown species {name:?}")))
        };
        let mut reactions = Vec::with_capacity(self.reactions.len());
        for (k, rf) in self.reactions.iter().enumerate() {
            let mut reactants = vec![0u32; self.species.len()];
            let mut products = vec![0u32; self.species.len()];
            for (name, &m) in &rf.reactants {
                reactants[index_of(name, &format!("reaction {k}"))?] = m;
            }
            for (name, &m) in &rf.products {
                products[index_of(name, &format!("reaction {k}"))?] = m;
            }
            reactions.push(Reaction::new(reactants, products, rf.rate.clone())?);
        }
        let mut coeffs = vec![0.0; self.species.len()];
        for (name, &c) in &self.observable.coeffs {
            coeffs[index_of(name, "observable")?] = c;
        }
        ReactionNetwork::new(
            self.species.clone(),
            self.x0.clone(),
            reactions,
            ParameterSet::new(self.params.clone(), self.sensitive.clone())?,
            Observable {
                coeffs,
                offset: self.observable.offset,
            },
            self.t,
        )
    }

    fn from_network(net: &ReactionNetwork) -> Self {
        let name = |s: usize| net.species[s].name.clone();
        ModelFile {
            t: net.t_horizon,
            observable: ObservableFile {
                coeffs: net
                    .observable
                    .coeffs
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(s, &c)| (name(s), c))
                    .collect(),
                offset: net.observable.offset,
            },
            params: net.params.values.clone(),
            reactions: net
                .reactions
                .iter()
                .map(|r| ReactionFile {
                    products: r
                        .products
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| **m > 0)
                        .map(|(s, &m)| (name(s), m))
                        .collect(),
                    rate: r.rate_param.clone(),
                    reactants: r
                        .reactants
                        .iter()
                        .enumerate()
                        .filter(|(_, m)| **m > 0)
                        .map(|(s, &m)| (name(s), m))
                        .collect(),
                })
                .collect(),
            sensitive: net.params.sensitive.clone(),
            species: net.species.iter().map(|s| s.name.clone()).collect(),
            x0: net.x0.clone(),
        }
    }
}

/// Canonical textual form of a network: sorted keys, two-space indent,
/// trailing newline.
pub fn canonical_json(net: &ReactionNetwork) -> String {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_network(net))
        .expect("model serialization cannot fail");
    s.push('\n');
    s
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ReactionNetwork> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|source| Error::ModelFile {
        path: path.display().to_string(),
        source,
    })?;
    file.to_network()
}

pub fn save_model(net: &ReactionNetwork, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, canonical_json(net))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    /// Brute-force ordered-tuple count: enumerate every assignment of
    /// distinct molecule labels to reactant slots.
    fn count_ordered_tuples(x: &[i64], multiplicities: &[u32]) -> u64 {
        fn per_species(count: i64, m: u32) -> u64 {
            let mut picked = Vec::new();
            let mut total = 0;
            fn rec(count: i64, slots: u32, picked: &mut Vec<i64>, total: &mut u64) {
                if slots == 0 {
                    *total += 1;
                    return;
                }
                for label in 0..count {
                    if !picked.contains(&label) {
                        picked.push(label);
                        rec(count, slots - 1, picked, total);
                        picked.pop();
                    }
                }
            }
            rec(count, m, &mut picked, &mut total);
            total
        }
        x.iter()
            .zip(multiplicities)
            .map(|(&c, &m)| per_species(c, m))
            .product()
    }

    #[test]
    fn dimerization_propensity_counts_ordered_pairs() {
        let params = ParameterSet::new([("c".to_string(), 2.0)].into(), "c").unwrap();
        let net = ReactionNetwork::new(
            vec!["S".into()],
            vec![4],
            vec![Reaction::new(vec![2], vec![0], "c").unwrap()],
            params,
            Observable {
                coeffs: vec![1.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap();
        let brute = count_ordered_tuples(&[4], &[2]) as f64 * 2.0;
        let lam = propensity(&net, 0, &[4], None).unwrap();
        assert_eq!(lam, 24.0, "2 * 4 * 3 ordered pairs");
        assert_eq!(lam, brute, "closed form disagrees with enumeration");
    }

    #[test]
    fn propensity_zero_when_reactants_insufficient() {
        let net = builtin::birth_death(0.1, 5.0);
        assert_eq!(propensity(&net, 1, &[0], None).unwrap(), 0.0);
        let params = ParameterSet::new([("c".to_string(), 3.0)].into(), "c").unwrap();
        let dimer = ReactionNetwork::new(
            vec!["S".into()],
            vec![1],
            vec![Reaction::new(vec![2], vec![0], "c").unwrap()],
            params,
            Observable {
                coeffs: vec![1.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap();
        assert_eq!(propensity(&dimer, 0, &[1], None).unwrap(), 0.0);
    }

    #[test]
    fn total_propensity_sums_channels() {
        let net = builtin::birth_death(0.1, 5.0);
        let tot = total_propensity(&net, &[2]).unwrap();
        assert!((tot - 1.2).abs() < 1e-15, "1 + 0.1 * 2 = 1.2, got {tot}");
    }

    #[test]
    fn theta_override_replaces_only_sensitive_rate() {
        let net = builtin::birth_death(0.1, 5.0);
        assert_eq!(propensity(&net, 1, &[3], Some(0.5)).unwrap(), 1.5);
        assert_eq!(propensity(&net, 0, &[3], Some(0.5)).unwrap(), 1.0);
    }

    #[test]
    fn dtheta_is_zero_for_insensitive_reactions() {
        let net = builtin::birth_death(0.1, 5.0);
        assert_eq!(propensity_dtheta(&net, 0, &[7]).unwrap(), 0.0);
        assert_eq!(propensity_dtheta(&net, 1, &[7]).unwrap(), 7.0);
    }

    #[test]
    fn dtheta_matches_centered_difference() {
        let net = builtin::gene_expression(0.05, 10.0);
        let delta = 1e-6;
        for k in 0..net.n_reactions() {
            for x in [[1, 0, 0], [1, 3, 7], [1, 10, 40]] {
                let plus = propensity(&net, k, &x, Some(0.05 + delta)).unwrap();
                let minus = propensity(&net, k, &x, Some(0.05 - delta)).unwrap();
                let fd = (plus - minus) / (2.0 * delta);
                let exact = propensity_dtheta(&net, k, &x).unwrap();
                let tol = 1e-6 * exact.abs().max(1.0);
                assert!(
                    (fd - exact).abs() <= tol,
                    "reaction {k} at {x:?}: fd {fd} vs exact {exact}"
                );
            }
        }
    }

    #[test]
    fn propensity_rejects_bad_inputs() {
        let net = builtin::birth_death(0.1, 5.0);
        assert!(matches!(
            propensity(&net, 9, &[1], None),
            Err(Error::ReactionIndex { .. })
        ));
        assert!(matches!(
            propensity(&net, 0, &[-1], None),
            Err(Error::NegativeState { .. })
        ));
        assert!(matches!(
            propensity(&net, 0, &[1, 2], None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn reaction_order_cap_enforced() {
        let err = Reaction::new(vec![4], vec![0], "c").unwrap_err();
        assert!(err.to_string().contains("order 4"));
    }

    #[test]
    fn validate_accepts_builtins() {
        for net in [
            builtin::pure_birth(0.1, 1.0),
            builtin::birth_death(0.1, 5.0),
            builtin::gene_expression(0.0116, 10.0),
        ] {
            assert!(validate(&net).is_empty());
        }
    }

    #[test]
    fn validate_flags_net_gain_with_high_order() {
        // 2S -> 3S: autocatalytic, net gain with order 2.
        let params = ParameterSet::new([("c".to_string(), 1.0)].into(), "c").unwrap();
        let net = ReactionNetwork::new(
            vec!["S".into()],
            vec![2],
            vec![Reaction::new(vec![2], vec![3], "c").unwrap()],
            params,
            Observable {
                coeffs: vec![1.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap();
        assert_eq!(
            validate(&net),
            vec![Violation::UnstableGain {
                reaction: 0,
                order: 2
            }]
        );
    }

    #[test]
    fn validate_flags_inconsistent_stoichiometry() {
        let mut net = builtin::birth_death(0.1, 5.0);
        net.reactions[0].stoich[0] = -2;
        let violations = validate(&net);
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::InconsistentStoichiometry { reaction: 0, .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, Violation::NegativeReachable { reaction: 0, .. })));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let dir = std::env::temp_dir().join("stochsens-model-roundtrip");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("gene.json");
        let net = builtin::gene_expression(0.0116, 10.0);
        save_model(&net, &path).unwrap();
        let first = fs::read(&path).unwrap();
        let reloaded = load_model(&path).unwrap();
        assert_eq!(reloaded, net);
        save_model(&reloaded, &path).unwrap();
        let second = fs::read(&path).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn load_reports_unknown_references() {
        let dir = std::env::temp_dir().join("stochsens-model-badrefs");
        fs::create_dir_all(&dir).unwrap();

        let unknown_species = r#"{
  "T": 1.0,
  "observable": { "coeffs": { "S": 1.0 }, "offset": 0.0 },
  "params": { "c": 1.0 },
  "reactions": [ { "products": { "Q": 1 }, "rate": "c", "reactants": {} } ],
  "sensitive": "c",
  "species": ["S"],
  "x0": [0]
}"#;
        let p = dir.join("unknown_species.json");
        fs::write(&p, unknown_species).unwrap();
        let err = load_model(&p).unwrap_err().to_string();
        assert!(err.contains("unknown species"), "{err}");

        let unknown_param = unknown_species
            .replace(r#""products": { "Q": 1 }"#, r#""products": { "S": 1 }"#)
            .replace(r#""rate": "c""#, r#""rate": "missing""#);
        let p = dir.join("unknown_param.json");
        fs::write(&p, unknown_param).unwrap();
        let err = load_model(&p).unwrap_err().to_string();
        assert!(err.contains("unknown rate parameter"), "{err}");
    }

    #[test]
    fn load_reports_parse_position() {
        let dir = std::env::temp_dir().join("stochsens-model-parse");
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("broken.json");
        fs::write(&p, "{\n  \"T\": 1.0,\n  \"species\": [,]\n}").unwrap();
        let err = load_model(&p).unwrap_err().to_string();
        assert!(err.contains("line 3"), "expected a line number: {err}");
    }

    #[test]
    fn duplicate_species_rejected() {
        let params = ParameterSet::new([("c".to_string(), 1.0)].into(), "c").unwrap();
        let err = ReactionNetwork::new(
            vec!["S".into(), "S".into()],
            vec![0, 0],
            vec![Reaction::new(vec![0, 0], vec![1, 0], "c").unwrap()],
            params,
            Observable {
                coeffs: vec![1.0, 0.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("duplicate species"));
    }

    #[test]
    fn negative_initial_state_rejected() {
        let params = ParameterSet::new([("c".to_string(), 1.0)].into(), "c").unwrap();
        let err = ReactionNetwork::new(
            vec!["S".into()],
            vec![-3],
            vec![Reaction::new(vec![0], vec![1], "c").unwrap()],
            params,
            Observable {
                coeffs: vec![1.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::NegativeState {
                species: 0,
                value: -3
            }
        ));
    }
}
