//! Likelihood-ratio sensitivity estimator built on the counting-process
//! martingale of the sensitive reaction. Cheap per sample, but its
//! variance blows up as the sensitive rate constant shrinks and it is
//! undefined at zero.

use crate::error::{Error, Result};
use crate::model::ReactionNetwork;
use crate::sim::{simulate, RngStream, SimOptions, Trajectory};
use crate::stats::Sample;

/// Index of the single reaction driven by the sensitive parameter. The
/// likelihood-ratio score only exists when the parameter scales exactly
/// one propensity.
pub fn sensitive_reaction(net: &ReactionNetwork) -> Result<usize> {
    let ks = net.sensitive_reactions();
    match ks.as_slice() {
        [k] => Ok(*k),
        [] => Err(Error::GirsanovInapplicable(format!(
            "parameter '{}' drives no reaction",
            net.params.sensitive
        ))),
        _ => Err(Error::GirsanovInapplicable(format!(
            "parameter '{}' drives {} reactions; exactly one is required",
            net.params.sensitive,
            ks.len()
        ))),
    }
}

/// N_k0(t) minus the pathwise integral of reaction k0's propensity: a
/// zero-mean martingale evaluated at t. Needs a fully recorded path.
pub fn reaction_martingale(
    net: &ReactionNetwork,
    theta: f64,
    k0: usize,
    t: f64,
    traj: &Trajectory,
) -> f64 {
    let rate = net.rate_constant(k0, Some(theta));
    let fires = traj
        .reaction_ids
        .iter()
        .zip(&traj.jump_times[1..])
        .filter(|&(&r, &s)| r as usize == k0 && s <= t)
        .count();
    let compensator = traj.integrate(
        |x| rate * crate::model::intensity(&net.reactions[k0], x),
        0.0,
        t,
    );
    fires as f64 - compensator
}

/// Single-path likelihood-ratio score f(X(t)) M(t) / theta.
pub fn score(net: &ReactionNetwork, theta: f64, t: f64, traj: &Trajectory) -> Result<f64> {
    let k0 = sensitive_reaction(net)?;
    if theta <= 0.0 {
        return Err(Error::GirsanovInapplicable(format!(
            "score divides by the parameter value; got {theta}"
        )));
    }
    let m = reaction_martingale(net, theta, k0, t, traj);
    Ok(net.observable.eval(traj.state_at(t)) * m / theta)
}

/// Per-stream sampler for the batched driver.
pub fn sampler<'a>(
    net: &'a ReactionNetwork,
    theta: f64,
    t: f64,
) -> impl Fn(RngStream) -> Result<Sample> + Sync + 'a {
    move |stream| {
        let mut rng = stream.rng();
        let traj = simulate(net, theta, t, &mut rng, &SimOptions::default())?;
        Ok(Sample {
            score: score(net, theta, t, &traj)?,
            jumps: traj.jump_count,
            diag: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::model::{Observable, ParameterSet, Reaction, ReactionNetwork};
    use crate::stats::{run_fixed, RunConfig, RunMeta};

    fn meta(theta: f64, t: f64) -> RunMeta<'static> {
        RunMeta {
            method: "girsanov",
            theta,
            t_horizon: t,
        }
    }

    #[test]
    fn pure_birth_mean_and_variance_match_closed_form() {
        // E[score] = T and Var = (T + 4 theta T^2 + theta^2 T^3) / theta,
        // which is 14.1 at theta = 0.1, T = 1.
        let net = builtin::pure_birth(0.1, 1.0);
        let out = run_fixed(
            sampler(&net, 0.1, 1.0),
            100_000,
            &RunConfig::default(),
            meta(0.1, 1.0),
        )
        .unwrap();
        let se = (out.report.sample_variance / out.report.n as f64).sqrt();
        assert!(
            (out.report.estimate - 1.0).abs() <= 4.0 * se,
            "mean {} is {} se from T",
            out.report.estimate,
            (out.report.estimate - 1.0).abs() / se
        );
        assert!(
            (out.report.sample_variance - 14.1).abs() <= 0.1 * 14.1,
            "variance {} vs closed-form 14.1",
            out.report.sample_variance
        );
    }

    #[test]
    fn birth_death_variance_matches_reference_table() {
        // Reference sample variance for theta = 0.1, T = 1 is 10.7365.
        let net = builtin::birth_death(0.1, 1.0);
        let out = run_fixed(
            sampler(&net, 0.1, 1.0),
            100_000,
            &RunConfig::default(),
            meta(0.1, 1.0),
        )
        .unwrap();
        assert!(
            (out.report.sample_variance - 10.7365).abs() <= 0.15 * 10.7365,
            "variance {} vs reference 10.7365",
            out.report.sample_variance
        );
        let closed = crate::oracle::bd_mean_sensitivity(1.0, 0.1, 0.0, 1.0);
        let se = (out.report.sample_variance / out.report.n as f64).sqrt();
        assert!(
            (out.report.estimate - closed).abs() <= 4.0 * se,
            "estimate {} vs closed form {closed}",
            out.report.estimate
        );
    }

    #[test]
    fn martingale_has_zero_mean() {
        let net = builtin::birth_death(0.3, 3.0);
        let k0 = sensitive_reaction(&net).unwrap();
        let mut acc = crate::stats::Accumulator::new();
        for i in 0..20_000 {
            let traj = simulate(
                &net,
                0.3,
                3.0,
                &mut RngStream::new(31, i).rng(),
                &SimOptions::default(),
            )
            .unwrap();
            acc.push(reaction_martingale(&net, 0.3, k0, 3.0, &traj));
        }
        let se = (acc.sample_variance() / acc.n() as f64).sqrt();
        assert!(
            acc.mean().abs() <= 4.0 * se,
            "martingale mean {} exceeds 4 se ({se})",
            acc.mean()
        );
    }

    #[test]
    fn path_without_firings_scores_zero_from_empty_start() {
        // With a vanishing birth rate no reaction fires by T, so f(X(T)) = 0
        // and the score is exactly zero despite the nonzero compensator.
        let net = builtin::pure_birth(1e-9, 1.0);
        let traj = simulate(
            &net,
            1e-9,
            1.0,
            &mut RngStream::new(4, 0).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(traj.jump_count, 0, "seed produced an unexpected firing");
        assert_eq!(score(&net, 1e-9, 1.0, &traj).unwrap(), 0.0);
    }

    #[test]
    fn zero_parameter_is_rejected() {
        let net = builtin::birth_death(0.1, 5.0);
        let traj = simulate(
            &net,
            0.1,
            5.0,
            &mut RngStream::new(1, 0).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        let err = score(&net, 0.0, 5.0, &traj).unwrap_err();
        assert!(matches!(err, Error::GirsanovInapplicable(_)));
    }

    #[test]
    fn shared_parameter_is_rejected() {
        let params = ParameterSet::new([("theta".to_string(), 0.2)].into(), "theta").unwrap();
        let net = ReactionNetwork::new(
            vec!["A".into()],
            vec![1],
            vec![
                Reaction::new(vec![0], vec![1], "theta").unwrap(),
                Reaction::new(vec![1], vec![0], "theta").unwrap(),
            ],
            params,
            Observable {
                coeffs: vec![1.0],
                offset: 0.0,
            },
            1.0,
        )
        .unwrap();
        let err = sensitive_reaction(&net).unwrap_err();
        assert!(matches!(err, Error::GirsanovInapplicable(_)));
        let frozen = builtin::frozen(1.0);
        assert!(sensitive_reaction(&frozen).is_err(), "drives no reaction");
    }
}
