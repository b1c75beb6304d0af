//! Independent reference values: closed forms for the two solvable
//! networks, moment ODEs for affine-propensity networks, and a truncated
//! master-equation solve for anything with a small reachable state space.
//! These back the estimator tests, so nothing here shares code with the
//! Monte Carlo paths beyond the model types.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::model::{ReactionNetwork, State};

/// (1 - exp(-theta t)) / theta, stable for small theta.
pub fn phi(theta: f64, t: f64) -> f64 {
    if theta == 0.0 {
        t
    } else {
        -(-theta * t).exp_m1() / theta
    }
}

/// (exp(-a t) - exp(-b t)) / (b - a), stable as b -> a.
fn exp_diff_over(a: f64, b: f64, t: f64) -> f64 {
    let g = b - a;
    if (g * t).abs() < 1e-7 {
        // exp(-a t) * t * (1 - g t / 2 + (g t)^2 / 6)
        (-a * t).exp() * t * (1.0 - g * t / 2.0 + g * g * t * t / 6.0)
    } else {
        (-a * t).exp() * -(-g * t).exp_m1() / g
    }
}

/// Mean of the linear birth-death process (constant birth rate `b`, per-unit
/// death rate `theta`) started at `x`, after time `t`.
pub fn bd_mean(b: f64, theta: f64, x: f64, t: f64) -> f64 {
    x * (-theta * t).exp() + b * phi(theta, t)
}

/// Derivative of `bd_mean` in the death rate.
pub fn bd_mean_sensitivity(b: f64, theta: f64, x: f64, t: f64) -> f64 {
    let dphi = if (theta * t).abs() < 1e-4 {
        // Series of (t e^{-th t} - phi)/th around theta = 0.
        -t * t / 2.0 + theta * t * t * t / 3.0 - theta * theta * t * t * t * t / 8.0
    } else {
        (t * (-theta * t).exp() - phi(theta, t)) / theta
    };
    -t * x * (-theta * t).exp() + b * dphi
}

/// Time integral of `bd_mean` over [0, t].
pub fn bd_mean_integral(b: f64, theta: f64, x: f64, t: f64) -> f64 {
    let tail = if (theta * t).abs() < 1e-4 {
        // Series of (t - phi)/theta around theta = 0.
        t * t / 2.0 - theta * t * t * t / 6.0 + theta * theta * t * t * t * t / 24.0
    } else {
        (t - phi(theta, t)) / theta
    };
    x * phi(theta, t) + b * tail
}

/// Conditional-difference kernel of the birth-death process for f(x) = x:
/// the integral over [0, t] of
///   (mean from x+dx at time s) - (mean from x at s) - dx
/// against exp(-lambda0(x) (t - s)) ds, where dx is +1 for the birth
/// reaction and -1 for death, and lambda0(x) = b + theta x.
pub fn bd_r(b: f64, theta: f64, x: f64, t: f64, birth: bool) -> f64 {
    let lam = b + theta * x;
    // Mean difference from one extra unit decays as exp(-theta s).
    let decay_part = exp_diff_over(theta, lam, t);
    let const_part = phi(lam, t);
    if birth {
        decay_part - const_part
    } else {
        const_part - decay_part
    }
}

/// Composite Simpson rule with n (even) panels.
pub fn simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(
        n >= 2 && n.is_multiple_of(2),
        "simpson needs an even panel count"
    );
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// Adaptive Dormand-Prince 5(4) integrator; returns y(t1).
pub fn integrate_ode(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]),
    y0: Vec<f64>,
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<f64>> {
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    // Difference between the 5th- and 4th-order weights.
    const E: [f64; 7] = [
        35.0 / 384.0 - 5179.0 / 57600.0,
        0.0,
        500.0 / 1113.0 - 7571.0 / 16695.0,
        125.0 / 192.0 - 393.0 / 640.0,
        -2187.0 / 6784.0 + 92097.0 / 339200.0,
        11.0 / 84.0 - 187.0 / 2100.0,
        -1.0 / 40.0,
    ];
    let dim = y0.len();
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0);
    }
    assert!(span > 0.0, "integration runs forward");
    let mut y = y0;
    let mut t = t0;
    let mut h = span * 1e-3;
    let mut k = vec![vec![0.0; dim]; 7];
    let mut ytmp = vec![0.0; dim];
    let mut y5 = vec![0.0; dim];
    rhs(t, &y, &mut k[0]);
    loop {
        if t >= t1 {
            return Ok(y);
        }
        h = h.min(t1 - t);
        if h < span * 1e-14 {
            return Err(Error::Model(
                "ODE step size underflow; system too stiff for this solver".into(),
            ));
        }
        for stage in 0..6 {
            for i in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage + 1) {
                    acc += A[stage][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let c = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0][stage];
            let (head, tail) = k.split_at_mut(stage + 1);
            let _ = head;
            rhs(t + c * h, &ytmp, &mut tail[0]);
        }
        // Stage 6 already evaluated y5 = ytmp (the 5th-order solution).
        y5.copy_from_slice(&ytmp);
        let mut err = 0.0;
        for i in 0..dim {
            let e: f64 = (0..7).map(|s| E[s] * k[s][i]).sum();
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            err += (h * e / sc).powi(2);
        }
        err = (err / dim as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y.copy_from_slice(&y5);
            let last = k.len() - 1;
            k.swap(0, last); // FSAL: k7 becomes next step's k1
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
    }
}

/// First-moment dynamics mu' = A mu + b of a network whose propensities are
/// all affine in the state (total reactant order <= 1), plus the
/// derivatives (A', b') of the coefficients in the sensitive parameter.
pub struct AffineMoments {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub a_sens: Vec<f64>,
    pub b_sens: Vec<f64>,
    pub dim: usize,
}

pub fn affine_moments(net: &ReactionNetwork, theta: f64) -> Result<AffineMoments> {
    let d = net.dim();
    let mut m = AffineMoments {
        a: vec![0.0; d * d],
        b: vec![0.0; d],
        a_sens: vec![0.0; d * d],
        b_sens: vec![0.0; d],
        dim: d,
    };
    for (k, r) in net.reactions.iter().enumerate() {
        let order: u32 = r.reactants.iter().sum();
        if order > 1 {
            return Err(Error::NonAffine { reaction: k, order });
        }
        let c = net.rate_constant(k, Some(theta));
        let sensitive = r.rate_param == net.params.sensitive;
        match r.reactants.iter().position(|&m| m == 1) {
            None => {
                for i in 0..d {
                    m.b[i] += c * r.stoich[i] as f64;
                    if sensitive {
                        m.b_sens[i] += r.stoich[i] as f64;
                    }
                }
            }
            Some(s) => {
                for i in 0..d {
                    m.a[i * d + s] += c * r.stoich[i] as f64;
                    if sensitive {
                        m.a_sens[i * d + s] += r.stoich[i] as f64;
                    }
                }
            }
        }
    }
    Ok(m)
}

/// Expected observable and its parameter derivative at time `t`, from the
/// coupled moment and moment-sensitivity ODE. Exact (up to integration
/// tolerance) for affine networks; errors on anything of higher order.
pub fn ode_mean_and_sensitivity(
    net: &ReactionNetwork,
    theta: f64,
    t: f64,
    tol: f64,
) -> Result<(f64, f64)> {
    let m = affine_moments(net, theta)?;
    let d = m.dim;
    let mut y0 = vec![0.0; 2 * d];
    for (y, &x) in y0.iter_mut().zip(&net.x0) {
        *y = x as f64;
    }
    let y = integrate_ode(
        |_, y, dy| {
            let (mu, mu_s) = y.split_at(d);
            let (dmu, dmu_s) = dy.split_at_mut(d);
            for i in 0..d {
                let mut v = m.b[i];
                let mut vs = m.b_sens[i];
                for j in 0..d {
                    v += m.a[i * d + j] * mu[j];
                    vs += m.a[i * d + j] * mu_s[j] + m.a_sens[i * d + j] * mu[j];
                }
                dmu[i] = v;
                dmu_s[i] = vs;
            }
        },
        y0,
        0.0,
        t,
        tol,
        tol * 1e-2,
    )?;
    let f = &net.observable;
    let mean = f.offset + (0..d).map(|i| f.coeffs[i] * y[i]).sum::<f64>();
    let sens = (0..d).map(|i| f.coeffs[i] * y[d + i]).sum::<f64>();
    Ok((mean, sens))
}

const CME_STATE_LIMIT: usize = 100_000;
const CME_ESCAPE_LIMIT: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct CmeResult {
    pub mean: f64,
    pub sensitivity: f64,
    /// Probability mass that left the truncated box by time t (worst side).
    pub escaped: f64,
    pub n_states: usize,
}

/// Brute-force reference: enumerate every state reachable inside the
/// per-species caps, integrate the master equation at two parameter values
/// with shared adaptive steps, and difference. Mass leaving the box is
/// routed to an absorbing sink and must stay below 1e-8 for the result to
/// be trusted.
pub fn cme_mean_and_sensitivity(
    net: &ReactionNetwork,
    theta: f64,
    t: f64,
    caps: &[i64],
) -> Result<CmeResult> {
    let d = net.dim();
    if caps.len() != d {
        return Err(Error::Dimension {
            got: caps.len(),
            want: d,
        });
    }
    if net.x0.iter().zip(caps).any(|(&x, &c)| x > c) {
        return Err(Error::Model("initial state outside truncation caps".into()));
    }
    // Breadth-first enumeration of the reachable truncated state space.
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states: Vec<State> = Vec::new();
    let mut queue = VecDeque::new();
    index.insert(net.x0.clone(), 0);
    states.push(net.x0.clone());
    queue.push_back(0usize);
    // (from, to, reaction, intensity); to == usize::MAX is the sink.
    let mut edges: Vec<(usize, usize, usize, f64)> = Vec::new();
    while let Some(i) = queue.pop_front() {
        let x = states[i].clone();
        for (k, r) in net.reactions.iter().enumerate() {
            let w = crate::model::intensity(r, &x);
            if w <= 0.0 {
                continue;
            }
            let target: State = x.iter().zip(&r.stoich).map(|(&xi, &z)| xi + z).collect();
            if target.iter().zip(caps).all(|(&v, &c)| v >= 0 && v <= c) {
                let j = *index.entry(target.clone()).or_insert_with(|| {
                    states.push(target);
                    queue.push_back(states.len() - 1);
                    states.len() - 1
                });
                edges.push((i, j, k, w));
            } else {
                edges.push((i, usize::MAX, k, w));
            }
            if states.len() > CME_STATE_LIMIT {
                return Err(Error::StateSpace {
                    states: states.len(),
                    cap: CME_STATE_LIMIT,
                });
            }
        }
    }
    let n = states.len();
    let delta = 1e-6 * theta.max(1.0);
    let (th_lo, th_hi) = if theta - delta >= 0.0 {
        (theta - delta, theta + delta)
    } else {
        (theta, theta + delta)
    };
    let rates_lo: Vec<f64> = (0..net.n_reactions())
        .map(|k| net.rate_constant(k, Some(th_lo)))
        .collect();
    let rates_hi: Vec<f64> = (0..net.n_reactions())
        .map(|k| net.rate_constant(k, Some(th_hi)))
        .collect();
    // Stacked probability vectors [p_lo | p_hi], each n interior states
    // plus one sink entry, advanced with shared step sizes so the
    // integration error largely cancels in the difference.
    let width = n + 1;
    let mut y0 = vec![0.0; 2 * width];
    y0[0] = 1.0;
    y0[width] = 1.0;
    let y = integrate_ode(
        |_, y, dy| {
            dy.fill(0.0);
            let (lo, hi) = y.split_at(width);
            let (dlo, dhi) = dy.split_at_mut(width);
            for &(from, to, k, w) in &edges {
                let sink_to = if to == usize::MAX { n } else { to };
                let flow = rates_lo[k] * w * lo[from];
                dlo[from] -= flow;
                dlo[sink_to] += flow;
                let flow = rates_hi[k] * w * hi[from];
                dhi[from] -= flow;
                dhi[sink_to] += flow;
            }
        },
        y0,
        0.0,
        t,
        1e-10,
        1e-14,
    )?;
    let (p_lo, p_hi) = y.split_at(width);
    for p in [p_lo, p_hi] {
        let total: f64 = p.iter().sum();
        assert!(
            (total - 1.0).abs() < 1e-9,
            "probability mass drifted to {total}"
        );
    }
    let escaped = p_lo[n].max(p_hi[n]);
    if escaped > CME_ESCAPE_LIMIT {
        return Err(Error::Truncation {
            escaped,
            limit: CME_ESCAPE_LIMIT,
        });
    }
    let expect = |p: &[f64]| -> f64 {
        states
            .iter()
            .enumerate()
            .map(|(i, x)| p[i] * net.observable.eval(x))
            .sum()
    };
    let (e_lo, e_hi) = (expect(p_lo), expect(p_hi));
    let sensitivity = (e_hi - e_lo) / (th_hi - th_lo);
    let mean = if th_lo < theta {
        0.5 * (e_lo + e_hi)
    } else {
        e_lo
    };
    Ok(CmeResult {
        mean,
        sensitivity,
        escaped,
        n_states: n,
    })
}
