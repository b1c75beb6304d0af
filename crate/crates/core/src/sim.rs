//! Exact continuous-time simulation of reaction networks.
//!
//! The single-chain simulator is the classic direct method: draw an
//! exponential holding time from the total propensity, then pick the firing
//! reaction in proportion to its propensity. Coupled-pair variants simulate
//! a nominal and a perturbed chain together for finite-difference
//! estimators, sharing randomness in three different ways.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::ReactionNetwork;

/// Hard ceiling on simulated events, so runaway networks fail loudly
/// instead of hanging.
pub const DEFAULT_JUMP_CAP: u64 = 100_000_000;

/// Reproducible stream handle: `seed` selects the experiment, `stream_id`
/// the independent substream, so parallel fan-out over sample indices is
/// deterministic regardless of scheduling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// What the simulator keeps: every jump, or just the states in effect at a
/// sorted list of query times (for large ensembles where per-jump storage
/// is wasteful).
#[derive(Clone, Debug)]
pub enum Recording {
    Full,
    Thinned(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct SimOptions {
    pub recording: Recording,
    pub jump_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            recording: Recording::Full,
            jump_cap: DEFAULT_JUMP_CAP,
        }
    }
}

/// A simulated path on [0, t_end]. With full recording, row i holds the
/// state right after the i-th event (row 0 is the initial state) and
/// `reaction_ids[i-1]` the reaction that produced row i; the state is
/// right-continuous and constant between rows. With thinned recording the
/// rows are the requested query times and `reaction_ids` is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    n_species: usize,
    pub jump_times: Vec<f64>,
    states: Vec<i64>,
    pub reaction_ids: Vec<u32>,
    pub t_end: f64,
    pub absorbed: bool,
    /// Events simulated, independent of what was recorded.
    pub jump_count: u64,
}

impl Trajectory {
    pub fn n_species(&self) -> usize {
        self.n_species
    }

    /// Number of recorded rows.
    pub fn len(&self) -> usize {
        self.jump_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jump_times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[i64] {
        &self.states[i * self.n_species..(i + 1) * self.n_species]
    }

    pub fn final_state(&self) -> &[i64] {
        self.state(self.len() - 1)
    }

    /// Index of the row in effect at time `t` (right-continuous).
    pub fn index_at(&self, t: f64) -> usize {
        debug_assert!(t >= self.jump_times[0]);
        self.jump_times.partition_point(|&s| s <= t) - 1
    }

    pub fn state_at(&self, t: f64) -> &[i64] {
        self.state(self.index_at(t))
    }

    /// Exact integral of g(X(s)) ds over [a, b] for a piecewise-constant
    /// path, where g is evaluated through `eval`. Uses summation by parts,
    /// so a constant integrand yields g * (b - a) with no accumulation
    /// error; the zero-variance estimator cases rely on that.
    pub fn integrate(&self, mut eval: impl FnMut(&[i64]) -> f64, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b && b <= self.t_end * (1.0 + 1e-12) + 1e-12);
        if a >= b {
            return 0.0;
        }
        let mut i = self.index_at(a);
        let mut g = eval(self.state(i));
        let mut acc = -g * a;
        while i + 1 < self.len() && self.jump_times[i + 1] < b {
            i += 1;
            let g_next = eval(self.state(i));
            acc -= (g_next - g) * self.jump_times[i];
            g = g_next;
        }
        acc + g * b
    }

    /// CSV dump: header `t,reaction,s_0,...,s_{d-1}`, one row per recorded
    /// state, and a closing row at `t_end` when the last event precedes it.
    /// The initial, thinned, and closing rows have an empty reaction field.
    pub fn write_csv(&self, out: &mut impl Write) -> io::Result<()> {
        write!(out, "t,reaction")?;
        for s in 0..self.n_species {
            write!(out, ",s_{s}")?;
        }
        writeln!(out)?;
        let row = |out: &mut dyn Write, t: f64, rid: Option<u32>, x: &[i64]| -> io::Result<()> {
            write!(out, "{t}")?;
            match rid {
                Some(r) => write!(out, ",{r}")?,
                None => write!(out, ",")?,
            }
            for &v in x {
                write!(out, ",{v}")?;
            }
            writeln!(out)
        };
        for i in 0..self.len() {
            let rid = if i >= 1 && !self.reaction_ids.is_empty() {
                Some(self.reaction_ids[i - 1])
            } else {
                None
            };
            row(out, self.jump_times[i], rid, self.state(i))?;
        }
        if *self.jump_times.last().unwrap() < self.t_end {
            row(out, self.t_end, None, self.final_state())?;
        }
        Ok(())
    }
}

/// Rate constants of one network at one parameter point, so the hot loop
/// avoids string lookups.
pub(crate) struct Kinetics<'a> {
    net: &'a ReactionNetwork,
    rates: Vec<f64>,
}

impl<'a> Kinetics<'a> {
    pub fn new(net: &'a ReactionNetwork, theta: f64) -> Self {
        let rates = (0..net.n_reactions())
            .map(|k| net.rate_constant(k, Some(theta)))
            .collect();
        Self { net, rates }
    }

    /// Writes all propensities into `out` and returns their sum.
    pub fn fill(&self, x: &[i64], out: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for (k, r) in self.net.reactions.iter().enumerate() {
            let p = self.rates[k] * crate::model::intensity(r, x);
            out[k] = p;
            total += p;
        }
        total
    }

    pub fn total(&self, x: &[i64]) -> f64 {
        self.net
            .reactions
            .iter()
            .enumerate()
            .map(|(k, r)| self.rates[k] * crate::model::intensity(r, x))
            .sum()
    }
}

pub(crate) fn exp_variate<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.gen();
    -(1.0 - u).ln() / rate
}

/// Categorical draw proportional to `props`; falls back to the last
/// positive channel when rounding makes the cumulative walk undershoot.
fn pick_channel<R: Rng>(rng: &mut R, props: &[f64], total: f64) -> usize {
    let mut target = rng.gen::<f64>() * total;
    for (k, &p) in props.iter().enumerate() {
        target -= p;
        if target < 0.0 && p > 0.0 {
            return k;
        }
    }
    props
        .iter()
        .rposition(|&p| p > 0.0)
        .expect("positive total propensity")
}

fn check_time_and_theta(theta: f64, t_end: f64) -> Result<()> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::Model(format!(
            "rate parameter must be finite and nonnegative, got {theta}"
        )));
    }
    if !t_end.is_finite() || t_end < 0.0 {
        return Err(Error::Model(format!(
            "time horizon must be finite and nonnegative, got {t_end}"
        )));
    }
    Ok(())
}

struct Recorder<'a> {
    n_species: usize,
    queries: Option<&'a [f64]>,
    next_query: usize,
    jump_times: Vec<f64>,
    states: Vec<i64>,
    reaction_ids: Vec<u32>,
}

impl<'a> Recorder<'a> {
    fn new(recording: &'a Recording, x0: &[i64]) -> Self {
        let mut rec = Self {
            n_species: x0.len(),
            queries: match recording {
                Recording::Full => None,
                Recording::Thinned(q) => Some(q),
            },
            next_query: 0,
            jump_times: Vec::new(),
            states: Vec::new(),
            reaction_ids: Vec::new(),
        };
        if rec.queries.is_none() {
            rec.jump_times.push(0.0);
            rec.states.extend_from_slice(x0);
        }
        rec
    }

    /// Called with the pre-jump state before time advances to `t`.
    fn before_jump(&mut self, t: f64, pre: &[i64]) {
        if let Some(q) = self.queries {
            while self.next_query < q.len() && q[self.next_query] < t {
                self.jump_times.push(q[self.next_query]);
                self.states.extend_from_slice(pre);
                self.next_query += 1;
            }
        }
    }

    /// Called with the post-jump state once the event is applied.
    fn after_jump(&mut self, t: f64, post: &[i64], k: u32) {
        if self.queries.is_none() {
            self.jump_times.push(t);
            self.states.extend_from_slice(post);
            self.reaction_ids.push(k);
        }
    }

    fn finish(
        mut self,
        t_end: f64,
        final_state: &[i64],
        absorbed: bool,
        jump_count: u64,
    ) -> Trajectory {
        if let Some(q) = self.queries {
            while self.next_query < q.len() {
                debug_assert!(q[self.next_query] <= t_end);
                self.jump_times.push(q[self.next_query]);
                self.states.extend_from_slice(final_state);
                self.next_query += 1;
            }
        }
        Trajectory {
            n_species: self.n_species,
            jump_times: self.jump_times,
            states: self.states,
            reaction_ids: self.reaction_ids,
            t_end,
            absorbed,
            jump_count,
        }
    }
}

/// Simulates one exact path on [0, t_end] with the sensitive parameter set
/// to `theta`. Stops early (with `absorbed` set) when every propensity
/// vanishes; errors if the event cap is hit or a state goes negative.
pub fn simulate<R: Rng>(
    net: &ReactionNetwork,
    theta: f64,
    t_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<Trajectory> {
    simulate_from(net, &net.x0, theta, t_end, rng, opts)
}

/// Same as `simulate` but started from an arbitrary state instead of the
/// network's x0, for conditional-expectation estimation.
pub fn simulate_from<R: Rng>(
    net: &ReactionNetwork,
    x0: &[i64],
    theta: f64,
    t_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<Trajectory> {
    check_time_and_theta(theta, t_end)?;
    if x0.len() != net.dim() {
        return Err(Error::Dimension {
            got: x0.len(),
            want: net.dim(),
        });
    }
    if let Some(s) = x0.iter().position(|&v| v < 0) {
        return Err(Error::NegativeState {
            species: s,
            value: x0[s],
        });
    }
    let kin = Kinetics::new(net, theta);
    let mut x = x0.to_vec();
    let mut props = vec![0.0; net.n_reactions()];
    let mut rec = Recorder::new(&opts.recording, &x);
    let mut t = 0.0;
    let mut jumps: u64 = 0;
    let mut absorbed = false;
    loop {
        let total = kin.fill(&x, &mut props);
        if total <= 0.0 {
            absorbed = true;
            break;
        }
        let t_next = t + exp_variate(rng, total);
        if t_next > t_end {
            break;
        }
        if jumps == opts.jump_cap {
            return Err(Error::JumpCapExceeded { cap: opts.jump_cap });
        }
        let k = pick_channel(rng, &props, total);
        rec.before_jump(t_next, &x);
        apply_stoich(&mut x, &net.reactions[k].stoich)?;
        t = t_next;
        jumps += 1;
        rec.after_jump(t, &x, k as u32);
    }
    Ok(rec.finish(t_end, &x, absorbed, jumps))
}

fn apply_stoich(x: &mut [i64], stoich: &[i64]) -> Result<()> {
    for (s, (xi, &z)) in x.iter_mut().zip(stoich).enumerate() {
        *xi += z;
        if *xi < 0 {
            return Err(Error::NegativeState {
                species: s,
                value: *xi,
            });
        }
    }
    Ok(())
}

/// A nominal chain (at theta) and a perturbed chain (at theta + h)
/// simulated jointly, with bookkeeping on how often their events coincided.
#[derive(Clone, Debug)]
pub struct CoupledTrajectory {
    pub lo: Trajectory,
    pub hi: Trajectory,
    pub shared_jumps: u64,
    pub lo_only_jumps: u64,
    pub hi_only_jumps: u64,
}

impl CoupledTrajectory {
    pub fn total_jumps(&self) -> u64 {
        self.lo.jump_count + self.hi.jump_count
    }
}

fn check_pair_params(theta: f64, h: f64, t_end: f64) -> Result<()> {
    check_time_and_theta(theta, t_end)?;
    if h == 0.0 || !h.is_finite() || theta + h < 0.0 {
        return Err(Error::BadPerturbation { h });
    }
    Ok(())
}

/// Coupled finite-difference pair: each reaction is split into a shared
/// channel firing at the pointwise minimum of the two propensities plus one
/// residual channel per chain, and the direct method runs over all 3K
/// channels. Marginally each chain is exact; jointly they agree except for
/// residual firings of order h.
pub fn simulate_cfd_pair<R: Rng>(
    net: &ReactionNetwork,
    theta: f64,
    h: f64,
    t_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<CoupledTrajectory> {
    check_pair_params(theta, h, t_end)?;
    let kk = net.n_reactions();
    let kin_lo = Kinetics::new(net, theta);
    let kin_hi = Kinetics::new(net, theta + h);
    let mut x_lo = net.x0.clone();
    let mut x_hi = net.x0.clone();
    let mut p_lo = vec![0.0; kk];
    let mut p_hi = vec![0.0; kk];
    let mut rec_lo = Recorder::new(&opts.recording, &x_lo);
    let mut rec_hi = Recorder::new(&opts.recording, &x_hi);
    let mut t = 0.0;
    let (mut shared, mut lo_only, mut hi_only) = (0u64, 0u64, 0u64);
    let (mut jumps_lo, mut jumps_hi) = (0u64, 0u64);
    loop {
        kin_lo.fill(&x_lo, &mut p_lo);
        kin_hi.fill(&x_hi, &mut p_hi);
        let mut total = 0.0;
        for k in 0..kk {
            total += p_lo[k].max(p_hi[k]); // min + res_lo + res_hi collapses to max
        }
        if total <= 0.0 {
            break;
        }
        let t_next = t + exp_variate(rng, total);
        if t_next > t_end {
            break;
        }
        if shared + lo_only + hi_only == opts.jump_cap {
            return Err(Error::JumpCapExceeded { cap: opts.jump_cap });
        }
        // Channel order: shared_0..shared_{K-1}, lo-res, hi-res.
        let mut target = rng.gen::<f64>() * total;
        let mut class = 2usize; // defaults to the last positive channel below
        let mut chan = usize::MAX;
        'select: {
            for k in 0..kk {
                let p = p_lo[k].min(p_hi[k]);
                target -= p;
                if target < 0.0 && p > 0.0 {
                    class = 0;
                    chan = k;
                    break 'select;
                }
            }
            for k in 0..kk {
                let p = (p_lo[k] - p_lo[k].min(p_hi[k])).max(0.0);
                target -= p;
                if target < 0.0 && p > 0.0 {
                    class = 1;
                    chan = k;
                    break 'select;
                }
            }
            for k in 0..kk {
                let p = (p_hi[k] - p_lo[k].min(p_hi[k])).max(0.0);
                target -= p;
                if target < 0.0 && p > 0.0 {
                    class = 2;
                    chan = k;
                    break 'select;
                }
            }
        }
        if chan == usize::MAX {
            // Cumulative walk undershot; take the largest positive channel.
            let (k, cls) = (0..kk)
                .flat_map(|k| {
                    [
                        (k, 0, p_lo[k].min(p_hi[k])),
                        (k, 1, p_lo[k] - p_lo[k].min(p_hi[k])),
                        (k, 2, p_hi[k] - p_lo[k].min(p_hi[k])),
                    ]
                })
                .filter(|&(_, _, p)| p > 0.0)
                .map(|(k, c, _)| (k, c))
                .next_back()
                .expect("positive total");
            chan = k;
            class = cls;
        }
        t = t_next;
        let stoich = &net.reactions[chan].stoich;
        if class == 0 || class == 1 {
            rec_lo.before_jump(t, &x_lo);
            apply_stoich(&mut x_lo, stoich)?;
            jumps_lo += 1;
            rec_lo.after_jump(t, &x_lo, chan as u32);
        }
        if class == 0 || class == 2 {
            rec_hi.before_jump(t, &x_hi);
            apply_stoich(&mut x_hi, stoich)?;
            jumps_hi += 1;
            rec_hi.after_jump(t, &x_hi, chan as u32);
        }
        match class {
            0 => shared += 1,
            1 => lo_only += 1,
            _ => hi_only += 1,
        }
    }
    let lo_absorbed = kin_lo.total(&x_lo) <= 0.0;
    let hi_absorbed = kin_hi.total(&x_hi) <= 0.0;
    Ok(CoupledTrajectory {
        lo: rec_lo.finish(t_end, &x_lo, lo_absorbed, jumps_lo),
        hi: rec_hi.finish(t_end, &x_hi, hi_absorbed, jumps_hi),
        shared_jumps: shared,
        lo_only_jumps: lo_only,
        hi_only_jumps: hi_only,
    })
}

/// Lazily extended arrival times of one unit-rate Poisson process.
struct PointStream {
    points: Vec<f64>,
    rng: ChaCha8Rng,
}

impl PointStream {
    fn new(seed: u64) -> Self {
        Self {
            points: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn nth(&mut self, i: usize) -> f64 {
        while self.points.len() <= i {
            let last = self.points.last().copied().unwrap_or(0.0);
            let inc = exp_variate(&mut self.rng, 1.0);
            self.points.push(last + inc);
        }
        self.points[i]
    }
}

/// Common-reaction-path pair: one unit-rate Poisson clock per reaction is
/// shared by both chains, each consuming it at its own integrated
/// propensity. While the chains agree their candidate times tie exactly and
/// they move in lockstep.
pub fn simulate_crp_pair<R: Rng>(
    net: &ReactionNetwork,
    theta: f64,
    h: f64,
    t_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<CoupledTrajectory> {
    check_pair_params(theta, h, t_end)?;
    let kk = net.n_reactions();
    let mut clocks: Vec<PointStream> = (0..kk).map(|_| PointStream::new(rng.gen())).collect();
    let kin_lo = Kinetics::new(net, theta);
    let kin_hi = Kinetics::new(net, theta + h);
    let mut x_lo = net.x0.clone();
    let mut x_hi = net.x0.clone();
    let mut p_lo = vec![0.0; kk];
    let mut p_hi = vec![0.0; kk];
    // Internal (integrated-propensity) time and consumed-point count per
    // chain and channel.
    let mut tk_lo = vec![0.0; kk];
    let mut tk_hi = vec![0.0; kk];
    let mut idx_lo = vec![0usize; kk];
    let mut idx_hi = vec![0usize; kk];
    let mut dt_lo = vec![f64::INFINITY; kk];
    let mut dt_hi = vec![f64::INFINITY; kk];
    let mut rec_lo = Recorder::new(&opts.recording, &x_lo);
    let mut rec_hi = Recorder::new(&opts.recording, &x_hi);
    let mut t = 0.0;
    let (mut shared, mut lo_only, mut hi_only) = (0u64, 0u64, 0u64);
    let (mut jumps_lo, mut jumps_hi) = (0u64, 0u64);
    loop {
        kin_lo.fill(&x_lo, &mut p_lo);
        kin_hi.fill(&x_hi, &mut p_hi);
        let mut dmin = f64::INFINITY;
        for k in 0..kk {
            dt_lo[k] = if p_lo[k] > 0.0 {
                (clocks[k].nth(idx_lo[k]) - tk_lo[k]) / p_lo[k]
            } else {
                f64::INFINITY
            };
            dt_hi[k] = if p_hi[k] > 0.0 {
                (clocks[k].nth(idx_hi[k]) - tk_hi[k]) / p_hi[k]
            } else {
                f64::INFINITY
            };
            dmin = dmin.min(dt_lo[k]).min(dt_hi[k]);
        }
        if !dmin.is_finite() || t + dmin > t_end {
            break;
        }
        if shared + lo_only + hi_only >= opts.jump_cap {
            return Err(Error::JumpCapExceeded { cap: opts.jump_cap });
        }
        t += dmin;
        for k in 0..kk {
            tk_lo[k] += p_lo[k] * dmin;
            tk_hi[k] += p_hi[k] * dmin;
        }
        for k in 0..kk {
            let fire_lo = dt_lo[k] == dmin;
            let fire_hi = dt_hi[k] == dmin;
            if fire_lo {
                // Land exactly on the consumed point so identical chains
                // keep ticking identically.
                tk_lo[k] = clocks[k].nth(idx_lo[k]);
                idx_lo[k] += 1;
                rec_lo.before_jump(t, &x_lo);
                apply_stoich(&mut x_lo, &net.reactions[k].stoich)?;
                jumps_lo += 1;
                rec_lo.after_jump(t, &x_lo, k as u32);
            }
            if fire_hi {
                tk_hi[k] = clocks[k].nth(idx_hi[k]);
                idx_hi[k] += 1;
                rec_hi.before_jump(t, &x_hi);
                apply_stoich(&mut x_hi, &net.reactions[k].stoich)?;
                jumps_hi += 1;
                rec_hi.after_jump(t, &x_hi, k as u32);
            }
            match (fire_lo, fire_hi) {
                (true, true) => shared += 1,
                (true, false) => lo_only += 1,
                (false, true) => hi_only += 1,
                (false, false) => {}
            }
        }
    }
    let lo_absorbed = kin_lo.total(&x_lo) <= 0.0;
    let hi_absorbed = kin_hi.total(&x_hi) <= 0.0;
    Ok(CoupledTrajectory {
        lo: rec_lo.finish(t_end, &x_lo, lo_absorbed, jumps_lo),
        hi: rec_hi.finish(t_end, &x_hi, hi_absorbed, jumps_hi),
        shared_jumps: shared,
        lo_only_jumps: lo_only,
        hi_only_jumps: hi_only,
    })
}

/// Common-random-number pair: both chains run the plain direct method on
/// identical uniform streams, so they stay together until the perturbation
/// first tips a draw.
pub fn simulate_crn_pair<R: Rng>(
    net: &ReactionNetwork,
    theta: f64,
    h: f64,
    t_end: f64,
    rng: &mut R,
    opts: &SimOptions,
) -> Result<CoupledTrajectory> {
    check_pair_params(theta, h, t_end)?;
    let seed: u64 = rng.gen();
    let mut rng_lo = ChaCha8Rng::seed_from_u64(seed);
    let mut rng_hi = ChaCha8Rng::seed_from_u64(seed);
    let lo = simulate(net, theta, t_end, &mut rng_lo, opts)?;
    let hi = simulate(net, theta + h, t_end, &mut rng_hi, opts)?;
    let (lo_jumps, hi_jumps) = (lo.jump_count, hi.jump_count);
    Ok(CoupledTrajectory {
        lo,
        hi,
        shared_jumps: 0,
        lo_only_jumps: lo_jumps,
        hi_only_jumps: hi_jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    fn mean_at<FPath: FnMut(u64) -> f64>(n: u64, mut path_value: FPath) -> (f64, f64) {
        let mut acc = crate::stats::Accumulator::new();
        for i in 0..n {
            acc.push(path_value(i));
        }
        (acc.mean(), (acc.sample_variance() / n as f64).sqrt())
    }

    #[test]
    fn same_stream_reproduces_bit_for_bit() {
        let net = builtin::birth_death(0.1, 10.0);
        let a = simulate(
            &net,
            0.1,
            10.0,
            &mut RngStream::new(7, 3).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        let b = simulate(
            &net,
            0.1,
            10.0,
            &mut RngStream::new(7, 3).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_streams_differ() {
        let net = builtin::birth_death(0.1, 10.0);
        let a = simulate(
            &net,
            0.1,
            10.0,
            &mut RngStream::new(7, 0).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        let b = simulate(
            &net,
            0.1,
            10.0,
            &mut RngStream::new(7, 1).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        assert_ne!(a.jump_times, b.jump_times);
    }

    #[test]
    fn states_nonnegative_and_times_increase() {
        let net = builtin::gene_expression(0.0116, 10.0);
        for stream in 0..200 {
            let traj = simulate(
                &net,
                0.0116,
                10.0,
                &mut RngStream::new(11, stream).rng(),
                &SimOptions::default(),
            )
            .unwrap();
            for i in 0..traj.len() {
                assert!(traj.state(i).iter().all(|&v| v >= 0));
                if i > 0 {
                    assert!(traj.jump_times[i] > traj.jump_times[i - 1]);
                }
            }
        }
    }

    #[test]
    fn pure_birth_endpoint_is_poisson() {
        // Chi-square against Poisson(theta * T) = Poisson(10). Bins: {<=3},
        // 4..=17 singly, {>=18}; every expected count is above 5 at n = 1e5.
        // 16 bins give 15 degrees of freedom; the 0.999 quantile of
        // chi-square(15) is 37.697.
        let net = builtin::pure_birth(1.0, 10.0);
        let n = 100_000u64;
        let opts = SimOptions {
            recording: Recording::Thinned(vec![10.0]),
            ..Default::default()
        };
        let mut counts = [0u64; 16];
        for i in 0..n {
            let traj = simulate(&net, 1.0, 10.0, &mut RngStream::new(42, i).rng(), &opts).unwrap();
            let x = traj.state(0)[0];
            let bin = if x <= 3 {
                0
            } else if x >= 18 {
                15
            } else {
                (x - 3) as usize
            };
            counts[bin] += 1;
        }
        let mut pmf = vec![0.0f64; 40];
        pmf[0] = (-10.0f64).exp();
        for k in 1..40 {
            pmf[k] = pmf[k - 1] * 10.0 / k as f64;
        }
        let mut expected = [0.0f64; 16];
        expected[0] = pmf[..4].iter().sum::<f64>();
        expected[1..15].copy_from_slice(&pmf[4..18]);
        expected[15] = 1.0 - pmf[..18].iter().sum::<f64>();
        let chi2: f64 = counts
            .iter()
            .zip(&expected)
            .map(|(&c, &p)| {
                let e = p * n as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        assert!(
            chi2 < 37.697,
            "chi-square {chi2:.2} rejects Poisson(10) at significance 0.001"
        );
    }

    #[test]
    fn birth_death_mean_matches_closed_form() {
        let net = builtin::birth_death(0.1, 5.0);
        let opts = SimOptions {
            recording: Recording::Thinned(vec![5.0]),
            ..Default::default()
        };
        let (mean, _) = mean_at(100_000, |i| {
            simulate(&net, 0.1, 5.0, &mut RngStream::new(5, i).rng(), &opts)
                .unwrap()
                .state(0)[0] as f64
        });
        let exact = (1.0 - (-0.5f64).exp()) / 0.1;
        assert!(
            (mean - exact).abs() < 0.02 * exact,
            "mean {mean:.4} vs exact {exact:.4}"
        );
    }

    #[test]
    fn absorbing_state_halts_cleanly() {
        let net = builtin::pure_birth(0.0, 5.0);
        let traj = simulate(
            &net,
            0.0,
            5.0,
            &mut RngStream::new(1, 1).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        assert!(traj.absorbed);
        assert_eq!(traj.jump_count, 0);
        assert_eq!(traj.state_at(3.0), &[0]);
        assert_eq!(traj.t_end, 5.0);
    }

    #[test]
    fn thinned_recording_matches_full() {
        let net = builtin::birth_death(0.2, 8.0);
        let queries = vec![0.0, 1.0, 2.5, 7.9, 8.0];
        let full = simulate(
            &net,
            0.2,
            8.0,
            &mut RngStream::new(9, 4).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        let thin = simulate(
            &net,
            0.2,
            8.0,
            &mut RngStream::new(9, 4).rng(),
            &SimOptions {
                recording: Recording::Thinned(queries.clone()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(thin.len(), queries.len());
        assert_eq!(thin.jump_count, full.jump_count);
        for (i, &q) in queries.iter().enumerate() {
            assert_eq!(thin.state(i), full.state_at(q), "query time {q}");
            assert_eq!(thin.jump_times[i], q);
        }
    }

    #[test]
    fn jump_cap_is_enforced() {
        let net = builtin::birth_death(0.1, 1000.0);
        let err = simulate(
            &net,
            0.1,
            1000.0,
            &mut RngStream::new(2, 2).rng(),
            &SimOptions {
                jump_cap: 5,
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::JumpCapExceeded { cap: 5 }));
    }

    #[test]
    fn csv_dump_has_expected_shape() {
        let net = builtin::birth_death(0.1, 5.0);
        let traj = simulate(
            &net,
            0.1,
            5.0,
            &mut RngStream::new(3, 0).rng(),
            &SimOptions::default(),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,reaction,s_0"));
        let first = lines.next().unwrap();
        assert_eq!(first, "0,,0", "initial row has empty reaction field");
        // Header, one row per recorded state, closing row at t_end.
        assert_eq!(text.lines().count(), traj.len() + 2);
        let last = text.lines().last().unwrap();
        assert_eq!(
            last,
            format!("5,,{}", traj.final_state()[0]),
            "closing row repeats the final state at t_end"
        );
        for (row, line) in text.lines().skip(2).take(traj.len() - 1).enumerate() {
            let fields: Vec<_> = line.split(',').collect();
            assert_eq!(fields.len(), 3);
            assert_eq!(fields[1].parse::<u32>().unwrap(), traj.reaction_ids[row]);
        }
    }

    #[test]
    fn integrate_is_exact_on_segments() {
        // Hand-built path: x = 0 on [0,1), 1 on [1,3), 2 on [3,4].
        let traj = Trajectory {
            n_species: 1,
            jump_times: vec![0.0, 1.0, 3.0],
            states: vec![0, 1, 2],
            reaction_ids: vec![0, 0],
            t_end: 4.0,
            absorbed: false,
            jump_count: 2,
        };
        let val = traj.integrate(|x| x[0] as f64, 0.0, 4.0);
        assert_eq!(val, 0.0 + 2.0 + 2.0);
        let val = traj.integrate(|x| x[0] as f64, 0.5, 3.5);
        assert_eq!(val, 0.5 * 0.0 + 2.0 * 1.0 + 0.5 * 2.0);
        assert_eq!(traj.integrate(|x| x[0] as f64, 2.0, 2.0), 0.0);
    }

    #[test]
    fn pair_constructors_reject_degenerate_h() {
        let net = builtin::birth_death(0.1, 5.0);
        let opts = SimOptions::default();
        for h in [0.0, f64::NAN, -0.2] {
            let r = simulate_cfd_pair(&net, 0.1, h, 5.0, &mut RngStream::new(0, 0).rng(), &opts);
            assert!(matches!(r, Err(Error::BadPerturbation { .. })), "h = {h}");
        }
        assert!(
            simulate_crp_pair(&net, 0.1, 0.0, 5.0, &mut RngStream::new(0, 0).rng(), &opts).is_err()
        );
        assert!(
            simulate_crn_pair(&net, 0.1, 0.0, 5.0, &mut RngStream::new(0, 0).rng(), &opts).is_err()
        );
    }

    #[test]
    fn coupled_pairs_reproduce_bit_for_bit() {
        let net = builtin::gene_expression(0.0116, 5.0);
        let opts = SimOptions::default();
        for ctor in [
            simulate_cfd_pair::<ChaCha8Rng>,
            simulate_crp_pair,
            simulate_crn_pair,
        ] {
            let a = ctor(
                &net,
                0.0116,
                0.01,
                5.0,
                &mut RngStream::new(21, 5).rng(),
                &opts,
            )
            .unwrap();
            let b = ctor(
                &net,
                0.0116,
                0.01,
                5.0,
                &mut RngStream::new(21, 5).rng(),
                &opts,
            )
            .unwrap();
            assert_eq!(a.lo, b.lo);
            assert_eq!(a.hi, b.hi);
            assert_eq!(a.shared_jumps, b.shared_jumps);
        }
    }

    /// Marginal exactness of every coupling: both chain means match the
    /// closed-form immigration-death mean at their own parameter within
    /// Monte Carlo error.
    #[test]
    fn coupled_marginals_match_closed_form() {
        let (theta, h, t) = (0.1, 0.05, 5.0);
        let net = builtin::birth_death(theta, t);
        let exact = |th: f64| (1.0 - (-th * t).exp()) / th;
        let n = 10_000u64;
        let opts = SimOptions::default();
        for (name, ctor) in [
            (
                "cfd",
                simulate_cfd_pair::<ChaCha8Rng> as fn(_, _, _, _, &mut ChaCha8Rng, _) -> _,
            ),
            ("crp", simulate_crp_pair),
            ("crn", simulate_crn_pair),
        ] {
            let mut acc_lo = crate::stats::Accumulator::new();
            let mut acc_hi = crate::stats::Accumulator::new();
            for i in 0..n {
                let pair =
                    ctor(&net, theta, h, t, &mut RngStream::new(77, i).rng(), &opts).unwrap();
                acc_lo.push(pair.lo.state_at(t)[0] as f64);
                acc_hi.push(pair.hi.state_at(t)[0] as f64);
            }
            for (acc, th) in [(acc_lo, theta), (acc_hi, theta + h)] {
                let se = (acc.sample_variance() / n as f64).sqrt();
                let miss = (acc.mean() - exact(th)).abs();
                assert!(
                    miss <= 3.5 * se,
                    "{name} marginal at theta = {th}: mean {:.4} vs exact {:.4} ({:.1} se)",
                    acc.mean(),
                    exact(th),
                    miss / se
                );
            }
        }
    }

    #[test]
    fn cfd_shared_fraction_grows_as_h_shrinks() {
        let net = builtin::gene_expression(0.0116, 5.0);
        let mut fractions = Vec::new();
        for (j, h) in [0.1, 0.01, 0.001].into_iter().enumerate() {
            let (mut shared, mut total) = (0u64, 0u64);
            for i in 0..300 {
                let pair = simulate_cfd_pair(
                    &net,
                    0.0116,
                    h,
                    5.0,
                    &mut RngStream::new(100 + j as u64, i).rng(),
                    &SimOptions::default(),
                )
                .unwrap();
                shared += pair.shared_jumps;
                total += pair.shared_jumps + pair.lo_only_jumps + pair.hi_only_jumps;
            }
            fractions.push(shared as f64 / total as f64);
        }
        assert!(
            fractions[0] < fractions[1] && fractions[1] < fractions[2],
            "shared fraction not monotone: {fractions:?}"
        );
        assert!(
            fractions[2] > 0.9,
            "shared fraction at h=1e-3: {fractions:?}"
        );
    }

    #[test]
    fn crp_twin_fraction_grows_as_h_shrinks() {
        let net = builtin::gene_expression(0.0116, 5.0);
        let mut fractions = Vec::new();
        for (j, h) in [0.1, 0.01, 0.001].into_iter().enumerate() {
            let (mut shared, mut total) = (0u64, 0u64);
            for i in 0..300 {
                let pair = simulate_crp_pair(
                    &net,
                    0.0116,
                    h,
                    5.0,
                    &mut RngStream::new(200 + j as u64, i).rng(),
                    &SimOptions::default(),
                )
                .unwrap();
                shared += pair.shared_jumps;
                total += pair.shared_jumps + pair.lo_only_jumps + pair.hi_only_jumps;
            }
            fractions.push(shared as f64 / total as f64);
        }
        assert!(
            fractions[0] < fractions[1] && fractions[1] < fractions[2],
            "twin-fire fraction not monotone: {fractions:?}"
        );
        assert!(fractions[2] > 0.9, "twin fraction at h=1e-3: {fractions:?}");
    }

    #[test]
    fn crn_endpoint_gap_shrinks_as_h_shrinks() {
        let net = builtin::gene_expression(0.0116, 5.0);
        let mut gaps = Vec::new();
        for (j, h) in [0.1, 0.01, 0.001].into_iter().enumerate() {
            let mut gap = 0.0;
            for i in 0..300 {
                let pair = simulate_crn_pair(
                    &net,
                    0.0116,
                    h,
                    5.0,
                    &mut RngStream::new(300 + j as u64, i).rng(),
                    &SimOptions::default(),
                )
                .unwrap();
                gap += (pair.hi.state_at(5.0)[2] - pair.lo.state_at(5.0)[2]).abs() as f64;
            }
            gaps.push(gap / 300.0);
        }
        assert!(
            gaps[0] > gaps[1] && gaps[1] > gaps[2],
            "endpoint gap not shrinking: {gaps:?}"
        );
    }
}
