#![allow(dead_code)]

use decaf::allocator::{solve, verify_feasible, AllocationProblem};
use decaf::envs::{Env, EnvKind, EnvSpec, EnvState, World};
use decaf::fairness::{init_tracker, FairnessKind};
use decaf::types::{validate_candidate_set, JointAllocation};
use decaf::valuenet::{NetConfig, NetRole, ValueNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Everything observable about one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub allocations: Vec<Vec<usize>>,
    pub utilities: Vec<Vec<f64>>,
    pub payoffs: Vec<Vec<f64>>,
    pub final_state: EnvState,
}

/// Pairwise-distinct check.
fn distinct<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().all(|(i, a)| xs[i + 1..].iter().all(|b| a != b))
}

/// Agents never share an exclusive resource.
fn exclusive(world: &World) -> Result<(), String> {
    let reservations_consistent = |reserved: &[Option<usize>], targets: &[Option<usize>]| {
        let held: Vec<usize> = targets.iter().flatten().copied().collect();
        distinct(&held)
            && reserved.iter().enumerate().all(|(r, a)| a.map_or(true, |a| targets[a] == Some(r)))
            && targets.iter().enumerate().all(|(a, t)| t.map_or(true, |r| reserved[r] == Some(a)))
    };
    match world {
        World::Matthew(s) if !reservations_consistent(&s.reserved, &s.targets) => {
            Err(format!("matthew reservations {:?} vs targets {:?}", s.reserved, s.targets))
        }
        World::Plant(s) if !reservations_consistent(&s.reserved, &s.targets) => {
            Err(format!("plant reservations {:?} vs targets {:?}", s.reserved, s.targets))
        }
        World::Plant(s) if !distinct(&s.positions) => Err(format!("plant agents share a cell: {:?}", s.positions)),
        World::Job(s) if !distinct(&s.positions) => Err(format!("job agents share a cell: {:?}", s.positions)),
        _ => Ok(()),
    }
}

/// Plays one episode with uniformly random candidate values and checks,
/// every step, that candidate sets are valid, that the environment accepts
/// exactly the feasible allocations, that exclusive resources stay exclusive,
/// and at the end that the running totals equal the summed step outputs.
pub fn random_policy_episode(spec: &EnvSpec, env_seed: u64, policy_seed: u64) -> Result<Trace, String> {
    let mut env = Env::reset(spec, env_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(policy_seed);
    let (warm, gp) = spec.kind.tracker_defaults(FairnessKind::Variance);
    let mut tracker = init_tracker(spec.kind.tracker_mode(), spec.n_agents, warm, gp, &mut rng).map_err(|e| e.to_string())?;
    let mut trace = Trace { allocations: Vec::new(), utilities: Vec::new(), payoffs: Vec::new(), final_state: env.state.clone() };
    while !env.is_done() {
        let (cs, caps) = env.candidates(&tracker);
        validate_candidate_set(&cs, &caps).map_err(|e| format!("step {}: {e}", env.state.step))?;
        if cs.feature_dim() != Some(spec.feature_dim) {
            return Err(format!("feature dim {:?} != {}", cs.feature_dim(), spec.feature_dim));
        }
        if cs.per_agent.iter().flatten().flat_map(|c| &c.features).any(|f| !f.is_finite()) {
            return Err("non-finite feature".into());
        }

        // An arbitrary joint choice is accepted exactly when it is feasible.
        let values: Vec<Vec<f64>> = cs.per_agent.iter().map(|l| l.iter().map(|_| rng.gen::<f64>()).collect()).collect();
        let problem = AllocationProblem::new(&values, &cs, &caps);
        let raw = JointAllocation::new(cs.per_agent.iter().map(|l| rng.gen_range(0..l.len())).collect());
        let mut probe = env.clone();
        if probe.step(&raw).is_ok() != verify_feasible(&problem, &raw) {
            return Err(format!("env and allocator disagree on feasibility of {:?}", raw.chosen));
        }

        let alloc = solve(&problem).map_err(|e| e.to_string())?.allocation;
        if !verify_feasible(&problem, &alloc) {
            return Err("solver returned an infeasible allocation".into());
        }
        let out = env.step(&alloc).map_err(|e| format!("step rejected a feasible allocation: {e}"))?;
        exclusive(&env.state.world)?;
        if out.rewards.payoff_delta.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(format!("bad payoff delta {:?}", out.rewards.payoff_delta));
        }
        match spec.kind {
            EnvKind::BiasedDm | EnvKind::JobAlloc if out.rewards.payoff_delta.iter().sum::<f64>() > 1.0 => {
                return Err("two agents received the single resource".into());
            }
            _ => {}
        }
        if !spec.shaping && out.rewards.utility != out.task_utility {
            return Err("unshaped utility differs from task utility".into());
        }
        tracker.update(&out.rewards.payoff_delta);
        trace.allocations.push(alloc.chosen);
        trace.utilities.push(out.rewards.utility);
        trace.payoffs.push(out.rewards.payoff_delta);
        if out.done != env.is_done() {
            return Err("done flag disagrees with the horizon".into());
        }
    }
    if env.step(&JointAllocation::new(vec![0; spec.n_agents])).is_ok() {
        return Err("stepping past the horizon succeeded".into());
    }

    let st = &env.state;
    if trace.allocations.len() != spec.horizon || st.step != spec.horizon {
        return Err(format!("{} steps for horizon {}", trace.allocations.len(), spec.horizon));
    }
    let utility: f64 = trace.utilities.iter().flatten().sum();
    if (utility - st.utility_total).abs() > 1e-9 * (1.0 + utility.abs()) {
        return Err(format!("utility total {} != summed rewards {utility}", st.utility_total));
    }
    for i in 0..spec.n_agents {
        let p: f64 = trace.payoffs.iter().map(|d| d[i]).sum();
        if (p - st.payoff_totals[i]).abs() > 1e-9 * (1.0 + p.abs()) {
            return Err(format!("agent {i}: payoff total {} != summed deltas {p}", st.payoff_totals[i]));
        }
    }
    trace.final_state = env.state.clone();
    Ok(trace)
}

/// Loss, and ReLU on/off pattern of every hidden unit for every sample.
fn reference_loss(cfg: &NetConfig, params: &[f64], batch: &[(Vec<f64>, f64)]) -> (f64, Vec<bool>) {
    let shapes = cfg.layer_shapes();
    let mut pattern = Vec::new();
    let mut loss = 0.0;
    for (x, t) in batch {
        let mut a = x.clone();
        let mut off = 0;
        for (l, &(fan_in, out)) in shapes.iter().enumerate() {
            let (w, b) = (&params[off..off + fan_in * out], &params[off + fan_in * out..off + fan_in * out + out]);
            let z: Vec<f64> = (0..out).map(|o| b[o] + (0..fan_in).map(|k| w[o * fan_in + k] * a[k]).sum::<f64>()).collect();
            off += fan_in * out + out;
            if l + 1 < shapes.len() {
                pattern.extend(z.iter().map(|v| *v > 0.0));
                a = z.into_iter().map(|v| v.max(0.0)).collect();
            } else {
                a = z;
            }
        }
        loss += (a[0] - t).powi(2) / batch.len() as f64;
    }
    (loss, pattern)
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters whose perturbation flipped a ReLU, where differences are meaningless.
    pub skipped: usize,
}

/// Central differences of an independent forward pass against the analytic gradient.
pub fn gradient_check(net: &ValueNet, batch: &[(Vec<f64>, f64)], h: f64) -> GradCheck {
    let (loss, grad) = net.loss_and_gradient(batch).unwrap();
    let cfg = net.config();
    let (ref_loss, pattern) = reference_loss(cfg, net.params(), batch);
    assert!((loss - ref_loss).abs() <= 1e-12 * (1.0 + loss.abs()), "analytic loss {loss} vs reference {ref_loss}");
    let mut params = net.params().to_vec();
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, skipped: 0 };
    for k in 0..params.len() {
        let orig = params[k];
        params[k] = orig + h;
        let (lp, pp) = reference_loss(cfg, &params, batch);
        params[k] = orig - h;
        let (lm, pm) = reference_loss(cfg, &params, batch);
        params[k] = orig;
        if pp != pattern || pm != pattern {
            out.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
        out.max_rel_error = out.max_rel_error.max(rel);
        out.checked += 1;
    }
    out
}

/// A random net with 1 to 3 hidden layers of width 1 to 32 and a random batch.
pub fn random_net_and_batch(rng: &mut ChaCha8Rng) -> (ValueNet, Vec<(Vec<f64>, f64)>) {
    let input = rng.gen_range(1..=12);
    let hidden: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(1..=32)).collect();
    let net = ValueNet::new(NetConfig::new(input, hidden), NetRole::Q, rng);
    let batch = (0..rng.gen_range(1..=16))
        .map(|_| ((0..input).map(|_| rng.gen_range(-1.0..1.0)).collect(), rng.gen_range(-2.0..2.0)))
        .collect();
    (net, batch)
}

/// Random allocation instance: up to `n` agents, `c` candidates each (the
/// first is null), `k` resources with small integer capacities.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    c: usize,
    k: usize,
) -> (Vec<Vec<f64>>, decaf::types::CandidateSet, decaf::types::ResourceCapacities) {
    use decaf::types::{CandidateAction, CandidateSet, ResourceCapacities};
    let n = rng.gen_range(1..=n);
    let k = rng.gen_range(1..=k);
    let caps = ResourceCapacities::new((0..k).map(|_| rng.gen_range(0..=3) as f64).collect()).unwrap();
    let mut per_agent = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let m = rng.gen_range(1..=c);
        per_agent.push(
            (0..m)
                .map(|j| {
                    if j == 0 {
                        CandidateAction::null(0, vec![], k)
                    } else {
                        CandidateAction::consuming(j, vec![], (0..k).map(|_| rng.gen_range(0..=2) as f64).collect())
                    }
                })
                .collect(),
        );
        // Coarse values make exact ties common, which exercises the tie-break.
        values.push((0..m).map(|_| rng.gen_range(-8..=8) as f64 * 0.25 + if rng.gen_bool(0.3) { rng.gen::<f64>() } else { 0.0 }).collect());
    }
    (values, CandidateSet::new(per_agent), caps)
}
