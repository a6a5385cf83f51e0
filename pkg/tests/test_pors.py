"""Tests for the confidence-set planner: tree-policy enumeration, feedback
likelihoods, candidate screening, and optimistic planning."""

import math

import numpy as np
import pytest

from hsilab.core import ConfigError, Dims, EpisodeTrace, Feedback, StepRecord
from hsilab.envs import (
    SampleRng,
    build_controlled_drift_instance,
    build_hard_instance_groups,
    controlled_drift_candidates,
)
from hsilab.agents import MarkovEpisodePolicy, run_episode
from hsilab.oracle import OracleSizeError, optimal_value, trace_log_likelihood
from hsilab.oracle import evaluate_markov_policy
from hsilab.pors import (
    ConfidenceSet,
    PlanningContext,
    PorsAgent,
    TreePolicy,
    build_confidence_set,
    default_beta,
    enumerate_policies,
    evaluate_policy_value,
    feedback_log_likelihood,
    level_node_counts,
    optimistic_plan,
    policy_value_table,
)
from hsilab.serialize import dump_candidates, load_candidates


DRIFT_DIMS = Dims(
    d=2, alphabet_size=2, d_query=1, horizon=2, n_actions=2, n_observations=2
)


def _trace_for(policy, feedback_path, reward=0.0):
    """Build a policy-consistent trace from per-step (value_code, obs) pairs."""
    trace = EpisodeTrace(episode=1)
    node = 0
    for h, (vcode, obs) in enumerate(feedback_path, start=1):
        action = policy.action_at(h, node)
        query = policy.query_at(h, node)
        hsi = tuple((pos, (vcode // 2**i) % 2) for i, pos in enumerate(query))
        fb = Feedback(query=query, hsi=hsi, observation=obs, reward=reward)
        trace.append(StepRecord(h=h, action=action, feedback=fb))
        node = policy.child(node, vcode, obs)
    return trace


# ---------------------------------------------------------------------------
# policy enumeration


def test_full_history_enumeration_counts():
    policies, label = enumerate_policies(DRIFT_DIMS)
    assert label == "full-history"
    # branching 2 values x 2 symbols = 4, so levels hold 1 and 4 nodes and
    # (2 actions x 2 query sets) ^ 5 nodes = 1024 policies
    assert level_node_counts(DRIFT_DIMS) == [1, 4]
    assert len(policies) == 1024
    assert len(set(policies)) == 1024  # frozen dataclass: all distinct


def test_enumeration_order_and_choice_decode():
    policies, _ = enumerate_policies(DRIFT_DIMS)
    first = policies[0]
    assert first.actions == ((0,), (0, 0, 0, 0))
    assert first.queries == (((0,),), ((0,), (0,), (0,), (0,)))
    # the last node's choice varies fastest; choice = action * n_qsets + qset
    assert policies[1].queries[1][3] == (1,)
    assert policies[1].actions[1][3] == 0
    assert policies[2].actions[1][3] == 1
    assert policies[2].queries[1][3] == (0,)


def test_open_loop_fallback():
    dims = Dims(d=2, alphabet_size=2, d_query=1, horizon=4, n_actions=2)
    policies, label = enumerate_policies(dims)
    assert label == "open-loop"
    assert len(policies) == (2 * 2) ** 4
    for policy in policies[:8]:
        for level, count in enumerate(level_node_counts(dims)):
            assert policy.actions[level] == (policy.actions[level][0],) * count
            assert policy.queries[level] == (policy.queries[level][0],) * count


def test_enumeration_cap_exceeded():
    dims = Dims(d=2, alphabet_size=2, d_query=1, horizon=4, n_actions=2)
    with pytest.raises(ConfigError):
        enumerate_policies(dims, cap=100)


def test_tree_child_indexing():
    policy = TreePolicy(2, 2, 2, ((0,), (0,) * 4), (((0,),), ((0,),) * 4))
    assert policy.branching == 4
    assert policy.child(0, 0, 0) == 0
    assert policy.child(0, 1, 0) == 2
    assert policy.child(0, 1, 1) == 3
    assert policy.child(0, 1, None) == 2  # no-emission tasks use symbol 0


# ---------------------------------------------------------------------------
# feedback likelihood


def _coin_env():
    """Uniform first sub-state, deterministic collapse to state 0, single
    emission symbol: any consistent trace has likelihood exactly 1/2."""
    from hsilab.envs import EnvModel

    dims = Dims(
        d=2, alphabet_size=2, d_query=1, horizon=2, n_actions=2, n_observations=1
    )
    joint = np.zeros((1, 4, 2, 4))
    joint[0, :, :, 0] = 1.0
    rewards = np.zeros((2, 4, 2))
    emissions = {
        (h, q): np.ones((1, 2)) for h in (1, 2) for q in ((0,), (1,))
    }
    return EnvModel.from_joint(
        "coin",
        dims,
        "Class2",
        np.full(4, 0.25),
        joint,
        rewards,
        emissions=emissions,
    )


def test_likelihood_coin_hand_example():
    env = _coin_env()
    policies, _ = enumerate_policies(env.dims)
    policy = policies[0]  # always action 0, always query (0,)
    trace = _trace_for(policy, [(0, 0), (0, 0)])
    # step 1 reveals a fair coin; step 2's value is then deterministic
    assert feedback_log_likelihood(env, policy, trace) == math.log(0.5)
    heads = _trace_for(policy, [(1, 0), (0, 0)])
    assert feedback_log_likelihood(env, policy, heads) == math.log(0.5)


def test_likelihood_ignores_rewards():
    env = _coin_env()
    policies, _ = enumerate_policies(env.dims)
    low = _trace_for(policies[0], [(0, 0), (0, 0)], reward=0.0)
    high = _trace_for(policies[0], [(0, 0), (0, 0)], reward=1.0)
    assert feedback_log_likelihood(env, policies[0], low) == feedback_log_likelihood(
        env, policies[0], high
    )


def test_likelihood_normalizes_over_feedback_paths():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    rng = np.random.default_rng(4)
    for policy in [policies[i] for i in rng.integers(0, 1024, size=6)]:
        mass = 0.0
        for v1 in range(2):
            for o1 in range(2):
                for v2 in range(2):
                    for o2 in range(2):
                        trace = _trace_for(policy, [(v1, o1), (v2, o2)])
                        mass += math.exp(
                            feedback_log_likelihood(truth, policy, trace)
                        )
        assert abs(mass - 1.0) < 1e-9


def test_likelihood_rejects_policy_inconsistent_traces():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    policy = policies[0]
    trace = _trace_for(policy, [(0, 0), (0, 0)])
    # flip the recorded action away from the policy's choice
    bad_action = EpisodeTrace(episode=1, steps=list(trace.steps))
    rec = trace.steps[0]
    bad_action.steps[0] = StepRecord(
        h=1, action=1 - rec.action, feedback=rec.feedback
    )
    assert feedback_log_likelihood(truth, policy, bad_action) == -math.inf
    # and a query disagreeing with the policy's choice
    other_query_fb = Feedback(
        query=(1,), hsi=((1, 0),), observation=0, reward=0.0
    )
    bad_query = EpisodeTrace(
        episode=1,
        steps=[StepRecord(h=1, action=rec.action, feedback=other_query_fb)]
        + list(trace.steps[1:]),
    )
    assert feedback_log_likelihood(truth, policy, bad_query) == -math.inf


def test_likelihood_impossible_feedback_is_minus_inf():
    env = _coin_env()
    policies, _ = enumerate_policies(env.dims)
    policy = policies[0]
    # after the deterministic collapse, a step-2 value of 1 is impossible
    trace = _trace_for(policy, [(0, 0), (1, 0)])
    assert feedback_log_likelihood(env, policy, trace) == -math.inf


def test_likelihood_matches_filter_oracle_on_played_traces():
    truth = build_controlled_drift_instance()
    candidates = controlled_drift_candidates()
    context = PlanningContext.build(candidates)
    rng = np.random.default_rng(12)
    agent = PorsAgent(truth.dims, candidates, 40, context=context)
    env_rng = SampleRng(12)
    for k in range(1, 21):
        trace = run_episode(agent, truth, k, env_rng)
        policy = agent.episode_policy
        for cand in [candidates[int(i)] for i in rng.integers(0, 8, size=3)]:
            ours = feedback_log_likelihood(cand, policy, trace)
            reference = trace_log_likelihood(cand, trace)
            assert abs(ours - reference) < 1e-9


# ---------------------------------------------------------------------------
# confidence sets


def test_default_beta_value():
    assert default_beta(DRIFT_DIMS, 2000, 0.05) == 93.58456418735098
    assert default_beta(DRIFT_DIMS, 2000, 0.05, scale=0.5) == pytest.approx(
        0.5 * 93.58456418735098, rel=1e-15
    )
    with pytest.raises(ValueError):
        default_beta(DRIFT_DIMS, 0, 0.05)
    with pytest.raises(ValueError):
        default_beta(DRIFT_DIMS, 100, 1.0)


def test_confidence_set_keeps_best_and_screens_rest():
    truth = build_controlled_drift_instance()
    wrong = build_controlled_drift_instance(stay_controlled=0.2)
    candidates = [truth, wrong]
    policies, _ = enumerate_policies(truth.dims)
    policy = policies[0]
    rng = SampleRng(3)
    agent_traces = []
    for k in range(1, 61):
        trace = _play_policy(truth, policy, k, rng)
        agent_traces.append(trace)
    conf_tight = build_confidence_set(
        candidates, agent_traces, [policy] * len(agent_traces), beta=1.0
    )
    assert 0 in conf_tight
    assert conf_tight.indices == (0,)  # the wrong drift rate is screened out
    conf_loose = build_confidence_set(
        candidates, agent_traces, [policy] * len(agent_traces), beta=1e6
    )
    assert conf_loose.indices == (0, 1)


def _play_policy(env, policy, episode, rng):
    class _Player:
        def __init__(self):
            self.node = 0

        def begin_episode(self, k):
            self.node = 0

        def act(self, h):
            return policy.action_at(h, self.node), policy.query_at(h, self.node)

        def observe(self, h, action, fb):
            from hsilab.core import encode_state

            self.node = policy.child(
                self.node, encode_state(fb.values(), env.dims.alphabet_size), fb.observation
            )

        def end_episode(self, trace):
            pass

    return run_episode(_Player(), env, episode, rng)


def test_confidence_set_never_empty():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    policy = policies[0]
    trace = _trace_for(policy, [(0, 0), (0, 0)])
    # force a policy-inconsistent trace: -inf for the only candidate
    rec = trace.steps[0]
    trace.steps[0] = StepRecord(h=1, action=1 - rec.action, feedback=rec.feedback)
    conf = build_confidence_set([truth], [trace], [policy], beta=0.0)
    assert conf.indices == (0,)
    assert conf.loglik[0] == -math.inf


def test_confidence_set_validation():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    with pytest.raises(ConfigError):
        build_confidence_set([], [], [], beta=1.0)
    with pytest.raises(ValueError):
        build_confidence_set([truth], [], [policies[0]], beta=1.0)
    with pytest.raises(ValueError):
        build_confidence_set([truth], [], [], beta=-1.0)


def test_screening_gap_grows_monotonically():
    truth = build_controlled_drift_instance()
    wrong = build_controlled_drift_instance(stay_controlled=0.2)
    candidates = [truth, wrong]
    context = PlanningContext.build(candidates)
    agent = PorsAgent(truth.dims, candidates, 200, context=context)
    env_rng = SampleRng(6)
    gaps = []
    for k in range(1, 201):
        run_episode(agent, truth, k, env_rng)
        gaps.append(float(agent.loglik[0] - agent.loglik[1]))
    assert gaps[49] > 0.0
    assert gaps[199] > gaps[49]
    assert gaps[199] > 10.0  # roughly one nat of evidence per few episodes


# ---------------------------------------------------------------------------
# exact policy evaluation


def test_policy_value_matches_markov_oracle_on_open_loop():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    # constant-action policies are Markov; both exact evaluators must agree
    for a1 in range(2):
        for a2 in range(2):
            tree = TreePolicy(
                2, 2, 2, ((a1,), (a2,) * 4), (((0,),), ((0,),) * 4)
            )
            markov = MarkovEpisodePolicy.from_sequence((a1, a2), (0,), 2, 2)
            tree_value = evaluate_policy_value(truth, tree)
            markov_value = evaluate_markov_policy(truth, markov)
            assert abs(tree_value - markov_value) < 1e-12


def test_open_loop_value_hand_example():
    # the drifting reward sub-state stays uniform, so any fixed action pair
    # earns exactly the final-step coin flip
    truth = build_controlled_drift_instance()
    tree = TreePolicy(2, 2, 2, ((0,), (0,) * 4), (((0,),), ((0,),) * 4))
    assert abs(evaluate_policy_value(truth, tree) - 0.5) < 1e-12


def test_best_tree_policy_achieves_optimal_value():
    truth = build_controlled_drift_instance()
    context = PlanningContext.build(controlled_drift_candidates())
    v_star = optimal_value(truth)
    assert abs(v_star - 0.8) < 1e-12
    best = float(context.value_table[7].max())
    assert abs(best - v_star) < 1e-9


def test_policy_value_cap():
    truth = build_controlled_drift_instance()
    policies, _ = enumerate_policies(truth.dims)
    with pytest.raises(OracleSizeError):
        evaluate_policy_value(truth, policies[0], cap=10)


def test_policy_value_table_layout():
    truth = build_controlled_drift_instance()
    wrong = build_controlled_drift_instance(stay_drift=0.3)
    policies, _ = enumerate_policies(truth.dims)
    subset = policies[:7]
    table = policy_value_table([truth, wrong], subset)
    assert table.shape == (2, 7)
    for i, cand in enumerate([truth, wrong]):
        for j, policy in enumerate(subset):
            assert table[i, j] == evaluate_policy_value(cand, policy)


# ---------------------------------------------------------------------------
# optimistic planning


def test_optimistic_plan_tie_breaks_lexicographically():
    policies, _ = enumerate_policies(DRIFT_DIMS)
    subset = policies[:4]
    loglik = np.zeros(3)
    conf = ConfidenceSet((0, 1, 2), 1.0, loglik)
    flat_table = np.ones((3, 4))
    plan = optimistic_plan(conf, subset, flat_table)
    assert (plan.candidate_index, plan.policy_index) == (0, 0)
    bumped = flat_table.copy()
    bumped[1, 3] = 2.0
    plan = optimistic_plan(conf, subset, bumped)
    assert (plan.candidate_index, plan.policy_index) == (1, 3)
    assert plan.value == 2.0
    assert plan.policy is subset[3]


def test_optimistic_plan_masks_excluded_candidates():
    policies, _ = enumerate_policies(DRIFT_DIMS)
    subset = policies[:2]
    table = np.array([[9.0, 9.0], [0.25, 0.5], [0.4, 0.1]])
    conf = ConfidenceSet((1, 2), 1.0, np.zeros(3))
    plan = optimistic_plan(conf, subset, table)
    assert plan.candidate_index == 1
    assert plan.policy_index == 1
    assert plan.value == 0.5


def test_optimistic_plan_validates_shapes():
    policies, _ = enumerate_policies(DRIFT_DIMS)
    conf = ConfidenceSet((0,), 1.0, np.zeros(2))
    with pytest.raises(ValueError):
        optimistic_plan(conf, policies[:3], np.zeros((2, 4)))
    with pytest.raises(ConfigError):
        optimistic_plan(conf, [], np.zeros((2, 0)))


# ---------------------------------------------------------------------------
# planning context and agent


def test_planning_context_rejects_mixed_dims():
    a = build_controlled_drift_instance()
    b = build_hard_instance_groups(2, 0.1)
    with pytest.raises(ConfigError):
        PlanningContext.build([a, b])


def test_planning_context_true_values_are_cached():
    truth = build_controlled_drift_instance()
    context = PlanningContext.build(controlled_drift_candidates())
    v1 = context.true_value(truth, 5)
    v2 = context.true_value(truth, 5)
    assert v1 == v2
    assert v1 == evaluate_policy_value(truth, context.policies[5])
    assert len(context.true_values) == 1


def test_candidate_file_round_trip_preserves_value_table(tmp_path):
    candidates = controlled_drift_candidates()
    path = tmp_path / "candidates.cfg"
    dump_candidates(candidates, path)
    loaded = load_candidates(path)
    assert [m.name for m in loaded] == [m.name for m in candidates]
    original = PlanningContext.build(candidates)
    reloaded = PlanningContext.build(loaded)
    np.testing.assert_array_equal(original.value_table, reloaded.value_table)


def test_agent_rejects_mismatched_context():
    candidates = controlled_drift_candidates()
    context = PlanningContext.build(candidates)
    with pytest.raises(ConfigError):
        PorsAgent(DRIFT_DIMS, candidates[:7], 100, context=context)


def _run_pors(n_episodes, seed, context, rng=None):
    truth = build_controlled_drift_instance()
    candidates = context.candidates
    agent = PorsAgent(truth.dims, candidates, n_episodes, rng=rng, context=context)
    env_rng = SampleRng(seed)
    for k in range(1, n_episodes + 1):
        run_episode(agent, truth, k, env_rng)
    return agent


def test_agent_batch_and_incremental_likelihoods_agree():
    candidates = controlled_drift_candidates()
    context = PlanningContext.build(candidates)
    truth = build_controlled_drift_instance()
    agent = PorsAgent(truth.dims, candidates, 30, context=context)
    env_rng = SampleRng(9)
    traces, played = [], []
    for k in range(1, 31):
        traces.append(run_episode(agent, truth, k, env_rng))
        played.append(agent.episode_policy)
    batch = build_confidence_set(candidates, traces, played, beta=agent.beta)
    np.testing.assert_array_equal(batch.loglik, agent.loglik)


def test_agent_is_deterministic_and_ignores_rng():
    candidates = controlled_drift_candidates()
    context = PlanningContext.build(candidates)
    a = _run_pors(40, seed=2, context=context)
    b = _run_pors(40, seed=2, context=context, rng=np.random.default_rng(99))
    assert a.plan_log == b.plan_log
    assert a.set_log == b.set_log
    np.testing.assert_array_equal(a.loglik, b.loglik)


def test_agent_coverage_and_optimism_single_seed():
    candidates = controlled_drift_candidates()
    context = PlanningContext.build(candidates)
    truth = build_controlled_drift_instance()
    v_star = optimal_value(truth)
    agent = _run_pors(300, seed=0, context=context)
    assert agent.last_policy_index == agent.plan_log[-1][1]
    for conf_indices, (cand_idx, pol_idx) in zip(agent.set_log, agent.plan_log):
        assert 7 in conf_indices  # the true model always survives screening
        assert context.value_table[cand_idx, pol_idx] >= v_star - 1e-9
    # late episodes should have screened the wrong controlled-drift rates
    survivors = set(agent.set_log[-1])
    assert 7 in survivors
    assert survivors <= {4, 5, 6, 7} or survivors == {7}
