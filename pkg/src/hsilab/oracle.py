"""Ground truth for small instances.

Exact belief filtering over the hidden state, exact optimal value over
joint action-and-query policies by backward induction on the reachable
belief tree, exact evaluation of per-episode Markov policies, and regret
accounting.  Everything here is exact-or-error: when the belief tree
exceeds its node cap the computation raises instead of approximating.

Timing convention: the feedback for a step (queried values of that step's
state, plus any emitted observation) arrives after the step's action, so a
step's action is chosen from the belief conditioned on feedback of earlier
steps only.  Realized rewards are not used as evidence by the optimal
planner's branching (they carry no extra information on the instances
with informative terminal rewards only, and the confidence-set learner
deliberately ignores them as well).
"""

from dataclasses import dataclass

import numpy as np

from .core import InfeasibleEvidenceError, OracleSizeError, encode_state

ATOL = 1e-12

DEFAULT_NODE_CAP = 10**6


@dataclass
class Belief:
    """Posterior over hidden states at the start of step h."""

    p: np.ndarray
    h: int

    def validate(self):
        if self.p.min() < -ATOL or abs(self.p.sum() - 1.0) > ATOL:
            raise ValueError("belief not normalized")
        return self


def initial_belief(m):
    return Belief(p=np.array(m.initial, dtype=float), h=1)


def _queried_value_codes(m, query):
    """Per-state little-endian code of the queried sub-state values."""
    V = m.dims.alphabet_size
    codes = np.zeros(m.n_states, dtype=np.int64)
    for k, i in enumerate(query):
        codes += m.state_vectors[:, i] * V**k
    return codes


def _hidden_value_codes(m, query):
    V = m.dims.alphabet_size
    qset = set(query)
    codes = np.zeros(m.n_states, dtype=np.int64)
    k = 0
    for i in range(m.dims.d):
        if i in qset:
            continue
        codes += m.state_vectors[:, i] * V**k
        k += 1
    return codes


def _condition(m, h, p, query, values, observation):
    """Multiply a belief by the evidence likelihood of one step's feedback.

    Returns the unnormalized posterior and its mass (the marginal
    probability of the feedback given the belief).
    """
    out = np.array(p, dtype=float)
    if query:
        vcodes = _queried_value_codes(m, query)
        want = encode_state(values, m.dims.alphabet_size)
        out[vcodes != want] = 0.0
    if observation is not None:
        table = m.emissions[(h, tuple(query))]
        out *= table[observation, _hidden_value_codes(m, query)]
    return out, float(out.sum())


def belief_update(m, b, action, feedback):
    """Condition on one step's feedback, then push through the transition.

    Valid for steps 1..H-1 (there is no transition out of the last step).
    """
    H = m.dims.horizon
    if not 1 <= b.h <= H - 1:
        raise ValueError(f"no belief update out of step {b.h} (horizon {H})")
    post, mass = _condition(
        m, b.h, b.p, feedback.query, feedback.values(), feedback.observation
    )
    if mass == 0.0:
        raise InfeasibleEvidenceError(
            f"feedback at step {b.h} has probability zero under the belief"
        )
    post /= mass
    nxt = post @ m.joint_transitions()[b.h - 1, :, action, :]
    return Belief(p=nxt, h=b.h + 1)


def trace_log_likelihood(m, trace):
    """Log-probability of an episode's feedback sequence under the model.

    Accumulates the conditioning mass of each step's feedback through the
    exact filter; the last step conditions without transitioning.  Returns
    -inf for impossible traces.  Realized rewards are not part of the
    evidence.
    """
    p = np.array(m.initial, dtype=float)
    total = 0.0
    H = m.dims.horizon
    for rec in trace.steps:
        fb = rec.feedback
        post, mass = _condition(m, rec.h, p, fb.query, fb.values(), fb.observation)
        if mass == 0.0:
            return float("-inf")
        total += float(np.log(mass))
        if rec.h < H:
            p = (post / mass) @ m.joint_transitions()[rec.h - 1, :, rec.action, :]
    return total


def _feedback_branches(m, h, p, query):
    """All nonzero-probability feedback outcomes of querying at step h.

    Yields (mass, normalized conditioned belief) in a fixed order:
    queried-value codes ascending, observation symbols ascending inside
    each value code.  Masses sum to 1 for a normalized belief.
    """
    vcodes = _queried_value_codes(m, query)
    n_obs = m.dims.n_observations if m.emissions else 0
    ucodes = _hidden_value_codes(m, query) if n_obs else None
    branches = []
    for v in range(m.dims.n_query_values):
        masked = np.where(vcodes == v, p, 0.0)
        if n_obs:
            table = m.emissions[(h, tuple(query))]
            for o in range(n_obs):
                w = masked * table[o, ucodes]
                mass = float(w.sum())
                if mass == 0.0:
                    continue
                branches.append((mass, w / mass))
        else:
            mass = float(masked.sum())
            if mass == 0.0:
                continue
            branches.append((mass, masked / mass))
    return branches


def _plan(m, cap):
    """Backward induction over the reachable belief tree.

    Returns (value, first action, first query, stats).  Beliefs are
    memoized on (step, belief rounded to 12 decimals); the node count is
    capped — exceeding it raises rather than approximates.
    """
    dims = m.dims
    H, A = dims.horizon, dims.n_actions
    qsets = dims.query_sets()
    joint = m.joint_transitions() if H > 1 else None
    memo = {}
    stats = {"nodes": 0, "memo_hits": 0}

    def rec(h, p):
        key = (h, np.round(p, 12).tobytes())
        hit = memo.get(key)
        if hit is not None:
            stats["memo_hits"] += 1
            return hit
        stats["nodes"] += 1
        if stats["nodes"] > cap:
            raise OracleSizeError(
                f"belief tree for model {m.name!r} exceeds {cap} nodes"
            )
        expected_r = p @ m.rewards[h - 1]  # (A,)
        if h == H:
            # feedback after the last action cannot be used; query is moot
            best_a = 0
            for a in range(1, A):
                if expected_r[a] > expected_r[best_a]:
                    best_a = a
            result = (float(expected_r[best_a]), best_a, qsets[0])
        else:
            values = np.empty((A, len(qsets)))
            for qi, q in enumerate(qsets):
                branches = _feedback_branches(m, h, p, q)
                for a in range(A):
                    total = float(expected_r[a])
                    for mass, cond in branches:
                        total += mass * rec(h + 1, cond @ joint[h - 1, :, a, :])[0]
                    values[a, qi] = total
            best = (-np.inf, 0, qsets[0])
            for a in range(A):
                for qi, q in enumerate(qsets):
                    if values[a, qi] > best[0]:
                        best = (float(values[a, qi]), a, q)
            result = best
        memo[key] = result
        return result

    value, action, query = rec(1, np.array(m.initial, dtype=float))
    return value, action, query, stats


def optimal_value(m, cap=DEFAULT_NODE_CAP):
    """Exact optimal expected episode reward over joint action+query policies."""
    return _plan(m, cap)[0]


def oracle_report(m, cap=DEFAULT_NODE_CAP):
    """Optimal value plus the optimizing first step and tree statistics."""
    value, action, query, stats = _plan(m, cap)
    return {
        "model": m.name,
        "v_star": value,
        "first_action": action,
        "first_query": query,
        "nodes": stats["nodes"],
        "memo_hits": stats["memo_hits"],
        "node_cap": cap,
    }


def mdp_optimal_value(m):
    """Optimal value if the state were fully visible before each action.

    Standard tabular backward induction; upper-bounds the hindsight-feedback
    optimum (equal when knowing the current state adds nothing, e.g. under
    deterministic transitions from a deterministic start).
    """
    H = m.dims.horizon
    v = np.zeros(m.n_states)
    for h in range(H, 0, -1):
        q = np.array(m.rewards[h - 1], dtype=float)
        if h < H:
            q = q + m.joint_transitions()[h - 1] @ v
        v = q.max(axis=1)
    return float(m.initial @ v)


def evaluate_markov_policy(m, policy):
    """Exact expected episode reward of a per-episode Markov policy.

    The policy queries a fixed sub-state set every step and draws the step-h
    action from a distribution conditioned on the previous step's revealed
    values and action (the first action from an unconditional distribution).
    Protocol: ``policy.query``, ``policy.first_distribution() -> (A,)``,
    ``policy.action_matrix(h) -> (n_value_codes, A, A)`` for h >= 2.
    """
    dims = m.dims
    H, A = dims.horizon, dims.n_actions
    first = np.asarray(policy.first_distribution(), dtype=float)
    mu = m.initial[:, None] * first[None, :]  # joint over (state, action)
    total = float((mu * m.rewards[0]).sum())
    if H == 1:
        return total
    vcode = _queried_value_codes(m, tuple(policy.query))
    joint = m.joint_transitions()
    for h in range(2, H + 1):
        mat = np.asarray(policy.action_matrix(h), dtype=float)[vcode]  # (S, A, A')
        flow = mu[:, :, None] * joint[h - 2]  # (S, A, S')
        mu = np.einsum("sat,saA->tA", flow, mat)
        total += float((mu * m.rewards[h - 1]).sum())
    return total


@dataclass
class RegretSeries:
    """Per-episode values against the optimum, with cumulative regret.

    mode is "expected" when values are exact policy values, "realized"
    when they are sampled episode totals (noisier; labeled in outputs).
    """

    v_star: float
    values: np.ndarray
    mode: str

    @property
    def per_episode_regret(self):
        return self.v_star - self.values

    @property
    def cumulative_regret(self):
        return np.cumsum(self.v_star - self.values)

    def regret_at(self, k):
        """Reg(k) after the first k episodes (1-based)."""
        if not 1 <= k <= len(self.values):
            raise ValueError(f"episode {k} outside [1, {len(self.values)}]")
        return float(self.cumulative_regret[k - 1])


def compute_regret(values, v_star, mode="expected"):
    """Assemble a RegretSeries from per-episode values and the optimum."""
    if mode not in ("expected", "realized"):
        raise ValueError(f"unknown regret mode {mode!r}")
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"per-episode values must be 1-D, got shape {arr.shape}")
    if not np.isfinite(v_star):
        raise ValueError("v_star must be finite")
    return RegretSeries(v_star=float(v_star), values=arr, mode=mode)
