"""Learners for models with independently evolving sub-states, plus baselines.

Two optimistic learners share one skeleton: an exponential-weight layer
picks which sub-states to query, and a tabular optimistic Q-learner keyed
by (step, query set, revealed values, action) picks actions.

* single-query learner (d_query = 1): importance-weighted exponential
  update of one weight per sub-state; one sub-state queried per episode.
* multi-query learner (d_query > 1): a leader chosen per kappa-episode
  block from slowly-updated global weights, supporters rotated without
  replacement so every sub-state is covered within the block, and a local
  reward-driven weight layer inside the block.

Feedback timing: the values of a step's state arrive only after that
step's action, so the policy chooses the step-h action from the previous
step's revealed values and action, through an estimated one-step
predictive distribution over the current values.
"""

import math
from itertools import product as iter_product

import numpy as np

from .core import EpisodeTrace, Feedback, StepRecord, decode_state, encode_state
from .envs import (
    _draw_categorical,
    emit_observation,
    reward,
    sample_initial,
    transition,
)

WEIGHT_RENORM_THRESHOLD = 1e100


class ScheduleError(RuntimeError):
    """Block-boundary update invoked at the wrong episode."""


def default_theta1(d, horizon, n_episodes):
    """Global weight learning rate sqrt(d ln d / (H^2 K)), clamped to <= 1."""
    return min(1.0, math.sqrt(d * math.log(d) / (horizon**2 * n_episodes)))


def default_theta2(d, d_query, theta1):
    """Local rate 16(d-1)/(d_query-1) * theta1, clamped to <= 1."""
    if d_query < 2:
        raise ValueError("local rate defined only for d_query >= 2")
    return min(1.0, 16.0 * (d - 1) / (d_query - 1) * theta1)


def block_length(d, d_query):
    """ceil((d-1)/(d_query-1)) episodes per leader block."""
    if d_query < 2:
        raise ValueError("blocks defined only for d_query >= 2")
    return -(-(d - 1) // (d_query - 1))


def _check_episode_reward(value, horizon):
    if horizon is not None and not 0.0 <= value <= horizon + 1e-12:
        raise ValueError(f"episode reward {value} outside [0, {horizon}]")


class WeightState:
    """Exponential weights over sub-states, global and (optionally) local.

    Probability mixtures keep hard floors: global p_i >= theta1/d and local
    p_i >= theta2/d_query.  Raw weights are renormalized by their maximum
    only when they exceed a huge threshold (probabilities are invariant to
    the common scale), so hand-computable weight values stay observable.
    """

    def __init__(self, d, d_query, theta1, theta2=None):
        self.d = d
        self.d_query = d_query
        self.theta1 = float(theta1)
        self.theta2 = None if theta2 is None else float(theta2)
        self.kappa = block_length(d, d_query) if d_query > 1 else None
        self.global_w = np.ones(d)
        self.global_p = np.empty(d)
        self.local_w = np.ones(d)
        self.local_p = None
        self.query_set = None
        self.prev_query_set = None
        self.block_pool = []
        self.leader = None
        self.episodes_in_block = 0
        self.recompute_global_p()

    def recompute_global_p(self):
        if self.global_w.max() > WEIGHT_RENORM_THRESHOLD:
            self.global_w /= self.global_w.max()
        total = self.global_w.sum()
        self.global_p = (1.0 - self.theta1) * self.global_w / total + self.theta1 / self.d

    def recompute_local_p(self):
        if self.query_set is None:
            raise ValueError("no current query set")
        if self.local_w.max() > WEIGHT_RENORM_THRESHOLD:
            self.local_w /= self.local_w.max()
        sel = np.array(self.query_set, dtype=int)
        total = self.local_w[sel].sum()
        self.local_p = (
            (1.0 - self.theta2) * self.local_w[sel] / total + self.theta2 / self.d_query
        )

    def floor_violations(self):
        """Exact floor checks; empty list when all mixtures respect them."""
        out = []
        if self.global_p.min() < self.theta1 / self.d:
            out.append(f"global floor broken: {self.global_p.min()} < theta1/d")
        if abs(self.global_p.sum() - 1.0) > 1e-9:
            out.append(f"global p sums to {self.global_p.sum()}")
        if self.local_p is not None:
            if self.local_p.min() < self.theta2 / self.d_query:
                out.append(f"local floor broken: {self.local_p.min()} < theta2/d_query")
            if abs(self.local_p.sum() - 1.0) > 1e-9:
                out.append(f"local p sums to {self.local_p.sum()}")
        return out


def optll_update(ws, chosen_i, episode_reward, d, horizon=None):
    """Importance-weighted exponential update after one episode.

    Only the queried sub-state's weight moves:
    w_i *= exp(theta1 * R / (d * p_i)), using the probability the choice
    was made with; then p = (1-theta1) w/sum(w) + theta1/d.
    """
    _check_episode_reward(episode_reward, horizon)
    if episode_reward < 0.0:
        raise ValueError(f"episode reward {episode_reward} negative")
    p_prev = ws.global_p[chosen_i]
    if p_prev <= 0.0:
        raise ValueError(f"chosen sub-state {chosen_i} had probability {p_prev}")
    ws.global_w[chosen_i] *= math.exp(ws.theta1 * episode_reward / (d * p_prev))
    ws.recompute_global_p()
    return ws


def opmll_global_update(ws, block_rewards, chosen_set_history, d, d_query, horizon=None):
    """Block-boundary update of the global (leader) weights.

    w_i *= exp((d-1) theta1 / (d (d_query-1)) * sum of episode rewards of
    the block episodes whose query set contained i); then the usual
    mixture.  Must be fed exactly one completed block.
    """
    if len(block_rewards) != len(chosen_set_history):
        raise ValueError("block rewards and query-set history lengths differ")
    if len(block_rewards) != ws.kappa:
        raise ScheduleError(
            f"global update expects a completed block of {ws.kappa} episodes, "
            f"got {len(block_rewards)}"
        )
    for r in block_rewards:
        _check_episode_reward(r, horizon)
    factor = (d - 1) * ws.theta1 / (d * (d_query - 1))
    gains = np.zeros(d)
    for r, qset in zip(block_rewards, chosen_set_history):
        for i in qset:
            gains[i] += r
    ws.global_w *= np.exp(factor * gains)
    ws.recompute_global_p()
    return ws


def opmll_select_supporting(ws, leader, d_query, rng):
    """Query set for one episode: the leader plus d_query-1 supporters
    drawn uniformly without replacement from the block pool (sub-states
    not yet used this block); the pool refills when it runs short, which
    forces full coverage inside each block.
    """
    if d_query < 2:
        raise ValueError("supporter selection requires d_query >= 2")
    need = d_query - 1
    chosen = []
    pool = [i for i in ws.block_pool if i != leader]
    if len(pool) < need:
        chosen.extend(pool)
        pool = [i for i in range(ws.d) if i != leader and i not in chosen]
    take = need - len(chosen)
    if take:
        picks = rng.choice(len(pool), size=take, replace=False)
        picked = [pool[j] for j in sorted(int(x) for x in picks)]
        chosen.extend(picked)
        pool = [i for i in pool if i not in picked]
    ws.block_pool = pool
    ws.prev_query_set = ws.query_set
    ws.query_set = tuple(sorted([leader] + chosen))
    ws.episodes_in_block += 1
    return ws.query_set


def opmll_local_update(ws, episode_reward, d_query, horizon=None):
    """In-block local update: previous query set's weights gain
    exp(theta2 * R / d_query); the local mixture is then recomputed over
    the current query set.
    """
    _check_episode_reward(episode_reward, horizon)
    if episode_reward < 0.0:
        raise ValueError(f"episode reward {episode_reward} negative")
    if ws.prev_query_set is None:
        raise ValueError("no previous query set to update from")
    for i in ws.prev_query_set:
        ws.local_w[i] *= math.exp(ws.theta2 * episode_reward / d_query)
    ws.recompute_local_p()
    return ws


class QTable:
    """Optimistic tabular values keyed by (step, query set, revealed
    values, action), array-backed per (step, query set).

    Fresh entries hold Q = H (optimism); counts, reward sums and successor
    counts accumulate as episodes commit.
    """

    def __init__(self, horizon, n_actions, alphabet_size):
        self.horizon = horizon
        self.n_actions = n_actions
        self.alphabet_size = alphabet_size
        self.q = {}
        self.n = {}
        self.rsum = {}
        self.succ = {}

    def n_codes(self, qset):
        return self.alphabet_size ** len(qset)

    def ensure(self, qset):
        """Allocate the per-step arrays for one query set."""
        qset = tuple(qset)
        if (1, qset) not in self.q:
            nc, A = self.n_codes(qset), self.n_actions
            for h in range(1, self.horizon + 1):
                self.q[(h, qset)] = np.full((nc, A), float(self.horizon))
                self.n[(h, qset)] = np.zeros((nc, A), dtype=np.int64)
                self.rsum[(h, qset)] = np.zeros((nc, A))
                if h < self.horizon:
                    self.succ[(h, qset)] = np.zeros((nc, A, nc), dtype=np.int64)
        return qset

    def record(self, h, qset, code, action, step_reward, succ_code):
        self.n[(h, qset)][code, action] += 1
        self.rsum[(h, qset)][code, action] += step_reward
        if succ_code is not None:
            self.succ[(h, qset)][code, action, succ_code] += 1

    def key_indices(self, key):
        h, qset, values, action = key
        return h, tuple(qset), encode_state(values, self.alphabet_size), action

    def value_of(self, h, qset, values):
        """max_a Q at the key; H when the query set was never allocated."""
        entry = self.q.get((h, tuple(qset)))
        if entry is None:
            return float(self.horizon)
        return float(entry[encode_state(values, self.alphabet_size)].max())


def q_backup(qt, key, c_bonus, horizon):
    """Recompute one Q entry from its empirical statistics.

    Q = min(r_hat + sum_v' P_hat(v') V(v') + c_bonus sqrt(H^2/N), H) with
    V(v') = max_a Q at the next step (H where unvisited, 0 past the end);
    unvisited keys stay at the optimistic H.
    """
    h, qset, code, action = qt.key_indices(key)
    qt.ensure(qset)
    n = int(qt.n[(h, qset)][code, action])
    if n == 0:
        value = float(horizon)
    else:
        r_hat = qt.rsum[(h, qset)][code, action] / n
        pv = 0.0
        if h < horizon:
            counts = qt.succ[(h, qset)][code, action]
            nxt = qt.q[(h + 1, qset)].max(axis=1)
            for v_code in np.flatnonzero(counts):
                pv += (counts[v_code] / n) * nxt[v_code]
        value = min(r_hat + pv + c_bonus * math.sqrt(horizon * horizon / n), float(horizon))
    qt.q[(h, qset)][code, action] = value
    return value


def greedy_action(qt, key, tie_rng=None):
    """argmax_a Q at key = (h, query set, values); ties -> lowest index."""
    h, qset, values = key
    qt.ensure(tuple(qset))
    row = qt.q[(h, tuple(qset))][encode_state(values, qt.alphabet_size)]
    return int(np.argmax(row))


class MarkovEpisodePolicy:
    """Deterministic one-episode policy: fixed query set; first action a
    constant; later actions a function of (previous revealed-value code,
    previous action)."""

    def __init__(self, query, first_action, decisions, n_actions):
        self.query = tuple(query)
        self.first_action = int(first_action)
        self.decisions = decisions  # per h=2..H: (n_codes, A) int arrays
        self.n_actions = n_actions

    def first_distribution(self):
        out = np.zeros(self.n_actions)
        out[self.first_action] = 1.0
        return out

    def action_matrix(self, h):
        dec = self.decisions[h - 2]
        out = np.zeros(dec.shape + (self.n_actions,))
        codes, prevs = np.indices(dec.shape)
        out[codes, prevs, dec] = 1.0
        return out

    def action(self, h, prev_code, prev_action):
        if h == 1:
            return self.first_action
        return int(self.decisions[h - 2][prev_code, prev_action])

    def key(self):
        return (
            self.query,
            self.first_action,
            tuple(d.tobytes() for d in self.decisions),
        )

    @classmethod
    def from_sequence(cls, actions, query, n_codes, n_actions):
        decisions = [
            np.full((n_codes, n_actions), a, dtype=np.int64) for a in actions[1:]
        ]
        return cls(query, actions[0], decisions, n_actions)


class UniformMarkovPolicy:
    """Uniform-over-actions policy (query set irrelevant to its value)."""

    def __init__(self, query, n_codes, n_actions):
        self.query = tuple(query)
        self.n_codes = n_codes
        self.n_actions = n_actions

    def first_distribution(self):
        return np.full(self.n_actions, 1.0 / self.n_actions)

    def action_matrix(self, h):
        return np.full(
            (self.n_codes, self.n_actions, self.n_actions), 1.0 / self.n_actions
        )

    def key(self):
        return ("uniform", self.query, self.n_actions)


def run_episode(agent, env, k, rng):
    """One episode of the query/act/observe protocol.

    The agent sees the environment only through Feedback records; each
    step's revealed values arrive after the step's action.
    """
    agent.begin_episode(k)
    s = sample_initial(env, rng)
    trace = EpisodeTrace(episode=k)
    H = env.dims.horizon
    emits = env.class_tag == "Class2"
    for h in range(1, H + 1):
        action, query = agent.act(h)
        r = reward(env, h, s, action, rng)
        vec = env.state_vectors[s]
        hsi = tuple((i, int(vec[i])) for i in query)
        obs = emit_observation(env, h, s, query, rng) if emits else None
        fb = Feedback(query=tuple(query), hsi=hsi, observation=obs, reward=r)
        agent.observe(h, action, fb)
        trace.append(StepRecord(h=h, action=action, feedback=fb))
        if h < H:
            s = transition(env, h, s, action, rng)
    agent.end_episode(trace)
    return trace


class _OptimisticQAgent:
    """Shared skeleton: per-episode query set -> optimistic value sweep ->
    eager per-episode policy -> commit statistics as feedback arrives."""

    def __init__(self, dims, n_episodes, rng, theta1=None, c_bonus=1.0):
        self.dims = dims
        self.n_episodes = n_episodes
        self.rng = rng
        self.c_bonus = float(c_bonus)
        self.theta1 = (
            default_theta1(dims.d, dims.horizon, n_episodes)
            if theta1 is None
            else float(theta1)
        )
        self.qt = QTable(dims.horizon, dims.n_actions, dims.alphabet_size)
        self.init_counts = {}
        self.invariant_violations = []
        self.episode_policy = None
        self.episode = 0
        self._qset = None
        self._pending = None
        self._prev_code = None
        self._prev_action = None
        self._last_total = None

    # -- per-episode planning -------------------------------------------

    def _sweep(self, qset):
        """Backward optimistic backup over every (values, action) of the
        current query set; vectorized form of the per-key backup."""
        H, A, c = self.dims.horizon, self.dims.n_actions, self.c_bonus
        qt = self.qt
        nc = qt.n_codes(qset)
        v_next = np.zeros(nc)
        for h in range(H, 0, -1):
            n = qt.n[(h, qset)]
            q = np.full((nc, A), float(H))
            visited = n > 0
            if visited.any():
                nn = np.where(visited, n, 1)
                est = qt.rsum[(h, qset)] / nn
                if h < H:
                    est = est + (qt.succ[(h, qset)] @ v_next) / nn
                est = est + c * np.sqrt(H * H / nn)
                q[visited] = np.minimum(est, float(H))[visited]
            qt.q[(h, qset)] = q
            if (q < 0.0).any() or (q > H).any():
                self.invariant_violations.append(
                    f"episode {self.episode}: Q outside [0, {H}] at step {h}"
                )
            v_next = q.max(axis=1)

    def _build_policy(self, qset):
        """Predictive-greedy policy: the step-h action maximizes the
        estimated distribution over current values (from successor counts
        of the previous step's key; initial-value counts at step 1; uniform
        where unseen) against the just-swept Q."""
        dims, qt = self.dims, self.qt
        H, A = dims.horizon, dims.n_actions
        nc = qt.n_codes(qset)
        counts1 = self.init_counts.get(qset)
        if counts1 is None or counts1.sum() == 0:
            pred1 = np.full(nc, 1.0 / nc)
        else:
            pred1 = counts1 / counts1.sum()
        first = int(np.argmax(pred1 @ qt.q[(1, qset)]))
        decisions = []
        for h in range(2, H + 1):
            qarr = qt.q[(h, qset)]  # (nc, A)
            default = int(np.argmax(qarr.mean(axis=0)))
            # scores[c, a, a'] = sum_v succ[c, a, v] * Q[v, a']; scaling by
            # 1/N leaves the argmax unchanged
            scores = np.einsum("cav,vb->cab", qt.succ[(h - 1, qset)], qarr)
            dec = np.where(
                qt.n[(h - 1, qset)] > 0, scores.argmax(axis=2), default
            ).astype(np.int64)
            decisions.append(dec)
        self.episode_policy = MarkovEpisodePolicy(qset, first, decisions, A)

    # -- protocol ---------------------------------------------------------

    def act(self, h):
        return (
            self.episode_policy.action(h, self._prev_code, self._prev_action),
            self._qset,
        )

    def observe(self, h, action, fb):
        code = encode_state(fb.values(), self.dims.alphabet_size)
        if h == 1:
            self.init_counts[self._qset][code] += 1
        else:
            ph, pcode, pact, prew = self._pending
            self.qt.record(ph, self._qset, pcode, pact, prew, code)
        self._pending = (h, code, action, fb.reward)
        self._prev_code = code
        self._prev_action = action

    def end_episode(self, trace):
        ph, pcode, pact, prew = self._pending
        self.qt.record(ph, self._qset, pcode, pact, prew, None)
        self._pending = None
        self._last_total = trace.total_reward

    def _start_episode_common(self, qset):
        self._qset = self.qt.ensure(qset)
        if self._qset not in self.init_counts:
            self.init_counts[self._qset] = np.zeros(self.qt.n_codes(self._qset))
        self._prev_code = None
        self._prev_action = None
        self._sweep(self._qset)
        self._build_policy(self._qset)


class OptllAgent(_OptimisticQAgent):
    """Single-query learner: exponential weights choose one sub-state to
    query for the whole episode; optimistic Q-learning over its values."""

    def __init__(self, dims, n_episodes, rng, theta1=None, c_bonus=1.0):
        if dims.d_query != 1:
            raise ValueError("single-query learner requires d_query = 1")
        super().__init__(dims, n_episodes, rng, theta1, c_bonus)
        self.ws = WeightState(dims.d, 1, self.theta1)
        self._chosen = None

    def begin_episode(self, k):
        self.episode = k
        if self._chosen is not None:
            optll_update(
                self.ws, self._chosen, self._last_total, self.dims.d, self.dims.horizon
            )
            self.invariant_violations.extend(
                f"episode {k}: {v}" for v in self.ws.floor_violations()
            )
        self._chosen = _draw_categorical(self.ws.global_p, self.rng)
        self._start_episode_common((self._chosen,))


class OpmllAgent(_OptimisticQAgent):
    """Multi-query learner: per-block leader from global weights,
    without-replacement supporter rotation, in-block local weights, and
    optimistic Q-learning over the episode's revealed value combinations."""

    def __init__(
        self, dims, n_episodes, rng, theta1=None, theta2=None, c_bonus=1.0
    ):
        if dims.d_query < 2:
            raise ValueError("multi-query learner requires d_query >= 2")
        super().__init__(dims, n_episodes, rng, theta1, c_bonus)
        self.theta2 = (
            default_theta2(dims.d, dims.d_query, self.theta1)
            if theta2 is None
            else float(theta2)
        )
        self.ws = WeightState(dims.d, dims.d_query, self.theta1, self.theta2)
        self.kappa = self.ws.kappa
        self._block_rewards = []
        self._block_sets = []
        self.selection_log = []  # (episode, leader, query set) per episode
        self.rewarding_log = []  # in-block sampled "rewarding" sub-state

    def begin_episode(self, k):
        self.episode = k
        d, dq = self.dims.d, self.dims.d_query
        boundary = (k - 1) % self.kappa == 0
        if boundary:
            if k > 1:
                opmll_global_update(
                    self.ws,
                    self._block_rewards,
                    self._block_sets,
                    d,
                    dq,
                    self.dims.horizon,
                )
                self.invariant_violations.extend(
                    f"episode {k}: {v}" for v in self.ws.floor_violations()
                )
            self.ws.leader = _draw_categorical(self.ws.global_p, self.rng)
            self.ws.block_pool = [i for i in range(d) if i != self.ws.leader]
            self.ws.local_w = self.ws.global_w.copy()
            self.ws.query_set = None
            self.ws.prev_query_set = None
            self.ws.episodes_in_block = 0
            self._block_rewards = []
            self._block_sets = []
        qset = opmll_select_supporting(self.ws, self.ws.leader, dq, self.rng)
        if not boundary:
            opmll_local_update(self.ws, self._last_total, dq, self.dims.horizon)
        else:
            self.ws.recompute_local_p()
        self.invariant_violations.extend(
            f"episode {k}: {v}" for v in self.ws.floor_violations()
        )
        rewarding = qset[_draw_categorical(self.ws.local_p, self.rng)]
        self.rewarding_log.append(rewarding)
        self.selection_log.append((k, self.ws.leader, qset))
        self._start_episode_common(qset)

    def end_episode(self, trace):
        super().end_episode(trace)
        self._block_rewards.append(trace.total_reward)
        self._block_sets.append(self._qset)


class UniformRandomAgent:
    """Uniform over actions and query sets, independently each step."""

    def __init__(self, dims, rng):
        self.dims = dims
        self.rng = rng
        self._qsets = dims.query_sets()
        self.invariant_violations = []
        self.episode_policy = UniformMarkovPolicy(
            self._qsets[0], dims.n_query_values, dims.n_actions
        )

    def begin_episode(self, k):
        pass

    def act(self, h):
        a = int(self.rng.integers(self.dims.n_actions))
        q = self._qsets[int(self.rng.integers(len(self._qsets)))]
        return a, q

    def observe(self, h, action, fb):
        pass

    def end_episode(self, trace):
        pass


class FixedPolicyAgent:
    """Plays one Markov episode policy forever (stochastic rows allowed)."""

    def __init__(self, dims, policy, rng):
        self.dims = dims
        self.episode_policy = policy
        self.rng = rng
        self.invariant_violations = []
        self._prev_code = None
        self._prev_action = None

    def begin_episode(self, k):
        self._prev_code = None
        self._prev_action = None

    def act(self, h):
        pol = self.episode_policy
        if h == 1:
            row = pol.first_distribution()
        else:
            row = pol.action_matrix(h)[self._prev_code, self._prev_action]
        return _draw_categorical(row, self.rng), pol.query

    def observe(self, h, action, fb):
        self._prev_code = encode_state(fb.values(), self.dims.alphabet_size)
        self._prev_action = action

    def end_episode(self, trace):
        pass


class EpsilonGreedySequenceAgent:
    """Bandit over open-loop action sequences: with probability epsilon play
    a uniformly random sequence, otherwise the best empirical mean so far
    (ties -> lowest sequence index).  The sequence index is the big-endian
    action code, so lexicographically earlier sequences break ties."""

    def __init__(self, dims, rng, epsilon=0.25, max_sequences=65536):
        n_seq = dims.n_actions**dims.horizon
        if n_seq > max_sequences:
            raise ValueError(f"{n_seq} sequences exceed the cap {max_sequences}")
        self.dims = dims
        self.rng = rng
        self.epsilon = float(epsilon)
        self.n_seq = n_seq
        self.totals = np.zeros(n_seq)
        self.counts = np.zeros(n_seq, dtype=np.int64)
        self.invariant_violations = []
        self.episode_policy = None
        self._seq = None

    def sequence_actions(self, index):
        A, H = self.dims.n_actions, self.dims.horizon
        out = []
        for _ in range(H):
            out.append(index % A)
            index //= A
        return tuple(reversed(out))

    def best_sequence(self):
        means = np.where(self.counts > 0, self.totals / np.maximum(self.counts, 1), 0.0)
        return int(np.argmax(means))

    def begin_episode(self, k):
        if self.rng.random() < self.epsilon:
            idx = int(self.rng.integers(self.n_seq))
        else:
            idx = self.best_sequence()
        self._seq = idx
        self._actions = self.sequence_actions(idx)
        self.episode_policy = MarkovEpisodePolicy.from_sequence(
            self._actions,
            self.dims.query_sets()[0],
            self.dims.n_query_values,
            self.dims.n_actions,
        )

    def act(self, h):
        return self._actions[h - 1], self.episode_policy.query

    def observe(self, h, action, fb):
        pass

    def end_episode(self, trace):
        self.totals[self._seq] += trace.total_reward
        self.counts[self._seq] += 1
