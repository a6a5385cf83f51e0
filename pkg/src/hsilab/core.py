"""Shared vocabulary: dimensions, sub-state vector codecs, feedback records.

A state is a length-``d`` vector of sub-state values, each value in
``range(alphabet_size)``.  States are stored flat as integers via a
little-endian mixed-radix code: index = sum_i v[i] * alphabet_size**i.
Query sets are sorted tuples of sub-state indices.
"""

from dataclasses import dataclass, field
from itertools import combinations


class ConfigError(ValueError):
    """Malformed config/model file; message carries file and line."""


class OracleSizeError(RuntimeError):
    """Exact computation would exceed its configured size cap."""


class InfeasibleEvidenceError(ValueError):
    """Conditioning a belief on evidence of probability zero."""


class UnsupportedFeedbackError(ValueError):
    """Requested feedback channel does not exist for this model."""


@dataclass(frozen=True)
class Dims:
    """Problem sizes shared by environments, agents and the planner.

    d           -- number of sub-states per state vector
    alphabet_size -- values each sub-state can take
    d_query     -- sub-states revealed per hindsight query
    horizon     -- steps per episode
    n_actions   -- actions per step
    n_observations -- observation symbols (0 when the task emits none)
    """

    d: int
    alphabet_size: int
    d_query: int
    horizon: int
    n_actions: int
    n_observations: int = 0

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if self.alphabet_size < 1:
            raise ValueError(f"alphabet_size must be >= 1, got {self.alphabet_size}")
        if not 1 <= self.d_query <= self.d:
            raise ValueError(f"d_query must be in [1, d={self.d}], got {self.d_query}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.n_actions < 1:
            raise ValueError(f"n_actions must be >= 1, got {self.n_actions}")
        if self.n_observations < 0:
            raise ValueError(f"n_observations must be >= 0, got {self.n_observations}")
        if self.alphabet_size**self.d > 2**62:
            raise ValueError(
                f"state space |alphabet|^d = {self.alphabet_size}^{self.d} "
                "overflows the index type"
            )

    @property
    def n_states(self):
        """Number of joint states |alphabet|^d."""
        return self.alphabet_size**self.d

    @property
    def n_hidden(self):
        """Joint values of the d - d_query sub-states a query leaves hidden."""
        return self.alphabet_size ** (self.d - self.d_query)

    @property
    def n_query_values(self):
        """Joint values of the d_query sub-states a query reveals."""
        return self.alphabet_size**self.d_query

    def query_sets(self):
        """All sorted d_query-subsets of sub-state indices, lexicographic."""
        return list(combinations(range(self.d), self.d_query))


def encode_state(values, alphabet_size):
    """Flat index of a sub-state vector (little-endian mixed radix).

    >>> encode_state([2, 1], 3)
    5
    """
    idx = 0
    for pos, v in enumerate(values):
        v = int(v)
        if not 0 <= v < alphabet_size:
            raise ValueError(f"sub-state value {v} outside [0, {alphabet_size})")
        idx += v * alphabet_size**pos
    return idx


def decode_state(index, alphabet_size, d):
    """Inverse of encode_state; returns a length-d tuple of ints."""
    index = int(index)
    if not 0 <= index < alphabet_size**d:
        raise ValueError(f"state index {index} outside [0, {alphabet_size ** d})")
    out = []
    for _ in range(d):
        out.append(index % alphabet_size)
        index //= alphabet_size
    return tuple(out)


def extract_hsi(values, query):
    """Project a sub-state vector onto a query set.

    Returns (index, value) pairs in query order, e.g.
    extract_hsi([1, 0, 1], (0, 2)) -> ((0, 1), (2, 1)).
    """
    n = len(values)
    for i in query:
        if not 0 <= i < n:
            raise ValueError(f"query index {i} outside [0, {n})")
    return tuple((i, values[i]) for i in query)


def hsi_value_tuple(hsi):
    """Just the revealed values of an extract_hsi result, in query order."""
    return tuple(v for _, v in hsi)


def encode_partial(values, alphabet_size):
    """Flat code of a tuple of revealed values (same little-endian scheme)."""
    return encode_state(values, alphabet_size)


def canonical_query(query, d):
    """Validated sorted tuple of distinct sub-state indices."""
    q = tuple(sorted(int(i) for i in query))
    if len(set(q)) != len(q):
        raise ValueError(f"query has repeated indices: {query}")
    if q and (q[0] < 0 or q[-1] >= d):
        raise ValueError(f"query index outside [0, {d}): {query}")
    return q


def state_label(values, alphabet_size):
    """Textual form of a sub-state vector for CSV/logs.

    Digit string like '101' while single digits suffice, dash-separated
    decimals otherwise.
    """
    if alphabet_size <= 10:
        return "".join(str(v) for v in values)
    return "-".join(str(v) for v in values)


@dataclass
class Feedback:
    """What the environment reveals after one step's action.

    query       -- the sub-state indices the agent asked for
    hsi         -- (index, value) pairs for the queried sub-states of the
                   state the action was taken in (arrives after the action)
    observation -- emitted symbol, or None for tasks without emissions
    reward      -- realized scalar reward for the step
    """

    query: tuple
    hsi: tuple
    observation: int | None
    reward: float

    def values(self):
        return hsi_value_tuple(self.hsi)


@dataclass
class StepRecord:
    """One step of an episode trace as the agent experienced it."""

    h: int
    action: int
    feedback: Feedback


@dataclass
class EpisodeTrace:
    """A full episode: per-step records plus the realized return."""

    episode: int = 0
    steps: list = field(default_factory=list)
    total_reward: float = 0.0

    def append(self, record):
        self.steps.append(record)
        self.total_reward += record.feedback.reward
