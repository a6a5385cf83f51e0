"""Experiment configuration, seeded suites, verification, CSV/SVG output.

A config file is sectioned key/value text::

    [experiment]
    episodes = 1000
    seeds = 0,1,2,3

    [env builder=groups]
    d = 2
    epsilon = 0.1

    [algo name=op-tll]
    c-bonus = 1.0

Each (algorithm, seed) run draws its own random streams from a seed hashed
out of (master seed, algorithm label, environment name, seed), so results
never depend on the order runs execute in and rerunning a config reproduces
the CSV byte for byte.
"""

import hashlib
import math
import os
from dataclasses import dataclass, field
from xml.sax.saxutils import escape as xml_escape

import numpy as np

from .core import ConfigError, OracleSizeError, Dims
from .envs import (
    SampleRng,
    build_controlled_drift_instance,
    build_hard_instance_flat_emission,
    build_hard_instance_groups,
    build_hard_instance_tree,
    check_groups_combination,
    check_groups_same_substate,
    derive_generator,
    groups_state_vectors,
    min_partial_singular_value,
    random_independent_model,
)
from .agents import (
    EpsilonGreedySequenceAgent,
    FixedPolicyAgent,
    MarkovEpisodePolicy,
    OpmllAgent,
    OptllAgent,
    UniformRandomAgent,
    run_episode,
)
from .pors import PlanningContext, PorsAgent, TreePolicy, evaluate_policy_value
from .serialize import load_candidates, load_model, parse_sections
from . import oracle

MASTER_SEED_ENV_VAR = "HSILAB_MASTER_SEED"
CSV_HEADER = "algo,env,seed,episode,reward,cum_reward,regret"
REGRET_MODES = ("auto", "expected", "realized", "off")
ALGO_KINDS = (
    "uniform",
    "op-tll",
    "op-mll",
    "pors",
    "epsilon-greedy-seq",
    "fixed",
)
ENV_BUILDERS = (
    "groups",
    "flat-emission",
    "tree",
    "random-class1",
    "controlled-drift",
    "file",
)
SVG_PALETTE = (
    "#1f77b4",
    "#d62728",
    "#2ca02c",
    "#9467bd",
    "#ff7f0e",
    "#8c564b",
    "#17becf",
    "#e377c2",
)
MAX_PLOT_POINTS = 1000


class VerificationFailure(RuntimeError):
    """A structural property of a named instance did not hold."""


# -- configuration ---------------------------------------------------------------


@dataclass
class AlgoSpec:
    kind: str
    label: str
    params: dict


@dataclass
class ExperimentConfig:
    env_kind: str
    env_params: dict
    algos: list
    n_episodes: int
    seeds: tuple
    master_seed: int
    output_dir: str
    oracle_cap: int
    regret_mode: str
    verify: bool
    source: str
    env_model: object = field(default=None, repr=False)
    candidate_classes: dict = field(default_factory=dict, repr=False)


def _section_kv(section, source):
    out = {}
    for key, value, lineno in section.rows:
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def _take(kv, key, default=None):
    if key in kv:
        value, _ = kv.pop(key)
        return value
    return default


def _parse_typed(raw, kind, what, source, lineno=None):
    where = f"{source}:{lineno}: " if lineno else f"{source}: "
    try:
        if kind is bool:
            if raw not in ("on", "off"):
                raise ValueError
            return raw == "on"
        return kind(raw)
    except (TypeError, ValueError):
        raise ConfigError(
            f"{where}{what} must be {kind.__name__}, got {raw!r}"
        ) from None


def _reject_unknown(kv, where, source):
    if kv:
        key = next(iter(kv))
        _, lineno = kv[key]
        raise ConfigError(f"{source}:{lineno}: unknown {where} key {key!r}")


def _typed_params(kv, schema, where, source):
    """Resolve a key/value section against {key: (type, default)}; defaults
    of REQUIRED mark mandatory keys."""
    out = {}
    for key, (kind, default) in schema.items():
        if key in kv:
            raw, lineno = kv.pop(key)
            out[key] = _parse_typed(raw, kind, f"{where} {key}", source, lineno)
        elif default is REQUIRED:
            raise ConfigError(f"{source}: {where} requires key {key!r}")
        else:
            out[key] = default
    _reject_unknown(kv, where, source)
    return out


REQUIRED = object()

_ENV_SCHEMAS = {
    "groups": {
        "d": (int, REQUIRED),
        "epsilon": (float, REQUIRED),
        "d-query": (int, 1),
        "n-actions": (int, 2),
    },
    "flat-emission": {"epsilon": (float, REQUIRED)},
    "tree": {
        "alphabet-size": (int, REQUIRED),
        "d": (int, REQUIRED),
        "n-actions": (int, REQUIRED),
        "epsilon": (float, REQUIRED),
        "h0": (int, None),
        "m-star": (int, None),
        "horizon": (int, None),
    },
    "random-class1": {
        "d": (int, REQUIRED),
        "alphabet-size": (int, REQUIRED),
        "d-query": (int, 1),
        "horizon": (int, REQUIRED),
        "n-actions": (int, REQUIRED),
        "env-seed": (int, 0),
    },
    "controlled-drift": {
        "stay-controlled": (float, 0.8),
        "stay-drift": (float, 0.7),
        "emission-accuracy": (float, 0.8),
        "horizon": (int, 2),
    },
    "file": {"path": (str, REQUIRED)},
}

_ALGO_SCHEMAS = {
    "uniform": {},
    "op-tll": {"theta1": (float, None), "c-bonus": (float, 1.0)},
    "op-mll": {
        "theta1": (float, None),
        "theta2": (float, None),
        "c-bonus": (float, 1.0),
    },
    "pors": {
        "candidates": (str, REQUIRED),
        "beta": (float, None),
        "delta": (float, 0.05),
        "policy-cap": (int, 4096),
    },
    "epsilon-greedy-seq": {"epsilon": (float, 0.25)},
    "fixed": {"actions": (str, REQUIRED), "query": (str, REQUIRED)},
}


def build_env(env_kind, env_params, source="<config>"):
    """Instantiate the configured environment model."""
    p = env_params
    try:
        if env_kind == "groups":
            return build_hard_instance_groups(
                p["d"], p["epsilon"], p["d-query"], p["n-actions"]
            )
        if env_kind == "flat-emission":
            return build_hard_instance_flat_emission(p["epsilon"])
        if env_kind == "tree":
            return build_hard_instance_tree(
                p["alphabet-size"],
                p["d"],
                p["n-actions"],
                p["epsilon"],
                h0=p["h0"],
                m_star=p["m-star"],
                horizon=p["horizon"],
            )
        if env_kind == "random-class1":
            dims = Dims(
                d=p["d"],
                alphabet_size=p["alphabet-size"],
                d_query=p["d-query"],
                horizon=p["horizon"],
                n_actions=p["n-actions"],
            )
            return random_independent_model(
                dims, p["env-seed"], name=f"random-class1-s{p['env-seed']}"
            )
        if env_kind == "controlled-drift":
            return build_controlled_drift_instance(
                p["stay-controlled"],
                p["stay-drift"],
                p["emission-accuracy"],
                p["horizon"],
            )
        if env_kind == "file":
            return load_model(p["path"])
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: cannot build env {env_kind}: {exc}") from exc
    raise ConfigError(f"{source}: unknown env builder {env_kind!r}")


def _check_compatibility(spec, env, source):
    """Algorithm/model-class compatibility, checked before any run starts."""

    def fail(reason):
        raise ConfigError(
            f"{source}: algorithm {spec.label!r} is incompatible with env "
            f"{env.name!r}: {reason}"
        )

    if spec.kind in ("op-tll", "op-mll"):
        if env.class_tag == "Class2":
            fail("needs a model without emissions (Class1 or Generic)")
        if spec.kind == "op-tll" and env.dims.d_query != 1:
            fail(f"single-query learner needs d_query=1, env has {env.dims.d_query}")
        if spec.kind == "op-mll" and env.dims.d_query < 2:
            fail(f"multi-query learner needs d_query>=2, env has {env.dims.d_query}")
    if spec.kind == "pors" and env.class_tag != "Class2":
        fail(f"needs an emission model (Class2), env is {env.class_tag}")


def load_config(path):
    """Parse and fully validate a config file; every invariant is checked
    (environment built, candidate classes loaded, compatibility verified)
    before any run starts."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    source = str(path)
    sections = parse_sections(text, source)
    exp = env_sec = None
    algo_secs = []
    for sec in sections:
        if sec.name == "experiment":
            if exp is not None:
                raise ConfigError(f"{source}:{sec.line}: duplicate [experiment]")
            exp = sec
        elif sec.name == "env":
            if env_sec is not None:
                raise ConfigError(f"{source}:{sec.line}: duplicate [env]")
            env_sec = sec
        elif sec.name == "algo":
            algo_secs.append(sec)
        else:
            raise ConfigError(f"{source}:{sec.line}: unknown section [{sec.name}]")
    if exp is None:
        raise ConfigError(f"{source}: missing [experiment] section")
    if env_sec is None:
        raise ConfigError(f"{source}: missing [env ...] section")
    if not algo_secs:
        raise ConfigError(f"{source}: need at least one [algo ...] section")

    kv = _section_kv(exp, source)
    n_episodes = _parse_typed(_take(kv, "episodes"), int, "episodes", source)
    if n_episodes < 1:
        raise ConfigError(f"{source}: episodes must be >= 1, got {n_episodes}")
    seeds_raw = _take(kv, "seeds")
    if seeds_raw is None:
        raise ConfigError(f"{source}: [experiment] requires key 'seeds'")
    try:
        seeds = tuple(int(s) for s in seeds_raw.split(","))
    except ValueError:
        raise ConfigError(
            f"{source}: seeds must be comma-separated integers, got {seeds_raw!r}"
        ) from None
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"{source}: duplicate seeds in {seeds}")
    master_seed = _parse_typed(
        _take(kv, "master-seed", "0"), int, "master-seed", source
    )
    env_override = os.environ.get(MASTER_SEED_ENV_VAR)
    if env_override is not None:
        master_seed = _parse_typed(
            env_override, int, MASTER_SEED_ENV_VAR, source
        )
    regret_mode = _take(kv, "regret-mode", "auto")
    if regret_mode not in REGRET_MODES:
        raise ConfigError(
            f"{source}: regret-mode must be one of {REGRET_MODES}, "
            f"got {regret_mode!r}"
        )
    output_dir = _take(kv, "output-dir", "results")
    oracle_cap = _parse_typed(
        _take(kv, "oracle-cap", str(oracle.DEFAULT_NODE_CAP)),
        int,
        "oracle-cap",
        source,
    )
    verify = _parse_typed(_take(kv, "verify", "off"), bool, "verify", source)
    _reject_unknown(kv, "[experiment]", source)

    env_kind = env_sec.args.get("builder")
    if env_kind is None:
        raise ConfigError(
            f"{source}:{env_sec.line}: [env] header needs builder=<name>"
        )
    if env_kind not in _ENV_SCHEMAS:
        raise ConfigError(
            f"{source}:{env_sec.line}: unknown env builder {env_kind!r}; "
            f"known: {', '.join(ENV_BUILDERS)}"
        )
    env_params = _typed_params(
        _section_kv(env_sec, source), _ENV_SCHEMAS[env_kind], f"env {env_kind}", source
    )
    env_model = build_env(env_kind, env_params, source)

    algos = []
    labels = set()
    candidate_classes = {}
    for sec in algo_secs:
        kind = sec.args.get("name")
        if kind is None:
            raise ConfigError(f"{source}:{sec.line}: [algo] header needs name=<kind>")
        if kind not in _ALGO_SCHEMAS:
            raise ConfigError(
                f"{source}:{sec.line}: unknown algorithm {kind!r}; "
                f"known: {', '.join(ALGO_KINDS)}"
            )
        label = sec.args.get("label", kind)
        if label in labels:
            raise ConfigError(f"{source}:{sec.line}: duplicate algo label {label!r}")
        labels.add(label)
        params = _typed_params(
            _section_kv(sec, source), _ALGO_SCHEMAS[kind], f"algo {kind}", source
        )
        spec = AlgoSpec(kind=kind, label=label, params=params)
        _check_compatibility(spec, env_model, source)
        if kind == "pors":
            cand_path = params["candidates"]
            try:
                cands = load_candidates(cand_path)
            except OSError as exc:
                raise ConfigError(
                    f"{source}: cannot read candidates {cand_path}: {exc}"
                ) from exc
            for cand in cands:
                if cand.dims != env_model.dims:
                    raise ConfigError(
                        f"{source}: candidate {cand.name!r} dimensions do not "
                        f"match env {env_model.name!r}"
                    )
            candidate_classes[label] = cands
        if kind == "fixed":
            _fixed_policy(spec, env_model.dims, source)  # validates
        algos.append(spec)

    return ExperimentConfig(
        env_kind=env_kind,
        env_params=env_params,
        algos=algos,
        n_episodes=n_episodes,
        seeds=seeds,
        master_seed=master_seed,
        output_dir=output_dir,
        oracle_cap=oracle_cap,
        regret_mode=regret_mode,
        verify=verify,
        source=source,
        env_model=env_model,
        candidate_classes=candidate_classes,
    )


def _fixed_policy(spec, dims, source):
    """Constant open-loop policy from a fixed-agent spec."""
    try:
        actions = [int(a) for a in spec.params["actions"].split(",")]
        query = tuple(int(i) for i in spec.params["query"].split(","))
    except ValueError:
        raise ConfigError(
            f"{source}: fixed agent actions/query must be comma-separated ints"
        ) from None
    if len(actions) == 1:
        actions = actions * dims.horizon
    if len(actions) != dims.horizon:
        raise ConfigError(
            f"{source}: fixed agent needs 1 or {dims.horizon} actions, "
            f"got {len(actions)}"
        )
    if query not in dims.query_sets():
        raise ConfigError(f"{source}: fixed agent query {query} is not a query set")
    if not all(0 <= a < dims.n_actions for a in actions):
        raise ConfigError(f"{source}: fixed agent action out of range in {actions}")
    return MarkovEpisodePolicy.from_sequence(
        actions, query, dims.n_query_values, dims.n_actions
    )


# -- suite execution --------------------------------------------------------------


def derive_run_seed(master_seed, algo_label, env_name, seed):
    """Stable 64-bit run seed; insulates runs from config reordering."""
    digest = hashlib.sha256(
        f"{master_seed}/{algo_label}/{env_name}/{seed}".encode()
    ).digest()
    return int.from_bytes(digest[:8], "little")


def _make_agent(spec, env, n_episodes, rng, context):
    dims = env.dims
    p = spec.params
    if spec.kind == "uniform":
        return UniformRandomAgent(dims, rng)
    if spec.kind == "op-tll":
        return OptllAgent(
            dims, n_episodes, rng, theta1=p["theta1"], c_bonus=p["c-bonus"]
        )
    if spec.kind == "op-mll":
        return OpmllAgent(
            dims,
            n_episodes,
            rng,
            theta1=p["theta1"],
            theta2=p["theta2"],
            c_bonus=p["c-bonus"],
        )
    if spec.kind == "epsilon-greedy-seq":
        return EpsilonGreedySequenceAgent(dims, rng, epsilon=p["epsilon"])
    if spec.kind == "fixed":
        return FixedPolicyAgent(dims, _fixed_policy(spec, dims, "<config>"), rng)
    if spec.kind == "pors":
        return PorsAgent(
            dims,
            context.candidates,
            n_episodes,
            rng,
            beta=p["beta"],
            delta=p["delta"],
            policy_cap=p["policy-cap"],
            context=context,
        )
    raise ConfigError(f"unknown algorithm kind {spec.kind!r}")


def _policy_value(env, policy, cache):
    """Exact expected episode reward of the policy an agent just played."""
    if isinstance(policy, TreePolicy):
        key = policy
        if key not in cache:
            cache[key] = evaluate_policy_value(env, policy)
    else:
        key = policy.key()
        if key not in cache:
            cache[key] = oracle.evaluate_markov_policy(env, policy)
    return cache[key]


@dataclass
class RunResult:
    algo: str
    env: str
    seed: int
    rewards: np.ndarray
    policy_values: object = None


@dataclass
class ResultsTable:
    """Per-episode rows plus summary statistics for one executed config."""

    env_name: str
    regret_mode: str
    v_star: object
    n_episodes: int
    runs: list

    def sorted_runs(self):
        return sorted(self.runs, key=lambda r: (r.algo, r.seed))

    def run_regret(self, run):
        """Cumulative regret series (length K), or None in off mode."""
        if self.regret_mode == "off":
            return None
        if self.regret_mode == "expected":
            return np.cumsum(self.v_star - run.policy_values)
        return self.v_star * np.arange(1, len(run.rewards) + 1) - np.cumsum(
            run.rewards
        )

    def iter_rows(self):
        for run in self.sorted_runs():
            cum = np.cumsum(run.rewards)
            regret = self.run_regret(run)
            for idx in range(len(run.rewards)):
                yield (
                    run.algo,
                    run.env,
                    run.seed,
                    idx + 1,
                    float(run.rewards[idx]),
                    float(cum[idx]),
                    float("nan") if regret is None else float(regret[idx]),
                )

    def summary(self):
        """Per algorithm: mean/std of final regret and the mean ratio of
        final regret to quarter-horizon regret across seeds."""
        out = {}
        for run in self.sorted_runs():
            out.setdefault(run.algo, []).append(run)
        summaries = {}
        for algo, runs in out.items():
            finals, ratios = [], []
            for run in runs:
                regret = self.run_regret(run)
                if regret is None:
                    continue
                final = float(regret[-1])
                finals.append(final)
                quarter = float(regret[max(len(regret) // 4, 1) - 1])
                if quarter == 0.0:
                    ratios.append(1.0 if final == 0.0 else float("inf"))
                else:
                    ratios.append(final / quarter)
            if finals:
                summaries[algo] = {
                    "mean_final_regret": float(np.mean(finals)),
                    "std_final_regret": float(np.std(finals)),
                    "mean_quarter_ratio": float(np.mean(ratios)),
                }
            else:
                nan = float("nan")
                summaries[algo] = {
                    "mean_final_regret": nan,
                    "std_final_regret": nan,
                    "mean_quarter_ratio": nan,
                }
        return summaries


def _execute_run(spec, env, cfg, seed, context, value_cache, want_values):
    run_seed = derive_run_seed(cfg.master_seed, spec.label, env.name, seed)
    agent_rng = derive_generator(run_seed, "agent")
    env_rng = SampleRng(run_seed)
    agent = _make_agent(spec, env, cfg.n_episodes, agent_rng, context)
    rewards = np.empty(cfg.n_episodes)
    values = np.empty(cfg.n_episodes) if want_values else None
    for k in range(1, cfg.n_episodes + 1):
        trace = run_episode(agent, env, k, env_rng)
        rewards[k - 1] = trace.total_reward
        if want_values:
            values[k - 1] = _policy_value(env, agent.episode_policy, value_cache)
    violations = getattr(agent, "invariant_violations", [])
    if violations:
        raise AssertionError(
            f"algorithm invariant violated in run ({spec.label}, seed {seed}): "
            f"{violations[0]}"
        )
    return RunResult(
        algo=spec.label,
        env=env.name,
        seed=seed,
        rewards=rewards,
        policy_values=values,
    )


def run_suite(cfg):
    """Execute every (algorithm, seed) run and assemble the results table.

    Regret mode 'auto' reports expected per-episode policy values when the
    oracle machinery can evaluate them, falling back to realized rewards if
    exact evaluation exceeds its size cap.  Oracle size errors for V* itself
    propagate unless regret reporting is off.
    """
    env = cfg.env_model if cfg.env_model is not None else build_env(
        cfg.env_kind, cfg.env_params, cfg.source
    )
    if cfg.verify:
        report = verify_builder(cfg.env_kind, cfg.env_params)
        if report is not None and not report.passed:
            raise VerificationFailure(report.format())
    v_star = None
    if cfg.regret_mode != "off":
        v_star = oracle.optimal_value(env, cap=cfg.oracle_cap)
    mode = cfg.regret_mode
    if mode == "auto":
        mode = "expected"
    try:
        runs = _run_all(cfg, env, want_values=(mode == "expected"))
    except OracleSizeError:
        if cfg.regret_mode != "auto":
            raise
        mode = "realized"
        runs = _run_all(cfg, env, want_values=False)
    return ResultsTable(
        env_name=env.name,
        regret_mode=mode,
        v_star=v_star,
        n_episodes=cfg.n_episodes,
        runs=runs,
    )


def _run_all(cfg, env, want_values):
    runs = []
    for spec in cfg.algos:
        context = None
        if spec.kind == "pors":
            context = PlanningContext.build(
                cfg.candidate_classes[spec.label],
                policy_cap=spec.params["policy-cap"],
            )
        value_cache = {}
        for seed in cfg.seeds:
            runs.append(
                _execute_run(
                    spec, env, cfg, seed, context, value_cache, want_values
                )
            )
    return runs


# -- instance verification ---------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    instance: str
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def format(self):
        lines = [f"instance: {self.instance}"]
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            lines.append(f"{status} {c.name}: {c.detail}")
        lines.append("result: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def _verify_groups(params):
    d = params["d"]
    d_query = params["d-query"]
    group_a, group_b = groups_state_vectors(d, d_query)
    checks = []
    ok, failures = check_groups_same_substate(group_a, group_b)
    detail = (
        f"every cross-group pair of the {len(group_a)}+{len(group_b)} vectors "
        "shares a (position, value) entry"
        if ok
        else "no shared entry for pairs: "
        + "; ".join(f"{a} vs {b}" for a, b in failures[:5])
    )
    checks.append(CheckResult("shared-sub-state", ok, detail))
    ok2, failures2 = check_groups_combination(group_a, group_b, d_query)
    detail2 = (
        f"every size-{d_query} revealed combination of each vector also "
        "appears in the other group"
        if ok2
        else "missing combinations: "
        + "; ".join(f"{v} at positions {pos}" for v, pos in failures2[:5])
    )
    checks.append(CheckResult("combination-cover", ok2, detail2))
    return VerificationReport(f"groups d={d} d-query={d_query}", checks)


def _verify_flat_emission(params):
    m = build_hard_instance_flat_emission(params["epsilon"])
    sigma = min_partial_singular_value(m)
    ok = abs(sigma) <= 1e-9
    return VerificationReport(
        "flat-emission",
        [
            CheckResult(
                "flat-emission-degeneracy",
                ok,
                f"min partial singular value = {sigma:.3g} (identical "
                "emission columns carry no hidden-state information)",
            )
        ],
    )


def _verify_tree(params):
    m = build_hard_instance_tree(
        params["alphabet-size"],
        params["d"],
        params["n-actions"],
        params["epsilon"],
        h0=params["h0"],
        m_star=params["m-star"],
        horizon=params["horizon"],
    )
    eps = params["epsilon"]
    rewarded_steps = sorted(
        int(h) for h in np.flatnonzero(np.any(m.rewards > 0, axis=(1, 2))) + 1
    )
    checks = [
        CheckResult(
            "single-rewarded-step",
            len(rewarded_steps) == 1,
            f"steps with any reward: {rewarded_steps}",
        )
    ]
    h0 = rewarded_steps[0] if rewarded_steps else None
    if h0 is not None:
        layer = m.rewards[h0 - 1]
        starred = np.argwhere(np.abs(layer - (0.5 + eps)) <= 1e-12)
        base_cells = int(np.sum(np.abs(layer - 0.5) <= 1e-12))
        per_state = np.sum(layer > 0, axis=1)
        checks.append(
            CheckResult(
                "single-starred-cell",
                len(starred) == 1,
                f"cells with mean 1/2+epsilon at step {h0}: "
                f"{[tuple(int(x) for x in c) for c in starred]}",
            )
        )
        checks.append(
            CheckResult(
                "one-rewarded-action-per-state",
                bool(np.all(per_state == 1)) and base_cells == m.n_states - 1,
                f"{base_cells} cells at mean 1/2, one rewarded action per "
                f"state across {m.n_states} states",
            )
        )
    return VerificationReport(
        f"tree alphabet-size={params['alphabet-size']} d={params['d']} "
        f"n-actions={params['n-actions']}",
        checks,
    )


_VERIFIERS = {
    "groups": _verify_groups,
    "flat-emission": _verify_flat_emission,
    "tree": _verify_tree,
}

_VERIFY_SCHEMAS = {
    "groups": {"d": (int, REQUIRED), "d-query": (int, 1)},
    "flat-emission": {"epsilon": (float, 0.1)},
    "tree": {
        "alphabet-size": (int, 2),
        "d": (int, 3),
        "n-actions": (int, 2),
        "epsilon": (float, 0.1),
        "h0": (int, None),
        "m-star": (int, None),
        "horizon": (int, None),
    },
}


def verify_instance(name, params=None):
    """Run the structural checks for a named instance family.

    params maps schema keys (as in config [env] sections) to values, given
    either typed or as strings.  Unknown names raise ConfigError.
    """
    if name not in _VERIFIERS:
        raise ConfigError(
            f"unknown instance {name!r}; verifiable: {', '.join(_VERIFIERS)}"
        )
    schema = _VERIFY_SCHEMAS[name]
    resolved = {}
    given = dict(params or {})
    for key, (kind, default) in schema.items():
        if key in given:
            raw = given.pop(key)
            resolved[key] = (
                raw if not isinstance(raw, str) else _parse_typed(
                    raw, kind, key, "<params>"
                )
            )
        elif default is REQUIRED:
            raise ConfigError(f"{name} verification requires {key}=<value>")
        else:
            resolved[key] = default
    if given:
        raise ConfigError(
            f"unknown {name} parameter {next(iter(given))!r}; "
            f"known: {', '.join(schema)}"
        )
    return _VERIFIERS[name](resolved)


def verify_builder(env_kind, env_params):
    """Verification hook used by run_suite's verify toggle; returns None for
    builders without structural checks."""
    if env_kind not in _VERIFIERS:
        return None
    return _VERIFIERS[env_kind](env_params)


# -- CSV -------------------------------------------------------------------------


def _fmt(x):
    return "%.9g" % x


def write_results_csv(table, path):
    """CSV rows sorted by (algo, seed, episode), with the regret mode and
    per-algorithm summary attached as comment lines."""
    lines = [f"# regret_mode={table.regret_mode}"]
    if table.v_star is not None:
        lines.append(f"# v_star={_fmt(table.v_star)}")
    lines.append(CSV_HEADER)
    for algo, env, seed, episode, reward, cum, regret in table.iter_rows():
        lines.append(
            f"{algo},{env},{seed},{episode},{_fmt(reward)},{_fmt(cum)},{_fmt(regret)}"
        )
    for algo, stats in sorted(table.summary().items()):
        lines.append(
            f"# summary algo={algo} "
            f"mean_final_regret={_fmt(stats['mean_final_regret'])} "
            f"std_final_regret={_fmt(stats['std_final_regret'])} "
            f"mean_quarter_ratio={_fmt(stats['mean_quarter_ratio'])}"
        )
    data = "\n".join(lines) + "\n"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(data)
    return path


@dataclass
class CsvData:
    """Parsed results CSV: enough structure to re-plot it."""

    regret_mode: str
    rows: list

    @property
    def env_name(self):
        return self.rows[0][1] if self.rows else ""

    def iter_rows(self):
        return iter(self.rows)


def read_results_csv(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read CSV {path}: {exc}") from exc
    mode = "expected"
    rows = []
    header_seen = False
    for lineno, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("# regret_mode="):
                mode = line.partition("=")[2].strip()
            continue
        if not header_seen:
            if line != CSV_HEADER:
                raise ConfigError(
                    f"{path}:{lineno}: expected header {CSV_HEADER!r}, "
                    f"got {line!r}"
                )
            header_seen = True
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ConfigError(f"{path}:{lineno}: expected 7 columns, got {len(parts)}")
        try:
            rows.append(
                (
                    parts[0],
                    parts[1],
                    int(parts[2]),
                    int(parts[3]),
                    float(parts[4]),
                    float(parts[5]),
                    float(parts[6]),
                )
            )
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: malformed row {line!r}") from None
    if not header_seen:
        raise ConfigError(f"{path}: missing CSV header")
    return CsvData(regret_mode=mode, rows=rows)


# -- SVG -------------------------------------------------------------------------


def _decimate(indices, limit=MAX_PLOT_POINTS):
    if len(indices) <= limit:
        return indices
    keep = np.unique(np.linspace(0, len(indices) - 1, limit).astype(int))
    return [indices[i] for i in keep]


def _tick_values(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n)


def emit_plot_svg(table, path):
    """Self-contained SVG: cumulative regret vs episode, one color per
    algorithm, faint per-seed traces plus a solid mean line."""
    series = {}
    for algo, _env, seed, episode, _r, _c, regret in table.iter_rows():
        series.setdefault(algo, {}).setdefault(seed, []).append((episode, regret))
    if not series:
        raise ConfigError("no rows to plot")
    if all(
        math.isnan(pt[1])
        for by_seed in series.values()
        for pts in by_seed.values()
        for pt in pts
    ):
        raise ConfigError("no regret data to plot (regret reporting was off)")

    width, height = 760, 480
    left, right, top, bottom = 72, 180, 48, 56
    plot_w, plot_h = width - left - right, height - top - bottom
    max_x = max(
        pt[0] for by_seed in series.values() for pts in by_seed.values() for pt in pts
    )
    max_y = max(
        (
            pt[1]
            for by_seed in series.values()
            for pts in by_seed.values()
            for pt in pts
            if not math.isnan(pt[1])
        ),
        default=1.0,
    )
    min_y = min(
        (
            pt[1]
            for by_seed in series.values()
            for pts in by_seed.values()
            for pt in pts
            if not math.isnan(pt[1])
        ),
        default=0.0,
    )
    lo_y = min(0.0, min_y)
    hi_y = max_y if max_y > lo_y else lo_y + 1.0

    def sx(x):
        return left + (x - 1) / max(max_x - 1, 1) * plot_w

    def sy(y):
        return top + (hi_y - y) / (hi_y - lo_y) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left + plot_w / 2:.1f}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">'
        f"{xml_escape(table.env_name)} &#8212; cumulative regret "
        f"({xml_escape(table.regret_mode)})</text>",
    ]
    for yt in _tick_values(lo_y, hi_y):
        y = sy(yt)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            'stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-family="sans-serif" font-size="11">{yt:.4g}</text>'
        )
    for xt in _tick_values(1, max_x):
        x = sx(xt)
        parts.append(
            f'<line x1="{x:.1f}" y1="{top + plot_h}" x2="{x:.1f}" '
            f'y2="{top + plot_h + 5}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x:.1f}" y="{top + plot_h + 20}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="11">{xt:.5g}</text>'
        )
    parts.append(
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" '
        'stroke="#333333" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="#333333" stroke-width="1"/>'
    )
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 14}" '
        'text-anchor="middle" font-family="sans-serif" font-size="13">'
        "episode</text>"
    )
    parts.append(
        f'<text x="20" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13" '
        f'transform="rotate(-90 20 {top + plot_h / 2:.1f})">'
        "cumulative regret</text>"
    )

    def polyline(points, color, opacity, width_px):
        coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in points)
        return (
            f'<polyline fill="none" stroke="{color}" '
            f'stroke-opacity="{opacity}" stroke-width="{width_px}" '
            f'points="{coords}"/>'
        )

    for idx, (algo, by_seed) in enumerate(sorted(series.items())):
        color = SVG_PALETTE[idx % len(SVG_PALETTE)]
        grids = []
        for seed in sorted(by_seed):
            pts = sorted(by_seed[seed])
            pts = [p for p in pts if not math.isnan(p[1])]
            if not pts:
                continue
            grids.append(dict(pts))
            parts.append(polyline(_decimate(pts), color, 0.25, 1))
        episodes = sorted(set().union(*grids)) if grids else []
        mean_pts = [
            (e, float(np.mean([g[e] for g in grids if e in g]))) for e in episodes
        ]
        if mean_pts:
            parts.append(polyline(_decimate(mean_pts), color, 1.0, 2))
        ly = top + 16 + 18 * idx
        lx = left + plot_w + 16
        parts.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 24}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{lx + 30}" y="{ly}" font-family="sans-serif" '
            f'font-size="12">{xml_escape(algo)}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return path
