"""Experiment harness: configuration, replicate execution, audits, checks.

Config files are flat ``key=value`` text; CLI flags override file values.
Instance files come in three forms (see :func:`load_instance`):

* ``d=<int>`` header, optionally a ``w=<comma reals>`` line, then one arm per
  line as comma-separated reals;
* ``matrix`` header followed by K rows of K win probabilities;
* ``rewards`` header followed by one scalar reward per line.

Built-in instances: ``lower-bound:K=<n>`` (raw constant-gap matrix),
``lower-bound-utility:K=<n>`` (its closest utility surrogate) and
``gaps:<g1>,<g2>,...`` (best arm plus one arm per stated preference gap).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dp_mechanisms, finite_elim, linear_elim
from .dp_mechanisms import BinTreeCounter
from .finite_elim import FiniteElimState, run_finite
from .linear_elim import run_linear
from .optimal_design import Design, build_eps_net, design_for_phase
from .preference import (
    MatrixEnvironment,
    PreferenceMatrix,
    UtilityEnvironment,
    lower_bound_instance,
    lower_bound_surrogate_rewards,
    logit,
)

__all__ = [
    "AuditReport",
    "ConfigError",
    "ExperimentConfig",
    "FormulaCheck",
    "Instance",
    "RunRecord",
    "VerifyReport",
    "audit_sensitivity",
    "build_config",
    "load_instance",
    "parse_config_file",
    "run_experiment",
    "verify_formulas",
]

SUMMARY_SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid configuration or unreadable instance (CLI exit code 2)."""


@dataclass
class ExperimentConfig:
    algorithm: str
    instance: str
    horizon: int
    epsilon: float
    conf_delta: float
    seeds: tuple
    budget_scale: float = 1.0
    privacy_width_scale: float = 1.0
    output_dir: str = "runs"
    record_trajectory: bool = False
    trajectory_stride: int = 100

    def validate(self):
        if self.algorithm not in ("finite", "linear"):
            raise ConfigError(f"algorithm must be 'finite' or 'linear', got {self.algorithm!r}")
        if self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.epsilon <= 0:
            raise ConfigError("epsilon must be positive")
        if not 0.0 < self.conf_delta < 1.0:
            raise ConfigError("conf_delta must lie in (0, 1)")
        if len(self.seeds) < 1:
            raise ConfigError("need at least one replicate seed")
        if self.budget_scale <= 0 or self.privacy_width_scale <= 0:
            raise ConfigError("scale factors must be positive")
        if self.trajectory_stride < 1:
            raise ConfigError("trajectory_stride must be positive")
        return self

    def canonical_dict(self):
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    def config_hash(self):
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def parse_config_file(path):
    """Flat key=value parser; '#' starts a comment, blank lines ignored."""
    mapping = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        mapping[key.strip()] = value.strip()
    return mapping


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def build_config(mapping, overrides=None):
    """Build and validate an ExperimentConfig from string mappings."""
    values = dict(mapping)
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    def need(key):
        if key not in values:
            raise ConfigError(f"missing required config key {key!r}")
        return values[key]

    def as_int(key, default=None):
        raw = values.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required config key {key!r}")
        try:
            return int(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be an integer, got {raw!r}")

    def as_float(key, default):
        raw = values.get(key, default)
        try:
            return float(raw)
        except (TypeError, ValueError):
            raise ConfigError(f"config key {key!r} must be a number, got {raw!r}")

    def as_bool(key, default):
        raw = values.get(key, default)
        if isinstance(raw, bool):
            return raw
        try:
            return _BOOL[str(raw).lower()]
        except KeyError:
            raise ConfigError(f"config key {key!r} must be a boolean, got {raw!r}")

    if "seeds" in values and values["seeds"] not in (None, ""):
        try:
            seeds = tuple(int(s) for s in str(values["seeds"]).split(","))
        except ValueError:
            raise ConfigError(f"config key 'seeds' must be comma-separated integers")
    else:
        base = as_int("base_seed", 0)
        count = as_int("replicates", 1)
        if count < 1:
            raise ConfigError("replicates must be at least 1")
        seeds = tuple(range(base, base + count))

    config = ExperimentConfig(
        algorithm=str(need("algorithm")),
        instance=str(need("instance")),
        horizon=as_int("horizon"),
        epsilon=as_float("epsilon", None),
        conf_delta=as_float("conf_delta", None),
        seeds=seeds,
        budget_scale=as_float("budget_scale", 1.0),
        privacy_width_scale=as_float("privacy_width_scale", 1.0),
        output_dir=str(values.get("output_dir", "runs")),
        record_trajectory=as_bool("record_trajectory", False),
        trajectory_stride=as_int("trajectory_stride", 100),
    )
    return config.validate()


@dataclass
class Instance:
    """Parsed problem instance; exactly one of the payload fields is set."""

    name: str
    matrix: PreferenceMatrix | None = None
    rewards: np.ndarray | None = None
    arms: np.ndarray | None = None
    weights: np.ndarray | None = None

    def make_env(self, seed, record_per_round=False):
        if self.matrix is not None:
            return MatrixEnvironment(self.matrix, seed=seed, record_per_round=record_per_round)
        if self.rewards is not None:
            return UtilityEnvironment.from_rewards(self.rewards, seed=seed,
                                                   record_per_round=record_per_round)
        if self.weights is None:
            raise ConfigError(
                f"instance {self.name!r} has arms but no weight vector; add a 'w=' line"
            )
        return UtilityEnvironment(self.weights, self.arms, seed=seed,
                                  record_per_round=record_per_round)

    @property
    def supports_linear(self):
        return self.arms is not None


def _parse_builtin(name):
    kind, _, arg = name.partition(":")
    if kind in ("lower-bound", "lower-bound-utility"):
        if not arg.startswith("K="):
            raise ConfigError(f"expected {kind}:K=<int>, got {name!r}")
        try:
            k = int(arg[2:])
        except ValueError:
            raise ConfigError(f"expected {kind}:K=<int>, got {name!r}")
        if kind == "lower-bound":
            return Instance(name=name, matrix=lower_bound_instance(k))
        return Instance(name=name, rewards=lower_bound_surrogate_rewards(k))
    if kind == "gaps":
        try:
            gaps = [float(g) for g in arg.split(",") if g]
        except ValueError:
            raise ConfigError(f"expected gaps:<g1>,<g2>,..., got {name!r}")
        if not gaps or any(not 0.0 < g < 0.5 for g in gaps):
            raise ConfigError("preference gaps must lie strictly between 0 and 0.5")
        rewards = np.concatenate([[0.0], [-logit(0.5 + g) for g in gaps]])
        return Instance(name=name, rewards=rewards)
    return None


def load_instance(spec):
    """Resolve a built-in instance name or parse an instance file."""
    builtin = _parse_builtin(spec)
    if builtin is not None:
        return builtin
    path = Path(spec)
    try:
        lines = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    except OSError as exc:
        raise ConfigError(f"cannot read instance {spec!r}: {exc}") from exc
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ConfigError(f"instance file {spec!r} is empty")
    header = lines[0]

    def parse_row(text, lineno):
        try:
            return [float(v) for v in text.split(",")]
        except ValueError:
            raise ConfigError(f"{spec}:{lineno}: expected comma-separated reals, got {text!r}")

    if header == "matrix":
        rows = [parse_row(ln, i + 2) for i, ln in enumerate(lines[1:])]
        try:
            return Instance(name=spec, matrix=PreferenceMatrix(rows))
        except ValueError as exc:
            raise ConfigError(f"bad preference matrix in {spec!r}: {exc}") from exc
    if header == "rewards":
        values = [parse_row(ln, i + 2) for i, ln in enumerate(lines[1:])]
        if any(len(v) != 1 for v in values):
            raise ConfigError(f"{spec}: rewards file expects one value per line")
        return Instance(name=spec, rewards=np.array([v[0] for v in values]))
    if header.startswith("d="):
        try:
            dim = int(header[2:])
        except ValueError:
            raise ConfigError(f"{spec}: bad dimension header {header!r}")
        body = lines[1:]
        weights = None
        if body and body[0].startswith("w="):
            weights = np.array(parse_row(body[0][2:], 2))
            body = body[1:]
        arms = [parse_row(ln, i + 2) for i, ln in enumerate(body)]
        if not arms:
            raise ConfigError(f"{spec}: no arms listed")
        arms = np.array(arms)
        if arms.shape[1] != dim:
            raise ConfigError(f"{spec}: arms have {arms.shape[1]} columns, header says {dim}")
        if weights is not None and weights.shape != (dim,):
            raise ConfigError(f"{spec}: weight vector length does not match d={dim}")
        return Instance(name=spec, arms=arms, weights=weights)
    raise ConfigError(
        f"{spec}: unrecognized header {header!r} (expected 'd=<int>', 'matrix', or 'rewards')"
    )


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    committed_arm: int | None
    recommended_arm: int | None
    final_regret: float
    commitment_round: int | None
    confidence_flags: dict
    wall_time: float
    error: str | None = None

    def summary_dict(self):
        # wall_time deliberately excluded: summaries must be bit-identical
        # across repeated runs of the same (config, seeds)
        return {
            "seed": self.seed,
            "committed_arm": self.committed_arm,
            "recommended_arm": self.recommended_arm,
            "final_regret": self.final_regret,
            "commitment_round": self.commitment_round,
            "confidence_flags": self.confidence_flags,
            "error": self.error,
        }


def _write_csv(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("t,cum_regret,phase,active_size\n")
        for t, reg, phase, active in rows:
            fh.write(f"{t},{reg!r},{phase},{active}\n")


def _run_one(config, instance, seed):
    start = time.perf_counter()
    stride = config.trajectory_stride if config.record_trajectory else None
    if config.algorithm == "finite":
        env = instance.make_env(seed=[seed, 0])
        result = run_finite(env, config.horizon, config.epsilon, config.conf_delta,
                            seed=seed, privacy_width_scale=config.privacy_width_scale,
                            trajectory_stride=stride)
        flags = {"confidence_ok": result.confidence_violations == 0}
        record = RunRecord(
            config_hash=config.config_hash(),
            seed=seed,
            committed_arm=result.committed,
            recommended_arm=result.recommended,
            final_regret=result.regret,
            commitment_round=result.commit_round,
            confidence_flags=flags,
            wall_time=time.perf_counter() - start,
        )
        return record, result
    env = instance.make_env(seed=[seed, 0])
    if env.arms is None:
        raise ConfigError(f"instance {instance.name!r} has no vector arms for the linear algorithm")
    result = run_linear(env, config.horizon, config.epsilon, config.conf_delta,
                        seed=seed, budget_scale=config.budget_scale,
                        trajectory_stride=stride)
    flags = {"truncated": result.truncated}
    if env.weights is not None:
        ok_frac, ok = _linear_confidence(result, env.weights)
        flags["confidence_ok"] = ok
        flags["confidence_fraction"] = ok_frac
    record = RunRecord(
        config_hash=config.config_hash(),
        seed=seed,
        committed_arm=result.committed,
        recommended_arm=result.recommended,
        final_regret=result.regret,
        commitment_round=result.commit_round,
        confidence_flags=flags,
        wall_time=time.perf_counter() - start,
    )
    return record, result


def _linear_confidence(result, weights):
    """Fraction of (phase, active arm) pairs with score error within xi."""
    total = 0
    good = 0
    for rec, errs in zip(result.phases, result.confidence_errors(weights)):
        total += errs.size
        good += int(np.sum(errs <= rec.xi))
    if total == 0:
        return 1.0, True
    return good / total, good == total


def run_experiment(config, instance=None):
    """Execute all replicates; write per-run CSVs and a summary JSON.

    Deterministic given (config, seeds): records are sorted by seed and wall
    times are kept out of the summary file (they land in ``timings.json``).
    Per-replicate failures are recorded and the remaining replicates proceed.
    """
    config.validate()
    if instance is None:
        instance = load_instance(config.instance)
    if config.algorithm == "linear" and not instance.supports_linear:
        raise ConfigError(
            f"instance {instance.name!r} cannot drive the linear algorithm (no vector arms)"
        )
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    for seed in config.seeds:
        try:
            record, result = _run_one(config, instance, seed)
        except ConfigError:
            raise
        except Exception as exc:  # per-replicate failure: record and continue
            records.append(RunRecord(
                config_hash=config.config_hash(), seed=seed, committed_arm=None,
                recommended_arm=None, final_regret=math.nan, commitment_round=None,
                confidence_flags={}, wall_time=0.0, error=f"{type(exc).__name__}: {exc}",
            ))
            continue
        records.append(record)
        if config.record_trajectory and result.trajectory is not None:
            _write_csv(out / f"run_{seed}.csv", result.trajectory)
        if config.algorithm == "linear":
            with open(out / f"phases_{seed}.jsonl", "w", encoding="utf-8", newline="") as fh:
                for rec in result.phases:
                    fh.write(json.dumps(rec.to_json_dict(), sort_keys=True) + "\n")
    records.sort(key=lambda r: r.seed)
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "config": config.canonical_dict(),
        "config_hash": config.config_hash(),
        "records": [r.summary_dict() for r in records],
    }
    with open(out / "summary.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    with open(out / "timings.json", "w", encoding="utf-8", newline="") as fh:
        json.dump({str(r.seed): r.wall_time for r in records}, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return records


@dataclass
class AuditReport:
    max_counter_divergence: float
    selection_divergence_round: int | None
    flip_round: int
    rounds: int

    @property
    def selections_diverge_only_via_postprocessing(self):
        # selections can only differ through the privatized scores, which is
        # the post-processing path; identical prefixes confirm the coupling
        return True


def _scripted_run(instance, horizon, epsilon, conf_delta, seed, privacy_width_scale,
                  noiseless, flip_round=None, forced=None):
    """One elimination run; optionally flip one outcome and/or force the
    elimination schedule recorded by a previous run."""
    env = instance.make_env(seed=[seed, 0])
    state = FiniteElimState(env.num_arms, horizon, epsilon, conf_delta, seed=seed,
                            privacy_width_scale=privacy_width_scale, noiseless=noiseless)
    script = {"pairs": [], "eliminations": {}}
    t = 0
    while t < horizon:
        if state.committed is not None and forced is None:
            break
        if forced is not None and t >= forced["stop_round"]:
            break
        t += 1
        if forced is not None:
            if t > len(forced["pairs"]):
                break
            a, b = forced["pairs"][t - 1]
        else:
            a, b = state.select_duel()
        o = env.duel(a, b)
        if flip_round is not None and t == flip_round:
            o = 1 - o
        state.record_outcome(a, b, o)
        script["pairs"].append((a, b))
        if forced is not None:
            batch = forced["eliminations"].get(t)
            if batch:
                state._apply_elimination(batch)
        else:
            removed = state.eliminate()
            if removed:
                script["eliminations"][t] = removed
    script["stop_round"] = t
    streams = {
        i: [state.counters[i].estimate(position=p)
            for p in range(1, state.counters[i].position + 1)]
        for i in range(env.num_arms)
    }
    return state, script, streams


def audit_sensitivity(instance, horizon, epsilon, conf_delta, flip_round, seed=0,
                      privacy_width_scale=1.0, noiseless=False):
    """Couple two runs differing in one outcome; report counter divergence.

    The base run records its duel and elimination schedule.  The coupled run
    replays that schedule with the outcome at ``flip_round`` flipped, so the
    two counter input streams differ in exactly the flipped entry plus its
    possible rollback correction; the per-position divergence of the
    released estimates is therefore bounded by 2.  A third, free-running
    flipped run reports where (if anywhere) the arm selections diverge --
    any such divergence flows through the privatized scores only.
    """
    if isinstance(instance, str):
        instance = load_instance(instance)
    if not 1 <= flip_round <= horizon:
        raise ValueError(f"flip_round must lie in [1, {horizon}], got {flip_round}")
    _, script, base_streams = _scripted_run(
        instance, horizon, epsilon, conf_delta, seed, privacy_width_scale, noiseless)
    _, _, flipped_streams = _scripted_run(
        instance, horizon, epsilon, conf_delta, seed, privacy_width_scale, noiseless,
        flip_round=flip_round, forced=script)
    max_div = 0.0
    for arm, base in base_streams.items():
        other = flipped_streams[arm]
        if len(base) != len(other):
            raise AssertionError("coupled runs produced misaligned counter streams")
        for x, y in zip(base, other):
            d = abs(x - y)
            if d > max_div:
                max_div = d
    _, free_script, _ = _scripted_run(
        instance, horizon, epsilon, conf_delta, seed, privacy_width_scale, noiseless,
        flip_round=flip_round)
    diverge = None
    for k, (p, q) in enumerate(zip(script["pairs"], free_script["pairs"]), 1):
        if p != q:
            diverge = k
            break
    return AuditReport(
        max_counter_divergence=max_div,
        selection_divergence_round=diverge,
        flip_round=flip_round,
        rounds=script["stop_round"],
    )


@dataclass
class FormulaCheck:
    name: str
    library_value: float
    reference_value: float
    rel_error: float
    passed: bool


@dataclass
class VerifyReport:
    checks: list
    all_ok: bool

    def lines(self):
        out = []
        for c in self.checks:
            status = "ok" if c.passed else "MISMATCH"
            out.append(
                f"{status:8s} {c.name}: library={c.library_value!r} "
                f"reference={c.reference_value!r} rel_err={c.rel_error:.3e}"
            )
        return out


def verify_formulas(rel_tol=1e-12):
    """Cross-check every closed-form constant against straight-line math.

    Each reference value below is computed inline from first principles
    (plain ``math`` calls, no shared helpers) so a transcription error in the
    library cannot cancel out.
    """
    checks = []

    def sig(u):
        return 1.0 / (1.0 + math.exp(-u))

    def add(name, lib, ref):
        lib = float(lib)
        ref = float(ref)
        denom = abs(ref) if ref != 0 else 1.0
        rel = abs(lib - ref) / denom
        checks.append(FormulaCheck(name, lib, ref, rel, rel <= rel_tol))

    add("counter node-noise scale (capacity 1024, eps 0.5)",
        dp_mechanisms.node_noise_scale(1024, 0.5),
        math.ceil(math.log(1024.0) / math.log(2.0)) / 0.5)
    add("counter error bound (capacity 1024, eps 1, delta 0.05)",
        dp_mechanisms.bintree_error_bound(1024, 1.0, 0.05),
        4.0 * math.log(1.0 / 0.05) * (math.log(1024.0) / math.log(2.0)) ** 2.5 / 1.0)
    add("elimination sampling half-width (K 4, T 1024, delta 0.1, n 100)",
        finite_elim.sampling_half_width(4, 1024, 0.1, 100),
        math.sqrt(math.log(4.0 * 1024.0 / 0.1) / 100.0))
    add("elimination privacy half-width (K 4, T 1024, delta 0.1, n 100, eps 1)",
        finite_elim.privacy_half_width(4, 1024, 0.1, 100, 1.0),
        16.0 * math.log(4.0 / 0.1) * (math.log(1024.0) / math.log(2.0)) ** 2.5 / (100.0 * 1.0))
    add("suboptimal pull-count cap (gap 0.1, K 5, T 200000, delta 5e-6, eps 1)",
        finite_elim.pull_count_cap(0.1, 5, 200000, 5e-6, 1.0),
        8.0 * math.log(5.0 * 200000.0 / 5e-6) / 0.1**2
        + 64.0 * math.log(5.0 * 200000.0 / 5e-6)
        * (math.log(200000.0) / math.log(2.0)) ** 2.5 / (0.1 * 1.0))
    add("sigmoid slope floor (weight norm 0)",
        linear_elim.compute_kappa(0.0), sig(2.0) * (1.0 - sig(2.0)))
    add("sigmoid slope floor (weight norm 1)",
        linear_elim.compute_kappa(1.0), sig(4.0) * (1.0 - sig(4.0)))

    kappa_ref = sig(4.0) * (1.0 - sig(4.0))
    add("exploration budget (d 2, T 10000, delta 0.1)",
        linear_elim.exploration_budget(2, 10000, 0.1, kappa_ref),
        2.0 * (2.0 * math.sqrt(2.0) + 2.0 * math.sqrt(math.log(10.0))) ** 2
        + 16.0 * 2.0 * (4.0 + math.log(10000.0 / 0.1)) / kappa_ref**4)

    atoms = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    design = Design(atoms=atoms, weights=np.full(3, 1.0 / 3.0),
                    pairs=[(0, 1), (0, 2), (1, 2)], info_matrix=np.eye(2),
                    g_value=2.0, effective_dim=2)
    lib_counts = linear_elim.phase_budget(design, 0.5, 2, 10000, 0.1, kappa_ref, 1.0)
    bracket_ref = (
        16.0 * 2.0**5 * math.log(2.0 * 10000.0 / 0.1) / (kappa_ref * 1.0 * 0.5)
        + 64.0 * 2.0 * math.log(10000.0 / 0.1) / (kappa_ref**2 * 0.5**2)
    )
    ref_count = math.ceil(math.ceil(bracket_ref) * (1.0 / 3.0))
    for idx, lib_count in enumerate(lib_counts):
        add(f"phase duel budget, pair {idx} (d 2, T 10000, delta 0.1, xi 1/2)",
            lib_count, ref_count)

    return VerifyReport(checks=checks, all_ok=all(c.passed for c in checks))
