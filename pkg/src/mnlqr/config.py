"""Problem descriptions as validated JSON files.

One structured file per experiment instead of dozens of flags: matrices
diff cleanly, and a file doubles as a shareable fixture.  Every
validation problem found is collected and reported in a single error
with field paths, so a bad config is fixed in one edit cycle, not one
per run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .datagen import ExplorationSignal, RolloutConfig
from .errors import ConfigError, MnlqrError
from .model_pi import CostWeights
from .stability import SystemModel

_ROLLOUT_KEYS = {"t0", "q", "interval_len", "sde_step", "paths", "seed"}


@dataclass(frozen=True)
class ProblemConfig:
    """Everything a solver run needs, cross-validated."""

    system: SystemModel | None
    cost: CostWeights
    K0: np.ndarray
    exploration: ExplorationSignal
    rollout: RolloutConfig
    eps: float | None  # None means "use the mode default"
    max_iter: int

    @property
    def n(self) -> int:
        return self.cost.Q.shape[0]

    @property
    def m(self) -> int:
        return self.cost.R.shape[0]


def _matrix(raw, path: str, problems: list[str]) -> np.ndarray | None:
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError):
        problems.append(f"{path}: not a numeric array")
        return None
    if arr.ndim != 2 or arr.size == 0:
        problems.append(f"{path}: expected a non-empty 2-d array, got shape {arr.shape}")
        return None
    if not np.all(np.isfinite(arr)):
        problems.append(f"{path}: contains non-finite entries")
        return None
    return arr


def _field(raw: dict, key: str, problems: list[str], required: bool = True):
    if key not in raw:
        if required:
            problems.append(f"{key}: missing")
        return None
    return raw[key]


def parse_config(raw: dict) -> ProblemConfig:
    """Validate a parsed JSON document into a ProblemConfig.

    Collects every problem it can find and raises one ConfigError
    listing all of them with field paths.
    """
    if not isinstance(raw, dict):
        raise ConfigError("top level: expected a JSON object")
    problems: list[str] = []

    system = None
    sys_raw = raw.get("system")
    if sys_raw is not None:
        if not isinstance(sys_raw, dict):
            problems.append("system: expected an object with A, B, C, D or null")
        else:
            mats = {}
            for name in ("A", "B", "C", "D"):
                val = _field(sys_raw, name, problems)
                if val is not None:
                    mats[name] = _matrix(val, f"system.{name}", problems)
            if len(mats) == 4 and all(v is not None for v in mats.values()):
                try:
                    system = SystemModel(**mats)
                except (MnlqrError, ValueError) as err:
                    problems.append(f"system: {err}")

    cost = None
    cost_raw = _field(raw, "cost", problems)
    if isinstance(cost_raw, dict):
        Q = _matrix(_field(cost_raw, "Q", problems), "cost.Q", problems)
        R = _matrix(_field(cost_raw, "R", problems), "cost.R", problems)
        if Q is not None and R is not None:
            try:
                cost = CostWeights(Q=Q, R=R)
            except (MnlqrError, ValueError) as err:
                problems.append(f"cost: {err}")
    elif cost_raw is not None:
        problems.append("cost: expected an object with Q and R")

    K0 = None
    K0_raw = _field(raw, "K0", problems)
    if K0_raw is not None:
        K0 = _matrix(K0_raw, "K0", problems)

    x0 = None
    x0_raw = _field(raw, "x0", problems)
    if x0_raw is not None:
        x0 = _matrix(x0_raw, "x0", problems)

    exploration = None
    exp_raw = _field(raw, "exploration", problems)
    if isinstance(exp_raw, dict):
        parts = {}
        for name in ("amplitudes", "frequencies", "phases"):
            val = _field(exp_raw, name, problems)
            if val is not None:
                parts[name] = _matrix(val, f"exploration.{name}", problems)
        if len(parts) == 3 and all(v is not None for v in parts.values()):
            try:
                exploration = ExplorationSignal(**parts)
            except (MnlqrError, ValueError) as err:
                problems.append(f"exploration: {err}")
    elif exp_raw is not None:
        problems.append(
            "exploration: expected an object with amplitudes, frequencies, phases"
        )

    rollout = None
    roll_raw = _field(raw, "rollout", problems)
    if isinstance(roll_raw, dict):
        unknown = set(roll_raw) - _ROLLOUT_KEYS
        if unknown:
            problems.append(f"rollout: unknown keys {sorted(unknown)}")
        elif x0 is not None:
            try:
                rollout = RolloutConfig(x0_list=x0, **roll_raw)
            except (MnlqrError, ValueError, TypeError) as err:
                problems.append(f"rollout: {err}")
    elif roll_raw is not None:
        problems.append("rollout: expected an object")

    eps = None
    max_iter = 200
    stop_raw = raw.get("stop")
    if stop_raw is not None:
        if not isinstance(stop_raw, dict):
            problems.append("stop: expected an object with eps and/or max_iter")
        else:
            if set(stop_raw) - {"eps", "max_iter"}:
                problems.append(
                    f"stop: unknown keys {sorted(set(stop_raw) - {'eps', 'max_iter'})}"
                )
            if stop_raw.get("eps") is not None:
                try:
                    eps = float(stop_raw["eps"])
                    if not (eps > 0 and np.isfinite(eps)):
                        problems.append("stop.eps: must be a positive finite number")
                except (TypeError, ValueError):
                    problems.append("stop.eps: not a number")
            if stop_raw.get("max_iter") is not None:
                try:
                    max_iter = int(stop_raw["max_iter"])
                    if max_iter < 1:
                        problems.append("stop.max_iter: must be >= 1")
                except (TypeError, ValueError):
                    problems.append("stop.max_iter: not an integer")

    # cross-dimension checks, only meaningful once the pieces exist
    if cost is not None:
        n, m = cost.Q.shape[0], cost.R.shape[0]
        if system is not None and (system.n, system.m) != (n, m):
            problems.append(
                f"cost: weights sized ({n}, {m}) but system is "
                f"({system.n}, {system.m})"
            )
        if K0 is not None and K0.shape != (m, n):
            problems.append(f"K0: expected shape ({m}, {n}), got {K0.shape}")
        if x0 is not None and x0.shape[1] != n:
            problems.append(
                f"x0: initial states have dimension {x0.shape[1]}, expected {n}"
            )
        if exploration is not None and exploration.n_inputs != m:
            problems.append(
                f"exploration: {exploration.n_inputs} channels for {m} inputs"
            )

    if problems:
        raise ConfigError(problems)
    return ProblemConfig(
        system=system,
        cost=cost,
        K0=K0,
        exploration=exploration,
        rollout=rollout,
        eps=eps,
        max_iter=max_iter,
    )


def load_config(path) -> tuple[ProblemConfig, dict]:
    """Read and validate a config file; returns (config, raw document)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError(f"{path}: {err.strerror or err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON ({err})") from err
    return parse_config(raw), raw


def with_seed(config: ProblemConfig, seed: int) -> ProblemConfig:
    """Copy of the config with the rollout seed replaced."""
    r = config.rollout
    rollout = RolloutConfig(
        x0_list=r.x0_list,
        t0=r.t0,
        q=r.q,
        interval_len=r.interval_len,
        sde_step=r.sde_step,
        paths=r.paths,
        seed=seed,
    )
    return ProblemConfig(
        system=config.system,
        cost=config.cost,
        K0=config.K0,
        exploration=config.exploration,
        rollout=rollout,
        eps=config.eps,
        max_iter=config.max_iter,
    )
