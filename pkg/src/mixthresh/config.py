"""Experiment configuration files (YAML) and builders.

Every rejection raises :class:`ConfigError` carrying the dotted path of the
offending field, e.g. ``penalty.groups[1].exponent``.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .model import PenaltySpec
from .operators import (
    LinearOp,
    conv1d_op,
    diag_op,
    haar_synthesis,
    identity_op,
    matrix_op,
    multiframe_op,
    sum_space_op,
)
from .shrinkage import PenaltyTerm
from .solver import StopRule

__all__ = ["ConfigError", "load_config", "bundled_configs", "build_operator", "signal_operator",
           "build_penalty", "build_terms", "build_stop", "build_signal", "add_noise"]

OPERATOR_KINDS = ("matrix", "diag", "identity", "conv1d", "haar-synthesis", "multiframe", "sum-space")


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


def bundled_configs() -> list[str]:
    root = resources.files("mixthresh") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_config(path_or_name: str | Path) -> dict:
    """Read a YAML config from a path, or a bundled config by name."""
    path = Path(path_or_name)
    if path.exists():
        text = path.read_text(encoding="utf-8")
    else:
        name = str(path_or_name)
        if name not in bundled_configs():
            raise ConfigError("", f"no config file {str(path)!r} and no bundled config of that name")
        text = (resources.files("mixthresh") / "configs" / f"{name}.yaml").read_text(encoding="utf-8")
    try:
        cfg = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}" if mark else "unknown position"
        raise ConfigError("", f"YAML parse error at {where}: {getattr(exc, 'problem', exc)}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("", "config must be a mapping at top level")
    return cfg


# -- field helpers -----------------------------------------------------------

def _get(d: dict, key: str, path: str, default: Any = ..., kind=None):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    val = d[key]
    if kind is not None and val is not None:
        try:
            val = kind(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}.{key}" if path else key, f"cannot interpret {val!r}") from None
    return val


def _vector(val, path: str, n: int | None = None) -> np.ndarray:
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of numbers") from None
    if arr.ndim != 1 or (n is not None and arr.size != n):
        want = f" of length {n}" if n is not None else ""
        raise ConfigError(path, f"expected a flat list{want}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(path, "entries must be finite")
    return arr


def _positive(val, path: str) -> float:
    try:
        v = float(val)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {val!r}") from None
    if not (np.isfinite(v) and v > 0):
        raise ConfigError(path, f"must be positive, got {val!r}")
    return v


def _exponent(val, path: str) -> float:
    try:
        p = float(val)
    except (TypeError, ValueError):
        raise ConfigError(path, f"expected a number, got {val!r}") from None
    if not 1.0 <= p <= 2.0:
        raise ConfigError(path, f"exponent must lie in [1, 2], got {val!r}")
    return p


# -- builders ----------------------------------------------------------------

def build_operator(spec: dict, path: str = "operator") -> LinearOp:
    kind = _get(spec, "kind", path, kind=str)
    try:
        if kind == "matrix":
            entries = np.array(_get(spec, "entries", path), dtype=float)
            if entries.ndim != 2 or entries.size == 0:
                raise ConfigError(f"{path}.entries", "expected a non-empty list of equal-length rows")
            return matrix_op(entries)
        if kind == "diag":
            return diag_op(_vector(_get(spec, "diagonal", path), f"{path}.diagonal"))
        if kind == "identity":
            return identity_op(_get(spec, "n", path, kind=int))
        if kind == "conv1d":
            n = _get(spec, "n", path, kind=int)
            return conv1d_op(_vector(_get(spec, "kernel", path), f"{path}.kernel"), n)
        if kind == "haar-synthesis":
            return haar_synthesis(_get(spec, "n", path, kind=int))
        if kind == "multiframe":
            A = build_operator(_get(spec, "A", path), f"{path}.A")
            frames = _get(spec, "frames", path)
            if not isinstance(frames, list) or not frames:
                raise ConfigError(f"{path}.frames", "expected a non-empty list of operator specs")
            return multiframe_op(A, [build_operator(f, f"{path}.frames[{i}]") for i, f in enumerate(frames)])
        if kind == "sum-space":
            return sum_space_op(build_operator(_get(spec, "base", path), f"{path}.base"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(f"{path}.kind", f"unknown operator kind {kind!r}; expected one of {', '.join(OPERATOR_KINDS)}")


def signal_operator(spec: dict, op: LinearOp, path: str = "operator") -> LinearOp:
    """Map from the physical signal to the data.

    For ``multiframe`` this is ``A``, for ``sum-space`` the base operator, and
    the operator itself otherwise.
    """
    kind = spec.get("kind")
    if kind == "multiframe":
        return build_operator(spec["A"], f"{path}.A")
    if kind == "sum-space":
        return build_operator(spec["base"], f"{path}.base")
    return op


def _indices(val, n: int, path: str) -> np.ndarray:
    if val == "all":
        return np.arange(n)
    if isinstance(val, str):
        parts = val.split(":")
        try:
            lo, hi = (int(parts[0] or 0), int(parts[1] or n)) if len(parts) == 2 else (None, None)
        except ValueError:
            lo = hi = None
        if lo is None or not 0 <= lo < hi <= n:
            raise ConfigError(path, f"expected 'all', 'lo:hi' within [0, {n}] or a list, got {val!r}")
        return np.arange(lo, hi)
    try:
        idx = np.array(val, dtype=int).reshape(-1)
    except (TypeError, ValueError):
        raise ConfigError(path, f"cannot interpret indices {val!r}") from None
    if idx.size == 0 or np.any(idx < 0) or np.any(idx >= n):
        raise ConfigError(path, f"indices must be non-empty and lie in [0, {n})")
    return idx


def _weights(val, count: int, path: str) -> np.ndarray:
    if isinstance(val, list):
        w = _vector(val, path, count)
        if np.any(w <= 0):
            raise ConfigError(path, "weights must be positive")
        return w
    return np.full(count, _positive(val, path))


def build_penalty(spec: dict, n: int, path: str = "penalty") -> PenaltySpec:
    mode = _get(spec, "mode", path, default="partitioned", kind=str)
    if mode == "partitioned":
        groups = _get(spec, "groups", path)
        if not isinstance(groups, list) or not groups:
            raise ConfigError(f"{path}.groups", "expected a non-empty list")
        labels = -np.ones(n, dtype=int)
        weights = np.zeros(n)
        exps, mults = [], []
        for i, g in enumerate(groups):
            gp = f"{path}.groups[{i}]"
            idx = _indices(_get(g, "indices", gp, default="all"), n, f"{gp}.indices")
            if np.any(labels[idx] >= 0):
                raise ConfigError(f"{gp}.indices", "overlaps an earlier group")
            labels[idx] = i
            weights[idx] = _weights(_get(g, "weight", gp, default=1.0), idx.size, f"{gp}.weight")
            exps.append(_exponent(_get(g, "exponent", gp), f"{gp}.exponent"))
            mults.append(_positive(_get(g, "multiplier", gp, default=1.0), f"{gp}.multiplier"))
        if np.any(labels < 0):
            missing = np.nonzero(labels < 0)[0]
            raise ConfigError(f"{path}.groups", f"indices {missing[:5].tolist()} are not covered by any group")
        return PenaltySpec.partitioned(labels, weights, exps, mults)
    if mode == "stacked":
        terms = _get(spec, "terms", path)
        if not isinstance(terms, list) or not terms:
            raise ConfigError(f"{path}.terms", "expected a non-empty list")
        W, exps, mults = [], [], []
        for i, t in enumerate(terms):
            tp = f"{path}.terms[{i}]"
            W.append(_weights(_get(t, "weight", tp, default=1.0), n, f"{tp}.weight"))
            exps.append(_exponent(_get(t, "exponent", tp), f"{tp}.exponent"))
            mults.append(_positive(_get(t, "multiplier", tp, default=1.0), f"{tp}.multiplier"))
        return PenaltySpec.stacked(np.array(W), exps, mults)
    raise ConfigError(f"{path}.mode", f"expected 'partitioned' or 'stacked', got {mode!r}")


def build_terms(val, path: str) -> list[PenaltyTerm]:
    if not isinstance(val, list) or not val:
        raise ConfigError(path, "expected a non-empty list of {weight, exponent}")
    return [PenaltyTerm(_positive(_get(t, "weight", f"{path}[{i}]"), f"{path}[{i}].weight"),
                        _exponent(_get(t, "exponent", f"{path}[{i}]"), f"{path}[{i}].exponent"))
            for i, t in enumerate(val)]


def build_stop(spec: dict | None, path: str = "solver") -> StopRule:
    spec = spec or {}
    max_iters = _get(spec, "max_iters", path, default=100_000, kind=int)
    step_tol = _get(spec, "step_tol", path, default=1e-10, kind=float)
    every = _get(spec, "record_every", path, default=1, kind=int)
    try:
        return StopRule(max_iters, step_tol, every)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def build_signal(spec: dict, n: int, seed: int, path: str = "signal") -> dict:
    """Return ``{"signal", "spikes", "smooth"}`` arrays of length ``n``.

    ``generator: spikes+smooth`` draws ``spikes`` random positions with
    amplitudes of magnitude ``spike_amplitude`` and adds a sum of two
    low-frequency cosines scaled by ``smooth_amplitude``.  ``generator: blocks``
    draws a piecewise-constant signal with ``jumps`` random breakpoints.
    """
    if "values" in spec:
        x = _vector(spec["values"], f"{path}.values", n)
        return {"signal": x, "spikes": x.copy(), "smooth": np.zeros(n)}
    gen = _get(spec, "generator", path, kind=str)
    if gen == "blocks":
        jumps = _get(spec, "jumps", path, default=4, kind=int)
        if not 0 <= jumps < n:
            raise ConfigError(f"{path}.jumps", f"must lie in [0, {n})")
        amp = _get(spec, "amplitude", path, default=1.0, kind=float)
        rng = np.random.default_rng([int(seed), 0])
        cuts = np.sort(rng.choice(np.arange(1, n), size=jumps, replace=False))
        levels = amp * rng.uniform(-1.0, 1.0, size=jumps + 1)
        x = np.repeat(levels, np.diff(np.concatenate([[0], cuts, [n]])))
        return {"signal": x, "spikes": np.zeros(n), "smooth": x.copy()}
    if gen != "spikes+smooth":
        raise ConfigError(f"{path}.generator",
                          f"unknown generator {gen!r}; expected 'spikes+smooth' or 'blocks'")
    k = _get(spec, "spikes", path, default=4, kind=int)
    if not 0 <= k <= n:
        raise ConfigError(f"{path}.spikes", f"must lie in [0, {n}]")
    amp = _get(spec, "spike_amplitude", path, default=1.0, kind=float)
    smooth_amp = _get(spec, "smooth_amplitude", path, default=0.0, kind=float)
    rng = np.random.default_rng([int(seed), 0])
    spikes = np.zeros(n)
    pos = rng.choice(n, size=k, replace=False)
    spikes[pos] = amp * rng.choice([-1.0, 1.0], size=k) * rng.uniform(0.5, 1.0, size=k)
    t = np.arange(n) / n
    phase = rng.uniform(0, 2 * np.pi, size=2)
    smooth = smooth_amp * (np.cos(2 * np.pi * t + phase[0]) + 0.5 * np.cos(4 * np.pi * t + phase[1]))
    return {"signal": spikes + smooth, "spikes": spikes, "smooth": smooth}


def add_noise(clean: np.ndarray, spec: dict | None, seed: int, path: str = "noise") -> tuple[np.ndarray, float]:
    """Add Gaussian noise rescaled to ``noise.norm`` (0 when absent)."""
    if not spec:
        return clean.copy(), 0.0
    norm = _get(spec, "norm", path, default=0.0, kind=float)
    if norm < 0:
        raise ConfigError(f"{path}.norm", "must be nonnegative")
    if norm == 0:
        return clean.copy(), 0.0
    e = np.random.default_rng([int(seed), 1]).standard_normal(clean.size)
    e *= norm / np.linalg.norm(e)
    return clean + e, float(np.linalg.norm(e))
