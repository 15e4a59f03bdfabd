"""Experiment configuration: YAML loading, dotted-key overrides and validation."""

import copy
import math
from dataclasses import dataclass

import yaml

from .channel import PathLossParams
from .errors import ConfigError
from .gp import TrainConfig

SCHEMA_VERSION = 1

DEFAULTS = {
    "seed": 1,
    "threads": 1,
    "output": {"dir": "out", "timing": False},
    "scenario": {"m": [30], "side": 500.0, "redraw_antennas": False},
    "channel": {
        "rho_dbm": 21.0,
        "d0": 10.0,
        "l0_db": -47.5,
        "eta_segments": [[10.0, 0.0, False], [45.0, 2.0, True], [None, 6.7, False]],
        "mode": "literal",
        "sigma_sh_sq": [1.0, 2.0, 3.0, 4.0, 5.0],
    },
    "sizes": {"n_train": 100, "n_test": 25, "n_pca": 200, "trials": 20},
    "gp": {
        "restarts": 5,
        "max_iters": 500,
        "grad_tol": 1e-5,
        "jitter_rel": 1e-6,
        "jitter_max_rel": 1e-2,
        "center_targets": False,
    },
    "subspace": {"center": False, "energy_threshold": 0.05},
    "l_policy": {"kind": "rmse_oracle", "l": None, "threshold": 0.05, "candidates": None},
    "l_sweep": {"sigma_sh_sq": None},
}

PAPER_SCALE = {
    "scenario.m": [30, 60],
    "sizes.n_train": 400,
    "sizes.n_pca": 1000,
    "sizes.trials": 200,
}


def _merge(base, update, path=""):
    for key, val in update.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(where, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(where, "expected a mapping")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def set_path(doc, dotted, value):
    """Assign ``value`` at a dotted key path such as ``sizes.trials``."""
    parts = dotted.split(".")
    node = doc
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError(".".join(parts[: i + 1]), "unknown section")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(dotted, "unknown key")
    node[parts[-1]] = value


def get_path(doc, dotted):
    node = doc
    for part in dotted.split("."):
        node = node[part]
    return node


def parse_override(text):
    """Parse ``key.path=value`` with a YAML-typed value."""
    if "=" not in text:
        raise ConfigError(text, "override must look like key.path=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def _int(doc, key, lo=1):
    v = get_path(doc, key)
    if isinstance(v, bool) or not isinstance(v, int) or v < lo:
        raise ConfigError(key, f"expected an integer >= {lo}, got {v!r}")
    return v


def _num(doc, key, positive=False, allow_none=False):
    v = get_path(doc, key)
    if v is None and allow_none:
        return v
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(key, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        raise ConfigError(key, f"must be positive, got {v!r}")
    return float(v)


def _bool(doc, key):
    v = get_path(doc, key)
    if not isinstance(v, bool):
        raise ConfigError(key, f"expected true/false, got {v!r}")
    return v


def _num_list(doc, key, allow_none=False, nonneg=True):
    v = get_path(doc, key)
    if v is None and allow_none:
        return None
    if not isinstance(v, list) or not v:
        raise ConfigError(key, "expected a non-empty list")
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
            raise ConfigError(f"{key}[{i}]", f"expected a finite number, got {item!r}")
        if nonneg and item < 0:
            raise ConfigError(f"{key}[{i}]", "must be non-negative")
    return [float(x) for x in v]


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved experiment settings.

    ``raw`` keeps the resolved nested document for echoing into metadata.
    """

    raw: dict
    seed: int
    threads: int
    out_dir: str
    record_timing: bool
    m_values: tuple
    side: float
    redraw_antennas: bool
    path_loss: PathLossParams
    noise_grid: tuple
    n_train: int
    n_test: int
    n_pca: int
    trials: int
    train: TrainConfig
    center_subspace: bool
    energy_threshold: float
    l_policy: str
    l_fixed: int
    l_threshold: float
    l_candidates: tuple
    l_sweep_noise: tuple

    @classmethod
    def from_dict(cls, doc):
        resolved = copy.deepcopy(DEFAULTS)
        _merge(resolved, doc or {})
        return cls._validate(resolved)

    @classmethod
    def _validate(cls, d):
        seed = get_path(d, "seed")
        if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
            raise ConfigError("seed", f"expected an unsigned 64-bit integer, got {seed!r}")
        threads = _int(d, "threads")
        out_dir = get_path(d, "output.dir")
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigError("output.dir", "expected a non-empty path")

        m_vals = get_path(d, "scenario.m")
        if isinstance(m_vals, int) and not isinstance(m_vals, bool):
            m_vals = [m_vals]
            d["scenario"]["m"] = m_vals
        if not isinstance(m_vals, list) or not m_vals:
            raise ConfigError("scenario.m", "expected a non-empty list of antenna counts")
        for i, m in enumerate(m_vals):
            if isinstance(m, bool) or not isinstance(m, int) or m < 1:
                raise ConfigError(f"scenario.m[{i}]", f"expected an integer >= 1, got {m!r}")
        side = _num(d, "scenario.side", positive=True)

        ch = d["channel"]
        try:
            path_loss = PathLossParams.from_dict({
                "rho_dbm": _num(d, "channel.rho_dbm"),
                "d0": _num(d, "channel.d0", positive=True),
                "l0_db": _num(d, "channel.l0_db"),
                "eta_segments": ch["eta_segments"],
                "mode": ch["mode"],
            })
        except (TypeError, ValueError) as exc:
            raise ConfigError("channel.eta_segments", str(exc)) from exc
        noise = _num_list(d, "channel.sigma_sh_sq")

        sizes = {k: _int(d, f"sizes.{k}") for k in ("n_train", "n_test", "n_pca", "trials")}
        if sizes["n_train"] < 2:
            raise ConfigError("sizes.n_train", "training needs at least two locations")

        try:
            train = TrainConfig(
                restarts=_int(d, "gp.restarts"),
                max_iters=_int(d, "gp.max_iters"),
                grad_tol=_num(d, "gp.grad_tol", positive=True),
                jitter_rel=_num(d, "gp.jitter_rel"),
                jitter_max_rel=_num(d, "gp.jitter_max_rel", positive=True),
                center_targets=_bool(d, "gp.center_targets"),
                seed=seed,
            )
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("gp.jitter_rel", str(exc)) from exc

        threshold = _num(d, "subspace.energy_threshold")
        if not 0 < threshold < 1:
            raise ConfigError("subspace.energy_threshold", "must lie in (0, 1)")

        kind = get_path(d, "l_policy.kind")
        if kind not in ("fixed", "energy", "rmse_oracle"):
            raise ConfigError("l_policy.kind", f"expected fixed, energy or rmse_oracle, got {kind!r}")
        l_fixed = get_path(d, "l_policy.l")
        max_l = min(min(m_vals), sizes["n_train"])
        if kind == "fixed":
            l_fixed = _int(d, "l_policy.l")
            if l_fixed > max_l:
                raise ConfigError("l_policy.l", f"must not exceed min(n_train, M) = {max_l}")
        l_thr = _num(d, "l_policy.threshold")
        if kind == "energy" and not 0 < l_thr < 1:
            raise ConfigError("l_policy.threshold", "must lie in (0, 1)")
        cands = get_path(d, "l_policy.candidates")
        if cands is not None:
            if not isinstance(cands, list) or not cands:
                raise ConfigError("l_policy.candidates", "expected a non-empty list or null")
            for i, c in enumerate(cands):
                if isinstance(c, bool) or not isinstance(c, int) or not 1 <= c <= max_l:
                    raise ConfigError(f"l_policy.candidates[{i}]",
                                      f"expected an integer in [1, {max_l}], got {c!r}")
            cands = tuple(sorted(set(cands)))
        sweep_noise = _num_list(d, "l_sweep.sigma_sh_sq", allow_none=True)

        return cls(
            raw=d, seed=seed, threads=threads, out_dir=out_dir,
            record_timing=_bool(d, "output.timing"),
            m_values=tuple(m_vals), side=side,
            redraw_antennas=_bool(d, "scenario.redraw_antennas"),
            path_loss=path_loss, noise_grid=tuple(noise),
            train=train, center_subspace=_bool(d, "subspace.center"),
            energy_threshold=threshold, l_policy=kind, l_fixed=l_fixed,
            l_threshold=l_thr, l_candidates=cands,
            l_sweep_noise=tuple(sweep_noise) if sweep_noise else tuple(noise),
            **sizes,
        )


def load_config(path=None, overrides=(), paper_scale=False):
    """Read a YAML config, apply paper-scale presets and ``key=value`` overrides, validate.

    Override order: file, then ``--paper-scale`` presets, then explicit overrides.
    """
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            try:
                user = yaml.safe_load(fh) or {}
            except yaml.YAMLError as exc:
                raise ConfigError(str(path), f"not valid YAML: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigError(str(path), "top level must be a mapping")
        _merge(doc, user)
    if paper_scale:
        for key, val in PAPER_SCALE.items():
            set_path(doc, key, copy.deepcopy(val))
    for key, val in overrides:
        set_path(doc, key, val)
    return ExperimentConfig._validate(doc)
