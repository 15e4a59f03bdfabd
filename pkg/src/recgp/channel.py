"""Path-loss, shadowing and small-scale fading models for uplink RSS.

All stored RSS is dB-scale (dBm). Linear-scale powers only appear inside
:func:`faded_rss_linear` and :func:`average_small_scale`.
"""

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import DataError, DomainError, ParameterError
from .scenario import distance_matrix

SCHEMA_VERSION = 1
KINDS = ("noise_free", "shadowed", "faded", "reconstructed")


@dataclass(frozen=True)
class PathLossParams:
    """Urban-micro path-loss parameters.

    ``eta_segments`` is an ordered tuple of ``(upper_distance, eta,
    upper_inclusive)``; the last segment must be unbounded. The defaults give
    eta = 0 below 10 m, 2 on [10, 45] m and 6.7 beyond.

    ``mode`` is ``"literal"`` (one shared intercept, discontinuous at segment
    boundaries) or ``"continuous"`` (intercepts re-anchored at each boundary).
    """

    rho_dbm: float = 21.0
    d0: float = 10.0
    l0_db: float = -47.5
    eta_segments: tuple = ((10.0, 0.0, False), (45.0, 2.0, True), (math.inf, 6.7, False))
    mode: str = "literal"

    def __post_init__(self):
        segs = tuple((float(u), float(e), bool(inc)) for u, e, inc in self.eta_segments)
        object.__setattr__(self, "eta_segments", segs)
        if not self.d0 > 0:
            raise ParameterError(f"d0 must be positive, got {self.d0}")
        if not segs or not math.isinf(segs[-1][0]):
            raise ParameterError("last eta segment must be unbounded")
        uppers = [u for u, _, _ in segs]
        if any(b <= a for a, b in zip(uppers, uppers[1:])):
            raise ParameterError("eta segment boundaries must be strictly increasing")
        if any(e < 0 for _, e, _ in segs):
            raise ParameterError("path-loss exponents must be non-negative")
        if self.mode not in ("literal", "continuous"):
            raise ParameterError(f"unknown path-loss mode {self.mode!r}")

    def to_dict(self):
        return {"rho_dbm": self.rho_dbm, "d0": self.d0, "l0_db": self.l0_db,
                "eta_segments": [[None if math.isinf(u) else u, e, inc]
                                 for u, e, inc in self.eta_segments],
                "mode": self.mode}

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        if "eta_segments" in doc:
            doc["eta_segments"] = tuple(
                (math.inf if u is None else u, e, inc) for u, e, inc in doc["eta_segments"])
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class RssMatrix:
    """N x M matrix of dB-scale RSS; row n is a user location, column m an antenna."""

    values: np.ndarray
    kind: str = "noise_free"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2:
            raise DataError(f"RSS matrix must be 2-D, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DataError("RSS matrix contains non-finite entries")
        if self.kind not in KINDS:
            raise DataError(f"unknown RSS kind {self.kind!r}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, comment=None):
        m = self.values.shape[1]
        buf = io.StringIO()
        if comment:
            buf.write(f"# {comment}\n")
        buf.write(",".join(f"antenna_{j}" for j in range(m)) + "\n")
        for row in self.values:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text, kind="shadowed"):
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
        if not lines:
            raise DataError("empty RSS CSV")
        header = lines[0].split(",")
        if any(h.strip() != f"antenna_{j}" for j, h in enumerate(header)):
            raise DataError("RSS CSV header must be antenna_0..antenna_{M-1}")
        try:
            rows = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
        except ValueError as exc:
            raise DataError(f"malformed RSS CSV: {exc}") from exc
        if not rows or any(len(r) != len(header) for r in rows):
            raise DataError("RSS CSV rows must match the header width")
        return cls(np.array(rows), kind=kind)

    def to_json(self):
        n, m = self.values.shape
        return json.dumps({"schema_version": SCHEMA_VERSION, "kind": self.kind,
                           "n": n, "m": m, "params": self.meta,
                           "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            vals = np.asarray(doc["values"], dtype=float)
            if vals.shape != (doc["n"], doc["m"]):
                raise DataError("RSS JSON dimensions disagree with values")
            return cls(vals, kind=doc["kind"], meta=doc.get("params", {}))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"invalid RSS document: {exc}") from exc


def reference_rss_db(params):
    """Received power at the reference distance: rho_dB + l0_dB (dBm)."""
    return params.rho_dbm + params.l0_db


def _segment_index(d, params):
    d = np.asarray(d, dtype=float)
    idx = np.full(d.shape, len(params.eta_segments) - 1, dtype=int)
    # walk backwards so the first matching segment wins
    for k in range(len(params.eta_segments) - 2, -1, -1):
        upper, _, inclusive = params.eta_segments[k]
        inside = d <= upper if inclusive else d < upper
        idx = np.where(inside, k, idx)
    return idx


def path_loss_exponent(d, params=None):
    """Path-loss exponent for distance ``d`` (scalar or array)."""
    params = params or PathLossParams()
    etas = np.array([e for _, e, _ in params.eta_segments])
    out = etas[_segment_index(d, params)]
    return float(out) if np.ndim(out) == 0 else out


def _intercepts(params):
    p0 = reference_rss_db(params)
    segs = params.eta_segments
    if params.mode == "literal":
        return np.full(len(segs), p0)
    icpt = [p0]
    for k in range(1, len(segs)):
        b = segs[k - 1][0]
        icpt.append(icpt[-1] - 10.0 * (segs[k - 1][1] - segs[k][1]) * math.log10(b))
    return np.array(icpt)


def noise_free_rss_db(d, params=None):
    """Noise-free RSS p0_dB - 10 eta(d) log10(d), with d in meters.

    Accepts scalars or arrays; raises :class:`DomainError` for d <= 0.
    """
    params = params or PathLossParams()
    d_arr = np.asarray(d, dtype=float)
    if np.any(~(d_arr > 0)):
        raise DomainError("distance must be positive")
    idx = _segment_index(d_arr, params)
    etas = np.array([e for _, e, _ in params.eta_segments])
    out = _intercepts(params)[idx] - 10.0 * etas[idx] * np.log10(d_arr)
    return float(out) if out.ndim == 0 else out


def noise_free_rss_matrix(users, scenario, params=None):
    """Noise-free RSS for every (user, antenna) pair."""
    params = params or PathLossParams()
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    d = distance_matrix(users, scenario.antennas)
    bad = np.argwhere(~(d > 0))
    if bad.size:
        n, m = bad[0]
        raise DomainError(f"user {n} coincides with antenna {m}")
    vals = noise_free_rss_db(d, params)
    return RssMatrix(vals, kind="noise_free", meta={"path_loss": params.to_dict()})


def shadowed_rss_matrix(base, sigma_sh_sq, seed):
    """Add i.i.d. Gaussian shadowing of variance ``sigma_sh_sq`` (dB^2) to ``base``.

    The standard-normal draws depend only on ``seed`` and the matrix shape, so
    the same seed at different variances gives scaled copies of one noise
    realization.
    """
    if not sigma_sh_sq >= 0:
        raise ParameterError(f"shadowing variance must be non-negative, got {sigma_sh_sq}")
    z = rng.generator(seed).standard_normal(base.values.shape)
    vals = base.values + math.sqrt(sigma_sh_sq) * z
    meta = dict(base.meta, sigma_sh_sq=float(sigma_sh_sq))
    return RssMatrix(vals, kind="shadowed", meta=meta)


def faded_rss_linear(beta, q_mag_sq, rho_mw):
    """Instantaneous RSS rho * beta * |q|^2 in milliwatts."""
    return rho_mw * beta * q_mag_sq


def sample_fading(shape, seed):
    """Squared magnitudes of unit-variance circular complex Gaussians."""
    g = rng.generator(seed)
    re, im = g.standard_normal(shape), g.standard_normal(shape)
    return 0.5 * (re * re + im * im)


def dbm_to_mw(p_dbm):
    return 10.0 ** (np.asarray(p_dbm) / 10.0)


def average_small_scale(d, params=None, timeslots=1, seed=0, q_mag_sq=None):
    """Time-averaged faded RSS at distance ``d``, in dBm.

    The large-scale gain excludes shadowing. ``q_mag_sq`` overrides the
    sampled fading powers (length ``timeslots``).
    """
    params = params or PathLossParams()
    if int(timeslots) != timeslots or timeslots < 1:
        raise ParameterError(f"timeslots must be a positive integer, got {timeslots!r}")
    if q_mag_sq is None:
        q_mag_sq = sample_fading(int(timeslots), seed)
    q_mag_sq = np.asarray(q_mag_sq, dtype=float)
    beta = dbm_to_mw(noise_free_rss_db(d, params) - params.rho_dbm)
    p = faded_rss_linear(beta, q_mag_sq, dbm_to_mw(params.rho_dbm))
    return float(10.0 * np.log10(np.mean(p)))
