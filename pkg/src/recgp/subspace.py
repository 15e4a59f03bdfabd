"""Truncated-SVD principal subspace of noise-free RSS and projection of noisy RSS onto it."""

import io
import json
from dataclasses import dataclass

import numpy as np

from .channel import RssMatrix
from .errors import DataError, ParameterError


def _values(p):
    return p.values if isinstance(p, RssMatrix) else np.asarray(p, dtype=float)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``p = u @ diag(s) @ v.T`` (plus ``mean`` when centered)."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    mean: np.ndarray

    @property
    def rank(self):
        return self.s.shape[0]

    @property
    def energy(self):
        return float(np.sum(self.s ** 2))


@dataclass(frozen=True)
class SubspaceModel:
    """First ``l`` right singular vectors of a noise-free RSS matrix."""

    v_l: np.ndarray
    l: int
    energy_fraction: float
    mean: np.ndarray

    @property
    def m(self):
        return self.v_l.shape[0]

    def to_json(self):
        return json.dumps({"l": self.l, "energy_fraction": self.energy_fraction,
                           "m": self.m, "v_l": self.v_l.ravel().tolist(),
                           "mean": self.mean.tolist()})

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        m, l = doc["m"], doc["l"]
        v_l = np.asarray(doc["v_l"], dtype=float).reshape(m, l)
        mean = np.asarray(doc.get("mean", np.zeros(m)), dtype=float)
        return cls(v_l=v_l, l=l, energy_fraction=doc["energy_fraction"], mean=mean)


def svd(p_star, center=False):
    """Thin SVD of an RSS matrix.

    Each right singular vector is signed so its largest-magnitude entry is
    positive (the matching left vector is flipped with it). With
    ``center=True`` the column means are removed first and stored in the
    factors.
    """
    a = _values(p_star)
    if a.ndim != 2 or min(a.shape) < 1:
        raise DataError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DataError("matrix contains non-finite entries")
    mean = a.mean(axis=0) if center else np.zeros(a.shape[1])
    u, s, vt = np.linalg.svd(a - mean, full_matrices=False)
    v = vt.T
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.sign(v[pivot, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return SvdFactors(u=u * signs, s=s, v=v * signs, mean=mean)


def _check_l(factors, l):
    if int(l) != l or not 1 <= l <= factors.rank:
        raise ParameterError(f"l must be in [1, {factors.rank}], got {l!r}")
    return int(l)


def truncation_error(factors, p_star, l):
    """Squared Frobenius residual of the rank-``l`` reconstruction and its fraction of total energy.

    The residual is computed directly from ``p_star`` rather than from the
    discarded singular values.
    """
    l = _check_l(factors, l)
    a = _values(p_star) - factors.mean
    approx = (factors.u[:, :l] * factors.s[:l]) @ factors.v[:, :l].T
    absolute = float(np.sum((a - approx) ** 2))
    total = factors.energy
    return absolute, (absolute / total if total > 0 else 0.0)


def tail_energy(factors):
    """Truncation error for every l = 1..r from the singular values: (absolute, fraction) arrays."""
    s2 = factors.s ** 2
    total = s2.sum()
    absolute = total - np.cumsum(s2)
    absolute = np.clip(absolute, 0.0, None)
    absolute[-1] = 0.0
    frac = absolute / total if total > 0 else np.zeros_like(absolute)
    return absolute, frac


def fit_subspace(factors, l):
    l = _check_l(factors, l)
    s2 = factors.s ** 2
    total = s2.sum()
    frac = float(s2[:l].sum() / total) if total > 0 else 1.0
    return SubspaceModel(v_l=factors.v[:, :l].copy(), l=l,
                         energy_fraction=min(frac, 1.0), mean=factors.mean)


def select_l_by_energy(factors, threshold):
    """Smallest l whose fractional truncation error is at most ``threshold``."""
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    _, frac = tail_energy(factors)
    return int(np.argmax(frac <= threshold)) + 1


def reconstruct(noisy, model):
    """Project each RSS row onto the span of ``model.v_l``."""
    a = _values(noisy)
    if a.ndim == 1:
        a = a[None, :]
    if a.shape[1] != model.m:
        raise ParameterError(f"RSS has {a.shape[1]} antennas, subspace expects {model.m}")
    centered = a - model.mean
    rec = (centered @ model.v_l) @ model.v_l.T + model.mean
    meta = dict(noisy.meta) if isinstance(noisy, RssMatrix) else {}
    meta["reconstruction_l"] = model.l
    return RssMatrix(rec, kind="reconstructed", meta=meta)


def profile_csv(factors):
    """Singular-value profile and truncation-error curve as CSV text."""
    absolute, frac = tail_energy(factors)
    buf = io.StringIO()
    buf.write("l,sigma_l,abs_error,fraction\n")
    for i in range(factors.rank):
        buf.write(f"{i + 1},{float(factors.s[i])!r},{float(absolute[i])!r},{float(frac[i])!r}\n")
    return buf.getvalue()
