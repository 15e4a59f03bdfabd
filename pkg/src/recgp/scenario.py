"""Antenna and user geometry over a square service area."""

import json
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng
from .errors import DataError, ParameterError


class Point2D(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class Scenario:
    """Antenna layout of a distributed massive-MIMO deployment.

    Attributes
    ----------
    antennas : ndarray, shape (M, 2)
        Antenna coordinates in meters.
    side : float
        Side length of the square service area in meters.
    seed : int
        Seed the layout was drawn from.
    """

    antennas: np.ndarray
    side: float
    seed: int

    def __post_init__(self):
        ant = np.array(self.antennas, dtype=float).reshape(-1, 2)
        ant.setflags(write=False)
        object.__setattr__(self, "antennas", ant)
        if ant.shape[0] < 1:
            raise ParameterError("scenario needs at least one antenna")

    @property
    def m(self):
        return self.antennas.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        return (self.side == other.side and self.seed == other.seed
                and np.array_equal(self.antennas, other.antennas))

    def to_json(self):
        return json.dumps({"side": self.side, "seed": self.seed,
                           "antennas": self.antennas.tolist()})

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            return cls(antennas=np.asarray(doc["antennas"], dtype=float),
                       side=float(doc["side"]), seed=int(doc["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"invalid scenario document: {exc}") from exc


def _uniform_square(n, side, seed):
    return rng.generator(seed).uniform(0.0, side, size=(n, 2))


def make_scenario(m, side, seed):
    """Draw ``m`` antenna positions i.i.d. uniform over ``[0, side]^2``."""
    if int(m) != m or m < 1:
        raise ParameterError(f"antenna count must be a positive integer, got {m!r}")
    if not side > 0:
        raise ParameterError(f"side must be positive, got {side!r}")
    seed = int(seed)
    ant = _uniform_square(int(m), float(side), rng.derive_seed(seed, rng.ANTENNAS))
    return Scenario(antennas=ant, side=float(side), seed=seed)


def sample_locations(n, side, seed):
    """Draw ``n`` user locations i.i.d. uniform over the square.

    Returns an ``(n, 2)`` array; rows are (x, y) in meters.
    """
    if int(n) != n or n < 1:
        raise ParameterError(f"location count must be a positive integer, got {n!r}")
    if not side > 0:
        raise ParameterError(f"side must be positive, got {side!r}")
    return _uniform_square(int(n), float(side), seed)


def distance(a, b):
    """Euclidean distance between two points in meters."""
    return math.hypot(a[0] - b[0], a[1] - b[1])


def distance_matrix(users, antennas):
    """Pairwise user-to-antenna distances, shape (N, M)."""
    users = np.asarray(users, dtype=float).reshape(-1, 2)
    antennas = np.asarray(antennas, dtype=float).reshape(-1, 2)
    diff = users[:, None, :] - antennas[None, :, :]
    return np.hypot(diff[..., 0], diff[..., 1])
