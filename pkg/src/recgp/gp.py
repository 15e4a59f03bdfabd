"""Gaussian-process regression of one coordinate from RSS vectors.

The covariance between two RSS vectors is

    alpha * exp(-sum_m (p_i[m] - p_j[m])**2 / b[m]) + gamma * <p_i, p_j>

with free parameters theta = [alpha, b_1..b_M, gamma]. Training maximizes the
zero-mean marginal likelihood over log(theta) with nonlinear conjugate
gradient; prediction uses the Cholesky factor of the training covariance.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import rng
from .errors import DataError, NumericError, ParameterError, TrainingError
from .optimize import minimize_cg

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class KernelParams:
    alpha: float
    b_diag: np.ndarray
    gamma: float

    def __post_init__(self):
        b = np.array(self.b_diag, dtype=float).ravel()
        object.__setattr__(self, "b_diag", b)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "gamma", float(self.gamma))
        if self.alpha < 0 or self.gamma < 0 or np.any(b <= 0):
            raise ParameterError("kernel needs alpha >= 0, gamma >= 0 and b_diag > 0")
        if not (np.isfinite(self.alpha) and np.isfinite(self.gamma) and np.all(np.isfinite(b))):
            raise ParameterError("kernel parameters must be finite")

    @property
    def m(self):
        return self.b_diag.shape[0]

    def to_log(self):
        return np.concatenate([[math.log(self.alpha)], np.log(self.b_diag), [math.log(self.gamma)]])

    @classmethod
    def from_log(cls, theta):
        theta = np.asarray(theta, dtype=float)
        return cls(alpha=math.exp(theta[0]), b_diag=np.exp(theta[1:-1]), gamma=math.exp(theta[-1]))

    def to_dict(self):
        return {"alpha": self.alpha, "b_diag": self.b_diag.tolist(), "gamma": self.gamma}

    @classmethod
    def from_dict(cls, doc):
        return cls(alpha=doc["alpha"], b_diag=doc["b_diag"], gamma=doc["gamma"])


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and numerical-stability settings for :func:`train`.

    ``jitter_rel`` scales the diagonal stabilizer by the mean prior variance
    (mean of the covariance diagonal); on factorization failure it is doubled
    up to ``jitter_max_rel``.
    """

    restarts: int = 5
    max_iters: int = 500
    grad_tol: float = 1e-5
    jitter_rel: float = 1e-6
    jitter_max_rel: float = 1e-2
    center_targets: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1:
            raise ParameterError("restarts and max_iters must be >= 1")
        if not 0 <= self.jitter_rel <= self.jitter_max_rel:
            raise ParameterError("need 0 <= jitter_rel <= jitter_max_rel")


def _as_inputs(inputs):
    x = np.asarray(getattr(inputs, "values", inputs), dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DataError(f"inputs must be a 2-D matrix, got shape {x.shape}")
    return x


def _sq_dists(a, b):
    """Per-dimension squared differences, shape (len(a), len(b), M)."""
    diff = a[:, None, :] - b[None, :, :]
    return diff * diff


def kernel(p_i, p_j, params):
    p_i = np.asarray(p_i, dtype=float).ravel()
    p_j = np.asarray(p_j, dtype=float).ravel()
    if p_i.shape != p_j.shape or p_i.shape[0] != params.m:
        raise ParameterError("RSS vectors and kernel parameters must share length M")
    delta = p_i - p_j
    return float(params.alpha * math.exp(-np.sum(delta * delta / params.b_diag))
                 + params.gamma * float(p_i @ p_j))


def cross_covariance(a, b, params):
    """Kernel matrix between rows of ``a`` and rows of ``b``."""
    a, b = _as_inputs(a), _as_inputs(b)
    if a.shape[1] != params.m or b.shape[1] != params.m:
        raise ParameterError(f"inputs must have {params.m} columns")
    with np.errstate(over="ignore", invalid="ignore"):
        return (params.alpha * np.exp(-_sq_dists(a, b) @ (1.0 / params.b_diag))
                + params.gamma * (a @ b.T))


def covariance_matrix(inputs, params, jitter=0.0):
    x = _as_inputs(inputs)
    k = cross_covariance(x, x, params)
    k = 0.5 * (k + k.T)
    k[np.diag_indices_from(k)] += jitter
    if not np.all(np.isfinite(k)):
        raise NumericError("covariance matrix is not finite", params)
    return k


class _Objective:
    """Negative log marginal likelihood and its gradient in log-parameter space.

    The diagonal stabilizer is ``jitter_abs + jitter_rel * mean(diag)``, and
    its dependence on alpha and gamma is included in the gradient.
    """

    def __init__(self, inputs, targets, jitter_abs=0.0, jitter_rel=0.0):
        self.x = _as_inputs(inputs)
        self.y = np.asarray(targets, dtype=float).ravel()
        if self.y.shape[0] != self.x.shape[0]:
            raise DataError("inputs and targets disagree on the number of samples")
        self.n, self.m = self.x.shape
        self.d = _sq_dists(self.x, self.x)
        self.gram = self.x @ self.x.T
        self.mean_sq_norm = float(np.mean(np.diag(self.gram)))
        self.jitter_abs = float(jitter_abs)
        self.jitter_rel = float(jitter_rel)

    def jitter(self, params):
        return self.jitter_abs + self.jitter_rel * (params.alpha + params.gamma * self.mean_sq_norm)

    def factor(self, params):
        with np.errstate(over="ignore", invalid="ignore"):
            e = np.exp(-self.d @ (1.0 / params.b_diag))
            k = params.alpha * e + params.gamma * self.gram
        jit = self.jitter(params)
        k[np.diag_indices_from(k)] += jit
        if not np.all(np.isfinite(k)):
            raise NumericError("covariance matrix is not finite", params)
        try:
            chol = linalg.cholesky(k, lower=True, check_finite=False)
        except linalg.LinAlgError as exc:
            raise NumericError(f"Cholesky factorization failed: {exc}", params) from exc
        return e, chol, jit

    def value(self, params):
        _, chol, _ = self.factor(params)
        w = linalg.cho_solve((chol, True), self.y, check_finite=False)
        return float(-0.5 * self.y @ w - np.sum(np.log(np.diag(chol))) - 0.5 * self.n * LOG_2PI)

    def value_and_grad(self, params):
        e, chol, _ = self.factor(params)
        w = linalg.cho_solve((chol, True), self.y, check_finite=False)
        lml = float(-0.5 * self.y @ w - np.sum(np.log(np.diag(chol))) - 0.5 * self.n * LOG_2PI)
        k_inv = linalg.cho_solve((chol, True), np.eye(self.n), check_finite=False)
        a = np.outer(w, w) - k_inv
        tr_a = float(np.trace(a))
        ae = a * e
        g_alpha = 0.5 * params.alpha * (float(np.sum(ae)) + self.jitter_rel * tr_a)
        g_b = 0.5 * params.alpha * np.tensordot(ae, self.d, axes=([0, 1], [0, 1])) / params.b_diag
        g_gamma = 0.5 * params.gamma * (float(np.sum(a * self.gram))
                                        + self.jitter_rel * self.mean_sq_norm * tr_a)
        return lml, np.concatenate([[g_alpha], g_b, [g_gamma]])

    def __call__(self, theta):
        """Negated LML and gradient for the minimizer; inf where the factorization fails."""
        try:
            params = KernelParams.from_log(theta)
            lml, grad = self.value_and_grad(params)
        except (NumericError, ParameterError, OverflowError, FloatingPointError):
            return math.inf, np.zeros_like(theta)
        if not np.isfinite(lml) or not np.all(np.isfinite(grad)):
            return math.inf, np.zeros_like(theta)
        return -lml, -grad


def log_marginal_likelihood(inputs, targets, params, jitter=0.0, jitter_rel=0.0):
    """Log density of ``targets`` under the zero-mean GP prior, via Cholesky."""
    return _Objective(inputs, targets, jitter, jitter_rel).value(params)


def lml_gradient(inputs, targets, params, jitter=0.0, jitter_rel=0.0):
    """Gradient of the log marginal likelihood with respect to log(theta).

    Ordered as [alpha, b_1..b_M, gamma].
    """
    return _Objective(inputs, targets, jitter, jitter_rel).value_and_grad(params)[1]


@dataclass(frozen=True, eq=False)
class TrainedGp:
    """A GP fitted to one coordinate, with the factorized training covariance."""

    params: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    chol: np.ndarray
    weights: np.ndarray
    jitter: float
    target_offset: float = 0.0
    lml: float = float("nan")
    info: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.train_inputs.shape[1]

    def data_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.train_inputs, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.train_targets, dtype="<f8").tobytes())
        return h.hexdigest()

    def to_dict(self):
        return {"params": self.params.to_dict(), "jitter": self.jitter,
                "target_offset": self.target_offset, "lml": self.lml,
                "data_sha256": self.data_hash(), "optimizer": self.info}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc, train_inputs, train_targets):
        """Rebuild from :meth:`to_dict` output and the training data it references."""
        gp = fit_exact(train_inputs, train_targets, KernelParams.from_dict(doc["params"]),
                       jitter=doc["jitter"], target_offset=doc["target_offset"],
                       info=doc.get("optimizer", {}))
        if gp.data_hash() != doc["data_sha256"]:
            raise DataError("training data does not match the model's content hash")
        return gp


def fit_exact(inputs, targets, params, jitter, target_offset=0.0, info=None):
    """Factorize the training covariance for fixed parameters and absolute jitter."""
    x = _as_inputs(inputs)
    y = np.asarray(targets, dtype=float).ravel()
    obj = _Objective(x, y - target_offset, jitter_abs=jitter)
    _, chol, _ = obj.factor(params)
    w = linalg.cho_solve((chol, True), obj.y, check_finite=False)
    lml = float(-0.5 * obj.y @ w - np.sum(np.log(np.diag(chol))) - 0.5 * obj.n * LOG_2PI)
    x = x.copy()
    x.setflags(write=False)
    y = y.copy()
    y.setflags(write=False)
    return TrainedGp(params=params, train_inputs=x, train_targets=y, chol=chol, weights=w,
                     jitter=float(jitter), target_offset=float(target_offset), lml=lml,
                     info=dict(info or {}))


def initial_params(inputs, targets, generator):
    """Random log-space starting point scaled to the data."""
    x = _as_inputs(inputs)
    y = np.asarray(targets, dtype=float)
    var_y = float(np.var(y)) or 1.0
    spread = float(np.mean(np.var(x, axis=0))) or 1.0
    sq_norm = float(np.mean(np.sum(x * x, axis=1))) or 1.0
    m = x.shape[1]
    log_alpha = generator.uniform(math.log(0.1 * var_y), math.log(10.0 * var_y))
    log_b = generator.uniform(math.log(0.1 * spread), math.log(10.0 * spread), size=m)
    log_gamma = generator.uniform(-12.0, 0.0) + math.log(var_y / sq_norm)
    return np.concatenate([[log_alpha], log_b, [log_gamma]])


def train(inputs, targets, config=None):
    """Fit kernel parameters by maximizing the log marginal likelihood.

    Runs ``config.restarts`` conjugate-gradient ascents from random starting
    points and keeps the best. Restarts whose start cannot be factorized
    retry with doubled jitter, up to ``config.jitter_max_rel``.
    """
    config = config or TrainConfig()
    x = _as_inputs(inputs)
    y = np.asarray(targets, dtype=float).ravel()
    if x.shape[0] < 2:
        raise DataError("training needs at least two samples")
    if y.shape[0] != x.shape[0]:
        raise DataError("inputs and targets disagree on the number of samples")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise DataError("training data contains non-finite values")
    offset = float(np.mean(y)) if config.center_targets else 0.0
    yc = y - offset

    best = None
    runs = []
    failures = []
    for r in range(config.restarts):
        gen = rng.generator(rng.derive_seed(config.seed, rng.RESTARTS, r))
        theta0 = initial_params(x, yc, gen)
        jitter_rel = config.jitter_rel
        while True:
            obj = _Objective(x, yc, jitter_rel=jitter_rel)
            if np.isfinite(obj(theta0)[0]):
                break
            jitter_rel = max(2.0 * jitter_rel, 1e-12)
            if jitter_rel > config.jitter_max_rel:
                obj = None
                break
        if obj is None:
            failures.append({"restart": r, "theta0": theta0.tolist()})
            continue
        res = minimize_cg(obj, theta0, max_iter=config.max_iters, gtol=config.grad_tol)
        run = {"restart": r, "lml": -res.fun, "iterations": res.iterations,
               "grad_inf_norm": float(np.max(np.abs(res.grad))),
               "converged": res.converged, "message": res.message, "jitter_rel": jitter_rel}
        runs.append(run)
        if best is None or -res.fun > best[0]:
            best = (-res.fun, res.x, obj, run)
    if best is None:
        raise TrainingError(f"all {config.restarts} restarts failed to factorize", failures)

    lml, theta, obj, run = best
    params = KernelParams.from_log(theta)
    jitter = obj.jitter(params)
    info = {"best_restart": run["restart"], "iterations": run["iterations"],
            "final_lml": lml, "grad_inf_norm": run["grad_inf_norm"],
            "converged": run["converged"], "restarts": runs}
    while True:
        try:
            return fit_exact(x, y, params, jitter, target_offset=offset, info=info)
        except NumericError:
            jitter *= 2.0
            if jitter > config.jitter_max_rel * (params.alpha + params.gamma * obj.mean_sq_norm):
                raise TrainingError("final covariance could not be factorized", params.to_dict())


def predict_many(gp, queries):
    """Predictive means and variances for each row of ``queries``."""
    q = _as_inputs(queries)
    if q.shape[1] != gp.m:
        raise ParameterError(f"query has {q.shape[1]} antennas, model expects {gp.m}")
    k = cross_covariance(q, gp.train_inputs, gp.params)
    mean = k @ gp.weights + gp.target_offset
    v = linalg.solve_triangular(gp.chol, k.T, lower=True, check_finite=False)
    prior = gp.params.alpha + gp.params.gamma * np.sum(q * q, axis=1)
    var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
    return mean, var


def predict(gp, query):
    mean, var = predict_many(gp, np.asarray(query, dtype=float).reshape(1, -1))
    return float(mean[0]), float(var[0])


def confidence_interval(pred):
    """Two-sigma interval ``mean +/- 2 sqrt(variance)``."""
    mean, variance = pred
    if variance < 0:
        raise ParameterError(f"variance must be non-negative, got {variance}")
    half = 2.0 * math.sqrt(variance)
    return mean - half, mean + half
