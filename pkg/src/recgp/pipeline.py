"""RecGP and standard-GP localization, Monte-Carlo trials and sweeps.

A :class:`Experiment` holds everything that stays fixed across trials for one
antenna count: the antenna layout, the noise-free training RSS, the trained
x/y GPs and the SVD of the training RSS. Trials only redraw test locations
and shadowing.
"""

import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .channel import RssMatrix, noise_free_rss_matrix, shadowed_rss_matrix
from .errors import DataError, ParameterError
from .gp import TrainConfig, TrainedGp, confidence_interval, predict_many, train
from .scenario import make_scenario, sample_locations
from .subspace import (SubspaceModel, fit_subspace, reconstruct, select_l_by_energy, svd,
                       tail_energy)

METHODS = ("recgp", "sgp")
SELECTION_BLOCK = 0
REPORT_BLOCK = 1


@dataclass(frozen=True, eq=False)
class LocalizerModel:
    gp_x: TrainedGp
    gp_y: TrainedGp
    method: str
    subspace: SubspaceModel = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if (self.subspace is not None) != (self.method == "recgp"):
            raise ParameterError("a subspace is required for recgp and forbidden for sgp")
        if not np.array_equal(self.gp_x.train_inputs, self.gp_y.train_inputs):
            raise ParameterError("x and y GPs must share training inputs")

    @property
    def m(self):
        return self.gp_x.m

    def to_json(self):
        doc = {
            "schema_version": 1,
            "method": self.method,
            "train_inputs": self.gp_x.train_inputs.tolist(),
            "train_x": self.gp_x.train_targets.tolist(),
            "train_y": self.gp_y.train_targets.tolist(),
            "gp_x": self.gp_x.to_dict(),
            "gp_y": self.gp_y.to_dict(),
            "subspace": json.loads(self.subspace.to_json()) if self.subspace else None,
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            inputs = np.asarray(doc["train_inputs"], dtype=float)
            gp_x = TrainedGp.from_dict(doc["gp_x"], inputs, doc["train_x"])
            gp_y = TrainedGp.from_dict(doc["gp_y"], inputs, doc["train_y"])
            sub = doc.get("subspace")
            sub = SubspaceModel.from_json(json.dumps(sub)) if sub else None
            return cls(gp_x=gp_x, gp_y=gp_y, method=doc["method"], subspace=sub)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"invalid model document: {exc}") from exc


@dataclass
class EvalResult:
    method: str
    rmse: float
    per_user_errors: list
    sigma_sh_sq: float
    l_used: int = None
    trial_seed: int = 0

    def to_json(self):
        return json.dumps({"method": self.method, "rmse": self.rmse,
                           "per_user_errors": self.per_user_errors,
                           "sigma_sh_sq": self.sigma_sh_sq, "l_used": self.l_used,
                           "trial_seed": self.trial_seed})


def _train_config(base, coord):
    # x and y get independent restart streams
    return TrainConfig(restarts=base.restarts, max_iters=base.max_iters, grad_tol=base.grad_tol,
                       jitter_rel=base.jitter_rel, jitter_max_rel=base.jitter_max_rel,
                       center_targets=base.center_targets,
                       seed=rng.derive_seed(base.seed, rng.RESTARTS, coord))


def train_gps(train_rss, train_users, train_config=None):
    train_config = train_config or TrainConfig()
    users = np.asarray(train_users, dtype=float).reshape(-1, 2)
    inputs = train_rss.values if isinstance(train_rss, RssMatrix) else np.asarray(train_rss)
    gp_x = train(inputs, users[:, 0], _train_config(train_config, 0))
    gp_y = train(inputs, users[:, 1], _train_config(train_config, 1))
    return gp_x, gp_y


def train_localizer(train_users, scenario, params, method, l=None, train_config=None,
                    center=False, gps=None):
    """Build P* for the training users, fit x/y GPs and (for recgp) the rank-``l`` subspace.

    ``gps`` reuses an already trained ``(gp_x, gp_y)`` pair.
    """
    if method not in METHODS:
        raise ParameterError(f"unknown method {method!r}")
    users = np.asarray(train_users, dtype=float).reshape(-1, 2)
    if users.shape[0] < 2:
        raise ParameterError("need at least two training locations")
    p_star = noise_free_rss_matrix(users, scenario, params)
    gp_x, gp_y = gps if gps is not None else train_gps(p_star, users, train_config)
    sub = None
    if method == "recgp":
        if l is None:
            raise ParameterError("recgp needs a subspace dimension l")
        sub = fit_subspace(svd(p_star, center=center), l)
    return LocalizerModel(gp_x=gp_x, gp_y=gp_y, method=method, subspace=sub)


def localize(model, test_rss):
    """Predict locations for each RSS row.

    Returns an ``(N, 4)`` array of (mean_x, mean_y, var_x, var_y).
    """
    vals = test_rss.values if isinstance(test_rss, RssMatrix) else np.asarray(test_rss, float)
    if vals.ndim == 1:
        vals = vals[None, :]
    if vals.shape[1] != model.m:
        raise ParameterError(f"test RSS has {vals.shape[1]} antennas, model expects {model.m}")
    if model.method == "recgp":
        vals = reconstruct(vals, model.subspace).values
    mx, vx = predict_many(model.gp_x, vals)
    my, vy = predict_many(model.gp_y, vals)
    return np.column_stack([mx, my, vx, vy])


def with_intervals(predictions):
    """Append (lo_x, hi_x, lo_y, hi_y) two-sigma bounds to :func:`localize` output."""
    pred = np.asarray(predictions, dtype=float)
    bounds = np.array([confidence_interval((mx, vx)) + confidence_interval((my, vy))
                       for mx, my, vx, vy in pred[:, :4]]).reshape(-1, 4)
    return np.hstack([pred[:, :4], bounds])


def user_errors(predictions, truth):
    pred = np.asarray(predictions, dtype=float).reshape(len(predictions), -1)
    truth = np.asarray(truth, dtype=float).reshape(-1, 2)
    if pred.shape[0] != truth.shape[0] or pred.shape[0] < 1:
        raise ParameterError("predictions and truth must have the same non-zero length")
    return np.hypot(pred[:, 0] - truth[:, 0], pred[:, 1] - truth[:, 1])


def rmse(predictions, truth):
    """Root mean squared 2-D Euclidean error."""
    err = user_errors(predictions, truth)
    return float(np.sqrt(np.mean(err * err)))


class Experiment:
    """Fixed per-M state shared by all Monte-Carlo trials."""

    def __init__(self, config, m, scenario=None):
        self.config = config
        self.m = m
        self.scenario = scenario or make_scenario(m, config.side, config.seed)
        self.train_users = sample_locations(config.n_train, config.side,
                                            rng.derive_seed(config.seed, rng.TRAIN_USERS))
        self.train_rss = noise_free_rss_matrix(self.train_users, self.scenario, config.path_loss)
        self.gp_x, self.gp_y = train_gps(self.train_rss, self.train_users, config.train)
        self.factors = svd(self.train_rss, center=config.center_subspace)
        self.max_l = self.factors.rank
        self._subspaces = {}

    def subspace(self, l):
        if l not in self._subspaces:
            self._subspaces[l] = fit_subspace(self.factors, l)
        return self._subspaces[l]

    def model(self, method, l=None):
        return LocalizerModel(gp_x=self.gp_x, gp_y=self.gp_y, method=method,
                              subspace=self.subspace(l) if method == "recgp" else None)

    def trial_seed(self, block, index):
        return rng.derive_seed(self.config.seed, block, index)

    def trial_data(self, trial_seed, sigma_sh_sq):
        """Test locations and shadowed test RSS for one trial.

        Shadowing uses the same standard-normal draws at every noise level.
        """
        users = sample_locations(self.config.n_test, self.config.side,
                                 rng.derive_seed(trial_seed, rng.TEST_USERS))
        clean = noise_free_rss_matrix(users, self.scenario, self.config.path_loss)
        noisy = shadowed_rss_matrix(clean, sigma_sh_sq, rng.derive_seed(trial_seed, rng.SHADOWING))
        return users, noisy

    def recgp_errors(self, trial_seed, sigma_sh_sq, ls):
        """Per-user RecGP errors for each l in ``ls`` on one trial, shape (len(ls), n_test)."""
        users, noisy = self.trial_data(trial_seed, sigma_sh_sq)
        return np.array([user_errors(localize(self.model("recgp", l), noisy), users) for l in ls])

    def resolve_l(self, sigma_sh_sq):
        cfg = self.config
        if cfg.l_policy == "fixed":
            return cfg.l_fixed
        if cfg.l_policy == "energy":
            return select_l_by_energy(self.factors, cfg.l_threshold)
        return select_l_by_rmse(self, self.candidates(), cfg.trials, sigma_sh_sq)

    def candidates(self):
        if self.config.l_candidates:
            return [l for l in self.config.l_candidates if l <= self.max_l]
        return list(range(1, self.max_l + 1))


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_trial(exp, trial_seed, sigma_sh_sq, l):
    """Evaluate RecGP (rank ``l``) and SGP on identical test data."""
    users, noisy = exp.trial_data(trial_seed, sigma_sh_sq)
    out = []
    for method in METHODS:
        model = exp.model(method, l)
        err = user_errors(localize(model, noisy), users)
        out.append(EvalResult(method=method, rmse=float(np.sqrt(np.mean(err * err))),
                              per_user_errors=err.tolist(), sigma_sh_sq=float(sigma_sh_sq),
                              l_used=l if method == "recgp" else None,
                              trial_seed=int(trial_seed)))
    return tuple(out)


def select_l_by_rmse(exp, candidate_ls, trials, sigma_sh_sq):
    """Most frequent per-trial RMSE-minimizing l over the selection block (ties -> smaller l)."""
    cands = sorted(set(int(l) for l in candidate_ls))
    if not cands:
        raise ParameterError("no candidate subspace dimensions")
    if cands[0] < 1 or cands[-1] > exp.max_l:
        raise ParameterError(f"candidates must lie in [1, {exp.max_l}]")
    if trials < 1:
        raise ParameterError("need at least one selection trial")

    def best(i):
        err = exp.recgp_errors(exp.trial_seed(SELECTION_BLOCK, i), sigma_sh_sq, cands)
        return cands[int(np.argmin(np.mean(err * err, axis=1)))]

    winners = Counter(_map(best, range(trials), exp.config.threads))
    top = max(winners.values())
    return min(l for l, c in winners.items() if c == top)


def _summary(results):
    sq = np.concatenate([np.square(r.per_user_errors) for r in results])
    joint = float(np.sqrt(np.mean(sq)))
    per_trial = np.array([r.rmse for r in results])
    return joint, float(np.max(np.abs(per_trial - joint))), float(np.mean(per_trial))


@dataclass
class NoiseSweep:
    rows: list
    selected_l: dict
    results: list = field(default_factory=list)

    def to_csv(self):
        lines = ["sigma_sh_sq,method,mean_rmse,max_dev"]
        for s2, method, mean, dev in self.rows:
            lines.append(f"{s2!r},{method},{mean!r},{dev!r}")
        return "\n".join(lines) + "\n"


def sweep_noise(exp, noise_grid=None):
    """Mean RMSE of both methods per noise level, on the reporting trial block."""
    cfg = exp.config
    noise_grid = cfg.noise_grid if noise_grid is None else noise_grid
    rows, selected, results = [], {}, []
    for s2 in noise_grid:
        l = exp.resolve_l(s2)
        selected[float(s2)] = l
        pairs = _map(lambda i: run_trial(exp, exp.trial_seed(REPORT_BLOCK, i), s2, l),
                     range(cfg.trials), cfg.threads)
        for k, method in enumerate(METHODS):
            res = [p[k] for p in pairs]
            joint, dev, _ = _summary(res)
            rows.append((float(s2), method, joint, dev))
            results.extend(res)
    return NoiseSweep(rows=rows, selected_l=selected, results=results)


@dataclass
class LSweep:
    rows: list

    def to_csv(self):
        lines = ["l,sigma_sh_sq,mean_rmse"]
        for l, s2, mean in self.rows:
            lines.append(f"{l},{s2!r},{mean!r}")
        return "\n".join(lines) + "\n"

    def curve(self, sigma_sh_sq):
        pts = sorted((l, r) for l, s2, r in self.rows if s2 == sigma_sh_sq)
        return np.array([l for l, _ in pts]), np.array([r for _, r in pts])


def sweep_l(exp, noise_grid=None, ls=None):
    """RecGP RMSE for every l at each noise level; all l share the same trials."""
    cfg = exp.config
    noise_grid = cfg.l_sweep_noise if noise_grid is None else noise_grid
    ls = list(range(1, exp.max_l + 1)) if ls is None else list(ls)
    rows = []
    for s2 in noise_grid:
        errs = _map(lambda i: exp.recgp_errors(exp.trial_seed(REPORT_BLOCK, i), s2, ls),
                    range(cfg.trials), cfg.threads)
        sq = np.mean(np.square(np.stack(errs)), axis=(0, 2))
        rows.extend((int(l), float(s2), float(math.sqrt(v))) for l, v in zip(ls, sq))
    return LSweep(rows=rows)


def sgp_rmse(exp, sigma_sh_sq):
    """Jointly averaged SGP RMSE over the reporting block."""
    res = [run_trial(exp, exp.trial_seed(REPORT_BLOCK, i), sigma_sh_sq, exp.max_l)[1]
           for i in range(exp.config.trials)]
    return _summary(res)[0]


def pca_profiles(config, m):
    """Singular values and truncation errors of ``config.trials`` noise-free matrices.

    Returns ``(singular_values, abs_errors, fractions, l95)``; the first three
    have shape (trials, r) and ``l95`` holds the smallest l per matrix whose
    fractional error is at most ``config.energy_threshold``.
    """
    fixed = make_scenario(m, config.side, config.seed)

    def one(t):
        scn = (make_scenario(m, config.side, rng.derive_seed(config.seed, rng.ANTENNAS, m, t))
               if config.redraw_antennas else fixed)
        users = sample_locations(config.n_pca, config.side,
                                 rng.derive_seed(config.seed, rng.PCA_USERS, m, t))
        f = svd(noise_free_rss_matrix(users, scn, config.path_loss), center=config.center_subspace)
        absolute, frac = tail_energy(f)
        return f.s, absolute, frac, select_l_by_energy(f, config.energy_threshold)

    out = _map(one, range(config.trials), config.threads)
    s, a, fr, l95 = zip(*out)
    return np.stack(s), np.stack(a), np.stack(fr), np.array(l95)


def mean_and_max_dev(samples):
    mean = samples.mean(axis=0)
    return mean, np.max(np.abs(samples - mean), axis=0)
