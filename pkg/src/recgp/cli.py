"""Command-line front end.

Every subcommand is a pure function of the resolved configuration: the same
config file and flags produce byte-identical output files.
"""

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import pipeline, rng
from .channel import RssMatrix, noise_free_rss_matrix, shadowed_rss_matrix
from .config import SCHEMA_VERSION, load_config, parse_override
from .errors import ConfigError, DataError, NumericError, ParameterError
from .scenario import make_scenario, sample_locations

log = logging.getLogger("recgp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _fmt(x):
    return repr(float(x))


class _Writer:
    """Collects output files for one command and writes its metadata document."""

    def __init__(self, cfg, command):
        self.cfg = cfg
        self.command = command
        self.out = Path(cfg.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.files = {}
        self.started = time.perf_counter()

    @property
    def banner(self):
        return f"recgp schema_version={SCHEMA_VERSION} seed={self.cfg.seed}"

    def text(self, name, body, comment=True):
        if comment:
            body = f"# {self.banner}\n{body}"
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(body)
        self.files[name] = hashlib.sha256(body.encode()).hexdigest()
        log.info("wrote %s", path)
        return path

    def csv(self, name, header, rows):
        lines = [",".join(header)]
        lines += [",".join(v if isinstance(v, str) else _fmt(v) if isinstance(v, float) else str(v)
                           for v in row) for row in rows]
        return self.text(name, "\n".join(lines) + "\n")

    def meta(self, **extra):
        doc = {"schema_version": SCHEMA_VERSION, "command": self.command,
               "seed": self.cfg.seed, "config": self.cfg.raw, "files": self.files,
               "power_unit": "dBm", "noise_parameter": "sigma_sh_sq is a variance in dB^2"}
        doc.update(extra)
        if self.cfg.record_timing:
            doc["wall_clock_s"] = time.perf_counter() - self.started
        self.text(f"{self.command.replace('-', '_')}_meta.json",
                  json.dumps(doc, indent=2, sort_keys=True) + "\n", comment=False)


def cmd_pca_analysis(cfg):
    w = _Writer(cfg, "pca-analysis")
    l95 = {}
    for m in cfg.m_values:
        s, absolute, frac, ls = pipeline.pca_profiles(cfg, m)
        s_mean, s_dev = pipeline.mean_and_max_dev(s)
        a_mean, a_dev = pipeline.mean_and_max_dev(absolute)
        f_mean, f_dev = pipeline.mean_and_max_dev(frac)
        r = s.shape[1]
        w.csv(f"pca_singular_values_M{m}.csv", ["l", "sigma_l", "max_dev"],
              [(i + 1, float(s_mean[i]), float(s_dev[i])) for i in range(r)])
        w.csv(f"pca_truncation_error_M{m}.csv",
              ["l", "abs_error", "abs_max_dev", "fraction", "fraction_max_dev"],
              [(i + 1, float(a_mean[i]), float(a_dev[i]), float(f_mean[i]), float(f_dev[i]))
               for i in range(r)])
        l95[str(m)] = ls.tolist()
    w.meta(l_at_energy_threshold=l95, energy_threshold=cfg.energy_threshold)


def cmd_rmse_sweep(cfg):
    w = _Writer(cfg, "rmse-sweep")
    selected = {}
    jsonl = []
    for m in cfg.m_values:
        exp = pipeline.Experiment(cfg, m)
        sweep = pipeline.sweep_noise(exp)
        w.csv(f"rmse_sweep_M{m}.csv", ["sigma_sh_sq", "method", "mean_rmse", "max_dev"],
              sweep.rows)
        selected[str(m)] = {_fmt(k): v for k, v in sweep.selected_l.items()}
        jsonl += [json.dumps(dict(json.loads(r.to_json()), m=m), sort_keys=True)
                  for r in sweep.results]
    w.text("eval_results.jsonl", "\n".join(jsonl) + "\n", comment=False)
    w.meta(selected_l=selected, l_policy=cfg.l_policy)


def cmd_l_sweep(cfg):
    w = _Writer(cfg, "l-sweep")
    for m in cfg.m_values:
        exp = pipeline.Experiment(cfg, m)
        sweep = pipeline.sweep_l(exp)
        w.csv(f"l_sweep_M{m}.csv", ["l", "sigma_sh_sq", "mean_rmse"], sweep.rows)
    w.meta()


def cmd_gen_scenario(cfg):
    """Write the antenna layout, training data and one shadowed test set per M."""
    w = _Writer(cfg, "gen-scenario")
    for m in cfg.m_values:
        scn = make_scenario(m, cfg.side, cfg.seed)
        w.text(f"scenario_M{m}.json", scn.to_json() + "\n", comment=False)
        train_users = sample_locations(cfg.n_train, cfg.side,
                                       rng.derive_seed(cfg.seed, rng.TRAIN_USERS))
        train_rss = noise_free_rss_matrix(train_users, scn, cfg.path_loss)
        w.text(f"train_rss_M{m}.csv", train_rss.to_csv())
        w.csv(f"train_users_M{m}.csv", ["x", "y"], [tuple(map(float, p)) for p in train_users])
        trial = rng.derive_seed(cfg.seed, pipeline.REPORT_BLOCK, 0)
        test_users = sample_locations(cfg.n_test, cfg.side, rng.derive_seed(trial, rng.TEST_USERS))
        clean = noise_free_rss_matrix(test_users, scn, cfg.path_loss)
        noisy = shadowed_rss_matrix(clean, cfg.noise_grid[0], rng.derive_seed(trial, rng.SHADOWING))
        w.text(f"test_rss_M{m}.csv", noisy.to_csv())
        w.csv(f"test_users_M{m}.csv", ["x", "y"], [tuple(map(float, p)) for p in test_users])
    w.meta()


def cmd_train(cfg, method="recgp", l=None, model_path=None):
    """Train a localizer for the first configured M and save it as JSON."""
    m = cfg.m_values[0]
    exp = pipeline.Experiment(cfg, m)
    if method == "recgp" and l is None:
        l = exp.resolve_l(cfg.noise_grid[0])
    if l is not None and not 1 <= l <= exp.max_l:
        raise ParameterError(f"l must lie in [1, {exp.max_l}], got {l}")
    model = exp.model(method, l)
    w = _Writer(cfg, "train")
    name = model_path or f"model_M{m}_{method}.json"
    path = Path(name)
    if path.is_absolute() or path.parent != Path("."):
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(model.to_json() + "\n")
        w.files[str(path)] = hashlib.sha256((model.to_json() + "\n").encode()).hexdigest()
    else:
        path = w.text(name, model.to_json() + "\n", comment=False)
    w.text(f"train_rss_M{m}.csv", exp.train_rss.to_csv())
    w.csv(f"train_users_M{m}.csv", ["x", "y"], [tuple(map(float, p)) for p in exp.train_users])
    w.meta(method=method, l=l, model=str(path),
           gp_x=model.gp_x.to_dict(), gp_y=model.gp_y.to_dict())
    return path


def cmd_localize(cfg, model_path, rss_path):
    with open(model_path, encoding="utf-8") as fh:
        model = pipeline.LocalizerModel.from_json(fh.read())
    with open(rss_path, encoding="utf-8") as fh:
        rss = RssMatrix.from_csv(fh.read())
    pred = pipeline.with_intervals(pipeline.localize(model, rss))
    w = _Writer(cfg, "localize")
    w.csv("predictions.csv",
          ["mean_x", "mean_y", "var_x", "var_y", "lo_x", "hi_x", "lo_y", "hi_y"],
          [tuple(float(v) for v in row) for row in pred])
    w.meta(model=str(model_path), rss=str(rss_path), method=model.method,
           l=model.subspace.l if model.subspace else None)


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, help="worker threads for Monte-Carlo trials")
    common.add_argument("--paper-scale", action="store_true",
                        help="paper-scale sizes: M in {30, 60}, 400 training users, 200 trials")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key path, e.g. sizes.trials=5")
    common.add_argument("--timing", action="store_true",
                        help="record wall-clock time in the metadata (breaks byte-identity)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="recgp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("pca-analysis", parents=[common], help="singular-value and truncation-error profiles")
    sub.add_parser("rmse-sweep", parents=[common], help="RecGP vs SGP RMSE over the noise grid")
    sub.add_parser("l-sweep", parents=[common], help="RecGP RMSE against subspace dimension")
    sub.add_parser("gen-scenario", parents=[common], help="write a scenario with training and test data")
    p = sub.add_parser("train", parents=[common], help="train and save a localizer")
    p.add_argument("--method", choices=pipeline.METHODS, default="recgp")
    p.add_argument("--l", type=int, help="subspace dimension (default: from l_policy)")
    p.add_argument("--model", help="model output path (default: <out>/model_M<m>_<method>.json)")
    p = sub.add_parser("localize", parents=[common], help="predict locations from an RSS CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--rss", required=True)
    return parser


def _resolve(args):
    overrides = [parse_override(s) for s in args.set]
    if args.seed is not None:
        overrides.append(("seed", args.seed))
    if args.out is not None:
        overrides.append(("output.dir", args.out))
    if args.threads is not None:
        overrides.append(("threads", args.threads))
    if args.timing:
        overrides.append(("output.timing", True))
    return load_config(args.config, overrides, paper_scale=args.paper_scale)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        if args.command == "pca-analysis":
            cmd_pca_analysis(cfg)
        elif args.command == "rmse-sweep":
            cmd_rmse_sweep(cfg)
        elif args.command == "l-sweep":
            cmd_l_sweep(cfg)
        elif args.command == "gen-scenario":
            cmd_gen_scenario(cfg)
        elif args.command == "train":
            cmd_train(cfg, args.method, args.l, args.model)
        elif args.command == "localize":
            cmd_localize(cfg, args.model, args.rss)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DataError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
