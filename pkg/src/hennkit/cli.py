"""Command-line entry point for reproducible experiments.

One binary with subcommands (gen-data, train, similarity, bounds,
rand-study, eval).  Every command resolves its configuration from built-in
defaults, an optional JSON config file, and ``--set key=value`` overrides
(unknown keys are rejected), then writes a manifest echoing the resolved
configuration beside its outputs.  Outputs are deterministic per seed;
wall-clock timestamps appear only in the manifest.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 assumption violation (e.g. mismatched kernels).
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AssumptionError, ConfigError, NumericalError
from . import diffusion, filters, gnn, henn, hypergraph, randgraph, spectral, train

OUTPUT_ENV = "HENNKIT_OUT"


# Per-command configuration schemas: key -> (default, help). ``None``
# defaults with a trailing ``*`` in the help text are required.
SCHEMAS = {
    "gen-data": {
        "n_points": (500, "points sampled on the torus"),
        "radius": (0.4, "proximity radius of the Vietoris-Rips complex"),
        "t_max": (30, "diffusion steps per source"),
        "step_size": (0.05, "explicit Euler step size"),
        "noise_sd": (0.1, "input and measurement noise standard deviation"),
        "n_train": (500, "training samples"),
        "n_test": (300, "test samples"),
        "geometry_seed": (0, "seed for the torus sample"),
        "seed": (0, "seed for sources, trajectories and noise"),
    },
    "similarity": {
        "a": (None, "CSV matrix for the reference operator"),
        "b": (None, "CSV matrix for the compared operator"),
        "hg_a": (None, "hypergraph file for the reference operator"),
        "hg_b": (None, "hypergraph file for the compared operator"),
        "kind": ("clique-henn", "shift operator kind for hypergraph inputs"),
    },
    "bounds": {
        "hg": (None, "hypergraph file providing the base operator"),
        "kind": ("clique-henn", "operator kind when building from a hypergraph"),
        "size": (16, "matrix size when no hypergraph is given"),
        "delta_r": (0.02, "relative perturbation norm"),
        "delta_a": (0.01, "additive perturbation norm"),
        "taps": (3, "filter taps for the filter/network certificates"),
        "features": (2, "network width for the network certificate"),
        "layers": (2, "network depth for the network certificate"),
        "trials": (50, "Monte Carlo inputs per network check"),
        "slack": (2.0, "second-order slack multiplier"),
        "seed": (0, "seed for operators, perturbations and models"),
    },
    "rand-study": {
        "model": ("er", "random graph model: er | chung-lu | graphon"),
        "sizes": ([64, 128, 256, 512], "graph sizes"),
        "trials": (20, "independent pairs per size"),
        "p": (0.5, "edge probability for the er model"),
        "seed": (0, "base seed"),
        "plot": (False, "also render an SVG log-log plot"),
        "semicircle_n": (0, "if > 0, also run the semicircle ESD check at this size"),
    },
    "train": {
        "dataset": (None, "dataset file written by gen-data"),
        "hg": (None, "hypergraph file written by gen-data"),
        "architectures": (list(henn.ARCHITECTURES), "architectures to train"),
        "shuffles": (3, "random train/test reshuffles"),
        "cross_validate": (False, "select hyperparameters by k-fold UCB score"),
        "model_space": ([{}], "list of TrainConfig overrides to search"),
        "epochs": (60, "training epochs"),
        "batch_size": (32, "minibatch size"),
        "lr": (0.0005, "Adam learning rate"),
        "taps": (3, "filter taps per layer"),
        "features": (8, "hidden width"),
        "nonlinearity": ("relu", "pointwise nonlinearity"),
        "il_cap": (10.0, "integral Lipschitz cap"),
        "il_penalty_weight": (0.05, "penalty weight"),
        "folds": (5, "cross-validation folds"),
        "seed": (0, "training seed"),
    },
    "eval": {
        "checkpoint": (None, "model checkpoint to evaluate"),
        "dataset": (None, "dataset file"),
        "hg": (None, "hypergraph file"),
    },
}


def _parse_override(text: str):
    key, sep, value = text.partition("=")
    if not sep:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def resolve_config(command: str, config_path, overrides) -> dict:
    schema = SCHEMAS[command]
    cfg = {key: default for key, (default, _help) in schema.items()}
    file_values = {}
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as fh:
                file_values = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must hold a JSON object")
    merged = list(file_values.items()) + [_parse_override(o) for o in overrides or []]
    for key, value in merged:
        if key not in schema:
            raise ConfigError(f"unknown config key {key!r} for command {command}")
        cfg[key] = value
    return cfg


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_ENV) or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(out: Path, command: str, config: dict):
    manifest = {
        "command": command,
        "config": config,
        "versions": {
            "hennkit": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(path: Path, payload: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_gen_data(config: dict, out: Path) -> int:
    gh = diffusion.sample_torus_vr(
        n_points=int(config["n_points"]),
        radius=float(config["radius"]),
        seed=int(config["geometry_seed"]),
    )
    dataset = diffusion.generate_dataset(
        gh,
        t_max=int(config["t_max"]),
        step_size=float(config["step_size"]),
        noise_sd=float(config["noise_sd"]),
        n_train=int(config["n_train"]),
        n_test=int(config["n_test"]),
        seed=int(config["seed"]),
    )
    hypergraph.save_hg(gh.hypergraph, out / "hypergraph.hg")
    diffusion.save_dataset(dataset, out / "dataset.txt")
    _write_json(
        out / "gen-data.json",
        {
            "nodes": gh.hypergraph.n,
            "hyperedges": gh.hypergraph.m,
            "sources": [int(s) for s in dataset.sources],
            "train": int(dataset.train_idx.size),
            "test": int(dataset.test_idx.size),
        },
    )
    return 0


def _load_operator(config: dict, matrix_key: str, hg_key: str):
    if config[matrix_key]:
        mat = np.loadtxt(config[matrix_key], delimiter=",", ndmin=2)
        return hypergraph.ShiftOperator(mat, "custom")
    if config[hg_key]:
        h = hypergraph.load_hg(config[hg_key])
        return hypergraph.gso(h, config["kind"])
    raise ConfigError(f"need either {matrix_key!r} (CSV) or {hg_key!r} (hypergraph)")


def cmd_similarity(config: dict, out: Path) -> int:
    a = _load_operator(config, "a", "hg_a")
    b = _load_operator(config, "b", "hg_b")
    report = spectral.spectral_similarity(a, b)
    payload = {
        "epsilon": None if math.isinf(report.epsilon) else report.epsilon,
        "kernel_mismatch": math.isinf(report.epsilon),
        "certified": report.certified,
        "zero_mult": [report.zero_mult_s, report.zero_mult_s_tilde],
        "mu_max": None if math.isinf(report.epsilon) else report.mu_max,
        "mu_min": None if math.isinf(report.epsilon) else report.mu_min,
        "per_eigen_ratios": [float(r) for r in report.eigenvalue_ratios],
    }
    _write_json(out / "similarity.json", payload)
    if math.isinf(report.epsilon):
        print("kernel multiplicities differ; no finite similarity coefficient", file=sys.stderr)
        return 4
    return 0


def cmd_bounds(config: dict, out: Path) -> int:
    rng = np.random.default_rng(int(config["seed"]))
    if config["hg"]:
        h = hypergraph.load_hg(config["hg"])
        base = hypergraph.gso(h, config["kind"])
    else:
        n = int(config["size"])
        q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        base = hypergraph.ShiftOperator(
            (q * rng.uniform(0.5, 2.0, size=n)) @ q.T, "custom"
        )
    delta_r = float(config["delta_r"])
    delta_a = float(config["delta_a"])
    spec = spectral.eigendecompose(base)
    # An additive norm at or beyond the spectral gap leaves the PSD cone;
    # clamp it and record the value actually used.
    gap = spec.smallest_nonzero()
    delta_a_used = min(delta_a, 0.45 * gap)
    e = spectral.random_relative_direction(base, delta_r, rng) if delta_r else np.zeros(base.matrix.shape)
    d = (
        spectral.random_additive_direction(base, delta_a_used, rng)
        if delta_a_used
        else np.zeros(base.matrix.shape)
    )

    certificates = []
    rel, rel_bound = spectral.perturb_relative(base, e)
    add, add_bound = spectral.perturb_additive(base, d)
    comb, comb_bound = spectral.perturb_combined(base, e, d)
    for name, tilde, bound in (
        ("relative", rel, rel_bound),
        ("additive", add, add_bound),
        ("combined", comb, comb_bound),
    ):
        measured = spectral.spectral_similarity(base, tilde).epsilon
        certificates.append(
            {
                "certificate": f"perturbation-{name}",
                "bound": bound,
                "measured_epsilon": measured,
                "holds": bool(measured <= bound + 1e-8),
            }
        )

    eps = spectral.spectral_similarity(base, comb).epsilon
    if math.isinf(eps):
        print("perturbed operator changed the kernel multiplicity", file=sys.stderr)
        return 4
    taps = int(config["taps"])
    coeffs = rng.standard_normal(taps + 1)
    filt = filters.normalize(filters.GraphFilter(coeffs), [base, comb])
    freport = filters.check_filter_transfer(filt, base, comb, eps, float(config["slack"]))
    certificates.append(
        {
            "certificate": "filter-transfer",
            "bound": freport.bound,
            "measured_epsilon": eps,
            "measured_deviation": freport.diff_norm,
            "il_constant": freport.c_used,
            "holds": freport.holds,
        }
    )

    widths = (1,) + (int(config["features"]),) * (int(config["layers"]) - 1) + (1,)
    model = gnn.random_gnn(widths, taps, rng, "tanh")
    hull = filters.spectral_hull(base, comb)
    eigs = np.concatenate(
        [spectral.eigendecompose(base).eigenvalues, spectral.eigendecompose(comb).eigenvalues]
    )
    model = gnn.normalize_model(model, eigs)
    nreport = gnn.check_gnn_transfer(
        model, base, comb, eps, int(config["trials"]), rng, float(config["slack"])
    )
    certificates.append(
        {
            "certificate": "network-transfer",
            "bound": nreport.bound,
            "measured_epsilon": eps,
            "measured_deviation": nreport.max_deviation,
            "il_constant": nreport.c_used,
            "holds": nreport.holds,
        }
    )
    multi = henn.multi_representation_bound(
        [len(widths) - 1] * 2, [max(widths)] * 2, [eps, eps], nreport.c_used
    )
    certificates.append(
        {
            "certificate": "multi-representation-bound",
            "bound": multi,
            "measured_epsilon": eps,
            "holds": True,
        }
    )
    _write_json(
        out / "bounds.json",
        {
            "spectral_hull": list(hull),
            "delta_r": delta_r,
            "delta_a": delta_a_used,
            "certificates": certificates,
        },
    )
    return 0 if all(c["holds"] for c in certificates) else 3


def cmd_rand_study(config: dict, out: Path) -> int:
    params = {"p": float(config["p"])}
    study = randgraph.similarity_decay(
        config["model"],
        sizes=[int(v) for v in config["sizes"]],
        trials=int(config["trials"]),
        seed=int(config["seed"]),
        params=params,
    )
    randgraph.write_study_csv(study, out / "study.csv")
    randgraph.write_study_summary(study, out / "summary.json")
    if config["plot"]:
        randgraph.plot_study_svg(study, out / "study.svg")
    if int(config["semicircle_n"]) > 0:
        n = int(config["semicircle_n"])
        rng = np.random.default_rng(int(config["seed"]))
        adjacency = randgraph.sample_connected(
            lambda r: randgraph.gen_er(n, float(config["p"]), r), rng
        )
        ks = randgraph.semicircle_distance(randgraph.esd_from_adjacency(adjacency))
        _write_json(out / "semicircle.json", {"n": n, "ks_distance": ks})
    return 0


def cmd_train(config: dict, out: Path) -> int:
    if not config["dataset"] or not config["hg"]:
        raise ConfigError("train needs both 'dataset' and 'hg' paths")
    dataset = diffusion.load_dataset(config["dataset"])
    h = hypergraph.load_hg(config["hg"])
    ctx = henn.LocalizerContext(h)
    tc = train.TrainConfig(
        lr=float(config["lr"]),
        epochs=int(config["epochs"]),
        batch_size=int(config["batch_size"]),
        taps=int(config["taps"]),
        features=int(config["features"]),
        nonlinearity=config["nonlinearity"],
        il_cap=float(config["il_cap"]),
        il_penalty_weight=float(config["il_penalty_weight"]),
        folds=int(config["folds"]),
        seed=int(config["seed"]),
    )
    architectures = list(config["architectures"])
    report = {}
    if config["cross_validate"]:
        for arch in architectures:
            cv = train.cross_validate(dataset, config["model_space"], tc, ctx, arch)
            report[arch] = {
                "validation_mean": cv.validation_mean,
                "validation_sd": cv.validation_sd,
                "test_mean": cv.test_accuracy,
                "test_sd": 0.0,
                "max_filter_c": cv.max_filter_c,
                "selected": cv.selected,
            }
    else:

        def log_sink(arch, shuffle, rows, model):
            log_path = out / f"log_{arch}_shuffle{shuffle}.csv"
            with open(log_path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["step", "loss", "ce", "penalty", "lr", "max_C"])
                for row in rows:
                    writer.writerow([row[0]] + [repr(float(v)) for v in row[1:]])
            with open(out / f"model_{arch}_shuffle{shuffle}.json", "w", encoding="utf-8") as fh:
                json.dump(henn.localizer_to_dict(model), fh)

        report = train.run_comparison(
            dataset,
            ctx,
            tc,
            architectures=architectures,
            shuffles=int(config["shuffles"]),
            log_sink=log_sink,
        )
    _write_json(out / "report.json", report)
    return 0


def cmd_eval(config: dict, out: Path) -> int:
    for key in ("checkpoint", "dataset", "hg"):
        if not config[key]:
            raise ConfigError(f"eval needs the {key!r} path")
    with open(config["checkpoint"], "r", encoding="utf-8") as fh:
        model = henn.localizer_from_dict(json.load(fh))
    dataset = diffusion.load_dataset(config["dataset"])
    ctx = henn.LocalizerContext(hypergraph.load_hg(config["hg"]))
    (_, _), (test_x, test_y) = dataset.split()
    accuracy = train.evaluate(model, ctx, test_x, test_y)
    _write_json(
        out / "eval.json",
        {"architecture": model.architecture, "test_accuracy": accuracy, "n_test": int(test_y.size)},
    )
    return 0


COMMANDS = {
    "gen-data": cmd_gen_data,
    "similarity": cmd_similarity,
    "bounds": cmd_bounds,
    "rand-study": cmd_rand_study,
    "train": cmd_train,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hennkit",
        description="Hypergraph spectral signal processing toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", help="JSON config file")
        p.add_argument(
            "--set",
            dest="overrides",
            action="append",
            metavar="KEY=VALUE",
            help="override one config key (JSON-parsed value)",
        )
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or .)")
        for key, (default, help_text) in SCHEMAS[name].items():
            p.add_argument(
                f"--{key.replace('_', '-')}",
                dest=f"cfg_{key}",
                default=None,
                help=f"{help_text} (default {default!r})",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args.command, args.config, args.overrides)
        for key in SCHEMAS[args.command]:
            flag = getattr(args, f"cfg_{key}", None)
            if flag is not None:
                try:
                    config[key] = json.loads(flag)
                except json.JSONDecodeError:
                    config[key] = flag
        out = _out_dir(args)
        write_manifest(out, args.command, config)
        return COMMANDS[args.command](config, out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except AssumptionError as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
