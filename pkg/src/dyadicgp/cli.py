"""Command-line interface: verify | bench | train | predict | synth.

Heavy imports happen inside the command handlers so that --threads can pin
BLAS/OpenMP pool sizes through the environment before numpy loads.  Every
command echoes its effective configuration and run metadata into the output
directory; data-file writes are atomic (temp file + rename).
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
import time

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
    "NUMEXPR_NUM_THREADS",
)

TRAIN_DEFAULTS = {
    "model": {
        "hidden_dims": [10, 10],
        "depth": 6,
        "theta": 1.0,
        "squash": "sigmoid",
    },
    "train": {
        "epochs": 100,
        "batch_size": 512,
        "learning_rate": 0.001,
        "weight_decay": 0.0005,
        "train_samples": 10,
        "predict_samples": 20,
        "kl_warmup_frac": 0.0,
        "grad_clip": None,
        "noise_mode": "sample",
        "holdout_frac": 0.1,
        "noise_variance": 0.1,
        "noise_trainable": True,
    },
    "data": {
        "task": "regression",
        "target_column": None,
        "bounds": None,
    },
}


def _merge_config(defaults: dict, override: dict, path: str = "") -> dict:
    """Recursive merge rejecting keys the defaults do not know."""
    merged = copy.deepcopy(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            known = ", ".join(sorted(defaults))
            raise ValueError(f"unknown config key {where!r} (known: {known})")
        if isinstance(defaults[key], dict) and defaults[key]:
            if not isinstance(value, dict):
                raise ValueError(f"config key {where!r} must be a table")
            merged[key] = _merge_config(defaults[key], value, where)
        else:
            merged[key] = value
    return merged


def _load_config(path, defaults: dict) -> dict:
    if path is None:
        return copy.deepcopy(defaults)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as err:
            raise ValueError(f"{path}: config is not valid JSON: {err}") from err
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config root must be an object")
    return _merge_config(defaults, raw)


def _write_json(path, doc) -> None:
    from .data import _atomic_write_text

    _atomic_write_text(path, json.dumps(doc, indent=1))


def _run_meta(args, command: str, config, wall_s: float) -> dict:
    import numpy

    from . import __version__

    return {
        "command": command,
        "argv": sys.argv[1:],
        "seed": args.seed,
        "threads": args.threads,
        "config": config,
        "versions": {
            "dyadicgp": __version__,
            "numpy": numpy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_s": wall_s,
    }


def _float_cell(v) -> str:
    return repr(float(v))


def cmd_verify(args) -> int:
    from .verify import run_verification

    results = run_verification(fault=args.inject_fault)
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {mark}  {r.detail}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} suite(s) failed: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} suites passed")
    return 0


def cmd_bench(args) -> int:
    import numpy as np

    from .counters import counting
    from .data import write_csv
    from .layers import forward_dense, forward_sparse, init_layer

    t_start = time.perf_counter()
    levels = [int(s) for s in args.levels.split(",")]
    config = {
        "levels": levels,
        "batch": args.batch,
        "dims": args.dims,
        "samples": args.samples,
        "repeats": args.repeats,
        "warmup": args.warmup,
    }
    if args.repeats < 3 or args.warmup < 0:
        raise ValueError("need repeats >= 3 and warmup >= 0")
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for depth in levels:
        rng = np.random.default_rng(args.seed)
        layer = init_layer(args.dims, 1, depth, theta=1.0, rng=rng)
        x = rng.uniform(0.0, 1.0, (args.batch, args.dims))
        for path_name, fwd in (("dense", forward_dense), ("sparse", forward_sparse)):
            def one_pass():
                for _ in range(args.samples):
                    fwd(layer, x, mode="sample", rng=rng)

            for _ in range(args.warmup):
                one_pass()
            times = []
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                one_pass()
                times.append((time.perf_counter() - t0) * 1e3)
            with counting() as counter:
                one_pass()
            rows.append(
                {
                    "level": depth,
                    "path": path_name,
                    "batch": args.batch,
                    "dims": args.dims,
                    "samples": args.samples,
                    "median_ms": float(np.median(times)),
                    "madd_count": counter.total,
                }
            )
            print(
                f"L={depth:<3} {path_name:<6} median {rows[-1]['median_ms']:9.3f} ms   "
                f"{rows[-1]['madd_count']:>12} madds"
            )
    header = ["level", "path", "batch", "dims", "samples", "median_ms", "madd_count"]
    write_csv(
        os.path.join(args.out, "bench.csv"),
        header,
        [[r["level"], r["path"], r["batch"], r["dims"], r["samples"],
          _float_cell(r["median_ms"]), r["madd_count"]] for r in rows],
    )
    _write_json(os.path.join(args.out, "run_meta.json"),
                _run_meta(args, "bench", config, time.perf_counter() - t_start))
    print(f"wrote {os.path.join(args.out, 'bench.csv')}")
    return 0


def _expand_per_layer(value, n: int, what: str) -> list:
    if isinstance(value, (int, float)):
        return [value] * n
    if isinstance(value, list) and len(value) == n:
        return list(value)
    raise ValueError(f"model.{what} must be a scalar or a list of length {n}")


def _build_model(in_dim: int, out_dim: int, model_cfg: dict, rng):
    from .layers import Model, init_layer

    dims = [in_dim] + list(model_cfg["hidden_dims"]) + [out_dim]
    n_layers = len(dims) - 1
    depths = _expand_per_layer(model_cfg["depth"], n_layers, "depth")
    thetas = _expand_per_layer(model_cfg["theta"], n_layers, "theta")
    layers = [
        init_layer(dims[i], dims[i + 1], int(depths[i]), float(thetas[i]), rng)
        for i in range(n_layers)
    ]
    return Model(layers, squash=model_cfg["squash"])


def cmd_train(args) -> int:
    import numpy as np

    from . import metrics
    from .data import fit_normalizer, load_csv, save_model, write_csv
    from .vi import CategoricalLikelihood, GaussianLikelihood, TrainConfig, train

    t_start = time.perf_counter()
    config = _load_config(args.config, TRAIN_DEFAULTS)
    for key, flag in (
        ("epochs", args.epochs),
        ("batch_size", args.batch_size),
        ("learning_rate", args.lr),
        ("train_samples", args.samples),
    ):
        if flag is not None:
            config["train"][key] = flag
    if args.task is not None:
        config["data"]["task"] = args.task

    task = config["data"]["task"]
    dataset = load_csv(args.data, config["data"]["target_column"], task)
    tc = TrainConfig(
        epochs=int(config["train"]["epochs"]),
        batch_size=int(config["train"]["batch_size"]),
        learning_rate=float(config["train"]["learning_rate"]),
        weight_decay=float(config["train"]["weight_decay"]),
        train_samples=int(config["train"]["train_samples"]),
        predict_samples=int(config["train"]["predict_samples"]),
        kl_warmup_frac=float(config["train"]["kl_warmup_frac"]),
        grad_clip=config["train"]["grad_clip"],
        noise_mode=config["train"]["noise_mode"],
    ).validate()

    rng = np.random.default_rng(args.seed)
    bounds = config["data"]["bounds"]
    normalizer = fit_normalizer(
        dataset.x, None if bounds is None else np.asarray(bounds, dtype=float)
    )
    x_all = normalizer(dataset.x)
    y_all = dataset.y

    holdout_frac = float(config["train"]["holdout_frac"])
    n = x_all.shape[0]
    n_hold = int(round(holdout_frac * n))
    order = rng.permutation(n)
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    if train_idx.size == 0:
        raise ValueError("holdout fraction leaves no training data")
    x_tr, y_tr = x_all[train_idx], y_all[train_idx]
    holdout = (x_all[hold_idx], y_all[hold_idx]) if n_hold else None

    if task == "regression":
        out_dim = 1
        likelihood = GaussianLikelihood(
            float(config["train"]["noise_variance"]),
            trainable=bool(config["train"]["noise_trainable"]),
        )
        metric_fn = lambda y, f: metrics.rmse(y, f[:, 0])
        metric_name = "holdout_rmse"
    else:
        labels = dataset.label_names or sorted({int(v) for v in y_all})
        out_dim = len(labels)
        likelihood = CategoricalLikelihood(out_dim, labels)
        metric_fn = lambda y, f: float(np.mean(np.argmax(f, axis=1) == y))
        metric_name = "holdout_acc"

    model = _build_model(x_all.shape[1], out_dim, config["model"], rng)
    history = train(
        model, likelihood, x_tr, y_tr, tc, rng,
        holdout=holdout, metric_fn=metric_fn if holdout else None,
    )

    os.makedirs(args.out, exist_ok=True)
    save_model(model, likelihood, normalizer, os.path.join(args.out, "model.json"))
    write_csv(
        os.path.join(args.out, "history.csv"),
        ["epoch", "loss", "nll", "kl", metric_name],
        [
            [row.epoch, _float_cell(row.loss), _float_cell(row.nll), _float_cell(row.kl),
             "" if row.metric is None else _float_cell(row.metric)]
            for row in history
        ],
    )
    write_csv(
        os.path.join(args.out, "timings.csv"),
        ["epoch", "wall_s"],
        [[row.epoch, _float_cell(row.wall_s)] for row in history],
    )
    _write_json(os.path.join(args.out, "config.json"), config)
    _write_json(os.path.join(args.out, "run_meta.json"),
                _run_meta(args, "train", config, time.perf_counter() - t_start))
    last = history[-1]
    metric_txt = "" if last.metric is None else f", {metric_name}={last.metric:.4f}"
    print(
        f"trained {len(model.layers)} layers on {x_tr.shape[0]} rows: "
        f"loss={last.loss:.4f}, nll={last.nll:.4f}, kl={last.kl:.2f}{metric_txt}"
    )
    print(f"wrote model.json, history.csv, timings.csv in {args.out}")
    return 0


def cmd_predict(args) -> int:
    import numpy as np

    from . import metrics
    from .data import load_csv, load_model, write_csv
    from .vi import predict

    t_start = time.perf_counter()
    model, likelihood, normalizer = load_model(args.model)
    task = "regression" if likelihood.kind == "gaussian" else "classification"
    dataset = load_csv(args.data, args.target_column, task)
    if normalizer is not None and dataset.x.shape[1] != normalizer.n_features:
        raise ValueError(
            f"model was trained on {normalizer.n_features} features but "
            f"{args.data} provides {dataset.x.shape[1]}"
        )
    x = normalizer(dataset.x) if normalizer is not None else dataset.x
    rng = np.random.default_rng(args.seed)
    summary = predict(model, likelihood, x, args.samples, rng)

    os.makedirs(args.out, exist_ok=True)
    out_csv = os.path.join(args.out, "predictions.csv")
    if task == "regression":
        rows = [
            [i, _float_cell(dataset.y[i]), _float_cell(summary.mean[i]),
             _float_cell(summary.variance[i])]
            for i in range(dataset.n)
        ]
        r = metrics.rmse(dataset.y, summary.mean)
        d = metrics.nlpd(dataset.y, summary.mean, summary.variance)
        footer = [["metric", "value"], ["rmse", _float_cell(r)], ["nlpd", _float_cell(d)]]
        write_csv(out_csv, ["row", "y", "pred_mean", "pred_var"], rows, footer)
        print(f"rmse={r:.6f} nlpd={d:.6f} on {dataset.n} rows")
    else:
        names = likelihood.labels or list(range(likelihood.n_classes))
        header = (
            ["row", "y", "pred_label"]
            + [f"prob_{c}" for c in names]
            + ["entropy", "mutual_info"]
        )
        pred_idx = np.argmax(summary.probs, axis=1)
        rows = [
            [i, dataset.label_names[dataset.y[i]] if dataset.label_names else dataset.y[i],
             names[pred_idx[i]]]
            + [_float_cell(p) for p in summary.probs[i]]
            + [_float_cell(summary.entropy[i]), _float_cell(summary.mutual_information[i])]
            for i in range(dataset.n)
        ]
        acc = metrics.accuracy(dataset.y, summary.probs)
        nll = metrics.nll_categorical(dataset.y, summary.probs)
        cal = metrics.ece(dataset.y, summary.probs)
        footer = [["metric", "value"], ["accuracy", _float_cell(acc)],
                  ["nll", _float_cell(nll)], ["ece", _float_cell(cal)]]
        write_csv(out_csv, header, rows, footer)
        print(f"accuracy={acc:.4f} nll={nll:.4f} ece={cal:.4f} on {dataset.n} rows")
    _write_json(os.path.join(args.out, "run_meta.json"),
                _run_meta(args, "predict", {"samples": args.samples}, time.perf_counter() - t_start))
    print(f"wrote {out_csv}")
    return 0


def cmd_synth(args) -> int:
    import numpy as np

    from .data import sample_se_gp, write_csv

    t_start = time.perf_counter()
    if args.kind != "se_gp_1d":
        raise ValueError(f"unknown synthetic dataset kind {args.kind!r}")
    lo_tr, hi_tr = args.train_range
    lo_te, hi_te = args.test_range
    if not (lo_tr < hi_tr and lo_te < hi_te):
        raise ValueError("ranges must be increasing (lo hi)")
    rng = np.random.default_rng(args.seed)
    x_train = np.sort(rng.uniform(lo_tr, hi_tr, args.train_n))
    x_test = np.linspace(lo_te, hi_te, args.test_n)
    joint = np.concatenate([x_train, x_test])
    if np.unique(joint).size != joint.size:
        raise ValueError("train and test grids collide; change the seed or sizes")
    ds = sample_se_gp(joint, lengthscale=args.lengthscale, noise_std=args.noise_std, rng=rng)
    y_train = ds.y[: args.train_n]
    y_test = ds.y[args.train_n :]

    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "train.csv"), ["x", "y"],
              [[_float_cell(a), _float_cell(b)] for a, b in zip(x_train, y_train)])
    write_csv(os.path.join(args.out, "test.csv"), ["x", "y"],
              [[_float_cell(a), _float_cell(b)] for a, b in zip(x_test, y_test)])
    ood = np.abs(x_test) > hi_tr
    meta = {
        "kind": args.kind,
        "train_range": [lo_tr, hi_tr],
        "test_range": [lo_te, hi_te],
        "lengthscale": args.lengthscale,
        "noise_std": args.noise_std,
        "train_n": args.train_n,
        "test_n": args.test_n,
        "ood_rule": f"abs(x) > {hi_tr}",
        "ood_rows": np.nonzero(ood)[0].tolist(),
        "normalizer_bounds": [[lo_te, hi_te]],
    }
    _write_json(os.path.join(args.out, "synth_meta.json"), meta)
    _write_json(os.path.join(args.out, "run_meta.json"),
                _run_meta(args, "synth", meta, time.perf_counter() - t_start))
    print(f"wrote train.csv ({args.train_n} rows), test.csv ({args.test_n} rows) in {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyadicgp",
        description="Sparse dyadic-basis GP layers: verify, benchmark, train, predict, synthesize.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_default):
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None,
                       help="pin BLAS/OpenMP thread pools (set before numpy loads)")
        p.add_argument("--out", default=out_default, help="output directory")

    p = sub.add_parser("verify", help="run the invariant suites")
    common(p, "runs/verify")
    p.add_argument("--inject-fault", choices=["theta-flip"], default=None,
                   help="debug hook: corrupt the Gram kernel to prove checks can fail")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench", help="dense vs sparse forward timing and madd counts")
    common(p, "runs/bench")
    p.add_argument("--levels", default="5,10", help="comma-separated dyadic depths")
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--dims", type=int, default=128)
    p.add_argument("--samples", type=int, default=10)
    p.add_argument("--repeats", type=int, default=11)
    p.add_argument("--warmup", type=int, default=3)
    p.set_defaults(fn=cmd_bench, threads_default=1)

    p = sub.add_parser("train", help="fit a model on a CSV dataset")
    common(p, "runs/train")
    p.add_argument("--data", required=True, help="training CSV (header row, target column)")
    p.add_argument("--task", choices=["regression", "classification"], default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--samples", type=int, default=None, help="MC samples per step")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="posterior predictions from a saved model")
    common(p, "runs/predict")
    p.add_argument("--model", required=True, help="model.json from train")
    p.add_argument("--data", required=True, help="input CSV")
    p.add_argument("--samples", type=int, default=20, help="predictive draws")
    p.add_argument("--target-column", default=None)
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("synth", help="draw a synthetic GP dataset")
    common(p, "runs/synth")
    p.add_argument("--kind", default="se_gp_1d", choices=["se_gp_1d"])
    p.add_argument("--train-n", type=int, default=2000)
    p.add_argument("--test-n", type=int, default=400)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--lengthscale", type=float, default=1.0)
    p.add_argument("--train-range", type=float, nargs=2, default=[-3.0, 3.0])
    p.add_argument("--test-range", type=float, nargs=2, default=[-5.0, 5.0])
    p.set_defaults(fn=cmd_synth)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    threads = args.threads
    if threads is None:
        threads = getattr(args, "threads_default", None)
    if threads is not None:
        if threads < 1:
            raise SystemExit("--threads must be positive")
        for var in _THREAD_VARS:
            os.environ[var] = str(threads)
        args.threads = threads
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
