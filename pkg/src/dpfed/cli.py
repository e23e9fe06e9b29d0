"""Experiment orchestration CLI.

Subcommands: account / max-rounds / sigma (thin accountant wrappers printing
JSON), generate (dataset files), train (seeded runs -> per-run CSVs,
aggregate CSV, privacy report JSON) and sweep (noise/local-step grid with
budget-maximal round counts).  Configs are flat key = value files; unknown
keys are hard errors so a typo in a privacy parameter cannot pass silently.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import accountant, datagen, engine, metrics, models

RUN_HEADER = [
    "round",
    "algo",
    "seed",
    "train_loss",
    "metric_kind",
    "accuracy",
    "grad_dissim",
    "grad_log_dissim",
    "eps_so_far",
    "clip_C",
]

AGGREGATE_HEADER = [
    "round",
    "algo",
    "metric_kind",
    "train_loss_mean",
    "train_loss_std",
    "accuracy_mean",
    "accuracy_std",
    "grad_dissim_mean",
    "grad_dissim_std",
    "grad_log_dissim_mean",
    "grad_log_dissim_std",
    "eps_so_far",
    "clip_C_mean",
    "clip_C_std",
]


class ConfigError(ValueError):
    pass


_KEY_TYPES = {
    # dataset
    "data": str,  # synthetic | idx | csv | bin
    "users": int,
    "records": int,
    "features": int,
    "classes": int,
    "het_alpha": float,
    "het_beta": float,
    "flip_prob": float,
    "data_seed": int,
    "train_images": str,
    "train_labels": str,
    "gamma_pct": float,
    "subsample": int,
    "csv_path": str,
    "bin_path": str,
    # model
    "model": str,  # logreg | mlp
    "hidden": int,
    "pca_dim": int,
    "l2_reg": float,
    # training
    "algorithms": str,
    "rounds": int,
    "local_steps": int,
    "user_ratio": float,
    "data_ratio": float,
    "eta0": float,
    "eta_g": float,
    "sigma_g": float,
    "clip_mode": str,
    "clip_c": float,
    "sensitivity": str,
    "seed": int,
    "repeats": int,
    "delta": float,
    "warm_rounds": int,
    # sweep
    "budget_eps": float,
    "sigma_grid": str,
    "k_grid": str,
}

_DEFAULTS = {
    "features": 40,
    "classes": 10,
    "het_alpha": 0.0,
    "het_beta": 0.0,
    "flip_prob": 0.05,
    "data_seed": 0,
    "gamma_pct": 100.0,
    "model": "logreg",
    "hidden": 200,
    "pca_dim": 60,
    "l2_reg": 5e-3,
    "eta_g": 1.0,
    "sigma_g": 0.0,
    "clip_mode": engine.CLIP_FIXED,
    "clip_c": math.inf,
    "sensitivity": engine.SENS_RECORD,
    "seed": 0,
    "repeats": 3,
}


def parse_config(path: str) -> dict:
    cfg = dict(_DEFAULTS)
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in _KEY_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            caster = _KEY_TYPES[key]
            try:
                cfg[key] = caster(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from exc
    return cfg


def _require(cfg: dict, keys: list[str]):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")


def build_dataset(cfg: dict) -> datagen.FederatedDataset:
    kind = cfg.get("data")
    if kind == "synthetic":
        _require(cfg, ["users", "records"])
        synth = datagen.SynthConfig(
            users=cfg["users"],
            records=cfg["records"],
            n_features=cfg["features"],
            n_classes=cfg["classes"],
            alpha=cfg["het_alpha"],
            beta=cfg["het_beta"],
            flip_prob=cfg["flip_prob"],
            seed=cfg["data_seed"],
        )
        return datagen.synth_generate(synth)
    if kind == "idx":
        _require(cfg, ["train_images", "train_labels", "users"])
        for key in ("train_images", "train_labels"):
            if not os.path.exists(cfg[key]):
                raise ConfigError(f"{key} file does not exist: {cfg[key]}")
        features, labels = datagen.load_idx(cfg["train_images"], cfg["train_labels"])
        if "subsample" in cfg and cfg["subsample"] < len(labels):
            keep = np.random.default_rng(cfg["data_seed"]).choice(
                len(labels), size=cfg["subsample"], replace=False
            )
            features, labels = features[keep], labels[keep]
        raw = datagen.partition_by_similarity(
            features, labels, cfg["users"], cfg["gamma_pct"], cfg["data_seed"]
        )
        return datagen.preprocess(raw)
    if kind == "csv":
        _require(cfg, ["csv_path"])
        if not os.path.exists(cfg["csv_path"]):
            raise ConfigError(f"csv_path file does not exist: {cfg['csv_path']}")
        return datagen.load_csv(cfg["csv_path"])
    if kind == "bin":
        _require(cfg, ["bin_path"])
        if not os.path.exists(cfg["bin_path"]):
            raise ConfigError(f"bin_path file does not exist: {cfg['bin_path']}")
        return datagen.dataset_load(cfg["bin_path"])
    raise ConfigError(f"unknown or missing dataset kind: {kind!r}")


def build_model(cfg: dict, dataset: datagen.FederatedDataset):
    kind = cfg["model"]
    if kind == "logreg":
        return models.LogisticRegression(dataset.n_features, dataset.n_classes, cfg["l2_reg"])
    if kind == "mlp":
        pool_X, _ = dataset.train_pool()
        k = min(cfg["pca_dim"], dataset.n_features)
        projection, mean, _ = models.pca_fit(pool_X, k)
        return models.OneHiddenLayerNet(
            dataset.n_features,
            dataset.n_classes,
            hidden=cfg["hidden"],
            pca_projection=projection,
            pca_mean=mean,
            l2=cfg["l2_reg"],
        )
    raise ConfigError(f"unknown model kind: {kind!r}")


def _train_config(cfg: dict, algo: engine.Algorithm, seed: int) -> engine.TrainConfig:
    private = algo.private
    return engine.TrainConfig(
        algorithm=algo,
        rounds=cfg["rounds"],
        local_steps=cfg["local_steps"],
        user_ratio=cfg["user_ratio"],
        data_ratio=cfg["data_ratio"],
        eta0=cfg["eta0"],
        eta_g=cfg["eta_g"],
        sigma_g=cfg["sigma_g"] if private else 0.0,
        clip_mode=cfg["clip_mode"] if private else engine.CLIP_FIXED,
        clip_c=cfg["clip_c"] if private else math.inf,
        sensitivity=cfg["sensitivity"],
        l2_reg=cfg["l2_reg"],
        seed=seed,
    )


def _algorithms(cfg: dict) -> list[engine.Algorithm]:
    _require(cfg, ["algorithms"])
    out = []
    for name in cfg["algorithms"].split(","):
        name = name.strip()
        try:
            out.append(engine.Algorithm(name))
        except ValueError:
            valid = ", ".join(a.value for a in engine.Algorithm)
            raise ConfigError(f"unknown algorithm {name!r} (valid: {valid})") from None
    return out


def _mechanism_params(cfg: dict, dataset: datagen.FederatedDataset, rounds: int) -> accountant.MechanismParams:
    delta = cfg.get("delta", dataset.default_delta())
    return accountant.MechanismParams(
        sigma_g=cfg["sigma_g"],
        K=cfg["local_steps"],
        T=max(rounds, 1),
        l=cfg["user_ratio"],
        s=cfg["data_ratio"],
        M=dataset.n_users,
        R=dataset.records_per_user,
        delta=delta,
    )


def _warm_budget(cfg: dict, algos: list[engine.Algorithm]) -> int:
    if "warm_rounds" in cfg:
        return cfg["warm_rounds"]
    if any(a.warm for a in algos):
        return math.ceil(4.0 / cfg["user_ratio"])
    return 0


def _fmt(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _write_run_csv(path: str, rows: list[metrics.RoundMetrics], algo: str, seed: int):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RUN_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r.round,
                    algo,
                    seed,
                    _fmt(r.train_loss),
                    r.metric_kind,
                    _fmt(r.accuracy),
                    _fmt(r.grad_dissim),
                    _fmt(r.grad_log_dissim),
                    _fmt(r.eps_so_far),
                    _fmt(r.clip_c),
                ]
            )


def read_csv_rows(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_aggregate(run_paths: list[str], out_path: str):
    """Group run CSVs by (algo, round); mean/std (population) per metric."""
    groups: dict[tuple[str, int], list[dict]] = {}
    order: list[tuple[str, int]] = []
    for path in run_paths:
        for row in read_csv_rows(path):
            key = (row["algo"], int(row["round"]))
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(row)

    def stats(rows, field):
        vals = np.array([float(r[field]) for r in rows])
        if np.all(vals == vals[0]):  # covers non-finite columns (e.g. inf clip)
            return _fmt(vals[0]), _fmt(0.0)
        return _fmt(vals.mean()), _fmt(vals.std())

    with open(out_path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(AGGREGATE_HEADER)
        for algo, rnd in order:
            rows = groups[(algo, rnd)]
            line = [rnd, algo, rows[0]["metric_kind"]]
            for field in ("train_loss", "accuracy", "grad_dissim", "grad_log_dissim"):
                line.extend(stats(rows, field))
            line.append(rows[0]["eps_so_far"])
            line.extend(stats(rows, "clip_C"))
            writer.writerow(line)


def _eps_schedule(cfg: dict, dataset, warm_rounds: int):
    """Round -> privacy spent so far, from the cached per-round curve."""
    if cfg["sigma_g"] <= 0.0:
        return None
    p = _mechanism_params(cfg, dataset, cfg["rounds"])
    round_curve = accountant.third_party_round_curve(p)
    cache: dict[int, float] = {}

    def schedule(t: int) -> float:
        if t not in cache:
            total = accountant.compose(round_curve, t + warm_rounds)
            cache[t] = accountant.rdp_to_dp(total, p.delta)[0]
        return cache[t]

    return schedule


def _run_one(cfg: dict, dataset, model, algo: engine.Algorithm, seed: int, reference_loss, out_csv: str):
    warm = _warm_budget(cfg, [algo]) if algo.warm else 0
    schedule = _eps_schedule(cfg, dataset, warm) if algo.private else None
    train_cfg = _train_config(cfg, algo, seed)
    trace = engine.run(train_cfg, dataset, model, reference_loss=reference_loss, eps_schedule=schedule)
    _write_run_csv(out_csv, trace.rows, algo.value, seed)
    return out_csv


def _pool_worker(args):
    cfg, algo_value, seed, reference_loss, out_csv = args
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    return _run_one(cfg, dataset, model, engine.Algorithm(algo_value), seed, reference_loss, out_csv)


def _reference_loss(cfg: dict, dataset, model):
    if cfg["model"] != "logreg":
        return None
    _, loss, info = metrics.reference_optimum(dataset, model)
    if not info["converged"]:
        print(
            json.dumps({"warning": "reference optimum not converged", **info}),
            file=sys.stderr,
        )
    return loss


def _train_jobs(cfg: dict, dataset, model, out_dir: str, reference_loss):
    jobs = []
    for algo in _algorithms(cfg):
        for rep in range(cfg["repeats"]):
            seed = cfg["seed"] + rep
            out_csv = os.path.join(out_dir, f"run_{algo.value}_seed{seed}.csv")
            jobs.append((algo, seed, out_csv))
    workers = int(os.environ.get("DPFED_THREADS", "1"))
    if workers > 1:
        payload = [
            (cfg, algo.value, seed, reference_loss, out_csv) for algo, seed, out_csv in jobs
        ]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_pool_worker, payload))
    else:
        for algo, seed, out_csv in jobs:
            _run_one(cfg, dataset, model, algo, seed, reference_loss, out_csv)
    return [out_csv for _, _, out_csv in jobs]


def _write_privacy_report(cfg: dict, dataset, out_path: str, algos):
    if cfg["sigma_g"] <= 0.0:
        report = {
            "eps_third_party": None,
            "eps_server": None,
            "delta": cfg.get("delta", dataset.default_delta()),
            "delta_server": cfg.get("delta", dataset.default_delta()),
            "best_alpha": None,
            "path": "none",
            "warm_rounds": 0,
        }
    else:
        p = _mechanism_params(cfg, dataset, cfg["rounds"])
        warm = _warm_budget(cfg, algos)
        report = accountant.third_party_report(p, warm).to_dict()
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return report


def cmd_train(args) -> int:
    cfg = parse_config(args.config)
    _require(cfg, ["rounds", "local_steps", "user_ratio", "data_ratio", "eta0"])
    os.makedirs(args.out, exist_ok=True)
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    reference_loss = _reference_loss(cfg, dataset, model)
    run_files = _train_jobs(cfg, dataset, model, args.out, reference_loss)
    write_aggregate(run_files, os.path.join(args.out, "aggregate.csv"))
    _write_privacy_report(cfg, dataset, os.path.join(args.out, "privacy_report.json"), _algorithms(cfg))
    return 0


def cmd_sweep(args) -> int:
    cfg = parse_config(args.config)
    _require(cfg, ["budget_eps", "sigma_grid", "k_grid", "local_steps", "user_ratio", "data_ratio", "eta0"])
    os.makedirs(args.out, exist_ok=True)
    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    reference_loss = _reference_loss(cfg, dataset, model)
    sigma_grid = [float(v) for v in cfg["sigma_grid"].split(",")]
    k_grid = [int(v) for v in cfg["k_grid"].split(",")]
    algos = _algorithms(cfg)
    warm = _warm_budget(cfg, algos)

    results = []
    for sigma_g in sigma_grid:
        for k in k_grid:
            cell = dict(cfg)
            cell["sigma_g"] = sigma_g
            cell["local_steps"] = k
            p = _mechanism_params(cell, dataset, 1)
            t_max = accountant.max_rounds(cfg["budget_eps"], p, warm)
            if t_max == 0:
                results.append((sigma_g, k, 0, math.nan, math.nan))
                continue
            cell["rounds"] = t_max
            cell_dir = os.path.join(args.out, f"cell_sg{sigma_g:g}_K{k}")
            os.makedirs(cell_dir, exist_ok=True)
            run_files = _train_jobs(cell, dataset, model, cell_dir, reference_loss)
            write_aggregate(run_files, os.path.join(cell_dir, "aggregate.csv"))
            _write_privacy_report(cell, dataset, os.path.join(cell_dir, "privacy_report.json"), algos)
            tails = []
            for path in run_files:
                rows = read_csv_rows(path)
                accs = [float(r["accuracy"]) for r in rows]
                tails.append(metrics.tail_average(accs, 0.1))
            results.append((sigma_g, k, t_max, float(np.mean(tails)), float(np.std(tails))))

    with open(os.path.join(args.out, "results.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["sigma_g", "K", "T", "acc_mean", "acc_std"])
        for sigma_g, k, t_max, mean, std in results:
            writer.writerow([_fmt(sigma_g), k, t_max, _fmt(mean), _fmt(std)])
    return 0


def cmd_generate(args) -> int:
    cfg = parse_config(args.config)
    dataset = build_dataset(cfg)
    datagen.dataset_save(dataset, args.out)
    if args.csv:
        datagen.export_csv(dataset, args.csv)
    print(
        json.dumps(
            {
                "users": dataset.n_users,
                "records_per_user": dataset.records_per_user,
                "features": dataset.n_features,
                "classes": dataset.n_classes,
                "out": args.out,
            }
        )
    )
    return 0


def _params_from_flags(args, rounds: int) -> accountant.MechanismParams:
    delta = args.delta if args.delta is not None else 1.0 / (args.users * args.records)
    return accountant.MechanismParams(
        sigma_g=args.sigma_g,
        K=args.local_steps,
        T=rounds,
        l=args.user_ratio,
        s=args.data_ratio,
        M=args.users,
        R=args.records,
        delta=delta,
    )


def cmd_account(args) -> int:
    p = _params_from_flags(args, args.rounds)
    if args.path == "dp":
        report = accountant.dp_path_report(p)
    else:
        report = accountant.third_party_report(p, args.warm_rounds)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_max_rounds(args) -> int:
    p = _params_from_flags(args, 1)
    t_max = accountant.max_rounds(args.budget_eps, p, args.warm_rounds)
    print(json.dumps({"T": t_max, "budget_eps": args.budget_eps, "delta": p.delta}))
    return 0


def cmd_sigma(args) -> int:
    value = accountant.asymptotic_sigma(
        args.eps, args.delta, args.rounds, args.local_steps, args.user_ratio, args.data_ratio, args.users
    )
    print(json.dumps({"sigma_g": value}))
    return 0


def _add_mechanism_flags(sub, with_rounds=True):
    sub.add_argument("--sigma-g", type=float, required=True)
    sub.add_argument("--local-steps", type=int, required=True)
    if with_rounds:
        sub.add_argument("--rounds", type=int, required=True)
    sub.add_argument("--user-ratio", type=float, required=True)
    sub.add_argument("--data-ratio", type=float, required=True)
    sub.add_argument("--users", type=int, required=True)
    sub.add_argument("--records", type=int, required=True)
    sub.add_argument("--delta", type=float, default=None, help="default: 1/(users*records)")
    sub.add_argument("--warm-rounds", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpfed", description=__doc__)
    subs = parser.add_subparsers(dest="command", required=True)

    acct = subs.add_parser("account", help="print the privacy report for fixed parameters")
    _add_mechanism_flags(acct)
    acct.add_argument("--path", choices=["rdp", "dp"], default="rdp")
    acct.set_defaults(func=cmd_account)

    maxr = subs.add_parser("max-rounds", help="largest T within an epsilon budget")
    _add_mechanism_flags(maxr, with_rounds=False)
    maxr.add_argument("--budget-eps", type=float, required=True)
    maxr.set_defaults(func=cmd_max_rounds)

    sig = subs.add_parser("sigma", help="closed-form asymptotic noise scale")
    sig.add_argument("--eps", type=float, required=True)
    sig.add_argument("--delta", type=float, required=True)
    sig.add_argument("--rounds", type=int, required=True)
    sig.add_argument("--local-steps", type=int, required=True)
    sig.add_argument("--user-ratio", type=float, required=True)
    sig.add_argument("--data-ratio", type=float, required=True)
    sig.add_argument("--users", type=int, required=True)
    sig.set_defaults(func=cmd_sigma)

    gen = subs.add_parser("generate", help="materialize a dataset file from a config")
    gen.add_argument("--config", required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--csv", default=None)
    gen.set_defaults(func=cmd_generate)

    train = subs.add_parser("train", help="run seeded experiments from a config")
    train.add_argument("--config", required=True)
    train.add_argument("--out", required=True)
    train.set_defaults(func=cmd_train)

    sweep = subs.add_parser("sweep", help="noise/local-step grid at a fixed budget")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out", required=True)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
