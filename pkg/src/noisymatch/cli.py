"""Command-line surface: reproducible data generation, training, evaluation,
theory verification, sweeps, and plot export.

Every command resolves its configuration from built-in defaults, then an
optional JSON config file, then explicit flags (flags win), and emits a run
manifest. Outputs are pure functions of flags, input files, and the seed;
only the recorded wall time differs between reruns, and it is excluded from
the manifest hash that keys run directories.

Exit codes: 0 success, 2 usage error, 3 validation failure, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, theory, training
from .data import GenConfig, generate_bimodal, inject_noise, load_dataset, save_dataset
from .training import TrainConfig, TrainingDivergedError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest_key(command: str, config: dict, dataset_hash, seed) -> str:
    payload = {
        "command": command,
        "config": config,
        "dataset_hash": dataset_hash,
        "seed": seed,
        "code_version": __version__,
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _write_manifest(path, command, config, dataset_hash, seed, outputs, wall_time_s) -> dict:
    manifest = {
        "command": command,
        "config": config,
        "dataset_hash": dataset_hash,
        "seed": seed,
        "code_version": __version__,
        "run_key": _manifest_key(command, config, dataset_hash, seed),
        "outputs": outputs,
        "wall_time_s": wall_time_s,
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def _merge_config(defaults: dict, config_path, flag_values: dict) -> dict:
    """defaults < JSON config file < explicit flags."""
    merged = dict(defaults)
    if config_path:
        with open(config_path) as fh:
            file_cfg = json.load(fh)
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    merged.update({k: v for k, v in flag_values.items() if v is not None})
    return merged


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in [0, 1), got {text}")
    return value


def _int_list(text: str) -> list:
    items = [int(tok) for tok in text.split(",") if tok]
    if not items:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated list")
    return items


def _float_list(text: str) -> list:
    items = [float(tok) for tok in text.split(",") if tok]
    if not items:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated list")
    return items


def _str_list(text: str) -> list:
    items = [tok.strip() for tok in text.split(",") if tok.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated list")
    return items


# ---------------------------------------------------------------------------
# gen-data


_GEN_DEFAULTS = {
    "n": 1000,
    "latent_dim": 8,
    "d_v": 16,
    "d_t": 12,
    "noise_std": 0.1,
    "eta": 0.0,
    "holdout": 0,
    "seed": 0,
}


def cmd_gen_data(args) -> int:
    start = time.monotonic()
    cfg = _merge_config(
        _GEN_DEFAULTS,
        args.config,
        {
            "n": args.n,
            "latent_dim": args.latent_dim,
            "d_v": args.d_v,
            "d_t": args.d_t,
            "noise_std": args.noise_std,
            "eta": args.eta,
            "holdout": args.holdout,
            "seed": args.seed,
        },
    )
    gen = GenConfig(
        n=cfg["n"],
        latent_dim=cfg["latent_dim"],
        d_v=cfg["d_v"],
        d_t=cfg["d_t"],
        noise_std=cfg["noise_std"],
        seed=cfg["seed"],
    )
    full = generate_bimodal(gen)
    holdout = int(cfg["holdout"])
    if holdout < 0 or holdout >= gen.n:
        raise ValueError(f"holdout must be in [0, n), got {holdout}")

    out = Path(args.out)
    outputs = {}
    if holdout:
        train_part = full.subset(np.arange(gen.n - holdout))
        test_part = full.subset(np.arange(gen.n - holdout, gen.n))
        noisy = inject_noise(train_part, cfg["eta"], cfg["seed"])
        save_dataset(noisy, out)
        test_path = out.with_suffix(out.suffix + ".test")
        save_dataset(test_part, test_path)
        outputs["test_dataset"] = {"path": str(test_path), "sha256": _sha256_file(test_path)}
    else:
        noisy = inject_noise(full, cfg["eta"], cfg["seed"])
        save_dataset(noisy, out)
    outputs["dataset"] = {"path": str(out), "sha256": _sha256_file(out)}

    manifest_path = Path(str(out) + ".manifest.json")
    _write_manifest(
        manifest_path,
        "gen-data",
        cfg,
        outputs["dataset"]["sha256"],
        cfg["seed"],
        outputs,
        time.monotonic() - start,
    )
    print(f"wrote {out} (n={noisy.n}, eta={noisy.noise_rate:.4f})")
    if holdout:
        print(f"wrote {outputs['test_dataset']['path']} (clean holdout, n={holdout})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _train_defaults() -> dict:
    d = TrainConfig().to_dict()
    return d


def _train_config_from_args(args) -> tuple:
    flag_values = {
        "batch_size": args.batch_size,
        "learning_rate": args.lr,
        "lr_decay_epoch": args.lr_decay_epoch,
        "lr_decay_factor": args.lr_decay_factor,
        "piece_lengths": args.pieces,
        "freeze_epochs": args.freeze_epochs,
        "label_momentum": args.label_momentum,
        "label_threshold": args.label_threshold,
        "temperature": args.temperature,
        "comp_weight": args.comp_weight,
        "loss": args.loss,
        "comp_q": args.comp_q,
        "margin": args.margin,
        "curve": args.curve,
        "use_scc": {"on": True, "off": False, "auto": None}[args.scc] if args.scc else None,
        "seed": args.seed,
        "dim": args.dim,
        "val_fraction": args.val_fraction,
        "sgd_momentum": args.sgd_momentum,
    }
    merged = _merge_config(_train_defaults(), args.config, flag_values)
    return TrainConfig.from_dict(merged), merged


def cmd_train(args) -> int:
    start = time.monotonic()
    cfg, merged = _train_config_from_args(args)
    cfg.validate()
    ds = load_dataset(args.data)
    dataset_hash = _sha256_file(args.data)

    run_key = _manifest_key("train", merged, dataset_hash, cfg.seed)
    run_dir = Path(args.outdir) / run_key
    run_dir.mkdir(parents=True, exist_ok=True)
    snap_json = run_dir / "snapshot.json"
    snap_bin = run_dir / "model.bin"

    resume = None
    if args.resume:
        resume_dir = Path(args.resume)
        resume = training.load_snapshot(resume_dir / "snapshot.json", resume_dir / "model.bin")

    def hook(snap):
        training.save_snapshot(snap, snap_json, snap_bin)

    result = training.train(ds, cfg, resume=resume, epoch_hook=hook)

    history_path = run_dir / "history.csv"
    training.export_history(result.history, history_path)

    if args.test_data:
        test_ds = load_dataset(args.test_data)
        eval_result = training.evaluate(result.params, test_ds)
    else:
        eval_result = result.history[-1].recalls
    auc, mean_clean, mean_noisy = training.correction_quality(result.state, ds)
    eval_result.correction_auc = auc
    eval_result.mean_label_clean = mean_clean
    eval_result.mean_label_noisy = mean_noisy
    eval_path = run_dir / "eval.json"
    with open(eval_path, "w") as fh:
        json.dump(eval_result.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")

    outputs = {
        "run_dir": str(run_dir),
        "history": str(history_path),
        "eval": str(eval_path),
        "snapshot": [str(snap_json), str(snap_bin)],
    }
    _write_manifest(
        run_dir / "manifest.json", "train", merged, dataset_hash, cfg.seed, outputs,
        time.monotonic() - start,
    )
    print(f"run dir: {run_dir}")
    print(f"rsum: {eval_result.rsum:.2f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def cmd_eval(args) -> int:
    start = time.monotonic()
    snap_dir = Path(args.model)
    snap = training.load_snapshot(snap_dir / "snapshot.json", snap_dir / "model.bin")
    test_ds = load_dataset(args.data)
    result = training.evaluate(snap.params, test_ds)
    out = Path(args.out) if args.out else None
    text = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    if out:
        out.write_text(text)
        _write_manifest(
            Path(str(out) + ".manifest.json"),
            "eval",
            {"model": str(snap_dir), "data": str(args.data)},
            _sha256_file(args.data),
            snap.config.seed,
            {"eval": str(out)},
            time.monotonic() - start,
        )
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify-theory


_THEORY_DEFAULTS = {
    "n": 4,
    "eta": 0.2,
    "q": None,
    "grid": 30,
    "samples": 10_000,
    "curve_points": 101,
    "seed": 0,
}


def cmd_verify_theory(args) -> int:
    start = time.monotonic()
    cfg = _merge_config(
        _THEORY_DEFAULTS,
        args.config,
        {
            "n": args.n,
            "eta": args.eta,
            "q": args.q,
            "grid": args.grid,
            "samples": args.samples,
            "curve_points": args.curve_points,
            "seed": args.seed,
        },
    )
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    failed = False

    if cfg["q"] is None and not args.curve:
        cfg["q"] = 1.0  # default check: the noise-tolerant exponent

    if cfg["q"] is not None:
        report = theory.brute_force_minimizers(
            cfg["n"], cfg["eta"], cfg["q"], cfg["grid"], cfg["samples"], cfg["seed"]
        )
        report_path = outdir / "risk_report.json"
        with open(report_path, "w") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs["risk_report"] = str(report_path)
        status = "pass" if report.passed else "FAIL"
        print(
            f"n={report.n} eta={report.eta} q={report.q}: "
            f"minimizers_match={report.minimizers_match} "
            f"max_violation={report.max_violation:.3e} [{status}]"
        )
        failed = failed or not report.passed

    if args.curve:
        qs = np.linspace(0.0, 1.0, int(cfg["curve_points"]))
        rows = theory.bound_gap_curve(cfg["n"], cfg["eta"], qs)
        curve_path = outdir / "bound_gap_curve.csv"
        with open(curve_path, "w") as fh:
            fh.write("q,lower_gap,upper_gap\n")
            for q, lo, hi in rows:
                fh.write(f"{q!r},{lo!r},{hi!r}\n")
        outputs["curve"] = str(curve_path)
        lows = [r[1] for r in rows]
        highs = [r[2] for r in rows]
        monotone = all(a <= b + 1e-15 for a, b in zip(lows, lows[1:])) and all(
            a >= b - 1e-15 for a, b in zip(highs, highs[1:])
        )
        print(f"curve: {len(rows)} points, lower gap increasing / upper gap decreasing: {monotone}")
        failed = failed or not monotone

    _write_manifest(
        outdir / "manifest.json", "verify-theory", cfg, None, cfg["seed"], outputs,
        time.monotonic() - start,
    )
    return EXIT_VALIDATION if failed else EXIT_OK


# ---------------------------------------------------------------------------
# sweep


_SWEEP_BASELINE_SINGLE_PIECE = ("active_only", "complementary_only", "triplet_hn")


def _sweep_cell_config(base: TrainConfig, loss: str) -> TrainConfig:
    """Per-arm schedule: label-aware losses keep the piece schedule, plain
    baselines train one uninterrupted piece of the same total length."""
    if loss in _SWEEP_BASELINE_SINGLE_PIECE:
        return replace(base, loss=loss, piece_lengths=(base.total_epochs,))
    return replace(base, loss=loss)


def _run_sweep_cell(payload: dict) -> dict:
    """One (loss, eta) cell; returns a flat CSV row dict."""
    try:
        ds = load_dataset(payload["train_path"])
        test_ds = load_dataset(payload["test_path"])
        cfg = TrainConfig.from_dict(payload["config"])
        result = training.train(ds, cfg)
        ev = training.evaluate(result.params, test_ds)
        auc, mean_clean, mean_noisy = training.correction_quality(result.state, ds)
        return {
            "loss": payload["loss"],
            "eta": payload["eta"],
            "seed": cfg.seed,
            "status": "ok",
            "r1_i2t": ev.r1_i2t,
            "r5_i2t": ev.r5_i2t,
            "r10_i2t": ev.r10_i2t,
            "r1_t2i": ev.r1_t2i,
            "r5_t2i": ev.r5_t2i,
            "r10_t2i": ev.r10_t2i,
            "rsum": ev.rsum,
            "correction_auc": "" if auc is None else auc,
            "mean_label_clean": "" if mean_clean is None else mean_clean,
            "mean_label_noisy": "" if mean_noisy is None else mean_noisy,
            "error": "",
        }
    except Exception as exc:  # cell failures must not kill the sweep
        return {
            "loss": payload["loss"],
            "eta": payload["eta"],
            "seed": payload["config"]["seed"],
            "status": "error",
            "r1_i2t": "",
            "r5_i2t": "",
            "r10_i2t": "",
            "r1_t2i": "",
            "r5_t2i": "",
            "r10_t2i": "",
            "rsum": "",
            "correction_auc": "",
            "mean_label_clean": "",
            "mean_label_noisy": "",
            "error": f"{type(exc).__name__}: {exc}",
        }


_SWEEP_COLS = [
    "loss",
    "eta",
    "seed",
    "status",
    "r1_i2t",
    "r5_i2t",
    "r10_i2t",
    "r1_t2i",
    "r5_t2i",
    "r10_t2i",
    "rsum",
    "correction_auc",
    "mean_label_clean",
    "mean_label_noisy",
    "error",
]


_SWEEP_DEFAULT_ETAS = (0.2, 0.4, 0.6, 0.8)


def cmd_sweep(args) -> int:
    start = time.monotonic()
    if args.losses is None:
        args.losses = list(training.LOSS_KINDS)
    if args.etas is None:
        args.etas = list(_SWEEP_DEFAULT_ETAS)
    unknown = [l for l in args.losses if l not in training.LOSS_KINDS]
    if unknown:
        raise ValueError(f"unknown losses: {unknown}; choose from {training.LOSS_KINDS}")
    base_cfg, merged = _train_config_from_args(args)
    base_cfg.validate()
    gen_cfg = {
        "n": args.n if args.n is not None else 1000,
        "latent_dim": args.latent_dim if args.latent_dim is not None else 8,
        "d_v": args.d_v if args.d_v is not None else 16,
        "d_t": args.d_t if args.d_t is not None else 12,
        "noise_std": args.noise_std if args.noise_std is not None else 0.1,
        "holdout": args.holdout if args.holdout is not None else 200,
    }
    sweep_cfg = {
        **merged,
        **gen_cfg,
        "etas": list(args.etas),
        "losses": list(args.losses),
        "jobs": args.jobs,
    }
    run_key = _manifest_key("sweep", sweep_cfg, None, base_cfg.seed)
    run_dir = Path(args.outdir) / run_key
    run_dir.mkdir(parents=True, exist_ok=True)

    gen = GenConfig(
        n=gen_cfg["n"],
        latent_dim=gen_cfg["latent_dim"],
        d_v=gen_cfg["d_v"],
        d_t=gen_cfg["d_t"],
        noise_std=gen_cfg["noise_std"],
        seed=base_cfg.seed,
    )
    full = generate_bimodal(gen)
    holdout = gen_cfg["holdout"]
    if holdout < 1 or holdout >= gen.n:
        raise ValueError(f"holdout must be in [1, n), got {holdout}")
    train_part = full.subset(np.arange(gen.n - holdout))
    test_part = full.subset(np.arange(gen.n - holdout, gen.n))
    test_path = run_dir / "test.bin"
    save_dataset(test_part, test_path)

    cells = []
    for eta_idx, eta in enumerate(args.etas):
        noisy = inject_noise(train_part, eta, base_cfg.seed + 7919 * eta_idx)
        train_path = run_dir / f"train_eta{eta_idx}.bin"
        save_dataset(noisy, train_path)
        for loss in args.losses:
            cfg = _sweep_cell_config(base_cfg, loss)
            cells.append(
                {
                    "loss": loss,
                    "eta": eta,
                    "train_path": str(train_path),
                    "test_path": str(test_path),
                    "config": cfg.to_dict(),
                }
            )

    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_run_sweep_cell, cells))
    else:
        rows = [_run_sweep_cell(cell) for cell in cells]

    csv_path = run_dir / "sweep.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(_SWEEP_COLS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in _SWEEP_COLS) + "\n")

    _write_manifest(
        run_dir / "manifest.json", "sweep", sweep_cfg, None, base_cfg.seed,
        {"run_dir": str(run_dir), "csv": str(csv_path)},
        time.monotonic() - start,
    )
    print(f"run dir: {run_dir}")
    for row in rows:
        label = f"{row['loss']}@eta={row['eta']}"
        if row["status"] == "ok":
            print(f"  {label}: rsum={float(row['rsum']):.2f}")
        else:
            print(f"  {label}: {row['error']}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-plots


def cmd_export_plots(args) -> int:
    start = time.monotonic()
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    history = training.load_history(args.history)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)

    epochs = [rec.epoch for rec in history]
    pieces = [rec.piece for rec in history]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [rec.loss_mean for rec in history], marker="o", ms=3)
    for e, p_prev, p_next in zip(epochs[1:], pieces, pieces[1:]):
        if p_next != p_prev:
            ax.axvline(e - 0.5, color="gray", ls="--", lw=0.8)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean batch loss")
    ax.set_title("training loss (dashed lines: piece restarts)")
    fig.tight_layout()
    loss_path = outdir / "loss_curve.png"
    fig.savefig(loss_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, [rec.recalls.rsum for rec in history], label="rsum")
    ax.plot(epochs, [rec.recalls.r1_i2t for rec in history], label="R@1 img->txt")
    ax.plot(epochs, [rec.recalls.r1_t2i for rec in history], label="R@1 txt->img")
    ax.set_xlabel("epoch")
    ax.set_ylabel("validation recall")
    ax.legend()
    fig.tight_layout()
    recall_path = outdir / "recall_curve.png"
    fig.savefig(recall_path, dpi=120)
    plt.close(fig)

    last = history[-1]
    centers = (np.arange(training.HIST_BINS) + 0.5) / training.HIST_BINS
    width = 1.0 / training.HIST_BINS
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(centers, last.hist_clean, width=width, alpha=0.6, label="clean pairs")
    ax.bar(centers, last.hist_noisy, width=width, alpha=0.6, label="mismatched pairs")
    ax.set_xlabel("soft label")
    ax.set_ylabel("pairs")
    ax.set_title(f"label distribution, epoch {last.epoch}")
    ax.legend()
    fig.tight_layout()
    hist_path = outdir / "label_histogram.png"
    fig.savefig(hist_path, dpi=120)
    plt.close(fig)

    _write_manifest(
        outdir / "manifest.json",
        "export-plots",
        {"history": str(args.history)},
        _sha256_file(args.history),
        None,
        {"plots": [str(loss_path), str(recall_path), str(hist_path)]},
        time.monotonic() - start,
    )
    print(f"wrote plots to {outdir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--loss", choices=training.LOSS_KINDS, default=None)
    p.add_argument("--pieces", type=_int_list, default=None, metavar="E1,E2,...")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lr-decay-epoch", type=int, default=None)
    p.add_argument("--lr-decay-factor", type=float, default=None)
    p.add_argument("--freeze-epochs", type=int, default=None)
    p.add_argument("--label-momentum", type=float, default=None)
    p.add_argument("--label-threshold", type=float, default=None)
    p.add_argument("--temperature", type=float, default=None)
    p.add_argument("--comp-weight", type=float, default=None)
    p.add_argument("--comp-q", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--curve", type=float, default=None)
    p.add_argument("--scc", choices=("on", "off", "auto"), default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--val-fraction", type=float, default=None)
    p.add_argument("--sgd-momentum", type=float, default=None)
    p.add_argument("--config", default=None, help="JSON config file; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="noisymatch",
        description="Robust cross-modal matching under noisy correspondence (synthetic scale).",
    )
    parser.add_argument("--version", action="version", version=f"noisymatch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic paired dataset with injected noise")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--d-v", type=int, default=None)
    p.add_argument("--d-t", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--eta", type=_unit_interval, default=None, help="mismatch rate in [0, 1)")
    p.add_argument("--holdout", type=int, default=None, help="clean pairs split into a .test file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train on a dataset file and evaluate")
    p.add_argument("--data", required=True)
    p.add_argument("--test-data", default=None)
    p.add_argument("--outdir", default="runs")
    p.add_argument("--resume", default=None, help="run directory holding snapshot.json/model.bin")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained snapshot on a clean dataset")
    p.add_argument("--model", required=True, help="run directory holding snapshot.json/model.bin")
    p.add_argument("--data", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("verify-theory", help="risk minimization and bound checks")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--eta", type=_unit_interval, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--grid", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--curve", action="store_true", help="emit the bound-gap curve CSV")
    p.add_argument("--curve-points", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--outdir", default="theory_out")
    p.set_defaults(func=cmd_verify_theory)

    p = sub.add_parser("sweep", help="train every loss arm across a noise grid")
    p.add_argument("--losses", type=_str_list, default=None, metavar="L1,L2,...")
    p.add_argument("--etas", type=_float_list, default=None, metavar="E1,E2,...")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--latent-dim", type=int, default=None)
    p.add_argument("--d-v", type=int, default=None)
    p.add_argument("--d-t", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--holdout", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--outdir", default="sweeps")
    _add_train_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-plots", help="render loss/recall/label plots from a history CSV")
    p.add_argument("--history", required=True)
    p.add_argument("--outdir", default="plots")
    p.set_defaults(func=cmd_export_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (TrainingDivergedError, FloatingPointError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        if isinstance(exc, TrainingDivergedError):
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
