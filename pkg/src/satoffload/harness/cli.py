"""Command-line entry point.

    satoffload generate  --seed 7 --out runs/gen
    satoffload train     --scheduler comappo --config exp.yaml --out runs/train
    satoffload evaluate  --scheduler woa --out runs/eval
    satoffload sweep     --config sweep.yaml --out runs/sweep
    satoffload alpha-sweep --out runs/alpha
    satoffload ablation  --out runs/ablation
    satoffload verify-allocator

Every command that writes files also writes ``manifest.json`` with the config
hash, seeds, library versions and a sha256 per output file.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path

import numpy as np

from .. import __version__
from ..allocator import verify_allocator
from ..mappo import TrainingAborted, write_curves_csv
from ..model import generate_scenario, save_scenario
from .config import SCHEDULERS, ConfigError, ExperimentConfig, dump_config, load_config
from .runner import alpha_tradeoff, evaluate, run_sweep, train_learner, write_rows

log = logging.getLogger("satoffload")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

METRIC_COLUMNS = (
    "scheduler", "seed", "mst", "msp", "objective", "success_rate",
    "share_CNS", "share_LMS", "share_CubeSat", "n_tasks", "n_subtasks",
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 2 with the usage line, as argparse does, but via our handler
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML experiment config")
    common.add_argument("--seed", type=int, action="append", help="seed (repeatable; overrides config seeds)")
    common.add_argument("--profile", choices=("test", "paper"))
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="satoffload", description="Satellite edge task offloading experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("generate", parents=[common], help="write seeded scenario JSON files")
    for name, hlp in (("train", "train a learned scheduler"), ("evaluate", "train if needed, then evaluate greedily")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.add_argument("--scheduler", choices=SCHEDULERS, default=None)
        sp.add_argument("--ablation-no-convex", action="store_true", help="policy picks resource shares")
    sp = sub.add_parser("sweep", parents=[common], help="run the configured sweep")
    sp.add_argument("--scheduler", choices=SCHEDULERS, action="append")
    sp.add_argument("--ablation-no-convex", action="store_true")
    sp = sub.add_parser("alpha-sweep", parents=[common], help="MST/MSP trade-off over alpha1")
    sp.add_argument("--scheduler", choices=SCHEDULERS, default="comappo")
    sp.add_argument("--alphas", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    sub.add_parser("ablation", parents=[common], help="Co-MAPPO with and without the closed-form allocator")
    sp = sub.add_parser("verify-allocator", parents=[common], help="closed forms against the grid oracle")
    sp.add_argument("--instances", type=int, default=100)
    sp.add_argument("--grid-step", type=float, default=1e-3)
    return p


def _resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    kw = {}
    if args.seed:
        kw["seeds"] = tuple(args.seed)
    if args.profile:
        kw["profile"] = args.profile
    if args.out:
        kw["out"] = args.out
    if getattr(args, "ablation_no_convex", False):
        kw["ablation_no_convex"] = True
    sched = getattr(args, "scheduler", None)
    if sched:
        kw["schedulers"] = tuple(sched) if isinstance(sched, list) else (sched,)
    return cfg.replace(**kw) if kw else cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, files: list[Path], extra: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "config_hash": cfg.config_hash(),
        "seeds": list(cfg.seeds),
        "versions": {"satoffload": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "outputs": {f.name: _sha256(f) for f in sorted(files)},
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(out: Path, cfg: ExperimentConfig) -> Path:
    p = out / "config.yaml"
    p.write_text(dump_config(cfg))
    return p


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    files = [_write_config(out, cfg)]
    for seed in cfg.seeds:
        p = out / f"scenario_{seed}.json"
        save_scenario(generate_scenario(cfg.scenario, seed), p)
        files.append(p)
        print(f"wrote {p}")
    write_manifest(out, cfg, "generate", files)
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    name = cfg.schedulers[0] if args.scheduler is None else args.scheduler
    if name not in ("comappo", "ccppo"):
        raise UsageError(f"train needs a learned scheduler (comappo or ccppo), got {name!r}")
    out = _out_dir(cfg)
    files = [_write_config(out, cfg)]
    status = EXIT_OK
    for seed in cfg.seeds:
        curve = out / f"curves_{name}_{seed}.csv"
        ckpt = out / f"checkpoint_{name}_{seed}.npz"
        try:
            learner, result = train_learner(cfg, name, seed, curve)
            learner.save(ckpt, {"scheduler": name, "seed": seed, "config_hash": cfg.config_hash()})
            rewards = result.episode_rewards()
            print(f"{name} seed {seed}: {len(rewards)} episodes, last-50 mean reward "
                  f"{rewards[-50:].mean() if len(rewards) else float('nan'):.4f}")
        except TrainingAborted as exc:
            print(f"{name} seed {seed}: aborted ({exc}); last good state saved", file=sys.stderr)
            from ..neural.checkpoint import save_checkpoint

            ck = exc.checkpoint
            save_checkpoint(ckpt, ck["params"], ck["optimizers"], None, {"aborted": True})
            status = EXIT_FAIL
        files += [p for p in (curve, ckpt) if p.exists()]
    write_manifest(out, cfg, "train", files)
    return status


def _metric_row(name: str, seed: int, report) -> dict:
    return {"scheduler": name, "seed": seed, **report.row()}


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    names = cfg.schedulers if args.scheduler is None else (args.scheduler,)
    out = _out_dir(cfg)
    files = [_write_config(out, cfg)]
    rows = []
    for name in names:
        for seed in cfg.seeds:
            curve = out / f"curves_{name}_{seed}.csv" if name in ("comappo", "ccppo") else None
            report, _, _ = evaluate(cfg, name, seed, curve)
            rows.append(_metric_row(name, seed, report))
            if curve is not None:
                files.append(curve)
            print(f"{name} seed {seed}: objective {report.objective:.4f} mst {report.mst:.4f} "
                  f"msp {report.msp:.4f} success {report.success_rate:.3f}")
    path = out / "metrics.csv"
    write_rows(rows, path, METRIC_COLUMNS)
    files.append(path)
    write_manifest(out, cfg, "evaluate", files)
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    path = out / "sweep.csv"
    rows = run_sweep(cfg, path)
    failed = sum(r["status"] == "failed" for r in rows)
    print(f"sweep: {len(rows)} rows, {failed} failed -> {path}")
    write_manifest(out, cfg, "sweep", [_write_config(out, cfg), path])
    return EXIT_OK


def cmd_alpha(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    path = out / "alpha.csv"
    curve = alpha_tradeoff(cfg, args.alphas, args.scheduler, path)
    n = len(curve.mst)
    print(f"alpha sweep over {list(args.alphas)}: MST falls and MSP rises in {curve.monotone_seeds()}/{n} seeds")
    write_manifest(out, cfg, "alpha-sweep", [_write_config(out, cfg), path],
                   {"monotone_seeds": curve.monotone_seeds(), "seeds_complete": n})
    return EXIT_OK


def cmd_ablation(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg)
    rows = []
    for label, flag in (("closed_form", False), ("learned_allocation", True)):
        c = cfg.replace(ablation_no_convex=flag)
        for seed in cfg.seeds:
            report, _, _ = evaluate(c, "comappo", seed)
            rows.append({**_metric_row(label, seed, report)})
            print(f"{label} seed {seed}: objective {report.objective:.4f}")
    path = out / "ablation.csv"
    write_rows(rows, path, METRIC_COLUMNS)
    write_manifest(out, cfg, "ablation", [_write_config(out, cfg), path])
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    if args.instances < 1 or args.grid_step <= 0:
        raise UsageError("--instances must be >= 1 and --grid-step > 0")
    records = verify_allocator(args.instances, args.grid_step, cfg.seeds[0])
    by_kind: dict[str, list[int]] = {}
    for r in records:
        by_kind.setdefault(r.kind, [0, 0])[0 if r.passed else 1] += 1
    for kind, (ok, bad) in by_kind.items():
        print(f"{kind}: {ok} passed, {bad} failed")
    total_bad = sum(b for _, b in by_kind.values())
    print("PASS" if total_bad == 0 else "FAIL")
    if args.out:
        out = _out_dir(cfg)
        path = out / "verify.csv"
        cols = ("kind", "index", "n_vars", "closed_objective", "grid_objective", "bound", "kkt", "passed")
        write_rows([r.__dict__ for r in records], path, cols)
        write_manifest(out, cfg, "verify-allocator", [path])
    return EXIT_OK if total_bad == 0 else EXIT_FAIL


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "alpha-sweep": cmd_alpha,
    "ablation": cmd_ablation,
    "verify-allocator": cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
        cfg = _resolve_config(args)
        return COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(str(exc).rstrip(), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"satoffload: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
