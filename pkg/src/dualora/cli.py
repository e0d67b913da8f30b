"""``dualora`` command-line entry point.

    dualora grad-check|train|rank-report|sweep|ablate --config <path> --out <dir> [--key value ...]

Config files hold ``key=value`` lines; ``--key value`` flags override them.
Every artifact written is a deterministic function of the effective config.
Wall-clock timings go to ``timings.json`` so the other files stay
byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

from dualora import checkpoint, experiments
from dualora.adapters import DualAdapter
from dualora.checkpoint import CheckpointError
from dualora.config import ConfigError, RunConfig, load_config
from dualora.rank import rank_report
from dualora.tasks import NumericalError

log = logging.getLogger("dualora")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_CHECK = 4
EXIT_INPUT = 5

COMMANDS = ("grad-check", "train", "rank-report", "sweep", "ablate")


class CheckFailed(RuntimeError):
    pass


def rows_to_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([row[c] for c in columns])
    return buf.getvalue()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _meta(command: str, cfg: RunConfig, **extra) -> dict:
    return {"command": command, "config": cfg.to_dict(), "resolved_alpha": cfg.resolved_alpha,
            **extra}


def prepare_output(out: str) -> Path:
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"out: output directory {out} is not writable ({exc})") from None
    return path


def cmd_grad_check(cfg: RunConfig, out: Path) -> int:
    result = experiments.grad_check(cfg)
    rows = [{"param": n, "max_rel_error": e, "tol": result.tol,
             "status": "ok" if e < result.tol else "fail"}
            for n, e in result.max_rel_error.items()]
    (out / "grad_check.csv").write_text(rows_to_csv(rows, ("param", "max_rel_error", "tol", "status")))
    _write_json(out / "meta.json", _meta("grad-check", cfg, passed=result.passed,
                                         max_rel_error=result.max_rel_error))
    print(result.report())
    if not result.passed:
        raise CheckFailed("finite-difference gradient check failed")
    return EXIT_OK


def cmd_train(cfg: RunConfig, out: Path) -> int:
    adapter = optimizer = None
    if cfg.resume:
        adapter, optimizer = checkpoint.load(cfg.resume, expect_shape=(cfg.d, cfg.k))
        log.info("resuming from %s", cfg.resume)
    start = adapter.step_counter if isinstance(adapter, DualAdapter) else (
        optimizer.state.t if optimizer else 0)
    t0 = time.perf_counter()
    res = experiments.run_training(cfg, cfg.seed, adapter, optimizer)
    rec = res.record
    (out / "loss.csv").write_text(rec.loss_csv(start))
    (out / "trace.csv").write_text(rec.trace_csv(start))
    checkpoint.save(out / "final.ckpt", res.adapter, res.optimizer)
    _write_json(out / "meta.json", _meta("train", cfg, seed=cfg.seed, start_step=start,
                                         steps=cfg.steps, initial_mse=rec.initial_mse,
                                         final_mse=rec.final_mse))
    _write_json(out / "timings.json", {"train_seconds": rec.wall_clock,
                                       "total_seconds": time.perf_counter() - t0})
    print(f"seed {cfg.seed}: population mse {rec.initial_mse:.6g} -> {rec.final_mse:.6g}")
    return EXIT_OK


def cmd_rank_report(cfg: RunConfig, out: Path) -> int:
    if cfg.checkpoint:
        adapter, _ = checkpoint.load(cfg.checkpoint)
        report = rank_report([(Path(cfg.checkpoint).stem, adapter)], cfg.rel_tol)
    else:
        report = experiments.rank_study(cfg)
    (out / "rank.csv").write_text(report.to_csv())
    _write_json(out / "meta.json", _meta("rank-report", cfg, rows=len(report.rows)))
    print(report.to_csv(), end="")
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    try:
        experiments.sweep_r1_values(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    t0 = time.perf_counter()
    try:
        rows = experiments.sweep(cfg)
    except AssertionError as exc:
        raise CheckFailed(str(exc)) from None
    (out / "sweep.csv").write_text(rows_to_csv(rows, experiments.SWEEP_COLUMNS))
    _write_json(out / "meta.json", _meta("sweep", cfg, r1_values=[r["r1"] for r in rows]))
    _write_json(out / "timings.json", {"total_seconds": time.perf_counter() - t0})
    print(rows_to_csv(rows, experiments.SWEEP_COLUMNS), end="")
    return EXIT_OK


def cmd_ablate(cfg: RunConfig, out: Path) -> int:
    t0 = time.perf_counter()
    rows = experiments.ablate(cfg)
    (out / "ablate.csv").write_text(rows_to_csv(rows, experiments.ABLATE_COLUMNS))
    _write_json(out / "meta.json", _meta("ablate", cfg))
    _write_json(out / "timings.json", {"total_seconds": time.perf_counter() - t0})
    for r in rows:
        print(f"{r['group']:<12} {r['name']:<13} median final mse {r['median_final_mse']:.6g}")
    return EXIT_OK


HANDLERS = {
    "grad-check": cmd_grad_check,
    "train": cmd_train,
    "rank-report": cmd_rank_report,
    "sweep": cmd_sweep,
    "ablate": cmd_ablate,
}


def parse_overrides(extra: list[str]) -> dict[str, str]:
    """Turn ``--key value`` / ``--key=value`` pairs into a dict; dashes become underscores."""
    out: dict[str, str] = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"expected --key value, got {tok!r}")
        if "=" in tok:
            key, value = tok[2:].split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"{tok}: missing value")
            key, value = tok[2:], extra[i + 1]
            i += 2
        out[key.replace("-", "_")] = value
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualora", description="Dual LoRA desk-scale experiments")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--out", default="out", help="output directory (default: ./out)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv: list[str] | None = None) -> int:
    args, extra = build_parser().parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, parse_overrides(extra))
        out = prepare_output(args.out)
        return HANDLERS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
