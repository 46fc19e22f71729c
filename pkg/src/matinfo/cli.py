"""Command line interface.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import EmptyDirectory, MatInfoError, MixedShapes
from .measures import (
    effective_rank,
    eigen_js,
    joint_entropy,
    matrix_js,
    mutual_information,
    renyi_entropy,
    tcr,
)
from .spectral import kernel_from_features, load_feature_csv

OUTPUT_ROOT_ENV = "MATINFO_OUTPUT_ROOT"
TABLE2_MUS = (0.1, 0.5, 0.75, 1.0, 1.25, 1.5, 3.0)
EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL, EXIT_VERIFY = 1, 2, 3, 4


def fmt(value: float) -> str:
    """Shortest round-trip repr (at least 12 significant digits, exact for doubles)."""
    return repr(float(value) + 0.0)


def _plain(obj):
    if isinstance(obj, float):
        return float(obj) + 0.0
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=2) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)


# ----------------------------------------------------------------- measure


def measure_entries(features, kernel="covariance", alphas=(1.0,), mus=(1.0,)):
    """Measures for one or two feature matrices as ``(label, MeasureValue)`` pairs.

    Labels are unique within a report, e.g. ``renyi_entropy[branch=1,alpha=2]``.
    """
    kernels = [kernel_from_features(z, kernel) for z in features]
    two = len(kernels) == 2
    entries = []
    for b, k in enumerate(kernels, start=1):
        tag = f"branch={b}," if two else ""
        for a in alphas:
            entries.append((f"renyi_entropy[{tag}alpha={a:g}]", renyi_entropy(k, a)))
        for m in mus:
            entries.append((f"tcr[{tag}mu={m:g}]", tcr(k, m)))
        entries.append((f"effective_rank[branch={b}]" if two else "effective_rank", effective_rank(k.data)))
    if two:
        k1, k2 = kernels
        for a in alphas:
            entries.append((f"mutual_information[alpha={a:g}]", mutual_information(k1, k2, a)))
            entries.append((f"joint_entropy[alpha={a:g}]", joint_entropy(k1, k2, a)))
        entries.append(("matrix_js", matrix_js(k1, k2)))
        entries.append(("eigen_js", eigen_js(k1, k2)))
    return entries


def cmd_measure(args) -> int:
    features = [load_feature_csv(p) for p in args.inputs]
    entries = measure_entries(features, args.kernel, args.alpha, args.mu)
    report = {
        "inputs": [str(p) for p in args.inputs],
        "kernel": args.kernel,
        "measures": [{"label": label, **m.to_dict()} for label, m in entries],
    }
    _emit(dumps(report), args.output)
    return 0


# -------------------------------------------------------------- trajectory

_STEP_RE = re.compile(r"^step_(\d+)\.csv$")


def _checkpoints(directory: Path) -> dict[int, Path]:
    found = {}
    if directory.is_dir():
        for path in directory.iterdir():
            match = _STEP_RE.match(path.name)
            if match:
                found[int(match.group(1))] = path
    return found


def discover_checkpoints(root) -> list[tuple[int, list[Path]]]:
    """Sorted ``(step, [paths])`` from ``branch1/``+``branch2/`` or a flat directory."""
    root = Path(root)
    if (root / "features").is_dir() and not _checkpoints(root) and not (root / "branch1").is_dir():
        root = root / "features"
    if not root.is_dir():
        raise EmptyDirectory(f"{root} is not a directory")
    b1, b2 = _checkpoints(root / "branch1"), _checkpoints(root / "branch2")
    if b1 or b2:
        if set(b1) != set(b2):
            raise MixedShapes(f"branch1 and branch2 hold different steps: "
                              f"{sorted(set(b1) ^ set(b2))}")
        pairs = [(s, [b1[s], b2[s]]) for s in sorted(b1)]
    else:
        flat = _checkpoints(root)
        pairs = [(s, [flat[s]]) for s in sorted(flat)]
    if not pairs:
        raise EmptyDirectory(f"no step_<k>.csv checkpoints under {root}")
    return pairs


def trajectory_rows(root, kernel="covariance", alphas=(1.0,), mus=(1.0,)):
    rows = []
    shape = None
    for step, paths in discover_checkpoints(root):
        features = [load_feature_csv(p) for p in paths]
        for f in features:
            if shape is None:
                shape = f.shape
            elif f.shape != shape:
                raise MixedShapes(f"step {step}: shape {f.shape} differs from {shape}")
        for label, m in measure_entries(features, kernel, alphas, mus):
            rows.append((step, label, m.value))
    return rows


def cmd_trajectory(args) -> int:
    rows = trajectory_rows(args.directory, args.kernel, args.alpha, args.mu)
    lines = ["step\tmeasure\tvalue"] + [f"{s}\t{label}\t{fmt(v)}" for s, label, v in rows]
    _emit("\n".join(lines) + "\n", args.output)
    return 0


# ------------------------------------------------------------ train/sweep


def _config_from_args(args):
    from .sandbox import SandboxConfig

    base = SandboxConfig.from_file(args.config).to_dict() if args.config else {}
    overrides = {
        "loss": args.loss, "dataset": args.dataset, "lam": args.lam, "mu": args.mu,
        "mask_ratio": args.mask_ratio, "d": args.d, "batch": args.batch, "steps": args.steps,
        "seed": args.seed, "lr": args.lr, "record_every": args.record_every,
        "n_samples": args.n_samples, "kernel": args.kernel, "encoder": args.encoder,
        "temperature": args.temperature,
    }
    if getattr(args, "dump_features", False):
        overrides["dump_features"] = True
    # loss-specific defaults must be re-derived when the loss changes
    if args.loss is not None and args.loss != base.get("loss"):
        for key in ("lam", "lr"):
            if not args.config or key not in _explicit_keys(args.config):
                base.pop(key, None)
    base.update({k: v for k, v in overrides.items() if v is not None})
    return SandboxConfig.from_mapping(base)


def _explicit_keys(path):
    from .sandbox.config import yaml

    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return {k.replace("-", "_") for k in (data or {})}


def _run_dir(args, name):
    if args.out:
        return Path(args.out)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / name


def _manifest(command, config, outputs, started, duration):
    return {
        "command": command,
        "config": config.to_dict(),
        "seed": config.seed,
        "version": __version__,
        "outputs": [str(p) for p in outputs],
        "started_at": started,
        "duration_seconds": duration,
    }


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def cmd_train(args) -> int:
    from .errors import DivergedLoss
    from .sandbox import train, write_trajectory
    from .sandbox.train import Run

    config = _config_from_args(args)
    run_dir = _run_dir(args, f"{config.loss}-seed{config.seed}")
    started, t0 = _now(), time.perf_counter()
    try:
        run = train(config)
    except DivergedLoss as exc:
        partial = Run(config, exc.trajectory, None, None, None)
        path = write_trajectory(partial, run_dir)
        write_atomic(run_dir / "manifest.json",
                     dumps(_manifest(_argv(), config, [path], started, time.perf_counter() - t0)))
        raise
    path = write_trajectory(run, run_dir)
    outputs = [path]
    if config.dump_features:
        outputs += [run_dir / "features", *([run_dir / "kernels"] if config.siamese else [])]
    write_atomic(run_dir / "manifest.json",
                 dumps(_manifest(_argv(), config, outputs, started, time.perf_counter() - t0)))
    final = run.final
    summary = {"run_dir": str(run_dir), "steps": final.step, "loss": final.loss.to_dict(),
               "loss_per_sample": final.loss.total / config.batch,
               "measures": {label: m.value for label, m in final.measures.items()}}
    if config.siamese is False or args.probe:
        from .sandbox import probe_accuracy
        summary["probe_accuracy"] = probe_accuracy(run)
    sys.stdout.write(dumps(summary))
    return 0


def cmd_sweep(args) -> int:
    from .sandbox import format_sweep, mu_sweep

    config = _config_from_args(args)
    if config.siamese:
        raise MatInfoError("sweep needs a masked-modeling loss (mae, umae, mmae)")
    mus = args.sweep_mu or list(TABLE2_MUS)
    run_dir = _run_dir(args, f"sweep-{config.loss}-seed{config.seed}")
    started, t0 = _now(), time.perf_counter()
    rows = mu_sweep(config, mus)
    table = format_sweep(rows)
    path = run_dir / "sweep.tsv"
    write_atomic(path, table)
    write_atomic(run_dir / "manifest.json",
                 dumps(_manifest(_argv(), config, [path], started, time.perf_counter() - t0)))
    sys.stdout.write(table)
    return 0


# ------------------------------------------------------------------ verify


def cmd_verify(args) -> int:
    from .verify import DEFAULT_ALPHAS, DEFAULT_MUS, DEFAULT_SIZES, suite_report, timed_suite

    results, elapsed = timed_suite(
        trials=args.trials,
        sizes=args.n or DEFAULT_SIZES,
        alphas=args.alpha or DEFAULT_ALPHAS,
        mus=args.mu or DEFAULT_MUS,
        seed=args.seed,
        inject_non_psd=args.inject_non_psd,
    )
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        line = (f"{status}  {r.name:<36} trials={r.trials:<5d} "
                f"max_violation={fmt(r.max_violation)} tol={r.tolerance:g}")
        if r.breakdown and not r.passed:
            per = ", ".join(f"alpha={a}: {fmt(v)}" for a, v in r.breakdown.items())
            line += f"  [{per}]"
        if r.note:
            line += f"  ({r.note})"
        print(line)
    report = suite_report(results)
    if args.json:
        write_atomic(Path(args.json), dumps(report))
    print(f"{'all properties pass' if report['passed'] else 'verification FAILED'} "
          f"({elapsed:.1f}s)")
    return 0 if report["passed"] else EXIT_VERIFY


# ---------------------------------------------------------------- plumbing


def _argv():
    return " ".join(["matinfo", *sys.argv[1:]])


def _emit(text, output):
    if output:
        write_atomic(Path(output), text)
    else:
        sys.stdout.write(text)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_train_flags(p):
    p.add_argument("--config", help="YAML/JSON config file (keys are SandboxConfig fields)")
    p.add_argument("--loss", choices=["barlow", "spectral", "infonce", "mae", "umae", "mmae"])
    p.add_argument("--dataset", choices=["latent_linear", "cluster_mixture"])
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--mask-ratio", type=float)
    p.add_argument("--d", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--record-every", type=int)
    p.add_argument("--kernel", choices=["covariance", "gram"])
    p.add_argument("--encoder", choices=["mlp", "affine"])
    p.add_argument("--temperature", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help=f"run directory (default: ${OUTPUT_ROOT_ENV}/<name>, else runs/<name>)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matinfo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"matinfo {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("measure", help="matrix information measures of feature CSV files")
    p.add_argument("inputs", nargs="+", type=Path, help="one or two d x B feature CSVs")
    p.add_argument("--kernel", choices=["covariance", "gram"], default="covariance")
    p.add_argument("--alpha", type=float, action="append", help="entropy order (repeatable)")
    p.add_argument("--mu", type=float, action="append", help="TCR coefficient (repeatable)")
    p.add_argument("--output", help="write the JSON report here instead of stdout")
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("trajectory", help="plot-ready TSV from step_<k>.csv checkpoints")
    p.add_argument("directory", type=Path)
    p.add_argument("--kernel", choices=["covariance", "gram"], default="covariance")
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--mu", type=float, action="append")
    p.add_argument("--output")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("train", help="train in the synthetic sandbox")
    _add_train_flags(p)
    p.add_argument("--mu", type=float)
    p.add_argument("--dump-features", action="store_true", help="write step_<k>.csv feature dumps")
    p.add_argument("--probe", action="store_true", help="report linear-probe accuracy for Siamese runs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="masked-modeling runs over a grid of mu values")
    _add_train_flags(p)
    p.add_argument("--mu", dest="sweep_mu", type=float, action="append",
                   help="mu value (repeatable; default 0.1 0.5 0.75 1 1.25 1.5 3)")
    p.set_defaults(func=cmd_sweep, mu=None)

    p = sub.add_parser("verify", help="randomized proposition suite")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--n", type=int, action="append", help="kernel size (repeatable)")
    p.add_argument("--alpha", type=float, action="append")
    p.add_argument("--mu", type=float, action="append")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-non-psd", action="store_true",
                   help="also feed an indefinite matrix and report the rejection path")
    p.add_argument("--json", help="write the full JSON report to this path")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command in ("measure", "trajectory"):
        args.alpha = args.alpha or [1.0]
        args.mu = args.mu or [1.0]
    try:
        return args.func(args)
    except MatInfoError as exc:
        print(f"matinfo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
