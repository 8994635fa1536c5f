"""Command-line entry point: ``graphbo <subcommand> ...``.

Every run writes a ``manifest.json`` next to its outputs. ``graphbo replay
manifest.json`` re-executes the recorded configuration.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .bench import (
    BenchmarkError,
    QueryMode,
    SyntheticObjective,
    TabularObjective,
    default_synthetic,
    load_tabular,
    materialize,
    run_regression_eval,
    transfer_synthetic,
)
from .bo import Acquisition, BOConfig, SearchAborted, run_bo
from .candidates import InfeasibleSpace, PoolConfig, PoolExhausted, Strategy
from .experiments import learn_motifs
from .gp import GPFitError, SearchGrid
from .graph import N101_SPEC, N201_SPEC
from .history import SearchHistory
from .motifs import MotifSet
from .wl import Base, Neighborhood

log = logging.getLogger("graphbo")

SPACES = {"n101": N101_SPEC, "n201": N201_SPEC}
SYNTHETIC = {"synthetic": default_synthetic, "synthetic-transfer": transfer_synthetic}
BASES = {"dot": Base.DOT, "oa": Base.HIST}
NEIGHBORHOODS = {"in": Neighborhood.IN, "out": Neighborhood.OUT, "both": Neighborhood.BOTH}
SYNTH_NOISE = 0.01

RUNTIME_ERRORS = (BenchmarkError, InfeasibleSpace, PoolExhausted, GPFitError, ValueError, OSError)


def resolve_objective(args):
    """``synthetic``/``synthetic-transfer`` or a JSON-lines benchmark path."""
    if args.benchmark in SYNTHETIC:
        return SYNTHETIC[args.benchmark](SYNTH_NOISE if args.noisy else 0.0)
    bench = load_tabular(args.benchmark, SPACES[args.space])
    return TabularObjective(bench, QueryMode.NOISY if args.noisy else QueryMode.DETERMINISTIC)


def make_grid(args) -> SearchGrid:
    return SearchGrid(bases=(BASES[args.base],), neighborhood=NEIGHBORHOODS[args.neighborhood], normalize=args.normalize)


def bo_config(args, transfer: MotifSet | None = None) -> BOConfig:
    pool = PoolConfig(pool_size=args.pool, strategy=Strategy(args.strategy))
    return BOConfig(
        budget=args.budget,
        batch=args.batch,
        n_init=args.n_init,
        acquisition=Acquisition(args.acquisition.upper()),
        pool=pool,
        grid=make_grid(args),
        transfer_motifs=transfer,
        transfer_quantile=getattr(args, "quantile", 0.25),
        transfer_min_occurrences=getattr(args, "min_count", 10),
    )


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


# -- subcommands -------------------------------------------------------------


def cmd_search(args) -> dict[str, str]:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    objective = resolve_objective(args)
    transfer = MotifSet.load(args.motifs) if getattr(args, "motifs", None) else None
    cfg = bo_config(args, transfer)
    artifacts = {"history": str(out / "history.csv")}
    try:
        hist = run_bo(objective, objective.spec, cfg, np.random.default_rng(args.seed))
    except SearchAborted as exc:
        exc.history.write_csv(out / "history.csv")
        raise
    hist.write_csv(out / "history.csv")
    best = hist.best()
    _write_json(
        out / "best.json",
        {"graph": best.graph.to_dict(), "val_error": best.val_error, "test_error": best.test_error, "n_evals": best.n_evals},
    )
    artifacts["best"] = str(out / "best.json")
    if args.figures:
        from .report import plot_trace

        artifacts["trace_figure"] = str(plot_trace(hist, out / "trace.png", args.command))
    print(f"best val {best.val_error:.4f} test {best.test_error:.4f} after {len(hist)} evaluations")
    return artifacts


def cmd_regress(args) -> dict[str, str]:
    if args.benchmark in SYNTHETIC:
        source = SYNTHETIC[args.benchmark](SYNTH_NOISE if args.noisy else 0.0)
    else:
        source = load_tabular(args.benchmark, SPACES[args.space])
    stats = run_regression_eval(
        source, make_grid(args), args.n_train, args.n_test, args.repeats, np.random.default_rng(args.seed), args.threads
    )
    text = json.dumps(stats.to_dict(), indent=2)
    print(text)
    artifacts = {}
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(text + "\n", encoding="utf-8")
        artifacts["stats"] = str(out / "stats.json")
        if args.figures:
            from .report import plot_regression

            artifacts["regression_figure"] = str(plot_regression(stats, out / "spearman.png"))
    return artifacts


def cmd_motifs(args) -> dict[str, str]:
    objective = resolve_objective(args)
    good, bad = learn_motifs(
        objective,
        args.n_train,
        np.random.default_rng(args.seed),
        min_occurrences=args.min_count,
        quantile=args.quantile,
        grid=make_grid(args),
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(good.to_json() + "\n", encoding="utf-8")
    bad_path = out.with_name(out.stem + ".bad.json")
    bad_path.write_text(bad.to_json() + "\n", encoding="utf-8")
    artifacts = {"motifs": str(out), "bad_motifs": str(bad_path)}
    if args.figures:
        from .report import plot_motifs

        artifacts["motif_figure"] = str(plot_motifs(good.motifs, bad.motifs, out.with_suffix(".png")))
    for m in good.motifs:
        print(f"+ {m.score:12.4g}  {m.decoded}")
    for m in bad.motifs:
        print(f"- {m.score:12.4g}  {m.decoded}")
    return artifacts


def cmd_synth_gen(args) -> dict[str, str]:
    obj: SyntheticObjective = SYNTHETIC[args.variant](args.noise_sd)
    bench = materialize(obj, args.n, np.random.default_rng(args.seed), n_seeds=args.n_seeds, name=args.variant)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bench.save(out)
    print(f"wrote {len(bench)} graphs to {out}")
    return {"benchmark": str(out)}


# -- manifest ------------------------------------------------------------------


def manifest_path(args) -> Path:
    if args.command in ("search", "transfer-search"):
        return Path(args.out) / "manifest.json"
    if args.command == "regress":
        return Path(args.out) / "manifest.json" if args.out else None
    out = Path(args.out)
    return out.with_name(out.stem + ".manifest.json")


def run_command(args) -> int:
    handler: Callable = COMMANDS[args.command]
    started = datetime.now(timezone.utc).isoformat()
    try:
        artifacts = handler(args)
    except SearchAborted as exc:
        print(f"error: {exc} (partial history of {len(exc.history)} evaluations saved)", file=sys.stderr)
        return 1
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    path = manifest_path(args)
    if path is not None:
        config = {k: v for k, v in vars(args).items() if k not in ("func",)}
        _write_json(
            path,
            {
                "command": args.command,
                "config": config,
                "seed": args.seed,
                "version": __version__,
                "started": started,
                "finished": datetime.now(timezone.utc).isoformat(),
                "artifacts": artifacts,
            },
        )
    return 0


def cmd_replay(args) -> int:
    try:
        manifest = json.loads(Path(args.manifest).read_text(encoding="utf-8"))
        config = dict(manifest["config"])
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: unreadable manifest: {exc}", file=sys.stderr)
        return 1
    if args.out:
        config["out"] = args.out
    return run_command(argparse.Namespace(**config))


COMMANDS = {
    "search": cmd_search,
    "transfer-search": cmd_search,
    "regress": cmd_regress,
    "motifs": cmd_motifs,
    "synth-gen": cmd_synth_gen,
}


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1], got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphbo", description="WL-kernel GP Bayesian optimisation over labelled DAGs")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, benchmark_required: bool = True):
        sp.add_argument(
            "--benchmark",
            required=benchmark_required,
            help="JSON-lines benchmark file, or 'synthetic' / 'synthetic-transfer'",
        )
        sp.add_argument("--space", choices=sorted(SPACES), default="n101", help="search space of a benchmark file")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--noisy", action="store_true", help="noisy queries (one random seed per evaluation)")
        sp.add_argument("--base", choices=sorted(BASES), default="dot")
        sp.add_argument("--neighborhood", choices=list(NEIGHBORHOODS), default="in")
        sp.add_argument("--normalize", action="store_true", help="cosine-normalise the kernel")
        sp.add_argument("--threads", type=_positive, default=1)
        sp.add_argument("--figures", action="store_true", help="also render PNG figures next to the outputs")

    for name in ("search", "transfer-search"):
        sp = sub.add_parser(name, help="batch BO search" + (" with motif transfer pruning" if "transfer" in name else ""))
        common(sp)
        sp.add_argument("--budget", type=_positive, default=150)
        sp.add_argument("--batch", type=_positive, default=5)
        sp.add_argument("--n-init", type=_positive, default=10)
        sp.add_argument("--pool", type=_positive, default=200)
        sp.add_argument("--strategy", choices=[s.value for s in Strategy], default="half_half")
        sp.add_argument("--acquisition", choices=["ei", "ucb"], default="ei")
        sp.add_argument("--out", required=True, help="output directory")
        if name == "transfer-search":
            sp.add_argument("--motifs", required=True, help="motif JSON from a previous task")
            sp.add_argument("--min-count", type=_positive, default=10)
            sp.add_argument("--quantile", type=_fraction, default=0.25)

    sp = sub.add_parser("regress", help="surrogate rank-correlation study")
    common(sp)
    sp.add_argument("--n-train", type=_positive, default=50)
    sp.add_argument("--n-test", type=_positive, default=400)
    sp.add_argument("--repeats", type=_positive, default=20)
    sp.add_argument("--out", help="directory for stats.json and the manifest (stdout only if omitted)")

    sp = sub.add_parser("motifs", help="score and export good/bad motifs")
    common(sp)
    sp.add_argument("--n-train", type=_positive, default=300)
    sp.add_argument("--min-count", type=_positive, default=10)
    sp.add_argument("--quantile", type=_fraction, default=0.25)
    sp.add_argument("--out", required=True, help="motif JSON path")

    sp = sub.add_parser("synth-gen", help="write a synthetic JSON-lines benchmark")
    sp.add_argument("--variant", choices=sorted(SYNTHETIC), default="synthetic")
    sp.add_argument("--n", type=_positive, default=2000)
    sp.add_argument("--n-seeds", type=_positive, default=3)
    sp.add_argument("--noise-sd", type=float, default=0.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("replay", help="re-run the configuration recorded in a manifest")
    sp.add_argument("manifest")
    sp.add_argument("--out", help="write outputs here instead of the recorded location")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    if args.command == "replay":
        return cmd_replay(args)
    if args.command == "synth-gen" and args.noise_sd < 0:
        build_parser().error("--noise-sd must be >= 0")
    # manifests record absolute input paths so a replay works from any directory
    if getattr(args, "benchmark", None) and args.benchmark not in SYNTHETIC:
        args.benchmark = str(Path(args.benchmark).resolve())
    if getattr(args, "motifs", None):
        args.motifs = str(Path(args.motifs).resolve())
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
