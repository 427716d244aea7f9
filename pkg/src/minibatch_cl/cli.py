"""Command-line experiment driver.

Every subcommand reads a config file (see :mod:`minibatch_cl.config`), runs
once per seed and writes CSV files into ``<out>/seed_<s>/`` together with a
``manifest.txt``. Nothing is plotted; the CSVs are meant for an external
plotting tool.

Exit codes: 0 ok, 1 invalid config or arguments, 2 numeric failure
(including a failed ``verify`` check), 3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .batching import batch_loss_histogram, chunked_sc_select, sc_select
from .config import Experiment, ExperimentConfig, Selector, load_config
from .embedding import EmbeddingPair
from .geometry import classify_configuration, default_oracle_gram, gram
from .loss import batch_losses, full_loss
from .optim import RunTrace, Variant, random_partition, run_optimizer
from .toy import ToyVariant, run_toy
from .verify import run_checks

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class NonFiniteError(FloatingPointError):
    pass


def format_number(x) -> str:
    """Shortest text that reads back to the same double; integral values drop the ``.0``."""
    x = float(x)
    if not math.isfinite(x):
        raise NonFiniteError(f"refusing to write non-finite value {x}")
    if x.is_integer() and abs(x) < 2**53:
        return "-0" if x == 0 and math.copysign(1.0, x) < 0 else str(int(x))
    return repr(x)


def _write(path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as e:
        raise OSError(f"cannot write {path}: {e.strerror or e}") from None


def export_gram_csv(g, path) -> None:
    g = np.asarray(g, dtype=float)
    if g.ndim != 2:
        raise ValueError("gram matrix must be 2-D")
    _write(path, "".join(",".join(format_number(x) for x in row) + "\n" for row in g))


def read_gram_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        return np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])


def _batches_field(batches) -> str:
    return ";".join("(" + " ".join(str(i + 1) for i in bt) + ")" for bt in batches)


def export_trace_csv(trace: RunTrace, path) -> None:
    lines = ["step,full_loss,oracle_dist,batches"]
    for r in trace.records:
        dist = "" if r.oracle_dist is None else format_number(r.oracle_dist)
        lines.append(f"{r.step},{format_number(r.full_loss)},{dist},{_batches_field(r.batches)}")
    _write(path, "\n".join(lines) + "\n")


def export_rows(path, header: str, rows) -> None:
    out = [header]
    for row in rows:
        out.append(",".join(format_number(x) if isinstance(x, (float, np.floating)) else str(x) for x in row))
    _write(path, "\n".join(out) + "\n")


def _write_manifest(run_dir: Path, cfg: ExperimentConfig, seed: int) -> None:
    _write(run_dir / "manifest.txt",
           f"config_sha256 = {cfg.sha256()}\nseed = {seed}\nversion = {__version__}\n")


def _selection(cfg: ExperimentConfig, emb: EmbeddingPair, seed: int):
    if cfg.selector is Selector.SC:
        return sc_select(emb, cfg.b, seed)
    if cfg.selector is Selector.CHUNKED_SC:
        return chunked_sc_select(emb, cfg.b, cfg.chunk_k, seed)
    return random_partition(cfg.n, cfg.b, np.random.default_rng(seed))


def run_synthetic(cfg: ExperimentConfig, seed: int, run_dir: Path) -> list[str]:
    init = EmbeddingPair.random(cfg.n, cfg.d, seed)
    subset = cfg.subset_collection() if cfg.variant is Variant.SUBSET_GD else None
    trace = run_optimizer(init, cfg.optimizer_config(seed), subset)
    final = trace.final
    export_trace_csv(trace, run_dir / "trace.csv")
    export_gram_csv(gram(final), run_dir / "gram_final.csv")
    kind = classify_configuration(final)
    oracle = default_oracle_gram(final)
    dist = "" if oracle is None else format_number(np.linalg.norm(gram(final) - oracle))
    _write(run_dir / "summary.csv",
           "final_loss,oracle_dist,classification\n"
           f"{format_number(full_loss(final))},{dist},{kind.value if kind else 'none'}\n")
    return [f"seed {seed}: final loss {full_loss(final):.6f}, classification {kind.value if kind else 'none'}"]


def run_toy_study(cfg: ExperimentConfig, seed: int, run_dir: Path) -> list[str]:
    rows = []
    for variant in ToyVariant:
        trace, hit = run_toy(variant, cfg.epsilon, cfg.toy_eta, cfg.rho, seed, cfg.max_steps)
        export_trace_csv(trace, run_dir / f"trace_{variant.value}.csv")
        rows.append((variant.value, "" if hit is None else hit, float(trace.losses[-1])))
    export_rows(run_dir / "hit_times.csv", "variant,hit_time,final_loss", rows)
    return [f"seed {seed}: " + ", ".join(f"{v} hit {h if h != '' else 'never'}" for v, h, _ in rows)]


def run_select(cfg: ExperimentConfig, seed: int, run_dir: Path) -> list[str]:
    emb = EmbeddingPair.random(cfg.n, cfg.d, seed)
    coll = _selection(cfg, emb, seed)
    losses = batch_losses(emb, coll)
    rows = [(j + 1, float(l), " ".join(str(i + 1) for i in bt)) for j, (bt, l) in enumerate(zip(coll, losses))]
    export_rows(run_dir / "batches.csv", "batch,loss,members", rows)
    return [f"seed {seed}: {len(coll)} batches, mean loss {losses.mean():.6f}"]


def run_histogram(cfg: ExperimentConfig, seed: int, run_dir: Path) -> list[str]:
    # synthetic stand-in for trained-encoder embeddings
    emb = EmbeddingPair.random(cfg.n, cfg.d, seed)
    chosen = _selection(cfg, emb, seed)
    baseline = random_partition(cfg.n, cfg.b, np.random.default_rng([seed, 1]))
    for name, coll in ((cfg.selector.value, chosen), ("random_baseline", baseline)):
        hist = batch_loss_histogram(emb, coll, cfg.bins)
        export_rows(run_dir / f"histogram_{name}.csv", "lower_edge,count", [(float(e), c) for e, c in hist])
    m_sel, m_rand = batch_losses(emb, chosen).mean(), batch_losses(emb, baseline).mean()
    export_rows(run_dir / "histogram_summary.csv", "selection,mean_batch_loss",
                [(cfg.selector.value, float(m_sel)), ("random_baseline", float(m_rand))])
    return [f"seed {seed}: mean batch loss {m_sel:.6f} ({cfg.selector.value}) vs {m_rand:.6f} (random)"]


def run_verify(cfg: ExperimentConfig, seed: int, run_dir: Path) -> list[str]:
    results = run_checks()
    export_rows(run_dir / "verify.csv", "invariant,status,detail",
                [(r.name, "pass" if r.passed else "fail", r.detail.replace(",", ";")) for r in results])
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}" for r in results]
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise VerifyFailure(lines, failed)
    return lines


class VerifyFailure(FloatingPointError):
    def __init__(self, lines, failed):
        super().__init__(f"{len(failed)} invariant(s) failed: {', '.join(failed)}")
        self.lines = lines


RUNNERS = {
    Experiment.SYNTHETIC: run_synthetic,
    Experiment.TOY: run_toy_study,
    Experiment.SELECT_BATCHES: run_select,
    Experiment.HISTOGRAM: run_histogram,
    Experiment.VERIFY: run_verify,
}


def _fail(msg: str) -> None:
    print(msg, file=sys.stderr)


def run_experiment(cfg: ExperimentConfig, out_dir=None, quiet: bool = True) -> int:
    """Run every seed of ``cfg``; returns an exit status."""
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    runner = RUNNERS[cfg.experiment]
    try:
        for seed in cfg.seeds:
            run_dir = out / f"seed_{seed}"
            try:
                os.makedirs(run_dir, exist_ok=True)
            except OSError as e:
                raise OSError(f"cannot create {run_dir}: {e.strerror or e}") from None
            _write_manifest(run_dir, cfg, seed)
            try:
                lines = runner(cfg, seed, run_dir)
            except VerifyFailure as e:
                for line in e.lines:
                    _fail(line)
                raise
            if not quiet:
                print("\n".join(lines))
    except (FloatingPointError, np.linalg.LinAlgError) as e:
        _fail(f"numeric failure: {e}")
        return EXIT_NUMERIC
    except OSError as e:
        _fail(f"I/O error: {e}")
        return EXIT_IO
    except ValueError as e:
        _fail(f"error: {e}")
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minibatch-cl", description="Mini-batch contrastive learning experiments")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for exp in Experiment:
        sp = sub.add_parser(exp.value)
        sp.add_argument("--config", help="config file; built-in defaults when omitted")
        sp.add_argument("--seed", type=int, help="run this single seed instead of the configured list")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_VALIDATION
    overrides = {"experiment": Experiment(args.command)}
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    try:
        if args.config:
            cfg = load_config(args.config, **overrides)
        else:
            cfg = ExperimentConfig(**overrides)
    except OSError as e:
        _fail(f"I/O error: cannot read {args.config}: {e.strerror or e}")
        return EXIT_IO
    except ValueError as e:
        _fail(f"error: {e}")
        return EXIT_VALIDATION
    return run_experiment(cfg, args.out, args.quiet)


if __name__ == "__main__":
    sys.exit(main())
