"""Command-line front end: ``effica separate`` and ``effica benchmark``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.

Benchmark config grammar (``#`` starts a comment, blank lines ignored)::

    seed = 20240101            # global keys come before the first block
    replications = 100         # default for every experiment
    n = 1000                   # default for every experiment

    [experiment]
    name = row1
    m = 2
    sources = row 1            # a table row, or law ids: 1, 1
    w_true = classic          # identity | classic | shifted | 2,1;2,3
    replications = 100         # optional, overrides the global value
    seed = 7                   # optional, otherwise derived from the master seed

Every experiment key except ``name`` and ``sources`` may be given globally
as a default.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from effica.errors import DataError, EfficaError, InvalidArgumentError, NumericError
from effica.initializer import fastica_init
from effica.metrics import amari_error, frobenius_error, summarize
from effica.solver import SolverConfig, run
from effica.sources import ExperimentSpec, SourceSpec, make_dataset, table2_sources, w_preset

ALGORITHMS = ("effica", "fastica-init")
EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_EXPERIMENT_KEYS = {"name", "m", "n", "sources", "w_true", "replications", "seed"}
_GLOBAL_KEYS = _EXPERIMENT_KEYS - {"name", "sources"}


class InputFormatError(DataError):
    """Malformed CSV or config text."""


class UsageError(EfficaError):
    pass


# -- CSV matrices -------------------------------------------------------------


def read_matrix(path, header: bool = False) -> np.ndarray:
    """Rows of a numeric CSV as a float matrix; line/column numbers are 1-based."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputFormatError(f"{path}: {exc.strerror}") from exc
    numbered = [(i + 1, r) for i, r in enumerate(rows) if any(c.strip() for c in r)]
    if header and numbered:
        numbered = numbered[1:]
    if not numbered:
        raise InputFormatError(f"{path}: empty input")
    width = len(numbered[0][1])
    out = np.empty((len(numbered), width))
    for r, (line, cells) in enumerate(numbered):
        if len(cells) != width:
            raise InputFormatError(f"{path}: line {line}: expected {width} columns, got {len(cells)}")
        for c, cell in enumerate(cells):
            try:
                value = float(cell)
            except ValueError:
                raise InputFormatError(
                    f"{path}: line {line}, column {c + 1}: cannot parse {cell.strip()!r} as a number"
                ) from None
            if not math.isfinite(value):
                raise InputFormatError(f"{path}: line {line}, column {c + 1}: non-finite value")
            out[r, c] = value
    return out


def write_matrix(path, A: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in np.atleast_2d(A):
            writer.writerow([repr(float(x)) for x in row])


# -- benchmark config ----------------------------------------------------------


def _parse_sources(text: str, m: int, where: str) -> list[SourceSpec]:
    parts = text.split()
    if len(parts) == 2 and parts[0] == "row":
        return table2_sources(_int(parts[1], where), m)
    ids = [_int(p, where) for p in text.replace(",", " ").split()]
    if len(ids) != m:
        raise InputFormatError(f"{where}: {len(ids)} source ids for m={m}")
    return [SourceSpec(i) for i in ids]


def _parse_w(text: str, m: int, where: str) -> np.ndarray:
    if ";" not in text and "," not in text:
        return w_preset(text.strip(), m)
    try:
        W = np.array([[float(x) for x in row.split(",")] for row in text.split(";")])
    except ValueError:
        raise InputFormatError(f"{where}: cannot parse matrix {text!r}") from None
    if W.shape != (m, m):
        raise InputFormatError(f"{where}: w_true must be {m}x{m}")
    return W


def _int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise InputFormatError(f"{where}: expected an integer, got {text!r}") from None


def experiment_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(1)[0])


def replication_seed(experiment_seed_: int, replication: int) -> int:
    """Seed for FastICA restarts and the CV split of one replication."""
    return int(np.random.SeedSequence([experiment_seed_, 1], spawn_key=(replication,)).generate_state(1)[0])


def parse_config(text: str, master_seed: int | None = None, replications_override: int | None = None):
    """Parse config text into ``(master_seed, [ExperimentSpec])``."""
    defaults: dict[str, tuple[str, int]] = {}
    blocks: list[dict[str, tuple[str, int]]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line == "[experiment]":
            blocks.append({})
            continue
        if line.startswith("["):
            raise InputFormatError(f"config line {lineno}: unknown section {line}")
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not key or not value:
            raise InputFormatError(f"config line {lineno}: expected 'key = value'")
        target = blocks[-1] if blocks else defaults
        allowed = _EXPERIMENT_KEYS if blocks else _GLOBAL_KEYS
        if key not in allowed:
            raise InputFormatError(f"config line {lineno}: unknown key {key!r}")
        if key in target:
            raise InputFormatError(f"config line {lineno}: duplicate key {key!r}")
        target[key] = (value, lineno)
    if not blocks:
        raise InputFormatError("config defines no [experiment] block")

    if master_seed is None:
        master_seed = _int(*_located(defaults["seed"])) if "seed" in defaults else 0
    specs, names = [], set()
    for index, block in enumerate(blocks):
        merged = {k: v for k, v in defaults.items() if k != "seed"}
        merged.update(block)
        missing = {"name", "m", "n", "sources", "w_true"} - set(merged)
        if missing:
            raise InputFormatError(f"experiment {index + 1}: missing keys {sorted(missing)}")
        name = merged["name"][0]
        if name in names:
            raise InputFormatError(f"experiment {index + 1}: duplicate name {name!r}")
        names.add(name)
        m = _int(*_located(merged["m"]))
        where = f"config line {merged['sources'][1]}"
        try:
            spec = ExperimentSpec(
                name=name,
                m=m,
                n=_int(*_located(merged["n"])),
                sources=_parse_sources(merged["sources"][0], m, where),
                W_true=_parse_w(merged["w_true"][0], m, f"config line {merged['w_true'][1]}"),
                seed=(_int(*_located(merged["seed"])) if "seed" in merged
                      else experiment_seed(master_seed, index)),
                replications=(replications_override if replications_override is not None
                              else _int(*_located(merged.get("replications", ("1", 0))))),
            )
        except InvalidArgumentError as exc:
            raise InputFormatError(f"experiment {name!r}: {exc}") from None
        specs.append(spec)
    return master_seed, specs


def _located(entry):
    value, lineno = entry
    return value, f"config line {lineno}"


# -- benchmark grid --------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    experiment: str
    replication: int
    seed: int
    algorithm: str
    amari: float
    frobenius: float
    iterations: int
    converged: bool
    status: str
    wall_time_ms: float = float("nan")


def _failure(spec, rep, algorithm, exc) -> RunRecord:
    status = f"error:{type(exc).__name__}"
    return RunRecord(spec.name, rep, spec.seed, algorithm, math.nan, math.nan, 0, False, status)


def run_replication(spec: ExperimentSpec, rep: int, algorithms, config: SolverConfig) -> list[RunRecord]:
    """All requested algorithms on one replication's data; failures become records."""
    seed = replication_seed(spec.seed, rep)
    config = replace(config, cv_seed=seed)
    records = []
    X, W_true = make_dataset(spec, rep)
    t0 = time.perf_counter()
    try:
        W0, init = fastica_init(X, rng_seed=seed)
    except EfficaError as exc:
        return [_failure(spec, rep, a, exc) for a in algorithms]
    init_ms = 1000.0 * (time.perf_counter() - t0)
    for algorithm in algorithms:
        t1 = time.perf_counter()
        try:
            if algorithm == "fastica-init":
                W, its, ok, elapsed = W0, init.iterations, init.converged, init_ms
            else:
                est = run(X, W0, config)
                W, its, ok = est.W_hat, est.iterations, est.converged
                elapsed = init_ms + 1000.0 * (time.perf_counter() - t1)
            report = frobenius_error(W, W_true)
        except EfficaError as exc:
            records.append(_failure(spec, rep, algorithm, exc))
            continue
        records.append(RunRecord(spec.name, rep, spec.seed, algorithm, report.amari,
                                 report.frobenius, its, ok, "ok", elapsed))
    return records


def _run_task(args):
    return run_replication(*args)


def run_grid(specs, algorithms, config: SolverConfig, jobs: int = 1) -> list[RunRecord]:
    tasks = [(spec, rep, tuple(algorithms), config) for spec in specs for rep in range(spec.replications)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        chunks = [_run_task(t) for t in tasks]
    order = {name: i for i, name in enumerate(s.name for s in specs)}
    records = [r for chunk in chunks for r in chunk]
    return sorted(records, key=lambda r: (order[r.experiment], r.replication, r.algorithm))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def record_columns(timing: bool) -> list[str]:
    names = [f.name for f in fields(RunRecord)]
    return names if timing else [n for n in names if n != "wall_time_ms"]


def write_records(path, records, timing: bool = False) -> None:
    cols = record_columns(timing)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in cols])


def read_records(path) -> list[RunRecord]:
    types = {f.name: f.type for f in fields(RunRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for key, text in row.items():
                kind = types[key]
                if kind == "bool":
                    kw[key] = text == "true"
                elif kind == "int":
                    kw[key] = int(text)
                elif kind == "float":
                    kw[key] = float(text)
                else:
                    kw[key] = text
            out.append(RunRecord(**kw))
    return out


def summary_rows(specs, records, algorithms) -> list[dict]:
    rows = []
    for spec in specs:
        for algorithm in algorithms:
            mine = [r for r in records if r.experiment == spec.name and r.algorithm == algorithm]
            good = [r for r in mine if r.status == "ok"]
            if good:
                mean_amari, rmse = summarize([r.frobenius for r in good], [r.amari for r in good])
            else:
                mean_amari = rmse = math.nan
            rows.append({
                "experiment": spec.name, "algorithm": algorithm, "m": spec.m, "n": spec.n,
                "replications": len(mine), "ok": len(good),
                "amari_x1000": 1000.0 * mean_amari,
                "sqrt_mse_x1000": 1000.0 * rmse,
                "sqrt_mse_x10": 10.0 * rmse,
            })
    return rows


def write_summary(path, rows) -> None:
    cols = ["experiment", "algorithm", "m", "n", "replications", "ok",
            "amari_x1000", "sqrt_mse_x1000", "sqrt_mse_x10"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in cols])


def summary_path(records_path) -> Path:
    p = Path(records_path)
    return p.with_name(f"{p.stem}_summary{p.suffix or '.csv'}")


# -- commands ---------------------------------------------------------------------


def _solver_config(args) -> SolverConfig:
    if not args.c > 0:
        raise UsageError("--c must be positive")
    try:
        return SolverConfig(max_iters=args.max_iters, step_tol=args.tol, score_c=args.c)
    except InvalidArgumentError as exc:
        raise UsageError(str(exc)) from None


def cmd_separate(args) -> int:
    X = read_matrix(args.input, header=args.header)
    if X.shape[0] > X.shape[1]:
        raise InputFormatError(
            f"{args.input}: {X.shape[0]} channels but only {X.shape[1]} samples (rows must be channels)"
        )
    config = _solver_config(args)
    W0, init = fastica_init(X, rng_seed=args.seed)
    est = run(X, W0, replace(config, cv_seed=args.seed))
    out = Path(args.output)
    sources_out = Path(args.sources) if args.sources else out.with_name(f"{out.stem}_sources.csv")
    write_matrix(out, est.W_hat)
    write_matrix(sources_out, est.sources(X))
    print(f"channels={X.shape[0]} samples={X.shape[1]}")
    print(f"fastica: iterations={init.iterations} converged={init.converged}")
    print(f"effica: iterations={est.iterations} converged={est.converged} "
          f"residual={est.final_residual:.3e} knots={est.knot_counts}")
    if args.truth:
        W_true = read_matrix(args.truth)
        if W_true.shape != est.W_hat.shape:
            raise InputFormatError(f"{args.truth}: expected a {est.W_hat.shape} matrix")
        print(f"amari_error={amari_error(est.W_hat, W_true):.6f}")
    print(f"wrote {out} and {sources_out}")
    return EXIT_OK


def cmd_benchmark(args) -> int:
    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        raise InputFormatError(f"{args.config}: {exc.strerror}") from exc
    if args.replications_override is not None and args.replications_override < 1:
        raise UsageError("--replications-override must be >= 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    algorithms = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad or not algorithms:
        raise UsageError(f"--algorithms must be a subset of {','.join(ALGORITHMS)}")
    algorithms = sorted(set(algorithms))
    _, specs = parse_config(text, args.seed, args.replications_override)
    records = run_grid(specs, algorithms, _solver_config(args), args.jobs)
    write_records(args.output, records, timing=args.timing)
    rows = summary_rows(specs, records, algorithms)
    spath = Path(args.summary) if args.summary else summary_path(args.output)
    write_summary(spath, rows)
    for row in rows:
        print(f"{row['experiment']:>12} {row['algorithm']:>12}  ok={row['ok']}/{row['replications']}  "
              f"amari_x1000={row['amari_x1000']:.1f}  sqrt_mse_x1000={row['sqrt_mse_x1000']:.1f}")
    failed = sum(r.status != "ok" for r in records)
    print(f"{len(records)} records ({failed} failed) -> {args.output}, summary -> {spath}")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="effica", description="Efficient ICA separation and benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def solver_flags(p):
        p.add_argument("--tol", type=float, default=1e-8, help="step-size convergence tolerance")
        p.add_argument("--max-iters", type=int, default=100)
        p.add_argument("--c", type=float, default=5.0, help="boundary constant of the score interval")

    sep = sub.add_parser("separate", help="unmix a CSV of observed channels")
    sep.add_argument("input")
    sep.add_argument("-o", "--output", required=True, help="CSV file for the unmixing matrix")
    sep.add_argument("--sources", help="CSV file for recovered sources (default <output stem>_sources.csv)")
    sep.add_argument("--header", action="store_true", help="skip the first non-blank line")
    sep.add_argument("--truth", help="CSV with the true unmixing matrix; prints the Amari error")
    sep.add_argument("--seed", type=int, default=0)
    solver_flags(sep)
    sep.set_defaults(func=cmd_separate)

    bench = sub.add_parser("benchmark", help="run a simulation grid from a config file")
    bench.add_argument("config")
    bench.add_argument("-o", "--output", required=True, help="CSV file for per-run records")
    bench.add_argument("--summary", help="summary CSV (default <output stem>_summary.csv)")
    bench.add_argument("--seed", type=int, default=None, help="master seed, overrides the config")
    bench.add_argument("--replications-override", type=int, default=None)
    bench.add_argument("--algorithms", default=",".join(ALGORITHMS))
    bench.add_argument("--jobs", type=int, default=1)
    bench.add_argument("--timing", action="store_true", help="add a wall_time_ms column")
    solver_flags(bench)
    bench.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"effica: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, InvalidArgumentError) as exc:
        print(f"effica: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"effica: numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
