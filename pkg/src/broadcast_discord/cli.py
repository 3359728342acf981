"""Config-driven sweep runner: ``broadcast-discord run|validate|summarize``.

Config files are flat ``dotted.key = value`` text, ``#`` starts a comment::

    state.family = fig2          # fig2 | file | random
    state.theta_start = 0
    state.theta_stop = pi/2
    state.theta_count = 33
    levels = 2, 3, 4, 5, 1:ppt   # k[:ppt[=B+BB1|=all]][:sym]
    oracles.discord = true
    oracles.eb_search = false
    output.prefix = out/fig2
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import platform
import re
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError
from .hierarchy import (CUT_B, HierarchyOptions, all_cuts, bound_from_fidelity, discord_lower_bound,
                        parse_cut)
from .sdp import SolverOptions
from .states import DensityMatrix, random_density_matrix, state_family_fig2

WORKERS_ENV = "BROADCAST_DISCORD_WORKERS"
CSV_HEADER = ["family", "param", "k", "bose", "ppt", "F_star", "d_bound", "status", "gap", "seconds"]
DISCORD_K, EB_K = -1, 0
ORDER_TOL, SANDWICH_TOL = 1e-6, 1e-4

KNOWN_KEYS = {
    "state.family", "state.theta_start", "state.theta_stop", "state.theta_count", "state.seed",
    "state.count", "state.dims", "state.rank", "state.path",
    "levels",
    "oracles.discord", "oracles.eb_search", "oracles.eb_samples", "oracles.seed",
    "oracles.grid", "oracles.refine", "oracles.outcomes",
    "output.prefix",
    "solver.feas_tol", "solver.gap_tol", "solver.max_iters", "solver.name",
    "run.workers",
}


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    key: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.key}: {self.message}"


@dataclass
class ExperimentConfig:
    state_family: str = "fig2"
    theta_start: float = 0.0
    theta_stop: float = math.pi / 2
    theta_count: int = 33
    seed: int = 0
    count: int = 10
    dims: tuple[int, ...] = (2, 2)
    rank: int | None = None
    paths: tuple[str, ...] = ()
    levels: tuple[HierarchyOptions, ...] = ()
    discord: bool = False
    eb_search: bool = False
    eb_samples: int = 4
    oracle_seed: int = 0
    grid: tuple[int, int] = (181, 361)
    refine: int = 200
    outcomes: int = 2
    prefix: str = "out/run"
    solver: SolverOptions = field(default_factory=SolverOptions)
    workers: int | None = None
    raw: dict = field(default_factory=dict)
    base_dir: str = "."


# -- parsing --------------------------------------------------------------------

_PI = re.compile(r"^\s*(?:(?P<num>[-+]?[0-9.]+(?:e[-+]?\d+)?)\s*\*?\s*)?(?P<pi>pi)\s*(?:/\s*(?P<den>[0-9.]+))?\s*$",
                 re.I)


def parse_real(text: str) -> float:
    """Float, or a multiple of pi such as ``pi/2``, ``3pi/8``, ``0.25*pi``."""
    m = _PI.match(text)
    if m:
        v = math.pi * (float(m["num"]) if m["num"] else 1.0)
        return v / float(m["den"]) if m["den"] else v
    return float(text)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_level(text: str) -> HierarchyOptions:
    """``k``, ``k:ppt``, ``k:ppt=all``, ``k:ppt=B+BB1``, optionally ``:sym`` for no Bose symmetry."""
    parts = [p.strip() for p in text.split(":")]
    k = int(parts[0])
    bose, cuts = True, frozenset()
    for opt in parts[1:]:
        if opt == "sym":
            bose = False
        elif opt == "ppt":
            cuts = frozenset({CUT_B})
        elif opt.startswith("ppt="):
            names = opt[4:].strip()
            cuts = all_cuts(k) if names == "all" else frozenset(parse_cut(c) for c in names.split("+"))
        else:
            raise ValueError(f"unknown level option {opt!r}")
    return HierarchyOptions(k, bose, cuts)


def read_config_text(text: str) -> dict[str, tuple[int, str]]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = (lineno, value)
    return out


def build_config(raw: dict[str, tuple[int, str]], base_dir: str = ".") -> tuple[ExperimentConfig, list[Diagnostic]]:
    """Schema and range checks; returns the config and every diagnostic found."""
    diags: list[Diagnostic] = []
    cfg = ExperimentConfig(raw={k: v for k, (_, v) in raw.items()}, base_dir=base_dir)

    def err(key, msg):
        diags.append(Diagnostic("error", key, msg))

    for key in raw:
        if key not in KNOWN_KEYS:
            err(key, "unknown key")

    def get(key, conv, attr):
        if key in raw:
            lineno, value = raw[key]
            try:
                setattr(cfg, attr, conv(value))
            except (ValueError, ConfigError) as e:
                err(key, f"line {lineno}: {e}")

    ints = lambda s: tuple(int(x) for x in s.replace("x", ",").split(",") if x.strip())
    get("state.family", str.strip, "state_family")
    get("state.theta_start", parse_real, "theta_start")
    get("state.theta_stop", parse_real, "theta_stop")
    get("state.theta_count", int, "theta_count")
    get("state.seed", int, "seed")
    get("state.count", int, "count")
    get("state.dims", ints, "dims")
    get("state.rank", int, "rank")
    get("state.path", lambda s: tuple(p.strip() for p in s.split(",") if p.strip()), "paths")
    get("oracles.discord", parse_bool, "discord")
    get("oracles.eb_search", parse_bool, "eb_search")
    get("oracles.eb_samples", int, "eb_samples")
    get("oracles.seed", int, "oracle_seed")
    get("oracles.grid", ints, "grid")
    get("oracles.refine", int, "refine")
    get("oracles.outcomes", int, "outcomes")
    get("output.prefix", str.strip, "prefix")
    get("run.workers", int, "workers")

    solver = {}
    for key, name, conv in (("solver.feas_tol", "feas_tol", float), ("solver.gap_tol", "gap_tol", float),
                            ("solver.max_iters", "max_iters", int), ("solver.name", "solver", str.strip)):
        if key in raw:
            try:
                solver[name] = conv(raw[key][1])
            except ValueError as e:
                err(key, str(e))
    cfg.solver = SolverOptions(**solver)

    if "levels" in raw:
        levels = []
        for item in raw["levels"][1].split(","):
            if not item.strip():
                continue
            try:
                levels.append(parse_level(item))
            except ValueError as e:
                err("levels", f"{item.strip()!r}: {e}")
        cfg.levels = tuple(levels)
    if not cfg.levels and not any(d.key == "levels" for d in diags):
        err("levels", "at least one hierarchy level is required")

    fam = cfg.state_family
    if fam not in ("fig2", "file", "random"):
        err("state.family", f"unknown family {fam!r} (fig2 | file | random)")
    if fam == "fig2":
        for key, v in (("state.theta_start", cfg.theta_start), ("state.theta_stop", cfg.theta_stop)):
            if not 0 <= v <= math.pi / 2 + 1e-12:
                err(key, f"theta = {v:.6g} outside [0, pi/2]")
        if cfg.theta_stop < cfg.theta_start:
            err("state.theta_stop", "stop is below start")
        if cfg.theta_count < 1:
            err("state.theta_count", "need at least one point")
    if fam == "file":
        if not cfg.paths:
            err("state.path", "file family needs state.path")
        for p in cfg.paths:
            if not (Path(base_dir) / p).is_file():
                err("state.path", f"no such file {p!r}")
    if fam == "random":
        if len(cfg.dims) != 2 or min(cfg.dims, default=0) < 1:
            err("state.dims", "need two positive dimensions")
        if cfg.count < 1:
            err("state.count", "need at least one state")
    if cfg.outcomes not in (2, 3, 4):
        err("oracles.outcomes", "must be 2, 3 or 4")
    if len(cfg.grid) != 2 or min(cfg.grid, default=0) < 2:
        err("oracles.grid", "need two resolutions >= 2")
    if cfg.workers is not None and cfg.workers < 1:
        err("run.workers", "must be >= 1")
    return cfg, diags


def load_config(path) -> tuple[ExperimentConfig, list[Diagnostic]]:
    path = Path(path)
    try:
        raw = read_config_text(path.read_text())
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    return build_config(raw, str(path.parent))


def validate(path) -> list[Diagnostic]:
    try:
        return load_config(path)[1]
    except ConfigError as e:
        return [Diagnostic("error", str(path), str(e))]


# -- running --------------------------------------------------------------------

def expand_states(cfg: ExperimentConfig) -> list[tuple[str, float, DensityMatrix]]:
    if cfg.state_family == "fig2":
        n = cfg.theta_count
        thetas = np.linspace(cfg.theta_start, cfg.theta_stop, n) if n > 1 else np.array([cfg.theta_start])
        return [("fig2", float(t), state_family_fig2(min(float(t), math.pi / 2))) for t in thetas]
    if cfg.state_family == "file":
        return [("file", float(i), DensityMatrix.load(Path(cfg.base_dir) / p)) for i, p in enumerate(cfg.paths)]
    d = int(np.prod(cfg.dims))
    return [("random", float(i), random_density_matrix(d, cfg.rank, seed=[cfg.seed, i], dims=cfg.dims))
            for i in range(cfg.count)]


def _task(args):
    kind, family, param, rho, payload = args
    t0 = time.perf_counter()
    if kind == "level":
        opts, solver = payload
        return discord_lower_bound(rho, opts, solver).to_record(family, param)
    if kind == "discord":
        from .oracles import MeasurementSweepConfig, discord_bruteforce

        grid, refine, outcomes, seed = payload
        status, value = "optimal", float("nan")
        try:
            value = discord_bruteforce(rho, MeasurementSweepConfig(grid, refine, outcomes, seed=seed))
        except ValueError:
            status = "unsupported"
        return dict(family=family, param=param, k=DISCORD_K, bose=False, ppt="none",
                    F_star=2.0 ** (-value / 2), d_bound=value, status=status, gap=0.0,
                    seconds=time.perf_counter() - t0)
    from .oracles import eb_fidelity_search

    samples, seed = payload
    f = eb_fidelity_search(rho, samples, seed)
    return dict(family=family, param=param, k=EB_K, bose=False, ppt="none", F_star=f,
                d_bound=bound_from_fidelity(f), status="optimal", gap=0.0,
                seconds=time.perf_counter() - t0)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.12g}"
    return str(v)


def format_rows(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(r[c]) if c != "seconds" else f"{r[c]:.3f}" for c in CSV_HEADER])
    return buf.getvalue()


def resolve_workers(cfg: ExperimentConfig) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError as e:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from e
        if n < 1:
            raise ConfigError(f"{WORKERS_ENV} must be >= 1")
        return n
    return cfg.workers or os.cpu_count() or 1


def build_tasks(cfg: ExperimentConfig) -> list[tuple]:
    tasks = []
    for family, param, rho in expand_states(cfg):
        for opts in cfg.levels:
            tasks.append(("level", family, param, rho, (opts, cfg.solver)))
        if cfg.eb_search:
            tasks.append(("eb", family, param, rho, (cfg.eb_samples, cfg.oracle_seed)))
        if cfg.discord:
            tasks.append(("discord", family, param, rho, (tuple(cfg.grid), cfg.refine, cfg.outcomes,
                                                           cfg.oracle_seed)))
    return tasks


def solver_versions() -> dict:
    import cvxpy
    import scipy

    out = dict(python=platform.python_version(), numpy=np.__version__, scipy=scipy.__version__,
               cvxpy=cvxpy.__version__, broadcast_discord=__version__)
    try:
        import clarabel

        out["clarabel"] = getattr(clarabel, "__version__", "unknown")
    except ImportError:
        pass
    return out


def run(cfg: ExperimentConfig, workers: int | None = None) -> tuple[list[dict], dict]:
    """Evaluate every (state, level) row in input order; returns rows and the manifest."""
    t0 = time.perf_counter()
    tasks = build_tasks(cfg)
    workers = workers or resolve_workers(cfg)
    if workers == 1 or len(tasks) == 1:
        rows = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as ex:
            rows = list(ex.map(_task, tasks))
    manifest = dict(config=cfg.raw, versions=solver_versions(), workers=workers, rows=len(rows),
                    failed_rows=sum(r["status"] != "optimal" for r in rows),
                    wall_seconds=time.perf_counter() - t0,
                    row_seconds=sum(r["seconds"] for r in rows))
    return rows, manifest


def write_outputs(prefix: str, rows: list[dict], manifest: dict, base_dir: str = ".") -> tuple[Path, Path]:
    prefix = Path(prefix)
    if not prefix.is_absolute():
        prefix = Path(base_dir) / prefix
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_path = prefix.with_name(prefix.name + ".csv")
    man_path = prefix.with_name(prefix.name + ".manifest.json")
    csv_path.write_text(format_rows(rows))
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return csv_path, man_path


# -- summarizing ----------------------------------------------------------------

class CsvParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def read_rows(text: str) -> list[dict]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CsvParseError(1, "empty file") from None
    if header != CSV_HEADER:
        raise CsvParseError(1, f"header must be {','.join(CSV_HEADER)}")
    rows = []
    for row in reader:
        line = reader.line_num
        if not row:
            continue
        if len(row) != len(CSV_HEADER):
            raise CsvParseError(line, f"expected {len(CSV_HEADER)} fields, got {len(row)}")
        r = dict(zip(CSV_HEADER, row))
        try:
            r["param"] = float(r["param"])
            r["k"] = int(r["k"])
            r["bose"] = parse_bool(r["bose"])
            for c in ("F_star", "d_bound", "gap", "seconds"):
                r[c] = float(r[c])
        except ValueError as e:
            raise CsvParseError(line, str(e)) from None
        rows.append(r)
    return rows


def level_key(r: dict) -> tuple:
    return (r["k"], r["bose"], r["ppt"])


def level_name(key: tuple) -> str:
    k, bose, ppt = key
    if k == DISCORD_K:
        return "discord"
    if k == EB_K:
        return "eb-search"
    s = f"k={k}" + ("" if bose else ",sym")
    return s + (f",ppt={ppt}" if ppt != "none" else "")


def _rank(key: tuple) -> tuple:
    """Position in the expected bottom-to-top order of d values."""
    k, _, ppt = key
    if k == DISCORD_K:
        return (3, 0)
    if k == EB_K:
        return (2, 0)
    return (1 if ppt != "none" else 0, k)


def monotonicity_violations(rows: list[dict]) -> dict[tuple, int]:
    """For each level, the number of points where it exceeds the next level up.

    Hierarchy levels are ordered by k with PPT levels above the plain ones; the
    discord oracle caps everything at ``SANDWICH_TOL``. The EB-search row is a
    feasible-point value and is not included in the chain.
    """
    by_point = defaultdict(dict)
    for r in rows:
        if r["status"] == "optimal":
            by_point[(r["family"], r["param"])][level_key(r)] = r["d_bound"]
    counts = defaultdict(int)
    for vals in by_point.values():
        chain = sorted((k for k in vals if k[0] != EB_K), key=_rank)
        for lo, hi in zip(chain, chain[1:]):
            if _rank(lo)[0] == _rank(hi)[0] == 0 and lo[0] == hi[0]:
                continue  # same k, different symmetry: no order asserted
            tol = SANDWICH_TOL if hi[0] == DISCORD_K else ORDER_TOL
            if vals[lo] > vals[hi] + tol:
                counts[lo] += 1
    return counts


def summarize_rows(rows: list[dict]) -> str:
    groups = defaultdict(list)
    for r in rows:
        groups[level_key(r)].append(r)
    viol = monotonicity_violations(rows)
    lines = [f"{'level':<18} {'rows':>5} {'failed':>6} {'d_min':>12} {'d_max':>12} {'violations':>10}"]
    for key in sorted(groups, key=lambda k: (_rank(k), k)):
        rs = groups[key]
        ds = [r["d_bound"] for r in rs if r["status"] == "optimal"]
        failed = len(rs) - len(ds)
        lo = f"{min(ds):.6g}" if ds else "-"
        hi = f"{max(ds):.6g}" if ds else "-"
        lines.append(f"{level_name(key):<18} {len(rs):>5} {failed:>6} {lo:>12} {hi:>12} {viol.get(key, 0):>10}")
    return "\n".join(lines) + "\n"


def summarize(path) -> str:
    return summarize_rows(read_rows(Path(path).read_text()))


# -- entry point ----------------------------------------------------------------

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="broadcast-discord", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    for name, help_ in (("run", "run a sweep"), ("validate", "check a config without solving")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
    sp = sub.add_parser("summarize", help="per-level table of a result CSV")
    sp.add_argument("csv")
    args = ap.parse_args(argv)

    if args.cmd == "summarize":
        try:
            sys.stdout.write(summarize(args.csv))
        except (OSError, CsvParseError) as e:
            print(f"error: {e}", file=sys.stderr)
            return 1
        return 0

    try:
        cfg, diags = load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    for d in diags:
        print(d, file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        return 1
    if args.cmd == "validate":
        return 0
    try:
        rows, manifest = run(cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    csv_path, man_path = write_outputs(cfg.prefix, rows, manifest)
    failed = manifest["failed_rows"]
    print(f"wrote {len(rows)} rows to {csv_path} ({failed} failed), manifest {man_path}")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
