"""Command-line front end driven by an INI configuration file.

Configuration schema (every key is optional unless marked required)::

    [system]
    type = two_row | homogeneous | custom       (required)
    d = 800                                      two_row only, even
    k1 = 100  k2 = 150  k3 = 200                 two_row only
    mass_profile = large | scaled          two_row only
    masses = masses.txt                          custom only, required
    stiffness = stiffness.txt                    custom only, required

    [internal]
    model = critical-proportional | rayleigh
    alpha = 0.02
    beta = 0.005                                 rayleigh only

    [dampers]
    <name> = grounded <index>
    <name> = connecting <index> <partner>

    [criterion]
    s = 27                                       (required)
    basis = phase | modal

    [optimize]
    bounds = 0.01 10000                          one pair for all dampers
    initial = 100 100 100
    budget = 500
    tol = 1e-6
    multistarts = 3

    [sweep]
    <name> = <damper>, <damper>, ...            e.g. ``50, 950, 220-620``

    [run]
    command = trace | optimize | sweep | bench | check   (required)
    viscosities = 721.1 656.5 415.4              trace and bench
    output = report.txt
    threads = 1
    seed = 0                                     check only
    check_systems = 20                           check only
    bench_sizes = 200 400 800 1600               bench only
    format = table | records

Relative file paths are resolved against the directory of the config file.

Custom matrices use a plain-text format: a header line with the dimensions
(``n`` for a vector, ``rows cols`` for a matrix) followed by the values in
row-major order, separated by any whitespace. Lines starting with ``#`` are
ignored.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dpr1 import EigenError
from .modal import check_modal, check_phase, modal_decompose
from .model import (DamperKind, DamperLayout, DamperSpec, DampingKind, InternalDampingModel,
                    MassSpringSystem, ModelError, build_homogeneous_oscillator,
                    build_two_row_oscillator, random_system)
from .optimize import (OptimizationError, OptimizationProblem, SystemBasis, _trace,
                       optimize_viscosities, position_sweep)
from .trace import EnergyCriterion, TraceError, oracle_trace

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
COMMANDS = ("trace", "optimize", "sweep", "bench", "check")
# largest linearized size for which the trace command also runs the dense oracle
ORACLE_MAX = 40
CHECK_TOL = 1e-8

_SCHEMA = {
    "system": {"type", "d", "k1", "k2", "k3", "mass_profile", "masses", "stiffness"},
    "internal": {"model", "alpha", "beta"},
    "dampers": None,
    "criterion": {"s", "basis"},
    "optimize": {"bounds", "initial", "budget", "tol", "multistarts"},
    "sweep": None,
    "run": {"command", "viscosities", "output", "threads", "seed", "check_systems",
            "bench_sizes", "format"},
}


class ConfigError(ValueError):
    """All validation problems of one config file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    path: Path | None
    system: MassSpringSystem
    internal: InternalDampingModel
    dampers: tuple
    s: int
    basis: str = "phase"
    bounds: tuple = (1e-2, 1e4)
    initial: np.ndarray | None = None
    budget: int = 500
    tol: float = 1e-6
    multistarts: int = 3
    candidates: list = field(default_factory=list)
    command: str = "trace"
    viscosities: np.ndarray | None = None
    output: Path | None = None
    threads: int = 1
    seed: int = 0
    check_systems: int = 20
    bench_sizes: tuple = (200, 400, 800, 1600)
    format: str = "table"
    echo: dict = field(default_factory=dict)

    def problem(self, dampers=None, cache=None) -> OptimizationProblem:
        dampers = self.dampers if dampers is None else dampers
        initial = self.initial if dampers is self.dampers else None
        return OptimizationProblem(
            self.system, self.internal, dampers, self.s, bounds=self.bounds,
            initial=initial, max_evals=self.budget, tol=self.tol,
            multistarts=self.multistarts, basis=self.basis, threads=self.threads,
            cache=cache)


@dataclass
class Report:
    command: str
    config: dict = field(default_factory=dict)
    n: int = 0
    dampers: list = field(default_factory=list)
    viscosities: list = field(default_factory=list)
    objective: float = math.nan
    evaluations: int = 0
    converged: bool = False
    timings: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)


# ---------------------------------------------------------------- parsing

def read_numeric(path) -> np.ndarray:
    """Vector or matrix in the header-plus-values text format."""
    path = Path(path)
    tokens = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            tokens.append(line.split())
    if not tokens:
        raise ValueError(f"{path}: empty file")
    header = tokens[0]
    try:
        shape = tuple(int(t) for t in header)
    except ValueError:
        raise ValueError(f"{path}: header must hold integer dimensions") from None
    if len(shape) not in (1, 2) or min(shape) < 1:
        raise ValueError(f"{path}: header must be 'n' or 'rows cols' with positive sizes")
    values = [v for row in tokens[1:] for v in row]
    try:
        data = np.array(values, dtype=float)
    except ValueError:
        raise ValueError(f"{path}: non-numeric entry") from None
    if data.size != math.prod(shape):
        raise ValueError(f"{path}: expected {math.prod(shape)} values, found {data.size}")
    return data.reshape(shape)


def write_numeric(path, a) -> None:
    a = np.asarray(a, dtype=float)
    lines = [" ".join(str(d) for d in a.shape)]
    rows = a.reshape(1, -1) if a.ndim == 1 else a
    lines += [" ".join(repr(float(v)) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def parse_damper(text: str) -> DamperSpec:
    """``grounded 50``, ``connecting 220 620``, or the short forms ``50`` and ``220-620``."""
    parts = text.split()
    if len(parts) == 1:
        if "-" in parts[0]:
            a, b = parts[0].split("-", 1)
            return DamperSpec.connecting(int(a), int(b))
        return DamperSpec.grounded(int(parts[0]))
    kind = DamperKind(parts[0])
    if kind is DamperKind.GROUNDED:
        if len(parts) != 2:
            raise ValueError("grounded damper takes one index")
        return DamperSpec.grounded(int(parts[1]))
    if len(parts) != 3:
        raise ValueError("connecting damper takes an index and a partner")
    return DamperSpec.connecting(int(parts[1]), int(parts[2]))


class _Reader:
    """Typed access to a ConfigParser that records every problem."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.errors: list[str] = []

    def get(self, section, key, conv, default=None, required=False):
        if not self.cp.has_option(section, key):
            if required:
                self.errors.append(f"{section}.{key}: required")
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.errors.append(f"{section}.{key}: {exc} (got {raw!r})")
            return default

    def check(self, ok: bool, message: str):
        if not ok:
            self.errors.append(message)


def _int(raw):
    return int(raw.strip())


def _float(raw):
    v = float(raw.strip())
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _floats(raw):
    return np.array([_float(t) for t in raw.split()], dtype=float)


def _ints(raw):
    return tuple(_int(t) for t in raw.split())


def _choice(*options):
    def conv(raw):
        v = raw.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return conv


def parse_config(path) -> RunConfig:
    """Read and fully validate a config file; raises ConfigError listing every problem."""
    path = Path(path)
    cp = configparser.ConfigParser(inline_comment_prefixes=(";",), interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise ConfigError([f"{path}: {exc.strerror}"]) from None
    except configparser.Error as exc:
        raise ConfigError([f"{path}: {exc}"]) from None
    return config_from_parser(cp, path)


def config_from_parser(cp: configparser.ConfigParser, path: Path | None = None) -> RunConfig:
    r = _Reader(cp)
    base = path.parent if path is not None else Path(".")
    for section in cp.sections():
        if section not in _SCHEMA:
            r.errors.append(f"{section}: unknown section")
            continue
        allowed = _SCHEMA[section]
        if allowed is not None:
            for key in cp[section]:
                if key not in allowed:
                    r.errors.append(f"{section}.{key}: unknown key")

    command = r.get("run", "command", _choice(*COMMANDS), required=True)

    # system
    system = None
    kind = r.get("system", "type", _choice("two_row", "homogeneous", "custom"), required=True)
    if kind == "two_row":
        d = r.get("system", "d", _int, 800)
        ks = [r.get("system", k, _float, v) for k, v in (("k1", 100.0), ("k2", 150.0),
                                                            ("k3", 200.0))]
        profile = r.get("system", "mass_profile", _choice("large", "scaled"),
                        "large")
        try:
            system = build_two_row_oscillator(d, *ks, mass_profile=profile)
        except ModelError as exc:
            r.errors.append(f"system: {exc}")
    elif kind == "homogeneous":
        system = build_homogeneous_oscillator()
    elif kind == "custom":
        mfile = r.get("system", "masses", str, required=True)
        kfile = r.get("system", "stiffness", str, required=True)
        arrays = []
        for key, name in (("masses", mfile), ("stiffness", kfile)):
            if name is None:
                continue
            p = base / name
            if not p.is_file():
                r.errors.append(f"system.{key}: file {p} does not exist")
                continue
            try:
                arrays.append(read_numeric(p))
            except ValueError as exc:
                r.errors.append(f"system.{key}: {exc}")
        if len(arrays) == 2:
            try:
                system = MassSpringSystem(arrays[0], arrays[1], label=f"custom({mfile})")
            except ModelError as exc:
                r.errors.append(f"system: {exc}")
    if kind != "two_row" and cp.has_section("system"):
        for key in ("d", "k1", "k2", "k3", "mass_profile"):
            r.check(not cp.has_option("system", key), f"system.{key}: only valid for two_row")
    if kind != "custom" and cp.has_section("system"):
        for key in ("masses", "stiffness"):
            r.check(not cp.has_option("system", key), f"system.{key}: only valid for custom")
    n = system.n if system is not None else None

    # internal damping
    internal = None
    model = r.get("internal", "model", _choice(*(k.value for k in DampingKind)),
                  DampingKind.CRITICAL.value)
    alpha = r.get("internal", "alpha", _float, 0.02)
    beta = r.get("internal", "beta", _float, None)
    try:
        internal = InternalDampingModel(model, alpha, beta)
    except (ModelError, ValueError) as exc:
        r.errors.append(f"internal: {exc}")

    # dampers
    dampers = []
    if cp.has_section("dampers"):
        for name, raw in cp["dampers"].items():
            try:
                spec = parse_damper(raw)
                if n is not None:
                    spec.validate(n)
                dampers.append(spec)
            except (ModelError, ValueError) as exc:
                r.errors.append(f"dampers.{name}: {exc}")
    if command == "optimize":
        r.check(bool(dampers), "dampers: command=optimize needs at least one damper")

    # criterion
    s = r.get("criterion", "s", _int, required=True)
    basis = r.get("criterion", "basis", _choice("phase", "modal"), "phase")
    if s is not None:
        r.check(s >= 1, f"criterion.s: must be >= 1, got {s}")
        if n is not None:
            r.check(s <= n, f"criterion.s: must be <= n={n}, got {s}")

    # optimize
    bounds = r.get("optimize", "bounds", _floats, np.array([1e-2, 1e4]))
    if bounds is not None:
        r.check(bounds.size == 2 and 0 < bounds[0] < bounds[1],
                "optimize.bounds: need two values with 0 < lo < hi")
    initial = r.get("optimize", "initial", _floats, None)
    if initial is not None:
        r.check(initial.size == len(dampers),
                f"optimize.initial: {len(dampers)} values expected, got {initial.size}")
        if bounds is not None and bounds.size == 2:
            r.check(bool(np.all((initial >= bounds[0]) & (initial <= bounds[1]))),
                    "optimize.initial: values must lie within the bounds")
    budget = r.get("optimize", "budget", _int, 500)
    tol = r.get("optimize", "tol", _float, 1e-6)
    multistarts = r.get("optimize", "multistarts", _int, 3)
    r.check(budget is None or budget >= 1, "optimize.budget: must be >= 1")
    r.check(tol is None or tol > 0, "optimize.tol: must be > 0")
    r.check(multistarts is None or multistarts >= 1, "optimize.multistarts: must be >= 1")

    # sweep candidates
    candidates = []
    if cp.has_section("sweep"):
        for name, raw in cp["sweep"].items():
            try:
                specs = tuple(parse_damper(part.strip()) for part in raw.split(",") if part.strip())
                if not specs:
                    raise ValueError("empty candidate")
                if n is not None:
                    for spec in specs:
                        spec.validate(n)
                candidates.append(specs)
            except (ModelError, ValueError) as exc:
                r.errors.append(f"sweep.{name}: {exc}")
    if command == "sweep":
        r.check(bool(candidates), "sweep: command=sweep needs at least one candidate")

    # run
    visc = r.get("run", "viscosities", _floats, None)
    if command == "trace":
        r.check(visc is not None, "run.viscosities: required for command=trace")
    if visc is not None and command in ("trace", "bench"):
        r.check(visc.size == len(dampers),
                f"run.viscosities: {len(dampers)} values expected, got {visc.size}")
        r.check(bool(np.all(visc >= 0)), "run.viscosities: must be nonnegative")
    output = r.get("run", "output", str, None)
    threads = r.get("run", "threads", _int, 1)
    r.check(threads is None or threads >= 1, "run.threads: must be >= 1")
    seed = r.get("run", "seed", _int, 0)
    check_systems = r.get("run", "check_systems", _int, 20)
    r.check(check_systems is None or check_systems >= 1, "run.check_systems: must be >= 1")
    sizes = r.get("run", "bench_sizes", _ints, (200, 400, 800, 1600))
    r.check(sizes is None or (len(sizes) >= 1 and min(sizes) >= 4),
            "run.bench_sizes: need sizes >= 4")
    fmt = r.get("run", "format", _choice("table", "records"), "table")

    if r.errors:
        raise ConfigError(r.errors)
    echo = {sec: dict(cp[sec]) for sec in cp.sections()}
    return RunConfig(
        path=path, system=system, internal=internal, dampers=tuple(dampers), s=s,
        basis=basis, bounds=tuple(bounds), initial=initial, budget=budget, tol=tol,
        multistarts=multistarts, candidates=candidates, command=command,
        viscosities=visc, output=(base / output) if output else None, threads=threads,
        seed=seed, check_systems=check_systems, bench_sizes=tuple(sizes), format=fmt,
        echo=echo)


# ---------------------------------------------------------------- commands

def _damper_label(specs) -> list[str]:
    return [str(s) for s in specs]


def _base_report(cfg: RunConfig) -> Report:
    return Report(command=cfg.command, config=cfg.echo, n=cfg.system.n,
                  dampers=_damper_label(cfg.dampers))


def _run_trace(cfg: RunConfig) -> Report:
    rep = _base_report(cfg)
    t0 = time.perf_counter()
    basis = SystemBasis.build(cfg.system, cfg.internal)
    prob = cfg.problem(cache=basis)
    res = _trace(prob, cfg.viscosities)
    rep.viscosities = [float(v) for v in cfg.viscosities]
    rep.objective = res.value
    rep.evaluations = 1
    rep.converged = True
    rep.timings = {"modal": basis.seconds, "eigen": res.timings["eigen"],
                   "trace": res.timings["trace"], "total": time.perf_counter() - t0}
    rep.diagnostics = {"imag_leak": res.imag_leak,
                       "max_secular_residual": res.diagnostics["max_secular_residual"],
                       "warnings": len(res.diagnostics["warnings"])}
    if 2 * cfg.system.n <= ORACLE_MAX:
        ref = oracle_trace(cfg.system, cfg.internal, cfg.dampers, cfg.viscosities,
                           prob.criterion)
        rep.diagnostics["oracle"] = ref
        rep.diagnostics["oracle_rel_error"] = abs(res.value - ref) / abs(ref)
    return rep


def _run_optimize(cfg: RunConfig) -> Report:
    rep = _base_report(cfg)
    t0 = time.perf_counter()
    basis = SystemBasis.build(cfg.system, cfg.internal)
    prob = cfg.problem(cache=basis)
    res = optimize_viscosities(prob)
    rep.viscosities = [float(v) for v in res.viscosities]
    rep.objective = float(res.objective)
    rep.evaluations = res.evaluations
    rep.converged = res.converged
    rep.timings = {"modal": basis.seconds, "eigen": res.timings.get("eigen", 0.0),
                   "trace": res.timings.get("trace", 0.0),
                   "optimization": res.timings.get("optimization", 0.0),
                   "total": time.perf_counter() - t0}
    rep.diagnostics = {"gradient_norm": res.gradient_norm,
                       "start": [float(v) for v in res.start]}
    return rep


def _run_sweep(cfg: RunConfig) -> Report:
    rep = _base_report(cfg)
    t0 = time.perf_counter()
    basis = SystemBasis.build(cfg.system, cfg.internal)
    template = cfg.problem(dampers=cfg.candidates[0], cache=basis)
    results = position_sweep(template, cfg.candidates)
    for r in results:
        rep.rows.append({"indices": " ".join(_damper_label(r.dampers)),
                         "viscosities": [float(v) for v in r.viscosities],
                         "objective": float(r.objective), "evaluations": r.evaluations,
                         "error": r.error or ""})
    if results and math.isfinite(results[0].objective):
        best = results[0]
        rep.dampers = _damper_label(best.dampers)
        rep.viscosities = [float(v) for v in best.viscosities]
        rep.objective = float(best.objective)
        rep.converged = best.converged
    rep.evaluations = sum(r.evaluations for r in results)
    rep.timings = {"modal": basis.seconds, "total": time.perf_counter() - t0}
    return rep


def bench_layout(d: int, specs) -> list[DamperSpec]:
    """Damper positions of an ``n = 2*800 + 1`` layout mapped onto a two-row system of size ``d``."""
    scale = d / 800.0
    n = 2 * d + 1

    def place(i):
        return min(max(1, int(round(i * scale))), n)

    out = []
    for spec in specs:
        if spec.kind is DamperKind.GROUNDED:
            out.append(DamperSpec.grounded(place(spec.index)))
        else:
            a, b = place(spec.index), place(spec.partner)
            out.append(DamperSpec.connecting(a, b if b != a else min(a + 1, n)))
    return out


def _run_bench(cfg: RunConfig) -> Report:
    rep = _base_report(cfg)
    specs = cfg.dampers or DamperLayout.three_dampers(50, 950, 220).specs
    visc = cfg.viscosities if cfg.viscosities is not None else np.full(len(specs), 500.0)
    prev = None
    # load the compiled kernels before anything is timed
    warm = build_two_row_oscillator(2, mass_profile="scaled")
    _trace(OptimizationProblem(warm, cfg.internal, bench_layout(2, specs), 1), visc)
    for size in cfg.bench_sizes:
        d = max(2, 2 * (size // 4))
        system = build_two_row_oscillator(d, mass_profile="scaled")
        layout = bench_layout(d, specs)
        s = min(cfg.s, system.n)
        prob = OptimizationProblem(system, cfg.internal, layout, s, basis=cfg.basis)
        t0 = time.perf_counter()
        prob.prepared()
        prob.update_vectors()
        t1 = time.perf_counter()
        res = _trace(prob, visc)
        t2 = time.perf_counter()
        row = {"n": system.n, "linearized": 2 * system.n,
               "indices": " ".join(_damper_label(layout)), "objective": res.value,
               "modal": t1 - t0, "trace": t2 - t1,
               "ratio": (t2 - t1) / prev if prev else math.nan}
        prev = t2 - t1
        rep.rows.append(row)
    rep.viscosities = [float(v) for v in visc]
    rep.evaluations = len(rep.rows)
    rep.converged = True
    return rep


def run_check(seed: int, count: int, max_n: int = 10) -> list[dict]:
    """Oracle equivalence on random small systems, plus structural residuals."""
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(count):
        n = int(rng.integers(3, max_n + 1))
        k = int(rng.integers(1, 4))
        s = int(rng.integers(1, n + 1))
        system = random_system(rng, n)
        internal = InternalDampingModel(alpha=float(rng.uniform(0.01, 0.1)))
        specs = [DamperSpec.grounded(int(rng.integers(1, n + 1))) for _ in range(k)]
        rho = rng.uniform(0.1, 3.0, k)
        prob = OptimizationProblem(system, internal, specs, s, bounds=(1e-3, 1e3))
        fast = _trace(prob, rho)
        ref = oracle_trace(system, internal, specs, rho, prob.criterion)
        c = prob.prepared()
        rows.append({"n": n, "k": k, "s": s, "fast": fast.value, "oracle": ref,
                     "rel_error": abs(fast.value - ref) / abs(ref),
                     "modal_residual": float(check_modal(system, c.modal)[0]),
                     "phase_residual": check_phase(c.phase)})
    return rows


def _run_check(cfg: RunConfig) -> Report:
    rep = _base_report(cfg)
    t0 = time.perf_counter()
    rep.rows = run_check(cfg.seed, cfg.check_systems)
    worst = max(r["rel_error"] for r in rep.rows)
    rep.objective = worst
    rep.evaluations = len(rep.rows)
    rep.converged = worst <= CHECK_TOL
    rep.diagnostics = {"max_rel_error": worst, "tolerance": CHECK_TOL}
    rep.timings = {"total": time.perf_counter() - t0}
    return rep


_DISPATCH = {"trace": _run_trace, "optimize": _run_optimize, "sweep": _run_sweep,
             "bench": _run_bench, "check": _run_check}


def run(cfg: RunConfig) -> Report:
    return _DISPATCH[cfg.command](cfg)


# ---------------------------------------------------------------- reports

def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}" if math.isfinite(v) else str(v)
    if isinstance(v, list):
        return " ".join(_fmt(x) for x in v)
    return str(v)


def _table(headers, rows) -> list[str]:
    cells = [[_fmt(r.get(h, "")) for h in headers] for r in rows]
    widths = [max([len(h)] + [len(c[i]) for c in cells]) for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)),
           "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(row, widths)) for row in cells]
    return out


def render_table(rep: Report) -> str:
    lines = [f"command: {rep.command}"]
    if rep.command in ("trace", "optimize"):
        head = ["size", "linearized size", "indices",
                "optimal viscosities" if rep.command == "optimize" else "viscosities",
                "trace"]
        lines += _table(head, [{"size": rep.n, "linearized size": 2 * rep.n,
                                "indices": ", ".join(rep.dampers),
                                head[3]: [round(v, 1) for v in rep.viscosities],
                                "trace": rep.objective}])
        lines.append(f"evaluations: {rep.evaluations}  converged: {rep.converged}")
    elif rep.command == "sweep":
        lines += _table(["indices", "viscosities", "objective", "evaluations", "error"],
                        rep.rows)
    elif rep.command == "bench":
        lines += _table(["n", "linearized", "indices", "modal", "trace", "ratio"], rep.rows)
    elif rep.command == "check":
        lines += _table(["n", "k", "s", "fast", "oracle", "rel_error"], rep.rows)
        lines.append(f"max relative error {rep.objective:.3e} "
                     f"({'pass' if rep.converged else 'FAIL'} at {CHECK_TOL:g})")
    if rep.timings:
        lines.append("times [s]: " + "  ".join(f"{k} {v:.3f}" for k, v in rep.timings.items()))
    for k, v in rep.diagnostics.items():
        lines.append(f"{k}: {_fmt(v)}")
    return "\n".join(lines) + "\n"


def render_records(rep: Report) -> str:
    """One ``key=value`` line per field; values are JSON so floats round-trip exactly."""
    lines = []

    def put(key, value):
        lines.append(f"{key}={json.dumps(value, sort_keys=True)}")

    put("command", rep.command)
    for sec, kv in rep.config.items():
        for k, v in kv.items():
            put(f"config.{sec}.{k}", v)
    put("n", rep.n)
    put("dampers", rep.dampers)
    put("viscosities", rep.viscosities)
    put("objective", rep.objective)
    put("evaluations", rep.evaluations)
    put("converged", rep.converged)
    for k, v in rep.timings.items():
        put(f"timings.{k}", v)
    for k, v in rep.diagnostics.items():
        put(f"diagnostics.{k}", v)
    for i, row in enumerate(rep.rows):
        put(f"row.{i}", row)
    return "\n".join(lines) + "\n"


def parse_records(text: str) -> Report:
    rep = Report(command="")
    rows = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, raw = line.split("=", 1)
        value = json.loads(raw)
        head, _, rest = key.partition(".")
        if head == "config":
            sec, _, k = rest.partition(".")
            rep.config.setdefault(sec, {})[k] = value
        elif head == "timings":
            rep.timings[rest] = value
        elif head == "diagnostics":
            rep.diagnostics[rest] = value
        elif head == "row":
            rows[int(rest)] = value
        else:
            setattr(rep, key, value)
    rep.rows = [rows[i] for i in sorted(rows)]
    return rep


def emit_report(rep: Report, fmt: str = "table", out=None) -> str:
    text = render_records(rep) if fmt == "records" else render_table(rep)
    if out is not None:
        try:
            Path(out).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {out}: {exc.strerror}") from None
    return text


# ---------------------------------------------------------------- entry point

def _provenance(exc: BaseException) -> str:
    return f"{type(exc).__module__}.{type(exc).__name__}: {exc}"


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="dampopt",
                                 description="Optimize external damper viscosities.")
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="write the report here (overrides run.output)")
    ap.add_argument("--threads", type=int, help="thread count (overrides run.threads)")
    ap.add_argument("--format", choices=("table", "records"),
                    help="report format (overrides run.format)")
    args = ap.parse_args(argv)
    try:
        cfg = parse_config(args.config)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError(["--threads: must be >= 1"])
            cfg.threads = args.threads
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    fmt = args.format or cfg.format
    out = args.out or cfg.output
    try:
        rep = run(cfg)
    except (TraceError, EigenError, ArithmeticError, OptimizationError, ModelError) as exc:
        print(f"numerical failure: {_provenance(exc)}", file=sys.stderr)
        return EXIT_NUMERIC
    try:
        text = emit_report(rep, fmt, out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if out is None:
        sys.stdout.write(text)
    if rep.command == "check" and not rep.converged:
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
