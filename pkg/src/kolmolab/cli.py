"""Command-line experiment runner.

Every subcommand reads one JSON configuration (``--config``), writes its
artifacts below the output directory and returns

* 0 on success,
* 1 on a numerical failure (solve or eigen-solver breakdown),
* 2 on a configuration or validation error,
* 3 when a standing hypothesis of the theory is violated (refusal),
* 4 when the run completed but recorded findings.

Outputs carry no timestamps, so an identical configuration reproduces
byte-identical CSV and JSON files.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from ._io import json_text, write_csv, write_json, atomic_write_text
from .approximation import check_hypothesis, run_scheme
from .exceptions import ConfigurationError, HypothesisViolation, KolmolabError
from .fields import BoundarySpec, DriftSpec, MatrixSpec, make_boundary, make_drift, make_matrix
from .formbounds import default_eps_grid, estimate_mf_delta, estimate_quadratic_bound
from .grid import GridDomain, build_domain, save_field
from .mollify import default_schedule, verify_mollification
from .regularity import (
    BATTERIES,
    caccioppoli_recurrence_bound,
    degiorgi_lemma,
    degiorgi_threshold,
    profile,
    stable_gradient_exponent,
)
from .solver import assemble, solve_dirichlet

__all__ = ["ExperimentConfig", "load_config", "main", "run", "emit_plots", "EXIT_CODES"]

logger = logging.getLogger("kolmolab")

SCHEMA_VERSION = 1
EXIT_CODES = {"ok": 0, "failure": 1, "validation": 2, "refused": 3, "findings": 4}
STAGES = ("formbound", "mollify", "approx", "verify")
_TOP_KEYS = {
    "schema_version",
    "domain",
    "coefficients",
    "schedule",
    "form",
    "batteries",
    "regularity",
    "formbound",
    "output_dir",
    "seed",
    "tolerances",
    "stages",
}


@dataclass
class ExperimentConfig:
    domain: GridDomain
    drift: DriftSpec
    matrix: MatrixSpec
    boundary: BoundarySpec
    schedule: list
    form: str = "divergence"
    batteries: list = field(default_factory=lambda: ["all"])
    regularity: dict = field(default_factory=dict)
    formbound: dict = field(default_factory=dict)
    output_dir: Path = Path("kolmolab-out")
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    stages: list = field(default_factory=lambda: list(STAGES))
    raw: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def battery_names(self):
        names = []
        for name in self.batteries:
            names.extend(BATTERIES if name == "all" else [name])
        return list(dict.fromkeys(names))


def _fail(path, message):
    raise ConfigurationError(f"{path}: {message}")


def _section(raw, key, default):
    value = raw.get(key, default)
    if not isinstance(value, dict):
        _fail(key, f"expected an object, got {type(value).__name__}")
    return value


def _build(path, factory, data):
    try:
        return factory(data)
    except ConfigurationError as exc:
        _fail(path, str(exc))
    except TypeError as exc:
        _fail(path, str(exc))


def parse_config(raw: dict, *, grid=None, out=None, battery=None, seed=None) -> ExperimentConfig:
    """Validate a configuration mapping; command-line overrides win."""
    if not isinstance(raw, dict):
        _fail("<root>", "configuration must be a JSON object")
    raw = copy.deepcopy(raw)
    unknown = sorted(set(raw) - _TOP_KEYS)
    if unknown:
        _fail(unknown[0], "unknown key")
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        _fail("schema_version", f"unsupported version {version!r} (expected {SCHEMA_VERSION})")
    raw["schema_version"] = SCHEMA_VERSION
    dom = _section(raw, "domain", {})
    if grid is not None:
        dom["resolution"] = int(grid)
        raw["domain"] = dom
    for key, kind in (("dimension", int), ("resolution", int), ("half_extent", (int, float))):
        if key in dom and (isinstance(dom[key], bool) or not isinstance(dom[key], kind)):
            _fail(f"domain.{key}", f"expected a number, got {dom[key]!r}")
    resolution = dom.get("resolution", 33)
    if resolution < 3:
        _fail("domain.resolution", f"must be >= 3, got {resolution}")
    if dom.get("half_extent", 1.0) <= 0:
        _fail("domain.half_extent", "must be > 0")
    domain = _build(
        "domain",
        lambda d: build_domain(d.get("dimension", 3), float(d.get("half_extent", 1.0)), int(resolution)),
        dom,
    )
    coeff = _section(raw, "coefficients", {})
    drift = _build("coefficients.drift", DriftSpec.from_dict, coeff.get("drift", {"kind": "zero"}))
    matrix = _build("coefficients.matrix", MatrixSpec.from_dict, coeff.get("matrix", {"kind": "identity"}))
    boundary = _build("coefficients.boundary", BoundarySpec.from_dict, coeff.get("boundary", {"kind": "affine"}))
    sched = raw.get("schedule", {})
    if isinstance(sched, list):
        schedule = [float(e) for e in sched]
    elif isinstance(sched, dict):
        schedule = default_schedule(domain, sched.get("count", 3), sched.get("eps0"), sched.get("factor", 0.5))
    else:
        _fail("schedule", "expected a list of eps values or an object {count, eps0, factor}")
    if not schedule:
        _fail("schedule", "empty after truncation at 2h")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        _fail("schedule", "must be strictly decreasing")
    if min(schedule) < 2 * domain.spacing * (1 - 1e-12):
        _fail("schedule", f"eps = {min(schedule):g} is below 2h = {2 * domain.spacing:g}")
    form = raw.get("form", "divergence")
    if form not in ("divergence", "convection"):
        _fail("form", f"expected 'divergence' or 'convection', got {form!r}")
    batteries = raw.get("batteries", ["all"])
    if battery is not None:
        batteries = [battery]
        raw["batteries"] = batteries
    if isinstance(batteries, str):
        batteries = [batteries]
    for i, name in enumerate(batteries):
        if name != "all" and name not in BATTERIES:
            _fail(f"batteries[{i}]", f"unknown battery {name!r}; expected one of {('all',) + BATTERIES}")
    stages = raw.get("stages", list(STAGES))
    for i, name in enumerate(stages):
        if name not in STAGES:
            _fail(f"stages[{i}]", f"unknown stage {name!r}; expected one of {STAGES}")
    if seed is not None:
        raw["seed"] = int(seed)
    seed_value = raw.get("seed", 0)
    if isinstance(seed_value, bool) or not isinstance(seed_value, int):
        _fail("seed", f"expected an integer, got {seed_value!r}")
    if out is not None:
        raw["output_dir"] = str(out)
    output_dir = Path(raw.get("output_dir", "kolmolab-out"))
    reg = _section(raw, "regularity", {})
    unknown_reg = sorted(set(reg) - {"center", "R", "r", "c", "theta", "q"})
    if unknown_reg:
        _fail(f"regularity.{unknown_reg[0]}", "unknown key")
    fb = _section(raw, "formbound", {})
    tol = _section(raw, "tolerances", {})
    return ExperimentConfig(
        domain=domain,
        drift=drift,
        matrix=matrix,
        boundary=boundary,
        schedule=schedule,
        form=form,
        batteries=list(batteries),
        regularity=reg,
        formbound=fb,
        output_dir=output_dir,
        seed=seed_value,
        tolerances=tol,
        stages=list(stages),
        raw={k: v for k, v in raw.items() if k != "output_dir"},
    )


def load_config(path, **overrides) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read configuration ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON ({exc.msg})") from exc
    return parse_config(raw, **overrides)


def _workers():
    env = os.environ.get("KOLMOLAB_THREADS")
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigurationError(f"KOLMOLAB_THREADS: expected an integer, got {env!r}") from None


@dataclass
class StageResult:
    name: str
    constants: dict = field(default_factory=dict)
    findings: list = field(default_factory=list)
    files: list = field(default_factory=list)
    error: str | None = None


# -- stages -----------------------------------------------------------------


def stage_formbound(cfg: ExperimentConfig) -> StageResult:
    """Bounds of both divergence parts, ``|b|^2`` and the multiplicative ``|b|``.

    ``formbound.companion`` may be a list; every entry gives one row per field,
    tracing the bound as a function of the companion constant.
    """
    res = StageResult("formbound")
    out = cfg.output_dir
    companions = cfg.formbound.get("companion", 0.0)
    companions = [float(c) for c in (companions if isinstance(companions, list) else [companions])]
    points = int(cfg.formbound.get("eps_points", 25))
    drift = make_drift(cfg.drift, cfg.domain)
    mag = drift.b.magnitude()
    weights = (
        ("div_plus", "potential", drift.div_plus),
        ("div_minus", "potential", drift.div_minus),
        ("abs_b_sq", "form_bounded", mag.with_values(mag.values**2)),
    )
    header = ["field_id", "class", "companion", "bound", "eps_star", "iterations", "residual", "grid_n"]
    rows = []
    curve_rows = []
    for c in companions:
        for field_id, cls, W in weights:
            est = estimate_quadratic_bound(W, c, random_state=cfg.seed)
            rows.append([field_id, cls, c, est.bound, None, est.rayleigh_iterations, est.residual, est.grid_n])
        est = estimate_mf_delta(mag, c, default_eps_grid(cfg.domain, points), random_state=cfg.seed)
        rows.append(["abs_b", "multiplicative", c, est.bound, est.eps_star, est.rayleigh_iterations, est.residual, est.grid_n])
        curve_rows.extend([c, e, m] for e, m in est.eps_curve)
        if est.eps_at_edge:
            res.findings.append(f"formbound: maximizing eps on the search edge (companion {c:g})")
    res.files.append(write_csv(out / "formbound.csv", header, rows))
    res.files.append(write_csv(out / "formbound_eps_curve.csv", ["companion", "eps", "mu"], curve_rows))
    first = {r[0]: r[3] for r in rows[:4]}
    res.constants = {"nu_plus": first["div_plus"], "nu_minus": first["div_minus"], "delta": first["abs_b"]}
    return res


def stage_mollify(cfg: ExperimentConfig) -> StageResult:
    res = StageResult("mollify")
    drift = make_drift(cfg.drift, cfg.domain)
    rep = verify_mollification(
        drift,
        cfg.schedule,
        companion=float(cfg.formbound.get("companion", 0.0)),
        delta_tol=float(cfg.tolerances.get("delta_tol", 0.05)),
        estimate_delta=bool(cfg.formbound.get("mollify_delta", True)),
        eps_grid_points=int(cfg.formbound.get("eps_points", 25)),
    )
    header = ["eps", "sup_bn", "sup_times_eps", "delta_n", "l1_distance", "divsplit_maxviolation", "divsplit_min"]
    res.files.append(write_csv(cfg.output_dir / "mollify.csv", header, rep.rows))
    res.constants = {"reference_delta": rep.reference_delta, "sup_times_eps": rep.column("sup_times_eps")}
    res.findings.extend(rep.findings)
    return res


def stage_solve(cfg: ExperimentConfig) -> StageResult:
    res = StageResult("solve")
    drift = make_drift(cfg.drift, cfg.domain)
    a = make_matrix(cfg.matrix, cfg.domain)
    g = make_boundary(cfg.boundary, cfg.domain)
    system = assemble(a, drift.b, drift.div_plus, drift.div_minus, form=cfg.form)
    tol = cfg.tolerances.get("solve")
    result = solve_dirichlet(system, g, tol=tol)
    gsup = float(np.abs(g.values).max())
    budget = 10 * cfg.domain.spacing**2 * gsup
    res.constants = {
        "linear_residual": result.linear_residual,
        "iterations": result.iterations,
        "max_principle_excess": result.max_principle_excess,
        "method": result.method,
        "peclet": system.peclet,
    }
    if result.max_principle_excess > budget:
        res.findings.append(f"solve: max_principle_excess {result.max_principle_excess:.3e} exceeds 10 h^2 |g|")
    res.files.append(write_json(cfg.output_dir / "solve.json", res.constants))
    res.files.append(save_field(cfg.output_dir / "solution.bin", result.u))
    return res


def _approx(cfg):
    return run_scheme(
        cfg.matrix,
        cfg.drift,
        cfg.boundary,
        cfg.schedule,
        cfg.domain,
        form=cfg.form,
        companion=float(cfg.formbound.get("companion", 0.0)),
        workers=_workers(),
    )


def stage_approx(cfg: ExperimentConfig, report=None) -> StageResult:
    res = StageResult("approx")
    rep = _approx(cfg) if report is None else report
    summary = rep.summary()
    res.files.append(write_json(cfg.output_dir / "approx.json", summary))
    n = len(rep.eps_schedule)
    header = ["n", "m", "eps_n", "eps_m", "l2_distance"]
    rows = [
        [i, j, rep.eps_schedule[i], rep.eps_schedule[j], rep.cauchy_matrix[i, j]]
        for i in range(n)
        for j in range(i + 1, n)
    ]
    res.files.append(write_csv(cfg.output_dir / "cauchy.csv", header, rows))
    res.constants = {k: summary[k] for k in ("w12_norms", "limit_weak_residual", "nu_plus")}
    res.findings.extend(rep.findings)
    return res


_BATTERY_COLUMNS = {
    "caccioppoli": ["caccioppoli_K", "supbound_K"],
    "harnack": ["harnack_C"],
    "holder": ["holder_gamma", "holder_K"],
    "gradlp": ["reverse_holder_ratio"],
    "logbmo": ["log_grad_K", "log_bmo_K"],
    "crossprod": ["crossproduct_C"],
}


def _lemma_rows(seed):
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(100):
        C, gamma, alpha = rng.uniform(0.5, 2.0), rng.uniform(1.5, 4.0), rng.uniform(0.5, 2.0)
        x0 = degiorgi_threshold(C, gamma, alpha)
        seq, ok = degiorgi_lemma(C, gamma, alpha, x0)
        rows.append(["degiorgi", k, C, gamma, alpha, x0, seq[-1], ok])
    for s in (0.0, 0.5, 1.0):
        beta = caccioppoli_recurrence_bound(s)
        rows.append(["recurrence", s, s, None, None, float(beta), float(beta) ** 2, beta**2 <= 3 + 2 * s])
    return ["lemma", "index", "C_or_s", "gamma", "alpha", "x0_or_beta", "last_or_beta_sq", "ok"], rows


def _battery(cfg, name, solutions):
    out = cfg.output_dir / f"verify_{name}.csv"
    res = StageResult(f"verify:{name}")
    if name == "lemmas":
        header, rows = _lemma_rows(cfg.seed)
        bad = [r for r in rows if not r[-1]]
        if bad:
            res.findings.append(f"lemmas: {len(bad)} iterations failed to converge or exceeded the bound")
        res.files.append(write_csv(out, header, rows))
        return res
    cols = _BATTERY_COLUMNS[name]
    reg = cfg.regularity
    Rs = reg.get("R")
    Rs = Rs if isinstance(Rs, list) else [Rs]
    rows = []
    tables = []
    for eps, u in zip(cfg.schedule, solutions):
        for R in Rs:
            rep = profile(
                u,
                reg.get("center"),
                R,
                r=reg.get("r"),
                c=reg.get("c"),
                theta=reg.get("theta", 1.2),
                q=reg.get("q", 0.5),
                batteries=(name,),
            )
            rows.append([eps, rep.parameters["R"]] + [getattr(rep, c) for c in cols])
            tables.append(rep.grad_lp_table)
            res.findings.extend(f"eps={eps:g}: {f}" for f in rep.findings if not f.startswith("holder: gamma clamped"))
    header = ["eps", "R"] + cols
    for j, c in enumerate(cols):
        res.constants[c] = [r[2 + j] for r in rows]
    if name == "gradlp" and tables and all(tables):
        header += [f"grad_L{p:g}" for p, _ in tables[0]]
        rows = [row + [v for _, v in t] for row, t in zip(rows, tables)]
        res.constants["stable_p"] = stable_gradient_exponent(tables)
    res.files.append(write_csv(out, header, rows))
    if name == "harnack" and any(v is not None and v < 1 for v in res.constants["harnack_C"]):
        res.findings.append("harnack: quotient below 1")
    return res


def stage_verify(cfg: ExperimentConfig, report=None) -> list[StageResult]:
    names = cfg.battery_names()
    solutions = []
    if any(n != "lemmas" for n in names):
        report = _approx(cfg) if report is None else report
        solutions = report.solutions

    def guarded(name):
        try:
            return _battery(cfg, name, solutions)
        except KolmolabError as exc:
            return StageResult(f"verify:{name}", error=str(exc))

    with ThreadPoolExecutor(max_workers=_workers()) as pool:
        return list(pool.map(guarded, names))


# -- orchestration ------------------------------------------------------------


def _versions():
    return {
        "kolmolab": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _write_manifest(cfg, results, status):
    payload = {
        "config_hash": cfg.hash,
        "config": cfg.raw,
        "versions": _versions(),
        "status": status,
        "stages": [
            {
                "name": r.name,
                "constants": r.constants,
                "findings": r.findings,
                "error": r.error,
                "files": sorted(Path(f).name for f in r.files),
            }
            for r in results
        ],
    }
    write_json(cfg.output_dir / "manifest.json", payload)


def _status(results):
    if any(r.error for r in results):
        return "failure"
    if any(r.findings for r in results):
        return "findings"
    return "ok"


def run(cfg: ExperimentConfig, stages=None) -> int:
    """Run ``stages`` (default: those of the config) in dependency order."""
    stages = [s for s in STAGES + ("solve",) if s in (stages or cfg.stages)]
    needs_refusal_check = any(s in ("approx", "verify") for s in stages)
    if needs_refusal_check and not (stages == ["verify"] and cfg.battery_names() == ["lemmas"]):
        check = check_hypothesis(cfg.drift, cfg.matrix, cfg.domain, float(cfg.formbound.get("companion", 0.0)))
        if not check.admissible:
            raise HypothesisViolation(
                f"nu_+ = {check.nu_plus:.6g} >= 2 sigma = {2 * check.sigma:.6g} "
                f"(source: {check.source}); refusing to run",
                measured=check.nu_plus,
            )
    results = []
    report = None
    for stage in stages:
        try:
            if stage == "formbound":
                results.append(stage_formbound(cfg))
            elif stage == "mollify":
                results.append(stage_mollify(cfg))
            elif stage == "solve":
                results.append(stage_solve(cfg))
            elif stage == "approx":
                report = _approx(cfg)
                results.append(stage_approx(cfg, report))
            elif stage == "verify":
                results.extend(stage_verify(cfg, report))
        except HypothesisViolation:
            raise
        except KolmolabError as exc:
            results.append(StageResult(stage, error=str(exc)))
    status = _status(results)
    _write_manifest(cfg, results, status)
    for r in results:
        for f in r.findings:
            logger.warning("finding: %s", f)
        if r.error:
            logger.error("%s failed: %s", r.name, r.error)
    return EXIT_CODES[status]


# -- plot scripts ---------------------------------------------------------------

_PLOT_TEMPLATE = '''"""Plot {title} from {csv_name}."""
import csv

import matplotlib.pyplot as plt

with open({csv_name!r}, newline="") as fh:
    rows = list(csv.DictReader(fh))

x = [float(r[{x!r}]) for r in rows]
fig, ax = plt.subplots()
{body}
ax.set_xlabel({xlabel!r})
ax.legend()
fig.savefig({png!r}, dpi=150)
'''


def _plot_body(columns, logx):
    lines = []
    for col in columns:
        lines.append(f"ax.plot(x, [float(r[{col!r}]) if r[{col!r}] else float('nan') for r in rows], 'o-', label={col!r})")
    if logx:
        lines.append("ax.set_xscale('log')")
    return "\n".join(lines)


_HOLDER_TEMPLATE = '''"""Plot log-oscillation against log-radius with the fitted line from {csv_name}."""
import csv
import math

import matplotlib.pyplot as plt

with open({csv_name!r}, newline="") as fh:
    rows = list(csv.DictReader(fh))

fig, ax = plt.subplots()
for r in rows:
    gamma, K = float(r["holder_gamma"]), float(r["holder_K"])
    t = [math.log(s) for s in (1 / 64, 1 / 32, 1 / 16, 1 / 8, 1 / 4)]
    ax.plot(t, [math.log(K) + gamma * s for s in t], label="eps = " + r["eps"])
ax.set_xlabel("log(r / R)")
ax.set_ylabel("log(osc_r / osc_R/2)")
ax.legend()
fig.savefig({png!r}, dpi=150)
'''


def emit_plots(report_dir) -> list[Path]:
    """Write one matplotlib script per CSV found in ``report_dir``."""
    report_dir = Path(report_dir)
    csvs = sorted(report_dir.glob("*.csv")) if report_dir.is_dir() else []
    if not csvs:
        logger.warning("no CSV reports in %s; no plot scripts written", report_dir)
        return []
    scripts = []
    for path in csvs:
        try:
            header = path.read_text().splitlines()[0].split(",")
        except (OSError, IndexError):
            logger.warning("cannot read %s; skipped", path)
            continue
        stem = path.stem
        target = report_dir / f"plot_{stem}.py"
        png = f"{stem}.png"
        if stem == "verify_holder":
            text = _HOLDER_TEMPLATE.format(csv_name=path.name, png=png)
        elif stem == "verify_lemmas":
            text = _PLOT_TEMPLATE.format(
                title="De Giorgi endpoints", csv_name=path.name, x="index", xlabel="sample",
                body=_plot_body(["last_or_beta_sq"], False), png=png,
            )
        elif stem == "cauchy":
            text = _PLOT_TEMPLATE.format(
                title="Cauchy distances", csv_name=path.name, x="eps_m", xlabel="eps_m",
                body=_plot_body(["l2_distance"], True), png=png,
            )
        elif stem == "formbound_eps_curve":
            text = _PLOT_TEMPLATE.format(
                title="mu(eps)", csv_name=path.name, x="eps", xlabel="eps",
                body=_plot_body(["mu"], True), png=png,
            )
        elif stem == "formbound":
            logger.warning("formbound.csv is a table, not a curve; no plot script")
            continue
        elif header and header[0] == "eps":
            cols = [h for h in header[1:] if h not in ("R",)]
            text = _PLOT_TEMPLATE.format(
                title=stem, csv_name=path.name, x="eps", xlabel="eps_n",
                body=_plot_body(cols, True), png=png,
            )
        else:
            logger.warning("no plot recipe for %s; skipped", path.name)
            continue
        scripts.append(atomic_write_text(target, text))
    return scripts


# -- entry point ----------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="kolmolab", description="Kolmogorov-operator regularity experiments.")
    p.add_argument("--version", action="version", version=f"kolmolab {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("formbound", "mollify", "solve", "approx", "verify", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--grid", type=int)
        sp.add_argument("--out", type=Path)
        sp.add_argument("--battery")
        sp.add_argument("--seed", type=int)
    ep = sub.add_parser("emit-plots")
    ep.add_argument("--out", type=Path, required=True, help="report directory")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.command == "emit-plots":
            scripts = emit_plots(args.out)
            for s in scripts:
                print(s)
            return EXIT_CODES["ok"]
        cfg = load_config(args.config, grid=args.grid, out=args.out, battery=args.battery, seed=args.seed)
        stages = cfg.stages if args.command == "run" else [args.command]
        # single-threaded BLAS keeps floating-point reductions, and so the outputs, bitwise reproducible
        with threadpool_limits(limits=1):
            code = run(cfg, stages)
        print(json_text({"status": code, "output_dir": str(cfg.output_dir), "config_hash": cfg.hash}), end="")
        return code
    except HypothesisViolation as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_CODES["refused"]
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CODES["validation"]
    except KolmolabError as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_CODES["failure"]


if __name__ == "__main__":
    sys.exit(main())
