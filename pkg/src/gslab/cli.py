"""Command line: ``gslab run <config.json>``, ``gslab list``, ``gslab describe <scheme>``.

Exit status of ``run``: 0 when every configured band passes, 1 when a band
fails, 2 for configuration errors, 3 for numerical failures.
"""

from __future__ import annotations

import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import click

from .linalg import NumericalError
from .measures import gd_metrics
from .mesh import atomic_write_text
from .problems import PROBLEMS, get_problem
from .schemes import CATALOGUE, build, describe
from .solver import (StudyResult, convergence_study, discontinuity_faces, errlin_constant,
                     family_mesh, run_level)

EXIT_OK, EXIT_BANDS, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
BASE_N = 4
KNOWN_KEYS = {"scheme", "family", "levels", "problem", "perturbation", "seed", "metrics", "p",
              "params", "bands", "timing", "name", "threads"}
KNOWN_METRICS = ("C_D", "S_D", "W_D", "reg_LLE", "omega", "control")
KNOWN_BANDS = {"orderL2", "orderH1", "C_D_ratio", "errlin_C"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    schemes: list[str]
    family: str | None
    levels: list[int]
    problem: str
    perturbation: float = 0.0
    seed: int = 0
    metrics: list[str] = field(default_factory=list)
    p: float = 2.0
    params: dict = field(default_factory=dict)
    bands: dict = field(default_factory=dict)
    timing: bool = False
    name: str = "study"
    threads: int = 1

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(raw) - KNOWN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key in ("scheme", "problem"):
            if key not in raw:
                raise ConfigError(f"missing required key {key!r}")
        schemes = raw["scheme"]
        if schemes == "all":
            schemes = list(CATALOGUE)
        elif isinstance(schemes, str):
            schemes = [schemes]
        bad = [s for s in schemes if s not in CATALOGUE]
        if bad or not schemes:
            raise ConfigError(f"unknown scheme(s): {', '.join(map(str, bad)) or '(none)'}")
        if raw["problem"] not in PROBLEMS:
            raise ConfigError(f"unknown problem {raw['problem']!r}; known: {', '.join(PROBLEMS)}")
        family = raw.get("family")
        if family not in (None, "cartesian", "simplicial"):
            raise ConfigError(f"unknown mesh family {family!r}")
        levels = raw.get("levels", 4)
        if isinstance(levels, bool) or not isinstance(levels, (int, list)):
            raise ConfigError("levels must be a count or a list of subdivisions")
        if isinstance(levels, int):
            if levels < 1:
                raise ConfigError("levels must be >= 1")
            levels = [BASE_N * 2 ** i for i in range(levels)]
        elif not levels or not all(isinstance(n, int) and n >= 1 for n in levels):
            raise ConfigError("levels list must hold positive integers")
        amp = float(raw.get("perturbation", 0.0))
        if not 0.0 <= amp <= 0.3:
            raise ConfigError("perturbation must lie in [0, 0.3]")
        metrics = raw.get("metrics", ["C_D", "S_D", "W_D"])
        if metrics is True:
            metrics = list(KNOWN_METRICS)
        elif metrics is False:
            metrics = []
        if not isinstance(metrics, list) or any(m not in KNOWN_METRICS for m in metrics):
            raise ConfigError(f"metrics must be a list drawn from {', '.join(KNOWN_METRICS)}")
        p = float(raw.get("p", 2.0))
        if p != 2.0:
            raise ConfigError("only p = 2 studies are supported")
        bands = raw.get("bands", {})
        if not isinstance(bands, dict) or set(bands) - KNOWN_BANDS:
            raise ConfigError(f"bands must be an object with keys from {', '.join(sorted(KNOWN_BANDS))}")
        for k, v in bands.items():
            if k in ("orderL2", "orderH1") and not (isinstance(v, list) and len(v) == 2):
                raise ConfigError(f"band {k} must be [lo, hi]")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params must be an object")
        try:
            seed = int(raw.get("seed", 0))
            threads = int(raw.get("threads", 1))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        return cls(schemes, family, list(levels), raw["problem"], amp, seed, metrics, p,
                   params, bands, bool(raw.get("timing", False)), str(raw.get("name", "study")),
                   threads)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return RunConfig.from_dict(raw)


def check_bands(study: StudyResult, bands: dict) -> list[str]:
    """Human-readable band failures (empty when everything passes)."""
    fails = []
    rows = study.levels
    for key, attr in (("orderL2", "order_l2"), ("orderH1", "order_h1")):
        if key in bands:
            lo, hi = bands[key]
            for r in rows[1:]:
                v = getattr(r, attr)
                if v is None or not lo <= v <= hi:
                    fails.append(f"{study.scheme}: {key} at level {r.level} = {v} outside [{lo}, {hi}]")
    if "C_D_ratio" in bands:
        cd = [r.C_D for r in rows if r.C_D is not None]
        if cd and max(cd) / min(cd) > bands["C_D_ratio"]:
            fails.append(f"{study.scheme}: C_D max/min = {max(cd) / min(cd):.4f} > {bands['C_D_ratio']}")
    if "errlin_C" in bands and rows and rows[0].rhs is not None:
        C = errlin_constant(rows[0].C_D, *get_problem(study.problem).tensor_bounds())
        if C > bands["errlin_C"]:
            fails.append(f"{study.scheme}: fitted errlin constant {C:.4f} > {bands['errlin_C']}")
        for r in rows:
            if r.lhs > C * r.rhs:
                fails.append(f"{study.scheme}: errlin fails at level {r.level}: {r.lhs:.4e} > {C:.4f} * {r.rhs:.4e}")
    return fails


def _mesh_id(family: str, n: int, amp: float, seed: int) -> str:
    return f"{family}-{n}x{n}" + (f"-p{amp:g}-s{seed}" if amp else "")


def metric_records(cfg: RunConfig, scheme: str, family: str, problem) -> list[dict]:
    from .measures import control_report
    out = []
    which = tuple(m for m in cfg.metrics if m != "control")
    for i, n in enumerate(cfg.levels):
        seed = cfg.seed + i
        mesh = family_mesh(family, n, cfg.perturbation, seed)
        params = dict(cfg.params)
        if params.get("keep_faces") == "discontinuities":
            params["keep_faces"] = discontinuity_faces(mesh, problem)
        gd = build(scheme, mesh, **params)
        mid = _mesh_id(family, n, cfg.perturbation, seed)
        out += gd_metrics(gd, which).records(scheme, mid, i)
        if "control" in cfg.metrics and gd.control is not None:
            rep = control_report(gd)
            for q, v in (("phi_norm", rep.phi_norm), ("omega_pi", rep.omega_pi),
                         ("omega_grad", rep.omega_grad)):
                out.append({"scheme": scheme, "mesh": mid, "level": i, "quantity": q, "value": v})
            out.append({"scheme": scheme, "mesh": mid, "level": i, "quantity": "omega_grad_status",
                        "value": rep.omega_grad_status})
    return out


def _json_safe(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def run_config(cfg: RunConfig, out_dir: Path, threads: int | None = None,
               log=lambda msg: click.echo(msg, err=True)) -> int:
    problem = get_problem(cfg.problem)
    status = EXIT_OK
    records = []
    failures = []
    for scheme in cfg.schemes:
        family = cfg.family or CATALOGUE[scheme].default_mesh
        metrics = bool({"C_D", "S_D", "W_D"} & set(cfg.metrics))
        try:
            if len(cfg.levels) == 1:
                study = StudyResult(scheme, family, problem.name)
                try:
                    study.levels.append(run_level(scheme, family, problem, cfg.levels[0], 0,
                                                  cfg.perturbation, cfg.seed, metrics, cfg.params))
                except NumericalError as exc:
                    study.error = f"level 0 (n={cfg.levels[0]}): {exc}"
            else:
                study = convergence_study(scheme, family, problem, tuple(cfg.levels), cfg.perturbation,
                                          cfg.seed, metrics=metrics, threads=threads or cfg.threads,
                                          params=cfg.params)
        except ValueError as exc:
            log(f"{scheme}: configuration rejected: {exc}")
            return EXIT_CONFIG
        if study.error:
            log(f"{scheme}: numerical failure: {study.error}")
            for r in study.levels:
                log(f"  level {r.level}: n={r.n} errL2={r.err_l2:.3e} errH1={r.err_h1:.3e}")
            status = EXIT_NUMERIC
        name = f"{cfg.name}_{scheme}_{cfg.problem}.csv"
        atomic_write_text(out_dir / name, study.to_csv(cfg.timing))
        if study.error:
            continue
        failures += check_bands(study, cfg.bands)
        try:
            records += metric_records(cfg, scheme, family, problem) if cfg.metrics else []
        except NumericalError as exc:
            log(f"{scheme}: numerical failure in metrics: {exc}")
            status = EXIT_NUMERIC
    payload = {"config": cfg.name, "problem": cfg.problem,
               "records": [{k: _json_safe(v) for k, v in r.items()} for r in records]}
    atomic_write_text(out_dir / f"{cfg.name}_metrics.json",
                      json.dumps(payload, indent=1, sort_keys=True) + "\n")
    for f in failures:
        log(f"band failure: {f}")
    if status == EXIT_OK and failures:
        status = EXIT_BANDS
    return status


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Gradient-scheme laboratory."""


@main.command()
@click.argument("config", type=click.Path(dir_okay=False))
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True,
              help="directory receiving the CSV and JSON artifacts")
@click.option("--seed", type=int, default=None, help="override the config seed")
@click.option("--threads", type=int, default=None, help="levels solved concurrently")
def run(config, out_dir, seed, threads):
    """Run the convergence study described by CONFIG."""
    try:
        cfg = load_config(config)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    if seed is not None:
        cfg.seed = seed
    if threads is not None and threads < 1:
        click.echo("config error: --threads must be >= 1", err=True)
        sys.exit(EXIT_CONFIG)
    try:
        code = run_config(cfg, Path(out_dir), threads)
    except NumericalError as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        code = EXIT_NUMERIC
    sys.exit(code)


@main.command("list")
def list_cmd():
    """List the available schemes."""
    for info in CATALOGUE.values():
        pc = "piecewise-constant" if info.piecewise_constant else "-"
        click.echo(f"{info.kind:12s} {info.family} [{', '.join(info.mesh_kinds)}] {pc}")


@main.command("describe")
@click.argument("scheme")
def describe_cmd(scheme):
    """Describe one scheme."""
    if scheme not in CATALOGUE:
        click.echo(f"unknown scheme {scheme!r}; known: {', '.join(CATALOGUE)}", err=True)
        sys.exit(EXIT_CONFIG)
    click.echo(describe(scheme))


if __name__ == "__main__":
    main()
