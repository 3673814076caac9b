"""Experiment configs, presets and the runner behind the ``approx`` CLI.

Two experiment shapes exist.  ``iterations`` runs compare the plain and
restarted primal-dual iterations on one sample set, recording the relative
error of every iterate.  ``m-sweep`` runs repeat the full pipeline over a
grid of sample sizes and aggregate the errors across trials in log space.
"""
from __future__ import annotations

import configparser
import csv
import io
import json
import math
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .hilbert import GramOperator
from .index_sets import hyperbolic_cross
from .orthopoly import build_measurement_matrix, evaluation_matrix, intrinsic_weights
from .pde import FEMError, get_function
from .pipeline import (
    ProblemSpec,
    Quadrature,
    approximate,
    monte_carlo,
    relative_error,
    sample_points,
    tensor_clenshaw_curtis,
)
from .srlasso import DivergenceError, default_config, primal_dual, restarted, theory_rate

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "preset",
    "aggregate_log_stats",
    "run_experiment",
    "ENV_OUTPUT_ROOT",
]

ENV_OUTPUT_ROOT = "APPROX_OUTPUT_ROOT"
EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8", "custom")
FUNCTIONS = ("f1", "f2", "f3", "f4", "sparse-synthetic")
PLOTS = ("iterations", "m-sweep")


class ConfigError(ValueError):
    pass


def _fmt_float(v: float) -> str:
    return repr(float(v))


@dataclass
class ExperimentConfig:
    """One experiment, stored as a flat ``[experiment]`` INI section."""

    experiment: str = "custom"
    plot: str = "iterations"
    function: str = "f1"
    d: int = 2
    basis: str = "legendre"
    n: int = 184
    N_caption: int = 0
    m: int = 250
    m_grid: list = field(default_factory=list)
    solver_mode: str = "practical"
    zeta: list = field(default_factory=lambda: [1e-8])
    trials: int = 1
    full_trials: int = 0
    seed: int = 0
    quadrature: str = "cc:5"
    iterations: int = 1000
    error_every: int = 1
    mesh_q: int = 33
    stop_factor: float = 5.0
    output_dir: str = ""

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
        if self.plot not in PLOTS:
            raise ConfigError(f"plot must be one of {PLOTS}")
        if self.function not in FUNCTIONS:
            raise ConfigError(f"function must be one of {FUNCTIONS}")
        if self.basis not in ("legendre", "chebyshev"):
            raise ConfigError("basis must be legendre or chebyshev")
        if self.solver_mode not in ("practical", "theoretical"):
            raise ConfigError("solver_mode must be practical or theoretical")
        if self.d < 1 or self.n < 1 or self.m < 1:
            raise ConfigError("d, n and m must be positive")
        if self.function == "f3" and self.d != 2:
            raise ConfigError("f3 is defined for d = 2")
        if self.plot == "m-sweep" and not self.m_grid:
            raise ConfigError("m-sweep needs a nonempty m_grid")
        if any(int(v) < 1 for v in self.m_grid):
            raise ConfigError("m_grid entries must be positive")
        if not self.zeta or any(z < 0 for z in self.zeta):
            raise ConfigError("zeta must be a nonempty list of nonnegative values")
        if self.trials < 1 or self.iterations < 1 or self.error_every < 1:
            raise ConfigError("trials, iterations and error_every must be positive")
        if self.mesh_q < 3:
            raise ConfigError("mesh_q must be at least 3")
        if self.stop_factor <= 0:
            raise ConfigError("stop_factor must be positive")
        parse_quadrature(self.quadrature, self.d)

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        sec = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                sec[f.name] = ", ".join(_fmt_float(x) if isinstance(x, float) else str(x) for x in v)
            elif isinstance(v, float):
                sec[f.name] = _fmt_float(v)
            else:
                sec[f.name] = str(v)
        cp["experiment"] = sec
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"unreadable config: {exc}") from exc
        if "experiment" not in cp:
            raise ConfigError("config needs an [experiment] section")
        sec = cp["experiment"]
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in sec.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _parse_value(key, raw, getattr(cls(), key))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def with_overrides(self, pairs) -> "ExperimentConfig":
        data = asdict(self)
        for item in pairs:
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not key=value")
            key, raw = item.split("=", 1)
            key = key.strip()
            if key not in data:
                raise ConfigError(f"unknown config key {key!r}")
            data[key] = _parse_value(key, raw, data[key])
        cfg = ExperimentConfig(**data)
        cfg.validate()
        return cfg


def _parse_value(key, raw, default):
    raw = raw.strip()
    try:
        if isinstance(default, list):
            if not raw:
                return []
            conv = int if key == "m_grid" else float
            return [conv(tok) for tok in raw.split(",")]
        if isinstance(default, bool):
            return raw.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_quadrature(spec: str, d: int):
    """``cc:<level>`` or ``mc:<M>`` (optionally ``mc:<M>:<seed>``)."""
    parts = spec.split(":")
    try:
        if parts[0] == "cc" and len(parts) == 2:
            level = int(parts[1])
            if (2**level + 1) ** d > 5_000_000:
                raise ConfigError("tensor Clenshaw-Curtis grid too large for this d; use mc")
            return ("cc", level, 0)
        if parts[0] == "mc" and len(parts) in (2, 3):
            return ("mc", int(parts[1]), int(parts[2]) if len(parts) == 3 else 12345)
    except ValueError as exc:
        raise ConfigError(f"bad quadrature spec {spec!r}") from exc
    raise ConfigError(f"bad quadrature spec {spec!r}")


def build_quadrature(spec: str, d: int, basis: str) -> Quadrature:
    kind, a, b = parse_quadrature(spec, d)
    if kind == "cc":
        return tensor_clenshaw_curtis(d, a, basis)
    return monte_carlo(d, a, b, basis)


PRESETS = {
    "fig1": ExperimentConfig("fig1", "iterations", "f1", 2, "legendre", 184, 997, 250, [],
                             "practical", [1e-4, 1e-6, 1e-8], 1, 1, 0, "cc:5", 1500),
    "fig2": ExperimentConfig("fig2", "iterations", "f2", 16, "legendre", 16, 8277, 2000, [],
                             "practical", [1e-2, 1e-3, 1e-4], 1, 1, 0, "mc:1000", 600,
                             error_every=5),
    "fig3": ExperimentConfig("fig3", "iterations", "f3", 2, "legendre", 184, 997, 250, [],
                             "practical", [1e-4, 1e-6, 1e-8], 1, 1, 0, "cc:5", 1500,
                             error_every=5, mesh_q=17),
    "fig4": ExperimentConfig("fig4", "iterations", "f4", 30, "legendre", 10, 7841, 1000, [],
                             "practical", [1e-2, 1e-3, 1e-4], 1, 1, 0, "mc:500", 400,
                             error_every=10, mesh_q=9),
    "fig5": ExperimentConfig("fig5", "m-sweep", "f1", 2, "legendre", 184, 997, 250,
                             [50, 100, 150, 200, 250, 300, 400, 500], "practical", [1e-8],
                             50, 50, 0, "cc:5", 20000),
    "fig6": ExperimentConfig("fig6", "m-sweep", "f2", 16, "legendre", 16, 8277, 2000,
                             [250, 500, 1000, 2000], "practical", [1e-4], 10, 50, 0,
                             "mc:1000", 3000),
    "fig7": ExperimentConfig("fig7", "m-sweep", "f3", 2, "legendre", 184, 997, 250,
                             [50, 100, 150, 200, 250], "practical", [1e-8], 10, 50, 0,
                             "cc:5", 20000, mesh_q=17),
    "fig8": ExperimentConfig("fig8", "m-sweep", "f4", 30, "legendre", 10, 7841, 1000,
                             [250, 500, 1000], "practical", [1e-4], 10, 50, 0, "mc:500",
                             3000, mesh_q=9),
}

# measured single-core wall clock at the default (reduced) trial counts
PRESET_BUDGETS = {
    "fig1": "10 s", "fig2": "1 min", "fig3": "2 min", "fig4": "2 min",
    "fig5": "40 s", "fig6": "5 min", "fig7": "5 min", "fig8": "7 min",
}


def preset(name: str) -> ExperimentConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ExperimentConfig(**asdict(PRESETS[name]))


def aggregate_log_stats(values):
    """Geometric mean and the exp(mean -/+ std) band of log-values.

    The standard deviation uses the n - 1 normalization.  Nonpositive or
    non-finite values are dropped with a warning.

    Returns
    -------
    (mean, lower, upper) : tuple of float
        NaN when no valid value remains.
    """
    v = np.asarray(list(values), dtype=np.float64)
    ok = np.isfinite(v) & (v > 0)
    if not ok.all():
        warnings.warn(f"excluding {int((~ok).sum())} nonpositive or non-finite values",
                      RuntimeWarning, stacklevel=2)
    v = v[ok]
    if v.size == 0:
        return float("nan"), float("nan"), float("nan")
    logs = np.log(v)
    mu = logs.mean()
    sd = logs.std(ddof=1) if v.size > 1 else 0.0
    return float(math.exp(mu)), float(math.exp(mu - sd)), float(math.exp(mu + sd))


# ---------------------------------------------------------------------------
# trial execution


def _trial_rng(cfg: ExperimentConfig, trial: int, m: int = 0):
    return np.random.default_rng([cfg.seed, trial, m])


def _target(cfg: ExperimentConfig):
    return get_function(cfg.function, d=cfg.d, q=cfg.mesh_q, seed=cfg.seed, basis=cfg.basis)


class _ErrorMeter:
    """Relative error of coefficient blocks via a precomputed evaluation matrix."""

    def __init__(self, V, fvals, weights, gram: GramOperator):
        self.V = V
        self.F = fvals
        self.w = weights
        self.gram = gram
        self.den = float(np.dot(weights, self._sq(fvals)))

    def _sq(self, X):
        return np.real(np.einsum("ij,ij->i", np.conj(X), self.gram.apply_rows(X)))

    def __call__(self, C) -> float:
        E = self.F - self.V @ C
        return math.sqrt(max(float(np.dot(self.w, self._sq(E))), 0.0) / self.den)


def _iteration_trial(cfg: ExperimentConfig, trial: int, quad: Quadrature, fvals):
    func = _target(cfg)
    iset = hyperbolic_cross(cfg.n, cfg.d)
    rng = _trial_rng(cfg, trial)
    Y = sample_points(cfg.m, cfg.d, cfg.basis, rng)
    D = func.batch(Y)
    A = build_measurement_matrix(Y, iset, cfg.basis).entries
    w = intrinsic_weights(cfg.basis, iset).values
    B = D / math.sqrt(cfg.m)
    gram = func.gram
    scfg = default_config(cfg.solver_mode, cfg.m, cfg.d, 0.5, cfg.basis, iset, A,
                          zeta=cfg.zeta[0], R=1)
    meter = _ErrorMeter(evaluation_matrix(quad.nodes, iset, cfg.basis), fvals, quad.weights, gram)
    steps = list(range(cfg.error_every, cfg.iterations + 1, cfg.error_every))
    cols = {}

    def recorder(key_it, key_erg):
        it_err, erg_err = {}, {}

        def cb(t, C, Cbar):
            if t % cfg.error_every == 0 and t <= cfg.iterations:
                it_err[t] = meter(C)
                erg_err[t] = meter(Cbar)
        cols[key_it], cols[key_erg] = it_err, erg_err
        return cb

    primal_dual(A, B, w, gram, scfg.lam, scfg.tau, scfg.sigma, cfg.iterations,
                callback=recorder("pd_iterate", "pd_ergodic"), norm_A=scfg.norm_A)
    R = math.ceil(cfg.iterations / scfg.T)
    for z in cfg.zeta:
        tag = f"{z:.0e}"
        restarted(A, B, w, gram, scfg.replace(zeta=z, R=R),
                  callback=recorder(f"pdr_iterate_zeta={tag}", f"pdr_ergodic_zeta={tag}"))
    c = theory_rate(scfg.norm_A)
    header = ["iteration"] + list(cols) + ["theory"]
    rows = []
    for t in steps:
        rows.append([t] + [cols[k].get(t, float("nan")) for k in cols] + [math.exp(-c * t)])
    info = {"norm_A": scfg.norm_A, "T": scfg.T, "lambda": scfg.lam, "rate_c": c}
    return header, rows, info


def _sweep_trial(cfg: ExperimentConfig, trial: int, quad: Quadrature, fvals):
    func = _target(cfg)
    iset = hyperbolic_cross(cfg.n, cfg.d)
    spec = ProblemSpec(d=cfg.d, basis=cfg.basis, m=max(cfg.m_grid), solver_mode=cfg.solver_mode)
    V = evaluation_matrix(quad.nodes, iset, cfg.basis)
    meter = _ErrorMeter(V, fvals, quad.weights, func.gram)
    rows = []
    for m in cfg.m_grid:
        rng = _trial_rng(cfg, trial, m)
        Y = sample_points(m, cfg.d, cfg.basis, rng)
        D = func.batch(Y)
        A = build_measurement_matrix(Y, iset, cfg.basis).entries
        scfg = default_config(cfg.solver_mode, m, cfg.d, 0.5, cfg.basis, iset, A,
                              zeta=cfg.zeta[0], total_iterations=cfg.iterations,
                              stop_factor=cfg.stop_factor)
        approx, report = approximate(Y, D, spec, func.gram, index_set=iset, config=scfg)
        rows.append([m, trial, meter(approx.coefficients), report.total_iterations,
                     report.termination])
    return ["m", "trial", "error", "iterations", "termination"], rows, {}


def _run_trial(args):
    cfg, trial, quad, fvals = args
    try:
        if cfg.plot == "iterations":
            return trial, _iteration_trial(cfg, trial, quad, fvals), None
        return trial, _sweep_trial(cfg, trial, quad, fvals), None
    except (DivergenceError, FEMError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return trial, None, f"{type(exc).__name__}: {exc}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_fmt_float(v) if isinstance(v, float) else v for v in row])


def _plot_script(cfg: ExperimentConfig, header) -> str:
    lines = [
        "# gnuplot script; run with: gnuplot plot.gp",
        "set datafile separator ','",
        "set terminal pngcairo size 900,600",
        "set output 'plot.png'",
        "set logscale y",
        "set format y '10^{%L}'",
        "set key outside",
    ]
    if cfg.plot == "iterations":
        lines += ["set xlabel 'iteration'", "set ylabel 'relative error'"]
        series = [
            f"'aggregate.csv' using 1:{i + 2} with lines title '{name}'"
            for i, name in enumerate(header[1:])
        ]
    else:
        lines += ["set xlabel 'm'", "set ylabel 'relative error'"]
        series = ["'aggregate.csv' using 1:3:4 with filledcurves fs transparent solid 0.3 "
                  "title 'mean -/+ std (log)'",
                  "'aggregate.csv' using 1:2 with linespoints title 'geometric mean'"]
    lines.append("plot " + ", \\\n     ".join(series))
    return "\n".join(lines) + "\n"


def _versions():
    import scipy

    from . import _backend, __version__

    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "compiled_kernels": _backend.COMPILED,
    }


def output_root(override: str | None = None) -> Path:
    return Path(override or os.environ.get(ENV_OUTPUT_ROOT) or "approx-output")


def run_experiment(cfg: ExperimentConfig, root: str | Path | None = None, jobs: int = 1,
                   full: bool = False):
    """Run all trials and write CSVs, a gnuplot script and a manifest.

    Returns
    -------
    (Path, int)
        The artifact directory and the number of failed trials.
    """
    cfg.validate()
    if full and cfg.full_trials:
        cfg = ExperimentConfig(**{**asdict(cfg), "trials": cfg.full_trials})
    outdir = output_root(str(root) if root is not None else None) / (cfg.output_dir or cfg.experiment)
    outdir.mkdir(parents=True, exist_ok=True)
    func = _target(cfg)
    quad = build_quadrature(cfg.quadrature, cfg.d, cfg.basis)
    fvals = func.batch(quad.nodes)
    tasks = [(cfg, t, quad, fvals) for t in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_trial, tasks))
    else:
        results = [_run_trial(t) for t in tasks]
    results.sort(key=lambda r: r[0])

    failures = {}
    header = None
    per_trial = {}
    infos = {}
    for trial, res, err in results:
        if err is not None:
            failures[trial] = err
            continue
        header, rows, info = res
        per_trial[trial] = rows
        infos[trial] = info
        _write_csv(outdir / f"trial_{trial:03d}.csv", header, rows)

    summary = {}
    if per_trial:
        if cfg.plot == "iterations":
            first = next(iter(per_trial.values()))
            agg_rows = []
            for i, row in enumerate(first):
                vals = [row[0]]
                for j in range(1, len(row)):
                    vals.append(aggregate_log_stats(
                        [per_trial[t][i][j] for t in per_trial])[0])
                agg_rows.append(vals)
            _write_csv(outdir / "aggregate.csv", header, agg_rows)
        else:
            agg_rows = []
            for m in cfg.m_grid:
                errs = [r[2] for rows in per_trial.values() for r in rows if r[0] == m]
                mean, lo, hi = aggregate_log_stats(errs)
                agg_rows.append([m, mean, lo, hi, len(errs)])
            _write_csv(outdir / "aggregate.csv", ["m", "geo_mean", "band_lower", "band_upper",
                                                  "trials"], agg_rows)
            means = [r[1] for r in agg_rows]
            summary["monotone_trend"] = bool(all(b <= a for a, b in zip(means, means[1:])))
        with open(outdir / "plot.gp", "w") as fh:
            fh.write(_plot_script(cfg, header if cfg.plot == "iterations" else None))
    else:
        with open(outdir / "aggregate.csv", "w") as fh:
            fh.write("")

    enumerated = len(hyperbolic_cross(cfg.n, cfg.d))
    manifest = {
        "config": asdict(cfg),
        "seeds": {str(t): [cfg.seed, t] for t in range(cfg.trials)},
        "versions": _versions(),
        "index_set": {
            "n": cfg.n,
            "N_enumerated": enumerated,
            "N_caption": cfg.N_caption or None,
            "N_mismatch": bool(cfg.N_caption and cfg.N_caption != enumerated),
        },
        "quadrature": {"spec": cfg.quadrature, "points": quad.size},
        "trial_info": {str(k): v for k, v in infos.items()},
        "failures": {str(k): v for k, v in failures.items()},
        "budget": PRESET_BUDGETS.get(cfg.experiment, "n/a"),
        **summary,
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    with open(outdir / "config.ini", "w") as fh:
        fh.write(cfg.to_ini())
    return outdir, len(failures)
