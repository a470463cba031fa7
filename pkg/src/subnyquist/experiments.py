"""Seeded Monte Carlo experiments behind the command-line tool.

Every random draw is taken from a stream keyed by ``(seed, experiment,
counter...)`` through :class:`numpy.random.SeedSequence`, so results do not
depend on how trials are scheduled across worker processes.  Per-trial
results are collected in trial order and reduced afterwards, which keeps
the floating-point sums identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import partial
from pathlib import Path

import numpy as np
import yaml

from .corranalysis import compute_cov_p
from .crb import BoundUndefinedError, crb_trace
from .errors import ArtifactIOError, ConfigurationError
from .io import write_csv
from .multicoset import (
    MultiCosetConfig,
    correlogram,
    design_delay_filters,
    random_offsets,
    white_gaussian,
)
from .numerics import real_times_complex
from .spectralcs import (
    LineSpectrumModel,
    StopCriterion,
    complex_noise,
    random_line_spectrum,
    recover,
    synthesize_signal,
)

EXPERIMENTS = ("fig1", "fig2", "fig3", "fig4", "table1", "crb", "correlogram", "recover", "custom")
METHODS = ("nested_ls", "siht")
RESULT_COLUMNS = ["experiment", "grid", "metric", "value", "trials", "stderr", "seed", "config_hash"]
DB = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment run.

    Recovery experiments use ``K, N, M/m_grid, sigmas, iterations``; the
    correlogram experiments use ``lq_pairs, nx_grid, filter_len,
    signal_power``.  ``workers`` is deliberately not a field: it must not
    change results, so it is not part of the configuration hash.
    """

    experiment: str
    trials: int = 1000
    seed: int = 0
    nyquist_rate: float = 1000.0
    # correlogram
    signal_power: float = 4.0
    lq_pairs: tuple = ((51, 12), (101, 25), (201, 50), (101, 20))
    nx_grid: tuple = (256, 512, 1024, 2048, 4096)
    filter_len: int = 2
    empirical_trials: int = 0
    # spectral compressive sensing
    K: int = 20
    N: int = 1024
    m_grid: tuple = (300,)
    sigmas: tuple = (2.0,)
    iterations: int = 10
    step_size: float = 1.0
    min_spacing_factor: float = 10.0
    amp_range: tuple = (1.0, 2.0)
    random_phase: bool = False
    window: int | None = None
    miss_factor: float = 5.0
    methods: tuple = METHODS

    def __post_init__(self):
        for name in ("lq_pairs", "nx_grid", "m_grid", "sigmas", "amp_range", "methods"):
            v = getattr(self, name)
            if isinstance(v, (str, bytes)) or not hasattr(v, "__iter__"):
                v = (v,)
            if name == "lq_pairs":
                v = tuple(tuple(int(a) for a in p) for p in v)
            elif name in ("nx_grid", "m_grid"):
                v = tuple(int(a) for a in v)
            elif name == "methods":
                v = tuple(str(a) for a in v)
            else:
                v = tuple(float(a) for a in v)
            object.__setattr__(self, name, v)
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must be a 64-bit non-negative integer")
        for name in ("lq_pairs", "nx_grid", "m_grid", "sigmas", "methods"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must not be empty")
        for L, q in self.lq_pairs:
            if L < 3 or L % 2 == 0 or not 1 <= q < L or q * (q - 1) + 2 < L:
                raise ConfigurationError(f"invalid (L, q) = ({L}, {q})")
        if any(m < self.K or m < 1 for m in self.m_grid):
            raise ConfigurationError("every M must be at least K")
        if any(s < 0 for s in self.sigmas):
            raise ConfigurationError("noise standard deviations must be non-negative")
        if self.iterations < 1:
            raise ConfigurationError("iterations must be >= 1")
        if any(m not in METHODS for m in self.methods):
            raise ConfigurationError(f"methods must be drawn from {METHODS}")


#: Per-experiment defaults (the simulation settings of the reference study).
DEFAULTS = {
    "fig1": dict(trials=1),
    "correlogram": dict(trials=1000, empirical_trials=1000),
    "fig2": dict(sigmas=(2.0,), m_grid=(300,), iterations=10),
    "fig3": dict(sigmas=(1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0), m_grid=(300,), iterations=10),
    "fig4": dict(sigmas=(2.0,), m_grid=(150, 200, 250, 300, 350, 400), iterations=10),
    "table1": dict(sigmas=(2.0, 3.0, 4.0), m_grid=(300,), iterations=4, methods=("nested_ls",)),
    "crb": dict(trials=100, sigmas=(1.0, 2.0, 3.0, 4.0), m_grid=(150, 200, 250, 300, 350, 400)),
    "recover": dict(trials=1, sigmas=(2.0,), m_grid=(300,), iterations=10),
    "custom": dict(),
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    if experiment not in DEFAULTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    params = dict(DEFAULTS[experiment])
    params.update(overrides)
    return ExperimentConfig(experiment=experiment, **params)


def load_config(experiment: str, path=None, **overrides) -> ExperimentConfig:
    """Defaults, then the YAML file (top level, then the section named after the
    experiment), then explicit overrides (``None`` values are ignored)."""
    params = dict(DEFAULTS.get(experiment, {}))
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ArtifactIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(doc, dict):
            raise ConfigurationError(f"{path}: expected a mapping at top level")
        names = {f.name for f in fields(ExperimentConfig)} - {"experiment"}
        section = doc.get(experiment, {}) or {}
        top = {k: v for k, v in doc.items() if k not in EXPERIMENTS}
        for source in (top, section):
            unknown = set(source) - names - {"workers"}
            if unknown:
                raise ConfigurationError(f"{path}: unknown keys {sorted(unknown)}")
            params.update({k: v for k, v in source.items() if k != "workers"})
    params.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(experiment=experiment, **params)


def config_hash(config: ExperimentConfig) -> str:
    """Short SHA-256 of the canonical JSON form of the configuration."""
    text = json.dumps(asdict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def stream(seed: int, experiment: str, *counter: int) -> np.random.Generator:
    """Independent generator for ``(seed, experiment, counter...)``."""
    key = [int(seed), zlib.crc32(experiment.encode())] + [int(c) for c in counter]
    return np.random.default_rng(np.random.SeedSequence(key))


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    grid: str
    metric: str
    value: float
    trials: int
    stderr: float


@dataclass
class ResultTable:
    seed: int
    config_hash: str
    rows: list = field(default_factory=list)

    def add(self, experiment, grid, metric, value, trials, stderr):
        self.rows.append(ResultRow(experiment, grid, metric, float(value), int(trials), float(stderr)))

    def value(self, metric: str, grid: str) -> float:
        for r in self.rows:
            if r.metric == metric and r.grid == grid:
                return r.value
        raise KeyError((metric, grid))

    def records(self):
        return [
            (r.experiment, r.grid, r.metric, r.value, r.trials, r.stderr, self.seed, self.config_hash)
            for r in self.rows
        ]


def grid_label(**items) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in items.items())


def _fmt(v):
    if isinstance(v, float) and v.is_integer():
        return str(int(v)) if abs(v) < 1e15 else repr(v)
    return str(v)


_PLOT_TEMPLATE = '''"""Plot {csv} (one line per metric, grid points in file order)."""
import csv
from collections import defaultdict

import matplotlib.pyplot as plt

series = defaultdict(list)
with open({csv!r}, newline="") as fh:
    for row in csv.DictReader(fh):
        series[row["metric"]].append((row["grid"], float(row["value"])))
fig, ax = plt.subplots()
for metric, pts in series.items():
    ax.plot(range(len(pts)), [v for _, v in pts], marker="o", label=metric)
    ax.set_xticks(range(len(pts)))
    ax.set_xticklabels([g for g, _ in pts], rotation=90, fontsize=6)
ax.legend()
fig.tight_layout()
fig.savefig({png!r})
'''


def emit_outputs(table: ResultTable, path, plot_script: bool = False) -> list:
    """Write the table as CSV (and optionally a matplotlib script next to it)."""
    path = Path(path)
    written = [write_csv(path, RESULT_COLUMNS, table.records())]
    if plot_script:
        script = path.with_suffix(".plot.py")
        text = _PLOT_TEMPLATE.format(csv=path.name, png=path.with_suffix(".png").name)
        try:
            script.write_text(text, encoding="utf-8")
        except OSError as exc:
            raise ArtifactIOError(f"cannot write {script}: {exc.strerror or exc}") from exc
        written.append(script)
    return written


def map_trials(fn, n: int, workers: int = 1) -> list:
    """``[fn(0), ..., fn(n-1)]``, optionally spread over worker processes."""
    if workers <= 1 or n <= 1:
        return [fn(t) for t in range(n)]
    chunk = max(1, n // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n), chunksize=chunk))


def mean_and_stderr(values) -> tuple:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), float("nan")
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


def ratio_db(num, den) -> tuple:
    """``10 log10(sum num / sum den)`` and its delta-method standard error.

    Trials where ``num`` is NaN are dropped from both sums.
    """
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    keep = np.isfinite(num)
    num, den = num[keep], den[keep]
    if num.size == 0:
        return float("nan"), float("nan")
    r = num.sum() / den.sum()
    if num.size < 2 or r <= 0:
        return float(DB * np.log(r)) if r > 0 else float("-inf"), float("nan")
    resid = num - r * den
    se_r = resid.std(ddof=1) / np.sqrt(num.size) / den.mean()
    return float(DB * np.log(r)), float(DB * se_r / r)


# --------------------------------------------------------------------------
# Correlogram variance (Fig. 1 and the analytical/empirical table)
# --------------------------------------------------------------------------


def channel_samples_for(nx: int, L: int) -> int:
    """Samples per channel covering ``nx`` Nyquist samples: ``ceil(nx / L)``."""
    return -(-int(nx) // int(L))


def variance_table(config: ExperimentConfig) -> list:
    """Rows ``(N_x, L, q, N, analytical_var, empirical_var, empirical_stderr)`` for ``p_hat[0]``.

    Offsets are drawn once per ``(L, q)`` and reused along the ``N_x`` grid.
    The empirical columns are NaN when ``empirical_trials`` is zero.
    """
    out = []
    sigma2 = config.signal_power
    for ip, (L, q) in enumerate(config.lq_pairs):
        offsets = random_offsets(stream(config.seed, config.experiment, 0, ip), L, q)
        for ix, nx in enumerate(config.nx_grid):
            N = channel_samples_for(nx, L)
            mc = MultiCosetConfig(
                config.nyquist_rate, L, offsets, N, filter_len=config.filter_len
            )
            fb = design_delay_filters(mc)
            analytical = float(compute_cov_p(mc, fb, sigma2)[0, 0])
            emp, emp_se = float("nan"), float("nan")
            if config.empirical_trials > 0:
                emp, emp_se = _empirical_p1_variance(
                    mc, fb, sigma2, config.empirical_trials,
                    partial(stream, config.seed, config.experiment, 1, ip, ix),
                )
            out.append((nx, L, q, N, analytical, emp, emp_se))
    return out


def _empirical_p1_variance(mc, fb, sigma2, trials, rng_for_chunk, chunk=1000):
    values = []
    for j, start in enumerate(range(0, trials, chunk)):
        rng = rng_for_chunk(j)
        n = min(chunk, trials - start)
        x = white_gaussian(rng, (n, mc.nyquist_length), sigma2)
        values.append(correlogram(x, mc, fb).p_hat[:, 0])
    p1 = np.concatenate(values)
    var = float(np.var(p1, ddof=1)) if p1.size > 1 else float("nan")
    se = var * math.sqrt(2.0 / (p1.size - 1)) if p1.size > 1 else float("nan")
    return var, se


def run_fig1(config: ExperimentConfig) -> ResultTable:
    table = ResultTable(config.seed, config_hash(config))
    for nx, L, q, N, analytical, emp, emp_se in variance_table(config):
        grid = grid_label(L=L, q=q, N_x=nx, N=N)
        table.add(config.experiment, grid, "var_p1_analytical", analytical, 0, 0.0)
        if config.empirical_trials > 0:
            table.add(config.experiment, grid, "var_p1_empirical", emp, config.empirical_trials, emp_se)
    return table


# --------------------------------------------------------------------------
# Spectral compressive sensing trials
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialProblem:
    """One random problem shared by every grid point of a trial.

    ``gauss`` holds ``max(M)`` rows of standard normal entries; the
    measurement matrix for a given ``M`` is its first ``M`` rows scaled by
    ``1/sqrt(M)``, so matrices for different ``M`` are nested.  ``noise`` is
    unit-variance complex noise scaled by ``sigma`` per grid point.
    """

    model: LineSpectrumModel
    gauss: np.ndarray
    noise: np.ndarray

    def phi(self, M: int) -> np.ndarray:
        return self.gauss[:M] / np.sqrt(M)

    def measurements(self, x, M: int, sigma: float) -> np.ndarray:
        return real_times_complex(self.phi(M), x) + sigma * self.noise[:M]


def draw_problem(config: ExperimentConfig, trial: int) -> TrialProblem:
    rng = stream(config.seed, config.experiment, trial)
    N = config.N
    model = random_line_spectrum(
        rng, config.K, N,
        min_spacing=config.min_spacing_factor * np.pi / N,
        amp_range=config.amp_range,
        random_phase=config.random_phase,
    )
    m_max = max(config.m_grid)
    gauss = rng.standard_normal((m_max, N))
    noise = complex_noise(rng, m_max, 1.0)
    return TrialProblem(model, gauss, noise)


def grid_points(config: ExperimentConfig) -> list:
    return [(s, m) for m in config.m_grid for s in config.sigmas]


def recovery_trial(config: ExperimentConfig, trial: int) -> dict:
    """Run every method at every ``(sigma, M)`` grid point for one random problem."""
    prob = draw_problem(config, trial)
    x = synthesize_signal(prob.model, config.N)
    pts = grid_points(config)
    n_it = config.iterations
    err = np.full((len(pts), len(config.methods), n_it), np.nan)
    missed = np.full((len(pts), len(config.methods), n_it), np.nan)
    crb = np.full(len(pts), np.nan)
    stop = StopCriterion(max_iterations=n_it)
    miss_radius = config.miss_factor * np.pi / config.N
    for g, (sigma, M) in enumerate(pts):
        phi = prob.phi(M)
        y = prob.measurements(x, M, sigma)
        for j, method in enumerate(config.methods):
            trace = recover(
                y, phi, config.K, lam=config.step_size, stop=stop, method=method,
                window=config.window, truth=prob.model, miss_radius=miss_radius,
            )
            err[g, j] = [s.squared_error for s in trace.steps]
            missed[g, j] = [s.missed for s in trace.steps]
        if sigma > 0:
            try:
                crb[g] = crb_trace(prob.model, phi, sigma**2).crb_value
            except BoundUndefinedError:
                pass
    return {"energy": float(np.vdot(x, x).real), "err": err, "missed": missed, "crb": crb}


def run_recovery_trials(config: ExperimentConfig, workers: int = 1) -> dict:
    results = map_trials(partial(recovery_trial, config), config.trials, workers)
    return {
        "energy": np.array([r["energy"] for r in results]),
        "err": np.stack([r["err"] for r in results]),
        "missed": np.stack([r["missed"] for r in results]),
        "crb": np.stack([r["crb"] for r in results]),
    }


def _recovery_table(config, data, iterations, with_missed=False, with_nmse=True) -> ResultTable:
    table = ResultTable(config.seed, config_hash(config))
    energy = data["energy"]
    T = config.trials
    for g, (sigma, M) in enumerate(grid_points(config)):
        for it in iterations:
            grid = grid_label(sigma=float(sigma), M=M, iteration=it)
            for j, method in enumerate(config.methods):
                if with_nmse:
                    v, se = ratio_db(data["err"][:, g, j, it - 1], energy)
                    table.add(config.experiment, grid, f"nmse_db_{method}", v, T, se)
                if with_missed:
                    v, se = mean_and_stderr(data["missed"][:, g, j, it - 1])
                    table.add(config.experiment, grid, f"missed_{method}", v, T, se)
            if with_nmse:
                crb = data["crb"][:, g]
                v, se = ratio_db(crb, energy)
                table.add(config.experiment, grid, "ncrb_db", v, int(np.isfinite(crb).sum()), se)
    return table


def run_fig2(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    data = run_recovery_trials(config, workers)
    return _recovery_table(config, data, range(1, config.iterations + 1))


def run_fig3(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    data = run_recovery_trials(config, workers)
    return _recovery_table(config, data, [config.iterations])


run_fig4 = run_fig3


def run_table1(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    data = run_recovery_trials(config, workers)
    return _recovery_table(
        config, data, range(1, config.iterations + 1), with_missed=True, with_nmse=False
    )


def crb_trial(config: ExperimentConfig, trial: int) -> dict:
    prob = draw_problem(config, trial)
    x = synthesize_signal(prob.model, config.N)
    unit = np.full(len(config.m_grid), np.nan)
    for i, M in enumerate(config.m_grid):
        try:
            unit[i] = crb_trace(prob.model, prob.phi(M), 1.0).crb_value
        except BoundUndefinedError:
            pass
    return {"energy": float(np.vdot(x, x).real), "crb_unit": unit}


def run_crb(config: ExperimentConfig, workers: int = 1) -> list:
    """Rows ``(sigma, M, crb, ncrb_db, trials, stderr_db)``; the bound is linear in ``sigma^2``."""
    results = map_trials(partial(crb_trial, config), config.trials, workers)
    energy = np.array([r["energy"] for r in results])
    unit = np.stack([r["crb_unit"] for r in results])
    rows = []
    for i, M in enumerate(config.m_grid):
        for sigma in config.sigmas:
            c = unit[:, i] * sigma**2
            keep = np.isfinite(c)
            ncrb, se = ratio_db(c, energy) if sigma > 0 else (float("-inf"), float("nan"))
            rows.append((float(sigma), M, float(c[keep].mean()), ncrb, int(keep.sum()), se))
    return rows


def run_experiment(config: ExperimentConfig, workers: int = 1) -> ResultTable:
    runners = {
        "fig1": lambda c, w: run_fig1(c),
        "fig2": run_fig2,
        "fig3": run_fig3,
        "fig4": run_fig4,
        "table1": run_table1,
        "custom": run_fig2,
    }
    if config.experiment not in runners:
        raise ConfigurationError(f"{config.experiment!r} does not produce a result table")
    return runners[config.experiment](config, workers)
