"""Monte Carlo drivers producing result rows for each experiment."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .bands import (
    BandConstants,
    BandResult,
    build_grid,
    calibrate_grid,
    calibrate_two_class,
    cap_bump,
    chi_square_distance,
    chi_square_monte_carlo,
    grid_band,
    grid_instance,
    max_separation,
    model_grid,
    separated_bump,
    testing_risk,
    two_class_band,
)
from .config import ConfigError, ExperimentConfig
from .estimation import (
    calibrate_lepski,
    check_concentration,
    clamp_level,
    empirical_coeffs,
    j_star,
    lepski_estimator,
    rate,
    sigma,
)
from .holder import approximation_error
from .models import DensityModel, draw, make_bump, max_bump_eps, model_from_spec, sample_prior, uniform
from .seeds import derive_seed
from .wavelets import WaveletBasis, build_basis, synthesize

CSV_HEADER = ("experiment", "n", "model", "metric", "value", "se", "reps", "seed")

# per-experiment tags keep replication seeds of different experiments apart
_TAGS = {name: i + 1 for i, name in enumerate(
    ("coverage", "diameter", "risk_slope", "testing_risk", "chi_square",
     "prior_concentration", "concentration_tail", "calibrate")
)}


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    n: int
    model: str
    metric: str
    value: float
    se: float
    reps: int
    seed: int

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise FloatingPointError(f"{self.experiment}/{self.model}/{self.metric}: non-finite value")
        if not self.se >= 0:
            raise FloatingPointError(f"{self.experiment}/{self.model}/{self.metric}: invalid SE {self.se}")

    def key(self):
        return (self.experiment, self.model, self.n, self.metric)


def resolve_threads(threads: int | None) -> int:
    """``threads`` flag, else ADABAND_THREADS, else 1; 0 means every core."""
    if threads is None:
        env = os.environ.get("ADABAND_THREADS")
        if env is None or env.strip() == "":
            return 1
        try:
            threads = int(env)
        except ValueError:
            raise ConfigError(f"ADABAND_THREADS must be an integer, got {env!r}") from None
    if threads < 0:
        raise ConfigError(f"threads must be >= 0, got {threads}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def basis_for(cfg: ExperimentConfig) -> WaveletBasis:
    try:
        return build_basis(cfg.order, cfg.depth)
    except ValueError as exc:
        raise ConfigError(f"[basis]: {exc}") from None


# constants -------------------------------------------------------------------

_REQUIRED = {"two_class": ("L", "L_prime", "kappa"), "grid": ("L", "L0", "M")}


def band_grid(cfg: ExperimentConfig, n: int):
    return build_grid(cfg.r, cfg.R, cfg.zeta, n)


def resolve_constants(cfg: ExperimentConfig, basis: WaveletBasis) -> BandConstants:
    """Constants from the config, calibrating the band when any is missing."""
    given = cfg.constants
    needed = _REQUIRED[cfg.band]
    present = [k for k in needed if k in given]
    if present and len(present) < len(needed):
        missing = [k for k in needed if k not in given]
        raise ConfigError(f"[constants]: give all of {needed} or none; missing {missing}")
    if len(present) == len(needed):
        for k in ("C_L", "k"):
            if k not in given:
                raise ConfigError(f"[constants]: {k} is required when the band constants are given")
        return BandConstants(**given)
    seed = derive_seed(cfg.seed, _TAGS["calibrate"])
    if cfg.band == "two_class":
        return calibrate_two_class(
            basis, cfg.r, cfg.s, cfg.B, cfg.alpha, n=cfg.calibration_n,
            reps=cfg.calibration_reps, seed=seed, k=given.get("k"), C_L=given.get("C_L"),
        )
    return calibrate_grid(
        basis, band_grid(cfg, cfg.calibration_n), cfg.B, cfg.alpha, n=cfg.calibration_n,
        reps=cfg.calibration_reps, seed=seed, k=given.get("k"), C_L=given.get("C_L"),
    )


# models ----------------------------------------------------------------------


@dataclass(frozen=True)
class ModelCase:
    """A density together with the smoothness the band should report for it."""

    model: DensityModel
    expected_s: float | None


def _num(spec, key, cast=float):
    try:
        return cast(spec[key])
    except KeyError:
        raise ConfigError(f"[model.{spec['name']}]: missing key {key!r}") from None
    except ValueError as exc:
        raise ConfigError(f"[model.{spec['name']}] {key}: {exc}") from None


def build_models(
    cfg: ExperimentConfig, basis: WaveletBasis, n: int, consts: BandConstants | None = None
) -> list[ModelCase]:
    """Models of the config; derived kinds (cap, separated, grid_instance) depend on n and constants."""
    out = []
    for spec in cfg.models:
        spec = dict(spec)
        name = spec["name"]
        kind = spec["kind"]
        expected = float(spec.pop("expected_s")) if "expected_s" in spec else None
        if kind == "cap":
            model = cap_bump(_num(spec, "s"), cfg.B, _num(spec, "j", int), basis, name=name)
            if expected is None and cfg.band == "two_class":
                expected = cfg.s
        elif kind == "separated":
            if consts is None:
                raise ConfigError(f"[model.{name}]: kind 'separated' needs band constants")
            j_test = clamp_level(j_star(n, cfg.r), basis, 60)
            rho = consts.L_prime * sigma(n, j_test, consts.k * cfg.B)
            _, j_best = max_separation(cfg.r, cfg.s, cfg.B, range(basis.J0, j_test), basis)
            j = int(spec["j"]) if "j" in spec else j_best
            model = separated_bump(cfg.r, cfg.s, cfg.B, rho, j, basis, name=name)
            if model is None:
                raise ValueError(f"[model.{name}]: no admissible bump at level {j} reaches separation {rho:.4g}")
            expected = cfg.r if expected is None else expected
        elif kind == "grid_instance":
            if consts is None:
                raise ConfigError(f"[model.{name}]: kind 'grid_instance' needs band constants")
            grid = band_grid(cfg, n)
            i0 = _num(spec, "i0", int)
            if not 0 <= i0 < len(grid.points):
                raise ConfigError(f"[model.{name}] i0: must lie in [0, {len(grid.points) - 1}]")
            model = grid_instance(grid, i0, cfg.B, consts.L0, n, basis)
            if model is None:
                raise ValueError(f"[model.{name}]: grid cell {i0} has no bump separated by L0 r_n at n={n}")
            model = replace(model, params={**model.params, "name": name})
            expected = grid.points[i0] if expected is None else expected
        else:
            try:
                model = model_from_spec(spec, basis)
            except KeyError as exc:
                raise ConfigError(f"[model.{name}]: missing key {exc}") from None
            if kind == "uniform" and expected is None:
                expected = cfg.s if cfg.band == "two_class" else cfg.R
        out.append(ModelCase(model, expected))
    if not out:
        raise ConfigError("config defines no [model.NAME] section")
    return out


def _band(cfg, basis, consts, sample, q=None, n=None) -> BandResult:
    if cfg.band == "two_class":
        return two_class_band(
            sample, cfg.r, cfg.s, cfg.B, cfg.alpha, consts, basis, q=q, dishonest=cfg.dishonest
        )
    if cfg.dishonest:
        raise ConfigError("the dishonest flag applies to the two-class band only")
    return grid_band(sample, band_grid(cfg, sample.n), cfg.B, consts, basis, q=q)


def _half_width_exact(cfg, consts, band: BandResult, n: int) -> bool:
    mult = consts.L if cfg.band == "two_class" else consts.M
    return band.half_width == mult * rate(n, band.selected_s)


# experiments -----------------------------------------------------------------


def run_coverage(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Coverage, width and selection frequencies of the configured band."""
    basis = basis_for(cfg)
    consts = resolve_constants(cfg, basis)
    rows = []
    for n in cfg.n_list:
        for idx, case in enumerate(build_models(cfg, basis, n, consts)):
            model = case.model
            truth = {}

            def one(i, model=model, truth=truth):
                band = _band(cfg, basis, consts, draw(model, n, derive_seed(cfg.seed, _TAGS["coverage"], idx, n, i)), cfg.q)
                q = band.center.q
                if q not in truth:
                    truth[q] = model_grid(model, q)
                return band, band.contains(truth[q])

            results = _pmap(one, range(cfg.reps), threads)
            bands = [b for b, _ in results]
            metrics = {
                "coverage": [c for _, c in results],
                "half_width": [b.half_width for b in bands],
                "selected_s": [b.selected_s for b in bands],
                "width_exact": [_half_width_exact(cfg, consts, b, n) for b in bands],
            }
            if cfg.band == "two_class":
                metrics["rough_branch"] = [b.selected_s == cfg.r for b in bands]
            if case.expected_s is not None:
                metrics["correct_selection"] = [b.selected_s == case.expected_s for b in bands]
            rows += _rows(cfg, "coverage", n, model.name, metrics)
    return rows


def _rows(cfg, experiment, n, model_name, metrics: dict) -> list[ResultRow]:
    out = []
    for metric, vals in metrics.items():
        m, se = mean_se(vals)
        out.append(ResultRow(experiment, n, model_name, metric, m, se, len(vals), cfg.seed))
    return out


def run_diameter(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Mean band diameter and its ratio to r_n at the model's smoothness."""
    basis = basis_for(cfg)
    consts = resolve_constants(cfg, basis)
    rows = []
    for n in cfg.n_list:
        for idx, case in enumerate(build_models(cfg, basis, n, consts)):
            if case.expected_s is None:
                raise ConfigError(f"[model.{case.model.name}]: diameter needs expected_s")
            model = case.model

            def one(i, model=model):
                sample = draw(model, n, derive_seed(cfg.seed, _TAGS["diameter"], idx, n, i))
                return _band(cfg, basis, consts, sample, cfg.q).diameter

            diam = _pmap(one, range(cfg.reps), threads)
            scale = rate(n, case.expected_s)
            rows += _rows(cfg, "diameter", n, model.name, {
                "diameter": diam,
                "diameter_ratio": [d / scale for d in diam],
            })
    return rows


def run_risk_slope(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Sup-norm risk of the Lepski estimator per n, and the log-log slope against n / log n.

    Slope rows carry n = 0; their SE is the regression standard error.
    """
    basis = basis_for(cfg)
    q = 14 if cfg.q is None else cfg.q
    rows = []
    for idx, case in enumerate(build_models(cfg, basis, max(cfg.n_list))):
        model = case.model
        if model.exact_coeffs.j_max > q - 1:
            raise ConfigError(f"[experiment] q={q} too coarse for model {model.name}")
        truth = synthesize(model.exact_coeffs, model.exact_coeffs.j_max, q, basis).values
        k = cfg.constants.get("k", model.bound / cfg.B)
        C_L = cfg.constants.get("C_L")
        if C_L is None:
            C_L = calibrate_lepski(
                basis, cfg.r, cfg.R, cfg.B, k, n=cfg.calibration_n, reps=cfg.calibration_reps,
                seed=derive_seed(cfg.seed, _TAGS["calibrate"], idx),
            )
        xs, ys = [], []
        for n in cfg.n_list:
            j_top = clamp_level(j_star(n, cfg.r), basis, 60)

            def one(i, n=n, j_top=j_top):
                sample = draw(model, n, derive_seed(cfg.seed, _TAGS["risk_slope"], idx, n, i))
                state = empirical_coeffs(sample, basis, j_top)
                est, _ = lepski_estimator(state, cfg.r, cfg.R, cfg.B, basis, C_L=C_L, k=k, q=q)
                return float(np.max(np.abs(est.values - truth)))

            errs = _pmap(one, range(cfg.reps), threads)
            m, se = mean_se(errs)
            rows.append(ResultRow("risk_slope", n, model.name, "risk", m, se, cfg.reps, cfg.seed))
            xs.append(math.log(n / math.log(n)))
            ys.append(math.log(m))
        if len(xs) >= 2:
            slope, slope_se = _slope(xs, ys)
            rows.append(ResultRow("risk_slope", 0, model.name, "slope", slope, slope_se, cfg.reps, cfg.seed))
        s_true = case.expected_s if case.expected_s is not None else model.params.get("s")
        if s_true is not None:
            rows.append(ResultRow(
                "risk_slope", 0, model.name, "target_slope", -s_true / (2 * s_true + 1), 0.0, cfg.reps, cfg.seed
            ))
        rows.append(ResultRow("risk_slope", 0, model.name, "C_L", C_L, 0.0, cfg.calibration_reps, cfg.seed))
    return rows


def _slope(xs, ys) -> tuple[float, float]:
    x, y = np.asarray(xs), np.asarray(ys)
    coef = np.polyfit(x, y, 1)
    if x.size < 3:
        return float(coef[0]), 0.0
    resid = y - np.polyval(coef, x)
    s2 = float(resid @ resid) / (x.size - 2)
    return float(coef[0]), math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))


def sweep_alternatives(cfg, basis, j: int, count: int) -> list[DensityModel]:
    """Bumps at level j with the largest admissible eps (at most B), evenly spread translates."""
    eps = min(cfg.B, max_bump_eps(cfg.r, j, basis))
    size = 2**j
    count = min(count, size)
    translates = sorted({(i * size) // count for i in range(count)})
    return [make_bump(eps, cfg.r, j, m, basis, name=f"bump_j{j}_m{m}") for m in translates]


def run_testing_risk(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Risk of the band-induced test of f = 1 against bump alternatives, swept over the bump level."""
    basis = basis_for(cfg)
    consts = resolve_constants(cfg, basis)
    levels = cfg.params.get("levels")
    if not levels:
        raise ConfigError("[params]: testing_risk needs 'levels'")
    count = cfg.params.get("alternatives", 8)
    q = cfg.q if cfg.q is not None else max(levels) + 3
    if max(levels) + 1 > q - 1:
        raise ConfigError(f"[experiment] q={q} too coarse for bump level {max(levels)}")
    null = uniform(basis)
    rows = []
    for n in cfg.n_list:
        def one(j, n=n):
            alts = sweep_alternatives(cfg, basis, j, count)
            res = testing_risk(
                lambda sample: _band(cfg, basis, consts, sample, q),
                null, alts, n, cfg.reps, seed=derive_seed(cfg.seed, _TAGS["testing_risk"], n, j), q=q,
            )
            return j, alts, res

        for j, alts, res in _pmap(one, levels, threads):
            eps = alts[0].params["eps"]
            name = f"bump_j{j}"
            sep = eps * 2.0 ** (-j * cfg.r) - cfg.B * 2.0 ** (-j * cfg.s)
            se1 = math.sqrt(res.type_one * (1 - res.type_one) / res.reps)
            se2 = math.sqrt(res.type_two * (1 - res.type_two) / res.reps)
            rows += [
                ResultRow("testing_risk", n, name, "risk", res.risk, math.hypot(se1, se2), res.reps, cfg.seed),
                ResultRow("testing_risk", n, name, "type_one", res.type_one, se1, res.reps, cfg.seed),
                ResultRow("testing_risk", n, name, "type_two", res.type_two, se2, res.reps, cfg.seed),
                ResultRow("testing_risk", n, name, "separation", sep, 0.0, res.reps, cfg.seed),
                ResultRow("testing_risk", n, name, "scale_ratio", 2.0 ** (-j * cfg.r) / rate(n, cfg.r), 0.0, res.reps, cfg.seed),
                ResultRow("testing_risk", n, name, "alternatives", float(len(alts)), 0.0, res.reps, cfg.seed),
            ]
        j_test = clamp_level(j_star(n, cfg.r), basis, 60)
        rho = consts.L_prime * sigma(n, j_test, consts.k * cfg.B) if cfg.band == "two_class" else consts.L0 * rate(n, cfg.r)
        rows.append(ResultRow("testing_risk", n, "threshold", "rho", rho, 0.0, cfg.reps, cfg.seed))
    return rows


def run_chi_square(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Closed-form chi-square distance next to its Monte Carlo estimate."""
    basis = basis_for(cfg)
    cases = cfg.params.get("cases")
    if not cases:
        raise ConfigError("[params]: chi_square needs 'cases'")
    draws = cfg.params.get("draws", cfg.reps)

    def one(item):
        idx, (M, n, gamma) = item
        mc, se = chi_square_monte_carlo(M, n, gamma, draws, derive_seed(cfg.seed, _TAGS["chi_square"], idx), basis)
        return M, n, gamma, mc, se

    rows = []
    for M, n, gamma, mc, se in _pmap(one, enumerate(cases), threads):
        name = f"M{M}_gamma{gamma:g}"
        rows.append(ResultRow("chi_square", n, name, "closed_form", chi_square_distance(M, n, gamma), 0.0, draws, cfg.seed))
        rows.append(ResultRow("chi_square", n, name, "monte_carlo", mc, se, draws, cfg.seed))
    return rows


def run_prior_concentration(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Frequency of ||K_j U - U||_inf < eps B 2^{-js} under the prior, against eps^{2^j}.

    Rows carry n = 0: no sample is drawn from the density.
    """
    basis = basis_for(cfg)
    p = cfg.params
    try:
        s, B, levels, eps = p["s"], p["B"], p["levels"], p["eps"]
    except KeyError as exc:
        raise ConfigError(f"[params]: prior_concentration needs {exc}") from None
    draws = p.get("draws", cfg.reps)
    rows = []
    for j in levels:
        q = j + 4 if cfg.q is None else cfg.q
        threshold = eps * B * 2.0 ** (-j * s)

        def one(i, j=j, q=q, threshold=threshold):
            model = sample_prior(s, B, j, j + 1, derive_seed(cfg.seed, _TAGS["prior_concentration"], j, i), basis)
            return approximation_error(model.exact_coeffs, j, q, basis) < threshold

        hits = _pmap(one, range(draws), threads)
        m, se = mean_se(hits)
        name = f"prior_s{s:g}_j{j}"
        rows.append(ResultRow("prior_concentration", 0, name, "frequency", m, se, draws, cfg.seed))
        rows.append(ResultRow("prior_concentration", 0, name, "bound", eps ** (2**j), 0.0, draws, cfg.seed))
    return rows


def run_concentration_tail(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Tail frequencies of the linear estimator's sup deviation with the fitted exponential bound."""
    basis = basis_for(cfg)
    p = cfg.params
    if "level" not in p or "t_grid" not in p:
        raise ConfigError("[params]: concentration_tail needs 'level' and 't_grid'")
    rows = []
    jobs = [(idx, case, n) for n in cfg.n_list for idx, case in enumerate(build_models(cfg, basis, n))]

    def one(job):
        idx, case, n = job
        table = check_concentration(
            case.model, p["level"], n, cfg.reps, p["t_grid"],
            seed=derive_seed(cfg.seed, _TAGS["concentration_tail"], idx, n),
            C=p.get("C", 1.0), C1=p.get("C1", 1.0), q=cfg.q,
        )
        return case.model.name, n, table

    for name, n, table in _pmap(one, jobs, threads):
        for row in table.rows:
            tag = f"t={row.t:.4f}"
            rows.append(ResultRow("concentration_tail", n, name, f"frequency[{tag}]", row.frequency, row.se, cfg.reps, cfg.seed))
            rows.append(ResultRow("concentration_tail", n, name, f"bound[{tag}]", row.bound, 0.0, cfg.reps, cfg.seed))
        rows.append(ResultRow("concentration_tail", n, name, "C2", table.c2, 0.0, cfg.reps, cfg.seed))
        rows.append(ResultRow("concentration_tail", n, name, "threshold", table.threshold, 0.0, cfg.reps, cfg.seed))
    return rows


def run_calibrate(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    """Calibrated band constants, one row each (n = calibration sample size)."""
    basis = basis_for(cfg)
    consts = resolve_constants(replace(cfg, constants={k: v for k, v in cfg.constants.items() if k in ("C_L", "k")}), basis)
    names = ("L", "L_prime", "kappa", "C_L", "k") if cfg.band == "two_class" else ("L", "L0", "M", "C_L", "k")
    return [
        ResultRow("calibrate", cfg.calibration_n, cfg.band, name, getattr(consts, name), 0.0, cfg.calibration_reps, cfg.seed)
        for name in names
    ]


RUNNERS = {
    "coverage": run_coverage,
    "diameter": run_diameter,
    "risk_slope": run_risk_slope,
    "testing_risk": run_testing_risk,
    "chi_square": run_chi_square,
    "prior_concentration": run_prior_concentration,
    "concentration_tail": run_concentration_tail,
    "calibrate": run_calibrate,
}


def run(cfg: ExperimentConfig, threads: int = 1) -> list[ResultRow]:
    rows = RUNNERS[cfg.experiment](cfg, threads)
    return sorted(rows, key=ResultRow.key)


def format_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow((r.experiment, r.n, r.model, r.metric, f"{r.value:.10g}", f"{r.se:.10g}", r.reps, r.seed))
    return buf.getvalue()


def read_csv(text: str) -> list[ResultRow]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        ResultRow(d["experiment"], int(d["n"]), d["model"], d["metric"], float(d["value"]),
                  float(d["se"]), int(d["reps"]), int(d["seed"]))
        for d in reader
    ]
