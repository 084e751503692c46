"""Linear wavelet density estimators, rate functions and a Lepski selector."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import DensityModel, Sample, draw, uniform
from .seeds import CALIBRATION, derive_seed
from .wavelets import CoeffTree, GridFunction, WaveletBasis, synthesize, synthesize_levels


@dataclass(frozen=True)
class EstimatorState:
    """Empirical coefficients (1/n) sum phi_k(X_i), (1/n) sum psi_lk(X_i)."""

    coeffs: CoeffTree
    n: int
    basis: WaveletBasis


def rate(n: float, s: float) -> float:
    """(log n / n)^{s/(2s+1)}."""
    return (math.log(n) / n) ** (s / (2 * s + 1))


def sigma(n: float, j: int, kB: float) -> float:
    """Noise scale sqrt(kB 2^j j / n) of the level-j estimator in sup norm."""
    return math.sqrt(kB * 2.0**j * j / n)


def j_star(n: float, r: float) -> int:
    """Smallest integer j with 2^j >= (n / log n)^{1/(2r+1)}."""
    return int(math.ceil(math.log2(n / math.log(n)) / (2 * r + 1) - 1e-12))


def clamp_level(j: int, basis: WaveletBasis, j_max: int) -> int:
    return min(max(j, basis.J0 + 1), j_max)


def empirical_coeffs(sample: Sample | np.ndarray, basis: WaveletBasis, j_max: int) -> EstimatorState:
    """Empirical coefficients for levels below ``j_max``."""
    x = sample.points if isinstance(sample, Sample) else np.asarray(sample, dtype=float)
    n = x.shape[0]
    if n == 0:
        raise ValueError("empty sample")
    if j_max <= basis.J0:
        raise ValueError(f"j_max must exceed J0={basis.J0}")
    if j_max > basis.depth + basis.J0 + 8:
        raise ValueError(f"j_max={j_max} is beyond the tabulated resolution")
    k, v = basis.level_values(x, basis.J0, kind="phi")
    alpha = np.bincount(k.ravel(), weights=v.ravel(), minlength=2**basis.J0) / n
    beta = []
    for lvl in range(basis.J0, j_max):
        k, v = basis.level_values(x, lvl, kind="psi")
        beta.append(np.bincount(k.ravel(), weights=v.ravel(), minlength=2**lvl) / n)
    return EstimatorState(CoeffTree(basis.J0, j_max, alpha, tuple(beta)), n, basis)


def exact_state(model: DensityModel, n: int, j_max: int) -> EstimatorState:
    """Noiseless surrogate: the true coefficients in place of empirical ones."""
    return EstimatorState(model.exact_coeffs.extend(j_max), n, model.basis)


def linear_estimator(state: EstimatorState, j: int, q: int | None = None) -> GridFunction:
    """f_n(., j) sampled on the 2^-q grid."""
    q = state.coeffs.j_max + 3 if q is None else q
    return synthesize(state.coeffs, j, q, state.basis)


@dataclass(frozen=True)
class LepskiResult:
    estimate: GridFunction
    j_hat: int
    j_range: tuple[int, int]


def lepski_range(n: int, r: float, R: float, basis: WaveletBasis, j_max: int) -> tuple[int, int]:
    return clamp_level(j_star(n, R), basis, j_max), clamp_level(j_star(n, r), basis, j_max)


def lepski_statistics(state: EstimatorState, j_lo: int, j_hi: int, q: int) -> np.ndarray:
    """dist[j, l] = ||f_n(j) - f_n(l)||_inf for j_lo <= j < l <= j_hi (zero elsewhere)."""
    levels = list(range(j_lo, j_hi))
    dist = np.zeros((j_hi + 1, j_hi + 1))
    if not levels:
        return dist
    details = synthesize_levels(state.coeffs, levels, q, state.basis)
    for j in levels:
        acc = np.zeros(2**q)
        for l in range(j + 1, j_hi + 1):
            acc += details[l - 1]
            dist[j, l] = np.max(np.abs(acc))
    return dist


def lepski_estimator(
    state: EstimatorState,
    r: float,
    R: float,
    B: float,
    basis: WaveletBasis | None = None,
    C_L: float = 1.0,
    k: float = 1.0,
    q: int | None = None,
) -> tuple[GridFunction, int]:
    """Level-pair Lepski estimator.

    ``j_hat`` is the smallest j in [j*_n(R), j*_n(r)] with
    ||f_n(j) - f_n(l)||_inf <= C_L sigma(n, l) for every l in (j, j*_n(r)].
    """
    if r > R:
        raise ValueError("need r <= R")
    if state.n < 2:
        raise ValueError("Lepski selection needs n >= 2")
    basis = state.basis if basis is None else basis
    j_lo, j_hi = lepski_range(state.n, r, R, basis, state.coeffs.j_max)
    q = j_hi + 3 if q is None else q
    dist = lepski_statistics(state, j_lo, j_hi, q)
    kB = k * B
    j_hat = j_hi
    for j in range(j_lo, j_hi):
        if all(dist[j, l] <= C_L * sigma(state.n, l, kB) for l in range(j + 1, j_hi + 1)):
            j_hat = j
            break
    return linear_estimator(state, j_hat, q), j_hat


def dyadic_ceil(value: float, resolution: int = 4) -> float:
    """Smallest multiple of 2^-resolution that is >= value."""
    step = 2.0**-resolution
    return math.ceil(value / step - 1e-12) * step


def calibrate_lepski(
    basis: WaveletBasis,
    r: float,
    R: float,
    B: float,
    k: float = 1.0,
    n: int = 2**12,
    reps: int = 400,
    seed: int = 0,
    quantile: float = 0.95,
) -> float:
    """Threshold constant C_L from pure noise on the uniform density.

    Returns the dyadic ceiling of the ``quantile`` of
    max_{j < l} ||f_n(j) - f_n(l)||_inf / sigma(n, l).
    """
    model = uniform(basis)
    j_lo, j_hi = lepski_range(n, r, R, basis, j_max=60)
    q = j_hi + 3
    stats = np.empty(reps)
    for i in range(reps):
        sample = draw(model, n, derive_seed(seed, 1, i, domain=CALIBRATION))
        state = empirical_coeffs(sample, basis, j_hi)
        dist = lepski_statistics(state, j_lo, j_hi, q)
        ratios = [
            dist[j, l] / sigma(n, l, k * B) for j in range(j_lo, j_hi) for l in range(j + 1, j_hi + 1)
        ]
        stats[i] = max(ratios) if ratios else 0.0
    return dyadic_ceil(float(np.quantile(stats, quantile)))


@dataclass(frozen=True)
class ConcentrationRow:
    t: float
    frequency: float
    se: float
    bound: float
    in_range: bool


@dataclass(frozen=True)
class ConcentrationTable:
    rows: list
    c2: float
    slope: float
    threshold: float


def check_concentration(
    model: DensityModel,
    j: int,
    n: int,
    reps: int,
    t_grid,
    seed: int = 0,
    C: float = 1.0,
    C1: float = 1.0,
    q: int | None = None,
) -> ConcentrationTable:
    """Empirical tail of ||f_n(j) - E f_n(j)||_inf against an exponential bound.

    Rows with t below C1 sqrt((||f||_inf v 1) 2^j j / n) lie outside the
    range where the bound is claimed; they are reported with ``in_range``
    false and ignored when fitting C2.
    """
    if n / (2.0**j * j) < C:
        raise ValueError(f"n / (2^j j) = {n / (2.0**j * j):.4g} below admissibility constant {C}")
    basis = model.basis
    q = j + 3 if q is None else q
    j_tree = max(j, model.exact_coeffs.j_max)
    mean = synthesize(model.exact_coeffs.extend(j_tree), j, q, basis).values
    devs = np.empty(reps)
    for i in range(reps):
        sample = draw(model, n, derive_seed(seed, 2, i))
        est = synthesize(empirical_coeffs(sample, basis, j).coeffs, j, q, basis).values
        devs[i] = np.max(np.abs(est - mean))
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    sup_f = max(float(np.max(model.pdf(np.arange(2**q) / 2.0**q))), 1.0)
    threshold = C1 * math.sqrt(sup_f * 2.0**j * j / n)
    freq = np.array([np.mean(devs >= t) for t in t_grid])
    se = np.sqrt(freq * (1 - freq) / reps)
    in_range = t_grid >= threshold
    scale = n / (sup_f * 2.0**j)

    def bound(c2, t):
        return c2 * np.exp(-scale * t**2 / c2)

    c2 = _fit_c2(t_grid[in_range], freq[in_range], bound)
    positive = freq > 0
    slope = float(np.polyfit(t_grid[positive] ** 2, np.log(freq[positive]), 1)[0]) if positive.sum() >= 2 else float("nan")
    rows = [
        ConcentrationRow(float(t), float(f), float(e), float(bound(c2, t)), bool(ok))
        for t, f, e, ok in zip(t_grid, freq, se, in_range)
    ]
    return ConcentrationTable(rows, c2, slope, threshold)


def _fit_c2(t, freq, bound) -> float:
    """Smallest C2 >= 1 whose bound dominates every observed frequency."""
    lo, hi = 1.0, 1.0
    while np.any(bound(hi, t) < freq):
        hi *= 2.0
        if hi > 1e12:
            break
    if hi == lo:
        return lo
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if np.any(bound(mid, t) < freq):
            lo = mid
        else:
            hi = mid
    return hi
