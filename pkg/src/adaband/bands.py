"""Adaptive confidence bands built from smoothness tests.

Two procedures are provided: a band choosing between two Hölder balls, and
a band over a logarithmic grid of smoothness values that scans tests from
the roughest model upwards. The module also holds the machinery for the
band-induced test of a point null against bump alternatives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .estimation import (
    calibrate_lepski,
    clamp_level,
    dyadic_ceil,
    empirical_coeffs,
    j_star,
    lepski_estimator,
    rate,
    sigma,
)
from .holder import HolderBall, coefficient_separation
from .models import DensityModel, Sample, draw, make_bump, max_bump_eps, uniform
from .seeds import CALIBRATION, EVALUATION, derive_seed
from .wavelets import GridFunction, WaveletBasis, synthesize


@dataclass(frozen=True)
class BandConstants:
    """Constants of the band procedures.

    L : half-width multiplier (two-class band) or test threshold (grid band).
    L_prime : separation multiplier defining the separated class.
    kappa : test threshold multiplier of the two-class band.
    L0 : separation multiplier of the grid classes.
    M : half-width multiplier of the grid band.
    C_L : Lepski threshold constant.
    k : sup-norm factor, ||f||_inf <= k B over the classes in play.
    """

    L: float = 1.0
    L_prime: float = 1.0
    kappa: float = 1.0
    L0: float = 1.0
    M: float = 1.0
    C_L: float = 1.0
    k: float = 1.0


@dataclass(frozen=True)
class BandResult:
    """Band {center(y) +- half_width}; ``test_values`` holds (level, statistic, threshold)."""

    center: GridFunction
    half_width: float
    selected_s: float
    test_values: list = field(default_factory=list)
    j_hat: int | None = None

    @property
    def diameter(self) -> float:
        return 2.0 * self.half_width

    def contains(self, values: np.ndarray) -> bool:
        """Whether a function sampled on the center's grid lies inside the band."""
        return bool(np.max(np.abs(values - self.center.values)) <= self.half_width)


@dataclass(frozen=True)
class GridS:
    """Smoothness grid s_1 = r < ... < s_last = R."""

    points: tuple
    zeta: float
    n: int

    @property
    def r(self) -> float:
        return self.points[0]

    @property
    def R(self) -> float:
        return self.points[-1]


def build_grid(r: float, R: float, zeta: float, n: int) -> GridS:
    """Equispaced grid on [r, R] with gaps in [zeta/log n, 2 zeta/log n]."""
    if not 0 < r < R:
        raise ValueError(f"need 0 < r < R, got r={r}, R={R}")
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    log_n = math.log(n)
    lo, hi = zeta / log_n, 2 * zeta / log_n
    pieces = math.ceil((R - r) * log_n / (1.5 * zeta))
    gap = min(hi, (R - r) / pieces)
    if gap < lo * (1 - 1e-12):
        raise ValueError(
            f"no grid on [{r}, {R}] with gaps in [{lo:.4g}, {hi:.4g}] at n={n}; zeta={zeta} is too large"
        )
    points = tuple(float(p) for p in np.linspace(r, R, pieces + 1))
    return GridS(points, zeta, n)


def _tested_separation(state, j: int, ball: HolderBall) -> float:
    return coefficient_separation(state.coeffs, ball, levels=range(state.coeffs.J0, j))[0]


def two_class_band(
    sample: Sample,
    r: float,
    s: float,
    B: float,
    alpha: float,
    consts: BandConstants | None,
    basis: WaveletBasis,
    q: int | None = None,
    dishonest: bool = False,
) -> BandResult:
    """Band adapting between Sigma(s, B) and the separated part of Sigma(r, B).

    The statistic is the coefficient separation of f_n(j*_n(r)) from
    Sigma(s, B); the band is the Lepski estimate +- L r_n(r) when it exceeds
    kappa sigma(j*_n(r)) and +- L r_n(s) otherwise. With ``dishonest`` the
    test is skipped and the width follows the level picked by Lepski's rule;
    such a band is not honest.
    """
    if not r < s:
        raise ValueError("need r < s")
    if consts is None:
        consts = calibrate_two_class(basis, r, s, B, alpha)
    n = sample.n
    j_test = clamp_level(j_star(n, r), basis, 60)
    state = empirical_coeffs(sample, basis, j_test)
    q = j_test + 3 if q is None else q
    center, j_hat = lepski_estimator(state, r, s, B, basis, C_L=consts.C_L, k=consts.k, q=q)
    if dishonest:
        rough = j_hat > clamp_level(j_star(n, s), basis, 60)
        tests = []
    else:
        stat = _tested_separation(state, j_test, HolderBall(s, B))
        tau = consts.kappa * sigma(n, j_test, consts.k * B)
        rough = stat > tau
        tests = [(j_test, stat, tau)]
    chosen = r if rough else s
    return BandResult(center, consts.L * rate(n, chosen), chosen, tests, j_hat)


def grid_band(
    sample: Sample,
    grid: GridS,
    B: float,
    consts: BandConstants,
    basis: WaveletBasis,
    q: int | None = None,
) -> BandResult:
    """Band over a smoothness grid.

    Test i compares f_n(j_i), 2^{j_i} ~ (n/log n)^{1/(2 s_i + 1)}, with
    Sigma(s_{i+1}, B) and rejects when the separation exceeds L sigma(j_i).
    The selected smoothness is the first s_i whose test rejects (scanning
    from i = 1), else R; the band is the Lepski estimate +- M r_n(s_hat).
    """
    n = sample.n
    points = grid.points
    levels = [clamp_level(j_star(n, si), basis, 60) for si in points[:-1]]
    j_top = max(levels)
    state = empirical_coeffs(sample, basis, j_top)
    q = j_top + 3 if q is None else q
    center, j_hat = lepski_estimator(
        state, grid.r, grid.R, B, basis, C_L=consts.C_L, k=consts.k, q=q
    )
    tests = []
    chosen = grid.R
    for i, j_i in enumerate(levels):
        stat = _tested_separation(state, j_i, HolderBall(points[i + 1], B))
        thresh = consts.L * sigma(n, j_i, consts.k * B)
        tests.append((j_i, stat, thresh))
        if stat > thresh:
            chosen = points[i]
            break
    return BandResult(center, consts.M * rate(n, chosen), chosen, tests, j_hat)


def chi_square_distance(M: int, n: int, gamma: float) -> float:
    """((1 + gamma^2)^n - 1) / M, the second moment of Z - 1 for the bump mixture."""
    if M < 1 or n < 1:
        raise ValueError("need M >= 1 and n >= 1")
    return math.expm1(n * math.log1p(gamma * gamma)) / M


def mixture_level(M: int, basis: WaveletBasis) -> int:
    """Coarsest level holding M distinct translates."""
    return max(basis.J0, math.ceil(math.log2(M)))


def chi_square_monte_carlo(
    M: int, n: int, gamma: float, draws: int, seed: int, basis: WaveletBasis, j: int | None = None
) -> tuple[float, float]:
    """Monte Carlo estimate (mean, SE) of E_{f0}(Z - 1)^2.

    Z is the average over m < M of prod_i f_m(X_i) / f_0(X_i) with
    f_m = 1 + gamma psi_{jm}, evaluated exactly under X_i uniform. The
    identity only uses orthonormality of the psi_{jm}, so gamma large enough
    to make f_m negative somewhere is accepted.
    """
    j = mixture_level(M, basis) if j is None else j
    if M > 2**j:
        raise ValueError(f"level {j} has fewer than {M} translates")
    rng = np.random.default_rng(seed)
    out = np.empty(draws)
    chunk = max(1, 200_000 // max(n, 1))
    for start in range(0, draws, chunk):
        size = min(chunk, draws - start)
        x = rng.random((size, n))
        z = np.zeros(size)
        for m in range(M):
            ratio = 1.0 + gamma * basis.function_values(x, j, m)
            z += np.prod(ratio, axis=1)
        out[start : start + size] = (z / M - 1.0) ** 2
    return float(out.mean()), float(out.std(ddof=1) / math.sqrt(draws))


@dataclass(frozen=True)
class TestingRisk:
    risk: float
    type_one: float
    type_two: float
    type_two_each: tuple
    reps: int


def model_grid(model: DensityModel, q: int) -> np.ndarray:
    c = model.exact_coeffs
    if c.j_max > q - 1:
        raise ValueError(f"grid resolution {q} too coarse for a model with levels below {c.j_max}")
    return synthesize(c, c.j_max, q, model.basis).values


def testing_risk(
    band_proc: Callable[[Sample], BandResult],
    null_model: DensityModel,
    alternatives: Sequence[DensityModel],
    n: int,
    reps: int,
    seed: int = 0,
    q: int | None = None,
) -> TestingRisk:
    """Risk E_{f0} Psi + max_m E_{fm}(1 - Psi) of the band-induced test.

    Psi = 1 as soon as some alternative lies inside the band. Replication i
    uses the same seed under every model (common random numbers).
    """
    if not alternatives:
        raise ValueError("need at least one alternative")
    grids = {}

    def psi(band: BandResult) -> bool:
        qq = band.center.q
        for idx, alt in enumerate(alternatives):
            key = (idx, qq)
            if key not in grids:
                grids[key] = model_grid(alt, qq)
            if band.contains(grids[key]):
                return True
        return False

    seeds = [derive_seed(seed, 3, i) for i in range(reps)]
    reject_null = np.mean([psi(band_proc(draw(null_model, n, sd))) for sd in seeds])
    accept_alt = []
    for alt in alternatives:
        if alt is null_model:
            accept_alt.append(1.0 - reject_null)
            continue
        accept_alt.append(float(np.mean([not psi(band_proc(draw(alt, n, sd))) for sd in seeds])))
    type_two = max(accept_alt)
    return TestingRisk(float(reject_null + type_two), float(reject_null), type_two, tuple(accept_alt), reps)


# calibration -----------------------------------------------------------------


def cap_bump(s: float, B: float, j: int, basis: WaveletBasis, name: str | None = None) -> DensityModel:
    """Bump whose coefficient sits exactly on the Sigma(s, B) cap (largest admissible eps)."""
    eps = min(B, max_bump_eps(s, j, basis))
    return make_bump(eps, s, j, None, basis, name=name or f"cap_s{s:g}_j{j}")


def separated_bump(
    r: float, s: float, B: float, rho: float, j: int, basis: WaveletBasis, name: str | None = None
) -> DensityModel | None:
    """Bump in Sigma(r, B) whose coefficient separation from Sigma(s, B) equals ``rho``.

    Returns None when no admissible eps reaches that separation at level j.
    """
    eps = (rho + B * 2.0 ** (-j * s)) * 2.0 ** (j * r)
    if eps > min(B, max_bump_eps(r, j, basis)):
        return None
    return make_bump(eps, r, j, None, basis, name=name or f"sep_r{r:g}_j{j}")


def max_separation(r: float, s: float, B: float, levels, basis: WaveletBasis) -> tuple[float, int]:
    """Largest separation eps 2^{-jr} - B 2^{-js} over admissible eps and the given levels."""
    best = (-math.inf, None)
    for j in levels:
        eps = min(B, max_bump_eps(r, j, basis))
        sep = eps * 2.0 ** (-j * r) - B * 2.0 ** (-j * s)
        if sep > best[0]:
            best = (sep, j)
    return best


def _quantile_ceil(values, level: float) -> float:
    return dyadic_ceil(float(np.quantile(np.asarray(values), level)))


def calibrate_two_class(
    basis: WaveletBasis,
    r: float,
    s: float,
    B: float,
    alpha: float,
    n: int = 2**12,
    reps: int = 400,
    seed: int = 0,
    k: float | None = None,
    C_L: float | None = None,
) -> BandConstants:
    """Calibrate (C_L, kappa, L', L) on the two-class suite at sample size n.

    kappa: wrong-branch frequency at most alpha/4 on Sigma(s) models (uniform
    and a cap bump at every level seen by the test). L': detection frequency at least 1 - alpha/4 for a bump
    separated by L' sigma(j*). L: coverage at least 1 - alpha on the whole
    suite. Each is the smallest value on a 1/16-step dyadic grid; all draws
    come from the calibration seed domain.
    """
    j_test = clamp_level(j_star(n, r), basis, 60)
    null_models = [uniform(basis)] + [cap_bump(s, B, j, basis) for j in range(basis.J0, j_test)]
    sep_max, j_sep = max_separation(r, s, B, range(basis.J0, j_test), basis)
    probe = separated_bump(r, s, B, sep_max, j_sep, basis)
    if k is None:
        k = max(m.bound for m in null_models + [probe]) / B
    kB = k * B
    sig = sigma(n, j_test, kB)
    if C_L is None:
        C_L = calibrate_lepski(basis, r, s, B, k, n=n, reps=reps, seed=seed)

    def seeds(tag):
        return [derive_seed(seed, tag, i, domain=CALIBRATION) for i in range(reps)]

    null_stats = []
    for idx, model in enumerate(null_models):
        for sd in seeds(10 + idx):
            st = empirical_coeffs(draw(model, n, sd), basis, j_test)
            null_stats.append(_tested_separation(st, j_test, HolderBall(s, B)) / sig)
    kappa = _quantile_ceil(null_stats, 1 - alpha / 4)

    # detection depends on the bump only through its separation: bisection on L'
    def detected(lp):
        model = separated_bump(r, s, B, lp * sig, j_sep, basis)
        hits = 0
        for sd in seeds(20):
            st = empirical_coeffs(draw(model, n, sd), basis, j_test)
            hits += _tested_separation(st, j_test, HolderBall(s, B)) > kappa * sig
        return hits / reps >= 1 - alpha / 4

    lo, hi = 0.0, math.floor(sep_max / sig * 16) / 16
    if hi <= 0 or not detected(hi):
        raise ValueError("no admissible bump is detected at this sample size; increase n or B")
    while hi - lo > 1 / 16:
        mid = dyadic_ceil((lo + hi) / 2)
        if mid >= hi:
            break
        if detected(mid):
            hi = mid
        else:
            lo = mid
    L_prime = hi

    consts = BandConstants(L=1.0, L_prime=L_prime, kappa=kappa, C_L=C_L, k=k)
    suite = null_models + [separated_bump(r, s, B, L_prime * sig, j_sep, basis)]
    ratios = []
    for idx, model in enumerate(suite):
        truth = None
        per_model = []
        for sd in seeds(30 + idx):
            band = two_class_band(draw(model, n, sd), r, s, B, alpha, consts, basis)
            if truth is None:
                truth = model_grid(model, band.center.q)
            per_model.append(np.max(np.abs(band.center.values - truth)) / band.half_width)
        ratios.append(_quantile_ceil(per_model, 1 - alpha))
    return replace(consts, L=max(ratios))


def grid_instance(
    grid: GridS, i0: int, B: float, L0: float, n: int, basis: WaveletBasis
) -> DensityModel | None:
    """Bump in Sigma(s_i0) separated from Sigma(s_{i0+1}) by at least L0 r_n(s_i0).

    The bump sits at the level below the one used by test i0 that gives the
    largest separation; None when no admissible bump is separated enough.
    For the last grid point the uniform density is returned.
    """
    points = grid.points
    if i0 == len(points) - 1:
        return uniform(basis)
    s_i, s_next = points[i0], points[i0 + 1]
    j_i = clamp_level(j_star(n, s_i), basis, 60)
    sep, j = max_separation(s_i, s_next, B, range(basis.J0, j_i), basis)
    if j is None or sep < L0 * rate(n, s_i):
        return None
    return separated_bump(s_i, s_next, B, sep, j, basis, name=f"grid_s{s_i:g}")


def calibrate_grid(
    basis: WaveletBasis,
    grid: GridS,
    B: float,
    alpha: float,
    n: int = 2**12,
    reps: int = 400,
    seed: int = 0,
    k: float | None = None,
    C_L: float | None = None,
) -> BandConstants:
    """Calibrate (C_L, L, L0, M) for the grid band at sample size n.

    L: for every test i, the frequency with which a Sigma(s_{i+1}) model
    (uniform, cap bumps at the levels seen by test i) is rejected is at most alpha / (4 (|S| - 1)).
    L0: for every i, a bump separated by L0 r_n(s_i) is rejected by test i
    with frequency at least 1 - alpha/4. M: coverage at least 1 - alpha on
    the suite (uniform, one bump per grid cell and the cap bumps).
    """
    points = grid.points
    levels = [clamp_level(j_star(n, si), basis, 60) for si in points[:-1]]
    ntest = len(levels)
    instances = [grid_instance(grid, i, B, 0.0, n, basis) for i in range(ntest)]
    null_by_test = [
        [uniform(basis)] + [cap_bump(points[i + 1], B, j, basis) for j in range(basis.J0, levels[i])]
        for i in range(ntest)
    ]
    if k is None:
        every = [m for ms in null_by_test for m in ms] + [m for m in instances if m is not None]
        k = max(m.bound for m in every) / B
    kB = k * B
    if C_L is None:
        C_L = calibrate_lepski(basis, grid.r, grid.R, B, k, n=n, reps=reps, seed=seed)

    def seeds(tag):
        return [derive_seed(seed, tag, i, domain=CALIBRATION) for i in range(reps)]

    L = 0.0
    for i, j_i in enumerate(levels):
        sig = sigma(n, j_i, kB)
        stats = []
        for idx, model in enumerate(null_by_test[i]):
            for sd in seeds(100 + 10 * i + idx):
                st = empirical_coeffs(draw(model, n, sd), basis, j_i)
                stats.append(_tested_separation(st, j_i, HolderBall(points[i + 1], B)) / sig)
        L = max(L, _quantile_ceil(stats, 1 - alpha / (4 * ntest)))

    L0 = 0.0
    for i, j_i in enumerate(levels):
        s_i, s_next = points[i], points[i + 1]
        sig = sigma(n, j_i, kB)
        sep_max, j_b = max_separation(s_i, s_next, B, range(basis.J0, j_i), basis)
        rn = rate(n, s_i)

        def detected(l0):
            model = separated_bump(s_i, s_next, B, l0 * rn, j_b, basis)
            hits = 0
            for sd in seeds(200 + i):
                st = empirical_coeffs(draw(model, n, sd), basis, j_i)
                hits += _tested_separation(st, j_i, HolderBall(s_next, B)) > L * sig
            return hits / reps >= 1 - alpha / 4

        lo, hi = 0.0, math.floor(sep_max / rn * 16) / 16
        if hi <= 0 or not detected(hi):
            raise ValueError(f"grid cell {i} cannot be detected at n={n}; increase n or B")
        while hi - lo > 1 / 16:
            mid = dyadic_ceil((lo + hi) / 2)
            if mid >= hi:
                break
            if detected(mid):
                hi = mid
            else:
                lo = mid
        L0 = max(L0, hi)

    consts = BandConstants(L=L, L0=L0, M=1.0, C_L=C_L, k=k)
    caps = {m.name: m for ms in null_by_test for m in ms[1:]}
    suite = [uniform(basis)] + [grid_instance(grid, i, B, L0, n, basis) for i in range(ntest)]
    suite += list(caps.values())
    ratios = []
    for idx, model in enumerate(suite):
        if model is None:
            continue
        truth = None
        per_model = []
        for sd in seeds(300 + idx):
            band = grid_band(draw(model, n, sd), grid, B, consts, basis)
            if truth is None:
                truth = model_grid(model, band.center.q)
            per_model.append(np.max(np.abs(band.center.values - truth)) / band.half_width)
        ratios.append(_quantile_ceil(per_model, 1 - alpha))
    return replace(consts, M=max(ratios))
