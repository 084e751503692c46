"""Hölder balls described through wavelet coefficient decay.

All norms are computed on a coefficient tree truncated at its ``j_max``;
levels at or above ``j_max`` are unobserved and treated as zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .wavelets import CoeffTree, WaveletBasis, synthesize, sup_norm


@dataclass(frozen=True)
class HolderBall:
    """Ball {f : ||f||_{s,inf} <= B} in the wavelet-coefficient norm."""

    s: float
    B: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValueError(f"smoothness must be positive, got {self.s}")
        if not self.B >= 1:
            raise ValueError(f"radius must be >= 1, got {self.B}")

    def cap(self, level: int) -> float:
        """Largest admissible |beta_lk| at a level."""
        return self.B * 2.0 ** (-level * (self.s + 0.5))


@dataclass(frozen=True)
class SeparationEstimate:
    """Bracket for inf_{g in ball} ||f - g||_inf.

    ``lower`` is the coefficient-level separation sup 2^{l/2}(|beta| - cap);
    since ||psi||_1 exceeds one for Daubechies wavelets, the distance is only
    guaranteed to be at least ``certified = lower / ||psi||_1``. ``upper`` is
    the distance to the coefficientwise projection onto the ball.
    """

    lower: float
    upper: float
    certified: float
    level: int | None = None


def holder_norm(c: CoeffTree, s: float) -> float:
    """max(sup_k |alpha_k|, sup_{l<j_max,k} 2^{l(s+1/2)} |beta_lk|)."""
    norm = float(np.max(np.abs(c.alpha)))
    for lvl, b in zip(range(c.J0, c.j_max), c.beta):
        if b.size:
            norm = max(norm, 2.0 ** (lvl * (s + 0.5)) * float(np.max(np.abs(b))))
    return norm


def project_to_ball(c: CoeffTree, ball: HolderBall) -> CoeffTree:
    """Clip every coefficient into the ball; the closest point coefficientwise."""
    alpha = np.clip(c.alpha, -ball.B, ball.B)
    beta = tuple(
        np.clip(b, -ball.cap(lvl), ball.cap(lvl)) for lvl, b in zip(range(c.J0, c.j_max), c.beta)
    )
    return CoeffTree(c.J0, c.j_max, alpha, beta)


def psi_l1(basis: WaveletBasis) -> float:
    """L1 norm of the mother wavelet, from the table."""
    if "psi_l1" not in basis._cache:
        basis._cache["psi_l1"] = float(np.sum(np.abs(basis.psi_table)) * 2.0**-basis.depth)
    return basis._cache["psi_l1"]


def coefficient_separation(c: CoeffTree, ball: HolderBall, levels: range | None = None):
    """sup over levels of 2^{l/2} (|beta_lk| - cap_l), floored at zero, and its level."""
    best, best_level = 0.0, None
    levels = range(c.J0, c.j_max) if levels is None else levels
    for lvl in levels:
        b = c.level(lvl)
        if not b.size:
            continue
        excess = 2.0 ** (lvl / 2) * (float(np.max(np.abs(b))) - ball.cap(lvl))
        if excess > best:
            best, best_level = excess, lvl
    return best, best_level


def separation_from_ball(
    c: CoeffTree, ball: HolderBall, q: int, basis: WaveletBasis
) -> SeparationEstimate:
    """Lower and upper surrogates for the sup-norm distance from ``c`` to the ball."""
    lower, level = coefficient_separation(c, ball)
    residual = c - project_to_ball(c, ball)
    if c.j_max > c.J0:
        upper = sup_norm(synthesize(residual, c.j_max, q, basis))
    else:
        upper = 0.0
    return SeparationEstimate(
        lower=lower, upper=upper, certified=lower / psi_l1(basis), level=level
    )


def approximation_error(c: CoeffTree, l: int, q: int, basis: WaveletBasis) -> float:
    """||K_l(f) - f||_inf on the grid, with f truncated at the tree's j_max."""
    if l >= c.j_max:
        return 0.0
    tail = CoeffTree.from_flat(
        np.concatenate([np.zeros(2**l), c.flat()[2**l :]]), c.J0, c.j_max
    )
    return sup_norm(synthesize(tail, c.j_max, q, basis))


def in_class_bar_sigma(
    model, eps: float, s: float, l_n: int, l_hi: int, B: float = 1.0, q: int | None = None
) -> bool:
    """Membership in the class of functions with two-sided approximation-error bounds.

    True iff eps 2^{-ls} <= ||K_l f - f||_inf <= B 2^{-ls} for every l in
    [l_n, l_hi], with f truncated at its coefficient tree's j_max and the sup
    taken on the ``2**-q`` grid.
    """
    c = model.exact_coeffs
    if not l_n <= l_hi < c.j_max:
        raise ValueError(f"need l_n <= l_hi < j_max, got {l_n}, {l_hi}, {c.j_max}")
    q = c.j_max + 3 if q is None else q
    for lvl in range(l_n, l_hi + 1):
        err = approximation_error(c, lvl, q, model.basis)
        if not eps * 2.0 ** (-lvl * s) <= err <= B * 2.0 ** (-lvl * s):
            return False
    return True
