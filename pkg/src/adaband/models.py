"""Density families on [0, 1] with exactly known wavelet coefficients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .wavelets import CoeffTree, WaveletBasis, evaluate

KINDS = ("uniform", "bump", "two_bump", "random_series")


@dataclass(frozen=True, eq=False)
class DensityModel:
    """Density given by a finite wavelet series.

    ``bound`` dominates the density everywhere and is the envelope used for
    rejection sampling.
    """

    kind: str
    params: dict
    exact_coeffs: CoeffTree
    bound: float
    basis: WaveletBasis = field(repr=False)

    def pdf(self, x) -> np.ndarray:
        return evaluate(self.exact_coeffs, x, self.basis)

    @property
    def name(self) -> str:
        return self.params.get("name", self.kind)

    def spec(self) -> dict:
        """Key/value description, as written in experiment config files."""
        return {"kind": self.kind, **{k: v for k, v in self.params.items() if k != "name"}}


@dataclass(frozen=True)
class Sample:
    points: np.ndarray
    n: int
    seed: int


def _uniform_tree(basis: WaveletBasis, j_max: int) -> CoeffTree:
    c = CoeffTree.zeros(basis.J0, j_max)
    # periodized phi_{J0,k} integrates to 2^{-J0/2}
    return CoeffTree(basis.J0, j_max, np.full(2**basis.J0, 2.0 ** (-basis.J0 / 2)), c.beta)


def _envelope(c: CoeffTree, basis: WaveletBasis) -> float:
    """1 + sum over levels of a sup bound for that level's detail function."""
    total = 0.0
    for lvl in range(c.J0, c.j_max):
        b = c.level(lvl)
        nnz = int(np.count_nonzero(b))
        if nnz == 0:
            continue
        spread = basis.psi_max if nnz == 1 else basis.psi_overlap_sum
        total += 2.0 ** (lvl / 2) * float(np.max(np.abs(b))) * spread
    return 1.0 + total


def uniform(basis: WaveletBasis, j_max: int | None = None) -> DensityModel:
    j_max = basis.J0 + 1 if j_max is None else j_max
    c = _uniform_tree(basis, j_max)
    return DensityModel("uniform", {}, c, 1.0, basis)


def default_translate(j: int, basis: WaveletBasis) -> int:
    """Translate index whose wavelet sits in the middle of [0, 1]."""
    return max(0, 2 ** (j - 1) - (basis.support_len + 1) // 2)


def max_bump_eps(r: float, j: int, basis: WaveletBasis) -> float:
    """Largest eps keeping 1 + eps 2^{-j(r+1/2)} psi_jm nonnegative."""
    return 2.0 ** (j * r) / basis.psi_max


def make_bump(
    eps: float,
    r: float,
    j: int,
    m: int | None = None,
    basis: WaveletBasis | None = None,
    j_max: int | None = None,
    name: str | None = None,
) -> DensityModel:
    """Uniform density plus one scaled wavelet, 1 + eps 2^{-j(r+1/2)} psi_jm."""
    if basis is None:
        raise ValueError("a wavelet basis is required")
    if j < basis.J0:
        raise ValueError(f"bump level {j} below J0={basis.J0}")
    m = default_translate(j, basis) if m is None else m
    if not 0 <= m < 2**j:
        raise ValueError(f"translate {m} out of range for level {j}")
    limit = max_bump_eps(r, j, basis)
    if abs(eps) > limit * (1 + 1e-12):
        raise ValueError(f"eps={eps} makes the density negative; max admissible eps is {limit:.12g}")
    j_max = max(j + 1, basis.J0 + 1) if j_max is None else j_max
    c = _uniform_tree(basis, j_max).with_beta(j, m, eps * 2.0 ** (-j * (r + 0.5)))
    params = {"eps": eps, "r": r, "j": j, "m": m}
    if name:
        params["name"] = name
    return DensityModel("bump", params, c, _envelope(c, basis), basis)


def _arcs_overlap(a0: float, alen: float, b0: float, blen: float) -> bool:
    # open arcs on the unit circle
    d = (b0 - a0) % 1.0
    if d < alen - 1e-15:
        return True
    d = (a0 - b0) % 1.0
    return d < blen - 1e-15


def make_two_bump(
    B: float,
    s: float,
    j_prime: int,
    m0: int,
    eps: float,
    r: float,
    j: int,
    m: int,
    basis: WaveletBasis,
    j_max: int | None = None,
    name: str | None = None,
) -> DensityModel:
    """f0 + B 2^{-j'(s+1/2)} psi_{j'm0} + eps 2^{-j(r+1/2)} psi_{jm}, disjoint supports."""
    for lvl, k in ((j_prime, m0), (j, m)):
        if lvl < basis.J0 or not 0 <= k < 2**lvl:
            raise ValueError(f"invalid wavelet index ({lvl}, {k})")
    a = basis.support_interval(j_prime, m0)
    b = basis.support_interval(j, m)
    if (j_prime, m0) == (j, m) or _arcs_overlap(a[0], a[1], b[0], b[1]):
        raise ValueError(f"supports of psi_({j_prime},{m0}) and psi_({j},{m}) overlap")
    for amp, lvl, sm in ((B, j_prime, s), (eps, j, r)):
        limit = max_bump_eps(sm, lvl, basis)
        if abs(amp) > limit * (1 + 1e-12):
            raise ValueError(
                f"amplitude {amp} at level {lvl} makes the density negative; max admissible is {limit:.12g}"
            )
    j_max = max(j, j_prime) + 1 if j_max is None else j_max
    c = _uniform_tree(basis, j_max)
    c = c.with_beta(j_prime, m0, B * 2.0 ** (-j_prime * (s + 0.5)))
    c = c.with_beta(j, m, eps * 2.0 ** (-j * (r + 0.5)))
    params = {"B": B, "s": s, "j_prime": j_prime, "m0": m0, "eps": eps, "r": r, "j": j, "m": m}
    if name:
        params["name"] = name
    return DensityModel("two_bump", params, c, _envelope(c, basis), basis)


def prior_min_level(s: float, B: float, basis: WaveletBasis) -> int:
    """Smallest J with B * C_psi * sum_{l>=J} 2^{-ls} < 1, C_psi = support_len * max|psi|."""
    c_psi = basis.support_len * basis.psi_max
    J = basis.J0
    while B * c_psi * 2.0 ** (-J * s) / (1.0 - 2.0**-s) >= 1.0:
        J += 1
    return J


def sample_prior(
    s: float,
    B: float,
    J: int,
    l_max: int,
    seed: int,
    basis: WaveletBasis,
    j_max: int | None = None,
) -> DensityModel:
    """Draw from the uniform random wavelet prior.

    1 + sum_{l=J}^{l_max} sum_k 2^{-l(s+1/2)} u_lk psi_lk with u_lk i.i.d.
    uniform on [-B, B].
    """
    if B < 1:
        raise ValueError("radius B must be >= 1")
    J_min = prior_min_level(s, B, basis)
    if J < J_min:
        raise ValueError(f"J={J} too small for a nonnegative prior draw; minimal J is {J_min}")
    j_max = l_max + 1 if j_max is None else j_max
    if l_max >= j_max:
        raise ValueError("l_max must be below j_max")
    rng = np.random.default_rng(seed)
    flat = _uniform_tree(basis, j_max).flat()
    for lvl in range(J, l_max + 1):
        u = rng.uniform(-B, B, size=2**lvl)
        flat[2**lvl : 2 ** (lvl + 1)] = 2.0 ** (-lvl * (s + 0.5)) * u
    c = CoeffTree.from_flat(flat, basis.J0, j_max)
    params = {"s": s, "B": B, "J": J, "l_max": l_max, "seed": seed}
    return DensityModel("random_series", params, c, _envelope(c, basis), basis)


def make_series(
    s: float,
    amplitude: float,
    J: int,
    l_max: int,
    seed: int,
    basis: WaveletBasis,
    j_max: int | None = None,
    name: str | None = None,
) -> DensityModel:
    """Series with every coefficient at |beta_lk| = amplitude 2^{-l(s+1/2)}, random signs.

    Its approximation error ||K_j f - f||_inf decays exactly like 2^{-js},
    which makes it a hard instance for sup-norm estimation over the ball.
    """
    tail = amplitude * basis.psi_overlap_sum * sum(2.0 ** (-l * s) for l in range(J, l_max + 1))
    if tail >= 1.0:
        raise ValueError(f"amplitude {amplitude} too large for a nonnegative density (sup tail {tail:.4g})")
    j_max = l_max + 1 if j_max is None else j_max
    rng = np.random.default_rng(seed)
    flat = _uniform_tree(basis, j_max).flat()
    for lvl in range(J, l_max + 1):
        signs = rng.choice((-1.0, 1.0), size=2**lvl)
        flat[2**lvl : 2 ** (lvl + 1)] = amplitude * 2.0 ** (-lvl * (s + 0.5)) * signs
    c = CoeffTree.from_flat(flat, basis.J0, j_max)
    params = {"s": s, "amplitude": amplitude, "J": J, "l_max": l_max, "seed": seed, "saturated": True}
    if name:
        params["name"] = name
    return DensityModel("random_series", params, c, _envelope(c, basis), basis)


def draw(model: DensityModel, n: int, seed: int) -> Sample:
    """i.i.d. sample by rejection from the uniform envelope scaled by ``model.bound``."""
    if n < 1:
        raise ValueError("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    if model.kind == "uniform":
        return Sample(rng.random(n), n, seed)
    chunks, got = [], 0
    while got < n:
        batch = int((n - got) * model.bound * 1.1) + 64
        x = rng.random(batch)
        keep = x[rng.random(batch) * model.bound < model.pdf(x)]
        chunks.append(keep)
        got += keep.shape[0]
    return Sample(np.concatenate(chunks)[:n], n, seed)


def model_from_spec(spec: dict, basis: WaveletBasis, j_max: int | None = None) -> DensityModel:
    """Build a model from its key/value description (values may be strings)."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    name = spec.pop("name", None)
    num = {k: float(v) for k, v in spec.items() if k != "saturated"}

    def whole(key):
        v = num[key]
        if v != int(v):
            raise ValueError(f"{key} must be an integer, got {v}")
        return int(v)

    try:
        if kind == "uniform":
            model = uniform(basis, j_max)
        elif kind == "bump":
            m = whole("m") if "m" in num else None
            model = make_bump(num["eps"], num["r"], whole("j"), m, basis, j_max, name)
        elif kind == "two_bump":
            model = make_two_bump(
                num["B"], num["s"], whole("j_prime"), whole("m0"), num["eps"], num["r"],
                whole("j"), whole("m"), basis, j_max, name,
            )
        elif kind == "random_series":
            if str(spec.get("saturated", "false")).lower() in ("1", "true", "yes"):
                model = make_series(
                    num["s"], num["amplitude"], whole("J"), whole("l_max"), whole("seed"),
                    basis, j_max, name,
                )
            else:
                model = sample_prior(
                    num["s"], num["B"], whole("J"), whole("l_max"), whole("seed"), basis, j_max
                )
        else:
            raise ValueError(f"unknown model kind {kind!r}; expected one of {KINDS}")
    except KeyError as exc:
        raise ValueError(f"model of kind {kind!r} is missing parameter {exc.args[0]!r}") from None
    if name and "name" not in model.params:
        model.params["name"] = name
    return model
