"""Periodized Daubechies multiresolution analysis on [0, 1].

Scaling functions and wavelets are tabulated on a dyadic grid by the cascade
algorithm and evaluated by linear interpolation in the table (exact at
tabulated points). Coefficient trees are stored level by level; a flat view
``alpha, beta[J0], beta[J0 + 1], ...`` has the property that its first ``2**j``
entries are exactly the coefficients entering the partial sum ``K_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

# Low-pass filters, normalised to sum to sqrt(2), indexed by number of
# vanishing moments.
DAUBECHIES_FILTERS: dict[int, tuple[float, ...]] = {
    2: (
        0.48296291314453414,
        0.83651630373780791,
        0.22414386804201338,
        -0.12940952255126038,
    ),
    3: (
        0.33267055295008262,
        0.80689150931109258,
        0.45987750211849157,
        -0.13501102001025459,
        -0.085441273882026662,
        0.035226291885709537,
    ),
    4: (
        0.2303778133088965,
        0.71484657055291565,
        0.63088076792985891,
        -0.027983769416859854,
        -0.18703481171909308,
        0.030841381835560764,
        0.0328830116668852,
        -0.010597401785069032,
    ),
    6: (
        0.11154074335010946,
        0.49462389039845309,
        0.75113390802109535,
        0.31525035170919763,
        -0.22626469396543982,
        -0.12976686756726194,
        0.097501605587323049,
        0.027522865530305729,
        -0.03158203931748603,
        0.00055384220116149614,
        0.0047772575109455106,
        -0.0010773010853084796,
    ),
    8: (
        0.05441584224310401,
        0.31287159091429997,
        0.67563073629728981,
        0.58535468365420671,
        -0.015829105256349306,
        -0.28401554296154693,
        0.00047248457391328277,
        0.12874742662047846,
        -0.017369301001807546,
        -0.044088253930794752,
        0.013981027917398282,
        0.0087460940474057767,
        -0.0048703529934515743,
        -0.00039174037337694705,
        0.00067544940645056937,
        -0.00011747678412476953,
    ),
    10: (
        0.026670057900555554,
        0.18817680007769149,
        0.52720118893172559,
        0.68845903945360357,
        0.28117234366057746,
        -0.24984642432731538,
        -0.19594627437737704,
        0.12736934033579326,
        0.093057364603572351,
        -0.071394147166397087,
        -0.029457536821875813,
        0.033212674059341002,
        0.0036065535669561697,
        -0.010733175483330575,
        0.0013953517470529012,
        0.0019924052951850561,
        -0.00068585669495971163,
        -0.00011646685512928545,
        9.3588670320069591e-5,
        -1.3264202894521245e-5,
    ),
}

SUPPORTED_ORDERS = tuple(sorted(DAUBECHIES_FILTERS))


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    """Tabulated periodized Daubechies basis.

    ``phi_table[m]`` and ``psi_table[m]`` hold the values at ``m * 2**-depth``
    for ``m = 0 .. support_len * 2**depth``.
    """

    order: int
    depth: int
    filter: np.ndarray
    phi_table: np.ndarray
    psi_table: np.ndarray
    support_len: int
    J0: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def psi_max(self) -> float:
        return float(np.max(np.abs(self.psi_table)))

    @property
    def psi_overlap_sum(self) -> float:
        """max_x sum_k |psi(x - k)|, read off the table."""
        if "overlap" not in self._cache:
            step = 2**self.depth
            padded = np.zeros(self.support_len * step)
            for o in range(self.support_len):
                padded[: step] += np.abs(self.psi_table[o * step : (o + 1) * step])
            self._cache["overlap"] = float(padded[:step].max())
        return self._cache["overlap"]

    @property
    def c_phi(self) -> float:
        """sup_k |int phi_{J0,k}| for the periodized coarse scaling functions."""
        integral = np.sum(self.phi_table[:-1]) * 2.0**-self.depth
        return float(abs(integral) * 2.0 ** (-self.J0 / 2))

    def _lookup(self, table: np.ndarray, t: np.ndarray) -> np.ndarray:
        # t in [0, support_len]; linear interpolation in the table
        pos = t * 2.0**self.depth
        i = np.floor(pos).astype(np.int64)
        frac = pos - i
        last = table.shape[0] - 1
        i = np.clip(i, 0, last)
        i1 = np.minimum(i + 1, last)
        out = table[i] * (1.0 - frac)
        nz = frac != 0.0
        if np.any(nz):
            out[nz] += table[i1[nz]] * frac[nz]
        return out

    def phi(self, t) -> np.ndarray:
        """Mother scaling function at arbitrary real points (zero off support)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.support_len)
        out = np.zeros_like(t)
        out[inside] = self._lookup(self.phi_table, t[inside])
        return out

    def psi(self, t) -> np.ndarray:
        """Mother wavelet at arbitrary real points (zero off support)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= 0) & (t <= self.support_len)
        out = np.zeros_like(t)
        out[inside] = self._lookup(self.psi_table, t[inside])
        return out

    def level_values(self, x: np.ndarray, level: int, kind: str = "psi"):
        """Nonzero periodized values of all translates at one level.

        Returns ``(k, v)`` arrays of shape ``(support_len, len(x))`` such that
        ``g_{level,k[o, i]}(x[i]) = v[o, i]`` and every other translate
        vanishes at ``x[i]``.
        """
        if level < self.J0:
            raise ValueError(f"level {level} below coarsest level J0={self.J0}")
        table = self.psi_table if kind == "psi" else self.phi_table
        x = np.asarray(x, dtype=float)
        size = 2**level
        t = (x * size) % size
        base = np.floor(t)
        frac = t - base
        base = base.astype(np.int64)
        offsets = np.arange(self.support_len)
        k = (base[None, :] - offsets[:, None]) % size
        arg = frac[None, :] + offsets[:, None]
        v = self._lookup(table, arg.ravel()).reshape(arg.shape) * 2.0 ** (level / 2)
        return k, v

    def function_values(self, x, level: int, k: int, kind: str = "psi") -> np.ndarray:
        """Values of the single periodized function ``psi_{level,k}`` (or phi)."""
        x = np.asarray(x, dtype=float)
        size = 2**level
        if not 0 <= k < size:
            raise ValueError(f"translate {k} out of range for level {level}")
        t = (x * size - k) % size
        mother = self.psi if kind == "psi" else self.phi
        return mother(t) * 2.0 ** (level / 2)

    def support_interval(self, level: int, k: int) -> tuple[float, float]:
        """Support of psi_{level,k} as an interval on the circle, [a, a + len)."""
        return (k / 2**level, self.support_len / 2**level)


def _cascade_phi(h: np.ndarray, depth: int) -> list[np.ndarray]:
    """Scaling function tables at depths 0..depth; finer tables extend coarser ones."""
    length = h.shape[0]
    span = length - 1
    # integer values: eigenvector of the two-scale matrix for eigenvalue 1
    mat = np.zeros((span + 1, span + 1))
    for x in range(span + 1):
        for k in range(length):
            y = 2 * x - k
            if 0 <= y <= span:
                mat[x, y] += np.sqrt(2.0) * h[k]
    w, v = np.linalg.eig(mat)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    vec = vec / vec.sum()
    vec[0] = 0.0
    vec[-1] = 0.0
    tables = [vec]
    for d in range(1, depth + 1):
        prev = tables[-1]
        half = 2 ** (d - 1)
        new = np.zeros(span * 2**d + 1)
        new[::2] = prev
        m = np.arange(1, span * 2**d, 2)
        acc = np.zeros(m.shape[0])
        for k in range(length):
            idx = m - k * half
            ok = (idx >= 0) & (idx <= span * half)
            acc[ok] += h[k] * prev[idx[ok]]
        new[1::2] = np.sqrt(2.0) * acc
        tables.append(new)
    return tables


def build_basis(order: int, depth: int = 12) -> WaveletBasis:
    """Tabulate the Daubechies basis with ``order`` vanishing moments.

    Parameters
    ----------
    order : int
        Number of vanishing moments; one of ``SUPPORTED_ORDERS``.
    depth : int
        Cascade refinement depth; tables live on the grid ``m * 2**-depth``.
    """
    if order not in DAUBECHIES_FILTERS:
        raise ValueError(
            f"unsupported Daubechies order {order}; supported orders: {list(SUPPORTED_ORDERS)}"
        )
    if depth < 6:
        raise ValueError(f"cascade depth must be >= 6, got {depth}")
    h = np.array(DAUBECHIES_FILTERS[order])
    span = h.shape[0] - 1
    phi_table = _cascade_phi(h, depth)[depth]
    g = np.array([(-1) ** k * h[span - k] for k in range(span + 1)])
    m = np.arange(span * 2**depth + 1)
    psi_table = np.zeros(m.shape[0])
    # psi(x) = sqrt2 sum_k g_k phi(2x - k); 2x - k stays on the same dyadic grid
    for k in range(span + 1):
        idx = 2 * m - k * 2**depth
        ok = (idx >= 0) & (idx <= span * 2**depth)
        psi_table[ok] += g[k] * phi_table[idx[ok]]
    psi_table *= np.sqrt(2.0)
    J0 = int(np.ceil(np.log2(span)))
    return WaveletBasis(
        order=order,
        depth=depth,
        filter=h,
        phi_table=phi_table,
        psi_table=psi_table,
        support_len=span,
        J0=J0,
    )


@dataclass(frozen=True)
class GridFunction:
    """Samples at ``m * 2**-q``, ``m = 0 .. 2**q - 1``."""

    values: np.ndarray
    q: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (2**self.q,):
            raise ValueError(f"grid function at resolution {self.q} needs {2**self.q} values")
        object.__setattr__(self, "values", values)

    @property
    def x(self) -> np.ndarray:
        return grid_points(self.q)

    def __sub__(self, other: GridFunction) -> GridFunction:
        if other.q != self.q:
            raise ValueError("resolution mismatch")
        return GridFunction(self.values - other.values, self.q)

    def __add__(self, other: GridFunction) -> GridFunction:
        if other.q != self.q:
            raise ValueError("resolution mismatch")
        return GridFunction(self.values + other.values, self.q)


def grid_points(q: int) -> np.ndarray:
    return np.arange(2**q) / 2.0**q


@dataclass(frozen=True)
class CoeffTree:
    """Scaling coefficients at level J0 and wavelet coefficients up to j_max - 1."""

    J0: int
    j_max: int
    alpha: np.ndarray
    beta: tuple

    def __post_init__(self):
        if self.j_max < self.J0:
            raise ValueError("j_max must be >= J0")
        alpha = np.asarray(self.alpha, dtype=float)
        if alpha.shape != (2**self.J0,):
            raise ValueError(f"alpha must have {2**self.J0} entries")
        beta = tuple(np.asarray(b, dtype=float) for b in self.beta)
        if len(beta) != self.j_max - self.J0:
            raise ValueError("beta must hold one array per level J0 .. j_max - 1")
        for lvl, b in zip(range(self.J0, self.j_max), beta):
            if b.shape != (2**lvl,):
                raise ValueError(f"beta[{lvl}] must have exactly {2**lvl} entries")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    @classmethod
    def zeros(cls, J0: int, j_max: int) -> CoeffTree:
        return cls(J0, j_max, np.zeros(2**J0), tuple(np.zeros(2**l) for l in range(J0, j_max)))

    @classmethod
    def from_flat(cls, flat: np.ndarray, J0: int, j_max: int) -> CoeffTree:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (2**j_max,):
            raise ValueError(f"flat vector must have {2**j_max} entries")
        beta = tuple(flat[2**l : 2 ** (l + 1)] for l in range(J0, j_max))
        return cls(J0, j_max, flat[: 2**J0], beta)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.alpha, *self.beta])

    def level(self, l: int) -> np.ndarray:
        return self.beta[l - self.J0]

    def with_beta(self, l: int, k: int, value: float) -> CoeffTree:
        flat = self.flat()
        flat[2**l + k] = value
        return CoeffTree.from_flat(flat, self.J0, self.j_max)

    def truncate(self, j: int) -> CoeffTree:
        """Coefficients of K_j (levels below j), as a tree with j_max = j."""
        if not self.J0 <= j <= self.j_max:
            raise ValueError(f"truncation level {j} outside [{self.J0}, {self.j_max}]")
        return CoeffTree(self.J0, j, self.alpha, self.beta[: j - self.J0])

    def extend(self, j_max: int) -> CoeffTree:
        """Zero-pad to a deeper tree."""
        if j_max < self.j_max:
            return self.truncate(j_max)
        flat = np.zeros(2**j_max)
        flat[: 2**self.j_max] = self.flat()
        return CoeffTree.from_flat(flat, self.J0, j_max)

    def __sub__(self, other: CoeffTree) -> CoeffTree:
        a, b = _aligned(self, other)
        return CoeffTree.from_flat(a - b, self.J0, max(self.j_max, other.j_max))

    def __add__(self, other: CoeffTree) -> CoeffTree:
        a, b = _aligned(self, other)
        return CoeffTree.from_flat(a + b, self.J0, max(self.j_max, other.j_max))


def _aligned(a: CoeffTree, b: CoeffTree):
    if a.J0 != b.J0:
        raise ValueError("coefficient trees have different coarse levels")
    j = max(a.j_max, b.j_max)
    return a.extend(j).flat(), b.extend(j).flat()


def _synthesis_matrix(basis: WaveletBasis, q: int, j: int) -> sp.csc_matrix:
    """Sparse matrix mapping the flat coefficients below level j to grid samples."""
    key = ("synth", q, j)
    cached = basis._cache.get(key)
    if cached is not None:
        return cached
    # build from the deepest cached matrix at this q when possible
    for jj in range(j + 1, j + 8):
        deeper = basis._cache.get(("synth", q, jj))
        if deeper is not None:
            mat = deeper[:, : 2**j].tocsc()
            basis._cache[key] = mat
            return mat
    x = grid_points(q)
    rows, cols, vals = [], [], []
    npts = x.shape[0]
    k, v = basis.level_values(x, basis.J0, kind="phi")
    rows.append(np.tile(np.arange(npts), basis.support_len))
    cols.append(k.ravel())
    vals.append(v.ravel())
    for lvl in range(basis.J0, j):
        k, v = basis.level_values(x, lvl, kind="psi")
        rows.append(np.tile(np.arange(npts), basis.support_len))
        cols.append(k.ravel() + 2**lvl)
        vals.append(v.ravel())
    mat = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(npts, 2**j),
    )
    mat.eliminate_zeros()
    basis._cache[key] = mat
    return mat


def _gram_factor(basis: WaveletBasis, q: int, j: int):
    key = ("gram", q, j)
    if key not in basis._cache:
        a = _synthesis_matrix(basis, q, j)
        gram = (a.T @ a).tocsc() / 2.0**q
        basis._cache[key] = spla.splu(gram)
    return basis._cache[key]


def analyze(
    f: GridFunction | Callable[[np.ndarray], np.ndarray],
    basis: WaveletBasis,
    j_max: int,
    q: int | None = None,
) -> CoeffTree:
    """Multiresolution coefficients of ``f`` up to level ``j_max``.

    Inner products are computed by the rectangle rule on the ``2**-q`` grid
    (the periodic trapezoidal rule) and then corrected by the sampled Gram
    matrix, so functions in the span up to ``j_max`` are reproduced to
    rounding error.

    Parameters
    ----------
    f : GridFunction or callable
        Samples on the dyadic grid, or a function of ``x`` evaluated on it.
    basis : WaveletBasis
    j_max : int
        Coefficients are returned for levels ``J0 <= l < j_max``.
    q : int, optional
        Quadrature resolution for callables; defaults to ``j_max + 3``.
    """
    if j_max < basis.J0 + 1:
        raise ValueError(f"j_max must exceed J0={basis.J0}")
    if isinstance(f, GridFunction):
        if q is not None and q != f.q:
            raise ValueError("q conflicts with the grid function resolution")
        q = f.q
        values = f.values
    else:
        q = j_max + 3 if q is None else q
        values = np.asarray(f(grid_points(q)), dtype=float)
        if values.shape == ():
            values = np.full(2**q, float(values))
    if j_max > q - 2:
        raise ValueError(f"resolution q={q} too coarse for j_max={j_max} (need j_max <= q - 2)")
    a = _synthesis_matrix(basis, q, j_max)
    raw = a.T @ values / 2.0**q
    flat = _gram_factor(basis, q, j_max).solve(raw)
    return CoeffTree.from_flat(flat, basis.J0, j_max)


def synthesize(c: CoeffTree, j: int, q: int, basis: WaveletBasis) -> GridFunction:
    """Partial sum K_j sampled at ``2**q`` grid points."""
    if not c.J0 < j <= c.j_max:
        raise ValueError(f"synthesis level {j} outside ({c.J0}, {c.j_max}]")
    if c.J0 != basis.J0:
        raise ValueError("coefficient tree does not match the basis")
    a = _synthesis_matrix(basis, q, j)
    return GridFunction(a @ c.flat()[: 2**j], q)


def synthesize_levels(
    c: CoeffTree, levels: Sequence[int], q: int, basis: WaveletBasis
) -> dict[int, np.ndarray]:
    """Detail contributions sum_k beta_lk psi_lk on the grid, one array per level."""
    top = max(levels) + 1
    a = _synthesis_matrix(basis, q, top)
    flat = c.extend(max(top, c.j_max)).flat()
    out = {}
    for lvl in levels:
        sl = slice(2**lvl, 2 ** (lvl + 1))
        out[lvl] = a[:, sl] @ flat[sl]
    return out


def evaluate(c: CoeffTree, x, basis: WaveletBasis, j: int | None = None) -> np.ndarray:
    """Pointwise value of the partial sum K_j at arbitrary points (all levels by default)."""
    x = np.asarray(x, dtype=float)
    j = c.j_max if j is None else j
    k, v = basis.level_values(x, c.J0, kind="phi")
    out = np.sum(c.alpha[k] * v, axis=0)
    for lvl in range(c.J0, j):
        b = c.level(lvl)
        if not np.any(b):
            continue
        k, v = basis.level_values(x, lvl, kind="psi")
        out += np.sum(b[k] * v, axis=0)
    return out


def sup_norm(f: GridFunction) -> float:
    return float(np.max(np.abs(f.values))) if f.values.size else 0.0


def gram_matrix(basis: WaveletBasis, j: int, q: int) -> np.ndarray:
    """Rectangle-rule Gram matrix at resolution 2^-q of the flat basis below level j.

    Translation invariance reduces each level pair to one function against
    the translates overlapping it, so the cost is linear in 2^q.
    """
    if j <= basis.J0:
        raise ValueError(f"need j > J0={basis.J0}")
    size = 2**j
    gram = np.zeros((size, size))
    fams = [("phi", basis.J0, 0)] + [("psi", lvl, 2**lvl) for lvl in range(basis.J0, j)]
    for ia, (kind_a, la, off_a) in enumerate(fams):
        npts = min(basis.support_len * 2 ** (q - la), 2**q)
        x = np.arange(npts) / 2.0**q
        va = basis.function_values(x, la, 0, kind_a)
        for kind_b, lb, off_b in fams[ia:]:
            k, vb = basis.level_values(x, lb, kind_b)
            h = np.bincount(k.ravel(), weights=(va[None, :] * vb).ravel(), minlength=2**lb) / 2.0**q
            for ka in range(2**la):
                shift = ka * 2 ** (lb - la)
                row = np.roll(h, shift)
                gram[off_a + ka, off_b : off_b + 2**lb] = row
                gram[off_b : off_b + 2**lb, off_a + ka] = row
    return gram
