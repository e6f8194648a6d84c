"""Dominant joint types of a code and the conditional-independence admissibility test.

A joint type P_XY is admissible at rates (R_X, R_Y) when it can be written as
a mixture of product laws, ``P_XY = sum_u p(u) P_X|u P_Y|u``, with
H(X|U) >= R_X and H(Y|U) >= R_Y. The decomposition set is not convex, so
:func:`u_feasible` runs a witness search and only ever reports "found" with a
re-verified witness or "not found at this resolution"; it never proves
infeasibility.

The search fixes one side's components to a rational grid (plus a few
canonical candidates). With those held fixed the other side is a concave
maximization over a polytope, solved as an exponential-cone program; a final
LP on the mixture weights trims the support to at most |X||Y| + 1 components.
"""
from __future__ import annotations

import functools
import math
from collections import Counter
from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .errors import InvalidCodeError, ValidationError
from .macchannel import MultiUserCode, is_good_code
from .probkit import CondPmf, JointPmf, Pmf, _h
from .regions import RatePair
from .typeclasses import compositions, enumerate_joint_types, joint_type_of, num_compositions

ENTROPY_TOL = 1e-6
RECON_TOL = 1e-4
LN2 = math.log(2.0)


# ---------------------------------------------------------------------------
# dominant type


@dataclass(frozen=True, eq=False)
class DominantTypeReport:
    counts: dict       # JointType -> number of codeword pairs of that joint type
    rates: dict        # JointType -> (1/n) log2 count
    argmax: object     # JointType
    argmax_rate: float
    code_rate: float   # R_X + R_Y
    num_types: int     # |P_n(X × Y)|
    pigeonhole_bound: float

    @property
    def gap(self) -> float:
        return self.code_rate - self.argmax_rate


def dominant_type(code: MultiUserCode, alphabet_x=None, alphabet_y=None) -> DominantTypeReport:
    """Exact pair counts per joint type; the argmax is the dominant type.

    Alphabets default to the symbols used by the code. Ties go to the
    lexicographically smallest flattened count vector.
    """
    if not is_good_code(code):
        raise InvalidCodeError("dominant_type needs a good code; repair it first")
    ax = tuple(alphabet_x) if alphabet_x is not None else tuple(
        sorted({s for c in code.codebook_x for s in c}, key=repr))
    ay = tuple(alphabet_y) if alphabet_y is not None else tuple(
        sorted({s for c in code.codebook_y for s in c}, key=repr))
    counts = Counter(joint_type_of(x, y, ax, ay)
                     for x in code.codebook_x for y in code.codebook_y)
    n = code.n
    rates = {t: math.log2(c) / n for t, c in counts.items()}
    top = max(counts.values())
    argmax = min((t for t, c in counts.items() if c == top), key=lambda t: t.flat_counts)
    num_types = num_compositions(n, len(ax) * len(ay))
    code_rate = sum(code.rates)
    return DominantTypeReport(dict(counts), rates, argmax, rates[argmax], code_rate,
                              num_types, code_rate - math.log2(num_types) / n)


# ---------------------------------------------------------------------------
# U-decompositions


@dataclass(frozen=True, eq=False)
class UDecomposition:
    """P_XY ≈ sum_u weights[u] · px_given_u[u] ⊗ py_given_u[u]."""

    weights: Pmf
    px_given_u: CondPmf
    py_given_u: CondPmf
    target: np.ndarray

    def mixture(self) -> np.ndarray:
        return np.einsum("u,ux,uy->xy", self.weights.weights, self.px_given_u.matrix,
                         self.py_given_u.matrix)

    @property
    def reconstruction_error(self) -> float:
        """Total variation distance between the mixture and the target."""
        return 0.5 * float(np.abs(self.mixture() - self.target).sum())

    @property
    def h_x_given_u(self) -> float:
        return float(sum(p * _h(r) for p, r in zip(self.weights.weights, self.px_given_u.matrix)))

    @property
    def h_y_given_u(self) -> float:
        return float(sum(p * _h(r) for p, r in zip(self.weights.weights, self.py_given_u.matrix)))

    @property
    def size(self) -> int:
        return len(self.weights)

    def joint(self, alphabet_x, alphabet_y) -> JointPmf:
        """The full P_UXY (X and Y independent given U by construction)."""
        w = np.einsum("u,ux,uy->uxy", self.weights.weights, self.px_given_u.matrix,
                      self.py_given_u.matrix)
        return JointPmf(("U", "X", "Y"), (self.weights.alphabet, tuple(alphabet_x),
                                          tuple(alphabet_y)), w)

    def satisfies(self, r: RatePair, u_cap: int) -> bool:
        return (self.size <= u_cap
                and self.reconstruction_error <= RECON_TOL
                and self.h_x_given_u >= r.r_x - ENTROPY_TOL
                and self.h_y_given_u >= r.r_y - ENTROPY_TOL)


def _decomposition(weights, ax, by, target, alph_x=None, alph_y=None) -> UDecomposition:
    weights = np.asarray(weights, dtype=float)
    keep = weights > 1e-12
    weights, ax, by = weights[keep], np.asarray(ax)[keep], np.asarray(by)[keep]
    weights = weights / weights.sum()
    ax = ax / ax.sum(axis=1, keepdims=True)
    by = by / by.sum(axis=1, keepdims=True)
    labels = tuple(range(len(weights)))
    alph_x = alph_x or tuple(range(ax.shape[1]))
    alph_y = alph_y or tuple(range(by.shape[1]))
    return UDecomposition(Pmf(labels, weights), CondPmf(labels, alph_x, ax),
                          CondPmf(labels, alph_y, by), np.asarray(target, dtype=float))


def canonical_decompositions(p: np.ndarray) -> list:
    """U constant (products only), U = X, U = Y and U = (X, Y)."""
    nx, ny = p.shape
    out = []
    px, py = p.sum(axis=1), p.sum(axis=0)
    if 0.5 * np.abs(np.outer(px, py) - p).sum() <= RECON_TOL:
        out.append(_decomposition([1.0], [px], [py], p))
    ex, ey = np.eye(nx), np.eye(ny)
    xs = np.flatnonzero(px > 0)
    out.append(_decomposition(px[xs], ex[xs], p[xs] / px[xs, None], p))
    ys = np.flatnonzero(py > 0)
    out.append(_decomposition(py[ys], (p[:, ys] / py[ys]).T, ey[ys], p))
    cells = np.argwhere(p > 0)
    out.append(_decomposition(p[p > 0], ex[cells[:, 0]], ey[cells[:, 1]], p))
    return out


@functools.lru_cache(maxsize=None)
def _program(nx: int, ncomp: int, ny: int):
    """Compiled program: maximize H(X|U) given fixed Y-components B (ncomp x ny)."""
    c = cp.Variable((nx, ncomp), nonneg=True)
    Bm = cp.Parameter((ncomp, ny), nonneg=True)
    hb = cp.Parameter(ncomp, nonneg=True)
    target = cp.Parameter((nx, ny), nonneg=True)
    r_y = cp.Parameter(nonneg=True)
    pu = cp.sum(c, axis=0)
    spread = np.ones((nx, 1)) @ cp.reshape(pu, (1, ncomp), order="C")
    objective = cp.Maximize(-cp.sum(cp.rel_entr(c, spread)))
    cons = [c @ Bm == target, hb @ pu >= r_y]
    return cp.Problem(objective, cons), c, Bm, hb, target, r_y


def _grid_components(k: int, resolution: int) -> np.ndarray:
    return np.array(list(compositions(resolution, k)), dtype=float) / resolution


def _one_sided(p: np.ndarray, r_other: float, resolution: int):
    """Best H(X|U) with Y-components restricted to a grid; returns a decomposition or None."""
    nx, ny = p.shape
    py = p.sum(axis=0)
    px = p.sum(axis=1)
    comps = [_grid_components(ny, resolution), py[None]]
    rows = px > 0
    comps.append(p[rows] / px[rows, None])
    B = np.unique(np.round(np.concatenate(comps), 15), axis=0)
    hb = np.array([_h(b) for b in B])
    prob, c, Bm, hbp, target, r_y = _program(nx, len(B), ny)
    Bm.value, hbp.value, target.value, r_y.value = B, hb, p, max(r_other, 0.0)
    try:
        prob.solve(solver=cp.CLARABEL)
    except cp.error.SolverError:
        return None
    if prob.status not in ("optimal", "optimal_inaccurate") or c.value is None:
        return None
    cv = np.maximum(c.value, 0.0)
    pu = cv.sum(axis=0)
    used = pu > 1e-10
    A = cv[:, used] / pu[used]
    Bu = B[used]
    # components frozen: thin the support without changing the mixture or H(Y|U)
    ha = np.array([_h(a) for a in A.T])
    outer = np.einsum("xu,uy->xyu", A, Bu).reshape(-1, used.sum())
    weights = _reduce_support(pu[used], np.vstack([outer, hb[used][None]]), ha)
    return _decomposition(weights, A.T, Bu, p)


def _reduce_support(w: np.ndarray, M: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Caratheodory step: drop weights along null directions of M, never lowering gain·w.

    Leaves at most rank(M) nonzero weights with M @ w unchanged.
    """
    w = np.array(w, dtype=float)
    while True:
        s = np.flatnonzero(w > 0)
        Ms = M[:, s]
        _, sv, vt = np.linalg.svd(Ms)
        rank = int((sv > 1e-12 * max(sv[0], 1.0)).sum())
        if len(s) <= rank:
            return w
        d = vt[-1]
        if gain[s] @ d < 0:
            d = -d
        neg = d < -1e-15
        if not neg.any():  # cannot happen: M's mixture rows force sum(d) = 0
            return w
        ratios = w[s][neg] / -d[neg]
        k = int(np.argmin(ratios))
        w[s] = np.maximum(w[s] + ratios[k] * d, 0.0)
        w[s[np.flatnonzero(neg)[k]]] = 0.0


def _transpose(d: UDecomposition, target) -> UDecomposition:
    return _decomposition(d.weights.weights, d.py_given_u.matrix, d.px_given_u.matrix, target)


_cache: dict = {}


def u_feasible(p_xy, r, u_cap: int, resolution: int = 16):
    """Search for a U-decomposition of P_XY meeting both conditional-entropy rates.

    Returns ``(True, UDecomposition)`` with a re-verified witness, or
    ``(False, None)`` meaning no witness was found at this resolution.
    """
    p = np.asarray(p_xy.weights if isinstance(p_xy, JointPmf) else p_xy, dtype=float)
    if p.ndim != 2 or abs(p.sum() - 1) > 1e-9 or np.any(p < 0):
        raise ValidationError("p_xy must be a 2-D probability table")
    r = r if isinstance(r, RatePair) else RatePair(*r)
    if u_cap < 1:
        raise ValidationError("u_cap must be >= 1")
    key = (p.tobytes(), p.shape, r.r_x, r.r_y, u_cap, resolution)
    if key in _cache:
        return _cache[key]
    found = _search(p, r, u_cap, resolution)
    _cache[key] = found
    return found


def _search(p, r, u_cap, resolution):
    nx, ny = p.shape
    h_x, h_y = _h(p.sum(axis=1)), _h(p.sum(axis=0))
    if r.r_x > h_x + ENTROPY_TOL or r.r_y > h_y + ENTROPY_TOL:
        return False, None  # H(X|U) <= H(X)
    for d in canonical_decompositions(p):
        if d.satisfies(r, u_cap):
            return True, d
    d = _one_sided(p, r.r_y, resolution)
    if d is not None and d.satisfies(r, u_cap):
        return True, d
    d = _one_sided(p.T.copy(), r.r_x, resolution)
    if d is not None:
        d = _transpose(d, p)
        if d.satisfies(r, u_cap):
            return True, d
    return False, None


def admissible_types(alphabet_x, alphabet_y, n: int, r, u_cap: int, resolution: int = 16,
                     cap: int | None = None) -> list:
    """Joint types of denominator n that pass :func:`u_feasible` at rates r."""
    r = r if isinstance(r, RatePair) else RatePair(*r)
    out = []
    for t in enumerate_joint_types(alphabet_x, alphabet_y, n, cap):
        ok, _ = u_feasible(t.array(), r, u_cap, resolution)
        if ok:
            out.append(t)
    return out
