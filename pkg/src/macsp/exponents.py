"""Sphere-packing exponents of a two-user DM-MAC.

The inner problem is ``min_V D(V || W | P)`` over test channels V obeying a
rate constraint on one of three mutual-information functionals:

* ``"x"``:  I_V(X ∧ Z | Y) <= R_X
* ``"y"``:  I_V(Y ∧ Z | X) <= R_Y
* ``"xy"``: I_V(XY ∧ Z) <= R_X + R_Y

and ``"union"`` takes the smallest of the three. Each single family is a
convex program. Writing the functional as ``sum_k P_k D(V_k || Q_g(k))``
(rows k = (x, y) grouped by the conditioning variable, Q_g the group's output
mixture), the Lagrangian with weight ``s / (1 - s)`` on the constraint is
minimized by alternating

    V_k ∝ W_k^(1-s) Q_g^s,       Q_g = mixture of the V_k in g,

and the multiplier is found by a bracketed root search on ``I(V_s) = R``.
At R = 0 the solution is the normalized geometric mean of each group's rows.

Outer maximizations over input distributions are done on rational grids.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .macchannel import Mac
from .probkit import INF, CondPmf, JointPmf, Pmf
from .regions import RatePair
from .typeclasses import compositions

FAMILIES = ("x", "y", "xy")

INNER_TOL = 1e-14
INNER_MAXITER = 20000
ROOT_TOL = 1e-11
ROOT_MAXITER = 200
T_MAX = 50.0


@dataclass(frozen=True)
class VBadSpec:
    rates: RatePair
    family: str = "union"

    def __post_init__(self):
        if self.family not in FAMILIES + ("union",):
            raise ValidationError(f"unknown constraint family {self.family!r}")
        if not isinstance(self.rates, RatePair):
            object.__setattr__(self, "rates", RatePair(*self.rates))

    def bound(self, family=None) -> float:
        fam = family or self.family
        r = self.rates
        return {"x": r.r_x, "y": r.r_y, "xy": r.r_x + r.r_y}[fam]


@dataclass(frozen=True, eq=False)
class ExponentResult:
    value: float
    arg_distribution: JointPmf | None
    arg_channel: CondPmf | None
    family: str | None = None
    diagnostics: dict = field(default_factory=dict)
    vacuous: bool = False
    decomposition: object = None

    def __float__(self):
        return float(self.value)


# ---------------------------------------------------------------------------
# batched single-family solver


def _groups(shape, family) -> np.ndarray:
    nx, ny = shape
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    if family == "xy":
        return np.zeros(nx * ny, dtype=int)
    if family == "x":  # conditioned on Y
        return ys.ravel()
    if family == "y":  # conditioned on X
        return xs.ravel()
    raise ValidationError(f"unknown family {family!r}")


def _xlogy_rows(v, q):
    """sum_z v log2(v / q) per row, with 0 log 0 = 0 and +inf on support violations."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(v > 0, v * (np.log2(np.where(v > 0, v, 1.0)) - np.log2(q)), 0.0)
    return t.sum(axis=-1)


class _Family:
    """Rows, groups and weights of one constraint family for a batch of P's."""

    def __init__(self, W: np.ndarray, P: np.ndarray, family: str):
        nx, ny, nz = W.shape
        self.Wk = W.reshape(nx * ny, nz)
        self.g = _groups((nx, ny), family)
        self.G = int(self.g.max()) + 1
        self.p = P.reshape(P.shape[0], nx * ny)  # (B, K)
        self.onehot = (self.g[:, None] == np.arange(self.G)[None, :]).astype(float)  # (K, G)
        self.pg = self.p @ self.onehot  # (B, G)

    def mixture(self, V):
        # Q[b, g, z] = sum_{k in g} p_k V_k / p_g
        num = np.einsum("bk,kg,bkz->bgz", self.p, self.onehot, V)
        with np.errstate(invalid="ignore", divide="ignore"):
            Q = num / self.pg[:, :, None]
        return np.where(self.pg[:, :, None] > 0, Q, 1.0 / V.shape[-1])

    def divergence(self, V):
        d = _xlogy_rows(V, self.Wk[None])
        return np.where(self.p > 0, self.p * np.where(np.isinf(d), 0.0, d), 0.0).sum(axis=1) + \
            np.where(((self.p > 0) & np.isinf(d)).any(axis=1), INF, 0.0)

    def info(self, V):
        Q = self.mixture(V)
        d = _xlogy_rows(V, Q[:, self.g, :])
        val = np.where(self.p > 0, self.p * np.nan_to_num(d, posinf=0.0), 0.0).sum(axis=1)
        return np.maximum(val, 0.0)

    def tilt(self, s, Q):
        """V_k ∝ W_k^(1-s) Q_g^s for a batch of s values (B,)."""
        s = s[:, None, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            logv = (1 - s) * np.log(np.where(self.Wk[None] > 0, self.Wk[None], 1.0)) \
                + s * np.log(np.where(Q[:, self.g, :] > 0, Q[:, self.g, :], 1.0))
        mask = (self.Wk[None] > 0) & (Q[:, self.g, :] > 0)
        logv = np.where(mask, logv, -np.inf)
        m = logv.max(axis=-1, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        v = np.exp(logv - m)
        tot = v.sum(axis=-1, keepdims=True)
        return np.where(tot > 0, v / np.where(tot > 0, tot, 1.0), self.Wk[None])

    def solve_at(self, s, Q):
        """Alternate the tilt and mixture steps to a fixed point; returns V, Q, iterations."""
        it = 0
        V = self.tilt(s, Q)
        for it in range(1, INNER_MAXITER + 1):
            Qn = self.mixture(V)
            delta = np.abs(Qn - Q).max()
            Q = Qn
            V = self.tilt(s, Q)
            if delta < INNER_TOL:
                break
        return V, Q, it

    def geometric_limit(self):
        """R = 0 solution: every group shares one row, the normalized geometric mean."""
        with np.errstate(divide="ignore"):
            logw = np.log2(self.Wk)  # (K, Z)
        B = self.p.shape[0]
        nz = self.Wk.shape[1]
        V = np.empty((B, len(self.g), nz))
        value = np.zeros(B)
        for gi in range(self.G):
            rows = self.g == gi
            w_in = self.p[:, rows]  # (B, kg)
            pg = self.pg[:, gi]
            with np.errstate(invalid="ignore", divide="ignore"):
                safe = np.where(pg[:, None] > 0, pg[:, None], 1)
                frac = np.where(pg[:, None] > 0, w_in / safe, 0)
                # exponent sum_k frac_k log w_k, where frac_k = 0 rows are ignored
                ex = np.einsum("bk,kz->bz", frac, np.where(np.isinf(logw[rows]), 0.0, logw[rows]))
                dead = ((frac[:, :, None] > 0) & np.isinf(logw[rows])[None]).any(axis=1)
            geo = np.where(dead, 0.0, np.exp2(ex))
            zsum = geo.sum(axis=1)
            with np.errstate(divide="ignore"):
                contrib = np.where(pg > 0, -pg * np.log2(np.where(zsum > 0, zsum, 1.0)), 0.0)
            contrib = np.where((pg > 0) & (zsum <= 0), INF, contrib)
            value += contrib
            row = np.where(zsum[:, None] > 0, geo / np.where(zsum > 0, zsum, 1.0)[:, None],
                           1.0 / nz)
            V[:, rows, :] = row[:, None, :]
        return V, value

    def _restrict(self, ind, Q):
        V = ind[None] * Q[:, self.g, :]
        tot = V.sum(axis=-1, keepdims=True)
        return np.where(tot > 0, V / np.where(tot > 0, tot, 1.0), self.Wk[None])

    def support_limit(self):
        """Minimal functional value among channels V << W (s -> 1 with finite divergence)."""
        B = self.p.shape[0]
        ind = (self.Wk > 0).astype(float)
        Q = self.mixture(np.broadcast_to(self.Wk, (B,) + self.Wk.shape).copy())
        for _ in range(INNER_MAXITER):
            V = self._restrict(ind, Q)
            Qn = self.mixture(V)
            if np.abs(Qn - Q).max() < INNER_TOL:
                Q = Qn
                break
            Q = Qn
        V = self._restrict(ind, Q)
        return self.info(V)


def _solve_family(W: np.ndarray, P: np.ndarray, R: np.ndarray, family: str):
    """Solve one family for a batch of input distributions P (B, X, Y) and bounds R (B,).

    Returns values (B,), V (B, X, Y, Z) and a diagnostics dict of arrays.
    """
    fam = _Family(W, P, family)
    B = P.shape[0]
    K, nz = fam.Wk.shape
    W_b = np.broadcast_to(fam.Wk, (B, K, nz))
    V_out = np.array(W_b)
    value = np.zeros(B)
    s_out = np.zeros(B)
    iters = np.zeros(B, dtype=int)
    I_W = fam.info(W_b)
    active = I_W > R
    # closed-form endpoint at R = 0
    zero_rate = active & (R <= 0)
    if zero_rate.any():
        Vg, vg = _Family(W, P[zero_rate], family).geometric_limit()
        V_out[zero_rate] = Vg
        value[zero_rate] = vg
        s_out[zero_rate] = 1.0
    todo = np.flatnonzero(active & (R > 0))
    if todo.size:
        sub = _Family(W, P[todo], family)
        Rt = R[todo]
        # rate below what any V << W can reach -> infinite exponent
        _, vg = sub.geometric_limit()
        floor = np.zeros(todo.size)
        hard = ~np.isfinite(vg)
        if hard.any():
            floor[hard] = _Family(W, P[todo][hard], family).support_limit()
        impossible = Rt < floor - ROOT_TOL
        if impossible.any():
            idx = todo[impossible]
            V_out[idx] = 1.0 / nz
            value[idx] = INF
            s_out[idx] = 1.0
        keep = ~impossible
        if keep.any():
            idx = todo[keep]
            v, V, s, it = _root_search(_Family(W, P[idx], family), R[idx])
            V_out[idx] = V
            value[idx] = v
            s_out[idx] = s
            iters[idx] = it
    # rows carrying no weight are reported as W itself
    pk = P.reshape(B, K)
    V_out = np.where(pk[:, :, None] > 0, V_out, W_b)
    info = _Family(W, P, family).info(V_out)
    return value, V_out.reshape(P.shape + (nz,)), {
        "s": s_out, "iterations": iters, "constraint": info, "I_W": I_W}


def _root_search(fam: _Family, R: np.ndarray):
    """Find s with I(V_s) = R (Illinois regula falsi on t, s = 1 - 2^-t), feasible side."""
    B = R.size
    Q0 = fam.mixture(np.broadcast_to(fam.Wk, (B,) + fam.Wk.shape).copy())
    t_lo = np.zeros(B)
    f_lo = fam.info(np.broadcast_to(fam.Wk, (B,) + fam.Wk.shape)) - R  # > 0
    t_hi = np.ones(B)
    total_it = np.zeros(B, dtype=int)
    Q = Q0
    # expand until the constraint holds
    while True:
        s = 1 - np.exp2(-t_hi)
        V, Q, it = fam.solve_at(s, Q)
        total_it += it
        f_hi = fam.info(V) - R
        bad = f_hi > 0
        if not bad.any() or t_hi.max() >= T_MAX:
            break
        t_lo = np.where(bad, t_hi, t_lo)
        f_lo = np.where(bad, f_hi, f_lo)
        t_hi = np.where(bad, np.minimum(2 * t_hi, T_MAX), t_hi)
    V_hi, Q_hi = V, Q
    side = np.zeros(B, dtype=int)
    for _ in range(ROOT_MAXITER):
        done = (f_hi <= 0) & (f_hi > -ROOT_TOL) | (t_hi - t_lo < 1e-13)
        if done.all():
            break
        denom = f_lo - f_hi
        t_new = np.where(denom > 0, t_hi + f_hi * (t_hi - t_lo) / np.where(denom > 0, denom, 1),
                         0.5 * (t_lo + t_hi))
        t_new = np.clip(t_new, t_lo + 1e-3 * (t_hi - t_lo), t_hi - 1e-3 * (t_hi - t_lo))
        t_new = np.where(done, t_hi, t_new)
        s = 1 - np.exp2(-t_new)
        V, Q, it = fam.solve_at(s, np.where(done[:, None, None], Q_hi, Q_hi))
        total_it += np.where(done, 0, it)
        f_new = fam.info(V) - R
        feas = (f_new <= 0) & ~done
        infeas = (f_new > 0) & ~done
        # Illinois: halve the stale endpoint's residual when the same side repeats
        f_lo = np.where(feas & (side == 1), 0.5 * f_lo, f_lo)
        f_hi = np.where(infeas & (side == -1), 0.5 * f_hi, f_hi)
        t_hi = np.where(feas, t_new, t_hi)
        t_lo = np.where(infeas, t_new, t_lo)
        f_lo = np.where(infeas, f_new, f_lo)
        V_hi = np.where(feas[:, None, None], V, V_hi)
        Q_hi = np.where(feas[:, None, None], Q, Q_hi)
        f_hi = np.where(feas, f_new, f_hi)
        side = np.where(feas, 1, np.where(infeas, -1, side))
    value = fam.divergence(V_hi)
    return value, V_hi, 1 - np.exp2(-t_hi), total_it


# ---------------------------------------------------------------------------
# public API


def _as_array(p_xy, w: Mac) -> np.ndarray:
    if isinstance(p_xy, JointPmf):
        if p_xy.alphabets != (w.X, w.Y):
            raise ValidationError("P_XY alphabets do not match the channel inputs")
        arr = np.array(p_xy.weights)
    else:
        arr = np.asarray(p_xy, dtype=float)
    if arr.shape != (len(w.X), len(w.Y)):
        raise ValidationError(f"P_XY must have shape {(len(w.X), len(w.Y))}")
    if np.any(arr < 0) or abs(arr.sum() - 1) > 1e-9:
        raise ValidationError("P_XY must be a probability table")
    return arr


def _joint(w: Mac, arr) -> JointPmf:
    return JointPmf(("X", "Y"), (w.X, w.Y), arr)


def _channel(w: Mac, V: np.ndarray) -> CondPmf:
    ins = tuple(itertools.product(w.X, w.Y))
    m = V.reshape(len(ins), len(w.Z))
    m = m / m.sum(axis=1, keepdims=True)
    return CondPmf(ins, w.Z, m)


def input_pmf(p_xy: JointPmf | np.ndarray, w: Mac) -> Pmf:
    """P_XY as a Pmf over input pairs, matching ``Mac.transition``'s rows."""
    arr = _as_array(p_xy, w)
    return Pmf(tuple(itertools.product(w.X, w.Y)), arr.ravel())


def channel_info(w: Mac, p_xy, v: CondPmf) -> dict:
    """I_V for the three families under P_XY · V, computed directly (not via the solver)."""
    arr = _as_array(p_xy, w)
    V = np.asarray(v.matrix).reshape(w.W.shape)
    out = {}
    for fam in FAMILIES:
        out[fam] = float(_Family(V, arr[None], fam).info(V.reshape(1, -1, len(w.Z)))[0])
    return out


def inner_min(w: Mac, p_xy, spec: VBadSpec) -> ExponentResult:
    """min D(V || W | P_XY) over the V's of one constraint family (or their union)."""
    arr = _as_array(p_xy, w)
    fams = FAMILIES if spec.family == "union" else (spec.family,)
    best = None
    per_family = {}
    for fam in fams:
        R = np.array([spec.bound(fam)])
        val, V, diag = _solve_family(w.W, arr[None], R, fam)
        per_family[fam] = float(val[0])
        cand = (float(val[0]), fam, V[0], {k: float(d[0]) for k, d in diag.items()})
        if best is None or cand[0] < best[0]:
            best = cand
        if cand[0] == 0.0:
            break
    value, fam, V, diag = best
    diag["family_values"] = per_family
    s = diag["s"]
    diag["multiplier"] = INF if s >= 1 else s / (1 - s)
    slack = max(spec.bound(fam) - diag["constraint"], 0.0)
    gap = 0.0 if s >= 1 or value == 0 else diag["multiplier"] * slack
    diag["duality_gap"] = gap
    return ExponentResult(value, _joint(w, arr), _channel(w, V), fam, diag)


def sp_fixed_type(w: Mac, r, p_xy) -> ExponentResult:
    """Fixed-dominant-type sphere-packing exponent: inner_min over the union family."""
    return inner_min(w, p_xy, VBadSpec(RatePair(*r) if not isinstance(r, RatePair) else r))


def union_values(w: Mac, r: RatePair, P: np.ndarray):
    """Union-family exponent for a batch P (B, X, Y); returns values, family index, V."""
    B = P.shape[0]
    vals = np.full(B, INF)
    which = np.zeros(B, dtype=int)
    Vs = np.zeros(P.shape + (len(w.Z),))
    for fi, fam in enumerate(FAMILIES):
        R = np.full(B, VBadSpec(r).bound(fam))
        # families already at zero need no more work
        todo = np.flatnonzero(vals > 0)
        if not todo.size:
            break
        v, V, _ = _solve_family(w.W, P[todo], R[todo], fam)
        better = (v < vals[todo]) | (fi == 0)
        idx = todo[better]
        vals[idx] = v[better]
        which[idx] = fi
        Vs[idx] = V[better]
    return vals, which, Vs


def joint_grid(w: Mac, resolution: int) -> np.ndarray:
    """All P_XY with entries in (1/resolution)·Z, lexicographic in the count vector."""
    if resolution < 1:
        raise ValidationError("resolution must be >= 1")
    nx, ny = len(w.X), len(w.Y)
    pts = np.array(list(compositions(resolution, nx * ny)), dtype=float) / resolution
    return pts.reshape(-1, nx, ny)


def _refine_points(center: np.ndarray, resolution: int) -> np.ndarray:
    """Points of the 2·resolution grid within max-norm 1/resolution of ``center``."""
    base = np.rint(center.ravel() * 2 * resolution).astype(int)
    k = base.size
    pts = []
    for off in itertools.product(range(-2, 3), repeat=k - 1):
        last = -sum(off)
        c = base + np.array(off + (last,))
        if abs(last) <= 2 and np.all(c >= 0):
            pts.append(c)
    return np.array(pts, dtype=float).reshape((-1,) + center.shape) / (2 * resolution)


@functools.lru_cache(maxsize=64)
def _grid_values(w: Mac, r_x: float, r_y: float, resolution: int):
    P = joint_grid(w, resolution)
    vals, which, V = union_values(w, RatePair(r_x, r_y), P)
    for a in (P, vals, which, V):
        a.setflags(write=False)
    return P, vals, which, V


def _pick(vals: np.ndarray, allowed: np.ndarray | None = None) -> int | None:
    v = vals if allowed is None else np.where(allowed, vals, -1.0)
    if allowed is not None and not allowed.any():
        return None
    best = v.max()
    if math.isinf(best):
        return int(np.flatnonzero(v == best)[0])
    return int(np.flatnonzero(v >= best - 1e-12)[0])


def _result_at(w, r, P, val, fam_idx, V, diag) -> ExponentResult:
    return ExponentResult(float(val), _joint(w, P), _channel(w, V), FAMILIES[fam_idx], diag)


def sp_thm4(w: Mac, r, resolution: int = 8, refine: bool = False) -> ExponentResult:
    """max over grid P_XY of the fixed-type exponent (no admissibility constraint).

    The grid value is an inner approximation of the true maximum and is
    nondecreasing along nested grids (resolution k vs 2k). ``refine`` adds the
    2·resolution grid points around the best grid point; that pass depends on
    the rate and so can break exact rate monotonicity.
    """
    r = r if isinstance(r, RatePair) else RatePair(*r)
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    P, vals, which, V = _grid_values(w, r.r_x, r.r_y, resolution)
    i = _pick(vals)
    diag = {"resolution": resolution, "grid_points": len(P), "refined": False}
    best = (vals[i], P[i], which[i], V[i])
    if refine and vals[i] > 0 and np.isfinite(vals[i]):
        Pr = _refine_points(P[i], resolution)
        rv, rw, rV = union_values(w, r, Pr)
        j = _pick(rv)
        diag["refined"] = True
        diag["refine_points"] = len(Pr)
        if rv[j] > best[0] + 1e-12:
            best = (rv[j], Pr[j], rw[j], rV[j])
    return _result_at(w, r, best[1], best[0], best[2], best[3], diag)


def sp_thm2(w: Mac, r, resolution: int = 8, u_cap: int | None = None,
            refine: bool = False) -> ExponentResult:
    """max over admissible grid P_XY of the fixed-type exponent.

    P_XY is admissible at rates r when it is a mixture ``sum_u p(u) P_X|u P_Y|u``
    with H(X|U) >= R_X and H(Y|U) >= R_Y; admissibility is decided by
    :func:`macsp.feasibility.u_feasible` and the witness is attached to the
    result. The candidate set is a subset of :func:`sp_thm4`'s at the same
    resolution, so ``sp_thm2 <= sp_thm4``. With no admissible point the value is
    0 and ``vacuous`` is set.
    """
    from .feasibility import u_feasible

    r = r if isinstance(r, RatePair) else RatePair(*r)
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    u_cap = default_u_cap(w) if u_cap is None else u_cap
    P, vals, which, V = _grid_values(w, r.r_x, r.r_y, resolution)
    # test admissibility from the best value down; stop below the first hit.
    # Ties (within 1e-12) still go to the smallest grid index, as in _pick.
    i, wit_i, checked = None, None, 0
    for k in np.lexsort((np.arange(len(vals)), -vals)):
        if i is not None:
            top = vals[i]
            if (vals[k] != top) if math.isinf(top) else (vals[k] < top - 1e-12):
                break
            if k > i:
                continue
        checked += 1
        ok, wit = u_feasible(P[k], r, u_cap, resolution)
        if ok and (i is None or k < i):
            i, wit_i = int(k), wit
    diag = {"resolution": resolution, "grid_points": len(P), "checked_points": checked,
            "u_cap": u_cap, "refined": False}
    if i is None:
        return ExponentResult(0.0, None, None, None, diag, vacuous=True)
    best = (vals[i], P[i], which[i], V[i], wit_i)
    if refine and vals[i] > 0 and np.isfinite(vals[i]):
        # candidates shared with sp_thm4's refinement keep the domination property
        j4 = _pick(vals)
        Pr = _refine_points(P[j4], resolution)
        rv, rw, rV = union_values(w, r, Pr)
        diag["refined"] = True
        for j in np.argsort(-rv, kind="stable"):
            if rv[j] <= best[0] + 1e-12:
                break
            ok, wit = u_feasible(Pr[j], r, u_cap, resolution)
            if ok:
                best = (rv[j], Pr[j], rw[j], rV[j], wit)
                break
    res = _result_at(w, r, best[1], best[0], best[2], best[3], diag)
    return ExponentResult(res.value, res.arg_distribution, res.arg_channel, res.family,
                          diag, decomposition=best[4])


def default_u_cap(w: Mac) -> int:
    return len(w.X) * len(w.Y) + 2


def transfer_bounds(lower: float, upper: float, r, mode: str = "max_to_avg") -> tuple:
    """Move exponent bounds between the maximal- and average-error criteria.

    ``max_to_avg``: bounds (L, U) on the maximal-error reliability give
    (L, U + min(R_X, R_Y)) on the average-error one. ``avg_to_max``: bounds on
    the average-error reliability give (L - min(R_X, R_Y), U) on the maximal one.
    """
    if lower > upper:
        raise ValidationError(f"lower bound {lower} exceeds upper bound {upper}")
    r = r if isinstance(r, RatePair) else RatePair(*r)
    m = min(r.r_x, r.r_y)
    if mode == "max_to_avg":
        return lower, upper + m
    if mode == "avg_to_max":
        return lower - m, upper
    raise ValidationError(f"unknown transfer mode {mode!r}")


def average_error_floor(e_max_sp: float, r, n: int, delta: float = 0.0) -> float:
    """(1/2)·2^(-n (E + min(R_X, R_Y)) (1 + delta)): the average-error lower bound
    implied by a maximal-error sphere-packing exponent E."""
    r = r if isinstance(r, RatePair) else RatePair(*r)
    expo = n * (e_max_sp + min(r.r_x, r.r_y)) * (1 + delta)
    return 0.5 * 2.0 ** (-expo)
