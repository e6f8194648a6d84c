"""Capacity-region inner approximation for a two-user DM-MAC.

Each product input law P_X × P_Y on a rational grid gives a pentagon

    R_X <= I(X ∧ Z | Y),  R_Y <= I(Y ∧ Z | X),  R_X + R_Y <= I(XY ∧ Z).

Time sharing over U mixes the three bounds linearly in p(u), so membership
in the union of |U| <= 4 pentagons built from grid components is a small LP
over mixture weights; a basic optimal solution uses at most four components,
which is the witness we hand back.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ValidationError
from .probkit import CondPmf, JointPmf, Pmf, mutual_info
from .typeclasses import compositions

U_MAX = 4
WITNESS_TOL = 1e-9


@dataclass(frozen=True)
class RatePair:
    r_x: float
    r_y: float

    def __post_init__(self):
        if not (self.r_x >= 0 and self.r_y >= 0):
            raise ValidationError(f"rates must be nonnegative, got {(self.r_x, self.r_y)}")
        object.__setattr__(self, "r_x", float(self.r_x))
        object.__setattr__(self, "r_y", float(self.r_y))

    def __iter__(self):
        return iter((self.r_x, self.r_y))

    @property
    def sum(self) -> float:
        return self.r_x + self.r_y


def _check_mac(w):
    from .macchannel import Mac
    if not isinstance(w, Mac):
        raise ValidationError("expected a Mac")


def pentagon(w, p_u: Pmf, p_x_given_u: CondPmf, p_y_given_u: CondPmf) -> tuple:
    """(I(X∧Z|Y,U), I(Y∧Z|X,U), I(XY∧Z|U)) for p(u) p(x|u) p(y|u) W(z|x,y)."""
    _check_mac(w)
    if len(p_u) > U_MAX:
        raise ValidationError(f"|U| = {len(p_u)} exceeds {U_MAX}")
    if p_x_given_u.input_alphabet != p_u.alphabet or p_y_given_u.input_alphabet != p_u.alphabet:
        raise ValidationError("conditionals must be indexed by U's alphabet")
    if p_x_given_u.output_alphabet != w.X or p_y_given_u.output_alphabet != w.Y:
        raise ValidationError("conditionals must range over the channel's input alphabets")
    joint = np.einsum("u,ux,uy,xyz->uxyz", p_u.weights, p_x_given_u.matrix,
                      p_y_given_u.matrix, w.W)
    j = JointPmf(("U", "X", "Y", "Z"), (p_u.alphabet, w.X, w.Y, w.Z), joint)
    return (mutual_info(j, "X", "Z", ("Y", "U")),
            mutual_info(j, "Y", "Z", ("X", "U")),
            mutual_info(j, ("X", "Y"), "Z", "U"))


def _simplex_grid(k: int, resolution: int) -> np.ndarray:
    return np.array(list(compositions(resolution, k)), dtype=float) / resolution


def _product_bounds(w, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """Vectorized pentagon bounds for all (px[a], py[b]) pairs; rows (a, b) flattened."""
    W = w.W
    with np.errstate(divide="ignore", invalid="ignore"):
        logW = np.where(W > 0, np.log2(np.where(W > 0, W, 1.0)), 0.0)
    out = []
    for a in range(len(px)):
        joint = np.einsum("x,by,xyz->bxyz", px[a], py, W)  # (B, X, Y, Z)
        h_z_xy = -(joint * logW[None]).sum(axis=(1, 2, 3))
        pz_y = joint.sum(axis=1)  # (B, Y, Z)
        pz_x = joint.sum(axis=2)  # (B, X, Z)
        pz = joint.sum(axis=(1, 2))
        h_zy = _ent(pz_y.reshape(len(py), -1)) - _ent(py)
        h_zx = _ent(pz_x.reshape(len(py), -1)) - _ent(np.broadcast_to(px[a], (len(py), len(px[a]))))
        h_z = _ent(pz)
        ix = np.maximum(h_zy - h_z_xy, 0.0)
        iy = np.maximum(h_zx - h_z_xy, 0.0)
        ixy = np.maximum(h_z - h_z_xy, 0.0)
        out.append(np.stack([ix, iy, ixy], axis=1))
    return np.concatenate(out)


def _ent(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(p > 0, -p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return t.sum(axis=-1)


@dataclass(frozen=True, eq=False)
class RegionApprox:
    """Grid samples of product input laws and their pentagon bounds.

    ``bounds[k] = (I_x, I_y, I_xy)`` for the component ``(px[ia[k]], py[ib[k]])``.
    """

    mac: object
    resolution: int
    px: np.ndarray
    py: np.ndarray
    ia: np.ndarray
    ib: np.ndarray
    bounds: np.ndarray

    def component(self, k: int) -> tuple:
        return self.px[self.ia[k]], self.py[self.ib[k]]


def region_approx(w, resolution: int) -> RegionApprox:
    _check_mac(w)
    if resolution < 2:
        raise ValidationError("resolution must be >= 2")
    px = _simplex_grid(len(w.X), resolution)
    py = _simplex_grid(len(w.Y), resolution)
    bounds = _product_bounds(w, px, py)
    ia, ib = np.divmod(np.arange(len(px) * len(py)), len(py))
    return RegionApprox(w, resolution, px, py, ia, ib, bounds)


@dataclass(frozen=True, eq=False)
class Witness:
    p_u: Pmf
    p_x_given_u: CondPmf
    p_y_given_u: CondPmf
    bounds: tuple


def _witness(region: RegionApprox, lam: np.ndarray) -> Witness:
    support = np.flatnonzero(lam > 1e-12)
    if len(support) > U_MAX:  # keep the heaviest; the caller re-verifies
        support = support[np.argsort(-lam[support], kind="stable")[:U_MAX]]
    weights = lam[support] / lam[support].sum()
    labels = tuple(range(len(support)))
    w = region.mac
    pxu = CondPmf(labels, w.X, np.stack([region.px[region.ia[k]] for k in support]))
    pyu = CondPmf(labels, w.Y, np.stack([region.py[region.ib[k]] for k in support]))
    pu = Pmf(labels, weights)
    return Witness(pu, pxu, pyu, pentagon(w, pu, pxu, pyu))


def contains(region: RegionApprox, r, with_witness: bool = False):
    """Whether r lies in some time-shared pentagon of the sampled components."""
    r = r if isinstance(r, RatePair) else RatePair(*r)
    if r.r_x == 0 and r.r_y == 0:
        return (True, None) if with_witness else True
    b = region.bounds
    n = len(b)
    # max t  s.t.  λ >= 0, sum λ = 1, sum λ I >= (r_x, r_y, r_x + r_y) + t.
    # Maximizing the slack keeps the witness off the LP's feasibility tolerance.
    c = np.concatenate([np.zeros(n), [-1.0]])
    A_ub = np.hstack([-b.T, np.ones((3, 1))])
    b_ub = -np.array([r.r_x, r.r_y, r.sum])
    A_eq = np.concatenate([np.ones(n), [0.0]])[None]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * n + [(None, 1.0)], method="highs")
    ok = res.status == 0 and res.x[n] >= -WITNESS_TOL
    wit = None
    if ok:
        wit = _witness(region, res.x[:n])
        bx, by, bxy = wit.bounds
        tol = WITNESS_TOL
        ok = bx >= r.r_x - tol and by >= r.r_y - tol and bxy >= r.sum - tol
        if not ok:
            wit = None
    return (ok, wit) if with_witness else ok


def _max_weighted(region: RegionApprox, mu: float):
    """max mu r_x + (1 - mu) r_y over the region; returns (r_x, r_y, λ)."""
    b = region.bounds
    n = len(b)
    # variables: λ (n), r_x, r_y
    c = np.concatenate([np.zeros(n), [-mu, -(1 - mu)]])
    A_ub = np.zeros((3, n + 2))
    A_ub[:, :n] = -b.T
    A_ub[0, n] = 1
    A_ub[1, n + 1] = 1
    A_ub[2, n:] = 1
    A_eq = np.concatenate([np.ones(n), [0, 0]])[None]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(3), A_eq=A_eq, b_eq=[1.0],
                  bounds=[(0, None)] * (n + 2), method="highs")
    if res.status != 0:
        raise RuntimeError(f"region LP failed: {res.message}")
    return float(res.x[n]), float(res.x[n + 1]), res.x[:n]


def max_sum_rate(region: RegionApprox) -> float:
    """Largest R_X + R_Y over the time-shared grid pentagons."""
    rx, ry, _ = _max_weighted(region, 0.5)
    return rx + ry


def boundary(region: RegionApprox, directions: int = 33) -> list:
    """Boundary points maximizing mu·r_x + (1-mu)·r_y for mu on a uniform grid in [0, 1].

    Returns a list of (mu, r_x, r_y), deduplicated points kept in mu order.
    """
    pts = []
    for mu in np.clip(np.linspace(0.0, 1.0, directions), 1e-3, 1 - 1e-3):
        rx, ry, _ = _max_weighted(region, float(mu))
        pts.append((float(mu), rx, ry))
    return pts
