"""Finite probability vectors, stochastic matrices and information measures.

All quantities are in bits. ``0 log 0`` is taken as 0; a divergence where the
first argument puts mass outside the support of the second is ``math.inf``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

SUM_TOL = 1e-9

INF = math.inf


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_labels(labels, what="alphabet") -> tuple:
    labels = tuple(labels)
    if not labels:
        raise ValidationError(f"{what} must be nonempty")
    if len(set(labels)) != len(labels):
        raise ValidationError(f"{what} has duplicate labels: {labels}")
    return labels


def _check_weights(w: np.ndarray, what="weights"):
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"{what} contain non-finite entries")
    if np.any(w < 0):
        raise ValidationError(f"{what} contain negative entries")
    total = float(w.sum())
    if abs(total - 1.0) > SUM_TOL:
        raise ValidationError(f"{what} sum to {total!r}, not 1 (tol {SUM_TOL})")


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability vector over an ordered, labeled alphabet."""

    alphabet: tuple
    weights: np.ndarray

    def __post_init__(self):
        alphabet = _check_labels(self.alphabet)
        w = _frozen(self.weights)
        if w.shape != (len(alphabet),):
            raise ValidationError(
                f"expected {len(alphabet)} weights, got shape {w.shape}")
        _check_weights(w)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, alphabet) -> "Pmf":
        alphabet = tuple(alphabet)
        return cls(alphabet, np.full(len(alphabet), 1.0 / len(alphabet)))

    @classmethod
    def point(cls, alphabet, symbol) -> "Pmf":
        alphabet = tuple(alphabet)
        w = np.zeros(len(alphabet))
        w[alphabet.index(symbol)] = 1.0
        return cls(alphabet, w)

    def __getitem__(self, symbol) -> float:
        return float(self.weights[self.alphabet.index(symbol)])

    def __len__(self):
        return len(self.alphabet)

    def __repr__(self):
        body = ", ".join(f"{a!r}: {p:.6g}" for a, p in zip(self.alphabet, self.weights))
        return f"Pmf({{{body}}})"


@dataclass(frozen=True, eq=False)
class CondPmf:
    """Row-stochastic matrix: one Pmf over ``output_alphabet`` per input symbol."""

    input_alphabet: tuple
    output_alphabet: tuple
    matrix: np.ndarray

    def __post_init__(self):
        ins = _check_labels(self.input_alphabet, "input alphabet")
        outs = _check_labels(self.output_alphabet, "output alphabet")
        m = _frozen(self.matrix)
        if m.shape != (len(ins), len(outs)):
            raise ValidationError(
                f"expected matrix shape {(len(ins), len(outs))}, got {m.shape}")
        for i, row in enumerate(m):
            _check_weights(row, f"row {i} ({ins[i]!r})")
        object.__setattr__(self, "input_alphabet", ins)
        object.__setattr__(self, "output_alphabet", outs)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_rows(cls, rows: Sequence[Pmf], input_alphabet) -> "CondPmf":
        outs = rows[0].alphabet
        for r in rows:
            if r.alphabet != outs:
                raise ValidationError("rows do not share an output alphabet")
        return cls(tuple(input_alphabet), outs, np.stack([r.weights for r in rows]))

    @property
    def rows(self) -> tuple:
        return tuple(Pmf(self.output_alphabet, r) for r in self.matrix)

    def row(self, symbol) -> Pmf:
        return Pmf(self.output_alphabet, self.matrix[self.input_alphabet.index(symbol)])

    def __call__(self, out, given) -> float:
        i = self.input_alphabet.index(given)
        return float(self.matrix[i, self.output_alphabet.index(out)])


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Distribution over a product of named component alphabets.

    ``weights`` has one axis per component, in the order of ``names``.
    """

    names: tuple
    alphabets: tuple
    weights: np.ndarray

    def __post_init__(self):
        names = tuple(self.names)
        if len(set(names)) != len(names) or not names:
            raise ValidationError(f"component names must be distinct: {names}")
        alphabets = tuple(_check_labels(a, f"alphabet of {n}")
                          for n, a in zip(names, self.alphabets))
        if len(alphabets) != len(names):
            raise ValidationError("one alphabet per component is required")
        w = _frozen(self.weights)
        shape = tuple(len(a) for a in alphabets)
        if w.shape != shape:
            raise ValidationError(f"expected weights shape {shape}, got {w.shape}")
        _check_weights(w)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "alphabets", alphabets)
        object.__setattr__(self, "weights", w)

    @classmethod
    def product(cls, names, pmfs: Sequence[Pmf]) -> "JointPmf":
        w = np.ones(())
        for p in pmfs:
            w = np.multiply.outer(w, p.weights)
        return cls(tuple(names), tuple(p.alphabet for p in pmfs), w)

    @classmethod
    def from_channel(cls, p: Pmf, v: CondPmf, in_name="X", out_name="Z") -> "JointPmf":
        if p.alphabet != v.input_alphabet:
            raise ValidationError("input pmf and channel disagree on alphabet")
        return cls((in_name, out_name), (p.alphabet, v.output_alphabet),
                   p.weights[:, None] * v.matrix)

    def axes(self, names) -> tuple:
        names = _as_names(names)
        missing = [n for n in names if n not in self.names]
        if missing:
            raise ValidationError(f"unknown component(s) {missing}; have {self.names}")
        return tuple(self.names.index(n) for n in names)

    def marginal(self, names) -> "JointPmf":
        names = _as_names(names)
        keep = self.axes(names)
        drop = tuple(i for i in range(len(self.names)) if i not in keep)
        w = self.weights.sum(axis=drop) if drop else self.weights
        # reorder kept axes to the requested order
        order = np.argsort(np.argsort(keep))
        w = np.transpose(w, order) if len(keep) > 1 else w
        return JointPmf(names, tuple(self.alphabets[i] for i in keep), w)

    def pmf(self, name) -> Pmf:
        m = self.marginal((name,))
        return Pmf(m.alphabets[0], m.weights)


def _as_names(names) -> tuple:
    if names is None:
        return ()
    if isinstance(names, str):
        return (names,)
    return tuple(names)


def _h(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float).ravel()
    nz = w[w > 0]
    return float(-(nz * np.log2(nz)).sum())


def entropy(p) -> float:
    """Shannon entropy in bits of a Pmf (or of a JointPmf's full table)."""
    h = _h(p.weights)
    return max(h, 0.0)


def cond_entropy(j: JointPmf, target, given=()) -> float:
    """H(target | given) = H(target, given) - H(given)."""
    target, given = _as_names(target), _as_names(given)
    j.axes(target + given)
    h_all = _h(j.marginal(tuple(dict.fromkeys(target + given))).weights)
    h_given = _h(j.marginal(given).weights) if given else 0.0
    return max(h_all - h_given, 0.0)


def mutual_info(j: JointPmf, a, b, given=()) -> float:
    """I(a ∧ b | given) = H(a | given) - H(a | b, given), clipped at 0."""
    a, b, given = _as_names(a), _as_names(b), _as_names(given)
    val = cond_entropy(j, a, given) - cond_entropy(j, a, b + given)
    return max(val, 0.0)


def _kl_arrays(p: np.ndarray, q: np.ndarray) -> float:
    supp = p > 0
    if np.any(q[supp] <= 0):
        return INF
    val = float((p[supp] * (np.log2(p[supp]) - np.log2(q[supp]))).sum())
    return max(val, 0.0)


def kl(p: Pmf, q: Pmf) -> float:
    """D(p || q) in bits; ``math.inf`` when p is not absolutely continuous wrt q."""
    if p.alphabet != q.alphabet:
        raise ValidationError("kl: alphabet mismatch")
    return _kl_arrays(p.weights, q.weights)


def cond_kl(v: CondPmf, w: CondPmf, p: Pmf) -> float:
    """Conditional divergence D(V || W | P) = sum_x P(x) D(V(.|x) || W(.|x)).

    Rows with P(x) = 0 contribute nothing even when their divergence is infinite.
    """
    if v.input_alphabet != w.input_alphabet or v.output_alphabet != w.output_alphabet:
        raise ValidationError("cond_kl: channel alphabets differ")
    if p.alphabet != v.input_alphabet:
        raise ValidationError("cond_kl: input pmf alphabet differs from channel input")
    total = 0.0
    for px, vr, wr in zip(p.weights, v.matrix, w.matrix):
        if px == 0:
            continue
        d = _kl_arrays(vr, wr)
        if d == INF:
            return INF
        total += px * d
    return total


def is_close_pmf(p: Pmf, q: Pmf, tol: float = 1e-12) -> bool:
    return p.alphabet == q.alphabet and bool(np.all(np.abs(p.weights - q.weights) <= tol))


def random_pmf(rng: np.random.Generator, alphabet: Iterable, alpha: float = 1.0) -> Pmf:
    alphabet = tuple(alphabet)
    return Pmf(alphabet, rng.dirichlet(np.full(len(alphabet), alpha)))
