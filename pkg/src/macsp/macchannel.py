"""Two-user DM-MAC model, explicit multiuser codes and exact error evaluation.

Output sequences are indexed by their position in the lexicographic order of
Z^n (first letter most significant), which is also the order used by
``itertools.product``. Explicit decoders are stored as one integer per output
sequence: the flat pair index ``i * M_Y + j`` or ``ERASURE``.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from .errors import EnumerationCapError, HypothesisError, InvalidCodeError, RepairError, \
    ValidationError
from .probkit import CondPmf, _check_labels, _check_weights
from .typeclasses import DEFAULT_CAP, check_cap, type_class, type_class_size, type_of

log = logging.getLogger(__name__)

ERASURE = -1
TIE_TOL = 1e-12
SEARCH_CAP = 10 ** 5
SINGLE_USER_Y = "-"


@dataclass(frozen=True, eq=False)
class Mac:
    """W: X x Y -> Z as an array ``W[x, y, z]``."""

    X: tuple
    Y: tuple
    Z: tuple
    W: np.ndarray

    def __post_init__(self):
        X, Y, Z = (_check_labels(a, name) for a, name in
                   ((self.X, "X"), (self.Y, "Y"), (self.Z, "Z")))
        w = np.array(self.W, dtype=float)
        if w.shape != (len(X), len(Y), len(Z)):
            raise ValidationError(f"W has shape {w.shape}, expected {(len(X), len(Y), len(Z))}")
        for a in range(len(X)):
            for b in range(len(Y)):
                _check_weights(w[a, b], f"row W(.|{X[a]!r},{Y[b]!r})")
        w.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "W", w)

    @classmethod
    def from_transition(cls, v: CondPmf, X, Y) -> "Mac":
        X, Y = tuple(X), tuple(Y)
        w = np.empty((len(X), len(Y), len(v.output_alphabet)))
        for a, x in enumerate(X):
            for b, y in enumerate(Y):
                w[a, b] = v.matrix[v.input_alphabet.index((x, y))]
        return cls(X, Y, v.output_alphabet, w)

    @classmethod
    def single_user(cls, X, Z, matrix) -> "Mac":
        """A point-to-point channel viewed as a MAC with a one-letter Y."""
        m = np.asarray(matrix, dtype=float)
        return cls(tuple(X), (SINGLE_USER_Y,), tuple(Z), m[:, None, :])

    @property
    def transition(self) -> CondPmf:
        ins = tuple(itertools.product(self.X, self.Y))
        return CondPmf(ins, self.Z, self.W.reshape(len(ins), len(self.Z)))

    @property
    def shape(self) -> tuple:
        return self.W.shape

    def swapped(self) -> "Mac":
        """The same channel with the users' roles exchanged."""
        return Mac(self.Y, self.X, self.Z, np.transpose(self.W, (1, 0, 2)))


def _indices(seq, alphabet, what) -> np.ndarray:
    try:
        return np.array([alphabet.index(s) for s in seq], dtype=int)
    except ValueError:
        raise ValidationError(f"{what} sequence {seq!r} has symbols outside {alphabet}") from None


def log_likelihoods(w: Mac, x_seq, y_seq) -> np.ndarray:
    """log2 W^n(z | x, y) for every z in Z^n, lexicographic order."""
    xi, yi = _indices(x_seq, w.X, "x"), _indices(y_seq, w.Y, "y")
    if len(xi) != len(yi):
        raise ValidationError(f"length mismatch: {len(xi)} vs {len(yi)}")
    with np.errstate(divide="ignore"):
        logw = np.log2(w.W)
    out = np.zeros(1)
    for a, b in zip(xi, yi):
        out = np.add.outer(out, logw[a, b]).ravel()
    return out


def nfold_prob(w: Mac, x_seq, y_seq, z_seq) -> float:
    """W^n(z | x, y), accumulated as a sum of log2 terms."""
    xi, yi = _indices(x_seq, w.X, "x"), _indices(y_seq, w.Y, "y")
    zi = _indices(z_seq, w.Z, "z")
    if not (len(xi) == len(yi) == len(zi)):
        raise ValidationError("nfold_prob: sequences must have equal length")
    with np.errstate(divide="ignore"):
        lp = float(np.log2(w.W[xi, yi, zi]).sum())
    return 2.0 ** lp if lp > -math.inf else 0.0


def z_index(z_seq, z_alphabet) -> int:
    idx = 0
    for z in z_seq:
        idx = idx * len(z_alphabet) + z_alphabet.index(z)
    return idx


@dataclass(frozen=True, eq=False)
class DecodingPartition:
    """Explicit decoder: ``assignment[z_index]`` is a flat pair index or ERASURE."""

    n: int
    z_alphabet: tuple
    m_x: int
    m_y: int
    assignment: np.ndarray

    def __post_init__(self):
        a = np.array(self.assignment, dtype=np.int64)
        size = len(self.z_alphabet) ** self.n
        if a.shape != (size,):
            raise InvalidCodeError(f"assignment must cover all {size} output sequences")
        if np.any((a < ERASURE) | (a >= self.m_x * self.m_y)):
            raise InvalidCodeError("assignment refers to an unknown message pair")
        a.setflags(write=False)
        object.__setattr__(self, "z_alphabet", tuple(self.z_alphabet))
        object.__setattr__(self, "assignment", a)

    @classmethod
    def from_sets(cls, n, z_alphabet, m_x, m_y, sets: Mapping) -> "DecodingPartition":
        """Build from ``{(i, j): iterable of z-sequences}``; overlapping sets are rejected."""
        z_alphabet = tuple(z_alphabet)
        a = np.full(len(z_alphabet) ** n, ERASURE, dtype=np.int64)
        for (i, j), zs in sets.items():
            if not (0 <= i < m_x and 0 <= j < m_y):
                raise InvalidCodeError(f"pair {(i, j)} out of range")
            for z in zs:
                if len(z) != n:
                    raise InvalidCodeError(f"decoding set entry {z!r} has wrong length")
                k = z_index(z, z_alphabet)
                if a[k] != ERASURE:
                    prev = divmod(int(a[k]), m_y)
                    raise InvalidCodeError(
                        f"decoding sets {prev} and {(i, j)} overlap at {tuple(z)!r}")
                a[k] = i * m_y + j
        return cls(n, z_alphabet, m_x, m_y, a)

    def decode(self, z_seq):
        k = int(self.assignment[z_index(z_seq, self.z_alphabet)])
        return None if k == ERASURE else divmod(k, self.m_y)

    def set_of(self, i, j) -> np.ndarray:
        """Lexicographic indices of D_ij."""
        return np.flatnonzero(self.assignment == i * self.m_y + j)

    def sets(self) -> dict:
        out = {}
        zn = list(itertools.product(self.z_alphabet, repeat=self.n))
        for k, a in enumerate(self.assignment):
            if a != ERASURE:
                out.setdefault(divmod(int(a), self.m_y), []).append(zn[k])
        return out


@dataclass(frozen=True, eq=False)
class MultiUserCode:
    """An (n, M_X, M_Y) code: two codebooks and a decoder ("ML" or explicit)."""

    n: int
    codebook_x: tuple
    codebook_y: tuple
    decoder: object = "ML"

    def __post_init__(self):
        cx = tuple(tuple(c) for c in self.codebook_x)
        cy = tuple(tuple(c) for c in self.codebook_y)
        if self.n < 1:
            raise InvalidCodeError("blocklength must be >= 1")
        if not cx or not cy:
            raise InvalidCodeError("both codebooks need at least one codeword")
        for c in cx + cy:
            if len(c) != self.n:
                raise InvalidCodeError(f"codeword {c!r} does not have length {self.n}")
        dec = self.decoder
        if isinstance(dec, str):
            if dec != "ML":
                raise InvalidCodeError(f"unknown decoder {dec!r}")
        elif isinstance(dec, DecodingPartition):
            if (dec.n, dec.m_x, dec.m_y) != (self.n, len(cx), len(cy)):
                raise InvalidCodeError("decoding partition does not match the code")
        else:
            raise InvalidCodeError("decoder must be 'ML' or a DecodingPartition")
        object.__setattr__(self, "codebook_x", cx)
        object.__setattr__(self, "codebook_y", cy)

    @property
    def m_x(self) -> int:
        return len(self.codebook_x)

    @property
    def m_y(self) -> int:
        return len(self.codebook_y)

    @property
    def rates(self) -> tuple:
        return math.log2(self.m_x) / self.n, math.log2(self.m_y) / self.n

    @property
    def is_explicit(self) -> bool:
        return isinstance(self.decoder, DecodingPartition)

    def with_decoder(self, decoder) -> "MultiUserCode":
        return MultiUserCode(self.n, self.codebook_x, self.codebook_y, decoder)

    def swapped(self) -> "MultiUserCode":
        dec = self.decoder
        if isinstance(dec, DecodingPartition):
            a = dec.assignment
            i, j = np.divmod(a, dec.m_y)
            flipped = np.where(a == ERASURE, ERASURE, j * dec.m_x + i)
            dec = DecodingPartition(dec.n, dec.z_alphabet, dec.m_y, dec.m_x, flipped)
        return MultiUserCode(self.n, self.codebook_y, self.codebook_x, dec)


def is_good(codebook) -> bool:
    """A codebook is good when no codeword is repeated."""
    cb = [tuple(c) for c in codebook]
    return len(set(cb)) == len(cb)


def is_good_code(code: MultiUserCode) -> bool:
    return is_good(code.codebook_x) and is_good(code.codebook_y)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    pair_errors: np.ndarray  # [i, j] = W^n(D_ij^c | x_i, y_j)
    average_error: float = field(init=False)
    maximal_error: float = field(init=False)

    def __post_init__(self):
        e = np.array(self.pair_errors, dtype=float)
        e.setflags(write=False)
        object.__setattr__(self, "pair_errors", e)
        object.__setattr__(self, "average_error", float(e.mean()))
        object.__setattr__(self, "maximal_error", float(e.max()))


def _check_zn(w: Mac, n: int, cap):
    check_cap("output space Z^n", len(w.Z) ** n, cap)


def likelihood_table(code: MultiUserCode, w: Mac, cap: int | None = None) -> np.ndarray:
    """log2 W^n(z | x_i, y_j) as an array [i, j, z_index]."""
    _check_zn(w, code.n, cap)
    table = np.empty((code.m_x, code.m_y, len(w.Z) ** code.n))
    for i, x in enumerate(code.codebook_x):
        for j, y in enumerate(code.codebook_y):
            table[i, j] = log_likelihoods(w, x, y)
    return table


def _ml_assignment(logp: np.ndarray) -> np.ndarray:
    """First (lexicographically smallest) pair within TIE_TOL of the max, per column."""
    flat = logp.reshape(-1, logp.shape[-1])
    best = flat.max(axis=0)
    with np.errstate(invalid="ignore"):
        near = flat >= best - TIE_TOL
    near[:, np.isneginf(best)] = True
    return np.argmax(near, axis=0).astype(np.int64)


def ml_decoder(code: MultiUserCode, w: Mac, cap: int | None = None) -> DecodingPartition:
    """Maximum-likelihood partition, ties to the smallest (i, j)."""
    logp = likelihood_table(code, w, cap)
    return DecodingPartition(code.n, w.Z, code.m_x, code.m_y, _ml_assignment(logp))


def explicit(code: MultiUserCode, w: Mac, cap: int | None = None) -> MultiUserCode:
    """The code with an "ML" decoder replaced by its explicit partition."""
    if code.is_explicit:
        return code
    return code.with_decoder(ml_decoder(code, w, cap))


def evaluate(code: MultiUserCode, w: Mac, cap: int | None = None) -> ErrorReport:
    """Exact per-pair errors by summing W^n over each complement D_ij^c."""
    logp = likelihood_table(code, w, cap)
    dec = code.decoder
    if isinstance(dec, str):
        assignment = _ml_assignment(logp)
    else:
        if dec.z_alphabet != w.Z:
            raise InvalidCodeError("decoder output alphabet differs from the channel's")
        assignment = dec.assignment
    probs = np.exp2(logp)
    errs = np.empty((code.m_x, code.m_y))
    for i in range(code.m_x):
        for j in range(code.m_y):
            outside = assignment != i * code.m_y + j
            errs[i, j] = min(1.0, float(probs[i, j, outside].sum()))
    return ErrorReport(errs)


# ---------------------------------------------------------------------------
# repair of bad codebooks


def _argmax_output(w: Mac, x_seq, y_seq) -> tuple:
    """The single sequence of the shell T_V0(x, y), V0 putting each input letter
    pair on its first most likely output letter."""
    xi, yi = _indices(x_seq, w.X, "x"), _indices(y_seq, w.Y, "y")
    return tuple(w.Z[int(np.argmax(w.W[a, b]))] for a, b in zip(xi, yi))


def _first_duplicate(book) -> tuple | None:
    seen = {}
    for b, c in enumerate(book):
        if c in seen:
            return seen[c], b
        seen[c] = b
    return None


def _repair_x_step(code: MultiUserCode, w: Mac, strict: bool) -> MultiUserCode:
    book = list(code.codebook_x)
    dup = _first_duplicate(book)
    if dup is None:
        return code
    a, b = dup
    t = type_of(book[0], w.X)
    if any(type_of(c, w.X) != t for c in book):
        raise HypothesisError("repair needs every codeword of the bad book in one type class")
    if code.m_x > type_class_size(t) - 1:
        raise HypothesisError(
            f"repair needs M <= |T_P| - 1 = {type_class_size(t) - 1}, have M = {code.m_x}")

    dec = code.decoder
    m_y = code.m_y
    assign = dec.assignment.copy()
    # message b carries the same codeword as a: hand D_bj over to D_aj
    for j in range(m_y):
        assign[assign == b * m_y + j] = a * m_y + j

    taken = set(book)
    sizes = np.bincount(assign[assign != ERASURE], minlength=code.m_x * m_y)
    chosen, moves = None, []
    for x_new in type_class(t):
        if x_new in taken:
            continue
        if chosen is None:
            chosen = x_new  # fallback: replace without claiming any output
        cand = []
        for j, y in enumerate(code.codebook_y):
            z = _argmax_output(w, x_new, y)
            k = z_index(z, w.Z)
            owner = int(assign[k])
            if owner == ERASURE:
                cand.append((j, k))
                continue
            if sizes[owner] < 2:
                continue
            oi, oj = divmod(owner, m_y)
            gain = (nfold_prob(w, x_new, y, z)
                    - nfold_prob(w, book[oi], code.codebook_y[oj], z))
            if gain >= 0:
                cand.append((j, k))
        if cand:
            chosen, moves = x_new, cand
            break
    if chosen is None:
        raise HypothesisError("the type class holds no codeword outside the book")
    if not moves:
        if strict:
            raise RepairError("no eligible decoding set with at least two elements")
        log.debug("repair: no eligible D_k, replacing %r with an empty decoding set", book[b])
    for j, k in moves:
        owner = int(assign[k])
        if owner != ERASURE:
            if sizes[owner] < 2:
                continue
            sizes[owner] -= 1
        assign[k] = b * m_y + j
        sizes[b * m_y + j] += 1
    book[b] = chosen
    part = DecodingPartition(code.n, dec.z_alphabet, code.m_x, m_y, assign)
    return MultiUserCode(code.n, tuple(book), code.codebook_y, part)


def iter_repair(code: MultiUserCode, w: Mac, strict: bool = False,
                cap: int | None = None) -> Iterator[MultiUserCode]:
    """Yield the code after each single-codeword replacement until both books are good.

    Each step replaces one repeated codeword by the first unused sequence of
    the same type class and moves to it the output sequence that is most
    likely under the new codeword, taken from a decoding set with at least two
    elements (or from the erasure region). The average error never increases.
    Books are alternated: X first, then Y, while either is bad.
    """
    code = explicit(code, w, cap)
    while not is_good_code(code):
        if not is_good(code.codebook_x):
            code = _repair_x_step(code, w, strict)
            yield code
        if not is_good(code.codebook_y):
            code = _repair_x_step(code.swapped(), w.swapped(), strict).swapped()
            yield code


def repair(code: MultiUserCode, w: Mac, strict: bool = False,
           cap: int | None = None) -> MultiUserCode:
    """Good code with the same sizes and no larger average error.

    A code that is already good is returned unchanged (decoder included).
    """
    if is_good_code(code):
        return code
    out = code
    for out in iter_repair(code, w, strict, cap):
        pass
    return out


# ---------------------------------------------------------------------------
# exhaustive search over small codes


@dataclass(frozen=True)
class SearchInfo:
    candidates: int
    sampled: bool
    seed: int | None


def _book_candidates(alphabet, n, m, composition, cap):
    if composition is None:
        pool = list(itertools.product(alphabet, repeat=n))
    else:
        pool = list(type_class(composition, cap))
    return pool


def best_code_search(w: Mac, n: int, m_x: int, m_y: int, composition=None,
                     cap: int | None = None, samples: int | None = None,
                     seed: int | None = None, allow_repeats: bool = True,
                     search_cap: int = SEARCH_CAP):
    """Exhaustive (or seeded sampled) minimum-average-error code under ML decoding.

    ``composition`` optionally restricts codewords to a pair of SequenceTypes
    ``(type_x, type_y)``. More than ``search_cap`` candidates is an error
    unless ``samples`` is given, in which case that many random candidates are
    drawn from ``seed`` and the result is flagged as sampled. Codebooks are
    enumerated as sorted multisets since the average error is invariant under
    message relabeling. Returns
    ``(code, report, SearchInfo)``; ties go to the first candidate in
    lexicographic order.
    """
    cap = DEFAULT_CAP if cap is None else cap
    tx, ty = composition if composition is not None else (None, None)
    pool_x = _book_candidates(w.X, n, m_x, tx, cap)
    pool_y = _book_candidates(w.Y, n, m_y, ty, cap)
    zn = len(w.Z) ** n
    check_cap("output space Z^n", zn, cap)

    def count(pool, m):
        return math.comb(len(pool) + m - 1, m) if allow_repeats else math.comb(len(pool), m)

    total = count(pool_x, m_x) * count(pool_y, m_y)
    if total == 0:
        raise HypothesisError("no codebook of the requested size exists")

    # log-likelihood of every (x, y) sequence pair over Z^n
    check_cap("sequence-pair likelihood table", len(pool_x) * len(pool_y) * zn, cap)
    table = np.empty((len(pool_x), len(pool_y), zn))
    for a, x in enumerate(pool_x):
        for b, y in enumerate(pool_y):
            table[a, b] = log_likelihoods(w, x, y)
    probs = np.exp2(table)

    combo = itertools.combinations_with_replacement if allow_repeats else itertools.combinations
    sampled = total > search_cap
    if sampled:
        if samples is None:
            raise EnumerationCapError("best_code_search candidates", total, search_cap)
        rng = np.random.default_rng(seed)
        batch = []
        for _ in range(samples):
            bx = tuple(sorted(rng.choice(len(pool_x), m_x, replace=allow_repeats)))
            by = tuple(sorted(rng.choice(len(pool_y), m_y, replace=allow_repeats)))
            batch.append((bx, by))
        batch = sorted(set(batch))
        books = iter(batch)
    else:
        books = itertools.product(combo(range(len(pool_x)), m_x), combo(range(len(pool_y)), m_y))

    best, best_err, seen = None, math.inf, 0
    for bx, by in books:
        seen += 1
        sub = probs[np.ix_(bx, by)]
        correct = sub.reshape(-1, zn).max(axis=0).sum()
        err = 1.0 - correct / (m_x * m_y)
        if err < best_err - TIE_TOL:
            best, best_err = (bx, by), err
    bx, by = best
    code = MultiUserCode(n, [pool_x[a] for a in bx], [pool_y[b] for b in by], "ML")
    code = explicit(code, w, cap)
    return code, evaluate(code, w, cap), SearchInfo(seen, sampled, seed)
