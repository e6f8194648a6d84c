"""Method of types on small blocklengths: exact counts, classes and shells.

Sequences are tuples of alphabet labels. Types are stored as integer counts;
every iterator here is lazy and emits in lexicographic order of symbol index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import EnumerationCapError, ValidationError
from .probkit import CondPmf, JointPmf, Pmf, _h

DEFAULT_CAP = 10 ** 7


def multinomial(counts: Sequence[int]) -> int:
    """n! / prod(c!) for nonnegative integer counts."""
    total, out = 0, 1
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def compositions(n: int, k: int) -> Iterator[tuple]:
    """All k-tuples of nonnegative ints summing to n, lexicographic ascending."""
    if k == 1:
        yield (n,)
        return
    for first in range(n + 1):
        for rest in compositions(n - first, k - 1):
            yield (first,) + rest


def num_compositions(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def check_cap(what: str, projected: int, cap: int | None):
    cap = DEFAULT_CAP if cap is None else cap
    if projected > cap:
        raise EnumerationCapError(what, projected, cap)


@dataclass(frozen=True)
class SequenceType:
    alphabet: tuple
    counts: tuple

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        counts = tuple(int(c) for c in self.counts)
        if len(counts) != len(self.alphabet) or any(c < 0 for c in counts):
            raise ValidationError(f"bad counts {counts} for alphabet {self.alphabet}")
        if sum(counts) < 1:
            raise ValidationError("a type needs n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(self.counts)

    def pmf(self) -> Pmf:
        return Pmf(self.alphabet, np.array(self.counts, dtype=float) / self.n)

    def count(self, symbol) -> int:
        return self.counts[self.alphabet.index(symbol)]


@dataclass(frozen=True)
class JointType:
    alphabet_x: tuple
    alphabet_y: tuple
    counts: tuple  # counts[i][j] = N(x_i, y_j)

    def __post_init__(self):
        object.__setattr__(self, "alphabet_x", tuple(self.alphabet_x))
        object.__setattr__(self, "alphabet_y", tuple(self.alphabet_y))
        counts = tuple(tuple(int(c) for c in row) for row in self.counts)
        if len(counts) != len(self.alphabet_x) or any(
                len(r) != len(self.alphabet_y) for r in counts):
            raise ValidationError("joint type counts have the wrong shape")
        if any(c < 0 for r in counts for c in r) or sum(map(sum, counts)) < 1:
            raise ValidationError("joint type counts must be >= 0 with n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return sum(map(sum, self.counts))

    @property
    def flat_counts(self) -> tuple:
        return tuple(c for r in self.counts for c in r)

    def array(self) -> np.ndarray:
        return np.array(self.counts, dtype=float) / self.n

    def joint_pmf(self, names=("X", "Y")) -> JointPmf:
        return JointPmf(names, (self.alphabet_x, self.alphabet_y), self.array())

    def marginal_x(self) -> SequenceType:
        return SequenceType(self.alphabet_x, tuple(sum(r) for r in self.counts))

    def marginal_y(self) -> SequenceType:
        return SequenceType(self.alphabet_y, tuple(map(sum, zip(*self.counts))))


def type_of(seq, alphabet) -> SequenceType:
    seq = tuple(seq)
    if not seq:
        raise ValidationError("type of an empty sequence is undefined (n >= 1)")
    alphabet = tuple(alphabet)
    bad = set(seq) - set(alphabet)
    if bad:
        raise ValidationError(f"symbols {bad} not in alphabet {alphabet}")
    return SequenceType(alphabet, tuple(seq.count(a) for a in alphabet))


def joint_type_of(seq_x, seq_y, alphabet_x, alphabet_y) -> JointType:
    seq_x, seq_y = tuple(seq_x), tuple(seq_y)
    if len(seq_x) != len(seq_y):
        raise ValidationError(f"length mismatch: {len(seq_x)} vs {len(seq_y)}")
    if not seq_x:
        raise ValidationError("joint type of empty sequences is undefined")
    ax, ay = tuple(alphabet_x), tuple(alphabet_y)
    counts = [[0] * len(ay) for _ in ax]
    for a, b in zip(seq_x, seq_y):
        try:
            counts[ax.index(a)][ay.index(b)] += 1
        except ValueError:
            raise ValidationError(f"pair {(a, b)!r} outside the alphabets") from None
    return JointType(ax, ay, counts)


def enumerate_types(alphabet, n: int, cap: int | None = None) -> list:
    """P_n(alphabet): every type of denominator n, counts in lexicographic order."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    alphabet = tuple(alphabet)
    check_cap("enumerate_types", num_compositions(n, len(alphabet)), cap)
    return [SequenceType(alphabet, c) for c in compositions(n, len(alphabet))]


def enumerate_joint_types(alphabet_x, alphabet_y, n: int, cap: int | None = None) -> list:
    ax, ay = tuple(alphabet_x), tuple(alphabet_y)
    k = len(ax) * len(ay)
    check_cap("enumerate_joint_types", num_compositions(n, k), cap)
    out = []
    for c in compositions(n, k):
        rows = [c[i * len(ay):(i + 1) * len(ay)] for i in range(len(ax))]
        out.append(JointType(ax, ay, rows))
    return out


def type_class_size(t: SequenceType) -> int:
    return multinomial(t.counts)


def _fill(remaining: list, n: int) -> Iterator[tuple]:
    # lexicographic sequences of symbol indices with prescribed counts
    if n == 0:
        yield ()
        return
    for s, c in enumerate(remaining):
        if c:
            remaining[s] -= 1
            for tail in _fill(remaining, n - 1):
                yield (s,) + tail
            remaining[s] += 1


def type_class(t: SequenceType, cap: int | None = None) -> Iterator[tuple]:
    """Lazily yield T_P in lexicographic order."""
    check_cap("type_class", type_class_size(t), cap)
    for idx in _fill(list(t.counts), t.n):
        yield tuple(t.alphabet[i] for i in idx)


def all_sequences(alphabet, n: int, cap: int | None = None) -> Iterator[tuple]:
    alphabet = tuple(alphabet)
    check_cap("all_sequences", len(alphabet) ** n, cap)
    return itertools.product(alphabet, repeat=n)


# ---------------------------------------------------------------------------
# conditional types / V-shells


def _inputs(x_seq, y_seq) -> tuple:
    x_seq = tuple(x_seq)
    if y_seq is None:
        return x_seq
    y_seq = tuple(y_seq)
    if len(x_seq) != len(y_seq):
        raise ValidationError(f"length mismatch: {len(x_seq)} vs {len(y_seq)}")
    return tuple(zip(x_seq, y_seq))


class VShell:
    """T_V(x, y): output sequences whose conditional type given (x, y) is V.

    ``counts`` maps each input symbol occurring in the conditioning sequence
    (a pair (x, y), or a bare x for single-user shells) to its tuple of output
    counts. Inputs that never occur carry no constraint.
    """

    def __init__(self, inputs: tuple, z_alphabet, counts: dict):
        self.inputs = tuple(inputs)
        self.z_alphabet = tuple(z_alphabet)
        occ = {}
        for k in self.inputs:
            occ[k] = occ.get(k, 0) + 1
        self.input_counts = occ
        norm = {}
        for k, n_k in occ.items():
            c = tuple(int(v) for v in counts[k])
            if len(c) != len(self.z_alphabet) or sum(c) != n_k or min(c) < 0:
                raise ValidationError(
                    f"conditional counts {c} incompatible with {n_k} occurrences of {k!r}")
            norm[k] = c
        self.counts = norm

    @property
    def n(self) -> int:
        return len(self.inputs)

    @property
    def size(self) -> int:
        return math.prod(multinomial(c) for c in self.counts.values())

    def key(self) -> tuple:
        return tuple(sorted(self.counts.items(), key=lambda kv: repr(kv[0])))

    def channel(self, input_alphabet) -> CondPmf:
        """V as a CondPmf; inputs that never occur get a uniform placeholder row."""
        input_alphabet = tuple(input_alphabet)
        m = np.full((len(input_alphabet), len(self.z_alphabet)), 1.0 / len(self.z_alphabet))
        for k, c in self.counts.items():
            m[input_alphabet.index(k)] = np.array(c, dtype=float) / sum(c)
        return CondPmf(input_alphabet, self.z_alphabet, m)

    def cond_entropy(self) -> float:
        """H_V(Z | inputs) under the empirical input distribution, in bits."""
        n = self.n
        return sum((sum(c) / n) * _h(np.array(c, dtype=float) / sum(c))
                   for c in self.counts.values())

    def output_counts(self) -> tuple:
        return tuple(map(sum, zip(*self.counts.values())))

    def __contains__(self, z_seq) -> bool:
        z_seq = tuple(z_seq)
        if len(z_seq) != self.n:
            return False
        try:
            return conditional_counts(self.inputs, z_seq, self.z_alphabet) == self.counts
        except ValidationError:
            return False

    def __iter__(self) -> Iterator[tuple]:
        # lexicographic over z_1..z_n, drawing from per-input remaining counts
        remaining = {k: list(c) for k, c in self.counts.items()}
        n, inputs, zs = self.n, self.inputs, self.z_alphabet

        def rec(t):
            if t == n:
                yield ()
                return
            rem = remaining[inputs[t]]
            for s, c in enumerate(rem):
                if c:
                    rem[s] -= 1
                    for tail in rec(t + 1):
                        yield (zs[s],) + tail
                    rem[s] += 1

        return rec(0)

    def __repr__(self):
        return f"VShell(n={self.n}, counts={self.counts})"


def conditional_counts(inputs, z_seq, z_alphabet) -> dict:
    inputs, z_seq, z_alphabet = tuple(inputs), tuple(z_seq), tuple(z_alphabet)
    if len(inputs) != len(z_seq):
        raise ValidationError(f"length mismatch: {len(inputs)} vs {len(z_seq)}")
    out = {}
    for k, z in zip(inputs, z_seq):
        if z not in z_alphabet:
            raise ValidationError(f"symbol {z!r} not in output alphabet")
        row = out.setdefault(k, [0] * len(z_alphabet))
        row[z_alphabet.index(z)] += 1
    return {k: tuple(v) for k, v in out.items()}


def shell_of(x_seq, y_seq, z_seq, z_alphabet) -> VShell:
    """The V-shell containing z_seq, conditioned on (x_seq, y_seq) (y_seq may be None)."""
    inputs = _inputs(x_seq, y_seq)
    return VShell(inputs, z_alphabet, conditional_counts(inputs, z_seq, z_alphabet))


def vshell(x_seq, y_seq, v: CondPmf, tol: float = 1e-9) -> VShell:
    """Shell T_V(x, y) for a rational conditional type V given as a CondPmf.

    Pass ``y_seq=None`` for a single-user shell; V's input alphabet must then
    hold bare x symbols rather than pairs.
    """
    inputs = _inputs(x_seq, y_seq)
    if not inputs:
        raise ValidationError("shells need n >= 1")
    occ = {}
    for k in inputs:
        occ[k] = occ.get(k, 0) + 1
    counts = {}
    for k, n_k in occ.items():
        if k not in v.input_alphabet:
            raise ValidationError(f"input {k!r} not in V's input alphabet")
        real = n_k * v.matrix[v.input_alphabet.index(k)]
        ints = np.rint(real)
        if np.max(np.abs(real - ints)) > tol:
            raise ValidationError(
                f"V(.|{k!r}) is not a conditional type for {n_k} occurrences")
        counts[k] = tuple(int(c) for c in ints)
    return VShell(inputs, v.output_alphabet, counts)


def enumerate_shells(x_seq, y_seq, z_alphabet, cap: int | None = None) -> list:
    """Every nonempty shell T_V(x, y); together they partition Z^n."""
    inputs = _inputs(x_seq, y_seq)
    z_alphabet = tuple(z_alphabet)
    occ = {}
    for k in inputs:
        occ[k] = occ.get(k, 0) + 1
    keys = list(occ)
    projected = math.prod(num_compositions(occ[k], len(z_alphabet)) for k in keys)
    check_cap("enumerate_shells", projected, cap)
    per_key = [list(compositions(occ[k], len(z_alphabet))) for k in keys]
    return [VShell(inputs, z_alphabet, dict(zip(keys, combo)))
            for combo in itertools.product(*per_key)]
