import itertools
import math

import numpy as np
import pytest

from conftest import adder_mac, random_mac
from macsp.errors import HypothesisError, InvalidCodeError, ValidationError
from macsp.macchannel import DecodingPartition, Mac, MultiUserCode, explicit
from macsp.probkit import CondPmf
from macsp.typeclasses import enumerate_shells
from macsp.verify import (extract_subcode_A3, select_rows_A3, shell_exponent, v0_shell,
                          verify_chain_A1, verify_identity_A2)
from oracles import seq_log2_prob

SEQS = {n: list(itertools.product((0, 1), repeat=n)) for n in (1, 2, 3)}


def random_good_code(rng, n_max=3, m_max=3):
    n = int(rng.integers(1, n_max + 1))
    mx = int(rng.integers(1, min(m_max, 2 ** n) + 1))
    my = int(rng.integers(1, min(m_max, 2 ** n) + 1))
    cx = [SEQS[n][i] for i in rng.choice(2 ** n, mx, replace=False)]
    cy = [SEQS[n][i] for i in rng.choice(2 ** n, my, replace=False)]
    return MultiUserCode(n, cx, cy)


def direct_pair_errors(code, w):
    """Per-pair errors by summing W^n over z outside D_ij, straight from the definition."""
    zs = list(itertools.product(w.Z, repeat=code.n))
    out = np.zeros((code.m_x, code.m_y))
    for i, x in enumerate(code.codebook_x):
        for j, y in enumerate(code.codebook_y):
            for z in zs:
                if code.decoder.decode(z) != (i, j):
                    out[i, j] += 2.0 ** seq_log2_prob(w.W, w.X, w.Y, w.Z, x, y, z)
    return out


# ---------------------------------------------------------------------------
# A.1


@pytest.mark.parametrize("seed", range(12))
def test_chain_holds_on_random_good_codes(seed):
    rng = np.random.default_rng(seed)
    w = random_mac(rng, nz=int(rng.integers(2, 4)))
    rep = verify_chain_A1(random_good_code(rng), w)
    assert rep.overall, [s.line() for s in rep.failed()]
    assert all(s.holds for s in rep.steps if s.kind == "exact")


def test_chain_on_ml_code_n3():
    rng = np.random.default_rng(42)
    w = random_mac(rng, nz=3)
    code = MultiUserCode(3, [(0, 0, 1), (1, 1, 0), (0, 1, 1)], [(0, 1, 0), (1, 0, 1)])
    rep = verify_chain_A1(code, w)
    assert rep.overall
    names = {s.step for s in rep.steps}
    for must in ("decoding_sets_disjoint", "shell_partition", "shell_equal_probability",
                 "shell_size_entropy_bound", "output_type_entropy_bound", "error_ge_lb_xy",
                 "error_ge_lb_x", "error_ge_lb_y"):
        assert must in names
    assert rep.step("error_ge_lb_xy").lhs == pytest.approx(rep.diagnostics["average_error"])
    assert all("=" in line for line in rep.lines())


def test_single_pair_code_degenerates(adder):
    rep = verify_chain_A1(MultiUserCode(2, [(0, 1)], [(1, 1)]), adder)
    assert rep.overall


def test_chain_rejects_bad_code(adder):
    with pytest.raises(InvalidCodeError):
        verify_chain_A1(MultiUserCode(2, [(0, 1), (0, 1)], [(1, 1)]), adder)


def test_overlapping_decoding_sets_are_a_precondition_error(adder):
    with pytest.raises(InvalidCodeError):
        DecodingPartition.from_sets(1, adder.Z, 2, 1, {(0, 0): [(1,)], (1, 0): [(1,)]})


def test_chain_with_non_ml_decoder():
    rng = np.random.default_rng(3)
    w = random_mac(rng, nz=3)
    code = explicit(MultiUserCode(2, [(0, 0), (1, 1)], [(0, 1), (1, 0)]), w)
    a = rng.integers(-1, 4, 9)
    code = code.with_decoder(DecodingPartition(2, w.Z, 2, 2, a))
    assert verify_chain_A1(code, w).overall


def test_approximation_gap_is_only_a_diagnostic():
    rng = np.random.default_rng(0)
    w = random_mac(rng)
    rep = verify_chain_A1(random_good_code(rng), w)
    assert any(k.startswith("approx_") for k in rep.diagnostics)
    assert all(not s.step.startswith("approx_") for s in rep.steps)


# ---------------------------------------------------------------------------
# A.2


def test_identity_deterministic_channel():
    w = CondPmf((0, 1), ("a", "b"), [[1, 0], [0, 1]])
    x = (0, 1, 1)
    v = CondPmf((0, 1), ("a", "b"), [[1, 0], [0, 1]])
    assert shell_exponent(w, x, v) == pytest.approx(0.0, abs=1e-15)
    assert verify_identity_A2(w, x, v)


@pytest.mark.parametrize("seed", range(5))
def test_identity_all_shells(seed):
    rng = np.random.default_rng(seed)
    nz = int(rng.integers(2, 4))
    w = CondPmf((0, 1), tuple(range(nz)), rng.dirichlet(np.ones(nz), size=2))
    n = int(rng.integers(1, 6))
    x = tuple(int(a) for a in rng.integers(0, 2, n))
    for sh in enumerate_shells(x, None, w.output_alphabet):
        v = sh.channel(w.input_alphabet)
        assert verify_identity_A2(w, x, v)
        # direct log-probability of one member
        y = next(iter(sh))
        lp = sum(math.log2(w.matrix[a, b]) if w.matrix[a, b] > 0 else -math.inf
                 for a, b in zip(x, y))
        assert lp == pytest.approx(-n * shell_exponent(w, x, v), abs=1e-9)


def test_v0_matches_exhaustive_max():
    rng = np.random.default_rng(7)
    w = CondPmf((0, 1), (0, 1, 2), rng.dirichlet(np.ones(3), size=2))
    x = (0, 1, 1, 0, 1)
    sh, val = v0_shell(w, x)
    best = max(sum(math.log2(w.matrix[a, b]) for a, b in zip(x, y))
               for y in itertools.product(range(3), repeat=5))
    assert -5 * val == pytest.approx(best, abs=1e-9)
    y = next(iter(sh))
    assert sum(math.log2(w.matrix[a, b]) for a, b in zip(x, y)) == pytest.approx(best, abs=1e-9)


def test_identity_on_mac_input():
    w = random_mac(np.random.default_rng(1), nz=3)
    pairs = tuple(itertools.product(w.X, w.Y))
    x = (pairs[0], pairs[3], pairs[3])
    sh = enumerate_shells(x, None, w.Z)[2]
    assert verify_identity_A2(w, x, sh.channel(pairs))


# ---------------------------------------------------------------------------
# A.3


def test_select_rows_uniform_keeps_all():
    kept, _ = select_rows_A3(np.full((4, 4), 0.05), 0.2)
    assert kept == (0, 1, 2, 3)


def test_select_rows_better_half():
    avg = 0.02
    e = np.array([[avg / 2] * 2 + [3 * avg / 2] * 2] * 4)
    kept, rows = select_rows_A3(e, 0.1)
    assert kept == (0, 1)
    # the dropped columns are three times the kept ones
    assert rows[2] == pytest.approx(3 * rows[0])


def test_select_rows_single_column_and_hypothesis():
    assert select_rows_A3(np.array([[0.1], [0.0]]), 0.2)[0] == (0,)
    with pytest.raises(HypothesisError):
        select_rows_A3(np.full((2, 2), 0.1), 0.2)
    with pytest.raises(ValidationError):
        select_rows_A3(np.zeros((0, 2)), 0.2)


@pytest.mark.parametrize("seed", range(8))
def test_extract_subcode_4x4(seed):
    rng = np.random.default_rng(seed)
    w = random_mac(rng, nz=3, alpha=0.3)
    code = explicit(MultiUserCode(2, SEQS[2], SEQS[2]), w)
    errs = direct_pair_errors(code, w)
    tau = 2 * errs.mean() + 1e-3
    sub, rep = extract_subcode_A3(code, w, tau, with_report=True)
    assert rep.side == "y"
    assert sub.m_y >= 2 and sub.m_x == 4
    again = direct_pair_errors(sub, w)
    np.testing.assert_allclose(again, errs[:, list(rep.kept)], atol=1e-12)
    assert np.all(again < tau * code.m_x)


def test_extract_shrinks_higher_rate_side():
    rng = np.random.default_rng(9)
    w = random_mac(rng, nz=3, alpha=0.3)
    code = explicit(MultiUserCode(2, SEQS[2], SEQS[2][:2]), w)
    tau = 2 * direct_pair_errors(code, w).mean() + 1e-3
    sub, rep = extract_subcode_A3(code, w, tau, with_report=True)
    assert rep.side == "x" and sub.m_y == 2 and sub.m_x >= 2
    assert np.all(direct_pair_errors(sub, w) < tau * code.m_y)


def test_extract_single_codeword():
    w = random_mac(np.random.default_rng(2))
    code = explicit(MultiUserCode(2, SEQS[2][:1], SEQS[2][:1]), w)
    sub = extract_subcode_A3(code, w, 1.0)
    assert (sub.m_x, sub.m_y) == (1, 1)
