"""Command-line batch front end.

    macsp capacity --channel adder.json --resolution 16 --out region.csv
    macsp exponent --channel ch.json --rates 0:0.5:6,0:0.5:6 --resolution 8 --out exp.csv
    macsp oracle   --channel ch.json --n 2 --mx 2 --my 2
    macsp verify   --channel ch.json --code code.json
    macsp repair   --channel ch.json --code code.json --out repaired.json

Channel files are JSON objects with label arrays ``X``, ``Y``, ``Z`` and a
nested array ``W[x][y][z]``; probabilities are parsed as exact decimals, row
sums are checked exactly against 1 (tolerance 1e-9) and then converted to
floats once. Code files hold ``n``, ``codebook_x``, ``codebook_y`` and an
optional ``decoder`` (``"ML"`` or a list of ``[i, j, [z-sequences]]``).

Exit status: 0 success, 1 usage error, 2 validation error, 3 cap exceeded.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

import numpy as np

from .errors import EnumerationCapError, MacspError, ValidationError
from .exponents import default_u_cap, sp_fixed_type, sp_thm2, sp_thm4, transfer_bounds
from .macchannel import (DecodingPartition, Mac, MultiUserCode, best_code_search,
                         evaluate, explicit, repair)
from .regions import RatePair, boundary, max_sum_rate, region_approx
from .typeclasses import DEFAULT_CAP, enumerate_shells
from .verify import extract_subcode_A3, verify_chain_A1, verify_identity_A2

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_CAP = 0, 1, 2, 3
CSV_COLUMNS = ("r_x", "r_y", "value", "method", "resolution", "diagnostics")
ROW_TOL = Decimal("1e-9")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# file formats


def _label(v):
    if isinstance(v, (str, int)) and not isinstance(v, bool):
        return v
    raise ValidationError(f"labels must be strings or integers, got {v!r}")


def _labels(raw, name) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ValidationError(f"{name} must be a nonempty array of labels")
    labels = tuple(_label(v) for v in raw)
    seen = set()
    for v in labels:
        if v in seen:
            raise ValidationError(f"duplicate label {v!r} in {name}")
        seen.add(v)
    return labels


def _decimal(v, where) -> Decimal:
    if isinstance(v, bool) or not isinstance(v, (int, Decimal, str)):
        raise ValidationError(f"{where}: {v!r} is not a number")
    try:
        d = Decimal(v)
    except InvalidOperation as exc:
        raise ValidationError(f"{where}: {v!r} is not a number") from exc
    if not d.is_finite() or d < 0:
        raise ValidationError(f"{where}: {v!r} is not a nonnegative number")
    return d


def parse_channel(text: str) -> Mac:
    try:
        raw = json.loads(text, parse_float=Decimal)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"channel file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValidationError("channel file must hold a JSON object")
    missing = [k for k in ("X", "Y", "Z", "W") if k not in raw]
    if missing:
        raise ValidationError(f"channel file lacks fields {missing}")
    X, Y, Z = (_labels(raw[k], k) for k in ("X", "Y", "Z"))
    W = raw["W"]
    if not (isinstance(W, list) and len(W) == len(X)):
        raise ValidationError(f"W must have {len(X)} entries, one per x")
    out = np.empty((len(X), len(Y), len(Z)))
    for a, x in enumerate(X):
        if not (isinstance(W[a], list) and len(W[a]) == len(Y)):
            raise ValidationError(f"W[{a}] must have {len(Y)} entries, one per y")
        for b, y in enumerate(Y):
            row = W[a][b]
            where = f"row W[{a}][{b}] (x={x!r}, y={y!r})"
            if not (isinstance(row, list) and len(row) == len(Z)):
                raise ValidationError(f"{where} must have {len(Z)} entries")
            dec = [_decimal(v, where) for v in row]
            total = sum(dec, Decimal(0))
            if abs(total - 1) > ROW_TOL:
                raise ValidationError(f"{where} sums to {total}, not 1")
            out[a, b] = [float(d) for d in dec]
    return Mac(X, Y, Z, out)


def ingest_channel(path) -> Mac:
    """Read and validate a channel file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ValidationError(f"cannot read channel file {path}: {exc}") from exc
    return parse_channel(text)


def channel_to_json(w: Mac) -> str:
    return json.dumps({"X": list(w.X), "Y": list(w.Y), "Z": list(w.Z),
                       "W": w.W.tolist()}, indent=1) + "\n"


def _seq(raw, alphabet, what) -> tuple:
    if not isinstance(raw, list):
        raise ValidationError(f"{what} must be an array")
    seq = tuple(raw)
    for s in seq:
        if s not in alphabet:
            raise ValidationError(f"{what}: symbol {s!r} not in alphabet {alphabet}")
    return seq


def parse_code(text: str, w: Mac) -> MultiUserCode:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"code file is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or not isinstance(raw.get("n"), int):
        raise ValidationError("code file must be an object with an integer n")
    n = raw["n"]
    cx = [_seq(c, w.X, f"codebook_x[{k}]") for k, c in enumerate(raw.get("codebook_x", []))]
    cy = [_seq(c, w.Y, f"codebook_y[{k}]") for k, c in enumerate(raw.get("codebook_y", []))]
    dec = raw.get("decoder", "ML")
    if dec != "ML":
        if not isinstance(dec, list):
            raise ValidationError("decoder must be \"ML\" or a list of [i, j, sequences]")
        sets = {}
        for entry in dec:
            if not (isinstance(entry, list) and len(entry) == 3):
                raise ValidationError(f"bad decoder entry {entry!r}")
            i, j, zs = entry
            sets[int(i), int(j)] = [_seq(z, w.Z, f"decoder set {(i, j)}") for z in zs]
        dec = DecodingPartition.from_sets(n, w.Z, len(cx), len(cy), sets)
    return MultiUserCode(n, cx, cy, dec)


def code_to_json(code: MultiUserCode) -> str:
    raw = {"n": code.n, "codebook_x": [list(c) for c in code.codebook_x],
           "codebook_y": [list(c) for c in code.codebook_y]}
    if code.is_explicit:
        raw["decoder"] = [[i, j, [list(z) for z in zs]]
                          for (i, j), zs in sorted(code.decoder.sets().items())]
    else:
        raw["decoder"] = "ML"
    return json.dumps(raw) + "\n"


# ---------------------------------------------------------------------------
# job configuration


def _axis(text: str) -> np.ndarray:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError as exc:
        raise UsageError(f"rate axis {text!r} is not MIN:MAX:STEPS") from exc
    if steps < 1 or lo < 0 or hi < lo:
        raise UsageError(f"rate axis {text!r} needs 0 <= MIN <= MAX and STEPS >= 1")
    return np.array([lo]) if steps == 1 else np.linspace(lo, hi, steps)


def parse_rates(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 2:
        raise UsageError("--rates takes RXMIN:RXMAX:STEPS,RYMIN:RYMAX:STEPS")
    return _axis(parts[0]), _axis(parts[1])


@dataclass(frozen=True)
class JobConfig:
    command: str
    channel: str
    rates: tuple = (np.array([0.0]), np.array([0.0]))
    resolution: int = 8
    u_cap: int | None = None
    n: int = 2
    m_x: int = 2
    m_y: int = 2
    samples: int | None = None
    code: str | None = None
    threshold: float | None = None
    p_xy: tuple | None = None
    out: str | None = None
    seed: int = 0
    cap: int = DEFAULT_CAP


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _diag(d: dict) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in sorted(d.items()))


def _csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for r in rows:
        wr.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _capacity(job: JobConfig, w: Mac) -> str:
    region = region_approx(w, job.resolution)
    rows = []
    for mu, rx, ry in boundary(region):
        rows.append((rx, ry, rx + ry, "boundary", job.resolution,
                     _diag({"mu": mu, "seed": job.seed})))
    best = max_sum_rate(region)
    rows.append((math.nan, math.nan, best, "max_sum_rate", job.resolution,
                 _diag({"components": len(region.bounds), "seed": job.seed})))
    return _csv(rows)


def _exponent(job: JobConfig, w: Mac) -> str:
    u_cap = job.u_cap if job.u_cap is not None else default_u_cap(w)
    rows = []
    for rx in job.rates[0]:
        for ry in job.rates[1]:
            r = RatePair(float(rx), float(ry))
            t4 = sp_thm4(w, r, job.resolution)
            t2 = sp_thm2(w, r, job.resolution, u_cap=u_cap)
            rows.append((r.r_x, r.r_y, t4.value, "sp_thm4", job.resolution,
                         _diag({"family": t4.family, "seed": job.seed})))
            rows.append((r.r_x, r.r_y, t2.value, "sp_thm2", job.resolution,
                         _diag({"family": t2.family, "u_cap": u_cap, "vacuous": t2.vacuous,
                                "checked_points": t2.diagnostics["checked_points"],
                                "seed": job.seed})))
            if job.p_xy is not None:
                p = np.array(job.p_xy, dtype=float).reshape(len(w.X), len(w.Y))
                ft = sp_fixed_type(w, r, p)
                rows.append((r.r_x, r.r_y, ft.value, "fixed_type", job.resolution,
                             _diag({"family": ft.family, "seed": job.seed,
                                    "p_xy": "|".join(repr(float(v)) for v in p.ravel())})))
            _, up = transfer_bounds(0.0, t2.value, r, "max_to_avg")
            rows.append((r.r_x, r.r_y, up, "transfer_avg_upper", job.resolution,
                         _diag({"from": "sp_thm2", "mode": "max_to_avg",
                                "seed": job.seed})))
    return _csv(rows)


def _kv(pairs) -> str:
    return "".join(f"{k}={_fmt(v)}\n" for k, v in pairs)


def _oracle(job: JobConfig, w: Mac) -> str:
    code, rep, info = best_code_search(w, job.n, job.m_x, job.m_y, cap=job.cap,
                                       samples=job.samples, seed=job.seed)
    return _kv([("n", job.n), ("m_x", job.m_x), ("m_y", job.m_y),
                ("average_error", rep.average_error), ("maximal_error", rep.maximal_error),
                ("candidates", info.candidates), ("sampled", info.sampled),
                ("seed", job.seed),
                ("codebook_x", json.dumps([list(c) for c in code.codebook_x])),
                ("codebook_y", json.dumps([list(c) for c in code.codebook_y]))])


def _load_code(job: JobConfig, w: Mac) -> MultiUserCode:
    if job.code is None:
        raise UsageError("this command needs --code")
    try:
        with open(job.code, encoding="utf-8") as fh:
            return parse_code(fh.read(), w)
    except OSError as exc:
        raise ValidationError(f"cannot read code file {job.code}: {exc}") from exc


def _verify(job: JobConfig, w: Mac) -> str:
    code = explicit(_load_code(job, w), w, job.cap)
    lines = [f"report=chain_A1 {ln}" for ln in verify_chain_A1(code, w, job.cap).lines()]
    # identity on every shell of every codeword pair, over the pair-input channel
    ok = total = 0
    ch = w.transition
    for x in code.codebook_x:
        for y in code.codebook_y:
            pairs = tuple(zip(x, y))
            for sh in enumerate_shells(pairs, None, w.Z, job.cap):
                total += 1
                ok += verify_identity_A2(ch, pairs, sh.channel(ch.input_alphabet), job.cap)
    lines.append(f"report=identity_A2 shells={total} holds={ok} overall={ok == total}")
    if job.threshold is not None:
        sub, ext = extract_subcode_A3(code, w, job.threshold, with_report=True, cap=job.cap)
        lines.append(f"report=extract_A3 side={ext.side} kept={list(ext.kept)} "
                     f"m_x={sub.m_x} m_y={sub.m_y} max_pair_error={float(ext.pair_errors.max())!r}")
    return "\n".join(lines) + "\n"


def _repair(job: JobConfig, w: Mac) -> str:
    code = _load_code(job, w)
    fixed = repair(code, w, cap=job.cap)
    before = evaluate(code, w, job.cap).average_error
    after = evaluate(fixed, w, job.cap).average_error
    print(f"average_error_before={before!r} average_error_after={after!r}", file=sys.stderr)
    return code_to_json(explicit(fixed, w, job.cap))


COMMANDS = {"capacity": _capacity, "exponent": _exponent, "oracle": _oracle,
            "verify": _verify, "repair": _repair}


def _write_once(path, text: str):
    """Write next to the target and rename, so no partial file is ever visible."""
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".macsp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run(job: JobConfig) -> int:
    w = ingest_channel(job.channel)
    text = COMMANDS[job.command](job, w)
    if job.out is None:
        sys.stdout.write(text)
    else:
        _write_once(job.out, text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="macsp", description="Sphere-packing bounds and exact oracles for DM-MACs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--channel", required=True)
        s.add_argument("--out")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--cap", type=_positive, default=DEFAULT_CAP)
        s.add_argument("--resolution", type=_positive, default=16 if name == "capacity" else 8)
        if name == "exponent":
            s.add_argument("--rates", default="0:0:1,0:0:1")
            s.add_argument("--u-cap", type=_positive)
            s.add_argument("--p-xy",
                           help="comma-separated P(x,y), row-major, for the fixed-type column")
        if name == "oracle":
            s.add_argument("--n", type=_positive, default=2)
            s.add_argument("--mx", type=_positive, default=2)
            s.add_argument("--my", type=_positive, default=2)
            s.add_argument("--samples", type=_positive)
        if name in ("verify", "repair"):
            s.add_argument("--code", required=True)
        if name == "verify":
            s.add_argument("--threshold", type=float)
    return p


def config_from_args(argv) -> JobConfig:
    a = build_parser().parse_args(argv)
    kw = dict(command=a.command, channel=a.channel, resolution=a.resolution, out=a.out,
              seed=a.seed, cap=a.cap)
    if a.command == "exponent":
        kw["rates"] = parse_rates(a.rates)
        kw["u_cap"] = a.u_cap
        if a.p_xy:
            try:
                kw["p_xy"] = tuple(float(v) for v in a.p_xy.split(","))
            except ValueError as exc:
                raise UsageError(f"--p-xy {a.p_xy!r} is not a list of numbers") from exc
    if a.command == "oracle":
        kw.update(n=a.n, m_x=a.mx, m_y=a.my, samples=a.samples)
    if a.command in ("verify", "repair"):
        kw["code"] = a.code
    if a.command == "verify":
        kw["threshold"] = a.threshold
    return JobConfig(**kw)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        job = config_from_args(argv)
        return run(job)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EnumerationCapError as exc:
        print(f"cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (MacspError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
