#!/usr/bin/env python3
"""Independent reference values for the cost model, backoff and schedules.

Computed from the raw AWS constants with exact decimal arithmetic and
written to frozen.json. Regenerate with: python3 oracle.py > frozen.json
"""
import json
import math
from decimal import Decimal as D, getcontext

getcontext().prec = 40

MB = D(10) ** 6
ALPHA = {"s3": D("14.7e-3"), "dynamodb": D("8.9e-3"), "redis": D("0.88e-3"), "direct": D("0.39e-3")}
BETA_INV = {"s3": 50 * MB, "dynamodb": 7 * MB, "redis": 100 * MB, "direct": 400 * MB}
S3_FAST = 500 * MB
PRICE = {
    "faas": D("1.67e-5"),
    "hps": D("3.72e-6"),
    "redis": D("1.05e-5"),
    "s3_d": D("4.3e-7"),
    "s3_u": D("5.4e-6"),
    "ddb_d": D("7.62e-8"),
    "ddb_u": D("1.5e-6"),
}
SIZE = 1_000_000
REPS = 1_000_000
P = 2
M = 2


def t(alpha, beta_inv, size=SIZE):
    return alpha + D(size) / beta_inv


def faas(seconds_per_exchange):
    return P * seconds_per_exchange * REPS * PRICE["faas"] * M


def channel(kind, seconds_per_exchange):
    if kind == "s3":
        return REPS * (PRICE["s3_u"] + PRICE["s3_d"])
    if kind == "dynamodb":
        units = max(1, math.ceil(SIZE / 1000))
        return REPS * units * (PRICE["ddb_u"] + PRICE["ddb_d"])
    rate = PRICE["redis"] if kind == "redis" else PRICE["hps"]
    return seconds_per_exchange * REPS * rate


def table4():
    rows = {}
    for kind in ("s3", "dynamodb", "redis", "direct"):
        secs = t(ALPHA[kind], BETA_INV[kind])
        rows[kind] = {"time_ms": float(secs * 1000), "faas": float(faas(secs)), "channel": float(channel(kind, secs))}
    fast = t(ALPHA["s3"], S3_FAST)
    rows["s3_500MBps"] = {"time_ms": float(fast * 1000), "faas": float(faas(fast)), "channel": float(channel("s3", fast))}
    for r in rows.values():
        r["total"] = r["faas"] + r["channel"]
    return rows


def backoff(retry):
    return retry if retry <= 100 else 2 * retry


def binomial(n):
    """Plain simulation: in round k every informed rank v sends to v + 2^(k-1)."""
    informed = {0}
    steps = []
    rnd = 0
    while len(informed) < n:
        rnd += 1
        new = {v + (1 << (rnd - 1)) for v in informed} - informed
        new = {w for w in new if w < n}
        steps += [(rnd, w) for w in new]
        informed |= new
    return steps


def rd_frames(n):
    if n == 1:
        return 0
    p = 1 << (n.bit_length() - 1)
    return 2 * (n - p) + p * int(math.log2(p))


def main():
    out = {
        "table4": table4(),
        "backoff": {
            "delay_ms": {str(r): backoff(r) for r in (1, 2, 99, 100, 101, 102, 250, 500)},
            "worst_case_ms": sum(backoff(r) for r in range(1, 501)),
        },
        "binomial": {
            str(n): {"messages": len(binomial(n)), "depth": max((s[0] for s in binomial(n)), default=0)}
            for n in range(1, 65)
        },
        "allreduce_frames": {str(n): rd_frames(n) for n in range(1, 17)},
    }
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
