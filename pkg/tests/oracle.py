"""Independent reference computations used to check the streaming code.

Nothing here imports the package's metric, matching or statistics code: event
lines are split by hand, paths are matched by list equality and probabilities
come from mpmath or the normal distribution.
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import mpmath


def parse_line(line: str) -> dict[str, str]:
    return dict(part.split("=", 1) for part in line.rstrip("\n").split("|"))


def traversals(lines):
    """(instance, section, entry ms, exit ms) per OPEN/CLOSED pair in the log."""
    opened = {}
    out = []
    for line in lines:
        f = parse_line(line)
        state = f["currentState"]
        aid = f["activityInstanceId"]
        if state == "OPEN_RUNNING":
            opened[aid] = f
        elif state in ("CLOSED_COMPLETED", "OPEN_CLOSED_COMPLETED") and aid in opened:
            o = opened.pop(aid)
            out.append((f["processInstanceId"], f["activityDefinitionId"], int(o["timestamp"]), int(f["timestamp"])))
    return out


def entries(lines):
    """(section, entry ms) per OPEN event."""
    out = []
    for line in lines:
        f = parse_line(line)
        if f["currentState"] == "OPEN_RUNNING":
            out.append((f["activityDefinitionId"], int(f["timestamp"])))
    return out


def brute_force_metrics(lines, definitions: dict[str, list[str]], window_ms: int = 900_000):
    """Recompute every KPI table from raw event lines.

    Returns (activity, journey, journey_flow):
      activity[(section, window)] = (sum_ms, count, entered)
      journey[(definition, window)] = (sum_ms, count)
      journey_flow[(definition, window)] = list of per-component counts
    An instance counts as a journey when its ordered section list equals a
    definition exactly.
    """
    lines = list(lines)
    activity: dict = defaultdict(lambda: [0, 0, 0])
    for sid, t in entries(lines):
        activity[(sid, t - t % window_ms)][2] += 1
    per_instance = defaultdict(list)
    for pid, sid, t0, t1 in traversals(lines):
        acc = activity[(sid, t0 - t0 % window_ms)]
        acc[0] += t1 - t0
        acc[1] += 1
        per_instance[pid].append((t0, sid, t1))

    journey: dict = defaultdict(lambda: [0, 0])
    flow: dict = {}
    for pid, comps in per_instance.items():
        comps.sort()
        path = [c[1] for c in comps]
        matched = [d for d, secs in definitions.items() if list(secs) == path]
        if not matched:
            continue
        d = matched[0]
        first = comps[0][0]
        j = journey[(d, first - first % window_ms)]
        j[0] += sum(t1 - t0 for t0, _, t1 in comps)
        j[1] += 1
        for idx, (t0, _, _) in enumerate(comps):
            key = (d, t0 - t0 % window_ms)
            flow.setdefault(key, [0] * len(path))[idx] += 1
    return (
        {k: tuple(v) for k, v in activity.items()},
        {k: tuple(v) for k, v in journey.items()},
        flow,
    )


def exact_mean_sd(xs):
    fr = [Fraction(x) for x in xs]
    n = len(fr)
    m = sum(fr) / n
    var = sum((x - m) ** 2 for x in fr) / (n - 1)
    return float(m), math.sqrt(var)


def betainc_mp(a, b, x, dps: int = 40) -> float:
    with mpmath.workdps(dps):
        return float(mpmath.betainc(a, b, 0, x, regularized=True))


def t_sf_two_sided_mp(t: float, df: int, dps: int = 40) -> float:
    """Two-sided tail by integrating the t density numerically."""
    with mpmath.workdps(dps):
        t = mpmath.mpf(abs(t))
        v = mpmath.mpf(df)
        c = mpmath.gamma((v + 1) / 2) / (mpmath.sqrt(v * mpmath.pi) * mpmath.gamma(v / 2))
        tail = mpmath.quad(lambda x: c * (1 + x * x / v) ** (-(v + 1) / 2), [t, mpmath.inf])
        return float(2 * tail)


def normal_two_sided(t: float) -> float:
    return math.erfc(abs(t) / math.sqrt(2))


def normal_upper_tail(x: float, mean: float, sd: float) -> float:
    return 0.5 * math.erfc((x - mean) / (sd * math.sqrt(2)))
