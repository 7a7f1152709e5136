"""Replicated flow experiments: flow-constant estimates, tail frequencies and speed fits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .capacities import DistributionSpec, sample_capacities
from .lattice_cylinder import CylinderSpec, EmptyGraphError, HeightRule, build_cylinder
from .maxflow import DegenerateCylinderError, FlowNetwork

log = logging.getLogger(__name__)

PILOT_STREAM_OFFSET = 1 << 32


class InsufficientDataError(ValueError):
    pass


def default_family(d: int = 2, normal: Sequence[int] | None = None,
                   height_rule: HeightRule | None = None) -> CylinderSpec:
    """Unit base, normal e_d unless given, h(n) = n unless given."""
    rule = height_rule or HeightRule("power", 1, 1)
    if normal is None:
        return CylinderSpec.straight(d, [1] * (d - 1), 1, height_rule=rule)
    return CylinderSpec.tilted(normal, [1] * (d - 1), 1, height_rule=rule)


# -- tau sampling ----------------------------------------------------------------

_TAU_CACHE: dict[tuple, np.ndarray] = {}


def _tau_chunk(args) -> np.ndarray:
    spec_text, dist_text, seed, stream, lo, hi = args
    spec = CylinderSpec.from_text(spec_text)
    dist = DistributionSpec.parse(dist_text)
    graph = build_cylinder(spec)
    if not graph.upper.any() or not graph.lower.any():
        raise DegenerateCylinderError("half boundaries are empty")
    net = FlowNetwork(graph, graph.upper, graph.lower)
    out = np.empty(hi - lo, dtype=np.float64)
    for r in range(lo, hi):
        caps = sample_capacities(graph, dist, seed, r, stream)
        out[r - lo] = net.value(caps)
    return out


def tau_samples(spec: CylinderSpec, dist: DistributionSpec, reps: int, seed: int,
                stream: int | None = None, workers: int = 1, chunk: int = 2000) -> np.ndarray:
    """tau for replications ``0..reps-1``; element r depends only on (seed, r, stream).

    Results are cached per (spec, law, seed, stream) and extended on demand.
    Chunks are reassembled in replication order, so the worker count cannot
    change the output.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    stream = spec.n if stream is None else stream
    key = (spec.to_text(), str(dist), int(seed), int(stream))
    have = _TAU_CACHE.get(key, np.zeros(0))
    if len(have) >= reps:
        return have[:reps].copy()
    bounds = list(range(len(have), reps, chunk)) + [reps]
    jobs = [(key[0], key[1], key[2], key[3], a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_tau_chunk, jobs))
    else:
        parts = [_tau_chunk(j) for j in jobs]
    full = np.concatenate([have] + parts)
    _TAU_CACHE[key] = full
    return full[:reps].copy()


def clear_cache() -> None:
    _TAU_CACHE.clear()


# -- flow constant ---------------------------------------------------------------


@dataclass
class NuEstimate:
    n: int
    h: str
    reps: int
    mean: float
    se: float
    dist: str
    spec: str
    seed: int
    status: str = "ok"


def spec_id(spec: CylinderSpec) -> str:
    v = ",".join(str(x) for x in spec.normal.v_int)
    rule = spec.height_rule
    hr = f"{rule.kind}:{rule.param_text()}" if rule else f"fixed:{spec.height}"
    return f"d{spec.d}_v{v}_h{hr}"


def estimate_nu(family: CylinderSpec, dist: DistributionSpec, n_list: Iterable[int], reps: int,
                seed: int, workers: int = 1) -> list[NuEstimate]:
    """Mean and standard error of ``tau / H(nA)`` at each scale."""
    if reps < 1:
        raise ValueError("reps must be at least 1")
    out = []
    for n in n_list:
        spec = family.at(n)
        try:
            taus = tau_samples(spec, dist, reps, seed, workers=workers)
        except (DegenerateCylinderError, EmptyGraphError) as exc:
            log.warning("skipping n=%d: %s", n, exc)
            out.append(NuEstimate(n, str(spec.height), reps, math.nan, math.nan, str(dist),
                                  spec_id(family), seed, status=f"skipped: {exc}"))
            continue
        # rescale after aggregating so integer flows give exact means and zero spread
        area = float(spec.area())
        mean = float(taus.sum()) / (reps * area)
        se = float(taus.std(ddof=1)) / (area * math.sqrt(reps)) if reps > 1 else 0.0
        out.append(NuEstimate(n, str(spec.height), reps, mean, se, str(dist),
                              spec_id(family), seed))
    return out


# -- tails -----------------------------------------------------------------------


def speed_candidates(d: int, n: int, h: float) -> dict[str, float]:
    return {
        "surface": float(n ** (d - 1)),
        "min-regime": float(n ** (d - 1) * min(n, h)),
        "volume": float(n ** (d - 1) * h),
    }


@dataclass
class TailEstimate:
    n: int
    h: float
    d: int
    lam: float
    reps: int
    hits: int
    p_hat: float
    ci_lo: float
    ci_hi: float
    neg_log: float
    speeds: dict = field(default_factory=dict)


def binomial_interval(hits: int, reps: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval; zero hits give the one-sided bound ``3/reps``."""
    if hits == 0:
        return 0.0, min(1.0, 3.0 / reps)
    a = (1 - level) / 2
    lo = float(stats.beta.ppf(a, hits, reps - hits + 1))
    hi = 1.0 if hits == reps else float(stats.beta.ppf(1 - a, hits + 1, reps - hits))
    return lo, hi


def tail_from_samples(ratios: np.ndarray, lam: float, n: int, h: float, d: int) -> TailEstimate:
    reps = len(ratios)
    hits = int(np.count_nonzero(ratios >= lam))
    p = hits / reps
    lo, hi = binomial_interval(hits, reps)
    neg_log = -math.log(p) if p > 0 else math.inf
    return TailEstimate(n, h, d, lam, reps, hits, p, lo, hi, neg_log, speed_candidates(d, n, h))


def tail_probability(spec: CylinderSpec, dist: DistributionSpec, lam: float, reps: int, seed: int,
                     workers: int = 1) -> TailEstimate:
    """Crude Monte Carlo frequency of ``tau / H(nA) >= lam``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    taus = tau_samples(spec, dist, reps, seed, workers=workers)
    return tail_from_samples(taus / float(spec.area()), lam, spec.n, float(spec.height), spec.d)


# -- regime fit ------------------------------------------------------------------


@dataclass
class ScalingFit:
    exponent: float
    intercept: float
    residuals: list[float]
    points: list[tuple[int, float]]
    classification: str
    candidate_slopes: dict
    best_candidate: str


def _loglog_slope(n: np.ndarray, y: np.ndarray) -> tuple[float, float, np.ndarray]:
    X = np.stack([np.log(n), np.ones(len(n))], axis=1)
    coef, *_ = np.linalg.lstsq(X, np.log(y), rcond=None)
    return float(coef[0]), float(coef[1]), np.log(y) - X @ coef


def regime_fit(estimates, d: int | None = None, heights: Sequence[float] | None = None,
               tolerance: float = 0.4) -> ScalingFit:
    """Least-squares slope of ``log(-log p)`` against ``log n``.

    ``estimates`` are TailEstimates (points with p in (0, 0.5) are used) or
    ``(n, -log p)`` pairs.  The slope is compared with the growth exponents
    of the three candidate speeds along the same ladder.
    """
    pts, hs = [], []
    for i, e in enumerate(estimates):
        if isinstance(e, TailEstimate):
            if 0 < e.p_hat < 0.5:
                pts.append((e.n, e.neg_log))
                hs.append(e.h)
            d = e.d if d is None else d
        else:
            n, y = e
            if y > 0 and math.isfinite(y):
                pts.append((int(n), float(y)))
                hs.append(heights[i] if heights is not None else float(n))
    if len(pts) < 3:
        raise InsufficientDataError(f"need at least 3 usable ladder points, got {len(pts)}")
    d = 2 if d is None else d
    n = np.array([p[0] for p in pts], dtype=float)
    y = np.array([p[1] for p in pts], dtype=float)
    slope, icpt, resid = _loglog_slope(n, y)
    cand = {}
    for name in ("surface", "min-regime", "volume"):
        sp = np.array([speed_candidates(d, int(k), h)[name] for k, h in zip(n, hs)])
        cand[name] = _loglog_slope(n, sp)[0]
    # min(n, h) equals h when h <= n, where the min-regime and volume speeds coincide
    order = ["surface", "volume", "min-regime"]
    best = min(order, key=lambda k: (abs(cand[k] - slope), order.index(k)))
    label = best if abs(cand[best] - slope) <= tolerance else "inconclusive"
    return ScalingFit(slope, icpt, resid.tolist(), pts, label, cand, best)


# -- calibrated ladder -------------------------------------------------------------


@dataclass
class LadderResult:
    estimates: list[TailEstimate]
    lam: float
    lam_initial: float
    nu_pilot: float
    recalibrated: bool
    notes: list[str]

    def to_dict(self) -> dict:
        return {"lam": self.lam, "lam_initial": self.lam_initial, "nu_pilot": self.nu_pilot,
                "recalibrated": self.recalibrated, "notes": self.notes,
                "estimates": [asdict(e) for e in self.estimates]}


def calibrate_lambda(family: CylinderSpec, dist: DistributionSpec, n: int, pilot_reps: int, seed: int,
                     delta: float | None = None, delta_rel: float = 0.3, workers: int = 1) -> tuple[float, float]:
    """``(lambda, nu_hat)`` with ``lambda = nu_hat + delta`` from a pilot at scale n.

    The pilot uses its own replication stream so it shares no draws with the
    scan.  ``delta`` defaults to ``delta_rel * nu_hat``.
    """
    spec = family.at(n)
    taus = tau_samples(spec, dist, pilot_reps, seed, stream=PILOT_STREAM_OFFSET + n, workers=workers)
    nu = float(np.mean(taus)) / float(spec.area())
    return nu + (delta_rel * nu if delta is None else delta), nu


def tail_ladder(family: CylinderSpec, dist: DistributionSpec, n_list: Sequence[int], reps: int, seed: int,
                lam: float | None = None, pilot_reps: int = 2000, delta: float | None = None,
                delta_rel: float = 0.3, p_range: tuple[float, float] = (1e-4, 0.5),
                recalibrate: bool = True, workers: int = 1) -> LadderResult:
    """Tail frequencies over a ladder at one threshold.

    Without an explicit lambda, a pilot at the largest n sets it.  If some
    point's estimate leaves ``p_range`` the threshold is replaced by the
    closest value (from the cached tau samples) that brings every point into
    range; the change is recorded in ``notes``.
    """
    notes = []
    nu = math.nan
    if lam is None:
        lam, nu = calibrate_lambda(family, dist, max(n_list), pilot_reps, seed, delta, delta_rel, workers)
        notes.append(f"pilot at n={max(n_list)} with {pilot_reps} reps: nu_hat={nu:.6g}, lambda={lam:.6g}")
    lam0 = lam
    ratios = {}
    for n in n_list:
        spec = family.at(n)
        ratios[n] = tau_samples(spec, dist, reps, seed, workers=workers) / float(spec.area())
    lo, hi = p_range

    sorted_r = [np.sort(r) for r in ratios.values()]

    def in_range(x: np.ndarray) -> np.ndarray:
        ok = np.ones(len(x), dtype=bool)
        for r in sorted_r:
            p = (len(r) - np.searchsorted(r, x, side="left")) / len(r)
            ok &= (p > lo) & (p < hi)
        return ok

    recal = False
    if recalibrate and not in_range(np.array([lam]))[0]:
        cands = np.unique(np.concatenate(sorted_r))
        ok = cands[in_range(cands)]
        if len(ok):
            new = float(ok[np.argmin(np.abs(ok - lam0))])
            notes.append(f"lambda {lam0:.6g} left p in {p_range} at some n; recalibrated to {new:.6g}")
            lam, recal = new, True
        else:
            notes.append(f"no single lambda keeps every p in {p_range}; kept {lam0:.6g}")
    ests = []
    for n in n_list:
        spec = family.at(n)
        ests.append(tail_from_samples(ratios[n], lam, n, float(spec.height), spec.d))
    return LadderResult(ests, lam, lam0, nu, recal, notes)

