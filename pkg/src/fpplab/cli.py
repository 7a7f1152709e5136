"""Command line entry point: ``fpplab <command> CONFIG [--out DIR] [--workers K]``.

Configs are flat ``key = value`` text.  The seed is taken from the config
unless the environment variable FPPLAB_SEED is set, which takes precedence.
Exit codes: 0 success, 2 configuration error, 3 computation error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .capacities import DistributionSpec, InvalidDistributionError, sample_capacities
from .lattice_cylinder import CylinderSpec, InvalidSpecError, build_cylinder, parse_key_values

log = logging.getLogger("fpplab")

CSV_COLUMNS = ("run_id", "spec", "dist", "n", "h", "reps", "seed", "statistic", "value", "ci_lo", "ci_hi")

SPEC_KEYS = {"dim", "normal", "anchor", "lengths", "height_rule", "height_param"} | {f"frame_{k}" for k in range(1, 10)}
COMMON_KEYS = SPEC_KEYS | {"dist", "seed", "out_dir"}
COMMANDS = {
    "estimate-nu": ({"n_list", "reps"}, set()),
    "tail-scan": ({"n_list", "reps"}, {"lambda", "delta", "delta_rel", "pilot_reps", "p_min", "p_max",
                                       "recalibrate"}),
    "regime-fit": (set(), {"points", "input", "heights", "tolerance"}),
    "verify": (set(), {"instances", "fuzz", "decompositions", "zeta", "m_rule", "n_small", "N_list",
                       "inject_violation", "rate_samples"}),
    "dump-instance": ({"n"}, {"replication", "terminals", "output"}),
}
NEEDS_DIST = {"estimate-nu", "tail-scan", "dump-instance"}


class ConfigError(ValueError):
    pass


class ComputationError(RuntimeError):
    pass


# -- config ----------------------------------------------------------------------


class RunConfig:
    """Validated flat configuration for one command."""

    def __init__(self, command: str, values: dict[str, str]):
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}")
        required, optional = COMMANDS[command]
        spec_needed = command != "regime-fit"
        allowed = COMMON_KEYS | required | optional
        unknown = sorted(set(values) - allowed)
        if unknown:
            raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
        need = set(required) | {"seed"}
        if spec_needed:
            need |= {"dim", "normal"}
        if command in NEEDS_DIST:
            need.add("dist")
        missing = sorted(need - set(values))
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")
        self.command = command
        self.values = dict(values)
        env = os.environ.get("FPPLAB_SEED")
        try:
            self.seed = int(env) if env is not None else int(values["seed"])
        except ValueError:
            raise ConfigError("seed must be an integer") from None
        if self.seed < 0:
            raise ConfigError("seed must be nonnegative")
        self.family = None
        if spec_needed:
            spec_vals = {k: v for k, v in values.items() if k in SPEC_KEYS}
            self.family = CylinderSpec.from_mapping(spec_vals)
        self.dist = DistributionSpec.parse(values["dist"]) if "dist" in values else None
        # validate command keys eagerly
        for key in ("n_list", "N_list"):
            if key in values:
                self.int_list(key)
        for key in ("reps", "pilot_reps", "instances", "fuzz", "decompositions", "n", "n_small",
                    "replication", "rate_samples"):
            if key in values:
                self.integer(key, minimum=0 if key == "replication" else 1)
        for key in ("lambda", "delta", "delta_rel", "p_min", "p_max", "zeta", "tolerance"):
            if key in values:
                self.real(key)
        for key in ("recalibrate", "inject_violation"):
            if key in values:
                self.flag(key)
        if "m_rule" in values and values["m_rule"] not in ("max", "bounded", "slow"):
            raise ConfigError("m_rule must be one of max, bounded, slow")
        if "terminals" in values and values["terminals"] not in ("tau", "phi"):
            raise ConfigError("terminals must be tau or phi")

    @classmethod
    def from_text(cls, command: str, text: str) -> "RunConfig":
        try:
            return cls(command, parse_key_values(text))
        except InvalidSpecError as exc:
            raise ConfigError(str(exc)) from None

    def get(self, key, default=None):
        return self.values.get(key, default)

    def integer(self, key: str, default: int | None = None, minimum: int = 0) -> int:
        if key not in self.values:
            if default is None:
                raise ConfigError(f"missing required key: {key}")
            return default
        try:
            x = int(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer") from None
        if x < minimum:
            raise ConfigError(f"{key} must be at least {minimum}")
        return x

    def real(self, key: str, default: float | None = None) -> float:
        if key not in self.values:
            return default
        try:
            x = float(self.values[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number") from None
        if not math.isfinite(x):
            raise ConfigError(f"{key} must be finite")
        return x

    def flag(self, key: str, default: bool = False) -> bool:
        if key not in self.values:
            return default
        v = self.values[key].strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key} must be a boolean")

    def int_list(self, key: str) -> list[int]:
        try:
            out = [int(x) for x in self.values[key].replace(" ", "").split(",") if x]
        except ValueError:
            raise ConfigError(f"{key} must be a comma-separated list of integers") from None
        if not out or any(x < 1 for x in out):
            raise ConfigError(f"{key} must list positive integers")
        return out

    def canonical(self) -> str:
        vals = dict(self.values)
        vals["seed"] = str(self.seed)
        vals.pop("out_dir", None)
        return "\n".join(f"{k} = {vals[k]}" for k in sorted(vals)) + f"\ncommand = {self.command}\n"

    @property
    def run_id(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:12]


def new_run_dir(base: Path, name: str) -> Path:
    """A fresh directory; an existing run is never reused or modified."""
    base.mkdir(parents=True, exist_ok=True)
    path = base / name
    k = 1
    while path.exists():
        path = base / f"{name}-{k}"
        k += 1
    path.mkdir()
    return path


# -- output helpers ----------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return repr(x)
    return str(x)


def write_csv(path: Path, rows: list[dict]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r.get(c, "")) for c in CSV_COLUMNS])
    path.write_text(buf.getvalue())


def write_tsv(path: Path, xs, ys) -> None:
    path.write_text("".join(f"{_fmt(float(x))}\t{_fmt(float(y))}\n" for x, y in zip(xs, ys)))


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def _base_row(cfg: RunConfig, **kw) -> dict:
    from .montecarlo import spec_id

    row = {"run_id": cfg.run_id, "spec": spec_id(cfg.family) if cfg.family else "",
           "dist": str(cfg.dist) if cfg.dist else "", "seed": cfg.seed}
    row.update(kw)
    return row


def _metadata(cfg: RunConfig, **extra) -> dict:
    meta = {"command": cfg.command, "run_id": cfg.run_id, "seed": cfg.seed, "version": __version__,
            "config": dict(sorted(cfg.values.items())),
            "seed_source": "FPPLAB_SEED" if "FPPLAB_SEED" in os.environ else "config"}
    meta.update(extra)
    return meta


# -- commands --------------------------------------------------------------------


def cmd_estimate_nu(cfg: RunConfig, out: Path, workers: int) -> int:
    from .montecarlo import estimate_nu

    ests = estimate_nu(cfg.family, cfg.dist, cfg.int_list("n_list"), cfg.integer("reps", minimum=1),
                       cfg.seed, workers)
    rows = []
    for e in ests:
        rows.append(_base_row(cfg, n=e.n, h=e.h, reps=e.reps, statistic="nu_mean", value=e.mean,
                              ci_lo=e.mean - 1.96 * e.se, ci_hi=e.mean + 1.96 * e.se))
        rows.append(_base_row(cfg, n=e.n, h=e.h, reps=e.reps, statistic="nu_se", value=e.se,
                              ci_lo="", ci_hi=""))
    write_csv(out / "results.csv", rows)
    ok = [e for e in ests if e.status == "ok"]
    write_tsv(out / "nu_vs_n.tsv", [e.n for e in ok], [e.mean for e in ok])
    write_json(out / "metadata.json", _metadata(cfg, estimates=[vars(e) for e in ests]))
    for e in ests:
        print(f"n={e.n} h={e.h} nu_hat={e.mean:.6g} se={e.se:.3g} {e.status}")
    return 0


def cmd_tail_scan(cfg: RunConfig, out: Path, workers: int) -> int:
    from .montecarlo import tail_ladder

    res = tail_ladder(cfg.family, cfg.dist, cfg.int_list("n_list"), cfg.integer("reps", minimum=1), cfg.seed,
                      lam=cfg.real("lambda"), pilot_reps=cfg.integer("pilot_reps", 2000, 1),
                      delta=cfg.real("delta"), delta_rel=cfg.real("delta_rel", 0.3),
                      p_range=(cfg.real("p_min", 1e-4), cfg.real("p_max", 0.5)),
                      recalibrate=cfg.flag("recalibrate", True), workers=workers)
    rows = []
    for e in res.estimates:
        rows.append(_base_row(cfg, n=e.n, h=e.h, reps=e.reps, statistic="p_hat", value=e.p_hat,
                              ci_lo=e.ci_lo, ci_hi=e.ci_hi))
    write_csv(out / "results.csv", rows)
    usable = [e for e in res.estimates if e.p_hat > 0]
    write_tsv(out / "neglog_vs_n.tsv", [math.log(e.n) for e in usable], [math.log(e.neg_log) if e.neg_log > 0
                                                                          else -math.inf for e in usable])
    write_json(out / "metadata.json", _metadata(cfg, **res.to_dict()))
    for note in res.notes:
        print(note)
    for e in res.estimates:
        print(f"n={e.n} lambda={e.lam:.6g} p_hat={e.p_hat:.6g} [{e.ci_lo:.3g}, {e.ci_hi:.3g}]")
    return 0


def _read_points(cfg: RunConfig) -> tuple[list, int | None, list | None]:
    if "points" in cfg.values:
        pts = []
        try:
            for item in cfg.values["points"].split(","):
                n, y = item.split(":")
                pts.append((int(n), float(y)))
        except ValueError:
            raise ConfigError("points must look like 'n:neglog, n:neglog, ...'") from None
        heights = None
        if "heights" in cfg.values:
            heights = [float(x) for x in cfg.values["heights"].split(",")]
        d = int(cfg.values["dim"]) if "dim" in cfg.values else None
        return pts, d, heights
    if "input" in cfg.values:
        path = Path(cfg.values["input"])
        if not path.exists():
            raise ConfigError(f"input file {path} does not exist")
        pts, heights, d = [], [], None
        with path.open() as fh:
            for row in csv.DictReader(fh):
                if row["statistic"] != "p_hat":
                    continue
                p = float(row["value"])
                if 0 < p < 0.5:
                    pts.append((int(row["n"]), -math.log(p)))
                    heights.append(float(row["h"]))
                d = int(row["spec"].split("_")[0][1:]) if row["spec"].startswith("d") else d
        return pts, d, heights
    raise ConfigError("regime-fit needs 'points' or 'input'")


def cmd_regime_fit(cfg: RunConfig, out: Path, workers: int) -> int:
    from .montecarlo import regime_fit

    pts, d, heights = _read_points(cfg)
    fit = regime_fit(pts, d=d, heights=heights, tolerance=cfg.real("tolerance", 0.4))
    rows = [{"run_id": cfg.run_id, "spec": "", "dist": "", "n": "", "h": "", "reps": "", "seed": cfg.seed,
             "statistic": "exponent", "value": fit.exponent, "ci_lo": "", "ci_hi": ""}]
    write_csv(out / "results.csv", rows)
    write_tsv(out / "fit_points.tsv", [math.log(n) for n, _ in fit.points], [math.log(y) for _, y in fit.points])
    write_json(out / "metadata.json", _metadata(cfg, fit=vars(fit)))
    print(f"exponent={fit.exponent:.6g} classification={fit.classification} best={fit.best_candidate}")
    return 0


def run_verify_checks(cfg: RunConfig, workers: int = 1) -> list[tuple[str, bool, str]]:
    """The built-in verification suite; each entry is (name, passed, detail)."""
    from .capacities import uniforms
    from .deviations import (cardinality_bounds, chebyshev_tail_bound, cramer_rate, disjoint_crossing_paths,
                             pinned_boundary_witness, slab_decomposition, verify_cut_gluing)
    from .maxflow import SimpleGraph, max_flow, min_cut_bruteforce, phi, tau, validate_stream

    seed = cfg.seed
    rng = np.random.default_rng(seed)
    checks = []

    # solver against exhaustive cut enumeration
    bad = 0
    count = cfg.integer("instances", 50, 1)
    for _ in range(count):
        V = int(rng.integers(2, 8))
        pairs = [(a, b) for a in range(V) for b in range(a + 1, V)]
        E = int(rng.integers(1, min(12, len(pairs)) + 1))
        edges = [pairs[i] for i in rng.choice(len(pairs), E, replace=False)]
        g = SimpleGraph(V, np.array(edges))
        caps = rng.integers(0, 8, E)
        perm = rng.permutation(V)
        k = int(rng.integers(1, V))
        src, snk = perm[:k][: max(1, k // 2 + 1)], perm[k:]
        if max_flow(g, caps, src, snk).value != min_cut_bruteforce(g, caps, src, snk):
            bad += 1
    checks.append(("oracle_equivalence", bad == 0, f"{bad} mismatches in {count} instances"))

    # duality and stream feasibility on cylinders
    fuzz = cfg.integer("fuzz", 20, 1)
    fam = cfg.family
    dist_list = [DistributionSpec.parse(s) for s in ("exponential:1", "bernoulli:0.7", "uniform:2")]
    viol, dual = 0, 0
    inject = cfg.flag("inject_violation")
    order_bad = 0
    for k in range(fuzz):
        n = 2 + k % 5
        spec = fam.at(n)
        graph = build_cylinder(spec)
        caps = sample_capacities(graph, dist_list[k % 3], seed, k)
        res = tau(graph, caps)
        if abs(res.cut_value(caps) - res.value) > 1e-9 * max(1.0, abs(res.value)):
            dual += 1
        stream = res.stream
        if inject and k == 0:
            stream.g = stream.g.copy()
            stream.g[0] = caps.values[0] + 1
        viol += len(validate_stream(graph, caps, graph.upper, graph.lower, stream))
        if phi(graph, caps).value > res.value + 1e-9 * max(1.0, res.value):
            order_bad += 1
    checks.append(("duality", dual == 0, f"{dual} cut/flow mismatches in {fuzz} instances"))
    checks.append(("stream_feasibility", viol == 0, f"{viol} violations"))
    checks.append(("phi_le_tau", order_bad == 0, f"{order_bad} instances with phi > tau"))

    # gluing inequality and separation
    zeta = cfg.real("zeta")
    m_rule = cfg.get("m_rule", "max")
    n_small = cfg.integer("n_small", 3, 1)
    glue_bad = 0
    decomps = cfg.integer("decompositions", 5, 1)
    for k in range(decomps):
        N = int(rng.integers(4 * n_small, 6 * n_small + 1))
        plan = slab_decomposition(fam, N, n_small, zeta, m_rule)
        caps = sample_capacities(plan.graph, dist_list[k % 2], seed, k, stream=1 << 20)
        glue_bad += verify_cut_gluing(plan, caps).violations
    checks.append(("cut_gluing", glue_bad == 0, f"{glue_bad} violating slabs in {decomps} plans"))

    # cardinalities
    N_list = cfg.int_list("N_list") if "N_list" in cfg.values else [4 * n_small, 8 * n_small, 16 * n_small]
    rep = cardinality_bounds(fam, N_list, n_small, zeta, m_rule)
    ok = all(r.card_E0 > 0 and r.card_E1 > 0 for r in rep.rows)
    checks.append(("cardinality_positive", ok,
                   f"C0 spread {rep.spread('C0'):.3f}, C1 spread {rep.spread('C1'):.3f}"))

    # pinned boundary witness (straight d-dimensional cylinder)
    d = fam.d
    z = 2 * d if zeta is None else zeta
    sizes = []
    pin_ok = True
    for n in (4 * d, 8 * d):
        spec = CylinderSpec.straight(d, [1] * (d - 1), n, max(2, n // 2))
        graph = build_cylinder(spec)
        wit = pinned_boundary_witness(spec, zeta=z, graph=graph)
        caps = np.zeros(graph.num_edges, dtype=np.int64)
        caps[wit.edge_ids] = 10**6
        pin_ok &= tau(graph, caps).value >= 10**6 and len(wit.edges) <= wit.K
        sizes.append(len(wit.edges))
    checks.append(("pinned_boundary", bool(pin_ok), f"witness sizes {sizes}"))

    # disjoint crossing paths
    spec = CylinderSpec.straight(2, [1], 10, 5)
    paths = disjoint_crossing_paths(spec, 1.0)
    flat = [e for p in paths for e in p]
    checks.append(("disjoint_paths", len(paths) >= 10 and len(flat) == len(set(flat)),
                   f"{len(paths)} paths"))

    # rate function and tail bound arithmetic
    expo = DistributionSpec.parse("exponential:1")
    n_rate = cfg.integer("rate_samples", 100000, 1)
    x = expo.inverse_cdf(uniforms(n_rate, seed, 0, stream=1 << 21))
    target = 1 - math.log(2)
    emp = cramer_rate(x, 2.0)
    checks.append(("cramer_rate", abs(emp - target) <= 0.05 * target and cramer_rate(x, float(x.mean())) < 0.01,
                   f"empirical rate at 2: {emp:.5f} (exact {target:.5f})"))
    tb = chebyshev_tail_bound(expo, 10, 1.0, 100.0, 0.5).value
    exact = math.exp(-100 * (0.25 - 10 * math.log(2) / 100))
    checks.append(("chebyshev_bound", math.isclose(tb, exact, rel_tol=1e-9), f"{tb:.6e}"))
    return checks


def cmd_verify(cfg: RunConfig, out: Path, workers: int) -> int:
    checks = run_verify_checks(cfg, workers)
    rows = [_base_row(cfg, n="", h="", reps="", statistic=name, value=int(ok), ci_lo="", ci_hi="")
            for name, ok, _ in checks]
    write_csv(out / "results.csv", rows)
    write_json(out / "metadata.json", _metadata(cfg, checks=[{"name": n, "passed": ok, "detail": det}
                                                              for n, ok, det in checks]))
    failed = [n for n, ok, _ in checks if not ok]
    for name, ok, det in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {det}")
    if failed:
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


def cmd_dump_instance(cfg: RunConfig, out: Path, workers: int) -> int:
    from .maxflow import write_dimacs

    n = cfg.integer("n", minimum=1)
    spec = cfg.family.at(n)
    graph = build_cylinder(spec)
    caps = sample_capacities(graph, cfg.dist, cfg.seed, cfg.integer("replication", 0, 0))
    which = cfg.get("terminals", "tau")
    src, snk = (graph.upper, graph.lower) if which == "tau" else (graph.bottom, graph.top)
    name = cfg.get("output", "instance.max")
    comment = f"fpplab {__version__} {which} n={n} dist={cfg.dist} seed={cfg.seed}\n" + spec.to_text().strip()
    with (out / name).open("w") as fh:
        write_dimacs(graph, caps, src, snk, fh, comment=comment)
    write_json(out / "metadata.json", _metadata(cfg, vertices=graph.num_vertices, edges=graph.num_edges))
    print(out / name)
    return 0


HANDLERS = {
    "estimate-nu": cmd_estimate_nu,
    "tail-scan": cmd_tail_scan,
    "regime-fit": cmd_regime_fit,
    "verify": cmd_verify,
    "dump-instance": cmd_dump_instance,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fpplab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in HANDLERS:
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path, help="flat key = value config file")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: out_dir key or ./runs)")
        sp.add_argument("--workers", type=int, default=1, help="worker processes")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        cfg = RunConfig.from_text(args.command, text)
    except (ConfigError, InvalidSpecError, InvalidDistributionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if args.workers < 1:
        print("config error: --workers must be at least 1", file=sys.stderr)
        return 2
    base = args.out or Path(cfg.get("out_dir", "runs"))
    try:
        out = new_run_dir(base, f"{args.command}-{cfg.run_id}")
        return HANDLERS[args.command](cfg, out, args.workers)
    except (ConfigError, InvalidSpecError, InvalidDistributionError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any module failure is a computation error
        print(f"computation error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
