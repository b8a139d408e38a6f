"""Experiment configuration, dispatch and machine-readable outputs."""

from __future__ import annotations

import configparser
import hashlib
import io as _io
import time
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from . import __version__
from . import cocycle, hyptimes, measures, periodic
from .io import file_digest, write_csv, write_json
from .kernels import BACKEND
from .parallel import default_workers, map_chunks, seed_rng, uniform_seeds
from .torus import (
    DEFAULT_MATRIX,
    DEFAULT_RHO,
    AnosovSpec,
    InvalidMapError,
    anosov,
    fixed_point_count,
    mane,
    validate_mane_spec,
)

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class ValidationFailure(ValueError):
    pass


# --------------------------------------------------------------------------
# parameter schema


def _pos_int(v):
    n = int(float(v)) if isinstance(v, str) and "e" in v.lower() else int(v)
    if n < 1:
        raise ValueError("must be a positive integer")
    return n


def _nonneg_int(v):
    n = int(float(v)) if isinstance(v, str) and "e" in v.lower() else int(v)
    if n < 0:
        raise ValueError("must be a non-negative integer")
    return n


def _pos_float(v):
    x = float(v)
    if not x > 0:
        raise ValueError("must be positive")
    return x


def _nonneg_float(v):
    x = float(v)
    if x < 0:
        raise ValueError("must be non-negative")
    return x


def _float_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).replace(",", " ").split()]


def _choice(*options):
    def parse(v):
        v = str(v).strip()
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return v
    return parse


def _fmt_param(v):
    if isinstance(v, list):
        return " ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    params: dict          # name -> (parser, default); default None means "derived"
    runner: object = None


EXPERIMENTS: dict = {}


def experiment(name, description, **params):
    def deco(fn):
        EXPERIMENTS[name] = Experiment(name, description, params, fn)
        return fn
    return deco


def list_experiments():
    return [(e.name, e.description) for e in EXPERIMENTS.values()]


# --------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    experiment: str
    variant: str = "anosov"
    matrix: tuple = DEFAULT_MATRIX
    rho: float = DEFAULT_RHO
    delta: float | None = None
    rng_seed: int = 0
    workers: int | None = None
    output: str = ""
    params: dict = field(default_factory=dict)

    def map_spec(self):
        if self.variant == "anosov":
            return anosov(self.matrix)
        return mane(rho=self.rho, delta=self.delta, matrix=self.matrix)

    def param(self, key):
        return self.params[key]

    def to_dict(self):
        return {
            "map": {
                "variant": self.variant,
                "matrix": [list(r) for r in self.matrix],
                "rho": self.rho,
                "delta": self.delta,
            },
            "experiment": {
                "name": self.experiment,
                "rng_seed": self.rng_seed,
                "workers": self.workers,
                "output": self.output,
            },
            "params": {k: self.params[k] for k in sorted(self.params)},
        }

    def serialize(self):
        lines = ["[map]", f"variant = {self.variant}",
                 "matrix = " + "; ".join(" ".join(str(v) for v in r) for r in self.matrix)]
        lines.append(f"rho = {self.rho!r}")
        if self.delta is not None:
            lines.append(f"delta = {self.delta!r}")
        lines += ["", "[experiment]", f"name = {self.experiment}", f"rng_seed = {self.rng_seed}"]
        if self.workers is not None:
            lines.append(f"workers = {self.workers}")
        if self.output:
            lines.append(f"output = {self.output}")
        explicit = {k: v for k, v in self.params.items() if v is not None}
        if explicit:
            lines += ["", "[params]"]
            lines += [f"{k} = {_fmt_param(explicit[k])}" for k in sorted(explicit)]
        return "\n".join(lines) + "\n"

    def digest(self):
        return hashlib.sha256(self.serialize().encode()).hexdigest()


_MAP_KEYS = {"variant", "matrix", "rho", "delta"}
_EXP_KEYS = {"name", "rng_seed", "workers", "output"}


def _parse_matrix(text):
    rows = [r.split() for r in text.split(";")]
    try:
        M = tuple(tuple(int(v) for v in r) for r in rows)
    except ValueError as exc:
        raise ConfigError(f"matrix entries must be integers: {text!r}") from exc
    if len(M) != 3 or any(len(r) != 3 for r in M):
        raise ConfigError("matrix must have three rows of three integers")
    return M


def parse_config(text):
    """Parse INI text into an ExperimentConfig; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    extra = set(cp.sections()) - {"map", "experiment", "params"}
    if extra:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(extra))}")
    if "experiment" not in cp or "name" not in cp["experiment"]:
        raise ConfigError("missing [experiment] name")
    ex = cp["experiment"]
    bad = set(ex) - _EXP_KEYS
    if bad:
        raise ConfigError(f"unknown key(s) in [experiment]: {', '.join(sorted(bad))}")
    name = ex["name"].strip()
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; valid: {', '.join(EXPERIMENTS)}")
    cfg = ExperimentConfig(experiment=name)
    try:
        if "rng_seed" in ex:
            cfg.rng_seed = int(ex["rng_seed"])
            if not 0 <= cfg.rng_seed < 2 ** 64:
                raise ValueError("rng_seed must be a 64-bit unsigned integer")
        if "workers" in ex:
            cfg.workers = _pos_int(ex["workers"])
        cfg.output = ex.get("output", "").strip()
    except ValueError as exc:
        raise ConfigError(f"[experiment]: {exc}") from exc
    if "map" in cp:
        mp = cp["map"]
        bad = set(mp) - _MAP_KEYS
        if bad:
            raise ConfigError(f"unknown key(s) in [map]: {', '.join(sorted(bad))}")
        cfg.variant = mp.get("variant", "anosov").strip()
        if cfg.variant not in ("anosov", "mane"):
            raise ConfigError("variant must be 'anosov' or 'mane'")
        if "matrix" in mp:
            cfg.matrix = _parse_matrix(mp["matrix"])
        try:
            if "rho" in mp:
                cfg.rho = _nonneg_float(mp["rho"])
            if "delta" in mp:
                cfg.delta = float(mp["delta"])
        except ValueError as exc:
            raise ConfigError(f"[map]: {exc}") from exc
    schema = EXPERIMENTS[name].params
    given = dict(cp["params"]) if "params" in cp else {}
    bad = set(given) - set(schema)
    if bad:
        raise ConfigError(f"unknown parameter(s) for {name}: {', '.join(sorted(bad))}")
    for key, (parser, default) in schema.items():
        if key in given:
            try:
                cfg.params[key] = parser(given[key].strip())
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"parameter {key}: {exc}") from exc
        else:
            cfg.params[key] = default
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


# --------------------------------------------------------------------------
# results


@dataclass
class RunResult:
    manifest: dict
    exit_code: int
    out_dir: Path


def _check(name, value, threshold, passed):
    return {"name": name, "value": value, "threshold": threshold, "passed": bool(passed)}


def _seeds(cfg, n, stream):
    return uniform_seeds(cfg.rng_seed, int(n), stream)


def _auto_b(cfg, spec, workers):
    b = cfg.params.get("b")
    if b is not None:
        return float(b)
    seeds = _seeds(cfg, 50, 90)
    return hyptimes.default_b(spec, seeds, L=2000)


def _skeleton(spec, period_max=2, eps=0.05, n_avg=10 ** 5, m=8):
    pool = []
    for n in range(1, period_max + 1):
        pool += [s for s in periodic.find_periodic(spec, n) if s.period == n]
    return periodic.skeleton_candidates(spec, pool, eps=eps, n_avg=n_avg, m=m)


# --------------------------------------------------------------------------
# experiments


@experiment("lyapunov", "finite-time Lyapunov spectrum by QR iteration",
            n=(_pos_int, 10 ** 4), warmup=(_nonneg_int, 200), n_seeds=(_pos_int, 8))
def _run_lyapunov(cfg, spec, out, workers):
    X = _seeds(cfg, cfg.param("n_seeds"), 1)
    E = cocycle.ftle_batch(spec, X, cfg.param("n"), cfg.param("warmup"))
    rows = [[i, *X[i], *E[i]] for i in range(len(X))]
    write_csv(out / "exponents.csv", ["seed_index", "x", "y", "z", "lambda_1", "lambda_2", "lambda_3"], rows)
    logk = np.log(spec.eigenvalues[::-1])
    checks = []
    if isinstance(spec, AnosovSpec):
        err = float(np.abs(E - logk).max())
        checks.append(_check("exponents match log eigenvalues", err, 1e-6, err <= 1e-6))
        s = float(np.abs(E.sum(axis=1)).max())
        checks.append(_check("exponent sum vanishes", s, 1e-9, s <= 1e-9))
    else:
        c = float(E[:, 1].min())
        checks.append(_check("center exponent positive", c, 0.0, c > 0.0))
    summary = {"mean_exponents": E.mean(axis=0), "log_eigenvalues": logk}
    return summary, checks


@experiment("hyp-times", "hyperbolic-time density and expansion times along orbits",
            n_seeds=(_pos_int, 200), L=(_pos_int, 2000), warmup=(_nonneg_int, 200),
            b=(_pos_float, None))
def _run_hyp_times(cfg, spec, out, workers):
    b = _auto_b(cfg, spec, workers)
    X = _seeds(cfg, cfg.param("n_seeds"), 2)
    A = np.vstack(map_chunks(partial(cocycle.contraction_series_batch, spec,
                                     L=cfg.param("L"), warmup=cfg.param("warmup")), (X,), workers))
    rows, dens = [], []
    E = hyptimes.expansion_times(A, b)
    for i, a in enumerate(A):
        rep = hyptimes.detect_hyperbolic_times(a, b)
        dens.append(rep.density)
        rows.append([i, rep.density, rep.first_time, None if E[i] < 0 else int(E[i]), float(a.mean())])
    write_csv(out / "hyperbolic_times.csv",
              ["seed_index", "density", "first_time", "expansion_time", "mean_a"], rows)
    frac = float(np.mean(np.array(dens) > 0))
    checks = [_check("fraction of seeds with positive density", frac, 0.99, frac >= 0.99)]
    return {"b": b, "mean_density": float(np.mean(dens))}, checks


def _shadow_seed(spec, lam, rho, L, max_segments, warmup, X):
    out = []
    for x in X:
        segs = periodic.quasi_hyperbolic_recurrence(spec, x, lam, rho, L, warmup=warmup)
        seed_rows = []
        for seg in segs[:max_segments]:
            r = periodic.shadow_to_periodic(spec, seg)
            seed_rows.append((seg, r))
        out.append((len(segs), seed_rows))
    return out


@experiment("periodic", "periodic-point census, stable indices and shadowing of recurrences",
            period_max=(_pos_int, 2), grid=(_pos_int, 32), shadow_seeds=(_nonneg_int, 0),
            L=(_pos_int, 10 ** 5), rho_segment=(_pos_float, 0.05),
            max_segments=(_pos_int, 20), warmup=(_nonneg_int, 200), b=(_pos_float, None))
def _run_periodic(cfg, spec, out, workers):
    pmax = cfg.param("period_max")
    if pmax > periodic.MAX_PERIOD:
        raise ConfigError(f"period_max must be at most {periodic.MAX_PERIOD}")
    rows, checks, counts = [], [], {}
    for n in range(1, pmax + 1):
        orbs = periodic.find_periodic(spec, n, cfg.param("grid"))
        counts[n] = len(orbs)
        expected = fixed_point_count(spec.matrix, n)
        checks.append(_check(f"count of period-{n} points", len(orbs), expected, len(orbs) == expected))
        for o in orbs:
            mu = np.real(o.multipliers)
            rows.append([n, o.period, *o.point, *mu, o.stable_index, o.hyperbolic, o.residual])
        res = max(o.residual for o in orbs)
        checks.append(_check(f"period-{n} residuals", res, 1e-10, res <= 1e-10))
    write_csv(out / "periodic_orbits.csv",
              ["n", "period", "x", "y", "z", "mu_1", "mu_2", "mu_3", "stable_index", "hyperbolic", "residual"],
              rows)
    summary = {"counts": counts}
    ns = cfg.param("shadow_seeds")
    if ns:
        isl = isinstance(spec, AnosovSpec)
        b = 0.8 if isl else _auto_b(cfg, spec, workers)
        lam = float(np.exp(-b / 2.0))
        X = _seeds(cfg, ns, 3)
        fn = partial(_shadow_seed, spec, lam, cfg.param("rho_segment"), cfg.param("L"),
                     cfg.param("max_segments"), cfg.param("warmup"))
        per_seed = [r for part in map_chunks(fn, (X,), workers, chunk=1) for r in part]
        srows, good, tried, lmax = [], 0, 0, 0.0
        for i, (nseg, pairs) in enumerate(per_seed):
            for seg, r in pairs:
                tried += 1
                ok = r.success and r.orbit.hyperbolic and r.orbit.stable_index == 1
                good += ok
                if r.success:
                    lmax = max(lmax, r.l_shadow)
                srows.append([i, seg.start_index, seg.length, seg.endpoint_gap, r.success,
                              r.orbit.period if r.success else None,
                              r.orbit.stable_index if r.success else None,
                              r.orbit.hyperbolic if r.success else None,
                              r.shadow_distance, r.l_shadow, r.newton_steps])
        write_csv(out / "shadowing.csv",
                  ["seed_index", "start_index", "length", "gap", "success", "period", "stable_index",
                   "hyperbolic", "shadow_distance", "l_shadow", "newton_steps"], srows)
        summary.update(lam=lam, segments_tried=tried, hyperbolic_index_one=good, max_l_shadow=lmax)
        checks.append(_check("hyperbolic periodic point with stable index 1 found", good, 1, good >= 1))
        if isl:
            bound = 2.0 * periodic.linear_shadow_bound(spec)
            checks.append(_check("shadowing constant within twice the linear bound", lmax, bound,
                                 lmax <= bound))
    return summary, checks


@experiment("skeleton", "skeleton candidates from saddles of low period",
            period_max=(_pos_int, 2), eps=(_pos_float, 0.05), n_avg=(_pos_int, 10 ** 5),
            disk_points=(_pos_int, 8))
def _run_skeleton(cfg, spec, out, workers):
    sk = _skeleton(spec, cfg.param("period_max"), cfg.param("eps"), cfg.param("n_avg"),
                   cfg.param("disk_points"))
    write_json(out / "skeleton.json", sk.to_record())
    return {"size": sk.size, "P": sk.P}, [_check("skeleton size", sk.size, 1, sk.size == 1)]


def _fingerprint_rows(X, F):
    return [[i, *X[i], *F[i]] for i in range(len(X))]


def _fingerprint_header():
    return ["seed_index", "x", "y", "z", *measures.dictionary_labels()]


@experiment("measures", "physical measures from Lebesgue seeds and center exponents",
            n_seeds=(_pos_int, 200), n_avg=(_pos_int, 10 ** 6), n_transient=(_nonneg_int, 1000),
            eps=(_pos_float, 0.05), ftle_n=(_pos_int, 10 ** 4), disk_seeds=(_nonneg_int, 50),
            disk_radius=(_pos_float, 0.05))
def _run_measures(cfg, spec, out, workers):
    if cfg.param("n_seeds") < 10 or 0 < cfg.param("disk_seeds") < 10:
        raise ConfigError("n_seeds must be at least 10 and disk_seeds either 0 or at least 10")
    X = _seeds(cfg, cfg.param("n_seeds"), 4)
    F = measures.dictionary_averages(spec, X, cfg.param("n_transient"), cfg.param("n_avg"), workers)
    write_csv(out / "fingerprints.csv", _fingerprint_header(), _fingerprint_rows(X, F))
    rep = measures.cluster_measures(F, cfg.param("eps"))
    checks = [
        _check("cluster count", rep.cluster_count, 1, rep.cluster_count == 1),
        _check("basin coverage", rep.coverage, 0.95, rep.coverage >= 0.95),
    ]
    rows = []
    leb = measures.center_exponent_of_cluster(spec, X, cfg.param("ftle_n"))
    rows += [["lebesgue", i, v] for i, v in enumerate(leb.values)]
    checks.append(_check("center exponent positive (Lebesgue seeds)", leb.mean / leb.stderr
                         if leb.stderr > 0 else float("inf"), 3.0, leb.positive))
    summary = {"basin": rep.summary(), "center_exponent": leb.mean, "center_exponent_se": leb.stderr}
    nd = cfg.param("disk_seeds")
    if nd:
        sk = _skeleton(spec)
        disk = periodic.unstable_disk(spec, sk.saddles[0], cfg.param("disk_radius"), nd,
                                      rng=seed_rng(cfg.rng_seed, 5))
        dis = measures.center_exponent_of_cluster(spec, disk.points, cfg.param("ftle_n"))
        rows += [["disk", i, v] for i, v in enumerate(dis.values)]
        checks.append(_check("center exponent positive (unstable-disk seeds)", dis.mean / dis.stderr
                             if dis.stderr > 0 else float("inf"), 3.0, dis.positive))
        summary.update(disk_center_exponent=dis.mean, disk_center_exponent_se=dis.stderr)
    write_csv(out / "center_exponents.csv", ["ensemble", "seed_index", "center_exponent"], rows)
    return summary, checks


@experiment("basin", "basin map over a jittered grid of seeds",
            g=(_pos_int, 6), n_avg=(_pos_int, 10 ** 5), n_transient=(_nonneg_int, 1000),
            eps=(_pos_float, 0.05))
def _run_basin(cfg, spec, out, workers):
    if cfg.param("g") < 5:
        raise ConfigError("g must be at least 5")
    rep, X, F = measures.basin_map(spec, cfg.param("g"), cfg.param("n_transient"), cfg.param("n_avg"),
                                   cfg.param("eps"), cfg.rng_seed, workers)
    rows = [[i, *X[i], int(rep.assignment[i])] + list(F[i]) for i in range(len(X))]
    write_csv(out / "basin.csv", ["seed_index", "x", "y", "z", "cluster", *measures.dictionary_labels()],
              rows)
    checks = [
        _check("cluster count", rep.cluster_count, 1, rep.cluster_count == 1),
        _check("basin coverage", rep.coverage, 0.95, rep.coverage >= 0.95),
    ]
    return rep.summary(), checks


def correlation_pairs(spec):
    """Observable pairs used by the correlation experiment."""
    if isinstance(spec, AnosovSpec):
        c = measures.Observable((1, 0, 0), "cos")
        return [(c, c)]
    T = measures.TentObservable
    return [
        (T((0.0, 0.0, 0.0), 1.0), T((0.17, 0.31, 0.53), 1.0)),
        (T((0.0, 0.0, 0.0), 0.5), T((0.0, 0.0, 0.0), 0.5)),
        (T((0.25, 0.0, 0.5), 0.25), T((0.4, 0.1, 0.7), 0.25)),
        (T((0.0, 0.0, 0.0), 1.0), T((0.0, 0.0, 0.0), 0.5)),
    ]


@experiment("correlation", "decay of correlations over an ensemble",
            ensemble=(_pos_int, 10 ** 6), n_max=(_pos_int, 10), mode=(_choice("lebesgue", "measure"), "lebesgue"),
            n_transient=(_nonneg_int, 10 ** 4), orbit_length=(_pos_int, 1))
def _run_correlation(cfg, spec, out, workers):
    X = _seeds(cfg, cfg.param("ensemble"), 6)
    rows, checks, summary = [], [], {"pairs": []}
    good = 0
    pairs = correlation_pairs(spec)
    for k, (phi, psi) in enumerate(pairs):
        cs = measures.correlation(spec, phi, psi, cfg.param("n_max"), X, cfg.param("mode"),
                                  cfg.param("n_transient"), cfg.param("orbit_length"), workers)
        rows += [[k, phi.name, psi.name, n, c, f] for n, c, f in zip(cs.n_grid, cs.C, cs.floors)]
        ok = np.isfinite(cs.fit_d) and cs.fit_d > 0 and cs.fit_r2 >= 0.8
        good += bool(ok)
        summary["pairs"].append({"phi": phi.name, "psi": psi.name, "fit_d": cs.fit_d,
                                 "fit_r2": cs.fit_r2, "n_fit_points": cs.n_fit_points,
                                 "flags": cs.flags})
        if isinstance(spec, AnosovSpec):
            n0 = measures.exact_vanishing_lag(spec.matrix, phi, psi, cfg.param("n_max"))
            tail = np.abs(cs.C[n0:]) <= cs.floors[n0:]
            checks.append(_check(f"pair {k}: |C(n)| below floor for n >= n0", int(n0), "all",
                                 bool(tail.all())))
    write_csv(out / "correlation.csv", ["pair", "phi", "psi", "n", "C", "floor"], rows)
    if not isinstance(spec, AnosovSpec):
        checks.append(_check("pairs with positive rate and r2 >= 0.8", good, 3, good >= 3))
    return summary, checks


def _tail_series(spec, L, warmup, X):
    return cocycle.contraction_series_batch(spec, X, L, warmup)


@experiment("tail", "tail of expansion times on a skeleton-saddle unstable disk",
            disk_points=(_pos_int, 1000), disk_radius=(_pos_float, 0.05), n_max=(_pos_int, 200),
            horizon=(_pos_int, 600), warmup=(_nonneg_int, 200), b=(_pos_float, None))
def _run_tail(cfg, spec, out, workers):
    if cfg.param("horizon") < cfg.param("n_max"):
        raise ConfigError("horizon must be at least n_max")
    b = _auto_b(cfg, spec, workers)
    sk = _skeleton(spec)
    if sk.size == 0:
        raise ValidationFailure("no skeleton saddle available for the disk")
    disk = periodic.unstable_disk(spec, sk.saddles[0], cfg.param("disk_radius"), cfg.param("disk_points"),
                                  rng=seed_rng(cfg.rng_seed, 7))
    A = np.vstack(map_chunks(partial(_tail_series, spec, cfg.param("horizon"), cfg.param("warmup")),
                             (disk.points,), workers, chunk=64))
    curve = hyptimes.tail_from_series(A, b, cfg.param("n_max"))
    rows = [[int(n), s, curve.censored_count] for n, s in zip(curve.n_grid, curve.survival)]
    write_csv(out / "tail.csv", ["n", "survival", "censored_count"], rows, footer=curve.fit_record())
    mono = bool(np.all(np.diff(curve.survival) <= 0))
    checks = [
        _check("survival non-increasing", mono, True, mono),
        _check("exponential fit rate positive", curve.fit_c, 0.0,
               np.isfinite(curve.fit_c) and curve.fit_c > 0),
        _check("exponential fit r2", curve.fit_r2, 0.9, np.isfinite(curve.fit_r2) and curve.fit_r2 >= 0.9),
    ]
    summary = {"b": b, "saddle": sk.saddles[0].point, "saddle_period": sk.saddles[0].period,
               "survival_at_1": float(curve.survival[0]), "fit": curve.fit_record()}
    return summary, checks


@experiment("clt", "batch-means variance of Birkhoff sums",
            n_seeds=(_pos_int, 20), batch_count=(_pos_int, 50), batch_length=(_pos_int, 2000),
            n_transient=(_nonneg_int, 1000))
def _run_clt(cfg, spec, out, workers):
    if cfg.param("batch_count") < 20:
        raise ConfigError("batch_count must be at least 20")
    phi = measures.Observable((1, 0, 0), "cos")
    X = _seeds(cfg, cfg.param("n_seeds"), 8)
    est = measures.clt_variance(spec, phi, X, cfg.param("batch_length"), cfg.param("batch_count"),
                                cfg.param("n_transient"), workers)
    checks = []
    gk = None
    if isinstance(spec, AnosovSpec):
        n0 = measures.exact_vanishing_lag(spec.matrix, phi, phi, 50)
        gk = measures.exact_character_correlation(spec.matrix, phi, phi, 0) + 2.0 * sum(
            measures.exact_character_correlation(spec.matrix, phi, phi, n) for n in range(1, n0))
        dev = abs(est.sigma2 - gk)
        checks.append(_check("variance matches Green-Kubo sum within 3 standard errors", dev,
                             3 * est.stderr, dev <= 3 * est.stderr))
    else:
        checks.append(_check("variance finite and positive", est.sigma2, 0.0,
                             np.isfinite(est.sigma2) and est.sigma2 > 0))
    write_csv(out / "clt.csv", ["observable", "sigma2", "stderr", "batch_count", "batch_length", "green_kubo"],
              [[phi.name, est.sigma2, est.stderr, est.batch_count, est.batch_length, gk]])
    return {"sigma2": est.sigma2, "stderr": est.stderr, "green_kubo": gk}, checks


@experiment("sweep", "continuity of the physical measure along a perturbation sweep",
            parameter=(_choice("rho", "delta"), "rho"),
            values=(_float_list, [0.0, 0.01, 0.02, 0.03, 0.04, 0.05]),
            n_seeds=(_pos_int, 200), n_avg=(_pos_int, 10 ** 5), n_transient=(_nonneg_int, 1000),
            eps=(_pos_float, 0.05), validation_grid=(_pos_int, 32))
def _run_sweep(cfg, spec, out, workers):
    pts = measures.parameter_sweep(cfg.param("values"), cfg.param("parameter"), base_rho=cfg.rho,
                                   n_seeds=cfg.param("n_seeds"), n_transient=cfg.param("n_transient"),
                                   n_avg=cfg.param("n_avg"), eps=cfg.param("eps"), rng_seed=cfg.rng_seed,
                                   workers=workers, validation_grid=cfg.param("validation_grid"),
                                   matrix=cfg.matrix)
    leb = measures.lebesgue_fingerprint()
    rows = []
    for p in pts:
        dl = float(np.max(np.abs(p.fingerprint - leb))) if p.fingerprint is not None else None
        rows.append([p.value, p.valid, p.report.cluster_count if p.report else None,
                     p.report.coverage if p.report else None, p.distance_to_previous, dl,
                     "; ".join(p.flags)])
    write_csv(out / "sweep.csv", ["value", "valid", "cluster_count", "coverage", "distance_to_previous",
                                  "distance_to_lebesgue", "flags"], rows)
    valid = [p for p in pts if p.valid]
    counts_ok = bool(valid) and all(p.report.cluster_count == 1 for p in valid)
    dists = [p.distance_to_previous for p in valid[1:]]
    dmax = float(max(dists)) if dists else 0.0
    checks = [
        _check("one cluster at every valid grid point", counts_ok, True, counts_ok),
        _check("consecutive fingerprint distance", dmax, cfg.param("eps"), dmax <= cfg.param("eps")),
    ]
    zero = [p for p in valid if p.value == 0.0 and cfg.param("parameter") == "rho"]
    if zero:
        d0 = float(np.max(np.abs(zero[0].fingerprint - leb)))
        checks.append(_check("zero-perturbation endpoint matches Lebesgue", d0, cfg.param("eps"),
                             d0 <= cfg.param("eps")))
    summary = {"points": [{"value": p.value, "valid": p.valid, "flags": p.flags,
                           "cluster_count": p.report.cluster_count if p.report else None,
                           "distance_to_previous": p.distance_to_previous} for p in pts]}
    return summary, checks


# --------------------------------------------------------------------------
# orchestration


def _validate_map(cfg):
    try:
        spec = cfg.map_spec()
    except InvalidMapError as exc:
        raise ValidationFailure(str(exc)) from exc
    if cfg.variant == "mane" and spec.rho > 0.0 and cfg.experiment != "sweep":
        rep = validate_mane_spec(spec)
        if not rep.passed:
            raise ValidationFailure("; ".join(rep.messages) or "map validation failed")
    return spec


def run(cfg, out_dir=None, workers=None):
    """Run one experiment; returns a RunResult with the manifest and exit code."""
    workers = workers or cfg.workers or default_workers()
    out = Path(out_dir or cfg.output or f"out/{cfg.experiment}")
    out.mkdir(parents=True, exist_ok=True)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    spec = _validate_map(cfg)
    exp = EXPERIMENTS[cfg.experiment]
    summary, checks = exp.runner(cfg, spec, out, workers)
    files = sorted(p.name for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    passed = all(c["passed"] for c in checks)
    manifest = {
        "tool": "phlab",
        "version": __version__,
        "backend": BACKEND,
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "rng_seed": cfg.rng_seed,
        "workers": workers,
        "started": started,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "summary": summary,
        "checks": checks,
        "passed": passed,
        "data_files": {name: file_digest(out / name) for name in files},
    }
    write_json(out / "manifest.json", manifest)
    return RunResult(manifest, EXIT_OK if passed else EXIT_CHECK_FAILED, out)


def run_text(text, **kw):
    return run(parse_config(text), **kw)


def describe():
    buf = _io.StringIO()
    for name, desc in list_experiments():
        buf.write(f"{name:<12} {desc}\n")
    return buf.getvalue()
