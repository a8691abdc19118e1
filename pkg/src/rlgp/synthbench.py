"""Synthetic test surfaces and seeded benchmark sweeps.

Two families of problems are provided:

* a two-region partitioned GP on ``[-0.5, 0.5]^d``: the hyperplane
  ``a^T x = 0`` (``a`` uniform on ``{-1, 1}^d``) separates a zero-mean GP
  from a mean-11 GP, both with variance 7 and squared-exponential
  correlation ``exp(-0.1 d ||x - x'||^2)``, observed with variance-3 noise
  on an LHS training design of size ``10 d``;
* three 2-D boundary scenarios on a dense grid with piecewise-constant
  levels plus a smooth shared trend, where the query sits in a region
  interior, next to a straight boundary, or next to a T-junction of three
  regions.

All randomness comes from counter-based Philox generators keyed by
``(seed, purpose)``, so e.g. changing the test size leaves the training
draws untouched.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky

from .estimator import EstimatorConfig, parse_qspec
from .exceptions import ConfigError, NumericalError
from .kernel import pairwise_sq_dist
from .neighborhood import Dataset, select_neighbors
from .predictor import crps_gaussian, mse, predict_points

__all__ = [
    "substream",
    "lhs_design",
    "PartitionSpec",
    "PartitionedSample",
    "sample_partitioned_gp",
    "BoundaryScenario",
    "boundary_scenarios",
    "BenchConfig",
    "BenchRow",
    "BenchReport",
    "load_bench_config",
    "parse_bench_config",
    "resolve_method",
    "run_benchmark",
]

_PURPOSES = {
    "design_train": 0,
    "design_test": 1,
    "hyperplane": 2,
    "f1": 3,
    "f2": 4,
    "noise": 5,
    "boundary_noise": 6,
    "boundary_trend": 7,
}

JITTER = 1e-10


def substream(seed, purpose):
    """Independent generator for one purpose (``"design_train"``, ``"f1"``, ...)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), _PURPOSES[purpose]])))


def lhs_design(n, d, rng_seed=0):
    """Latin hypercube sample of `n` points in ``[-0.5, 0.5]^d``.

    Every column has exactly one point in each of the `n` equal strata;
    strata are matched across columns by independent random permutations.
    `rng_seed` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    strata = np.argsort(rng.random((n, d)), axis=0)
    u = (strata + rng.random((n, d))) / n
    return u - 0.5


# ---------------------------------------------------------------------------
# two-region partitioned GP
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionSpec:
    d: int
    a: np.ndarray
    region1_mean: float = 0.0
    region2_mean: float = 11.0
    variance: float = 7.0
    noise_variance: float = 3.0
    vartheta: float | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).ravel()
        if a.size != self.d or not np.all(np.isin(a, (-1.0, 1.0))):
            raise ValueError("a must be a length-d vector of +-1")
        if not (self.variance > 0 and self.noise_variance > 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "a", a)
        if self.vartheta is None:
            object.__setattr__(self, "vartheta", 0.1 * self.d)

    @classmethod
    def random(cls, d, rng_seed=0, **kwargs):
        a = substream(rng_seed, "hyperplane").choice((-1.0, 1.0), size=d)
        return cls(d=d, a=a, **kwargs)

    def in_region1(self, X):
        return np.asarray(X) @ self.a >= 0

    def covariance(self, X):
        """``variance * exp(-vartheta * D)`` over the rows of `X`."""
        return self.variance * np.exp(-self.vartheta * pairwise_sq_dist(X))


def _gp_draw(K, z):
    Kj = K.copy()
    Kj[np.diag_indices_from(Kj)] += JITTER
    try:
        L = cholesky(Kj, lower=True, check_finite=True)
        return L @ z
    except np.linalg.LinAlgError:
        pass
    # near-singular draws (strongly correlated low-dimensional designs)
    w, V = np.linalg.eigh(Kj)
    if not np.all(np.isfinite(w)) or w[-1] <= 0:
        raise NumericalError("GP covariance factorization failed", n=K.shape[0])
    return V @ (np.sqrt(np.clip(w, 0.0, None)) * (V.T @ z))


@dataclass(frozen=True)
class PartitionedSample:
    spec: PartitionSpec
    train: Dataset
    test: Dataset
    truth: np.ndarray
    train_truth: np.ndarray = field(repr=False)


def sample_partitioned_gp(spec, n_train=None, n_test=1000, rng_seed=0):
    """Draw training and test data from the two-region partitioned GP.

    `n_train` defaults to ``10 d``.  ``f1`` and ``f2`` are drawn jointly over
    training then test sites; the test responses in ``test.y`` (and
    ``truth``) are noiseless, training responses carry Gaussian noise.
    """
    if n_train is None:
        n_train = 10 * spec.d
    Xtr = lhs_design(n_train, spec.d, substream(rng_seed, "design_train"))
    Xte = lhs_design(n_test, spec.d, substream(rng_seed, "design_test"))
    X = np.vstack([Xtr, Xte])
    K = spec.covariance(X)
    ntot = X.shape[0]
    # draw all normals of the train block first so test size cannot change them
    z1 = substream(rng_seed, "f1").standard_normal(ntot)
    z2 = substream(rng_seed, "f2").standard_normal(ntot)
    f1 = spec.region1_mean + _gp_draw(K, z1)
    f2 = spec.region2_mean + _gp_draw(K, z2)
    f = np.where(spec.in_region1(X), f1, f2)
    noise = math.sqrt(spec.noise_variance) * substream(rng_seed, "noise").standard_normal(n_train)
    ytr = f[:n_train] + noise
    truth = f[n_train:]
    return PartitionedSample(spec, Dataset(Xtr, ytr), Dataset(Xte, truth), truth, f[:n_train])


# ---------------------------------------------------------------------------
# 2-D boundary scenarios
# ---------------------------------------------------------------------------

BOUNDARY_LEVELS = {"A": 0.0, "B": 4.0, "C": 8.0}
BOUNDARY_NOISE_SD = 0.3
BOUNDARY_GRID = 50
BOUNDARY_NEIGHBORS = 50
BOUNDARY_QUERIES = {
    "interior": np.array([-0.30, 0.05]),
    "simple_boundary": np.array([-0.02, 0.30]),
    "complex_boundary": np.array([-0.02, 0.0]),
}


def boundary_region(X):
    """Region labels: ``A`` for ``x1 < 0``; ``B``/``C`` split ``x1 >= 0`` at ``x2 = 0``."""
    X = np.atleast_2d(X)
    return np.where(X[:, 0] < 0, "A", np.where(X[:, 1] >= 0, "B", "C"))


def boundary_surface(X, phase=0.0):
    """Noiseless boundary-scenario response: region level plus a mild smooth trend."""
    X = np.atleast_2d(X)
    levels = np.vectorize(BOUNDARY_LEVELS.get)(boundary_region(X)).astype(float)
    trend = 0.4 * np.sin(2.0 * X[:, 0] + 3.0 * X[:, 1] + phase)
    return levels + trend


@dataclass(frozen=True)
class BoundaryScenario:
    name: str
    train: Dataset
    query: np.ndarray
    truth: float
    neighbors: int = BOUNDARY_NEIGHBORS


def boundary_scenarios(rng_seed=0, grid=BOUNDARY_GRID, noise_sd=BOUNDARY_NOISE_SD):
    """The interior, simple-boundary and complex-boundary 2-D problems.

    Training inputs are the cell centres of a ``grid x grid`` lattice on
    ``[-0.5, 0.5]^2`` (so no grid point coincides with a boundary or a
    query); the seed drives the noise and the phase of the smooth trend.
    Returns a list of three :class:`BoundaryScenario`.
    """
    c = (np.arange(grid) + 0.5) / grid - 0.5
    g1, g2 = np.meshgrid(c, c, indexing="ij")
    X = np.column_stack([g1.ravel(), g2.ravel()])
    phase = float(substream(rng_seed, "boundary_trend").uniform(0.0, 2.0 * np.pi))
    y = boundary_surface(X, phase) + noise_sd * substream(rng_seed, "boundary_noise").standard_normal(len(X))
    train = Dataset(X, y)
    return [BoundaryScenario(name, train, q.copy(), float(boundary_surface(q, phase)[0]))
            for name, q in BOUNDARY_QUERIES.items()]


# ---------------------------------------------------------------------------
# benchmark harness
# ---------------------------------------------------------------------------

SCENARIOS = ("partitioned", "boundary", "interior", "simple_boundary", "complex_boundary")


@dataclass(frozen=True)
class BenchConfig:
    scenario: str = "partitioned"
    d: int = 2
    n_train: int | None = None
    n_test: int = 100
    seed: int = 0
    methods: tuple = ("rlgp", "localgp", "median")
    q_mode: str = "adaptive"
    tau: float = 3.0
    neighbors: int = 50

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.d < 1 or self.n_test < 1 or self.neighbors < 1:
            raise ConfigError("d, n_test and neighbors must be positive")
        if self.n_train is not None and self.n_train < 1:
            raise ConfigError("n_train must be positive")
        if not self.methods:
            raise ConfigError("no methods given")
        parse_qspec(self.q_mode)
        for m in self.methods:
            resolve_method(m, self)

    def estimator_config(self, qspec=None):
        return EstimatorConfig.from_qspec(self.q_mode if qspec is None else qspec, tau=self.tau)


def resolve_method(name, cfg):
    """Map a method name to an estimator config, or ``None`` for the median baseline.

    Known names: ``rlgp`` (the configured q), ``rlgp:<qspec>`` (e.g.
    ``rlgp:0.15n``, ``rlgp:adaptive``), ``localgp`` (q = 0) and ``median``.
    """
    if name == "median":
        return None
    if name == "rlgp":
        return cfg.estimator_config()
    if name == "localgp":
        return cfg.estimator_config(0)
    if name.startswith("rlgp:"):
        return cfg.estimator_config(name[5:])
    raise ConfigError(f"unknown method {name!r}")


_INT_KEYS = {"d", "n_train", "n_test", "seed", "neighbors"}


def parse_bench_config(text):
    """Parse flat ``key=value`` lines (``#`` starts a comment) into a :class:`BenchConfig`."""
    kwargs = {}
    fields_ = set(BenchConfig.__dataclass_fields__)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in fields_:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _INT_KEYS:
                kwargs[key] = int(value)
            elif key == "tau":
                kwargs[key] = float(value)
            elif key == "methods":
                kwargs[key] = tuple(m.strip() for m in value.split(",") if m.strip())
            else:
                kwargs[key] = value
        except ValueError:
            raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
    return BenchConfig(**kwargs)


def load_bench_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_bench_config(fh.read())


@dataclass(frozen=True)
class BenchRow:
    method: str
    scenario: str
    mse: float
    crps: float
    mean_seconds_per_test_point: float
    n_points: int
    n_failed: int


CSV_FIELDS = ("method", "scenario", "mse", "crps", "mean_seconds_per_test_point", "n_points", "n_failed")


def _fmt(v):
    return format(v, ".17g") if isinstance(v, float) else str(v)


@dataclass(frozen=True)
class BenchReport:
    rows: list
    seed: int
    scenario: str

    def to_csv(self, include_time=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for r in self.rows:
            vals = [getattr(r, f) for f in CSV_FIELDS]
            if not include_time:
                vals[4] = ""
            w.writerow([_fmt(v) if v != "" else "" for v in vals])
        return buf.getvalue()

    def to_table(self, include_time=True):
        head = f"{'method':<16} {'scenario':<18} {'mse':>12} {'crps':>10}"
        head += f" {'sec/point':>10}" if include_time else ""
        head += f" {'failed':>7}"
        lines = [f"# scenario={self.scenario} seed={self.seed}", head]
        for r in self.rows:
            line = f"{r.method:<16} {r.scenario:<18} {r.mse:>12.5g} {r.crps:>10.5g}"
            line += f" {r.mean_seconds_per_test_point:>10.4f}" if include_time else ""
            line += f" {r.n_failed:>7d}"
            lines.append(line)
        return "\n".join(lines) + "\n"


def _problems(cfg):
    """Yield ``(scenario name, train, test inputs, truth, neighbors)``."""
    if cfg.scenario == "partitioned":
        spec = PartitionSpec.random(cfg.d, cfg.seed)
        s = sample_partitioned_gp(spec, cfg.n_train, cfg.n_test, cfg.seed)
        yield f"partitioned_d{cfg.d}", s.train, s.test.X, s.truth, min(cfg.neighbors, s.train.N)
        return
    wanted = BOUNDARY_QUERIES if cfg.scenario == "boundary" else (cfg.scenario,)
    for sc in boundary_scenarios(cfg.seed):
        if sc.name in wanted:
            yield sc.name, sc.train, sc.query[None, :], np.array([sc.truth]), min(cfg.neighbors, sc.train.N)


def _score(method, scenario, means, variances, truth, seconds, n_failed):
    ok = np.isfinite(means)
    if ok.any():
        m = mse(means[ok], truth[ok])
        c = float(np.mean(crps_gaussian(means[ok], variances[ok], truth[ok])))
        t = float(np.mean(seconds))
    else:
        m = c = t = math.nan
    return BenchRow(method, scenario, m, c, t, int(truth.size), int(n_failed))


def run_benchmark(cfg, methods=None, rng_seed=None, workers=1):
    """Evaluate each method on each problem of `cfg`; one row per (method, scenario).

    Per-point fit failures are counted in ``n_failed`` and excluded from the
    metrics; the run continues.
    """
    if methods is not None or rng_seed is not None:
        kw = dict(cfg.__dict__)
        if methods is not None:
            kw["methods"] = tuple(methods)
        if rng_seed is not None:
            kw["seed"] = int(rng_seed)
        cfg = BenchConfig(**kw)
    resolved = [(m, resolve_method(m, cfg)) for m in cfg.methods]
    rows = []
    for scenario, train, Xq, truth, n in _problems(cfg):
        for name, est in resolved:
            if est is None:
                med = float(np.median(train.y))
                var = float(np.var(train.y))
                means = np.full(len(Xq), med)
                variances = np.full(len(Xq), var)
                rows.append(_score(name, scenario, means, variances, truth, np.zeros(len(Xq)), 0))
                continue
            results = predict_points(train, Xq, n, est, workers=workers)
            means = np.array([r.prediction.mean if r.prediction else math.nan for r in results])
            variances = np.array([r.prediction.variance if r.prediction else math.nan for r in results])
            seconds = np.array([r.seconds for r in results])
            failed = sum(r.error is not None for r in results)
            rows.append(_score(name, scenario, means, variances, truth, seconds, failed))
    return BenchReport(rows, cfg.seed, cfg.scenario)


def neighbor_regions(scenario):
    """Region labels of the neighbors a boundary scenario's query selects."""
    nb = select_neighbors(scenario.train, scenario.query, scenario.neighbors)
    return boundary_region(nb.Xn)
