"""Replicated simulation experiments over a collection of candidate models."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import oracle
from .cv import kfold_cv
from .dgp import DgpId, DgpSpec, sample_with_stream
from .errors import NumericalError, QriskError
from .numcore import RngStream, trace_solve
from .optimism import KAPPA_RULES, optimism_from_design
from .parallel import pmap
from .solver import ModelSpec, check_loss, fit_design

RELEVANT = frozenset({1, 2, 3, 4})
ESTIMATORS = ("trace", "cv", "oracle", "closed_form")
PRESETS = {
    "desk": {"reps": 500, "oracle_reps": 1000},
    "full": {"reps": 10_000, "oracle_reps": 10_000},
}


@dataclass(frozen=True)
class CandidateModel:
    model_id: str
    model: ModelSpec
    stratum: int

    @property
    def size(self):
        return self.model.size


def stratum_of(model: ModelSpec):
    return len(RELEVANT.intersection(model.indices))


def build_collection_dgp1(count_per_stratum=35, p=50):
    """Intercept-only model plus one nested chain per stratum j = 0..4.

    Chain j starts at predictors {1..j} and adds the irrelevant predictors
    5, 6, ... one at a time.
    """
    if count_per_stratum < 1:
        raise ValueError("count_per_stratum must be >= 1")
    if p < 4 + count_per_stratum - 1:
        raise ValueError(f"p={p} too small for {count_per_stratum} models per stratum")
    out = [CandidateModel("int", ModelSpec((), True), 0)]
    for j in range(5):
        base = tuple(range(1, j + 1))
        for t in range(count_per_stratum):
            extra = tuple(range(5, 5 + t))
            out.append(CandidateModel(f"s{j}x{t:02d}", ModelSpec(base + extra, True), j))
    return out


def explicit_collection(models):
    return [CandidateModel(m.label(), m, stratum_of(m)) for m in models]


@dataclass(frozen=True)
class ExperimentConfig:
    dgp: DgpId = DgpId.DGP1
    n: int = 500
    p: int = 50
    taus: tuple = (0.5,)
    reps: int = 500
    collection: object = "dgp1"
    estimators: frozenset = frozenset({"trace"})
    cv_k: int = 10
    seed: int | None = None
    out: str | None = None
    oracle_reps: int = 1000
    oracle_eval: int = 5
    per_stratum: int = 35
    pop_n: int = oracle.DEFAULT_BIG_N
    kappa_rule: str = "literal"

    def __post_init__(self):
        object.__setattr__(self, "dgp", DgpId.parse(self.dgp))
        object.__setattr__(self, "taus", tuple(float(t) for t in self.taus))
        object.__setattr__(self, "estimators", frozenset(self.estimators))
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.taus or not all(0.0 < t < 1.0 for t in self.taus):
            raise ValueError("taus must be a nonempty list inside (0, 1)")
        unknown = self.estimators - set(ESTIMATORS)
        if unknown:
            raise ValueError(f"unknown estimators: {sorted(unknown)}")
        if self.kappa_rule not in KAPPA_RULES:
            raise ValueError(f"unknown kappa rule {self.kappa_rule!r}")
        if "oracle" in self.estimators and self.oracle_reps < 2:
            raise ValueError("oracle_reps must be >= 2")
        if not self.candidates():
            raise ValueError("model collection is empty")

    @property
    def dgp_spec(self):
        return DgpSpec(self.dgp, self.n, self.p, self.seed or 0)

    def candidates(self):
        if isinstance(self.collection, str):
            name = self.collection.strip().lower()
            if name in ("dgp1", "dgp1-176", "stratified"):
                return build_collection_dgp1(self.per_stratum, self.p)
            raise ValueError(f"unknown collection preset {self.collection!r}")
        return explicit_collection(self.collection)

    def describe(self):
        """``key = value`` lines of the resolved configuration."""
        coll = self.collection if isinstance(self.collection, str) else \
            "; ".join(" ".join(map(str, m.indices)) or "none" for m in self.collection)
        items = [
            ("dgp", self.dgp.value), ("n", self.n), ("p", self.p),
            ("taus", ",".join(format(t, "g") for t in self.taus)), ("reps", self.reps),
            ("collection", coll), ("per_stratum", self.per_stratum),
            ("estimators", ",".join(e for e in ESTIMATORS if e in self.estimators)),
            ("cv_k", self.cv_k), ("seed", self.seed), ("oracle_reps", self.oracle_reps),
            ("oracle_eval", self.oracle_eval), ("pop_n", self.pop_n), ("kappa_rule", self.kappa_rule),
        ]
        return [f"{k} = {v}" for k, v in items]


_INT_KEYS = {"n", "p", "reps", "cv_k", "seed", "oracle_reps", "oracle_eval", "per_stratum", "pop_n"}


def _parse_collection(value):
    v = value.strip()
    if ";" not in v and v.lower() in ("dgp1", "dgp1-176", "stratified"):
        return v.lower()
    models = []
    for chunk in v.split(";"):
        chunk = chunk.strip()
        toks = [] if chunk.lower() in ("", "none", "intercept") else chunk.replace(",", " ").split()
        models.append(ModelSpec(tuple(sorted(int(t) for t in toks)), True))
    return tuple(models)


def parse_config(text, **overrides):
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    kw = dict(PRESETS[raw.pop("preset", "desk").strip().lower()])
    for key, value in raw.items():
        if key in _INT_KEYS:
            kw[key] = int(value)
        elif key == "dgp":
            kw["dgp"] = DgpId.parse(value)
        elif key == "taus":
            kw["taus"] = tuple(float(t) for t in value.split(",") if t.strip())
        elif key == "collection":
            kw["collection"] = _parse_collection(value)
        elif key == "estimators":
            names = set()
            for e in (e.strip().lower() for e in value.split(",") if e.strip()):
                if e.startswith("cv(") and e.endswith(")"):
                    kw["cv_k"] = int(e[3:-1])
                    e = "cv"
                names.add(e)
            kw["estimators"] = frozenset(names)
        elif key == "out":
            kw["out"] = value or None
        elif key == "kappa_rule":
            kw["kappa_rule"] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


@dataclass(frozen=True)
class ExperimentRow:
    tau: float
    model_id: str
    model_size: int
    stratum: int
    b_hat_mean: float | None = None
    b_hat_sd: float | None = None
    cv_opt_mean: float | None = None
    cv_opt_sd: float | None = None
    oracle_optimism: float | None = None
    oracle_pr: float | None = None
    closed_form_trace: float | None = None
    pr_debiased_mean: float | None = None


COLUMNS = tuple(f.name for f in fields(ExperimentRow))


class ExperimentFailure(NumericalError):
    def __init__(self, rep, model_id, tau, err):
        self.rep, self.model_id, self.tau = rep, model_id, tau
        super().__init__(f"replication {rep}, model {model_id}, tau {tau:g}: {err}")


class Welford:
    """Single-pass running mean and variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def push(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (x - self.mean)

    @property
    def variance(self):
        return self._m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def sd(self):
        return math.sqrt(self.variance)


# per-replication record layout
B_HAT, IN_SAMPLE, CV_OPT = 0, 1, 2


def _replicate(args):
    cfg, cands, rep = args
    root = RngStream(cfg.seed).child(rep)
    data = sample_with_stream(cfg.dgp, cfg.n, cfg.p, root.child("train"))
    base = {tau: float(np.mean(check_loss(data.y, tau))) for tau in cfg.taus}
    out = np.full((len(cfg.taus), len(cands), 3), np.nan)
    for ti, tau in enumerate(cfg.taus):
        for mi, cand in enumerate(cands):
            X = cand.model.design(data.Z)
            try:
                f = fit_design(X, data.y, tau, model=cand.model)
                out[ti, mi, IN_SAMPLE] = float(np.mean(check_loss(f.residuals, tau))) - base[tau]
                if "trace" in cfg.estimators:
                    out[ti, mi, B_HAT] = optimism_from_design(X, f, kappa_rule=cfg.kappa_rule).b_hat
                if "cv" in cfg.estimators:
                    cv = kfold_cv(data, cand.model, tau, cfg.cv_k, root.child("cv"), X=X,
                                  in_sample=out[ti, mi, IN_SAMPLE])
                    out[ti, mi, CV_OPT] = cv.cv_optimism
            except QriskError as err:
                raise ExperimentFailure(rep, cand.model_id, tau, err) from err
    return out


def run_replications(config: ExperimentConfig, workers=1):
    """Raw per-replication values, shape (reps, len(taus), len(models), 3)."""
    if config.seed is None:
        raise ValueError("experiment needs an explicit seed")
    cands = config.candidates()
    tasks = [(config, cands, r) for r in range(config.reps)]
    return np.stack(pmap(_replicate, tasks, workers)), cands


def closed_form_trace(config: ExperimentConfig, cand: CandidateModel, tau):
    spec = config.dgp_spec
    m = cand.model
    if config.dgp is DgpId.DGP1:
        base = ModelSpec(tuple(i for i in m.indices if i in RELEVANT), True)
        return oracle.nested_trace(spec, base, m, tau, seed=config.seed)
    if config.dgp is DgpId.DGP2:
        return oracle.nested_trace(spec, m, m, tau, seed=config.seed)
    theta = oracle.population_coefficients(spec, m, tau, config.pop_n, config.seed)
    D0, D1 = oracle.population_matrices(spec, m, tau, theta, config.pop_n, config.seed)
    return trace_solve(D0, D1) / config.n


def aggregate(config: ExperimentConfig, values, cands, workers=1):
    rows = []
    est = config.estimators
    oracle_seed = RngStream(config.seed).child("oracle").stream_id
    for ti, tau in enumerate(config.taus):
        oracles = None
        if "oracle" in est:
            oracles = oracle.mc_risk_many(config.dgp_spec, [c.model for c in cands], tau,
                                          reps=config.oracle_reps, eval_samples=config.oracle_eval,
                                          seed=oracle_seed, workers=workers)
        for mi, cand in enumerate(cands):
            acc = {k: Welford() for k in ("b", "cv", "pr")}
            for r in range(values.shape[0]):
                b, ins, cvo = values[r, ti, mi]
                if "trace" in est:
                    acc["b"].push(b)
                    acc["pr"].push(ins + b)
                if "cv" in est:
                    acc["cv"].push(cvo)
            row = ExperimentRow(tau, cand.model_id, cand.size, cand.stratum)
            if "trace" in est:
                row = replace(row, b_hat_mean=acc["b"].mean, b_hat_sd=acc["b"].sd,
                              pr_debiased_mean=acc["pr"].mean)
            if "cv" in est:
                row = replace(row, cv_opt_mean=acc["cv"].mean, cv_opt_sd=acc["cv"].sd)
            if oracles is not None:
                row = replace(row, oracle_optimism=oracles[mi].optimism, oracle_pr=oracles[mi].pr)
            if "closed_form" in est:
                row = replace(row, closed_form_trace=closed_form_trace(config, cand, tau))
            rows.append(row)
    return rows


def run_experiment(config: ExperimentConfig, workers=1):
    values, cands = run_replications(config, workers)
    return aggregate(config, values, cands, workers)


def _fmt(v):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def format_rows(rows, config: ExperimentConfig | None = None, failure=None):
    buf = io.StringIO()
    if config is not None:
        for line in config.describe():
            buf.write(f"# {line}\n")
    buf.write(",".join(COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(getattr(row, c)) for c in COLUMNS) + "\n")
    if failure is not None:
        buf.write(f"# FAILED: {failure}\n")
    return buf.getvalue()


def aggregate_histogram(values, bins):
    """Equal-width bins over [min, max]; counts sum to the number of values."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        counts = np.zeros(bins, dtype=int)
        counts[0] = v.size
        return np.full(bins + 1, lo), counts
    counts, edges = np.histogram(v, bins=bins, range=(lo, hi))
    return edges, counts


def stratum_regression(rows, tau):
    """Least-squares line of b_hat_mean on model_size for each stratum.

    Returns ``{stratum: (slope, intercept, r_squared)}``; the intercept-only
    model is excluded.
    """
    out = {}
    for j in sorted({r.stratum for r in rows if r.tau == tau and r.model_id != "int"}):
        sel = [r for r in rows if r.tau == tau and r.stratum == j and r.model_id != "int"]
        x = np.array([r.model_size for r in sel], dtype=float)
        y = np.array([r.b_hat_mean for r in sel], dtype=float)
        if len(sel) < 2:
            continue
        slope, icept = np.polyfit(x, y, 1)
        resid = y - (slope * x + icept)
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
        out[j] = (float(slope), float(icept), r2)
    return out
