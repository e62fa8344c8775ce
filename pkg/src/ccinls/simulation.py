"""Monte Carlo harness: logistic and Cobb-Douglas designs, INLS vs CC-INLS.

Every replication draws its training inputs, noise and test inputs from
separate Philox streams keyed by ``(seed, replication, role)``; normals come
from the Box-Muller transform of those uniforms, so results do not depend on
numpy's default normal sampler or on the order in which replications run.
"""

from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .anchors import CentroidStat, Strategy, extract_anchors, step_predict
from .data import Dataset
from .inls import fit_inls
from .predictor import CcModelConfig, CcPredictor


class Form(str, enum.Enum):
    LOGISTIC = "logistic"
    COBB_DOUGLAS = "cobb_douglas"


INLS = "INLS"
CC_VERTICES = "CC-INLS-vertices"
CC_CENTROIDS = "CC-INLS-centroids"
ESTIMATORS = (INLS, CC_VERTICES, CC_CENTROIDS)

# (form, noise label) -> sigma
NOISE = {
    (Form.LOGISTIC, "low"): 0.03, (Form.LOGISTIC, "high"): 0.1,
    (Form.COBB_DOUGLAS, "low"): 0.1, (Form.COBB_DOUGLAS, "high"): 0.2,
}
DOMAIN = {Form.LOGISTIC: (0.0, 1.0), Form.COBB_DOUGLAS: (1.0, 6.0)}
_LOGISTIC_SCALE = (1.0 + math.exp(7.0)) / math.exp(7.0)

_ROLES = {"train_x": 0, "train_eps": 1, "test_x": 2, "test_eps": 3}
TARGETS = ("noiseless", "noisy")


class ScenarioError(RuntimeError):
    """A replication failed; the message carries the scenario id and replication."""


def parse_form(text: str | Form) -> Form:
    if isinstance(text, Form):
        return text
    key = text.strip().lower().replace("-", "_")
    if key in ("cobb", "cd", "cobbdouglas"):
        key = "cobb_douglas"
    return Form(key)


@dataclass(frozen=True)
class ScenarioConfig:
    functional_form: Form
    s: int
    sigma_eps: float
    n_in: int
    n_out: int = 100
    replications: int = 100
    rng_seed: int = 0
    target: str = "noiseless"

    def __post_init__(self):
        object.__setattr__(self, "functional_form", parse_form(self.functional_form))
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.s not in (1, 2):
            raise ValueError("s must be 1 or 2")
        if not self.sigma_eps > 0:
            raise ValueError("sigma_eps must be positive")
        if self.n_in < 2:
            raise ValueError("n_in must be at least 2")
        if self.n_out < 1 or self.replications < 1:
            raise ValueError("n_out and replications must be positive")
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @property
    def scenario_id(self) -> str:
        tail = "-noisy" if self.target == "noisy" else ""
        return (f"{self.functional_form.value}-s{self.s}-sigma{self.sigma_eps:g}"
                f"-n{self.n_in}-seed{self.rng_seed}{tail}")

    @property
    def noise_label(self) -> str:
        for (form, label), sig in NOISE.items():
            if form is self.functional_form and math.isclose(sig, self.sigma_eps):
                return label
        return f"sigma={self.sigma_eps:g}"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["functional_form"] = self.functional_form.value
        return d


def load_scenario_file(path: str) -> ScenarioConfig:
    """Flat ``key = value`` file; ``#`` starts a comment.

    Keys are the :class:`ScenarioConfig` field names, plus ``noise = low|high``
    as a shorthand for ``sigma_eps``.
    """
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            k, v = (t.strip() for t in line.split("=", 1))
            raw[k] = v
    return scenario_from_mapping(raw)


def scenario_from_mapping(raw: dict) -> ScenarioConfig:
    known = {f.name for f in fields(ScenarioConfig)} | {"noise", "form"}
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown scenario key(s): {', '.join(sorted(unknown))}")
    form = parse_form(raw.get("functional_form", raw.get("form", "logistic")))
    if "sigma_eps" in raw:
        sigma = float(raw["sigma_eps"])
    else:
        sigma = NOISE[(form, str(raw.get("noise", "low")).lower())]
    return ScenarioConfig(
        functional_form=form, s=int(raw.get("s", 1)), sigma_eps=sigma,
        n_in=int(raw.get("n_in", 25)), n_out=int(raw.get("n_out", 100)),
        replications=int(raw.get("replications", 100)), rng_seed=int(raw.get("rng_seed", 0)),
        target=str(raw.get("target", "noiseless")))


class ReplicationStreams:
    """Independent counter-based streams for one replication."""

    def __init__(self, seed: int, replication: int):
        self.seed = int(seed)
        self.replication = int(replication)

    def _gen(self, role: str) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFF, self.seed >> 32,
                                     self.replication, _ROLES[role]])
        return np.random.Generator(np.random.Philox(ss))

    def uniform(self, role: str, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        return lo + (hi - lo) * self._gen(role).random(shape)

    def normal(self, role: str, n: int) -> np.ndarray:
        u = self._gen(role).random((2, (n + 1) // 2))
        r = np.sqrt(-2.0 * np.log1p(-u[0]))  # 1 - u lies in (0, 1]
        z = np.concatenate([r * np.cos(2 * np.pi * u[1]), r * np.sin(2 * np.pi * u[1])])
        return z[:n]


def _as_streams(rng) -> ReplicationStreams:
    if isinstance(rng, ReplicationStreams):
        return rng
    if isinstance(rng, (int, np.integer)):
        return ReplicationStreams(int(rng), 0)
    raise TypeError("rng must be ReplicationStreams or an integer seed")


def logistic_f(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = -3.0 + 10.0 * X[:, 0] if X.shape[1] == 1 else -3.0 + 5.0 * X[:, 0] + 5.0 * X[:, 1]
    return _LOGISTIC_SCALE * expit(z)


def cobb_douglas_f(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X[:, 0] ** 0.8 if X.shape[1] == 1 else X[:, 0] ** 0.4 * X[:, 1] ** 0.4


def true_function(form: Form) -> Callable[[np.ndarray], np.ndarray]:
    return logistic_f if parse_form(form) is Form.LOGISTIC else cobb_douglas_f


def _generate(cfg: ScenarioConfig, rng, f) -> tuple[Dataset, Dataset]:
    st = _as_streams(rng)
    lo, hi = DOMAIN[cfg.functional_form]
    X = st.uniform("train_x", (cfg.n_in, cfg.s), lo, hi)
    y = f(X) + cfg.sigma_eps * st.normal("train_eps", cfg.n_in)
    Xt = st.uniform("test_x", (cfg.n_out, cfg.s), lo, hi)
    return Dataset(X, y), Dataset(Xt, f(Xt))


def gen_logistic(cfg: ScenarioConfig, rng) -> tuple[Dataset, Dataset]:
    """Training sample with noise and a test sample carrying the noiseless ``f``."""
    if cfg.functional_form is not Form.LOGISTIC:
        raise ValueError("gen_logistic needs a logistic scenario")
    return _generate(cfg, rng, logistic_f)


def gen_cobb_douglas(cfg: ScenarioConfig, rng) -> tuple[Dataset, Dataset]:
    if cfg.functional_form is not Form.COBB_DOUGLAS:
        raise ValueError("gen_cobb_douglas needs a Cobb-Douglas scenario")
    return _generate(cfg, rng, cobb_douglas_f)


def generate(cfg: ScenarioConfig, rng) -> tuple[Dataset, Dataset]:
    gen = gen_logistic if cfg.functional_form is Form.LOGISTIC else gen_cobb_douglas
    return gen(cfg, rng)


@dataclass(frozen=True)
class MetricsRow:
    estimator: str
    rmse: float
    mse: float
    bias: float
    replications: int = 1
    scenario_id: str = ""

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.rmse, self.mse, self.bias)):
            raise ValueError(f"non-finite metrics for {self.estimator}")

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(estimator: str, yhat: np.ndarray, f_true: np.ndarray, scenario_id: str = "") -> MetricsRow:
    err = np.asarray(yhat, dtype=float) - np.asarray(f_true, dtype=float)
    mse = float(np.mean(err ** 2))
    return MetricsRow(estimator, math.sqrt(mse), mse, float(np.mean(err)), 1, scenario_id)


def _predict_all(train: Dataset, test: Dataset, estimators: Sequence[str],
                 cc_config: CcModelConfig | None) -> dict[str, np.ndarray]:
    fit = fit_inls(train)
    out = {}
    for est in estimators:
        if est == INLS:
            out[est] = step_predict(extract_anchors(train, fit.blocks, Strategy.VERTICES), test.X)
        elif est in (CC_VERTICES, CC_CENTROIDS):
            strategy = Strategy.VERTICES if est == CC_VERTICES else Strategy.CENTROIDS
            anchors = extract_anchors(train, fit.blocks, strategy, CentroidStat.MEAN)
            preds = CcPredictor(anchors, cc_config).predict_batch(test.X)
            out[est] = np.array([p.theta for p in preds])
        else:
            raise ValueError(f"unknown estimator {est!r}; expected one of {ESTIMATORS}")
    return out


def evaluate(estimator: str, train: Dataset, test: Dataset,
             cc_config: CcModelConfig | None = None, scenario_id: str = "") -> MetricsRow:
    """Fit on ``train`` and score against the noiseless targets in ``test.y``."""
    yhat = _predict_all(train, test, [estimator], cc_config)[estimator]
    return metrics(estimator, yhat, test.y, scenario_id)


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rows: list[MetricsRow]
    per_replication: list[dict] = field(default_factory=list)
    cc_config: dict = field(default_factory=dict)
    seconds: float = 0.0

    def detail(self) -> dict:
        return {"scenario": self.config.to_dict(), "scenario_id": self.config.scenario_id,
                "cc_config": self.cc_config,
                "summary": [r.to_dict() for r in self.rows],
                "replications": self.per_replication}

    def to_json(self) -> str:
        return json.dumps(self.detail(), indent=2)


def run_replication(cfg: ScenarioConfig, rep: int, estimators: Sequence[str] = ESTIMATORS,
                    cc_config: CcModelConfig | None = None) -> dict:
    streams = ReplicationStreams(cfg.rng_seed, rep)
    try:
        train, test = generate(cfg, streams)
        preds = _predict_all(train, test, estimators, cc_config)
    except Exception as exc:
        raise ScenarioError(f"{cfg.scenario_id} replication {rep}: {exc}") from exc
    target = test.y
    if cfg.target == "noisy":
        target = target + cfg.sigma_eps * streams.normal("test_eps", cfg.n_out)
    rows = {est: metrics(est, yhat, target, cfg.scenario_id) for est, yhat in preds.items()}
    return {"replication": rep,
            "metrics": {est: {"rmse": r.rmse, "mse": r.mse, "bias": r.bias} for est, r in rows.items()}}


def _run_one(args):
    return run_replication(*args)


def run_scenario_detailed(cfg: ScenarioConfig, estimators: Sequence[str] = ESTIMATORS,
                          cc_config: CcModelConfig | None = None, workers: int = 1,
                          progress: Callable[[int, int], None] | None = None) -> ScenarioResult:
    """All replications plus the averaged rows.

    Row ``mse`` and ``bias`` are replication means; row ``rmse`` is the square
    root of the mean MSE.
    """
    cc_config = cc_config or CcModelConfig(formulation="enumerate")
    t0 = time.perf_counter()
    jobs = [(cfg, rep, tuple(estimators), cc_config) for rep in range(cfg.replications)]
    reps: list[dict] = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, res in enumerate(pool.map(_run_one, jobs)):
                reps.append(res)
                if progress:
                    progress(i + 1, len(jobs))
    else:
        for i, job in enumerate(jobs):
            reps.append(_run_one(job))
            if progress:
                progress(i + 1, len(jobs))
    rows = []
    for est in estimators:
        mse = float(np.mean([r["metrics"][est]["mse"] for r in reps]))
        bias = float(np.mean([r["metrics"][est]["bias"] for r in reps]))
        rows.append(MetricsRow(est, math.sqrt(mse), mse, bias, cfg.replications, cfg.scenario_id))
    cc = {k: (v.value if isinstance(v, enum.Enum) else v) for k, v in asdict(cc_config).items()}
    return ScenarioResult(cfg, rows, reps, cc, time.perf_counter() - t0)


def run_scenario(cfg: ScenarioConfig, estimators: Sequence[str] = ESTIMATORS,
                 cc_config: CcModelConfig | None = None, workers: int = 1) -> list[MetricsRow]:
    """One averaged :class:`MetricsRow` per estimator."""
    return run_scenario_detailed(cfg, estimators, cc_config, workers).rows


TABLE_COLUMNS = ("form", "s", "noise", "sigma_eps", "n_in", "n_out", "replications",
                 "estimator", "rmse", "mse", "bias")


def table_rows(result: ScenarioResult) -> list[dict]:
    c = result.config
    return [{"form": c.functional_form.value, "s": c.s, "noise": c.noise_label,
             "sigma_eps": c.sigma_eps, "n_in": c.n_in, "n_out": c.n_out,
             "replications": c.replications, "estimator": r.estimator,
             "rmse": r.rmse, "mse": r.mse, "bias": r.bias} for r in result.rows]
