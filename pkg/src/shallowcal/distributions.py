"""Synthetic joint distributions with known conditional probabilities.

Every distribution bundles a marginal sampler over the unit ball, an exact
conditional probability function x -> P(Y = +1 | X = x), and an evaluation
scheme for population risks: composite Gauss-Legendre quadrature in one
dimension (deterministic, with panel edges inserted at declared
discontinuities), seeded Monte Carlo otherwise.

Population quantities are always computed against the true conditional
model, never estimated from sampled labels.

Also ships the IDX (big-endian) image/label reader used for binary
classification on real digit data; pixels are scaled by 1/(255 sqrt(d)) and
then projected onto the unit ball, a choice recorded in the sample metadata.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .metrics import RiskBreakdown, binary_entropy, logistic_loss, risk_breakdown, sigmoid

__all__ = [
    "Distribution",
    "LabeledSample",
    "PopulationEvaluator",
    "PopulationRisk",
    "bayes_risk",
    "bayes_zero_one_risk",
    "builtin_distributions",
    "evaluator",
    "load_idx",
    "make_distribution",
    "population_risk",
    "sample",
]

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

_NORM_SLACK = 1e-12


@dataclass
class LabeledSample:
    points: np.ndarray
    labels: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass
class PopulationEvaluator:
    """Weighted point set representing the marginal for risk integrals."""

    points: np.ndarray
    weights: np.ndarray
    provenance: dict

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise ValueError("evaluator weights must be nonnegative")
        if abs(float(self.weights.sum()) - 1.0) > _NORM_SLACK:
            raise ValueError("evaluator weights must sum to 1")


@dataclass
class PopulationRisk:
    breakdown: RiskBreakdown
    logistic_se: float | None
    provenance: dict


@dataclass
class Distribution:
    """Marginal sampler plus exact conditional probability model.

    1-d distributions carry a closed-form marginal CDF (used for exact
    interval masses), the abscissas where the conditional probability is
    discontinuous or crosses 1/2, and optionally an interval on which it is
    bounded away from {0, 1/2, 1} (used by the interpolation experiments).
    """

    name: str
    dim: int
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    cond_prob_raw: Callable[[np.ndarray], np.ndarray]
    eval_scheme: str = "quadrature"
    support: tuple[float, float] | None = None
    cdf: Callable[[np.ndarray], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()
    half_crossings: tuple[float, ...] = ()
    wrong_pair_interval: tuple[float, float] | None = None
    documented: dict = field(default_factory=dict)
    mc_eval_n: int = 1 << 14
    mc_eval_seed: int = 2024
    quad_nodes: int = 512

    def cond_prob(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.clip(self.cond_prob_raw(X), 0.0, 1.0)


def sample(dist: Distribution, n: int, seed: int) -> LabeledSample:
    """n iid draws; labels are +1 with probability cond_prob(x)."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    X = dist.sample_x(rng, n)
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms > 1 + _NORM_SLACK):
        raise AssertionError("marginal sampler produced a point outside the unit ball")
    p = dist.cond_prob(X)
    y = np.where(rng.uniform(size=n) < p, 1.0, -1.0)
    return LabeledSample(points=X, labels=y, seed=seed)


def _gauss_legendre_panels(lo, hi, nodes, breakpoints, pdf):
    """Composite Gauss-Legendre rule with >= ``nodes`` total nodes and
    panel edges at every interior breakpoint."""
    per_panel = 16
    panels = max(32, int(np.ceil(nodes / per_panel)))
    edges = np.linspace(lo, hi, panels + 1)
    interior = [b for b in breakpoints if lo < b < hi]
    edges = np.unique(np.concatenate([edges, interior]))
    xi, wi = np.polynomial.legendre.leggauss(per_panel)
    points, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        half = (b - a) / 2.0
        x = half * xi + (a + b) / 2.0
        points.append(x)
        weights.append(half * wi * pdf(x))
    return np.concatenate(points), np.concatenate(weights)


def evaluator(dist: Distribution, nodes: int | None = None) -> PopulationEvaluator:
    if dist.eval_scheme == "quadrature":
        if dist.dim != 1 or dist.support is None:
            raise ValueError("quadrature evaluation requires a 1-d supported marginal")
        lo, hi = dist.support
        pdf = lambda x: np.full_like(x, 1.0 / (hi - lo))
        x, w = _gauss_legendre_panels(
            lo, hi, nodes or dist.quad_nodes, dist.breakpoints, pdf
        )
        return PopulationEvaluator(
            points=x[:, None],
            weights=w,
            provenance={"scheme": "quadrature", "nodes": int(len(x))},
        )
    if dist.eval_scheme == "mc":
        rng = np.random.default_rng(dist.mc_eval_seed)
        k = nodes or dist.mc_eval_n
        X = dist.sample_x(rng, k)
        return PopulationEvaluator(
            points=X,
            weights=np.full(k, 1.0 / k),
            provenance={"scheme": "mc", "points": int(k), "seed": dist.mc_eval_seed},
        )
    raise ValueError(f"unknown eval scheme {dist.eval_scheme!r}")


def population_risk(
    dist: Distribution,
    predictor: Callable[[np.ndarray], np.ndarray],
    ev: PopulationEvaluator | None = None,
) -> PopulationRisk:
    """Population risk decomposition of a margin predictor.

    The predictor maps an (n, d) array of points to n margins.  Monte Carlo
    evaluators additionally report the standard error of the logistic risk.
    """
    ev = ev or evaluator(dist)
    margins = np.asarray(predictor(ev.points), dtype=float)
    p = dist.cond_prob(ev.points)
    breakdown = risk_breakdown(margins, p, ev.weights)
    se = None
    if ev.provenance.get("scheme") == "mc":
        losses = p * logistic_loss(margins) + (1 - p) * logistic_loss(-margins)
        se = float(np.std(losses, ddof=1) / np.sqrt(len(losses)))
    return PopulationRisk(breakdown=breakdown, logistic_se=se, provenance=ev.provenance)


def bayes_risk(dist: Distribution, ev: PopulationEvaluator | None = None) -> float:
    """Optimal population logistic risk: the integrated binary entropy of p_y."""
    ev = ev or evaluator(dist)
    return float(ev.weights @ binary_entropy(dist.cond_prob(ev.points)))


def bayes_zero_one_risk(dist: Distribution, ev: PopulationEvaluator | None = None) -> float:
    ev = ev or evaluator(dist)
    p = dist.cond_prob(ev.points)
    return float(ev.weights @ np.minimum(p, 1 - p))


def _uniform_1d(lo: float, hi: float):
    if not (-1 - _NORM_SLACK <= lo < hi <= 1 + _NORM_SLACK):
        raise ValueError("1-d support must sit inside [-1, 1]")

    def sample_x(rng, n):
        return rng.uniform(lo, hi, size=(n, 1))

    def cdf(x):
        return np.clip((np.asarray(x, dtype=float) - lo) / (hi - lo), 0.0, 1.0)

    return sample_x, cdf


def logistic_1d(c: float = 2.0, lo: float = -1.0, hi: float = 1.0) -> Distribution:
    """Uniform marginal with smooth logistic conditional p(x) = sigmoid(c x).

    Realizable by a linear-in-feature teacher, so this is the canonical
    easy task.  The Bayes predictor is x -> c x.
    """
    sample_x, cdf = _uniform_1d(lo, hi)
    interval = None
    if c > 0:
        interval = (max(lo, hi / 4.0), hi)
    elif c < 0:
        interval = (lo, min(hi, lo / 4.0))
    return Distribution(
        name=f"logistic-1d(c={c})",
        dim=1,
        sample_x=sample_x,
        cond_prob_raw=lambda X: sigmoid(c * X[:, 0]),
        support=(lo, hi),
        cdf=cdf,
        half_crossings=(0.0,) if c != 0 else (),
        wrong_pair_interval=interval,
        documented={"bayes_margin": f"{c} * x"},
    )


def step_1d(lo: float = -1.0, hi: float = 1.0) -> Distribution:
    """Uniform marginal with discontinuous conditional 0.3 + 0.4 [x > 0]."""
    sample_x, cdf = _uniform_1d(lo, hi)
    return Distribution(
        name="step-1d",
        dim=1,
        sample_x=sample_x,
        cond_prob_raw=lambda X: 0.3 + 0.4 * (X[:, 0] > 0),
        support=(lo, hi),
        cdf=cdf,
        breakpoints=(0.0,),
        half_crossings=(0.0,),
        documented={"bayes_zero_one": 0.3, "bayes_risk": binary_entropy(0.3)},
    )


def step_smooth_1d(width: float = 0.1, lo: float = -1.0, hi: float = 1.0) -> Distribution:
    """Smoothed step: p(x) = 0.3 + 0.4 sigmoid(x / width).

    Continuous with range (0.3, 0.7); the declared interval keeps p away
    from {0, 1/2, 1} by at least 0.19.
    """
    if width <= 0:
        raise ValueError("width must be positive")
    sample_x, cdf = _uniform_1d(lo, hi)
    interval = (min(5 * width, hi / 2.0), hi)
    return Distribution(
        name=f"step-smooth-1d(width={width})",
        dim=1,
        sample_x=sample_x,
        cond_prob_raw=lambda X: 0.3 + 0.4 * sigmoid(X[:, 0] / width),
        support=(lo, hi),
        cdf=cdf,
        half_crossings=(0.0,),
        wrong_pair_interval=interval,
    )


def constant_1d(p: float = 0.75, lo: float = -1.0, hi: float = 1.0) -> Distribution:
    """Pure label noise: p_y identically p on a uniform 1-d marginal."""
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    sample_x, cdf = _uniform_1d(lo, hi)
    interval = (lo, hi) if p not in (0.0, 0.5, 1.0) else None
    return Distribution(
        name=f"constant-1d(p={p})",
        dim=1,
        sample_x=sample_x,
        cond_prob_raw=lambda X: np.full(X.shape[0], p),
        support=(lo, hi),
        cdf=cdf,
        wrong_pair_interval=interval,
        documented={
            "bayes_risk": binary_entropy(p),
            "bayes_zero_one": min(p, 1 - p),
        },
    )


def sphere_cap_teacher(d: int = 4, c: float = 4.0, mc_eval_n: int = 1 << 14) -> Distribution:
    """Uniform on the hemisphere cap {x in S^(d-1): x_1 >= 0} with a
    logistic teacher p(x) = sigmoid(c x_1).  Monte Carlo evaluation."""
    if d < 2:
        raise ValueError("sphere cap marginal requires d >= 2")

    def sample_x(rng, n):
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        g[:, 0] = np.abs(g[:, 0])
        return g

    return Distribution(
        name=f"sphere-cap-teacher(d={d},c={c})",
        dim=d,
        sample_x=sample_x,
        cond_prob_raw=lambda X: sigmoid(c * X[:, 0]),
        eval_scheme="mc",
        mc_eval_n=mc_eval_n,
        documented={"bayes_margin": f"{c} * x_1"},
    )


_CATALOG = {
    "logistic-1d": logistic_1d,
    "step-1d": step_1d,
    "step-smooth-1d": step_smooth_1d,
    "constant-1d": constant_1d,
    "sphere-cap-teacher": sphere_cap_teacher,
}


def builtin_distributions() -> dict:
    """Name -> factory for every built-in distribution."""
    return dict(_CATALOG)


def make_distribution(name: str, **params) -> Distribution:
    if name not in _CATALOG:
        raise ValueError(f"unknown distribution {name!r}; have {sorted(_CATALOG)}")
    return _CATALOG[name](**params)


def _read_idx(path, expected_magic, expected_ndim):
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 * (1 + expected_ndim):
        raise ValueError(f"{path}: truncated IDX header")
    magic = struct.unpack(">i", raw[:4])[0]
    if magic != expected_magic:
        raise ValueError(f"{path}: bad IDX magic {magic:#010x}")
    dims = struct.unpack(f">{expected_ndim}i", raw[4 : 4 * (1 + expected_ndim)])
    body = raw[4 * (1 + expected_ndim) :]
    expected_bytes = int(np.prod(dims))
    if len(body) != expected_bytes:
        raise ValueError(
            f"{path}: expected {expected_bytes} data bytes, found {len(body)}"
        )
    return np.frombuffer(body, dtype=np.uint8).reshape(dims)


def load_idx(path_images, path_labels, class_pair: tuple[int, int]) -> LabeledSample:
    """Load a two-class subset of an IDX image/label pair.

    Class ``class_pair[0]`` maps to +1 and ``class_pair[1]`` to -1.  Images
    are flattened, scaled by 1/(255 sqrt(d)), and projected onto the unit
    ball by dividing by max(1, ||x||).
    """
    a, b = class_pair
    if a == b:
        raise ValueError("class pair must be two distinct classes")
    images = _read_idx(path_images, IDX_IMAGE_MAGIC, 3)
    labels = _read_idx(path_labels, IDX_LABEL_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        raise ValueError("image and label counts disagree")
    keep = (labels == a) | (labels == b)
    if not np.any(labels == a) or not np.any(labels == b):
        raise ValueError(f"class pair {class_pair} absent from label file")
    X = images[keep].reshape(keep.sum(), -1).astype(float)
    d = X.shape[1]
    X /= 255.0 * np.sqrt(d)
    norms = np.linalg.norm(X, axis=1)
    X /= np.maximum(1.0, norms)[:, None]
    y = np.where(labels[keep] == a, 1.0, -1.0)
    return LabeledSample(
        points=X,
        labels=y,
        meta={
            "source": "idx",
            "class_pair": [int(a), int(b)],
            "scaling": "pixel / (255 sqrt(d)), then divide by max(1, ||x||)",
        },
    )
