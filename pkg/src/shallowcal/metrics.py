"""Scalar loss identities for binary classification with the logistic loss.

Everything downstream leans on a small set of exact relationships:

* logistic loss      loss(r) = ln(1 + exp(-r))
* sigmoid            sigmoid(r) = 1 / (1 + exp(-r))
* binary KL          kl(p, q) = p ln(p/q) + (1-p) ln((1-p)/(1-q))
* multiplicative     loss(-a) / loss(-b) <= exp(a - b)  whenever a >= b
* error chain        0.5 * (excess zero-one)^2
                       <= 2 * integral (sigmoid(f) - p)^2
                       <= binary KL aggregate
                       == excess logistic risk

The chain is exact for discrete weighted point sets, which is how every
population and empirical risk in this package is ultimately represented.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

__all__ = [
    "LOG2",
    "RiskBreakdown",
    "binary_entropy",
    "binary_kl",
    "logistic_loss",
    "logistic_loss_derivative",
    "multiplicative_ratio_bound",
    "risk_breakdown",
    "sigmoid",
    "sign_convention",
]

LOG2 = math.log(2.0)

_WEIGHT_TOL = 1e-9


def logistic_loss(margin):
    """ln(1 + exp(-margin)), computed in softplus form.

    Stable for |margin| up to at least 1e4: large positive margins
    underflow gracefully toward 0 (staying positive while representable),
    large negative margins grow linearly without overflow.
    """
    margin = np.asarray(margin, dtype=float)
    out = np.logaddexp(0.0, -margin)
    return float(out) if out.ndim == 0 else out


def logistic_loss_derivative(margin):
    """d/dr ln(1 + exp(-r)) = -sigmoid(-r); always in (-1, 0)."""
    margin = np.asarray(margin, dtype=float)
    out = -sigmoid(-margin)
    return float(out) if np.ndim(out) == 0 else out


def sigmoid(r):
    """1 / (1 + exp(-r)) without overflow on either tail."""
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    pos = r >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-r[pos]))
    e = np.exp(r[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out) if out.ndim == 0 else out


def sign_convention(margin):
    """Classifier sign with sign(0) = +1, i.e. 2 * [r >= 0] - 1."""
    margin = np.asarray(margin, dtype=float)
    out = np.where(margin >= 0, 1.0, -1.0)
    return float(out) if out.ndim == 0 else out


def multiplicative_ratio_bound(a: float, b: float) -> tuple[float, float]:
    """Return (loss(-a)/loss(-b), exp(a-b)) for a >= b.

    The first component never exceeds the second; the pair is returned so
    callers can monitor the inequality directly.
    """
    if not (a >= b):
        raise ValueError(f"requires a >= b, got a={a}, b={b}")
    # loss(-a) = ln(1 + e^a) = softplus(a)
    ratio = np.logaddexp(0.0, a) / np.logaddexp(0.0, b)
    return float(ratio), float(np.exp(a - b))


def binary_kl(p, q):
    """KL divergence between Bernoulli(p) and Bernoulli(q), in nats.

    Uses the 0 * ln 0 = 0 convention.  When q sits on the boundary {0, 1}
    and p disagrees, the divergence is genuinely infinite and ``inf`` is
    returned; report serializers are responsible for rendering that as a
    distinguished token rather than a bare float.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p < 0) | (p > 1)) or np.any((q < 0) | (q > 1)):
        raise ValueError("binary_kl arguments must lie in [0, 1]")
    with np.errstate(divide="ignore", invalid="ignore"):
        term1 = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
        term0 = np.where(p < 1, (1 - p) * (np.log1p(-p) - np.log1p(-q)), 0.0)
    out = term1 + term0
    # p == q on a boundary gives 0 * (-inf - -inf) = nan above; that is 0.
    out = np.where(p == q, 0.0, out)
    return float(out) if out.ndim == 0 else out


def binary_entropy(p):
    """-p ln p - (1-p) ln(1-p); the pointwise-optimal logistic loss at p."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h1 = np.where(p > 0, -p * np.log(p), 0.0)
        h0 = np.where(p < 1, -(1 - p) * np.log1p(-p), 0.0)
    out = h1 + h0
    return float(out) if out.ndim == 0 else out


@dataclass
class RiskBreakdown:
    """Risk of a margin predictor against a known conditional model.

    All members refer to one weighted point set.  ``binary_kl`` equals
    ``excess_logistic`` by construction whenever both are evaluated
    against the same conditional probabilities, and the chain

        0.5 * excess_zero_one**2  <=  2 * l2_calibration_sq
                                  <=  binary_kl  ==  excess_logistic

    holds exactly (up to accumulation order) for every instance.
    """

    logistic_risk: float
    excess_logistic: float
    binary_kl: float
    l2_calibration_sq: float
    zero_one_risk: float
    excess_zero_one: float

    def to_dict(self) -> dict:
        return asdict(self)


def risk_breakdown(margins, cond_probs, weights) -> RiskBreakdown:
    """Full risk decomposition over a weighted point set.

    Parameters
    ----------
    margins : array (n,)
        Predictor output f(x_k) at each point.
    cond_probs : array (n,)
        True conditional probability p(y = +1 | x_k) at each point.
    weights : array (n,)
        Nonnegative weights summing to 1 (quadrature or Monte Carlo).
    """
    m = np.asarray(margins, dtype=float)
    p = np.asarray(cond_probs, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not (m.shape == p.shape == w.shape and m.ndim == 1):
        raise ValueError("margins, cond_probs, weights must be 1-d and matching")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    total = float(w.sum())
    if abs(total - 1.0) > _WEIGHT_TOL:
        raise ValueError(f"weights must sum to 1 within {_WEIGHT_TOL}, got {total!r}")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("conditional probabilities must lie in [0, 1]")

    loss_pos = logistic_loss(m)
    loss_neg = logistic_loss(-m)
    logistic_risk = float(w @ (p * loss_pos + (1 - p) * loss_neg))
    bayes_logistic = float(w @ binary_entropy(p))

    phi = sigmoid(m)
    kl = float(w @ binary_kl(p, phi))
    l2_sq = float(w @ (phi - p) ** 2)

    predicted_sign = sign_convention(m)
    # P[sign(f(X)) != Y] pointwise: wrong with prob p when predicting -1,
    # wrong with prob 1-p when predicting +1.
    zero_one = float(w @ np.where(predicted_sign > 0, 1 - p, p))
    bayes_zero_one = float(w @ np.minimum(p, 1 - p))

    return RiskBreakdown(
        logistic_risk=logistic_risk,
        excess_logistic=logistic_risk - bayes_logistic,
        binary_kl=kl,
        l2_calibration_sq=l2_sq,
        zero_one_risk=zero_one,
        excess_zero_one=zero_one - bayes_zero_one,
    )
