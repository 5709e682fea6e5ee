"""Constant-step full-batch gradient descent on the empirical logistic risk.

Besides the plain descent loop, the trainer maintains two families of
per-run monitors built on frozen-feature risks.  Writing hat-R^(i) for the
empirical risk of the linear predictor in the gradient features captured at
iterate i, every run with step size eta <= 4/rho^2 on inputs with norm <= 1
must satisfy, step by step,

    (eta/2) * ||grad hat-R(W_i)||^2  <=  hat-R^(i)(W_i) - hat-R^(i)(W_{i+1})

and, for any fixed reference matrix Z and any horizon t,

    ||W_t - Z||^2 + 2 eta sum_{i<t} hat-R^(i)(W_{i+1})
        <=  ||W_0 - Z||^2 + 2 eta sum_{i<t} hat-R^(i)(Z).

Both are deterministic inequalities; a violation beyond float accumulation
noise indicates an implementation bug, which is exactly what the monitors
exist to catch.

Iterate selection keeps the recorded iterate of minimal empirical risk among
those within the early stopping radius of the initialization, breaking ties
toward the earliest index.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import logistic_loss, logistic_loss_derivative
from .network import FrozenFeatures, Network, frozen_forward_batch

__all__ = [
    "DIVERGENCE_THRESHOLD",
    "IterateRecord",
    "RegretCertificate",
    "TrainConfig",
    "Trajectory",
    "empirical_risk",
    "frozen_empirical_risk",
    "gd_step",
    "monitor_smoothness",
    "regret_certificate",
    "train",
    "write_trajectory",
]

DIVERGENCE_THRESHOLD = 1e6

_CHUNK_BUDGET = 1 << 22

SMOOTHNESS_TOL = 1e-9
REGRET_TOL = 1e-8


@dataclass
class TrainConfig:
    """Hyperparameters of one gradient descent run.

    ``eps_gd`` is the optimization accuracy the horizon was derived from and
    is carried as metadata; ``r_gd`` is the early stopping radius (may be
    ``inf`` for no early stopping).
    """

    eta: float
    t_max: int
    eps_gd: float | None = None
    r_gd: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.t_max < 1:
            raise ValueError("t_max must be at least 1")
        if self.r_gd < 0:
            raise ValueError("r_gd must be nonnegative")


@dataclass
class IterateRecord:
    index: int
    emp_risk: float
    dist_init: float
    grad_norm: float
    smooth_resid: float
    selected: bool = False


@dataclass
class RegretCertificate:
    """Both sides of the descent regret inequality against a reference matrix.

    ``frozen_next[i]`` holds hat-R^(i)(W_{i+1}) and ``frozen_ref[i]`` holds
    hat-R^(i)(Z); ``dist_sq[j]`` holds ||W_j - Z||^2 for every recorded
    iterate, so the inequality can be evaluated at any prefix.
    """

    name: str
    eta: float
    frozen_next: np.ndarray
    frozen_ref: np.ndarray
    dist_sq: np.ndarray

    def sides(self, t: int | None = None) -> tuple[float, float]:
        if t is None:
            t = len(self.frozen_next)
        if not 0 <= t <= len(self.frozen_next):
            raise ValueError(f"prefix must lie in [0, {len(self.frozen_next)}]")
        lhs = self.dist_sq[t] + 2 * self.eta * float(self.frozen_next[:t].sum())
        rhs = self.dist_sq[0] + 2 * self.eta * float(self.frozen_ref[:t].sum())
        return lhs, rhs

    @property
    def lhs(self) -> float:
        return self.sides()[0]

    @property
    def rhs(self) -> float:
        return self.sides()[1]

    def holds(self, tol: float = REGRET_TOL, every_prefix: bool = True) -> bool:
        horizons = range(len(self.frozen_next) + 1) if every_prefix else [None]
        for t in horizons:
            lhs, rhs = self.sides(t)
            if lhs > rhs + tol * max(1.0, rhs):
                return False
        return True


@dataclass
class Trajectory:
    """Per-iterate scalars plus the retained selected iterate."""

    config: TrainConfig
    rho: float
    n_examples: int
    records: list[IterateRecord] = field(default_factory=list)
    selected_index: int | None = None
    selected_weights: np.ndarray | None = None
    status: str = "ok"
    certificates: dict[str, RegretCertificate] = field(default_factory=dict)
    monitors_enabled: bool = True

    @property
    def selected_risk(self) -> float | None:
        if self.selected_index is None:
            return None
        return self.records[self.selected_index].emp_risk

    def smoothness_ok(self, tol: float = SMOOTHNESS_TOL) -> bool:
        for rec in self.records[:-1]:
            if rec.smooth_resid < -tol * max(1.0, rec.emp_risk):
                return False
        return True

    def regret_ok(self, tol: float = REGRET_TOL) -> bool:
        return all(c.holds(tol) for c in self.certificates.values())

    def monitor_verdicts(self) -> dict:
        return {
            "smoothness_ok": self.smoothness_ok(),
            "regret_ok": {k: c.holds() for k, c in self.certificates.items()},
            "status": self.status,
        }


def _chunks(n: int, m: int):
    step = max(1, min(n, _CHUNK_BUDGET // max(1, m)))
    for lo in range(0, n, step):
        yield lo, min(n, lo + step)


def empirical_risk(net: Network, X: np.ndarray, y: np.ndarray) -> float:
    """Mean logistic loss of the network over a labeled sample."""
    X, y = _check_sample(X, y, net.d)
    risk, _, _ = _risk_and_grad(net.weights, net.signs, net.scale, X, y, refs=())
    return risk


def gd_step(net: Network, X: np.ndarray, y: np.ndarray, eta: float) -> np.ndarray:
    """One full-batch descent step in place; returns the applied gradient."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    X, y = _check_sample(X, y, net.d)
    _, grad, _ = _risk_and_grad(net.weights, net.signs, net.scale, X, y, refs=())
    net.weights -= eta * grad
    return grad


def frozen_empirical_risk(
    ff: FrozenFeatures, V: np.ndarray, X: np.ndarray, y: np.ndarray
) -> float:
    """Mean logistic loss of the frozen-feature linear predictor at V."""
    margins = frozen_forward_batch(ff, V, X)
    return float(np.mean(logistic_loss(np.asarray(y, dtype=float) * margins)))


def _check_sample(X, y, d):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != d:
        raise ValueError(f"X must have shape (n, {d})")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be one per example")
    if X.shape[0] == 0:
        raise ValueError("sample must be nonempty")
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be +/-1")
    return X, y


def _risk_and_grad(W, signs, scale, X, y, refs):
    """One pass over the sample at weights W.

    Returns (empirical risk, full-batch gradient, frozen risks of each ref
    matrix under W's activation pattern).  Chunked over examples with a
    fixed chunk size and ordered accumulation, so results are deterministic.
    """
    n, m = X.shape[0], W.shape[0]
    loss_sum = 0.0
    grad_acc = np.zeros_like(W)
    ref_sums = [0.0] * len(refs)
    for lo, hi in _chunks(n, m):
        Xc, yc = X[lo:hi], y[lo:hi]
        pre = Xc @ W.T
        act = pre >= 0
        pre *= act
        margins = scale * (pre @ signs) * yc
        loss_sum += float(logistic_loss(margins).sum())
        coeff = logistic_loss_derivative(margins) * yc / n
        grad_acc += (act * coeff[:, None]).T @ Xc
        for r, Z in enumerate(refs):
            proj = Xc @ Z.T
            proj *= act
            ref_margins = scale * (proj @ signs) * yc
            ref_sums[r] += float(logistic_loss(ref_margins).sum())
    grad = scale * signs[:, None] * grad_acc
    return loss_sum / n, grad, [s / n for s in ref_sums]


def _frozen_risk_at(W_source, V, signs, scale, X, y):
    """hat-R of the linear predictor in W_source's features evaluated at V."""
    n, m = X.shape[0], W_source.shape[0]
    loss_sum = 0.0
    for lo, hi in _chunks(n, m):
        Xc, yc = X[lo:hi], y[lo:hi]
        act = Xc @ W_source.T >= 0
        proj = Xc @ V.T
        proj *= act
        margins = scale * (proj @ signs) * yc
        loss_sum += float(logistic_loss(margins).sum())
    return loss_sum / n


def train(
    net: Network,
    X: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig,
    monitors: bool = True,
    regret_refs: dict[str, np.ndarray] | None = None,
    iterate_observer=None,
) -> Trajectory:
    """Run ``cfg.t_max`` descent steps, recording every iterate.

    The network is mutated in place and finishes at iterate t_max; the
    selected iterate's weights are retained in the trajectory.  When
    ``monitors`` is set, eta <= 4/rho^2 is required and the smoothness
    residual is recorded at every step.  ``regret_refs`` maps names to
    reference matrices; a regret certificate is accumulated for each.
    ``iterate_observer(i, net)`` is invoked at every recorded iterate.
    """
    X, y = _check_sample(X, y, net.d)
    if monitors and cfg.eta > 4.0 / net.rho**2 * (1 + 1e-12):
        raise ValueError(
            f"monitors require eta <= 4/rho^2 = {4.0 / net.rho ** 2}, got {cfg.eta}"
        )
    refs = dict(regret_refs or {})
    for name, Z in refs.items():
        Z = np.asarray(Z, dtype=float)
        if Z.shape != net.weights.shape:
            raise ValueError(f"regret reference {name!r} has shape {Z.shape}")
        refs[name] = Z

    traj = Trajectory(
        config=cfg, rho=net.rho, n_examples=X.shape[0], monitors_enabled=monitors
    )
    ref_names = list(refs)
    ref_mats = [refs[k] for k in ref_names]
    frozen_next: list[float] = []
    frozen_ref: list[list[float]] = [[] for _ in ref_names]
    dist_sq_ref: list[list[float]] = [[] for _ in ref_names]

    best = None  # (risk, index, weights copy)

    def record(i, risk, grad_norm, smooth_resid):
        nonlocal best
        dist = net.dist_from_init()
        traj.records.append(
            IterateRecord(
                index=i,
                emp_risk=risk,
                dist_init=dist,
                grad_norm=grad_norm,
                smooth_resid=smooth_resid,
            )
        )
        for r, Z in enumerate(ref_mats):
            dist_sq_ref[r].append(float(np.sum((net.weights - Z) ** 2)))
        if dist <= cfg.r_gd and math.isfinite(risk):
            if best is None or risk < best[0]:
                best = (risk, i, net.weights.copy())
        if iterate_observer is not None:
            iterate_observer(i, net)

    diverged = False
    for i in range(cfg.t_max):
        risk, grad, ref_risks = _risk_and_grad(
            net.weights, net.signs, net.scale, X, y, ref_mats
        )
        if not math.isfinite(risk) or risk > DIVERGENCE_THRESHOLD:
            record(i, risk, float("nan"), float("nan"))
            diverged = True
            break
        grad_norm = float(np.linalg.norm(grad))
        W_next = net.weights - cfg.eta * grad
        if monitors or ref_mats:
            frozen_at_next = _frozen_risk_at(
                net.weights, W_next, net.signs, net.scale, X, y
            )
        else:
            frozen_at_next = float("nan")
        resid = (
            (risk - frozen_at_next) - 0.5 * cfg.eta * grad_norm**2
            if monitors
            else float("nan")
        )
        frozen_next.append(frozen_at_next)
        for r in range(len(ref_mats)):
            frozen_ref[r].append(ref_risks[r])
        record(i, risk, grad_norm, resid)
        net.weights[...] = W_next

    if not diverged:
        risk, grad, _ = _risk_and_grad(net.weights, net.signs, net.scale, X, y, ())
        if not math.isfinite(risk) or risk > DIVERGENCE_THRESHOLD:
            record(cfg.t_max, risk, float("nan"), float("nan"))
            diverged = True
        else:
            record(cfg.t_max, risk, float(np.linalg.norm(grad)), float("nan"))

    for r, name in enumerate(ref_names):
        traj.certificates[name] = RegretCertificate(
            name=name,
            eta=cfg.eta,
            frozen_next=np.array(frozen_next),
            frozen_ref=np.array(frozen_ref[r]),
            dist_sq=np.array(dist_sq_ref[r]),
        )

    if diverged:
        traj.status = "diverged"
    if best is not None:
        traj.selected_index = best[1]
        traj.selected_weights = best[2]
        traj.records[best[1]].selected = True
    elif not diverged:
        traj.status = "no-selection"
    return traj


def monitor_smoothness(traj: Trajectory) -> np.ndarray:
    """Per-step smoothness residuals recorded along the run."""
    return np.array([rec.smooth_resid for rec in traj.records[:-1]])


def regret_certificate(
    net: Network, X: np.ndarray, y: np.ndarray, cfg: TrainConfig, Z: np.ndarray
) -> RegretCertificate:
    """Certificate against a reference chosen after the fact.

    Frozen risks are never stored as matrices, so the run is replayed
    deterministically from the network's initialization with the reference
    attached; the network passed in is left untouched.
    """
    from .network import clone_initial

    replay = clone_initial(net)
    traj = train(replay, X, y, cfg, monitors=False, regret_refs={"Z": Z})
    return traj.certificates["Z"]


def write_trajectory(traj: Trajectory, csv_path, json_path=None) -> None:
    """CSV of per-iterate scalars plus an optional JSON metadata sidecar."""
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["iter", "emp_risk", "dist_init", "grad_norm", "smooth_resid", "selected"]
        )
        for rec in traj.records:
            writer.writerow(
                [
                    rec.index,
                    f"{rec.emp_risk:.17g}",
                    f"{rec.dist_init:.17g}",
                    f"{rec.grad_norm:.17g}",
                    f"{rec.smooth_resid:.17g}",
                    int(rec.selected),
                ]
            )
    if json_path is not None:
        meta = {
            "eta": traj.config.eta,
            "t_max": traj.config.t_max,
            "eps_gd": traj.config.eps_gd,
            "r_gd": "inf" if math.isinf(traj.config.r_gd) else traj.config.r_gd,
            "seed": traj.config.seed,
            "rho": traj.rho,
            "n_examples": traj.n_examples,
            "status": traj.status,
            "selected_index": traj.selected_index,
            "monitors": traj.monitor_verdicts(),
        }
        with open(json_path, "w") as fh:
            json.dump(meta, fh, indent=2)
