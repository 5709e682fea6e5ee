"""Experiment presets, schedule arithmetic, and the bound calculator.

Three preset regimes couple the temperature, width, and early stopping
radius to a target excess risk eps (with eps_gd = eps, t = 1/(8 eps_gd),
and n >= 1/eps^2 shared by all of them):

* easy        - rho = 1, m >= R^8, no early stopping radius;
* clairvoyant - rho = m^(-1/8), m = eps^(-8), radius R/rho;
* worstcase   - rho = m^(-1/8), m = eps^(-40/3), radius infinite.

The consistency schedule drives everything from the sample size n and an
early stopping exponent xi in (0, 1):

    m = n^((40/3)(1-xi)),  rho = m^(-1/8),  eta = 4/rho^2,
    eps_gd = n^(xi-1),     t = n^(1-xi)/8,  radius infinite.

Every generated configuration satisfies eta * rho^2 = 4 exactly.  Widths
and sample sizes are capped at desk scale (2^16) with an explicit flag
rather than silently truncated.  Fractional widths and horizons round up:
more width or optimization never weakens the guarantees being monitored.

The bound calculator evaluates the decomposition

    kbin + (e^(tau_1 + tau_0) - 1) * ref_risk
         + e^(tau_1) * R^2 * eps_gd
         + e^(tau_1) * (rho * B + R) * tau_n

with the printed rates tau_n, tau_1, tau_0 and effective radius B; at desk
scale the total is expected to exceed ln 2 and is flagged vacuous, so
acceptance rests on deterministic inequalities and scaling behavior rather
than on these constants.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import (
    bayes_risk,
    bayes_zero_one_risk,
    evaluator,
    make_distribution,
    sample as draw_sample,
)
from .metrics import LOG2, logistic_loss
from .network import Network, augment_batch, forward_batch, freeze_features, init_network
from .reference import (
    InfiniteWidthModel,
    infinite_forward_batch,
    model_from_config,
    sample_reference,
)
from .trainer import TrainConfig, Trajectory, frozen_empirical_risk, train

__all__ = [
    "BoundTerms",
    "DESK_CAP",
    "ExperimentReport",
    "RegimeConfig",
    "compute_bound_terms",
    "default_reference_for",
    "derive_consistency",
    "derive_regime",
    "derived_seed",
    "json_safe",
    "run_experiment",
    "sweep",
]

DESK_CAP = 1 << 16

REGIMES = ("easy", "clairvoyant", "worstcase", "consistency")


def derived_seed(root: int, *path: int) -> int:
    """Documented seed-splitting rule: SeedSequence((root, *path))."""
    return int(np.random.SeedSequence((root,) + path).generate_state(1)[0])


def _snap_ceil(value: float, minimum: int = 1) -> int:
    """Ceiling with a relative snap to the nearest integer, so closed-form
    powers that land on integers are not bumped up by float noise."""
    nearest = round(value)
    if abs(value - nearest) <= 1e-9 * max(1.0, abs(value)):
        value = nearest
    return max(minimum, int(math.ceil(value)))


@dataclass
class RegimeConfig:
    regime: str
    rho: float
    m: int
    n: int
    eta: float
    t: int
    eps_gd: float
    r_gd: float
    seed: int = 0
    eps: float | None = None
    xi: float | None = None
    radius_scale: float = 4.0
    dist_name: str = "logistic-1d"
    dist_params: dict = field(default_factory=dict)
    ref_config: dict | None = None
    augment_bias: bool = False
    capped: bool = False

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if abs(self.eta * self.rho**2 - 4.0) > 1e-9:
            raise ValueError("configs must satisfy eta * rho^2 = 4")

    @property
    def input_dim(self) -> int:
        base = make_distribution(self.dist_name, **self.dist_params).dim
        return base + 1 if self.augment_bias else base

    def to_flat_dict(self) -> dict:
        out = asdict(self)
        out["r_gd"] = "inf" if math.isinf(self.r_gd) else self.r_gd
        return out

    @classmethod
    def from_flat_dict(cls, data: dict) -> "RegimeConfig":
        data = dict(data)
        if data.get("r_gd") == "inf":
            data["r_gd"] = math.inf
        return cls(**data)


def default_reference_for(
    dist_name: str, dist_params: dict, augment_bias: bool
) -> dict | None:
    """Reference model paired with each built-in task.

    The smooth logistic task gets the exactly matching linear teacher (so
    its reference conditional model has zero binary KL to the truth); the
    noisy tasks get bounded affine surrogates on augmented inputs.
    """
    if dist_name == "logistic-1d":
        c = float(dist_params.get("c", 2.0))
        if augment_bias:
            return {"kind": "affine-teacher", "theta": [c], "bias": 0.0}
        return {"kind": "linear-teacher", "theta": [c]}
    if dist_name == "constant-1d":
        p = float(dist_params.get("p", 0.75))
        p = min(max(p, 1e-6), 1 - 1e-6)
        logit = math.log(p / (1 - p))
        if augment_bias:
            return {"kind": "affine-teacher", "theta": [0.0], "bias": logit}
        return {"kind": "linear-teacher", "theta": [0.0]}
    if dist_name == "step-smooth-1d":
        width = float(dist_params.get("width", 0.1))
        slope = 0.4 / width  # logit slope of p at the transition center
        if augment_bias:
            return {"kind": "affine-teacher", "theta": [slope], "bias": 0.0}
        return {"kind": "linear-teacher", "theta": [slope]}
    if dist_name == "step-1d":
        if augment_bias:
            return {"kind": "affine-teacher", "theta": [4.0], "bias": 0.0}
        return {"kind": "linear-teacher", "theta": [4.0]}
    return None


def derive_regime(
    regime: str,
    eps: float,
    radius_scale: float = 4.0,
    dist_name: str = "logistic-1d",
    dist_params: dict | None = None,
    augment_bias: bool = False,
    seed: int = 0,
    cap: int = DESK_CAP,
    overrides: dict | None = None,
) -> RegimeConfig:
    """Populate a full configuration from a target accuracy eps.

    ``radius_scale`` is the norm bound R of the intended reference model
    (floored at 4 when the bound calculator runs).  ``overrides`` may pin
    individual derived fields (e.g. a smaller m for a quick run); rho and
    eta are re-derived from an overridden m to keep the couplings intact.
    """
    if regime == "consistency":
        raise ValueError("use derive_consistency for the consistency schedule")
    if regime not in REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if not 0 < eps <= 0.5:
        raise ValueError("eps must lie in (0, 1/2]")
    dist_params = dict(dist_params or {})
    overrides = dict(overrides or {})

    eps_gd = float(overrides.get("eps_gd", eps))
    t = _snap_ceil(1.0 / (8.0 * eps_gd))
    capped = False

    n_raw = overrides.get("n", 1.0 / eps**2)
    n = _snap_ceil(float(n_raw))
    if n > cap:
        n, capped = cap, True

    if regime == "easy":
        m_raw = overrides.get("m", radius_scale**8)
    elif regime == "clairvoyant":
        m_raw = overrides.get("m", eps**-8.0)
    else:  # worstcase
        m_raw = overrides.get("m", eps ** (-40.0 / 3.0))
    m = _snap_ceil(float(m_raw))
    if m > cap:
        m, capped = cap, True

    rho = 1.0 if regime == "easy" else float(m) ** -0.125
    if "rho" in overrides:
        rho = float(overrides["rho"])
    eta = 4.0 / rho**2
    r_gd = radius_scale / rho if regime == "clairvoyant" else math.inf
    if "r_gd" in overrides:
        r_gd = float(overrides["r_gd"])

    ref = overrides.get(
        "ref_config", default_reference_for(dist_name, dist_params, augment_bias)
    )
    return RegimeConfig(
        regime=regime,
        eps=eps,
        rho=rho,
        m=m,
        n=n,
        eta=eta,
        t=t,
        eps_gd=eps_gd,
        r_gd=r_gd,
        seed=seed,
        radius_scale=radius_scale,
        dist_name=dist_name,
        dist_params=dist_params,
        ref_config=ref,
        augment_bias=augment_bias,
        capped=capped,
    )


def derive_consistency(
    n: int,
    xi: float,
    radius_scale: float = 4.0,
    dist_name: str = "step-smooth-1d",
    dist_params: dict | None = None,
    augment_bias: bool = True,
    seed: int = 0,
    cap: int = DESK_CAP,
) -> RegimeConfig:
    """Schedule all parameters from the sample size under exponent xi."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 0 < xi < 1:
        raise ValueError("xi must lie strictly inside (0, 1)")
    dist_params = dict(dist_params or {})
    capped = False
    m_raw = float(n) ** ((40.0 / 3.0) * (1.0 - xi))
    m = _snap_ceil(m_raw)
    if m > cap:
        m, capped = cap, True
    rho = float(m) ** -0.125
    eta = 4.0 / rho**2
    eps_gd = float(n) ** (xi - 1.0)
    t = _snap_ceil(float(n) ** (1.0 - xi) / 8.0)
    ref = default_reference_for(dist_name, dist_params, augment_bias)
    return RegimeConfig(
        regime="consistency",
        xi=xi,
        rho=rho,
        m=m,
        n=int(n),
        eta=eta,
        t=t,
        eps_gd=eps_gd,
        r_gd=math.inf,
        seed=seed,
        radius_scale=radius_scale,
        dist_name=dist_name,
        dist_params=dist_params,
        ref_config=ref,
        augment_bias=augment_bias,
        capped=capped,
    )


@dataclass
class BoundTerms:
    tau_n: float
    tau_1: float
    tau_0: float
    b_eff: float
    radius_scale: float
    delta: float
    ref_risk: float
    kbin: float
    reference_error: float
    optimization_error: float
    generalization_error: float
    total: float
    vacuous: bool
    tau1_exceeds_assumption: bool
    b_eff_empirical: float | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def compute_bound_terms(
    cfg: RegimeConfig,
    radius_scale: float,
    ref_risk: float,
    emp_ref_risk: float | None = None,
    kbin: float = 0.0,
    delta: float = 0.05,
) -> BoundTerms:
    """Evaluate the error decomposition exactly as stated.

    ``radius_scale`` is R = max(4, rho, sup-norm of the reference weight
    map); ``ref_risk`` the population risk of the infinite-width reference;
    ``kbin`` its binary KL to the true conditional model.  When
    ``emp_ref_risk`` (the empirical frozen risk of the sampled reference)
    is supplied, the alternative empirical form of the effective radius is
    reported too.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if ref_risk < 0 or radius_scale <= 0:
        raise ValueError("radius scale must be positive and ref risk nonnegative")
    d = cfg.input_dim
    m, n, rho, t = cfg.m, cfg.n, cfg.rho, cfg.t

    log_mn = d * math.log(math.e * m**2 * d**3 / delta)
    tau_n = 80.0 * log_mn**1.5 / math.sqrt(n)
    tau_0 = (
        6.0 * rho * d * math.log(math.e * m * d**2 / delta)
        + 20.0 * radius_scale * math.sqrt(log_mn) / m**0.25
    )
    with np.errstate(over="ignore"):
        b_candidate = (3.0 * radius_scale / rho) + (4.0 * math.e / rho) * math.sqrt(
            t
        ) * math.sqrt(float(np.exp(tau_0)) * ref_risk + radius_scale * tau_n)
        b_eff = min(cfg.r_gd, b_candidate)
        tau_1 = (
            100.0
            * rho
            * b_eff ** (4.0 / 3.0)
            * math.sqrt(d * math.log(math.e * n * m**2 * d**3 / delta))
            / m ** (1.0 / 6.0)
        )
        reference_error = kbin + float(np.expm1(tau_1 + tau_0)) * ref_risk
        optimization_error = float(np.exp(tau_1)) * radius_scale**2 * cfg.eps_gd
        generalization_error = float(np.exp(tau_1)) * (rho * b_eff + radius_scale) * tau_n
        total = reference_error + optimization_error + generalization_error
        b_emp = None
        if emp_ref_risk is not None:
            b_emp = min(
                cfg.r_gd,
                3.0 * radius_scale / rho
                + 2.0 * math.e * math.sqrt(cfg.eta * t * max(emp_ref_risk, 0.0)),
            )
    return BoundTerms(
        tau_n=tau_n,
        tau_1=tau_1,
        tau_0=tau_0,
        b_eff=b_eff,
        radius_scale=radius_scale,
        delta=delta,
        ref_risk=ref_risk,
        kbin=kbin,
        reference_error=reference_error,
        optimization_error=optimization_error,
        generalization_error=generalization_error,
        total=total,
        vacuous=not (total <= LOG2),
        tau1_exceeds_assumption=tau_1 > 2.0,
        b_eff_empirical=b_emp,
    )


@dataclass
class ExperimentReport:
    config: RegimeConfig
    root_seed: int
    status: str
    risk: dict
    bayes: dict
    monitors: dict
    bound_terms: dict | None
    reference: dict | None
    trajectory_summary: dict
    provenance: dict
    trajectory: Trajectory | None = None  # full record; not serialized

    def to_dict(self) -> dict:
        out = {
            "config": self.config.to_flat_dict(),
            "root_seed": self.root_seed,
            "status": self.status,
            "risk": self.risk,
            "bayes": self.bayes,
            "monitors": self.monitors,
            "bound_terms": self.bound_terms,
            "reference": self.reference,
            "trajectory_summary": self.trajectory_summary,
            "provenance": self.provenance,
        }
        return json_safe(out)


def json_safe(obj):
    """Recursively replace non-finite floats with distinguished strings so
    reports stay valid JSON."""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return json_safe(obj.tolist())
    return obj


def _selected_predictor(net: Network, traj: Trajectory, augment_bias: bool):
    eval_net = Network(
        m=net.m,
        d=net.d,
        rho=net.rho,
        signs=net.signs.copy(),
        weights=traj.selected_weights.copy(),
        init_weights=net.init_weights.copy(),
        seed=net.seed,
    )

    def predictor(P):
        P = augment_batch(P) if augment_bias else np.asarray(P, dtype=float)
        return forward_batch(eval_net, P)

    return predictor


def run_experiment(
    cfg: RegimeConfig, delta: float = 0.05, with_reference: bool = True
) -> ExperimentReport:
    """Full pipeline: sample, initialize, train with monitors, select the
    early-stopped iterate, and measure its population risk decomposition
    against the true conditional model.

    ``with_reference=False`` skips the reference-model machinery (sampled
    regret reference, Monte Carlo reference risk, bound terms); the
    smoothness monitor and the initialization regret certificate still run.
    Sweeps use this mode since their cells only consume risk metrics.
    """
    dist = make_distribution(cfg.dist_name, **cfg.dist_params)
    data_seed = derived_seed(cfg.seed, 1)
    net_seed = derived_seed(cfg.seed, 2)

    samp = draw_sample(dist, cfg.n, data_seed)
    X = augment_batch(samp.points) if cfg.augment_bias else samp.points
    y = samp.labels

    net = init_network(cfg.m, cfg.input_dim, cfg.rho, net_seed)
    model: InfiniteWidthModel | None = None
    refs = {"W0": net.init_weights.copy()}
    sampled_ref = None
    if cfg.ref_config is not None and with_reference:
        model = model_from_config(cfg.ref_config)
        sampled_ref = sample_reference(model, net)
        refs["Ubar"] = sampled_ref.ubar

    tcfg = TrainConfig(
        eta=cfg.eta, t_max=cfg.t, eps_gd=cfg.eps_gd, r_gd=cfg.r_gd, seed=cfg.seed
    )
    traj = train(net, X, y, tcfg, monitors=True, regret_refs=refs)

    ev = evaluator(dist)
    bayes = {
        "logistic": bayes_risk(dist, ev),
        "zero_one": bayes_zero_one_risk(dist, ev),
    }

    status = traj.status
    risk = {}
    bound_terms = None
    reference_block = None
    if traj.selected_weights is not None:
        predictor = _selected_predictor(net, traj, cfg.augment_bias)
        from .distributions import population_risk as pop_risk

        pop = pop_risk(dist, predictor, ev)
        risk = pop.breakdown.to_dict()
        risk["logistic_se"] = pop.logistic_se

        if model is not None:
            points = augment_batch(ev.points) if cfg.augment_bias else ev.points
            inf_margins, _ = infinite_forward_batch(model, points)
            p = dist.cond_prob(ev.points)
            ref_risk = float(
                ev.weights
                @ (p * logistic_loss(inf_margins) + (1 - p) * logistic_loss(-inf_margins))
            )
            kbin = ref_risk - bayes["logistic"]
            ff0 = freeze_features(net, at_init=True)
            emp_ref_risk = frozen_empirical_risk(ff0, sampled_ref.ubar, X, y)
            radius_scale = max(4.0, cfg.rho, model.norm_bound)
            bound_terms = compute_bound_terms(
                cfg,
                radius_scale,
                ref_risk,
                emp_ref_risk=emp_ref_risk,
                kbin=max(kbin, 0.0),
                delta=delta,
            ).to_dict()
            reference_block = {
                "model": cfg.ref_config,
                "norm_bound": model.norm_bound,
                "population_risk": ref_risk,
                "kbin": kbin,
                "empirical_frozen_risk": emp_ref_risk,
                "ref_dist_from_init": sampled_ref.dist_from_init,
            }
    elif status == "ok":
        status = "no-selection"

    monitors = traj.monitor_verdicts()
    trajectory_summary = {
        "iterates": len(traj.records),
        "selected_index": traj.selected_index,
        "selected_emp_risk": traj.selected_risk,
        "final_dist_init": traj.records[-1].dist_init if traj.records else None,
        "min_smooth_resid": (
            float(np.nanmin([r.smooth_resid for r in traj.records[:-1]]))
            if len(traj.records) > 1
            else None
        ),
    }
    return ExperimentReport(
        config=cfg,
        root_seed=cfg.seed,
        status=status,
        risk=risk,
        bayes=bayes,
        monitors=monitors,
        bound_terms=bound_terms,
        reference=reference_block,
        trajectory_summary=trajectory_summary,
        provenance={
            "data_seed": data_seed,
            "net_seed": net_seed,
            "evaluator": ev.provenance,
            "seed_rule": "SeedSequence((root, k)): k=1 data, k=2 network",
        },
        trajectory=traj,
    )


def _cell_config(base: RegimeConfig, axis: str, value) -> RegimeConfig:
    if axis == "eps":
        if base.regime == "consistency":
            raise ValueError("eps axis is not defined for the consistency schedule")
        return derive_regime(
            base.regime,
            float(value),
            radius_scale=base.radius_scale,
            dist_name=base.dist_name,
            dist_params=base.dist_params,
            augment_bias=base.augment_bias,
            seed=base.seed,
        )
    if axis == "n":
        if base.regime == "consistency":
            return derive_consistency(
                int(value),
                base.xi,
                radius_scale=base.radius_scale,
                dist_name=base.dist_name,
                dist_params=base.dist_params,
                augment_bias=base.augment_bias,
                seed=base.seed,
            )
        cfg = RegimeConfig.from_flat_dict(base.to_flat_dict())
        cfg.n = int(value)
        return cfg
    if axis == "m":
        cfg_dict = base.to_flat_dict()
        m = int(value)
        rho = 1.0 if base.regime == "easy" else float(m) ** -0.125
        cfg_dict.update(m=m, rho=rho, eta=4.0 / rho**2)
        if base.regime == "clairvoyant":
            cfg_dict["r_gd"] = base.radius_scale / rho
        return RegimeConfig.from_flat_dict(cfg_dict)
    raise ValueError(f"unknown sweep axis {axis!r}; use one of n, m, eps")


def sweep(base: RegimeConfig, axis: str, values, seeds: int, root_seed: int = 0) -> dict:
    """Run a grid of experiments and aggregate per-cell medians/quartiles.

    Cells get disjoint seeds through SeedSequence((root, cell, trial)).
    """
    values = list(values)
    if len(values) < 2:
        raise ValueError("sweep needs at least 2 axis values")
    if seeds < 5:
        raise ValueError("sweep needs at least 5 seeds per cell")
    cells = []
    rows = []
    for ci, value in enumerate(values):
        cfg = _cell_config(base, axis, value)
        metrics = {"excess_logistic": [], "l2_calibration_sq": [], "excess_zero_one": []}
        for trial in range(seeds):
            run_cfg = RegimeConfig.from_flat_dict(cfg.to_flat_dict())
            run_cfg.seed = derived_seed(root_seed, ci, trial)
            report = run_experiment(run_cfg, with_reference=False)
            if report.status != "ok":
                raise RuntimeError(
                    f"sweep cell {axis}={value} trial {trial}: status {report.status}"
                )
            for key in metrics:
                metrics[key].append(report.risk[key])
            rows.append(
                {
                    "axis": axis,
                    "value": value,
                    "trial": trial,
                    "seed": run_cfg.seed,
                    **{k: report.risk[k] for k in metrics},
                }
            )
        cell = {"value": value, "n": cfg.n, "m": cfg.m, "t": cfg.t, "rho": cfg.rho}
        for key, vals in metrics.items():
            arr = np.array(vals)
            cell[key] = {
                "median": float(np.median(arr)),
                "q25": float(np.percentile(arr, 25)),
                "q75": float(np.percentile(arr, 75)),
            }
        cells.append(cell)

    medians = [c["excess_logistic"]["median"] for c in cells]
    steps = np.diff(medians)
    trend = {
        "medians": medians,
        "non_increasing": bool(np.all(steps <= 0)),
        "fraction_non_increasing": float(np.mean(steps <= 0)) if len(steps) else 1.0,
        "final_over_first": float(medians[-1] / medians[0]) if medians[0] else None,
    }
    return json_safe(
        {
            "axis": axis,
            "values": values,
            "seeds": seeds,
            "root_seed": root_seed,
            "cells": cells,
            "trend": trend,
            "rows": rows,
        }
    )
