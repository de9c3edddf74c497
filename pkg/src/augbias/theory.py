"""Empirical constant estimation and evaluation of the convergence bounds.

Every quantity here is an empirical surrogate. The curvature and gradient
constants are defined in the analysis as suprema/infima over all of
parameter space, which is unverifiable; we estimate them over clouds of
visited iterates plus random perturbations around them, and the reports
label them as such. The restricted curvature constant realizes only the
inequality direction (restricting the point set can never lower the min),
not the defining max.

Floors (the objective values at the unconstrained optima) are best-found
values from multi-start quasi-Newton polishing, optionally seeded with a
planted optimum when the task is synthetic.

Log arguments inside bound formulas are clamped at e, keeping every bound
positive and finite even for degenerate constant estimates; schedule
formulas share the clamp and flag it in the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .core import DegenerateEstimateError, LabeledSet
from .models import Arch, Predictor, batch_scores, label_grad, p_rows

_E = math.e


# ---------------------------------------------------------------------------
# objectives as picklable closures


@dataclass(frozen=True)
class CeObjective:
    """Full-batch cross entropy over a fixed dataset, with exact gradient."""

    arch: Arch
    inputs: np.ndarray
    labels: np.ndarray

    @staticmethod
    def over(arch: Arch, dataset: LabeledSet) -> "CeObjective":
        return CeObjective(arch, dataset.inputs, dataset.labels)

    def loss(self, w: np.ndarray) -> float:
        p = p_rows(batch_scores(Predictor(self.arch, w), self.inputs))
        return float(np.mean(np.sum(self.labels * p, axis=1)))

    def grad(self, w: np.ndarray) -> np.ndarray:
        return label_grad(Predictor(self.arch, w), self.inputs, self.labels)


# ---------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class ConstantEstimates:
    g_bound: float
    l_smooth: float
    mu: float
    mu_restricted: float
    delta_y: float
    l_floor: float
    ltilde_floor: float
    initial_gap: float
    initial_gap_tilde: float
    delta_p: float | None = None

    def __post_init__(self):
        vals = {
            "g_bound": self.g_bound,
            "l_smooth": self.l_smooth,
            "mu": self.mu,
            "mu_restricted": self.mu_restricted,
            "delta_y": self.delta_y,
            "initial_gap": self.initial_gap,
            "initial_gap_tilde": self.initial_gap_tilde,
        }
        for name, v in vals.items():
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and nonnegative, got {v}")
        if self.delta_p is not None and (not np.isfinite(self.delta_p) or self.delta_p < 0):
            raise ValueError("delta_p must be finite and nonnegative")
        if not (np.isfinite(self.l_floor) and np.isfinite(self.ltilde_floor)):
            raise ValueError("floors must be finite")
        if self.mu > self.l_smooth:
            raise ValueError("curvature estimates violate mu <= l_smooth")

    @property
    def condition_number(self) -> float:
        return self.l_smooth / self.mu


def estimate_mu(obj, points, l_floor: float) -> float:
    """Smallest squared-gradient-to-gap ratio over the cloud.

    Points within 1e-10 of the floor carry no curvature information and are
    skipped. Shrinking the point set can only raise the estimate, which is
    the operational form of restricted-curvature monotonicity.
    """
    best = math.inf
    used = 0
    for w in points:
        gap = obj.loss(w) - l_floor
        if gap < 1e-10:
            continue
        g = obj.grad(w)
        best = min(best, float(g @ g) / (2.0 * gap))
        used += 1
    if used == 0:
        raise DegenerateEstimateError("every point sits at the floor; curvature undefined")
    return best


def estimate_L_smooth(obj, pairs) -> float:
    """Largest gradient-difference-to-distance ratio over sampled pairs."""
    best = 0.0
    used = 0
    for w, u in pairs:
        w = np.asarray(w, dtype=np.float64)
        u = np.asarray(u, dtype=np.float64)
        dist = float(np.linalg.norm(w - u))
        if dist < 1e-8:
            continue
        best = max(best, float(np.linalg.norm(obj.grad(w) - obj.grad(u))) / dist)
        used += 1
    if used == 0:
        raise DegenerateEstimateError("no pair is separated enough to probe smoothness")
    return best


def bias_radius(delta_y: float, g_bound: float, mu: float) -> float:
    """Constraint radius induced by a label-space bias of delta_y."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return delta_y**2 * g_bound**2 / (2.0 * mu)


def shift_radius(delta_p: float, g_bound: float, mu: float) -> float:
    """Constraint radius induced by an input-distribution shift of delta_p."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return delta_p * g_bound**2 / mu


@dataclass(frozen=True)
class ConstraintCheck:
    member: bool
    margin: float


def in_constraint_set(w, gamma: float, ltilde_floor: float, aug_obj: CeObjective) -> ConstraintCheck:
    """Whether the augmented-objective gap at w stays within gamma."""
    value = aug_obj.loss(np.asarray(w, dtype=np.float64)) - ltilde_floor
    margin = gamma - value
    return ConstraintCheck(member=bool(value <= gamma), margin=float(margin))


def best_found_floor(obj, dim: int, rng, extra_starts=(), n_random: int = 3, scale: float = 0.5):
    """Multi-start quasi-Newton floor for a full-batch objective.

    Returns (value, argmin). Best-found, not certified: the reported floor is
    an upper bound on the true one, which is the conservative direction for
    every gap it feeds.
    """
    starts = [np.zeros(dim)]
    starts += [np.asarray(s, dtype=np.float64) for s in extra_starts]
    starts += [scale * rng.standard_normal(dim) for _ in range(n_random)]
    best_val, best_w = math.inf, None
    for s in starts:
        res = optimize.minimize(
            lambda w: (obj.loss(w), obj.grad(w)),
            s,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-10},
        )
        if res.fun < best_val:
            best_val, best_w = float(res.fun), res.x.copy()
    return best_val, best_w


def perturbed_cloud(points, rng, per_point: int = 2, scale: float = 0.1) -> list[np.ndarray]:
    """The points plus Gaussian jitter around each, for curvature probing."""
    out = [np.asarray(p, dtype=np.float64) for p in points]
    for p in list(out):
        for _ in range(per_point):
            out.append(p + scale * rng.standard_normal(p.shape))
    return out


def estimate_constants(
    arch: Arch,
    orig: LabeledSet,
    aug: LabeledSet,
    w1: np.ndarray,
    cloud,
    delta_y: float,
    rng,
    delta_p: float | None = None,
    restricted_cloud=None,
    floor_hints=(),
    g_inputs: int = 128,
) -> ConstantEstimates:
    """One-stop estimation pipeline over a cloud of visited iterates."""
    from .models import estimate_G

    obj = CeObjective.over(arch, orig)
    obj_t = CeObjective.over(arch, aug)
    pts = perturbed_cloud(cloud, rng)
    l_floor, w_star = best_found_floor(obj, arch.param_count, rng, extra_starts=floor_hints)
    lt_floor, _ = best_found_floor(obj_t, arch.param_count, rng, extra_starts=floor_hints)
    mu = estimate_mu(obj, pts, l_floor)
    pairs = [(pts[i], pts[(i + 1) % len(pts)]) for i in range(len(pts))]
    pairs += [(p, w_star) for p in pts[: len(pts) // 2]]
    l_smooth = estimate_L_smooth(obj, pairs)
    # The Jacobian scan is quadratic in (inputs x cloud); a subsample of the
    # inputs loses little because the max is over smooth per-example maps.
    if orig.n > g_inputs:
        pick = rng.choice(orig.n, size=g_inputs, replace=False)
        g_set = LabeledSet(orig.inputs[pick], orig.labels[pick], orig.provenance)
    else:
        g_set = orig
    g = estimate_G(Predictor(arch, w1), g_set, pts)
    if restricted_cloud is not None and len(restricted_cloud) > 0:
        mu_r = estimate_mu(obj, restricted_cloud, l_floor)
    else:
        mu_r = mu
    return ConstantEstimates(
        g_bound=g,
        l_smooth=l_smooth,
        mu=mu,
        mu_restricted=max(mu_r, mu),
        delta_y=delta_y,
        delta_p=delta_p,
        l_floor=l_floor,
        ltilde_floor=lt_floor,
        initial_gap=max(obj.loss(w1) - l_floor, 0.0),
        initial_gap_tilde=max(obj_t.loss(w1) - lt_floor, 0.0),
    )


# ---------------------------------------------------------------------------
# bounds


def _clog(x: float) -> float:
    """log with the argument clamped at e, so the result is at least 1."""
    return math.log(max(x, _E))


def plateau_label_bound(delta_y: float, g: float, mu: float) -> float:
    return delta_y**2 * g**2 / mu


def original_sgd_bound(g: float, l: float, mu: float, n: int, initial_gap: float) -> float:
    lead = g**2 * l / (8.0 * n * mu**2)
    return lead * (1.0 + _clog(8.0 * n * mu**2 * initial_gap / (g**2 * l)))


def augdrop_label_bound(g: float, l: float, mu_restricted: float, n: int, initial_gap: float) -> float:
    lead = g**2 * l / (4.0 * n * mu_restricted**2)
    return lead * (1.0 + _clog(4.0 * n * mu_restricted**2 * initial_gap / (g**2 * l)))


def mixloss_bound(g: float, l: float, mu: float, n: int, lam: float, initial_gap: float) -> float:
    if not (0.0 < lam <= 1.0):
        raise ValueError("lambda out of (0,1]")
    lead = lam * l * g**2 / (n * mu**2)
    return lead * (1.0 + 5.0 * _clog(n * mu**2 * initial_gap / (lam**2 * l * g**2)))


def plateau_shift_bound(delta_p: float, g: float, mu: float) -> float:
    return 4.0 * delta_p * g**2 / mu


def augdrop_shift_bound(g: float, l: float, mu_restricted: float, n: int, initial_gap: float) -> float:
    lead = g**2 * l / (8.0 * n * mu_restricted**2)
    return lead * (1.0 + _clog(8.0 * n * mu_restricted**2 * initial_gap / (g**2 * l)))


@dataclass(frozen=True)
class BoundReport:
    values: dict
    measured_gap: float
    satisfied: dict
    notes: tuple


_SCHEME_BOUNDS = {
    "original": ("original_sgd",),
    "augmented": ("plateau_label",),
    "augdrop": ("augdrop_label",),
    "mixloss": ("mixloss",),
    "augmented_shift": ("plateau_shift",),
    "augdrop_shift": ("augdrop_shift",),
    "wemix": ("augdrop_label", "mixloss"),
}


def bound_report(
    constants: ConstantEstimates,
    run,
    scheme: str,
    n: int,
    lam: float | None = None,
) -> BoundReport:
    """Evaluate the scheme's bound(s) against a measured final gap.

    run is either a finished TrainTrace (the gap is its last recorded L minus
    the estimated floor) or the gap itself. Bounds whose constants are
    unavailable are listed in notes instead of being guessed.
    """
    if scheme not in _SCHEME_BOUNDS:
        raise ValueError(f"unknown scheme {scheme!r}")
    if hasattr(run, "rows"):
        measured_gap = run.rows[-1].L - constants.l_floor
    else:
        measured_gap = float(run)
    c = constants
    values: dict[str, float] = {}
    notes: list[str] = []
    for key in _SCHEME_BOUNDS[scheme]:
        if key == "plateau_label":
            values[key] = plateau_label_bound(c.delta_y, c.g_bound, c.mu)
        elif key == "original_sgd":
            values[key] = original_sgd_bound(c.g_bound, c.l_smooth, c.mu, n, c.initial_gap)
        elif key == "augdrop_label":
            values[key] = augdrop_label_bound(
                c.g_bound, c.l_smooth, c.mu_restricted, n, c.initial_gap
            )
        elif key == "mixloss":
            if lam is None:
                notes.append("mixloss bound needs lam")
                continue
            values[key] = mixloss_bound(c.g_bound, c.l_smooth, c.mu, n, lam, c.initial_gap)
        elif key == "plateau_shift":
            if c.delta_p is None:
                notes.append("plateau_shift bound needs delta_p")
                continue
            values[key] = plateau_shift_bound(c.delta_p, c.g_bound, c.mu)
        elif key == "augdrop_shift":
            if c.delta_p is None:
                notes.append("augdrop_shift bound needs delta_p")
                continue
            values[key] = augdrop_shift_bound(
                c.g_bound, c.l_smooth, c.mu_restricted, n, c.initial_gap
            )
    satisfied = {k: bool(measured_gap <= v) for k, v in values.items()}
    return BoundReport(
        values=values,
        measured_gap=float(measured_gap),
        satisfied=satisfied,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# schedules


def highprob_inflation(x: float) -> float:
    """(1 + sqrt(3 log x))^2, the batch inflation for a 1-x^-1 guarantee."""
    if x <= 1.0:
        return 1.0
    return (1.0 + math.sqrt(3.0 * math.log(x))) ** 2


def _iceil(x: float) -> int:
    """ceil with a tiny tolerance so exact-integer formulas resolve exactly."""
    return math.ceil(round(x, 9))


@dataclass(frozen=True)
class ResolvedSchedule:
    values: dict
    warnings: tuple


def theory_stepsizes(
    constants: ConstantEstimates,
    scheme: str,
    n: int,
    lam: float | None = None,
    confidence: float = 0.05,
) -> ResolvedSchedule:
    """Step sizes, batch sizes, and iteration counts from estimated constants.

    All resolved values are positive and finite; a log argument below e is
    clamped there (flagged), and the mixed-scheme step honors its analysis
    cap of 1/(2 l_smooth) (flagged when it binds).
    """
    c = constants
    for name in ("g_bound", "l_smooth", "mu"):
        if getattr(c, name) <= 0:
            raise DegenerateEstimateError(f"{name} must be positive for schedule resolution")
    if n < 1:
        raise ValueError("n must be at least 1")
    w: list[str] = []
    v: dict[str, float | int] = {}

    def logged(x: float, label: str) -> float:
        if x < _E:
            w.append(f"{label} log argument clamped at e")
        return _clog(x)

    g2 = c.g_bound**2
    if scheme == "original":
        v["eta"] = (1.0 / (2.0 * n * c.mu)) * logged(
            8.0 * n * c.mu**2 * c.initial_gap / (g2 * c.l_smooth), "eta"
        )
        v["iters"] = n
        v["batch"] = 1
    elif scheme == "augmented":
        if c.delta_y <= 0:
            raise DegenerateEstimateError("delta_y must be positive for this schedule")
        v["eta"] = 1.0 / c.l_smooth
        v["m0"] = _iceil(8.0 / c.delta_y**2)
        v["iters"] = _iceil(
            (c.l_smooth / c.mu)
            * logged(4.0 * c.initial_gap * c.mu / (c.delta_y**2 * g2), "iters")
        )
    elif scheme == "augdrop":
        if c.delta_y <= 0:
            raise DegenerateEstimateError("delta_y must be positive for this schedule")
        v["eta1"] = 1.0 / c.l_smooth
        t1 = _iceil(
            (c.l_smooth / c.mu)
            * logged(2.0 * c.initial_gap_tilde * c.mu / (c.delta_y**2 * g2), "t1")
        )
        v["t1"] = t1
        v["m1"] = _iceil(highprob_inflation(2.0 * t1 / confidence) * 8.0 / c.delta_y**2)
        v["m2"] = _iceil(highprob_inflation(2.0 * n / confidence) * 4.0 / c.delta_y**2)
        if v["m2"] > n:
            v["m2"] = n
            w.append("m2 capped at n")
        v["eta2"] = (1.0 / (2.0 * n * c.mu_restricted)) * logged(
            8.0 * n * c.mu_restricted**2 * c.initial_gap / (g2 * c.l_smooth), "eta2"
        )
    elif scheme == "mixloss":
        if lam is None or not (0.0 < lam <= 1.0):
            raise ValueError("lambda out of (0,1]")
        v["m0"] = max(1, _iceil(72.0 * (1.0 - lam) ** 2 / lam**2))
        raw = (1.0 / (c.mu * n)) * logged(
            n * c.mu**2 * c.initial_gap / (lam**2 * c.l_smooth * g2), "eta"
        )
        cap = 1.0 / (2.0 * c.l_smooth)
        if raw > cap:
            w.append("eta capped at 1/(2 l_smooth)")
            raw = cap
        v["eta"] = raw
        v["iters"] = n
    elif scheme == "augmented_shift":
        if c.delta_p is None or c.delta_p <= 0:
            raise DegenerateEstimateError("delta_p must be positive for this schedule")
        v["eta"] = 1.0 / c.l_smooth
        v["m0"] = _iceil(4.0 * c.l_smooth / c.delta_p)
        v["iters"] = _iceil(
            (c.l_smooth / c.mu)
            * logged(c.initial_gap * c.mu / (2.0 * c.delta_p * g2), "iters")
        )
    elif scheme == "augdrop_shift":
        if c.delta_p is None or c.delta_p <= 0:
            raise DegenerateEstimateError("delta_p must be positive for this schedule")
        v["eta1"] = 1.0 / c.l_smooth
        t1 = _iceil(
            (c.l_smooth / c.mu)
            * logged(2.0 * c.initial_gap_tilde * c.mu / (c.delta_p * g2), "t1")
        )
        v["t1"] = t1
        v["m1"] = _iceil(highprob_inflation(2.0 * t1 / confidence) * 8.0 / c.delta_p)
        v["m2"] = _iceil(highprob_inflation(2.0 * n / confidence) * 8.0 / c.delta_p)
        if v["m2"] > n:
            v["m2"] = n
            w.append("m2 capped at n")
        v["eta2"] = (1.0 / (2.0 * n * c.mu_restricted)) * logged(
            8.0 * n * c.mu_restricted**2 * c.initial_gap / (g2 * c.l_smooth), "eta2"
        )
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    for key, val in v.items():
        if not np.isfinite(val) or val <= 0:
            raise DegenerateEstimateError(f"resolved {key} is not positive and finite")
    return ResolvedSchedule(values=v, warnings=tuple(w))
