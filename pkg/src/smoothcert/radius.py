"""Certified-radius formulas and dimensionality bound calculators.

Covers the single-input smoothing radius, the two-branch (dual) radius and
its lower-bound form, the identity connecting them, the 1/sqrt(d) upper
bounds for both schemes, the k-branch generalization, and smoothing with a
different noise scale per branch.

Quantile arguments are clamped to [1e-15, 1 - 1e-15] only at the documented
call sites; every clamp is recorded on the result so a certificate can be
audited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from smoothcert.statfun import (
    Probability,
    gaussian_ball_mass_inv,
    normal_quantile,
)

__all__ = [
    "BranchProbs",
    "RadiusResult",
    "rs_radius",
    "rs_radius_lower",
    "drs_radius",
    "drs_radius_lower",
    "drs_from_rs_identity",
    "rs_upper_bound",
    "drs_upper_bound",
    "k_partition_radius",
    "adv_prob_objective",
    "adv_prob_objective_min",
    "asym_variance_radius",
]

_SQRT2 = math.sqrt(2.0)
PROB_CLAMP = 1e-15
# probability margin constant of the dimensionality upper bound, as printed
BOUND_MARGIN = 5e-7

CAVEAT_SADDLE = "saddle_point_k_gt_2"
CAVEAT_BOUNDARY = "boundary_optimum"


@dataclass(frozen=True)
class BranchProbs:
    """Most-probable and runner-up class probabilities for one branch.

    General inputs must have p_a >= p_b; the two-class worst-case convention
    p_b = 1 - p_a is additionally admitted for any p_a (their sum is then at
    most one), since lower-bound certification feeds exactly that shape.
    """

    p_a: Probability
    p_b: Probability

    def __post_init__(self) -> None:
        pa, pb = Probability(self.p_a), Probability(self.p_b)
        if pa < pb and pa + pb > 1.0 + 1e-12:
            raise ValueError(f"p_a must be >= p_b unless p_a + p_b <= 1, got ({pa}, {pb})")
        object.__setattr__(self, "p_a", pa)
        object.__setattr__(self, "p_b", pb)

    @classmethod
    def worst_case(cls, p_a) -> "BranchProbs":
        """Two-class worst-case convention p_b = 1 - p_a."""
        return cls(p_a=Probability(p_a), p_b=Probability(1.0 - float(p_a)))


@dataclass(frozen=True)
class RadiusResult:
    """A certified radius (or an abstention) plus audit fields.

    ``budget`` is the minimum total per-branch attack norm ``s`` where that
    quantity is meaningful (two-branch forms); the radius is then s/sqrt(2).
    """

    radius: float
    certified: bool
    tilde_p: float | None = None
    caveat: str | None = None
    sigma: float | None = None
    budget: float | None = None
    clamp_flags: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.certified and not self.radius >= 0.0:
            raise ValueError("a certified radius must be >= 0")


ABSTAIN_RESULT = RadiusResult(radius=0.0, certified=False)


def _q(p: float, flags: set, label: str) -> float:
    """Quantile with audited clamping away from {0, 1}."""
    if p <= 0.0 or p >= 1.0:
        clamped = min(max(p, PROB_CLAMP), 1.0 - PROB_CLAMP)
        flags.add(f"clamp:{label}")
        return normal_quantile(clamped)
    return normal_quantile(p)


def _check_sigma(sigma: float) -> float:
    s = float(sigma)
    if not (math.isfinite(s) and s > 0.0):
        raise ValueError(f"sigma must be finite and > 0, got {sigma!r}")
    return s


def rs_radius(p: BranchProbs, sigma: float) -> RadiusResult:
    """Single-input smoothing radius: sigma/2 * (quantile gap of p_a, p_b)."""
    sigma = _check_sigma(sigma)
    if p.p_a < p.p_b:
        return ABSTAIN_RESULT
    if not (0.0 < p.p_b and p.p_a < 1.0):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    r = 0.5 * sigma * (normal_quantile(p.p_a) - normal_quantile(p.p_b))
    return RadiusResult(radius=r, certified=True, sigma=sigma)


def rs_radius_lower(p_a_lower, sigma: float) -> RadiusResult:
    """Radius under the worst-case convention p_b = 1 - p_a.

    Certifies only when the lower-bound probability clears 1/2; otherwise
    the caller must abstain.
    """
    sigma = _check_sigma(sigma)
    pa = Probability(p_a_lower)
    if not pa > 0.5:
        return ABSTAIN_RESULT
    if pa >= 1.0:
        raise ValueError("p_a_lower must be < 1")
    return RadiusResult(radius=sigma * normal_quantile(pa), certified=True, sigma=sigma)


def _tilde_p(left: BranchProbs, right: BranchProbs) -> float:
    return 0.5 * (left.p_a + right.p_a + left.p_b + right.p_b)


def drs_radius(left: BranchProbs, right: BranchProbs, sigma: float) -> RadiusResult:
    """Two-branch radius from exact per-branch probabilities.

    radius = sigma/sqrt(2) * (q(p_a_l) + q(p_a_r) - 2 q(tilde_p / 2)) where
    tilde_p averages the top-two probability mass across branches.  Requires
    tilde_p <= 1; larger values void the interior-optimum derivation and the
    caller must fall back to the worst-case convention.
    """
    sigma = _check_sigma(sigma)
    tp = _tilde_p(left, right)
    if tp > 1.0 + 1e-12:
        raise ValueError(f"tilde_p must be <= 1, got {tp}")
    tp = min(tp, 1.0)
    for p in (left.p_a, left.p_b, right.p_a, right.p_b):
        if not 0.0 < p < 1.0:
            raise ValueError("probabilities must lie strictly inside (0, 1)")
    s = sigma * (
        normal_quantile(left.p_a)
        + normal_quantile(right.p_a)
        - 2.0 * normal_quantile(tp / 2.0)
    )
    return RadiusResult(
        radius=s / _SQRT2, certified=True, tilde_p=tp, sigma=sigma, budget=s
    )


def drs_radius_lower(p_a_left, p_a_right, sigma: float) -> RadiusResult:
    """Two-branch radius from lower-bound probabilities.

    Certifies iff the branch lower bounds sum to at least 1 (the abstain
    gate); the radius is then sigma/sqrt(2) times the sum of the quantiles.
    """
    sigma = _check_sigma(sigma)
    pl, pr = Probability(p_a_left), Probability(p_a_right)
    if pl + pr < 1.0:
        return ABSTAIN_RESULT
    flags: set = set()
    s = sigma * (_q(pl, flags, "p_a_left") + _q(pr, flags, "p_a_right"))
    return RadiusResult(
        radius=s / _SQRT2,
        certified=True,
        tilde_p=1.0,
        sigma=sigma,
        budget=s,
        clamp_flags=frozenset(flags),
    )


def drs_from_rs_identity(r_left: RadiusResult, r_right: RadiusResult) -> RadiusResult:
    """Combine two per-branch single-input radii: (R_l + R_r) / sqrt(2).

    Both inputs must be certified branch results produced with the same
    sigma; if either branch abstained the combination abstains.
    """
    if not (r_left.certified and r_right.certified):
        return ABSTAIN_RESULT
    if r_left.sigma is None or r_right.sigma is None or r_left.sigma != r_right.sigma:
        raise ValueError("branch radii must be produced with the same sigma")
    return RadiusResult(
        radius=(r_left.radius + r_right.radius) / _SQRT2,
        certified=True,
        tilde_p=1.0,
        sigma=r_left.sigma,
    )


def _adjusted(p_max) -> float:
    p = Probability(p_max) / (1.0 - BOUND_MARGIN)
    if p >= 1.0:
        raise ValueError("adjusted probability reaches 1; bound undefined")
    return p


def rs_upper_bound(p_max, dim: int, sigma: float) -> float:
    """Dimensionality ceiling on any single-input smoothing radius.

    5/sqrt(d) times the ball-mass inverse of the margin-adjusted top-class
    probability under N(0, sigma^2 I_d).
    """
    sigma = _check_sigma(sigma)
    p = _adjusted(p_max)
    if p <= 0.0:
        return 0.0
    return 5.0 / math.sqrt(dim) * gaussian_ball_mass_inv(p, dim, sigma)


def drs_upper_bound(p_max_left, p_max_right, m: int, n: int, sigma: float) -> float:
    """Dimensionality ceiling for the two-branch scheme with dims m + n = d."""
    sigma = _check_sigma(sigma)
    pl, pr = _adjusted(p_max_left), _adjusted(p_max_right)
    left = 5.0 / math.sqrt(2.0 * m) * gaussian_ball_mass_inv(pl, m, sigma)
    right = 5.0 / math.sqrt(2.0 * n) * gaussian_ball_mass_inv(pr, n, sigma)
    return left + right


def k_partition_radius(branch_probs: list[BranchProbs], sigma: float) -> RadiusResult:
    """Radius of the k-branch generalization at the stationary point.

    For k = 2 the stationary point is the global minimum and the result is
    certified.  For k > 2 it is only a saddle, so the result carries the
    ``saddle_point_k_gt_2`` caveat and is not certified.
    """
    sigma = _check_sigma(sigma)
    k = len(branch_probs)
    if k < 2:
        raise ValueError("need at least two branches")
    tp = 0.5 * sum(b.p_a + b.p_b for b in branch_probs)
    if not 0.0 < tp / k < 1.0:
        raise ValueError(f"tilde_p / k must lie in (0, 1), got {tp / k}")
    if k == 2 and tp > 1.0 + 1e-12:
        raise ValueError(f"tilde_p must be <= 1 for two branches, got {tp}")
    for b in branch_probs:
        if not 0.0 < b.p_a < 1.0:
            raise ValueError("branch probabilities must lie strictly inside (0, 1)")
    s = sigma * (
        sum(normal_quantile(b.p_a) for b in branch_probs)
        - k * normal_quantile(tp / k)
    )
    if k == 2:
        return RadiusResult(radius=s / _SQRT2, certified=True, tilde_p=tp, sigma=sigma, budget=s)
    return RadiusResult(
        radius=s / math.sqrt(k),
        certified=False,
        tilde_p=tp,
        sigma=sigma,
        budget=s,
        caveat=CAVEAT_SADDLE,
    )


def adv_prob_objective(p_prime) -> float:
    """The adversary's objective: minus the sum of quantiles of the attacked
    top-class probabilities."""
    arr = np.asarray(p_prime, dtype=float)
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise ValueError("objective arguments must lie strictly inside (0, 1)")
    return float(-np.sum(normal_quantile(arr)))


def _project_to_slice(point: np.ndarray, caps: np.ndarray, total: float, eps: float) -> np.ndarray:
    # Euclidean projection onto {eps <= x_j <= caps_j, sum x = total} by
    # bisection on the shift lambda.
    lo = float(np.min(point - caps))
    hi = float(np.max(point) - eps)
    for _ in range(200):
        lam = 0.5 * (lo + hi)
        s = np.clip(point - lam, eps, caps).sum()
        if s > total:
            lo = lam
        else:
            hi = lam
    return np.clip(point - 0.5 * (lo + hi), eps, caps)


def adv_prob_objective_min(p_a, p_b, k: int) -> tuple[list, float]:
    """Numerically minimize the adversary's objective on the constraint set.

    Projected coordinate descent over the capped simplex slice
    {sum p'_j = tilde_p, p'_j <= p_a_j}, restarted from 16 random feasible
    points; a sweep terminates when successive objective values differ by
    less than 1e-10.  Serves as the brute-force check on the closed-form
    stationary points, so it never consults them.
    """
    pa = np.asarray(p_a, dtype=float)
    pb = np.asarray(p_b, dtype=float)
    if len(pa) != k or len(pb) != k:
        raise ValueError("p_a and p_b must both have length k")
    total = 0.5 * float(np.sum(pa + pb))
    eps = 1e-9
    caps = np.minimum(pa, 1.0 - eps)
    if np.sum(caps) < total - 1e-12 or k * eps > total:
        raise ValueError("constraint set is empty")

    rng = np.random.default_rng(0)
    best_x, best_v = None, math.inf
    for start in range(16):
        if start == 0:
            x0 = np.full(k, total / k)
        else:
            x0 = rng.uniform(eps, caps)
        x = _project_to_slice(x0, caps, total, eps)
        prev = adv_prob_objective(x)
        for _ in range(500):
            for i in range(k):
                for j in range(i + 1, k):
                    # transfer t from coordinate j to i within the box
                    lo = max(eps - x[i], x[j] - caps[j])
                    hi = min(caps[i] - x[i], x[j] - eps)
                    if hi - lo < 1e-15:
                        continue

                    def pair_obj(t, i=i, j=j):
                        return -(
                            normal_quantile(x[i] + t) + normal_quantile(x[j] - t)
                        )

                    res = minimize_scalar(
                        pair_obj, bounds=(lo, hi), method="bounded",
                        options={"xatol": 1e-12},
                    )
                    t = float(res.x)
                    if pair_obj(t) < pair_obj(0.0):
                        x[i] += t
                        x[j] -= t
            cur = adv_prob_objective(x)
            if abs(prev - cur) < 1e-10:
                break
            prev = cur
        if prev < best_v:
            best_v, best_x = prev, x.copy()
    return list(best_x), float(best_v)


def _asym_feasible_interval(left: BranchProbs, right: BranchProbs, tp: float, eps: float):
    lo = max(eps, tp - right.p_a)
    hi = min(float(left.p_a), tp - eps)
    return lo, hi


def asym_variance_radius(
    left: BranchProbs, right: BranchProbs, sigma_l: float, sigma_r: float
) -> RadiusResult:
    """Two-branch radius with a different noise scale per branch.

    With eta = sigma_r / sigma_l the adversary's optimal probability split
    solves q(p' + 1 - tilde_p)^2 - q(p')^2 = 2 ln(1/eta); the objective is
    evaluated at that root and at both ends of the feasible interval, and
    the smallest value wins (an endpoint winner is flagged).  The combined
    radius takes the worst-case equal-split convention s/sqrt(2), with the
    total attack budget s exposed for audit.
    """
    sigma_l = _check_sigma(sigma_l)
    sigma_r = _check_sigma(sigma_r)
    eta = sigma_r / sigma_l
    tp = _tilde_p(left, right)
    if not 0.0 < tp <= 1.0 + 1e-12:
        raise ValueError(f"tilde_p must lie in (0, 1], got {tp}")
    tp = min(tp, 1.0)
    for p in (left.p_a, right.p_a):
        if not 0.0 < p < 1.0:
            raise ValueError("branch probabilities must lie strictly inside (0, 1)")
    eps = 1e-12
    lo, hi = _asym_feasible_interval(left, right, tp, eps)
    if lo > hi:
        return ABSTAIN_RESULT

    def objective(p: float) -> float:
        return eta * normal_quantile(p + 1.0 - tp) - normal_quantile(p)

    caveat = None
    if tp >= 1.0:
        # objective degenerates to (eta - 1) * quantile(p'): monotone, so the
        # minimum sits at an interval endpoint
        v = min(objective(lo), objective(hi))
        caveat = CAVEAT_BOUNDARY
    else:
        target = 2.0 * math.log(1.0 / eta)

        def residual(p: float) -> float:
            return normal_quantile(p + 1.0 - tp) ** 2 - normal_quantile(p) ** 2 - target

        candidates = [lo, hi]
        if residual(lo) < 0.0 < residual(hi):
            a, b = lo, hi
            for _ in range(200):
                mid = 0.5 * (a + b)
                r = residual(mid)
                if abs(r) <= 1e-12:
                    break
                if r < 0.0:
                    a = mid
                else:
                    b = mid
            candidates.append(0.5 * (a + b))
        values = [objective(c) for c in candidates]
        v = min(values)
        if values.index(v) < 2:
            caveat = CAVEAT_BOUNDARY

    s = sigma_l * (
        normal_quantile(left.p_a) + eta * normal_quantile(right.p_a) + v
    )
    return RadiusResult(
        radius=s / _SQRT2,
        certified=True,
        tilde_p=tp,
        sigma=sigma_l,
        budget=s,
        caveat=caveat,
    )
