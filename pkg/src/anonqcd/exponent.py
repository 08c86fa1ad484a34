"""Constrained KL-divergence exponents, threshold calibration, exact mixture KL.

The central object is the convex program

    minimize   sum_k alpha_k KL(U_k || p_k)
    subject to sum_k alpha_k U_k = q,   each U_k a pmf,

whose value is the large-network rate of the type-class probabilities that
drive the efficient detector. Stationarity makes each optimal U_k an
exponential tilt of p_k by one shared dual vector, so the solver iterates on
that dual directly (see ``_kernels.exponent_dual_solve``).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import (
    CalibrationError,
    CapacityError,
    DegenerateModelError,
    InvalidBatchError,
    ModelError,
    NoConvergenceError,
)
from .mixture import type_class_log_prob
from .model import DiscreteDistribution, NetworkModel, PRE, POST

DEFAULT_MAX_ITER = 100_000
RESIDUAL_TOL = 1e-9
OBJECTIVE_TOL = 1e-11


@dataclass(frozen=True)
class ExponentSolution:
    """Value and certificate of one constrained-KL minimization."""

    value: float
    minimizer: np.ndarray | None
    dual: np.ndarray | None
    constraint_residual: float
    iterations: int
    feasible: bool = True


@dataclass(frozen=True)
class CalibrationResult:
    threshold_b: float
    h: float
    guaranteed_warl: float
    conservative_flag: bool


def _as_pmf_matrix(dists) -> np.ndarray:
    if isinstance(dists, np.ndarray):
        mat = np.asarray(dists, dtype=np.float64)
        if mat.ndim != 2:
            raise ModelError("pmf matrix must be 2-D (groups x symbols)")
        rows = [DiscreteDistribution(row) for row in mat]
    else:
        rows = list(dists)
        if not all(isinstance(d, DiscreteDistribution) for d in rows):
            raise ModelError("expected discrete distributions")
        if len({d.alphabet_size for d in rows}) != 1:
            raise ModelError("distributions must share one alphabet")
    return np.stack([d.probabilities for d in rows])


def _as_target(target, alphabet_size) -> np.ndarray:
    q = target.probabilities if isinstance(target, DiscreteDistribution) else np.asarray(
        target, dtype=np.float64
    )
    if q.shape != (alphabet_size,):
        raise ModelError("target distribution has the wrong alphabet")
    if np.any(q < 0) or abs(float(q.sum()) - 1.0) > 1e-9:
        raise ModelError("target is not a probability vector")
    return q / q.sum()


def _as_alpha(alpha, k) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (k,) or np.any(a <= 0) or abs(float(a.sum()) - 1.0) > 1e-9:
        raise ModelError("alpha must be strictly positive and sum to 1")
    return a


def exponent(
    dists,
    alpha,
    target,
    lam_init: np.ndarray | None = None,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ExponentSolution:
    """Minimum weighted KL divergence of per-group laws tilted to mix to ``target``.

    Value 0 exactly when ``target`` equals the alpha-mixture of ``dists``;
    +inf (``feasible=False``) when no product of supported pmfs can mix to
    ``target``.
    """
    pmat = _as_pmf_matrix(dists)
    K, S = pmat.shape
    a = _as_alpha(alpha, K)
    q = _as_target(target, S)

    active = q > 0.0
    # infeasible if some needed symbol has no support, or some group has no
    # mass anywhere the target lives (its tilt could not be a pmf)
    if np.any(active & (pmat.max(axis=0) <= 0.0)) or np.any(
        (pmat[:, active] > 0).sum(axis=1) == 0
    ):
        return ExponentSolution(math.inf, None, None, math.inf, 0, feasible=False)

    with np.errstate(divide="ignore"):
        logp = np.log(pmat[:, active])
    qa = q[active]
    if lam_init is None:
        li = np.zeros(qa.size, dtype=np.float64)
    else:
        li = np.asarray(lam_init, dtype=np.float64)[active].copy()
        li[~np.isfinite(li)] = 0.0
    value, U, lam, residual, iters, status = _kernels.exponent_dual_solve(
        logp, a, qa, li, max_iter, RESIDUAL_TOL, OBJECTIVE_TOL
    )
    if status == _kernels.SOLVE_INFEASIBLE:
        return ExponentSolution(math.inf, None, None, math.inf, int(iters), feasible=False)
    if status == _kernels.SOLVE_MAXITER:
        raise NoConvergenceError(
            f"exponent solver hit {max_iter} iterations (residual {residual:.3e})",
            residual=float(residual),
            iterations=int(iters),
        )
    minimizer = np.zeros((K, S), dtype=np.float64)
    minimizer[:, active] = U
    dual = np.full(S, math.inf, dtype=np.float64)
    dual[active] = lam
    return ExponentSolution(
        float(value), minimizer, dual, float(residual), int(iters), feasible=True
    )


def exponent_gap(model: NetworkModel, target) -> float:
    """Pre-change exponent minus post-change exponent at one mixture target.

    Positive values mean the target looks more like a post-change mixture.
    One-sided infeasibility gives +-inf; both sides infeasible is an error.
    """
    model.require_discrete()
    a = model.alpha_array
    f0 = exponent(model.pre, a, target)
    f1 = exponent(model.post, a, target)
    if not f0.feasible and not f1.feasible:
        raise InvalidBatchError("target mixture unreachable under both regimes")
    if not f0.feasible:
        return math.inf
    if not f1.feasible:
        return -math.inf
    return f0.value - f1.value


def type_count(m: int, alphabet_size: int) -> int:
    """Number of empirical distributions of m samples on the alphabet (exact)."""
    if m < 0:
        raise ValueError("sample count must be nonnegative")
    if alphabet_size < 1:
        raise ValueError("alphabet must be nonempty")
    return math.comb(m + alphabet_size - 1, alphabet_size - 1)


def _compositions(total: int, parts: int):
    """All nonnegative integer vectors of the given length summing to total."""
    vec = [0] * parts

    def rec(i, remaining):
        if i == parts - 1:
            vec[i] = remaining
            yield tuple(vec)
            return
        for v in range(remaining + 1):
            vec[i] = v
            yield from rec(i + 1, remaining - v)

    yield from rec(0, total)


def _value_at(model: NetworkModel, regime: str, q: np.ndarray, max_iter=DEFAULT_MAX_ITER):
    """(value, feasible) of the exponent at a raw probability vector."""
    logp = model.log_pmf_matrix(regime)
    v, st = _kernels.exponent_value_probs(q, logp, model.alpha_array, max_iter)
    if st == _kernels.SOLVE_MAXITER:
        raise NoConvergenceError("exponent solver stalled during boundary search")
    return float(v), st == _kernels.SOLVE_OK


def _gap_at(model: NetworkModel, q: np.ndarray) -> float:
    v0, ok0 = _value_at(model, PRE, q)
    v1, ok1 = _value_at(model, POST, q)
    if not ok0 and not ok1:
        return math.nan
    if not ok0:
        return math.inf
    if not ok1:
        return -math.inf
    return v0 - v1


def _h_small_alphabet(model: NetworkModel, resolution: float) -> float:
    X = model.alphabet_size
    denom = max(2, round(1.0 / resolution))
    comps = np.array(list(_compositions(denom, X)), dtype=np.int64)
    logp0 = model.log_pmf_matrix(PRE)
    logp1 = model.log_pmf_matrix(POST)
    best, besti, found = _kernels.h_grid_scan(
        comps, logp0, logp1, model.alpha_array, DEFAULT_MAX_ITER
    )
    if found <= 0:
        raise DegenerateModelError("no mixture with positive drift at this resolution")
    if besti < 0:
        return math.inf
    # one refinement pass around the coarse argmin at a tenth of the step
    local_pts = _local_grid(comps[besti] * 10, denom * 10, span=10)
    if local_pts.size:
        b2, b2i, found2 = _kernels.h_grid_scan(
            local_pts, logp0, logp1, model.alpha_array, DEFAULT_MAX_ITER
        )
        if found2 > 0 and b2i >= 0 and b2 < best:
            best = b2
    return model.n * float(best)


def _local_grid(center: np.ndarray, denom: int, span: int) -> np.ndarray:
    """Integer grid points within +-span of center (coordinates on 1/denom)."""
    X = center.size
    ranges = [
        range(max(0, int(c) - span), min(denom, int(c) + span) + 1) for c in center[:-1]
    ]
    pts = []
    for head in itertools.product(*ranges):
        rest = denom - sum(head)
        if rest < 0 or abs(rest - int(center[-1])) > span:
            continue
        pts.append(head + (rest,))
    return np.array(pts, dtype=np.int64) if pts else np.empty((0, X), dtype=np.int64)


def _h_boundary_search(model: NetworkModel, resolution: float) -> float:
    """Large-alphabet path: minimize the pre-change exponent over the surface
    where the drift changes sign, found by bisection along segments from the
    pre-change mixture, then halve for safety (only underestimates are sound).
    """
    from .model import mixture_distribution

    X = model.alphabet_size
    m0 = mixture_distribution(model, PRE).probabilities
    m1 = mixture_distribution(model, POST).probabilities
    targets = [m1]
    targets.extend(d.probabilities for d in model.post)
    for x in range(X):
        e = np.zeros(X)
        e[x] = 1.0
        targets.append(e)
    rng = np.random.default_rng(1905)
    targets.extend(rng.dirichlet(np.ones(X)) for _ in range(32))

    best = math.inf
    found = False
    for d in targets:
        # locate a positive-drift point along the segment
        s_hi, g_hi = None, None
        for s in (1.0, 0.75, 0.5, 0.25):
            q = (1.0 - s) * m0 + s * d
            g = _gap_at(model, q)
            if math.isnan(g):
                continue
            if g > 0:
                s_hi, g_hi = s, g
                break
        if s_hi is None:
            continue
        found = True
        s_lo, g_lo = 0.0, _gap_at(model, m0)
        if not math.isfinite(g_hi):
            # walk back from the infeasible end until the gap is finite
            while s_hi - s_lo > resolution and not math.isfinite(g_hi):
                s_mid = 0.5 * (s_lo + s_hi)
                g_mid = _gap_at(model, (1.0 - s_mid) * m0 + s_mid * d)
                if g_mid > 0:
                    s_hi, g_hi = s_mid, g_mid
                else:
                    s_lo, g_lo = s_mid, g_mid
            if not math.isfinite(g_hi):
                continue
        while s_hi - s_lo > resolution:
            s_mid = 0.5 * (s_lo + s_hi)
            g_mid = _gap_at(model, (1.0 - s_mid) * m0 + s_mid * d)
            if g_mid >= 0:
                s_hi, g_hi = s_mid, g_mid
            else:
                s_lo, g_lo = s_mid, g_mid
        # secant polish of the crossing inside the final bracket
        if math.isfinite(g_lo) and math.isfinite(g_hi) and g_hi > g_lo:
            s_star = s_lo + (s_hi - s_lo) * (-g_lo) / (g_hi - g_lo)
        else:
            s_star = s_hi
        q_star = (1.0 - s_star) * m0 + s_star * d
        v0, ok0 = _value_at(model, PRE, q_star)
        if ok0 and v0 < best:
            best = v0
    if not found:
        raise DegenerateModelError("no positive-drift direction found")
    return 0.5 * model.n * best


def warl_exponent(model: NetworkModel, resolution: float = 0.01) -> float:
    """Worst-case false-alarm exponent: n times the smallest pre-change
    exponent over mixtures where the detector statistic drifts upward.

    Dense simplex grid (one refinement pass) for alphabets up to 4 symbols;
    boundary bisection with a 1/2 safety factor above that. Raising the
    resolution number coarsens both paths.
    """
    model.require_discrete()
    if resolution <= 0 or resolution >= 1:
        raise ValueError("resolution must lie in (0, 1)")
    if model.alphabet_size <= 4:
        return _h_small_alphabet(model, resolution)
    return _h_boundary_search(model, resolution)


def is_conservative_h(model: NetworkModel) -> bool:
    """Whether the safety-factor boundary path computes h for this model."""
    return model.alphabet_size > 4


def log_warl_guarantee(b: float, h: float, group_sizes: Sequence[int], alphabet_size: int) -> float:
    """Log of the guaranteed worst-case average run length at threshold b.

    The type-count arguments round the cycle length b/h up to an integer,
    which only weakens the guarantee.
    """
    if b <= 0 or h <= 0:
        raise ValueError("threshold and exponent must be positive")
    m = math.ceil(b / h)
    out = b - math.log(b / h + 1.0)
    for nk in group_sizes:
        out -= math.log(type_count(m * int(nk), alphabet_size))
    return out


def solve_threshold(h: float, group_sizes: Sequence[int], alphabet_size: int, gamma: float) -> float:
    """Smallest threshold whose guaranteed run length reaches gamma (bisection)."""
    if gamma <= 1:
        raise CalibrationError("run-length target must exceed 1")
    n = sum(int(s) for s in group_sizes)
    # tiny log-domain margin so the exponentiated guarantee cannot round
    # below gamma
    target = math.log(gamma) + 4e-12
    lo = target
    hi = target + 200.0 * math.log(1.0 + n * alphabet_size)
    if log_warl_guarantee(lo, h, group_sizes, alphabet_size) >= target:
        return lo
    if log_warl_guarantee(hi, h, group_sizes, alphabet_size) < target:
        raise CalibrationError(
            f"bound never reaches gamma={gamma:g} on [{lo:.3f}, {hi:.3f}] (h={h:.3e})"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_warl_guarantee(mid, h, group_sizes, alphabet_size) >= target:
            hi = mid
        else:
            lo = mid
    # hi always satisfies the bound
    return hi


def calibrate_threshold(
    model: NetworkModel, gamma: float, resolution: float = 0.01
) -> CalibrationResult:
    """Analytic threshold for the efficient test meeting a run-length target."""
    model.require_discrete()
    h = warl_exponent(model, resolution)
    b = solve_threshold(h, model.group_sizes, model.alphabet_size, gamma)
    logg = log_warl_guarantee(b, h, model.group_sizes, model.alphabet_size)
    return CalibrationResult(
        threshold_b=float(b),
        h=float(h),
        guaranteed_warl=math.exp(min(logg, 700.0)),
        conservative_flag=is_conservative_h(model),
    )


def exact_mixture_kl(model: NetworkModel) -> float:
    """KL divergence (nats) between the post- and pre-change laws of one
    anonymized batch, exact via enumeration of batch types.

    The likelihood ratio is constant on type classes, so the divergence is a
    sum over types of the post-change type probability times the log ratio.
    """
    model.require_discrete()
    X = model.alphabet_size
    n = model.n
    if type_count(n, X) > 10_000_000:
        raise CapacityError("type space too large to enumerate")
    terms = []
    for comp in _compositions(n, X):
        counts = np.array(comp, dtype=np.int64)
        lp1 = type_class_log_prob(model, counts, POST)
        if lp1 == -math.inf:
            continue
        lp0 = type_class_log_prob(model, counts, PRE)
        if lp0 == -math.inf:
            return math.inf
        terms.append(math.exp(lp1) * (lp1 - lp0))
    return math.fsum(terms)
