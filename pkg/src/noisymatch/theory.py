"""Numerical verification of the noise-tolerance theory.

Everything here works directly on probability vectors, independent of any
trained model: extremal values of the tan-sum over the simplex, per-query
clean and noisy matching risks under uniform correspondence noise, exhaustive
grid minimization to confirm that at q=1 the noisy risk has the same
minimizers as the clean risk, and the affine sandwich bound relating the two
risks at every q.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .losses import complementary_term

IDENTITY_TOL = 1e-12
BOUND_TOL = 1e-10


def tan_sum_extremes(n: int) -> tuple[float, float]:
    """(min, max) of sum_j tan(p_j) over the n-simplex.

    The minimum n*tan(1/n) sits at the uniform point, the maximum tan(1) at
    any vertex; both approach their limits from above 1 as n grows.
    """
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return float(n * np.tan(1.0 / n)), float(np.tan(1.0))


@dataclass
class ExtremesReport:
    """Sampled check that the tan-sum stays within its simplex extremes."""

    n: int
    samples: int
    lo: float
    hi: float
    min_observed: float
    max_observed: float
    violations: int
    uniform_attains_min: bool
    vertex_attains_max: bool

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.uniform_attains_min and self.vertex_attains_max


def simplex_extremes_check(n: int, samples: int, seed: int = 0) -> ExtremesReport:
    """Draw symmetric random simplex points and test the tan-sum bounds.

    Includes the uniform point and the first vertex explicitly and checks
    they attain the extremes to within the identity tolerance.
    """
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    lo, hi = tan_sum_extremes(n)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x51E9)))
    pts = rng.dirichlet(np.ones(n), size=samples)
    sums = np.tan(pts).sum(axis=1)
    violations = int(np.sum((sums < lo - IDENTITY_TOL) | (sums > hi + IDENTITY_TOL)))

    uniform_sum = float(np.tan(np.full(n, 1.0 / n)).sum())
    vertex = np.zeros(n)
    vertex[0] = 1.0
    vertex_sum = float(np.tan(vertex).sum())
    return ExtremesReport(
        n=n,
        samples=samples,
        lo=lo,
        hi=hi,
        min_observed=float(sums.min()),
        max_observed=float(sums.max()),
        violations=violations,
        uniform_attains_min=abs(uniform_sum - lo) <= IDENTITY_TOL,
        vertex_attains_max=abs(vertex_sum - hi) <= IDENTITY_TOL,
    )


def _check_eta(n: int, eta: float) -> None:
    if not 0.0 <= eta <= (n - 1) / n:
        raise ValueError(f"eta must be in [0, (n-1)/n] = [0, {(n - 1) / n:.6g}], got {eta}")


def per_query_risks(p: np.ndarray, i: int, eta: float, q: float) -> tuple[float, float]:
    """One direction's clean and noisy risk for a single query.

    ``p`` is the query's probability vector with true positive ``i``. The
    noisy risk mixes the clean term with the complementary terms of the n-1
    possible mismatches, each weighted eta / (n - 1).
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    _check_eta(n, eta)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p < 0):
        raise ValueError("p must lie on the probability simplex")
    clean = complementary_term(p, i, q)
    others = sum(complementary_term(p, j, q) for j in range(n) if j != i)
    noisy = (1.0 - eta) * clean + eta / (n - 1) * others
    return clean, noisy


def simplex_grid(n: int, resolution: int) -> np.ndarray:
    """All compositions of ``resolution`` parts into n cells, scaled to sum 1."""
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    combos = list(combinations(range(resolution + n - 1), n - 1))
    grid = np.zeros((len(combos), n))
    for row, dividers in enumerate(combos):
        prev = -1
        for cell, div in enumerate(dividers):
            grid[row, cell] = div - prev - 1
            prev = div
        grid[row, n - 1] = resolution + n - 2 - prev
    return grid / resolution


@dataclass
class RiskReport:
    """Brute-force risk minimization plus bound checks for one (n, eta, q).

    Minima and minimizer sets refer to one retrieval direction over the
    per-query simplex; the bidirectional risk of a symmetric hypothesis is
    twice the per-direction value. ``bound_lo`` is the (nonpositive) lower
    bound on the bidirectional clean-risk gap between the clean and noisy
    minimizers; ``bound_hi`` is the matching upper bound on the noisy-risk
    gap. ``residuals`` lists sandwich violations above tolerance (empty on a
    passing run).
    """

    n: int
    eta: float
    q: float
    grid_resolution: int
    clean_risk_min: float
    noisy_risk_min: float
    clean_minimizers: list
    noisy_minimizers: list
    bound_lo: float
    bound_hi: float
    minimizers_match: bool
    gap_within_bounds: bool
    max_violation: float
    residuals: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        ok = not self.residuals and self.gap_within_bounds
        if self.q == 1.0:
            ok = ok and self.minimizers_match
        return ok

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "eta": self.eta,
            "q": self.q,
            "grid_resolution": self.grid_resolution,
            "clean_risk_min": self.clean_risk_min,
            "noisy_risk_min": self.noisy_risk_min,
            "clean_minimizers": self.clean_minimizers,
            "noisy_minimizers": self.noisy_minimizers,
            "bound_lo": self.bound_lo,
            "bound_hi": self.bound_hi,
            "minimizers_match": self.minimizers_match,
            "gap_within_bounds": self.gap_within_bounds,
            "max_violation": self.max_violation,
            "residuals": self.residuals,
            "passed": self.passed,
        }


def bound_constants(n: int, eta: float, q: float) -> tuple[float, float]:
    """The two gap constants of the risk sandwich at (n, eta, q).

    Returns (lower gap C <= 0 on the clean-risk difference, upper gap
    C' >= 0 on the noisy-risk difference); both vanish at q = 1.
    """
    _check_eta(n, eta)
    a_min, a_max = tan_sum_extremes(n)
    shrink = 1.0 - n * eta / (n - 1)
    c_hi = 2.0 * eta * (a_max ** (1.0 - q) - a_min ** (1.0 - q))
    if shrink <= 0.0:
        raise ValueError(f"eta = {eta} makes the affine slope nonpositive for n = {n}")
    return -c_hi / shrink, c_hi


def _direction_risks(points: np.ndarray, eta: float, q: float):
    """Vectorized per-direction clean and noisy risks of many simplex points.

    The positive index is 0; by symmetry of the grid this loses nothing.
    The noisy risk is the definitional mixture over all mismatched
    positives, summed numerically, so that the affine identities verified
    elsewhere are genuinely tested rather than assumed.
    """
    n = points.shape[1]
    t = np.tan(points)
    tot = t.sum(axis=1)
    terms = (tot[:, None] - t) / tot[:, None] ** q  # (m, n), column j: positive j
    clean = terms[:, 0]
    noisy = (1.0 - eta) * clean + eta / (n - 1) * terms[:, 1:].sum(axis=1)
    return clean, noisy


def brute_force_minimizers(
    n: int,
    eta: float,
    q: float,
    grid_resolution: int = 30,
    samples: int = 10_000,
    seed: int = 0,
) -> RiskReport:
    """Exhaustively minimize the per-query risks on a simplex grid.

    Because the matching risk is an average of independent per-query,
    per-direction terms, the global minimizer is the product of per-query
    minimizers, so a grid over one probability simplex suffices. Also checks
    the affine sandwich bound on ``samples`` random bidirectional hypotheses
    (independent row and column probability vectors).
    """
    if not 0.0 <= eta < (n - 1) / n:
        raise ValueError(f"eta must be in [0, (n-1)/n) = [0, {(n - 1) / n:.6g}), got {eta}")
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must be in [0, 1], got {q}")
    bound_lo, bound_hi = bound_constants(n, eta, q)

    grid = simplex_grid(n, grid_resolution)
    clean, noisy = _direction_risks(grid, eta, q)

    clean_min = float(clean.min())
    noisy_min = float(noisy.min())
    noisy_tie_idx = np.flatnonzero(noisy <= noisy_min + IDENTITY_TOL)
    clean_set = {tuple(int(c) for c in np.round(grid[idx] * grid_resolution))
                 for idx in np.flatnonzero(clean <= clean_min + IDENTITY_TOL)}
    noisy_set = {tuple(int(c) for c in np.round(grid[idx] * grid_resolution))
                 for idx in noisy_tie_idx}

    # Bidirectional clean-risk gap between the two minimizers: f* is the
    # clean minimizer, f*_eta any noisy minimizer; every gap must land in
    # [C, 0].
    gaps = 2.0 * (clean_min - clean[noisy_tie_idx])
    gap_ok = bool(np.all((gaps >= bound_lo - BOUND_TOL) & (gaps <= BOUND_TOL)))

    # Sandwich bound on random hypotheses, both directions independent.
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xB0B0)))
    rows = rng.dirichlet(np.ones(n), size=samples)
    cols = rng.dirichlet(np.ones(n), size=samples)
    c_row, d_row = _direction_risks(rows, eta, q)
    c_col, d_col = _direction_risks(cols, eta, q)
    r_clean = c_row + c_col
    r_noisy = d_row + d_col
    a_min, a_max = tan_sum_extremes(n)
    shrink = 1.0 - n * eta / (n - 1)
    lower = shrink * r_clean + 2.0 * eta * a_min ** (1.0 - q)
    upper = shrink * r_clean + 2.0 * eta * a_max ** (1.0 - q)
    viol = np.maximum(lower - r_noisy, r_noisy - upper)
    residuals = [float(v) for v in viol[viol > BOUND_TOL]]

    return RiskReport(
        n=n,
        eta=eta,
        q=q,
        grid_resolution=grid_resolution,
        clean_risk_min=2.0 * clean_min,
        noisy_risk_min=2.0 * noisy_min,
        clean_minimizers=sorted(clean_set),
        noisy_minimizers=sorted(noisy_set),
        bound_lo=bound_lo,
        bound_hi=bound_hi,
        minimizers_match=clean_set == noisy_set,
        gap_within_bounds=gap_ok,
        max_violation=float(viol.max()) if viol.size else 0.0,
        residuals=residuals,
    )


def bound_gap_curve(n: int, eta: float, q_grid: np.ndarray) -> list[tuple[float, float, float]]:
    """The two gap constants as a function of q; returns (q, lower, upper) rows."""
    q_grid = np.asarray(q_grid, dtype=np.float64)
    if np.any((q_grid < 0) | (q_grid > 1)):
        raise ValueError("q grid must lie in [0, 1]")
    if not 0.0 <= eta < (n - 1) / n:
        raise ValueError(f"eta must be in [0, (n-1)/n) for the curve, got {eta}")
    return [(float(q),) + bound_constants(n, eta, float(q)) for q in q_grid]
