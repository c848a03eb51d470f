"""Coordinate descent over the IN range, the IN DoF cap and the file diversity gain.

Each coordinate update is an exhaustive scan of a fixed grid with the other
two coordinates held, so the result is coordinate-wise optimal on the grid.
Ties go to the smaller coordinate value.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analytic import match_fixed_range, stp_file
from .meta import beta_meta, moments
from .model import Fixed, NetworkConfig

__all__ = [
    "INV_VARIANCE_CAP",
    "OBJECTIVES",
    "OptimizationProblem",
    "OptimizationResult",
    "coordinate_descent",
    "default_bounds",
    "evaluate_objective",
    "point_config",
]

OBJECTIVES = ("stp", "inverse_variance", "meta", "weighted")
INV_VARIANCE_CAP = 1e12
MU_MAX = 5.0
ROUND_TOL = 1e-6


def default_bounds(cfg: NetworkConfig):
    """``(r_i, L, xi)`` bounds: ``mu <= 5`` or the matching ``R_c``, full L and xi ranges."""
    if isinstance(cfg.scheme, Fixed):
        r_max = match_fixed_range(MU_MAX, cfg.lambda_bs, cfg.xi)
    else:
        r_max = MU_MAX
    return (0.0, r_max), (0, cfg.M - 1), (1.0, cfg.N / cfg.C)


@dataclass(frozen=True)
class OptimizationProblem:
    """Objective, threshold, box and grid steps.

    Unset bounds take :func:`default_bounds`; setting ``lo == hi`` pins a
    coordinate.  ``eps_ri`` defaults to 5 m (fixed) or 0.05 (flexible).
    """

    objective: str = "stp"
    tau: float = 1.0
    x0: float = 0.9
    eta: float = 0.5
    r_i_bounds: tuple | None = None
    l_bounds: tuple | None = None
    xi_bounds: tuple | None = None
    eps_ri: float | None = None
    eps_l: int = 1
    eps_xi: float = 0.05
    max_rounds: int = 20
    initial: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")
        if not 0 <= self.eta <= 1:
            raise ValueError("eta must lie in [0, 1]")
        if not 0 <= self.x0 <= 1:
            raise ValueError("x0 must lie in [0, 1]")
        if (self.eps_ri is not None and self.eps_ri <= 0) or self.eps_l < 1 or self.eps_xi <= 0:
            raise ValueError("precisions must be positive")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        for name in ("r_i_bounds", "l_bounds", "xi_bounds"):
            b = getattr(self, name)
            if b is not None and not b[0] <= b[1]:
                raise ValueError(f"{name} is empty: {b}")

    def resolved(self, cfg: NetworkConfig):
        """Bounds and steps filled in for ``cfg``."""
        dr, dl, dx = default_bounds(cfg)
        rb = tuple(self.r_i_bounds) if self.r_i_bounds is not None else dr
        lb = tuple(self.l_bounds) if self.l_bounds is not None else dl
        xb = tuple(self.xi_bounds) if self.xi_bounds is not None else dx
        if rb[0] < 0:
            raise ValueError("r_i_bounds must be >= 0")
        if lb[0] < 0 or lb[1] > cfg.M - 1:
            raise ValueError(f"l_bounds must lie in [0, {cfg.M - 1}]")
        if xb[0] < 1 - 1e-12 or xb[1] > cfg.N / cfg.C + 1e-12:
            raise ValueError(f"xi_bounds must lie in [1, {cfg.N / cfg.C:g}]")
        eps_ri = self.eps_ri
        if eps_ri is None:
            eps_ri = 5.0 if isinstance(cfg.scheme, Fixed) else 0.05
        return rb, lb, xb, eps_ri


def _grid(lo, hi, step):
    n = int(math.floor((hi - lo) / step + 1e-9))
    g = lo + step * np.arange(n + 1)
    if hi - g[-1] > 1e-9 * max(1.0, abs(hi)):
        g = np.append(g, hi)
    return [float(v) for v in g]


def point_config(cfg: NetworkConfig, point) -> NetworkConfig:
    r_i, L, xi = point
    return cfg.with_r_i(r_i).replace(L=int(L), xi=float(xi))


def evaluate_objective(problem: OptimizationProblem, point, cfg: NetworkConfig) -> float:
    """Objective at ``point = (r_i, L, xi)``; all terms are hit-mass weighted totals.

    ``inverse_variance`` is capped at :data:`INV_VARIANCE_CAP` when the
    variance vanishes.
    """
    c = point_config(cfg, point)
    hit = c.hit_mass
    obj = problem.objective
    if obj == "stp":
        return hit * stp_file(problem.tau, c)
    ms = moments(problem.tau, c)
    if obj == "inverse_variance":
        v = hit * ms.variance
        return INV_VARIANCE_CAP if v <= 1.0 / INV_VARIANCE_CAP else 1.0 / v
    meta = hit * float(beta_meta(ms, problem.x0))
    if obj == "meta":
        return meta
    if problem.eta == 0:
        return meta
    return problem.eta * hit * stp_file(problem.tau, c) + (1 - problem.eta) * meta


@dataclass
class OptimizationResult:
    r_i_star: float
    l_star: int
    xi_star: float
    objective_value: float
    rounds: int
    converged: bool
    budget_exhausted: bool
    evaluations: int
    capped: bool = False
    trajectory: list = field(default_factory=list)

    @property
    def point(self):
        return (self.r_i_star, self.l_star, self.xi_star)


def _snap(value, grid):
    return min(grid, key=lambda g: (abs(g - value), g))


def coordinate_descent(problem: OptimizationProblem, cfg: NetworkConfig) -> OptimizationResult:
    """Cyclic grid search over ``R_I``, then ``L``, then ``xi`` until a round gains < 1e-6."""
    rb, lb, xb, eps_ri = problem.resolved(cfg)
    grids = [
        _grid(rb[0], rb[1], eps_ri),
        list(range(int(lb[0]), int(lb[1]) + 1, problem.eps_l)),
        _grid(xb[0], xb[1], problem.eps_xi),
    ]
    if problem.initial is not None:
        start = list(problem.initial)
    else:
        start = [0.5 * (rb[0] + rb[1]), (cfg.M - 1) // 2, 0.5 * (xb[0] + xb[1])]
    point = [_snap(start[k], grids[k]) for k in range(3)]
    point[1] = int(point[1])

    memo = {}

    def f(p):
        key = (round(p[0], 12), int(p[1]), round(p[2], 12))
        if key not in memo:
            memo[key] = evaluate_objective(problem, (p[0], int(p[1]), p[2]), cfg)
        return memo[key]

    def scan(values):
        todo = [v for v in values if (round(v[0], 12), int(v[1]), round(v[2], 12)) not in memo]
        if problem.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(problem.threads) as pool:
                vals = list(pool.map(lambda p: evaluate_objective(problem, p, cfg), todo))
            for p, v in zip(todo, vals):
                memo[(round(p[0], 12), int(p[1]), round(p[2], 12))] = v
        return [f(v) for v in values]

    best = f(point)
    trajectory = [{"round": 0, "coordinate": "start", "point": tuple(point), "value": best}]
    converged = False
    rounds = 0
    for rounds in range(1, problem.max_rounds + 1):
        before = best
        for k, name in enumerate(("r_i", "L", "xi")):
            cands = []
            for g in grids[k]:
                p = list(point)
                p[k] = g
                cands.append(tuple(p))
            vals = scan(cands)
            # first maximum in ascending grid order: ties go to the smaller value
            j = int(np.argmax(vals))
            if vals[j] >= best:
                point = list(cands[j])
                best = vals[j]
            trajectory.append({"round": rounds, "coordinate": name,
                               "point": tuple(point), "value": best})
        if best - before < ROUND_TOL:
            converged = True
            break
    value = evaluate_objective(problem, tuple(point), cfg)
    return OptimizationResult(
        r_i_star=float(point[0]), l_star=int(point[1]), xi_star=float(point[2]),
        objective_value=value, rounds=rounds, converged=converged,
        budget_exhausted=not converged, evaluations=len(memo),
        capped=problem.objective == "inverse_variance" and value >= INV_VARIANCE_CAP,
        trajectory=trajectory)
