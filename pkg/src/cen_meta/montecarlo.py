"""Monte Carlo simulator for the CSTP of a typical user.

Each topology draws BS and user PPPs in a disk, random FUDC caches, content
centric association, one served user per BS, and IN requests with the
``L``-cap.  The typical user sits at the origin and is always served by its
serving BS.  The CSTP of the topology is the fraction of fading draws
(``g_0 ~ Gamma(M - theta)``, interferer gains ``Exp(1)``) whose SIR clears
the threshold.

Every topology uses its own Philox stream keyed by ``(seed, index)``, so the
output does not depend on the number of worker threads.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .meta import upper_bound_cstp
from .model import Fixed, NetworkConfig, config_hash, config_to_dict
from .specfun import lt_toeplitz_exp_column

__all__ = [
    "CampaignResult",
    "CstpSampleSet",
    "EmpiricalSummary",
    "MonteCarloConfig",
    "TopologyRealization",
    "cstp_of_topology",
    "empirical_summaries",
    "exact_cstp",
    "run_campaign",
    "run_campaign_grid",
    "sample_topology",
    "topology_stream",
    "write_samples_csv",
    "write_sidecar_json",
]

MAX_ATTEMPTS = 100
SERVED_MODELS = ("association", "independent")
ESTIMATORS = ("fading", "exact", "bound")


@dataclass(frozen=True)
class MonteCarloConfig:
    """Simulation budget and window.

    ``region_radius`` / ``guard_radius`` left as ``None`` are sized from the
    network: radius ``max(10 / sqrt(pi lambda / xi), 20 R_IN)`` and a guard of
    half that, where ``R_IN`` is ``R_c`` or ``mu`` times the mean serving
    distance.

    ``served_model="association"`` picks each BS's served user among its
    associated users.  ``"independent"`` instead places the IN-requesting
    served users as an independent PPP of density ``lambda_bs``, each linked
    to its nearest BS caching a random file, as the load analysis assumes.
    """

    n_topologies: int = 2000
    n_fading: int = 500
    region_radius: float | None = None
    guard_radius: float | None = None
    seed: int = 0
    threads: int = 1
    served_model: str = "association"

    def __post_init__(self):
        if self.n_topologies < 1 or self.n_fading < 1:
            raise ValueError("n_topologies and n_fading must be >= 1")
        if self.served_model not in SERVED_MODELS:
            raise ValueError(f"served_model must be one of {SERVED_MODELS}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def window(self, cfg: NetworkConfig) -> tuple[float, float]:
        """Resolved ``(region_radius, guard_radius)`` for ``cfg``."""
        lam_c = cfg.lambda_bs / cfg.xi
        mean_z = 0.5 / math.sqrt(lam_c)
        if isinstance(cfg.scheme, Fixed):
            r_in = cfg.scheme.r_c
        else:
            r_in = cfg.scheme.mu * mean_z
        region = self.region_radius
        if region is None:
            region = max(10.0 / math.sqrt(math.pi * lam_c), 20.0 * r_in)
        guard = self.guard_radius if self.guard_radius is not None else 0.5 * region
        # serving distance exceeds 4 sqrt(...) with probability e^-16
        z_max = 4.0 / math.sqrt(math.pi * lam_c)
        if not region > guard > z_max:
            raise ValueError(
                f"need region_radius > guard_radius > {z_max:.1f} m, "
                f"got {region:.1f} and {guard:.1f}")
        return region, guard


@dataclass
class TopologyRealization:
    """One network snapshot seen from the typical user at the origin."""

    bs_points: np.ndarray
    caches: np.ndarray          # (n_bs, C) file ids
    served_user_per_bs: np.ndarray  # user index, -1 for idle BSs, -2 for the typical user
    typical_request: int
    serving_bs: int
    serving_distance: float
    theta: int
    interferer_radii: np.ndarray
    nulled: np.ndarray
    theta_r: np.ndarray         # IN requests received by each BS
    region_radius: float
    guard_radius: float
    resamples: int = 0

    @property
    def active_radii(self) -> np.ndarray:
        return self.interferer_radii[~self.nulled]

    @property
    def interior_mask(self) -> np.ndarray:
        return np.hypot(self.bs_points[:, 0], self.bs_points[:, 1]) <= self.guard_radius


def topology_stream(seed: int, index: int) -> np.random.Generator:
    """Counter-based substream for topology ``index``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _poisson_disk(rng, density, radius):
    n = rng.poisson(density * math.pi * radius * radius)
    r = radius * np.sqrt(rng.random(n))
    phi = 2 * math.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _try_topology(cfg: NetworkConfig, region, guard, rng, served_model="association"):
    design = cfg.cache
    n_c, C, L = design.n_c, cfg.C, cfg.L
    pop = cfg.popularity

    bs = _poisson_disk(rng, cfg.lambda_bs, region)
    n_bs = len(bs)
    if n_bs == 0:
        return None
    caches = np.argsort(rng.random((n_bs, n_c)), axis=1)[:, :C]
    has = np.zeros((n_bs, n_c), dtype=bool)
    np.put_along_axis(has, caches, True, axis=1)

    # typical user: file from the popularity restricted to the cached set
    req0 = int(rng.choice(n_c, p=pop[:n_c] / pop[:n_c].sum()))
    d0 = np.hypot(bs[:, 0], bs[:, 1])
    cand = np.flatnonzero(has[:, req0])
    if cand.size == 0:
        return None
    serving = int(cand[np.argmin(d0[cand])])
    z = float(d0[serving])
    if z > guard:
        return None

    # other users: full popularity, uncached requests stay unassociated
    users = _poisson_disk(rng, cfg.lambda_u, region)
    req = rng.choice(cfg.N, size=len(users), p=pop)
    keep = np.flatnonzero(req < n_c)
    assoc = np.full(len(users), -1)
    zu = np.full(len(users), np.inf)
    if keep.size:
        diff = users[keep, None, :] - bs[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        dist[~has[:, req[keep]].T] = np.inf
        j = np.argmin(dist, axis=1)
        assoc[keep] = j
        zu[keep] = dist[np.arange(keep.size), j]

    # one served user per BS, drawn uniformly among its associated users
    served = np.full(n_bs, -1)
    perm = rng.permutation(len(users))
    perm = perm[assoc[perm] >= 0]
    bs_ids, first = np.unique(assoc[perm], return_index=True)
    served[bs_ids] = perm[first]
    served[serving] = -2

    # IN requests from every served user (typical user included)
    sel = np.flatnonzero(served >= 0)
    if served_model == "independent":
        pos = _poisson_disk(rng, cfg.lambda_bs, region)
        f = rng.choice(n_c, size=len(pos), p=pop[:n_c] / pop[:n_c].sum())
        diff = pos[:, None, :] - bs[None, :, :]
        dist = np.hypot(diff[..., 0], diff[..., 1])
        dist[~has[:, f].T] = np.inf
        j = np.argmin(dist, axis=1)
        found = np.isfinite(dist[np.arange(len(pos)), j])
        src_pos = np.vstack([pos[found], np.zeros((1, 2))])
        src_bs = np.append(j[found], serving)
        src_z = np.append(dist[np.arange(len(pos)), j][found], z)
    else:
        src_pos = np.vstack([users[served[sel]], np.zeros((1, 2))])
        src_bs = np.append(sel, serving)
        src_z = np.append(zu[served[sel]], z)
    if isinstance(cfg.scheme, Fixed):
        rng_in = np.full(len(src_pos), cfg.scheme.r_c)
    else:
        rng_in = cfg.scheme.mu * src_z
    tree = cKDTree(bs)
    hits = tree.query_ball_point(src_pos, rng_in, return_sorted=False)
    lens = np.fromiter((len(h) for h in hits), dtype=int, count=len(hits))
    targets = np.fromiter((b for h in hits for b in h), dtype=int, count=int(lens.sum()))
    owner = np.repeat(np.arange(len(hits)), lens)
    ok = targets != src_bs[owner]
    theta_r = np.bincount(targets[ok], minlength=n_bs)

    theta = int(min(theta_r[serving], L))
    own = np.asarray(hits[-1], dtype=int)
    own = own[own != serving]
    interferers = np.flatnonzero(np.arange(n_bs) != serving)
    nulled = np.zeros(n_bs, dtype=bool)
    if own.size and L > 0:
        # each requested BS picks min(Theta_r, L) of its requests uniformly
        p_sat = np.minimum(1.0, L / theta_r[own])
        nulled[own] = rng.random(own.size) < p_sat
    return TopologyRealization(
        bs_points=bs, caches=caches, served_user_per_bs=served,
        typical_request=req0, serving_bs=serving, serving_distance=z, theta=theta,
        interferer_radii=d0[interferers], nulled=nulled[interferers], theta_r=theta_r,
        region_radius=region, guard_radius=guard)


def sample_topology(cfg: NetworkConfig, mc_cfg: MonteCarloConfig,
                    rng: np.random.Generator) -> TopologyRealization:
    """Draw one topology, redrawing when the serving BS is missing or beyond the guard."""
    region, guard = mc_cfg.window(cfg)
    for attempt in range(MAX_ATTEMPTS):
        topo = _try_topology(cfg, region, guard, rng, mc_cfg.served_model)
        if topo is not None:
            topo.resamples = attempt
            return topo
    raise RuntimeError(f"no valid topology after {MAX_ATTEMPTS} attempts; region too small")


def _far_field(cfg: NetworkConfig, radius: float) -> float:
    """Mean interference from the PPP outside the simulation disk."""
    return 2 * math.pi * cfg.lambda_bs * radius ** (2 - cfg.alpha) / (cfg.alpha - 2)


def cstp_of_topology(topo: TopologyRealization, tau, cfg: NetworkConfig, n_fading: int,
                     rng: np.random.Generator):
    """Fraction of fading draws with ``SIR >= tau``; vectorised over ``tau``.

    All thresholds share the same fading draws.
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    K = cfg.M - topo.theta
    g0 = rng.standard_gamma(K, size=n_fading)
    u = topo.active_radii ** (-cfg.alpha)
    interference = rng.standard_exponential((n_fading, u.size)) @ u
    interference += _far_field(cfg, topo.region_radius)
    sir = g0 * topo.serving_distance ** (-cfg.alpha) / interference
    out = np.mean(sir[:, None] >= taus[None, :], axis=0)
    return out if np.ndim(tau) else float(out[0])


def exact_cstp(topo: TopologyRealization, tau, cfg: NetworkConfig):
    """CSTP of the topology with fading averaged out exactly.

    ``P[g_0 >= s I]`` with ``s = tau z^alpha`` is the first-column sum of the
    exponential of the lower triangular Toeplitz matrix built from
    ``q_0 = -sum log(1 + s u)`` and ``q_m = (1/m) sum (s u / (1 + s u))^m``.
    """
    taus = np.atleast_1d(np.asarray(tau, dtype=float))
    K = cfg.M - topo.theta
    u = topo.active_radii ** (-cfg.alpha)
    far = _far_field(cfg, topo.region_radius)
    s = taus[:, None] * topo.serving_distance ** cfg.alpha
    su = s * u[None, :]
    q = np.empty((len(taus), K))
    q[:, 0] = -np.sum(np.log1p(su), axis=1) - s[:, 0] * far
    ratio = su / (1 + su)
    for m in range(1, K):
        q[:, m] = np.sum(ratio ** m, axis=1) / m
    if K > 1:
        q[:, 1] += s[:, 0] * far
    out = np.clip(lt_toeplitz_exp_column(q, K).sum(axis=1), 0.0, 1.0)
    return out if np.ndim(tau) else float(out[0])


# ---------------------------------------------------------------------------
# Campaigns
# ---------------------------------------------------------------------------


@dataclass
class CstpSampleSet:
    samples: np.ndarray
    tau: float
    cfg_hash: str
    seed: int
    resamples: int = 0
    metadata: dict = field(default_factory=dict)


@dataclass
class CampaignResult:
    """Per-topology CSTP on a grid of thresholds plus load diagnostics."""

    taus: np.ndarray
    samples: np.ndarray         # (n_topologies, n_tau)
    thetas: np.ndarray          # theta at the typical user's serving BS
    interior_requests: np.ndarray  # (n_topologies, 2): request sum, BS count
    resamples: int
    cfg_hash: str
    seed: int
    mc_config: MonteCarloConfig
    estimator: str = "fading"

    def sample_set(self, k: int) -> CstpSampleSet:
        return CstpSampleSet(self.samples[:, k].copy(), float(self.taus[k]), self.cfg_hash,
                             self.seed, self.resamples, self.metadata())

    @property
    def mean_interior_requests(self) -> float:
        tot = self.interior_requests.sum(axis=0)
        return float(tot[0] / tot[1])

    def theta_histogram(self, L: int) -> np.ndarray:
        return np.bincount(self.thetas, minlength=L + 1)[:L + 1] / len(self.thetas)

    @property
    def resample_rate(self) -> float:
        n = len(self.thetas)
        return self.resamples / (n + self.resamples)

    def metadata(self) -> dict:
        return {"mc_config": asdict(self.mc_config), "estimator": self.estimator,
                "resamples": self.resamples,
                "resample_rate": self.resample_rate}


def _one(index, cfg, mc_cfg, taus, estimator):
    rng = topology_stream(mc_cfg.seed, index)
    topo = sample_topology(cfg, mc_cfg, rng)
    if estimator == "exact":
        vals = exact_cstp(topo, taus, cfg)
    elif estimator == "bound":
        vals = np.array([upper_bound_cstp(topo.active_radii, topo.serving_distance,
                                          topo.theta, t, cfg) for t in taus])
    else:
        vals = cstp_of_topology(topo, taus, cfg, mc_cfg.n_fading, rng)
    inner = topo.interior_mask
    return vals, topo.theta, (topo.theta_r[inner].sum(), inner.sum()), topo.resamples


def run_campaign_grid(cfg: NetworkConfig, mc_cfg: MonteCarloConfig, taus, *,
                      estimator: str = "fading") -> CampaignResult:
    """Simulate ``mc_cfg.n_topologies`` topologies and evaluate every threshold.

    ``estimator`` selects the per-topology value: ``"fading"`` counts SIR
    successes over ``n_fading`` draws, ``"exact"`` averages the fading out
    exactly (:func:`exact_cstp`) and ``"bound"`` evaluates the CSTP upper
    bound on the realised interferers.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    mc_cfg.window(cfg)
    work = range(mc_cfg.n_topologies)
    job = lambda i: _one(i, cfg, mc_cfg, taus, estimator)  # noqa: E731
    if mc_cfg.threads > 1:
        with ThreadPoolExecutor(mc_cfg.threads) as pool:
            results = list(pool.map(job, work))
    else:
        results = [job(i) for i in work]
    return CampaignResult(
        taus=taus,
        samples=np.array([r[0] for r in results]),
        thetas=np.array([r[1] for r in results], dtype=int),
        interior_requests=np.array([r[2] for r in results], dtype=float),
        resamples=int(sum(r[3] for r in results)),
        cfg_hash=config_hash(cfg), seed=mc_cfg.seed, mc_config=mc_cfg, estimator=estimator)


def run_campaign(cfg: NetworkConfig, mc_cfg: MonteCarloConfig, tau: float) -> CstpSampleSet:
    """Per-topology CSTP samples at a single threshold (linear scale)."""
    return run_campaign_grid(cfg, mc_cfg, [tau]).sample_set(0)


@dataclass(frozen=True)
class EmpiricalSummary:
    stp: float
    variance: float
    x: np.ndarray
    ccdf: np.ndarray


def empirical_summaries(samples, x_grid=None) -> EmpiricalSummary:
    """Mean, unbiased variance and empirical CCDF ``P[CSTP > x]``."""
    s = np.asarray(getattr(samples, "samples", samples), dtype=float)
    x = np.linspace(0, 1, 201) if x_grid is None else np.asarray(x_grid, dtype=float)
    var = float(np.var(s, ddof=1)) if s.size > 1 else 0.0
    srt = np.sort(s)
    ccdf = 1.0 - np.searchsorted(srt, x, side="right") / s.size
    return EmpiricalSummary(float(s.mean()), var, x, ccdf)


def write_samples_csv(sample_set: CstpSampleSet, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(["topology_index", "cstp"])
        for i, v in enumerate(sample_set.samples):
            w.writerow([i, f"{v:.9g}"])


def write_sidecar_json(sample_set: CstpSampleSet, cfg: NetworkConfig, path,
                       extra: dict | None = None) -> None:
    doc = {"config": config_to_dict(cfg), "config_hash": sample_set.cfg_hash,
           "seed": sample_set.seed, "tau": sample_set.tau,
           "resamples": sample_set.resamples, **sample_set.metadata}
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
