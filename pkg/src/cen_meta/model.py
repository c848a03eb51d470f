"""Network configuration, file popularity and the flexible caching design."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "CacheDesign",
    "ConfigError",
    "Fixed",
    "Flexible",
    "INScheme",
    "NetworkConfig",
    "config_from_dict",
    "config_hash",
    "config_to_dict",
    "default_config",
    "fudc_design",
    "load_config",
    "serving_distance_pdf",
    "zipf_popularity",
]


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class Fixed:
    """Fixed IN scheme: every user requests nulling within ``r_c`` metres."""

    r_c: float

    def __post_init__(self):
        if not (self.r_c >= 0 and math.isfinite(self.r_c)):
            raise ConfigError("r_c", f"must be a finite value >= 0, got {self.r_c}")

    name = "fixed"

    @property
    def r_i(self) -> float:
        return self.r_c


@dataclass(frozen=True)
class Flexible:
    """Flexible IN scheme: IN range is ``mu`` times the user's serving distance."""

    mu: float

    def __post_init__(self):
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ConfigError("mu", f"must be a finite value >= 0, got {self.mu}")

    name = "flexible"

    @property
    def r_i(self) -> float:
        return self.mu


INScheme = Union[Fixed, Flexible]


@dataclass(frozen=True)
class NetworkConfig:
    """Physical and caching parameters of the network.

    ``xi`` is the file diversity gain ``N_c / C``; the analytic formulas use the
    caching probability ``1 / xi`` directly.  ``tx_power_dbm`` is carried along
    but never enters the SIR.
    """

    M: int = 8
    L: int = 2
    alpha: float = 4.0
    lambda_bs: float = 1e-4
    lambda_u: float = 8e-4
    N: int = 100
    C: int = 40
    gamma_z: float = 0.8
    xi: float = 1.75
    scheme: INScheme = Flexible(0.8)
    tx_power_dbm: float = 46.0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ConfigError("M", f"must be an integer >= 1, got {self.M}")
        if int(self.L) != self.L or not 0 <= self.L <= self.M - 1:
            raise ConfigError("L", f"must be an integer in [0, M-1={self.M - 1}], got {self.L}")
        if not self.alpha > 2:
            raise ConfigError("alpha", f"path-loss exponent must exceed 2, got {self.alpha}")
        if not self.lambda_bs > 0:
            raise ConfigError("lambda_bs", f"must be > 0, got {self.lambda_bs}")
        if not self.lambda_u > 0:
            raise ConfigError("lambda_u", f"must be > 0, got {self.lambda_u}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigError("N", f"must be an integer >= 1, got {self.N}")
        if int(self.C) != self.C or not 1 <= self.C <= self.N:
            raise ConfigError("C", f"must be an integer in [1, N], got {self.C}")
        if not self.gamma_z >= 0:
            raise ConfigError("gamma_z", f"must be >= 0, got {self.gamma_z}")
        if not 1 - 1e-12 <= self.xi <= self.N / self.C + 1e-12:
            raise ConfigError("xi", f"must lie in [1, N/C={self.N / self.C:g}], got {self.xi}")
        if not isinstance(self.scheme, (Fixed, Flexible)):
            raise ConfigError("scheme", f"must be Fixed or Flexible, got {self.scheme!r}")

    def replace(self, **changes) -> "NetworkConfig":
        return dataclasses.replace(self, **changes)

    def with_r_i(self, r_i: float) -> "NetworkConfig":
        """Same scheme type with a new IN range parameter (R_c or mu)."""
        if isinstance(self.scheme, Fixed):
            return self.replace(scheme=Fixed(r_i))
        return self.replace(scheme=Flexible(r_i))

    @property
    def popularity(self) -> np.ndarray:
        return zipf_popularity(self.N, self.gamma_z)

    @property
    def cache(self) -> "CacheDesign":
        return fudc_design(self.N, self.C, self.xi, self.popularity)

    @property
    def hit_mass(self) -> float:
        return self.cache.hit_mass


def default_config() -> NetworkConfig:
    """The default parameter set (M=8, L=2, mu=0.8, alpha=4, ...)."""
    return NetworkConfig()


def zipf_popularity(N: int, gamma_z: float) -> np.ndarray:
    """Zipf popularity ``a_n ~ n**-gamma_z`` for ``n = 1..N``, normalised."""
    if N < 1:
        raise ValueError("library size N must be >= 1")
    w = np.arange(1, N + 1, dtype=float) ** (-float(gamma_z))
    return w / w.sum()


@dataclass(frozen=True)
class CacheDesign:
    n_c: int
    t_c: float
    hit_mass: float


def fudc_design(N: int, C: int, xi: float, popularity=None) -> CacheDesign:
    """Flexible uniform distribution caching for file diversity gain ``xi``.

    The ``n_c = round(xi * C)`` most popular files form the cacheable set and
    every BS stores ``C`` of them uniformly at random.  ``popularity`` defaults
    to uniform.
    """
    if not 1 <= C <= N:
        raise ValueError(f"need 1 <= C <= N, got C={C}, N={N}")
    if not 1 - 1e-12 <= xi <= N / C + 1e-12:
        raise ValueError(f"xi must lie in [1, N/C={N / C:g}], got {xi}")
    n_c = int(min(max(round(xi * C), C), N))
    if popularity is None:
        popularity = np.full(N, 1.0 / N)
    hit = float(np.sum(np.asarray(popularity)[:n_c]))
    return CacheDesign(n_c=n_c, t_c=C / n_c, hit_mass=hit)


def serving_distance_pdf(z, lambda_bs: float, xi: float):
    """PDF of the distance to the nearest BS caching a given file."""
    lam = lambda_bs / xi
    z = np.asarray(z, dtype=float)
    val = np.where(z >= 0, 2 * np.pi * lam * z * np.exp(-np.pi * lam * z * z), 0.0)
    return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# Config documents
# ---------------------------------------------------------------------------

_FIELDS = ("M", "L", "alpha", "lambda_bs", "lambda_u", "N", "C", "gamma_z", "xi",
           "scheme", "tx_power_dbm")
_SCHEME_KEYS = ("r_c", "mu")
_SECTIONS = ("optimize", "montecarlo")


def config_to_dict(cfg: NetworkConfig) -> dict:
    d = {f: getattr(cfg, f) for f in _FIELDS if f != "scheme"}
    d["scheme"] = cfg.scheme.name
    if isinstance(cfg.scheme, Fixed):
        d["r_c"] = cfg.scheme.r_c
    else:
        d["mu"] = cfg.scheme.mu
    return d


def config_hash(cfg: NetworkConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def config_from_dict(doc: dict) -> tuple[NetworkConfig, dict]:
    """Build a config from a flat document.

    Keys are the :class:`NetworkConfig` field names; the scheme is given as
    ``"scheme": "fixed"`` with ``r_c`` or ``"scheme": "flexible"`` with ``mu``.
    Missing fields take their defaults.  Nested ``optimize`` / ``montecarlo``
    sections are returned untouched as the second element.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config document must be a JSON object")
    unknown = set(doc) - set(_FIELDS) - set(_SCHEME_KEYS) - set(_SECTIONS)
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown config field")
    kwargs = {}
    for f in _FIELDS:
        if f == "scheme" or f not in doc:
            continue
        v = doc[f]
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f, f"must be a number, got {v!r}")
        kwargs[f] = v
    scheme = doc.get("scheme", "flexible")
    if scheme == "fixed":
        if "mu" in doc:
            raise ConfigError("mu", "not valid for the fixed scheme (use r_c)")
        kwargs["scheme"] = Fixed(float(doc.get("r_c", 52.71)))
    elif scheme == "flexible":
        if "r_c" in doc:
            raise ConfigError("r_c", "not valid for the flexible scheme (use mu)")
        kwargs["scheme"] = Flexible(float(doc.get("mu", 0.8)))
    else:
        raise ConfigError("scheme", f"must be 'fixed' or 'flexible', got {scheme!r}")
    cfg = NetworkConfig(**kwargs)
    sections = {k: doc[k] for k in _SECTIONS if k in doc}
    return cfg, sections


def load_config(path) -> tuple[NetworkConfig, dict]:
    """Read and validate a JSON config file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)
