"""Synthetic station demand from four data-generating processes.

Every simulator consumes a ``SimConfig`` and returns ``n_steps`` values after
discarding ``burn_in`` warm-up steps. Noise is drawn up front from a
``numpy.random.Generator`` so identical (spec, config) pairs give
bit-identical output.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError, NumericalError
from .panel import PanelSeries

DEFAULT_START = pd.Timestamp("2023-01-01 00:00")


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.float64)).copy()


@dataclass(frozen=True, eq=False)
class Sarima:
    """Additive seasonal ARMA(p, q) x (P, Q)_m with Gaussian innovations (d = D = 0)."""

    mu: float
    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    Theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m: int = 24
    sigma2: float = 1.0

    kind = "sarima"

    def __post_init__(self):
        for name in ("phi", "theta", "Phi", "Theta"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if self.sigma2 < 0:
            raise ConfigError("sarima: sigma2 must be >= 0")
        if self.m < 1:
            raise ConfigError("sarima: seasonal period m must be >= 1")


@dataclass(frozen=True, eq=False)
class ArHeavyTail:
    """AR over an arbitrary lag set with unit-variance Student-t innovations."""

    mu: float
    lags: tuple[int, ...]
    phi: np.ndarray
    sigma: float
    nu: float

    kind = "ar_t"

    def __post_init__(self):
        object.__setattr__(self, "lags", tuple(int(l) for l in self.lags))
        object.__setattr__(self, "phi", _vec(self.phi))
        if len(self.lags) != len(self.phi):
            raise ConfigError("ar_t: one coefficient per lag required")
        if any(l < 1 for l in self.lags):
            raise ConfigError("ar_t: lags must be >= 1")
        if self.nu <= 2:
            raise ConfigError("ar_t: nu must exceed 2 for finite variance")
        if self.sigma < 0:
            raise ConfigError("ar_t: sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class MlpAr:
    """Two tanh hidden layers over the last ``p`` values, linear output."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    sigma: float

    kind = "mlp_ar"

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=np.float64))
        W3 = self.W3.reshape(1, -1) if self.W3.ndim == 1 else self.W3
        object.__setattr__(self, "W3", W3)
        object.__setattr__(self, "b3", self.b3.reshape(-1))
        h1, p = self.W1.shape
        h2 = self.W2.shape[0]
        if (
            self.b1.shape != (h1,)
            or self.W2.shape != (h2, h1)
            or self.b2.shape != (h2,)
            or self.W3.shape != (1, h2)
            or self.b3.shape != (1,)
        ):
            raise ConfigError(
                f"mlp_ar: layer shapes do not chain p={p} -> {h1} -> {h2} -> 1"
            )
        if self.sigma < 0:
            raise ConfigError("mlp_ar: sigma must be >= 0")

    @property
    def p(self) -> int:
        return self.W1.shape[1]

    @classmethod
    def random(cls, p=24, hidden=(100, 50), sigma=0.3, gain=0.5, seed=0, out_bias=0.0):
        """Random weights with layer gain ``gain / sqrt(fan_in)``.

        Stand-in for a fitted network when no weights file is available.
        """
        rng = np.random.default_rng(seed)
        h1, h2 = hidden
        return cls(
            W1=rng.normal(0, gain / np.sqrt(p), (h1, p)),
            b1=rng.normal(0, 0.1, h1),
            W2=rng.normal(0, gain / np.sqrt(h1), (h2, h1)),
            b2=rng.normal(0, 0.1, h2),
            W3=rng.normal(0, 1.0 / np.sqrt(h2), (1, h2)),
            b3=np.array([out_bias]),
            sigma=sigma,
        )


@dataclass(frozen=True, eq=False)
class ArGarch:
    """AR(r) mean with GARCH(p', q) conditional variance, Gaussian shocks."""

    mu: float
    phi: np.ndarray
    omega: float
    alpha: np.ndarray
    beta: np.ndarray

    kind = "ar_garch"

    def __post_init__(self):
        for name in ("phi", "alpha", "beta"):
            object.__setattr__(self, name, _vec(getattr(self, name)))
        if self.omega <= 0:
            raise ConfigError("ar_garch: omega must be > 0")
        if np.any(self.alpha < 0) or np.any(self.beta < 0):
            raise ConfigError("ar_garch: alpha and beta must be non-negative")
        if self.alpha.sum() + self.beta.sum() >= 1:
            raise ConfigError("ar_garch: sum(alpha) + sum(beta) must be < 1")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha.sum() - self.beta.sum())


DgpSpec = Union[Sarima, ArHeavyTail, MlpAr, ArGarch]


@dataclass(frozen=True)
class SimConfig:
    n_steps: int
    burn_in: int = 500
    seed: int = 0
    init_value: float = 0.0

    def __post_init__(self):
        if self.n_steps < 1:
            raise ConfigError("n_steps must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")


def _check_finite(value, t, burn_in, name):
    if not np.isfinite(value):
        raise NumericalError(f"{name}: non-finite value at step {t - burn_in} (divergent parameters)")


def simulate_sarima(spec: Sarima, cfg: SimConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.burn_in + cfg.n_steps
    eps = rng.standard_normal(n) * np.sqrt(spec.sigma2)
    p, q, P, Q, m = len(spec.phi), len(spec.theta), len(spec.Phi), len(spec.Theta), spec.m
    hy = max(p, P * m, 1)
    he = max(q, Q * m, 1)
    # reversed-lag weights over the history buffers: index k <-> lag k + 1
    wy = np.zeros(hy)
    wy[:p] += spec.phi
    for I in range(1, P + 1):
        wy[I * m - 1] += spec.Phi[I - 1]
    we = np.zeros(he)
    we[:q] += spec.theta
    for J in range(1, Q + 1):
        we[J * m - 1] += spec.Theta[J - 1]

    y = np.empty(hy + n)
    e = np.zeros(he + n)
    y[:hy] = cfg.init_value
    e[he:] = eps
    for t in range(n):
        ty, te = hy + t, he + t
        val = spec.mu + wy @ y[ty - 1 :: -1][:hy] + we @ e[te - 1 :: -1][:he] + e[te]
        _check_finite(val, t, cfg.burn_in, "sarima")
        y[ty] = val
    return y[hy + cfg.burn_in :].copy()


def standardized_t(rng: np.random.Generator, nu: float, size) -> np.ndarray:
    """Student-t(nu) draws rescaled to unit variance."""
    return rng.standard_t(nu, size) * np.sqrt((nu - 2.0) / nu)


def simulate_ar_t(spec: ArHeavyTail, cfg: SimConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.burn_in + cfg.n_steps
    shocks = spec.sigma * standardized_t(rng, spec.nu, n)
    h = max(spec.lags, default=1)
    w = np.zeros(h)
    for lag, c in zip(spec.lags, spec.phi):
        w[lag - 1] += c
    y = np.empty(h + n)
    y[:h] = cfg.init_value
    for t in range(n):
        val = spec.mu + w @ y[h + t - 1 :: -1][:h] + shocks[t]
        _check_finite(val, t, cfg.burn_in, "ar_t")
        y[h + t] = val
    return y[h + cfg.burn_in :].copy()


def simulate_mlp_ar(spec: MlpAr, cfg: SimConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.burn_in + cfg.n_steps
    noise = spec.sigma * rng.standard_normal(n)
    p = spec.p
    y = np.empty(p + n)
    y[:p] = cfg.init_value
    w3 = spec.W3[0]
    b3 = spec.b3[0]
    for t in range(n):
        x = y[p + t - 1 :: -1][:p]
        h1 = np.tanh(spec.W1 @ x + spec.b1)
        h2 = np.tanh(spec.W2 @ h1 + spec.b2)
        val = w3 @ h2 + b3 + noise[t]
        _check_finite(val, t, cfg.burn_in, "mlp_ar")
        y[p + t] = val
    return y[p + cfg.burn_in :].copy()


def simulate_ar_garch(spec: ArGarch, cfg: SimConfig, return_variance: bool = False):
    rng = np.random.default_rng(cfg.seed)
    n = cfg.burn_in + cfg.n_steps
    z = rng.standard_normal(n)
    r, pa, qb = len(spec.phi), len(spec.alpha), len(spec.beta)
    hy, he, hs = max(r, 1), max(pa, 1), max(qb, 1)
    y = np.empty(hy + n)
    y[:hy] = cfg.init_value
    e2 = np.zeros(he + n)
    s2 = np.empty(hs + n)
    s2[:hs] = spec.unconditional_variance
    phi, alpha, beta = spec.phi, spec.alpha, spec.beta
    for t in range(n):
        var = spec.omega
        if pa:
            var += alpha @ e2[he + t - 1 :: -1][:pa]
        if qb:
            var += beta @ s2[hs + t - 1 :: -1][:qb]
        if not var > 0:
            raise NumericalError(f"ar_garch: non-positive conditional variance at step {t - cfg.burn_in}")
        eps = np.sqrt(var) * z[t]
        mean = spec.mu + (phi @ y[hy + t - 1 :: -1][:r] if r else 0.0)
        val = mean + eps
        _check_finite(val, t, cfg.burn_in, "ar_garch")
        y[hy + t] = val
        e2[he + t] = eps * eps
        s2[hs + t] = var
    out = y[hy + cfg.burn_in :].copy()
    if return_variance:
        return out, s2[hs + cfg.burn_in :].copy()
    return out


_SIMULATORS = {
    "sarima": simulate_sarima,
    "ar_t": simulate_ar_t,
    "mlp_ar": simulate_mlp_ar,
    "ar_garch": simulate_ar_garch,
}


def simulate(spec: DgpSpec, cfg: SimConfig) -> np.ndarray:
    return _SIMULATORS[spec.kind](spec, cfg)


def station_seed(seed: int, ordinal: int) -> int:
    """64-bit sub-seed for station ``ordinal`` (SeedSequence mixing of the pair)."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(ordinal)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def simulate_panel(
    spec: DgpSpec | Sequence[DgpSpec],
    stations: Sequence[tuple[str, float]],
    n_steps: int,
    seed: int,
    burn_in: int = 500,
    start=DEFAULT_START,
) -> PanelSeries:
    """One trajectory per station under a shared spec (or one spec per station).

    Station ``i`` uses sub-seed ``station_seed(seed, i)`` and starts its lag
    buffers at its own initial value.
    """
    if isinstance(spec, (list, tuple)):
        specs = list(spec)
        if len(specs) != len(stations):
            raise ConfigError("need one spec per station")
    else:
        specs = [spec] * len(stations)
    rows = []
    for i, ((sid, init), sp) in enumerate(zip(stations, specs)):
        cfg = SimConfig(n_steps=n_steps, burn_in=burn_in, seed=station_seed(seed, i), init_value=init)
        rows.append(simulate(sp, cfg))
    return PanelSeries(tuple(s for s, _ in stations), pd.Timestamp(start), np.vstack(rows))


class SingularDesignError(DataError):
    pass


def fit_ar_ols(series, lags: Sequence[int]) -> tuple[float, np.ndarray, float]:
    """Least-squares AR fit over ``lags``; returns (mu, phi, residual sd)."""
    y = np.asarray(series, dtype=np.float64)
    lags = [int(l) for l in lags]
    L = max(lags)
    k = len(lags) + 1
    if len(y) <= L + k:
        raise DataError(f"series of length {len(y)} too short for lags up to {L}")
    target = y[L:]
    X = np.column_stack([np.ones(len(target))] + [y[L - l : len(y) - l] for l in lags])
    coef, _, rank, _ = np.linalg.lstsq(X, target, rcond=None)
    if rank < k:
        raise SingularDesignError("singular AR design (series lacks variation)")
    resid = target - X @ coef
    sigma = float(np.sqrt(resid @ resid / (len(target) - k)))
    return float(coef[0]), coef[1:], sigma


# -- serialization ---------------------------------------------------------

def write_mlp_weights(spec: MlpAr, path) -> None:
    """Flat CSV: per layer a header ``name,rows,cols`` then ``rows`` value lines."""
    lines = []
    for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
        a = np.atleast_2d(getattr(spec, name))
        if name.startswith("b"):
            a = a.reshape(1, -1)
        lines.append(f"{name},{a.shape[0]},{a.shape[1]}")
        lines.extend(",".join(repr(float(v)) for v in row) for row in a)
    Path(path).write_text("\n".join(lines) + "\n")


def read_mlp_weights(path) -> dict:
    rows = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    out, i = {}, 0
    try:
        while i < len(rows):
            name, r, c = rows[i].split(",")
            r, c = int(r), int(c)
            block = np.array([[float(v) for v in rows[i + 1 + j].split(",")] for j in range(r)])
            if block.shape != (r, c):
                raise ConfigError(f"{path}: layer {name} is not {r}x{c}")
            out[name] = block.ravel() if name.startswith("b") else block
            i += r + 1
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed weights file ({exc})") from exc
    return out


def spec_to_dict(spec: DgpSpec) -> dict:
    d = {"kind": spec.kind}
    for k, v in asdict(spec).items():
        d[k] = v.tolist() if isinstance(v, np.ndarray) else (list(v) if isinstance(v, tuple) else v)
    return d


def spec_from_dict(d: dict, base_dir=None) -> DgpSpec:
    """Build a spec from its config mapping.

    Keys per kind:

    - ``sarima``: mu, phi, theta, Phi, Theta, m, sigma2
    - ``ar_t``: mu, lags, phi, sigma, nu
    - ``mlp_ar``: weights (path to weights CSV) and sigma; or W1..b3 inline
    - ``ar_garch``: mu, phi, omega, alpha, beta
    """
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "sarima":
            return Sarima(**d)
        if kind == "ar_t":
            return ArHeavyTail(**d)
        if kind == "ar_garch":
            return ArGarch(**d)
        if kind == "mlp_ar":
            if "weights" in d:
                wpath = Path(d.pop("weights"))
                if base_dir is not None and not wpath.is_absolute():
                    wpath = Path(base_dir) / wpath
                d.update(read_mlp_weights(wpath))
            return MlpAr(**d)
    except TypeError as exc:
        raise ConfigError(f"bad {kind} spec: {exc}") from exc
    raise ConfigError(f"unknown dgp kind {kind!r}")


def load_spec(path) -> DgpSpec:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read dgp config {path}: {exc}") from exc
    return spec_from_dict(d, base_dir=Path(path).parent)


def reference_specs(seed: int = 7) -> dict[str, DgpSpec]:
    """Desk-scale parameter sets with the reference orders.

    SARIMA(3,0,3)x(1,0,1)_24, AR(4) Student-t, MLP-AR(24) with (100, 50)
    hidden units, AR(5)+GARCH(1,6).
    """
    return {
        "sarima": Sarima(
            mu=0.4,
            phi=[0.45, 0.1, 0.05],
            theta=[0.3, 0.15, 0.05],
            Phi=[0.3],
            Theta=[0.2],
            m=24,
            sigma2=0.25,
        ),
        "ar_t": ArHeavyTail(mu=0.5, lags=(1, 2, 3, 4), phi=[0.45, 0.15, 0.1, 0.05], sigma=0.5, nu=5.0),
        "mlp_ar": MlpAr.random(p=24, hidden=(100, 50), sigma=0.3, gain=1.5, seed=seed, out_bias=1.0),
        "ar_garch": ArGarch(
            mu=0.5,
            phi=[0.4, 0.15, 0.1, 0.05, 0.05],
            omega=0.05,
            alpha=[0.1],
            beta=[0.3, 0.2, 0.1, 0.05, 0.05, 0.05],
        ),
    }


@dataclass(frozen=True)
class ArPrior:
    """Independent per-station AR(1) draws: phi ~ U, sigma ~ U, mean level ~ log-uniform."""

    phi: tuple[float, float] = (0.0, 0.9)
    sigma: tuple[float, float] = (0.3, 1.5)
    level: tuple[float, float] = (0.2, 5.0)

    def __post_init__(self):
        lo, hi = self.phi
        if not -1 < lo <= hi < 1:
            raise ConfigError("phi prior must lie inside (-1, 1)")
        if not 0 < self.sigma[0] <= self.sigma[1]:
            raise ConfigError("sigma prior must be positive and ordered")
        if not 0 < self.level[0] <= self.level[1]:
            raise ConfigError("level prior must be positive and ordered")


def heterogeneous_ar_specs(n: int, seed: int, prior: ArPrior = ArPrior()) -> list[Sarima]:
    """Gaussian AR(1) specs with station-specific coefficients drawn from ``prior``."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x4845]))
    phi = rng.uniform(*prior.phi, size=n)
    sigma = rng.uniform(*prior.sigma, size=n)
    level = np.exp(rng.uniform(np.log(prior.level[0]), np.log(prior.level[1]), size=n))
    return [Sarima(mu=lv * (1 - ph), phi=[ph], sigma2=sg**2) for ph, sg, lv in zip(phi, sigma, level)]


def as_counts(panel: PanelSeries) -> PanelSeries:
    """Demand-style observation: negative values clipped to 0, then rounded to integers."""
    return PanelSeries(
        panel.stations, panel.start, np.round(np.clip(panel.values, 0.0, None)), panel.static_covariates
    )


def heterogeneous_demand_panel(
    n_stations: int, n_steps: int, seed: int, prior: ArPrior = ArPrior(), init_value: float = 1.0
) -> PanelSeries:
    """Count-valued panel whose stations follow different AR(1) laws."""
    specs = heterogeneous_ar_specs(n_stations, seed, prior)
    width = len(str(n_stations - 1))
    stations = [(f"s{i:0{width}d}", init_value) for i in range(n_stations)]
    return as_counts(simulate_panel(specs, stations, n_steps, seed))
