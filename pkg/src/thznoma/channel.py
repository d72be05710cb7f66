"""Legacy THz network: beamsteering codebook, zero-forcing digital stage and
the scalar effective gains consumed by every resource-allocation solver.

All rates are in bits per channel use (log base 2); all powers in watts.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)

C_LIGHT = 299_792_458.0
ANGLE_CLAMP = 1e-6
GAIN_FLOOR = 1e-300


class SingularChannelError(ValueError):
    """Zero-forcing channel is numerically singular."""


class DegenerateChannelError(ValueError):
    """An effective gain underflowed, so c_k or b_jk cannot be formed."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts) + 30.0


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters. Defaults follow the simulation setup of the
    reference scenario (30 dBm per primary beam, -90 dBm noise, 300 GHz)."""

    N: int = 10
    K: int = 4
    M: int = 4
    N_Q: int = 10
    f_c: float = 300e9
    d_spacing: float = C_LIGHT / (2 * 300e9)
    zeta: float = 5e-3
    alpha_PL: float = 2.0
    sigma2: float = 1e-12
    rho_P: float = 1.0
    P_max: float = 1.0
    R_bar: float | tuple[float, ...] = 1.0
    L_P: float = 10.0
    r_S: float = 10.0
    xi: float = 1e8
    seed: int = 0
    fading: str = "los"

    def __post_init__(self):
        if isinstance(self.R_bar, (list, np.ndarray)):
            object.__setattr__(self, "R_bar", tuple(float(r) for r in self.R_bar))
        self.validate()

    def validate(self) -> None:
        if self.N < 1 or self.K < 1 or self.M < 1 or self.N_Q < 1:
            raise ValueError("N, K, M and N_Q must all be >= 1")
        if self.K > self.N:
            raise ValueError(f"K={self.K} exceeds antenna count N={self.N}")
        for name in ("f_c", "d_spacing", "sigma2", "rho_P", "L_P", "r_S"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.P_max < 0 or self.zeta < 0 or self.alpha_PL < 0:
            raise ValueError("P_max, zeta and alpha_PL must be nonnegative")
        if self.xi < 1:
            raise ValueError("xi must be >= 1")
        if isinstance(self.R_bar, tuple) and len(self.R_bar) != self.K:
            raise ValueError("R_bar vector must have length K")
        if np.any(self.rbar_vector() < 0):
            raise ValueError("R_bar entries must be >= 0")
        if self.fading not in ("los", "rayleigh"):
            raise ValueError(f"unknown fading model {self.fading!r}")

    def rbar_vector(self) -> np.ndarray:
        if isinstance(self.R_bar, tuple):
            return np.asarray(self.R_bar, dtype=float)
        return np.full(self.K, float(self.R_bar))

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        if isinstance(self.R_bar, tuple):
            d["R_bar"] = list(self.R_bar)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "SystemConfig":
        """Build from a mapping. Power fields may be given in dBm via the
        ``_dBm`` suffix (``rho_P_dBm``, ``sigma2_dBm``, ``P_max_dBm``)."""
        data = dict(data)
        for name in ("rho_P", "sigma2", "P_max"):
            key = f"{name}_dBm"
            if key in data:
                data[name] = dbm_to_watts(float(data.pop(key)))
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SystemConfig fields: {sorted(unknown)}")
        if isinstance(data.get("R_bar"), list):
            data["R_bar"] = tuple(data["R_bar"])
        return cls(**data)


@dataclass
class Deployment:
    theta_P: np.ndarray
    r_P: np.ndarray
    theta_S: np.ndarray
    r_S_dist: np.ndarray
    a_P: np.ndarray
    a_S: np.ndarray


@dataclass
class BeamSet:
    analog_idx: np.ndarray
    analog: np.ndarray  # N x K, columns are codewords
    digital: np.ndarray  # K x K
    composite: np.ndarray  # N x K, unit-norm columns
    pinv_fallback: bool = False


@dataclass
class EffectiveGains:
    """Scalar gains and feasibility constants of one network realisation.

    ``hP[k, i]`` is the power gain of beam i at primary k, ``hS[j, k]`` the
    gain of beam k at secondary j.
    """

    hP: np.ndarray
    hS: np.ndarray
    c: np.ndarray
    b: np.ndarray
    t: np.ndarray
    rho_P: float
    sigma2: float
    R_bar: np.ndarray
    P_max: float
    xi: float = 1e8

    @property
    def M(self) -> int:
        return self.hS.shape[0]

    @property
    def K(self) -> int:
        return self.hP.shape[0]

    def to_dict(self) -> dict:
        return {
            "hP": self.hP.tolist(), "hS": self.hS.tolist(), "c": self.c.tolist(),
            "b": self.b.tolist(), "t": self.t.tolist(), "rho_P": self.rho_P,
            "sigma2": self.sigma2, "R_bar": self.R_bar.tolist(),
            "P_max": self.P_max, "xi": self.xi,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EffectiveGains":
        arr = {k: np.asarray(d[k], dtype=float) for k in ("hP", "hS", "c", "b", "t", "R_bar")}
        return cls(rho_P=float(d["rho_P"]), sigma2=float(d["sigma2"]),
                   P_max=float(d["P_max"]), xi=float(d.get("xi", 1e8)), **arr)


def steering_vector(theta: float, cfg: SystemConfig) -> np.ndarray:
    n = np.arange(cfg.N)
    phase = 2 * np.pi * n * cfg.f_c * cfg.d_spacing * np.sin(theta) / C_LIGHT
    return np.exp(-1j * phase)


def build_codebook(cfg: SystemConfig) -> np.ndarray:
    """Return an N x N_Q matrix whose column q is a(2*pi*q/N_Q)/sqrt(N)."""
    angles = 2 * np.pi * np.arange(cfg.N_Q) / cfg.N_Q
    return np.stack([steering_vector(a, cfg) for a in angles], axis=1) / math.sqrt(cfg.N)


def select_analog_beams(theta_P: Sequence[float], codebook: np.ndarray,
                        cfg: SystemConfig) -> np.ndarray:
    """Index of the codeword with the largest correlation for each primary.

    Near-ties (within 1e-12 relative) resolve to the lowest index, which keeps
    duplicate codewords (sin(x) = sin(pi - x)) deterministic.
    """
    if codebook.shape[1] == 0:
        raise ValueError("empty codebook")
    idx = np.empty(len(theta_P), dtype=int)
    for k, theta in enumerate(theta_P):
        corr = np.abs(steering_vector(theta, cfg).conj() @ codebook)
        idx[k] = int(np.flatnonzero(corr >= corr.max() * (1 - 1e-12))[0])
    return idx


def zf_digital(effective_channel: np.ndarray, analog: np.ndarray,
               allow_pinv: bool = False) -> tuple[np.ndarray, np.ndarray, bool]:
    """Zero-forcing digital stage ``P = G^-1`` with unit-norm composite beams.

    Returns ``(P, composite, used_pinv)``. With ``allow_pinv`` a singular G
    falls back to the Moore-Penrose pseudo-inverse instead of raising.
    """
    G = np.asarray(effective_channel)
    sv = np.linalg.svd(G, compute_uv=False)
    used_pinv = False
    if sv[-1] < 1e-10 * sv[0]:
        if not allow_pinv:
            raise SingularChannelError(
                f"ZF channel singular: sigma_min/sigma_max = {sv[-1] / sv[0]:.3e}")
        P = np.linalg.pinv(G, rcond=1e-10)
        used_pinv = True
    else:
        P = np.linalg.inv(G)
    composite = analog @ P
    norms = np.linalg.norm(composite, axis=0)
    if np.any(norms == 0):
        raise SingularChannelError("zero composite beam")
    return P, composite / norms, used_pinv


def build_beams(theta_P: Sequence[float], cfg: SystemConfig,
                allow_pinv: bool = True) -> BeamSet:
    codebook = build_codebook(cfg)
    idx = select_analog_beams(theta_P, codebook, cfg)
    analog = codebook[:, idx]
    A = np.stack([steering_vector(th, cfg) for th in theta_P], axis=1)
    G = A.conj().T @ analog
    P, composite, used_pinv = zf_digital(G, analog, allow_pinv=allow_pinv)
    if used_pinv:
        logger.info("ZF channel singular for analog beams %s; using pseudo-inverse", idx.tolist())
    return BeamSet(idx, analog, P, composite, used_pinv)


def path_loss(r, cfg: SystemConfig):
    r = np.asarray(r, dtype=float)
    return (C_LIGHT / (4 * np.pi * cfg.f_c)) ** (-2) * np.exp(cfg.zeta * r) * (r ** cfg.alpha_PL + 1)


def _gain_matrix(thetas, dists, fading, beams: BeamSet, cfg: SystemConfig) -> np.ndarray:
    rows = []
    for th, r, a in zip(thetas, dists, fading):
        corr = np.abs(steering_vector(th, cfg).conj() @ beams.composite) ** 2
        rows.append(abs(a) ** 2 / path_loss(r, cfg) * corr)
    return np.array(rows)


def compute_effective(cfg: SystemConfig, dep: Deployment, beams: BeamSet) -> EffectiveGains:
    hP = _gain_matrix(dep.theta_P, dep.r_P, dep.a_P, beams, cfg)
    hS = _gain_matrix(dep.theta_S, dep.r_S_dist, dep.a_S, beams, cfg)
    diagP = np.diag(hP)
    if np.any(diagP < GAIN_FLOOR) or np.any(hS < GAIN_FLOOR):
        raise DegenerateChannelError("effective gain below 1e-300")
    rho, s2 = cfg.rho_P, cfg.sigma2
    with np.errstate(divide="ignore"):
        qos = rho / (2.0 ** cfg.rbar_vector() - 1.0)  # inf when R_bar = 0
    cross_P = (hP.sum(axis=1) - diagP) * rho
    c = cross_P / diagP - qos + s2 / diagP
    cross_S = (hS.sum(axis=1, keepdims=True) - hS) * rho  # M x K, sum over i != k
    b = cross_S / hS - qos[None, :] + s2 / hS
    t = cross_S + s2
    return EffectiveGains(hP=hP, hS=hS, c=c, b=b, t=t, rho_P=rho, sigma2=s2,
                          R_bar=cfg.rbar_vector(), P_max=cfg.P_max, xi=cfg.xi)


def primary_angles(K: int) -> np.ndarray:
    k = np.arange(1, K + 1)
    theta = k * np.pi / K - np.pi / 2
    return np.clip(theta, -np.pi / 2 + ANGLE_CLAMP, np.pi / 2 - ANGLE_CLAMP)


def _square_distance(rng: np.random.Generator, edge: float, n: int) -> np.ndarray:
    x = rng.uniform(0.0, edge, n)
    y = rng.uniform(-edge / 2, edge / 2, n)
    return np.hypot(x, y)


def sample_deployment(cfg: SystemConfig, rng: np.random.Generator) -> Deployment:
    r_P = _square_distance(rng, cfg.L_P, cfg.K)
    r_S = _square_distance(rng, cfg.r_S, cfg.M)
    theta_S = rng.uniform(-np.pi / 2, np.pi / 2, cfg.M)
    if cfg.fading == "rayleigh":
        a_P = (rng.standard_normal(cfg.K) + 1j * rng.standard_normal(cfg.K)) / math.sqrt(2)
        a_S = (rng.standard_normal(cfg.M) + 1j * rng.standard_normal(cfg.M)) / math.sqrt(2)
    else:
        a_P = np.ones(cfg.K, dtype=complex)
        a_S = np.ones(cfg.M, dtype=complex)
    return Deployment(primary_angles(cfg.K), r_P, theta_S, r_S, a_P, a_S)


@dataclass
class Network:
    cfg: SystemConfig
    deployment: Deployment
    beams: BeamSet
    gains: EffectiveGains
    resamples: int = 0
    notes: list[str] = field(default_factory=list)


def sample_network(cfg: SystemConfig, rng: np.random.Generator,
                   max_resamples: int = 100) -> Network:
    """Draw a deployment and reduce it to effective gains.

    Degenerate draws are resampled from the same stream; the number of
    resamples is recorded on the returned network.
    """
    beams = build_beams(primary_angles(cfg.K), cfg)
    notes = ["pinv-zf"] if beams.pinv_fallback else []
    for attempt in range(max_resamples + 1):
        dep = sample_deployment(cfg, rng)
        try:
            gains = compute_effective(cfg, dep, beams)
        except DegenerateChannelError:
            logger.info("degenerate channel draw, resampling (attempt %d)", attempt + 1)
            continue
        return Network(cfg, dep, beams, gains, attempt, notes)
    raise DegenerateChannelError(f"no usable deployment after {max_resamples} resamples")
