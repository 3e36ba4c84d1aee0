"""Network model: non-linear energy harvesting, uplink rates and random instances.

Units are SI throughout (watts, seconds, hertz, bits).  Channel gains are
dimensionless linear power gains.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass(frozen=True)
class EhParams:
    """Sigmoid energy-harvesting circuit constants.

    ``a_sat`` is the steepness, ``b_sat`` the turn-on input power (W) and
    ``m_sat`` the saturation output power (W).
    """

    a_sat: float = 150.0
    b_sat: float = 0.014
    m_sat: float = 0.024

    def __post_init__(self):
        for name in ("a_sat", "b_sat", "m_sat"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class SystemParams:
    p_ap: float = 4.0
    p_max: float = 0.01
    bandwidth_w: float = 1e6
    noise_n0: float = 1e-12  # -90 dBm

    def __post_init__(self):
        for name in ("p_ap", "p_max", "bandwidth_w", "noise_n0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")

    @property
    def noise_power(self) -> float:
        """Receiver noise power ``W * N0`` in watts."""
        return self.bandwidth_w * self.noise_n0


@dataclass(frozen=True)
class GeometryConfig:
    source_radius_min: float = 3.0
    source_radius_max: float = 4.0
    relay_radius: float = 2.0
    pl_d0_db: float = 31.67
    d0: float = 1.0
    path_exp: float = 2.0
    shadow_sigma_db: float = 2.0

    def __post_init__(self):
        if not (0 < self.source_radius_min < self.source_radius_max):
            raise ValueError("need 0 < source_radius_min < source_radius_max")
        if not (self.relay_radius > 0 and self.d0 > 0):
            raise ValueError("relay_radius and d0 must be positive")
        if self.shadow_sigma_db < 0:
            raise ValueError("shadow_sigma_db must be non-negative")

    def mean_gain(self, distance):
        """Mean linear power gain at ``distance`` averaged over shadowing."""
        d = np.asarray(distance, dtype=float)
        base_db = -self.pl_d0_db - 10.0 * self.path_exp * np.log10(d / self.d0)
        sigma = self.shadow_sigma_db * math.log(10.0) / 10.0
        return 10.0 ** (base_db / 10.0) * math.exp(0.5 * sigma**2)


def eh_omega(eh: EhParams) -> float:
    """Zero-input offset ``1 / (1 + exp(a b))`` of the sigmoid model."""
    z = eh.a_sat * eh.b_sat
    if z > 700.0:
        return 0.0
    return 1.0 / (1.0 + math.exp(z))


def eh_psi(eh: EhParams, p_rx):
    """Logistic output power ``M / (1 + exp(-a (p_rx - b)))``."""
    z = -eh.a_sat * (np.asarray(p_rx, dtype=float) - eh.b_sat)
    out = eh.m_sat / (1.0 + np.exp(np.minimum(z, 700.0)))
    return float(out) if out.ndim == 0 else out


def harvest_rate(eh: EhParams, p_rx):
    """Harvested power for received RF power ``p_rx``.

    Multiplying by the energy-harvesting duration gives the harvested
    energy.  Zero at ``p_rx = 0`` and approaching ``m_sat`` as ``p_rx``
    grows.
    """
    omega = eh_omega(eh)
    psi = eh_psi(eh, p_rx)
    out = np.maximum((psi - eh.m_sat * omega) / (1.0 - omega), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def rate(p, g, sys: SystemParams):
    """Shannon rate in bit/s for transmit power ``p`` over gain ``g``."""
    snr = np.asarray(p, dtype=float) * np.asarray(g, dtype=float) / sys.noise_power
    out = sys.bandwidth_w * np.log1p(snr) / math.log(2.0)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class NetworkInstance:
    """One channel realization.

    ``dl_gain`` holds the AP-to-device gains for the ``n`` sources followed by
    the ``k`` relays.  ``ul_src[i, 0]`` is the source-to-AP gain and
    ``ul_src[i, j]`` the gain from source ``i`` to relay ``j`` (1-based).
    ``ul_relay[j - 1]`` is the relay-to-AP gain.
    """

    n_sources: int
    k_relays: int
    dl_gain: np.ndarray
    ul_src: np.ndarray
    ul_relay: np.ndarray
    demand: np.ndarray
    eh: tuple = ()
    sys: SystemParams = field(default_factory=SystemParams)

    def __post_init__(self):
        n, k = self.n_sources, self.k_relays
        if n < 1 or k < 0:
            raise ValueError(f"need n >= 1 and k >= 0, got n={n}, k={k}")
        for name, shape in (
            ("dl_gain", (n + k,)),
            ("ul_src", (n, k + 1)),
            ("ul_relay", (k,)),
            ("demand", (n,)),
        ):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(arr > 0):
                raise ValueError(f"{name} must be strictly positive")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        eh = tuple(self.eh) if self.eh else (EhParams(),) * (n + k)
        if len(eh) == 1:
            eh = eh * (n + k)
        if len(eh) != n + k:
            raise ValueError(f"expected {n + k} EhParams, got {len(eh)}")
        object.__setattr__(self, "eh", eh)

    def harvest_rates(self) -> np.ndarray:
        """Harvested power of every device (sources first, then relays)."""
        p_rx = self.dl_gain * self.sys.p_ap
        return np.array([harvest_rate(e, p) for e, p in zip(self.eh, p_rx)])

    def to_dict(self) -> dict:
        shared = all(e == self.eh[0] for e in self.eh)
        eh = asdict(self.eh[0]) if shared else {
            key: [getattr(e, key) for e in self.eh] for key in ("a_sat", "b_sat", "m_sat")
        }
        return {
            "n": self.n_sources,
            "k": self.k_relays,
            "dl_gain": self.dl_gain.tolist(),
            "ul_src": self.ul_src.tolist(),
            "ul_relay": self.ul_relay.tolist(),
            "demand": self.demand.tolist(),
            "sys": asdict(self.sys),
            "eh": eh,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkInstance":
        eh_raw = data.get("eh") or {}
        if eh_raw and isinstance(eh_raw.get("a_sat"), list):
            eh = tuple(
                EhParams(a, b, m)
                for a, b, m in zip(eh_raw["a_sat"], eh_raw["b_sat"], eh_raw["m_sat"])
            )
        else:
            eh = (EhParams(**eh_raw),)
        n, k = int(data["n"]), int(data["k"])
        return cls(
            n_sources=n,
            k_relays=k,
            dl_gain=np.asarray(data["dl_gain"], dtype=float),
            ul_src=np.asarray(data["ul_src"], dtype=float).reshape(n, k + 1),
            ul_relay=np.asarray(data["ul_relay"], dtype=float).reshape(k),
            demand=np.asarray(data["demand"], dtype=float),
            eh=eh,
            sys=SystemParams(**data.get("sys", {})),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "NetworkInstance":
        return cls.from_dict(json.loads(text))


def _positions(n, k, geo, rng):
    r = np.sqrt(rng.uniform(geo.source_radius_min**2, geo.source_radius_max**2, size=n))
    theta = rng.uniform(0.0, 0.5 * math.pi, size=n)
    src = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    # relays evenly spread over the quadrant, centred in equal sectors
    phi = (np.arange(k) + 0.5) * (0.5 * math.pi / max(k, 1))
    rel = geo.relay_radius * np.column_stack([np.cos(phi), np.sin(phi)])
    return src, rel


def _link_gain(distance, geo, rng):
    d = np.maximum(np.asarray(distance, dtype=float), 1e-3)
    z = rng.normal(0.0, geo.shadow_sigma_db, size=d.shape)
    mean_db = -geo.pl_d0_db - 10.0 * geo.path_exp * np.log10(d / geo.d0) + z
    return rng.exponential(10.0 ** (mean_db / 10.0))


def sample_instance(
    n: int,
    k: int,
    geo: GeometryConfig | None = None,
    ehp: EhParams | None = None,
    sys: SystemParams | None = None,
    seed=None,
    demand: float = 50.0,
) -> NetworkInstance:
    """Draw one network realization.

    Sources are uniform (by area) in the quadrant annulus, relays sit on the
    relay circle at evenly spaced angles and the AP is at the origin.  Every
    link gets independent log-normal shadowing and Rayleigh fading, so the
    power gain is exponential with a shadowed path-loss mean.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    geo = geo or GeometryConfig()
    ehp = ehp or EhParams()
    sys = sys or SystemParams()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    src, rel = _positions(n, k, geo, rng)
    d_src_ap = np.linalg.norm(src, axis=1)
    d_rel_ap = np.linalg.norm(rel, axis=1)
    d_src_rel = np.linalg.norm(src[:, None, :] - rel[None, :, :], axis=2)

    dl = _link_gain(np.concatenate([d_src_ap, d_rel_ap]), geo, rng)
    ul_direct = _link_gain(d_src_ap, geo, rng)
    ul_sr = _link_gain(d_src_rel, geo, rng).reshape(n, k)
    ul_relay = _link_gain(d_rel_ap, geo, rng)
    return NetworkInstance(
        n_sources=n,
        k_relays=k,
        dl_gain=dl,
        ul_src=np.column_stack([ul_direct, ul_sr]),
        ul_relay=ul_relay,
        demand=np.full(n, float(demand)),
        eh=(ehp,),
        sys=sys,
    )
