"""Optimal EH/IT scheduling and power control for a fixed relay selection.

Once every source's destination is fixed, each selected relay becomes one
more transmitter whose demand is the sum of the demands routed through it.
The schedule length ``tau0 + sum(tau_i)`` is convex in the harvesting time
``tau0``; for fixed ``tau0`` each transmitter's minimum IT time has a
closed-form regime (full power) or is the root of a scalar equation.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import EhParams, NetworkInstance, SystemParams, harvest_rate, rate

LN2 = math.log(2.0)
_INV_E = math.exp(-1.0)


class InfeasibleError(ValueError):
    """The demand cannot be met with the given harvesting time."""


# --------------------------------------------------------------------------
# Lambert W, principal branch
# --------------------------------------------------------------------------


def lambert_w0(x: float) -> float:
    """Principal branch of the Lambert W function for real ``x >= -1/e``.

    Halley iteration started from the branch-point series near ``-1/e``,
    from a Pade-like guess on moderate arguments and from the asymptotic
    ``log x - log log x`` for large ones.
    """
    x = float(x)
    if math.isnan(x):
        return math.nan
    if x < -_INV_E:
        # tolerate round-off in arguments computed as (g - 1) / e
        if x < -_INV_E * (1.0 + 1e-15):
            raise ValueError(f"lambert_w0 is undefined for x < -1/e, got {x!r}")
        x = -_INV_E
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    q = math.e * x + 1.0  # distance from the branch point, scaled
    if q < 0.3:
        p = math.sqrt(2.0 * max(q, 0.0))
        w = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p**3 - 43.0 / 540.0 * p**4
        if p < 1e-7:
            return w
    elif x < 3.0:
        w = x * (1.0 + 4.0 / 3.0 * x) / (1.0 + x * (7.0 / 3.0 + 5.0 / 6.0 * x))
    else:
        lx = math.log(x)
        w = lx - math.log(lx)

    for _ in range(50):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1)
        dw = f / denom
        w -= dw
        if abs(dw) <= 4e-16 * (1.0 + abs(w)):
            break
    return w


# --------------------------------------------------------------------------
# Effective sources and schedules
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EffectiveSource:
    """A transmitter of the reduced problem (a source or a selected relay).

    ``gain`` is the uplink gain to its destination and ``p_rx`` the RF
    power it receives while harvesting.  ``label`` records where it came
    from: ``("source", i, j)`` or ``("relay", j)``.
    """

    demand: float
    gain: float
    eh: EhParams = field(default_factory=EhParams)
    p_rx: float = 0.0
    label: tuple = ()

    def __post_init__(self):
        if not self.demand > 0:
            raise ValueError(f"demand must be positive, got {self.demand}")
        if not self.gain > 0:
            raise ValueError(f"gain must be positive, got {self.gain}")

    @property
    def harvest(self) -> float:
        return harvest_rate(self.eh, self.p_rx)

    def gamma(self, sys: SystemParams) -> float:
        """Effective SNR per unit harvesting time, ``g * harvest / (W N0)``."""
        return self.gain * self.harvest / sys.noise_power

    def phi(self) -> float:
        return self.gain * self.harvest


@dataclass
class Schedule:
    tau0: float
    it_time: np.ndarray
    power: np.ndarray
    total: float
    labels: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tau0": self.tau0,
            "it_time": [float(t) for t in self.it_time],
            "power": [float(p) for p in self.power],
            "total": self.total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


class _Link:
    """Per-transmitter constants used inside the bisection (plain floats)."""

    __slots__ = ("c", "gamma", "harvest", "gain", "x_bar", "tau_bar", "thr", "limit")

    def __init__(self, src: EffectiveSource, sys: SystemParams):
        self.c = src.demand / sys.bandwidth_w
        self.gain = src.gain
        self.harvest = src.harvest
        self.gamma = src.gain * self.harvest / sys.noise_power
        self.x_bar = math.log1p(sys.p_max * src.gain / sys.noise_power)
        self.tau_bar = self.c * LN2 / self.x_bar
        if self.harvest > 0:
            self.thr = sys.p_max * self.tau_bar / self.harvest
            self.limit = self.c * LN2 / self.gamma
        else:
            self.thr = math.inf
            self.limit = math.inf


def it_time_pmax(src: EffectiveSource, sys: SystemParams) -> float:
    """IT time when transmitting at full power ``p_max``."""
    return src.demand / rate(sys.p_max, src.gain, sys)


def tau0_threshold(src: EffectiveSource, sys: SystemParams) -> float:
    """Harvesting time whose energy exactly funds a full-power transmission."""
    hr = src.harvest
    if hr <= 0:
        return math.inf
    return sys.p_max * it_time_pmax(src, sys) / hr


def _expm1_over_x(x: float) -> float:
    return math.expm1(x) / x if x > 1e-8 else 1.0 + 0.5 * x


def _dlog_expm1_over_x(x: float) -> float:
    """Derivative of ``log(expm1(x) / x)``; ``1/2 + x/12 - ...`` near zero."""
    if x < 1e-3:
        return 0.5 + x / 12.0 - x**3 / 720.0
    return 1.0 / (-math.expm1(-x)) - 1.0 / x


def _solve_x(beta: float, x_hi: float) -> float:
    """Solve ``expm1(x) / x = beta`` (``beta > 1``) for ``x`` in ``(0, x_hi]``.

    The left side is increasing, ``x >= log(beta)`` and ``x <= 2 (beta - 1)``.
    Safeguarded Newton on the log form, bisection when a step leaves the
    bracket.
    """
    lo = math.log(beta)
    hi = min(x_hi, 2.0 * (beta - 1.0))
    if hi <= lo:
        return hi
    target = math.log(beta)
    x = hi
    for _ in range(100):
        f = math.log(_expm1_over_x(x)) - target
        if f > 0:
            hi = x
        else:
            lo = x
        step = f / _dlog_expm1_over_x(x)
        x_new = x - step
        if not (lo < x_new < hi):
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * x or hi - lo <= 1e-15 * hi:
            x = x_new
            break
        x = x_new
    return x


def _it_time(link: _Link, tau0: float) -> tuple[float, float]:
    """Return ``(tau, x)`` with ``x = c ln2 / tau`` for harvesting time ``tau0``."""
    if tau0 >= link.thr:
        return link.tau_bar, link.x_bar
    if tau0 <= link.limit:
        raise InfeasibleError(
            f"tau0={tau0:.6g} s is below the asymptotic limit {link.limit:.6g} s"
        )
    beta = tau0 * link.gamma / (link.c * LN2)
    x = _solve_x(beta, link.x_bar)
    return link.c * LN2 / x, x


def solve_subproblem(src: EffectiveSource, sys: SystemParams, tau0: float) -> float:
    """Minimum IT time of one transmitter given harvesting time ``tau0``.

    Raises
    ------
    InfeasibleError
        If ``tau0`` does not exceed ``D ln2 / (W gamma)``, where no finite IT
        time meets the demand.
    """
    if not tau0 > 0:
        raise InfeasibleError(f"tau0 must be positive, got {tau0}")
    return _it_time(_Link(src, sys), tau0)[0]


def _xexp_minus_expm1(x: float) -> float:
    """``x e^x - (e^x - 1)`` without cancellation for small ``x``."""
    if x < 0.1:
        # sum_{n>=2} (n - 1) x^n / n!
        term, total, n = x, 0.0, 1
        while n < 30:
            n += 1
            term *= x / n
            inc = (n - 1) * term
            total += inc
            if inc < 1e-18 * total:
                break
        return total
    return x * math.exp(x) - math.expm1(x)


def _dtau_dtau0(link: _Link, tau0: float) -> float:
    if tau0 >= link.thr:
        return 0.0
    _, x = _it_time(link, tau0)
    return -link.gamma / _xexp_minus_expm1(x)


def _tau0_bounds(links: list[_Link]) -> tuple[float, float]:
    lb = 0.0
    ub = 0.0
    for ln in links:
        if ln.gamma <= 0:
            raise ValueError("every transmitter needs a positive effective SNR")
        alpha = lambert_w0((ln.gamma - 1.0) / math.e) + 1.0
        if alpha <= 0.0:
            alpha = math.sqrt(2.0 * ln.gamma)  # gamma below round-off of -1/e
        single = ln.c * LN2 / (alpha * ln.gamma) * math.expm1(alpha)
        # full-power limited single-source optimum sits at the threshold
        lb = max(lb, min(single, ln.thr))
        ub = max(ub, ln.thr)
    return lb, ub


def tau0_bounds(sources: list[EffectiveSource], sys: SystemParams) -> tuple[float, float]:
    """Bracket ``(lb, ub)`` on the optimal harvesting time.

    ``ub`` is the largest full-power threshold.  ``lb`` is the largest
    single-transmitter optimum; each term is the Lambert-W stationary point
    unless that transmitter is power-limited, in which case its optimum is
    its threshold.
    """
    if not sources:
        raise ValueError("need at least one source")
    return _tau0_bounds([_Link(s, sys) for s in sources])


def objective(sources: list[EffectiveSource], sys: SystemParams, tau0: float) -> float:
    """Schedule length ``tau0 + sum_i tau_i(tau0)``."""
    return tau0 + sum(_it_time(_Link(s, sys), tau0)[0] for s in sources)


def nl_powmu(
    sources: list[EffectiveSource],
    sys: SystemParams,
    eps: float = 1e-9,
    max_iter: int = 200,
) -> Schedule:
    """Minimum-length schedule by bisection on the harvesting time.

    The slope of ``tau0 + sum(tau_i(tau0))`` is evaluated analytically at
    the midpoint of the current bracket; the bracket shrinks towards the
    sign change until it is narrower than ``2 * eps``.
    """
    if not sources:
        return Schedule(0.0, np.zeros(0), np.zeros(0), 0.0, [])
    if not eps > 0:
        raise ValueError("eps must be positive")
    links = [_Link(s, sys) for s in sources]
    lb, ub = _tau0_bounds(links)
    tau0 = 0.5 * (lb + ub)
    it = 0
    while ub - lb > 2.0 * eps and it < max_iter:
        it += 1
        tau0 = 0.5 * (lb + ub)
        slope = 1.0 + sum(_dtau_dtau0(ln, tau0) for ln in links)
        if slope >= 0:
            ub = tau0
        if slope <= 0:
            lb = tau0

    taus = np.empty(len(links))
    powers = np.empty(len(links))
    for i, ln in enumerate(links):
        tau, x = _it_time(ln, tau0)
        taus[i] = tau
        if tau0 >= ln.thr:
            powers[i] = sys.p_max
        else:
            p = math.expm1(x) * sys.noise_power / ln.gain
            powers[i] = min(max(p, 0.0), sys.p_max)
    return Schedule(
        tau0=tau0,
        it_time=taus,
        power=powers,
        total=tau0 + float(taus.sum()),
        labels=[s.label for s in sources],
    )


# --------------------------------------------------------------------------
# Assignment expansion and verification
# --------------------------------------------------------------------------


def check_assignment(assignment, n: int, k: int) -> tuple[int, ...]:
    a = tuple(int(v) for v in np.asarray(assignment).ravel())
    if len(a) != n:
        raise ValueError(f"assignment has {len(a)} entries, expected {n}")
    if any(v < 0 or v > k for v in a):
        raise ValueError(f"assignment entries must lie in [0, {k}], got {a}")
    return a


def expand_assignment(inst: NetworkInstance, assignment) -> list[EffectiveSource]:
    """Transmitters of the reduced problem for a relay choice per source.

    Sources come first in index order, followed by every selected relay in
    relay order carrying the total demand routed through it.  Unselected
    relays stay silent and are omitted.
    """
    n, k = inst.n_sources, inst.k_relays
    a = check_assignment(assignment, n, k)
    p_rx = inst.dl_gain * inst.sys.p_ap
    out = [
        EffectiveSource(
            demand=float(inst.demand[i]),
            gain=float(inst.ul_src[i, j]),
            eh=inst.eh[i],
            p_rx=float(p_rx[i]),
            label=("source", i, j),
        )
        for i, j in enumerate(a)
    ]
    for j in range(1, k + 1):
        load = sum(float(inst.demand[i]) for i in range(n) if a[i] == j)
        if load > 0:
            out.append(
                EffectiveSource(
                    demand=load,
                    gain=float(inst.ul_relay[j - 1]),
                    eh=inst.eh[n + j - 1],
                    p_rx=float(p_rx[n + j - 1]),
                    label=("relay", j),
                )
            )
    return out


def schedule_assignment(inst: NetworkInstance, assignment, eps: float = 1e-9) -> Schedule:
    return nl_powmu(expand_assignment(inst, assignment), inst.sys, eps=eps)


@dataclass
class VerifyReport:
    energy: float
    demand: float
    power_cap: float
    nonneg: float
    total: float
    tol: float = 1e-7

    @property
    def worst(self) -> float:
        return max(self.energy, self.demand, self.power_cap, self.nonneg, self.total)

    @property
    def feasible(self) -> bool:
        return bool(self.worst <= self.tol)

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "demand": self.demand,
            "power_cap": self.power_cap,
            "nonneg": self.nonneg,
            "total": self.total,
            "feasible": self.feasible,
        }


def verify_schedule(inst: NetworkInstance, assignment, s: Schedule, tol: float = 1e-7) -> VerifyReport:
    """Maximum relative violation of every constraint of the full problem.

    Energy causality, demand (source and relay hops), the power cap and
    non-negativity are checked for the transmitters implied by
    ``assignment``; ``total`` checks the objective bookkeeping.
    """
    srcs = expand_assignment(inst, assignment)
    sys = inst.sys
    if len(s.it_time) != len(srcs) or len(s.power) != len(srcs):
        raise ValueError("schedule does not match the assignment's transmitters")
    energy = demand = cap = neg = 0.0
    for src, tau, p in zip(srcs, s.it_time, s.power):
        budget = src.harvest * s.tau0
        used = p * tau
        energy = max(energy, (used - budget) / max(budget, used, 1e-300))
        sent = tau * rate(max(p, 0.0), src.gain, sys)
        demand = max(demand, (src.demand - sent) / src.demand)
        cap = max(cap, (p - sys.p_max) / sys.p_max)
        neg = max(neg, -tau / max(s.total, 1e-300), -p / sys.p_max)
    neg = max(neg, -s.tau0 / max(s.total, 1e-300))
    total = abs(s.total - (s.tau0 + float(np.sum(s.it_time)))) / max(abs(s.total), 1e-300)
    return VerifyReport(
        energy=float(max(energy, 0.0)),
        demand=float(max(demand, 0.0)),
        power_cap=float(max(cap, 0.0)),
        nonneg=float(max(neg, 0.0)),
        total=float(total),
        tol=tol,
    )
