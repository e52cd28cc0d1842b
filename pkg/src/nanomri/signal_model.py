"""Analytic per-slice signal model for the nuclear-spin spectroscopy protocol.

A slice at coupling Gamma addresses target spins whose actual coupling is k.
Each addressed spin deflects the probe coherence by a factor (1 - S) where S
is the single-spin response below; the net probe signal is the product over
all target spins times the intrinsic echo decay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .probe import SliceSpec


class SignalSaturationError(RuntimeError):
    """Net signal fell below the representable floor for a slice."""


@dataclass(frozen=True)
class CoherenceParams:
    """Probe and target coherence times, seconds."""

    probe_t2: float = 1.0
    target_t_rho: float = 5.0
    target_t2: float = 1e-3

    def __post_init__(self):
        # math.inf is allowed (ideal coherence); zero and negatives are not
        for name in ("probe_t2", "target_t_rho", "target_t2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ControlSchedule:
    """Per-slice drive settings: times in s, drive field in T (gamma*B in
    rad/s)."""

    t_detect: float
    t_control: float
    b_ac: float
    coupling_scale: float = 1.0 / 3.0   # decoupled k -> phase-rate factor
    rho_detect: float = 0.2
    rho_control: float = 0.2

    def __post_init__(self):
        if self.t_detect <= 0 or self.t_control <= 0:
            raise ValueError("schedule times must be positive")
        if self.b_ac <= 0:
            raise ValueError("drive amplitude must be positive")
        if not 0 < self.coupling_scale <= 1:
            raise ValueError("coupling scale must lie in (0, 1]")


def schedule_for_slice(spec: SliceSpec, gamma_n: float, *,
                       rho_detect: float = 0.2, rho_control: float = 0.2,
                       coupling_scale: float = 1.0 / 3.0,
                       b_ac_reference: float | None = None,
                       gradient_reference: float | None = None,
                       t_control_cap: float | None = None) -> ControlSchedule:
    """Build the drive schedule for one slice.

    Detection time fixes the target phase deflection at pi * rho_detect.
    The drive amplitude scales with the local coupling gradient relative to
    the gradient at the surface anchor (so slice widths track the gradient),
    and the control time fixes the drive rotation at pi * rho_control.
    """
    if spec.gamma == 0.0:
        raise ValueError("slice coupling is zero, no addressable spins")
    t_det = math.pi * rho_detect / (coupling_scale * abs(spec.gamma))
    if b_ac_reference is None or gradient_reference is None:
        # fall back: drive Rabi rate matched to the slice coupling width
        b_ac = abs(spec.gamma) * rho_control / gamma_n
    else:
        b_ac = b_ac_reference * abs(spec.gradient) / abs(gradient_reference)
    if b_ac <= 0:
        raise ValueError("derived drive amplitude is zero")
    t_ctrl = math.pi * rho_control / (gamma_n * b_ac)
    if t_control_cap is not None and t_ctrl > t_control_cap:
        t_ctrl = t_control_cap
    return ControlSchedule(t_detect=t_det, t_control=t_ctrl, b_ac=b_ac,
                           coupling_scale=coupling_scale,
                           rho_detect=rho_detect, rho_control=rho_control)


def single_spin_response(gamma_slice, k, schedule: ControlSchedule,
                         coherence: CoherenceParams, gamma_n: float):
    """Response S of one target spin with coupling k to a slice at Gamma.

    S = (1 - cos(a k t_det / 2)) * (gamma B)^2 / (Omega^2 + (2pi/T_rho)^2)
        * sin^2(Omega t_ctrl / 2),
    Omega = sqrt((a (Gamma - k))^2 + (gamma B)^2). Broadcasts over k.
    """
    a = schedule.coupling_scale
    k = np.asarray(k, dtype=float)
    rabi = gamma_n * schedule.b_ac
    detune = a * (np.asarray(gamma_slice, dtype=float) - k)
    omega = np.sqrt(detune**2 + rabi**2)
    line = rabi**2 / (omega**2 + (2 * np.pi / coherence.target_t_rho) ** 2)
    s = ((1.0 - np.cos(a * k * schedule.t_detect / 2.0))
         * line * np.sin(omega * schedule.t_control / 2.0) ** 2)
    return s if s.ndim else float(s)


_S_NET_FLOOR = 1e-300


def net_slice_signal(gamma_slice: float, couplings, schedule: ControlSchedule,
                     coherence: CoherenceParams, gamma_n: float) -> float:
    """Probe echo signal for one slice: 0.5 e^{-t_det/T2} prod_i (1 - S_i).

    Raises SignalSaturationError if the product underflows to the point
    where -ln(2 s) is no longer representable.
    """
    s_i = np.atleast_1d(single_spin_response(gamma_slice, couplings,
                                             schedule, coherence, gamma_n))
    factors = 1.0 - s_i
    if np.any(factors <= 0.0):
        raise SignalSaturationError(
            "a target spin fully saturates the probe response")
    log_s = (math.log(0.5) - schedule.t_detect / coherence.probe_t2
             + float(np.log(factors).sum()))
    if log_s < math.log(_S_NET_FLOOR):
        raise SignalSaturationError(
            f"net slice signal underflows (log s = {log_s:.1f})")
    return math.exp(log_s)


def net_signal_to_load(s_net: float) -> float:
    """Additive per-slice load l = -ln(2 s)."""
    if not 0.0 < s_net <= 0.5:
        raise ValueError(f"net signal must lie in (0, 0.5], got {s_net}")
    return -math.log(2.0 * s_net)


def load_to_net_signal(load: float) -> float:
    if load < 0:
        raise ValueError("load must be >= 0")
    return 0.5 * math.exp(-load)


@dataclass(frozen=True)
class ShotNoiseModel:
    """Projective readout: n_measure binomial shots per slice."""

    n_measure: int = 1000
    t_measure: float = 5e-6   # s, single-shot readout duration

    def __post_init__(self):
        if self.n_measure < 1:
            raise ValueError("need at least one measurement shot")

    @property
    def signal_floor(self) -> float:
        """Smallest resolvable net signal: half a single-shot quantum."""
        return 1.0 / (4.0 * self.n_measure)

    def sample(self, s_net: float, rng: np.random.Generator) -> float:
        """Draw an estimated net signal from n_measure projective shots.

        The up-state probability is 1/2 + s_net; the estimate is clamped
        into (signal_floor, 1/2] so the load stays finite.
        """
        p = 0.5 + s_net
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"shot probability {p} outside [0, 1]")
        counts = rng.binomial(self.n_measure, p)
        est = counts / self.n_measure - 0.5
        return float(np.clip(est, self.signal_floor, 0.5))


def slice_rngs(seed: int, n_slices: int) -> list[np.random.Generator]:
    """Independent per-slice generators, stable under reordering."""
    ss = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(n_slices)]


@dataclass(frozen=True)
class SignalRecord:
    """One measured slice: spec geometry plus signals and derived load."""

    slice_index: int
    r: float
    theta: float
    phi: float
    gamma: float
    t_detect: float
    t_control: float
    b_ac: float
    s_true: float
    s_measured: float
    saturated: bool = False

    @property
    def load(self) -> float:
        return net_signal_to_load(self.s_measured)

    def with_measurement(self, s_measured: float) -> "SignalRecord":
        return replace(self, s_measured=s_measured)
