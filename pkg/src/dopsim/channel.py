"""Time-dependent fiber birefringence between source and instruments.

The fiber at any instant is one birefringent element: a rotation of every
line's Poincare vector about a common axis, with rotation angle inversely
proportional to wavelength (fixed optical path difference).  Mechanical
shaking is modeled as the simplest stationary processes with one timescale
knob each: spherical Brownian motion of the axis plus a mean-reverting
(Ornstein-Uhlenbeck) retardance.  First-order polarization mode dispersion is
a rotation whose angle is linear in optical frequency offset.

Because the same rotation applied to both lines preserves their relative
sphere angle, shaking leaves the beam DOP nearly invariant as long as the
retardance difference across the line spacing stays small; the residual is
quantified by angle_preservation_error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .polcore import (
    ATOL_INPUT,
    InvariantError,
    density_from_poincare,
    poincare_angle,
    rotate_poincare,
)
from .sources import SPEED_OF_LIGHT_M_PER_S, SourceSpec, SpectralLine


def _validated_axis(axis) -> tuple[float, float, float]:
    if isinstance(axis, tuple) and len(axis) == 3:
        a1, a2, a3 = axis
    else:
        arr = np.asarray(axis, dtype=float).reshape(3)
        a1, a2, a3 = float(arr[0]), float(arr[1]), float(arr[2])
    n = math.sqrt(a1 * a1 + a2 * a2 + a3 * a3)
    if not math.isfinite(n) or n == 0.0:
        raise InvariantError("axis must be a finite nonzero 3-vector")
    if abs(n - 1.0) > ATOL_INPUT:
        raise InvariantError(f"axis norm {n:.12g} not within 1e-9 of 1")
    return (a1, a2, a3)


@dataclass(frozen=True)
class FiberState:
    """Instantaneous birefringence: rotation axis on the Poincare sphere and
    the rotation angle at a reference wavelength."""

    axis: tuple[float, float, float]
    retardance_ref_rad: float
    ref_wavelength_nm: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", _validated_axis(self.axis))
        if not math.isfinite(self.retardance_ref_rad):
            raise InvariantError("FiberState: retardance must be finite")
        if not (math.isfinite(self.ref_wavelength_nm) and self.ref_wavelength_nm > 0.0):
            raise InvariantError("FiberState: reference wavelength must be > 0")

    def retardance_at(self, wavelength_nm: float) -> float:
        """Rotation angle at a given wavelength, theta ~ 1/lambda."""
        if wavelength_nm <= 0.0:
            raise InvariantError("retardance_at: wavelength must be > 0")
        return self.retardance_ref_rad * self.ref_wavelength_nm / wavelength_nm


@dataclass(frozen=True)
class FluctuationProcess:
    """Stationary shaking statistics.

    The axis performs a random walk on the sphere (tangent-plane Gaussian
    steps of per-component variance axis_diffusion * dt, then renormalized),
    decorrelating in about 1/axis_diffusion seconds.  The retardance is an
    exact-discretization Ornstein-Uhlenbeck process reverting to
    retardance_mean_rad with stationary standard deviation
    retardance_sigma_rad and correlation time correlation_time_s.  A zero
    sigma (or zero diffusion) disables that component entirely, freezing it.
    """

    correlation_time_s: float
    axis_diffusion_rad2_per_s: float
    retardance_sigma_rad: float
    retardance_mean_rad: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.correlation_time_s) and self.correlation_time_s > 0.0):
            raise InvariantError("FluctuationProcess: correlation_time_s must be > 0")
        if self.axis_diffusion_rad2_per_s < 0.0 or self.retardance_sigma_rad < 0.0:
            raise InvariantError("FluctuationProcess: rates must be >= 0")
        if not math.isfinite(self.retardance_mean_rad):
            raise InvariantError("FluctuationProcess: retardance mean must be finite")


@dataclass(frozen=True)
class PmdElement:
    """First-order PMD: differential group delay about a fixed principal axis."""

    dgd_s: float
    axis: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "axis", _validated_axis(self.axis))
        if not (math.isfinite(self.dgd_s) and self.dgd_s >= 0.0):
            raise InvariantError("PmdElement: dgd_s must be >= 0")


def _rebuild(src: SourceSpec, rotated_vectors) -> SourceSpec:
    return SourceSpec(
        tuple(
            SpectralLine(line.wavelength_nm, line.intensity, density_from_poincare(m))
            for line, m in zip(src.lines, rotated_vectors)
        )
    )


def apply_fiber(src: SourceSpec, fiber: FiberState) -> SourceSpec:
    """Rotate each line about the fiber axis by its wavelength's retardance."""
    if fiber.retardance_ref_rad == 0.0:
        return src
    rotated = [
        rotate_poincare(line.poincare(), fiber.axis, fiber.retardance_at(line.wavelength_nm))
        for line in src.lines
    ]
    return _rebuild(src, rotated)


def evolve(
    fiber: FiberState,
    dt_s: float,
    process: FluctuationProcess,
    rng: np.random.Generator,
) -> FiberState:
    """One stochastic step of the shaking process; pure in (state, rng draw).

    Two trajectories driven by generators seeded identically are identical.
    """
    if dt_s <= 0.0:
        raise InvariantError("evolve: dt_s must be > 0")

    a1, a2, a3 = fiber.axis
    if process.axis_diffusion_rad2_per_s > 0.0:
        scale = math.sqrt(process.axis_diffusion_rad2_per_s * dt_s)
        g = rng.standard_normal(3)
        g1, g2, g3 = scale * g[0], scale * g[1], scale * g[2]
        radial = g1 * a1 + g2 * a2 + g3 * a3
        b1 = a1 + g1 - radial * a1
        b2 = a2 + g2 - radial * a2
        b3 = a3 + g3 - radial * a3
        n = math.sqrt(b1 * b1 + b2 * b2 + b3 * b3)
        a1, a2, a3 = b1 / n, b2 / n, b3 / n

    retardance = fiber.retardance_ref_rad
    if process.retardance_sigma_rad > 0.0:
        a = math.exp(-dt_s / process.correlation_time_s)
        mu, sigma = process.retardance_mean_rad, process.retardance_sigma_rad
        retardance = mu + (retardance - mu) * a + sigma * math.sqrt(1.0 - a * a) * float(rng.standard_normal())

    return FiberState(
        axis=(a1, a2, a3),
        retardance_ref_rad=retardance,
        ref_wavelength_nm=fiber.ref_wavelength_nm,
    )


def apply_pmd(src: SourceSpec, element: PmdElement, carrier_nm: float) -> SourceSpec:
    """Rotate each line about the principal axis by 2*pi*(nu - nu_carrier)*DGD."""
    if carrier_nm <= 0.0:
        raise InvariantError("apply_pmd: carrier_nm must be > 0")
    if element.dgd_s == 0.0:
        return src
    nu_carrier = SPEED_OF_LIGHT_M_PER_S / (carrier_nm * 1e-9)
    rotated = []
    for line in src.lines:
        nu = SPEED_OF_LIGHT_M_PER_S / (line.wavelength_nm * 1e-9)
        angle = 2.0 * math.pi * (nu - nu_carrier) * element.dgd_s
        rotated.append(rotate_poincare(line.poincare(), element.axis, angle))
    return _rebuild(src, rotated)


def angle_preservation_error(src: SourceSpec, fiber: FiberState) -> float:
    """|sphere angle after - before| for a two-line beam through the fiber.

    Bounded by the retardance difference across the two wavelengths, which is
    what makes a shaken fiber DOP-preserving for small birefringence.
    """
    if len(src.lines) != 2:
        raise InvariantError("angle_preservation_error: source must have exactly 2 lines")
    before = poincare_angle(src.lines[0].poincare(), src.lines[1].poincare())
    out = apply_fiber(src, fiber)
    after = poincare_angle(out.lines[0].poincare(), out.lines[1].poincare())
    return abs(after - before)


def write_trajectory_csv(
    path: str | Path, times_s: Sequence[float], fibers: Iterable[FiberState]
) -> None:
    """Dump a fiber trajectory as CSV rows: time_s, axis1..3, retardance_rad."""
    fibers = list(fibers)
    if len(fibers) != len(times_s):
        raise InvariantError("write_trajectory_csv: times and states must align")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "axis1", "axis2", "axis3", "retardance_rad"])
        for t, fiber in zip(times_s, fibers):
            writer.writerow(
                [f"{t:.12g}"] + [f"{a:.12g}" for a in fiber.axis] + [f"{fiber.retardance_ref_rad:.12g}"]
            )
