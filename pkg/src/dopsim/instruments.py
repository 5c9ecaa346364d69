"""Virtual measurement devices.

Two instruments read the same discretized polarization signal:

* ``polarimeter_dop`` -- the indirect route: average the four Stokes
  components over an integration window, then compute |S123|/S0.  Averaging
  Stokes vectors of a fluctuating state can only shrink the mean vector, so
  a scrambled beam reads artificially depolarized.

* ``singlet_meter_raw`` / ``singlet_meter_dop`` -- the direct route: a
  parametric model of a coherent pair-projection meter built from two stages
  of walk-off-compensated type II nonlinear crystals.  Stage one upconverts a
  cross-wavelength photon pair to an H photon, stage two (rotated by 90 deg)
  to a V photon; behind a 45 deg polarizer the two amplitudes interfere, and
  at the destructive stage phase the upconverted intensity measures the
  pair's singlet fraction (1 - M_a.M_b)/4.

The crystal stack enters through three numbers: the effective interaction
length (element length times elements per stage, walk-off fully
compensated), the phase-matching acceptance bandwidth (inverse in effective
length, anchored to 4.5 nm at 12 mm), and the efficiency of an undesired
degenerate conversion that competes when the two wavelengths approach closer
than a minimum separation.  That undesired process is polarization-blind, so
its contribution is modeled as mixing the pair probability toward the
fully-depolarized value 1/4:

    p_eff = (1 - c) * p_pair + c / 4,   c = sinc^2(pi * d_lambda / acceptance)

with c applied only below the minimum-separation threshold where the
degenerate phase matching coexists.

Readout imperfections follow the minimal affine model

    r = gain * [(1 - V)/2 + V * p_eff] + dark + multiplicative noise,

chosen so that V = 1 recovers the ideal meter and a fully polarized beam
leaves the interference residual (1 - V)/2 * gain.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .polcore import (
    DopsimError,
    InvariantError,
    NumericsError,
    TwoPhotonOperator,
    poincare_from_density,
)
from .sources import SourceSpec


@dataclass(frozen=True)
class CrystalStack:
    """Walk-off-compensated stack: two stages of identical nonlinear elements."""

    element_length_mm: float = 3.0
    elements_per_stage: int = 4
    stages: int = 2
    reference_acceptance_nm: float = 4.5
    reference_length_mm: float = 12.0

    def __post_init__(self) -> None:
        if self.element_length_mm <= 0.0:
            raise InvariantError("CrystalStack: element_length_mm must be > 0")
        if self.elements_per_stage < 1:
            raise InvariantError("CrystalStack: elements_per_stage must be >= 1")
        if self.stages != 2:
            raise InvariantError("CrystalStack: the two-stage interferometric design is fixed")
        if self.reference_acceptance_nm <= 0.0 or self.reference_length_mm <= 0.0:
            raise InvariantError("CrystalStack: reference acceptance and length must be > 0")


def effective_length(stack: CrystalStack) -> float:
    """Effective interaction length per stage in mm; walk-off is fully
    compensated so it grows linearly with the element count."""
    return stack.element_length_mm * stack.elements_per_stage


def acceptance_bandwidth(stack: CrystalStack) -> float:
    """Phase-matching wavelength acceptance in nm, inverse in effective length."""
    return stack.reference_acceptance_nm * stack.reference_length_mm / effective_length(stack)


def degenerate_contamination(lambda1_nm: float, lambda2_nm: float, stack: CrystalStack) -> float:
    """Relative efficiency of the undesired degenerate conversion for a line
    pair, sinc^2(pi * d_lambda / acceptance): 1 at zero separation, ~0 far out."""
    if lambda1_nm == lambda2_nm:
        raise InvariantError("degenerate_contamination: wavelengths must differ")
    x = abs(lambda1_nm - lambda2_nm) / acceptance_bandwidth(stack)
    return float(np.sinc(x) ** 2)


@dataclass(frozen=True)
class MeterConfig:
    stack: CrystalStack = field(default_factory=CrystalStack)
    visibility: float = 0.96
    stage_phase_rad: float = 0.0
    gain: float = 1.0
    dark_offset: float = 0.0
    noise_sigma_rel: float = 0.0
    response_time_s: float = 1e-3
    min_separation_nm: float = 1.5

    def __post_init__(self) -> None:
        if not 0.0 <= self.visibility <= 1.0:
            raise InvariantError(f"MeterConfig: visibility {self.visibility} not in [0, 1]")
        if self.gain <= 0.0:
            raise InvariantError("MeterConfig: gain must be > 0")
        if self.response_time_s <= 0.0:
            raise InvariantError("MeterConfig: response_time_s must be > 0")
        if self.noise_sigma_rel < 0.0:
            raise InvariantError("MeterConfig: noise_sigma_rel must be >= 0")
        if self.min_separation_nm < 0.0:
            raise InvariantError("MeterConfig: min_separation_nm must be >= 0")


@dataclass(frozen=True)
class PolarimeterConfig:
    integration_time_s: float
    noise_sigma_rel: float = 0.0

    def __post_init__(self) -> None:
        if self.integration_time_s <= 0.0:
            raise InvariantError("PolarimeterConfig: integration_time_s must be > 0")
        if self.noise_sigma_rel < 0.0:
            raise InvariantError("PolarimeterConfig: noise_sigma_rel must be >= 0")


@dataclass(frozen=True)
class PolarizationTrace:
    """Uniformly sampled sequence of beam snapshots with fixed line structure."""

    dt_s: float
    snapshots: tuple[SourceSpec, ...]

    def __post_init__(self) -> None:
        if self.dt_s <= 0.0:
            raise InvariantError("PolarizationTrace: dt_s must be > 0")
        object.__setattr__(self, "snapshots", tuple(self.snapshots))
        if not self.snapshots:
            raise InvariantError("PolarizationTrace: need at least one sample")
        wavelengths = self.snapshots[0].wavelengths_nm()
        for i, snap in enumerate(self.snapshots[1:], start=1):
            if snap.wavelengths_nm() != wavelengths:
                raise InvariantError(
                    f"PolarizationTrace: snapshot {i} changes the line wavelengths"
                )

    def __len__(self) -> int:
        return len(self.snapshots)

    @property
    def duration_s(self) -> float:
        return len(self.snapshots) * self.dt_s

    def wavelengths_nm(self) -> tuple[float, ...]:
        return self.snapshots[0].wavelengths_nm()

    @classmethod
    def static(cls, src: SourceSpec, n_samples: int, dt_s: float) -> "PolarizationTrace":
        if n_samples < 1:
            raise InvariantError("PolarizationTrace.static: n_samples must be >= 1")
        return cls(dt_s, (src,) * n_samples)


def _trace_arrays(trace: PolarizationTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(wavelengths (L,), intensities (n, L), poincare vectors (n, L, 3))."""
    wavelengths = np.asarray(trace.wavelengths_nm(), dtype=float)
    n, n_lines = len(trace), len(wavelengths)
    intensities = np.empty((n, n_lines))
    mvecs = np.empty((n, n_lines, 3))
    for t, snap in enumerate(trace.snapshots):
        for i, line in enumerate(snap.lines):
            intensities[t, i] = line.intensity
            rho = line.polarization.matrix
            mvecs[t, i, 0] = 2.0 * rho[0, 1].real
            mvecs[t, i, 1] = -2.0 * rho[0, 1].imag
            mvecs[t, i, 2] = rho[0, 0].real - rho[1, 1].real
    return wavelengths, intensities, mvecs


def _trailing_mean(values: np.ndarray, window: int) -> np.ndarray:
    """Causal moving average over up to `window` samples ending at each index."""
    if window <= 1:
        return values
    csum = np.cumsum(values, axis=0, dtype=float)
    out = np.empty_like(csum)
    out[:window] = csum[:window]
    out[window:] = csum[window:] - csum[:-window]
    counts = np.minimum(np.arange(1, len(values) + 1), window)
    shape = (len(values),) + (1,) * (values.ndim - 1)
    return out / counts.reshape(shape)


def two_stage_projector(stage_phase_rad: float = 0.0) -> TwoPhotonOperator:
    """Operator realized by the two interfering conversion stages,
    |psi><psi| with psi = (|HV> - e^{i phase} |VH>)/sqrt(2).

    The destructive setting (phase 0) is exactly the singlet projector.
    """
    phase = complex(math.cos(stage_phase_rad), math.sin(stage_phase_rad))
    psi = np.array([0.0, 1.0, -phase, 0.0], dtype=complex) / math.sqrt(2.0)
    return TwoPhotonOperator(np.outer(psi, psi.conj()))


def pair_projection_probability(ma: np.ndarray, mb: np.ndarray, stage_phase_rad: float = 0.0) -> np.ndarray:
    """Tr((rho_a x rho_b) . P(phase)) from the Poincare vectors, vectorized
    over leading axes; reduces to (1 - ma.mb)/4 at phase 0."""
    ma = np.asarray(ma, dtype=float)
    mb = np.asarray(mb, dtype=float)
    diag = 0.25 * (1.0 - ma[..., 2] * mb[..., 2])
    cross = (ma[..., 0] - 1.0j * ma[..., 1]) * (mb[..., 0] + 1.0j * mb[..., 1])
    phase = complex(math.cos(stage_phase_rad), math.sin(stage_phase_rad))
    return diag - 0.25 * np.real(phase * cross)


def _pair_table(
    wavelengths: np.ndarray, cfg: MeterConfig
) -> list[tuple[int, int, float]]:
    """Participating line pairs (i, j, contamination).

    A pair converts only within the phase-matching acceptance; the degenerate
    contamination applies below the minimum separation.
    """
    acceptance = acceptance_bandwidth(cfg.stack)
    pairs = []
    for i in range(len(wavelengths)):
        for j in range(i + 1, len(wavelengths)):
            separation = abs(wavelengths[i] - wavelengths[j])
            if separation > acceptance:
                continue
            c = 0.0
            if separation < cfg.min_separation_nm:
                c = degenerate_contamination(wavelengths[i], wavelengths[j], cfg.stack)
            pairs.append((i, j, c))
    return pairs


def singlet_meter_raw(
    trace: PolarizationTrace, cfg: MeterConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Readout time series of the pair-projection meter.

    Per sample: pre-average each line's state over the response-time window,
    form the intensity^2-weighted pair projection probability over all
    participating pairs, then apply the affine imperfection model and
    multiplicative noise.  Samples with no convertible pair fall to the dark
    level.
    """
    if len(trace.wavelengths_nm()) < 2:
        raise InvariantError("singlet_meter_raw: nothing to upconvert in a single-line beam")
    if cfg.noise_sigma_rel > 0.0 and rng is None:
        raise InvariantError("singlet_meter_raw: noisy config needs an explicit rng")

    wavelengths, intensities, mvecs = _trace_arrays(trace)
    window = max(1, int(round(cfg.response_time_s / trace.dt_s)))
    s0 = _trailing_mean(intensities, window)
    svec = _trailing_mean(intensities[:, :, None] * mvecs, window)
    safe_s0 = np.where(s0 > 0.0, s0, 1.0)
    m_avg = np.where(s0[:, :, None] > 0.0, svec / safe_s0[:, :, None], 0.0)

    n = len(trace)
    weighted = np.zeros(n)
    weights = np.zeros(n)
    for i, j, c in _pair_table(wavelengths, cfg):
        w = s0[:, i] * s0[:, j]
        p = pair_projection_probability(m_avg[:, i, :], m_avg[:, j, :], cfg.stage_phase_rad)
        weighted += w * ((1.0 - c) * p + 0.25 * c)
        weights += w

    p_eff = np.divide(weighted, weights, out=np.zeros(n), where=weights > 0.0)
    readout = np.where(
        weights > 0.0,
        cfg.gain * ((1.0 - cfg.visibility) / 2.0 + cfg.visibility * p_eff) + cfg.dark_offset,
        cfg.dark_offset,
    )
    if cfg.noise_sigma_rel > 0.0:
        readout = readout * (1.0 + cfg.noise_sigma_rel * rng.standard_normal(n))
    return readout


def pair_normalization(intensities: Sequence[float]) -> float:
    """Cross-pair statistics factor k = 1 - sum(w_i^2) with w_i the intensity
    fractions; relates the distinct-pair projection average to the beam's
    (1 - DOP^2)/4.  Equals 2 I1 I2 / (I1 + I2)^2 for two lines."""
    w = np.asarray(intensities, dtype=float)
    total = w.sum()
    if total <= 0.0:
        raise InvariantError("pair_normalization: total intensity must be > 0")
    w = w / total
    return float(1.0 - (w**2).sum())


@dataclass(frozen=True)
class MeterDopEstimate:
    dop: np.ndarray
    clipped: np.ndarray  # True where the readout sat below the estimable floor


def invert_meter_readout(
    readout: np.ndarray,
    cfg: MeterConfig,
    wavelengths_nm: Sequence[float],
    intensities: Sequence[float],
) -> MeterDopEstimate:
    """Invert the imperfection model to a DOP estimate.

    Exact on two-line beams; for more lines it assumes pure lines, uniform
    contamination and full pair participation.  Readings below the estimable
    floor (for instance, at or under the dark level) clamp to DOP = 1 and are
    flagged rather than raised.
    """
    if cfg.visibility <= 0.0:
        raise DopsimError("invert_meter_readout: zero visibility carries no signal")
    wavelengths = np.asarray(wavelengths_nm, dtype=float)
    ivals = np.asarray(intensities, dtype=float)
    pairs = _pair_table(wavelengths, cfg)
    if not pairs:
        raise DopsimError("invert_meter_readout: no line pair within the acceptance bandwidth")
    pair_weights = np.array([ivals[i] * ivals[j] for i, j, _ in pairs])
    if pair_weights.sum() <= 0.0:
        raise DopsimError("invert_meter_readout: participating pairs carry no intensity")
    c_bar = float(np.average([c for _, _, c in pairs], weights=pair_weights))
    if c_bar >= 1.0:
        raise DopsimError("invert_meter_readout: fully degenerate pairs are uninvertible")

    k = pair_normalization(ivals)
    r = np.asarray(readout, dtype=float)
    p_eff = ((r - cfg.dark_offset) / cfg.gain - (1.0 - cfg.visibility) / 2.0) / cfg.visibility
    p_pair = (p_eff - 0.25 * c_bar) / (1.0 - c_bar)
    dop_sq = 1.0 - 4.0 * k * p_pair
    clipped = dop_sq > 1.0
    dop = np.sqrt(np.clip(dop_sq, 0.0, 1.0))
    return MeterDopEstimate(dop=dop, clipped=clipped)


def singlet_meter_dop(
    trace: PolarizationTrace, cfg: MeterConfig, rng: np.random.Generator | None = None
) -> MeterDopEstimate:
    """Per-sample DOP estimate: forward readout plus model inversion."""
    readout = singlet_meter_raw(trace, cfg, rng)
    return invert_meter_readout(
        readout, cfg, trace.wavelengths_nm(), trace.snapshots[0].intensities()
    )


def polarimeter_dop(
    trace: PolarizationTrace, cfg: PolarimeterConfig, rng: np.random.Generator | None = None
) -> np.ndarray:
    """DOP per integration window from time-averaged Stokes components.

    The four averaged components each receive independent relative Gaussian
    noise before the |S123|/S0 division.
    """
    if cfg.noise_sigma_rel > 0.0 and rng is None:
        raise InvariantError("polarimeter_dop: noisy config needs an explicit rng")
    window = int(round(cfg.integration_time_s / trace.dt_s))
    if window < 1 or len(trace) < window:
        raise InvariantError("polarimeter_dop: trace shorter than the integration time")

    _, intensities, mvecs = _trace_arrays(trace)
    s0 = intensities.sum(axis=1)
    svec = (intensities[:, :, None] * mvecs).sum(axis=1)

    n_windows = len(trace) // window
    out = np.empty(n_windows)
    for w in range(n_windows):
        sl = slice(w * window, (w + 1) * window)
        stokes = np.array([s0[sl].mean(), *svec[sl].mean(axis=0)])
        if cfg.noise_sigma_rel > 0.0:
            stokes = stokes * (1.0 + cfg.noise_sigma_rel * rng.standard_normal(4))
        if stokes[0] <= 0.0:
            raise NumericsError("polarimeter_dop: non-positive averaged power")
        out[w] = float(np.linalg.norm(stokes[1:]) / stokes[0])
    return out


@dataclass(frozen=True)
class PairSamplingResult:
    estimate: float
    stderr: float
    draws: int


def mc_pair_singlet(
    src: SourceSpec, draws: int, rng: np.random.Generator
) -> PairSamplingResult:
    """Monte Carlo estimate of the beam's singlet-projection probability.

    Draws photon pairs with the intensity-product statistics over ordered
    line pairs (same-line pairs included) and scores Bernoulli projection
    outcomes; the mean converges to (1 - DOP^2)/4 of the mixed beam.
    """
    if draws < 1:
        raise InvariantError("mc_pair_singlet: draws must be >= 1")
    w = np.asarray(src.intensities(), dtype=float)
    w = w / w.sum()
    mvecs = np.array([poincare_from_density(line.polarization).as_array() for line in src.lines])
    pair_probs = np.outer(w, w).ravel()
    projection = np.clip((0.25 * (1.0 - mvecs @ mvecs.T)).ravel(), 0.0, 1.0)
    counts = rng.multinomial(draws, pair_probs)
    hits = sum(
        int(rng.binomial(count, p)) for count, p in zip(counts, projection) if count > 0
    )
    estimate = hits / draws
    stderr = math.sqrt(max(estimate * (1.0 - estimate), 1e-12) / draws)
    return PairSamplingResult(estimate=estimate, stderr=stderr, draws=draws)


def write_series_csv(path: str | Path, times_s: Sequence[float], values: Sequence[float]) -> None:
    """Dump a readout or DOP series as CSV rows: time_s, value."""
    if len(times_s) != len(values):
        raise InvariantError("write_series_csv: times and values must align")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for t, v in zip(times_s, values):
            writer.writerow([f"{t:.12g}", f"{float(v):.12g}"])


def calibrate_from_references(
    readout_dop1_mean: float,
    readout_dop0_mean: float,
    visibility: float,
    contamination: float = 0.0,
) -> tuple[float, float]:
    """Solve the affine readout model for (gain, dark_offset) from the mean
    readouts of a fully polarized and a fully depolarized balanced two-line
    reference."""
    if not 0.0 < visibility <= 1.0:
        raise InvariantError("calibrate_from_references: visibility must be in (0, 1]")
    if not 0.0 <= contamination < 1.0:
        raise InvariantError("calibrate_from_references: contamination must be in [0, 1)")
    span = readout_dop0_mean - readout_dop1_mean
    if span <= 0.0:
        raise NumericsError("calibrate_from_references: references do not separate")
    gain = 2.0 * span / (visibility * (1.0 - contamination))
    dark = readout_dop1_mean - gain * (
        (1.0 - visibility) / 2.0 + visibility * contamination / 4.0
    )
    return gain, dark
