"""THz propagation: molecular absorption, ULA steering, path gains, MIMO channel.

Angles handed to :func:`steering_vector` are measured from the array
boresight. Path gains carry their own propagation phase ``exp(-j 2 pi f tau)``
evaluated at each subcarrier frequency, so :func:`channel_matrix` adds no
second delay term.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np
from scipy.constants import Boltzmann, speed_of_light

C = speed_of_light
REFERENCE_VAPOR_FRACTION = 0.01


@lru_cache(maxsize=None)
def load_absorption_table(path: str | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Read a two-column (frequency_THz, k_per_m_at_1pct_vapor) table.

    Lines starting with ``#`` are comments. Without ``path`` the table shipped
    with the package is used.
    """
    if path is None:
        text = resources.files("thzsense.data").joinpath("absorption_1pct.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    rows = [line.split() for line in text.splitlines() if line.strip() and not line.lstrip().startswith("#")]
    table = np.array(rows, dtype=float)
    if table.ndim != 2 or table.shape[1] != 2:
        raise ValueError("absorption table must have two columns")
    freq_hz = table[:, 0] * 1e12
    k = table[:, 1]
    if np.any(np.diff(freq_hz) <= 0):
        raise ValueError("absorption table frequencies must be strictly increasing")
    return freq_hz, k


def absorption_coefficient(f, water_vapor_fraction: float, table: str | None = None):
    """Molecular absorption coefficient k(f) in 1/m.

    Piecewise-linear in frequency over the table, linear in vapor fraction.
    ``f`` may be a scalar or an array (Hz).
    """
    if not 0.0 <= water_vapor_fraction <= 1.0:
        raise ValueError(f"water vapor fraction must be in [0, 1], got {water_vapor_fraction}")
    freq, k = load_absorption_table(table)
    f_arr = np.asarray(f, dtype=float)
    if np.any(f_arr < freq[0]) or np.any(f_arr > freq[-1]):
        raise ValueError(
            f"frequency outside absorption table range [{freq[0]:.3g}, {freq[-1]:.3g}] Hz"
        )
    out = np.interp(f_arr, freq, k) * (water_vapor_fraction / REFERENCE_VAPOR_FRACTION)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CarrierConfig:
    """Carrier, band and noise settings.

    ``noise_power`` is the noise variance of one measurement entry (W); by
    default the thermal noise of one subcarrier bin, ``k_B T (W/K) NF``. The
    per-subcarrier frequencies follow ``f + (k - K/2) W / K``.
    """

    center_frequency: float = 0.275e12
    bandwidth: float = 10e9
    num_subcarriers: int = 4096
    water_vapor_fraction: float = 0.01
    noise_power: float | None = None
    noise_figure_db: float = 10.0
    temperature_k: float = 290.0
    absorption: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.center_frequency <= 0:
            raise ValueError("center frequency must be positive")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.num_subcarriers < 1:
            raise ValueError("need at least one subcarrier")
        if self.noise_power is None:
            object.__setattr__(self, "noise_power", thermal_noise_power(self.subcarrier_spacing, self.noise_figure_db, self.temperature_k))
        if self.noise_power < 0:
            raise ValueError("noise power must be non-negative")
        k = absorption_coefficient(self.subcarrier_frequencies, self.water_vapor_fraction)
        object.__setattr__(self, "absorption", np.atleast_1d(k))

    @property
    def subcarrier_spacing(self) -> float:
        return self.bandwidth / self.num_subcarriers

    @property
    def subcarrier_frequencies(self) -> np.ndarray:
        k = np.arange(self.num_subcarriers)
        return self.center_frequency + (k - self.num_subcarriers / 2) * self.subcarrier_spacing

    @property
    def wavelength(self) -> float:
        return C / self.center_frequency

    @property
    def delay_period(self) -> float:
        """Unambiguous delay span K / W of the subcarrier phase ramp."""
        return self.num_subcarriers / self.bandwidth

    def replace(self, **changes) -> "CarrierConfig":
        kw = dict(
            center_frequency=self.center_frequency,
            bandwidth=self.bandwidth,
            num_subcarriers=self.num_subcarriers,
            water_vapor_fraction=self.water_vapor_fraction,
            noise_power=self.noise_power,
            noise_figure_db=self.noise_figure_db,
            temperature_k=self.temperature_k,
        )
        if ("bandwidth" in changes or "num_subcarriers" in changes) and "noise_power" not in changes:
            kw["noise_power"] = None
        kw.update(changes)
        return CarrierConfig(**kw)


def thermal_noise_power(bandwidth: float, noise_figure_db: float = 10.0, temperature_k: float = 290.0) -> float:
    return Boltzmann * temperature_k * bandwidth * 10 ** (noise_figure_db / 10)


def steering_vector(num_antennas: int, spacing: float, wavelength: float, angle: float) -> np.ndarray:
    """Unit-norm ULA response ``exp(j 2 pi (d/lambda) q sin(angle)) / sqrt(N)``."""
    if num_antennas < 1:
        raise ValueError("num_antennas must be >= 1")
    if spacing <= 0 or wavelength <= 0:
        raise ValueError("spacing and wavelength must be positive")
    q = np.arange(num_antennas)
    return np.exp(2j * np.pi * (spacing / wavelength) * q * np.sin(angle)) / np.sqrt(num_antennas)


def steering_matrix(num_antennas: int, spacing: float, wavelength: float, angles) -> np.ndarray:
    """Columns are :func:`steering_vector` for each entry of ``angles``."""
    q = np.arange(num_antennas)[:, None]
    s = np.sin(np.atleast_1d(np.asarray(angles, dtype=float)))[None, :]
    return np.exp(2j * np.pi * (spacing / wavelength) * q * s) / np.sqrt(num_antennas)


def free_space_magnitude(f, r, k):
    return C / (4 * np.pi * np.asarray(f) * r) * np.exp(-np.asarray(k) * r / 2)


def los_gain(f, r: float, k, tau: float):
    """LoS complex gain ``c/(4 pi f r) exp(-k r / 2) exp(-j 2 pi f tau)``."""
    if r <= 0:
        raise ValueError("LoS distance must be positive")
    return free_space_magnitude(f, r, k) * np.exp(-2j * np.pi * np.asarray(f) * tau)


def fresnel_coefficient(psi, eta: float):
    """TE Fresnel reflection coefficient ``-exp(-2 cos(psi) / sqrt(eta^2 - 1))``.

    ``psi`` is the incidence angle from the surface normal; ``eta = inf`` is a
    perfect conductor.
    """
    if not eta > 1:
        raise ValueError("refractive index must exceed 1")
    return -np.exp(-2 * np.cos(psi) / np.sqrt(eta**2 - 1))


def rayleigh_factor(psi, sigma: float, f):
    """Rayleigh roughness attenuation for surface height deviation ``sigma``."""
    if sigma < 0:
        raise ValueError("surface roughness must be non-negative")
    return np.exp(-8 * np.pi**2 * np.asarray(f) ** 2 * sigma**2 * np.cos(psi) ** 2 / C**2)


def nlos_gain(f, r1: float, r2: float, k, psi: float, eta: float, sigma: float, tau: float):
    """Single-bounce gain: LoS-like spreading over ``r1 + r2`` times gamma * rho."""
    if r1 <= 0 or r2 <= 0:
        raise ValueError("NLoS leg lengths must be positive")
    reflection = fresnel_coefficient(psi, eta) * rayleigh_factor(psi, sigma, f)
    return los_gain(f, r1 + r2, k, tau) * reflection


@dataclass
class ChannelMatrix:
    entries: np.ndarray
    subcarrier_index: int
    paths: Sequence = ()


def path_gains(path, carrier: CarrierConfig) -> np.ndarray:
    """Per-subcarrier complex gain of one path (length-K array)."""
    f = carrier.subcarrier_frequencies
    k = carrier.absorption
    if path.kind == "LoS":
        return los_gain(f, path.r, k, path.toa)
    if path.kind == "NLoS":
        return nlos_gain(f, path.r1, path.r2, k, path.incidence, path.eta, path.sigma, path.toa)
    return np.zeros_like(f, dtype=complex)


def channel_matrix(paths, subarray, user, carrier: CarrierConfig, k: int) -> ChannelMatrix:
    """Uplink M x Q channel at subcarrier ``k``: sum of gain * a_r a_t^H dyads."""
    M, Q = subarray.num_antennas, user.num_antennas
    lam = carrier.wavelength
    H = np.zeros((M, Q), dtype=complex)
    for p in paths:
        if p.kind == "Blocked":
            continue
        alpha = path_gains(p, carrier)[k]
        a_r = steering_vector(M, subarray.antenna_spacing, lam, p.local_aoa(subarray))
        a_t = steering_vector(Q, user.antenna_spacing, lam, p.aod)
        H += alpha * np.outer(a_r, a_t.conj())
    return ChannelMatrix(H, k, tuple(paths))
