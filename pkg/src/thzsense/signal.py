"""Uplink snapshot synthesis and the J x T x K measurement tensor.

Entry ``chi[j, t, k] = w_j^T H^k omega_t + noise``: mode 1 runs over the J
combiner measurements, mode 2 over the T snapshots, mode 3 over the K
subcarriers. Combiners are held fixed across subcarriers so the noiseless
tensor is exactly CP with factors

    A[:, p] = W^T a_r(phi_p),  B[:, p] = Omega^T conj(a_t(theta_p)),
    C[k, p] = alpha_p(f_k)  (gain incl. its exp(-j 2 pi f_k tau_p) phase).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .channel import CarrierConfig, path_gains, steering_matrix
from .scene import PathParams, RisSubarray, Scene, User, ground_truth_paths

MAX_MEASUREMENTS_PER_ANTENNA = 4


@dataclass(frozen=True)
class SoundingConfig:
    J: int = 16
    T: int = 16
    power_w: float = 1.0
    streams: int = 1
    combiner_seed: int = 1
    precoder_seed: int = 2
    noise_seed: int = 3

    def __post_init__(self):
        if self.J < 1 or self.T < 1:
            raise ValueError("J and T must be >= 1")
        if self.streams != 1:
            raise ValueError("only single-stream sounding keeps the rank-P CP structure")
        if self.power_w <= 0:
            raise ValueError("transmit power must be positive")


@dataclass
class CombinerBank:
    W: np.ndarray  # M x J
    seed: int | None = None


@dataclass
class PrecoderTrack:
    Omega: np.ndarray  # Q x T
    power: float = 1.0
    seed: int | None = None


@dataclass
class MeasurementTensor:
    data: np.ndarray
    combiners: CombinerBank
    precoders: PrecoderTrack
    carrier: CarrierConfig
    paths: Sequence[PathParams] = ()
    noise_seed: int | None = None
    blocked: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def make_combiners(M: int, J: int, seed) -> CombinerBank:
    """Random-phase combiners with unit-norm columns (entries e^{jU}/sqrt(M))."""
    if J > MAX_MEASUREMENTS_PER_ANTENNA * M:
        raise ValueError(f"J={J} exceeds {MAX_MEASUREMENTS_PER_ANTENNA}*M")
    rng = np.random.default_rng(seed)
    W = np.exp(2j * np.pi * rng.random((M, J))) / np.sqrt(M)
    return CombinerBank(W, seed if isinstance(seed, int) else None)


def make_precoders(Q: int, T: int, p: float, seed, steer_toward: float | None = None,
                   spacing_ratio: float = 0.5) -> PrecoderTrack:
    """Effective transmit vectors, one column per snapshot, each of norm sqrt(p).

    Steered columns are ``sqrt(p) a_t(steer) s_t`` with a unit-modulus pilot
    ``s_t``; otherwise columns are random-phase vectors.
    """
    if p <= 0:
        raise ValueError("transmit power must be positive")
    rng = np.random.default_rng(seed)
    if steer_toward is not None:
        a = steering_matrix(Q, spacing_ratio, 1.0, [steer_toward])[:, 0]
        pilots = np.exp(2j * np.pi * rng.random(T))
        Omega = np.sqrt(p) * np.outer(a, pilots)
    else:
        Omega = np.sqrt(p / Q) * np.exp(2j * np.pi * rng.random((Q, T)))
    return PrecoderTrack(Omega, p, seed if isinstance(seed, int) else None)


def cp_factors(paths: Sequence[PathParams], subarray: RisSubarray, user: User,
               combiners: CombinerBank, precoders: PrecoderTrack, carrier: CarrierConfig):
    """Ground-truth CP factors (A, B, C) of the noiseless tensor."""
    live = [p for p in paths if p.kind != "Blocked"]
    J, T, K = combiners.W.shape[1], precoders.Omega.shape[1], carrier.num_subcarriers
    if not live:
        return np.zeros((J, 0), complex), np.zeros((T, 0), complex), np.zeros((K, 0), complex)
    lam = carrier.wavelength
    a_r = steering_matrix(subarray.num_antennas, subarray.antenna_spacing, lam, [p.local_aoa(subarray) for p in live])
    a_t = steering_matrix(user.num_antennas, user.antenna_spacing, lam, [p.aod for p in live])
    A = combiners.W.T @ a_r
    B = precoders.Omega.T @ a_t.conj()
    C = np.column_stack([path_gains(p, carrier) for p in live])
    return A, B, C


def cp_compose(A: np.ndarray, B: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.einsum("jp,tp,kp->jtk", A, B, C)


def complex_noise(shape, power: float, rng: np.random.Generator) -> np.ndarray:
    """Circular complex Gaussian with E|n|^2 = power."""
    return np.sqrt(power / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_snapshots(scene: Scene, subarray: RisSubarray, user: User, sounding: SoundingConfig,
                       carrier: CarrierConfig, paths: Sequence[PathParams] | None = None,
                       combiners: CombinerBank | None = None,
                       precoders: PrecoderTrack | None = None) -> MeasurementTensor:
    """Record T snapshots of J combined measurements on every subcarrier.

    The channel is frozen over the T snapshots. A blocked link yields a pure
    noise tensor with ``blocked=True``.
    """
    if paths is None:
        paths = ground_truth_paths(scene, subarray, user, carrier)
    if combiners is None:
        combiners = make_combiners(subarray.num_antennas, sounding.J, sounding.combiner_seed)
    if precoders is None:
        precoders = make_precoders(user.num_antennas, sounding.T, sounding.power_w, sounding.precoder_seed,
                                   spacing_ratio=user.antenna_spacing / carrier.wavelength)
    A, B, Cf = cp_factors(paths, subarray, user, combiners, precoders, carrier)
    data = cp_compose(A, B, Cf)
    if carrier.noise_power > 0:
        data = data + complex_noise(data.shape, carrier.noise_power, np.random.default_rng(sounding.noise_seed))
    blocked = all(p.kind == "Blocked" for p in paths)
    meta = {
        "M": subarray.num_antennas,
        "Q": user.num_antennas,
        "subarray": [subarray.panel_id, subarray.index],
        "user": user.user_id,
        "combiner_seed": sounding.combiner_seed,
        "precoder_seed": sounding.precoder_seed,
        "noise_seed": sounding.noise_seed,
        "power_w": sounding.power_w,
    }
    return MeasurementTensor(data, combiners, precoders, carrier, tuple(paths), sounding.noise_seed, blocked, meta)


def save_tensor(tensor: MeasurementTensor | np.ndarray, path, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (row-major J,T,K, complex128 interleaved) and a JSON sidecar."""
    path = Path(path)
    data = tensor.data if isinstance(tensor, MeasurementTensor) else np.asarray(tensor)
    info = {"shape": list(data.shape), "dtype": "complex128", "order": "C", "layout": "re,im interleaved"}
    if isinstance(tensor, MeasurementTensor):
        c = tensor.carrier
        info.update(tensor.meta)
        info["carrier"] = {
            "center_frequency": c.center_frequency,
            "bandwidth": c.bandwidth,
            "num_subcarriers": c.num_subcarriers,
            "water_vapor_fraction": c.water_vapor_fraction,
            "noise_power": c.noise_power,
        }
        info["blocked"] = tensor.blocked
    if meta:
        info.update(meta)
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    np.ascontiguousarray(data, dtype=np.complex128).tofile(bin_path)
    json_path.write_text(json.dumps(info, sort_keys=True, indent=2))
    return bin_path, json_path


def load_tensor(path) -> tuple[np.ndarray, dict]:
    """Inverse of :func:`save_tensor`; ``path`` may name the .bin or the .json."""
    path = Path(path)
    info = json.loads(path.with_suffix(".json").read_text())
    data = np.fromfile(path.with_suffix(".bin"), dtype=np.complex128)
    shape = tuple(info["shape"])
    if data.size != int(np.prod(shape)):
        raise ValueError(f"tensor file holds {data.size} values, sidecar says {shape}")
    return data.reshape(shape), info
