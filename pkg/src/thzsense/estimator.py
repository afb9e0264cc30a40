"""Sensing parameters from CP factor columns.

Each parameter is the maximizer of a normalized correlation between an
estimated factor column and its model vector:

* AoA: ``zeta(phi) = W^T a_r(phi)`` against columns of A,
* AoD: ``xi(theta) = Omega^T conj(a_t(theta))`` against columns of B,
* ToA: the subcarrier ramp ``Lambda(tau)[k] = exp(-j 2 pi k W tau / K)``
  against columns of C.

The score is scale invariant, so the CP scaling ambiguity cannot move the
argmax. A coarse grid locates the peak; golden-section search refines it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import C, CarrierConfig, free_space_magnitude, steering_matrix
from .cpd import FactorTriple
from .signal import CombinerBank, MeasurementTensor, PrecoderTrack

INV_PHI = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SearchGrid:
    angle_step: float = math.radians(0.5)
    angle_max: float = math.pi / 2
    delay_oversample: int = 4
    tau_max: float | None = None
    refine_steps: int = 20

    def __post_init__(self):
        if self.angle_step <= 0 or self.delay_oversample < 1 or self.refine_steps < 0:
            raise ValueError("grid steps must be positive")

    @property
    def angles(self) -> np.ndarray:
        n = int(round(self.angle_max / self.angle_step))
        return np.arange(-n, n + 1) * self.angle_step

    def delay_step(self, carrier: CarrierConfig) -> float:
        return 1.0 / (self.delay_oversample * carrier.bandwidth)


@dataclass
class SensingEstimate:
    aoa: float
    aod: float
    toa: float
    gain: complex
    link_kind: str = "LoS"
    normalized_gain: float = float("nan")
    scores: dict = field(default_factory=dict)


def golden_max(f, a: float, b: float, steps: int = 20) -> float:
    """Golden-section search for the maximizer of a unimodal ``f`` on [a, b]."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(steps):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    return c if fc >= fd else d


def _check_column(col: np.ndarray) -> np.ndarray:
    col = np.asarray(col, dtype=complex).ravel()
    norm = np.linalg.norm(col)
    if norm == 0 or not np.isfinite(norm):
        raise ValueError("factor column is zero or not finite")
    return col / norm


def _normalized_corr(col_unit: np.ndarray, models: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(models, axis=0)
    return np.abs(col_unit.conj() @ models) / np.where(norms > 0, norms, np.inf)


def _angle_search(col, model, grid: SearchGrid):
    u = _check_column(col)
    angles = grid.angles
    scores = _normalized_corr(u, model(angles))
    i = int(np.argmax(scores))
    lo = max(angles[i] - grid.angle_step, -grid.angle_max)
    hi = min(angles[i] + grid.angle_step, grid.angle_max)
    best = golden_max(lambda a: float(_normalized_corr(u, model([a]))[0]), lo, hi, grid.refine_steps)
    score = float(_normalized_corr(u, model([best]))[0])
    if score < scores[i]:
        best, score = float(angles[i]), float(scores[i])
    return float(best), min(score, 1.0)


def aoa_model(combiners: CombinerBank, spacing_ratio: float = 0.5):
    W = combiners.W
    return lambda angles: W.T @ steering_matrix(W.shape[0], spacing_ratio, 1.0, angles)


def aod_model(precoders: PrecoderTrack, spacing_ratio: float = 0.5):
    Om = precoders.Omega
    return lambda angles: Om.T @ steering_matrix(Om.shape[0], spacing_ratio, 1.0, angles).conj()


def estimate_aoa(a_col, combiners: CombinerBank, grid: SearchGrid = SearchGrid(), spacing_ratio: float = 0.5):
    """Arrival angle (from the subarray boresight) and its correlation score."""
    return _angle_search(a_col, aoa_model(combiners, spacing_ratio), grid)


def estimate_aod(b_col, precoders: PrecoderTrack, grid: SearchGrid = SearchGrid(), spacing_ratio: float = 0.5):
    """Departure angle (from the user's link reference) and its score."""
    return _angle_search(b_col, aod_model(precoders, spacing_ratio), grid)


def delay_ramp(K: int, bandwidth: float, tau) -> np.ndarray:
    """Columns ``exp(-j 2 pi k W tau / K)`` for each delay in ``tau``."""
    k = np.arange(K)[:, None]
    return np.exp(-2j * np.pi * k * bandwidth * np.atleast_1d(tau)[None, :] / K)


def estimate_toa(c_col, carrier: CarrierConfig, grid: SearchGrid = SearchGrid(), literal_argmin: bool = False):
    """Delay of a subcarrier-mode column, in ``[0, K/W)``.

    The grid correlation at spacing ``1/(os*W)`` is one zero-padded FFT of
    length ``os*K``. Delays are only identifiable modulo ``K/W``.
    ``literal_argmin`` minimizes the score instead (for comparison only).
    """
    K = carrier.num_subcarriers
    if K < 2:
        raise ValueError("delay is unobservable with a single subcarrier")
    u = _check_column(c_col)
    if u.size != K:
        raise ValueError(f"column length {u.size} does not match K={K}")
    os_ = grid.delay_oversample
    step = grid.delay_step(carrier)
    period = carrier.delay_period
    scores = np.abs(np.fft.fft(u.conj(), os_ * K)) / math.sqrt(K)
    n_valid = len(scores)
    if grid.tau_max is not None and grid.tau_max < period:
        n_valid = int(grid.tau_max / step) + 1
    scores = scores[:n_valid]
    i = int(np.argmin(scores) if literal_argmin else np.argmax(scores))
    tau_i = i * step

    def corr(tau):
        return float(np.abs(u.conj() @ delay_ramp(K, carrier.bandwidth, tau)[:, 0]) / math.sqrt(K))

    if literal_argmin:
        return float(tau_i), float(scores[i])
    best = golden_max(corr, tau_i - step, tau_i + step, grid.refine_steps)
    score = corr(best)
    if score < scores[i]:
        best, score = tau_i, float(scores[i])
    return float(best % period), min(score, 1.0)


def recover_gain(c_col, tau: float, carrier: CarrierConfig) -> complex:
    """Least-squares amplitude after removing the delay ramp."""
    c = np.asarray(c_col, dtype=complex).ravel()
    lam = delay_ramp(carrier.num_subcarriers, carrier.bandwidth, tau)[:, 0]
    return complex(lam.conj() @ c / (lam.conj() @ lam).real)


def fold_scales(a_col, b_col, c_col, a_model_vec, b_model_vec):
    """Move the CP scaling of the A and B columns into the C column.

    With ``a = s1 * zeta`` and ``b = s2 * xi`` (``s1 s2 s3 = 1``), returns
    ``c * s1 * s2``, the C column with the model's own normalization.
    """
    s1 = np.vdot(a_model_vec, a_col) / np.vdot(a_model_vec, a_model_vec)
    s2 = np.vdot(b_model_vec, b_col) / np.vdot(b_model_vec, b_model_vec)
    return np.asarray(c_col) * s1 * s2


def los_reference_magnitude(r: float, carrier: CarrierConfig) -> float:
    """Mean over subcarriers of the LoS gain magnitude at distance ``r``."""
    return float(np.mean(free_space_magnitude(carrier.subcarrier_frequencies, r, carrier.absorption)))


def normalized_gain(gain: complex, tau: float, carrier: CarrierConfig) -> float:
    """|gain| relative to a LoS path of the same delay; 1 for LoS, |gamma rho| for NLoS."""
    if tau <= 0:
        return float("inf")
    return abs(gain) / los_reference_magnitude(C * tau, carrier)


def classify_link(gain_magnitude: float, eps: float) -> str:
    """LoS iff the magnitude reaches the threshold (boundary counts as LoS)."""
    if eps <= 0:
        raise ValueError("threshold must be positive")
    return "LoS" if gain_magnitude >= eps else "NLoS"


def calibrate_threshold(los_magnitudes, nlos_magnitudes) -> float:
    """Geometric mean of the median LoS and median NLoS magnitudes."""
    return float(math.sqrt(np.median(los_magnitudes) * np.median(nlos_magnitudes)))


def estimate_paths(tensor: MeasurementTensor, factors: FactorTriple, subarray, user,
                   grid: SearchGrid = SearchGrid(), eps: float = 0.9) -> list[SensingEstimate]:
    """Angles, delay, gain and link class for every CP component.

    ``eps`` thresholds the range-normalized gain (see :func:`normalized_gain`).
    """
    carrier = tensor.carrier
    lam = carrier.wavelength
    ra = subarray.antenna_spacing / lam
    rt = user.antenna_spacing / lam
    amodel = aoa_model(tensor.combiners, ra)
    bmodel = aod_model(tensor.precoders, rt)
    out = []
    for p in range(factors.rank):
        a, b, c = factors.A[:, p], factors.B[:, p], factors.C[:, p]
        phi, s_phi = estimate_aoa(a, tensor.combiners, grid, ra)
        theta, s_theta = estimate_aod(b, tensor.precoders, grid, rt)
        tau, s_tau = estimate_toa(c, carrier, grid)
        c_fold = fold_scales(a, b, c, amodel([phi])[:, 0], bmodel([theta])[:, 0])
        alpha = recover_gain(c_fold, tau, carrier)
        g = normalized_gain(alpha, tau, carrier)
        out.append(
            SensingEstimate(
                aoa=phi,
                aod=theta,
                toa=tau,
                gain=alpha,
                link_kind=classify_link(g, eps),
                normalized_gain=g,
                scores={"aoa": s_phi, "aod": s_theta, "toa": s_tau},
            )
        )
    return out
