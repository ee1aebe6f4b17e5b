"""
Frequency-domain independent component analysis for convolutive mixtures.

Each bin f of an N-point transform holds its own complex n x n unmixing matrix
W(f). Blocks of the record are transformed, filtered through W(f) and used for
one natural-gradient step each:

    u = W x,   y = tanh(Re u) + i tanh(Im u),   dW = (I - y u^H) W
    W <- W + alpha * dW + eta * dW_previous_block

After the passes the bins are aligned for permutation, rescaled, normalized,
converted to FIR filters and inverted into mixing filters.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from errors import DegenerateError, DimensionError, DivergenceError, IllConditionedError, ParameterError
from filters import FilterMatrix, apply_filter_matrix, spectral_to_filters
from signal_core import MultichannelRecord, block_spectra, remove_mean_record

logger = logging.getLogger(__name__)

MAX_CONDITION = 1.0e12
RIDGE_FACTOR = 1.0e-8
MAX_ALIGNMENT_REFINEMENTS = 10


class IcaConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    fft_size: int = 1024
    hop: Optional[int] = None  # None means fft_size (non-overlapping blocks)
    learning_rate: float = Field(1.0e-3, ge=0)
    momentum: float = Field(1.0e-3, ge=0, lt=1)
    max_passes: int = Field(200, ge=1)
    convergence_tol: float = Field(1.0e-5, gt=0)
    seed: int = 0
    permutation_alignment: Literal["envelope", "none"] = "envelope"
    alignment_window: int = Field(8, ge=1)
    alignment_margin: float = Field(3.0, ge=0)  # in null standard deviations, 1 / sqrt(n_blocks)
    scale_resolution: bool = True
    normalize_bins: bool = True
    shuffle_blocks: bool = False
    ridge: Optional[float] = Field(None, ge=0)

    @field_validator("fft_size")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value < 2 or value & (value - 1):
            raise ValueError(f"fft_size must be a power of two, got {value}")
        return value

    @model_validator(mode="after")
    def _hop_within_block(self) -> "IcaConfig":
        if self.hop is not None and not 0 < self.hop <= self.fft_size:
            raise ValueError(f"hop must lie in (0, fft_size={self.fft_size}], got {self.hop}")
        return self

    @property
    def block_hop(self) -> int:
        return self.hop or self.fft_size


@dataclass(frozen=True)
class SpectralUnmixing:
    bins: np.ndarray  # (K, n, n) complex, K = fft_size // 2 + 1
    fft_size: int

    def __post_init__(self):
        bins = np.array(self.bins, dtype=np.complex128)
        if bins.ndim != 3 or bins.shape[1] != bins.shape[2]:
            raise DimensionError(f"Unmixing bins must be shaped (K, n, n), got {bins.shape}.")
        if bins.shape[0] != self.fft_size // 2 + 1:
            raise DimensionError(f"{bins.shape[0]} bins do not match an FFT size of {self.fft_size}.")
        if not np.all(np.isfinite(bins)):
            raise ParameterError("Unmixing matrices must be finite.")
        object.__setattr__(self, "bins", bins)

    @property
    def n(self) -> int:
        return self.bins.shape[1]


@dataclass(frozen=True)
class IcaResult:
    unmixing: SpectralUnmixing
    unmixing_time: FilterMatrix
    mixing_time: FilterMatrix
    sources_estimated: MultichannelRecord
    passes_used: int
    final_update_norm: float
    converged: bool
    convergence: tuple[float, ...] = field(default_factory=tuple)
    permutation_changes: int = 0


def initialize_unmixing(n: int, fft_size: int) -> SpectralUnmixing:
    if n < 2:
        raise ParameterError(f"Separation needs at least 2 channels, got {n}.")
    if fft_size < 2 or fft_size & (fft_size - 1):
        raise ParameterError(f"fft_size must be a power of two, got {fft_size}.")
    bins = np.tile(np.eye(n, dtype=np.complex128), (fft_size // 2 + 1, 1, 1))
    return SpectralUnmixing(bins, fft_size)


def _gradient(bins: np.ndarray, x_block: np.ndarray) -> np.ndarray:
    u = (bins @ x_block[..., None])[..., 0]
    y = np.tanh(u.real) + 1j * np.tanh(u.imag)
    eye = np.eye(bins.shape[1])
    return (eye - y[:, :, None] * u.conj()[:, None, :]) @ bins


def natural_gradient(W: SpectralUnmixing, x_block: np.ndarray) -> np.ndarray:
    """Natural-gradient direction (I - y u^H) W for every bin, shaped like W.bins."""
    x_block = np.asarray(x_block, dtype=np.complex128)
    if x_block.shape != W.bins.shape[:2]:
        raise DimensionError(f"Block of shape {x_block.shape} does not match bins {W.bins.shape[:2]}.")
    return _gradient(W.bins, x_block)


def _first_bad_bin(bins: np.ndarray) -> int:
    bad = np.flatnonzero(~np.isfinite(bins).all(axis=(1, 2)))
    return int(bad[0]) if bad.size else -1


def ica_block_update(
    W: SpectralUnmixing,
    x_block: np.ndarray,
    learning_rate: float,
    momentum: float,
    prev_delta: Optional[np.ndarray] = None,
    pass_index: int = 0,
    block_index: int = 0,
) -> tuple[SpectralUnmixing, np.ndarray]:
    """
    One learning step on one block for all bins.

    W(t+1) = W(t) + learning_rate * dW(t) + momentum * dW(t-1)

    Returns the updated matrices and the raw direction dW(t), which is
    prev_delta of the next call.
    """
    delta = natural_gradient(W, x_block)
    if prev_delta is None:
        prev_delta = np.zeros_like(delta)
    bins = W.bins + learning_rate * delta + momentum * np.asarray(prev_delta)
    bad = _first_bad_bin(bins)
    if bad >= 0:
        raise DivergenceError(bad, pass_index, block_index)
    return SpectralUnmixing(bins, W.fft_size), delta


def _standardize(a: np.ndarray) -> np.ndarray:
    centred = a - a.mean(axis=-1, keepdims=True)
    std = centred.std(axis=-1, keepdims=True)
    return np.divide(centred, std, out=np.zeros_like(centred), where=std > 0)


def _best_permutation(
    env: np.ndarray, ref: np.ndarray, candidates, current: np.ndarray, margin: float
) -> np.ndarray:
    """A candidate replaces the current order only when its score is higher by more than margin."""
    current_score = float(np.mean(env[current] * ref))
    best, best_score = current, current_score + margin
    for perm in candidates:
        score = float(np.mean(env[perm] * ref))
        if score > best_score + 1e-12:
            best, best_score = perm, score
    return best


def align_permutations(
    bins: np.ndarray, spectra: np.ndarray, window: int = 8, margin_sigmas: float = 3.0
) -> tuple[np.ndarray, int]:
    """
    Reorder the rows of each bin's unmixing matrix so that output k carries the
    same source in every bin.

    Args:
        bins: (K, n, n) unmixing matrices.
        spectra: (n_blocks, K, n) block spectra the matrices were learned on.
        window: number of preceding aligned bins forming the reference envelope.
        margin_sigmas: gain in envelope correlation a re-ordering must show, in
            units of 1 / sqrt(n_blocks), the spread of the correlation between
            independent envelopes. Stationary outputs stay in their order.

    Returns:
        The re-ordered bins and the number of bins whose order changed.
    """
    n_bins, n, _ = bins.shape
    margin = margin_sigmas / np.sqrt(spectra.shape[0])
    outputs = np.einsum("kij,bkj->kib", bins, spectra)
    env = _standardize(np.abs(outputs))
    identity = np.arange(n)
    candidates = [np.array(p) for p in itertools.permutations(range(n))]

    perms = np.tile(identity, (n_bins, 1))
    aligned = env.copy()
    for k in range(1, n_bins):
        ref = _standardize(aligned[max(0, k - window) : k].mean(axis=0))
        perms[k] = _best_permutation(env[k], ref, candidates, identity, margin)
        aligned[k] = env[k][perms[k]]

    # refine against the centroid of all aligned bins
    for _ in range(MAX_ALIGNMENT_REFINEMENTS):
        centroid = _standardize(aligned.mean(axis=0))
        changed = 0
        for k in range(n_bins):
            best = _best_permutation(env[k], centroid, candidates, perms[k], margin)
            if not np.array_equal(best, perms[k]):
                perms[k] = best
                aligned[k] = env[k][best]
                changed += 1
        if not changed:
            break

    moved = int(np.count_nonzero((perms != identity).any(axis=1)))
    return bins[np.arange(n_bins)[:, None], perms], moved


def resolve_scaling(bins: np.ndarray) -> np.ndarray:
    """Scale row i of W(f) by [W(f)^-1]_ii so the recovered mixing matrix has a unit diagonal."""
    inverse = np.linalg.pinv(bins)
    diag = np.diagonal(inverse, axis1=1, axis2=2)
    return diag[:, :, None] * bins


def normalize_unmixing(W: SpectralUnmixing) -> SpectralUnmixing:
    """Scale each output row by its largest spectral magnitude over columns and bins."""
    peak = np.abs(W.bins).max(axis=(0, 2))
    if np.any(peak == 0):
        row = int(np.flatnonzero(peak == 0)[0])
        raise DegenerateError(f"Unmixing row {row} is all-zero and cannot be normalized.")
    return SpectralUnmixing(W.bins / peak[None, :, None], W.fft_size)


def default_ridge(bins: np.ndarray) -> float:
    n = bins.shape[1]
    return RIDGE_FACTOR * float(np.mean(np.sum(np.abs(bins) ** 2, axis=(1, 2)))) / n


def invert_bins(bins: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """Per-bin inverse; with ridge > 0 it is (W^H W + ridge I)^-1 W^H."""
    if ridge < 0:
        raise ParameterError(f"Ridge must be >= 0, got {ridge}.")
    if ridge == 0:
        condition = np.linalg.cond(bins)
        bad = np.flatnonzero(~(condition <= MAX_CONDITION))
        if bad.size:
            k = int(bad[0])
            raise IllConditionedError(k, float(condition[k]))
        return np.linalg.inv(bins)
    n = bins.shape[1]
    herm = np.conj(np.swapaxes(bins, 1, 2))
    return np.linalg.solve(herm @ bins + ridge * np.eye(n), herm)


def invert_to_mixing(W: SpectralUnmixing, ridge: Optional[float] = None) -> FilterMatrix:
    """Mixing filters A = W^-1 per bin, centred so tap fft_size // 2 is zero delay."""
    if ridge is None:
        ridge = default_ridge(W.bins)
    mixing = invert_bins(W.bins, ridge)
    return spectral_to_filters(mixing, W.fft_size, "mixing", centered=True)


def separation_sir_db(unmixing: np.ndarray, mixing: np.ndarray) -> np.ndarray:
    """
    Signal-to-interference ratio (dB) of each output of the global system W A,
    pairing outputs with sources so the total matched power is largest.
    """
    power = np.sum(np.abs(unmixing @ mixing) ** 2, axis=0)
    n = power.shape[0]
    pairing = max(itertools.permutations(range(n)), key=lambda p: sum(power[i, p[i]] for i in range(n)))
    sir = np.empty(n)
    for i, j in enumerate(pairing):
        interference = np.delete(power[i], j).sum()
        sir[i] = 10 * np.log10(power[i, j] / max(interference, np.finfo(float).tiny))
    return sir


def run_ica(record: MultichannelRecord, config: IcaConfig, progress: bool = False) -> IcaResult:
    """
    Off-line frequency-domain ICA of a record.

    1. remove the mean of every channel
    2. start from identity unmixing matrices
    3-7. pass over the blocks, updating every bin per block, until the mean
         per-pass update norm falls below the tolerance or max_passes is reached
    8. align permutations, resolve per-bin scale, normalize and inverse-transform
    9. convolve the unmixing filters with the record to estimate the sources
    """
    n = record.n_channels
    size, hop = config.fft_size, config.block_hop
    if record.length < size:
        raise ParameterError(f"Record of {record.length} samples is shorter than fft_size {size}.")

    centred = remove_mean_record(record)
    bins = initialize_unmixing(n, size).bins.copy()
    spectra = np.transpose(block_spectra(centred, size, hop), (0, 2, 1))  # (B, K, n)
    n_blocks = spectra.shape[0]

    if config.normalize_bins:
        rms = np.sqrt(np.mean(np.abs(spectra) ** 2, axis=(0, 2)))
        gain = np.divide(1.0, rms, out=np.ones_like(rms), where=rms > 0)
    else:
        gain = np.ones(bins.shape[0])
    scaled = spectra * gain[None, :, None]

    history: list[float] = []
    converged = False
    moved = 0
    if config.learning_rate == 0:
        logger.warning("[!] Learning rate is 0; unmixing filters stay at their initialization.")
    else:
        logger.info(f"Learning on {n_blocks} blocks x {bins.shape[0]} bins (fft_size={size}, hop={hop})")
        rng = np.random.default_rng(config.seed)
        alpha, eta = config.learning_rate, config.momentum
        prev_delta = np.zeros_like(bins)
        for pass_index in tqdm(range(config.max_passes), desc="ICA passes", disable=not progress):
            order = rng.permutation(n_blocks) if config.shuffle_blocks else range(n_blocks)
            gradient_sum = np.zeros_like(bins)
            for block_index in order:
                delta = _gradient(bins, scaled[block_index])
                bins = bins + alpha * delta + eta * prev_delta
                prev_delta = delta
                bad = _first_bad_bin(bins)
                if bad >= 0:
                    raise DivergenceError(bad, pass_index, int(block_index))
                gradient_sum += delta
            norm = float(np.mean(np.linalg.norm(alpha * gradient_sum / n_blocks, axis=(1, 2))))
            history.append(norm)
            logger.debug(f"pass {pass_index}: mean update norm {norm:.3e}")
            if norm < config.convergence_tol:
                converged = True
                break

        bins = bins * gain[:, None, None]
        if config.permutation_alignment == "envelope":
            bins, moved = align_permutations(
                bins, spectra, config.alignment_window, config.alignment_margin
            )
            logger.info(f"Permutation alignment re-ordered {moved} of {bins.shape[0]} bins")
        if config.scale_resolution:
            bins = resolve_scaling(bins)

    unmixing = normalize_unmixing(SpectralUnmixing(bins, size))
    unmixing_time = spectral_to_filters(unmixing.bins, size, "unmixing", centered=True)
    mixing_time = invert_to_mixing(unmixing, config.ridge)
    sources = apply_filter_matrix(unmixing_time, centred)

    final = history[-1] if history else 0.0
    logger.info(f"[✓] ICA finished after {len(history)} passes (final update norm {final:.3e}, converged={converged})")
    return IcaResult(
        unmixing=unmixing,
        unmixing_time=unmixing_time,
        mixing_time=mixing_time,
        sources_estimated=sources,
        passes_used=len(history),
        final_update_norm=final,
        converged=converged,
        convergence=tuple(history),
        permutation_changes=moved,
    )
