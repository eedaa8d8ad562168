"""Two-qubit state tomography: simulated counts, maximum likelihood and MH error bars.

Measurements are the nine local Pauli pairs. Each single-qubit setting has
a ``+`` and a ``-`` outcome (Z: H/V, X: D/A, Y: R/L), so a setting such as
``("X", "Z")`` yields four counts ordered ``++, +-, -+, --``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .detection import PSI_MINUS, DensityMatrix2Q
from .fock import FockError

PAULI_SETTINGS: Tuple[Tuple[str, str], ...] = tuple(itertools.product("XYZ", repeat=2))

_S = 1 / np.sqrt(2)
_EIGENVECTORS = {
    "Z": (np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)),
    "X": (np.array([_S, _S], dtype=complex), np.array([_S, -_S], dtype=complex)),
    "Y": (np.array([_S, 1j * _S], dtype=complex), np.array([_S, -1j * _S], dtype=complex)),
}

MLE_TOL = 1e-10
MLE_MAX_ITER = 100_000
MH_BURN_IN = 10_000
MH_THINNING = 10
MH_TARGET_ACCEPTANCE = 0.3


class TomographyError(FockError):
    """Invalid tomography input or a reconstruction that failed to converge."""


def setting_projectors(setting: Tuple[str, str]) -> np.ndarray:
    """The four rank-one projectors of one local setting, shape (4, 4, 4)."""
    try:
        va, vb = _EIGENVECTORS[setting[0]], _EIGENVECTORS[setting[1]]
    except KeyError:
        raise TomographyError(f"unknown setting {setting!r}; use X, Y or Z per qubit") from None
    out = []
    for ua in va:
        for ub in vb:
            psi = np.kron(ua, ub)
            out.append(np.outer(psi, psi.conj()))
    return np.array(out)


def _all_projectors(settings: Sequence[Tuple[str, str]]) -> np.ndarray:
    return np.concatenate([setting_projectors(s) for s in settings])


@dataclass(frozen=True)
class TomographyCounts:
    """Outcome counts for each measured setting.

    ``counts[s]`` holds the four outcome counts of ``settings[s]``; every
    row sums to ``shots``. Real-valued (expected) counts are accepted, which
    is how exact probabilities are fed to the estimators.
    """

    settings: Tuple[Tuple[str, str], ...]
    counts: np.ndarray
    shots: float

    def __post_init__(self):
        settings = tuple(tuple(s) for s in self.settings)
        object.__setattr__(self, "settings", settings)
        counts = np.asarray(self.counts, dtype=float)
        object.__setattr__(self, "counts", counts)
        if counts.shape != (len(settings), 4):
            raise TomographyError(f"counts must have shape ({len(settings)}, 4), got {counts.shape}")
        if np.any(counts < 0):
            raise TomographyError("counts must be non-negative")
        if not np.allclose(counts.sum(axis=1), self.shots, rtol=1e-9, atol=1e-9):
            raise TomographyError("every setting's counts must sum to the shot number")

    @property
    def total(self) -> float:
        return float(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class FidelitySamples:
    """Fidelities to the singlet of states drawn by the MH chain."""

    samples: np.ndarray
    acceptance_rate: float
    step_size: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if np.any(s < -1e-12) or np.any(s > 1 + 1e-12):
            raise TomographyError("fidelity samples must lie in [0, 1]")

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def std(self) -> float:
        return float(np.std(self.samples, ddof=1))


def born_probabilities(rho: np.ndarray, settings: Sequence[Tuple[str, str]] = PAULI_SETTINGS) -> np.ndarray:
    """Outcome probabilities, shape ``(len(settings), 4)``."""
    proj = _all_projectors(settings)
    p = np.real(np.einsum("kij,ji->k", proj, rho))
    return np.clip(p, 0.0, None).reshape(len(settings), 4)


def simulate_counts(d: DensityMatrix2Q, shots: int, seed=None,
                    settings: Sequence[Tuple[str, str]] = PAULI_SETTINGS) -> TomographyCounts:
    """Multinomial counts for every setting, reproducible for a given seed."""
    if not d.present:
        raise TomographyError("cannot measure an absent state")
    if shots <= 0:
        raise TomographyError("shots must be positive")
    rng = np.random.default_rng(seed)
    probs = born_probabilities(d.rho, settings)
    probs = probs / probs.sum(axis=1, keepdims=True)
    counts = np.array([rng.multinomial(shots, p) for p in probs])
    return TomographyCounts(tuple(settings), counts, shots)


def expected_counts(d: DensityMatrix2Q, shots: float,
                    settings: Sequence[Tuple[str, str]] = PAULI_SETTINGS) -> TomographyCounts:
    """Noise-free counts ``shots * p`` (the infinite-statistics limit)."""
    probs = born_probabilities(d.rho, settings)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return TomographyCounts(tuple(settings), shots * probs, shots)


def _check_complete(settings: Sequence[Tuple[str, str]]):
    proj = _all_projectors(settings).reshape(-1, 16)
    if np.linalg.matrix_rank(proj, tol=1e-9) < 16:
        raise TomographyError("measurement settings are not informationally complete")


def linear_inversion(c: TomographyCounts) -> np.ndarray:
    """Least-squares Hermitian, trace-one estimate (may have negative eigenvalues)."""
    _check_complete(c.settings)
    proj = _all_projectors(c.settings).reshape(-1, 16)
    f = c.frequencies().reshape(-1)
    # p_k = sum_ij P_k[i, j] rho[j, i] = proj_k . vec(rho.T)
    x, *_ = np.linalg.lstsq(proj, f.astype(complex), rcond=None)
    rho = x.reshape(4, 4).T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def _log_likelihood(rho: np.ndarray, proj: np.ndarray, weights: np.ndarray) -> float:
    p = np.real(np.einsum("kij,ji->k", proj, rho))
    mask = weights > 0
    if np.any(p[mask] <= 0):
        return -np.inf
    return float(np.sum(weights[mask] * np.log(p[mask])))


def _positive_start(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w.min() > 1e-9:
        return rho
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    rho = (v * w) @ v.conj().T
    return 0.99 * rho + 0.01 * np.eye(4) / 4


def mle_reconstruct(c: TomographyCounts, tol: float = MLE_TOL,
                    max_iter: int = MLE_MAX_ITER) -> DensityMatrix2Q:
    """Maximum-likelihood state by the diluted iterative R rho R algorithm.

    The log-likelihood is normalized per count. Iteration stops once one
    step improves it by less than ``tol``.
    """
    if c.total <= 0:
        raise TomographyError("no counts to reconstruct from")
    proj = _all_projectors(c.settings)
    weights = (c.counts / c.total).reshape(-1)
    rho = _positive_start(linear_inversion(c))
    logl = _log_likelihood(rho, proj, weights)
    eye = np.eye(4)
    improvement = np.inf
    for it in range(1, max_iter + 1):
        p = np.real(np.einsum("kij,ji->k", proj, rho))
        ratio = np.divide(weights, p, out=np.zeros_like(weights), where=weights > 0)
        r = np.einsum("k,kij->ij", ratio, proj)
        eps = None
        while True:
            step = r if eps is None else (eye + eps * r) / (1 + eps)
            new = step @ rho @ step
            new = (new + new.conj().T) / 2
            new /= np.trace(new).real
            new_logl = _log_likelihood(new, proj, weights)
            if new_logl >= logl or (eps is not None and eps < 1e-12):
                break
            eps = 1.0 if eps is None else eps / 2
        improvement = new_logl - logl
        if improvement < 0:
            break
        rho, logl = new, new_logl
        if improvement < tol:
            break
    else:
        raise TomographyError(
            f"MLE did not converge in {max_iter} iterations (last improvement {improvement:.3e})"
        )
    return DensityMatrix2Q(rho, 1.0)


def fidelity_to_singlet(rho: np.ndarray) -> float:
    return float(np.clip(np.real(PSI_MINUS.conj() @ rho @ PSI_MINUS), 0.0, 1.0))


def _rho_from(a: np.ndarray) -> np.ndarray:
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def mh_fidelity_distribution(c: TomographyCounts, n_samples: int = 1000, seed=None,
                             burn_in: int = MH_BURN_IN, thinning: int = MH_THINNING,
                             start: DensityMatrix2Q | None = None) -> FidelitySamples:
    """Sample states in proportion to likelihood times the Hilbert-Schmidt prior.

    States are ``rho = A A^dag / Tr`` with ``A`` a 4x4 complex matrix under a
    standard Gaussian (Ginibre) prior. Proposals add isotropic Gaussian noise
    to ``A``; the step size is tuned during burn-in toward an acceptance of
    0.3 and then frozen.
    """
    if n_samples < 100:
        raise TomographyError("n_samples must be at least 100")
    if c.total <= 0:
        raise TomographyError("degenerate counts: nothing was measured")
    rng = np.random.default_rng(seed)
    proj = _all_projectors(c.settings)
    counts = c.counts.reshape(-1)

    def log_post(a):
        rho = _rho_from(a)
        return _log_likelihood(rho, proj, counts) - float(np.sum(np.abs(a) ** 2)), rho

    rho0 = (start or mle_reconstruct(c)).rho
    w, v = np.linalg.eigh(rho0)
    w = np.clip(w, 1e-6, None)
    a = (v * np.sqrt(w / w.sum())) @ v.conj().T * 4.0
    cur, rho = log_post(a)
    step = 0.1 / np.sqrt(max(c.total, 1.0))
    window_acc = 0
    for i in range(1, burn_in + 1):
        prop = a + step * (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / np.sqrt(2)
        new, new_rho = log_post(prop)
        if np.log(rng.random()) < new - cur:
            a, cur, rho = prop, new, new_rho
            window_acc += 1
        if i % 100 == 0:
            step *= np.exp(window_acc / 100 - MH_TARGET_ACCEPTANCE)
            window_acc = 0

    samples = np.empty(n_samples)
    accepted = 0
    for k in range(n_samples * thinning):
        prop = a + step * (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / np.sqrt(2)
        new, new_rho = log_post(prop)
        if np.log(rng.random()) < new - cur:
            a, cur, rho = prop, new, new_rho
            accepted += 1
        if (k + 1) % thinning == 0:
            samples[(k + 1) // thinning - 1] = fidelity_to_singlet(rho)
    return FidelitySamples(samples, accepted / (n_samples * thinning), float(step))


def random_density_matrix(rng: np.random.Generator, rank: int = 4) -> DensityMatrix2Q:
    """Hilbert-Schmidt random state of the given rank (Ginibre construction)."""
    g = (rng.standard_normal((4, rank)) + 1j * rng.standard_normal((4, rank))) / np.sqrt(2)
    rho = _rho_from(g)
    return DensityMatrix2Q((rho + rho.conj().T) / 2, 1.0)
