"""Photon sources: the idealized four-photon input and truncated SPDC pairs."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

from .elements import hwp
from .fock import H, V, FockError, FockState, ModeId, ModeRegister, apply_mode_transform, tensor_product

# spatial path labels of the four prepared photons
PATH_A, PATH_A2, PATH_B, PATH_B2 = "A", "A'", "B", "B'"
# crystal output path of each side (both pair photons, orthogonal polarizations)
SRC = {"A": "srcA", "B": "srcB"}
# unused input port of each splitting PBS
VAC = {"A": "vacA", "B": "vacB"}
SIDE_PATHS = {"A": (PATH_A, PATH_A2), "B": (PATH_B, PATH_B2)}


@dataclass(frozen=True)
class SourceConfig:
    """Source settings.

    ``alpha`` is the amplitude kept on the unrotated polarization of each
    prepared photon (``|beta|**2 = 1 - alpha**2``); ``p`` is the pair
    amplitude per pulse (``tanh`` of the squeezing parameter).
    """

    alpha: float = 1 / math.sqrt(2)
    p: float = math.sqrt(3e-3)
    theta_a: float = 0.0
    theta_b: float = 0.0
    n_pair_max: int = 2

    def __post_init__(self):
        _check_alpha(self.alpha)
        if self.p < 0:
            raise FockError("pair amplitude p must be non-negative")
        if self.n_pair_max not in (1, 2):
            raise FockError("n_pair_max must be 1 or 2")

    @property
    def beta(self) -> float:
        return math.sqrt(max(0.0, 1.0 - self.alpha ** 2))


def _check_alpha(alpha: float):
    if not 0.0 <= alpha <= 1.0:
        raise FockError(f"alpha must lie in [0, 1], got {alpha}")


def _single_photon(path: str, amp_h: complex, amp_v: complex) -> FockState:
    reg = ModeRegister([ModeId(path, H), ModeId(path, V)])
    terms = {}
    if amp_h:
        terms[(1, 0)] = complex(amp_h)
    if amp_v:
        terms[(0, 1)] = complex(amp_v)
    return FockState(reg, terms)


def four_photon_input(alpha: float) -> FockState:
    """(a H + b V)_A (a V + b H)_A' (a H + b V)_B (a V + b H)_B'."""
    _check_alpha(alpha)
    beta = math.sqrt(max(0.0, 1.0 - alpha ** 2))
    state = _single_photon(PATH_A, alpha, beta)
    state = tensor_product(state, _single_photon(PATH_A2, beta, alpha))
    state = tensor_product(state, _single_photon(PATH_B, alpha, beta))
    return tensor_product(state, _single_photon(PATH_B2, beta, alpha))


def tmsv_truncated(p: float, theta: float, modes: Sequence[ModeId], n_pair_max: int = 2) -> FockState:
    """Two-mode squeezed vacuum kept up to ``n_pair_max`` pairs, renormalized.

    ``modes`` is the (signal, idler) pair of modes.
    """
    if p < 0:
        raise FockError("pair amplitude p must be non-negative")
    if p > 0.2:
        warnings.warn(f"p = {p} is large; truncation at {n_pair_max} pairs is crude", stacklevel=2)
    signal, idler = modes
    weights = [p ** (2 * n) for n in range(n_pair_max + 1)]
    norm = math.sqrt(sum(weights))
    terms = {}
    for n in range(n_pair_max + 1):
        amp = complex(math.cos(n * theta), math.sin(n * theta)) * p ** n / norm
        if amp != 0:
            terms[(n, n)] = amp
    return FockState(ModeRegister([signal, idler]), terms)


def tmsv_side(cfg: SourceConfig, side: str) -> FockState:
    theta = cfg.theta_a if side == "A" else cfg.theta_b
    src = SRC[side]
    return tmsv_truncated(cfg.p, theta, (ModeId(src, H), ModeId(src, V)), cfg.n_pair_max)


def spdc_input(cfg: SourceConfig) -> FockState:
    """Product of the truncated pair states of both crystal directions."""
    return tensor_product(tmsv_side(cfg, "A"), tmsv_side(cfg, "B"))


def prep_hwp_angles(alpha: float) -> Tuple[float, float]:
    """Half-wave plate angles turning H into ``aH + bV`` and V into ``aV + bH``.

    With ``hwp(theta)``: H -> cos(2 theta) H + sin(2 theta) V, so the plate on the
    unprimed path sits at ``acos(alpha)/2`` and the one on the primed path at
    ``acos(-alpha)/2``.
    """
    _check_alpha(alpha)
    return math.acos(alpha) / 2.0, math.acos(-alpha) / 2.0


def apply_state_prep(state: FockState, alpha: float, side: str) -> FockState:
    """Rotate the two photons of one side after the splitting PBS."""
    _check_alpha(alpha)
    if side not in SIDE_PATHS:
        raise FockError(f"side must be 'A' or 'B', got {side!r}")
    theta, theta2 = prep_hwp_angles(alpha)
    unprimed, primed = SIDE_PATHS[side]
    for path, angle in ((unprimed, theta), (primed, theta2)):
        internals = sorted({m.internal for m in state.register.modes_on(path)})
        if not internals:
            raise FockError(f"path {path} not in register")
        state = apply_mode_transform(state, hwp(path, angle, internals))
    return state
