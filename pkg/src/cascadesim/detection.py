"""Heralding, reduced two-qubit states and figures of merit.

The qubit basis is ordered ``HH, HV, VH, VV`` with the receiver path ``a``
as the first qubit and ``b`` as the second.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import sparse

from .fock import (H, OCC_DTYPE, FockError, FockState, group_rows, row_keys, count_in,
                   select)

PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)
QUBIT_LABELS = ("HH", "HV", "VH", "VV")


@dataclass(frozen=True)
class HeraldPattern:
    """Detector ports that must fire.

    ``ports`` name detector paths (``"Ve"`` is the V-output port of path e).
    For ``model="pnr"`` the exact photon numbers are given in ``counts``;
    ports not listed are traced out in both models.
    """

    ports: Tuple[str, ...] = ("Ve", "Hf")
    model: str = "threshold"
    counts: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "ports", tuple(self.ports))
        if self.model not in ("threshold", "pnr"):
            raise FockError(f"unknown detector model {self.model!r}")
        if self.model == "threshold":
            if not self.ports:
                raise FockError("empty herald pattern")
            if len(set(self.ports)) != len(self.ports):
                raise FockError("threshold pattern lists a detector twice")
        else:
            if not self.counts:
                object.__setattr__(self, "counts", {p: 1 for p in self.ports})
            if any(n < 0 for n in self.counts.values()):
                raise FockError("PNR counts must be non-negative")
            object.__setattr__(self, "ports", tuple(self.counts))

    @classmethod
    def from_modes(cls, modes: Sequence[Tuple[str, str]], model: str = "threshold",
                   counts: Sequence[int] | None = None) -> "HeraldPattern":
        """Build from ``(path, pol)`` pairs such as ``[("e", "V"), ("f", "H")]``."""
        ports = tuple(f"{pol}{path}" for path, pol in modes)
        if model == "pnr":
            counts = counts if counts is not None else [1] * len(ports)
            return cls(ports, "pnr", dict(zip(ports, counts)))
        return cls(ports, model)

    def accepts_port(self, port: str, n: int) -> bool:
        if self.model == "threshold":
            return n >= 1
        return n == self.counts[port]

    def accepts(self, port_counts: Sequence[int]) -> bool:
        if self.model == "threshold":
            return all(n >= 1 for n in port_counts)
        return all(n == self.counts[p] for p, n in zip(self.ports, port_counts))


VE_HF = HeraldPattern(("Ve", "Hf"))
VE_HF_PNR = HeraldPattern(model="pnr", counts={"Ve": 1, "Hf": 1, "He": 0, "Vf": 0})


@dataclass(frozen=True)
class DensityMatrix2Q:
    """Polarization state of the (a, b) photon pair.

    ``rho`` is conditioned on exactly one photon in each receiver path;
    ``in_subspace_weight`` is the probability of that event. When the weight
    is zero ``rho`` is ``None`` and every figure of merit reads 0.
    """

    rho: Optional[np.ndarray]
    in_subspace_weight: float = 1.0

    def __post_init__(self):
        if not -1e-12 <= self.in_subspace_weight <= 1 + 1e-12:
            raise FockError(f"subspace weight {self.in_subspace_weight} outside [0, 1]")
        if self.rho is None:
            return
        rho = np.asarray(self.rho, dtype=complex)
        object.__setattr__(self, "rho", rho)
        if rho.shape != (4, 4):
            raise FockError("two-qubit density matrix must be 4x4")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-12:
            raise FockError("density matrix is not Hermitian")
        if abs(np.trace(rho).real - 1.0) > 1e-12:
            raise FockError(f"density matrix trace {np.trace(rho).real} != 1")
        if np.min(np.linalg.eigvalsh(rho)) < -1e-10:
            raise FockError("density matrix has negative eigenvalues")

    @classmethod
    def absent(cls) -> "DensityMatrix2Q":
        return cls(None, 0.0)

    @classmethod
    def from_pure(cls, psi: np.ndarray, weight: float = 1.0) -> "DensityMatrix2Q":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()), weight)

    @classmethod
    def from_unnormalized(cls, block: np.ndarray, weight: float) -> "DensityMatrix2Q":
        tr = np.trace(block).real
        if tr <= 0:
            return cls.absent()
        rho = block / tr
        rho = (rho + rho.conj().T) / 2
        return cls(rho, float(min(max(weight, 0.0), 1.0)))

    @property
    def present(self) -> bool:
        return self.rho is not None


class HeraldOutcome(NamedTuple):
    herald_prob: float
    conditional: DensityMatrix2Q


class Fidelity(NamedTuple):
    total: float
    postselected: float


def _qubit_positions(register, path: str):
    modes = register.modes_on(path)
    if not modes:
        raise FockError(f"no modes on receiver path {path!r}")
    return [register.index(m) for m in modes], [0 if m.pol == H else 1 for m in modes], modes


def _block_arrays(state: FockState, qubit_paths: Sequence[str]):
    """Terms with one photon per receiver, as ``(rows, env_id, qubit_index, n_env)``.

    ``env_id`` numbers the distinct environment configurations: every mode
    except the receiver modes, plus the wavepacket index of each receiver
    photon (it is traced with the environment).
    """
    reg = state.register
    pos_a, pol_a, modes_a = _qubit_positions(reg, qubit_paths[0])
    pos_b, pol_b, modes_b = _qubit_positions(reg, qubit_paths[1])
    qubit_pos = set(pos_a) | set(pos_b)
    env_idx = [i for i in range(len(reg)) if i not in qubit_pos]
    occ = state.occ
    rows = np.flatnonzero((occ[:, pos_a].sum(axis=1) == 1) & (occ[:, pos_b].sum(axis=1) == 1))
    sub = occ[rows]
    ka = np.argmax(sub[:, pos_a], axis=1)
    kb = np.argmax(sub[:, pos_b], axis=1)
    q = 2 * np.asarray(pol_a)[ka] + np.asarray(pol_b)[kb]
    int_a = np.array([m.internal for m in modes_a], dtype=OCC_DTYPE)[ka]
    int_b = np.array([m.internal for m in modes_b], dtype=OCC_DTYPE)[kb]
    env = np.concatenate([sub[:, env_idx], int_a[:, None], int_b[:, None]], axis=1)
    if len(rows) == 0:
        return rows, np.zeros(0, dtype=np.int64), q, 0
    order, gid, n_env = group_rows(row_keys(env))
    env_id = np.empty(len(rows), dtype=np.int64)
    env_id[order] = gid
    return rows, env_id, q, n_env


def reduce_to_qubits(state: FockState, qubit_paths: Sequence[str] = ("a", "b")) -> DensityMatrix2Q:
    """Trace everything except the receiver polarizations.

    The returned weight is the fraction of ``state``'s norm with exactly one
    photon on each receiver path.
    """
    state = state.untagged()
    total = state.norm_sq()
    if total == 0:
        return DensityMatrix2Q.absent()
    rows, env_id, q, n_env = _block_arrays(state, qubit_paths)
    if n_env == 0:
        return DensityMatrix2Q.absent()
    mat = np.zeros((n_env, 4), dtype=complex)
    np.add.at(mat, (env_id, q), state.amp[rows])
    block = mat.T @ mat.conj()
    return DensityMatrix2Q.from_unnormalized(block, np.trace(block).real / total)


def project_herald(state: FockState, pattern: HeraldPattern) -> FockState:
    """Keep the terms compatible with the click pattern (unnormalized)."""
    mask = np.ones(len(state), dtype=bool)
    for port in pattern.ports:
        modes = state.register.modes_on(port)
        if not modes:
            raise FockError(f"detector port {port!r} has no modes in the register")
        counts = count_in(state, modes)
        allowed = [n for n in range(int(counts.max(initial=0)) + 1) if pattern.accepts_port(port, n)]
        mask &= np.isin(counts, allowed)
    return select(state, mask)


def herald(state: FockState, pattern: HeraldPattern = VE_HF,
           qubit_paths: Sequence[str] = ("a", "b"), norm_tol: float = 1e-8) -> HeraldOutcome:
    if abs(state.norm_sq() - 1.0) > norm_tol:
        raise FockError(f"herald expects a normalized state (norm^2 = {state.norm_sq():.3e})")
    projected = project_herald(state, pattern)
    prob = projected.norm_sq()
    if prob == 0.0:
        return HeraldOutcome(0.0, DensityMatrix2Q.absent())
    return HeraldOutcome(min(prob, 1.0), reduce_to_qubits(projected, qubit_paths))


def fidelity_to_psi_minus(d: DensityMatrix2Q) -> Fidelity:
    if not d.present:
        return Fidelity(0.0, 0.0)
    f_ps = float(np.real(PSI_MINUS.conj() @ d.rho @ PSI_MINUS))
    return Fidelity(d.in_subspace_weight * f_ps, f_ps)


def purity(d: DensityMatrix2Q) -> float:
    if not d.present:
        return 0.0
    return float(np.real(np.trace(d.rho @ d.rho)))


def bell_phase(d: DensityMatrix2Q) -> float:
    """Phase of the HV/VH coherence, ``arg(rho[HV, VH])``."""
    return float(np.angle(d.rho[1, 2])) if d.present else 0.0


def compensate_bell_phase(d: DensityMatrix2Q) -> DensityMatrix2Q:
    """Apply the local phase on receiver a that maximizes overlap with the singlet.

    This is the wave-plate phase correction on one receiver; it leaves
    populations untouched and turns ``rho[HV, VH]`` negative real.
    """
    if not d.present or abs(d.rho[1, 2]) == 0:
        return d
    phi = bell_phase(d) - np.pi
    u = np.diag([1, 1, np.exp(1j * phi), np.exp(1j * phi)])
    rho = u @ d.rho @ u.conj().T
    return DensityMatrix2Q((rho + rho.conj().T) / 2, d.in_subspace_weight)


def heralded_fidelity_estimator(fourfolds: float, heralds: float, f_ps: float) -> float:
    """Fraction of heralds that end in a fourfold, weighted by the postselected fidelity."""
    if heralds <= 0:
        raise FockError("no heralding events")
    if fourfolds < 0 or fourfolds > heralds:
        raise FockError("fourfold count must lie between 0 and the herald count")
    if not 0.0 <= f_ps <= 1.0:
        raise FockError("postselected fidelity must lie in [0, 1]")
    return fourfolds / heralds * f_ps


@dataclass(frozen=True)
class HeraldGram:
    """Bilinear herald data of a decomposed state ``sum_k c_k psi_k``.

    ``prob[k, l] = <psi_l|P|psi_k>`` and ``block[k, l]`` is the receiver
    block of ``Tr_env(P|psi_k><psi_l|P)``; both are contracted with the
    phase coefficients to give the outcome for any phase setting.
    """

    prob: np.ndarray
    block: np.ndarray

    def outcome(self, coeffs: np.ndarray) -> HeraldOutcome:
        c = np.asarray(coeffs)
        p = float(np.real(c @ self.prob @ c.conj()))
        if p <= 0:
            return HeraldOutcome(0.0, DensityMatrix2Q.absent())
        blk = np.einsum("k,klij,l->ij", c, self.block, c.conj())
        return HeraldOutcome(p, DensityMatrix2Q.from_unnormalized(blk, np.trace(blk).real / p))

    def batch(self, coeffs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Herald probabilities (S,) and unnormalized receiver blocks (S, 4, 4)."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        n_sets, k = c.shape
        probs = np.real(np.sum((c @ self.prob) * c.conj(), axis=1))
        tmp = (c @ self.block.reshape(k, -1)).reshape(n_sets, k, 16)
        blocks = np.einsum("slq,sl->sq", tmp, c.conj()).reshape(n_sets, 4, 4)
        return probs, blocks


def herald_gram(state: FockState, n_classes: int, pattern: HeraldPattern = VE_HF,
                qubit_paths: Sequence[str] = ("a", "b")) -> HeraldGram:
    """Gram data of a tagged state whose tags ``0 .. n_classes - 1`` label the classes."""
    if state.tags is None:
        raise FockError("herald_gram needs a tagged state")
    projected = project_herald(state, pattern)
    tags = projected.tags
    n_terms = len(projected)
    if n_terms:
        order, gid, n_occ = group_rows(row_keys(projected.occ))
        col = np.empty(n_terms, dtype=np.int64)
        col[order] = gid
    else:
        col, n_occ = np.zeros(0, dtype=np.int64), 0
    y = sparse.csr_matrix((projected.amp, (tags, col)), shape=(n_classes, max(1, n_occ)))
    prob = (y @ y.conj().T).toarray()

    rows, env_id, q, n_env = _block_arrays(projected, qubit_paths)
    mats = []
    for qi in range(4):
        sel = rows[q == qi]
        mats.append(sparse.csr_matrix((projected.amp[sel], (tags[sel], env_id[q == qi])),
                                      shape=(n_classes, max(1, n_env))))
    block = np.zeros((n_classes, n_classes, 4, 4), dtype=complex)
    for qi in range(4):
        for qj in range(4):
            block[:, :, qi, qj] = (mats[qi] @ mats[qj].conj().T).toarray()
    return HeraldGram(prob, block)


def batch_fidelities(probs: np.ndarray, blocks: np.ndarray, compensate: bool = True) -> np.ndarray:
    """``F_total`` for each (herald probability, unnormalized receiver block) pair.

    With ``compensate`` the singlet phase is corrected per entry, as
    :func:`compensate_bell_phase` does for a single state.
    """
    probs = np.asarray(probs, dtype=float)
    blocks = np.asarray(blocks, dtype=complex)
    tr = np.real(np.einsum("sii->s", blocks))
    pop = (blocks[:, 1, 1].real + blocks[:, 2, 2].real) / 2
    coh = np.abs(blocks[:, 1, 2]) if compensate else -blocks[:, 1, 2].real
    f_unnorm = pop + coh
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where((probs > 0) & (tr > 0), f_unnorm / probs, 0.0)
    return np.clip(out, 0.0, 1.0)
