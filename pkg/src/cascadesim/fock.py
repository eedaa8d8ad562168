"""Sparse multi-mode bosonic Fock states and linear mode transformations.

A state is a sparse list of occupation vectors (one entry per mode of an
ordered :class:`ModeRegister`) with complex amplitudes, stored as numpy
arrays and also viewable as a ``{occupation: amplitude}`` dictionary. Linear
optical elements are :class:`ModeTransform` objects: isometries acting on
creation operators, ``a_i^dag -> sum_j U[i, j] b_j^dag``.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from math import factorial, sqrt
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

AMP_PRUNE_TOL = 1e-12
N_TOTAL_MAX = 8
ISOMETRY_TOL = 1e-12

Occupation = Tuple[int, ...]
OCC_DTYPE = np.int8
# occupations are packed four bits per mode when terms are merged
_DIGIT_BITS = 4

H = "H"
V = "V"
POLARIZATIONS = (H, V)


class FockError(ValueError):
    """Raised when a Fock-space operation is given inconsistent input."""


@dataclass(frozen=True, order=True)
class ModeId:
    """A bosonic mode: spatial path, polarization and wavepacket index."""

    path: str
    pol: str
    internal: int = 0

    def __post_init__(self):
        if not self.path:
            raise FockError("mode path must be a non-empty label")
        if self.pol not in POLARIZATIONS:
            raise FockError(f"polarization must be 'H' or 'V', got {self.pol!r}")
        if self.internal < 0:
            raise FockError("internal index must be non-negative")

    def __str__(self):
        suffix = f"#{self.internal}" if self.internal else ""
        return f"{self.pol}{self.path}{suffix}"


class ModeRegister:
    """Ordered, duplicate-free list of modes with O(1) position lookup."""

    __slots__ = ("modes", "_index")

    def __init__(self, modes: Iterable[ModeId]):
        self.modes: Tuple[ModeId, ...] = tuple(modes)
        self._index = {m: i for i, m in enumerate(self.modes)}
        if len(self._index) != len(self.modes):
            raise FockError("duplicate modes in register")

    def __len__(self):
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __contains__(self, mode):
        return mode in self._index

    def __eq__(self, other):
        return isinstance(other, ModeRegister) and self.modes == other.modes

    def __hash__(self):
        return hash(self.modes)

    def __repr__(self):
        return f"ModeRegister({', '.join(map(str, self.modes))})"

    def index(self, mode: ModeId) -> int:
        try:
            return self._index[mode]
        except KeyError:
            raise FockError(f"mode {mode} not in register") from None

    def paths(self) -> Tuple[str, ...]:
        seen = dict.fromkeys(m.path for m in self.modes)
        return tuple(seen)

    def modes_on(self, path: str) -> Tuple[ModeId, ...]:
        return tuple(m for m in self.modes if m.path == path)

    def concat(self, other: "ModeRegister") -> "ModeRegister":
        overlap = set(self.modes) & set(other.modes)
        if overlap:
            raise FockError(f"registers overlap on {sorted(map(str, overlap))}")
        return ModeRegister(self.modes + other.modes)


class FockState:
    """Sparse superposition of occupation-number basis states.

    Terms are held as an integer occupation matrix ``occ`` (one row per
    term, one column per register mode) and an amplitude vector ``amp``.
    ``terms`` offers the same data as a ``{occupation tuple: amplitude}``
    dictionary. Instances are immutable; every operation returns a new state.

    An optional integer ``tags`` vector labels each term. Terms with
    different tags are never merged by linear transforms, which lets several
    superposition components travel through a circuit in one pass. The
    physical state is the sum over tags; ``terms`` and the norm refer to it.
    """

    __slots__ = ("register", "n_total_max", "_occ", "_amp", "_tags", "_terms")

    def __init__(self, register: ModeRegister, terms: Mapping[Occupation, complex] | None = None,
                 n_total_max: int = N_TOTAL_MAX):
        terms = dict(terms or {})
        width = len(register)
        for occ in terms:
            if len(occ) != width:
                raise FockError("occupation vector width does not match register")
        occ = np.array(list(terms), dtype=OCC_DTYPE).reshape(len(terms), width)
        amp = np.array(list(terms.values()), dtype=complex).reshape(len(terms))
        self._init(register, occ, amp, None, n_total_max)
        self._terms = {k: complex(v) for k, v in terms.items()}

    def _init(self, register, occ, amp, tags, n_total_max):
        self.register = register
        self.n_total_max = n_total_max
        if occ.shape[1:] != (len(register),) or amp.shape != occ.shape[:1]:
            raise FockError("occupation matrix does not match register / amplitudes")
        if len(occ):
            if occ.min() < 0:
                raise FockError("occupations must be non-negative")
            worst = int(occ.sum(axis=1).max())
            if worst > n_total_max:
                raise FockError(f"a term holds {worst} photons, above the cap {n_total_max}")
        occ.flags.writeable = False
        amp.flags.writeable = False
        self._occ, self._amp, self._tags = occ, amp, tags
        self._terms = None

    @classmethod
    def from_arrays(cls, register: ModeRegister, occ: np.ndarray, amp: np.ndarray,
                    n_total_max: int = N_TOTAL_MAX, tags: np.ndarray | None = None) -> "FockState":
        """Build a state from an occupation matrix; rows must be distinct (per tag)."""
        obj = cls.__new__(cls)
        occ = np.asarray(occ, dtype=OCC_DTYPE).reshape(-1, len(register))
        amp = np.asarray(amp, dtype=complex).reshape(-1)
        if tags is not None:
            tags = np.asarray(tags, dtype=np.int64).reshape(-1)
            tags.flags.writeable = False
            if tags.shape != amp.shape:
                raise FockError("one tag per term is required")
        obj._init(register, occ, amp, tags, n_total_max)
        return obj

    @property
    def occ(self) -> np.ndarray:
        return self._occ

    @property
    def amp(self) -> np.ndarray:
        return self._amp

    @property
    def tags(self) -> np.ndarray | None:
        return self._tags

    @property
    def terms(self) -> Dict[Occupation, complex]:
        if self._terms is None:
            st = self.untagged()
            self._terms = dict(zip(map(tuple, st._occ.tolist()), st._amp.tolist()))
        return self._terms

    def untagged(self) -> "FockState":
        """The physical state: tagged components summed."""
        if self._tags is None:
            return self
        occ, amp, _ = _dedupe(self._occ, self._amp)
        return FockState.from_arrays(self.register, occ, amp, self.n_total_max)

    def with_register(self, register: ModeRegister, occ: np.ndarray, amp: np.ndarray,
                      tags: np.ndarray | None = None) -> "FockState":
        return FockState.from_arrays(register, occ, amp, self.n_total_max, tags)

    def __len__(self):
        return len(self._amp)

    def __repr__(self):
        return f"FockState({len(self)} terms on {len(self.register)} modes)"

    def norm_sq(self) -> float:
        return float(np.sum(np.abs(self.untagged()._amp) ** 2))

    def norm(self) -> float:
        return sqrt(self.norm_sq())

    def amplitude(self, occupation: Mapping[ModeId, int]) -> complex:
        """Amplitude of the basis state given as ``{mode: count}`` (others empty)."""
        occ = [0] * len(self.register)
        for mode, n in occupation.items():
            occ[self.register.index(mode)] = n
        return complex(self.terms.get(tuple(occ), 0.0))

    def photon_number(self, modes: Iterable[ModeId]) -> Dict[int, float]:
        """Distribution of the total photon number found in ``modes``."""
        st = self.untagged()
        idx = [self.register.index(m) for m in modes]
        counts = st._occ[:, idx].sum(axis=1)
        weights = np.bincount(counts, weights=np.abs(st._amp) ** 2) if len(counts) else []
        return {n: float(w) for n, w in enumerate(weights) if w > 0}

    def to_dense(self, cutoff: int) -> np.ndarray:
        """Dense tensor with one axis of size ``cutoff + 1`` per mode (small states only)."""
        shape = (cutoff + 1,) * len(self.register)
        psi = np.zeros(shape, dtype=complex)
        for occ, amp in self.terms.items():
            psi[occ] = amp
        return psi


@dataclass(frozen=True)
class ModeTransform:
    """Isometric linear map on creation operators.

    ``matrix[i, j]`` is the amplitude for input mode ``inputs[i]`` to be
    mapped onto output mode ``outputs[j]``. Output modes that are not also
    inputs must be fresh (absent from the state the transform is applied to).
    """

    inputs: Tuple[ModeId, ...]
    outputs: Tuple[ModeId, ...]
    matrix: np.ndarray = field(repr=False)
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        u = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", u)
        if u.shape != (len(self.inputs), len(self.outputs)):
            raise FockError(
                f"matrix shape {u.shape} does not match "
                f"{len(self.inputs)} inputs x {len(self.outputs)} outputs"
            )
        if len(set(self.inputs)) != len(self.inputs):
            raise FockError("duplicate input modes")
        if len(set(self.outputs)) != len(self.outputs):
            raise FockError("duplicate output modes")
        err = np.max(np.abs(u @ u.conj().T - np.eye(len(self.inputs)))) if len(u) else 0.0
        if err > ISOMETRY_TOL * max(1, len(self.inputs)):
            raise FockError(f"transform {self.label!r} is not isometric (error {err:.2e})")

    def then(self, other: "ModeTransform") -> "ModeTransform":
        """Compose ``self`` followed by ``other`` (other's inputs must be self's outputs)."""
        pos = {m: j for j, m in enumerate(self.outputs)}
        missing = [m for m in other.inputs if m not in pos]
        if missing:
            raise FockError(f"cannot compose: {missing} not produced by first transform")
        consumed = set(other.inputs)
        passthrough = [m for m in self.outputs if m not in consumed]
        if set(passthrough) & set(other.outputs):
            raise FockError("cannot compose: second transform writes into an occupied mode")
        outputs = list(other.outputs) + passthrough
        col = {m: j for j, m in enumerate(outputs)}
        second = np.zeros((len(self.outputs), len(outputs)), dtype=complex)
        for i, m in enumerate(other.inputs):
            for j, mo in enumerate(other.outputs):
                second[pos[m], col[mo]] = other.matrix[i, j]
        for m in passthrough:
            second[pos[m], col[m]] = 1.0
        return ModeTransform(self.inputs, tuple(outputs), self.matrix @ second,
                             label=f"{self.label}>{other.label}")


def row_keys(occ: np.ndarray, tags: np.ndarray | None = None) -> np.ndarray:
    """Pack occupation rows (and tags) into uint64 words, most significant first."""
    n_rows, width = occ.shape
    top = int(occ.max()) if occ.size else 0
    bits = _DIGIT_BITS if top < (1 << _DIGIT_BITS) else 8
    per_word = 64 // bits
    n_words = max(1, -(-width // per_word))
    words = np.zeros((n_rows, n_words + (tags is not None)), dtype=np.uint64)
    col = occ.astype(np.uint64)
    for w in range(n_words):
        chunk = col[:, w * per_word:(w + 1) * per_word]
        shifts = (np.arange(chunk.shape[1], dtype=np.uint64) * np.uint64(bits))
        words[:, w] = np.bitwise_or.reduce(chunk << shifts, axis=1) if chunk.shape[1] else 0
    if tags is not None:
        words[:, -1] = tags.astype(np.uint64)
    return words


def group_rows(keys: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """Sort order, group id per sorted row and group count for a key matrix."""
    if keys.shape[1] == 1:
        order = np.argsort(keys[:, 0], kind="stable")
    else:
        order = np.lexsort(keys.T[::-1])
    k = keys[order]
    starts = np.ones(len(k), dtype=bool)
    if len(k) > 1:
        starts[1:] = np.any(k[1:] != k[:-1], axis=1)
    gid = np.cumsum(starts) - 1
    return order, gid, int(starts.sum())


def _dedupe(occ: np.ndarray, amp: np.ndarray, tags: np.ndarray | None = None):
    """Merge equal (occupation, tag) rows by summing their amplitudes."""
    if len(amp) == 0:
        return occ, amp, tags
    order, gid, n = group_rows(row_keys(occ, tags))
    first = order[np.searchsorted(gid, np.arange(n))]
    a = amp[order]
    summed = np.bincount(gid, weights=a.real, minlength=n) + 1j * np.bincount(gid, weights=a.imag, minlength=n)
    return occ[first], summed, (None if tags is None else tags[first])


def make_vacuum(register: ModeRegister | Sequence[ModeId], n_total_max: int = N_TOTAL_MAX) -> FockState:
    if not isinstance(register, ModeRegister):
        register = ModeRegister(register)
    if len(register) == 0:
        raise FockError("vacuum needs at least one mode")
    return FockState(register, {(0,) * len(register): 1.0 + 0j}, n_total_max)


def basis_state(register: ModeRegister | Sequence[ModeId], occupation: Mapping[ModeId, int],
                n_total_max: int = N_TOTAL_MAX) -> FockState:
    """Normalized number state ``|n_1, n_2, ...>`` from a ``{mode: n}`` mapping."""
    if not isinstance(register, ModeRegister):
        register = ModeRegister(register)
    occ = [0] * len(register)
    for mode, n in occupation.items():
        if n < 0:
            raise FockError("occupations must be non-negative")
        occ[register.index(mode)] = n
    return FockState(register, {tuple(occ): 1.0 + 0j}, n_total_max)


def apply_creation(state: FockState, mode: ModeId) -> FockState:
    """Act with ``a^dag`` on ``mode``. The result is not renormalized."""
    k = state.register.index(mode)
    occ = state.occ.copy()
    if len(occ) and int(occ.sum(axis=1).max()) + 1 > state.n_total_max:
        raise FockError(f"photon-number cap {state.n_total_max} exceeded")
    amp = state.amp * np.sqrt(occ[:, k] + 1.0)
    occ[:, k] += 1
    return state.with_register(state.register, occ, amp, state.tags)


def _expand(matrix: np.ndarray, n_in: Occupation, tol: float) -> Tuple[np.ndarray, np.ndarray]:
    """Expand prod_i (sum_j U_ij b_j^dag)^n_i / sqrt(n_i!) onto output number states.

    Returns the output occupations (rows) and their coefficients.
    """
    n_out = matrix.shape[1]
    poly: Dict[Occupation, complex] = {(0,) * n_out: 1.0 + 0j}
    for i, n in enumerate(n_in):
        row = [(j, matrix[i, j]) for j in range(n_out) if matrix[i, j] != 0]
        for _ in range(n):
            nxt: Dict[Occupation, complex] = defaultdict(complex)
            for mono, c in poly.items():
                for j, u in row:
                    key = mono[:j] + (mono[j] + 1,) + mono[j + 1:]
                    nxt[key] += c * u
            poly = nxt
    denom = sqrt(float(np.prod([factorial(n) for n in n_in])))
    monos, coeffs = [], []
    for mono, c in poly.items():
        amp = c * sqrt(float(np.prod([factorial(m) for m in mono]))) / denom
        if abs(amp) > tol:
            monos.append(mono)
            coeffs.append(amp)
    return (np.array(monos, dtype=OCC_DTYPE).reshape(len(monos), n_out),
            np.array(coeffs, dtype=complex))


def apply_mode_transform(state: FockState, t: ModeTransform,
                         prune_tol: float = AMP_PRUNE_TOL) -> FockState:
    """Push ``state`` through the linear element ``t``.

    Input modes that are not among the outputs are removed from the register
    (they are empty afterwards); fresh output modes are appended in the order
    ``t.outputs`` declares them. Amplitudes below ``prune_tol`` are dropped.
    """
    reg = state.register
    in_pos = [reg.index(m) for m in t.inputs]
    in_set = set(t.inputs)
    out_set = set(t.outputs)
    for m in t.outputs:
        if m in reg and m not in in_set:
            raise FockError(f"output mode {m} already occupied by the register")

    kept = [m for m in reg.modes if not (m in in_set and m not in out_set)]
    fresh = [m for m in t.outputs if m not in reg]
    new_reg = ModeRegister(kept + fresh)
    keep_idx = [reg.index(m) for m in kept]
    zero_in_new = [new_reg.index(m) for m in kept if m in in_set]
    out_pos = np.array([new_reg.index(m) for m in t.outputs], dtype=np.int64)

    occ, amp, tags = state.occ, state.amp, state.tags
    n_terms = len(amp)
    base = np.zeros((n_terms, len(new_reg)), dtype=OCC_DTYPE)
    base[:, :len(kept)] = occ[:, keep_idx]
    base[:, zero_in_new] = 0
    n_in = occ[:, in_pos]
    order, gid, n_groups = group_rows(row_keys(n_in)) if n_terms else (None, None, 0)
    bounds = np.searchsorted(gid, np.arange(n_groups + 1)) if n_terms else [0]

    occ_parts, amp_parts, tag_parts = [], [], []
    for g in range(n_groups):
        rows = order[bounds[g]:bounds[g + 1]]
        pattern = tuple(int(x) for x in n_in[rows[0]])
        if not any(pattern):
            occ_parts.append(base[rows])
            amp_parts.append(amp[rows])
            if tags is not None:
                tag_parts.append(tags[rows])
            continue
        monos, coeffs = _expand(t.matrix, pattern, 0.0)
        n_mono = len(coeffs)
        if n_mono == 0:
            continue
        block = np.repeat(base[rows], n_mono, axis=0)
        block[:, out_pos] += np.tile(monos, (len(rows), 1))
        occ_parts.append(block)
        amp_parts.append((amp[rows][:, None] * coeffs[None, :]).ravel())
        if tags is not None:
            tag_parts.append(np.repeat(tags[rows], n_mono))
    if occ_parts:
        new_occ = np.concatenate(occ_parts)
        new_amp = np.concatenate(amp_parts)
        new_tags = np.concatenate(tag_parts) if tags is not None else None
        new_occ, new_amp, new_tags = _dedupe(new_occ, new_amp, new_tags)
    else:
        new_occ = np.zeros((0, len(new_reg)), dtype=OCC_DTYPE)
        new_amp = np.zeros(0, dtype=complex)
        new_tags = None if tags is None else np.zeros(0, dtype=np.int64)
    keep = np.abs(new_amp) >= prune_tol
    return state.with_register(new_reg, new_occ[keep], new_amp[keep],
                               None if new_tags is None else new_tags[keep])


def _aligned(s1: FockState, s2: FockState) -> Dict[Occupation, complex]:
    """Terms of ``s2`` re-expressed in the mode order of ``s1``."""
    if s1.register == s2.register:
        return dict(s2.terms)
    if set(s1.register.modes) != set(s2.register.modes):
        raise FockError("states live on different mode registers")
    perm = [s2.register.index(m) for m in s1.register.modes]
    return {tuple(occ[p] for p in perm): a for occ, a in s2.terms.items()}


def inner_product(s1: FockState, s2: FockState) -> complex:
    """``<s1|s2>``; registers must hold the same modes (order may differ)."""
    t2 = _aligned(s1, s2)
    return complex(sum(np.conj(a) * t2.get(occ, 0.0) for occ, a in s1.terms.items()))


def reorder(state: FockState, register: ModeRegister) -> FockState:
    """Express ``state`` on ``register``, which must contain its modes; extra modes are empty."""
    missing = [m for m in state.register if m not in register]
    if missing:
        raise FockError(f"target register lacks {[str(m) for m in missing]}")
    occ = np.zeros((len(state), len(register)), dtype=OCC_DTYPE)
    occ[:, [register.index(m) for m in state.register]] = state.occ
    return state.with_register(register, occ, state.amp, state.tags)


def tensor_product(s1: FockState, s2: FockState) -> FockState:
    """Product state on the concatenated register (``s2`` must be untagged)."""
    if s2.tags is not None:
        raise FockError("the second factor of a tensor product must be untagged")
    reg = s1.register.concat(s2.register)
    n1, n2 = len(s1), len(s2)
    occ = np.concatenate([np.repeat(s1.occ, n2, axis=0), np.tile(s2.occ, (n1, 1))], axis=1)
    amp = np.outer(s1.amp, s2.amp).ravel()
    tags = None if s1.tags is None else np.repeat(s1.tags, n2)
    return FockState.from_arrays(reg, occ, amp, max(s1.n_total_max, s2.n_total_max), tags)


def extend_register(state: FockState, modes: Iterable[ModeId]) -> FockState:
    """Append empty modes (vacuum ports) to the register."""
    modes = [m for m in dict.fromkeys(modes) if m not in state.register]
    if not modes:
        return state
    reg = ModeRegister(state.register.modes + tuple(modes))
    occ = np.zeros((len(state), len(reg)), dtype=OCC_DTYPE)
    occ[:, :len(state.register)] = state.occ
    return state.with_register(reg, occ, state.amp, state.tags)


def scale(state: FockState, factor: complex) -> FockState:
    return state.with_register(state.register, state.occ, state.amp * factor, state.tags)


def add(s1: FockState, s2: FockState) -> FockState:
    """Superpose two untagged states on the same modes (no renormalization)."""
    if s1.tags is not None or s2.tags is not None:
        raise FockError("add expects untagged states")
    if s1.register != s2.register:
        if set(s1.register.modes) != set(s2.register.modes):
            raise FockError("states live on different mode registers")
        s2 = reorder(s2, s1.register)
    occ, amp, _ = _dedupe(np.concatenate([s1.occ, s2.occ]), np.concatenate([s1.amp, s2.amp]))
    return FockState.from_arrays(s1.register, occ, amp, max(s1.n_total_max, s2.n_total_max))


def normalize(state: FockState) -> FockState:
    n = state.norm()
    if n == 0.0:
        raise FockError("cannot normalize the zero state")
    return scale(state, 1.0 / n)


def prune(state: FockState, tol: float = AMP_PRUNE_TOL) -> Tuple[FockState, float]:
    """Drop amplitudes below ``tol``; returns the pruned state and the discarded weight."""
    small = np.abs(state.amp) < tol
    lost = float(np.sum(np.abs(state.amp[small]) ** 2))
    return select(state, ~small), lost


def total_photon_sectors(state: FockState) -> Dict[int, float]:
    """Weight of each total-photon-number sector."""
    return state.photon_number(state.register.modes)


def select(state: FockState, mask: np.ndarray) -> FockState:
    """Keep the terms where the boolean ``mask`` is set."""
    mask = np.asarray(mask, dtype=bool)
    tags = None if state.tags is None else state.tags[mask]
    return state.with_register(state.register, state.occ[mask], state.amp[mask], tags)


def project(state: FockState, keep) -> FockState:
    """Keep only the terms whose occupation tuple satisfies ``keep(occ)``."""
    mask = [bool(keep(tuple(row))) for row in state.occ.tolist()]
    return select(state, np.array(mask, dtype=bool).reshape(len(state)))


def count_in(state: FockState, modes: Iterable[ModeId]) -> np.ndarray:
    """Photon number found in ``modes`` for every term."""
    idx = [state.register.index(m) for m in modes]
    return state.occ[:, idx].sum(axis=1)
