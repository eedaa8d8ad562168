"""Circuit elements as :class:`~cascadesim.fock.ModeTransform` constructors.

Conventions used throughout:

* Matrices act on creation operators, rows are input modes, columns are
  output modes.
* Beam splitters default to the symmetric convention
  ``[[t, i r], [i r, t]]``; ``convention="real"`` gives ``[[t, r], [-r, t]]``.
* Wave plates act on the (H, V) pair of one path. The half-wave plate at
  angle ``theta`` is ``[[cos 2theta, sin 2theta], [sin 2theta, -cos 2theta]]``.
  The quarter-wave plate is the retarder ``R(theta) diag(1, i) R(-theta)``
  with fast axis at ``theta`` and the global ``exp(-i pi/4)`` dropped.
* PBS port 3 is the transmitted port of input 1 (H passes), port 4 the
  reflected one (V is reflected). Input 2 mirrors this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from .fock import H, V, POLARIZATIONS, FockError, ModeId, ModeTransform

Internals = Sequence[int]


@dataclass(frozen=True)
class PbsImperfection:
    """Finite extinction and axis misalignment of a polarizing beam splitter.

    Extinction ratios are power ratios in dB; ``math.inf`` means no leakage.
    """

    extinction_h_db: float = math.inf
    extinction_v_db: float = math.inf
    misalignment_rad: float = 0.0

    def __post_init__(self):
        if self.extinction_h_db < 0 or self.extinction_v_db < 0:
            raise FockError("extinction ratios must be >= 0 dB")
        if not abs(self.misalignment_rad) < math.pi / 4:
            raise FockError("|misalignment| must be below pi/4")

    @property
    def leak_h(self) -> float:
        return leakage_amplitude(self.extinction_h_db)

    @property
    def leak_v(self) -> float:
        return leakage_amplitude(self.extinction_v_db)

    @property
    def is_ideal(self) -> bool:
        return self.leak_h == 0 and self.leak_v == 0 and self.misalignment_rad == 0


IDEAL_PBS = PbsImperfection()


def leakage_amplitude(extinction_db: float) -> float:
    """Amplitude routed to the wrong port, ``10**(-ER/20)``."""
    if math.isinf(extinction_db):
        return 0.0
    return 10.0 ** (-extinction_db / 20.0)


def _blocks(pairs: List[Tuple[List[ModeId], List[ModeId], np.ndarray]], label: str) -> ModeTransform:
    """Assemble independent blocks into one block-diagonal transform."""
    inputs: List[ModeId] = []
    outputs: List[ModeId] = []
    for ins, outs, _ in pairs:
        inputs.extend(ins)
        outputs.extend(o for o in outs if o not in outputs)
    col = {m: j for j, m in enumerate(outputs)}
    u = np.zeros((len(inputs), len(outputs)), dtype=complex)
    row = 0
    for ins, outs, block in pairs:
        for i in range(len(ins)):
            for j, o in enumerate(outs):
                u[row + i, col[o]] += block[i, j]
        row += len(ins)
    return ModeTransform(tuple(inputs), tuple(outputs), u, label=label)


def _bs_matrix(transmission: float, convention: str) -> np.ndarray:
    t = math.sqrt(transmission)
    r = math.sqrt(1.0 - transmission)
    if convention == "symmetric":
        return np.array([[t, 1j * r], [1j * r, t]])
    if convention == "real":
        return np.array([[t, r], [-r, t]], dtype=complex)
    raise FockError(f"unknown beam-splitter convention {convention!r}")


def beam_splitter(path1: str, path2: str, transmission: float, out1: str | None = None,
                  out2: str | None = None, internals: Internals = (0,),
                  convention: str = "symmetric") -> ModeTransform:
    """Polarization-insensitive splitter between two paths.

    ``out1`` receives the transmitted light of ``path1``; outputs default to
    the input paths (in-place).
    """
    if not 0.0 <= transmission <= 1.0:
        raise FockError("transmission must lie in [0, 1]")
    if path1 == path2:
        raise FockError("beam splitter needs two distinct paths")
    out1 = path1 if out1 is None else out1
    out2 = path2 if out2 is None else out2
    u = _bs_matrix(transmission, convention)
    pairs = []
    for k in internals:
        for pol in POLARIZATIONS:
            pairs.append(([ModeId(path1, pol, k), ModeId(path2, pol, k)],
                          [ModeId(out1, pol, k), ModeId(out2, pol, k)], u))
    return _blocks(pairs, f"BS({path1},{path2})")


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, s], [-s, c]], dtype=complex)


def pbs_imperfect(in1: str, in2: str, out3: str, out4: str,
                  imp: PbsImperfection = IDEAL_PBS, internals: Internals = (0,)) -> ModeTransform:
    """Leaky, misaligned PBS.

    Per polarization the device is a real rotation between the two output
    ports. Leakage of amplitude ``eps`` is a rotation by ``asin(eps)``; the
    misalignment angle adds to it, so with perfect extinction

        h1 -> cos(phi) h3 + sin(phi) h4,   v1 -> cos(phi) v4 - sin(phi) v3.
    """
    if len({in1, in2, out3, out4}) < 2 or in1 == in2 or out3 == out4:
        raise FockError("PBS needs distinct input paths and distinct output paths")
    ang_h = math.asin(imp.leak_h) + imp.misalignment_rad
    ang_v = math.asin(imp.leak_v) + imp.misalignment_rad
    block_h = _rotation(ang_h)
    c, s = math.cos(ang_v), math.sin(ang_v)
    block_v = np.array([[-s, c], [c, s]], dtype=complex)
    pairs = []
    for k in internals:
        pairs.append(([ModeId(in1, H, k), ModeId(in2, H, k)],
                      [ModeId(out3, H, k), ModeId(out4, H, k)], block_h))
        pairs.append(([ModeId(in1, V, k), ModeId(in2, V, k)],
                      [ModeId(out3, V, k), ModeId(out4, V, k)], block_v))
    return _blocks(pairs, f"PBS({in1},{in2})")


def pbs_ideal(in1: str, in2: str, out3: str, out4: str, internals: Internals = (0,)) -> ModeTransform:
    if len({in1, in2, out3, out4}) != 4:
        raise FockError("ideal PBS needs four distinct paths")
    return pbs_imperfect(in1, in2, out3, out4, IDEAL_PBS, internals)


def polarization_unitary(path: str, u: np.ndarray, internals: Internals = (0,),
                         label: str = "U") -> ModeTransform:
    """Embed a 2x2 matrix acting on ``(h^dag, v^dag)`` of ``path``."""
    u = np.asarray(u, dtype=complex)
    pairs = [([ModeId(path, H, k), ModeId(path, V, k)],
              [ModeId(path, H, k), ModeId(path, V, k)], u) for k in internals]
    return _blocks(pairs, f"{label}({path})")


def hwp_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(2 * angle), math.sin(2 * angle)
    return np.array([[c, s], [s, -c]], dtype=complex)


def qwp_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    return rot @ np.diag([1.0, 1j]) @ rot.T


def hwp(path: str, angle_rad: float, internals: Internals = (0,)) -> ModeTransform:
    if not math.isfinite(angle_rad):
        raise FockError("wave-plate angle must be finite")
    return polarization_unitary(path, hwp_matrix(angle_rad), internals, "HWP")


def qwp(path: str, angle_rad: float, internals: Internals = (0,)) -> ModeTransform:
    if not math.isfinite(angle_rad):
        raise FockError("wave-plate angle must be finite")
    return polarization_unitary(path, qwp_matrix(angle_rad), internals, "QWP")


def phase_shift(mode: ModeId, phi: float) -> ModeTransform:
    """Multiply one mode's creation operator by ``exp(i phi)``."""
    return ModeTransform((mode,), (mode,), np.array([[np.exp(1j * phi)]]), label=f"phase({mode})")


def loss_channel(mode: ModeId, eta: float, loss_path: str | None = None) -> ModeTransform:
    """``a^dag -> sqrt(eta) a^dag + sqrt(1 - eta) x^dag`` with a fresh loss mode ``x``."""
    if not 0.0 <= eta <= 1.0:
        raise FockError("transmission eta must lie in [0, 1]")
    loss_path = loss_path or f"loss_{mode.path}"
    lost = ModeId(loss_path, mode.pol, mode.internal)
    u = np.array([[math.sqrt(eta), math.sqrt(1.0 - eta)]], dtype=complex)
    return ModeTransform((mode,), (mode, lost), u, label=f"loss({mode})")


def path_loss(path: str, eta: float, loss_path: str, internals: Internals = (0,)) -> ModeTransform:
    """Loss channel applied to every polarization and internal mode of a path."""
    if not 0.0 <= eta <= 1.0:
        raise FockError("transmission eta must lie in [0, 1]")
    u = np.array([[math.sqrt(eta), math.sqrt(1.0 - eta)]], dtype=complex)
    pairs = [([ModeId(path, pol, k)], [ModeId(path, pol, k), ModeId(loss_path, pol, k)], u)
             for k in internals for pol in POLARIZATIONS]
    return _blocks(pairs, f"loss({path})")


def relabel(src: str, dst: str, internals: Internals = (0,)) -> ModeTransform:
    """Move all light on path ``src`` to path ``dst`` (free propagation)."""
    pairs = [([ModeId(src, pol, k)], [ModeId(dst, pol, k)], np.eye(1)) for k in internals
             for pol in POLARIZATIONS]
    return _blocks(pairs, f"{src}->{dst}")


def is_isometry(t: ModeTransform, tol: float = 1e-12) -> bool:
    u = t.matrix
    return bool(np.max(np.abs(u @ u.conj().T - np.eye(len(t.inputs)))) <= tol)


def modes_of(paths: Iterable[str], internals: Internals = (0,)) -> List[ModeId]:
    return [ModeId(p, pol, k) for p in paths for k in internals for pol in POLARIZATIONS]
