"""The cascaded entanglement-swapping circuit as an ordered transform pipeline.

Per side (Alice shown, Bob uses B, B', b, d):

    srcA --split PBS--> A, A'          (H transmitted to A, V reflected to A')
    A, A' --prep HWPs-->               (set alpha)
    A, A' --prep phases-->             (V component of each path)
    A, A' --combining PBS--> a, c      (H of A and V of A' go to the receiver a)
    c --HWP 22.5 deg--> --loss-->
    c, d --50/50 BS--> e, f --projection PBS--> He/Ve, Hf/Vf detector ports
    a --loss-->

With the four-photon input the state is injected directly on A, A', B, B'
and the split PBS / prep plates are skipped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from . import elements as el
from .elements import IDEAL_PBS, PbsImperfection
from .fock import (V, POLARIZATIONS, FockError, FockState, ModeId, ModeTransform,
                   apply_mode_transform, count_in, extend_register, select)
from .sources import (PATH_A, PATH_A2, PATH_B, PATH_B2, SRC, VAC, SourceConfig,
                      four_photon_input, prep_hwp_angles, spdc_input)

RECEIVER = {"A": "a", "B": "b"}
CENTRAL = {"A": "c", "B": "d"}
PREP_PATHS = (PATH_A, PATH_A2, PATH_B, PATH_B2)
DETECTOR_PORTS = ("He", "Ve", "Hf", "Vf")
QUBIT_PATHS = ("a", "b")
LOSS_PATHS = ("a", "b", "c", "d")
BOB_SOURCE_PATHS = (SRC["B"],)
BOB_PREP_PATHS = (PATH_B, PATH_B2)

PBS_FIELDS = ("split_pbs_A", "split_pbs_B", "comb_pbs_A", "comb_pbs_B", "bsm_pbs_e", "bsm_pbs_f")
DETECTOR_MODELS = ("threshold", "pnr")
INPUT_MODELS = ("spdc", "ideal")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of one protocol run.

    ``path_eta`` maps receiver/central paths (a, b, c, d) to their total
    transmission including detector efficiency. ``prep_phases`` maps the
    prepared paths (A, A', B, B') to the phase on their V component.
    """

    source: SourceConfig = field(default_factory=SourceConfig)
    split_pbs_A: PbsImperfection = IDEAL_PBS
    split_pbs_B: PbsImperfection = IDEAL_PBS
    comb_pbs_A: PbsImperfection = IDEAL_PBS
    comb_pbs_B: PbsImperfection = IDEAL_PBS
    bsm_pbs_e: PbsImperfection = IDEAL_PBS
    bsm_pbs_f: PbsImperfection = IDEAL_PBS
    path_eta: Mapping[str, float] = field(default_factory=dict)
    prep_phases: Mapping[str, float] = field(default_factory=dict)
    overlap_mu: float = 1.0
    detector_model: str = "threshold"
    input_model: str = "spdc"
    bs_convention: str = "symmetric"
    compensate_phase: bool = True

    def __post_init__(self):
        for path, eta in self.path_eta.items():
            if path not in LOSS_PATHS:
                raise FockError(f"no loss channel on path {path!r}; use one of {LOSS_PATHS}")
            if not 0.0 <= eta <= 1.0:
                raise FockError(f"eta[{path}] = {eta} outside [0, 1]")
        for path in self.prep_phases:
            if path not in PREP_PATHS:
                raise FockError(f"no prep phase on path {path!r}; use one of {PREP_PATHS}")
        if not 0.0 <= self.overlap_mu <= 1.0:
            raise FockError("overlap_mu must lie in [0, 1]")
        if self.detector_model not in DETECTOR_MODELS:
            raise FockError(f"detector_model must be one of {DETECTOR_MODELS}")
        if self.input_model not in INPUT_MODELS:
            raise FockError(f"input_model must be one of {INPUT_MODELS}")
        if self.bs_convention not in ("symmetric", "real"):
            raise FockError("bs_convention must be 'symmetric' or 'real'")

    def eta(self, path: str) -> float:
        return float(self.path_eta.get(path, 1.0))

    def with_alpha(self, alpha: float) -> "ExperimentConfig":
        return replace(self, source=replace(self.source, alpha=alpha))

    @property
    def internals(self) -> Tuple[int, ...]:
        return (0,) if self.overlap_mu == 1.0 else (0, 1)


@dataclass(frozen=True)
class CircuitPlan:
    """Ordered circuit stages.

    ``phase_index`` is the position of the prep-phase stage; everything
    before it is phase-free, which the phase-class decomposition relies on.
    """

    stages: Tuple[Tuple[str, ModeTransform], ...]
    phase_index: int

    def __iter__(self):
        return iter(self.stages)

    def __len__(self):
        return len(self.stages)

    @property
    def labels(self) -> List[str]:
        return [label for label, _ in self.stages]

    def apply(self, state: FockState, start: int = 0, stop: int | None = None) -> FockState:
        for _, t in self.stages[start:stop]:
            state = _apply_stage(state, t)
        return state

    def apply_heralded(self, state: FockState, pattern, start: int = 0) -> FockState:
        """Run stages from ``start`` and keep only herald-compatible terms.

        Each detector port is projected as soon as no later stage touches it,
        which keeps the state small. The result is unnormalized; its squared
        norm is the herald probability times the input norm.
        """
        later: List[set] = [set() for _ in range(len(self.stages) + 1)]
        for i in range(len(self.stages) - 1, -1, -1):
            t = self.stages[i][1]
            later[i] = later[i + 1] | {m.path for m in t.inputs} | {m.path for m in t.outputs}
        pending = list(pattern.ports)
        for i in range(start, len(self.stages)):
            state = _apply_stage(state, self.stages[i][1])
            present = set(state.register.paths())
            for port in [p for p in pending if p in present and p not in later[i + 1]]:
                state = _project_port(state, pattern, port)
                pending.remove(port)
        for port in pending:
            state = _project_port(state, pattern, port)
        return state


def _apply_stage(state: FockState, t: ModeTransform) -> FockState:
    state = extend_register(state, (m for m in t.inputs if m not in state.register))
    return apply_mode_transform(state, t)


def _project_port(state: FockState, pattern, port: str) -> FockState:
    modes = state.register.modes_on(port)
    if not modes:
        raise FockError(f"detector port {port!r} has no modes in the register")
    counts = count_in(state, modes)
    allowed = [n for n in range(int(counts.max(initial=0)) + 1) if pattern.accepts_port(port, n)]
    return select(state, np.isin(counts, allowed))


def prep_phase_modes(internals: Sequence[int] = (0,)) -> List[ModeId]:
    return [ModeId(p, V, k) for p in PREP_PATHS for k in internals]


def distinguishability_transforms(paths: Iterable[str], mu: float) -> List[ModeTransform]:
    """Internal-index splitting ``|0> -> sqrt(mu)|0> + sqrt(1 - mu)|1>`` per mode."""
    if not 0.0 <= mu <= 1.0:
        raise FockError("mu must lie in [0, 1]")
    u = np.array([[math.sqrt(mu), math.sqrt(1.0 - mu)]], dtype=complex)
    out = []
    for path in paths:
        for pol in POLARIZATIONS:
            m = ModeId(path, pol, 0)
            out.append(ModeTransform((m,), (m, ModeId(path, pol, 1)), u, label=f"mu({m})"))
    return out


def distinguishability_split(state: FockState, mu: float,
                             paths: Iterable[str] | None = None) -> FockState:
    """Make the photons on ``paths`` (default: Bob's) partly distinguishable.

    Two-photon interference visibility against an untouched photon becomes ``mu``.
    """
    if not 0.0 <= mu <= 1.0:
        raise FockError("mu must lie in [0, 1]")
    if mu == 1.0:
        return state
    if paths is None:
        present = state.register.paths()
        paths = [p for p in BOB_SOURCE_PATHS + BOB_PREP_PATHS if p in present]
    for t in distinguishability_transforms(paths, mu):
        state = _apply_stage(state, t)
    return state


def hom_overlap_at_delay(delta_t: float, sigma_t: float, v0: float = 1.0) -> float:
    """Gaussian temporal overlap ``v0 * exp(-dt^2 / (2 sigma^2))``."""
    if sigma_t <= 0:
        raise FockError("sigma_t must be positive")
    return float(v0 * math.exp(-delta_t ** 2 / (2.0 * sigma_t ** 2)))


def build_circuit(cfg: ExperimentConfig) -> CircuitPlan:
    ints = cfg.internals
    stages: List[Tuple[str, ModeTransform]] = []
    if cfg.overlap_mu < 1.0:
        bob = BOB_SOURCE_PATHS if cfg.input_model == "spdc" else BOB_PREP_PATHS
        for t in distinguishability_transforms(bob, cfg.overlap_mu):
            stages.append(("distinguishability", t))
    if cfg.input_model == "spdc":
        theta, theta2 = prep_hwp_angles(cfg.source.alpha)
        for side, unprimed, primed in (("A", PATH_A, PATH_A2), ("B", PATH_B, PATH_B2)):
            imp = getattr(cfg, f"split_pbs_{side}")
            stages.append((f"split_pbs_{side}",
                           el.pbs_imperfect(SRC[side], VAC[side], unprimed, primed, imp, ints)))
        for path, angle in ((PATH_A, theta), (PATH_A2, theta2), (PATH_B, theta), (PATH_B2, theta2)):
            stages.append((f"prep_hwp_{path}", el.hwp(path, angle, ints)))
    phase_index = len(stages)
    for mode in prep_phase_modes(ints):
        stages.append((f"prep_phase_{mode.path}", el.phase_shift(mode, cfg.prep_phases.get(mode.path, 0.0))))
    for side, unprimed, primed in (("A", PATH_A, PATH_A2), ("B", PATH_B, PATH_B2)):
        imp = getattr(cfg, f"comb_pbs_{side}")
        stages.append((f"comb_pbs_{side}",
                       el.pbs_imperfect(unprimed, primed, RECEIVER[side], CENTRAL[side], imp, ints)))
    for path in ("c", "d"):
        stages.append((f"hwp45_{path}", el.hwp(path, math.pi / 8, ints)))
    for path in ("c", "d"):
        if cfg.eta(path) < 1.0:
            stages.append((f"loss_{path}", el.path_loss(path, cfg.eta(path), f"loss_{path}", ints)))
    stages.append(("central_bs", el.beam_splitter("c", "d", 0.5, "e", "f", ints, cfg.bs_convention)))
    for path in ("e", "f"):
        imp = getattr(cfg, f"bsm_pbs_{path}")
        stages.append((f"bsm_pbs_{path}",
                       el.pbs_imperfect(path, f"vac_{path}", f"H{path}", f"V{path}", imp, ints)))
    # receiver loss acts on modes no later stage touches, so it can run last
    for path in ("a", "b"):
        if cfg.eta(path) < 1.0:
            stages.append((f"loss_{path}", el.path_loss(path, cfg.eta(path), f"loss_{path}", ints)))
    return CircuitPlan(tuple(stages), phase_index)


def initial_state(cfg: ExperimentConfig, with_pump_phases: bool = True) -> FockState:
    if cfg.input_model == "ideal":
        return four_photon_input(cfg.source.alpha)
    src = cfg.source if with_pump_phases else replace(cfg.source, theta_a=0.0, theta_b=0.0)
    return spdc_input(src)


def run_heralded(cfg: ExperimentConfig, pattern, plan: CircuitPlan | None = None) -> FockState:
    """Full circuit with early herald projection (unnormalized output)."""
    plan = plan or build_circuit(cfg)
    return plan.apply_heralded(initial_state(cfg), pattern)


def run(cfg: ExperimentConfig, plan: CircuitPlan | None = None) -> FockState:
    """Push the configured input through the full circuit."""
    plan = plan or build_circuit(cfg)
    out = plan.apply(initial_state(cfg))
    if abs(out.norm() - 1.0) > 1e-10:
        raise FockError(f"norm drifted to {out.norm():.12f}")
    return out


def split_by_occupation(state: FockState, modes: Sequence[ModeId]) -> Dict[Tuple[int, ...], FockState]:
    """Partition ``state`` by the photon numbers found in ``modes``."""
    sub = state.occ[:, [state.register.index(m) for m in modes]]
    keys, inverse = np.unique(sub, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    return {tuple(int(x) for x in key): select(state, inverse == i) for i, key in enumerate(keys)}


@dataclass(frozen=True)
class PhaseComponents:
    """Output state split into classes that pick up distinct phase factors.

    ``state`` carries one tag per term; tag ``k`` marks the class with phase
    charges ``charges[k]``. The output for pump phases ``theta`` and prep
    phases ``phi`` is ``sum_k exp(i charges[k] . (theta_A, theta_B, phi_1..phi_4))``
    times the class-``k`` part of ``state``.
    """

    charges: np.ndarray
    state: FockState

    def __len__(self):
        return len(self.charges)

    @property
    def sectors(self) -> List[Tuple[int, int]]:
        """Pair numbers ``(n_A, n_B)`` of each class."""
        return [(int(a), int(b)) for a, b in self.charges[:, :2]]

    @property
    def components(self) -> List[FockState]:
        tags = self.state.tags
        out = []
        for k in range(len(self.charges)):
            part = select(self.state, tags == k)
            out.append(FockState.from_arrays(part.register, part.occ, part.amp, part.n_total_max))
        return out

    def coefficients(self, theta_a: float, theta_b: float, prep: Sequence[float]) -> np.ndarray:
        angles = np.array([theta_a, theta_b, *prep], dtype=float)
        return np.exp(1j * (self.charges @ angles))

    def assemble(self, theta_a: float, theta_b: float, prep: Sequence[float]) -> FockState:
        coeffs = self.coefficients(theta_a, theta_b, prep)
        st = self.state
        weighted = st.with_register(st.register, st.occ, st.amp * coeffs[st.tags], st.tags)
        return weighted.untagged()


def _side_pairs(state: FockState, paths: Sequence[str]) -> np.ndarray:
    modes = [m for p in paths for m in state.register.modes_on(p)]
    return count_in(state, modes) // 2


def run_components(cfg: ExperimentConfig, pattern=None) -> PhaseComponents:
    """Propagate all phase classes in one tagged pass (pump and prep phases at zero).

    Phase charges are ordered ``(theta_A, theta_B, phi_A, phi_A', phi_B, phi_B')``.
    The pair numbers are read off the prepared paths and the prep charges are
    the V photon numbers there, summed over internal indices. With a herald
    ``pattern`` the detector ports are projected on the fly.
    """
    plan = build_circuit(replace(cfg, prep_phases={}))
    state = initial_state(cfg, with_pump_phases=False)
    mid = plan.apply(state, 0, plan.phase_index)
    mid = extend_register(mid, prep_phase_modes(cfg.internals))
    columns = [_side_pairs(mid, (PATH_A, PATH_A2)), _side_pairs(mid, (PATH_B, PATH_B2))]
    for path in PREP_PATHS:
        columns.append(count_in(mid, [m for m in mid.register.modes_on(path) if m.pol == V]))
    charge_rows = np.stack(columns, axis=1)
    charges, tags = np.unique(charge_rows, axis=0, return_inverse=True)
    tagged = FockState.from_arrays(mid.register, mid.occ, mid.amp, mid.n_total_max, tags.reshape(-1))
    if pattern is None:
        out = plan.apply(tagged, plan.phase_index)
    else:
        out = plan.apply_heralded(tagged, pattern, plan.phase_index)
    return PhaseComponents(charges.astype(float), out)
