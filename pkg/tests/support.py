"""Helpers shared by the protocol tests and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from cascadesim.detection import VE_HF, project_herald
from cascadesim.elements import PbsImperfection
from cascadesim.experiments import ideal_config
from cascadesim.fock import H, V, FockState, ModeId, ModeRegister, count_in
from cascadesim.protocol import PBS_FIELDS, build_circuit, run

PREP_KEYS = ("A", "A'", "B", "B'")

SCALINGS = {
    2: lambda a, b: a * a * b * b,
    1: lambda a, b: a * b ** 3,
    0: lambda a, b: b ** 4,
}


def heralded_sector_amplitudes(alpha: float):
    """Heralded output of the ideal circuit split by receiver photon number.

    Returns ``{n: {occupation: amplitude}}`` with ``n`` the number of photons
    on paths a and b.
    """
    out = project_herald(run(ideal_config(alpha ** 2)), VE_HF)
    receivers = [m for p in ("a", "b") for m in out.register.modes_on(p)]
    n_rec = count_in(out, receivers)
    order = sorted(range(len(out.register)), key=lambda i: str(out.register.modes[i]))
    sectors = {}
    for occ, amp, n in zip(out.occ, out.amp, n_rec):
        key = tuple(int(occ[i]) for i in order)
        sectors.setdefault(int(n), {})[key] = complex(amp)
    return sectors


def scaled_sector_spread(alphas):
    """Largest deviation of amplitude / scaling across ``alphas``, per sector."""
    per_alpha = []
    for alpha in alphas:
        beta = math.sqrt(1 - alpha ** 2)
        sectors = heralded_sector_amplitudes(alpha)
        per_alpha.append({n: {k: v / SCALINGS[n](alpha, beta) for k, v in terms.items()}
                          for n, terms in sectors.items()})
    spread = {}
    for n in SCALINGS:
        keys = set().union(*(d.get(n, {}).keys() for d in per_alpha))
        ref = per_alpha[0].get(n, {})
        spread[n] = max((abs(d.get(n, {}).get(k, 0) - ref.get(k, 0)) for d in per_alpha for k in keys),
                        default=0.0)
        spread[n] = (spread[n], len(keys))
    return spread


def leaky_ideal_input(alpha_sq: float, extinction_db: float, eta: float = 1.0):
    """Four-photon input with every PBS at the given extinction ratio."""
    imp = PbsImperfection(extinction_db, extinction_db)
    cfg = replace(ideal_config(alpha_sq), **{f: imp for f in PBS_FIELDS})
    if eta < 1.0:
        cfg = replace(cfg, path_eta={p: eta for p in "abcd"})
    return cfg


def sector_share_grid(n: int = 32):
    """``n`` pump-phase pairs spread uniformly over the torus (a rank-1 lattice)."""
    k = np.arange(n)
    return np.stack([2 * np.pi * k / n, 2 * np.pi * ((5 * k) % n) / n], axis=1)


def same_side_input(alpha_sq: float) -> FockState:
    """A = alpha H + beta V and A' = alpha V + beta H; the B side is empty.

    Both photons come from Alice, so any herald must come from two photons
    meeting on the central path.
    """
    reg = ModeRegister([ModeId(p, pol) for p in ("A", "A'") for pol in (H, V)])
    a, b = math.sqrt(alpha_sq), math.sqrt(1 - alpha_sq)
    terms = {}
    for ia, aa in ((0, a), (1, b)):
        for ib, ab in ((2, b), (3, a)):
            occ = [0, 0, 0, 0]
            occ[ia] += 1
            occ[ib] += 1
            terms[tuple(occ)] = aa * ab
    return FockState(reg, terms)


def same_side_herald_prob(alpha_sq: float, comb_db: float, phase: float = 0.0) -> float:
    """Herald probability of :func:`same_side_input` with a prep phase on A'."""
    imp = PbsImperfection(comb_db, comb_db)
    cfg = replace(ideal_config(alpha_sq), comb_pbs_A=imp, comb_pbs_B=imp, prep_phases={"A'": phase})
    return build_circuit(cfg).apply_heralded(same_side_input(alpha_sq), VE_HF).norm_sq()


def random_ideal_input_config(rng: np.random.Generator):
    """Four-photon input with random PBS imperfections, losses, phases and detectors."""

    def pbs():
        er = [math.inf if rng.random() < 0.25 else rng.uniform(15, 45) for _ in range(2)]
        return PbsImperfection(er[0], er[1], rng.uniform(-0.05, 0.05))

    return replace(
        ideal_config(rng.uniform(0.3, 0.97)),
        path_eta={p: rng.uniform(0.3, 1.0) for p in "abcd"},
        prep_phases={p: rng.uniform(0, 2 * math.pi) for p in PREP_KEYS},
        overlap_mu=float(rng.choice([1.0, 0.9, 0.5])),
        detector_model=str(rng.choice(["threshold", "pnr"])),
        **{f: pbs() for f in PBS_FIELDS},
    )
