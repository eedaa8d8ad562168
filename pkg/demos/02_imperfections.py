"""
What real polarizing beam splitters and loss do
===============================================

Two photons from the same side can meet on the central path. With perfect
polarizing beam splitters the 22.5 degree plate turns that pair into |2H>
and |2V> terms with no H-V coincidence, so it never heralds. Leakage at
the combining splitter breaks the cancellation. This script shows the
cancellation first, then how 30 dB leakage and 70 % transmission bend
the fidelity curve of the four-photon input.
"""

import math

import numpy as np
from dataclasses import replace

from cascadesim.detection import VE_HF
from cascadesim.elements import PbsImperfection
from cascadesim.experiments import evaluate, ideal_config
from cascadesim.fock import H, V, FockState, ModeId, ModeRegister
from cascadesim.protocol import PBS_FIELDS, build_circuit


def same_side_pair(alpha_sq):
    """Alice's two photons only: A = alpha H + beta V and A' = alpha V + beta H."""
    reg = ModeRegister([ModeId(p, pol) for p in ("A", "A'") for pol in (H, V)])
    a, b = math.sqrt(alpha_sq), math.sqrt(1 - alpha_sq)
    return FockState(reg, {(1, 0, 1, 0): a * b, (1, 0, 0, 1): a * a,
                           (0, 1, 1, 0): b * b, (0, 1, 0, 1): b * a})


def herald_prob(alpha_sq, comb_db, phase):
    imp = PbsImperfection(comb_db, comb_db)
    cfg = replace(ideal_config(alpha_sq), comb_pbs_A=imp, comb_pbs_B=imp, prep_phases={"A'": phase})
    return build_circuit(cfg).apply_heralded(same_side_pair(alpha_sq), VE_HF).norm_sq()


phases = np.linspace(0, 2 * np.pi, 8, endpoint=False)
print("same-side pair, alpha^2 = 0.66, herald probability versus the A' prep phase")
print(f"{'phase':>6} {'ideal PBS':>10} {'20 dB':>10}")
for ph in phases:
    print(f"{ph:6.2f} {herald_prob(0.66, math.inf, ph):10.2e} {herald_prob(0.66, 20.0, ph):10.2e}")

# %%
# Leakage also lets an unwanted amplitude reach the receivers. For a
# 30 dB splitter the leaked amplitude equals beta near alpha^2 = 0.999 and
# cancels the wanted one, so F_total falls to zero there before it recovers.
grid = [0.5, 0.66, 0.75, 0.9, 0.95, 0.99, 0.995, 0.998, 0.999, 0.9995, 0.9999]
print()
print(f"{'alpha^2':>8} {'ideal':>8} {'30 dB':>8} {'30 dB, eta 0.7':>15}")
for a2 in grid:
    leaky = replace(ideal_config(a2), **{f: PbsImperfection(30.0, 30.0) for f in PBS_FIELDS})
    lossy = replace(leaky, path_eta={p: 0.7 for p in "abcd"})
    print(f"{a2:8.4f} {evaluate(ideal_config(a2)).f_heralded:8.4f} "
          f"{evaluate(leaky).f_heralded:8.4f} {evaluate(lossy).f_heralded:15.4f}")
