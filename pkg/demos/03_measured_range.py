"""
Measured-range parameters: phase band, HOM dip and tomography
=============================================================

The midpoint configuration uses SPDC pairs, 30 dB splitters, 1.5 degree
misalignment on the splitting PBSs and a transmission of 0.59 on every
lossy path. Pump and preparation phases are not locked in the experiment,
so F_total is reported as a band over random phase sets. The script then
checks the two-photon interference and the tomography chain that would
be used to measure the delivered state. Expect under a minute.
"""

from dataclasses import replace

from cascadesim.experiments import (exp_hom_scan, exp_phase_monte_carlo,
                                    exp_tomography_roundtrip, ideal_config, midpoint_config)

res = exp_phase_monte_carlo(midpoint_config(), n_sets=200, seed=1, alpha_sqs=[0.66, 0.75])
print(f"{'alpha^2':>8} {'min':>7} {'mean':>7} {'max':>7}")
for row in res.rows:
    print(f"{row['alpha_sq']:8.2f} {row['f_min']:7.4f} {row['f_mean']:7.4f} {row['f_max']:7.4f}")

# %%
# HOM dips between Alice's and Bob's photons at the central splitter. The
# fitted visibility should equal the configured overlap.
_, fits = exp_hom_scan(replace(midpoint_config(), overlap_mu=0.97))
print()
for combo, fit in fits.items():
    print(f"HOM {combo}: visibility {fit.visibility:.4f}, centre {fit.center_ps:+.2e} ps, "
          f"width {fit.sigma_ps:.2f} ps")

# %%
# Tomography round trip on the heralded receiver state of the ideal circuit.
print()
for row in exp_tomography_roundtrip(ideal_config(0.75), shots=10_000, seed=3, n_mh_samples=500):
    print(row)
