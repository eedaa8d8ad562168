import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cascadesim import elements as el
from cascadesim.detection import VE_HF, herald, project_herald
from cascadesim.elements import PbsImperfection
from cascadesim.experiments import evaluate, herald_pattern_for, ideal_config, midpoint_config
from cascadesim.fock import (H, V, FockError, FockState, ModeId, ModeRegister,
                             apply_mode_transform, count_in, extend_register, inner_product)
from cascadesim.protocol import (PBS_FIELDS, CircuitPlan, ExperimentConfig, build_circuit,
                                 distinguishability_split, hom_overlap_at_delay, initial_state,
                                 run, run_components, run_heralded)
from cascadesim.sources import SourceConfig

from support import PREP_KEYS, same_side_herald_prob, scaled_sector_spread

def small_spdc(alpha_sq=0.5, **kw):
    return ExperimentConfig(source=SourceConfig(alpha=math.sqrt(alpha_sq), p=0.05), **kw)


imperfection = st.builds(
    PbsImperfection,
    st.one_of(st.just(math.inf), st.floats(15, 45)),
    st.one_of(st.just(math.inf), st.floats(15, 45)),
    st.floats(-0.05, 0.05),
)


@st.composite
def ideal_input_configs(draw):
    pbs = {f: draw(imperfection) for f in PBS_FIELDS}
    return replace(
        ideal_config(draw(st.floats(0.3, 0.97))),
        path_eta={p: draw(st.floats(0.3, 1.0)) for p in "abcd"},
        prep_phases={p: draw(st.floats(0, 2 * math.pi)) for p in PREP_KEYS},
        overlap_mu=draw(st.sampled_from([1.0, 0.9, 0.5])),
        detector_model=draw(st.sampled_from(["threshold", "pnr"])),
        **pbs,
    )


class TestCircuit:
    def test_stage_order(self):
        labels = build_circuit(midpoint_config()).labels
        first = {name: labels.index(name) for name in labels}
        assert first["split_pbs_A"] < first["prep_hwp_A"] < first["prep_phase_A"] < first["comb_pbs_A"]
        assert first["comb_pbs_A"] < first["hwp45_c"] < first["loss_c"] < first["central_bs"]
        assert first["central_bs"] < first["bsm_pbs_e"]

    def test_deterministic(self):
        a, b = build_circuit(midpoint_config()), build_circuit(midpoint_config())
        assert a.labels == b.labels
        assert all(np.array_equal(x.matrix, y.matrix) for (_, x), (_, y) in zip(a, b))

    def test_config_validation(self):
        with pytest.raises(FockError):
            ExperimentConfig(path_eta={"a": 1.2})
        with pytest.raises(FockError):
            ExperimentConfig(path_eta={"e": 0.5})
        with pytest.raises(FockError):
            ExperimentConfig(overlap_mu=-0.1)
        with pytest.raises(FockError):
            ExperimentConfig(detector_model="bucket")

    def test_lossless_conserves_photons(self):
        out = run(ideal_config(0.6))
        assert not [p for p in out.register.paths() if p.startswith("loss")]
        assert set(np.sum(out.occ, axis=1)) == {4}

    def test_norm_preserved_spdc(self):
        assert run(small_spdc(0.66)).norm() == pytest.approx(1.0, abs=1e-10)


class TestEq2Structure:
    def test_coefficient_scalings(self):
        spread = scaled_sector_spread([0.3, 0.5, 1 / math.sqrt(2), 0.8, 0.95])
        for n, (dev, n_terms) in spread.items():
            assert n_terms > 0
            assert dev < 1e-10

    def test_after_combining_pbs(self):
        """Alice's two photons right after her ideal combining PBS."""
        plan = build_circuit(ideal_config(0.5))
        stop = plan.labels.index("comb_pbs_A") + 1
        s = plan.apply(initial_state(ideal_config(0.5)), 0, stop)
        reg = s.register

        def amp(*modes):
            occ = [0] * len(reg)
            for m in modes:
                occ[reg.index(m)] += 1
            bob = [reg.index(ModeId(p, pol)) for p in ("B", "B'") for pol in (H, V)]
            # Bob's photons are untouched: marginalize them onto one fixed term
            occ[bob[0]] += 1
            occ[bob[3]] += 1
            return s.terms.get(tuple(occ), 0) / 0.5

        hc, vc, ha, va = ModeId("c", H), ModeId("c", V), ModeId("a", H), ModeId("a", V)
        assert amp(hc, ha) == pytest.approx(0.5)
        assert amp(hc, vc) == pytest.approx(0.5)
        assert amp(va, ha) == pytest.approx(0.5)
        assert amp(va, vc) == pytest.approx(0.5)

    def test_herald_fires_at_balanced_input(self):
        assert herald(run(ideal_config(0.5))).herald_prob > 0

    def test_no_herald_without_beta(self):
        assert evaluate(ideal_config(1.0 - 1e-16)).herald_prob < 1e-12
        out = run(replace(ideal_config(), source=SourceConfig(alpha=1.0)))
        assert herald(out).herald_prob == 0.0

    def test_no_herald_from_vacuum(self):
        cfg = ExperimentConfig(source=SourceConfig(p=0.0))
        assert herald(run(cfg)).herald_prob == 0.0


class TestCentralCancellation:
    """Two photons from one side meet on the central path."""

    def herald_prob(self, alpha_sq, comb_db, phase=0.0):
        return same_side_herald_prob(alpha_sq, comb_db, phase)

    @pytest.mark.parametrize("alpha_sq", [0.5, 0.66, 0.75, 0.9])
    @pytest.mark.parametrize("phase", [0.0, 1.0, math.pi / 2])
    def test_ideal_pbs_cancels(self, alpha_sq, phase):
        assert self.herald_prob(alpha_sq, math.inf, phase) < 1e-12

    @pytest.mark.parametrize("alpha_sq", [0.5, 0.66])
    def test_leakage_heralds(self, alpha_sq):
        assert self.herald_prob(alpha_sq, 20.0, math.pi / 2) > 1e-6

    def test_balanced_leakage_cancels_at_zero_phase(self):
        # equal |2H> and |2V> leakage amplitudes give opposite HV terms after the plate
        assert self.herald_prob(0.66, 20.0, 0.0) < 1e-12
        assert self.herald_prob(0.66, 20.0, math.pi) > 1e-6


class TestDistinguishability:
    def test_unit_overlap_unchanged(self):
        s = initial_state(ideal_config())
        assert distinguishability_split(s, 1.0) is s

    def test_range(self):
        with pytest.raises(FockError):
            distinguishability_split(initial_state(ideal_config()), 1.5)

    def test_fully_distinguishable_coincidence_half(self):
        reg = ModeRegister([ModeId("x", H), ModeId("y", H)])
        s = FockState(reg, {(1, 1): 1.0})
        s = distinguishability_split(s, 0.0, paths=["y"])
        s = extend_register(s, [m for m in el.modes_of("xy", (0, 1)) if m not in s.register])
        s = apply_mode_transform(s, el.beam_splitter("x", "y", 0.5, internals=(0, 1)))
        coinc = count_in(s, s.register.modes_on("x")) == 1
        assert np.sum(np.abs(s.amp[coinc]) ** 2) == pytest.approx(0.5)

    def test_overlap_at_delay(self):
        assert hom_overlap_at_delay(0.0, 3.0, 0.97) == pytest.approx(0.97)
        assert hom_overlap_at_delay(100.0, 3.0, 0.97) < 1e-12
        with pytest.raises(FockError):
            hom_overlap_at_delay(1.0, 0.0)


@pytest.fixture(scope="module")
def components():
    cfg = replace(midpoint_config(0.66), source=SourceConfig(alpha=math.sqrt(0.66), p=0.05))
    return cfg, run_components(cfg, herald_pattern_for(cfg))


class TestEquivalences:
    def test_heralded_pass_matches_full_run(self):
        cfg = replace(midpoint_config(0.66), source=SourceConfig(alpha=math.sqrt(0.66), p=0.05))
        early = run_heralded(cfg, VE_HF)
        full = project_herald(run(cfg), VE_HF)
        assert early.norm_sq() == pytest.approx(full.norm_sq(), rel=1e-10)

    def test_loss_commutes_with_routing(self):
        cfg = replace(ideal_config(0.66), comb_pbs_A=PbsImperfection(25.0, 25.0),
                      path_eta={"c": 0.7, "d": 0.7})
        plan = build_circuit(cfg)
        moved = [(lab, t) for lab, t in plan if lab not in ("loss_c", "loss_d")]
        for port in ("He", "Ve", "Hf", "Vf"):
            moved.append((f"loss_{port}", el.path_loss(port, 0.7, f"loss_{port}")))
        moved_plan = CircuitPlan(tuple(moved), plan.phase_index)
        state = initial_state(cfg)
        a = plan.apply_heralded(state, VE_HF).norm_sq()
        b = moved_plan.apply_heralded(state, VE_HF).norm_sq()
        assert a == pytest.approx(b, rel=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_phase_classes_reassemble(self, components, seed):
        cfg, comps = components
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0, 2 * np.pi, 2)
        prep = rng.uniform(0, 2 * np.pi, 4)
        assembled = comps.assemble(theta[0], theta[1], prep)
        direct_cfg = replace(cfg, source=replace(cfg.source, theta_a=theta[0], theta_b=theta[1]),
                             prep_phases=dict(zip(PREP_KEYS, prep)))
        direct = run_heralded(direct_cfg, herald_pattern_for(cfg))
        assert assembled.norm_sq() == pytest.approx(direct.norm_sq(), rel=1e-9)
        assert abs(inner_product(assembled, direct)) == pytest.approx(direct.norm_sq(), rel=1e-9)

    def test_sector_labels(self):
        comps = run_components(small_spdc())
        assert set(comps.sectors) <= {(a, b) for a in range(3) for b in range(3)}
        assert len(comps) == len(comps.charges)


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(cfg=ideal_input_configs())
    def test_convention_invariance(self, cfg):
        a = evaluate(replace(cfg, bs_convention="symmetric")).herald_prob
        b = evaluate(replace(cfg, bs_convention="real")).herald_prob
        assert abs(a - b) < 1e-10

    @settings(max_examples=100, deadline=None)
    @given(cfg=ideal_input_configs())
    def test_heralded_fidelity_bounded_by_postselected(self, cfg):
        r = evaluate(cfg)
        assert r.f_heralded <= r.f_postselected + 1e-12
