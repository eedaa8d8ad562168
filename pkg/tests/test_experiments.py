import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from cascadesim.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from cascadesim.elements import PbsImperfection
from cascadesim.experiments import (CONFIG_KEYS, HOM_COLUMNS, PHASE_MC_COLUMNS, SWEEP_COLUMNS,
                                    TOMO_COLUMNS, ConfigError, config_from_dict, config_to_dict,
                                    dump_config, evaluate, exp_hom_scan, exp_phase_monte_carlo,
                                    exp_sweep_alpha, exp_tomography_roundtrip, fit_hom_dip,
                                    hom_coincidence, ideal_config, load_config, midpoint_config,
                                    phase_fidelities, random_phase_sets)
from cascadesim.protocol import PBS_FIELDS

from oracles import ideal_closed_form_f_total


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestConfig:
    @pytest.mark.parametrize("make", [midpoint_config, ideal_config])
    def test_round_trip(self, make):
        cfg = make(0.66)
        again = config_from_dict(json.loads(dump_config(cfg)))
        assert again == cfg
        assert dump_config(again) == dump_config(cfg)

    def test_infinite_extinction_is_null(self):
        d = config_to_dict(ideal_config())
        assert d["comb_pbs_A_extinction_h_db"] is None

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            config_from_dict({"alpah": 0.5})

    @pytest.mark.parametrize("key,value", [("alpha", "half"), ("eta_a", True), ("n_pair_max", 1.5),
                                           ("compensate_phase", 1), ("detector_model", 3)])
    def test_type_errors(self, key, value):
        with pytest.raises(ConfigError):
            config_from_dict({key: value})

    def test_range_errors_become_config_errors(self):
        with pytest.raises(ConfigError):
            config_from_dict({"eta_a": 1.5})

    def test_partial_keeps_base(self):
        cfg = config_from_dict({"overlap_mu": 0.9}, midpoint_config())
        assert cfg == replace(midpoint_config(), overlap_mu=0.9)

    def test_every_key_is_documented_by_the_dump(self):
        assert set(json.loads(dump_config(midpoint_config()))) == set(CONFIG_KEYS)

    def test_load_errors(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_config(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")


class TestSweep:
    def test_balanced_point_matches_closed_form(self):
        row = exp_sweep_alpha(ideal_config(), [0.5])[0]
        assert row["f_heralded"] == pytest.approx(ideal_closed_form_f_total(0.5), abs=1e-10)
        assert row["fourfold_norm"] == pytest.approx(1.0)

    def test_fourfold_normalized_to_maximum(self):
        rows = exp_sweep_alpha(ideal_config(), [0.6, 0.9])
        assert max(r["fourfold_norm"] for r in rows) < 1.0
        assert [r["alpha_sq"] for r in rows] == [0.6, 0.9]

    def test_range(self):
        with pytest.raises(ConfigError):
            exp_sweep_alpha(ideal_config(), [1.0])


class TestPhaseMonteCarlo:
    def test_phase_sets_seeded(self):
        a = random_phase_sets(10, 3)
        assert np.array_equal(a, random_phase_sets(10, 3))
        assert a.shape == (10, 6)
        assert np.all((a >= 0) & (a < 2 * np.pi))

    def test_matches_direct_evaluation(self):
        cfg = replace(midpoint_config(0.66), source=replace(midpoint_config(0.66).source, p=0.05))
        angles = random_phase_sets(3, 1)
        fast = phase_fidelities(cfg, angles)
        for row, f in zip(angles, fast):
            direct = replace(cfg, source=replace(cfg.source, theta_a=row[0], theta_b=row[1]),
                             prep_phases=dict(zip(("A", "A'", "B", "B'"), row[2:])))
            assert f == pytest.approx(evaluate(direct).f_heralded, abs=1e-10)

    def test_ideal_optics_have_no_spread(self):
        f = phase_fidelities(ideal_config(0.66), random_phase_sets(50, 0))
        assert np.ptp(f) < 1e-10

    def test_leakage_spreads(self):
        cfg = replace(ideal_config(0.66), **{k: PbsImperfection(20.0, 20.0) for k in PBS_FIELDS})
        assert np.ptp(phase_fidelities(cfg, random_phase_sets(50, 0))) > 1e-6

    def test_loss_lowers_mean(self):
        base = replace(ideal_config(0.66), **{k: PbsImperfection(30.0, 30.0) for k in PBS_FIELDS})
        lossy = replace(base, path_eta={p: 0.6 for p in "abcd"})
        angles = random_phase_sets(50, 0)
        assert phase_fidelities(lossy, angles).mean() < phase_fidelities(base, angles).mean()

    def test_grid_includes_measured_points(self):
        res = exp_phase_monte_carlo(ideal_config(), n_sets=5, alpha_sqs=[0.9])
        assert [r["alpha_sq"] for r in res.rows] == [0.5, 0.66, 0.75, 0.9]

    def test_too_few_sets(self):
        with pytest.raises(ConfigError):
            exp_phase_monte_carlo(ideal_config(), n_sets=1)


class TestHom:
    def test_perfect_overlap_no_coincidence(self):
        for combo in ("HH", "VV"):
            assert hom_coincidence(combo, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_distinguishable_plateau(self):
        assert hom_coincidence("HH", 0.0) == pytest.approx(0.5)

    def test_fit_recovers_dip(self):
        rows, fits = exp_hom_scan(replace(midpoint_config(), overlap_mu=0.97))
        assert len(rows) == 4 * 31
        for fit in fits.values():
            assert fit.visibility == pytest.approx(0.97, abs=0.005)
            assert abs(fit.center_ps) < 0.1

    def test_fit_synthetic(self):
        t = np.linspace(-10, 10, 41)
        y = 0.4 * (1 - 0.8 * np.exp(-(t - 1.0) ** 2 / 8.0))
        fit = fit_hom_dip(t, y)
        assert fit.visibility == pytest.approx(0.8, abs=1e-6)
        assert fit.center_ps == pytest.approx(1.0, abs=1e-6)
        assert fit.sigma_ps == pytest.approx(2.0, abs=1e-6)

    def test_bad_combo(self):
        with pytest.raises(ConfigError):
            hom_coincidence("HX", 1.0)


class TestTomographyRoundtrip:
    def test_ideal_state(self):
        rows = {r["quantity"]: r for r in exp_tomography_roundtrip(ideal_config(0.66), 10_000, 1,
                                                                   n_mh_samples=200)}
        f = rows["f_postselected"]
        assert abs(f["reconstructed"] - f["true_value"]) < 0.01
        assert f["mh_std"] > 0


class TestCli:
    def test_sweep_csv(self, tmp_path):
        assert main(["sweep-alpha", "--ideal-input", "--alpha-sq", "0.5,0.7", "--out", str(tmp_path)]) == EXIT_OK
        rows = read_csv(tmp_path / "sweep_alpha.csv")
        assert tuple(rows[0]) == SWEEP_COLUMNS
        assert len(rows) == 3
        manifest = json.loads((tmp_path / "sweep-alpha_manifest.json").read_text())
        assert manifest["outputs"] == ["sweep_alpha.csv"]

    def test_phase_mc_deterministic(self, tmp_path):
        args = ["phase-mc", "--ideal-input", "--alpha-sq", "0.5", "--n-sets", "20", "--seed", "4"]
        assert main(args + ["--out", str(tmp_path / "one")]) == EXIT_OK
        assert main(args + ["--out", str(tmp_path / "two")]) == EXIT_OK
        one = (tmp_path / "one" / "phase_mc.csv").read_bytes()
        assert one == (tmp_path / "two" / "phase_mc.csv").read_bytes()
        assert tuple(read_csv(tmp_path / "one" / "phase_mc.csv")[0]) == PHASE_MC_COLUMNS

    def test_hom_and_tomo_headers(self, tmp_path):
        assert main(["hom", "--out", str(tmp_path)]) == EXIT_OK
        assert tuple(read_csv(tmp_path / "hom.csv")[0]) == HOM_COLUMNS
        assert main(["tomo", "--ideal-input", "--shots", "2000", "--out", str(tmp_path)]) == EXIT_OK
        assert tuple(read_csv(tmp_path / "tomo.csv")[0]) == TOMO_COLUMNS

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        assert main(["sweep-alpha", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
        assert "unknown config keys" in capsys.readouterr().err

    def test_numerical_error_exit(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        # perfect optics at alpha = 1 never herald, so there is no state to measure
        cfg.write_text(json.dumps({**config_to_dict(ideal_config()), "alpha": 1.0}))
        code = main(["tomo", "--ideal-input", "--config", str(cfg), "--out", str(tmp_path)])
        assert code == EXIT_NUMERICAL

    def test_unknown_verb(self):
        with pytest.raises(SystemExit) as exc:
            main(["bogus"])
        assert exc.value.code == 2
