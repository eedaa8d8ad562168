"""Named experiments that regenerate the protocol data sets as CSV tables.

Each ``exp_*`` function returns plain rows (lists of dicts with the CSV
column names as keys); :func:`write_csv` and :func:`run_experiment` turn
them into files plus a JSON run manifest. Configs are flat JSON objects,
see :func:`config_from_dict`.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from . import __version__
from . import elements as el
from .detection import (VE_HF, VE_HF_PNR, DensityMatrix2Q, HeraldPattern, batch_fidelities,
                        compensate_bell_phase, fidelity_to_psi_minus, herald_gram, purity,
                        reduce_to_qubits)
from .elements import PbsImperfection
from .fock import FockError, ModeId, basis_state, count_in, apply_mode_transform, extend_register
from .protocol import (PBS_FIELDS, PREP_PATHS, ExperimentConfig, distinguishability_split,
                       hom_overlap_at_delay, run_components, run_heralded)
from .sources import SourceConfig
from .tomography import mh_fidelity_distribution, mle_reconstruct, simulate_counts

SWEEP_COLUMNS = ("alpha_sq", "herald_prob", "fourfold_norm", "f_postselected", "f_heralded")
PHASE_MC_COLUMNS = ("alpha_sq", "f_min", "f_max", "f_mean", "f_std", "n_sets", "seed")
HOM_COLUMNS = ("combo", "delta_t_ps", "coincidence_prob")
TOMO_COLUMNS = ("quantity", "true_value", "reconstructed", "mh_std")

DEFAULT_SWEEP = (0.5, 0.55, 0.6, 0.66, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.98, 0.99)
MEASURED_ALPHA_SQ = (0.5, 0.66, 0.75)
DEFAULT_MC_GRID = (0.5, 0.55, 0.6, 0.66, 0.7, 0.75, 0.8, 0.9)
PHASE_NAMES = ("theta_A", "theta_B") + tuple(f"phi_{p}" for p in PREP_PATHS)
HOM_COMBOS = ("HH", "HV", "VH", "VV")
DEFAULT_HOM_SIGMA_PS = 3.0
DEFAULT_HOM_DELAYS_PS = tuple(float(x) for x in np.linspace(-15.0, 15.0, 31))
FOURFOLD_REFERENCE_ALPHA_SQ = 0.5


class ConfigError(FockError):
    """A configuration file or value is malformed."""


# ---------------------------------------------------------------------------
# configuration


def midpoint_config(alpha_sq: float = 0.5) -> ExperimentConfig:
    """SPDC input with the centre of each measured imperfection range.

    Extinction ratios 30 dB on every PBS, 1.5 degree splitting-PBS
    misalignment, and a path transmission of 0.70 (heralding efficiency)
    times 0.845 (detector efficiency) on every lossy path.
    """
    er = PbsImperfection(30.0, 30.0)
    split = PbsImperfection(30.0, 30.0, math.radians(1.5))
    eta = round(0.70 * 0.845, 6)
    return ExperimentConfig(
        source=SourceConfig(alpha=math.sqrt(alpha_sq), p=math.sqrt(3e-3)),
        split_pbs_A=split, split_pbs_B=split, comb_pbs_A=er, comb_pbs_B=er,
        bsm_pbs_e=er, bsm_pbs_f=er,
        path_eta={p: eta for p in ("a", "b", "c", "d")},
    )


def ideal_config(alpha_sq: float = 0.5) -> ExperimentConfig:
    """Four-photon input, perfect optics and detectors."""
    return ExperimentConfig(source=SourceConfig(alpha=math.sqrt(alpha_sq)), input_model="ideal")


def _db_out(x: float):
    return None if math.isinf(x) else x


def _db_in(key: str, x):
    if x is None:
        return math.inf
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise ConfigError(f"{key} must be a number or null")
    return float(x)


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Flat JSON-ready mapping; infinite extinction ratios become ``null``."""
    out: Dict[str, Any] = {
        "alpha": cfg.source.alpha,
        "p": cfg.source.p,
        "theta_a": cfg.source.theta_a,
        "theta_b": cfg.source.theta_b,
        "n_pair_max": cfg.source.n_pair_max,
    }
    for name in PBS_FIELDS:
        imp: PbsImperfection = getattr(cfg, name)
        out[f"{name}_extinction_h_db"] = _db_out(imp.extinction_h_db)
        out[f"{name}_extinction_v_db"] = _db_out(imp.extinction_v_db)
        out[f"{name}_misalignment_rad"] = imp.misalignment_rad
    for path in ("a", "b", "c", "d"):
        out[f"eta_{path}"] = cfg.eta(path)
    for path in PREP_PATHS:
        out[f"prep_phase_{path}"] = float(cfg.prep_phases.get(path, 0.0))
    out.update(overlap_mu=cfg.overlap_mu, detector_model=cfg.detector_model,
               input_model=cfg.input_model, bs_convention=cfg.bs_convention,
               compensate_phase=cfg.compensate_phase)
    return out


CONFIG_KEYS = tuple(config_to_dict(ExperimentConfig()))


def _number(d: Mapping[str, Any], key: str, default: float) -> float:
    x = d.get(key, default)
    if not isinstance(x, (int, float)) or isinstance(x, bool):
        raise ConfigError(f"{key} must be a number")
    return float(x)


def _integer(d: Mapping[str, Any], key: str) -> int:
    x = d[key]
    if isinstance(x, bool) or not isinstance(x, (int, float)) or int(x) != x:
        raise ConfigError(f"{key} must be an integer")
    return int(x)


def config_from_dict(d: Mapping[str, Any], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Strict parser: unknown keys are errors, missing keys keep ``base`` values."""
    unknown = sorted(set(d) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    merged = dict(config_to_dict(base or ExperimentConfig()))
    merged.update(d)
    try:
        source = SourceConfig(
            alpha=_number(merged, "alpha", 0.0), p=_number(merged, "p", 0.0),
            theta_a=_number(merged, "theta_a", 0.0), theta_b=_number(merged, "theta_b", 0.0),
            n_pair_max=_integer(merged, "n_pair_max"),
        )
        pbs = {}
        for name in PBS_FIELDS:
            pbs[name] = PbsImperfection(
                _db_in(f"{name}_extinction_h_db", merged[f"{name}_extinction_h_db"]),
                _db_in(f"{name}_extinction_v_db", merged[f"{name}_extinction_v_db"]),
                _number(merged, f"{name}_misalignment_rad", 0.0),
            )
        etas = {p: _number(merged, f"eta_{p}", 1.0) for p in ("a", "b", "c", "d")}
        phases = {p: _number(merged, f"prep_phase_{p}", 0.0) for p in PREP_PATHS}
        for key in ("detector_model", "input_model", "bs_convention"):
            if not isinstance(merged[key], str):
                raise ConfigError(f"{key} must be a string")
        if not isinstance(merged["compensate_phase"], bool):
            raise ConfigError("compensate_phase must be true or false")
        return ExperimentConfig(
            source=source, **pbs,
            path_eta={p: v for p, v in etas.items() if v != 1.0},
            prep_phases={p: v for p, v in phases.items() if v != 0.0},
            overlap_mu=_number(merged, "overlap_mu", 1.0),
            detector_model=merged["detector_model"], input_model=merged["input_model"],
            bs_convention=merged["bs_convention"], compensate_phase=merged["compensate_phase"],
        )
    except ConfigError:
        raise
    except FockError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return config_from_dict(data, base)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# single-point evaluation


def herald_pattern_for(cfg: ExperimentConfig) -> HeraldPattern:
    return VE_HF_PNR if cfg.detector_model == "pnr" else VE_HF


@dataclass(frozen=True)
class PointResult:
    """Heralding statistics of one configuration."""

    herald_prob: float
    fourfold_prob: float
    f_postselected: float
    f_heralded: float
    state: DensityMatrix2Q


def evaluate(cfg: ExperimentConfig) -> PointResult:
    """Run the heralded circuit once and score the receiver state."""
    out = run_heralded(cfg, herald_pattern_for(cfg))
    prob = out.norm_sq()
    if prob <= 0:
        return PointResult(0.0, 0.0, 0.0, 0.0, DensityMatrix2Q.absent())
    d = reduce_to_qubits(out)
    if cfg.compensate_phase:
        d = compensate_bell_phase(d)
    f = fidelity_to_psi_minus(d)
    return PointResult(prob, prob * d.in_subspace_weight, f.postselected, f.total, d)


def _evaluate_alpha(args):
    cfg, a2 = args
    return a2, evaluate(cfg.with_alpha(math.sqrt(a2)))


def _map(fn: Callable, items: Sequence, workers: int):
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _check_alpha_sq(values: Sequence[float]):
    for a2 in values:
        if not 0.0 < a2 < 1.0:
            raise ConfigError(f"alpha^2 values must lie in (0, 1), got {a2}")


# ---------------------------------------------------------------------------
# experiments


def exp_sweep_alpha(cfg: ExperimentConfig, alpha_sqs: Sequence[float] = DEFAULT_SWEEP,
                    workers: int = 1) -> List[Dict[str, float]]:
    """Herald probability, fourfold probability and fidelities versus alpha^2.

    The fourfold probability is normalized to its maximum over the evaluated
    points; alpha^2 = 0.5 is always evaluated so the reference exists even
    for a one-point sweep.
    """
    _check_alpha_sq(alpha_sqs)
    grid = sorted(set(float(a) for a in alpha_sqs) | {FOURFOLD_REFERENCE_ALPHA_SQ})
    results = dict(_map(_evaluate_alpha, [(cfg, a2) for a2 in grid], workers))
    ref = max(r.fourfold_prob for r in results.values())
    rows = []
    for a2 in sorted(set(float(a) for a in alpha_sqs)):
        r = results[a2]
        rows.append({
            "alpha_sq": a2,
            "herald_prob": r.herald_prob,
            "fourfold_norm": r.fourfold_prob / ref if ref > 0 else 0.0,
            "f_postselected": r.f_postselected,
            "f_heralded": r.f_heralded,
        })
    return rows


def random_phase_sets(n_sets: int, seed, active: Sequence[str] = PHASE_NAMES) -> np.ndarray:
    """Uniform phases on [0, 2 pi) for the names in ``active``; other columns stay 0."""
    unknown = set(active) - set(PHASE_NAMES)
    if unknown:
        raise ConfigError(f"unknown phase names {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    draws = rng.uniform(0.0, 2 * np.pi, size=(n_sets, len(PHASE_NAMES)))
    mask = np.array([name in active for name in PHASE_NAMES])
    return draws * mask


def phase_fidelities(cfg: ExperimentConfig, angles: np.ndarray) -> np.ndarray:
    """``F_total`` for each row of ``angles`` (ordered as :data:`PHASE_NAMES`).

    The configured pump and prep phases are replaced by the given ones.
    """
    comps = run_components(cfg, herald_pattern_for(cfg))
    gram = herald_gram(comps.state, len(comps), herald_pattern_for(cfg))
    out = np.empty(len(angles))
    for start in range(0, len(angles), 500):
        chunk = angles[start:start + 500]
        probs, blocks = gram.batch(np.exp(1j * chunk @ comps.charges.T))
        out[start:start + 500] = batch_fidelities(probs, blocks, cfg.compensate_phase)
    return out


@dataclass(frozen=True)
class PhaseMcResult:
    rows: List[Dict[str, float]]
    histograms: Dict[float, Tuple[np.ndarray, np.ndarray]] = field(repr=False)
    samples: Dict[float, np.ndarray] = field(repr=False)


def _mc_point(args):
    cfg, a2, angles = args
    return a2, phase_fidelities(cfg.with_alpha(math.sqrt(a2)), angles)


def exp_phase_monte_carlo(cfg: ExperimentConfig, n_sets: int = 1000, seed: int = 0,
                          alpha_sqs: Sequence[float] | None = None,
                          active_phases: Sequence[str] = PHASE_NAMES, bins: int = 40,
                          workers: int = 1) -> PhaseMcResult:
    """Spread of ``F_total`` over random pump and preparation phases.

    The same phase sets are used at every alpha^2. The grid always contains
    the three measured settings 0.5, 0.66 and 0.75.
    """
    if n_sets < 2:
        raise ConfigError("n_sets must be at least 2")
    grid = sorted(set(DEFAULT_MC_GRID if alpha_sqs is None else alpha_sqs) | set(MEASURED_ALPHA_SQ))
    _check_alpha_sq(grid)
    angles = random_phase_sets(n_sets, seed, active_phases)
    results = dict(_map(_mc_point, [(cfg, a2, angles) for a2 in grid], workers))
    rows, hists = [], {}
    for a2 in grid:
        f = results[a2]
        rows.append({"alpha_sq": a2, "f_min": float(f.min()), "f_max": float(f.max()),
                     "f_mean": float(f.mean()), "f_std": float(f.std(ddof=1)),
                     "n_sets": n_sets, "seed": seed})
        hists[a2] = np.histogram(f, bins=bins, range=(0.0, max(float(f.max()), 1e-12)))
    return PhaseMcResult(rows, hists, results)


def hom_coincidence(combo: str, overlap: float, convention: str = "symmetric") -> float:
    """Fourfold coincidence probability of one HOM combination at a given overlap.

    Alice's photon enters the central splitter on ``c``, Bob's on ``d``; both
    carry the polarization named by the second letter of ``combo`` (Alice's
    plates match her photon to Bob's). Bob's photon has wavepacket overlap
    ``overlap`` with Alice's. Coincidences are counted on ``He``/``Hf`` for
    H photons and ``Ve``/``Vf`` for V photons.
    """
    if combo not in HOM_COMBOS:
        raise ConfigError(f"combo must be one of {HOM_COMBOS}")
    pol = combo[1]
    ints = (0, 1)
    state = basis_state([ModeId("c", pol), ModeId("d", pol)],
                        {ModeId("c", pol): 1, ModeId("d", pol): 1})
    state = distinguishability_split(state, overlap, ["d"])
    stages = [el.beam_splitter("c", "d", 0.5, "e", "f", ints, convention),
              el.pbs_ideal("e", "vac_e", "He", "Ve", ints),
              el.pbs_ideal("f", "vac_f", "Hf", "Vf", ints)]
    for t in stages:
        state = extend_register(state, (m for m in t.inputs if m not in state.register))
        state = apply_mode_transform(state, t)
    ports = (f"{pol}e", f"{pol}f")
    hits = np.ones(len(state), dtype=bool)
    for port in ports:
        hits &= count_in(state, state.register.modes_on(port)) >= 1
    return float(np.sum(np.abs(state.amp[hits]) ** 2))


def _inverse_gaussian(t, base, vis, t0, sigma):
    return base * (1.0 - vis * np.exp(-(t - t0) ** 2 / (2.0 * sigma ** 2)))


@dataclass(frozen=True)
class HomFit:
    visibility: float
    center_ps: float
    sigma_ps: float
    plateau: float


def fit_hom_dip(delays: Sequence[float], probs: Sequence[float]) -> HomFit:
    """Least-squares inverted-Gaussian fit of a HOM dip."""
    t = np.asarray(delays, dtype=float)
    y = np.asarray(probs, dtype=float)
    base0 = float(y.max())
    vis0 = 1.0 - float(y.min()) / base0 if base0 > 0 else 0.0
    width0 = max((t.max() - t.min()) / 6.0, 1e-3)
    with warnings.catch_warnings():
        # noise-free dips fit exactly, which leaves the covariance undefined
        warnings.simplefilter("ignore", OptimizeWarning)
        popt, _ = curve_fit(_inverse_gaussian, t, y,
                            p0=[base0, vis0, float(t[np.argmin(y)]), width0], maxfev=20000)
    return HomFit(float(popt[1]), float(popt[2]), float(abs(popt[3])), float(popt[0]))


def exp_hom_scan(cfg: ExperimentConfig, delays_ps: Sequence[float] = DEFAULT_HOM_DELAYS_PS,
                 combos: Sequence[str] = HOM_COMBOS,
                 sigma_ps: float = DEFAULT_HOM_SIGMA_PS) -> Tuple[List[Dict[str, Any]], Dict[str, HomFit]]:
    """HOM dips for the photon combinations; peak visibility is ``cfg.overlap_mu``."""
    if len(delays_ps) < 4:
        raise ConfigError("a HOM scan needs at least four delays")
    rows, fits = [], {}
    for combo in sorted(combos):
        probs = []
        for dt in sorted(float(x) for x in delays_ps):
            mu = hom_overlap_at_delay(dt, sigma_ps, cfg.overlap_mu)
            p = hom_coincidence(combo, mu, cfg.bs_convention)
            probs.append(p)
            rows.append({"combo": combo, "delta_t_ps": dt, "coincidence_prob": p})
        fits[combo] = fit_hom_dip(sorted(float(x) for x in delays_ps), probs)
    return rows, fits


def exp_tomography_roundtrip(cfg: ExperimentConfig, shots: int = 10_000, seed: int = 0,
                             n_mh_samples: int = 1000) -> List[Dict[str, Any]]:
    """Protocol state, simulated tomography, MLE and MH error bar.

    Rows compare the simulator's conditional state (``true_value``) with the
    reconstruction for the postselected fidelity, the purity and the
    largest imaginary entry of rho.
    """
    if shots <= 0:
        raise ConfigError("shots must be positive")
    truth = evaluate(cfg).state
    if not truth.present:
        raise FockError("the configuration never produces a fourfold event")
    counts = simulate_counts(truth, shots, seed)
    est = mle_reconstruct(counts)
    mh = mh_fidelity_distribution(counts, n_mh_samples, seed, start=est)
    return [
        {"quantity": "f_postselected", "true_value": fidelity_to_psi_minus(truth).postselected,
         "reconstructed": fidelity_to_psi_minus(est).postselected, "mh_std": mh.std},
        {"quantity": "purity", "true_value": purity(truth), "reconstructed": purity(est),
         "mh_std": ""},
        {"quantity": "max_abs_imag", "true_value": float(np.abs(truth.rho.imag).max()),
         "reconstructed": float(np.abs(est.rho.imag).max()), "mh_std": ""},
    ]


# ---------------------------------------------------------------------------
# output


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    return str(x)


def write_csv(path: str | Path, columns: Sequence[str], rows: Sequence[Mapping[str, Any]]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


@dataclass(frozen=True)
class RunManifest:
    experiment: str
    config: Dict[str, Any]
    seed: int | None
    outputs: List[str]
    wall_time_s: float
    version: str = __version__

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def run_experiment(name: str, cfg: ExperimentConfig, out_dir: str | Path, seed: int = 0,
                   **options) -> RunManifest:
    """Run one named experiment, write its CSV files and ``<name>_manifest.json``."""
    out_dir = Path(out_dir)
    t0 = time.perf_counter()
    outputs: List[str] = []
    if name == "sweep-alpha":
        rows = exp_sweep_alpha(cfg, options.get("alpha_sqs", DEFAULT_SWEEP))
        write_csv(out_dir / "sweep_alpha.csv", SWEEP_COLUMNS, rows)
        outputs.append("sweep_alpha.csv")
        seed = None
    elif name == "phase-mc":
        res = exp_phase_monte_carlo(cfg, options.get("n_sets", 1000), seed, options.get("alpha_sqs"))
        write_csv(out_dir / "phase_mc.csv", PHASE_MC_COLUMNS, res.rows)
        hist_rows = []
        for a2, (counts, edges) in sorted(res.histograms.items()):
            for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
                hist_rows.append({"alpha_sq": a2, "bin_lo": lo, "bin_hi": hi, "count": int(c)})
        write_csv(out_dir / "phase_mc_hist.csv", ("alpha_sq", "bin_lo", "bin_hi", "count"), hist_rows)
        outputs += ["phase_mc.csv", "phase_mc_hist.csv"]
    elif name == "hom":
        rows, fits = exp_hom_scan(cfg)
        write_csv(out_dir / "hom.csv", HOM_COLUMNS, rows)
        fit_rows = [{"combo": k, "visibility": f.visibility, "center_ps": f.center_ps,
                     "sigma_ps": f.sigma_ps} for k, f in sorted(fits.items())]
        write_csv(out_dir / "hom_fit.csv", ("combo", "visibility", "center_ps", "sigma_ps"), fit_rows)
        outputs += ["hom.csv", "hom_fit.csv"]
        seed = None
    elif name == "tomo":
        rows = exp_tomography_roundtrip(cfg, options.get("shots", 10_000), seed)
        write_csv(out_dir / "tomo.csv", TOMO_COLUMNS, rows)
        outputs.append("tomo.csv")
    else:
        raise ConfigError(f"unknown experiment {name!r}")
    manifest = RunManifest(name, config_to_dict(cfg), seed, outputs,
                           round(time.perf_counter() - t0, 3))
    (out_dir / f"{name}_manifest.json").write_text(manifest.to_json() + "\n")
    return manifest


def with_ideal_input(cfg: ExperimentConfig) -> ExperimentConfig:
    return replace(cfg, input_model="ideal")
