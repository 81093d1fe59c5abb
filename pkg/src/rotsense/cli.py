"""Command-line experiment runner.

Each subcommand resolves an :class:`ExperimentConfig` (defaults, then the
``--config`` JSON file, then flags), runs the simulation and estimation
pipeline, and writes CSV tables plus ``summary.txt`` into ``--out``.  Nothing
in the output depends on the clock or the machine, so a rerun with the same
config reproduces every file byte for byte.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import estimation as est
from . import metrology as met
from .measurement import (
    DetectionModel,
    ProtocolDirections,
    RawDataset,
    calibrate_and_project,
    default_protocol,
    records_to_arrays,
    simulate_powers,
)
from .probe_states import (
    anticoherence_report,
    coherent,
    king_j2,
    king_j3,
    mean_spin,
    noon,
    spin_covariance,
    stabilizer,
)
from .spin_algebra import RotationParams, SpinState, as_spin, majorana_constellation

MODES = ("axis", "full", "analytics", "constellation")
PRESETS = ("ideal", "bench")
ZERO_CHOP = 1e-12
REFERENCE_AXES = {"king_j2": (1.11, 3.75), "king_j3": (2.40, 2.76)}


class ConfigError(ValueError):
    pass


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if abs(x) < ZERO_CHOP:
        return "0"  # round-off residue, and no "-0"
    return f"{x:.6g}"


@dataclass
class Table:
    header: List[str]
    rows: List[list] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        for row in self.rows:
            w.writerow([_fmt(v) for v in row])
        return buf.getvalue()


@dataclass
class Report:
    mode: str
    config: "ExperimentConfig"
    tables: Dict[str, Table] = field(default_factory=dict)
    lines: List[str] = field(default_factory=list)
    values: dict = field(default_factory=dict)
    raw: Optional[RawDataset] = None

    def summary(self) -> str:
        out = [f"rotsense {self.mode} report", f"seed: {self.config.seed}", ""]
        out += self.lines
        out += ["", "resolved config:", self.config.dumps()]
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, table in self.tables.items():
            path = out_dir / f"{self.mode}_{name}.csv"
            path.write_text(table.to_csv())
            written.append(path)
        if self.raw is not None:
            path = out_dir / f"{self.mode}_raw_powers.txt"
            self.raw.save(path)
            written.append(path)
        path = out_dir / f"{self.mode}_summary.txt"
        path.write_text(self.summary())
        written.append(path)
        return written


def _detection_dict(model: DetectionModel) -> dict:
    d = model.to_dict()
    d.pop("rng_seed")  # the run seed is the single source of randomness
    return d


@dataclass
class ExperimentConfig:
    """Everything a run depends on.

    ``probe`` is ``king_j2``, ``king_j3``, ``noon(J)``, ``coherent(J, theta, phi)``
    or ``custom`` (then ``amplitudes`` holds ``[re, im]`` pairs, index 0 is
    m = +J).  ``theta_axis``/``phi_axis`` default to the probe's reference
    axis; rotations use the grid ``k 2pi / omega_steps``, k = 0..omega_steps.
    """

    mode: str = "axis"
    probe: str = "king_j2"
    amplitudes: Optional[List[List[float]]] = None
    theta_axis: Optional[float] = None
    phi_axis: Optional[float] = None
    omega_steps: int = 36
    protocol: List[List[float]] = field(default_factory=lambda: default_protocol().as_list())
    detection: dict = field(default_factory=lambda: _detection_dict(DetectionModel()))
    fisher_mode: str = "measured"
    seed: int = 0
    out: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if int(self.omega_steps) < 2:
            raise ConfigError("omega_steps must be >= 2")
        if self.fisher_mode not in ("measured", "model"):
            raise ConfigError("fisher_mode must be 'measured' or 'model'")
        try:
            ProtocolDirections.from_list(self.protocol)
            self.detection_model()
            self.probe_state()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc

    def probe_state(self) -> SpinState:
        return parse_probe(self.probe, self.amplitudes)

    def protocol_directions(self) -> ProtocolDirections:
        return ProtocolDirections.from_list(self.protocol)

    def detection_model(self) -> DetectionModel:
        d = dict(self.detection)
        d["rng_seed"] = int(self.seed)
        return DetectionModel.from_dict(d)

    def axis(self):
        ref = REFERENCE_AXES.get(self.probe, (np.pi / 3, np.pi / 4))
        t = ref[0] if self.theta_axis is None else float(self.theta_axis)
        p = ref[1] if self.phi_axis is None else float(self.phi_axis)
        return t, p

    def omegas(self) -> np.ndarray:
        return met.omega_grid(int(self.omega_steps))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


_PROBE_RE = re.compile(r"^\s*(\w+)\s*(?:[(:]\s*([^)]*?)\s*\)?)?\s*$")


def parse_probe(name: str, amplitudes=None) -> SpinState:
    """Probe from its config name, e.g. ``noon(3)`` or ``coherent(2, 0.5, 1)``."""
    m = _PROBE_RE.match(name or "")
    if not m:
        raise ConfigError(f"cannot parse probe {name!r}")
    kind = m.group(1).lower()
    args = [float(a) for a in re.split(r"[,:\s]+", m.group(2))] if m.group(2) else []
    if kind == "king_j2" and not args:
        return king_j2()
    if kind == "king_j3" and not args:
        return king_j3()
    if kind == "noon" and len(args) == 1:
        return noon(args[0])
    if kind == "coherent" and len(args) in (1, 3):
        return coherent(args[0], *args[1:])
    if kind == "custom":
        if not amplitudes:
            raise ConfigError("custom probe needs 'amplitudes' as [re, im] pairs")
        amps = np.array([complex(re_, im_) for re_, im_ in amplitudes])
        return SpinState.from_amplitudes(amps).normalize()
    raise ConfigError(f"unknown probe {name!r}")


def resolve_config(args) -> ExperimentConfig:
    """Defaults, then the config file, then command-line flags."""
    d = ExperimentConfig().to_dict()
    if getattr(args, "config", None):
        d.update(json.loads(Path(args.config).read_text()))
    d["mode"] = args.command
    if args.probe is not None:
        d["probe"] = args.probe
        if args.probe != "custom":
            d["amplitudes"] = None
    if args.seed is not None:
        d["seed"] = args.seed
    if args.out is not None:
        d["out"] = args.out
    if getattr(args, "preset", None):
        base = DetectionModel.bench() if args.preset == "bench" else DetectionModel()
        d["detection"] = _detection_dict(base)
    if args.noise is not None:
        d["detection"] = dict(d["detection"], power_noise_rel=args.noise)
    return ExperimentConfig.from_dict(d)


def _simulate(config: ExperimentConfig, rotations):
    probe = config.probe_state()
    protocol = config.protocol_directions()
    raw = simulate_powers(probe, rotations, protocol, config.detection_model())
    # calibrate from the serialized form, as a bench run would
    raw = RawDataset.loads(raw.dumps())
    q, std = records_to_arrays(calibrate_and_project(raw))
    return probe, protocol, raw, q, std


def _projection_table(omegas, q, std) -> Table:
    head = ["omega"] + [f"q{k + 1}" for k in range(5)] + [f"std{k + 1}" for k in range(5)]
    return Table(head, [[w, *qq, *ss] for w, qq, ss in zip(omegas, q, std)])


def run_axis_experiment(config: ExperimentConfig) -> Report:
    """Axis estimation from rotations about one axis at every grid angle."""
    rep = Report("axis", config)
    theta, phi = config.axis()
    omegas = config.omegas()
    rots = [RotationParams(w, theta, phi) for w in omegas]
    probe, protocol, raw, q, std = _simulate(config, rots)
    rep.raw = raw
    rep.tables["projections"] = _projection_table(omegas, q, std)

    fit = est.estimate_axis(q, omegas, probe, protocol, with_fisher=False)
    rep.values.update(theta_hat=fit.theta_hat, phi_hat=fit.phi_hat, log_likelihood=fit.log_likelihood)
    rep.lines += [
        f"probe: {config.probe} (J = {probe.j.j:g})",
        f"truth axis: Theta = {theta:.6g}, Phi = {phi:.6g}",
        f"estimate:   Theta = {fit.theta_hat:.6g}, Phi = {fit.phi_hat:.6g}",
        f"log-likelihood: {fit.log_likelihood:.10g}",
    ]
    if len(fit.equivalent) > 1:
        rep.lines.append(
            "data equally well explained by: "
            + "; ".join(f"({t:.6g}, {p:.6g})" for t, p, _ in fit.equivalent)
        )

    est_rows = [["Theta", theta, fit.theta_hat, np.nan], ["Phi", phi, fit.phi_hat, np.nan]]
    cov_rows = []
    bound_rows = []
    fmax, fmax_inv = met.fmax_axis(probe.j, fit.theta_hat, omegas)
    try:
        fisher = est.observed_fisher(q, omegas, probe, protocol, (fit.theta_hat, fit.phi_hat), mode=config.fisher_mode)
    except met.DegenerateGeometryError as exc:
        rep.lines.append(f"observed Fisher information singular: {exc}")
        fisher = None
    if fisher is not None:
        F_inv = fisher.inverse
        for k in range(2):
            est_rows[k][3] = np.sqrt(F_inv[k, k])
        for a in range(2):
            for b in range(2):
                cov_rows.append([a, b, F_inv[a, b], fmax_inv[a, b]])
        wu = est.weighted_uncertainty(F_inv, fit.theta_hat)
        limit = met.ultimate_weighted_limit(probe.j, omegas)
        ratios = np.sqrt(np.diag(F_inv) / np.diag(fmax_inv))
        bound_rows = [
            ["weighted_uncertainty", wu],
            ["ultimate_weighted_limit", limit],
            ["weighted_ratio", wu / limit],
            ["std_ratio_Theta", ratios[0]],
            ["std_ratio_Phi", ratios[1]],
            ["floored_terms", fisher.floored],
        ]
        rep.values.update(F_inv=F_inv, fmax_inv=fmax_inv, weighted_uncertainty=wu, limit=limit, std_ratios=ratios)
        rep.lines += [
            f"observed F^-1 ({fisher.mode}): [[{F_inv[0, 0]:.6g}, {F_inv[0, 1]:.6g}], [{F_inv[1, 0]:.6g}, {F_inv[1, 1]:.6g}]]",
            f"F_max^-1 at Theta_hat: diag({fmax_inv[0, 0]:.6g}, {fmax_inv[1, 1]:.6g})",
            f"Tr(g F^-1) = {wu:.6g} vs ultimate limit {limit:.6g} (ratio {wu / limit:.6g})",
            f"std ratios to F_max: Theta {ratios[0]:.6g}, Phi {ratios[1]:.6g}",
        ]
    rep.tables["estimate"] = Table(["parameter", "truth", "estimate", "std"], est_rows)
    rep.tables["covariance"] = Table(["row", "col", "observed_inv", "fmax_inv"], cov_rows)
    rep.tables["bounds"] = Table(["quantity", "value"], bound_rows)
    return rep


def run_full_experiment(config: ExperimentConfig) -> Report:
    """Three-parameter estimation separately for every grid rotation."""
    rep = Report("full", config)
    theta, phi = config.axis()
    omegas = config.omegas()
    rots = [RotationParams(w, theta, phi) for w in omegas]
    probe, protocol, raw, q, std = _simulate(config, rots)
    rep.raw = raw
    rep.tables["projections"] = _projection_table(omegas, q, std)
    try:
        sym = stabilizer(probe)
    except ValueError:
        sym = None  # continuous symmetry, compare raw rotations
    noisy = config.detection_model().power_noise_rel > 0

    rows, counted = [], []
    for r, rot in enumerate(rots):
        fit = est.estimate_rotation(q[r], probe, protocol, q_std=std[r] if noisy else None)
        delta = est.deviation_angle(rot, fit.params, probe.j, symmetries=sym)
        # identity rotations leave no trace of the axis
        use = bool(abs(np.sin(rot.omega / 2)) > 1e-9 and fit.axis_identifiable)
        rows.append([rot.omega, theta, phi, fit.omega_hat, fit.theta_hat, fit.phi_hat, delta, fit.axis_identifiable, use])
        if use:
            counted.append(delta)
    rep.tables["deviation"] = Table(
        ["omega", "Theta", "Phi", "omega_hat", "Theta_hat", "Phi_hat", "delta", "axis_identifiable", "counted"], rows
    )
    counted = np.array(counted)
    mean = float(counted.mean()) if counted.size else float("nan")
    sd = float(counted.std(ddof=1)) if counted.size > 1 else float("nan")
    rep.values.update(deltas=counted, mean_delta=mean, std_delta=sd)
    rep.lines += [
        f"probe: {config.probe} (J = {probe.j.j:g})",
        f"truth axis: Theta = {theta:.6g}, Phi = {phi:.6g}",
        f"symmetry group order used for Delta: {len(sym) if sym else 1}",
        f"rotations counted: {counted.size} of {len(rots)} (identity rows flagged and skipped)",
        f"Delta = {mean:.6g} +- {sd:.6g}",
    ]
    return rep


def _try(fn, *a):
    try:
        return fn(*a), ""
    except met.DegenerateGeometryError as exc:
        return float("nan"), str(exc)


def run_analytics(config: ExperimentConfig) -> Report:
    """Closed-form bounds for the configured probe; no simulation."""
    rep = Report("analytics", config)
    probe = config.probe_state()
    theta, phi = config.axis()
    omegas = config.omegas()
    j = probe.j
    sc = spin_covariance(probe)
    ac = anticoherence_report(probe)

    qrows = []
    for w in omegas:
        Q = met.qfim(probe, w, theta, phi).matrix
        cost, _ = _try(met.qcrb_weighted_cost, probe, w, theta, phi)
        qrows.append([w, Q[0, 0], Q[0, 1], Q[0, 2], Q[1, 1], Q[1, 2], Q[2, 2], cost])
    rep.tables["qfim"] = Table(["omega", "Q00", "Q01", "Q02", "Q11", "Q12", "Q22", "qcrb_cost"], qrows)

    trc, why = _try(met.inverse_covariance_trace, probe)
    _, fmax_inv = met.fmax_axis(j, theta, omegas)
    limit = met.ultimate_weighted_limit(j, omegas)
    exact = met.ultimate_weighted_limit_exact(j, int(config.omega_steps))
    noon_lim = met.noon_axis_limits(j, theta, phi, omegas) if j.two_j > 0 else []
    own_lim, own_why = _try(met.axis_weighted_limit, sc.cov, theta, phi, omegas)
    brows = [
        ["J", j.j],
        ["mean_spin_norm", float(np.linalg.norm(sc.mean))],
        ["anticoherent_order1", ac.order1],
        ["anticoherent_order2", ac.order2],
        ["isotropy_defect", ac.isotropy_defect],
        ["saturable", met.saturability_check(probe)],
        ["trace_inverse_covariance", trc],
        ["su2_bound", met.su2_bound(j) if j.two_j else float("nan")],
        ["fmax_inv_Theta", fmax_inv[0, 0]],
        ["fmax_inv_Phi", fmax_inv[1, 1]],
        ["ultimate_weighted_limit", limit],
        ["probe_axis_weighted_limit", own_lim],
    ]
    brows += [[f"noon_{ax}_axis_weighted_limit", v] for ax, v in zip("zxy", noon_lim)]
    rep.tables["bounds"] = Table(["quantity", "value"], brows)
    rep.tables["covariance"] = Table(["row", "c0", "c1", "c2"], [[k, *sc.cov[k]] for k in range(3)])
    rep.tables["constellation"] = _constellation_table(probe)

    rep.values.update(trace_inverse_covariance=trc, limit=limit, noon_limits=noon_lim, fmax_inv=fmax_inv)
    rep.lines += [
        f"probe: {config.probe} (J = {j.j:g})",
        f"axis: Theta = {theta:.6g}, Phi = {phi:.6g}",
        f"<J> = ({', '.join(_fmt(x) for x in mean_spin(probe))})",
        f"anticoherence: order1 {ac.order1}, order2 {ac.order2}, defect {ac.isotropy_defect:.3g}",
        f"Tr C^-1 = {trc:.6g}" + (f" (singular: {why})" if why else f" vs SU(2) bound {met.su2_bound(j):.6g}"),
        f"ultimate weighted limit = {exact} = {limit:.6g}",
    ]
    if own_why:
        rep.lines.append(f"axis-only bound singular: {own_why}")
    if noon_lim:
        rep.lines.append("NOON axis weighted limits (z, x, y): " + ", ".join(f"{v:.6g}" for v in noon_lim))
    return rep


def _constellation_table(state: SpinState) -> Table:
    rows = []
    for k, d in enumerate(majorana_constellation(state).points):
        rows.append([k, d.theta, d.phi, *d.unit_vector()])
    return Table(["index", "theta", "phi", "x", "y", "z"], rows)


def run_constellation(config: ExperimentConfig) -> Report:
    rep = Report("constellation", config)
    probe = config.probe_state()
    rep.tables["stars"] = _constellation_table(probe)
    rep.lines.append(f"probe: {config.probe} (J = {probe.j.j:g}), {2 * probe.j.j:g} stars")
    try:
        rep.lines.append(f"stabilizer order: {len(stabilizer(probe))}")
    except ValueError as exc:
        rep.lines.append(f"stabilizer: {exc}")
    return rep


RUNNERS = {
    "axis": run_axis_experiment,
    "full": run_full_experiment,
    "analytics": run_analytics,
    "constellation": run_constellation,
}


def run(config: ExperimentConfig) -> Report:
    return RUNNERS[config.mode](config)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rotsense", description="Rotation-sensing simulations and bounds")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "axis": "estimate the rotation axis from a full angle sweep",
        "full": "estimate all three parameters of every rotation",
        "analytics": "closed-form Fisher information and bounds",
        "constellation": "Majorana stars of the probe",
    }
    for name in MODES:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--noise", type=float, help="relative power noise per reading")
        p.add_argument("--probe", help="king_j2, king_j3, noon(J), coherent(J,theta,phi), custom")
        p.add_argument("--preset", choices=PRESETS, help="detection preset, applied before --noise")
        p.add_argument("--out", help="output directory")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = resolve_config(args)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"rotsense: config error: {exc}", file=sys.stderr)
        return 2
    report = run(config)
    for path in report.write(config.out):
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
