"""Five-projection Husimi sampling with a simulated power-meter readout.

Raw datasets mimic the bench: every power value is a set of noisy readings,
and the state-dependent detection efficiencies are removed by the
self-projection calibration

    eta_n = P<n|n> / P_n,      Q_n = P<n|psi> / (eta_n P_psi).

Text format of a raw dataset (``RawDataset.dumps``)::

    # rotsense-raw v1
    # meta {"j2": 4, "protocol": [[theta, phi], ...], "rotations": [[w, T, P], ...], ...}
    role,rotation,direction,reading,value
    dir_total,-1,0,0,1.0031
    ...

``role`` is one of ``dir_total`` (P_n), ``dir_self`` (P<n|n>),
``probe_total`` (P_psi), ``probe_self`` (P<psi|psi>) and ``proj`` (P<n|psi>).
Index ``-1`` marks a field that does not apply to the role.
"""
from __future__ import annotations

import io
import json
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .spin_algebra import (
    Direction,
    RotationParams,
    SpinState,
    as_spin,
    coherent_state,
    rotation_operator,
)

ROLES = ("dir_total", "dir_self", "probe_total", "probe_self", "proj")
FORMAT_TAG = "# rotsense-raw v1"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolDirections:
    directions: Tuple[Direction, ...]

    def __post_init__(self):
        dirs = tuple(self.directions)
        if len(dirs) != 5:
            raise ValueError(f"protocol needs exactly 5 directions, got {len(dirs)}")
        object.__setattr__(self, "directions", dirs)

    def __len__(self) -> int:
        return 5

    def __iter__(self):
        return iter(self.directions)

    def __getitem__(self, i: int) -> Direction:
        return self.directions[i]

    def vectors(self) -> np.ndarray:
        return np.array([d.unit_vector() for d in self.directions])

    def as_list(self) -> list:
        return [[d.theta, d.phi] for d in self.directions]

    @classmethod
    def from_list(cls, pairs) -> "ProtocolDirections":
        return cls(tuple(Direction(float(t), float(p)) for t, p in pairs))


def default_protocol() -> ProtocolDirections:
    """North, south, then the equator at +y, +x and (sqrt2 x + y)/sqrt3."""
    return ProtocolDirections(
        (
            Direction(0.0, 0.0),
            Direction(np.pi, 0.0),
            Direction(np.pi / 2, np.pi / 2),
            Direction(np.pi / 2, 0.0),
            Direction(np.pi / 2, float(np.arctan2(1.0, np.sqrt(2.0)))),
        )
    )


def husimi(state: SpinState, n: Direction) -> float:
    """``|<n|psi>|^2``."""
    return float(abs(coherent_state(state.j, n).overlap(state)) ** 2)


def coherent_bras(j, protocol: ProtocolDirections) -> np.ndarray:
    """Rows are ``<n_l|`` for each protocol direction."""
    return np.array([coherent_state(j, d).amps.conj() for d in protocol])


def husimi_samples(state: SpinState, protocol: ProtocolDirections) -> np.ndarray:
    return np.abs(coherent_bras(state.j, protocol) @ state.amps) ** 2


@dataclass
class DetectionModel:
    """Power-meter readout.

    ``eta_directions`` are the efficiencies of projecting onto each protocol
    state and ``eta_probe`` that of the rotated probe onto itself.  If
    ``eta_range`` is set, every state draws its efficiency uniformly from it
    instead (one draw per direction, one per rotated probe).
    """

    power_noise_rel: float = 0.0
    samples_per_reading: int = 50
    rng_seed: int = 0
    eta_directions: Optional[Tuple[float, ...]] = None
    eta_probe: float = 1.0
    eta_range: Optional[Tuple[float, float]] = None
    source_power: float = 1.0

    def __post_init__(self):
        if self.power_noise_rel < 0:
            raise ValueError("power_noise_rel must be >= 0")
        if int(self.samples_per_reading) < 1:
            raise ValueError("samples_per_reading must be >= 1")
        etas = list(self.eta_directions or []) + [self.eta_probe]
        if self.eta_range is not None:
            lo, hi = self.eta_range
            etas += [lo, hi]
            if lo > hi:
                raise ValueError("eta_range must be (low, high)")
        if any(not (0.0 < e <= 1.0) for e in etas):
            raise ValueError("efficiencies must lie in (0, 1]")
        if self.source_power <= 0:
            raise ValueError("source_power must be positive")

    @classmethod
    def ideal(cls, seed: int = 0) -> "DetectionModel":
        return cls(power_noise_rel=0.0, samples_per_reading=1, rng_seed=seed)

    @classmethod
    def bench(cls, seed: int = 0, noise: float = 0.01) -> "DetectionModel":
        return cls(power_noise_rel=noise, samples_per_reading=50, rng_seed=seed, eta_range=(0.4, 0.9))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("eta_directions", "eta_range"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionModel":
        d = dict(d)
        for k in ("eta_directions", "eta_range"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class RawDataset:
    j: object
    protocol: ProtocolDirections
    rotations: List[RotationParams]
    rows: List[Tuple[str, int, int, int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.j = as_spin(self.j)

    def readings(self, role: str, rotation: int = -1, direction: int = -1) -> np.ndarray:
        return np.array(
            [v for r, ri, di, _, v in self.rows if r == role and ri == rotation and di == direction]
        )

    def grouped(self) -> dict:
        out = defaultdict(list)
        for r, ri, di, _, v in self.rows:
            out[(r, ri, di)].append(v)
        return {k: np.array(v) for k, v in out.items()}

    def meta(self) -> dict:
        return {
            "j2": self.j.two_j,
            "protocol": self.protocol.as_list(),
            "rotations": [list(map(float, r.as_array())) for r in self.rotations],
        }

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(FORMAT_TAG + "\n")
        buf.write("# meta " + json.dumps(self.meta()) + "\n")
        buf.write("role,rotation,direction,reading,value\n")
        for r, ri, di, k, v in self.rows:
            buf.write(f"{r},{ri},{di},{k},{v!r}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "RawDataset":
        lines = text.splitlines()
        if not lines or lines[0].strip() != FORMAT_TAG:
            raise ValueError("not a rotsense raw dataset")
        meta = None
        rows = []
        for line in lines[1:]:
            if line.startswith("# meta "):
                meta = json.loads(line[len("# meta ") :])
            elif line.startswith("#") or line.startswith("role,") or not line.strip():
                continue
            else:
                r, ri, di, k, v = line.split(",")
                if r not in ROLES:
                    raise ValueError(f"unknown role {r!r}")
                rows.append((r, int(ri), int(di), int(k), float(v)))
        if meta is None:
            raise ValueError("dataset has no meta line")
        return cls(
            j=as_spin(meta["j2"] / 2),
            protocol=ProtocolDirections.from_list(meta["protocol"]),
            rotations=[RotationParams(*r) for r in meta["rotations"]],
            rows=rows,
        )

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "RawDataset":
        with open(path) as fh:
            return cls.loads(fh.read())


def simulate_powers(
    state: SpinState,
    rotations: Sequence[RotationParams],
    protocol: ProtocolDirections,
    model: DetectionModel,
    rng: Optional[np.random.Generator] = None,
) -> RawDataset:
    """Noisy power readings for every rotation and protocol direction.

    Readings are ``P (1 + s e)`` with ``e ~ N(0, 1)`` and ``s`` the relative
    noise; model powers are ``P_n = P0``, ``P<n|n> = eta_n P0``,
    ``P_psi = P0``, ``P<psi|psi> = eta_psi P0`` and
    ``P<n|psi> = eta_n |<n|psi_Omega>|^2 P0``.
    """
    if rng is None:
        rng = np.random.default_rng(model.rng_seed)
    rotations = list(rotations)
    p0 = model.source_power
    n_read = int(model.samples_per_reading)

    if model.eta_range is not None:
        lo, hi = model.eta_range
        eta_dir = rng.uniform(lo, hi, size=5)
        eta_probe = rng.uniform(lo, hi, size=len(rotations))
    else:
        eta_dir = np.asarray(model.eta_directions if model.eta_directions is not None else [1.0] * 5)
        eta_probe = np.full(len(rotations), model.eta_probe)
    if eta_dir.size != 5:
        raise ValueError("need one efficiency per protocol direction")

    rows = []

    def emit(role, ri, di, power):
        if model.power_noise_rel > 0:
            vals = power * (1.0 + model.power_noise_rel * rng.standard_normal(n_read))
        else:
            vals = np.full(n_read, float(power))
        rows.extend((role, ri, di, k, float(v)) for k, v in enumerate(vals))

    for d in range(5):
        emit("dir_total", -1, d, p0)
        emit("dir_self", -1, d, eta_dir[d] * p0)

    bras = coherent_bras(state.j, protocol)
    for r, rot in enumerate(rotations):
        psi = rotation_operator(state.j, rot.omega, rot.axis()) @ state.amps
        q = np.abs(bras @ psi) ** 2
        emit("probe_total", r, -1, p0)
        emit("probe_self", r, -1, eta_probe[r] * p0)
        for d in range(5):
            emit("proj", r, d, eta_dir[d] * q[d] * p0)

    return RawDataset(j=state.j, protocol=protocol, rotations=rotations, rows=rows)


@dataclass(frozen=True)
class ProjectionRecord:
    direction: Direction
    q_value: float
    std_dev: float
    rotation_index: int = 0
    direction_index: int = 0


def _mean_and_rel_err(x: np.ndarray, what: str) -> Tuple[float, float]:
    if x.size == 0:
        raise CalibrationError(f"missing readings for {what}")
    m = float(np.mean(x))
    if m <= 0:
        raise CalibrationError(f"non-positive calibration power for {what}: {m}")
    sem = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else 0.0
    return m, sem / m


def calibrate_and_project(raw: RawDataset) -> List[ProjectionRecord]:
    """Calibrated ``Q_n`` with first-order propagated standard deviations.

    ``Q = P<n|psi> P_n / (P<n|n> P_psi)`` from sample means; the relative
    variance is the sum of the relative variances of the four means.
    """
    g = raw.grouped()
    get = lambda key: g.get(key, np.zeros(0))
    eta = []
    for d in range(5):
        tot, rt = _mean_and_rel_err(get(("dir_total", -1, d)), f"P_n (direction {d})")
        slf, rs = _mean_and_rel_err(get(("dir_self", -1, d)), f"P<n|n> (direction {d})")
        eta.append((slf / tot, rt**2 + rs**2))

    records = []
    for r in range(len(raw.rotations)):
        ptot, rp = _mean_and_rel_err(get(("probe_total", r, -1)), f"P_psi (rotation {r})")
        for d in range(5):
            proj = get(("proj", r, d))
            if proj.size == 0:
                raise CalibrationError(f"missing projection readings (rotation {r}, direction {d})")
            pm = float(np.mean(proj))
            sem = float(np.std(proj, ddof=1) / np.sqrt(proj.size)) if proj.size > 1 else 0.0
            eta_d, rel_eta2 = eta[d]
            q = pm / (eta_d * ptot)
            rel2 = rel_eta2 + rp**2 + ((sem / pm) ** 2 if pm > 0 else 0.0)
            std = abs(q) * np.sqrt(rel2) if pm > 0 else sem / (eta_d * ptot)
            records.append(ProjectionRecord(raw.protocol[d], float(q), float(std), r, d))
    return records


def records_to_arrays(records: Iterable[ProjectionRecord]) -> Tuple[np.ndarray, np.ndarray]:
    """``(q, std)`` with shape ``(n_rotations, 5)``."""
    records = list(records)
    n_rot = 1 + max(r.rotation_index for r in records)
    q = np.full((n_rot, 5), np.nan)
    s = np.full((n_rot, 5), np.nan)
    for r in records:
        q[r.rotation_index, r.direction_index] = r.q_value
        s[r.rotation_index, r.direction_index] = r.std_dev
    if np.isnan(q).any():
        raise ValueError("incomplete projection records")
    return q, s
