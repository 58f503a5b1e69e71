"""Scenario configuration: YAML schema, defaults and mesh resolution.

A scenario file is a single YAML document; every section is optional and
falls back to the defaults below. See configs/ for annotated examples and
README.md for the full schema.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .dls import DlsParams
from .geometry import STATE_DIM, RobotGeometry
from .local_control import LocalGains
from .mesh_sdf import SafeZone, load_mesh
from .meshes import BUILTIN_MESHES, mesh_path
from .mpc import MpcParams
from .plant import DisturbanceSpec

_GEOMETRY_KEYS = {
    "disks_per_segment",
    "tendon_pitch_radius",
    "tendon_angles",
    "tendon_min",
    "tendon_max",
    "segment_min",
    "segment_max",
    "max_bend_angle",
}
_MPC_KEYS = {"horizon", "q", "r", "s", "c_d", "u_limit", "tol_c", "tol_g", "max_iter"}
_LOCAL_KEYS = {"k_ee", "k_body", "damping"}
_DLS_KEYS = {"c_w", "k_j"}
_DIST_KEYS = {"sigma_x", "sigma_y", "w_x_max", "w_y_max", "redraw_hz"}
_TOP_KEYS = {
    "name",
    "seed",
    "duration_s",
    "control_rate_hz",
    "controller",
    "mesh",
    "initial_segment_length",
    "ee_only_feedback",
    "dump_shapes",
    "robot",
    "mpc",
    "local",
    "dls",
    "disturbance",
    "waypoints",
}


@dataclass(frozen=True)
class WaypointSpec:
    position: tuple[float, float, float]
    tolerance: float = 2.0       # convergence radius (mm)
    dwell_ticks: int = 15        # consecutive ticks inside the radius

    def __post_init__(self):
        if len(self.position) != 3 or not np.all(np.isfinite(self.position)):
            raise ValueError("waypoint position must be a finite 3-vector")
        if self.tolerance <= 0 or self.dwell_ticks < 1:
            raise ValueError("waypoint tolerance/dwell invalid")


@dataclass
class ScenarioConfig:
    name: str = "scenario"
    seed: int = 0
    duration_s: float = 10.0
    control_rate_hz: float = 30.0
    controller: str = "mpc"                 # mpc | dls
    mesh: str | None = None                 # builtin name or file path
    initial_segment_length: float | None = None
    ee_only_feedback: bool = False
    dump_shapes: bool = False
    geometry: RobotGeometry = field(default_factory=RobotGeometry)
    mpc_params: MpcParams = field(default_factory=MpcParams)
    local_gains: LocalGains = field(default_factory=LocalGains)
    dls_params: DlsParams = field(default_factory=DlsParams)
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    waypoints: list[WaypointSpec] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)
    raw: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.controller not in ("mpc", "dls"):
            raise ValueError("controller must be 'mpc' or 'dls'")
        if self.control_rate_hz <= 0:
            raise ValueError("control rate must be positive")
        if self.controller == "dls" and not self.waypoints:
            raise ValueError("dls scenarios need at least one waypoint")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration_s * self.control_rate_hz))

    def initial_state(self) -> np.ndarray:
        return self.geometry.straight_state(self.initial_segment_length)

    def load_zone(self) -> SafeZone | None:
        if self.mesh is None:
            return None
        return resolve_mesh(self.mesh, self.base_dir)


def resolve_mesh(spec: str, base_dir: Path | str = ".") -> SafeZone:
    """Load a safe zone from a builtin name ('winding_tube') or a file path."""
    name = spec.removeprefix("builtin:")
    if name in BUILTIN_MESHES:
        return load_mesh(mesh_path(name))
    path = Path(spec)
    if not path.is_absolute():
        path = Path(base_dir) / path
    return load_mesh(path)


def _check_keys(section: dict, allowed: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {where}: {sorted(unknown)}")


def config_from_dict(data: dict, base_dir: Path | str = ".") -> ScenarioConfig:
    _check_keys(data, _TOP_KEYS, "scenario")
    rate = float(data.get("control_rate_hz", 30.0))
    dt = 1.0 / rate

    geo = dict(data.get("robot", {}))
    _check_keys(geo, _GEOMETRY_KEYS, "robot")
    if "tendon_angles" in geo:
        geo["tendon_angles"] = tuple(float(a) for a in geo["tendon_angles"])
    geometry = RobotGeometry(**geo)

    m = dict(data.get("mpc", {}))
    _check_keys(m, _MPC_KEYS, "mpc")
    u_limit = float(m.get("u_limit", 10.0))
    mpc_params = MpcParams.from_scalars(
        q=float(m.get("q", 1000.0)),
        r=float(m.get("r", 10.0)),
        s=float(m.get("s", 10.0)),
        u_limit=u_limit,
        horizon=int(m.get("horizon", 2)),
        dt=dt,
        c_d=float(m.get("c_d", 5.5)),
        tol_c=float(m.get("tol_c", 1e-6)),
        tol_g=float(m.get("tol_g", 1e-8)),
        max_iter=int(m.get("max_iter", 50)),
    )

    loc = dict(data.get("local", {}))
    _check_keys(loc, _LOCAL_KEYS, "local")
    local_gains = LocalGains(
        k_ee=float(loc.get("k_ee", 2.0)),
        k_body=float(loc.get("k_body", 0.5)),
        damping=float(loc.get("damping", 1e-2)),
    )

    d = dict(data.get("dls", {}))
    _check_keys(d, _DLS_KEYS, "dls")
    dls_params = DlsParams(
        c_w=float(d.get("c_w", 1.0)),
        k_j=float(d.get("k_j", 0.05)),
        c_d=mpc_params.c_d,
        control_dt=dt,
        u_min=mpc_params.u_min.copy(),
        u_max=mpc_params.u_max.copy(),
    )

    dist = dict(data.get("disturbance", {}))
    _check_keys(dist, _DIST_KEYS, "disturbance")
    disturbance = DisturbanceSpec(
        sigma_x=float(dist.get("sigma_x", 0.2)),
        sigma_y=float(dist.get("sigma_y", 1.0)),
        w_x_max=float(dist.get("w_x_max", 2.0)),
        w_y_max=float(dist.get("w_y_max", 5.0)),
        redraw_hz=float(dist.get("redraw_hz", 5.0)),
    )

    waypoints = []
    for w in data.get("waypoints", []) or []:
        waypoints.append(
            WaypointSpec(
                position=tuple(float(v) for v in w["position"]),
                tolerance=float(w.get("tolerance", 2.0)),
                dwell_ticks=int(w.get("dwell_ticks", 15)),
            )
        )

    init_len = data.get("initial_segment_length")
    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        seed=int(data.get("seed", 0)),
        duration_s=float(data.get("duration_s", 10.0)),
        control_rate_hz=rate,
        controller=str(data.get("controller", "mpc")),
        mesh=data.get("mesh"),
        initial_segment_length=None if init_len is None else float(init_len),
        ee_only_feedback=bool(data.get("ee_only_feedback", False)),
        dump_shapes=bool(data.get("dump_shapes", False)),
        geometry=geometry,
        mpc_params=mpc_params,
        local_gains=local_gains,
        dls_params=dls_params,
        disturbance=disturbance,
        waypoints=waypoints,
        base_dir=Path(base_dir),
        raw=data,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    cfg = config_from_dict(data, base_dir=path.parent)
    if cfg.mesh is not None:
        cfg.load_zone()   # fail fast on missing/broken meshes
    return cfg
