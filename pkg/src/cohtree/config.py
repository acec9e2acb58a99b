"""Run configuration: a flat YAML document fully determines a pipeline run."""

from dataclasses import dataclass, field

import yaml

from .dynamics import (
    CLOSED_KINDS,
    REQUIRED_PARAMS,
    ROSSBY_DEFAULT_PARAMS,
    FlowSpec,
    load_gridded,
)
from .errors import (
    ConfigError,
    FlowSpecError,
    GriddedFieldError,
    InvalidDomainError,
)
from .mesh import Rect


@dataclass
class RunConfig:
    """Everything an end-to-end run needs, minus execution details.

    Worker counts and output locations are runtime options, not
    configuration, so identical configs produce byte-identical bundles.
    """

    kind: str
    params: dict
    t0: float
    tau: float
    integrator_step: float
    domain: Rect
    nx: int
    ny: int
    n_points: int
    seed: int
    rho0: float
    max_depth: int
    min_mass: float = 0.05
    image: Rect = None
    image_nx: int = None
    image_ny: int = None
    open_system: bool = None
    gridded_path: str = None
    svd_tol: float = 1e-10
    svd_max_iter: int = 100_000
    _field: object = field(default=None, repr=False)

    def __post_init__(self):
        if self.n_points < 1:
            raise ConfigError(f"points must be >= 1, got {self.n_points}")
        if not 0.0 < self.rho0 < 1.0:
            raise ConfigError(f"rho0 must be in (0, 1), got {self.rho0}")
        if self.max_depth < 1:
            raise ConfigError(f"max_depth must be >= 1, got {self.max_depth}")
        if not 0.0 < self.min_mass < 0.5:
            raise ConfigError(f"min_mass must be in (0, 0.5), got {self.min_mass}")
        if self.nx < 1 or self.ny < 1:
            raise ConfigError(f"grid dims must be >= 1, got {self.nx}x{self.ny}")
        if self.open_system is None:
            self.open_system = self.kind not in CLOSED_KINDS
        if (self.image is None) != (self.image_nx is None):
            raise ConfigError("image window and image grid dims go together")

    def flow_spec(self):
        field_data = self._field
        if self.kind == "gridded" and field_data is None:
            try:
                field_data = load_gridded(self.gridded_path)
            except (OSError, GriddedFieldError) as exc:
                raise ConfigError(f"flow.path: {exc}") from exc
            self._field = field_data
        try:
            return FlowSpec(
                kind=self.kind,
                params=dict(self.params),
                t0=self.t0,
                tau=self.tau,
                integrator_step=self.integrator_step,
                field=field_data,
            )
        except FlowSpecError as exc:
            raise ConfigError(str(exc)) from exc

    def image_rect(self):
        return self.image if self.image is not None else self.domain

    def image_dims(self):
        if self.image_nx is not None:
            return self.image_nx, self.image_ny
        return self.nx, self.ny

    def to_dict(self):
        out = {
            "flow": {
                "kind": self.kind,
                "params": {k: float(v) for k, v in sorted(self.params.items())},
                "t0": float(self.t0),
                "tau": float(self.tau),
                "integrator_step": float(self.integrator_step),
            },
            "domain": _rect_dict(self.domain, self.nx, self.ny),
            "points": int(self.n_points),
            "seed": int(self.seed),
            "rho0": float(self.rho0),
            "max_depth": int(self.max_depth),
            "min_mass": float(self.min_mass),
            "open_system": bool(self.open_system),
            "svd_tol": float(self.svd_tol),
            "svd_max_iter": int(self.svd_max_iter),
        }
        if self.gridded_path is not None:
            out["flow"]["path"] = str(self.gridded_path)
        if self.image is not None:
            out["image"] = _rect_dict(self.image, self.image_nx, self.image_ny)
        return out

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)


def _rect_dict(rect, nx, ny):
    return {
        "xmin": float(rect.xmin),
        "xmax": float(rect.xmax),
        "ymin": float(rect.ymin),
        "ymax": float(rect.ymax),
        "nx": int(nx),
        "ny": int(ny),
    }


def _need(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _rect_from(mapping, where):
    try:
        rect = Rect(
            float(_need(mapping, "xmin", where)),
            float(_need(mapping, "xmax", where)),
            float(_need(mapping, "ymin", where)),
            float(_need(mapping, "ymax", where)),
        )
    except InvalidDomainError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    nx = int(_need(mapping, "nx", where))
    ny = int(_need(mapping, "ny", where))
    return rect, nx, ny


def config_from_dict(doc):
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    flow = _need(doc, "flow", "config")
    kind = _need(flow, "kind", "flow")
    if kind not in REQUIRED_PARAMS:
        raise ConfigError(
            f"flow.kind {kind!r} not one of {sorted(REQUIRED_PARAMS)}"
        )
    params = dict(flow.get("params") or {})
    if kind == "rossby":
        # documented defaults; any explicitly configured value wins
        params = {**ROSSBY_DEFAULT_PARAMS, **params}
    missing = [p for p in REQUIRED_PARAMS[kind] if p not in params]
    if missing:
        raise ConfigError(f"flow.params: missing {missing} for kind {kind!r}")

    gridded_path = flow.get("path")
    t0, tau = flow.get("t0", 0.0), flow.get("tau")
    if kind == "gridded":
        if gridded_path is None:
            raise ConfigError("flow.path is required for gridded flows")
        # epochs may be given in days regardless of the file's declared unit
        if "t0_days" in flow or "tau_days" in flow:
            field_data = load_gridded(gridded_path)
            per_day = 86400.0 / field_data.seconds_per_time_unit()
            if "t0_days" in flow:
                t0 = float(flow["t0_days"]) * per_day
            if "tau_days" in flow:
                tau = float(flow["tau_days"]) * per_day
    if tau is None:
        raise ConfigError("flow.tau is required")

    domain, nx, ny = _rect_from(_need(doc, "domain", "config"), "domain")
    image = doc.get("image")
    image_rect = image_nx = image_ny = None
    if image is not None:
        image_rect, image_nx, image_ny = _rect_from(image, "image")

    try:
        return RunConfig(
            kind=kind,
            params=params,
            t0=float(t0),
            tau=float(tau),
            integrator_step=float(flow.get("integrator_step", 0.01)),
            domain=domain,
            nx=nx,
            ny=ny,
            n_points=int(_need(doc, "points", "config")),
            seed=int(doc.get("seed", 0)),
            rho0=float(_need(doc, "rho0", "config")),
            max_depth=int(_need(doc, "max_depth", "config")),
            min_mass=float(doc.get("min_mass", 0.05)),
            image=image_rect,
            image_nx=image_nx,
            image_ny=image_ny,
            open_system=doc.get("open_system"),
            gridded_path=gridded_path,
            svd_tol=float(doc.get("svd_tol", 1e-10)),
            svd_max_iter=int(doc.get("svd_max_iter", 100_000)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed config value: {exc}") from exc


def load_config(path):
    """Parse and validate a YAML run configuration."""
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    return config_from_dict(doc)
