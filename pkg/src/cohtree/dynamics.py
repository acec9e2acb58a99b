"""Flow definitions and particle advection.

Supported flow kinds:

``double-gyre``
    Periodically perturbed two-cell recirculation on ``[0, 2] x [0, 1]``,
    parameters ``A``, ``eps``, ``omega``.
``standard-map``
    Area-preserving twist map iterated on the torus; points are handled in
    unit-square coordinates and mapped through angle units internally, so
    published unit-torus grids apply unchanged.  Parameter ``K``; ``tau`` is
    the iteration count.
``rossby``
    Quasiperiodic zonal jet stream function with three wave components
    (parameters ``U0, c2, c3, A1, A2, A3, L, k1, k2, k3, sigma1, sigma2``).
``gridded``
    Velocity sampled on a rectilinear space-time grid, bilinear in space and
    linear in time, with NaN marking land (velocity zero there).

Continuous flows are integrated with classical fixed-step RK4; the final
partial step is shortened to land exactly on ``t0 + tau``.  All operations
are deterministic for a fixed seed and step size, independent of the worker
count used to chunk the ensemble.
"""

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DivergedTrajectoryError,
    FlowSpecError,
    GriddedFieldError,
    OutOfRangeError,
)

TWO_PI = 2.0 * math.pi

# ensembles are processed in fixed-size chunks so that results are
# bit-identical regardless of how many workers consume the chunks
CHUNK = 65_536

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0

_ROSSBY_U0 = 63.66
_ROSSBY_RE = 6.371e6
_ROSSBY_K = tuple(2.0 * n / _ROSSBY_RE for n in (1, 2, 3))
_ROSSBY_C2 = 0.205 * _ROSSBY_U0
_ROSSBY_C3 = 0.7 * _ROSSBY_U0
_ROSSBY_SIGMA2 = _ROSSBY_K[1] * (_ROSSBY_C2 - _ROSSBY_C3)

#: Documented default parameter set for the ``rossby`` kind (SI units:
#: meters, seconds).  The wave numbers, length scale and wave frequencies
#: are not fixed by the benchmark description itself; these values follow
#: the idealized-stratospheric-jet literature the benchmark descends from
#: (k_n = 2n / 6371 km, L = 1770 km, sigma2 = k2 (c2 - c3), sigma1 =
#: sigma2 * golden ratio) and acceptance tests do not depend on them.
ROSSBY_DEFAULT_PARAMS = {
    "U0": _ROSSBY_U0,
    "c2": _ROSSBY_C2,
    "c3": _ROSSBY_C3,
    "A1": 0.075,
    "A2": 0.4,
    "A3": 0.2,
    "L": 1.77e6,
    "k1": _ROSSBY_K[0],
    "k2": _ROSSBY_K[1],
    "k3": _ROSSBY_K[2],
    "sigma1": _ROSSBY_SIGMA2 * _GOLDEN,
    "sigma2": _ROSSBY_SIGMA2,
}

REQUIRED_PARAMS = {
    "double-gyre": ("A", "eps", "omega"),
    "standard-map": ("K",),
    "rossby": tuple(ROSSBY_DEFAULT_PARAMS),
    "gridded": (),
}

CONTINUOUS_KINDS = ("double-gyre", "rossby", "gridded")

#: Kinds whose canonical windows are invariant (no outflow).
CLOSED_KINDS = ("double-gyre", "standard-map")


@dataclass
class FlowSpec:
    """A flow map plus the time epoch it is evaluated over."""

    kind: str
    params: dict = field(default_factory=dict)
    t0: float = 0.0
    tau: float = 1.0
    integrator_step: float = 0.01
    field: "GriddedField" = None

    def __post_init__(self):
        if self.kind not in REQUIRED_PARAMS:
            raise FlowSpecError(
                f"unknown flow kind {self.kind!r}; expected one of "
                f"{sorted(REQUIRED_PARAMS)}"
            )
        missing = [p for p in REQUIRED_PARAMS[self.kind] if p not in self.params]
        if missing:
            raise FlowSpecError(f"{self.kind}: missing parameters {missing}")
        if self.kind == "standard-map":
            if self.tau < 0 or self.tau != int(self.tau):
                raise FlowSpecError(
                    f"standard-map tau must be a nonnegative iteration count, "
                    f"got {self.tau}"
                )
        elif self.integrator_step <= 0:
            raise FlowSpecError(f"integrator_step must be > 0, got {self.integrator_step}")
        if self.kind == "gridded" and self.field is None:
            raise FlowSpecError("gridded flow requires a GriddedField")

    @property
    def is_continuous(self):
        return self.kind in CONTINUOUS_KINDS


@dataclass
class TrajectoryEnsemble:
    """Aligned initial/final point sets of a test-point ensemble.

    ``exited[k]`` marks trajectories frozen after leaving a gridded field's
    spatial extent; such points are counted as outflow downstream.
    """

    initial: np.ndarray
    final: np.ndarray
    t0: float
    tau: float
    seed: int
    exited: np.ndarray = None

    def __post_init__(self):
        self.initial = np.asarray(self.initial, dtype=float)
        self.final = np.asarray(self.final, dtype=float)
        if self.initial.shape != self.final.shape:
            raise FlowSpecError(
                f"initial/final shape mismatch: {self.initial.shape} vs "
                f"{self.final.shape}"
            )
        if self.exited is None:
            self.exited = np.zeros(len(self.initial), dtype=bool)
        else:
            self.exited = np.asarray(self.exited, dtype=bool)

    def __len__(self):
        return len(self.initial)


# -- velocity fields ------------------------------------------------------


def _double_gyre_velocity(params, pts, t):
    A, eps, omega = params["A"], params["eps"], params["omega"]
    x, y = pts[:, 0], pts[:, 1]
    s = eps * math.sin(omega * t)
    f = s * x * x + (1.0 - 2.0 * s) * x
    fx = 2.0 * s * x + (1.0 - 2.0 * s)
    out = np.empty_like(pts)
    out[:, 0] = -math.pi * A * np.sin(math.pi * f) * np.cos(math.pi * y)
    out[:, 1] = math.pi * A * np.cos(math.pi * f) * np.sin(math.pi * y) * fx
    return out


def _rossby_velocity(params, pts, t):
    U0, L = params["U0"], params["L"]
    c3 = params["c3"]
    A1, A2, A3 = params["A1"], params["A2"], params["A3"]
    k1, k2, k3 = params["k1"], params["k2"], params["k3"]
    s1, s2 = params["sigma1"], params["sigma2"]
    x, y = pts[:, 0], pts[:, 1]
    sech2 = 1.0 / np.cosh(y / L) ** 2
    tanh = np.tanh(y / L)
    w = (
        A3 * np.cos(k3 * x)
        + A2 * np.cos(k2 * x - s2 * t)
        + A1 * np.cos(k1 * x - s1 * t)
    )
    dw_dx = -(
        A3 * k3 * np.sin(k3 * x)
        + A2 * k2 * np.sin(k2 * x - s2 * t)
        + A1 * k1 * np.sin(k1 * x - s1 * t)
    )
    out = np.empty_like(pts)
    # u = -dPhi/dy, v = dPhi/dx for Phi = c3 y - U0 L tanh(y/L) + U0 L sech^2(y/L) w
    out[:, 0] = -c3 + U0 * sech2 + 2.0 * U0 * sech2 * tanh * w
    out[:, 1] = U0 * L * sech2 * dw_dx
    return out


def velocity(spec, point, t):
    """Instantaneous velocity of a continuous flow at ``point`` and time ``t``.

    Accepts a single ``(2,)`` point or an ``(n, 2)`` array.  Gridded queries
    outside the space-time grid raise :class:`OutOfRangeError`.
    """
    if not spec.is_continuous:
        raise FlowSpecError(f"velocity undefined for flow kind {spec.kind!r}")
    pts = np.asarray(point, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if spec.kind == "double-gyre":
        out = _double_gyre_velocity(spec.params, pts, t)
    elif spec.kind == "rossby":
        out = _rossby_velocity(spec.params, pts, t)
    else:
        uv, valid = _interp_gridded(spec.field, pts, t)
        if not valid.all():
            bad = pts[~valid][0]
            raise OutOfRangeError(
                f"gridded query outside the space-time grid: point "
                f"({bad[0]}, {bad[1]}) at t={t}"
            )
        out = uv
    return out[0] if single else out


# -- the standard map ------------------------------------------------------


def standard_map_iterate(points, K, iterations):
    """Iterate the twist map in angle units; both coordinates mod 2*pi.

    ``points[:, 0]`` is the angle coordinate, ``points[:, 1]`` the momentum:
    ``p' = p + K sin(theta)``, ``theta' = theta + p'``.
    """
    pts = np.array(points, dtype=float, copy=True)
    theta, p = pts[:, 0], pts[:, 1]
    for _ in range(int(iterations)):
        p += K * np.sin(theta)
        theta += p
        np.mod(theta, TWO_PI, out=theta)
        np.mod(p, TWO_PI, out=p)
    return pts


def _standard_map_torus(points, K, iterations):
    # the same map written directly in unit-torus coordinates
    # (theta_u = theta / 2pi, p_u = p / 2pi); avoiding the scale round trip
    # keeps momentum conservation at K = 0 exact
    pts = np.array(points, dtype=float, copy=True)
    theta, p = pts[:, 0], pts[:, 1]
    kick = K / TWO_PI
    for _ in range(int(iterations)):
        p += kick * np.sin(TWO_PI * theta)
        theta += p
        np.mod(theta, 1.0, out=theta)
        np.mod(p, 1.0, out=p)
    return pts


# -- gridded velocity data -------------------------------------------------

_MAGIC = b"GRIDVEL1"
_TIME_UNITS = ("seconds", "hours", "days")
_SECONDS_PER_UNIT = {"seconds": 1.0, "hours": 3600.0, "days": 86400.0}


@dataclass
class GriddedField:
    """Velocity components sampled on a rectilinear space-time grid.

    ``u`` and ``v`` have shape ``(nt, ny, nx)``; NaN entries mark land or
    otherwise invalid cells.
    """

    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    time_unit: str = "days"
    _filled: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.t = np.asarray(self.t, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        shape = (self.t.size, self.y.size, self.x.size)
        for name, arr in (("u", self.u), ("v", self.v)):
            if arr.shape != shape:
                raise GriddedFieldError(
                    f"{name} has shape {arr.shape}, expected {shape}"
                )
        for name, ax in (("x", self.x), ("y", self.y), ("t", self.t)):
            if ax.size < 2:
                raise GriddedFieldError(f"axis {name} needs at least 2 samples")
            if not np.all(np.diff(ax) > 0):
                raise GriddedFieldError(f"axis {name} is not strictly increasing")
        if self.time_unit not in _TIME_UNITS:
            raise GriddedFieldError(
                f"time_unit {self.time_unit!r} not in {_TIME_UNITS}"
            )
        wet = np.isfinite(self.u) & np.isfinite(self.v)
        if not wet.any(axis=(1, 2)).all():
            raise GriddedFieldError("a time slice has no wet cells")

    @property
    def wet_mask(self):
        """Nodes with valid velocity at every time sample."""
        return (np.isfinite(self.u) & np.isfinite(self.v)).all(axis=0)

    def filled_uv(self):
        """u and v with NaN replaced by zero (land moves nothing); cached."""
        if self._filled is None:
            self._filled = (
                np.nan_to_num(self.u, nan=0.0),
                np.nan_to_num(self.v, nan=0.0),
            )
        return self._filled

    def seconds_per_time_unit(self):
        return _SECONDS_PER_UNIT[self.time_unit]


def save_gridded(field, path):
    """Write the binary container (documented in the README); bit-exact."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        unit = field.time_unit.encode("ascii")
        fh.write(unit + b"\x00" * (8 - len(unit)))
        fh.write(struct.pack("<3q", field.t.size, field.y.size, field.x.size))
        for arr in (field.x, field.y, field.t, field.u, field.v):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_gridded(path):
    """Parse and validate a gridded velocity file."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[: len(_MAGIC)] != _MAGIC:
        raise GriddedFieldError(f"{path}: bad magic, not a gridded velocity file")
    unit = raw[8:16].rstrip(b"\x00").decode("ascii", errors="replace")
    try:
        nt, ny, nx = struct.unpack("<3q", raw[16:40])
    except struct.error as exc:
        raise GriddedFieldError(f"{path}: truncated header") from exc
    if min(nt, ny, nx) < 1:
        raise GriddedFieldError(f"{path}: nonpositive axis length in header")
    counts = (nx, ny, nt, nt * ny * nx, nt * ny * nx)
    need = 40 + 8 * sum(counts)
    if len(raw) != need:
        raise GriddedFieldError(
            f"{path}: payload is {len(raw)} bytes, header implies {need}"
        )
    offset = 40
    blocks = []
    for count in counts:
        blocks.append(np.frombuffer(raw, dtype="<f8", count=count, offset=offset))
        offset += 8 * count
    x, y, t, u, v = blocks
    try:
        return GriddedField(
            x=x.copy(),
            y=y.copy(),
            t=t.copy(),
            u=u.reshape(nt, ny, nx).copy(),
            v=v.reshape(nt, ny, nx).copy(),
            time_unit=unit,
        )
    except GriddedFieldError as exc:
        raise GriddedFieldError(f"{path}: {exc}") from exc


def _interp_gridded(field, pts, t):
    """Bilinear-in-space, linear-in-time velocity; NaN cells contribute zero.

    Returns ``(uv, valid)`` where ``valid`` flags queries inside the
    space-time grid.
    """
    x, y = pts[:, 0], pts[:, 1]
    valid = (
        (x >= field.x[0])
        & (x <= field.x[-1])
        & (y >= field.y[0])
        & (y <= field.y[-1])
        & (t >= field.t[0])
        & (t <= field.t[-1])
    )
    uv = np.zeros_like(pts)
    if not valid.any():
        return uv, valid

    xq, yq = x[valid], y[valid]
    ix = np.clip(np.searchsorted(field.x, xq, side="right") - 1, 0, field.x.size - 2)
    iy = np.clip(np.searchsorted(field.y, yq, side="right") - 1, 0, field.y.size - 2)
    wx = (xq - field.x[ix]) / (field.x[ix + 1] - field.x[ix])
    wy = (yq - field.y[iy]) / (field.y[iy + 1] - field.y[iy])

    it = int(np.clip(np.searchsorted(field.t, t, side="right") - 1, 0, field.t.size - 2))
    wt = (t - field.t[it]) / (field.t[it + 1] - field.t[it])

    u, v = field.filled_uv()

    def bilinear(a, k):
        a00 = a[k, iy, ix]
        a10 = a[k, iy, ix + 1]
        a01 = a[k, iy + 1, ix]
        a11 = a[k, iy + 1, ix + 1]
        return (
            a00 * (1 - wx) * (1 - wy)
            + a10 * wx * (1 - wy)
            + a01 * (1 - wx) * wy
            + a11 * wx * wy
        )

    uq = (1 - wt) * bilinear(u, it) + wt * bilinear(u, it + 1)
    vq = (1 - wt) * bilinear(v, it) + wt * bilinear(v, it + 1)
    uv[valid, 0] = uq
    uv[valid, 1] = vq
    return uv, valid


def _nearest_index(axis, values):
    hi = np.clip(np.searchsorted(axis, values), 1, axis.size - 1)
    lo = hi - 1
    return np.where(values - axis[lo] <= axis[hi] - values, lo, hi)


def wet_at(field, pts, t):
    """True where the nearest grid node is wet at the time sample nearest ``t``."""
    pts = np.asarray(pts, dtype=float)
    ix = _nearest_index(field.x, pts[:, 0])
    iy = _nearest_index(field.y, pts[:, 1])
    it = int(_nearest_index(field.t, np.array([t]))[0])
    wet = np.isfinite(field.u[it]) & np.isfinite(field.v[it])
    return _inside_field(field, pts) & wet[iy, ix]


# -- advection --------------------------------------------------------------


def _rk4_steps(tau, h):
    n_full = int(math.floor(tau / h))
    rem = tau - n_full * h
    steps = [h] * n_full
    if rem > 1e-12 * max(abs(tau), h):
        steps.append(rem)
    return steps


def _advect_smooth_chunk(spec, pts, offset):
    pos = np.array(pts, dtype=float, copy=True)
    t = spec.t0
    for h in _rk4_steps(spec.tau, spec.integrator_step):
        k1 = velocity(spec, pos, t)
        k2 = velocity(spec, pos + 0.5 * h * k1, t + 0.5 * h)
        k3 = velocity(spec, pos + 0.5 * h * k2, t + 0.5 * h)
        k4 = velocity(spec, pos + h * k3, t + h)
        pos += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
        if not np.all(np.isfinite(pos)):
            bad = int(np.flatnonzero(~np.isfinite(pos).all(axis=1))[0])
            raise DivergedTrajectoryError(offset + bad)
    return pos, np.zeros(len(pos), dtype=bool)


def _advect_gridded_chunk(spec, pts, offset):
    field = spec.field
    pos = np.array(pts, dtype=float, copy=True)
    exited = ~_inside_field(field, pos)
    t = spec.t0
    for h in _rk4_steps(spec.tau, spec.integrator_step):
        act = ~exited
        if not act.any():
            break
        p = pos[act]
        ok = np.ones(len(p), dtype=bool)
        stages = []
        for dp, dt in ((None, 0.0), (0.5, 0.5), (0.5, 0.5), (1.0, 1.0)):
            q = p if dp is None else p + dp * h * stages[-1]
            uv, valid = _interp_gridded(field, q, t + dt * h)
            ok &= valid
            stages.append(uv)
        k1, k2, k3, k4 = stages
        p_new = p + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ok &= _inside_field(field, p_new)
        if not np.all(np.isfinite(p_new[ok])):
            sub = np.flatnonzero(act)[ok]
            bad = int(sub[np.flatnonzero(~np.isfinite(p_new[ok]).all(axis=1))[0]])
            raise DivergedTrajectoryError(offset + bad)
        # frozen trajectories keep their last in-grid position
        idx = np.flatnonzero(act)
        pos[idx[ok]] = p_new[ok]
        exited[idx[~ok]] = True
        t += h
    return pos, exited


def _inside_field(field, pts):
    return (
        (pts[:, 0] >= field.x[0])
        & (pts[:, 0] <= field.x[-1])
        & (pts[:, 1] >= field.y[0])
        & (pts[:, 1] <= field.y[-1])
    )


def advect(spec, initial, seed=0, n_workers=1):
    """Map an ensemble of initial points through the flow's time epoch.

    Continuous flows use fixed-step RK4; the standard map is iterated
    exactly.  Point ordering is preserved and results are bit-identical for
    any ``n_workers``.
    """
    initial = np.asarray(initial, dtype=float)
    if initial.ndim != 2 or initial.shape[1] != 2:
        raise FlowSpecError(f"expected an (n, 2) initial array, got {initial.shape}")

    if spec.kind == "standard-map":
        final = _standard_map_torus(initial, spec.params["K"], spec.tau)
        return TrajectoryEnsemble(initial, final, spec.t0, spec.tau, seed)

    if spec.kind == "gridded":
        lo, hi = spec.t0, spec.t0 + spec.tau
        if lo < spec.field.t[0] or hi > spec.field.t[-1]:
            raise OutOfRangeError(
                f"epoch [{lo}, {hi}] not covered by field times "
                f"[{spec.field.t[0]}, {spec.field.t[-1]}]"
            )
        worker = _advect_gridded_chunk
    else:
        worker = _advect_smooth_chunk

    chunks = [
        (spec, initial[i : i + CHUNK], i) for i in range(0, len(initial), CHUNK)
    ]
    if n_workers <= 1 or len(chunks) <= 1:
        results = [worker(*c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(lambda c: worker(*c), chunks))
    final = np.concatenate([r[0] for r in results])
    exited = np.concatenate([r[1] for r in results])
    return TrajectoryEnsemble(initial, final, spec.t0, spec.tau, seed, exited)


def seed_uniform(rect, n, seed):
    """``n`` i.i.d. uniform points on ``rect`` from a PCG64 generator."""
    n = int(n)
    if n < 1:
        raise FlowSpecError(f"need at least one point, got n={n}")
    rng = np.random.default_rng(seed)
    pts = rng.random((n, 2))
    pts[:, 0] = rect.xmin + rect.width * pts[:, 0]
    pts[:, 1] = rect.ymin + rect.height * pts[:, 1]
    return pts
