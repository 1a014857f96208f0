"""Particle trajectories sampled at a constant time step, plus synthetic motion drivers."""

from __future__ import annotations

import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

DEFAULT_DT = 0.025
DT_TOLERANCE = 0.01  # relative jitter accepted when reading files
GRAVITY = 9.81
PRESETS = ("translate", "swirl", "source", "pour", "converge")


class TrajectoryError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TrajectorySet:
    """Flat, particle-major arrays of trajectory samples.

    Rows are sorted by ``(particle_id, t)``; ``starts`` marks where each
    particle's run begins.
    """

    particle_id: np.ndarray
    t: np.ndarray
    position: np.ndarray
    velocity: np.ndarray
    dt: float
    label: str | None = None

    def __len__(self):
        return len(self.t)

    @property
    def starts(self) -> np.ndarray:
        if len(self.particle_id) == 0:
            return np.zeros(0, dtype=np.int64)
        change = np.flatnonzero(np.diff(self.particle_id)) + 1
        return np.concatenate([[0], change])

    @property
    def n_particles(self) -> int:
        return len(self.starts)

    @property
    def t_begin(self) -> float:
        return float(self.t.min()) if len(self.t) else 0.0

    @property
    def duration(self) -> float:
        return float(self.t.max() - self.t.min()) if len(self.t) else 0.0

    def particles(self):
        bounds = np.append(self.starts, len(self.t))
        for a, b in zip(bounds[:-1], bounds[1:]):
            yield int(self.particle_id[a]), slice(int(a), int(b))

    def with_label(self, label):
        return replace(self, label=label)

    def transformed(self, rotation=None, translation=None) -> "TrajectorySet":
        """Rigidly move every sample (velocities rotate with the scene)."""
        pos, vel = self.position, self.velocity
        if rotation is not None:
            rot = np.asarray(rotation, dtype=float)
            pos, vel = pos @ rot.T, vel @ rot.T
        if translation is not None:
            pos = pos + np.asarray(translation, dtype=float)
        return replace(self, position=pos, velocity=vel)

    def scaled_speed(self, factor: float) -> "TrajectorySet":
        return replace(self, velocity=self.velocity * factor)


def from_arrays(particle_id, t, position, velocity=None, dt=None, label=None, check_dt=True) -> TrajectorySet:
    """Sort rows, infer ``dt`` and fill velocities when missing."""
    pid = np.asarray(particle_id, dtype=np.int64).reshape(-1)
    t = np.asarray(t, dtype=float).reshape(-1)
    pos = np.asarray(position, dtype=float).reshape(-1, 3)
    vel = None if velocity is None else np.asarray(velocity, dtype=float).reshape(-1, 3)
    if not (len(pid) == len(t) == len(pos)) or (vel is not None and len(vel) != len(t)):
        raise TrajectoryError("column lengths differ")
    for name, arr in (("t", t), ("position", pos), ("velocity", vel)):
        if arr is not None and not np.isfinite(arr).all():
            row = int(np.flatnonzero(~np.isfinite(arr.reshape(len(t), -1)).all(axis=1))[0])
            raise TrajectoryError(f"NaN or infinite {name} at row {row} (particle {pid[row]})")
    if len(t) and t.min() < 0:
        raise TrajectoryError("negative time stamp")
    order = np.lexsort((t, pid))
    pid, t, pos = pid[order], t[order], pos[order]
    if vel is not None:
        vel = vel[order]
    same = pid[1:] == pid[:-1]
    gaps = np.diff(t)[same]
    if dt is None:
        positive = gaps[gaps > 0]
        dt = float(np.median(positive)) if len(positive) else DEFAULT_DT
    dt = float(dt)
    if not dt > 0:
        raise TrajectoryError("dt must be positive")
    if check_dt and len(gaps):
        bad = np.flatnonzero(np.abs(gaps - dt) > DT_TOLERANCE * dt)
        if len(bad):
            row = int(np.flatnonzero(same)[bad[0]]) + 1
            raise TrajectoryError(
                f"inconsistent time step for particle {pid[row]} at t={t[row]:.9g}: "
                f"gap {t[row] - t[row - 1]:.9g} vs dt {dt:.9g}"
            )
    ts = TrajectorySet(pid, t, pos, np.zeros_like(pos), dt, label)
    if vel is None:
        return derive_velocities(ts)
    return replace(ts, velocity=vel)


def read_trajectories(path) -> TrajectorySet:
    """Read ``particle_id,t,x,y,z[,vx,vy,vz]`` CSV; a ``# label=...`` line sets the class."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TrajectoryError(f"cannot read {path}: {exc}") from exc
    label = None
    header = None
    body_start = 0
    lines = text.splitlines(keepends=True)
    for i, line in enumerate(lines):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, _, val = s[1:].partition("=")
            if key.strip() == "label":
                label = val.strip() or None
            continue
        header = [h.strip() for h in s.split(",")]
        body_start = i + 1
        break
    required = ["particle_id", "t", "x", "y", "z"]
    if header is None or header[:5] != required:
        raise TrajectoryError(f"{path}: header must start with {','.join(required)}")
    has_vel = header[5:8] == ["vx", "vy", "vz"]
    if len(header) not in (5, 8) or (len(header) == 8 and not has_vel):
        raise TrajectoryError(f"{path}: unexpected columns {header}")
    body = "".join(lines[body_start:])
    try:
        data = np.loadtxt(io.StringIO(body), delimiter=",", comments="#", ndmin=2, dtype=float)
    except ValueError as exc:
        raise TrajectoryError(f"{path}: {exc}") from exc
    if data.size == 0:
        data = np.zeros((0, len(header)))
    if data.shape[1] != len(header):
        raise TrajectoryError(f"{path}: expected {len(header)} columns, got {data.shape[1]}")
    if np.isnan(data).any():
        r, c = np.argwhere(np.isnan(data))[0]
        raise TrajectoryError(f"{path}: NaN in column {header[c]} of data row {r + 1}")
    pid = data[:, 0]
    if not np.all(pid == np.round(pid)):
        raise TrajectoryError(f"{path}: particle_id must be integral")
    try:
        return from_arrays(pid, data[:, 1], data[:, 2:5], data[:, 5:8] if has_vel else None, label=label)
    except TrajectoryError as exc:
        raise TrajectoryError(f"{path}: {exc}") from None


def write_trajectories(ts: TrajectorySet, path) -> None:
    out = []
    if ts.label:
        out.append(f"# label={ts.label}\n")
    out.append("particle_id,t,x,y,z,vx,vy,vz\n")
    buf = io.StringIO()
    if len(ts):
        cols = np.column_stack([ts.t, ts.position, ts.velocity])
        body = np.char.mod("%.12g", cols)
        rows = [str(p) + "," + ",".join(r) for p, r in zip(ts.particle_id.tolist(), body.tolist())]
        buf.write("\n".join(rows) + "\n")
    Path(path).write_text("".join(out) + buf.getvalue())


def derive_velocities(ts: TrajectorySet) -> TrajectorySet:
    """Central differences inside each particle run, one-sided at its ends."""
    p, t = ts.position, ts.t
    n = len(t)
    vel = np.zeros_like(p)
    if n < 2:
        return replace(ts, velocity=vel)
    first = np.zeros(n, dtype=bool)
    first[ts.starts] = True
    last = np.zeros(n, dtype=bool)
    last[np.append(ts.starts[1:] - 1, n - 1)] = True
    has_prev = ~first
    has_next = ~last
    prev = np.where(has_prev, np.arange(n) - 1, np.arange(n))
    nxt = np.where(has_next, np.arange(n) + 1, np.arange(n))
    span = t[nxt] - t[prev]
    ok = span > 0
    vel[ok] = (p[nxt][ok] - p[prev][ok]) / span[ok, None]
    return replace(ts, velocity=vel)


def resample(ts: TrajectorySet, dt_new: float) -> TrajectorySet:
    """Linear interpolation of each particle onto ``t = k * dt_new`` within its time span."""
    dt_new = float(dt_new)
    if not dt_new > 0:
        raise TrajectoryError("dt_new must be positive")
    pids, times, pos = [], [], []
    eps = 1e-9
    for pid, sl in ts.particles():
        t = ts.t[sl]
        k0 = int(np.ceil(t[0] / dt_new - eps))
        k1 = int(np.floor(t[-1] / dt_new + eps))
        if k1 < k0:
            continue
        grid = np.arange(k0, k1 + 1) * dt_new
        grid = np.clip(grid, t[0], t[-1])
        p = ts.position[sl]
        pos.append(np.column_stack([np.interp(grid, t, p[:, i]) for i in range(3)]))
        times.append(grid)
        pids.append(np.full(len(grid), pid))
    if not pids:
        empty = np.zeros((0, 3))
        return TrajectorySet(np.zeros(0, dtype=np.int64), np.zeros(0), empty, empty, dt_new, ts.label)
    out = TrajectorySet(np.concatenate(pids), np.concatenate(times), np.vstack(pos), np.zeros((0, 3)), dt_new, ts.label)
    return derive_velocities(out)


def clip_to_window(ts: TrajectorySet, t0: float, t1: float) -> TrajectorySet:
    """Samples with ``t0 <= t <= t1``; may be empty."""
    if not (0 <= t0 < t1):
        raise TrajectoryError(f"window must satisfy 0 <= t0 < t1, got [{t0}, {t1}]")
    keep = (ts.t >= t0) & (ts.t <= t1)
    return replace(
        ts, particle_id=ts.particle_id[keep], t=ts.t[keep], position=ts.position[keep], velocity=ts.velocity[keep]
    )


# --- synthetic motion drivers ----------------------------------------------

_DEFAULTS = {
    "common": {"count": 500, "duration": 2.0, "dt": DEFAULT_DT, "up_axis": "z", "label": None},
    "translate": {"speed": 1.0, "axis": (1.0, 0.0, 0.0), "emitter_min": (-1.5, -0.5, -0.5),
                  "emitter_max": (-1.0, 0.5, 0.5)},
    "swirl": {"omega": (0.0, 0.0, 1.0), "origin": (0.0, 0.0, 0.0), "emitter_min": (-1.0, -1.0, 0.0),
              "emitter_max": (1.0, 1.0, 1.0)},
    "source": {"k": 1.0, "origin": (0.0, 0.0, 0.0), "emitter_min": (-0.2, -0.2, -0.2),
               "emitter_max": (0.2, 0.2, 0.2)},
    "pour": {"emitter_min": (-0.1, -0.1, 1.5), "emitter_max": (0.1, 0.1, 1.7), "target_min": (-0.3, -0.3, 0.0),
             "target_max": (0.3, 0.3, 0.0), "gravity": GRAVITY, "release": 0.5},
    "converge": {"center": None, "radius": None},
}


def preset_params(preset: str, params: dict | None = None) -> dict:
    if preset not in PRESETS:
        raise TrajectoryError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    merged = {**_DEFAULTS["common"], **_DEFAULTS[preset]}
    unknown = set(params or {}) - set(merged) - {"positions"}
    if unknown:
        raise TrajectoryError(f"unknown parameter(s) for {preset}: {', '.join(sorted(unknown))}")
    merged.update(params or {})
    return merged


def _rotate(vectors, axis, angles):
    """Rodrigues rotation of each row by its own angle about a shared unit axis."""
    k = np.asarray(axis, dtype=float)
    c = np.cos(angles)[:, None]
    s = np.sin(angles)[:, None]
    kv = np.cross(np.broadcast_to(k, vectors.shape), vectors)
    kd = (vectors @ k)[:, None] * k
    return vectors * c + kv * s + kd * (1 - c)


def synthesize(preset: str, params: dict | None = None, seed: int = 0, mesh=None) -> TrajectorySet:
    """Deterministic analytic motion for one of ``PRESETS``.

    translate: straight lines at ``speed`` along ``axis``. swirl: rigid rotation
    with angular velocity ``omega`` about ``origin``. source: radial expansion
    ``v = k (x - origin)``. pour: ballistic fall from the emitter onto the
    floor of the target box, where particles stop. converge: particles start on
    a sphere and decelerate onto their closest points of ``mesh``.
    """
    p = preset_params(preset, params)
    count, duration, dt = int(p["count"]), float(p["duration"]), float(p["dt"])
    if count <= 0 or duration <= 0:
        raise TrajectoryError("particle count and duration must be positive")
    if not dt > 0:
        raise TrajectoryError("dt must be positive")
    rng = np.random.default_rng(seed)
    steps = int(round(duration / dt))
    times = np.arange(steps + 1) * dt

    if p.get("positions") is not None:
        x0 = np.asarray(p["positions"], dtype=float).reshape(-1, 3)
        count = len(x0)
    elif preset == "converge":
        x0 = None
    else:
        lo = np.asarray(p["emitter_min"], dtype=float)
        hi = np.asarray(p["emitter_max"], dtype=float)
        x0 = lo + rng.random((count, 3)) * (hi - lo)

    tt = np.broadcast_to(times, (count, steps + 1))
    alive = np.ones(tt.shape, dtype=bool)

    if preset == "translate":
        axis = np.asarray(p["axis"], dtype=float)
        v = float(p["speed"]) * axis / np.linalg.norm(axis)
        pos = x0[:, None, :] + tt[..., None] * v
        vel = np.broadcast_to(v, pos.shape).copy()
    elif preset == "swirl":
        omega = np.asarray(p["omega"], dtype=float)
        origin = np.asarray(p["origin"], dtype=float)
        w = np.linalg.norm(omega)
        rel = np.repeat(x0 - origin, steps + 1, axis=0)
        ang = (tt * w).reshape(-1)
        rot = _rotate(rel, omega / w, ang) if w > 0 else rel
        pos = (rot + origin).reshape(count, steps + 1, 3)
        vel = np.cross(omega, pos - origin)
    elif preset == "source":
        origin = np.asarray(p["origin"], dtype=float)
        k = float(p["k"])
        pos = origin + (x0 - origin)[:, None, :] * np.exp(k * tt)[..., None]
        vel = k * (pos - origin)
    elif preset == "pour":
        up = {"x": 0, "y": 1, "z": 2}[p["up_axis"]]
        g = float(p["gravity"])
        tlo = np.asarray(p["target_min"], dtype=float)
        thi = np.asarray(p["target_max"], dtype=float)
        target = tlo + rng.random((count, 3)) * (thi - tlo)
        floor = tlo[up]
        drop = x0[:, up] - floor
        if np.any(drop <= 0):
            raise TrajectoryError("emitter must lie above the target floor")
        t_fall = np.sqrt(2 * drop / g)
        release = rng.integers(0, max(1, int(float(p["release"]) * steps)) + 1, size=count) * dt
        v0 = (target - x0) / t_fall[:, None]
        v0[:, up] = 0.0
        tau = np.clip(tt - release[:, None], 0.0, None)
        falling = np.minimum(tau, t_fall[:, None])
        gvec = np.zeros(3)
        gvec[up] = -g
        pos = x0[:, None, :] + falling[..., None] * v0[:, None, :] + 0.5 * falling[..., None] ** 2 * gvec
        vel = np.where((tau < t_fall[:, None])[..., None], v0[:, None, :] + falling[..., None] * gvec, 0.0)
        alive = tt >= release[:, None] - 1e-12
    elif preset == "converge":
        if mesh is None:
            raise TrajectoryError("converge preset needs a mesh")
        from ilscape.geometry import closest_points

        centre = mesh.bounds.mean(axis=0) if p["center"] is None else np.asarray(p["center"], dtype=float)
        radius = 0.75 * mesh.diagonal if p["radius"] is None else float(p["radius"])
        if x0 is None:
            d = rng.normal(size=(count, 3))
            x0 = centre + radius * d / np.linalg.norm(d, axis=1, keepdims=True)
        target, _, _, _ = closest_points(mesh, x0)
        tau = (tt / duration)[..., None]
        span = (x0 - target)[:, None, :]
        pos = target[:, None, :] + span * (1 - tau) ** 2
        vel = -span * 2 * (1 - tau) / duration

    pid = np.broadcast_to(np.arange(count)[:, None], tt.shape)
    m = alive.reshape(-1)
    return TrajectorySet(
        pid.reshape(-1)[m].astype(np.int64),
        np.ascontiguousarray(tt).reshape(-1)[m].copy(),
        np.ascontiguousarray(pos).reshape(-1, 3)[m],
        np.ascontiguousarray(vel).reshape(-1, 3)[m],
        dt,
        p["label"] or preset,
    )
