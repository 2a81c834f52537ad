"""Point-cloud ingestion, sampling, noise injection and manufactured data.

All training data flows through :class:`PointSet`: coordinates plus optional
per-field labels with availability masks, and an optional per-point effective
viscosity column.  The Kovasznay closed-form solution provides a desk-scale
ground truth for verification and manufactured problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import graph
from .errors import ConfigError, DataError

FIELDS = ("u", "v", "p")

#: Selection counts used for the full-scale cascade datasets.
CASCADE_FORWARD_COUNTS = {"residual": 20000, "labeled": 2000}
CASCADE_INVERSE_COUNTS = {"wall_pressure": 553, "interior_velocity": 1000}


@dataclass
class PointSet:
    """Coordinates with optional labeled fields and availability masks."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    p: np.ndarray | None = None
    mask_u: np.ndarray | None = None
    mask_v: np.ndarray | None = None
    mask_p: np.ndarray | None = None
    nu_eff: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        n = self.x.shape[0]
        if self.y.shape != (n,):
            raise DataError("x and y must be equal-length 1-D arrays")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.y))):
            raise DataError("coordinates must be finite")
        for f in FIELDS:
            vals = getattr(self, f)
            mask = getattr(self, "mask_" + f)
            if vals is not None:
                vals = np.asarray(vals, dtype=float)
                if vals.shape != (n,):
                    raise DataError(f"label array '{f}' length mismatch")
                setattr(self, f, vals)
            if mask is None:
                mask = np.full(n, vals is not None)
            else:
                mask = np.asarray(mask, dtype=bool)
                if mask.shape != (n,):
                    raise DataError(f"mask_{f} length mismatch")
                if vals is None and mask.any():
                    raise DataError(f"mask_{f} set but no '{f}' labels present")
            setattr(self, "mask_" + f, mask)
        if self.nu_eff is not None:
            self.nu_eff = np.asarray(self.nu_eff, dtype=float)
            if self.nu_eff.shape != (n,):
                raise DataError("nu_eff length mismatch")

    @property
    def n(self) -> int:
        return int(self.x.shape[0])

    def available(self, f: str) -> np.ndarray:
        return getattr(self, "mask_" + f)

    def labels(self, f: str) -> np.ndarray:
        """Label values where available(f); never touches masked-out entries."""
        vals = getattr(self, f)
        if vals is None:
            raise DataError(f"no '{f}' labels in point set")
        return vals[self.available(f)]

    def subset(self, idx) -> "PointSet":
        def take(a):
            return None if a is None else a[idx]
        return PointSet(self.x[idx], self.y[idx],
                        take(self.u), take(self.v), take(self.p),
                        take(self.mask_u), take(self.mask_v), take(self.mask_p),
                        take(self.nu_eff))


def empty_pointset() -> PointSet:
    return PointSet(np.empty(0), np.empty(0))


def concat_pointsets(sets) -> PointSet:
    sets = [s for s in sets if s.n > 0]
    if not sets:
        return empty_pointset()

    def cat(attr, fill=np.nan, dtype=float):
        cols = [getattr(s, attr) for s in sets]
        if all(c is None for c in cols):
            return None
        out = []
        for s, c in zip(sets, cols):
            out.append(np.full(s.n, fill, dtype=dtype) if c is None else c)
        return np.concatenate(out)

    return PointSet(
        np.concatenate([s.x for s in sets]), np.concatenate([s.y for s in sets]),
        cat("u"), cat("v"), cat("p"),
        cat("mask_u", fill=False, dtype=bool),
        cat("mask_v", fill=False, dtype=bool),
        cat("mask_p", fill=False, dtype=bool),
        cat("nu_eff"))


@dataclass
class PeriodicPairs:
    """Pitchwise-paired boundary points: lower[i] matches upper[i]."""

    lower: PointSet
    upper: PointSet
    pitch: float

    def __post_init__(self):
        if self.lower.n != self.upper.n:
            raise DataError("periodic pair sets differ in length")
        if self.lower.n:
            if not np.allclose(self.lower.x, self.upper.x, rtol=0, atol=1e-9):
                raise DataError("periodic pairs must share x coordinates")
            dy = self.upper.y - self.lower.y
            if not np.allclose(dy, self.pitch, rtol=0, atol=1e-9):
                raise DataError("periodic pair offset does not equal the pitch")

    @property
    def n(self) -> int:
        return self.lower.n


def empty_pairs() -> PeriodicPairs:
    return PeriodicPairs(empty_pointset(), empty_pointset(), 0.0)


# -- file I/O ---------------------------------------------------------------

_KNOWN_COLUMNS = ("x", "y", "u", "v", "p", "nu_eff",
                  "mask_u", "mask_v", "mask_p")


def load_points(path, column_map=None) -> PointSet:
    """Read a delimited text file (header row; comma or whitespace).

    ``column_map`` renames file columns to canonical names, e.g.
    ``{"velocity-x": "u"}``.  Malformed rows are rejected with line numbers.
    """
    column_map = {k.lower(): v for k, v in (column_map or {}).items()}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}")
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    header_line = lines[0][1]
    delim = "," if "," in header_line else None
    names = [c.strip().lower() for c in header_line.split(delim)]
    names = [column_map.get(c, c) for c in names]
    keep = [i for i, c in enumerate(names) if c in _KNOWN_COLUMNS]
    cols = {names[i]: [] for i in keep}
    if "x" not in cols or "y" not in cols:
        raise DataError(f"{path}: required columns x, y missing (have {names})")
    errors = []
    for lineno, ln in lines[1:]:
        parts = ln.split(delim)
        if len(parts) != len(names):
            errors.append(f"line {lineno}: expected {len(names)} columns, got {len(parts)}")
            continue
        try:
            row = [float(parts[i]) for i in keep]
        except ValueError:
            errors.append(f"line {lineno}: non-numeric cell")
            continue
        for i, v in zip(keep, row):
            cols[names[i]].append(v)
    if errors:
        shown = "; ".join(errors[:5])
        raise DataError(f"{path}: {len(errors)} malformed row(s): {shown}")
    arr = {k: np.array(v) for k, v in cols.items()}
    masks = {f: arr.pop("mask_" + f).astype(bool) if "mask_" + f in arr else None
             for f in FIELDS}
    return PointSet(arr["x"], arr["y"], arr.get("u"), arr.get("v"), arr.get("p"),
                    masks["u"], masks["v"], masks["p"], arr.get("nu_eff"))


def save_points(points: PointSet, path):
    """Write a comma-delimited file that ``load_points`` reads back bit-exactly."""
    cols = [("x", points.x), ("y", points.y)]
    for f in FIELDS:
        vals = getattr(points, f)
        if vals is not None:
            cols.append((f, vals))
            if not points.available(f).all():
                cols.append(("mask_" + f, points.available(f).astype(float)))
    if points.nu_eff is not None:
        cols.append(("nu_eff", points.nu_eff))
    with open(path, "w") as fh:
        fh.write(",".join(name for name, _ in cols) + "\n")
        for i in range(points.n):
            fh.write(",".join("%.17g" % c[i] for _, c in cols) + "\n")


# -- sampling and noise -----------------------------------------------------

def sample_without_replacement(pool: PointSet, n: int, seed: int) -> PointSet:
    """n distinct points from the pool; identical seed, identical selection."""
    if n > pool.n:
        raise DataError(f"cannot sample {n} points from a pool of {pool.n}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(pool.n, size=n, replace=False)
    return pool.subset(idx)


def inject_noise(points: PointSet, level: float, seed: int,
                 velocity_ref: float = 1.0, pressure_ref: float = 1.0) -> PointSet:
    """Perturb available labels with zero-mean Gaussian noise.

    Noise std is ``level`` times the field's global reference magnitude
    (velocity scale for u/v, pressure scale for p).  Coordinates and masks are
    untouched; ``level == 0`` returns the data unchanged.
    """
    if level < 0:
        raise DataError("noise level must be non-negative")
    if level == 0:
        return replace(points)
    rng = np.random.default_rng(seed)
    out = replace(points)
    for f, ref in (("u", velocity_ref), ("v", velocity_ref), ("p", pressure_ref)):
        vals = getattr(points, f)
        if vals is None:
            continue
        mask = points.available(f)
        noisy = vals.copy()
        noisy[mask] = vals[mask] + rng.normal(0.0, level * ref, size=int(mask.sum()))
        setattr(out, f, noisy)
    return out


# -- nondimensionalization --------------------------------------------------

@dataclass(frozen=True)
class Scales:
    """Reference scales: length (chord), velocity (inlet speed), density."""

    length: float = 1.0
    velocity: float = 1.0
    density: float = 1.0

    def __post_init__(self):
        if min(self.length, self.velocity, self.density) <= 0:
            raise ConfigError("scales must be strictly positive")

    @property
    def pressure(self) -> float:
        return self.density * self.velocity ** 2

    @property
    def viscosity(self) -> float:
        return self.velocity * self.length


def nondimensionalize(points: PointSet, scales: Scales) -> PointSet:
    def scale(a, s):
        return None if a is None else a / s
    return PointSet(points.x / scales.length, points.y / scales.length,
                    scale(points.u, scales.velocity), scale(points.v, scales.velocity),
                    scale(points.p, scales.pressure),
                    points.mask_u.copy(), points.mask_v.copy(), points.mask_p.copy(),
                    scale(points.nu_eff, scales.viscosity))


def redimensionalize(points: PointSet, scales: Scales) -> PointSet:
    inv = Scales(1.0 / scales.length, 1.0 / scales.velocity, 1.0 / scales.density)
    return nondimensionalize(points, inv)


# -- Kovasznay analytic solution --------------------------------------------

def kovasznay_lambda(re: float) -> float:
    if re <= 0:
        raise ConfigError("Reynolds number must be positive")
    return re / 2.0 - np.sqrt(re * re / 4.0 + 4.0 * np.pi ** 2)


def kovasznay(x, y, re: float):
    """Exact steady solution of the 2-D incompressible equations at nu = 1/re."""
    lam = kovasznay_lambda(re)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    e = np.exp(lam * x)
    u = 1.0 - e * np.cos(2.0 * np.pi * y)
    v = lam / (2.0 * np.pi) * e * np.sin(2.0 * np.pi * y)
    p = 0.5 * (1.0 - np.exp(2.0 * lam * x))
    return u, v, p


def kovasznay_expressions(x: graph.Node, y: graph.Node, re: float):
    """The same closed form as expression graphs (for residual substitution)."""
    lam = kovasznay_lambda(re)
    two_pi = 2.0 * np.pi
    e = graph.exp(graph.mul(graph.constant(lam), x))
    u = graph.sub(graph.ONE, graph.mul(e, graph.cos(graph.mul(graph.constant(two_pi), y))))
    v = graph.mul(graph.constant(lam / two_pi),
                  graph.mul(e, graph.sin(graph.mul(graph.constant(two_pi), y))))
    p = graph.mul(graph.constant(0.5),
                  graph.sub(graph.ONE, graph.exp(graph.mul(graph.constant(2.0 * lam), x))))
    return u, v, p


# -- dataset bundles --------------------------------------------------------

@dataclass
class DatasetBundle:
    """Everything one training run consumes, already nondimensional."""

    residual: PointSet
    labeled: PointSet
    inlet: PointSet
    outlet: PointSet
    wall: PointSet
    periodic: PeriodicPairs
    scales: Scales = field(default_factory=Scales)
    provenance: dict = field(default_factory=dict)


def manufactured_bundle(mode: str = "forward", re: float = 40.0,
                        domain=(0.0, 2.0, -0.5, 1.5),
                        n_residual: int = 5000, n_labeled: int = 500,
                        n_boundary: int = 64, n_velocity: int = 1000,
                        n_pressure: int = 128, seed: int = 0,
                        noise_level: float = 0.0) -> DatasetBundle:
    """Kovasznay-based bundle on a rectangle.

    Forward mode: fully labeled interior points plus inlet (u, v), outlet (p)
    and pitchwise periodic pairs; the rectangle has no solid wall, so the wall
    set is empty and the wall term inactive.  Inverse mode: velocity-only
    interior points plus pressure-only perimeter points, all boundary sets
    empty.
    """
    if mode not in ("forward", "inverse"):
        raise ConfigError(f"unknown bundle mode {mode!r}")
    x0, x1, y0, y1 = domain
    if not (x1 > x0 and y1 > y0):
        raise ConfigError("domain must have positive extent")
    rng = np.random.default_rng(seed)

    def interior(n):
        return (rng.uniform(x0, x1, n), rng.uniform(y0, y1, n))

    def labeled_at(xs, ys, fields=FIELDS):
        u, v, p = kovasznay(xs, ys, re)
        return PointSet(xs, ys,
                        u if "u" in fields else None,
                        v if "v" in fields else None,
                        p if "p" in fields else None)

    rx, ry = interior(n_residual)
    residual = PointSet(rx, ry)
    prov = {"kind": "kovasznay", "re": re, "seed": seed, "mode": mode,
            "domain": list(domain), "noise_level": noise_level}

    if mode == "forward":
        labeled = labeled_at(*interior(n_labeled))
        yb = np.linspace(y0, y1, n_boundary)
        inlet = labeled_at(np.full(n_boundary, x0), yb, fields=("u", "v"))
        outlet = labeled_at(np.full(n_boundary, x1), yb, fields=("p",))
        wall = empty_pointset()
        xp = np.linspace(x0, x1, n_boundary)
        periodic = PeriodicPairs(PointSet(xp, np.full(n_boundary, y0)),
                                 PointSet(xp, np.full(n_boundary, y1)),
                                 pitch=y1 - y0)
    else:
        vel = labeled_at(*interior(n_velocity), fields=("u", "v"))
        # pressure taps around the perimeter, the inverse analog of wall taps
        t = np.linspace(0.0, 4.0, n_pressure, endpoint=False)
        px = np.empty(n_pressure)
        py = np.empty(n_pressure)
        for i, ti in enumerate(t):
            side, frac = int(ti), ti - int(ti)
            if side == 0:
                px[i], py[i] = x0 + frac * (x1 - x0), y0
            elif side == 1:
                px[i], py[i] = x1, y0 + frac * (y1 - y0)
            elif side == 2:
                px[i], py[i] = x1 - frac * (x1 - x0), y1
            else:
                px[i], py[i] = x0, y1 - frac * (y1 - y0)
        pres = labeled_at(px, py, fields=("p",))
        labeled = concat_pointsets([vel, pres])
        inlet = outlet = wall = empty_pointset()
        periodic = empty_pairs()

    if noise_level:
        labeled = inject_noise(labeled, noise_level, seed=seed + 1)
    return DatasetBundle(residual, labeled, inlet, outlet, wall, periodic,
                         scales=Scales(), provenance=prov)


def build_bundle(config: dict) -> DatasetBundle:
    """Build a bundle from a configuration mapping.

    ``problem = kovasznay`` selects the manufactured solution; otherwise
    per-set file paths (``residual_file``, ``labeled_file``, ``inlet_file``,
    ``outlet_file``, ``wall_file``, ``periodic_lower_file``,
    ``periodic_upper_file``) are loaded and nondimensionalized with the
    configured scales.
    """
    problem = str(config.get("problem", "kovasznay")).lower()
    mode = str(config.get("mode", "forward")).lower()
    if problem == "kovasznay":
        kwargs = {}
        for key in ("re", "noise_level"):
            if key in config:
                kwargs[key] = float(config[key])
        for key in ("n_residual", "n_labeled", "n_boundary", "n_velocity",
                    "n_pressure", "seed"):
            if key in config:
                kwargs[key] = int(config[key])
        if "domain" in config:
            kwargs["domain"] = tuple(float(c) for c in str(config["domain"]).split(":"))
        return manufactured_bundle(mode=mode, **kwargs)

    scales = Scales(length=float(config.get("length_scale", 1.0)),
                    velocity=float(config.get("velocity_scale", 1.0)),
                    density=float(config.get("density", 1.0)))

    def load(key):
        if key not in config:
            return empty_pointset()
        return nondimensionalize(load_points(config[key]), scales)

    residual = load("residual_file")
    labeled = load("labeled_file")
    inlet = load("inlet_file")
    outlet = load("outlet_file")
    wall = load("wall_file")
    if "periodic_lower_file" in config:
        lower = load("periodic_lower_file")
        upper = load("periodic_upper_file")
        pitch = float(config["pitch"]) / scales.length if "pitch" in config \
            else float(np.mean(upper.y - lower.y))
        periodic = PeriodicPairs(lower, upper, pitch)
    else:
        periodic = empty_pairs()
    if residual.n == 0:
        raise ConfigError("bundle needs residual points (residual_file)")
    prov = {"kind": "files", "mode": mode,
            "files": {k: str(config[k]) for k in config if k.endswith("_file")}}
    return DatasetBundle(residual, labeled, inlet, outlet, wall, periodic,
                         scales=scales, provenance=prov)
