"""Product test weights and the comparability constant of their rectangles.

A weight assigns a strictly positive number to every lattice cell.  The
weights built here are t-independent products over the spatial axes, and
each constructor records a closed-form cell rule, so values exist for
every integer coordinate, not only inside the grid extents.  That matters
because maximal averages normalise by the weighted volume of rectangles
that may overhang the extents.

The comparability constant eta(w, R) of a rectangle is the least fraction
of weighted volume a subset can carry while still holding more than a
threshold share (default one half) of the cells.  The minimiser keeps the
cells of smallest weight, so eta is computed exactly by a partial sort.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    DomainError,
    GridSpec,
    InvariantViolation,
    RangeError,
    Rectangle,
    count_rectangles,
    enumerate_rectangles,
    random_rectangle,
    weighted_volume,
)

__all__ = [
    "WeightField",
    "make_constant_weight",
    "make_power_weight",
    "make_perturbed_weight",
    "parse_weight",
    "exact_eta",
    "eta_survey",
    "EtaRow",
    "ComparabilityReport",
]

_SPLIT_1 = np.uint64(0x9E3779B97F4A7C15)
_SPLIT_2 = np.uint64(0xBF58476D1CE4E5B9)
_SPLIT_3 = np.uint64(0x94D049BB133111EB)


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _SPLIT_2
    x = (x ^ (x >> np.uint64(27))) * _SPLIT_3
    return x ^ (x >> np.uint64(31))


def hash_uniform(seed: int, coords: np.ndarray) -> np.ndarray:
    """Deterministic pseudo-uniform values in [-1, 1) from integer coords.

    A counter-style hash, so the value at a coordinate never depends on
    which other coordinates were evaluated alongside it.
    """
    coords = np.asarray(coords, dtype=np.int64)
    with np.errstate(over="ignore"):
        h = np.full(coords.shape[:-1], np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        h = _mix64(h ^ _SPLIT_1)
        for i in range(coords.shape[-1]):
            h = _mix64(h ^ (coords[..., i].astype(np.uint64) * _SPLIT_1 + np.uint64(i + 1)))
    return (h >> np.uint64(11)).astype(np.float64) * (2.0**-52) - 1.0


@dataclass(frozen=True)
class WeightField:
    """Strictly positive cell weights on a grid.

    values       tabulated weights, spatial shape when t_independent else
                 the full grid shape.
    cell_rule    vectorised map from integer spatial coordinates (shape
                 (..., 2n)) to weights, valid on all of Z^2n; None when the
                 weight is only known on the extents.
    """

    grid: GridSpec
    values: np.ndarray
    t_independent: bool = True
    descriptor: str = "tabulated"
    cell_rule: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        want = self.grid.spatial_shape if self.t_independent else self.grid.shape
        if vals.shape != want:
            raise DomainError(f"weight shape {vals.shape} != expected {want}")
        if not np.all(np.isfinite(vals)) or not np.all(vals > 0):
            raise InvariantViolation("weights must be finite and strictly positive")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def spatial_values(self) -> np.ndarray:
        if not self.t_independent:
            raise DomainError("weight depends on t; no spatial slice")
        return self.values

    def full_values(self) -> np.ndarray:
        """Weights broadcast over the whole grid shape (read-only view)."""
        if self.t_independent:
            return np.broadcast_to(self.values[..., None], self.grid.shape)
        return self.values

    def value_at(self, spatial_coords: Sequence[int]) -> float:
        c = tuple(int(x) for x in spatial_coords)
        if len(c) != 2 * self.grid.n:
            raise DomainError(f"expected {2*self.grid.n} spatial coordinates")
        if self.cell_rule is not None:
            return float(self.cell_rule(np.asarray(c, dtype=np.int64)[None, :])[0])
        idx = tuple(x - lo for x, lo in zip(c, self.grid.lows))
        if any(i < 0 or i >= w for i, w in zip(idx, self.grid.spatial_shape)):
            raise DomainError(f"spatial point {c} outside extents and no cell rule")
        return float(self.spatial_values[idx])

    def spatial_values_at(self, coords: np.ndarray) -> np.ndarray:
        """Weights at integer spatial coordinates of shape (..., 2n); uses
        the cell rule off the extents, so tabulated-only weights must stay
        inside them."""
        coords = np.asarray(coords, dtype=np.int64)
        if coords.shape[-1] != 2 * self.grid.n:
            raise DomainError(f"expected trailing dimension {2*self.grid.n}")
        if self.cell_rule is not None:
            return np.asarray(self.cell_rule(coords), dtype=np.float64)
        sp = 2 * self.grid.n
        lows = np.asarray(self.grid.lows[:sp], dtype=np.int64)
        highs = np.asarray(self.grid.highs[:sp], dtype=np.int64)
        if not np.all((coords >= lows) & (coords <= highs)):
            raise DomainError("coordinates off the extents and no cell rule")
        return self.spatial_values[tuple(np.moveaxis(coords - lows, -1, 0))]

    def rectangle_cell_weights(self, r: Rectangle) -> np.ndarray:
        """Flat array of the weights of every cell of r (r inside extents)."""
        sl = r.slices(self.grid)
        if self.t_independent:
            block = self.values[sl[:-1]]
            reps = sl[-1].stop - sl[-1].start
            return np.repeat(block.ravel(), reps)
        return self.values[sl].ravel()

    def expanded_spatial(self, margins: Sequence[int]) -> np.ndarray:
        """Spatial weights on the extents enlarged by `margins` per axis.

        The interior is the tabulated block; the surrounding ring comes
        from the cell rule, which must exist when any margin is positive.
        """
        margins = tuple(int(m) for m in margins)
        sp = 2 * self.grid.n
        if len(margins) != sp:
            raise DomainError(f"expected {sp} margins")
        if any(m < 0 for m in margins):
            raise DomainError("margins must be >= 0")
        if not self.t_independent:
            raise DomainError("expansion needs a t-independent weight")
        if all(m == 0 for m in margins):
            return self.values
        if self.cell_rule is None:
            raise DomainError(f"weight '{self.descriptor}' has no cell rule to extend with")
        shape = tuple(w + 2 * m for w, m in zip(self.grid.spatial_shape, margins))
        axes = [
            np.arange(lo - m, hi + m + 1, dtype=np.int64)
            for (lo, hi), m in zip(self.grid.extents[:sp], margins)
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        coords = np.stack(mesh, axis=-1)
        out = self.cell_rule(coords)
        if out.shape != shape:
            raise InvariantViolation("cell rule returned a wrong shape")
        interior = tuple(slice(m, m + w) for w, m in zip(self.grid.spatial_shape, margins))
        out = np.array(out, dtype=np.float64)
        out[interior] = self.values
        if not np.all(np.isfinite(out)) or not np.all(out > 0):
            raise InvariantViolation("extended weights must stay finite and positive")
        return out

    def scaled(self, c: float) -> "WeightField":
        """The weight c*w, c > 0."""
        if not c > 0:
            raise RangeError(f"scale must be positive, got {c}")
        rule = None
        if self.cell_rule is not None:
            base = self.cell_rule
            rule = lambda coords: c * base(coords)
        return WeightField(
            grid=self.grid,
            values=self.values * c,
            t_independent=self.t_independent,
            descriptor=f"scaled:{c!r}|{self.descriptor}",
            cell_rule=rule,
        )


def _tabulate(grid: GridSpec, rule: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    sp = 2 * grid.n
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in grid.extents[:sp]]
    coords = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return rule(coords)


def make_constant_weight(grid: GridSpec, value: float = 1.0) -> WeightField:
    if not value > 0:
        raise RangeError(f"constant weight must be positive, got {value}")
    v = float(value)
    rule = lambda coords: np.full(coords.shape[:-1], v)
    return WeightField(grid, _tabulate(grid, rule), True, f"constant:{v!r}", rule)


def make_power_weight(
    grid: GridSpec,
    exponents: Sequence[float],
    centers: Sequence[float] | None = None,
) -> WeightField:
    """Separable power weight, per spatial axis |c + 1/2 - center|^a.

    The half-cell offset evaluates the profile at cell midpoints, keeping
    every cell weight positive for a > -1 as long as no center lands on a
    midpoint; exponents must exceed -1 for locally summable profiles.
    """
    sp = 2 * grid.n
    exps = tuple(float(a) for a in exponents)
    if len(exps) != sp:
        raise DomainError(f"expected {sp} exponents")
    if any(a <= -1 for a in exps):
        raise RangeError(f"exponents must be > -1, got {exps}")
    ctrs = tuple(float(c) for c in (centers if centers is not None else (0.0,) * sp))
    if len(ctrs) != sp:
        raise DomainError(f"expected {sp} centers")

    def rule(coords: np.ndarray) -> np.ndarray:
        out = np.ones(coords.shape[:-1])
        for k in range(sp):
            if exps[k] != 0.0:
                out = out * np.abs(coords[..., k] + 0.5 - ctrs[k]) ** exps[k]
        return out

    desc = f"power:{','.join(repr(a) for a in exps)}@{','.join(repr(c) for c in ctrs)}"
    return WeightField(grid, _tabulate(grid, rule), True, desc, rule)


def make_perturbed_weight(
    grid: GridSpec,
    base: WeightField | None = None,
    amplitude: float = 0.5,
    seed: int = 0,
) -> WeightField:
    """base * (1 + amplitude * r), r a seeded coordinate hash in [-1, 1)."""
    amplitude = float(amplitude)
    if not 0 <= amplitude < 1:
        raise RangeError(f"amplitude must lie in [0, 1), got {amplitude}")
    seed = int(seed)
    if base is None:
        base = make_constant_weight(grid)
    if base.cell_rule is None:
        raise DomainError("perturbation needs a base weight with a cell rule")
    base_rule = base.cell_rule

    def rule(coords: np.ndarray) -> np.ndarray:
        return base_rule(coords) * (1.0 + amplitude * hash_uniform(seed, coords))

    desc = f"perturbed:{amplitude!r}:{seed}|{base.descriptor}"
    return WeightField(grid, _tabulate(grid, rule), True, desc, rule)


def parse_weight(grid: GridSpec, text: str) -> WeightField:
    """Build a weight from a compact descriptor string.

    Forms: 'constant' or 'constant:V'; 'power:a1,a2,..' with an optional
    '@c1,c2,..' center suffix; 'perturbed:AMP:SEED' over a constant base,
    or 'perturbed:AMP:SEED|<base descriptor>'.
    """
    text = text.strip()
    kind, _, rest = text.partition(":")
    if kind == "constant":
        return make_constant_weight(grid, float(rest) if rest else 1.0)
    if kind == "power":
        spec, _, ctr = rest.partition("@")
        exps = [float(x) for x in spec.split(",") if x]
        ctrs = [float(x) for x in ctr.split(",")] if ctr else None
        return make_power_weight(grid, exps, ctrs)
    if kind == "perturbed":
        head, _, base_text = rest.partition("|")
        parts = [p for p in head.split(":") if p]
        if not 1 <= len(parts) <= 2:
            raise DomainError(f"bad perturbed descriptor {text!r}")
        amp = float(parts[0])
        seed = int(parts[1]) if len(parts) > 1 else 0
        base = parse_weight(grid, base_text) if base_text else None
        return make_perturbed_weight(grid, base, amp, seed)
    raise DomainError(f"unknown weight descriptor {text!r}")


def exact_eta(w: WeightField, r: Rectangle, threshold: float = 0.5) -> float:
    """Least weighted-volume fraction of a subset of r with more than a
    `threshold` share of the cells.

    The optimum keeps the floor(V*threshold)+1 cells of smallest weight,
    so the value is a partial sort away and lies in (0, 1].
    """
    if not 0 < threshold < 1:
        raise RangeError(f"threshold must lie in (0, 1), got {threshold}")
    vals = w.rectangle_cell_weights(r)
    if not np.all(vals > 0):
        raise InvariantViolation("weights must be positive on the rectangle")
    V = vals.size
    k = int(np.floor(V * threshold)) + 1
    if k >= V:
        return 1.0
    part = np.partition(vals, k - 1)[:k]
    return float(part.sum() / vals.sum())


@dataclass(frozen=True)
class EtaRow:
    bounds: tuple[tuple[int, int], ...]
    volume: int
    eta_exact: float
    eta_mc: float | None


@dataclass(frozen=True)
class ComparabilityReport:
    """Survey of exact_eta over a rectangle sample, plus Monte Carlo checks."""

    descriptor: str
    threshold: float
    exhaustive: bool
    rectangle_count: int
    subset_samples: int
    seed: int
    global_eta: float
    mc_global: float | None
    rows: tuple[EtaRow, ...]

    def to_json_dict(self) -> dict:
        return {
            "weight": self.descriptor,
            "threshold": self.threshold,
            "exhaustive": self.exhaustive,
            "rectangle_count": self.rectangle_count,
            "subset_samples": self.subset_samples,
            "seed": self.seed,
            "global_eta": self.global_eta,
            "mc_global": self.mc_global,
            "rows": [
                {
                    "bounds": [list(b) for b in row.bounds],
                    "volume": row.volume,
                    "eta_exact": row.eta_exact,
                    "eta_mc": row.eta_mc,
                }
                for row in self.rows
            ],
        }

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=1)
            fh.write("\n")

    def write_csv(self, path) -> None:
        d = len(self.rows[0].bounds) if self.rows else 0
        cols = [f"axis{a}_{end}" for a in range(d) for end in ("lo", "hi")]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols + ["volume", "eta_exact", "eta_mc"])
            for row in self.rows:
                flat = [x for b in row.bounds for x in b]
                writer.writerow(flat + [row.volume, repr(row.eta_exact), "" if row.eta_mc is None else repr(row.eta_mc)])


def _mc_eta(w: WeightField, r: Rectangle, samples: int, rng: np.random.Generator, threshold: float) -> float:
    """Monte Carlo upper estimate: random admissible subsets of r's cells."""
    vals = w.rectangle_cell_weights(r)
    V = vals.size
    k = int(np.floor(V * threshold)) + 1
    total = vals.sum()
    best = 1.0
    for _ in range(samples):
        m = int(rng.integers(k, V + 1))
        pick = rng.choice(V, size=m, replace=False)
        best = min(best, float(vals[pick].sum() / total))
    return best


def eta_survey(
    w: WeightField,
    grid: GridSpec,
    rectangle_budget: int = 512,
    subset_samples: int = 0,
    seed: int = 0,
    threshold: float = 0.5,
) -> ComparabilityReport:
    """exact_eta over the whole family when it fits the budget, otherwise
    over a seeded random sample of rectangles; optional Monte Carlo
    subset sampling per rectangle as an independent upper bound."""
    if rectangle_budget < 1:
        raise RangeError("rectangle_budget must be >= 1")
    if subset_samples < 0:
        raise RangeError("subset_samples must be >= 0")
    rng = np.random.default_rng([seed & 0xFFFFFFFF, 0x5E7A])
    total = count_rectangles(grid)
    exhaustive = total <= rectangle_budget
    if exhaustive:
        rects = list(enumerate_rectangles(grid))
    else:
        rects = [random_rectangle(grid, rng) for _ in range(rectangle_budget)]
    rows = []
    for r in rects:
        eta = exact_eta(w, r, threshold)
        mc = _mc_eta(w, r, subset_samples, rng, threshold) if subset_samples else None
        rows.append(EtaRow(r.bounds, r.volume, eta, mc))
    global_eta = min(row.eta_exact for row in rows)
    mc_global = min((row.eta_mc for row in rows), default=None) if subset_samples else None
    return ComparabilityReport(
        descriptor=w.descriptor,
        threshold=threshold,
        exhaustive=exhaustive,
        rectangle_count=len(rows),
        subset_samples=subset_samples,
        seed=seed,
        global_eta=global_eta,
        mc_global=mc_global,
        rows=tuple(rows),
    )
