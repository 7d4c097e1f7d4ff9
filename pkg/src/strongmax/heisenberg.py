"""Discrete Heisenberg group law and twisted strong maximal averages.

Points live on Z^(2n+1) with coordinates (u, v, t), u and v in Z^n.  The
group product twists the t coordinate by an integer multiple mu of the
symplectic form:

    (u, v, t) * (x, y, s) = (u + x, v + y, t + s + mu*(u.y - v.x)).

The maximal operator has two equivalent faces.  The group form averages
|f| over right translates of rectangles containing the identity; the
twisted form averages over rectangles containing the evaluation point,
sampling f along sheared t fibers and normalising by a weighted volume.
On the lattice the substitution (x, y, s) -> (u - x, v - y, t - s) maps
one family of averages bijectively onto the other, so for integer data
both forms agree exactly, which the test-suite exploits as an oracle.

Three independent evaluation routes are provided: a vectorised
prefix-sum path (maximal_field), a direct-summation reference without
cumulative tables (maximal_field_reference), and for mu = 0 a plain
sliding-window implementation of the ordinary weighted strong maximal
operator (untwisted_maximal_field).
"""

from __future__ import annotations

import csv
import itertools
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .lattice import (
    DomainError,
    GridSpec,
    InvariantViolation,
    RangeError,
    Rectangle,
    RectangleFamily,
    ScalarField,
)
from .weights import WeightField

__all__ = [
    "SHIFT_STANDARD",
    "SHIFT_SWAPPED",
    "GroupPoint",
    "MaximalField",
    "argmax_rectangle",
    "group_identity",
    "group_inverse",
    "group_multiply",
    "level_set",
    "maximal_field",
    "maximal_field_reference",
    "maximal_group_form",
    "maximal_twisted_form",
    "read_field_binary",
    "read_field_csv",
    "twisted_shift",
    "untwisted_maximal_field",
    "write_field_binary",
    "write_field_csv",
]

# Which bilinear form shears the t fiber in the twisted averages.
# "standard" matches the group law above; "swapped" pairs u with x and
# v with y instead, and is kept only as a comparison variant (it breaks
# the equivalence with the group form whenever mu != 0).
SHIFT_STANDARD = "standard"
SHIFT_SWAPPED = "swapped"
_CONVENTIONS = (SHIFT_STANDARD, SHIFT_SWAPPED)


@dataclass(frozen=True)
class GroupPoint:
    """A lattice point (u, v, t) of the discrete group."""

    u: tuple[int, ...]
    v: tuple[int, ...]
    t: int

    def __post_init__(self):
        u = tuple(int(x) for x in self.u)
        v = tuple(int(x) for x in self.v)
        if len(u) != len(v) or not u:
            raise DomainError("u and v must be nonempty and of equal length")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", int(self.t))

    @property
    def n(self) -> int:
        return len(self.u)

    def coords(self) -> tuple[int, ...]:
        return self.u + self.v + (self.t,)

    @classmethod
    def from_coords(cls, coords: Sequence[int]) -> "GroupPoint":
        coords = tuple(int(c) for c in coords)
        if len(coords) % 2 == 0 or len(coords) < 3:
            raise DomainError(f"need an odd number >= 3 of coordinates, got {len(coords)}")
        n = (len(coords) - 1) // 2
        return cls(coords[:n], coords[n : 2 * n], coords[-1])


def group_identity(n: int) -> GroupPoint:
    return GroupPoint((0,) * n, (0,) * n, 0)


def group_multiply(p: GroupPoint, q: GroupPoint, mu: int) -> GroupPoint:
    """Group product; exact in Python integers."""
    if p.n != q.n:
        raise DomainError(f"dimension mismatch {p.n} != {q.n}")
    mu = int(mu)
    twist = mu * (sum(a * b for a, b in zip(p.u, q.v)) - sum(a * b for a, b in zip(p.v, q.u)))
    return GroupPoint(
        tuple(a + b for a, b in zip(p.u, q.u)),
        tuple(a + b for a, b in zip(p.v, q.v)),
        p.t + q.t + twist,
    )


def group_inverse(p: GroupPoint) -> GroupPoint:
    """The group inverse is coordinate negation; the twist cancels."""
    return GroupPoint(tuple(-x for x in p.u), tuple(-x for x in p.v), -p.t)


def twisted_shift(
    u: Sequence[int],
    v: Sequence[int],
    xi: Sequence[int],
    eta: Sequence[int],
    mu: int,
    convention: str = SHIFT_STANDARD,
) -> int:
    """Integer shear of the t fiber at anchor (u, v), sample column (xi, eta)."""
    if convention not in _CONVENTIONS:
        raise DomainError(f"unknown shift convention {convention!r}")
    if not len(u) == len(v) == len(xi) == len(eta):
        raise DomainError("u, v, xi, eta must share one block length")
    if convention == SHIFT_STANDARD:
        return int(mu) * (sum(a * b for a, b in zip(u, eta)) - sum(a * b for a, b in zip(v, xi)))
    return int(mu) * (sum(a * b for a, b in zip(u, xi)) - sum(a * b for a, b in zip(v, eta)))


@dataclass(frozen=True)
class MaximalField:
    """Values of a maximal operator at every grid point, with provenance."""

    grid: GridSpec
    values: np.ndarray
    family: str = ""
    weight: str = ""
    convention: str = SHIFT_STANDARD

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        if vals.shape != self.grid.shape:
            raise DomainError(f"field shape {vals.shape} != grid shape {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


def level_set(mf, lam: float) -> np.ndarray:
    """Boolean mask of the super-level set {M > lam}; lam must be positive."""
    if not lam > 0:
        raise RangeError(f"level must be positive, got {lam}")
    return np.asarray(mf.values) > lam


def _as_point_coords(x, grid: GridSpec) -> tuple[int, ...]:
    if isinstance(x, GroupPoint):
        coords = x.coords()
    else:
        coords = tuple(int(c) for c in x)
    if len(coords) != grid.d:
        raise DomainError(f"expected {grid.d} coordinates, got {len(coords)}")
    return coords


# ---------------------------------------------------------------------------
# shared geometry tables (pure combinatorics of a family, cached per family)


@lru_cache(maxsize=64)
def _box_tables(family: RectangleFamily):
    """Anchored spatial boxes of a family as offset arrays.

    Returns (lo_off, side_ax, cells): each box holds the anchor, its low
    corner sits at anchor + lo_off with lo_off in [-side+1, 0] per axis.
    """
    grid = family.grid
    per_factor = []
    for i, N in enumerate(grid.factors):
        opts = []
        for s in family.side_choices(i):
            for off in itertools.product(range(-s + 1, 1), repeat=N):
                opts.append((off, s))
        per_factor.append(opts)
    lo_off, side_ax, cells = [], [], []
    for combo in itertools.product(*per_factor):
        offs, sides = [], []
        c = 1
        for (off, s), N in zip(combo, grid.factors):
            offs.extend(off)
            sides.extend([s] * N)
            c *= s**N
        lo_off.append(offs)
        side_ax.append(sides)
        cells.append(c)
    return (
        np.asarray(lo_off, dtype=np.int64),
        np.asarray(side_ax, dtype=np.int64),
        np.asarray(cells, dtype=np.int64),
    )


@lru_cache(maxsize=64)
def _t_tables(family: RectangleFamily):
    """All t intervals of the family meeting the extents, plus coverage lists.

    Returns (a, b, length, cover) where cover[i] indexes the intervals
    containing the i-th t value of the extents.
    """
    grid = family.grid
    a_list, b_list = [], []
    for L in family.t_len_choices():
        for a in range(grid.t_lo - L + 1, grid.t_hi + 1):
            a_list.append(a)
            b_list.append(a + L - 1)
    a = np.asarray(a_list, dtype=np.int64)
    b = np.asarray(b_list, dtype=np.int64)
    cover = tuple(
        np.flatnonzero((a <= t) & (t <= b)) for t in range(grid.t_lo, grid.t_hi + 1)
    )
    return a, b, (b - a + 1), cover


def _spatial_coords(grid: GridSpec) -> np.ndarray:
    axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in grid.extents[: 2 * grid.n]]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 2 * grid.n)


def _check_inputs(f: ScalarField, omega: WeightField, family: RectangleFamily) -> None:
    if f.grid != family.grid or omega.grid != family.grid:
        raise DomainError("field, weight and family must share one grid")
    if not omega.t_independent:
        raise DomainError("maximal averages need a t-independent weight")


# ---------------------------------------------------------------------------
# fast path: prefix sums over sheared gathers


def _column_values(
    f: ScalarField,
    omega: WeightField,
    family: RectangleFamily,
    cols: np.ndarray,
    convention: str,
    expanded_w: np.ndarray | None = None,
) -> np.ndarray:
    """Twisted maximal values on whole t columns.

    cols are flat indices into the spatial extents (C order); the result
    has shape (len(cols), t_len).  One t-prefix gather per (anchor, cell)
    pair makes every rectangle numerator a difference of two entries, and
    a spatial prefix turns box sums into corner sums.
    """
    grid = f.grid
    n, sp = grid.n, 2 * grid.n
    L = grid.t_len
    lo_off, side_ax, cells = _box_tables(family)
    ta, tb, tlen, cover = _t_tables(family)
    nbox, n_t = lo_off.shape[0], ta.shape[0]
    cap_t = family.max_t_len
    margins = family.margins()

    coords_sp = _spatial_coords(grid)
    n_sp = coords_sp.shape[0]
    omega_flat = omega.spatial_values.reshape(-1)

    # t-prefix of |f| per spatial cell, zero-padded in front
    absf = np.abs(f.values).reshape(n_sp, L)
    cf = np.concatenate([np.zeros((n_sp, 1)), np.cumsum(absf, axis=1)], axis=1)

    # denominator prefix over the extended weight window
    w_exp = omega.expanded_spatial(margins) if expanded_w is None else expanded_w
    pw = w_exp
    for ax in range(sp):
        pw = np.cumsum(pw, axis=ax)
    pw = np.pad(pw, [(1, 0)] * sp)

    anchors = coords_sp[cols]
    m = anchors.shape[0]
    U, V = anchors[:, :n], anchors[:, n:sp]
    XI, ETA = coords_sp[:, :n], coords_sp[:, n:sp]
    if convention == SHIFT_STANDARD:
        shear = grid.mu * (U @ ETA.T - V @ XI.T)
    else:
        shear = grid.mu * (U @ XI.T - V @ ETA.T)

    # cut values c with t-prefix index clip(c + shear - t_lo, 0, L)
    c_lo = grid.t_lo - cap_t + 1
    n_c = L + 2 * cap_t
    cvals = np.arange(c_lo, c_lo + n_c, dtype=np.int64)
    idx = np.clip(cvals[None, None, :] + (shear - grid.t_lo)[:, :, None], 0, L)
    cw = cf[np.arange(n_sp)[None, :, None], idx] * omega_flat[None, :, None]

    p = cw.reshape(m, *grid.spatial_shape, n_c)
    for ax in range(1, sp + 1):
        p = np.cumsum(p, axis=ax)
    p = np.pad(p, [(0, 0)] + [(1, 0)] * sp + [(0, 0)])

    widths = np.asarray(grid.spatial_shape, dtype=np.int64)
    lows = np.asarray(grid.lows[:sp], dtype=np.int64)
    anchor_idx = anchors - lows[None, :]
    ai = (ta - c_lo).astype(np.int64)
    bi = (tb + 1 - c_lo).astype(np.int64)

    colmax = np.zeros((m, n_t))
    rows = np.arange(m)
    box_block = max(1, int((1 << 27) // max(1, m * n_c * 8)))
    j_block = max(1, int((1 << 24) // max(1, m * min(box_block, nbox) * 8)))
    for bs in range(0, nbox, box_block):
        be = min(bs + box_block, nbox)
        blo = anchor_idx[:, None, :] + lo_off[None, bs:be, :]
        bhi = blo + side_ax[None, bs:be, :]
        # numerator corners, clipped to the extents (f vanishes outside)
        nlo = np.clip(blo, 0, widths[None, None, :])
        nhi = np.clip(bhi, 0, widths[None, None, :])
        # denominator corners in the extended window (never clipped)
        wlo = blo + np.asarray(margins, dtype=np.int64)[None, None, :]
        whi = wlo + side_ax[None, bs:be, :]
        bv = np.zeros((m, be - bs, n_c))
        wv = np.zeros((m, be - bs))
        for bits in itertools.product((0, 1), repeat=sp):
            sign = -1.0 if (sp - sum(bits)) % 2 else 1.0
            nidx = tuple((nhi if b else nlo)[:, :, ax] for ax, b in enumerate(bits))
            widx = tuple((whi if b else wlo)[:, :, ax] for ax, b in enumerate(bits))
            bv += sign * p[(rows[:, None],) + nidx]
            wv += sign * pw[widx]
        if not np.all(wv > 0):
            raise InvariantViolation("weighted volume must be positive on every box")
        for js in range(0, n_t, j_block):
            je = min(js + j_block, n_t)
            num = bv[:, :, bi[js:je]] - bv[:, :, ai[js:je]]
            num /= wv[:, :, None] * tlen[js:je][None, None, :]
            np.maximum(colmax[:, js:je], num.max(axis=1), out=colmax[:, js:je])
    out = np.empty((m, L))
    for ti in range(L):
        out[:, ti] = colmax[:, cover[ti]].max(axis=1)
    return out


def maximal_field(
    f: ScalarField,
    omega: WeightField,
    family: RectangleFamily,
    convention: str = SHIFT_STANDARD,
    column_chunk: int = 0,
) -> MaximalField:
    """Twisted weighted maximal field on the whole grid (fast path)."""
    _check_inputs(f, omega, family)
    if convention not in _CONVENTIONS:
        raise DomainError(f"unknown shift convention {convention!r}")
    grid = f.grid
    n_sp = int(np.prod(grid.spatial_shape))
    L = grid.t_len
    lo_off, _, _ = _box_tables(family)
    n_c = L + 2 * family.max_t_len
    if column_chunk <= 0:
        # small chunks keep the gather working set cache-resident
        column_chunk = max(16, int((1 << 23) // max(1, n_sp * n_c * 8)))
    w_exp = omega.expanded_spatial(family.margins())
    out = np.empty((n_sp, L))
    for start in range(0, n_sp, column_chunk):
        cols = np.arange(start, min(start + column_chunk, n_sp))
        out[cols] = _column_values(f, omega, family, cols, convention, expanded_w=w_exp)
    return MaximalField(grid, out.reshape(grid.shape), family.describe(), omega.descriptor, convention)


def maximal_twisted_form(
    f: ScalarField,
    omega: WeightField,
    x,
    family: RectangleFamily,
    convention: str = SHIFT_STANDARD,
) -> float:
    """Twisted weighted maximal average at one grid point."""
    _check_inputs(f, omega, family)
    if convention not in _CONVENTIONS:
        raise DomainError(f"unknown shift convention {convention!r}")
    grid = f.grid
    coords = _as_point_coords(x, grid)
    if not grid.contains(coords):
        raise DomainError(f"point {coords} outside extents {grid.extents}")
    sp = 2 * grid.n
    flat = 0
    for ax in range(sp):
        flat = flat * grid.shape[ax] + (coords[ax] - grid.lows[ax])
    vals = _column_values(f, omega, family, np.asarray([flat]), convention)
    return float(vals[0, coords[-1] - grid.t_lo])


# ---------------------------------------------------------------------------
# group form: averages of |f| over translates of rectangles through the
# identity, evaluated by reflected sampling around the point


def maximal_group_form(f: ScalarField, x, family: RectangleFamily) -> float:
    """Unweighted maximal average in group coordinates at x.

    Averages |f(x * y^{-1})| over y in rectangles of the family that
    contain the identity.  The point x may lie anywhere on the lattice;
    f is zero off the extents.
    """
    if f.grid != family.grid:
        raise DomainError("field and family must share one grid")
    grid = f.grid
    n, sp = grid.n, 2 * grid.n
    coords = _as_point_coords(x, grid)
    xsp = np.asarray(coords[:sp], dtype=np.int64)
    xt = coords[-1]
    margins = family.margins()
    reach_t = family.max_t_len - 1

    axes = [np.arange(-mrg, mrg + 1, dtype=np.int64) for mrg in margins]
    mesh = np.meshgrid(*axes, indexing="ij")
    region_shape = tuple(2 * mrg + 1 for mrg in margins)
    xi = np.stack(mesh, axis=-1)
    tau = np.arange(-reach_t, reach_t + 1, dtype=np.int64)

    # x * (xi, eta, tau)^{-1} = (u - xi, v - eta, t - tau + mu*(v.xi - u.eta))
    twist = grid.mu * (
        np.tensordot(xi[..., :n], xsp[n:sp], axes=(-1, 0))
        - np.tensordot(xi[..., n:sp], xsp[:n], axes=(-1, 0))
    )
    sample = np.empty(region_shape + (2 * reach_t + 1, grid.d), dtype=np.int64)
    sample[..., :sp] = (xsp[None, :] - xi.reshape(-1, sp)).reshape(region_shape + (1, sp))
    sample[..., sp] = (xt + twist)[..., None] - tau

    vals = np.abs(f.sample_many(sample))
    p = vals
    for ax in range(sp + 1):
        p = np.cumsum(p, axis=ax)
    p = np.pad(p, [(1, 0)] * (sp + 1))

    lo_off, side_ax, cells = _box_tables(family)
    origin = np.asarray(margins, dtype=np.int64)
    blo = origin[None, :] + lo_off
    bhi = blo + side_ax
    sv = np.zeros((lo_off.shape[0], 2 * reach_t + 2))
    for bits in itertools.product((0, 1), repeat=sp):
        sign = -1.0 if (sp - sum(bits)) % 2 else 1.0
        idx = tuple((bhi if b else blo)[:, ax] for ax, b in enumerate(bits))
        sv += sign * p[idx]

    best = 0.0
    for Lt in family.t_len_choices():
        for a_off in range(-Lt + 1, 1):
            a_idx = reach_t + a_off
            num = sv[:, a_idx + Lt] - sv[:, a_idx]
            best = max(best, float((num / (cells * Lt)).max()))
    return best


# ---------------------------------------------------------------------------
# direct-summation reference (no cumulative tables anywhere)


def maximal_field_reference(
    f: ScalarField,
    omega: WeightField,
    family: RectangleFamily,
    convention: str = SHIFT_STANDARD,
) -> MaximalField:
    """Twisted weighted maximal field by literal summation.

    Loops over anchor columns, gathers the sheared samples of one slab,
    and sums each rectangle with plain slice sums.  Exact for integer
    data, independent of the prefix-sum machinery, and meant for small
    grids only.
    """
    _check_inputs(f, omega, family)
    if convention not in _CONVENTIONS:
        raise DomainError(f"unknown shift convention {convention!r}")
    grid = f.grid
    n, sp = grid.n, 2 * grid.n
    L = grid.t_len
    margins = family.margins()
    reach_t = family.max_t_len - 1
    w_exp = omega.expanded_spatial(margins)

    # spatial boxes as (slab slice per axis, matching weight-window slice)
    boxes = []
    side_lists = [family.side_choices(i) for i in range(len(grid.factors))]
    for sides in itertools.product(*side_lists):
        side_ax = []
        for s, N in zip(sides, grid.factors):
            side_ax.extend([s] * N)
        for off in itertools.product(*(range(-s + 1, 1) for s in side_ax)):
            sl = tuple(
                slice(mrg + o, mrg + o + s) for mrg, o, s in zip(margins, off, side_ax)
            )
            boxes.append(sl)

    # t intervals as (slab slice, real bounds)
    t_windows = []
    for Lt in family.t_len_choices():
        for a in range(grid.t_lo - Lt + 1, grid.t_hi + 1):
            sl = slice(a - (grid.t_lo - reach_t), a - (grid.t_lo - reach_t) + Lt)
            t_cov = slice(max(a, grid.t_lo) - grid.t_lo, min(a + Lt - 1, grid.t_hi) - grid.t_lo + 1)
            t_windows.append((sl, Lt, t_cov))

    tau = np.arange(grid.t_lo - reach_t, grid.t_hi + reach_t + 1, dtype=np.int64)
    out = np.zeros(grid.shape)
    sp_lows = np.asarray(grid.lows[:sp], dtype=np.int64)
    for sp_idx in itertools.product(*(range(w) for w in grid.spatial_shape)):
        anchor = np.asarray(sp_idx, dtype=np.int64) + sp_lows
        axes = [
            np.arange(pc - mrg, pc + mrg + 1, dtype=np.int64)
            for pc, mrg in zip(anchor, margins)
        ]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if convention == SHIFT_STANDARD:
            shear = grid.mu * (
                np.tensordot(mesh[..., n:sp], anchor[:n], axes=(-1, 0))
                - np.tensordot(mesh[..., :n], anchor[n:sp], axes=(-1, 0))
            )
        else:
            shear = grid.mu * (
                np.tensordot(mesh[..., :n], anchor[:n], axes=(-1, 0))
                - np.tensordot(mesh[..., n:sp], anchor[n:sp], axes=(-1, 0))
            )
        coords = np.empty(mesh.shape[:-1] + (tau.shape[0], grid.d), dtype=np.int64)
        coords[..., :sp] = mesh[..., None, :]
        coords[..., sp] = tau[None, :] + shear[..., None]
        gw = np.abs(f.sample_many(coords))
        wslab = w_exp[tuple(slice(i, i + 2 * mrg + 1) for i, mrg in zip(sp_idx, margins))]
        gw *= wslab[..., None]
        best = np.zeros(L)
        for bsl in boxes:
            wsum = float(wslab[bsl].sum())
            block = gw[bsl]
            for tsl, Lt, t_cov in t_windows:
                val = float(block[(Ellipsis, tsl)].sum()) / (wsum * Lt)
                cur = best[t_cov]
                np.maximum(cur, val, out=cur)
        out[sp_idx] = best
    return MaximalField(grid, out, family.describe(), omega.descriptor, convention)


# ---------------------------------------------------------------------------
# untwisted comparison operator (mu = 0 face), via sliding windows


def untwisted_maximal_field(
    f: ScalarField, omega: WeightField, family: RectangleFamily
) -> MaximalField:
    """Ordinary weighted strong maximal field, no shear anywhere.

    Built from numpy sliding windows over zero-padded data, so it shares
    no evaluation machinery with the twisted paths; for mu = 0 the
    twisted field must reproduce it exactly on integer data.
    """
    _check_inputs(f, omega, family)
    grid = f.grid
    sp = 2 * grid.n
    L = grid.t_len
    margins = family.margins()
    reach_t = family.max_t_len - 1
    w_exp = omega.expanded_spatial(margins)
    fw = np.abs(f.values) * omega.full_values()
    fp = np.pad(fw, [(mrg, mrg) for mrg in margins] + [(reach_t, reach_t)])

    swv = np.lib.stride_tricks.sliding_window_view
    out = np.zeros(grid.shape)
    side_lists = [family.side_choices(i) for i in range(len(grid.factors))]
    for sides in itertools.product(*side_lists):
        side_ax = []
        for s, N in zip(sides, grid.factors):
            side_ax.extend([s] * N)
        wsum = swv(w_exp, tuple(side_ax)).sum(axis=tuple(range(sp, 2 * sp)))
        for Lt in family.t_len_choices():
            win = tuple(side_ax) + (Lt,)
            nsum = swv(fp, win).sum(axis=tuple(range(sp + 1, 2 * sp + 2)))
            val = nsum / (wsum[..., None] * Lt)
            vmax = swv(val, win).max(axis=tuple(range(sp + 1, 2 * sp + 2)))
            sel = tuple(
                slice(mrg - s + 1, mrg - s + 1 + w)
                for mrg, s, w in zip(margins, side_ax, grid.spatial_shape)
            ) + (slice(reach_t - Lt + 1, reach_t - Lt + 1 + L),)
            np.maximum(out, vmax[sel], out=out)
    return MaximalField(grid, out, family.describe(), omega.descriptor, "untwisted")


# ---------------------------------------------------------------------------
# diagnostics


def argmax_rectangle(
    f: ScalarField,
    omega: WeightField,
    x,
    family: RectangleFamily,
    convention: str = SHIFT_STANDARD,
) -> tuple[Rectangle, float]:
    """The lexicographically first rectangle attaining the twisted maximum
    at x, ordered by (base corner, side lengths).  Desk scale only: walks
    the whole anchored family."""
    _check_inputs(f, omega, family)
    grid = f.grid
    n, sp = grid.n, 2 * grid.n
    coords = _as_point_coords(x, grid)
    if not grid.contains(coords):
        raise DomainError(f"point {coords} outside extents {grid.extents}")
    anchor = np.asarray(coords[:sp], dtype=np.int64)
    best: tuple[Rectangle, float] | None = None
    best_key = None
    for r in family.rectangles_containing(coords):
        axes = [np.arange(lo, hi + 1, dtype=np.int64) for lo, hi in r.bounds[:sp]]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if convention == SHIFT_STANDARD:
            shear = grid.mu * (
                np.tensordot(mesh[..., n:sp], anchor[:n], axes=(-1, 0))
                - np.tensordot(mesh[..., :n], anchor[n:sp], axes=(-1, 0))
            )
        else:
            shear = grid.mu * (
                np.tensordot(mesh[..., :n], anchor[:n], axes=(-1, 0))
                - np.tensordot(mesh[..., n:sp], anchor[n:sp], axes=(-1, 0))
            )
        tau = np.arange(r.t_lo, r.t_hi + 1, dtype=np.int64)
        pts = np.empty(mesh.shape[:-1] + (tau.shape[0], grid.d), dtype=np.int64)
        pts[..., :sp] = mesh[..., None, :]
        pts[..., sp] = tau[None, :] + shear[..., None]
        w_cells = omega.spatial_values_at(mesh)
        num = float((np.abs(f.sample_many(pts)).sum(axis=-1) * w_cells).sum())
        den = float(w_cells.sum()) * r.t_len
        val = num / den
        key = tuple(lo for lo, _ in r.bounds[:sp]) + (r.t_lo,) + r.sides + (r.t_len,)
        if best is None or val > best[1] or (val == best[1] and key < best_key):
            best, best_key = (r, val), key
    assert best is not None
    return best


# ---------------------------------------------------------------------------
# field serialisation


def write_field_csv(obj, path) -> None:
    """Per-cell rows (coordinates then value) in C order, exact round trip."""
    grid: GridSpec = obj.grid
    vals = np.asarray(obj.values)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(grid.axis_names() + ["value"])
        lows = grid.lows
        for idx in itertools.product(*(range(w) for w in grid.shape)):
            coords = [i + lo for i, lo in zip(idx, lows)]
            writer.writerow(coords + [repr(float(vals[idx]))])


def read_field_csv(path, mu: int = 1, factors: Sequence[int] = ()) -> ScalarField:
    """Rebuild a field written by write_field_csv; extents are inferred and
    every cell must appear exactly once."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) < 4 or header[-1] != "value" or header[-2] != "t":
            raise DomainError(f"unrecognised field header {header!r}")
        d = len(header) - 1
        if d % 2 == 0:
            raise DomainError(f"even coordinate count {d}")
        n = (d - 1) // 2
        want = [f"u{k+1}" for k in range(n)] + [f"v{k+1}" for k in range(n)] + ["t"]
        if header[:-1] != want:
            raise DomainError(f"unexpected axis names {header[:-1]!r}")
        rows = [(tuple(int(c) for c in row[:-1]), float(row[-1])) for row in reader if row]
    if not rows:
        raise DomainError("no data rows")
    coords = np.asarray([c for c, _ in rows], dtype=np.int64)
    extents = tuple((int(coords[:, ax].min()), int(coords[:, ax].max())) for ax in range(d))
    grid = GridSpec(n=n, extents=extents, factors=tuple(factors), mu=mu)
    if len(rows) != grid.cell_count:
        raise DomainError(f"{len(rows)} rows do not fill extents {extents}")
    vals = np.full(grid.shape, np.nan)
    for c, v in rows:
        vals[tuple(x - lo for x, lo in zip(c, grid.lows))] = v
    if np.any(np.isnan(vals)):
        raise DomainError("duplicate or missing cells in field file")
    return ScalarField(grid, vals)


_BIN_MAGIC = b"SMXF"


def write_field_binary(obj, path) -> None:
    """Little-endian header (magic, int64 d, int64 extent pairs) then the
    float64 payload in C order."""
    grid: GridSpec = obj.grid
    vals = np.ascontiguousarray(np.asarray(obj.values), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<q", grid.d))
        for lo, hi in grid.extents:
            fh.write(struct.pack("<qq", lo, hi))
        fh.write(vals.tobytes(order="C"))


def read_field_binary(path, mu: int = 1, factors: Sequence[int] = ()) -> ScalarField:
    with open(path, "rb") as fh:
        if fh.read(4) != _BIN_MAGIC:
            raise DomainError(f"{path}: not a field file")
        (d,) = struct.unpack("<q", fh.read(8))
        if d < 3 or d % 2 == 0:
            raise DomainError(f"bad dimension {d}")
        extents = tuple(struct.unpack("<qq", fh.read(16)) for _ in range(d))
        grid = GridSpec(n=(d - 1) // 2, extents=extents, factors=tuple(factors), mu=mu)
        payload = fh.read()
    vals = np.frombuffer(payload, dtype="<f8")
    if vals.size != grid.cell_count:
        raise DomainError(f"payload holds {vals.size} cells, extents need {grid.cell_count}")
    return ScalarField(grid, vals.reshape(grid.shape))
