"""Grid cells, land-cover labelling of cells and 8-connected patches."""

from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from ..exceptions import EmptyRaster

LOW_VEGETATION = "low vegetation"
MIXED_VEGETATION = "mixed vegetation"
MAJORITY_SHARE = 0.6
PAIR_SHARE = 0.3
PRINCIPAL_SHARE = 0.75


def cell_id(row, col):
    """Stable string id of grid cell ``(row, col)``."""
    return f"{int(row)}_{int(col)}"


@dataclass
class Cell:
    """One grid cell with its test outcome.

    ``centroid`` is ``(lat, lon)`` in degrees.
    """

    row: int
    col: int
    centroid: tuple
    pvalue: float = float("nan")
    zscore: float = float("nan")
    label: object = None
    sample: object = field(default=None, repr=False)
    n: int = 0

    @property
    def id(self):
        return cell_id(self.row, self.col)


@dataclass(frozen=True)
class Patch:
    """A nonempty 8-connected set of same-label cells."""

    id: int
    cells: tuple
    label: object

    @property
    def size(self):
        return len(self.cells)


def build_patches(label_grid, mask=None):
    """Split a label grid into 8-connected single-label patches.

    Parameters
    ----------
    label_grid : array-like, shape (rows, cols)
        Any hashable labels; ``None`` marks cells outside the area.
    mask : array-like of bool, optional
        ``True`` marks excluded cells, which belong to no patch.

    Returns
    -------
    list of Patch
        Ordered by each patch's first cell in row-major order, ids from 1.
        Cells are ``(row, col)`` tuples in row-major order.
    """
    grid = np.asarray(label_grid, dtype=object)
    if grid.ndim != 2:
        raise ValueError("label_grid must be 2-D")
    excluded = np.zeros(grid.shape, bool) if mask is None else np.asarray(mask, bool)
    if excluded.shape != grid.shape:
        raise ValueError("mask shape does not match label_grid")
    excluded = excluded | np.vectorize(lambda v: v is None, otypes=[bool])(grid)
    structure = np.ones((3, 3), int)
    found = []
    labels = {grid[idx] for idx in zip(*np.nonzero(~excluded))}
    for lab in labels:
        member = (~excluded) & np.vectorize(lambda v: v == lab, otypes=[bool])(grid)
        comp, count = ndimage.label(member, structure=structure)
        for c in range(1, count + 1):
            rows, cols = np.nonzero(comp == c)
            found.append((tuple(zip(rows.tolist(), cols.tolist())), lab))
    found.sort(key=lambda item: item[0][0])
    return [Patch(i + 1, cells, lab) for i, (cells, lab) in enumerate(found)]


def land_cover_shares(pixels, class_map):
    """Fraction of a cell covered by each land-cover class.

    Parameters
    ----------
    pixels : sequence
        Raw pixel codes of one cell.
    class_map : mapping
        Code to either a class name, or a ``(principal, secondary)`` pair for
        mixed pixels.  Either side of a pair may itself be a tuple of classes;
        its share is then split in proportion to the cell's pure pixels of
        those classes (evenly when none are present).

    Returns
    -------
    dict
        Class name to share in [0, 1].
    """
    pixels = list(pixels)
    if not pixels:
        raise EmptyRaster("no pixels in cell")
    mapped = [class_map[p] for p in pixels]
    pure = Counter(m for m in mapped if isinstance(m, str))
    total = Counter({k: float(v) for k, v in pure.items()})
    for m in mapped:
        if isinstance(m, str):
            continue
        principal, secondary = m
        for part, share in ((principal, PRINCIPAL_SHARE), (secondary, 1 - PRINCIPAL_SHARE)):
            for cls, frac in _split(part, pure).items():
                total[cls] += share * frac
    return {k: v / len(pixels) for k, v in total.items()}


def _split(part, pure):
    if isinstance(part, str):
        return {part: 1.0}
    weights = np.array([pure.get(c, 0) for c in part], float)
    if weights.sum() == 0:
        weights = np.ones(len(part))
    return dict(zip(part, weights / weights.sum()))


def aggregate_land_cover(pixels, class_map, low_class=LOW_VEGETATION,
                         mixed_class=MIXED_VEGETATION):
    """Label of a cell from its pixel land-cover codes.

    The dominant class wins at a share of at least 60%.  When the two
    leading classes both lie strictly between 30% and 60% and neither is
    ``low_class``, the cell gets the pair label ``"a/b"`` (leading first).
    Otherwise it is ``mixed_class``.
    """
    shares = land_cover_shares(pixels, class_map)
    ranked = sorted(shares.items(), key=lambda kv: (-kv[1], str(kv[0])))
    top, top_share = ranked[0]
    if top_share >= MAJORITY_SHARE - 1e-12:
        return top
    if len(ranked) > 1:
        second, second_share = ranked[1]
        in_band = all(PAIR_SHARE < s < MAJORITY_SHARE for s in (top_share, second_share))
        if in_band and low_class not in (top, second):
            return f"{top}/{second}"
    return mixed_class
