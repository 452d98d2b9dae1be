"""Gray-labelled square QAM constellations and symbol-level helpers.

Labels use bipolar bits (+1/-1) throughout.  For a square constellation
the first half of a symbol's label addresses the real axis and the
second half the imaginary axis.
"""

import numpy as np

# Per-axis Gray labelling, one bit tuple per amplitude level in ascending
# level order.  Adjacent levels differ in exactly one bit.
_GRAY_AXIS = {
    2: ((-1,), (1,)),
    4: ((-1, -1), (-1, 1), (1, 1), (1, -1)),
}


class Constellation:
    """A unit-energy square QAM constellation with Gray bit labels.

    Attributes:
        order: number of points (4 or 16).
        bits_per_symbol: label length in bits.
        n_axis: amplitude levels per axis (sqrt of order).
        points: complex array of shape (order,).  Point index is
            n_axis * real_rank + imag_rank, ranks counted in ascending
            amplitude-level order, so index order is lexicographic in
            (real level, imag level).
        labels: int8 array (order, bits_per_symbol) of bipolar bits.
        axis_levels: ascending per-axis amplitude levels, shape (n_axis,).
    """

    def __init__(self, order: int):
        if order not in (4, 16):
            raise ValueError(f"unsupported QAM order {order}, expected 4 or 16")
        self.order = order
        self.n_axis = int(round(np.sqrt(order)))
        u = self.n_axis
        raw = np.arange(-(u - 1), u, 2, dtype=np.float64)  # -3,-1,1,3 or -1,1
        scale = np.sqrt(np.mean(raw**2) * 2.0)  # unit average symbol energy
        self.axis_levels = raw / scale
        axis_bits = np.array(_GRAY_AXIS[u], dtype=np.int8)
        self.bits_per_symbol = 2 * axis_bits.shape[1]

        pts = np.empty(order, dtype=np.complex128)
        labels = np.empty((order, self.bits_per_symbol), dtype=np.int8)
        for ru in range(u):
            for iv in range(u):
                m = u * ru + iv
                pts[m] = self.axis_levels[ru] + 1j * self.axis_levels[iv]
                labels[m] = np.concatenate([axis_bits[ru], axis_bits[iv]])
        self.points = pts
        self.labels = labels

        # packed bipolar label -> point index, for O(1) bit mapping
        lut = np.full(1 << self.bits_per_symbol, -1, dtype=np.int64)
        lut[self._pack(labels)] = np.arange(order)
        self._label_lut = lut

    def _pack(self, bits) -> np.ndarray:
        """Pack rows of bipolar bits into integers, MSB first."""
        b = (np.asarray(bits) > 0).astype(np.int64)
        w = 1 << np.arange(self.bits_per_symbol - 1, -1, -1)
        return b @ w

    def to_indices(self, bits) -> np.ndarray:
        """Map a bipolar bit stream to point indices, Q bits per symbol."""
        bits = np.asarray(bits)
        q = self.bits_per_symbol
        if bits.ndim != 1 or bits.size % q:
            raise ValueError(f"bit stream length {bits.size} not a multiple of {q}")
        return self._label_lut[self._pack(bits.reshape(-1, q))]

    def map_bits(self, bits) -> np.ndarray:
        """Map a bipolar bit stream to complex symbols."""
        return self.points[self.to_indices(bits)]

    def slice_rank(self, x: float) -> int:
        """Rank of the per-axis amplitude level nearest to x.

        Ties go to the smaller level, consistently with the tie rule of
        channel_order.
        """
        cost = (x - self.axis_levels) ** 2
        return int(np.argmin(cost))  # argmin keeps the first (smaller) level

    def slice_nearest(self, b: complex) -> int:
        """Point index of the constellation point nearest to b.

        Quantizes the real and imaginary parts independently; never does
        a two-dimensional search.
        """
        return self.n_axis * self.slice_rank(b.real) + self.slice_rank(b.imag)

    def channel_order(self, b: complex) -> "ChannelOrderCursor":
        """Cursor over all point indices in ascending |b - point|^2 order."""
        return ChannelOrderCursor(self, b)


class ChannelOrderCursor:
    """Lazy exact enumeration of points by ascending squared distance to b.

    Works on the two per-axis sorted cost lists and a staircase frontier
    over the (real rank, imag rank) grid, so each step touches at most
    n_axis candidate cells instead of sorting all order points up front.
    Exact cost ties are emitted in ascending point-index order.
    """

    def __init__(self, const: Constellation, b: complex):
        self._const = const
        u = const.n_axis
        rcost = (b.real - const.axis_levels) ** 2
        icost = (b.imag - const.axis_levels) ** 2
        # ascending (cost, rank); stable argsort breaks ties toward the
        # smaller level
        rord = np.argsort(rcost, kind="stable")
        iord = np.argsort(icost, kind="stable")
        self._rcost = rcost[rord]
        self._icost = icost[iord]
        self._rrank = rord
        self._irank = iord
        self._vnext = [0] * u
        self._nstart = 1
        self._emit: list[int] = []
        self._pos = 0

    def __iter__(self):
        return self

    def __next__(self) -> int:
        if self._pos < len(self._emit):
            m = self._emit[self._pos]
            self._pos += 1
            return m
        u_axis = self._const.n_axis
        best = np.inf
        for u in range(self._nstart):
            v = self._vnext[u]
            if v < u_axis:
                c = self._rcost[u] + self._icost[v]
                if c < best:
                    best = c
        if not np.isfinite(best):
            raise StopIteration
        # drain the whole exact-tie group before emitting anything
        group = []
        u = 0
        while u < self._nstart:
            v = self._vnext[u]
            while v < u_axis and self._rcost[u] + self._icost[v] == best:
                group.append(u_axis * self._rrank[u] + self._irank[v])
                v += 1
                if v == 1 and u + 1 == self._nstart and u + 1 < u_axis:
                    self._nstart += 1  # consuming (u, 0) opens row u+1
            self._vnext[u] = v
            u += 1
        group.sort()
        self._emit = group
        self._pos = 1
        return group[0]


def build_gray_qam(order: int) -> Constellation:
    """Build a unit-energy Gray-labelled QAM constellation (order 4 or 16)."""
    return Constellation(order)
