"""
Grid-sampled decoupling fields: slices, interpolation, Lipschitz estimates, concatenation and snapshots
"""

from dataclasses import dataclass
import io
import itertools
import logging
import math
import struct
import zlib

from django.conf import settings
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from dfield.constants import (
    GridError,
    JunctionMismatch,
    SnapshotChecksumError,
    SnapshotTruncatedError,
    SnapshotVersionError,
)


# Globals

log = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b'DFLD'
SNAPSHOT_VERSION = 1
JUNCTION_TOLERANCE = 1e-12
SLICE_SNAP = 1e-10


# Classes

@dataclass(frozen=True)
class SpatialGrid(object):
    """
    Tensor grid over the x-domain; `axes` is a tuple of `(min, max, count)` per axis.
    """
    axes: tuple

    def __post_init__(self):
        axes = tuple((float(low), float(high), int(count)) for low, high, count in self.axes)
        object.__setattr__(self, 'axes', axes)
        if not 1 <= len(axes) <= settings.DFLD_MAX_SPATIAL_DIM:
            raise GridError(
                'Grids support 1 to {limit} axes, got {n}.'.format(limit=settings.DFLD_MAX_SPATIAL_DIM, n=len(axes))
            )
        for low, high, count in axes:
            if count < 2:
                raise GridError('Every axis needs at least 2 nodes, got {count}.'.format(count=count))
            if not (math.isfinite(low) and math.isfinite(high) and low < high):
                raise GridError('Axis bounds must be finite with min < max, got [{low}, {high}].'.format(
                    low=low, high=high
                ))
        if self.node_count > settings.DFLD_GRID_NODE_CAP:
            raise GridError('Grid has {count} nodes, cap is {cap}.'.format(
                count=self.node_count, cap=settings.DFLD_GRID_NODE_CAP
            ))

    @property
    def n(self):
        """
        Return the spatial dimension.
        """
        return len(self.axes)

    @property
    def shape(self):
        """
        Return the number of nodes per axis.
        """
        return tuple(count for _, _, count in self.axes)

    @property
    def node_count(self):
        """
        Return the total number of nodes.
        """
        return int(np.prod(self.shape))

    @property
    def points(self):
        """
        Return the node coordinates per axis.
        """
        return tuple(np.linspace(low, high, count) for low, high, count in self.axes)

    @property
    def spacing(self):
        """
        Return the node spacing per axis.
        """
        return np.array([(high - low) / (count - 1) for low, high, count in self.axes])

    @property
    def nodes(self):
        """
        Return all nodes as an array of shape (node_count, n), in row-major order.
        """
        mesh = np.meshgrid(*self.points, indexing='ij')
        return np.stack([axis.reshape(-1) for axis in mesh], axis=-1)

    def contains(self, x):
        """
        Return a boolean mask telling which points of `x` (shape (..., n)) lie inside the grid box.
        """
        x = np.asarray(x, dtype=float)
        low = np.array([low for low, _, _ in self.axes])
        high = np.array([high for _, high, _ in self.axes])
        return np.all((x >= low) & (x <= high), axis=-1)

    def refined(self, factor):
        """
        Return a grid with `factor` times as many cells per axis, containing every node of this grid.
        """
        return SpatialGrid(tuple((low, high, (count - 1) * factor + 1) for low, high, count in self.axes))

    def coarse_view(self, values, factor):
        """
        Restrict `values` sampled on `self.refined(factor)` to the nodes of this grid.
        """
        fine_shape = tuple((count - 1) * factor + 1 for count in self.shape)
        values = np.asarray(values)
        trailing = values.shape[1:]
        restricted = values.reshape(fine_shape + trailing)[tuple(slice(None, None, factor) for _ in self.shape)]
        return restricted.reshape((self.node_count,) + trailing)


class FieldSlice(object):
    """
    The decoupling field u(t, .) on a grid, with the companion Z produced by the backward step.

    `z_values` is None on the terminal slice. Arrays are read-only after construction.
    """

    def __init__(self, t, grid, u_values, z_values=None, iterations=0, deltas=()):
        self.t = float(t)
        self.iterations = iterations
        self.deltas = tuple(deltas)
        self.grid = grid
        self.u_values = np.array(u_values, dtype=float).reshape(grid.node_count, -1)
        self.u_values.setflags(write=False)
        if z_values is not None:
            z_values = np.array(z_values, dtype=float).reshape(grid.node_count, self.m, -1)
            z_values.setflags(write=False)
        self.z_values = z_values
        if not np.all(np.isfinite(self.u_values)) or (z_values is not None and not np.all(np.isfinite(z_values))):
            raise GridError('Slice at t={t:.12g} contains non-finite values.'.format(t=self.t))
        self.lip_estimate = lipschitz_estimate(self)
        self._interpolators = {}

    def __repr__(self):
        return 'FieldSlice(t={t!r}, lip_estimate={lip!r})'.format(t=self.t, lip=self.lip_estimate)

    @property
    def m(self):
        """
        Return the dimension of u.
        """
        return self.u_values.shape[1]

    @property
    def max_abs_u(self):
        """
        Return max |u| over nodes, with |.| the Euclidean norm in R^m.
        """
        return float(np.max(np.linalg.norm(self.u_values, axis=-1)))

    @property
    def max_abs_z(self):
        """
        Return max |Z| over nodes (Frobenius norm), or 0 if the slice carries no Z.
        """
        if self.z_values is None:
            return 0.0
        return float(np.max(np.linalg.norm(self.z_values.reshape(self.grid.node_count, -1), axis=-1)))

    def interpolator(self, which='u'):
        """
        Return the cached multilinear interpolator for 'u' or 'z'.
        """
        interpolator = self._interpolators.get(which)
        if interpolator is None:
            values = self.u_values if which == 'u' else self.z_values
            interpolator = RegularGridInterpolator(
                self.grid.points,
                values.reshape(self.grid.shape + values.shape[1:]),
                method='linear',
                bounds_error=False,
                fill_value=None,
            )
            self._interpolators[which] = interpolator
        return interpolator


class DecouplingFieldApprox(object):
    """
    Ordered slices of an approximate decoupling field, starting at the terminal time.

    `metadata` records how the field was built (steps, margin, cutoff radius, ...).
    """

    def __init__(self, slices, grid, problem=None, metadata=None):
        self.slices = list(slices)
        self.grid = grid
        self.problem = problem
        self.metadata = dict(metadata or {})
        self._ascending = np.array([slice_.t for slice_ in reversed(self.slices)])
        self._rule = None

    def __repr__(self):
        return 'DecouplingFieldApprox({count} slices on [{start:.6g}, {end:.6g}])'.format(
            count=len(self.slices), start=self.earliest.t, end=self.terminal.t
        )

    @property
    def terminal(self):
        """
        Return the slice at the terminal time of this field.
        """
        return self.slices[0]

    @property
    def earliest(self):
        """
        Return the slice with the smallest time.
        """
        return self.slices[-1]

    @property
    def times(self):
        """
        Return slice times in build order (decreasing).
        """
        return np.array([slice_.t for slice_ in self.slices])

    @property
    def steps(self):
        """
        Return the step lengths between consecutive slices.
        """
        return -np.diff(self.times)

    @property
    def lipschitz_estimates(self):
        """
        Return the slice Lipschitz estimates in build order.
        """
        return np.array([slice_.lip_estimate for slice_ in self.slices])

    def validate(self):
        """
        Check slice ordering and grids; raise `GridError` on violation.
        """
        times = self.times
        if np.any(np.diff(times) >= 0):
            raise GridError('Slice times must be strictly decreasing.')
        for slice_ in self.slices:
            if slice_.grid != self.grid:
                raise GridError('Slice at t={t:.12g} lives on a different grid.'.format(t=slice_.t))

    def _bracket(self, t):
        """
        Return indices `(left, right)` of the slices bracketing `t`, with times[left] <= t <= times[right].
        """
        times = self._ascending
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError('t={t:.12g} lies outside [{start:.12g}, {end:.12g}].'.format(
                t=t, start=times[0], end=times[-1]
            ))
        position = int(np.searchsorted(times, t, side='right')) - 1
        position = min(max(position, 0), len(times) - 1)
        count = len(self.slices)
        left = count - 1 - position
        right = max(left - 1, 0)
        return left, right

    def _slice_index(self, t):
        """
        Return the index of the slice at `t`, or None if `t` falls strictly between two slices.
        """
        left, right = self._bracket(t)
        for index in (left, right):
            if abs(self.slices[index].t - t) <= SLICE_SNAP * max(1.0, abs(t)):
                return index
        return None

    def _stored_z(self, index, x):
        slice_ = self.slices[index]
        if slice_.z_values is None:
            # Only the terminal slice lacks Z; at t = T use the Z of the last step.
            slice_ = next((candidate for candidate in self.slices[index + 1:] if candidate.z_values is not None), None)
            if slice_ is None:
                x = np.asarray(x, dtype=float)
                return np.zeros(x.shape[:-1] + (self.terminal.m, self.problem.d if self.problem else 1))
        return interpolate(slice_, x, which='z')

    def _blend(self, t, x):
        left, right = self._bracket(t)
        lower, upper = self.slices[left], self.slices[right]
        weight = (t - lower.t) / (upper.t - lower.t)
        return (1.0 - weight) * interpolate(lower, x) + weight * interpolate(upper, x)

    def _step_between(self, t, x):
        """
        Return (Y, Z) at `t` from a backward step of length `upper.t - t` started at the slice above `t`.
        """
        # Imported here since localstep imports this module.
        from dfield.localstep import PicardConfig, gauss_hermite, solve_at

        _, right = self._bracket(t)
        upper = self.slices[right]
        if self._rule is None:
            quad_order = self.metadata.get('quad_order') or settings.DFLD_DEFAULT_QUAD_ORDER
            self._rule = gauss_hermite(self.problem.d, quad_order)
        picard = self.metadata.get('picard') or PicardConfig.from_settings()
        x = np.asarray(x, dtype=float)
        y, z = solve_at(
            x.reshape(-1, self.grid.n), upper, t, upper.t - t, self.problem, self._rule, picard,
            cutoff=self.metadata.get('cutoff_radius'),
        )
        return y.reshape(x.shape[:-1] + (upper.m,)), z.reshape(x.shape[:-1] + (upper.m, self.problem.d))

    def evaluate(self, t, x):
        """
        Return `(u(t, x), Z(t, x))` for points `x` of shape (..., n).

        On a slice both are interpolated from its grid values. Between slices they solve the step
        equations over the partial step from the slice above `t`. Without a problem, u is blended
        linearly in time and Z is taken from the slice below `t`.
        """
        index = self._slice_index(t)
        if index is not None:
            return interpolate(self.slices[index], x), self._stored_z(index, x)
        if self.problem is None:
            return self._blend(t, x), self._stored_z(self._bracket(t)[0], x)
        return self._step_between(t, x)

    def value_at(self, t, x):
        """
        Return u(t, x).
        """
        return self.evaluate(t, x)[0]

    def lipschitz_at(self, t):
        """
        Return the larger Lipschitz estimate of the two slices bracketing `t`.
        """
        left, right = self._bracket(t)
        return max(self.slices[left].lip_estimate, self.slices[right].lip_estimate)

    def z_at(self, t, x):
        """
        Return Z(t, x); zero where the field carries no Z at all.
        """
        return self.evaluate(t, x)[1]


# Functions

def _directions(n):
    """
    Yield grid directions in {-1, 0, 1}^n with a positive first nonzero entry: axes, face and cell diagonals.
    """
    for direction in itertools.product((-1, 0, 1), repeat=n):
        nonzero = [component for component in direction if component != 0]
        if nonzero and nonzero[0] > 0:
            yield direction


def lipschitz_estimate(slice_):
    """
    Return the largest divided difference |u(a) - u(b)| / |a - b| over neighbouring nodes and cell diagonals.

    This is a lower bound of the Lipschitz constant of the interpolant.
    """
    grid = slice_.grid
    values = slice_.u_values.reshape(grid.shape + (slice_.m,))
    spacing = grid.spacing
    estimate = 0.0
    for direction in _directions(grid.n):
        plus, minus = [], []
        for component in direction:
            if component > 0:
                plus.append(slice(1, None))
                minus.append(slice(None, -1))
            elif component < 0:
                plus.append(slice(None, -1))
                minus.append(slice(1, None))
            else:
                plus.append(slice(None))
                minus.append(slice(None))
        difference = values[tuple(plus)] - values[tuple(minus)]
        distance = math.sqrt(sum((component * step) ** 2 for component, step in zip(direction, spacing)))
        if difference.size:
            estimate = max(estimate, float(np.max(np.linalg.norm(difference, axis=-1))) / distance)
    return estimate


def interpolate(slice_, x, which='u'):
    """
    Return u(t, x) (or Z when `which` is 'z') for points `x` of shape (..., n).

    Multilinear inside the grid box; outside, the boundary cell is continued linearly.
    """
    x = np.asarray(x, dtype=float)
    values = slice_.u_values if which == 'u' else slice_.z_values
    if slice_.grid.n == 1:
        result = _interpolate_line(slice_.grid, values.reshape(len(values), -1), x.reshape(-1))
    else:
        result = slice_.interpolator(which)(x.reshape(-1, slice_.grid.n))
    return result.reshape(x.shape[:-1] + values.shape[1:])


def _interpolate_line(grid, values, x):
    """
    Piecewise linear interpolation on a 1D grid; the end cells are continued linearly.
    """
    low, high, count = grid.axes[0]
    position = (x - low) / ((high - low) / (count - 1))
    cell = np.clip(np.floor(np.nan_to_num(position)), 0, count - 2).astype(int)
    weight = (position - cell)[:, None]
    return (1.0 - weight) * values[cell] + weight * values[cell + 1]


def terminal_slice(problem, grid):
    """
    Return the slice u(T, .) = xi sampled on `grid`.
    """
    return FieldSlice(problem.T, grid, problem.evaluate_xi(grid.nodes))


def concatenate(left, right):
    """
    Glue `left` (built on [s, t] from the earliest slice of `right`) to `right` (built on [t, T]).

    Raise `JunctionMismatch` if the junction slices differ.
    """
    junction, start = right.earliest, left.terminal
    if left.grid != right.grid:
        raise JunctionMismatch('Fields live on different grids.')
    if junction.t != start.t:
        raise JunctionMismatch('Junction times differ: {right:.12g} vs {left:.12g}.'.format(
            right=junction.t, left=start.t
        ))
    if np.max(np.abs(junction.u_values - start.u_values)) > JUNCTION_TOLERANCE:
        raise JunctionMismatch('Junction slices at t={t:.12g} differ.'.format(t=junction.t))
    if len(left.slices) == 1:
        return right
    metadata = dict(right.metadata)
    metadata.update({key: value for key, value in left.metadata.items() if key not in ('steps',)})
    metadata['steps'] = list(right.metadata.get('steps', [])) + list(left.metadata.get('steps', []))
    slices = right.slices[:-1] + [_with_z(start, junction)] + left.slices[1:]
    return DecouplingFieldApprox(slices, right.grid, problem=right.problem or left.problem, metadata=metadata)


def _with_z(start, junction):
    """
    Return the junction slice, preferring whichever side carries the Z of the step to its left.
    """
    return start if start.z_values is not None or junction.z_values is None else junction


# Snapshots

def to_bytes(fld):
    """
    Serialize `fld` into the versioned little-endian snapshot format.
    """
    grid = fld.grid
    problem = fld.problem
    m = fld.terminal.m
    z_slice = next((slice_ for slice_ in fld.slices if slice_.z_values is not None), None)
    d = problem.d if problem is not None else (z_slice.z_values.shape[2] if z_slice is not None else 1)
    T = fld.terminal.t
    payload = io.BytesIO()
    payload.write(struct.pack('<IIId', grid.n, m, d, T))
    for low, high, count in grid.axes:
        payload.write(struct.pack('<ddI', low, high, count))
    cutoff = fld.metadata.get('cutoff_radius')
    payload.write(struct.pack(
        '<Idd',
        len(fld.slices),
        float(fld.metadata.get('margin', math.nan)),
        float(cutoff) if cutoff is not None else math.nan,
    ))
    for slice_ in fld.slices:
        has_z = slice_.z_values is not None
        payload.write(struct.pack('<dI', slice_.t, int(has_z)))
        payload.write(np.ascontiguousarray(slice_.u_values, dtype='<f8').tobytes())
        if has_z:
            payload.write(np.ascontiguousarray(slice_.z_values, dtype='<f8').tobytes())
    body = payload.getvalue()
    return SNAPSHOT_MAGIC + struct.pack('<I', SNAPSHOT_VERSION) + body + struct.pack('<I', zlib.crc32(body))


def from_bytes(data, problem=None):
    """
    Deserialize a snapshot produced by `to_bytes`.
    """
    if len(data) < 8:
        raise SnapshotTruncatedError('Snapshot is shorter than its preamble.')
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotVersionError('Not a field snapshot (bad magic {magic!r}).'.format(magic=data[:4]))
    version, = struct.unpack_from('<I', data, 4)
    if version != SNAPSHOT_VERSION:
        raise SnapshotVersionError('Unsupported snapshot version {version} (expected {expected}).'.format(
            version=version, expected=SNAPSHOT_VERSION
        ))
    reader = _Reader(data, 8)
    n, m, d, T = reader.unpack('<IIId')
    axes = tuple(reader.unpack('<ddI') for _ in range(n))
    slice_count, margin, cutoff = reader.unpack('<Idd')
    grid = SpatialGrid(axes)
    nodes = grid.node_count
    minimal = reader.offset + slice_count * (12 + 8 * nodes * m) + 4
    if len(data) < minimal:
        raise SnapshotTruncatedError('Snapshot declares {count} slices but ends after {size} bytes.'.format(
            count=slice_count, size=len(data)
        ))
    raw = []
    for _ in range(slice_count):
        t, has_z = reader.unpack('<dI')
        if has_z not in (0, 1):
            raise SnapshotChecksumError('Corrupt slice flag {flag} at t={t!r}.'.format(flag=has_z, t=t))
        u_values = reader.array(nodes * m).reshape(nodes, m)
        z_values = reader.array(nodes * m * d).reshape(nodes, m, d) if has_z else None
        raw.append((t, u_values, z_values))
    if reader.offset != len(data) - 4:
        raise SnapshotTruncatedError('Snapshot content does not end where its checksum begins.')
    body, checksum = data[8:-4], struct.unpack('<I', data[-4:])[0]
    if zlib.crc32(body) != checksum:
        raise SnapshotChecksumError('Snapshot payload does not match its CRC32.')
    slices = [FieldSlice(t, grid, u_values, z_values) for t, u_values, z_values in raw]
    metadata = {'margin': margin, 'cutoff_radius': None if math.isnan(cutoff) else cutoff, 'T': T}
    return DecouplingFieldApprox(slices, grid, problem=problem, metadata=metadata)


class _Reader(object):
    """
    Sequential reader over snapshot bytes that reports truncation.
    """

    def __init__(self, data, offset):
        self.data = data
        self.offset = offset

    def unpack(self, fmt):  # pylint: disable=missing-docstring
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise SnapshotTruncatedError('Snapshot ended inside its header.')
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def array(self, count):  # pylint: disable=missing-docstring
        size = 8 * count
        if self.offset + size > len(self.data) - 4:
            raise SnapshotTruncatedError('Snapshot ended inside slice data.')
        values = np.frombuffer(self.data, dtype='<f8', count=count, offset=self.offset).astype(float)
        self.offset += size
        return values


def save(fld, path):
    """
    Write `fld` to `path`.
    """
    with open(path, 'wb') as snapshot_file:
        snapshot_file.write(to_bytes(fld))
    log.info('Saved field snapshot with %d slices to %s', len(fld.slices), path)


def load(path, problem=None):
    """
    Read a field snapshot from `path`.
    """
    with open(path, 'rb') as snapshot_file:
        return from_bytes(snapshot_file.read(), problem=problem)
