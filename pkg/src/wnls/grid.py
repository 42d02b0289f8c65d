"""Discretization of R^d x T: periodic box [-L, L)^d in x, the 2*pi torus in y.

Transform convention (used everywhere in the package): the forward FFT is
unnormalized and the inverse divides by the total number of points, i.e. the
``scipy.fft`` defaults.  Field values are stored with shape
``(n_x,)*d + (n_y,)`` so that y is the fastest axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, DomainError, UnsupportedDimensionError

TWO_PI = 2.0 * math.pi


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    d: int
    L: float
    n_x: int
    n_y: int

    @property
    def h_x(self) -> float:
        return 2.0 * self.L / self.n_x

    @property
    def h_y(self) -> float:
        return TWO_PI / self.n_y

    @property
    def weight(self) -> float:
        """Quadrature weight of a single sample, h_x^d * h_y."""
        return self.h_x**self.d * self.h_y

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d + (self.n_y,)

    @property
    def x_shape(self) -> tuple[int, ...]:
        return (self.n_x,) * self.d

    @property
    def size(self) -> int:
        return self.n_x**self.d * self.n_y

    @cached_property
    def x(self) -> np.ndarray:
        return -self.L + self.h_x * np.arange(self.n_x)

    @cached_property
    def y(self) -> np.ndarray:
        return self.h_y * np.arange(self.n_y)

    @cached_property
    def kx(self) -> np.ndarray:
        """1-D x wavenumbers in FFT order, (pi/L) * {-n_x/2, ..., n_x/2-1}."""
        return TWO_PI * sfft.fftfreq(self.n_x, d=self.h_x)

    @cached_property
    def ky(self) -> np.ndarray:
        return np.round(TWO_PI * sfft.fftfreq(self.n_y, d=self.h_y))

    def _axis_view(self, vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
        shape = [1] * ndim
        shape[axis] = vec.size
        return vec.reshape(shape)

    @cached_property
    def kx_axes(self) -> tuple[np.ndarray, ...]:
        """x wavenumbers broadcastable against a full field."""
        return tuple(self._axis_view(self.kx, j, self.d + 1) for j in range(self.d))

    @cached_property
    def ky_axis(self) -> np.ndarray:
        return self._axis_view(self.ky, self.d, self.d + 1)

    @cached_property
    def k2x(self) -> np.ndarray:
        """|k_x|^2 broadcastable against an x-only array of shape x_shape."""
        out = np.zeros(self.x_shape)
        for j in range(self.d):
            out = out + self._axis_view(self.kx, j, self.d) ** 2
        return out

    @cached_property
    def k2y(self) -> np.ndarray:
        return self.ky_axis**2

    @cached_property
    def k2(self) -> np.ndarray:
        return self.k2x[..., None] + self.k2y

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| on the x-grid (shape x_shape)."""
        r2 = np.zeros(self.x_shape)
        for j in range(self.d):
            r2 = r2 + self._axis_view(self.x, j, self.d) ** 2
        return np.sqrt(r2)

    def x_coords(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcastable against x_shape."""
        return tuple(self._axis_view(self.x, j, self.d) for j in range(self.d))

    def coords(self) -> tuple[np.ndarray, ...]:
        """Broadcastable coordinate arrays (x_1, ..., x_d, y) against a full field."""
        xs = tuple(self._axis_view(self.x, j, self.d + 1) for j in range(self.d))
        return xs + (self.ky_axis * 0 + self._axis_view(self.y, self.d, self.d + 1),)


def make_grid(d: int, L: float, n_x: int, n_y: int) -> GridSpec:
    if d not in (1, 2):
        raise UnsupportedDimensionError(f"d={d} is not supported (only d=1 or d=2)")
    if not (L > 0 and math.isfinite(L)):
        raise ConfigurationError(f"box half-width L must be positive and finite, got {L}")
    for name, n in (("n_x", n_x), ("n_y", n_y)):
        if int(n) != n or not _is_pow2(int(n)) or n < 8:
            raise ConfigurationError(f"{name}={n} must be a power of two >= 8")
    spec = GridSpec(int(d), float(L), int(n_x), int(n_y))
    # touch the tables once so that later concurrent readers only see read-only data
    spec.k2, spec.radius  # noqa: B018
    return spec


@dataclass(frozen=True, eq=False)
class Field:
    spec: GridSpec
    values: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.complex128)
        if vals.shape != self.spec.shape:
            if vals.size != self.spec.size:
                raise DomainError(
                    f"field has {vals.size} samples, grid expects {self.spec.size}"
                )
            vals = vals.reshape(self.spec.shape)
        if not self.diverged and not np.all(np.isfinite(vals)):
            raise DomainError("field contains non-finite samples")
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.spec, values)

    def __mul__(self, other):
        return Field(self.spec, self.values * other)

    __rmul__ = __mul__


def zeros(spec: GridSpec) -> Field:
    return Field(spec, np.zeros(spec.shape, dtype=np.complex128))


def from_function(spec: GridSpec, func) -> Field:
    """Sample ``func(x_1, ..., x_d, y)`` on the grid."""
    vals = np.broadcast_to(func(*spec.coords()), spec.shape)
    return Field(spec, np.array(vals, dtype=np.complex128))


def embed_y_independent(spec: GridSpec, values_x: np.ndarray) -> Field:
    values_x = np.asarray(values_x)
    if values_x.shape != spec.x_shape:
        raise DomainError(f"expected x-array of shape {spec.x_shape}, got {values_x.shape}")
    return Field(spec, np.repeat(values_x[..., None], spec.n_y, axis=-1))


# -- transforms -------------------------------------------------------------

def to_spectral(values: np.ndarray) -> np.ndarray:
    return sfft.fftn(values)


def to_physical(hat: np.ndarray) -> np.ndarray:
    return sfft.ifftn(hat)


def _check_same(f: Field, g: Field) -> None:
    if f.spec != g.spec:
        raise DomainError("fields live on different grids")


def apply_operator(f: Field, op: str, *, j: int | None = None, t: float | None = None):
    """Spectral operator on a field.

    ``op`` is one of ``grad_x`` (returns a list of d fields, or the j-th
    component when ``j`` is given), ``d_y``, ``laplacian``, ``laplacian_x``,
    ``free_propagator`` (requires ``t``).
    """
    spec = f.spec
    hat = to_spectral(f.values)
    if op == "grad_x":
        comps = range(spec.d) if j is None else [j]
        out = [Field(spec, to_physical(1j * spec.kx_axes[i] * hat)) for i in comps]
        return out if j is None else out[0]
    if op == "d_y":
        return Field(spec, to_physical(1j * spec.ky_axis * hat))
    if op == "laplacian":
        return Field(spec, to_physical(-spec.k2 * hat))
    if op == "laplacian_x":
        return Field(spec, to_physical(-spec.k2x[..., None] * hat))
    if op == "free_propagator":
        if t is None or not math.isfinite(t):
            raise DomainError("free_propagator needs a finite time t")
        return Field(spec, to_physical(np.exp(-1j * t * spec.k2) * hat))
    raise DomainError(f"unknown operator {op!r}")


def integrate(f: Field, r: float = 2.0, mode: str = "lr_norm_pow", g: Field | None = None):
    """Rectangle-rule quadrature on the box.

    ``lr_norm_pow`` returns the r-th power of the L^r norm, ``inner`` the
    sesquilinear pairing with ``g``.
    """
    spec = f.spec
    if mode == "inner":
        if g is None:
            raise DomainError("inner mode needs a second field")
        _check_same(f, g)
        return complex(spec.weight * np.vdot(g.values, f.values))
    if mode != "lr_norm_pow":
        raise DomainError(f"unknown integration mode {mode!r}")
    if r < 1:
        raise DomainError("exponent r must be >= 1")
    a = np.abs(f.values)
    if r == 2:
        return float(spec.weight * np.vdot(a, a).real)
    return float(spec.weight * np.sum(a**r))


def spectral_norm2(spec: GridSpec, hat: np.ndarray, mult=None) -> float:
    """Quadrature-consistent mode sum (weight/N) * sum(mult * |hat|^2)."""
    p = np.abs(hat) ** 2
    if mult is not None:
        p = mult * p
    return float(spec.weight / spec.size * np.sum(p))


# -- resampling ---------------------------------------------------------------

def _interp_matrix(n: int, L: float, points: np.ndarray) -> np.ndarray:
    """Matrix that evaluates the trigonometric interpolant of n periodic samples."""
    m = sfft.fftfreq(n, d=1.0 / n)  # signed integer modes
    k = math.pi / L * m
    phase = np.exp(1j * np.outer(points + L, k)) / n
    nyq = n // 2
    # split the Nyquist mode symmetrically so real data stay real
    phase[:, nyq] = np.cos(math.pi / L * nyq * (points + L)) / n
    # images within half a cell of the edge keep their periodic value
    outside = np.abs(points) > L + 0.5 * (2.0 * L / n)
    phase[outside, :] = 0.0
    return phase


def resample_x(spec: GridSpec, values: np.ndarray, t: float) -> np.ndarray:
    """Evaluate ``u(t*x, y)`` on the same grid by Fourier interpolation.

    The leading d axes of ``values`` are the x axes; trailing axes (y) are
    carried along.  Samples whose image ``t*x`` falls outside the box are set
    to zero.
    """
    mat = _interp_matrix(spec.n_x, spec.L, t * spec.x)
    out = np.asarray(values)
    for axis in range(spec.d):
        hat = sfft.fft(out, axis=axis)
        out = np.moveaxis(np.tensordot(mat, hat, axes=([1], [axis])), 0, axis)
    if np.isrealobj(values):
        out = out.real
    return out


def mass_radius(spec: GridSpec, values: np.ndarray, fraction: float = 0.999999) -> float:
    """Smallest radius |x| <= r containing ``fraction`` of the mass."""
    dens = np.abs(values) ** 2
    if dens.ndim == spec.d + 1:
        dens = dens.sum(axis=-1)
    r = spec.radius.ravel()
    w = dens.ravel()
    total = w.sum()
    if total == 0:
        return 0.0
    order = np.argsort(r, kind="stable")
    cum = np.cumsum(w[order]) / total
    idx = int(np.searchsorted(cum, fraction))
    return float(r[order][min(idx, r.size - 1)])


def spectral_tail_fraction(spec: GridSpec, values: np.ndarray, cut: float = 2.0 / 3.0) -> float:
    """Fraction of L^2 power in x-modes above ``cut`` times the Nyquist wavenumber."""
    axes = tuple(range(spec.d))
    hat = sfft.fftn(values, axes=axes)
    p = np.abs(hat) ** 2
    if p.ndim == spec.d + 1:
        p = p.sum(axis=-1)
    kmax = math.pi / spec.h_x
    mask = np.zeros(spec.x_shape, dtype=bool)
    for j in range(spec.d):
        shape = [1] * spec.d
        shape[j] = spec.n_x
        mask = mask | (np.abs(spec.kx).reshape(shape) > cut * kmax)
    total = p.sum()
    return float(p[mask].sum() / total) if total > 0 else 0.0


@dataclass(frozen=True)
class Discretization:
    """Flat numerical view of a grid used by the functional kernels.

    The reduced (R^d-only) view has a single y sample of unit weight, so the
    same kernels evaluate the hatted functionals on x-only data.
    """

    spec: GridSpec
    reduced: bool = False

    @cached_property
    def shape(self) -> tuple[int, ...]:
        return self.spec.x_shape + ((1,) if self.reduced else (self.spec.n_y,))

    @cached_property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def weight(self) -> float:
        return self.spec.h_x**self.spec.d * (1.0 if self.reduced else self.spec.h_y)

    @cached_property
    def k2x(self) -> np.ndarray:
        return self.spec.k2x[..., None]

    @cached_property
    def k2y(self) -> np.ndarray:
        if self.reduced:
            return np.zeros((1,) * (self.spec.d + 1))
        return self.spec.k2y


def full_view(spec: GridSpec) -> Discretization:
    return Discretization(spec, False)


def reduced_view(spec: GridSpec) -> Discretization:
    return Discretization(spec, True)
