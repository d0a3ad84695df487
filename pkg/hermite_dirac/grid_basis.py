"""One-dimensional grids and the cubic Hermite spline basis.

Every interior node x_alpha (alpha = 1..N-1) carries two splines: s^0 interpolates
the value and s^1 the first derivative. The boundary nodes x_0 and x_N carry no
splines, so every expansion vanishes there together with its derivative.
Basis function (alpha, mu) has global index 2*(alpha-1) + mu.

A grid built with left_slope=True also keeps the slope spline s^1_0 of x_0 as
index 0 (shifting all others by one). Expansions then still vanish at x_0 but
their slope there is free, which is what a radial coordinate on the symmetry
axis needs.

Matrix elements are integrated element by element with Gauss-Legendre rules.
Tensor-product assembly (2D, 3D potentials) goes through TensorAssembler, which
contracts one axis at a time and scatters with a plan computed once per grid.
"""
import hashlib
import logging
from dataclasses import dataclass

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from hermite_dirac.utils.errors import GridError

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 8
HALF_BANDWIDTH = 3
NEWTON_MAX_ITER = 100

# Power-series coefficients in t = (x - x_left)/h of the four shape functions of
# an element: value at the left node, slope at the left node (times h), value at
# the right node, slope at the right node (times h).
_SHAPE_COEFFS = np.array([
    [1.0, 0.0, -3.0, 2.0],
    [0.0, 1.0, -2.0, 1.0],
    [0.0, 0.0, 3.0, -2.0],
    [0.0, 0.0, -1.0, 1.0],
])
_SLOPE_SHAPES = np.array([False, True, False, True])


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Strictly increasing nodes x_0 < ... < x_N in atomic units.

    Args:
        nodes: node coordinates, N >= 3 intervals
        kind: 'uniform' or 'semilog'
        eta, xi: parameters of zeta = eta*x + xi*ln(x), only for kind='semilog'
        left_slope: keep the slope spline of x_0
    """
    nodes: np.ndarray
    kind: str = "uniform"
    eta: float | None = None
    xi: float | None = None
    left_slope: bool = False

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 4:
            raise GridError("a grid needs at least 3 intervals")
        if not np.all(np.isfinite(nodes)):
            raise GridError("grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0.0):
            raise GridError("grid nodes must be strictly increasing")
        if self.kind not in ("uniform", "semilog"):
            raise GridError(f"unknown grid kind '{self.kind}'")
        if self.kind == "semilog" and nodes[0] <= 0.0:
            raise GridError("a semi-logarithmic grid must start at x_0 > 0")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_intervals(self):
        return self.nodes.size - 1

    @property
    def offset(self):
        return int(self.left_slope)

    @property
    def n_basis(self):
        return 2 * (self.nodes.size - 2) + self.offset

    @property
    def steps(self):
        return np.diff(self.nodes)

    @property
    def a(self):
        return float(self.nodes[0])

    @property
    def b(self):
        return float(self.nodes[-1])

    @property
    def interior(self):
        return self.nodes[1:-1]

    def descriptor(self):
        """Compact identity of the grid used by checkpoints."""
        digest = hashlib.sha256(self.nodes.astype("<f8").tobytes()).hexdigest()[:16]
        return {"kind": self.kind, "intervals": int(self.n_intervals), "left_slope": self.left_slope,
                "digest": digest}


@dataclass(frozen=True)
class SplineId:
    """Spline s^mu_alpha: node index alpha in 1..N-1, kind mu in {0, 1}.

    (0, 1) is valid too on grids that keep the slope spline of x_0.
    """
    alpha: int
    mu: int

    @property
    def index(self):
        return 2 * (self.alpha - 1) + self.mu

    def position(self, grid):
        """Global index on the given grid."""
        self.check(grid)
        return self.index + grid.offset

    def check(self, grid):
        if self.mu not in (0, 1):
            raise GridError(f"spline kind must be 0 or 1, got {self.mu}")
        if self.alpha == 0 and self.mu == 1 and grid.left_slope:
            return
        if not 1 <= self.alpha <= grid.n_intervals - 1:
            raise GridError(f"node index {self.alpha} carries no spline (valid: 1..{grid.n_intervals - 1})")


@dataclass(frozen=True, eq=False)
class BandedRealMatrix:
    """Real n x n matrix stored by diagonals.

    bands[w + i - j, j] holds a[i, j] (the layout of scipy.linalg.solve_banded with
    l = u = w); entries with |i - j| > w are identically zero.
    """
    bands: np.ndarray

    @property
    def w(self):
        return (self.bands.shape[0] - 1) // 2

    @property
    def n(self):
        return self.bands.shape[1]

    @classmethod
    def from_sparse(cls, matrix, w=HALF_BANDWIDTH):
        coo = sp.coo_matrix(matrix)
        if coo.shape[0] != coo.shape[1]:
            raise GridError("banded matrices must be square")
        if coo.nnz and np.max(np.abs(coo.row - coo.col)) > w:
            raise GridError(f"matrix has entries outside half-bandwidth {w}")
        bands = np.zeros((2 * w + 1, coo.shape[0]))
        np.add.at(bands, (w + coo.row - coo.col, coo.col), coo.data)
        return cls(bands)

    def to_sparse(self):
        offsets = self.w - np.arange(2 * self.w + 1)
        return sp.dia_matrix((self.bands, offsets), shape=(self.n, self.n)).tocsr()

    def to_dense(self):
        return self.to_sparse().toarray()

    def transpose(self):
        return BandedRealMatrix.from_sparse(self.to_sparse().T, self.w)

    @property
    def T(self):
        return self.transpose()

    def is_symmetric(self):
        return bool(np.array_equal(self.to_dense(), self.to_dense().T))

    def solve(self, rhs):
        return solve_banded((self.w, self.w), self.bands, rhs)

    def cholesky(self):
        """Upper banded Cholesky factor; raises numpy.linalg.LinAlgError if not SPD."""
        return cholesky_banded(self.bands[: self.w + 1], lower=False)

    def cho_solve(self, factor, rhs):
        return cho_solve_banded((factor, False), rhs)


# === Grids ===

def make_uniform_grid(a, b, N, left_slope=False):
    """N+1 equidistant nodes on [a, b]."""
    if not (np.isfinite(a) and np.isfinite(b)):
        raise GridError("grid bounds must be finite")
    if int(N) != N or N < 3:
        raise GridError(f"a grid needs at least 3 intervals, got {N}")
    if not a < b:
        raise GridError(f"grid bounds must satisfy a < b, got [{a}, {b}]")
    return Grid1D(np.linspace(a, b, int(N) + 1), kind="uniform", left_slope=bool(left_slope))


def semilog_zeta(r, eta, xi):
    return eta * np.asarray(r) + xi * np.log(r)


def make_semilog_grid(r_min, r_max, N, eta, xi):
    """Nodes r_alpha such that zeta = eta*r + xi*ln(r) is equally spaced.

    The nodes are recovered from the zeta targets by Newton iteration in
    u = ln(r), safeguarded by bisection on the bracket [ln r_min, ln r_max].
    """
    if not 0.0 < r_min < r_max or not np.isfinite(r_max):
        raise GridError(f"semi-logarithmic grid needs 0 < r_min < r_max, got [{r_min}, {r_max}]")
    if eta < 0.0 or xi < 0.0 or (eta == 0.0 and xi == 0.0):
        raise GridError("semi-logarithmic parameters need eta, xi >= 0 and not both zero")
    if int(N) != N or N < 3:
        raise GridError(f"a grid needs at least 3 intervals, got {N}")
    N = int(N)

    zeta_lo, zeta_hi = semilog_zeta(r_min, eta, xi), semilog_zeta(r_max, eta, xi)
    targets = zeta_lo + (zeta_hi - zeta_lo) * np.arange(N + 1) / N

    if eta == 0.0:
        nodes = r_min * (r_max / r_min) ** (np.arange(N + 1) / N)
    elif xi == 0.0:
        nodes = targets / eta
    else:
        lo = np.full(N + 1, np.log(r_min))
        hi = np.full(N + 1, np.log(r_max))
        u = np.log(np.clip(targets / eta, r_min, r_max)) if eta > xi else np.log(r_min) + (targets - zeta_lo) / xi
        u = np.clip(u, lo, hi)
        tol = 1e-13 * np.maximum(np.abs(targets), 1.0)
        for _ in range(NEWTON_MAX_ITER):
            residual = eta * np.exp(u) + xi * u - targets
            if np.all(np.abs(residual) <= tol):
                break
            lo = np.where(residual < 0.0, u, lo)
            hi = np.where(residual > 0.0, u, hi)
            step = residual / (eta * np.exp(u) + xi)
            trial = u - step
            outside = (trial <= lo) | (trial >= hi)
            u = np.where(outside, 0.5 * (lo + hi), trial)
        else:
            residual = eta * np.exp(u) + xi * u - targets
            if np.any(np.abs(residual) > tol):
                raise GridError(f"semi-logarithmic node search did not converge in {NEWTON_MAX_ITER} iterations")
        nodes = np.exp(u)
    nodes[0], nodes[-1] = r_min, r_max
    return Grid1D(nodes, kind="semilog", eta=float(eta), xi=float(xi))


def snap_to_element_midpoint(grid, x):
    """Move x to the midpoint of the element containing it.

    Returns:
        tuple: (snapped coordinate, snap distance)
    """
    e = int(np.clip(np.searchsorted(grid.nodes, x, side="right") - 1, 0, grid.n_intervals - 1))
    mid = 0.5 * (grid.nodes[e] + grid.nodes[e + 1])
    return float(mid), float(abs(mid - x))


# === Splines ===

def local_shapes(t, h, deriv=0):
    """Shape functions of an element of width h at local coordinates t in [0, 1].

    Returns an array of shape t.shape + (4,) holding the deriv-th x-derivative of
    (left value, left slope, right value, right slope).
    """
    if deriv not in (0, 1, 2, 3):
        raise GridError(f"spline derivatives are available up to order 3, got {deriv}")
    t = np.asarray(t, dtype=float)
    h = np.asarray(h, dtype=float)
    coeffs = npoly.polyder(_SHAPE_COEFFS.T, m=deriv) if deriv else _SHAPE_COEFFS.T
    vals = np.moveaxis(npoly.polyval(t, coeffs, tensor=True), 0, -1)
    scale = np.where(_SLOPE_SHAPES, 1.0 - deriv, -float(deriv))
    return vals * h[..., None] ** scale


def element_dofs(grid):
    """Global index of each element's four local splines, -1 where dropped."""
    e = np.arange(grid.n_intervals)
    dofs = np.stack([2 * (e - 1), 2 * (e - 1) + 1, 2 * e, 2 * e + 1], axis=1) + grid.offset
    dofs[0, :2] = -1
    if grid.left_slope:
        dofs[0, 1] = 0
    dofs[-1, 2:] = -1
    return dofs


def _locate(grid, x):
    x = np.asarray(x, dtype=float)
    e = np.clip(np.searchsorted(grid.nodes, x, side="right") - 1, 0, grid.n_intervals - 1)
    inside = (x >= grid.a) & (x <= grid.b)
    t = (x - grid.nodes[e]) / grid.steps[e]
    return e, t, inside


def eval_spline(grid, sid, x, deriv=0):
    """Value of the deriv-th derivative of spline sid at x (0 outside its support)."""
    k = sid.position(grid)
    e, t, inside = _locate(grid, x)
    shapes = local_shapes(t, grid.steps[e], deriv)
    dofs = element_dofs(grid)[e]
    value = np.sum(np.where(dofs == k, shapes, 0.0), axis=-1)
    value = np.where(inside, value, 0.0)
    return float(value) if value.ndim == 0 else value


def collocation_matrix(grid, x, deriv=0):
    """Sparse matrix B with B[i, k] = d^deriv s_k / dx^deriv at x[i].

    Points outside [x_0, x_N] give empty rows.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    e, t, inside = _locate(grid, x)
    shapes = local_shapes(t, grid.steps[e], deriv)
    dofs = element_dofs(grid)[e]
    rows = np.repeat(np.arange(x.size), 4).reshape(x.size, 4)
    keep = (dofs >= 0) & inside[:, None]
    return sp.csr_matrix((shapes[keep], (rows[keep], dofs[keep])), shape=(x.size, grid.n_basis))


def evaluate(grid, coefficients, x, deriv=0):
    """Evaluate the expansion sum_k c_k s_k (or its derivative) at x."""
    return collocation_matrix(grid, x, deriv) @ np.asarray(coefficients)


def interpolate(grid, values, derivs, edge_slope=0.0):
    """Hermite interpolation coefficients from nodal values and slopes.

    Args:
        values: f(x_alpha) at the interior nodes alpha = 1..N-1
        derivs: f'(x_alpha) at the same nodes
        edge_slope: f'(x_0), used only when the grid keeps the slope spline of x_0

    Returns:
        numpy.ndarray: coefficient of (alpha, 0) is f(x_alpha), of (alpha, 1) is f'(x_alpha)
    """
    values = np.asarray(values)
    derivs = np.asarray(derivs)
    expected = grid.n_intervals - 1
    if values.shape != (expected,) or derivs.shape != (expected,):
        raise GridError(f"interpolation needs {expected} nodal values and slopes, "
                        f"got {values.shape} and {derivs.shape}")
    coeffs = np.stack([values, derivs], axis=1).reshape(-1)
    if grid.left_slope:
        coeffs = np.concatenate([np.atleast_1d(np.asarray(edge_slope, dtype=coeffs.dtype)), coeffs])
    return coeffs


def interpolate_function(grid, f, df):
    """Interpolation coefficients of a callable f with derivative df."""
    x = grid.interior
    return interpolate(grid, f(x), df(x), edge_slope=df(np.array([grid.a]))[0] if grid.left_slope else 0.0)


# === Quadrature and assembly ===

@dataclass(frozen=True, eq=False)
class ElementQuadrature:
    """Gauss points of a grid, ordered element by element.

    offsets[e] is the position of the first point of element e; elements split
    at a breakpoint simply own more points.
    """
    points: np.ndarray
    weights: np.ndarray
    offsets: np.ndarray
    values: np.ndarray
    slopes: np.ndarray


def element_quadrature(grid, order=DEFAULT_ORDER, breakpoints=()):
    """Gauss-Legendre rule of the given order on every element.

    An element containing a breakpoint in its interior is split there and each
    piece gets its own rule, so integrands with a kink at the breakpoint are
    still integrated accurately.
    """
    if order < 1:
        raise GridError(f"quadrature order must be positive, got {order}")
    xg, wg = leggauss(order)
    t_ref, w_ref = 0.5 * (xg + 1.0), 0.5 * wg

    cuts = [grid.nodes]
    bp = np.asarray(breakpoints, dtype=float).ravel()
    if bp.size:
        bp = bp[(bp > grid.a) & (bp < grid.b)]
        e = np.clip(np.searchsorted(grid.nodes, bp, side="right") - 1, 0, grid.n_intervals - 1)
        gap = np.minimum(bp - grid.nodes[e], grid.nodes[e + 1] - bp)
        cuts.append(bp[gap > 1e-12 * grid.steps[e]])
    cuts = np.unique(np.concatenate(cuts))

    lo, hi = cuts[:-1], cuts[1:]
    points = (lo[:, None] + (hi - lo)[:, None] * t_ref[None, :]).ravel()
    weights = ((hi - lo)[:, None] * w_ref[None, :]).ravel()
    elem = np.repeat(np.searchsorted(grid.nodes, lo, side="right") - 1, order)
    offsets = np.searchsorted(elem, np.arange(grid.n_intervals))

    h = grid.steps[elem]
    t = (points - grid.nodes[elem]) / h
    return ElementQuadrature(points, weights, offsets,
                             local_shapes(t, h, 0), local_shapes(t, h, 1))


class TensorAssembler:
    """Assemble W[(a...), (b...)] = integral of prod_k s_{a_k} w prod_k s_{b_k}.

    The integrand w is sampled on the tensor product of per-axis element
    quadratures. The contraction runs axis by axis (sum factorization); the
    scatter into CSR storage uses a plan that depends only on the grids.
    Basis ordering is C-order over the axes (last axis fastest).
    """

    def __init__(self, grids):
        self.grids = tuple(grids)
        self.shape = tuple(g.n_basis for g in self.grids)
        self.size = int(np.prod(self.shape))
        d = len(self.grids)

        a_of_pair = np.repeat(np.arange(4), 4)
        b_of_pair = np.tile(np.arange(4), 4)
        rows = np.zeros((1,) * d + (1,), dtype=np.int64)
        cols = np.zeros_like(rows)
        valid = np.ones((1,) * d + (1,), dtype=bool)
        for k, grid in enumerate(self.grids):
            dofs = element_dofs(grid)
            bshape = [1] * d + [16]
            bshape[k] = grid.n_intervals
            rk = dofs[:, a_of_pair].reshape(bshape)
            ck = dofs[:, b_of_pair].reshape(bshape)
            n_k = grid.n_basis
            rows = (rows[..., :, None] * n_k + rk[..., None, :]).reshape(*np.broadcast_shapes(rows.shape[:-1], rk.shape[:-1]), -1)
            cols = (cols[..., :, None] * n_k + ck[..., None, :]).reshape(*np.broadcast_shapes(cols.shape[:-1], ck.shape[:-1]), -1)
            valid = (valid[..., :, None] & ((rk >= 0) & (ck >= 0))[..., None, :]).reshape(*np.broadcast_shapes(valid.shape[:-1], rk.shape[:-1]), -1)

        valid = valid.ravel()
        keys = rows.ravel()[valid] * self.size + cols.ravel()[valid]
        del rows, cols
        unique, self._inverse = np.unique(keys, return_inverse=True)
        self._valid = valid
        self._nnz = unique.size
        row_u = unique // self.size
        self._indices = (unique % self.size).astype(np.int64)
        self._indptr = np.concatenate([[0], np.cumsum(np.bincount(row_u, minlength=self.size))])

    def quadratures(self, order=DEFAULT_ORDER, breakpoints=None):
        breakpoints = breakpoints or [()] * len(self.grids)
        return [element_quadrature(g, order, bp) for g, bp in zip(self.grids, breakpoints)]

    def assemble(self, values, quads, kinds=None, chunk=64):
        """Scatter the element integrals of the sampled weight into a CSR matrix.

        Args:
            values: weight sampled on the tensor quadrature, shape (M_0, ..., M_{d-1})
            quads: per-axis ElementQuadrature
            kinds: per-axis 'vv' (s_a s_b) or 'vd' (s_a s_b'), default all 'vv'
            chunk: number of first-axis elements contracted at once
        """
        d = len(self.grids)
        kinds = kinds or ["vv"] * d
        values = np.asarray(values, dtype=float)
        expected = tuple(q.points.size for q in quads)
        if values.shape != expected:
            raise GridError(f"weight sampled on shape {values.shape}, quadrature has {expected}")
        if not np.all(np.isfinite(values)):
            raise GridError("weight is not finite at a quadrature point")

        factors = []
        for q, kind in zip(quads, kinds):
            right = q.slopes if kind == "vd" else q.values
            factors.append((q.weights[:, None, None] * q.values[:, :, None] * right[:, None, :]).reshape(-1, 16))

        out = values[..., None]
        for k in reversed(range(1, d)):
            out = self._contract(out, factors[k], quads[k].offsets, k)

        # first axis element by element in chunks to bound memory
        q0 = quads[0]
        n_el = self.grids[0].n_intervals
        bounds = np.append(q0.offsets, q0.points.size)
        pieces = []
        for start in range(0, n_el, chunk):
            stop = min(start + chunk, n_el)
            sl = slice(bounds[start], bounds[stop])
            pieces.append(self._contract(out[sl], factors[0][sl], q0.offsets[start:stop] - bounds[start], 0))
        out = np.concatenate(pieces, axis=0)

        data = np.bincount(self._inverse, weights=out.ravel()[self._valid], minlength=self._nnz)
        return sp.csr_matrix((data, self._indices, self._indptr), shape=(self.size, self.size))

    @staticmethod
    def _contract(out, factor, offsets, axis):
        d = out.ndim - 1
        bshape = [1] * d + [16, 1]
        bshape[axis] = factor.shape[0]
        prod = out[..., None, :] * factor.reshape(bshape)
        prod = prod.reshape(out.shape[:-1] + (16 * out.shape[-1],))
        return np.add.reduceat(prod, offsets, axis=axis)


def _assemble_1d(grid, weight, order, breakpoints, kind):
    quad = element_quadrature(grid, order, breakpoints)
    if weight is None:
        values = np.ones_like(quad.points)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            values = np.broadcast_to(np.asarray(weight(quad.points), dtype=float), quad.points.shape)
    if not np.all(np.isfinite(values)):
        raise GridError("weight is not finite at a quadrature point")
    return TensorAssembler([grid]).assemble(values, [quad], kinds=[kind])


def assemble_overlap(grid, order=DEFAULT_ORDER):
    """S_kj = integral of s_k s_j; symmetric positive definite."""
    a = _assemble_1d(grid, None, order, (), "vv")
    return BandedRealMatrix.from_sparse(0.5 * (a + a.T))


def assemble_first_derivative(grid, order=DEFAULT_ORDER):
    """D_kj = integral of s_k s_j'.

    Boundary terms of the integration by parts vanish for this basis, so D is
    stored exactly antisymmetric.
    """
    a = _assemble_1d(grid, None, order, (), "vd")
    return BandedRealMatrix.from_sparse(0.5 * (a - a.T))


def assemble_weighted(grid, w, order=DEFAULT_ORDER, breakpoints=()):
    """W_kj = integral of s_k w s_j with a Gauss rule per element (split at breakpoints)."""
    a = _assemble_1d(grid, w, order, breakpoints, "vv")
    return BandedRealMatrix.from_sparse(0.5 * (a + a.T))
