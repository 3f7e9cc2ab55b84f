"""Uniform periodic grid on the unit torus with mimetic difference operators.

The cell Y = [0,1)^3 is discretized by n voxels per axis.  Scalar degrees
of freedom sit at voxel centers ((i+1/2)h with h = 1/n); vector fields
carry one component per link between adjacent centers (component d of a
vector field at index i lives on the link from center i to center i+e_d,
i.e. at the midpoint, Yee fashion).  Curls of link fields live on the
plaquettes spanned by two links.

With this staggering the operators below satisfy, exactly in floating
point (all stencil weights are the integer n up to sign):

* ``curl @ grad == 0``            (plaquette circulation of a gradient)
* ``div @ curl.T == 0``           (the face-to-link curl is ``curl.T``)
* ``<grad U, V> == -<U, div V>``  (``div = -grad.T``, uniform weights)

Arrays are indexed ``[ix, iy, iz]`` and flattened in C order; vector
fields are ``(3, n, n, n)`` flattened component-major to length 3*n^3.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

AXES = (0, 1, 2)


@dataclass(frozen=True)
class PeriodicGrid:
    """n^3 torus grid; nodes at voxel centers, spacing h = 1/n."""

    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"grid size n must be >= 2, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_nodes(self) -> int:
        return self.n**3

    @property
    def num_edges(self) -> int:
        return 3 * self.n**3

    def node_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Voxel-center coordinates, each shaped (n, n, n)."""
        c = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(c, c, c, indexing="ij")

    def scalar_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    def vector_shape(self) -> tuple[int, int, int, int]:
        return (3, self.n, self.n, self.n)


def _shift(n: int) -> sp.csr_matrix:
    """Circulant forward shift: (S u)[i] = u[i+1 mod n]."""
    data = np.ones(n)
    rows = np.arange(n)
    cols = (rows + 1) % n
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def _ddx(grid: PeriodicGrid, axis: int) -> sp.csr_matrix:
    """Forward difference along one axis, acting on flattened scalars."""
    n = grid.n
    D1 = (_shift(n) - sp.identity(n, format="csr")) * float(n)
    eye = sp.identity(n, format="csr")
    mats = [eye, eye, eye]
    mats[axis] = D1
    return sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")


def build_grad(grid: PeriodicGrid) -> sp.csr_matrix:
    """Nodes -> links gradient, shape (3 n^3, n^3)."""
    return sp.vstack([_ddx(grid, d) for d in AXES], format="csr")


def build_div(grid: PeriodicGrid) -> sp.csr_matrix:
    """Links -> nodes divergence, the exact negative adjoint of grad.

    Backward differences: ``div = -grad.T`` so that
    ``<grad U, V> = -<U, div V>`` holds to machine precision under the
    uniform h^3 quadrature.
    """
    return (-build_grad(grid).T).tocsr()


def build_curl(grid: PeriodicGrid) -> sp.csr_matrix:
    """Links -> plaquettes curl, shape (3 n^3, 3 n^3).

    Row block d is the d-component (curl u)_d = D_{d+1} u_{d+2} - D_{d+2} u_{d+1}
    (cyclic), i.e. the circulation around the plaquette based at the node
    and spanned by axes d+1, d+2, divided by h^2.  The adjoint ``curl.T``
    is the plaquette-to-link curl of the dual complex; pairing invariance
    ``<curl u, v> = <u, curl.T v>`` is exact.
    """
    D = [_ddx(grid, d) for d in AXES]
    Z = sp.csr_matrix((grid.num_nodes, grid.num_nodes))
    rows = [
        sp.hstack([Z, -D[2], D[1]]),
        sp.hstack([D[2], Z, -D[0]]),
        sp.hstack([-D[1], D[0], Z]),
    ]
    return sp.vstack(rows, format="csr")


def build_face_div(grid: PeriodicGrid) -> sp.csr_matrix:
    """Plaquettes -> cells divergence (forward), shape (n^3, 3 n^3).

    Satisfies ``build_face_div(g) @ build_curl(g) == 0`` exactly; used for
    divergence checks of current-type fields that live on plaquettes.
    """
    return sp.hstack([_ddx(grid, d) for d in AXES], format="csr")


def integrate(grid: PeriodicGrid, field: np.ndarray):
    """Midpoint quadrature of a scalar or vector field over the torus.

    Scalars (n^3 values) give a scalar; vector fields (3 n^3 values, or
    shaped (3, n, n, n)) give the componentwise 3-vector integral.  Exact
    for constants, spectrally accurate for smooth periodic fields.
    """
    w = grid.h**3
    a = np.asarray(field)
    if a.size == grid.num_nodes:
        return w * a.sum()
    if a.size == grid.num_edges:
        return w * a.reshape(3, -1).sum(axis=1)
    raise ValueError(
        f"field has {a.size} entries; expected {grid.num_nodes} (scalar) "
        f"or {grid.num_edges} (vector) for n={grid.n}"
    )


def inner(grid: PeriodicGrid, a: np.ndarray, b: np.ndarray) -> complex:
    """L2 inner product  h^3 * sum(conj(a) b) for same-layout fields."""
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise ValueError("field size mismatch")
    return grid.h**3 * np.vdot(a, b)


def constant_field(grid: PeriodicGrid, vec, dtype=np.float64) -> np.ndarray:
    """Flat link field equal to the constant vector ``vec`` everywhere."""
    out = np.empty((3, grid.num_nodes), dtype=dtype)
    for d in AXES:
        out[d] = vec[d]
    return out.ravel()


@dataclass
class SparseOperator:
    """A sparse matrix with its advertised structure.

    Thin wrapper used where the operator is handed across module
    boundaries; ``matrix`` is CSR.  ``check_symmetry`` samples random
    vectors rather than materializing A - A^T.
    """

    matrix: sp.csr_matrix
    symmetric: bool = False
    definiteness: str = "indefinite"  # {"indefinite","psd","spd"}
    _rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0), repr=False)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ x

    def check_symmetry(self, trials: int = 8, rtol: float = 1e-12) -> bool:
        if self.matrix.shape[0] != self.matrix.shape[1]:
            return False
        m = self.matrix.shape[0]
        scale = abs(self.matrix).max() or 1.0
        for _ in range(trials):
            x = self._rng.standard_normal(m)
            y = self._rng.standard_normal(m)
            lhs = np.dot(self.matrix @ x, y)
            rhs = np.dot(x, self.matrix @ y)
            if abs(lhs - rhs) > rtol * scale * np.linalg.norm(x) * np.linalg.norm(y):
                return False
        return True
