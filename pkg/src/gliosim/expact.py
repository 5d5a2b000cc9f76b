"""Action of exp(tA) and phi_1(tA) on a vector by scaling plus truncated Taylor series.

``exp(tA) b`` is computed as ``s`` successive applications of the degree-``m``
Taylor polynomial of ``exp((t/s) A)``.  The pair ``(s, m)`` minimises the
matvec count ``s*m`` subject to the forward truncation bound

    (|t| ||A||_1 / s)**(m+1) / (m+1)!  <=  tol

and the stage norm ``|t| ||A||_1 / s <= 2``; each stage stops early once two
consecutive terms are negligible.  No shift is applied, so vectors in the null space of ``A`` (constants, for a
Neumann operator) are returned unchanged to rounding.

``phi_1(tA) b`` uses the bordered operator ``[[A, eta*b], [0, 0]]``: the top
block of ``exp(t * bordered) e_{n+1}`` is ``t*eta*phi_1(tA) b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from gliosim.core import NumericalError
from gliosim.operator import SparseOperator

try:
    import numba
    from numba import prange
except ImportError:  # pragma: no cover
    numba = None
    prange = range
else:
    # skip the TBB probe; the rows of a matvec are independent so any layer is deterministic
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

M_MAX = 55
DEFAULT_TOL = 1e-8
# largest 1-norm of a single scaled stage
THETA_MAX = 2.0


@dataclass(frozen=True)
class ActionParams:
    s: int
    m: int
    tol: float


def truncation_bound(x: float, s: int, m: int) -> float:
    """``(x/s)**(m+1) / (m+1)!`` evaluated in log space."""
    if x == 0:
        return 0.0
    return math.exp((m + 1) * math.log(x / s) - math.lgamma(m + 2))


def select_params(norm_tA: float, tol: float = DEFAULT_TOL, m_max: int = M_MAX,
                  theta_max: float = THETA_MAX) -> ActionParams:
    """Cheapest ``(s, m)`` with ``(norm_tA/s)**(m+1)/(m+1)! <= tol`` and ``norm_tA/s <= theta_max``.

    The per-stage cap bounds cancellation in the Taylor sum: a stage of
    norm ``x`` can lose a factor of about ``exp(2x)`` to rounding.
    """
    if not norm_tA >= 0 or not math.isfinite(norm_tA):
        raise ValueError(f"norm must be finite and nonnegative, got {norm_tA}")
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    if norm_tA == 0:
        return ActionParams(1, 1, tol)
    best = None
    log_tol = math.log(tol)
    s_min = max(1, math.ceil(norm_tA / theta_max))
    for m in range(1, m_max + 1):
        # largest per-stage norm meeting the bound at this degree
        theta = math.exp((log_tol + math.lgamma(m + 2)) / (m + 1))
        s = max(s_min, math.ceil(norm_tA / theta))
        while truncation_bound(norm_tA, s, m) > tol:
            s += 1
        # ties go to the smaller degree (more stages, smaller per-stage norm)
        if best is None or s * m < best[0]:
            best = (s * m, s, m)
    return ActionParams(best[1], best[2], tol)


def _taylor_loop(indptr, indices, data, b, h, s, m, tol, measured):
    """Scaled Taylor iteration on raw CSR arrays; returns ``(result, finite)``.

    Kept to the numba subset so it compiles to a single loop nest.
    """
    n = b.shape[0]
    f = b.copy()
    term = np.empty(n)
    nxt = np.empty(n)
    for _ in range(s):
        c1 = 0.0
        for i in range(n):
            term[i] = f[i]
        for i in range(measured):
            c1 = max(c1, abs(term[i]))
        for k in range(1, m + 1):
            coef = h / k
            for i in prange(n):
                acc = 0.0
                for p in range(indptr[i], indptr[i + 1]):
                    acc += data[p] * term[indices[p]]
                nxt[i] = acc * coef
            c2 = 0.0
            fmax = 0.0
            for i in range(n):
                term[i] = nxt[i]
                f[i] += nxt[i]
            for i in range(measured):
                c2 = max(c2, abs(term[i]))
                fmax = max(fmax, abs(f[i]))
            if not np.isfinite(c2):
                return f, False
            if c1 + c2 <= tol * fmax:
                break
            c1 = c2
    return f, True


def _taylor_scipy(indptr, indices, data, b, h, s, m, tol, measured):
    """Same iteration with scipy matvecs; used when numba is unavailable."""
    n = b.shape[0]
    M = sp.csr_array((data, indices, indptr), shape=(n, n))
    sl = slice(0, measured)
    for _ in range(s):
        f = b.copy()
        c1 = float(np.max(np.abs(b[sl]), initial=0.0))
        for k in range(1, m + 1):
            b = M @ b
            b *= h / k
            f += b
            c2 = float(np.max(np.abs(b[sl]), initial=0.0))
            if not math.isfinite(c2):
                return f, False
            if c1 + c2 <= tol * float(np.max(np.abs(f[sl]), initial=0.0)):
                break
            c1 = c2
        b = f
    return b, True


if numba is not None:
    # rows are reduced independently, so both variants give bitwise equal results
    _taylor_serial = numba.njit(cache=True)(_taylor_loop)
    _taylor_parallel = numba.njit(cache=True, parallel=True)(_taylor_loop)
else:  # pragma: no cover - exercised only without numba
    _taylor_serial = _taylor_parallel = None

# Below this many rows a parallel region costs more than the matvec.
_PARALLEL_MIN_ROWS = 50_000


def _taylor_action(A: SparseOperator, b, t, tol: float, measured: int | None = None,
                   workers: int = 1) -> np.ndarray:
    measured = b.shape[0] if measured is None else measured
    params = select_params(abs(t) * A.one_norm, tol)
    m = A.matrix
    args = (m.indptr.astype(np.int64), m.indices.astype(np.int64), m.data.astype(float), b, t / params.s, params.s, params.m, params.tol, measured)
    if _taylor_serial is None:
        y, finite = _taylor_scipy(*args)
    elif workers > 1 and b.shape[0] >= _PARALLEL_MIN_ROWS:
        numba.set_num_threads(min(int(workers), numba.config.NUMBA_NUM_THREADS))
        y, finite = _taylor_parallel(*args)
    else:
        y, finite = _taylor_serial(*args)
    if not finite or not np.all(np.isfinite(y)):
        raise NumericalError("overflow in exponential action; use a smaller time step")
    return y


def _check_inputs(t: float, A: SparseOperator, b) -> np.ndarray:
    b = np.array(b, dtype=float, copy=True).reshape(-1)
    if b.size != A.dim:
        raise ValueError(f"vector of length {b.size} does not match operator dimension {A.dim}")
    if not math.isfinite(t):
        raise NumericalError(f"non-finite time {t}")
    if not np.all(np.isfinite(b)):
        raise NumericalError("non-finite entries in input vector")
    return b


def expmv(t: float, A: SparseOperator, b, tol: float = DEFAULT_TOL, workers: int = 1) -> np.ndarray:
    """Return ``exp(t A) b``."""
    b = _check_inputs(t, A, b)
    if t == 0 or A.one_norm == 0:
        return b
    return _taylor_action(A, b, t, tol, workers=workers)


def bordered(A: SparseOperator, c: np.ndarray) -> SparseOperator:
    """The (n+1)x(n+1) operator ``[[A, c], [0, 0]]``."""
    m = A.matrix
    n = A.dim
    # append column n at the end of every row; indices stay sorted
    indices = np.insert(m.indices.astype(np.int64), m.indptr[1:], n)
    data = np.insert(m.data, m.indptr[1:], c)
    indptr = np.concatenate([m.indptr.astype(np.int64) + np.arange(n + 1), [m.nnz + n]])
    return SparseOperator(sp.csr_array((data, indices, indptr), shape=(n + 1, n + 1)))


def phi1v(t: float, A: SparseOperator, b, tol: float = DEFAULT_TOL, workers: int = 1) -> np.ndarray:
    """Return ``phi_1(t A) b`` where ``phi_1(z) = (exp(z) - 1) / z``."""
    b = _check_inputs(t, A, b)
    if t == 0 or A.one_norm == 0:
        return b
    n = A.dim
    b_norm = float(np.abs(b).sum())
    if b_norm == 0:
        return b
    # power of two keeps the scaling exact and the border column within ||A||_1
    eta = 2.0 ** math.floor(math.log2(A.one_norm / b_norm))
    aug = bordered(A, eta * b)
    e = np.zeros(n + 1)
    e[n] = 1.0
    # The truncation bound is relative to |e_{n+1}| = 1 while the wanted block
    # has size about |t| eta ||b||_1, so tighten the tolerance when that is small.
    tol_top = max(tol * min(1.0, abs(t) * eta * b_norm), np.finfo(float).tiny)
    y = _taylor_action(aug, e, t, tol_top, measured=n, workers=workers)
    return y[:n] / (t * eta)


def phi_recurrence(z: float, p: int) -> float:
    """Scalar ``phi_{p+1}(z)`` from ``phi_0 = exp(z)`` via ``phi_{k+1} = (phi_k - 1/k!) / z``."""
    if z == 0:
        raise ZeroDivisionError("recurrence is singular at z = 0; the limit is 1/(p+1)!")
    if p < 0:
        raise ValueError("p must be >= 0")
    phi = math.exp(z)
    for k in range(p + 1):
        phi = (phi - 1.0 / math.factorial(k)) / z
    return phi
