import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gliosim.core import DiffusionField, Grid
from gliosim.operator import apply, assemble, dump_coo, from_dense, one_norm, reaction


def dense_oracle(d, grid):
    """Loop-based assembly straight from the stencil definition."""
    nx, ny, nz = grid.dims
    n = grid.size
    a = np.zeros((n, n))
    D = d.reshape(nz, ny, nx)
    for k in range(nz):
        for j in range(ny):
            for i in range(nx):
                row = i + nx * (j + ny * k)
                if D[k, j, i] == 0:
                    continue
                c = D[k, j, i] / grid.h**2
                for di, dj, dk in [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]:
                    ii, jj, kk = i + di, j + dj, k + dk
                    if 0 <= ii < nx and 0 <= jj < ny and 0 <= kk < nz and D[kk, jj, ii] > 0:
                        a[row, ii + nx * (jj + ny * kk)] += c
                        a[row, row] -= c
    return a


def test_interior_and_corner_coefficients():
    grid = Grid(3, 3, 3, 2.0)
    A = assemble(DiffusionField(grid, np.full(grid.size, 0.8))).toarray()
    c = 0.8 / 4.0
    assert A[13, 13] == pytest.approx(-6 * c)  # centre voxel
    assert A[0, 0] == pytest.approx(-3 * c)  # corner
    assert A[1, 1] == pytest.approx(-4 * c)  # edge
    assert A[4, 4] == pytest.approx(-5 * c)  # face
    assert sorted(np.flatnonzero(A[13])) == [4, 10, 12, 13, 14, 16, 22]
    for col in (4, 10, 12, 14, 16, 22):
        assert A[13, col] == pytest.approx(c)


def test_two_dimensional_stencil():
    grid = Grid(3, 3, 1, 1.0)
    A = assemble(DiffusionField(grid, np.ones(grid.size))).toarray()
    assert A[4, 4] == -4.0
    assert A[0, 0] == -2.0
    assert np.count_nonzero(A[4]) == 5


def test_one_dimensional_example():
    grid = Grid(4, 1, 1, 1.0)
    A = assemble(DiffusionField(grid, np.ones(4))).toarray()
    np.testing.assert_array_equal(A, [[-1, 1, 0, 0], [1, -2, 1, 0], [0, 1, -2, 1], [0, 0, 1, -1]])


def test_single_point_grid_is_zero():
    grid = Grid(1, 1, 1, 1.0)
    A = assemble(DiffusionField(grid, [0.13]))
    assert A.dim == 1 and A.one_norm == 0.0
    assert A.toarray()[0, 0] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.floats(0.1, 5.0), st.integers(0, 2**32 - 1))
def test_assembly_matches_dense_oracle(nx, ny, nz, h, seed):
    rng = np.random.default_rng(seed)
    grid = Grid(nx, ny, nz, h)
    d = rng.choice([0.0, 0.013, 0.13, 1.7], size=grid.size)
    A = assemble(DiffusionField(grid, d))
    ref = dense_oracle(d, grid)
    np.testing.assert_allclose(A.toarray(), ref, rtol=1e-15, atol=0)
    np.testing.assert_allclose(A.toarray().sum(axis=1), 0.0, atol=1e-12 * max(1.0, np.abs(ref).max()))
    assert A.one_norm == pytest.approx(np.abs(ref).sum(axis=0).max(), rel=1e-15)
    assert one_norm(A) == A.one_norm
    assert np.max(np.diff(A.row_offsets)) <= 7
    u = rng.standard_normal(grid.size)
    np.testing.assert_allclose(apply(A, u), ref @ u, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_zero_diffusion_rows_are_empty():
    grid = Grid(3, 1, 1, 1.0)
    A = assemble(DiffusionField(grid, [0.1, 0.0, 0.1])).toarray()
    np.testing.assert_array_equal(A, np.zeros((3, 3)))


def test_uniform_d_conserves_sum():
    # symmetric when D is constant, so columns also sum to zero
    grid = Grid(4, 3, 2, 1.5)
    A = assemble(DiffusionField(grid, np.full(grid.size, 0.13))).toarray()
    np.testing.assert_allclose(A, A.T)
    np.testing.assert_allclose(A.sum(axis=0), 0.0, atol=1e-15)


def test_csr_layout():
    A = from_dense(np.array([[1.0, 0, 2], [0, 0, 0], [0, -3, 4]]))
    np.testing.assert_array_equal(A.row_offsets, [0, 2, 2, 4])
    np.testing.assert_array_equal(A.column_indices, [0, 2, 1, 2])
    np.testing.assert_array_equal(A.coefficients, [1, 2, -3, 4])
    assert A.one_norm == 6.0
    with pytest.raises(ValueError):
        from_dense(np.zeros((2, 3)))


def test_apply_checks_length():
    A = from_dense(np.eye(3))
    with pytest.raises(ValueError, match="length 2"):
        apply(A, np.ones(2))


def test_threaded_matvec_is_bitwise_serial(rng):
    grid = Grid(40, 40, 30, 1.0)
    A = assemble(DiffusionField(grid, rng.choice([0.0, 0.013, 0.13], size=grid.size)))
    u = rng.standard_normal(grid.size)
    assert np.array_equal(A.matvec(u, workers=4), A.matvec(u, workers=1))


def test_reaction():
    np.testing.assert_allclose(reaction([0.0, 0.5, 1.0, 2.0], 0.025), [0.0, 0.00625, 0.0, -0.05])


def test_dump_coo(tmp_path):
    A = from_dense(np.array([[0.0, 0.1], [-2.5, 0.0]]))
    dump_coo(A, tmp_path / "a.txt")
    assert (tmp_path / "a.txt").read_text() == "0 1 0.10000000000000001\n1 0 -2.5\n"


def test_assemble_grid_mismatch():
    with pytest.raises(ValueError):
        assemble(DiffusionField(Grid(2, 1, 1, 1.0), [1, 1]), Grid(3, 1, 1, 1.0))
