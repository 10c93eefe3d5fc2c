import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import sparse

from opdomain.core import (
    DENSE_LIMIT,
    AntidiagonalBlockGen,
    DiagonalSpec,
    OperatorSpec,
    PairingSpec,
    ProductGen,
    SumGen,
    TableGen,
    Window,
    adjoint,
    exact_product_window,
    hermitian_defect,
    make_family,
    section,
    spot_check,
    truncate,
    truncate_sparse,
)
from opdomain.errors import EvaluationError, ExactnessError, PreconditionError


def test_window_bounds():
    w = Window.leading(4)
    assert w.size == 4
    assert w.bounds == (1, 4)
    np.testing.assert_array_equal(w.indices(), [1, 2, 3, 4])
    for lo, hi in ((0, 3), (5, 4)):
        with pytest.raises(PreconditionError):
            Window(lo, hi)
    with pytest.raises(PreconditionError):
        Window(1, 4, pad=-1)


def test_jacobi_section(jacobi_k):
    expected = np.array([
        [0, 1, 0, 0],
        [1, 0, 2, 0],
        [0, 2, 0, 3],
        [0, 0, 3, 0],
    ])
    np.testing.assert_array_equal(truncate(jacobi_k, Window.leading(4)).real, expected)
    assert sparse.issparse(section(jacobi_k, (1, 4), (1, 4)))
    assert jacobi_k.bandwidth == 1


def test_section_of_an_offset_window(jacobi_k):
    block = truncate_sparse(jacobi_k, Window(10, 12)).toarray()
    np.testing.assert_array_equal(block.real, [[0, 10, 0], [10, 0, 11], [0, 11, 0]])


def test_table_has_zero_tail():
    gen = TableGen.from_entries([(1, 2, 5.0), (3, 1, 2j)])
    spec = OperatorSpec(gen)
    assert spec(1, 2) == 5
    assert spec(3, 1) == 2j
    assert spec(10, 10) == 0
    assert spec.bandwidth == 2


def test_unknown_family_and_bad_parameters():
    with pytest.raises(PreconditionError):
        make_family('nope')
    with pytest.raises(PreconditionError):
        make_family('jacobi', bogus=1)
    with pytest.raises(PreconditionError):
        OperatorSpec.family('shift', weight='x')


def test_expression_variables_are_checked():
    with pytest.raises(PreconditionError):
        OperatorSpec.from_expression('k + x')


def test_evaluation_error_names_the_entry():
    spec = OperatorSpec.from_expression('1/(k-l)')
    with pytest.raises(EvaluationError) as err:
        spec.values(np.array([1, 2]), np.array([2, 2]))
    assert err.value.index == (2, 2)


def test_non_finite_entry_is_reported():
    spec = OperatorSpec.from_expression('exp(k)')
    with pytest.raises(EvaluationError) as err:
        spec.values(np.array([1000]), np.array([1]))
    assert err.value.index == (1000, 1)


def test_dense_limit():
    spec = OperatorSpec.from_expression('1/(k+l)')
    assert not spec.banded
    with pytest.raises(PreconditionError):
        section(spec, (1, DENSE_LIMIT + 1), (1, 2))


def test_exact_product_window_matches_a_large_section(jacobi_k):
    w = Window(5, 10)
    exact = exact_product_window(jacobi_k, jacobi_k, w)
    big = truncate(jacobi_k, Window.leading(20))
    np.testing.assert_allclose(exact, (big @ big)[4:10, 4:10])


def test_exact_product_needs_a_banded_factor():
    spec = OperatorSpec.from_expression('1/(k+l)')
    with pytest.raises(ExactnessError):
        exact_product_window(spec, spec, Window.leading(4))
    with pytest.raises(ExactnessError):
        ProductGen((spec, spec))


def test_product_and_sum_generators(jacobi_k, free_jacobi):
    product = OperatorSpec(ProductGen((jacobi_k, free_jacobi)))
    assert product.bandwidth == 2
    big_a = truncate(jacobi_k, Window.leading(30))
    big_b = truncate(free_jacobi, Window.leading(30))
    np.testing.assert_allclose(truncate(product, Window(3, 12)), (big_a @ big_b)[2:12, 2:12])

    total = OperatorSpec(SumGen((jacobi_k, free_jacobi)))
    np.testing.assert_allclose(truncate(total, Window.leading(6)),
                               truncate(jacobi_k, Window.leading(6)) + truncate(free_jacobi, Window.leading(6)))


def test_adjoint_conjugates_and_transposes():
    spec = OperatorSpec.from_expression('k + i*l')
    assert adjoint(spec)(2, 3) == 3 - 2j


def test_hermitian_defect(jacobi_k):
    assert hermitian_defect(truncate(jacobi_k, Window.leading(8))) == 0.0
    assert hermitian_defect(np.array([[0, 1], [0, 0]])) == 1.0


def test_spot_check_finds_declared_structure_violations(jacobi_k):
    assert spot_check(jacobi_k, Window.leading(64)) == []
    wide = OperatorSpec.from_expression('1', bandwidth=1)
    assert any('bandwidth' in msg for msg in spot_check(wide, Window.leading(64)))
    above = OperatorSpec(TableGen.from_entries([(j, j + 5, 1.0) for j in range(1, 300)]), bandwidth=1)
    below = OperatorSpec(TableGen.from_entries([(j + 5, j, 1.0) for j in range(1, 300)]), bandwidth=1)
    for spec in (above, below):
        assert any('outside declared bandwidth' in msg for msg in spot_check(spec, Window.leading(64)))
    skew = OperatorSpec.from_expression('k-l', symmetry='hermitian')
    assert any('hermitian' in msg for msg in spot_check(skew, Window.leading(64)))


def test_diagonal_specs():
    np.testing.assert_array_equal(DiagonalSpec.from_expression('k', 2).values([1, 2, 3, 4]), [1, 1, 2, 2])
    np.testing.assert_array_equal(DiagonalSpec.from_values([3, 1]).values([1, 2, 3]), [3, 1, 0])
    with pytest.raises(PreconditionError):
        DiagonalSpec.from_expression('i*k').values([1])
    op = DiagonalSpec.from_expression('k^2').as_operator()
    np.testing.assert_array_equal(np.diag(truncate(op, Window.leading(3))).real, [1, 4, 9])


def test_antidiagonal_block_pairing():
    pair = PairingSpec.involution(AntidiagonalBlockGen((2,), (1,)), s_g=1.0)
    assert pair.p == 1
    h = truncate(pair.h_spec, Window.leading(4)).real
    np.testing.assert_array_equal(h, [[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])


def test_identity_pairing():
    pair = PairingSpec.identity()
    np.testing.assert_array_equal(truncate(pair.g_spec, Window.leading(3)), np.eye(3))
    assert pair.s_g == 1.0


@settings(max_examples=40, deadline=None)
@given(
    sizes=st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=3),
    signs=st.lists(st.sampled_from([1, -1]), min_size=1, max_size=2),
)
def test_antidiagonal_blocks_square_to_identity(sizes, signs):
    cycle = len(sizes) * len(signs) // math.gcd(len(sizes), len(signs))
    period = sum(sizes[j % len(sizes)] for j in range(cycle))
    h = truncate(OperatorSpec(AntidiagonalBlockGen(tuple(sizes), tuple(signs))), Window.leading(2 * period))
    np.testing.assert_array_equal(h @ h, np.eye(2 * period))
    np.testing.assert_array_equal(h, h.conj().T)
