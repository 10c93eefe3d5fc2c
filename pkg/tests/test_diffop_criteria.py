import numpy as np
import pytest

from opdomain.diffop_criteria import (
    Axis,
    ExprMatrix,
    GridSpec,
    PolyMatrix,
    SampledMatFunc,
    assemble_blocks,
    certify_formally_normal,
    certify_graph_norm_domain,
    check_afnorm,
    check_holder,
    check_poly_domination,
    check_QI,
    check_QL,
    check_QQ,
    holder_estimates,
    monomial_name,
)
from opdomain.errors import PreconditionError
from opdomain.report import Verdict

NILPOTENT = [[0, 1], [0, 0]]


@pytest.fixture
def plane():
    return GridSpec((Axis(-5.0, 5.0, 21), Axis(-5.0, 5.0, 21)))


@pytest.fixture
def line():
    return GridSpec((Axis(-5.0, 5.0, 21),))


@pytest.mark.parametrize('exponents, name', [
    ((0, 0), '1'),
    ((1, 0), 'x1'),
    ((2, 0, 1), 'x1^2*x3'),
])
def test_monomial_name(exponents, name):
    assert monomial_name(exponents) == name


def test_polynomial_expansion_and_partials():
    p = PolyMatrix.from_expressions('x1^2 + 2*x2', 2)
    assert set(p.terms) == {(2, 0), (0, 1)}
    assert p.terms[(0, 1)][0, 0] == 2
    assert p.degree == 2
    assert p.at([2.0, 3.0])[0, 0] == pytest.approx(10.0)
    dx1 = p.partial(0)
    assert set(dx1.terms) == {(1, 0)}
    assert dx1.terms[(1, 0)][0, 0] == 2
    assert p.partial(1).degree == 0
    with pytest.raises(PreconditionError):
        p.partial(2)


def test_polynomial_matrix_entries_and_adjoint():
    p = PolyMatrix.from_expressions([['x1', 'i'], ['0', '(x1 - 1)^2']], 1)
    assert p.k == 2
    np.testing.assert_allclose(p.at([3.0]), [[3, 1j], [0, 4]])
    np.testing.assert_allclose(p.adjoint().at([3.0]), [[3, 0], [-1j, 4]])


@pytest.mark.parametrize('source', ['sin(x1)', '1/x1', 'x2'])
def test_non_polynomials_are_rejected(source):
    with pytest.raises(PreconditionError):
        PolyMatrix.from_expressions(source, 1)


def test_expression_matrix_and_unknown_variables():
    q = ExprMatrix('sqrt(abs(x1))', 1, 2)
    np.testing.assert_allclose(q.at([-4.0]), [[2, 0], [0, 2]])
    assert not q.symbolic
    with pytest.raises(PreconditionError):
        ExprMatrix('x3', 2)


def test_sampled_function_is_only_known_on_its_grid():
    axis = Axis(0.0, 1.0, 3)
    q = SampledMatFunc([axis], np.arange(3, dtype=float).reshape(3, 1, 1))
    assert q.at([0.5])[0, 0] == 1
    for x in (0.25, 2.0):
        with pytest.raises(PreconditionError):
            q.at([x])
    with pytest.raises(PreconditionError):
        SampledMatFunc([axis], np.zeros((2, 1, 1)))
    with pytest.raises(PreconditionError):
        Axis(1.0, 0.0, 3)


def test_commuting_hermitian_alphas_are_formally_normal(plane):
    q = PolyMatrix.from_expressions('x1^2 + x2^2', 2, 2)
    alphas = [np.diag([1, -1]), np.diag([2, 1])]
    checks = check_afnorm(alphas, q, plane)
    assert [c.label for c in checks] == ['(Afnorm-1)', '(Afnorm-2)', '(Afnorm-3)']
    assert all(c.verdict is Verdict.PASS for c in checks)
    result = certify_formally_normal(alphas, q, plane)
    assert result.overall is Verdict.PASS
    assert 'essentially normal' in result.conclusion


def test_non_normal_alpha_is_caught(line):
    q = PolyMatrix.constant(np.zeros((2, 2)), 1)
    first = check_afnorm([NILPOTENT], q, line)[0]
    assert first.verdict is Verdict.FAIL
    assert first.witness == [1, 1]


def test_non_normal_potential_is_caught(line):
    q = PolyMatrix.from_expressions([['0', 'x1'], ['0', '0']], 1)
    second = check_afnorm([np.eye(2)], q, line)[1]
    assert second.verdict is Verdict.FAIL
    assert second.witness is not None and second.witness != [0.0]


def test_afnorm_dimension_mismatch(plane):
    q = PolyMatrix.constant(np.eye(2), 2)
    with pytest.raises(PreconditionError):
        check_afnorm([np.eye(2)], q, plane)
    with pytest.raises(PreconditionError):
        check_afnorm([np.eye(3), np.eye(3)], q, plane)


def test_holder_exponent_of_a_square_root():
    q = ExprMatrix('sqrt(abs(x1))', 1)
    estimates = holder_estimates(q, radii=(1, 2))
    for b, constant in estimates.values():
        assert b == pytest.approx(0.5, abs=0.1)
        assert np.isfinite(constant)
    check = check_holder(q, radii=(1, 2))
    assert check.verdict is Verdict.INCONCLUSIVE
    assert check.heuristic


def test_polynomial_potential_is_lipschitz():
    check = check_holder(PolyMatrix.from_expressions('x1^3', 1), radii=(1,))
    assert check.verdict is Verdict.PASS
    assert not check.heuristic


def test_holder_evidence_has_the_same_shape_for_every_potential():
    symbolic = check_holder(PolyMatrix.from_expressions('x1^3', 1), radii=(1, 2))
    sampled = check_holder(ExprMatrix('sqrt(abs(x1))', 1), radii=(1, 2))
    assert symbolic.evidence.keys() == sampled.evidence.keys()
    assert set(symbolic.evidence['by_radius']) == {1, 2}
    assert 0 < symbolic.evidence['min_exponent'] <= 1


def test_assemble_blocks():
    q, q_star = assemble_blocks(np.array([NILPOTENT], dtype=complex))
    np.testing.assert_allclose(q, np.diag([0, 1]))
    np.testing.assert_allclose(q_star, np.diag([1, 0]))
    with pytest.raises(PreconditionError):
        assemble_blocks(np.zeros((2, 3)))


def test_nilpotent_coefficient_has_no_two_sided_bound(line):
    check = check_QQ([PolyMatrix.constant(NILPOTENT, 1)], line)
    assert check.verdict is Verdict.FAIL
    assert check.note.startswith('none')
    assert check.evidence['c1'] is None


def test_commuting_hermitian_coefficients(plane):
    q_list = [PolyMatrix.constant(np.diag([1, 2]), 2), PolyMatrix.constant(np.diag([3, -1]), 2)]
    qq = check_QQ(q_list, plane)
    assert qq.verdict is Verdict.PASS
    assert qq.evidence['c1'] == pytest.approx(1.0, abs=1e-10)
    qi = check_QI(q_list, plane)
    assert qi.verdict is Verdict.PASS
    assert qi.evidence['c2'] == pytest.approx(10.0)
    result = certify_graph_norm_domain(q_list, plane)
    assert result.overall is Verdict.PASS
    assert 'D(A*)' in result.conclusion


def test_affine_coefficients_pass_ql_and_quadratic_fail(line):
    assert check_QL([PolyMatrix.from_expressions('1 + x1', 1)], line).verdict is Verdict.PASS
    check = check_QL([PolyMatrix.from_expressions('x1^2', 1)], line)
    assert check.verdict is Verdict.FAIL
    assert check.witness == {'j': 1, 'monomial': 'x1^2'}


def test_growing_coefficient_fails_qi(line):
    check = check_QI([PolyMatrix.from_expressions('x1', 1)], line)
    assert check.verdict is Verdict.FAIL
    assert check.witness == [1.0]


def test_laplacian_symbol_dominates_a_first_order_symbol(plane):
    p1 = PolyMatrix.from_expressions('x1^2 + x2^2', 2)
    p2 = PolyMatrix.from_expressions('x1', 2)
    check = check_poly_domination(p1, p2, plane)
    assert check.verdict is Verdict.PASS
    assert check.evidence['c'] == pytest.approx(0.5)


def test_first_order_symbol_does_not_dominate_the_laplacian(plane):
    p1 = PolyMatrix.from_expressions('x1', 2)
    p2 = PolyMatrix.from_expressions('x1^2', 2)
    check = check_poly_domination(p1, p2, plane)
    assert check.verdict is Verdict.FAIL
    assert check.witness == [1.0, 0.0]


def test_domination_is_scalar_only(plane):
    with pytest.raises(PreconditionError):
        check_poly_domination(PolyMatrix.constant(np.eye(2), 2), PolyMatrix.from_expressions('x1', 2), plane)
