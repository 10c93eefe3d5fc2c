import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opdomain.approx_unit import (
    RESOLVENT_POWER,
    SPECTRAL_PROJECTION,
    UnitFamily,
    build_unit,
    commutator_section,
    domination_check,
    komcond_adjoint_symmetry,
    komintro_check,
    lemma_bound_check,
    sqrt3_inequality_check,
    wot_convergence_check,
    wot_deviations,
)
from opdomain.core import DiagonalSpec, OperatorSpec, Window
from opdomain.errors import PreconditionError
from opdomain.matrix_criteria import DEFAULT_LADDER
from opdomain.report import Verdict


def _unit_vector(index: int, size: int) -> np.ndarray:
    e = np.zeros(size, dtype=np.complex128)
    e[index - 1] = 1.0
    return e


def _random_band(rng: np.random.Generator, size: int, p: int) -> OperatorSpec:
    m = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    k, l = np.indices(m.shape)
    m[np.abs(k - l) > p] = 0
    return OperatorSpec.from_array(m, bandwidth=p)


@pytest.mark.parametrize('m, phase', [(1, 1j), (2, -1), (3, -1j), (4, 1)])
def test_limit_phase_is_a_power_of_i(c_k, m, phase):
    assert UnitFamily(RESOLVENT_POWER, c_k, m).limit_phase == phase


def test_spectral_projection_limit_is_identity(c_k):
    assert UnitFamily(SPECTRAL_PROJECTION, c_k).limit_phase == 1.0


@pytest.mark.parametrize('kwargs', [
    {'kind': 'heat-kernel'},
    {'kind': RESOLVENT_POWER, 'm': 0},
    {'kind': RESOLVENT_POWER, 'n_values': ()},
    {'kind': RESOLVENT_POWER, 'n_values': (0, 1)},
])
def test_bad_unit_families(c_k, kwargs):
    with pytest.raises(PreconditionError):
        UnitFamily(c=c_k, **kwargs)


def test_build_unit_values(c_k):
    w = Window.leading(3)
    np.testing.assert_allclose(build_unit(RESOLVENT_POWER, c_k, 1, 2, w),
                               [2 / (1 - 2j), 2 / (2 - 2j), 2 / (3 - 2j)])
    np.testing.assert_array_equal(build_unit(SPECTRAL_PROJECTION, c_k, 1, 2, w), [1, 1, 0])
    with pytest.raises(PreconditionError):
        build_unit(RESOLVENT_POWER, c_k, 1, 0, w)


def test_commutator_section_of_a_diagonal_operator_vanishes(c_k):
    w = Window.leading(16)
    t = build_unit(RESOLVENT_POWER, c_k, 2, 4, w)
    ad = commutator_section(t, c_k.as_operator(), w)
    assert ad.nnz == 0 or np.max(np.abs(ad.data)) == 0
    with pytest.raises(PreconditionError):
        commutator_section(t[:-1], c_k.as_operator(), w)


def test_commutator_section_dense_matches_formula(c_k):
    w = Window.leading(5)
    block = np.arange(25, dtype=float).reshape(5, 5)
    t = build_unit(RESOLVENT_POWER, c_k, 1, 3, w)
    expected = np.diag(t) @ block - block @ np.diag(t)
    np.testing.assert_allclose(commutator_section(t, block, w), expected, atol=1e-12)


def test_wot_deviation_for_first_unit_vector(c_k):
    ns = tuple(range(1, 101))
    family = UnitFamily(RESOLVENT_POWER, c_k, 1, ns)
    deviation = wot_deviations(family, [_unit_vector(1, 8)], Window.leading(8))
    for n in ns:
        assert deviation[n] == pytest.approx(1 / math.sqrt(n * n + 1), abs=1e-12)


def test_wot_spectral_projection_is_exact_once_n_passes_the_support(c_k):
    family = UnitFamily(SPECTRAL_PROJECTION, c_k, 1, (1, 2, 4, 8))
    deviation = wot_deviations(family, [_unit_vector(5, 8)], Window.leading(8))
    assert deviation == {1: 1.0, 2: 1.0, 4: 1.0, 8: 0.0}
    check = wot_convergence_check(family, [_unit_vector(5, 8)], Window.leading(8))
    assert check.verdict is Verdict.PASS


def test_wot_resolvent_power_decays_but_stays_inconclusive(c_k):
    family = UnitFamily(RESOLVENT_POWER, c_k, 1)
    check = wot_convergence_check(family, [_unit_vector(1, 64), _unit_vector(2, 64)], Window.leading(64))
    assert check.verdict is Verdict.INCONCLUSIVE
    assert check.evidence['nonincreasing']
    assert check.evidence['limit_phase'] == 1j


def test_wot_rejects_mismatched_vectors(c_k):
    family = UnitFamily(RESOLVENT_POWER, c_k, 1)
    with pytest.raises(PreconditionError):
        wot_deviations(family, [_unit_vector(1, 4)], Window.leading(8))
    with pytest.raises(PreconditionError):
        wot_deviations(family, [], Window.leading(8))


def test_sqrt3_inequality_on_the_full_grid(c_k):
    check = sqrt3_inequality_check(c_k, 100, 100)
    assert check.verdict is Verdict.PASS
    assert check.evidence['violations'] == 0
    assert check.evidence['triples'] == 100 * 100 * 100
    assert check.evidence['max_ratio'] <= 1.0


def test_sqrt3_inequality_sampled(c_k):
    check = sqrt3_inequality_check(c_k, 100, 100, samples=1000, seed=3)
    assert check.verdict is Verdict.PASS
    assert check.evidence['triples'] == 1000


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=12))
def test_sqrt3_inequality_for_arbitrary_real_sequences(values):
    check = sqrt3_inequality_check(DiagonalSpec.from_values(values), 30, len(values))
    assert check.evidence['violations'] == 0


@pytest.mark.parametrize('seed', range(20))
def test_commutator_power_bound_on_random_band_matrices(c_k, seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(16, 129))
    p = int(rng.integers(1, 4))
    a = _random_band(rng, size, p)
    for m in (2, 3):
        check = lemma_bound_check(a, c_k, 2j, m, [Window.leading(size)])
        assert check.verdict is Verdict.PASS, check.evidence
        assert check.label == '(orazoraz)'


def test_commutator_power_bound_needs_complex_z(c_k, free_jacobi):
    with pytest.raises(PreconditionError):
        lemma_bound_check(free_jacobi, c_k, 2.0, 2, [Window.leading(8)])
    with pytest.raises(PreconditionError):
        lemma_bound_check(free_jacobi, c_k, 2j, 0, [Window.leading(8)])


@pytest.mark.parametrize('seed', range(50))
def test_adjoint_commutator_has_equal_norm(seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    a = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    check = komcond_adjoint_symmetry(t, a, Window.leading(20), rtol=1e-9)
    assert check.verdict is Verdict.PASS
    assert check.evidence['relative_gap'] <= 1e-9


def test_adjoint_commutator_shape_mismatch():
    with pytest.raises(PreconditionError):
        komcond_adjoint_symmetry(np.ones(3), np.eye(4), Window.leading(4))


def test_jacobi_commutators_are_bounded(jacobi_k, c_k):
    family = UnitFamily(RESOLVENT_POWER, c_k, 1)
    curve = komintro_check(family, jacobi_k, DEFAULT_LADDER)
    assert curve.verdict is Verdict.PASS, curve.note
    assert curve.sup <= math.sqrt(3)
    check = curve.to_check()
    assert check.label == '(komintro)'
    assert set(check.evidence['per_n']) == set(family.n_values)


def test_short_n_range_on_a_bounded_curve_is_not_a_failure(jacobi_k, c_k):
    family = UnitFamily(RESOLVENT_POWER, c_k, 1, (1, 2, 4, 8, 16))
    curve = komintro_check(family, jacobi_k, (64, 128, 256, 512))
    assert curve.verdict is Verdict.INCONCLUSIVE
    values = [curve.per_n[n].value for n in (4, 8, 16)]
    assert values[2] - values[1] < values[1] - values[0]
    assert curve.sup <= math.sqrt(3)


def test_steep_jacobi_commutators_grow(c_k):
    steep = OperatorSpec.family('jacobi', diag='0', offdiag='k^2', symmetry='hermitian')
    family = UnitFamily(RESOLVENT_POWER, c_k, 1, (1, 2, 4, 8, 16, 32))
    curve = komintro_check(family, steep, (64, 128, 256, 512, 1024))
    assert curve.verdict is Verdict.FAIL
    assert not curve.bounded


def test_commuting_blocks_give_vanishing_commutators():
    a = OperatorSpec.family('block-constant', size=2, value=1.0)
    c = DiagonalSpec.from_expression('k', block=2)
    curve = komintro_check(UnitFamily(RESOLVENT_POWER, c, 1, (1, 2, 4)), a, (64, 128))
    assert curve.verdict is Verdict.PASS
    assert curve.note == 'all commutators vanish'
    assert domination_check(c, a, (64, 128)).verdict is Verdict.PASS


def test_free_jacobi_domination_constant(free_jacobi, c_k):
    check = domination_check(c_k, free_jacobi, (64, 128, 256))
    assert check.verdict is Verdict.PASS
    assert check.evidence['constant'] == pytest.approx(0.5)
    assert not check.heuristic
