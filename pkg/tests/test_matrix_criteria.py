import math

import numpy as np
import pytest

from opdomain.core import (
    AntidiagonalBlockGen,
    IdentityGen,
    JacobiGen,
    OperatorSpec,
    PairingSpec,
    ProductGen,
    SumGen,
    TableGen,
    Window,
)
from opdomain.errors import PreconditionError
from opdomain.matrix_criteria import (
    ag_residual,
    certify_h_selfadjoint,
    check_AG,
    check_h_conditions,
    check_M1,
    check_M2,
    check_modakl,
    m2_kernel,
    modakl_bound,
    suggested_m,
)
from opdomain.report import Verdict

SHORT_LADDER = (64, 128, 256)


@pytest.fixture
def block_pair():
    return PairingSpec.involution(AntidiagonalBlockGen((2, 3), (1,)), s_g=1.0)


@pytest.fixture
def h_times_b(block_pair, free_jacobi):
    return OperatorSpec(ProductGen((block_pair.h_spec, free_jacobi)), label='H B')


def test_jacobi_instance_is_certified(jacobi_k, c_k):
    result = certify_h_selfadjoint(jacobi_k, PairingSpec.identity(), c_k, m=1)
    assert result.overall is Verdict.PASS, [(c.label, c.verdict, c.note) for c in result.checks]
    assert result.m == 1
    assert result.suggested_m is None
    assert result.komintro_ratio <= 1.01
    m2 = next(c for c in result.checks if c.label == '(M2)')
    assert m2.evidence['norm'] < 1.0
    assert result.verdict('(M1) q=0') is Verdict.PASS
    assert 'essentially H-selfadjoint' in result.conclusion
    with pytest.raises(KeyError):
        result.verdict('(nope)')


def test_identity_pairing_conditions():
    checks = check_h_conditions(PairingSpec.identity(), [Window.leading(n) for n in SHORT_LADDER])
    assert [c.label for c in checks] == ['(h1)', '(h2)', '(h3)', '(h4)']
    assert all(c.verdict is Verdict.PASS for c in checks)


def test_antidiagonal_pairing_conditions(block_pair):
    windows = [Window.leading(2 ** j) for j in range(6, 13)]
    h1, h2, h3, h4 = check_h_conditions(block_pair, windows)
    assert h1.verdict is h2.verdict is h3.verdict is h4.verdict is Verdict.PASS
    assert h4.evidence['max_residual'] <= 1e-12
    assert h3.evidence['s_g'] == 1.0


def test_band_mismatch_fails_h2():
    pair = PairingSpec(IdentityGen(), JacobiGen('0', '1'), 0)
    h2 = check_h_conditions(pair, [Window.leading(64)])[1]
    assert h2.verdict is Verdict.FAIL
    assert h2.witness == (1, 2)


def test_declared_s_g_too_small_fails_h3():
    pair = PairingSpec.involution(AntidiagonalBlockGen((2,), (1,)), s_g=0.5)
    h3 = check_h_conditions(pair, [Window.leading(64), Window.leading(128)])[2]
    assert h3.verdict is Verdict.FAIL
    assert 'exceeds' in h3.note


def test_ag_holds_for_h_times_symmetric(h_times_b, block_pair):
    check = check_AG(h_times_b, block_pair, Window.leading(512))
    assert check.verdict is Verdict.PASS
    assert check.witness is None


def test_ag_witness_for_a_single_perturbed_entry(h_times_b, block_pair):
    bump = OperatorSpec(TableGen.from_entries([(3, 4, 1.0)]))
    a = OperatorSpec(SumGen((h_times_b, bump)))
    check = check_AG(a, block_pair, Window.leading(64))
    assert check.verdict is Verdict.FAIL
    assert check.witness == (3, 4)
    assert check.evidence['offending'][0] == (3, 4)
    residual, _ = ag_residual(a, block_pair, Window.leading(8))
    dense = residual.toarray()
    assert dense[2, 3] == pytest.approx(1.0)
    assert dense[3, 2] == pytest.approx(-1.0)


def test_growing_m1_kernel_fails(c_k):
    steep = OperatorSpec.family('jacobi', diag='0', offdiag='k^2', symmetry='hermitian')
    check = check_M1(steep, c_k, 1, 0, SHORT_LADDER)
    assert check.verdict is Verdict.FAIL
    assert check.label == '(M1) q=0'
    assert check.evidence['norm'] > 100
    with pytest.raises(PreconditionError):
        check_M1(steep, c_k, -1, 0, SHORT_LADDER)


def test_m2_kernel_entries(jacobi_k, c_k):
    kernel = m2_kernel(jacobi_k, c_k)
    # |a_{k,k+1}| |c_k - c_{k+1}| / (1 + |c_k| + |c_{k+1}|) = k / (2k + 2)
    assert kernel(3, 4).real == pytest.approx(3 / 8)
    assert kernel(4, 4) == 0
    check = check_M2(jacobi_k, c_k, SHORT_LADDER, schur=True)
    assert check.evidence['norm'] < 1.0
    assert check.evidence['schur_bound'] <= 1.0 + 1e-12


def test_suggested_m():
    assert suggested_m(0) == 2
    assert suggested_m(0.4) == 2
    assert suggested_m(0.5) == 3
    assert suggested_m(1) == 3


def test_modakl_bound_diagonal_and_off_diagonal():
    k = np.array([2, 1, 3])
    l = np.array([2, 3, 1])
    np.testing.assert_allclose(modakl_bound(1.0, 1.0, 3.0, k, l), [3.0, 5 / 8, 5 / 8])


def test_power_band_extremal_matrix_passes():
    a = OperatorSpec.family('power-band', d=1, s=1, alpha=3)
    check = check_modakl(a, 1, 1, 3)
    assert check.verdict is Verdict.PASS
    assert check.evidence['suggested_m'] == 3
    assert check.evidence['column_sum_slope'] <= check.evidence['slope_limit']
    assert check.evidence['max_ratio'] == pytest.approx(1.0)


def test_power_band_violation_names_an_entry():
    a = OperatorSpec.family('power-band', d=2, s=1, alpha=3)
    check = check_modakl(a, 1, 1, 3, Window.leading(32))
    assert check.verdict is Verdict.FAIL
    assert check.witness == (1, 1)
    assert check.evidence['witness_value'] == pytest.approx(4.0)


@pytest.mark.parametrize('alpha', [1.0, 2.0])
def test_modakl_needs_alpha_above_two(alpha):
    a = OperatorSpec.family('power-band', d=1, s=1, alpha=3)
    with pytest.raises(PreconditionError):
        check_modakl(a, 1, 1, alpha)


def test_modakl_path_suggests_m(c_k):
    a = OperatorSpec.family('power-band', d=1, s=1, alpha=3)
    result = certify_h_selfadjoint(a, PairingSpec.identity(), c_k, modakl=(1, 1, 3),
                                   ladder=(64, 128, 256, 512))
    assert result.suggested_m == 3
    assert result.m == 3
    assert result.verdict('(modakl)') is Verdict.PASS
    assert not any(c.label.startswith('(M1)') for c in result.checks)


@pytest.mark.parametrize('kwargs', [{}, {'m': 1, 'modakl': (1, 1, 3)}])
def test_exactly_one_path(jacobi_k, c_k, kwargs):
    with pytest.raises(PreconditionError):
        certify_h_selfadjoint(jacobi_k, PairingSpec.identity(), c_k, **kwargs)


def test_failed_pipeline_names_failing_labels(c_k):
    steep = OperatorSpec.family('jacobi', diag='0', offdiag='k^2', symmetry='hermitian')
    result = certify_h_selfadjoint(steep, PairingSpec.identity(), c_k, m=1, ladder=SHORT_LADDER,
                                   n_values=(1, 2, 4, 8))
    assert result.overall is Verdict.FAIL
    assert 'not certified' in result.conclusion
    assert '(M1) q=0' in result.conclusion
    assert math.isfinite(result.komintro_ratio)
