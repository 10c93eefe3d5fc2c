import math

import numpy as np
import pytest

from opdomain.core import (
    AntidiagonalBlockGen,
    DiagonalSpec,
    OperatorSpec,
    PairingSpec,
    ProductGen,
    SumGen,
    TableGen,
    Window,
)
from opdomain.errors import ExactnessError, PreconditionError
from opdomain.oracle import (
    CLASSICAL,
    finite_h_symmetry_residual,
    graph_norm_ratio_probe,
    jacobi_limit_point_probe,
    jacobi_sequences,
    resolvent_commute_check,
)
from opdomain.report import Trend, Verdict

SMALL = (64, 128, 256)


def test_symmetric_operator_has_zero_residual(jacobi_k):
    check = finite_h_symmetry_residual(jacobi_k, PairingSpec.identity(), Window.leading(128))
    assert check.verdict is Verdict.PASS
    assert check.evidence['agree']
    assert check.evidence['residual'] == 0


def test_h_symmetry_witness_agrees_with_ag(free_jacobi):
    pair = PairingSpec.involution(AntidiagonalBlockGen((2, 3), (1,)), s_g=1.0)
    hb = OperatorSpec(ProductGen((pair.h_spec, free_jacobi)))
    a = OperatorSpec(SumGen((hb, OperatorSpec(TableGen.from_entries([(3, 4, 1.0)])))))
    check = finite_h_symmetry_residual(a, pair, Window.leading(32))
    assert check.verdict is Verdict.FAIL
    assert check.witness == (4, 5)
    assert check.evidence['agree']
    assert check.label == '(HA=A*H)'


def test_jacobi_sequences(jacobi_k):
    diag, off = jacobi_sequences(jacobi_k)
    np.testing.assert_array_equal(diag.values([1, 2, 3]), [0, 0, 0])
    np.testing.assert_array_equal(off.values([1, 2, 3]), [1, 2, 3])
    with pytest.raises(PreconditionError):
        jacobi_sequences(OperatorSpec.family('block-constant', size=3))


def test_unbounded_jacobi_is_limit_point(jacobi_k):
    probe = jacobi_limit_point_probe(*jacobi_sequences(jacobi_k), 1j, SMALL)
    assert probe.trend is Trend.GROWING
    assert probe.verdict is Verdict.PASS
    assert probe.slope == pytest.approx(1.0, abs=0.3)
    assert CLASSICAL in probe.conclusion
    check = probe.to_check()
    assert check.label == '(limit-point)'
    assert check.heuristic
    assert [p.window for p in check.curve] == list(SMALL)


def test_free_jacobi_solution_grows_geometrically(free_jacobi):
    probe = jacobi_limit_point_probe(*jacobi_sequences(free_jacobi), 1j, (16, 32, 64, 128, 256))
    assert probe.verdict is Verdict.PASS
    # log10 of the partial sums grows linearly in N at rate 2 log10(golden ratio)
    rate = (probe.values[-1] - probe.values[-2]) / 128
    assert rate == pytest.approx(2 * math.log10((1 + math.sqrt(5)) / 2), rel=1e-3)
    assert math.isfinite(probe.values[-1])


def test_limit_point_probe_preconditions(free_jacobi):
    diag, off = jacobi_sequences(free_jacobi)
    with pytest.raises(PreconditionError):
        jacobi_limit_point_probe(diag, off, 2.0, SMALL)
    with pytest.raises(PreconditionError):
        jacobi_limit_point_probe(diag, off, 1j, (1,))
    with pytest.raises(PreconditionError):
        jacobi_limit_point_probe(diag, DiagonalSpec.from_expression('k - 3'), 1j, SMALL)


def test_symmetric_operator_is_q_normal_with_q_one(free_jacobi):
    probe = graph_norm_ratio_probe(free_jacobi, Window.leading(64), seed=3)
    assert probe.q_hat == pytest.approx(1.0)
    check = probe.to_check()
    assert check.verdict is Verdict.PASS
    assert check.evidence['vectors'] == 8


def test_shift_is_not_q_normal():
    shift = OperatorSpec.family('shift', weight='1', offset=1)
    probe = graph_norm_ratio_probe(shift, Window.leading(64), seed=3)
    assert probe.q_hat is None
    assert probe.to_check().verdict is Verdict.FAIL
    first = graph_norm_ratio_probe(shift, Window.leading(4), [[1, 0, 0, 0]])
    assert first.ratios == [math.inf]


def test_graph_norm_probe_needs_a_banded_operator():
    with pytest.raises(ExactnessError):
        graph_norm_ratio_probe(OperatorSpec.family('power-band'), Window.leading(8))
    with pytest.raises(PreconditionError):
        graph_norm_ratio_probe(OperatorSpec.family('identity'), Window.leading(4), [[1, 0]])


def test_commuting_blocks_have_commuting_resolvents():
    a = OperatorSpec.family('block-constant', size=2, value=1.0)
    c = DiagonalSpec.from_expression('k', block=2)
    probe = resolvent_commute_check(a, c, 1j, SMALL)
    assert probe.verdict is Verdict.PASS
    assert probe.values[-1] <= 1e-8
    assert probe.evidence['ad_S_A_interior'] == 0


def test_non_commuting_resolvents_fail(jacobi_k, c_k):
    probe = resolvent_commute_check(jacobi_k, c_k, 1j, SMALL)
    assert probe.verdict is Verdict.FAIL
    assert probe.evidence['ad_S_A_interior'] > 0
    assert 'ad(S, A) != 0' in probe.conclusion


def test_spectral_point_in_the_spectrum_is_inconclusive(c_k):
    zero = OperatorSpec.family('zero')
    probe = resolvent_commute_check(zero, c_k, 1j, SMALL, spectral_point=0.0)
    assert probe.verdict is Verdict.INCONCLUSIVE
    assert probe.evidence['singular_at'] == 64
