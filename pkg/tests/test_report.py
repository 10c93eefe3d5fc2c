import json
import math

import numpy as np
import pytest

from opdomain.errors import ConfigError, ContractViolation
from opdomain.report import (
    CheckReport,
    CheckResult,
    CurvePoint,
    Trend,
    Verdict,
    classify_trend,
    config_sha256,
    curve_verdict,
    is_monotone,
    loglog_slope,
    read_curve_csv,
    sup_verdict,
    to_jsonable,
)
from opdomain.tolerances import DEFAULT_TOLERANCES


P, F, I = Verdict.PASS, Verdict.FAIL, Verdict.INCONCLUSIVE


@pytest.mark.parametrize('verdicts, expected', [
    ([P, P], P),
    ([P, F, I], F),
    ([P, I], I),
    ([], I),
])
def test_combine(verdicts, expected):
    assert Verdict.combine(verdicts) is expected


def test_cap_only_downgrades_a_pass():
    assert P.cap(I) is I
    assert F.cap(I) is F


def test_loglog_slope_and_trends():
    assert loglog_slope([1, 2, 4, 8], [1, 4, 16, 64]) == pytest.approx(2.0)
    assert classify_trend([1, 2, 4, 8], [1, 2, 4, 8])[0] is Trend.GROWING
    assert classify_trend([1, 2, 4, 8], [3, 3, 3, 3]) == (Trend.BOUNDED, pytest.approx(0.0))
    assert classify_trend([1, 2, 4], [0, 0, 0]) == (Trend.BOUNDED, 0.0)
    trend, slope = classify_trend([1, 2, 4], [1, 0.5, 0.0])
    assert trend is Trend.DECAYING and slope == -math.inf
    assert classify_trend([1, 2, 4, 8], [1, 0.5, 0.25, 0.125])[0] is Trend.DECAYING


def test_curve_verdicts():
    assert curve_verdict([64, 128], [1.0, 1.001])[0] is P
    assert curve_verdict([64, 128], [0.0, 0.0])[0] is P
    assert curve_verdict([64, 128], [1.0, 2.0])[0] is F
    assert curve_verdict([64, 128], [1.0, 1.1])[0] is I
    assert curve_verdict([64], [1.0])[0] is I
    assert curve_verdict([], [])[0] is I


@pytest.mark.parametrize('values, expected', [
    ([0.46, 0.65, 0.79, 0.89, 0.94], I),
    ([0.89, 0.94, 0.965, 0.98, 0.99, 0.995], P),
    ([1.0, 2.0, 4.0, 8.0], F),
    ([1.0, 1.5, 2.0, 2.5], F),
    ([1.2, 1.0, 0.9], P),
    ([0.0, 0.0], P),
    ([1.0], I),
])
def test_sup_verdict(values, expected):
    assert sup_verdict(values)[0] is expected


def test_monotone():
    assert is_monotone([1, 2, 2, 3])
    assert not is_monotone([1, 2, 1.5])


def test_check_needs_evidence():
    with pytest.raises(ContractViolation):
        CheckResult('(M2)', P, {})


def test_jsonable_conversions():
    assert to_jsonable(1 + 2j) == [1.0, 2.0]
    assert to_jsonable(float('inf')) == 'inf'
    assert to_jsonable(np.float64('nan')) == 'nan'
    assert to_jsonable({1: np.array([1, 2])}) == {'1': [1, 2]}
    assert to_jsonable(P) == 'pass'


def test_config_hash_ignores_key_order():
    assert config_sha256({'a': 1, 'b': [1, 2]}) == config_sha256({'b': [1, 2], 'a': 1})
    assert config_sha256({'a': 1}) != config_sha256({'a': 2})


def _report(*verdicts):
    checks = [
        CheckResult(f'(c{i})', v, {'value': float(i)},
                    curve=[CurvePoint(64, 1.0), CurvePoint(128, 1.0 + i, False, n=2)])
        for i, v in enumerate(verdicts)
    ]
    return CheckReport(job={'job': 'test'}, checks=checks, conclusion='done')


@pytest.mark.parametrize('verdicts, code', [((P, P), 0), ((P, F), 1), ((P, I), 2)])
def test_exit_codes(verdicts, code):
    assert _report(*verdicts).exit_code() == code


def test_write_report_and_curves(tmp_path):
    report = _report(P, I)
    written = report.write(tmp_path / 'out')
    document = json.loads((tmp_path / 'out' / 'report.json').read_text(encoding='utf-8'))
    assert document['overall'] == 'inconclusive'
    assert [c['label'] for c in document['checks']] == ['(c0)', '(c1)']
    assert len(written) == 3
    curve = read_curve_csv(tmp_path / 'out' / 'curves' / 'c1.csv')
    assert curve == [CurvePoint(64, 1.0, True, None), CurvePoint(128, 2.0, False, 2)]
    header = (tmp_path / 'out' / 'curves' / 'c1.csv').read_text(encoding='utf-8').splitlines()[0]
    assert header == 'n,window,norm,converged'


def test_report_json_is_stable():
    assert _report(P, F).to_json() == _report(P, F).to_json()


def test_tolerance_overrides():
    tol = DEFAULT_TOLERANCES.with_overrides({'wot': 1e-3})
    assert tol.wot == 1e-3
    assert tol.residual == DEFAULT_TOLERANCES.residual
    with pytest.raises(ConfigError) as err:
        DEFAULT_TOLERANCES.with_overrides({'bogus': 1.0})
    assert err.value.field == 'tolerances.bogus'
    with pytest.raises(ConfigError):
        DEFAULT_TOLERANCES.with_overrides({'wot': -1})
