import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opdomain.errors import EvaluationError, ParseError
from opdomain.exprlang import (
    BinOp,
    Call,
    Neg,
    Number,
    Pow,
    Var,
    evaluate,
    evaluate_source,
    free_variables,
    parse,
    to_source,
)


def test_power_band_entry():
    assert evaluate_source('(1+k+l)/abs(k-l)^3', {'k': 1, 'l': 2}) == 4 + 0j


@pytest.mark.parametrize('source, value', [
    ('2+3*4', 14),
    ('-2^2', -4),
    ('2^-1', 0.5),
    ('2^(-2)', 0.25),
    ('i*i', -1),
    ('10-4-3', 3),
    ('12/3/2', 2),
    ('sqrt(4)+abs(-3)', 5),
    ('re(2+3*i)*im(2+3*i)', 6),
])
def test_precedence_and_functions(source, value):
    assert evaluate_source(source) == pytest.approx(value)


def test_vectorised_evaluation_broadcasts():
    k = np.arange(1, 5)[:, None]
    l = np.arange(1, 4)[None, :]
    out = evaluate(parse('k*l'), {'k': k, 'l': l})
    assert out.shape == (4, 3)
    np.testing.assert_array_equal(out.real, k * l)


def test_free_variables():
    assert free_variables(parse('x1^2 + sin(x2) - 3')) == {'x1', 'x2'}
    assert free_variables(parse('i + 2')) == set()


@pytest.mark.parametrize('source', ['1+', '2^1.5', 'k+*l', '(k', 'k$', 'abs k'])
def test_syntax_errors(source):
    with pytest.raises(ParseError):
        parse(source)


def test_parse_error_offset():
    with pytest.raises(ParseError) as err:
        parse('1+')
    assert err.value.offset == 2


def test_exponent_limit():
    with pytest.raises(ParseError):
        parse('k^2000')


def test_division_by_zero_names_the_binding():
    with pytest.raises(EvaluationError) as err:
        evaluate(parse('1/(k-2)'), {'k': np.array([1, 2, 3])})
    assert err.value.bindings['k'] == 2


def test_unbound_variable():
    with pytest.raises(EvaluationError):
        evaluate_source('k+l', {'k': 1})


def test_real_only_square_root():
    assert evaluate(parse('sqrt(x)'), {'x': -4}) == pytest.approx(2j)
    with pytest.raises(EvaluationError):
        evaluate(parse('sqrt(x)'), {'x': -4}, real_only=True)


def test_bytes_source():
    assert evaluate(parse(b'k+1'), {'k': 1}) == 2


def _trees():
    leaves = st.one_of(
        st.integers(min_value=0, max_value=50).map(lambda v: Number(float(v))),
        st.sampled_from([Var('k'), Var('l')]),
    )
    return st.recursive(
        leaves,
        lambda inner: st.one_of(
            st.builds(BinOp, st.sampled_from('+-*/'), inner, inner),
            st.builds(Neg, inner),
            st.builds(Pow, inner, st.integers(min_value=-3, max_value=3)),
            st.builds(Call, st.sampled_from(['abs', 'conj', 're']), inner),
        ),
        max_leaves=12,
    )


@given(_trees())
def test_printed_source_reparses_to_the_same_tree(tree):
    assert parse(to_source(tree)) == tree


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=64))
def test_arbitrary_bytes_parse_or_raise_a_parse_error(data):
    try:
        tree = parse(data)
    except ParseError as exc:
        assert exc.offset >= 0
        return
    assert isinstance(to_source(tree), str)
