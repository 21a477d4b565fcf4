import numpy as np
import pytest

from zrplab.errors import ConfigInvalid
from zrplab.rates import RateFunction


def test_constant_and_linear_tables():
    assert RateFunction.constant().table_upto(4).tolist() == [0, 1, 1, 1, 1]
    assert RateFunction.linear(2.0).table_upto(3).tolist() == [0, 2, 4, 6]
    assert RateFunction.linear(2.0).upper_bound is None
    assert RateFunction.constant(3.0).upper_bound == 3.0


def test_piecewise_interpolates_knots():
    g = RateFunction.piecewise([(0, 0), (1, 1), (3, 2)], 0.0)
    assert g.table_upto(5).tolist() == [0, 1, 1.5, 2, 2, 2]
    assert g.lipschitz == 1.0
    assert g.is_concave


@pytest.mark.parametrize("values", [(1.0, 1.0), (0.0, 0.0), (0.0, 2.0, 1.0)])
def test_invalid_tables_rejected(values):
    with pytest.raises(ValueError):
        RateFunction.table(values)


def test_config_round_trip():
    for g in (RateFunction.constant(2.0), RateFunction.linear(), RateFunction.table([0, 1, 3], 2.0)):
        h = RateFunction.from_config(g.to_config())
        assert np.array_equal(h.table_upto(10), g.table_upto(10))


def test_bad_config_names_field():
    with pytest.raises(ConfigInvalid) as exc:
        RateFunction.from_config({"kind": "cubic"})
    assert exc.value.field == "rate.kind"


def test_log_factorial_matches_direct_sum():
    g = RateFunction.piecewise([(0, 0), (1, 1), (4, 2.5)], 0.25)
    lf = g.log_factorial(30)
    direct = np.concatenate(([0.0], np.cumsum(np.log(g.table_upto(30)[1:]))))
    assert np.allclose(lf, direct, rtol=0, atol=1e-12)
