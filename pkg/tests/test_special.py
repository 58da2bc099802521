import json
from pathlib import Path

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shapebie.special import bessel01, besselj, bessely, hankel1

REFERENCE = json.loads((Path(__file__).parent / "data" / "bessel_reference.json").read_text())


def _value(pair):
    return complex(float(pair[0]), float(pair[1]))


@pytest.mark.parametrize("row", REFERENCE, ids=lambda r: f"n{r['n']}-z{r['z']}")
def test_against_reference_table(row):
    z = complex(row["z"])
    n = row["n"]
    j, y = _value(row["J"]), _value(row["Y"])
    scale_j = max(abs(j), 1e-300)
    assert abs(complex(besselj(n, z)) - j) <= 1e-12 * max(scale_j, abs(y))
    assert abs(complex(bessely(n, z)) - y) <= 1e-12 * max(abs(y), abs(j))


def test_bessel01_matches_individual_orders():
    z = np.array([0.3, 5.0, 9.0, 30.0, 2 + 1j])
    j0, j1, y0, y1 = bessel01(z)
    assert np.allclose(j0, besselj(0, z), rtol=0, atol=0)
    assert np.allclose(y1, bessely(1, z), rtol=0, atol=0)


def test_hankel_is_j_plus_iy():
    z = np.array([0.7, 12.0, 40.0])
    assert np.allclose(hankel1(0, z), besselj(0, z) + 1j * bessely(0, z), rtol=1e-15)
    assert np.allclose(hankel1(3, z), besselj(3, z) + 1j * bessely(3, z), rtol=1e-15)


def test_negative_order_reflection():
    z = 3.3
    assert np.isclose(besselj(-3, z), -besselj(3, z), rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 60.0), st.floats(0.0, 5.0))
def test_wronskian(re, im):
    # J1 Y0 - J0 Y1 = 2 / (pi z)
    z = complex(re, im)
    j0, j1, y0, y1 = (complex(v[0]) for v in bessel01(np.array([z])))
    lhs = j1 * y0 - j0 * y1
    assert abs(lhs - 2 / (np.pi * z)) <= 1e-11 * max(abs(j0 * y1), abs(2 / (np.pi * z)))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 45.0))
def test_band_crossings_against_mpmath(x):
    j0, j1, y0, y1 = (complex(v[0]) for v in bessel01(np.array([x])))
    for got, ref in ((j0, mp.besselj(0, x)), (j1, mp.besselj(1, x)),
                     (y0, mp.bessely(0, x)), (y1, mp.bessely(1, x))):
        assert abs(got - complex(ref)) <= 2e-13 * max(1.0, abs(complex(ref)))
