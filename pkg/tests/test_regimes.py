import math

import pytest

from quasi2d.errors import InputError
from quasi2d.services.regimes import (
    COVERED,
    EXCLUDED_ADMISSIBILITY,
    EXCLUDED_CONFINEMENT,
    FREE_REGIME,
    RegimeParams,
    RegimeService,
    SequenceSpec,
    chen_holmer_nu,
    default_params,
    label_counts,
)

N_GRID = [10.0**k for k in range(1, 7)]
EPS_GRID = [1e-4, 1e-3, 1e-2, 1e-1, 0.5]


def test_free_regime_point():
    eps = 0.01
    point = RegimeService(slack=1e-9).classify_point(eps**-2, eps, RegimeParams(1.0 / 3.0, 8.0, 3.0))
    assert point["label"] == FREE_REGIME
    assert point["adm_margin"] == pytest.approx(5.0 * math.log(eps))
    assert point["conf_margin"] == pytest.approx(0.0, abs=1e-9)


def test_covered_point():
    point = RegimeService().classify_point(1e-3**-1.5, 1e-3, RegimeParams(1.0, 3.0, 1.01))
    assert point["label"] == COVERED


def test_inadmissible_point():
    point = RegimeService().classify_point(1e6, 0.5, default_params(1.0))
    assert point["label"] == EXCLUDED_ADMISSIBILITY


def test_beta_one_raster_has_no_free_regime():
    counts = label_counts(RegimeService().region_raster(default_params(1.0), N_GRID, EPS_GRID))
    assert counts[FREE_REGIME] == 0
    assert counts[COVERED] > 0
    assert sum(counts.values()) == len(N_GRID) * len(EPS_GRID)


def test_beta_third_raster_has_three_regions():
    counts = label_counts(RegimeService().region_raster(default_params(1.0 / 3.0), N_GRID, EPS_GRID))
    assert counts[COVERED] > 0
    assert counts[EXCLUDED_ADMISSIBILITY] > 0
    assert counts[FREE_REGIME] > 0
    assert counts[EXCLUDED_CONFINEMENT] == 0


def test_raster_order_is_canonical():
    rows = RegimeService().region_raster(default_params(1.0), N_GRID, EPS_GRID)
    keys = [(r["N"], r["eps"]) for r in rows]
    assert keys == sorted(keys)


def test_chen_holmer_margin_column():
    rows = RegimeService().region_raster(default_params(0.25), [100.0], [0.1], chen_holmer=True)
    nu = chen_holmer_nu(0.25)
    assert rows[0]["ch_margin"] == pytest.approx(math.log(100.0) + 2.0 * nu * math.log(0.1))


def test_chen_holmer_needs_small_beta():
    with pytest.raises(InputError):
        chen_holmer_nu(0.5)


@pytest.mark.parametrize("beta, theta, gamma", [
    (1.0, 3.0, 3.0),
    (1.0, 3.5, 2.0),
    (0.5, 4.0, 3.0),
    (0.5, 7.0, 2.0),
    (1.5, 3.0, 2.0),
])
def test_invalid_exponents_rejected(beta, theta, gamma):
    with pytest.raises(InputError):
        RegimeParams(beta, theta, gamma)


def test_doubling_sequence():
    seq = SequenceSpec(lambda n: 2.0**n, lambda n: 2.0**-n)
    report = RegimeService().check_sequence(seq, RegimeParams(1.0, 3.0, 1.01), 10)
    assert report["admissible"] == "holds"
    assert report["moderately_confining"] == "holds"
    assert report["eps_exponent"] == pytest.approx(-1.0)
    assert not report["precondition_risk"]


def test_flat_confinement_margin_fails():
    seq = SequenceSpec(lambda n: 2.0**n, lambda n: 2.0**-n)
    report = RegimeService().check_sequence(seq, RegimeParams(1.0, 3.0, 2.0), 10)
    assert report["moderately_confining"] == "fails"


def test_sequence_precondition_risks():
    pairs = [(2.0**n, 0.5) for n in range(1, 11)]
    report = RegimeService().check_sequence(SequenceSpec(pairs=pairs), default_params(1.0), 10)
    assert report["precondition_risk"]
    assert "eps_not_decreasing" in report["risks"]


def test_sequence_needs_eight_samples():
    seq = SequenceSpec(lambda n: 2.0**n, lambda n: 2.0**-n)
    with pytest.raises(InputError):
        RegimeService().check_sequence(seq, default_params(1.0), 5)


def test_point_preconditions():
    with pytest.raises(InputError):
        RegimeService().classify_point(0.5, 0.1, default_params(1.0))
    with pytest.raises(InputError):
        RegimeService().classify_point(10.0, 1.5, default_params(1.0))
