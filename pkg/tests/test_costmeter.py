import pytest

from fedplora import checks, costmeter
from fedplora.costmeter import (CostProfile, agg_flops, cost_table, downlink_bytes, fold_flops, svd_cost,
                                temp_memory_bytes, uplink_bytes)
from fedplora.numkit import ConfigError

BERT = CostProfile(768, 768, 12, 16, 1, 2)


def test_uplink():
    assert uplink_bytes("hetlora", BERT) == 36_864
    full = CostProfile(768, 768, 12, 16, 16, 2)
    assert len({uplink_bytes(m, full) for m in costmeter.METHODS}) == 1
    assert uplink_bytes("fedplora", CostProfile(768, 768, 12, 16, 2, 2)) == 2 * uplink_bytes("fedplora", BERT)


def test_downlink():
    assert downlink_bytes("flora", BERT) == 768 * 768 * 2 * 12 == 14_155_776
    assert downlink_bytes("fedplora", BERT) == 589_824
    full = CostProfile(768, 768, 12, 16, 16, 2)
    assert downlink_bytes("fedplora", full) == downlink_bytes("hetlora", full)


def test_fold_flops():
    assert fold_flops(CostProfile(4, 4, 1, 3, 3)) == 0
    assert fold_flops(CostProfile(4, 4, 1, 3, 1)) == 64
    assert fold_flops(CostProfile(4, 4, 1, 5, 1)) == 2 * fold_flops(CostProfile(4, 4, 1, 3, 1))


def test_agg_flops():
    assert agg_flops("fedplora", CostProfile(3, 5, 1, 1, 1), 1) == 8
    assert agg_flops("flexlora", BERT, 5) > agg_flops("flora", BERT, 5) > agg_flops("fedplora", BERT, 5)
    for m in ("fedplora", "fedit", "flora"):
        assert agg_flops(m, BERT, 6) == 2 * agg_flops(m, BERT, 3)
    assert agg_flops("flexlora", BERT, 1) - agg_flops("flora", BERT, 1) == 12 * svd_cost(768, 768)
    with pytest.raises(ConfigError):
        agg_flops("fedplora", BERT, 0)


def test_temp_memory_equals_downlink():
    for m in costmeter.METHODS:
        assert temp_memory_bytes(m, BERT) == downlink_bytes(m, BERT)


def test_profile_validation():
    with pytest.raises(ConfigError):
        CostProfile(768, 768, 12, 16, 0)
    with pytest.raises(ConfigError):
        CostProfile(768, 768, 12, 4, 8)
    with pytest.raises(ConfigError):
        uplink_bytes("lora", BERT)


def test_cost_table_plumbing():
    rows = {r["method"]: r for r in cost_table(BERT, 3)}
    assert set(rows) == set(costmeter.METHODS)
    assert rows["fedplora"]["fold_flops"] == fold_flops(BERT)
    assert rows["flexlora"]["agg_flops"] == agg_flops("flexlora", BERT, 3)


@pytest.mark.parametrize("check", [checks.check_downlink_identities, checks.check_measured_bytes])
def test_cost_invariants(check):
    check()
