import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from minereg.economics import (
    S19_XP,
    S19J_PRO,
    CapacityDecision,
    Choice,
    HourEconomics,
    MinerSpec,
    base_reward,
    classify,
    dam_reward,
    deployment_reward,
    energy_per_bitcoin,
    mining_rate_of_return,
    net_reward,
    opportunity_cost,
    optimal_capacity_split,
    optimal_participation_profit,
    worthwhileness,
    worthwhileness_array,
)
from minereg.errors import ValidationError

finite = dict(allow_nan=False, allow_infinity=False)


def brute_force_split(w_up, w_dn, cap, n=101):
    """Best objective over a grid of the simplex c_up + c_dn <= cap."""
    grid = np.linspace(0.0, cap, n)
    best = 0.0
    for cu, cd in itertools.product(grid, grid):
        if cu + cd <= cap * (1 + 1e-12):
            best = max(best, w_up * cu + w_dn * cd)
    return best


# ---- mining energy ---------------------------------------------------------


@pytest.mark.parametrize("spec, expected", [(S19_XP, 147.0), (S19J_PRO, 202.0)])
def test_energy_per_bitcoin_matches_published(spec, expected):
    assert energy_per_bitcoin(spec) == pytest.approx(expected, rel=0.01)


def test_energy_zero_efficiency():
    assert energy_per_bitcoin(MinerSpec(0.0)) == 0.0


@given(st.floats(1, 100), st.floats(1e12, 1e14), st.floats(0.5, 50), st.floats(0.1, 10))
def test_energy_scaling(eff, diff, reward, k):
    base = energy_per_bitcoin(MinerSpec(eff, diff, reward))
    assert energy_per_bitcoin(MinerSpec(eff * k, diff, reward)) == pytest.approx(base * k, rel=1e-12)
    assert energy_per_bitcoin(MinerSpec(eff, diff * k, reward)) == pytest.approx(base * k, rel=1e-12)
    assert energy_per_bitcoin(MinerSpec(eff, diff, reward * k)) == pytest.approx(base / k, rel=1e-12)


@pytest.mark.parametrize("kwargs", [dict(efficiency_j_per_th=-1), dict(efficiency_j_per_th=20, block_reward_btc=0),
                                    dict(efficiency_j_per_th=float("nan"))])
def test_miner_validation(kwargs):
    with pytest.raises(ValidationError):
        MinerSpec(**kwargs)


# ---- rate of return --------------------------------------------------------


@pytest.mark.parametrize("elec, expected", [(0, 150.0), (150, 0.0), (100, 50.0)])
def test_rate_of_return(elec, expected):
    assert mining_rate_of_return(22050, 147, elec) == pytest.approx(expected, abs=1e-9)


def test_rate_of_return_zero_energy():
    with pytest.raises(ZeroDivisionError):
        mining_rate_of_return(22050, 0, 50)


@pytest.mark.parametrize("elec, expected", [(50, 100.0), (100, 50.0)])
def test_full_deployment_opportunity_cost(elec, expected):
    rho = mining_rate_of_return(22050, 147, elec)
    assert opportunity_cost(rho, -1.0) == pytest.approx(expected, rel=0.01)


# ---- reward terms ----------------------------------------------------------


def test_dam_reward():
    assert dam_reward(21.67, 1, 8.46, 1) == pytest.approx(30.13)
    assert dam_reward(55, 0, 12, 0) == 0
    assert dam_reward(100, 10, 0, 0) == 1000
    with pytest.raises(ValidationError):
        dam_reward(-1, 1, 1, 1)


def test_base_reward():
    assert base_reward(100, 10, 0, 2) == 800
    assert base_reward(-20, 10, 3, 0) == -60
    assert base_reward(0, 10, 5, 5) == 0
    with pytest.raises(ValidationError):
        base_reward(10, 10, 6, 5)
    with pytest.raises(ValidationError):
        base_reward(10, 10, -1, 0)


def test_deployment_reward():
    assert deployment_reward(100, -0.16, 10, 0, 0) == pytest.approx(-160)
    assert deployment_reward(100, 0, 0, 0.25, 4) == pytest.approx(100)
    assert deployment_reward(-37, 0, 5, 0, 5) == 0
    with pytest.raises(ValidationError):
        deployment_reward(100, 0.1, 1, 0, 0)


@given(st.floats(-200, 200, **finite), st.floats(0, 100), st.data())
def test_base_reward_non_increasing(rho, cap, data):
    cu = data.draw(st.floats(0, cap))
    cd = data.draw(st.floats(0, cap - cu))
    step = data.draw(st.floats(0, cap - cu - cd))
    b = base_reward(rho, cap, cu, cd)
    assert base_reward(rho, cap, cu + step, cd) <= b + 1e-9
    assert base_reward(rho, cap, cu, cd + step) <= b + 1e-9


# ---- worthwhileness --------------------------------------------------------


def test_worthwhileness_examples():
    w_up, w_dn = worthwhileness(21.67, 8.46, 100, -0.16, 0.25)
    assert (w_up, w_dn) == pytest.approx((5.67, -66.54))
    assert worthwhileness(21.67, 8.46, -10, -0.16, 0.25)[0] == pytest.approx(13.27)
    assert worthwhileness(12.0, 7.0, 0.0, -0.4, 0.3) == (12.0, 7.0)


def test_worthwhileness_array_matches_scalar():
    rng = np.random.default_rng(3)
    pu, pd = rng.uniform(0, 50, 200), rng.uniform(0, 50, 200)
    rho = rng.uniform(-100, 200, 200)
    rho[:5] = 0.0
    eu, ed = -rng.uniform(0, 1, 200), rng.uniform(0, 1, 200)
    au, ad = worthwhileness_array(pu, pd, rho, eu, ed)
    for i in range(200):
        assert (au[i], ad[i]) == pytest.approx(worthwhileness(pu[i], pd[i], rho[i], eu[i], ed[i]), abs=1e-12)


def econ(price_up=21.67, price_dn=8.46, eps_up=-0.16, eps_dn=0.25, cap=10.0, btc=22050.0, e=147.0, elec=50.0):
    return HourEconomics.build(0, price_up, price_dn, eps_up, eps_dn, cap, btc, e, elec)


def test_net_reward_example():
    h = econ(elec=0.0)
    assert h.rho == pytest.approx(150.0)
    h = HourEconomics.build(0, 21.67, 8.46, -0.16, 0.25, 10, 14700.0, 147.0, 0.0)
    assert net_reward(h, CapacityDecision(10, 0)) == pytest.approx(1056.7)
    assert net_reward(h, CapacityDecision(0, 0)) == pytest.approx(1000.0)
    with pytest.raises(ValidationError):
        net_reward(h, CapacityDecision(6, 5))


@settings(max_examples=300)
@given(
    st.floats(0, 200), st.floats(0, 200), st.floats(-1, 0), st.floats(0, 1),
    st.floats(0, 50), st.floats(0, 150000), st.floats(10, 400), st.floats(0, 300), st.data(),
)
def test_net_reward_decomposes(pu, pd, eu, ed, cap, btc, e, elec, data):
    h = econ(pu, pd, eu, ed, cap, btc, e, elec)
    cu = data.draw(st.floats(0, cap))
    cd = data.draw(st.floats(0, cap - cu))
    three = (
        dam_reward(pu, cu, pd, cd)
        + base_reward(h.rho, cap, cu, cd)
        + deployment_reward(h.rho, eu, cu, ed, cd)
    )
    assert net_reward(h, CapacityDecision(cu, cd)) == pytest.approx(three, rel=1e-9, abs=1e-9)


def test_hour_economics_validation():
    with pytest.raises(ValidationError, match="inconsistent"):
        HourEconomics(0, 1, 1, 99.0, -0.1, 0.1, 10, 22050, 147, 0)
    with pytest.raises(ValidationError):
        econ(eps_up=-1.5)
    with pytest.raises(ValidationError):
        econ(eps_dn=1.5)
    with pytest.raises(ValidationError):
        econ(cap=-1)
    with pytest.raises(ValidationError):
        CapacityDecision(-1, 0)


# ---- optimizer -------------------------------------------------------------


def test_split_examples():
    assert optimal_capacity_split(5.67, -66.54, 10) == CapacityDecision(10, 0)
    assert optimal_capacity_split(-1, -2, 10) == CapacityDecision(0, 0)
    assert optimal_capacity_split(1, 3, 10) == CapacityDecision(0, 10)
    assert classify(1, 3) is Choice.REG_DOWN
    assert classify(0, 0) is Choice.NEITHER


def test_profit_examples():
    assert optimal_participation_profit(5.67, -66.54, 10) == pytest.approx(56.7)
    assert optimal_participation_profit(-3, 0, 7) == 0
    assert optimal_participation_profit(165, 0, 1) == 165


@settings(max_examples=60, deadline=None)
@given(st.integers(-10000, 10000), st.integers(-10000, 10000), st.integers(0, 50000))
def test_split_matches_brute_force(cents_up, cents_dn, kw):
    # $/MW at cent resolution and MW at kW resolution keep every product representable.
    w_up, w_dn, cap = cents_up / 100, cents_dn / 100, kw / 1000
    d = optimal_capacity_split(w_up, w_dn, cap)
    assert d.c_up_mw == 0 or d.c_dn_mw == 0
    assert d.c_up_mw + d.c_dn_mw <= cap
    obj = w_up * d.c_up_mw + w_dn * d.c_dn_mw
    gap = brute_force_split(w_up, w_dn, cap) - obj
    assert gap <= (cap / 100) * max(abs(w_up), abs(w_dn)) + 1e-9
    # The grid includes the vertices, so the vertex optimum is never beaten.
    assert gap <= 1e-9
    profit = optimal_participation_profit(w_up, w_dn, cap)
    assert profit >= 0
    assert profit == pytest.approx(obj, abs=1e-9)
    if d == CapacityDecision(0, 0):
        assert profit == 0
    else:
        assert profit > 0
