import numpy as np
import pytest

from bcetest import (
    GameSpec,
    PayoffSpec,
    ThetaMap,
    TypeDist,
    discretize,
)


def make_uniform_game(d1=0.5, d2=0.5, r=10, beta=0.0, x_val=0.0):
    """Two-player entry game with uniform(-1,1) types and payoffs
    y_i (x beta + eps_i - d_i y_{-i})."""
    spec = GameSpec(
        num_players=2,
        actions_per_player=(2, 2),
        payoff=PayoffSpec(beta=[beta], delta=[[0.0, d1], [d2, 0.0]],
                          interaction_sign=-1),
        type_dist=TypeDist("uniform", -1.0, 1.0),
        covariate_support=((x_val,),),
        theta_map=ThetaMap(("delta[0,1]", "delta[1,0]")),
    )
    return discretize(spec, [r, r], rho=0.0)


def make_normal_game(delta=-0.8, beta=0.3, r=4, rho=0.0, n_x=1):
    """Two-player entry game with standard-normal types and shared interaction."""
    support = tuple((float(v),) for v in np.linspace(-1, 1, n_x)) if n_x > 1 \
        else ((1.0,),)
    spec = GameSpec(
        num_players=2,
        actions_per_player=(2, 2),
        payoff=PayoffSpec(beta=[beta], delta=[[0.0, delta], [delta, 0.0]],
                          interaction_sign=1),
        type_dist=TypeDist("standard-normal"),
        covariate_support=support,
        theta_map=ThetaMap(("beta[0]", "delta_all")),
    )
    return discretize(spec, [r, r], rho=rho)


@pytest.fixture
def uniform_game():
    return make_uniform_game


@pytest.fixture
def normal_game():
    return make_normal_game
