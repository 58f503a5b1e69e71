import numpy as np
import pytest

from tdcr_mpc.geometry import RobotGeometry


@pytest.fixture
def geom():
    return RobotGeometry()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_consistent_state(rng, geom, max_rel_curvature=0.6):
    """Random tendon-consistent state with curvature safely below 1/r_t."""
    gamma = rng.uniform(geom.segment_min, geom.segment_max, 3)
    kappa = rng.uniform(0.0, max_rel_curvature / geom.tendon_pitch_radius, 3)
    phi = rng.uniform(-np.pi, np.pi, 3)
    from tdcr_mpc.kinematics import ArcParameters, arcs_to_tendons

    return arcs_to_tendons(ArcParameters(kappa=kappa, phi=phi, gamma=gamma), geom)
