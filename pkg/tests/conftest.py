"""Shared fixtures: small analytic problems used across the suite."""

import numpy as np
import pytest

from penaltyflow import QpData, qp_problem


@pytest.fixture
def halfspace_data():
    """min (1/2)||x||^2 subject to x1 >= 1; optimum (1, 0), f* = 0.5,
    multiplier 1 on the single constraint."""
    return QpData(H=np.eye(2), F=np.zeros(2),
                  A=np.array([[-1.0, 0.0]]), B=np.array([-1.0]))


@pytest.fixture
def halfspace_problem(halfspace_data):
    return qp_problem(halfspace_data)


@pytest.fixture
def bound_1d_data():
    """min (1/2)x^2 subject to x >= 2; optimum x* = 2, multiplier 2."""
    return QpData(H=np.array([[1.0]]), F=np.zeros(1),
                  A=np.array([[-1.0]]), B=np.array([-2.0]))
