import logging
import os

import pytest

from utils.graph_model import load_graph
from utils.logger import Logger
from utils.spectral_solver import SpectralSolver

GRAPH_DIR = os.path.join(os.path.dirname(os.path.dirname(__file__)), "Data", "Graphs")


def graph_path(name):
    return os.path.join(GRAPH_DIR, f"{name}.json")


@pytest.fixture(scope="session")
def logger():
    return Logger(log_file=None, name="qgnlo.test", console_level=logging.WARNING)


@pytest.fixture(scope="session")
def solver(logger):
    return SpectralSolver(logger)


@pytest.fixture(scope="session")
def seven_edge():
    return load_graph(graph_path("seven_edge"))


@pytest.fixture(scope="session")
def three_star():
    return load_graph(graph_path("three_star"))


@pytest.fixture(scope="session")
def box():
    return load_graph(graph_path("box"))


@pytest.fixture(scope="session")
def triangle_loop():
    return load_graph(graph_path("triangle_loop"))


@pytest.fixture(scope="session")
def three_wire():
    return load_graph(graph_path("three_wire"))


@pytest.fixture(scope="session")
def star_spectrum(solver, three_star):
    return solver.find_spectrum(three_star, 30)


@pytest.fixture(scope="session")
def box_spectrum(solver, box):
    return solver.find_spectrum(box, 50)
