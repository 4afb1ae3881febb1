import copy

import pytest

from lfodamp.case import Bus, Generator, GridCase, Line, load_case


@pytest.fixture(scope="session")
def kundur_base():
    return load_case("kundur_2area")


@pytest.fixture(scope="session")
def ieee39_base():
    return load_case("ieee39")


@pytest.fixture
def kundur(kundur_base):
    return copy.deepcopy(kundur_base)


@pytest.fixture
def ieee39(ieee39_base):
    return copy.deepcopy(ieee39_base)


def machine(bus, P=0.0, rating=100.0, H=5.0, D=0.0, Xd=1.0, Xdp=0.3, Td0p=8.0, Ka=200.0,
            Ta=0.01, lim=6.0):
    return Generator(bus=bus, rating=rating, H=H, D=D, Xd=Xd, Xd_prime=Xdp, Td0_prime=Td0p,
                     Ka=Ka, Ta=Ta, Efd_min=-lim, Efd_max=lim, P_dispatch=P)


def two_bus(P_load=0.0, Q_load=0.0, x=0.1, r=0.0):
    """Slack at bus 1, PQ load at bus 2 over one line (100 MVA base)."""
    return GridCase(100.0, 60.0,
                    [Bus(1, "slack", 1.0), Bus(2, "PQ", 1.0, P_load, Q_load)],
                    [Line(1, 2, r, x)],
                    [machine(1)], name="two_bus")
