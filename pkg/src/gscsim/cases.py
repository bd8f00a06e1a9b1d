"""Small analytic cases used as oracles next to the bundled WSCC data."""
from .netmodel import Branch, Bus, Device, Load, NetworkCase


def two_bus_case(params=None, x=0.1, r=0.0, load_p=0.0, load_q=0.0, sb=1.0, fn=60.0):
    """Device (slack, V=1) at bus 1 feeding a constant-power load at bus 2."""
    return NetworkCase(
        buses=[Bus(1, 1.0, "slack-device"), Bus(2, 1.0, "load")],
        branches=[Branch("L12", 1, 2, r, x)],
        loads=[Load(2, load_p, load_q)],
        devices=[Device("G1", 1, sb, 0.0, 1.0, params)],
        fn=fn, name="two_bus")


def isolated_device_case(params=None, load_p=0.0, load_q=0.0, sb=1.0, fn=60.0):
    """One device whose only neighbour is a constant-power load on its own bus.

    The absorbed power is then independent of the device state, which leaves
    the bare pencil ``(M, D, Omega_b K)`` as the linear dynamics.
    """
    return NetworkCase(
        buses=[Bus(1, 1.0, "slack-device")],
        loads=[Load(1, load_p, load_q)] if (load_p or load_q) else [],
        devices=[Device("G1", 1, sb, 0.0, 1.0, params)],
        fn=fn, name="isolated")
