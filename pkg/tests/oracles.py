"""Reference formulas and frozen values used as test oracles.

Everything here is computed without touching mlob internals: the closed
forms are transcribed from their derivations and the frozen constants were
produced by independent routes (direct quadrature, scipy special functions,
brute-force optimization) and pinned at full double precision.
"""

import math


def y0_closed(c, r, beta, delta):
    return -c * delta / (beta + (1.0 - r) * delta)


def y_inf_closed(c, r, beta, delta):
    return -c * (beta + delta) / (beta + (1.0 - r) * (beta + delta))


def theta_closed(y, c, r, beta, delta):
    """Boundary position theta(y) for the power-law book, both branches."""

    if r == 1.0:
        num = (beta * y + delta * c) * (beta * y + (2.0 * beta + delta) * c)
        return num / (2.0 * beta * delta * c) \
            - c * (beta + delta) / delta \
            * math.log((beta * y + (beta + delta) * c) / (beta * c))
    A = c + (1.0 - r) * y
    B = beta + (1.0 - r) * delta
    C = beta + (1.0 - r) * (beta + delta)
    return (beta * y + delta * A) / (delta * (1.0 - r)) \
        - beta * c * B / (delta * C * (1.0 - r) ** 2) \
        * math.log(A * B / (beta * c)) \
        + beta * c * (beta + delta) / (delta * C) \
        * math.log(beta * A / (beta * y + (beta + delta) * A))


def ttl_closed(y, c, r, beta, delta):
    """Time to liquidation along the boundary.

    The r != 1 branch multiplies by (1 + (1-r) delta/beta) inside the power;
    the quotient variant fails tau(y0) = 0.
    """

    if r == 1.0:
        return -y / (delta * c) - 1.0 / beta \
            - math.log(y / c + 1.0 + delta / beta) / delta
    u = 1.0 + (1.0 - r) * y / c
    inner = (u * (1.0 + (1.0 - r) * delta / beta)) ** (1.0 / (1.0 - r)) \
        * ((y / c) / u + (beta + delta) / beta)
    return -math.log(inner) / delta


def ybar_lambert(tau, c, beta, delta, W):
    """Boundary impact level at time-to-liquidation tau, r = 1 only."""

    return c * W(math.exp(1.0 - delta * tau)) - c * (beta + delta) / beta


def rate_at_foot(c, r, beta, delta):
    return delta * beta * c / (2.0 * beta + (1.0 - r) * delta)


def rate_at_asymptote(c, r, beta, delta):
    return beta * c * (beta + delta) / (beta + (1.0 - r) * (beta + delta))


# r=1 preset (c=1, beta=1, delta=0.5)
R1_V_0_1 = 0.6386994168872432          # V(0, 1)
R1_BLOCK_0_1 = 0.6969965830250368      # initial block from (0, 1)
R1_T_OPT_0_1 = 0.8327857856159011      # liquidation time from (0, 1)
R1_V_BDRY = {0.5: 0.19912249504114413,
             1.0: 0.3134869793112633,
             5.0: 0.6024388503741561}
R1_TWO_SIDED_BLOCK = -0.3              # buy block from (ybar(0.5)-0.3, 0.2)
R1_TWO_SIDED_T = 1.2101429079830817    # liquidation time from that state
R1_TWO_SIDED_W = 0.08014106779105984   # two-sided value at that state
R1_ROUND_TRIP_BLOCK = -0.23609464227505922  # from (y0-0.4, 0)

LAMBERT_W_1 = 0.5671432904097838

# acquisition, eta=0.5 on the r=1 preset
ACQ_FOOT = 0.5                          # root of h(y) lambda(y) = eta
ACQ_BLOCK_0_2 = -1.0458708133091392     # buy block from (0, target 2)
ACQ_T_0_2 = 1.9629163961186777

# type A: delta=0, horizon 1, from (0, 1) on the r=1 book
TYPE_A_BLOCKS = (0.31258872512298885, 0.3748225497540223)
TYPE_A_RATE = 0.31258872512298885
TYPE_A_YSTAR = -0.6874112748770111
TYPE_A_PROCEEDS = 0.7257983129148706

# LS model, Example parameters (mu=-0.5, sigma=1, rho=1, s0=1, T=1, x=1)
LS_Z0 = 0.6065306597126334              # exp(mu T)
LS_X0 = 0.31557822338122776
