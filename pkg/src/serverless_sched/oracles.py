"""Closed-form queueing results used to check the simulator."""

from __future__ import annotations

import math


def mm1_mean_response(lam, mu):
    if not lam < mu:
        raise ValueError("M/M/1 is unstable for lam >= mu")
    return 1.0 / (mu - lam)


def erlang_c(c, offered):
    """Probability an arrival waits in M/M/c with offered load ``offered`` = lam/mu."""
    if not offered < c:
        raise ValueError("M/M/c is unstable for offered load >= c")
    term = 1.0
    total = 1.0
    for k in range(1, c):
        term *= offered / k
        total += term
    last = term * offered / c * c / (c - offered)
    return last / (total + last)


def mmc_mean_wait(lam, mu, c):
    return erlang_c(c, lam / mu) / (c * mu - lam)
