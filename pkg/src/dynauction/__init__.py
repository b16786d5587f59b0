"""Exact-arithmetic solvers for revenue-optimal dynamic auctions."""

from .model import (  # noqa: F401
    NO_SALE,
    DiscreteDistribution,
    DeterministicMechanism,
    MultiDayInstance,
    RandomizedMechanism,
    Rational,
    TwoDayInstance,
    expectation,
    parse_instance,
    parse_mechanism,
    serialize_instance,
    serialize_mechanism,
    tail_integral,
)
