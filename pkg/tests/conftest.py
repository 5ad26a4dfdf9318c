"""Shared fixtures: the workhorse models and one lazily built sampler."""

import pytest

import smiq


@pytest.fixture(scope="session")
def ex1():
    return smiq.example1()


@pytest.fixture(scope="session")
def ex1_sampler(ex1):
    # per-state diagnostics use streams keyed at build time, so sharing the
    # sampler across tests cannot leak randomness between them
    model, rates = ex1
    rng = smiq.stream_from_seed(7001)
    return smiq.LimitLawSampler.build(model, rates, rng)
