import dataclasses

import pytest

from faasmeter.simulator import (
    FunctionSpec,
    GroundTruth,
    IATSpec,
    Scenario,
    SynthesisOptions,
    WorkloadSpec,
    load_scenario,
    simulate,
)


def make_scenario(
    functions,
    watts,
    duration=600.0,
    seed=3,
    idle=0.0,
    jcp=0.0,
    noise=0.0,
    quant=0.0,
    skew=0.0,
    **options,
) -> Scenario:
    """Small helper: ``functions`` is a list of (id, mean latency, mean IAT)."""
    specs = tuple(
        FunctionSpec(fid, lat, 0.1, IATSpec("exponential", iat)) for fid, lat, iat in functions
    )
    truth = GroundTruth(idle, dict(watts), jcp, noise, quant, skew)
    return Scenario("test", WorkloadSpec(specs, duration, seed), truth, SynthesisOptions(**options))


def noiseless(scenario: Scenario) -> Scenario:
    t = dataclasses.replace(scenario.truth, noise_std_watts=0.0, quantization_step_watts=0.0, injected_skew=0.0)
    return dataclasses.replace(scenario, truth=t)


@pytest.fixture(scope="session")
def four_fn():
    return load_scenario("four_fn")


@pytest.fixture(scope="session")
def four_fn_run(four_fn):
    return simulate(four_fn)


@pytest.fixture(scope="session")
def three_fn_run():
    return simulate(load_scenario("three_fn"))
