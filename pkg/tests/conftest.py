import numpy as np
import pytest

from riscf.channels import ChannelSet
from riscf.core import NetworkDims, PhaseConfig, PhaseConstraint, PrecoderStack


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_dims(rng, max_b=2, max_r=2, max_k=3, max_m=3, max_u=2, max_n=4, max_p=2, min_r=0):
    return NetworkDims(
        B=int(rng.integers(1, max_b + 1)),
        R=int(rng.integers(min_r, max_r + 1)),
        K=int(rng.integers(1, max_k + 1)),
        M=int(rng.integers(1, max_m + 1)),
        U=int(rng.integers(1, max_u + 1)),
        N=int(rng.integers(1, max_n + 1)),
        P=int(rng.integers(1, max_p + 1)),
    )


def random_channels(rng, d: NetworkDims, ris_scale=1.0) -> ChannelSet:
    return ChannelSet(
        d,
        crandn(rng, d.B, d.K, d.P, d.M, d.U),
        ris_scale * crandn(rng, d.B, d.R, d.P, d.N, d.M),
        crandn(rng, d.R, d.K, d.P, d.N, d.U),
    )


def random_precoder(rng, d: NetworkDims, scale=1.0) -> PrecoderStack:
    return PrecoderStack(scale * crandn(rng, d.precoder_size), d.B, d.M, d.P, d.K)


def random_theta(rng, d: NetworkDims, constraint=PhaseConstraint()) -> PhaseConfig:
    n = d.R * d.N
    if constraint.kind == "F1":
        th = np.sqrt(rng.random(n)) * np.exp(2j * np.pi * rng.random(n))
    elif constraint.kind == "F2":
        th = np.exp(2j * np.pi * rng.random(n))
    else:
        th = constraint.grid[rng.integers(0, constraint.levels, n)]
    return PhaseConfig(th, constraint)


def random_instance(seed, **kw):
    """Channels, precoder, phases, weights and noise for a small random network."""
    rng = np.random.default_rng(seed)
    d = random_dims(rng, **kw)
    cs = random_channels(rng, d)
    W = random_precoder(rng, d)
    theta = random_theta(rng, d)
    eta = rng.uniform(0.5, 2.0, d.K)
    noise = float(rng.uniform(0.1, 1.0))
    return cs, W, theta, eta, noise


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    verdicts = getattr(mod, "VERDICTS", None)
    if verdicts:
        terminalreporter.section("acceptance criteria")
        for n in sorted(verdicts):
            terminalreporter.write_line(verdicts[n])
