"""Shared models, bases and networks for the test suite."""

from pathlib import Path

import numpy as np
import pytest

from graphonlqr import (
    CouplingModel,
    DictionaryGraphon,
    GridFunction,
    SbmSpec,
    SubspaceBasis,
    sample_initial_state,
)

REPO_ROOT = Path(__file__).parent.parent
EXPERIMENTS = REPO_ROOT / "experiments"

BLOCK_PROBS = ((0.25, 0.05, 0.02), (0.05, 0.35, 0.07), (0.02, 0.07, 0.4))

TRIG_A = DictionaryGraphon.from_terms(
    [(1.0, "sin1", "sin1"), (1.0, "cos1", "cos1"), (0.5, "sin1", "cos1"), (0.5, "cos1", "sin1")]
)
TRIG_B = DictionaryGraphon.from_terms([(-0.5, "sin1", "sin1"), (0.5, "cos1", "cos1")])
TRIG_Q = DictionaryGraphon.from_terms([(0.5, "sin1", "sin1")])
TRIG_QT = DictionaryGraphon.from_terms([(0.5, "cos1", "cos1")])


def trig_model(**overrides: object) -> CouplingModel:
    """Scalar agents coupled by four kernels that share span{sin1, cos1}."""
    params: dict[str, object] = {
        "L_a": 2.0,
        "D_a": 1.0,
        "L_b": 1.2,
        "D_b": 1.0,
        "L_q": 1.0,
        "D_q": 1.0,
        "L_qT": 2.0,
        "D_qT": 1.0,
        "A": TRIG_A,
        "B": TRIG_B,
        "Q": TRIG_Q,
        "QT": TRIG_QT,
    }
    params.update(overrides)
    return CouplingModel.create(**params)  # type: ignore[arg-type]


@pytest.fixture
def model() -> CouplingModel:
    return trig_model()


@pytest.fixture
def basis() -> SubspaceBasis:
    return SubspaceBasis.from_dictionary(["sin1", "cos1"], 40)


@pytest.fixture
def x0() -> GridFunction:
    return sample_initial_state(np.random.default_rng(0), 40, 1)


@pytest.fixture
def block_spec() -> SbmSpec:
    return SbmSpec(block_probs=BLOCK_PROBS, block_sizes=(20, 20, 20), seed=3)
