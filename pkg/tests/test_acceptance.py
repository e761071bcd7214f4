"""One test per acceptance criterion; each prints a single PASS/FAIL line."""
import pytest

from kantlab.checks import run_criterion


def _check(number: int) -> None:
    result = run_criterion(number, seed=0)
    print(result.line())
    assert result.passed, result.detail


def test_criterion_01_strong_duality_random_instances():
    _check(1)


def test_criterion_02_cyclical_vs_strong_monotonicity():
    _check(2)


def test_criterion_03_perturbation_map_properties():
    _check(3)


def test_criterion_04_level1_reproduction():
    _check(4)


def test_criterion_05_level2_construction():
    _check(5)


def test_criterion_06_singular_mass_trend():
    _check(6)


def test_criterion_07_example_transport_values():
    _check(7)


@pytest.mark.slow
def test_criterion_08_buildup_profile():
    _check(8)


def test_criterion_09_concentrating_family():
    _check(9)


def test_criterion_10_completion_gap():
    _check(10)


def test_criterion_11_prime_tower_congruences():
    _check(11)
