"""End-to-end checks at their stated tolerances; each prints one PASS/FAIL line."""
import pytest

from maserlab.acceptance import CRITERIA


def _check(n, capsys):
    result = CRITERIA[n]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


def test_generator_equivalence(capsys):
    _check(1, capsys)


def test_removable_singularity_and_small_period_limit(capsys):
    _check(2, capsys)


def test_micro_macro_trajectory_agreement(capsys):
    _check(3, capsys)


def test_steady_state_consistency(capsys):
    _check(4, capsys)


def test_cp_tp_structure(capsys):
    _check(5, capsys)


def test_analytic_oracles(capsys):
    _check(6, capsys)


def test_stochastic_consistency(capsys):
    _check(7, capsys)


def test_pump_statistics_sensitivity(capsys):
    _check(8, capsys)


def test_determinism_and_interface(capsys):
    _check(9, capsys)
