from __future__ import annotations

import pytest

from scaml_gp.cli import EXIT_OK, main
from scaml_gp.verification import (
    SUITES,
    CheckReport,
    verify_eq9,
    verify_gradients,
    verify_psd,
    verify_scaling,
    verify_theorem1,
)


def test_modular_posterior_agrees_with_joint_oracle():
    report = verify_theorem1()
    assert report.passed, report.failing_config
    assert report.checks == 20


def test_likelihood_decomposition_suite():
    report = verify_eq9()
    assert report.passed, report.failing_config
    assert report.max_error < 1e-8


def test_psd_suite():
    report = verify_psd()
    assert report.passed, report.failing_config
    assert report.checks >= 250


def test_gradient_suite():
    report = verify_gradients()
    assert report.passed, report.failing_config


def test_scaling_suite():
    report = verify_scaling(repeats=20)
    assert report.passed, report.details


def test_failing_configuration_is_kept():
    report = verify_eq9(configurations=3, tolerance=-1.0)
    assert not report.passed
    assert report.failing_config["configuration"] == 0
    assert report.checks == 3


def test_check_report_keeps_first_failure():
    report = CheckReport(name="demo", tolerance=0.5)
    report.record(0.1, {"i": 0})
    report.record(0.9, {"i": 1})
    report.record(2.0, {"i": 2})
    assert not report.passed
    assert report.failing_config == {"i": 1, "error": 0.9}
    assert report.max_error == 2.0


def test_every_suite_is_registered():
    assert set(SUITES) == {"theorem1", "eq9", "psd", "gradients", "scaling"}


@pytest.mark.parametrize("suite", ["psd", "eq9"])
def test_cli_verify(suite):
    assert main(["verify", suite]) == EXIT_OK
