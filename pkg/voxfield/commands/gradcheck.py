"""Finite-difference gradient verification command."""

from __future__ import annotations

import dataclasses as dc
import typing as typ

from voxfield.autodiff.gradcheck import DEFAULT_STEP
from voxfield.autodiff.suites import DEFAULT_FIXTURES, DEFAULT_TOLERANCE, run_suites
from voxfield.errors import NumericalError

if typ.TYPE_CHECKING:
    from voxfield.autodiff.suites import SuiteResult


@dc.dataclass(frozen=True, slots=True)
class Options:
    """Inputs of the ``gradcheck`` command."""

    suites: tuple[str, ...] = ()
    fixtures: int = DEFAULT_FIXTURES
    step: float = DEFAULT_STEP
    tolerance: float = DEFAULT_TOLERANCE


def format_results(results: list[SuiteResult]) -> str:
    """Return one aligned line per suite with its worst error."""
    worst: dict[str, float] = {}
    for result in results:
        worst[result.suite] = max(worst.get(result.suite, 0.0), result.error)
    width = max((len(name) for name in worst), default=0)
    lines = []
    for name, error in worst.items():
        status = "ok" if all(
            result.passed for result in results if result.suite == name
        ) else "FAIL"
        lines.append(f"{name:<{width}}  {error:.3e}  {status}")
    return "\n".join(lines)


def run(options: Options | None = None) -> str:
    """Run the selected gradient suites and raise if any of them fails."""
    settings = Options() if options is None else options
    results = run_suites(
        settings.suites or None,
        fixtures=settings.fixtures,
        h=settings.step,
        tolerance=settings.tolerance,
    )
    table = format_results(results)
    failed = sorted({result.suite for result in results if not result.passed})
    if failed:
        message = f"gradient check failed for {', '.join(failed)}\n{table}"
        raise NumericalError(message)
    return f"{table}\nAll {len(results)} gradient fixture(s) passed"
