"""Pluggable provider interfaces for the two generative seams.

The engine ships deterministic defaults (grammar extraction, mock video
synthesis). Anything matching these protocols can be swapped in, but
provider output never bypasses validation or classification.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable


class ProviderUnavailable(Exception):
    """The provider could not produce a result (down, timeout, refused)."""


@runtime_checkable
class ExtractionProvider(Protocol):
    """Turns a clinical note into a constraint set."""

    def extract(self, note) -> "ConstraintSet":  # noqa: F821
        ...


@runtime_checkable
class SynthesisProvider(Protocol):
    """Turns a synthesis prompt into an opaque video reference."""

    def generate(self, prompt) -> str:
        ...
