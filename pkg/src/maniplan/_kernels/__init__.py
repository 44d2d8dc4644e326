"""Kernel backend selection.

Two interchangeable backends implement the numeric core (FK, task error /
Jacobian, damped least-squares step, segment projection, motion validation):

* ``pure``      — scalar Python, always available, the reference.
* ``_compiled`` — Cython transcription of the same statements, built by
                  setup.py when a C toolchain is present.

They are required to be bit-identical (enforced by the test suite), so the
choice only affects speed.  Set ``MANIPLAN_KERNELS`` to ``pure``,
``compiled``, or ``auto`` (default) before importing maniplan to override.
"""

from __future__ import annotations

import os

from . import pure

__all__ = ["active", "active_name", "compiled_module", "pure"]


def compiled_module():
    """Return the compiled backend module, or None if it was not built."""
    try:
        from . import _compiled
    except ImportError:
        return None
    return _compiled


_choice = os.environ.get("MANIPLAN_KERNELS", "auto").strip().lower()
if _choice == "pure":
    active = pure
elif _choice == "compiled":
    from . import _compiled as active  # noqa: F401  (ImportError is the point)
elif _choice in ("auto", ""):
    active = compiled_module() or pure
else:
    raise ImportError(
        f"MANIPLAN_KERNELS={_choice!r}: expected 'pure', 'compiled', or 'auto'")

active_name: str = active.name
