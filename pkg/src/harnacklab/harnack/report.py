"""Signed-margin reports shared by every inequality and identity check."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


@dataclass
class HarnackReport:
    """Worst signed margin (RHS − LHS) of one check over its sample set.

    ``samples`` optionally holds flat arrays ``t``, ``x`` and ``margin`` for
    the CSV export; it is not part of :meth:`to_dict`.
    """

    inequality_id: str
    worst_margin: float
    worst_location: tuple
    tolerance: float
    passed: bool
    params_used: Optional[dict] = None
    cert_ref: Optional[dict] = None
    notes: list = field(default_factory=list)
    values: dict = field(default_factory=dict)
    samples: Optional[dict] = None

    @classmethod
    def from_margins(cls, inequality_id, margins, locations, tolerance, **kw):
        """Reduce an array of margins with matching ``locations`` (rows of coordinates)."""
        margins = np.asarray(margins, dtype=float).ravel()
        locations = np.asarray(locations, dtype=float).reshape(len(margins), -1)
        if margins.size == 0:
            raise ValueError(f"{inequality_id}: no sample points survived the masks")
        i = int(np.nanargmin(margins))
        worst = float(margins[i])
        return cls(
            inequality_id=inequality_id,
            worst_margin=worst,
            worst_location=tuple(float(v) for v in locations[i]),
            tolerance=float(tolerance),
            passed=bool(worst >= -tolerance),
            **kw,
        )

    def to_dict(self):
        return {
            "inequality_id": self.inequality_id,
            "worst_margin": self.worst_margin,
            "worst_location": list(self.worst_location),
            "tolerance": self.tolerance,
            "passed": self.passed,
            "params_used": self.params_used,
            "cert_ref": self.cert_ref,
            "notes": list(self.notes),
            "values": {k: _plain(v) for k, v in self.values.items()},
        }

    def __str__(self):
        flag = "PASS" if self.passed else "FAIL"
        return f"[{flag}] {self.inequality_id}: worst margin {self.worst_margin:.3e} (tol {self.tolerance:.1e})"


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, dict):
        return {k: _plain(w) for k, w in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(w) for w in v]
    return v


def write_margin_csv(reports, path, max_rows_per_check=20000):
    """Flat CSV ``inequality_id,t,x,margin``; long sample sets are thinned evenly."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["inequality_id", "t", "x", "margin"])
        for rep in reports:
            s = rep.samples
            if not s:
                continue
            n = len(s["margin"])
            idx = np.arange(n) if n <= max_rows_per_check else np.linspace(0, n - 1, max_rows_per_check).astype(int)
            for i in idx:
                w.writerow([rep.inequality_id, f"{s['t'][i]:.17g}", f"{s['x'][i]:.17g}", f"{s['margin'][i]:.17g}"])
