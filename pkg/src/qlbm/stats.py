"""Gate and measurement accounting."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

# Column layout of the int64 counter vectors filled by the kernels.
SEL_RY, SEL_MEAS, UCRY, PAIR_MEAS, STREAM, SHIFTS, REST = range(7)
N_COUNTERS = 7


@dataclass
class GateStats:
    selection_ry: int = 0
    selection_measurements: int = 0
    ucry: int = 0
    pair_measurements: int = 0
    streaming: int = 0
    cyclic_shifts: int = 0
    rest_steps: int = 0
    cnot_equivalents: int = 0

    @classmethod
    def from_counters(cls, counters, cnots_per_ucry: int) -> "GateStats":
        c = [int(x) for x in np.asarray(counters)]
        return cls(
            selection_ry=c[SEL_RY],
            selection_measurements=c[SEL_MEAS],
            ucry=c[UCRY],
            pair_measurements=c[PAIR_MEAS],
            streaming=c[STREAM],
            cyclic_shifts=c[SHIFTS],
            rest_steps=c[REST],
            cnot_equivalents=c[UCRY] * cnots_per_ucry,
        )

    @property
    def measurements(self) -> int:
        return self.selection_measurements + self.pair_measurements

    @property
    def resets(self) -> int:
        # every mid-circuit measurement is followed by a reset of the ancilla
        return self.measurements

    @property
    def steps(self) -> int:
        return self.ucry + self.rest_steps

    def __add__(self, other: "GateStats") -> "GateStats":
        return GateStats(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["measurements"] = self.measurements
        d["resets"] = self.resets
        return d
