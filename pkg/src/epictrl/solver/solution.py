"""On-disk solution: a flat binary block plus a JSON index.

Layout of ``<stem>.bin`` (little-endian, no padding):

* values  ``float64[Nt + 1, S]``
* policy  ``int32[Nt, S]`` (flat control index, -1 while unsolved)
* theta   ``float64[Nt + 1, 14]`` (NaN unless the regression backend ran)

``<stem>.json`` records offsets, shapes, the grid, hashes and progress, so
an interrupted solve can resume at the first unsolved step.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .basis import N_BASIS
from .grid import Grid, GridSpec

BACKENDS = ("interp", "regress", "nearest")


def _atomic_json(path: Path, payload: dict):
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True))
    os.replace(tmp, path)


class Solution:
    """Per-step value tables, policy tables and regression coefficients.

    Backed by ``numpy.memmap`` when created with a path, by plain arrays
    otherwise.
    """

    def __init__(self, backend: str, spec: GridSpec, Nt: int, path=None, meta: dict | None = None,
                 mode: str = "w+"):
        if backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        self.backend = backend
        self.spec = spec
        self.grid = Grid(spec)
        self.Nt = int(Nt)
        self.meta = dict(meta or {})
        S = self.grid.size
        self.offsets = {"values": 0,
                        "policy": 8 * (self.Nt + 1) * S}
        self.offsets["theta"] = self.offsets["policy"] + 4 * self.Nt * S
        self.nbytes = self.offsets["theta"] + 8 * (self.Nt + 1) * N_BASIS
        self.path = None if path is None else Path(path)
        if self.path is None:
            self.values = np.zeros((self.Nt + 1, S))
            self.policy = np.full((self.Nt, S), -1, dtype=np.int32)
            self.theta = np.full((self.Nt + 1, N_BASIS), np.nan)
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if mode == "w+":
                with open(self.bin_path, "wb") as fh:
                    fh.truncate(self.nbytes)
            self.values = np.memmap(self.bin_path, "<f8", mode if mode != "w+" else "r+",
                                    self.offsets["values"], (self.Nt + 1, S))
            self.policy = np.memmap(self.bin_path, "<i4", mode if mode != "w+" else "r+",
                                    self.offsets["policy"], (self.Nt, S))
            self.theta = np.memmap(self.bin_path, "<f8", mode if mode != "w+" else "r+",
                                   self.offsets["theta"], (self.Nt + 1, N_BASIS))
            if mode == "w+":
                self.policy[:] = -1
                self.theta[:] = np.nan
        # smallest n whose value table is final; Nt + 1 means nothing solved
        self.first_done = int(self.meta.get("first_done", self.Nt + 1))

    @property
    def bin_path(self) -> Path:
        return self.path.with_suffix(".bin")

    @property
    def json_path(self) -> Path:
        return self.path.with_suffix(".json")

    @property
    def complete(self) -> bool:
        return self.first_done == 0

    def index(self) -> dict:
        return {"backend": self.backend, "Nt": self.Nt, "grid": self.spec.to_dict(),
                "states": self.grid.size, "controls": self.grid.n_controls,
                "offsets": self.offsets, "nbytes": self.nbytes,
                "dtypes": {"values": "<f8", "policy": "<i4", "theta": "<f8"},
                "first_done": self.first_done, **{k: v for k, v in self.meta.items() if k != "first_done"}}

    def checkpoint(self, first_done: int, **extra):
        """Record that steps ``first_done..Nt`` are final and flush to disk."""
        self.first_done = int(first_done)
        self.meta.update(extra)
        if self.path is not None:
            for arr in (self.values, self.policy, self.theta):
                arr.flush()
            _atomic_json(self.json_path, self.index())

    @classmethod
    def open(cls, path, mode: str = "r") -> "Solution":
        """Reopen a persisted solution (``mode="r+"`` to resume)."""
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        spec = GridSpec.from_dict(meta["grid"])
        sol = cls(meta["backend"], spec, meta["Nt"], path, meta, mode=mode)
        if os.path.getsize(sol.bin_path) != sol.nbytes:
            raise OSError(f"{sol.bin_path}: size does not match its index")
        return sol

    def value_at_nodes(self, n: int) -> np.ndarray:
        return np.asarray(self.values[n])

    def policy_at_nodes(self, n: int) -> np.ndarray:
        """Controls ``(S, 3)`` chosen at step ``n``."""
        return self.grid.controls[np.asarray(self.policy[n])]
