"""Run scenarios: backend selection, trace objects, text serialization.

The kernel exists twice at runtime: the compiled extension built from
``_kernel.py`` (imported normally; the .so shadows the .py) and the
interpreted source loaded explicitly as a fallback or on request.  Both
are the same file, so traces are bit-identical across backends; a test
holds them to that.

The text trace format is the compatibility contract::

    # fatalsim-trace v1
    # {json metadata}
    time_ps,node,machine,state[,aux]

with machine one of main, ext, resync-trigger, resync-support, quick,
cycle-counter, fast-counter, hazard.  Switch records carry the self-loop
arrival instant of the switch in aux; hazard records carry the enabled
count.
"""

from __future__ import annotations

import importlib.util
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import scenario as scenario_mod
from .scenario import Scenario

TRACE_MAGIC = "# fatalsim-trace v1"

MACHINE_NAMES = ("main", "ext", "resync-trigger", "resync-support", "quick",
                 "cycle-counter", "fast-counter", "hazard")
MAIN_NAMES = scenario_mod.MAIN_NAMES
EXT_NAMES = scenario_mod.EXT_NAMES
TRIG_NAMES = scenario_mod.TRIG_NAMES
QUICK_NAMES = scenario_mod.QUICK_NAMES

_RS_SUPP_BASE = 1
_RS_SUPP_RESYNC = _RS_SUPP_BASE + 32
_RS_RESYNC = _RS_SUPP_RESYNC + 1


def rsupp_name(state: int) -> str:
    if state == 0:
        return "none"
    if state == _RS_SUPP_RESYNC:
        return "supp_resync"
    if state == _RS_RESYNC:
        return "resync"
    return f"supp_{state - _RS_SUPP_BASE}"


def rsupp_value(name: str) -> int:
    if name == "none":
        return 0
    if name == "supp_resync":
        return _RS_SUPP_RESYNC
    if name == "resync":
        return _RS_RESYNC
    return _RS_SUPP_BASE + int(name[5:])


_STATE_NAMES = {
    0: lambda s: MAIN_NAMES[s],
    1: lambda s: EXT_NAMES[s],
    2: lambda s: TRIG_NAMES[s],
    3: rsupp_name,
    4: lambda s: QUICK_NAMES[s],
    5: str,
    6: str,
    7: lambda s: MACHINE_NAMES[s],  # hazard: which machine had >1 guard
}

_STATE_VALUES = {
    "main": lambda v: MAIN_NAMES.index(v),
    "ext": lambda v: EXT_NAMES.index(v),
    "resync-trigger": lambda v: TRIG_NAMES.index(v),
    "resync-support": rsupp_value,
    "quick": lambda v: QUICK_NAMES.index(v),
    "cycle-counter": int,
    "fast-counter": int,
    "hazard": lambda v: MACHINE_NAMES.index(v),
}


class BackendError(RuntimeError):
    pass


_pure_kernel_mod = None


def load_kernel(backend: str = "auto"):
    """Return the kernel module for a backend: auto, compiled, or pure."""
    global _pure_kernel_mod
    from . import _kernel as default_kernel

    if backend == "auto":
        env = os.environ.get("FATALSIM_BACKEND", "").strip()
        backend = env if env in ("compiled", "pure") else "auto"
    if backend == "compiled":
        if not default_kernel.COMPILED:
            raise BackendError("compiled kernel requested but not built")
        return default_kernel
    if backend == "pure":
        if not default_kernel.COMPILED:
            return default_kernel
        if _pure_kernel_mod is None:
            path = os.path.join(os.path.dirname(__file__), "_kernel.py")
            spec = importlib.util.spec_from_file_location("fatalsim._kernel_pure", path)
            mod = importlib.util.module_from_spec(spec)
            sys.modules["fatalsim._kernel_pure"] = mod
            spec.loader.exec_module(mod)
            _pure_kernel_mod = mod
        return _pure_kernel_mod
    if backend == "auto":
        return default_kernel
    raise BackendError(f"unknown backend {backend!r} (auto/compiled/pure)")


def backend_name(mod) -> str:
    return "compiled" if mod.COMPILED else "pure"


@dataclass
class Trace:
    """Totally ordered switch/counter/hazard records plus run metadata."""

    meta: dict
    t: np.ndarray
    node: np.ndarray
    mach: np.ndarray
    state: np.ndarray
    aux: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    def records(self):
        return zip(self.t, self.node, self.mach, self.state, self.aux)

    def to_text(self) -> str:
        lines = [TRACE_MAGIC, "# " + json.dumps(self.meta, sort_keys=True)]
        for t, node, mach, state, aux in self.records():
            name = MACHINE_NAMES[mach]
            sname = _STATE_NAMES[mach](state)
            lines.append(f"{t},{node},{name},{sname},{aux}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Trace":
        lines = text.splitlines()
        if not lines or lines[0] != TRACE_MAGIC:
            raise ValueError("not a trace file (bad magic line)")
        if len(lines) < 2 or not lines[1].startswith("# "):
            raise ValueError("missing metadata line")
        meta = json.loads(lines[1][2:])
        cols = ([], [], [], [], [])
        for lineno, line in enumerate(lines[2:], start=3):
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
            try:
                t = int(parts[0])
                node = int(parts[1])
                mach = MACHINE_NAMES.index(parts[2])
                state = _STATE_VALUES[parts[2]](parts[3])
                aux = int(parts[4])
            except (ValueError, IndexError, KeyError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
            cols[0].append(t)
            cols[1].append(node)
            cols[2].append(mach)
            cols[3].append(state)
            cols[4].append(aux)
        arrays = [np.asarray(c, dtype=np.int64) for c in cols]
        return cls(meta, *arrays)

    @classmethod
    def read(cls, path) -> "Trace":
        with open(path) as fh:
            return cls.from_text(fh.read())


def run(sc: Scenario, seed: int | None = None, backend: str = "auto") -> Trace:
    """Execute one scenario deterministically and return its trace."""
    if seed is not None:
        sc.seed = seed
    cfg = scenario_mod.lower(sc)
    kernel = load_kernel(backend)
    core = kernel.SimCore(cfg)
    core.run()
    t, node, mach, state, aux = core.trace_arrays()
    meta = sc.header_meta()
    meta["digest"] = sc.digest()
    return Trace(
        meta,
        np.asarray(t, dtype=np.int64),
        np.asarray(node, dtype=np.int64),
        np.asarray(mach, dtype=np.int64),
        np.asarray(state, dtype=np.int64),
        np.asarray(aux, dtype=np.int64),
    )


def init_state(sc: Scenario, seed: int | None = None, backend: str = "auto") -> list:
    """The initial port/flag/timer assignment a run of this seed would use."""
    if seed is not None:
        sc.seed = seed
    cfg = scenario_mod.lower(sc)
    kernel = load_kernel(backend)
    core = kernel.SimCore(cfg)
    return [core.snapshot(i) for i in range(sc.params.n)]
