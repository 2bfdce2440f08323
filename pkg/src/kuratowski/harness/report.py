"""Experiment results and their on-disk form.

Every run directory holds ``summary.txt`` (``key = value`` lines), one CSV per
table, ``config.echo`` (the input config without comments) and ``run.log``.
Floats are written with ``repr`` and nothing time-dependent is recorded, so
identical configs give byte-identical files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

from ..errors import ResourceError, UsageError


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Result:
    experiment: str
    summary: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    log: list = field(default_factory=list)

    def add(self, key, value):
        self.summary.append((key, value))

    def check(self, name, passed, detail=""):
        self.checks.append(Check(name, bool(passed), detail))
        self.log.append(f"[{'pass' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
        return bool(passed)

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    @property
    def failed(self):
        return [c.name for c in self.checks if not c.passed]


def fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "item"):
        return fmt(value.item())
    return str(value)


def write_report(result, output_dir, echo=""):
    """Write the run directory; returns the list of paths written."""
    if result is None or not (result.summary or result.tables or result.checks):
        raise UsageError("nothing to report")
    try:
        os.makedirs(output_dir, exist_ok=True)
        written = []

        def put(name, text):
            path = os.path.join(output_dir, name)
            with open(path, "w", newline="\n") as fh:
                fh.write(text)
            written.append(path)

        lines = [f"experiment = {result.experiment}",
                 f"status = {'pass' if result.passed else 'fail'}"]
        lines += [f"{k} = {fmt(v)}" for k, v in result.summary]
        lines += [f"check.{c.name} = {'pass' if c.passed else 'fail'}" for c in result.checks]
        if result.failed:
            lines.append("violated = " + " ".join(result.failed))
        put("summary.txt", "\n".join(lines) + "\n")
        for name, rows in result.tables.items():
            put(name, "\n".join(rows) + "\n")
        for name, text in result.files.items():
            put(name, text)
        put("config.echo", echo)
        put("run.log", "\n".join(result.log) + "\n")
    except OSError as exc:
        raise ResourceError(f"cannot write report to {output_dir}: {exc}") from exc
    return written
