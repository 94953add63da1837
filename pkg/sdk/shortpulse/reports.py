"""
Run manifest and report emission.

Tables are written with pandas as UTF-8 CSV with LF line endings, a header
row and 17 significant digits so values round-trip exactly. The manifest
goes to ``summary.json``.
"""

from __future__ import annotations

import json
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterator, List, Mapping, Optional, Union

import pandas as pd

from .exceptions import ReportWriteError

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SUMMARY_FILE = "summary.json"


@dataclass
class Check:
    """One acceptance check; ``hard`` checks decide the exit status."""

    name: str
    passed: bool
    hard: bool = True
    value: Optional[float] = None
    detail: str = ""


@dataclass
class RunManifest:
    """What ran, how long it took, and which checks passed."""

    scenario: str
    config: Dict[str, Any]
    version: str
    started: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat())
    timings: Dict[str, float] = field(default_factory=dict)
    checks: List[Check] = field(default_factory=list)
    aborts: List[Dict[str, Any]] = field(default_factory=list)
    artifacts: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.hard)

    def add_check(self, name: str, passed: bool, hard: bool = True,
                  value: Optional[float] = None, detail: str = "") -> Check:
        """Record a check; each name may appear only once."""
        if any(c.name == name for c in self.checks):
            raise ValueError(f"check {name!r} recorded twice")
        check = Check(name, bool(passed), hard, None if value is None else float(value), detail)
        self.checks.append(check)
        if not check.passed:
            logger.warning("check %s failed (value=%s) %s", name, value, detail)
        return check

    def record_abort(self, stage: str, exc: BaseException, t: Optional[float] = None) -> None:
        """Keep a solver abort with its time stamp."""
        if t is None:
            t = getattr(exc, "t", getattr(exc, "tau", None))
        self.aborts.append({"stage": stage, "type": type(exc).__name__,
                            "message": str(exc), "time": t})

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - start

    def to_dict(self) -> Dict[str, Any]:
        out = asdict(self)
        out["passed"] = self.passed
        return _json_safe(out)


def _json_safe(value: Any) -> Any:
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, Mapping):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if hasattr(value, "item"):
        return _json_safe(value.item())
    return value


def write_table(table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Write one CSV table.

    Raises:
        ReportWriteError: If the file cannot be written.
    """
    path = Path(path)
    try:
        table.to_csv(path, index=False, float_format=FLOAT_FORMAT,
                     lineterminator="\n", encoding="utf-8")
    except OSError as exc:
        raise ReportWriteError(f"cannot write {path}: {exc}") from exc
    logger.info("wrote %s (%d rows)", path, len(table))
    return path


def emit_reports(manifest: RunManifest, tables: Mapping[str, pd.DataFrame],
                 out_dir: Union[str, Path]) -> List[Path]:
    """Write every table and ``summary.json`` into ``out_dir``.

    Args:
        manifest: The run manifest; its ``artifacts`` list is filled in.
        tables: File name to table.
        out_dir: Target directory, created if missing.

    Returns:
        Paths written, the summary last.

    Raises:
        ReportWriteError: If the directory or any file cannot be written.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportWriteError(f"cannot create {out}: {exc}") from exc

    written = [write_table(table, out / name) for name, table in sorted(tables.items())]
    manifest.artifacts = [p.name for p in written]
    summary = out / SUMMARY_FILE
    try:
        summary.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise ReportWriteError(f"cannot write {summary}: {exc}") from exc
    logger.info("wrote %s (%d checks, passed=%s)", summary, len(manifest.checks), manifest.passed)
    written.append(summary)
    return written
