"""Report rows, comparison statistics and the report emitter."""

import csv
import json
import logging
import math
import os
import sys
import tempfile
import threading
from dataclasses import dataclass, fields
from io import StringIO
from pathlib import Path
from typing import (
    Any,
    Dict,
    Iterable,
    List,
    Optional,
    Sequence,
    Type,
    TypeVar,
    Union,
    get_type_hints,
)

from .engine import NliBreakdown
from .profile import ChannelFit
from .system import FibreSpec
from .utils import NliError, neper_per_m_to_db_per_km, offset_to_wavelength

__all__ = [
    "SCHEMA_VERSION",
    "REPORT_FORMATS",
    "ReportRow",
    "EstimateRow",
    "FitRow",
    "ComparisonRow",
    "ComparisonStats",
    "SweepRow",
    "SweepStatsRow",
    "ReportEmitter",
    "to_db",
]

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REPORT_FORMATS = ("csv", "json")

Scalar = Union[int, float, str, bool, None]
R = TypeVar("R", bound="ReportRow")


def to_db(value: Optional[float]) -> Optional[float]:
    """10 log10(value), or None where the logarithm does not exist."""
    if value is None or not (value > 0 and math.isfinite(value)):
        return None
    return 10 * math.log10(value)


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _format_cell(value: Scalar) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_cell(text: str, hint: Any) -> Scalar:
    optional = getattr(hint, "__args__", None)
    if optional is not None:
        if text == "":
            return None
        hint = next(a for a in optional if a is not type(None))
    if hint is bool:
        return text == "true"
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    return text


class ReportRow:
    """
    Base of every report row.

    Subclasses are dataclasses whose fields are the report columns, in
    order. Numeric payloads are identical in CSV and JSON: floats use the
    shortest round-trip repr and missing values are empty/null.
    """

    @classmethod
    def header(cls) -> List[str]:
        return [f.name for f in fields(cls)]  # type: ignore[arg-type]

    def to_csv_row(self) -> List[str]:
        """Convert the row to CSV cells."""
        return [_format_cell(getattr(self, name)) for name in self.header()]

    @classmethod
    def from_csv_row(cls: Type[R], row: List[str]) -> R:
        """Create a row from CSV cells; missing trailing cells read as empty."""
        hints = get_type_hints(cls)
        values = {
            name: _parse_cell(row[n] if n < len(row) else "", hints[name])
            for n, name in enumerate(cls.header())
        }
        return cls(**values)

    def to_json(self) -> Dict[str, Scalar]:
        return {name: getattr(self, name) for name in self.header()}


@dataclass(frozen=True)
class EstimateRow(ReportRow):
    """Per-channel NLI breakdown; eta values in dB(1/W^2), channel 1-based."""

    channel: int
    wavelength_nm: float
    f_offset_hz: float
    power_dbm: Optional[float]
    eta_spm_db: Optional[float]
    eta_xpm_db: Optional[float]
    eta_fwm_db: Optional[float]
    eta_nli_db: Optional[float]
    snr_nli_db: Optional[float]
    snr_total_db: Optional[float]
    eps_spm: Optional[float]
    eps_xpm: Optional[float]
    eps_fwm: Optional[float]
    eps_total: Optional[float]
    fwm_fallbacks: int

    @classmethod
    def from_breakdown(cls, b: NliBreakdown) -> "EstimateRow":
        return cls(
            channel=b.channel + 1,
            wavelength_nm=b.wavelength * 1e9,
            f_offset_hz=b.f_offset,
            power_dbm=to_db(b.power * 1e3),
            eta_spm_db=to_db(b.eta_spm),
            eta_xpm_db=to_db(b.eta_xpm),
            eta_fwm_db=to_db(b.eta_fwm),
            eta_nli_db=to_db(b.eta_nli),
            snr_nli_db=_finite(b.snr_nli),
            snr_total_db=_finite(b.snr_total),
            eps_spm=_finite(b.epsilon_spm),
            eps_xpm=_finite(b.epsilon_xpm),
            eps_fwm=_finite(b.epsilon_fwm),
            eps_total=_finite(b.epsilon_total),
            fwm_fallbacks=b.fwm_fallbacks,
        )


@dataclass(frozen=True)
class FitRow(ReportRow):
    """Effective ISRS parameters of one channel; losses in dB/km."""

    channel: int
    wavelength_nm: float
    f_offset_hz: float
    alpha_db_km: float
    alpha_tilde_db_km: float
    cr_per_w_m_hz: float
    t: float
    t_tilde: float
    residual_rms: float
    converged: bool

    @classmethod
    def from_fit(cls, n: int, fit: ChannelFit, spec: FibreSpec) -> "FitRow":
        return cls(
            channel=n + 1,
            wavelength_nm=offset_to_wavelength(fit.f_offset, spec.f_ref) * 1e9,
            f_offset_hz=fit.f_offset,
            alpha_db_km=neper_per_m_to_db_per_km(fit.alpha_i),
            alpha_tilde_db_km=neper_per_m_to_db_per_km(fit.alpha_tilde_i),
            cr_per_w_m_hz=fit.cr_i,
            t=fit.t_i,
            t_tilde=fit.t_tilde_i,
            residual_rms=fit.residual_rms,
            converged=fit.converged,
        )


@dataclass(frozen=True)
class ComparisonRow(ReportRow):
    """SNR_NLI of the closed form against the integral model for one channel."""

    channel: int
    wavelength_nm: float
    snr_nli_closed_db: Optional[float]
    snr_nli_oracle_db: Optional[float]
    delta_db: Optional[float]

    @classmethod
    def from_pair(cls, closed: NliBreakdown, oracle: NliBreakdown) -> "ComparisonRow":
        if closed.channel != oracle.channel:
            raise NliError(
                f"comparing channel {closed.channel + 1} against {oracle.channel + 1}"
            )
        delta = None
        if closed.snr_nli is not None and oracle.snr_nli is not None:
            delta = closed.snr_nli - oracle.snr_nli
        return cls(
            channel=closed.channel + 1,
            wavelength_nm=closed.wavelength * 1e9,
            snr_nli_closed_db=_finite(closed.snr_nli),
            snr_nli_oracle_db=_finite(oracle.snr_nli),
            delta_db=_finite(delta),
        )


@dataclass(frozen=True)
class ComparisonStats:
    """
    Summary of per-channel SNR_NLI deltas.

    ``deltas`` keeps one entry per compared channel; channels without a
    delta stay in the list as None and are left out of the statistics.
    """

    deltas: Sequence[Optional[float]]
    mean_abs: Optional[float]
    max_abs: Optional[float]
    argmax_wavelength_nm: Optional[float]

    @classmethod
    def from_rows(cls, rows: Sequence[ComparisonRow]) -> "ComparisonStats":
        return cls.from_deltas(
            [r.delta_db for r in rows], [r.wavelength_nm for r in rows]
        )

    @classmethod
    def from_deltas(
        cls, deltas: Sequence[Optional[float]], wavelengths_nm: Sequence[float]
    ) -> "ComparisonStats":
        """
        Build stats from deltas [dB] and their channel wavelengths [nm].

        Raises:
            NliError: If the two sequences differ in length
        """
        if len(deltas) != len(wavelengths_nm):
            raise NliError(
                f"{len(deltas)} deltas for {len(wavelengths_nm)} wavelengths"
            )
        valid = [(abs(d), w) for d, w in zip(deltas, wavelengths_nm) if d is not None]
        if not valid:
            return cls(tuple(deltas), None, None, None)
        worst, where = max(valid, key=lambda p: p[0])
        mean = math.fsum(a for a, _ in valid) / len(valid)
        return cls(tuple(deltas), mean, worst, where)

    def summary(self) -> Dict[str, Scalar]:
        return {
            "channels": len(self.deltas),
            "mean_abs_db": self.mean_abs,
            "max_abs_db": self.max_abs,
            "argmax_wavelength_nm": self.argmax_wavelength_nm,
        }


@dataclass(frozen=True)
class SweepRow(ReportRow):
    """One channel at one sweep point (long format)."""

    axis: str
    value: float
    channel: int
    wavelength_nm: float
    eta_nli_db: Optional[float]
    snr_nli_db: Optional[float]
    eps_total: Optional[float]

    @classmethod
    def from_breakdown(cls, axis: str, value: float, b: NliBreakdown) -> "SweepRow":
        return cls(
            axis=axis,
            value=float(value),
            channel=b.channel + 1,
            wavelength_nm=b.wavelength * 1e9,
            eta_nli_db=to_db(b.eta_nli),
            snr_nli_db=_finite(b.snr_nli),
            eps_total=_finite(b.epsilon_total),
        )


@dataclass(frozen=True)
class SweepStatsRow(ReportRow):
    """Comparison statistics at one sweep point."""

    axis: str
    value: float
    channels: int
    mean_abs_db: Optional[float]
    max_abs_db: Optional[float]
    argmax_wavelength_nm: Optional[float]

    @classmethod
    def from_stats(cls, axis: str, value: float, stats: ComparisonStats) -> "SweepStatsRow":
        return cls(
            axis=axis,
            value=float(value),
            channels=len(stats.deltas),
            mean_abs_db=stats.mean_abs,
            max_abs_db=stats.max_abs,
            argmax_wavelength_nm=stats.argmax_wavelength_nm,
        )


class ReportEmitter:
    """
    Collect report rows and write them once, atomically.

    Rows may be added from several threads; the file is written by
    :meth:`save`. Without an output path the report goes to stdout.

    Example:
        with ReportEmitter("estimate", "csv", Path("out.csv")) as report:
            report.add_rows(rows)
            report.save()
    """

    def __init__(
        self,
        kind: str,
        fmt: str = "csv",
        output: Optional[Path] = None,
    ):
        if fmt not in REPORT_FORMATS:
            raise NliError(f"unknown report format: {fmt}")
        self.kind = kind
        self.fmt = fmt
        self.output = output
        self._rows: List[ReportRow] = []
        self._summary: Dict[str, Scalar] = {}
        self._lock = threading.Lock()

    def add(self, row: ReportRow) -> None:
        with self._lock:
            if self._rows and type(row) is not type(self._rows[0]):
                raise NliError(
                    f"cannot mix {type(row).__name__} into a "
                    f"{type(self._rows[0]).__name__} report"
                )
            self._rows.append(row)

    def add_rows(self, rows: Iterable[ReportRow]) -> None:
        for row in rows:
            self.add(row)

    def set_summary(self, values: Dict[str, Scalar]) -> None:
        with self._lock:
            self._summary.update(values)

    @property
    def rows(self) -> List[ReportRow]:
        return list(self._rows)

    def render(self) -> str:
        """Report text in the configured format."""
        if self.fmt == "json":
            return self._render_json()
        return self._render_csv()

    def _render_csv(self) -> str:
        output = StringIO()
        output.write(f"# schema_version={SCHEMA_VERSION}\n")
        output.write(f"# report={self.kind}\n")
        for key, value in self._summary.items():
            output.write(f"# {key}={_format_cell(value)}\n")
        writer = csv.writer(output, lineterminator="\n")
        if self._rows:
            writer.writerow(type(self._rows[0]).header())
        for row in self._rows:
            writer.writerow(row.to_csv_row())
        return output.getvalue()

    def _render_json(self) -> str:
        document: Dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "report": self.kind,
        }
        if self._summary:
            document["summary"] = dict(self._summary)
        document["rows"] = [row.to_json() for row in self._rows]
        return json.dumps(document, indent=2, allow_nan=False) + "\n"

    def save(self) -> None:
        """
        Write the report to the output path, or stdout when there is none.

        Raises:
            NliError: If writing the file fails
        """
        content = self.render()
        if self.output is None:
            sys.stdout.write(content)
            return

        # Temp file next to the target so the final rename stays on one filesystem.
        try:
            temp_fd, temp_path_str = tempfile.mkstemp(
                suffix=f".{self.fmt}", dir=self.output.parent
            )
        except OSError as e:
            raise NliError(f"Failed to write report: {e}") from e
        temp_path = Path(temp_path_str)

        try:
            with open(temp_fd, "w", encoding="utf-8", newline="", closefd=False) as f:
                f.write(content)
            temp_path.replace(self.output)
            logger.info("wrote %d %s row(s) to %s", len(self._rows), self.kind, self.output)

        except Exception as e:
            try:
                temp_path.unlink()
            except Exception:
                pass
            raise NliError(f"Failed to write report: {e}") from e

        finally:
            try:
                os.close(temp_fd)
            except Exception:
                pass

    def close(self) -> None:
        with self._lock:
            self._rows.clear()
            self._summary.clear()

    def __enter__(self) -> "ReportEmitter":
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        self.close()
