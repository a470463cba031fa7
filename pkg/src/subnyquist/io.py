"""File formats: Nyquist-grid signals, measurement bundles and result CSVs.

Signals are read either as raw little-endian float64 (optionally interleaved
re/im pairs) or as CSV with one (real) or two (re, im) numeric columns.
A measurement bundle is an ``.npz`` archive with arrays ``y`` and ``phi``
and scalar ``K`` (optionally ``sigma`` and ``omega``/``d`` for ground truth),
or a directory holding ``y.csv`` (re, im), ``phi.csv`` (M rows of N) and
``meta.csv`` (``key,value`` lines, at least ``K``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ArtifactIOError, StructuralError


def format_value(v) -> str:
    """Stable text for a CSV cell; floats use the shortest round-trip repr."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        return repr(f)
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([format_value(v) for v in row])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _read_numeric_csv(path) -> np.ndarray:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if rows:
        try:
            [float(c) for c in rows[0]]
        except ValueError:
            rows = rows[1:]  # header line
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise StructuralError(f"{path}: non-numeric entry ({exc})") from exc
    if data.ndim != 2:
        raise StructuralError(f"{path}: rows have unequal length")
    return data


def read_nyquist_signal(path, complex_interleaved: bool = False) -> np.ndarray:
    """Load a Nyquist-grid sequence from ``.csv`` or raw little-endian float64."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        data = _read_numeric_csv(path)
        if data.shape[1] == 1:
            return data[:, 0]
        if data.shape[1] == 2:
            return data[:, 0] + 1j * data[:, 1]
        raise StructuralError(f"{path}: expected 1 or 2 columns, found {data.shape[1]}")
    try:
        raw = np.fromfile(path, dtype="<f8")
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if complex_interleaved:
        if raw.size % 2:
            raise StructuralError(f"{path}: odd number of floats for interleaved complex data")
        return raw[0::2] + 1j * raw[1::2]
    return raw


def write_nyquist_signal(path, x) -> Path:
    """Write raw little-endian float64; complex input is interleaved re/im."""
    path = Path(path)
    x = np.asarray(x)
    data = np.column_stack([x.real, x.imag]).ravel() if np.iscomplexobj(x) else x
    try:
        data.astype("<f8").tofile(path)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def write_power_csv(path, p_hat) -> Path:
    rows = [(i, float(v)) for i, v in enumerate(np.asarray(p_hat))]
    return write_csv(path, ["segment_index", "p_hat"], rows)


@dataclass(frozen=True)
class MeasurementBundle:
    y: np.ndarray
    phi: np.ndarray
    K: int
    sigma: float | None = None
    omega: np.ndarray | None = None
    d: np.ndarray | None = None


def read_measurement_bundle(path) -> MeasurementBundle:
    path = Path(path)
    if path.is_dir():
        y = _read_numeric_csv(path / "y.csv")
        if y.shape[1] != 2:
            raise StructuralError(f"{path / 'y.csv'}: expected columns re, im")
        phi = _read_numeric_csv(path / "phi.csv")
        meta = {}
        try:
            with open(path / "meta.csv", newline="", encoding="utf-8") as fh:
                for row in csv.reader(fh):
                    if len(row) >= 2 and row[0].strip() not in ("key", ""):
                        meta[row[0].strip()] = row[1].strip()
        except OSError as exc:
            raise ArtifactIOError(f"cannot read {path / 'meta.csv'}: {exc.strerror or exc}") from exc
        if "K" not in meta:
            raise StructuralError(f"{path / 'meta.csv'}: missing key K")
        sigma = float(meta["sigma"]) if "sigma" in meta else None
        bundle = MeasurementBundle(y[:, 0] + 1j * y[:, 1], phi, int(meta["K"]), sigma)
    else:
        try:
            with np.load(path) as z:
                arrays = {k: z[k] for k in z.files}
        except OSError as exc:
            raise ArtifactIOError(f"cannot read {path}: {exc}") from exc
        for key in ("y", "phi", "K"):
            if key not in arrays:
                raise StructuralError(f"{path}: missing array {key!r}")
        bundle = MeasurementBundle(
            y=np.asarray(arrays["y"], dtype=complex),
            phi=np.asarray(arrays["phi"], dtype=float),
            K=int(arrays["K"]),
            sigma=float(arrays["sigma"]) if "sigma" in arrays else None,
            omega=arrays.get("omega"),
            d=arrays.get("d"),
        )
    if bundle.phi.ndim != 2 or bundle.phi.shape[0] != bundle.y.size:
        raise StructuralError(
            f"{path}: phi has shape {bundle.phi.shape}, y has {bundle.y.size} entries"
        )
    return bundle


def write_measurement_bundle(path, bundle: MeasurementBundle) -> Path:
    arrays = {"y": bundle.y, "phi": bundle.phi, "K": np.int64(bundle.K)}
    if bundle.sigma is not None:
        arrays["sigma"] = np.float64(bundle.sigma)
    if bundle.omega is not None:
        arrays["omega"] = bundle.omega
    if bundle.d is not None:
        arrays["d"] = bundle.d
    try:
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return Path(path)
