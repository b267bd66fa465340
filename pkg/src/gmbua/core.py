"""Core data model, validation, and raw-binary file I/O.

Files are raw little-endian float32 (band-sequential for cubes, row-major
for abundance matrices) with a ``.meta`` plain-text sidecar declaring the
dimensions, and group ranges for bundle-level abundances.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .penalties import GroupStructure

TAU_FEAS = 1e-6


class DataError(Exception):
    """Malformed file, dimension mismatch, or invariant violation."""


def _freeze(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class HsiCube:
    """Reflectance cube stored as an L x N matrix with H x W spatial layout."""

    data: np.ndarray
    height: int
    width: int
    wavelengths: np.ndarray | None = None

    def __post_init__(self):
        data = _freeze(self.data)
        object.__setattr__(self, "data", data)
        if data.ndim != 2:
            raise DataError("cube data must be a 2-D (bands, pixels) matrix")
        if self.height <= 0 or self.width <= 0:
            raise DataError("height and width must be positive")
        if data.shape[1] != self.height * self.width:
            raise DataError(
                f"pixel count {data.shape[1]} != height*width {self.height * self.width}"
            )
        if not np.all(np.isfinite(data)):
            raise DataError("cube contains non-finite values")
        if self.wavelengths is not None:
            wl = _freeze(self.wavelengths)
            if wl.shape != (data.shape[0],):
                raise DataError("wavelengths length must equal band count")
            object.__setattr__(self, "wavelengths", wl)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.data.shape[1]

    def flatten_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.height and 0 <= col < self.width):
            raise IndexError("pixel coordinates out of range")
        return row * self.width + col

    def unflatten_index(self, n: int) -> tuple[int, int]:
        if not 0 <= n < self.n_pixels:
            raise IndexError("pixel index out of range")
        return divmod(n, self.width)


@dataclass(frozen=True)
class BundleLibrary:
    """L x Q signature matrix partitioned into P contiguous groups."""

    signatures: np.ndarray
    groups: GroupStructure

    def __post_init__(self):
        sig = _freeze(self.signatures)
        object.__setattr__(self, "signatures", sig)
        report = validate_library(self)
        if report:
            raise DataError("invalid library: " + "; ".join(report))

    @property
    def n_signatures(self) -> int:
        return self.signatures.shape[1]

    @property
    def n_materials(self) -> int:
        return len(self.groups)


def validate_library(lib) -> list[str]:
    """Return a list of violated invariants (empty iff the library is valid)."""
    report = []
    sig = np.asarray(lib.signatures, dtype=np.float64)
    if sig.ndim != 2:
        report.append("signatures must be a 2-D matrix")
        return report
    if not np.all(np.isfinite(sig)):
        report.append("signatures contain non-finite entries")
    elif np.any(sig < 0):
        report.append("signatures contain negative entries")
    groups = lib.groups
    ranges = groups.ranges if isinstance(groups, GroupStructure) else tuple(groups)
    pos = 0
    for a, b in ranges:
        if a != pos:
            report.append(f"group range ({a}, {b}) breaks the contiguous partition")
        if b <= a:
            report.append(f"group range ({a}, {b}) is empty")
        pos = max(pos, b)
    if pos != sig.shape[1]:
        report.append(
            f"group ranges cover {pos} columns but the library has {sig.shape[1]}"
        )
    return report


@dataclass(frozen=True)
class AbundanceMatrix:
    """Columnwise simplex-feasible coefficients, bundle-level (Q x N) or
    global (P x N)."""

    level: str
    coefficients: np.ndarray
    groups: GroupStructure | None = None
    tol: float = TAU_FEAS

    def __post_init__(self):
        if self.level not in ("bundle", "global"):
            raise DataError(f"unknown abundance level {self.level!r}")
        coef = _freeze(self.coefficients)
        object.__setattr__(self, "coefficients", coef)
        if coef.ndim != 2:
            raise DataError("coefficients must be a 2-D matrix")
        if self.level == "bundle":
            if self.groups is None:
                raise DataError("bundle-level abundances require group ranges")
            if self.groups.q != coef.shape[0]:
                raise DataError(
                    f"group ranges cover {self.groups.q} rows, matrix has {coef.shape[0]}"
                )
        if np.any(coef < -self.tol):
            raise DataError("abundance matrix violates nonnegativity")
        sums = coef.sum(axis=0)
        if np.any(np.abs(sums - 1.0) > self.tol):
            worst = float(np.max(np.abs(sums - 1.0)))
            raise DataError(f"abundance columns must sum to 1 (worst deviation {worst:.3g})")

    @property
    def n_pixels(self) -> int:
        return self.coefficients.shape[1]


# ---------------------------------------------------------------------------
# sidecar + raw binary I/O

def _write_meta(path: Path, fields: dict) -> None:
    lines = [f"{k} = {v}" for k, v in fields.items()]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_meta(path: Path) -> dict:
    if not path.exists():
        raise DataError(f"missing sidecar {path}")
    fields = {}
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"corrupt sidecar line in {path}: {line!r}")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    return fields


def _meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def _groups_to_str(groups: GroupStructure) -> str:
    return ",".join(f"{a}:{b}" for a, b in groups.ranges)


def _groups_from_str(text: str) -> GroupStructure:
    try:
        ranges = tuple(
            (int(a), int(b))
            for a, b in (item.split(":") for item in text.split(",") if item)
        )
        return GroupStructure(ranges)
    except (ValueError, IndexError) as exc:
        raise DataError(f"corrupt group-range list {text!r}") from exc


def _load_raw(path: Path, rows: int, cols: int) -> np.ndarray:
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != rows * cols:
        raise DataError(
            f"{path}: expected {rows * cols} float32 values, file holds {raw.size}"
        )
    data = raw.reshape(rows, cols).astype(np.float64)
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path}: non-finite values in binary data")
    return data


def save_cube(cube: HsiCube, path) -> None:
    path = Path(path)
    cube.data.astype("<f4").tofile(path)
    fields = {
        "lines": cube.height,
        "samples": cube.width,
        "bands": cube.bands,
        "dtype": "float32",
        "interleave": "bsq",
    }
    if cube.wavelengths is not None:
        fields["wavelengths"] = ",".join(f"{w:g}" for w in cube.wavelengths)
    _write_meta(_meta_path(path), fields)


def load_cube(path) -> HsiCube:
    path = Path(path)
    meta = _read_meta(_meta_path(path))
    try:
        lines, samples, bands = int(meta["lines"]), int(meta["samples"]), int(meta["bands"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"sidecar for {path} lacks valid lines/samples/bands") from exc
    if meta.get("dtype", "float32") != "float32":
        raise DataError(f"unsupported dtype {meta.get('dtype')!r}")
    if meta.get("interleave", "bsq") != "bsq":
        raise DataError(f"unsupported interleave {meta.get('interleave')!r}")
    data = _load_raw(path, bands, lines * samples)
    wl = None
    if "wavelengths" in meta:
        wl = np.array([float(w) for w in meta["wavelengths"].split(",")])
    return HsiCube(data=data, height=lines, width=samples, wavelengths=wl)


def save_abundance(a: AbundanceMatrix, path) -> None:
    path = Path(path)
    a.coefficients.astype("<f4").tofile(path)
    fields = {
        "rows": a.coefficients.shape[0],
        "samples": a.n_pixels,
        "level": a.level,
        "dtype": "float32",
    }
    if a.groups is not None:
        fields["groups"] = _groups_to_str(a.groups)
    _write_meta(_meta_path(path), fields)


def load_abundance(path) -> AbundanceMatrix:
    path = Path(path)
    meta = _read_meta(_meta_path(path))
    try:
        rows, samples = int(meta["rows"]), int(meta["samples"])
        level = meta["level"]
    except (KeyError, ValueError) as exc:
        raise DataError(f"sidecar for {path} lacks valid rows/samples/level") from exc
    data = _load_raw(path, rows, samples)
    groups = _groups_from_str(meta["groups"]) if "groups" in meta else None
    # float32 quantization can push column sums slightly past the default
    # tolerance; widen it by the worst-case rounding of a length-`rows` sum
    tol = TAU_FEAS + rows * 1e-7
    return AbundanceMatrix(level=level, coefficients=data, groups=groups, tol=tol)


def save_library(lib: BundleLibrary, path) -> None:
    path = Path(path)
    lib.signatures.astype("<f4").tofile(path)
    _write_meta(
        _meta_path(path),
        {
            "rows": lib.signatures.shape[0],
            "samples": lib.n_signatures,
            "level": "library",
            "dtype": "float32",
            "groups": _groups_to_str(lib.groups),
        },
    )


def load_library(path) -> BundleLibrary:
    path = Path(path)
    meta = _read_meta(_meta_path(path))
    try:
        rows, samples = int(meta["rows"]), int(meta["samples"])
        groups = _groups_from_str(meta["groups"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"sidecar for {path} lacks valid library fields") from exc
    data = _load_raw(path, rows, samples)
    return BundleLibrary(signatures=data, groups=groups)
