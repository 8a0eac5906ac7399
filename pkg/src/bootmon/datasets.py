"""Dataset loading, validation, and partitioning.

A :class:`DatasetTable` is an immutable numeric design matrix plus target
vector. Tables are produced either by parsing a raw source file according
to the schema registry (``registry.cfg``, shipped with the package) or by
reading the canonical cached CSV format. Partition helpers build the
sorted three-way splits and rolling-window plans that drive the
benchmarks.

Canonical cached format: UTF-8 CSV, header row = feature names followed by
``target``, ``.`` decimal separator, LF line endings, floats written with
shortest round-trip precision so a write/read cycle is bit-exact for
finite doubles.
"""

from __future__ import annotations

import configparser
import csv
import io
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

_REGISTRY_PATH = Path(__file__).parent / "registry.cfg"

_DELIMITERS = {"comma": ",", "semicolon": ";", "tab": "\t", "whitespace": None}

_DEFAULT_NA = ("", "NA", "N/A", "?", "nan", "NaN")


class DatasetError(Exception):
    """Raised for unknown datasets, malformed files, or schema violations."""


@dataclass(frozen=True)
class DatasetTable:
    """A named numeric design matrix with target vector.

    ``features`` is an (n, d) float64 matrix, ``target`` a length-n float64
    vector. Instances are immutable and safe to share across workers.
    """

    name: str
    feature_names: tuple[str, ...]
    features: np.ndarray
    target: np.ndarray
    n_dropped: int = 0

    def __post_init__(self):
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        tgt = np.ascontiguousarray(np.asarray(self.target, dtype=np.float64))
        if feats.ndim != 2:
            raise DatasetError("features must be a 2-d matrix")
        if tgt.ndim != 1 or tgt.shape[0] != feats.shape[0]:
            raise DatasetError("target length must match feature row count")
        if feats.shape[1] != len(self.feature_names):
            raise DatasetError("feature_names length must match column count")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DatasetError("feature names must be pairwise distinct")
        if feats.size and not np.isfinite(feats).all():
            raise DatasetError("features contain non-finite values")
        if tgt.size and not np.isfinite(tgt).all():
            raise DatasetError("target contains non-finite values")
        feats.setflags(write=False)
        tgt.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "target", tgt)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def column_index(self, feature: str) -> int:
        try:
            return self.feature_names.index(feature)
        except ValueError:
            raise DatasetError(
                f"dataset {self.name!r} has no feature {feature!r}"
            ) from None

    def column(self, feature: str) -> np.ndarray:
        return self.features[:, self.column_index(feature)]

    def take(self, rows: np.ndarray, name: str | None = None) -> "DatasetTable":
        """Row-subset copy, preserving feature names."""
        rows = np.asarray(rows, dtype=np.intp)
        return DatasetTable(
            name=name or self.name,
            feature_names=self.feature_names,
            features=self.features[rows],
            target=self.target[rows],
        )


@dataclass(frozen=True)
class SplitTriple:
    """Index partition from a sorted three-way split.

    The three lists partition all rows; every feature value in ``lower_idx``
    is <= every value in ``train_idx`` which is <= every value in
    ``upper_idx`` (ties resolved by stable sort order).
    """

    feature: str
    lower_idx: np.ndarray
    train_idx: np.ndarray
    upper_idx: np.ndarray


@dataclass(frozen=True)
class WindowPlan:
    """Rolling [start, end) ranges over a sorted row order."""

    window_size: int
    stride: int
    window_ranges: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class RegistryEntry:
    """Source schema and expected shape for one known dataset."""

    name: str
    n_rows: int
    n_features: int
    delimiter: str = "comma"
    header: bool = True
    target: str = "-1"
    categorical: tuple[str, ...] = ()
    use_columns: tuple[str, ...] = ()
    url: str = ""
    generated: bool = False
    user_supplied: bool = False
    substantive: tuple[str, ...] = ()


def load_registry(path: Path | None = None) -> dict[str, RegistryEntry]:
    """Parse the plain-text dataset registry into entries keyed by name."""
    parser = configparser.ConfigParser()
    with open(path or _REGISTRY_PATH, encoding="utf-8") as fh:
        parser.read_file(fh)
    entries = {}
    for section in parser.sections():
        sec = parser[section]

        def _tuple(key):
            raw = sec.get(key, "").strip()
            return tuple(s.strip() for s in raw.split(",") if s.strip())

        entries[section] = RegistryEntry(
            name=section,
            n_rows=sec.getint("n_rows"),
            n_features=sec.getint("n_features"),
            delimiter=sec.get("delimiter", "comma"),
            header=sec.getboolean("header", True),
            target=sec.get("target", "-1"),
            categorical=_tuple("categorical"),
            use_columns=_tuple("use_columns"),
            url=sec.get("url", ""),
            generated=sec.getboolean("generated", False),
            user_supplied=sec.getboolean("user_supplied", False),
            substantive=_tuple("substantive"),
        )
    return entries


def _float_repr(x: float) -> str:
    return repr(float(x))


def write_canonical_csv(table: DatasetTable, path: Path | str) -> None:
    """Write the canonical cached CSV (LF endings, round-trip precision)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join((*table.feature_names, "target")) + "\n")
        feats, tgt = table.features, table.target
        for i in range(table.n_rows):
            row = [_float_repr(v) for v in feats[i]]
            row.append(_float_repr(tgt[i]))
            fh.write(",".join(row) + "\n")


def _is_canonical(header_fields: list[str]) -> bool:
    return len(header_fields) >= 2 and header_fields[-1] == "target"


def _parse_value(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise DatasetError(f"malformed numeric value {text!r} at {where}") from None


def _read_rows(path: Path, delimiter: str) -> list[list[str]]:
    sep = _DELIMITERS.get(delimiter)
    if delimiter not in _DELIMITERS:
        raise DatasetError(f"unknown delimiter kind {delimiter!r} in registry")
    rows = []
    with open(path, encoding="utf-8") as fh:
        if sep is None:
            for line in fh:
                fields = line.split()
                if fields:
                    rows.append(fields)
        else:
            for fields in csv.reader(fh, delimiter=sep):
                if fields and any(f.strip() for f in fields):
                    rows.append([f.strip() for f in fields])
    return rows


def load_dataset(name: str, path: Path | str) -> DatasetTable:
    """Load a dataset by registry name from ``path``.

    The file may be either the canonical cached CSV (detected by its
    ``target`` header column) or a raw source file matching the registry
    schema for ``name``. Rows containing missing values are dropped and the
    drop count is reported on the returned table and in the log.
    """
    registry = load_registry()
    if name not in registry:
        raise DatasetError(
            f"unknown dataset {name!r}; known: {', '.join(sorted(registry))}"
        )
    entry = registry[name]
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset file not found: {path}")
    rows = _read_rows(path, entry.delimiter if not _looks_canonical(path) else "comma")
    if not rows:
        raise DatasetError(f"empty dataset file: {path}")

    if _is_canonical(rows[0]):
        table = _from_canonical(name, rows, path)
    else:
        table = _from_source(entry, rows, path)

    if table.n_rows < 3 or table.n_features < 1:
        raise DatasetError(
            f"dataset {name!r} too small after loading "
            f"({table.n_rows} rows, {table.n_features} features)"
        )
    if table.n_features != entry.n_features:
        raise DatasetError(
            f"dataset {name!r}: expected {entry.n_features} features, "
            f"got {table.n_features}"
        )
    if table.n_rows != entry.n_rows:
        log.warning(
            "dataset %s: expected %d rows, loaded %d (%d dropped)",
            name, entry.n_rows, table.n_rows, table.n_dropped,
        )
    return table


def _looks_canonical(path: Path) -> bool:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    fields = [f.strip() for f in first.strip().split(",")]
    return _is_canonical(fields)


def _from_canonical(name: str, rows: list[list[str]], path: Path) -> DatasetTable:
    header = rows[0]
    feature_names = tuple(header[:-1])
    d = len(feature_names)
    feats, tgt, dropped = [], [], 0
    for lineno, fields in enumerate(rows[1:], start=2):
        if len(fields) != d + 1:
            raise DatasetError(
                f"malformed row at {path}:{lineno}: expected {d + 1} fields, "
                f"got {len(fields)}"
            )
        if any(f in _DEFAULT_NA for f in fields):
            dropped += 1
            continue
        feats.append([_parse_value(f, f"{path}:{lineno}") for f in fields[:-1]])
        tgt.append(_parse_value(fields[-1], f"{path}:{lineno}"))
    if dropped:
        log.warning("dataset %s: dropped %d rows with missing values", name, dropped)
    if not feats:
        raise DatasetError(f"no complete rows in {path}")
    return DatasetTable(
        name=name,
        feature_names=feature_names,
        features=np.array(feats, dtype=np.float64),
        target=np.array(tgt, dtype=np.float64),
        n_dropped=dropped,
    )


def _from_source(entry: RegistryEntry, rows: list[list[str]], path: Path) -> DatasetTable:
    if entry.header:
        header = rows[0]
        data_rows = rows[1:]
        first_line = 2
    else:
        header = [f"col{i}" for i in range(len(rows[0]))]
        data_rows = rows
        first_line = 1

    ncol = len(header)
    target_col = _resolve_column(entry.target, header, entry.name)
    if entry.use_columns:
        feature_cols = [_resolve_column(c, header, entry.name) for c in entry.use_columns]
    else:
        feature_cols = [i for i in range(ncol) if i != target_col]
    categorical = {_resolve_column(c, header, entry.name) for c in entry.categorical}

    kept: list[list[str]] = []
    dropped = 0
    for offset, fields in enumerate(data_rows):
        lineno = first_line + offset
        if len(fields) != ncol:
            raise DatasetError(
                f"malformed row at {path}:{lineno}: expected {ncol} fields, "
                f"got {len(fields)}"
            )
        wanted = [fields[c] for c in (*feature_cols, target_col)]
        if any(w in _DEFAULT_NA for w in wanted):
            dropped += 1
            continue
        kept.append(fields)
    if dropped:
        log.warning("dataset %s: dropped %d rows with missing values", entry.name, dropped)
    if not kept:
        raise DatasetError(f"no complete rows in {path}")

    # Ordinal-encode categorical columns by sorted label.
    encodings: dict[int, dict[str, float]] = {}
    for c in categorical:
        labels = sorted({row[c] for row in kept})
        encodings[c] = {lab: float(i) for i, lab in enumerate(labels)}

    n = len(kept)
    feats = np.empty((n, len(feature_cols)), dtype=np.float64)
    tgt = np.empty(n, dtype=np.float64)
    for i, fields in enumerate(kept):
        for j, c in enumerate(feature_cols):
            if c in encodings:
                feats[i, j] = encodings[c][fields[c]]
            else:
                feats[i, j] = _parse_value(fields[c], f"{path}: data row {i + 1}")
        if target_col in encodings:
            tgt[i] = encodings[target_col][fields[target_col]]
        else:
            tgt[i] = _parse_value(fields[target_col], f"{path}: data row {i + 1}")
    return DatasetTable(
        name=entry.name,
        feature_names=tuple(header[c] for c in feature_cols),
        features=feats,
        target=tgt,
        n_dropped=dropped,
    )


def _resolve_column(spec: str, header: list[str], dataset: str) -> int:
    try:
        idx = int(spec)
        return idx % len(header) if idx < 0 else idx
    except ValueError:
        pass
    try:
        return header.index(spec)
    except ValueError:
        raise DatasetError(
            f"dataset {dataset!r}: column {spec!r} not found in header"
        ) from None


def random_split(
    ds: DatasetTable, test_fraction: float, seed: int
) -> tuple[DatasetTable, DatasetTable]:
    """Uniform random disjoint row split with |test| = round(fraction * n).

    Rounding is half-away-from-zero. Deterministic given ``seed``; row order
    inside each part follows original row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    n = ds.n_rows
    n_test = int(math.floor(test_fraction * n + 0.5))
    if n_test < 1:
        raise ValueError("test_fraction * n must be at least 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    test_rows = np.sort(perm[:n_test])
    train_rows = np.sort(perm[n_test:])
    return ds.take(train_rows), ds.take(test_rows)


def section_sizes(n: int) -> tuple[int, int, int]:
    """Balanced three-way sizes; remainder rows assigned lower-first."""
    base, rem = divmod(n, 3)
    return (base + (rem >= 1), base + (rem >= 2), base)


def sorted_three_way_split(ds: DatasetTable, feature: str) -> SplitTriple:
    """Sort rows by ``feature`` (stable) and cut into three balanced sections."""
    col = ds.column(feature)
    if col.max() == col.min():
        log.warning(
            "dataset %s: feature %s is constant; three-way split is arbitrary",
            ds.name, feature,
        )
    order = np.argsort(col, kind="stable")
    n_lo, n_tr, _ = section_sizes(ds.n_rows)
    return SplitTriple(
        feature=feature,
        lower_idx=order[:n_lo],
        train_idx=order[n_lo:n_lo + n_tr],
        upper_idx=order[n_lo + n_tr:],
    )


def rolling_windows(n_sorted: int, window_size: int, stride: int = 1) -> WindowPlan:
    """Plan [start, start + window_size) ranges stepping by ``stride``."""
    if window_size < 1 or stride < 1:
        raise ValueError("window_size and stride must be positive")
    if window_size > n_sorted:
        raise ValueError(
            f"window_size {window_size} exceeds row count {n_sorted}"
        )
    starts = range(0, n_sorted - window_size + 1, stride)
    return WindowPlan(
        window_size=window_size,
        stride=stride,
        window_ranges=tuple((s, s + window_size) for s in starts),
    )


def shift_feature(ds: DatasetTable, feature: str, k: float) -> DatasetTable:
    """Return a copy with ``feature`` increased by k sample standard deviations.

    Sample std uses the n-1 denominator. The input table is unmodified.
    """
    if ds.n_rows < 2:
        raise ValueError("shift_feature needs at least 2 rows")
    j = ds.column_index(feature)
    std = float(np.std(ds.features[:, j], ddof=1))
    if std == 0.0 and k != 0.0:
        log.warning(
            "dataset %s: feature %s has zero variance; shift is a no-op",
            ds.name, feature,
        )
    feats = ds.features.copy()
    feats[:, j] = feats[:, j] + k * std
    return DatasetTable(
        name=ds.name,
        feature_names=ds.feature_names,
        features=feats,
        target=ds.target.copy(),
        n_dropped=ds.n_dropped,
    )
