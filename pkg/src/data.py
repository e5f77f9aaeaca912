"""
Dataset ingestion, encoding, stratified splitting and exploratory statistics.

Categorical and binary columns are label-encoded: codes 0..k-1 follow the
lexicographic order of the category text, and empty cells become a trailing
"missing" category. Continuous columns are parsed as floats.
"""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import (
    DataIOError,
    ParseError,
    SchemaError,
    StratificationError,
    UnsupportedFeatureError,
)

logger = logging.getLogger(__name__)

BINARY = "binary"
CATEGORICAL = "categorical"
CONTINUOUS = "continuous"
COLUMN_KINDS = (BINARY, CATEGORICAL, CONTINUOUS)

MISSING_CATEGORY = "missing"


@dataclass(frozen=True)
class ColumnSpec:
    """One schema column: its name, kind and (for coded kinds) category order."""
    name: str
    kind: str
    categories: Tuple[str, ...] = ()

    @property
    def is_coded(self) -> bool:
        return self.kind in (BINARY, CATEGORICAL)

    def code_of(self, value: str) -> int:
        """Encode a category text into its integer code."""
        try:
            return self.categories.index(value)
        except ValueError:
            raise SchemaError(f"Unknown category {value!r} for column '{self.name}'")

    def decode(self, code: int) -> str:
        """Decode an integer code back into its category text."""
        if not 0 <= int(code) < len(self.categories):
            raise SchemaError(f"Code {code} out of range for column '{self.name}'")
        return self.categories[int(code)]

    def to_dict(self) -> dict:
        payload = {"name": self.name, "kind": self.kind}
        if self.is_coded:
            payload["category_map"] = {category: code for code, category in enumerate(self.categories)}
        return payload


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns plus the designated binary label column."""
    columns: Tuple[ColumnSpec, ...]
    label: str

    def __post_init__(self):
        names = [column.name for column in self.columns]
        if any(not name for name in names):
            raise SchemaError("Column names must be non-empty")
        if len(set(names)) != len(names):
            raise SchemaError(f"Duplicate column names in schema: {names}")
        if self.label not in names:
            raise SchemaError(f"Label column '{self.label}' is not part of the schema")
        label_spec = self.column(self.label)
        if label_spec.kind != BINARY:
            raise SchemaError(f"Label column '{self.label}' must be binary")
        if label_spec.categories and len(label_spec.categories) != 2:
            raise SchemaError(f"Label column '{self.label}' must have exactly two categories")
        for column in self.columns:
            if column.kind not in COLUMN_KINDS:
                raise SchemaError(f"Column '{column.name}' has unknown kind '{column.kind}'")
            observed = self._observed(column)
            if list(column.categories[:len(observed)]) != sorted(observed):
                raise SchemaError(f"Categories of '{column.name}' are not in lexicographic order")

    @staticmethod
    def _observed(column: ColumnSpec) -> List[str]:
        return [category for category in column.categories if category != MISSING_CATEGORY]

    def column(self, name: str) -> ColumnSpec:
        for column in self.columns:
            if column.name == name:
                return column
        raise SchemaError(f"Unknown column '{name}'")

    @property
    def feature_columns(self) -> Tuple[ColumnSpec, ...]:
        return tuple(column for column in self.columns if column.name != self.label)

    @property
    def feature_names(self) -> List[str]:
        return [column.name for column in self.feature_columns]

    @property
    def width(self) -> int:
        return len(self.feature_columns)

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise SchemaError(f"Unknown feature '{name}'")

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "columns": [column.to_dict() for column in self.columns],
        }

    @property
    def fingerprint(self) -> str:
        """SHA-256 of the canonical schema JSON, including category maps."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SchemaSource:
    """Parsed schema config file: column kinds, label, ignored columns."""
    columns: Tuple[Tuple[str, str], ...]
    label: str
    ignore: Tuple[str, ...] = ()
    categories: Dict[str, Tuple[str, ...]] = field(default_factory=dict)

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.columns]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Encoded feature matrix, binary labels and the schema that produced them."""
    features: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    row_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.array(self.features, dtype=float)
        labels = np.array(self.labels, dtype=np.int64)
        if features.ndim != 2:
            raise SchemaError("Feature matrix must be two-dimensional")
        if features.shape[0] == 0:
            raise SchemaError("Dataset must contain at least one row")
        if features.shape[1] != self.schema.width:
            raise SchemaError(
                f"Feature matrix has {features.shape[1]} columns, schema expects {self.schema.width}"
            )
        if labels.shape != (features.shape[0],):
            raise SchemaError("Labels must be a vector with one entry per row")
        if not np.all(np.isfinite(features)):
            raise SchemaError("Every encoded value must be finite")
        if not np.all((labels == 0) | (labels == 1)):
            raise SchemaError("Labels must contain only 0 or 1")
        row_ids = np.arange(features.shape[0]) if self.row_ids is None else np.array(self.row_ids, dtype=np.int64)
        features.setflags(write=False)
        labels.setflags(write=False)
        row_ids.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "row_ids", row_ids)

    @property
    def row_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_names(self) -> List[str]:
        return self.schema.feature_names

    def subset(self, indices: Sequence[int]) -> "Dataset":
        """Rows at the given positions, keeping the original row ids."""
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            schema=self.schema,
            row_ids=self.row_ids[indices],
        )

    def class_counts(self) -> Dict[int, int]:
        return {label: int(np.sum(self.labels == label)) for label in (0, 1)}

    def to_frame(self, decode: bool = False) -> pd.DataFrame:
        """The dataset as a DataFrame (features plus label), optionally decoded."""
        frame = pd.DataFrame(self.features, columns=self.feature_names)
        if decode:
            for column in self.schema.feature_columns:
                if column.is_coded:
                    frame[column.name] = [column.decode(code) for code in frame[column.name]]
        frame[self.schema.label] = self.labels
        return frame


@dataclass(frozen=True)
class SplitPair:
    """Stratified train/test partition of one dataset."""
    train: Dataset
    test: Dataset
    seed: int
    test_fraction: float


@dataclass(frozen=True)
class EdaReport:
    """Crosstabs of every coded feature against the label, plus the correlation matrix."""
    crosstabs: Dict[str, pd.DataFrame]
    correlation: pd.DataFrame
    class_counts: Dict[int, int]
    row_count: int

    def to_dict(self) -> dict:
        return {
            "crosstabs": {
                feature: {
                    str(category): {str(label): int(table.loc[category, label]) for label in table.columns}
                    for category in table.index
                }
                for feature, table in self.crosstabs.items()
            },
            "correlation": {
                "columns": list(self.correlation.columns),
                "matrix": self.correlation.to_numpy().tolist(),
            },
            "class_counts": {str(label): count for label, count in self.class_counts.items()},
            "row_count": self.row_count,
        }


def load_schema(path) -> SchemaSource:
    """
    Load a schema config file.

    Expected JSON layout::

        {"label": "Osteoporosis",
         "ignore": ["Id"],
         "columns": [{"name": "Age", "kind": "continuous"},
                     {"name": "Gender", "kind": "binary", "categories": ["Female", "Male"]}]}

    ``categories`` is optional; when absent, categories are taken from the data.
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise DataIOError(f"Schema file not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"Cannot read schema file {path}: {e}")

    if not isinstance(raw, dict) or "columns" not in raw or "label" not in raw:
        raise SchemaError(f"Schema file {path} must define 'columns' and 'label'")

    columns = []
    categories = {}
    for entry in raw["columns"]:
        name = str(entry.get("name", "")).strip()
        kind = entry.get("kind")
        if not name:
            raise SchemaError("Schema columns need a non-empty name")
        if kind not in COLUMN_KINDS:
            raise SchemaError(f"Column '{name}' has unknown kind {kind!r}; expected one of {COLUMN_KINDS}")
        columns.append((name, kind))
        if "categories" in entry:
            if kind == CONTINUOUS:
                raise SchemaError(f"Continuous column '{name}' cannot list categories")
            categories[name] = tuple(sorted(str(value) for value in entry["categories"]))

    names = [name for name, _ in columns]
    if len(set(names)) != len(names):
        raise SchemaError(f"Duplicate column names in schema file {path}")

    return SchemaSource(
        columns=tuple(columns),
        label=raw["label"],
        ignore=tuple(raw.get("ignore", ())),
        categories=categories,
    )


def file_checksum(path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    try:
        with open(path, "rb") as f:
            for chunk in iter(lambda: f.read(1 << 16), b""):
                digest.update(chunk)
    except OSError as e:
        raise DataIOError(f"Cannot read {path}: {e}")
    return digest.hexdigest()


def _encode_coded_column(name: str, kind: str, cells: pd.Series,
                         declared: Optional[Tuple[str, ...]]) -> Tuple[ColumnSpec, np.ndarray]:
    values = cells.str.strip()
    missing = values == ""
    observed = sorted(set(values[~missing]))
    if MISSING_CATEGORY in observed:
        raise SchemaError(f"Column '{name}' uses the reserved category text '{MISSING_CATEGORY}'")
    if declared is not None:
        unknown = sorted(set(observed) - set(declared))
        if unknown:
            raise SchemaError(f"Column '{name}' has categories {unknown} not declared in the schema")
        observed = list(declared)
    if kind == BINARY and len(observed) > 2:
        raise SchemaError(f"Binary column '{name}' has more than two categories: {observed}")
    categories = tuple(observed) + ((MISSING_CATEGORY,) if missing.any() else ())
    lookup = {category: code for code, category in enumerate(categories)}
    codes = np.array([lookup[MISSING_CATEGORY] if is_missing else lookup[value]
                      for value, is_missing in zip(values, missing)], dtype=float)
    return ColumnSpec(name=name, kind=kind, categories=categories), codes


def _parse_continuous_column(name: str, cells: pd.Series) -> np.ndarray:
    parsed = pd.to_numeric(cells.str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(parsed)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(row=row, column=name, value=cells.iloc[row])
    return parsed


def load_csv(path, schema_source) -> Dataset:
    """
    Load and encode a CSV file according to a schema config.

    Args:
        path: CSV file (header row, comma-delimited, UTF-8)
        schema_source: SchemaSource, or a path to a schema config file

    Returns:
        Encoded Dataset; encoding depends only on the file contents
    """
    if not isinstance(schema_source, SchemaSource):
        schema_source = load_schema(schema_source)

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except FileNotFoundError:
        raise DataIOError(f"CSV file not found: {path}")
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataIOError(f"Cannot read CSV file {path}: {e}")

    header = [str(column).strip() for column in frame.columns]
    frame.columns = header
    known = set(schema_source.names) | set(schema_source.ignore)
    unknown = [column for column in header if column not in known]
    if unknown:
        raise SchemaError(f"Unknown column(s) in {path}: {unknown}")
    absent = [name for name in schema_source.names if name not in header]
    if absent:
        raise SchemaError(f"Column(s) missing from {path}: {absent}")
    if len(frame) == 0:
        raise SchemaError(f"CSV file {path} has no data rows")

    columns = []
    encoded = {}
    for name, kind in schema_source.columns:
        if kind == CONTINUOUS:
            columns.append(ColumnSpec(name=name, kind=kind))
            encoded[name] = _parse_continuous_column(name, frame[name])
        else:
            spec, codes = _encode_coded_column(name, kind, frame[name], schema_source.categories.get(name))
            columns.append(spec)
            encoded[name] = codes

    label_spec = next(column for column in columns if column.name == schema_source.label)
    if MISSING_CATEGORY in label_spec.categories:
        raise SchemaError(f"Label column '{label_spec.name}' has empty cells")

    schema = FeatureSchema(columns=tuple(columns), label=schema_source.label)
    features = np.column_stack([encoded[column.name] for column in schema.feature_columns])
    labels = encoded[schema.label].astype(np.int64)

    dataset = Dataset(features=features, labels=labels, schema=schema)
    logger.info(f"Loaded {dataset.row_count} rows x {schema.width} features from {path} "
                f"(class counts {dataset.class_counts()})")
    return dataset


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def stratified_split(d: Dataset, test_fraction: float, seed: int) -> SplitPair:
    """
    Split a dataset into train/test parts, stratified by label.

    Each class is permuted with one seeded generator (classes in ascending
    order) and its first round_half_up(test_fraction * size) rows go to the
    test part, clamped to the rows the class has. A split that leaves either
    part empty is refused.
    """
    if not 0.0 < test_fraction < 1.0:
        raise StratificationError(f"test_fraction must lie in (0, 1), got {test_fraction}")

    rng = np.random.default_rng(seed)
    test_parts = []
    train_parts = []
    for label in (0, 1):
        members = np.flatnonzero(d.labels == label)
        if members.size < 2:
            raise StratificationError(f"Class {label} has {members.size} row(s); at least 2 are needed")
        shuffled = rng.permutation(members)
        n_test = min(_round_half_up(test_fraction * members.size), members.size)
        test_parts.append(shuffled[:n_test])
        train_parts.append(shuffled[n_test:])

    test_idx = np.sort(np.concatenate(test_parts))
    train_idx = np.sort(np.concatenate(train_parts))
    if test_idx.size == 0 or train_idx.size == 0:
        raise StratificationError(f"Test fraction {test_fraction} leaves the "
                                  f"{'test' if test_idx.size == 0 else 'train'} part empty")
    logger.info(f"Stratified split (seed {seed}, test fraction {test_fraction}): "
                f"{train_idx.size} train / {test_idx.size} test rows")
    return SplitPair(train=d.subset(train_idx), test=d.subset(test_idx),
                     seed=seed, test_fraction=test_fraction)


def crosstab(d: Dataset, feature: str) -> pd.DataFrame:
    """
    Counts of rows by (feature category, label).

    Returns a DataFrame indexed by category name with columns 0 and 1;
    categories absent from the data still appear with zero counts.
    """
    spec = d.schema.column(feature)
    if feature == d.schema.label:
        raise UnsupportedFeatureError("Crosstab of the label against itself is not supported")
    if not spec.is_coded:
        raise UnsupportedFeatureError(f"Feature '{feature}' is continuous; crosstabs need coded features")

    column = d.features[:, d.schema.feature_index(feature)].astype(np.int64)
    counts = np.zeros((len(spec.categories), 2), dtype=np.int64)
    np.add.at(counts, (column, d.labels), 1)
    table = pd.DataFrame(counts, index=list(spec.categories), columns=[0, 1])
    table.index.name = feature
    return table.astype(np.int64)


def correlation_matrix(d: Dataset) -> pd.DataFrame:
    """
    Pearson correlation over all encoded feature columns plus the label.

    Zero-variance columns correlate 0 with everything else and 1 with themselves.
    """
    names = d.feature_names + [d.schema.label]
    values = np.column_stack([d.features, d.labels.astype(float)])
    centered = values - values.mean(axis=0)
    norms = np.sqrt(np.sum(centered ** 2, axis=0))
    constant = norms == 0.0
    safe = np.where(constant, 1.0, norms)
    scaled = centered / safe
    matrix = scaled.T @ scaled
    matrix[constant, :] = 0.0
    matrix[:, constant] = 0.0
    matrix = np.clip((matrix + matrix.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(matrix, 1.0)
    return pd.DataFrame(matrix, index=names, columns=names)


def eda_report(d: Dataset) -> EdaReport:
    """Crosstabs for every binary/categorical feature plus the correlation matrix."""
    crosstabs = {column.name: crosstab(d, column.name)
                 for column in d.schema.feature_columns if column.is_coded}
    return EdaReport(
        crosstabs=crosstabs,
        correlation=correlation_matrix(d),
        class_counts=d.class_counts(),
        row_count=d.row_count,
    )


@dataclass(frozen=True, eq=False)
class FeatureStats:
    """Per-feature means, standard deviations and category frequencies."""
    names: Tuple[str, ...]
    kinds: Tuple[str, ...]
    means: np.ndarray
    stds: np.ndarray
    frequencies: Dict[int, np.ndarray]

    @property
    def width(self) -> int:
        return len(self.names)


def feature_stats(d: Dataset) -> FeatureStats:
    """Training-distribution summary used for local perturbation sampling."""
    kinds = tuple(column.kind for column in d.schema.feature_columns)
    means = d.features.mean(axis=0)
    stds = d.features.std(axis=0)
    frequencies = {}
    for j, column in enumerate(d.schema.feature_columns):
        if column.is_coded:
            counts = np.bincount(d.features[:, j].astype(np.int64), minlength=len(column.categories))
            frequencies[j] = counts / counts.sum()
    return FeatureStats(names=tuple(d.feature_names), kinds=kinds, means=means,
                        stds=stds, frequencies=frequencies)
