"""
Synthetic osteoporosis-like data shared by the test scripts.

The generated frame mirrors the shape of the real dataset (an Id column, a
continuous Age, a few binary risk factors, one categorical column and the
0/1 label) with a label driven mostly by age.
"""

import json
from pathlib import Path

import numpy as np
import pandas as pd

from src.data import BINARY, CATEGORICAL, CONTINUOUS, ColumnSpec, Dataset, FeatureSchema, load_csv, load_schema

SCHEMA = {
    "label": "Osteoporosis",
    "ignore": ["Id"],
    "columns": [
        {"name": "Age", "kind": "continuous"},
        {"name": "Gender", "kind": "binary"},
        {"name": "Smoking", "kind": "binary"},
        {"name": "Race/Ethnicity", "kind": "categorical"},
        {"name": "Osteoporosis", "kind": "binary", "categories": ["0", "1"]},
    ],
}


def synthetic_frame(n: int = 200, seed: int = 0, noise: float = 0.05) -> pd.DataFrame:
    rng = np.random.default_rng(seed)
    age = rng.integers(18, 90, size=n)
    gender = rng.choice(["Female", "Male"], size=n)
    smoking = rng.choice(["No", "Yes"], size=n)
    race = rng.choice(["African American", "Asian", "Caucasian"], size=n)
    label = (age >= 50).astype(int)
    flip = rng.random(n) < noise
    label = np.where(flip, 1 - label, label)
    return pd.DataFrame({
        "Id": np.arange(100000, 100000 + n).astype(str),
        "Age": age.astype(str),
        "Gender": gender,
        "Smoking": smoking,
        "Race/Ethnicity": race,
        "Osteoporosis": label.astype(str),
    })


def write_synthetic(directory, n: int = 200, seed: int = 0, noise: float = 0.05):
    """Write osteoporosis.csv and schema.json into ``directory``; returns both paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / "osteoporosis.csv"
    schema_path = directory / "schema.json"
    synthetic_frame(n, seed, noise).to_csv(csv_path, index=False, lineterminator="\n")
    with open(schema_path, "w", encoding="utf-8") as f:
        json.dump(SCHEMA, f, indent=2)
    return csv_path, schema_path


def load_synthetic(directory, n: int = 200, seed: int = 0, noise: float = 0.05) -> Dataset:
    csv_path, schema_path = write_synthetic(directory, n, seed, noise)
    return load_csv(csv_path, load_schema(schema_path))


def dataset_from_arrays(X, y, coded=None) -> Dataset:
    """
    Wrap raw arrays into a Dataset with columns f0..fk and label y.

    ``coded`` maps a column index to its category count; those columns must
    already hold integer codes.
    """
    X = np.asarray(X, dtype=float)
    coded = coded or {}
    columns = []
    for j in range(X.shape[1]):
        if j in coded:
            count = coded[j]
            kind = BINARY if count <= 2 else CATEGORICAL
            columns.append(ColumnSpec(f"f{j}", kind, tuple(f"c{i}" for i in range(count))))
        else:
            columns.append(ColumnSpec(f"f{j}", CONTINUOUS))
    columns.append(ColumnSpec("y", BINARY, ("0", "1")))
    return Dataset(features=X, labels=np.asarray(y), schema=FeatureSchema(columns=tuple(columns), label="y"))
