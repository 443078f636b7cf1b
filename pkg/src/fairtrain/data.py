"""Dataset ingestion, stratified splitting, standardization, batch samplers.

CSV ingestion expects a header row; columns are numeric unless declared
categorical in the schema (those get one-hot encoded).  The protected-group
column is mapped to small integer ids through the schema's group map and
removed from the features.  Mini-batches are drawn iid with replacement;
there are no epoch semantics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class CsvParseError(ValueError):
    """Malformed CSV input; carries the offending 1-based data row when known."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyCellError(ValueError):
    """A (group, label) sampling cell contains no data points."""


@dataclass
class CsvSchema:
    label_col: str
    group_col: str
    feature_cols: list[str]
    positive_label: str
    group_map: dict[str, str]  # raw cell value -> group name
    categorical_cols: list[str] = field(default_factory=list)
    categories: dict[str, list[str]] = field(default_factory=dict)  # fixed one-hot vocab

    def __post_init__(self):
        unknown = set(self.categorical_cols) - set(self.feature_cols)
        if unknown:
            raise ValueError(f"categorical_cols not in feature_cols: {sorted(unknown)}")

    def group_names(self) -> list[str]:
        names = []
        for name in self.group_map.values():
            if name not in names:
                names.append(name)
        return names

    def to_dict(self) -> dict:
        d = {
            "label_col": self.label_col,
            "group_col": self.group_col,
            "feature_cols": list(self.feature_cols),
            "positive_label": self.positive_label,
            "group_map": dict(self.group_map),
        }
        if self.categorical_cols:
            d["categorical_cols"] = list(self.categorical_cols)
        if self.categories:
            d["categories"] = {k: list(v) for k, v in self.categories.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        return cls(
            label_col=d["label_col"],
            group_col=d["group_col"],
            feature_cols=list(d["feature_cols"]),
            positive_label=d["positive_label"],
            group_map=dict(d["group_map"]),
            categorical_cols=list(d.get("categorical_cols", [])),
            categories={k: list(v) for k, v in d.get("categories", {}).items()},
        )


@dataclass
class GroupedDataset:
    X: np.ndarray              # (N, d) float64
    y: np.ndarray              # (N,) float64 in {0, 1}
    g: np.ndarray              # (N,) int group ids in 0..G-1
    group_names: list[str]
    feature_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.int64)
        n = self.X.shape[0]
        if not (self.y.shape == (n,) and self.g.shape == (n,)):
            raise ValueError("X, y, g lengths differ")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.X.shape[1])]
        G = len(self.group_names)
        if self.g.size and (self.g.min() < 0 or self.g.max() >= G):
            raise ValueError("group ids out of range")
        counts = np.bincount(self.g, minlength=G)
        if self.g.size and (counts == 0).any():
            empty = [self.group_names[i] for i in np.nonzero(counts == 0)[0]]
            raise ValueError(f"empty groups: {empty}")

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass
class Scaler:
    mean: np.ndarray
    std: np.ndarray  # constant columns get std 1


@dataclass
class SplitIndices:
    train: np.ndarray
    test: np.ndarray
    seed: int


def load_csv(path, schema: CsvSchema) -> GroupedDataset:
    """Read a CSV into a GroupedDataset per the schema.

    Categorical feature columns are one-hot encoded (vocabulary from
    schema.categories when given, else the sorted values present).  The group
    column is mapped through schema.group_map and kept out of the features.
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError("file is empty") from None
        rows = list(reader)

    col_idx = {name: i for i, name in enumerate(header)}
    needed = [schema.label_col, schema.group_col, *schema.feature_cols]
    for name in needed:
        if name not in col_idx:
            raise CsvParseError(f"missing column {name!r} in header")

    group_names = schema.group_names()
    group_id = {raw: group_names.index(name) for raw, name in schema.group_map.items()}
    cat_cols = set(schema.categorical_cols)

    # first pass: cell-level validation and category discovery
    categories: dict[str, list[str]] = {}
    for col in schema.categorical_cols:
        if col in schema.categories:
            categories[col] = list(schema.categories[col])
    discover = [c for c in schema.categorical_cols if c not in categories]
    seen: dict[str, set] = {c: set() for c in discover}

    y = np.empty(len(rows))
    g = np.empty(len(rows), dtype=np.int64)
    numeric_cols = [c for c in schema.feature_cols if c not in cat_cols]
    numeric = np.empty((len(rows), len(numeric_cols)))

    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise CsvParseError(f"expected {len(header)} cells, found {len(row)}", row=r)
        for name in needed:
            if row[col_idx[name]] == "":
                raise CsvParseError(f"missing value in column {name!r}", row=r)
        raw_group = row[col_idx[schema.group_col]]
        if raw_group not in group_id:
            raise CsvParseError(f"unknown group value {raw_group!r}", row=r)
        g[r - 1] = group_id[raw_group]
        y[r - 1] = 1.0 if row[col_idx[schema.label_col]] == schema.positive_label else 0.0
        for j, name in enumerate(numeric_cols):
            cell = row[col_idx[name]]
            try:
                numeric[r - 1, j] = float(cell)
            except ValueError:
                raise CsvParseError(
                    f"non-numeric value {cell!r} in column {name!r}", row=r
                ) from None
        for name in discover:
            seen[name].add(row[col_idx[name]])
    for name in discover:
        categories[name] = sorted(seen[name])

    # second pass: assemble features in schema order, one-hot where categorical
    blocks, names = [], []
    num_j = 0
    for name in schema.feature_cols:
        if name in cat_cols:
            cats = categories[name]
            pos = {c: k for k, c in enumerate(cats)}
            block = np.zeros((len(rows), len(cats)))
            for r, row in enumerate(rows, start=1):
                cell = row[col_idx[name]]
                if cell not in pos:
                    raise CsvParseError(
                        f"unknown category {cell!r} in column {name!r}", row=r
                    )
                block[r - 1, pos[cell]] = 1.0
            blocks.append(block)
            names.extend(f"{name}={c}" for c in cats)
        else:
            blocks.append(numeric[:, num_j : num_j + 1])
            names.append(name)
            num_j += 1

    X = np.hstack(blocks) if blocks else np.empty((len(rows), 0))
    return GroupedDataset(X=X, y=y, g=g, group_names=group_names, feature_names=names)


def write_csv(ds: GroupedDataset, path) -> None:
    """Write a dataset in the layout load_csv reads back (see default_schema)."""
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow([*ds.feature_names, "label", "group"])
        for i in range(len(ds)):
            writer.writerow(
                [*(repr(float(v)) for v in ds.X[i]), int(ds.y[i]), ds.group_names[ds.g[i]]]
            )


def default_schema(ds: GroupedDataset) -> CsvSchema:
    """Schema matching write_csv output for this dataset."""
    return CsvSchema(
        label_col="label",
        group_col="group",
        feature_cols=list(ds.feature_names),
        positive_label="1",
        group_map={name: name for name in ds.group_names},
    )


def stratified_split(ds: GroupedDataset, train_frac: float, seed: int) -> SplitIndices:
    """Random split preserving per-group proportions to within one sample."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for gid in range(ds.n_groups):
        members = np.nonzero(ds.g == gid)[0]
        if members.size < 2:
            raise ValueError(
                f"group {ds.group_names[gid]!r} has {members.size} samples; need >= 2"
            )
        perm = rng.permutation(members)
        n_train = int(round(train_frac * members.size))
        n_train = min(max(n_train, 1), members.size - 1)
        train_parts.append(perm[:n_train])
        test_parts.append(perm[n_train:])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return SplitIndices(train=train, test=test, seed=seed)


def fit_scaler(ds: GroupedDataset, idx: np.ndarray) -> Scaler:
    """Column means and population (1/N) stds over the given rows."""
    idx = np.asarray(idx)
    if idx.size == 0:
        raise ValueError("cannot fit a scaler on an empty index set")
    sub = ds.X[idx]
    mean = sub.mean(axis=0)
    std = sub.std(axis=0)  # population convention
    std = np.where(std < 1e-12, 1.0, std)
    return Scaler(mean=mean, std=std)


def apply_scaler(scaler: Scaler, X: np.ndarray) -> np.ndarray:
    return (X - scaler.mean) / scaler.std


def sample_objective_batch(ds: GroupedDataset, idx: np.ndarray, J: int,
                           rng: np.random.Generator) -> np.ndarray:
    """J indices drawn uniformly with replacement from idx."""
    if J < 1:
        raise ValueError("J must be >= 1")
    idx = np.asarray(idx)
    return idx[rng.integers(0, idx.size, size=J)]


def sample_group_balanced_batch(ds: GroupedDataset, idx: np.ndarray, J_per_group: int,
                                rng: np.random.Generator,
                                label: float | None = None) -> dict[int, np.ndarray]:
    """J_per_group indices per group, uniform with replacement within the cell.

    With label given, only rows with that label are eligible (the conditioned
    cells of equal-opportunity / equalized-odds constraints).
    """
    if J_per_group < 1:
        raise ValueError("J_per_group must be >= 1")
    idx = np.asarray(idx)
    out = {}
    for gid in range(ds.n_groups):
        mask = ds.g[idx] == gid
        if label is not None:
            mask &= ds.y[idx] == label
        cell = idx[mask]
        if cell.size == 0:
            name = ds.group_names[gid]
            cond = "" if label is None else f", Y={int(label)}"
            raise EmptyCellError(f"empty cell (group {name!r}{cond})")
        out[gid] = cell[rng.integers(0, cell.size, size=J_per_group)]
    return out


@dataclass
class SyntheticConfig:
    n: int
    dim: int
    group_weights: tuple[float, ...]
    positive_rates: tuple[float, ...]
    seed: int
    class_sep: float = 1.0    # distance between class-conditional means
    group_shift: float = 0.5  # group-dependent feature offset

    def __post_init__(self):
        self.group_weights = tuple(float(w) for w in self.group_weights)
        self.positive_rates = tuple(float(p) for p in self.positive_rates)
        if abs(sum(self.group_weights) - 1.0) > 1e-9:
            raise ValueError("group_weights must sum to 1")
        if any(w <= 0 for w in self.group_weights):
            raise ValueError("group_weights must be positive")
        if len(self.positive_rates) != len(self.group_weights):
            raise ValueError("positive_rates and group_weights lengths differ")
        if any(not 0.0 <= p <= 1.0 for p in self.positive_rates):
            raise ValueError("positive_rates must lie in [0, 1]")
        if self.n < 1 or self.dim < 2:
            raise ValueError("need n >= 1 and dim >= 2")


def generate_synthetic(cfg: SyntheticConfig) -> GroupedDataset:
    """Gaussian class-conditional features with group-dependent positive rates.

    Labels separate the classes along the first axis (scale class_sep); each
    group additionally shifts the remaining axes by group_shift * (gid - mean),
    so group membership is partially recoverable from the features, as with a
    real protected attribute correlated with covariates.
    """
    rng = np.random.default_rng(cfg.seed)
    G = len(cfg.group_weights)
    g = rng.choice(G, size=cfg.n, p=np.asarray(cfg.group_weights))
    y = (rng.random(cfg.n) < np.asarray(cfg.positive_rates)[g]).astype(np.float64)
    X = rng.standard_normal((cfg.n, cfg.dim))
    X[:, 0] += cfg.class_sep * (2.0 * y - 1.0)
    if G > 1:
        centered = g - (G - 1) / 2.0
        X[:, 1] += cfg.group_shift * centered
    names = [f"g{i}" for i in range(G)]
    return GroupedDataset(X=X, y=y, g=g, group_names=names)
