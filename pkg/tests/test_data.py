import numpy as np
import pytest
from scipy import stats

from fairtrain.data import (
    CsvParseError,
    CsvSchema,
    EmptyCellError,
    GroupedDataset,
    SyntheticConfig,
    apply_scaler,
    default_schema,
    fit_scaler,
    generate_synthetic,
    load_csv,
    sample_group_balanced_batch,
    sample_objective_batch,
    stratified_split,
    write_csv,
)


def small_csv(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


BASIC_SCHEMA = CsvSchema(
    label_col="label",
    group_col="race",
    feature_cols=["age", "hours"],
    positive_label="yes",
    group_map={"w": "white", "n": "nonwhite"},
)


class TestLoadCsv:
    def test_two_row_two_group(self, tmp_path):
        path = small_csv(tmp_path, "age,hours,label,race\n30,40,yes,w\n25,20,no,n\n")
        ds = load_csv(path, BASIC_SCHEMA)
        assert len(ds) == 2 and ds.n_groups == 2
        assert ds.X.tolist() == [[30.0, 40.0], [25.0, 20.0]]
        assert ds.y.tolist() == [1.0, 0.0]
        assert ds.g.tolist() == [0, 1]
        assert ds.group_names == ["white", "nonwhite"]

    def test_missing_column(self, tmp_path):
        path = small_csv(tmp_path, "age,label,race\n30,yes,w\n")
        with pytest.raises(CsvParseError, match="hours"):
            load_csv(path, BASIC_SCHEMA)

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = small_csv(tmp_path, "age,hours,label,race\n30,40,yes,w\n25,abc,no,n\n")
        with pytest.raises(CsvParseError, match="row 2"):
            load_csv(path, BASIC_SCHEMA)

    def test_unknown_group_value_reports_row(self, tmp_path):
        path = small_csv(tmp_path, "age,hours,label,race\n30,40,yes,zzz\n")
        with pytest.raises(CsvParseError, match="row 1"):
            load_csv(path, BASIC_SCHEMA)

    def test_missing_cell_rejected(self, tmp_path):
        path = small_csv(tmp_path, "age,hours,label,race\n30,,yes,w\n")
        with pytest.raises(CsvParseError, match="missing value"):
            load_csv(path, BASIC_SCHEMA)

    def test_one_hot_encoding(self, tmp_path):
        schema = CsvSchema(
            label_col="label", group_col="race", feature_cols=["age", "job"],
            positive_label="yes", group_map={"w": "w", "n": "n"},
            categorical_cols=["job"],
        )
        path = small_csv(tmp_path,
                         "age,job,label,race\n30,eng,yes,w\n25,law,no,n\n40,eng,no,w\n")
        ds = load_csv(path, schema)
        assert ds.feature_names == ["age", "job=eng", "job=law"]
        assert ds.X[:, 1].tolist() == [1.0, 0.0, 1.0]
        assert ds.X[:, 2].tolist() == [0.0, 1.0, 0.0]

    def test_unknown_category_with_fixed_vocab(self, tmp_path):
        schema = CsvSchema(
            label_col="label", group_col="race", feature_cols=["job"],
            positive_label="yes", group_map={"w": "w", "n": "n"},
            categorical_cols=["job"], categories={"job": ["eng"]},
        )
        path = small_csv(tmp_path, "job,label,race\nlaw,no,n\n")
        with pytest.raises(CsvParseError, match="unknown category"):
            load_csv(path, schema)

    def test_round_trip_synthetic(self, tmp_path):
        ds = generate_synthetic(SyntheticConfig(
            n=60, dim=3, group_weights=(0.5, 0.5), positive_rates=(0.4, 0.2), seed=7))
        path = tmp_path / "synth.csv"
        write_csv(ds, path)
        back = load_csv(path, default_schema(ds))
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)
        assert np.array_equal(back.g, ds.g)
        assert back.group_names == ds.group_names


class TestStratifiedSplit:
    def test_sizes_like_acs(self):
        # same N as the census extract: 80% of 17,917
        rng = np.random.default_rng(0)
        g = (rng.random(17917) < 0.3).astype(int)
        g[:2] = [0, 1]
        ds = GroupedDataset(X=np.zeros((17917, 1)), y=np.zeros(17917), g=g,
                            group_names=["a", "b"])
        split = stratified_split(ds, 0.8, seed=1)
        assert len(split.train) in (14333, 14334)
        assert len(split.train) + len(split.test) == 17917

    def test_exact_half_split(self):
        ds = GroupedDataset(X=np.zeros((20, 1)), y=np.zeros(20),
                            g=np.repeat([0, 1], 10), group_names=["a", "b"])
        split = stratified_split(ds, 0.5, seed=3)
        for gid in (0, 1):
            assert (ds.g[split.train] == gid).sum() == 5
            assert (ds.g[split.test] == gid).sum() == 5

    def test_disjoint_cover_and_determinism(self):
        ds = generate_synthetic(SyntheticConfig(
            n=500, dim=2, group_weights=(0.6, 0.4), positive_rates=(0.3, 0.2), seed=1))
        a = stratified_split(ds, 0.8, seed=9)
        b = stratified_split(ds, 0.8, seed=9)
        assert np.array_equal(a.train, b.train) and np.array_equal(a.test, b.test)
        union = np.sort(np.concatenate([a.train, a.test]))
        assert np.array_equal(union, np.arange(500))
        assert np.intersect1d(a.train, a.test).size == 0

    def test_stratification_within_one_sample(self):
        ds = generate_synthetic(SyntheticConfig(
            n=1000, dim=2, group_weights=(0.75, 0.25), positive_rates=(0.3, 0.2), seed=2))
        frac = 0.8
        split = stratified_split(ds, frac, seed=5)
        for gid in range(2):
            size = (ds.g == gid).sum()
            got = (ds.g[split.train] == gid).sum()
            assert abs(got / size - frac) <= 1.0 / size

    def test_positive_rates_preserved(self):
        ds = generate_synthetic(SyntheticConfig(
            n=17917, dim=2, group_weights=(0.7, 0.3), positive_rates=(0.308, 0.207), seed=3))
        split = stratified_split(ds, 0.8, seed=0)
        for gid in range(2):
            full = ds.y[ds.g == gid].mean()
            tr = ds.y[split.train][ds.g[split.train] == gid].mean()
            assert abs(tr - full) < 0.005 + 0.01  # stratified by group only

    def test_tiny_group_rejected(self):
        ds = GroupedDataset(X=np.zeros((3, 1)), y=np.zeros(3),
                            g=np.array([0, 0, 1]), group_names=["a", "b"])
        with pytest.raises(ValueError, match="need >= 2"):
            stratified_split(ds, 0.5, seed=0)


class TestScaler:
    def test_constant_column(self):
        ds = GroupedDataset(X=np.full((4, 1), 5.0), y=np.zeros(4),
                            g=np.array([0, 0, 1, 1]), group_names=["a", "b"])
        sc = fit_scaler(ds, np.arange(4))
        assert sc.mean[0] == 5.0 and sc.std[0] == 1.0
        assert np.all(apply_scaler(sc, ds.X) == 0.0)

    def test_two_point_population_std(self):
        ds = GroupedDataset(X=np.array([[0.0], [2.0]]), y=np.zeros(2),
                            g=np.array([0, 1]), group_names=["a", "b"])
        sc = fit_scaler(ds, np.arange(2))
        assert sc.mean[0] == 1.0 and sc.std[0] == 1.0
        assert apply_scaler(sc, ds.X)[:, 0].tolist() == [-1.0, 1.0]

    def test_train_stats_applied_to_test(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((100, 3)) * 4 + 2
        ds = GroupedDataset(X=X, y=np.zeros(100),
                            g=(rng.random(100) < 0.5).astype(int), group_names=["a", "b"])
        split = stratified_split(ds, 0.8, seed=0)
        sc = fit_scaler(ds, split.train)
        train_scaled = apply_scaler(sc, ds.X[split.train])
        assert np.abs(train_scaled.mean(axis=0)).max() < 1e-10
        assert np.abs(train_scaled.std(axis=0) - 1.0).max() < 1e-10
        # a refit on already-scaled data is the identity scaler
        ds2 = GroupedDataset(X=train_scaled, y=ds.y[split.train],
                             g=ds.g[split.train], group_names=["a", "b"])
        sc2 = fit_scaler(ds2, np.arange(len(ds2)))
        assert np.abs(sc2.mean).max() < 1e-10
        assert np.abs(sc2.std - 1.0).max() < 1e-10


class TestSamplers:
    @pytest.fixture()
    def ds(self):
        return generate_synthetic(SyntheticConfig(
            n=400, dim=2, group_weights=(0.5, 0.5), positive_rates=(0.5, 0.3), seed=0))

    def test_singleton(self, ds):
        idx = np.arange(len(ds))
        out = sample_objective_batch(ds, idx, 1, np.random.default_rng(0))
        assert out.shape == (1,)

    def test_uniform_mean_within_clt_bound(self, ds):
        idx = np.arange(len(ds))
        rng = np.random.default_rng(1)
        draws = sample_objective_batch(ds, idx, 100_000, rng)
        pop = ds.y.mean()
        se = ds.y.std() / np.sqrt(100_000)
        assert abs(ds.y[draws].mean() - pop) < 3 * se

    def test_seeded_reproducible(self, ds):
        idx = np.arange(len(ds))
        a = sample_objective_batch(ds, idx, 50, np.random.default_rng(7))
        b = sample_objective_batch(ds, idx, 50, np.random.default_rng(7))
        assert np.array_equal(a, b)

    def test_group_balanced_sizes(self, ds):
        out = sample_group_balanced_batch(ds, np.arange(len(ds)), 8,
                                          np.random.default_rng(0))
        assert set(out) == {0, 1}
        for gid, rows in out.items():
            assert rows.shape == (8,)
            assert np.all(ds.g[rows] == gid)

    def test_label_filter(self, ds):
        out = sample_group_balanced_batch(ds, np.arange(len(ds)), 16,
                                          np.random.default_rng(0), label=1.0)
        for rows in out.values():
            assert np.all(ds.y[rows] == 1.0)

    def test_empty_cell_named(self, ds):
        only_neg = np.nonzero(ds.y == 0.0)[0]
        with pytest.raises(EmptyCellError, match="Y=1"):
            sample_group_balanced_batch(ds, only_neg, 4,
                                        np.random.default_rng(0), label=1.0)

    def test_cell_uniformity_chi_square(self, ds):
        rng = np.random.default_rng(3)
        idx = np.arange(len(ds))
        cell = np.nonzero(ds.g == 0)[0]
        counts = np.zeros(cell.size)
        pos = {row: i for i, row in enumerate(cell)}
        for _ in range(500):
            out = sample_group_balanced_batch(ds, idx, 20, rng)
            for row in out[0]:
                counts[pos[row]] += 1
        _, p = stats.chisquare(counts)
        assert p > 0.01


class TestSynthetic:
    def test_positive_rates_within_binomial_ci(self):
        ds = generate_synthetic(SyntheticConfig(
            n=10_000, dim=4, group_weights=(0.7, 0.3),
            positive_rates=(0.31, 0.21), seed=5))
        for gid, rate in ((0, 0.31), (1, 0.21)):
            got = ds.y[ds.g == gid].mean()
            assert abs(got - rate) < 0.02

    def test_single_group_has_no_group_signal(self):
        ds = generate_synthetic(SyntheticConfig(
            n=1000, dim=3, group_weights=(1.0,), positive_rates=(0.4,), seed=1))
        assert ds.n_groups == 1 and np.all(ds.g == 0)

    def test_seed_determinism(self):
        cfg = SyntheticConfig(n=100, dim=3, group_weights=(0.5, 0.5),
                              positive_rates=(0.3, 0.2), seed=9)
        a, b = generate_synthetic(cfg), generate_synthetic(cfg)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_invalid_weights(self):
        with pytest.raises(ValueError):
            SyntheticConfig(n=10, dim=2, group_weights=(0.5, 0.6),
                            positive_rates=(0.3, 0.2), seed=0)
