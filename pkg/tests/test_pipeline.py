import numpy as np
import pytest

from pibearing.dataio import make_split
from pibearing.model import PhysicsLossConfig
from pibearing.pipeline import (
    GRID_COLUMNS,
    NumericalError,
    TrainConfig,
    fit,
    grid_search,
    prepare_parts,
    train_pipeline,
    write_grid_csv,
)

FAST = TrainConfig(lr=3e-3, max_epochs=6, patience=3)


class TestTrainPipeline:
    def test_deterministic(self, small_corpus, small_arch):
        a = train_pipeline(small_corpus, arch=small_arch, train_cfg=FAST)
        b = train_pipeline(small_corpus, arch=small_arch, train_cfg=FAST)
        for name in a.model.net.store:
            assert a.model.net.store[name].tobytes() == b.model.net.store[name].tobytes()
        assert a.report.to_dict()["confusion"] == b.report.to_dict()["confusion"]

    def test_history_and_best_weights(self, small_corpus, small_arch):
        res = train_pipeline(small_corpus, arch=small_arch, train_cfg=FAST)
        h = res.history
        assert 1 <= len(h) <= FAST.max_epochs
        best = h[-1]["best_epoch"]
        assert h[best - 1]["val_loss"] == min(r["val_loss"] for r in h)
        assert res.report.extra["epochs"] == len(h)

    def test_learns(self, small_corpus, small_arch):
        res = train_pipeline(small_corpus, arch=small_arch, train_cfg=TrainConfig(lr=3e-3, max_epochs=15))
        assert res.report.accuracy > 0.6

    def test_split_without_validation(self, small_corpus, small_arch):
        with pytest.raises(ValueError):
            train_pipeline(small_corpus, ratios=(0.8, 0.2), arch=small_arch, train_cfg=FAST)

    def test_thresholds_from_training_part_only(self, small_corpus):
        split = make_split(small_corpus.y, (0.6, 0.2, 0.2), 0)
        stats, norm, feats, cfg = prepare_parts(small_corpus, split.train)
        ref = PhysicsLossConfig.from_training(feats[split.train], small_corpus.y[split.train])
        assert cfg == ref
        assert norm.max_bpfo == small_corpus.raw_feats[split.train, 0].max()

    def test_nan_loss_aborts(self, small_corpus, small_arch):
        from pibearing.model import MultimodalNet

        n = 6
        X = np.zeros((n, 3, small_arch.input_len), dtype=np.float32)
        F = np.full((n, 2), np.nan)
        y = np.arange(n) % 3
        with pytest.raises(NumericalError):
            fit(MultimodalNet(small_arch), (X, y, F), (X, y, F), PhysicsLossConfig(1.0, 0.5, 0.5), FAST)


class TestGridSearch:
    kwargs = dict(lambdas=(0.2, 1.0), percentiles=(10,), splits=((0.8, 0.2),), k=2,
                  train_cfg=TrainConfig(max_epochs=1))

    def test_rows_and_reproducibility(self, small_corpus, small_arch, tmp_path):
        rows, errors = grid_search(small_corpus, arch=small_arch, master_seed=3, **self.kwargs)
        again, _ = grid_search(small_corpus, arch=small_arch, master_seed=3, jobs=2, **self.kwargs)
        assert not errors and len(rows) == 2
        assert set(rows[0]) == set(GRID_COLUMNS)
        strip = [{k: v for k, v in r.items() if k != "wall_s"} for r in rows]
        assert strip == [{k: v for k, v in r.items() if k != "wall_s"} for r in again]
        accs = [r["test_acc"] for r in rows]
        assert accs == sorted(accs, reverse=True)
        write_grid_csv(rows, tmp_path / "g.csv")
        lines = (tmp_path / "g.csv").read_text().splitlines()
        assert lines[0] == ",".join(GRID_COLUMNS) and len(lines) == 3

    def test_failed_cell_is_recorded(self, small_corpus, small_arch):
        from dataclasses import replace

        bad = replace(small_arch, input_len=small_arch.input_len + 1)  # shape mismatch in every cell
        rows, errors = grid_search(small_corpus, arch=bad, **self.kwargs)
        assert len(rows) == 2 and len(errors) == 2
        assert all(np.isnan(r["test_acc"]) for r in rows)

    def test_empty_grid(self, small_corpus):
        with pytest.raises(ValueError):
            grid_search(small_corpus, lambdas=())
