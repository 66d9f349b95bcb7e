from collections import Counter

import numpy as np
import pytest

from sentikit.dataio import (
    CaptionSet,
    CaptionStore,
    EmbeddingDataset,
    ManifestRecord,
    split_dataset,
    synth_dataset,
)
from sentikit.errors import DataError
from sentikit.evalkit import (
    ABLATION_SUBSETS,
    EvalTarget,
    ModelSpec,
    ablation_run,
    aggregate_accuracies,
    as_percent,
    baseline_accuracy,
    cross_dataset_run,
    evaluate,
    run_grid,
    worker_cap,
)
from sentikit.heads import init_head
from sentikit.taxonomy import Taxonomy
from sentikit.trainer import TrainConfig
from tests.conftest import bank_from_prompts


class TestPercentFormatting:
    def test_table_values(self):
        assert as_percent(0.5) == "50.00"
        assert as_percent(1 / 6) == "16.66"  # truncated, not rounded
        assert as_percent(1 / 25) == "4.00"

    def test_truncation_does_not_undershoot_exact_values(self):
        assert as_percent(0.29) == "29.00"
        assert as_percent(0.8002) == "80.02"


class TestEvaluate:
    def test_perfect_predictions(self, tax):
        labels = ["optimism", "suffering", "horror", "optimism"]
        report = evaluate(labels, labels, tax, level=25)
        assert report.accuracy == 1.0
        cm = report.confusion.counts
        assert np.trace(cm) == 4
        assert cm.sum() == 4

    def test_valence_level_half_right(self, tax):
        labels = ["optimism", "suffering"]
        preds = ["optimism", "optimism"]
        report = evaluate(preds, labels, tax, level=2)
        assert report.accuracy == 0.5

    def test_matches_independent_tally(self, tax):
        rng = np.random.default_rng(6)
        fine = list(tax.fine_classes)
        labels = [fine[i] for i in rng.integers(0, 25, size=200)]
        preds = [fine[i] for i in rng.integers(0, 25, size=200)]
        for level in (2, 6, 25):
            report = evaluate(preds, labels, tax, level=level)
            # Independent tally: roll names by dict lookup, count matches.
            from sentikit.taxonomy import rollup

            rolled_pairs = [(rollup(tax, y, level), rollup(tax, p, level))
                            for y, p in zip(labels, preds)]
            expected = sum(1 for y, p in rolled_pairs if y == p) / len(rolled_pairs)
            assert report.accuracy == pytest.approx(expected, abs=1e-15)
            truth_counts = Counter(y for y, _ in rolled_pairs)
            classes = report.confusion.classes
            for i, cls in enumerate(classes):
                assert report.confusion.counts[i].sum() == truth_counts.get(cls, 0)

    def test_recall_none_for_absent_class(self, tax):
        report = evaluate(["optimism"], ["optimism"], tax, level=25)
        assert report.per_class_recall["optimism"] == 1.0
        assert report.per_class_recall["suffering"] is None

    def test_accuracy_is_trace_over_total(self, tax):
        rng = np.random.default_rng(7)
        fine = list(tax.fine_classes)
        labels = [fine[i] for i in rng.integers(0, 25, size=60)]
        preds = [fine[i] for i in rng.integers(0, 25, size=60)]
        report = evaluate(preds, labels, tax, level=6)
        cm = report.confusion.counts
        assert report.accuracy == np.trace(cm) / cm.sum()

    def test_length_mismatch(self, tax):
        with pytest.raises(DataError, match="predictions"):
            evaluate(["optimism"], ["optimism", "horror"], tax)

    def test_synonym_labels_resolve(self, tax):
        report = evaluate(["optimism"], ["positivity"], tax, level=25)
        assert report.accuracy == 1.0

    def test_csv_export(self, tax, tmp_path):
        report = evaluate(["optimism", "horror"], ["optimism", "horror"], tax, level=2)
        report.confusion.write_csv(tmp_path / "cm.csv")
        lines = (tmp_path / "cm.csv").read_text().strip().splitlines()
        assert lines[0].split(",")[1:] == ["positive", "negative"]
        report.write_json(tmp_path / "report.json")
        assert (tmp_path / "report.json").exists()


class TestBaselines:
    def test_majority_two_thirds(self, tax):
        assert baseline_accuracy(["optimism", "optimism", "suffering"], tax, 25, "majority") == pytest.approx(2 / 3)

    def test_random_analytic(self, tax):
        assert baseline_accuracy(["optimism"], tax, 25, "random") == pytest.approx(0.04)
        assert baseline_accuracy(["optimism"], tax, 6, "random") == pytest.approx(1 / 6)
        assert baseline_accuracy(["optimism"], tax, 2, "random") == pytest.approx(0.5)

    def test_majority_at_rolled_level(self, tax):
        labels = ["optimism", "cheerfulness", "suffering"]  # two positives
        assert baseline_accuracy(labels, tax, 2, "majority") == pytest.approx(2 / 3)

    def test_majority_at_least_random_when_nonuniform(self, tax):
        rng = np.random.default_rng(8)
        fine = list(tax.fine_classes)
        labels = [fine[int(i)] for i in rng.integers(0, 25, size=100)] + ["optimism"] * 5
        for level in (2, 6, 25):
            maj = baseline_accuracy(labels, tax, level, "majority")
            rand = baseline_accuracy(labels, tax, level, "random")
            assert maj >= rand

    def test_empty_rejected(self, tax):
        with pytest.raises(DataError, match="empty"):
            baseline_accuracy([], tax, 25, "random")

    def test_unknown_kind(self, tax):
        with pytest.raises(DataError, match="kind"):
            baseline_accuracy(["optimism"], tax, 25, "mode")


def _labeled(vectors, labels):
    return EmbeddingDataset(
        vectors=vectors,
        manifest=[ManifestRecord(id=f"i{i}", label=y) for i, y in enumerate(labels)],
    )


@pytest.fixture(scope="module")
def foreign_tax():
    # Same valences, different fine classes: binary level is comparable,
    # the fine level is not.
    return Taxonomy(
        valence_clusters={"positive": ["calm"], "negative": ["upset"]},
        primaries={"calm": ["serene", "mellow"], "upset": ["fuming"]},
    )


class TestCrossDataset:

    def test_ce_on_foreign_fine_level_is_x(self, tax, foreign_tax):
        head = init_head("ce", in_dim=4, n_classes=25, seed=0, hidden=4)
        head.taxonomy_fingerprint = tax.fingerprint
        ds = _labeled(np.eye(4)[:2], ["serene", "fuming"])
        spec = ModelSpec(name="ce", kind="ce", head=head, taxonomy=tax)
        target = EvalTarget(name="foreign", dataset=ds, taxonomy=foreign_tax, level=25)
        res = cross_dataset_run(spec, target)
        assert res.status == "X"
        assert res.cell == "X"
        assert res.report is None

    def test_ce_on_matching_binary_level_computes(self, tax, foreign_tax):
        head = init_head("ce", in_dim=4, n_classes=25, seed=0, hidden=4)
        head.taxonomy_fingerprint = tax.fingerprint
        ds = _labeled(np.eye(4)[:2], ["serene", "fuming"])
        spec = ModelSpec(name="ce", kind="ce", head=head, taxonomy=tax)
        target = EvalTarget(name="foreign", dataset=ds, taxonomy=foreign_tax, level=2)
        res = cross_dataset_run(spec, target)
        assert res.status == "ok"
        assert res.report is not None

    def test_contrastive_any_taxonomy(self, tax, foreign_tax):
        head = init_head("contrastive", in_dim=4, seed=0, hidden=4, out_dim=4)
        ds = _labeled(np.eye(4)[:2], ["serene", "fuming"])
        prompts = EmbeddingDataset(
            vectors=np.eye(4)[:3],
            manifest=[ManifestRecord(id=f"p{i}") for i in range(3)],
        )
        from sentikit.dataio import PromptBank, PromptEntry

        bank = PromptBank(
            entries=[
                PromptEntry("p0", "serene"),
                PromptEntry("p1", "mellow"),
                PromptEntry("p2", "fuming"),
            ],
            embeddings=prompts,
        )
        spec = ModelSpec(name="co", kind="contrastive", head=head, taxonomy=tax)
        target = EvalTarget(
            name="foreign", dataset=ds, taxonomy=foreign_tax, level=25, bank=bank
        )
        res = cross_dataset_run(spec, target)
        assert res.status == "ok"

    def test_zeroshot_any_taxonomy(self, foreign_tax):
        ds = _labeled(np.eye(3)[:2], ["serene", "fuming"])
        from sentikit.dataio import PromptBank, PromptEntry

        bank = PromptBank(
            entries=[PromptEntry("p0", "serene"), PromptEntry("p1", "fuming")],
            embeddings=EmbeddingDataset(
                vectors=np.eye(3)[:2],
                manifest=[ManifestRecord(id="p0"), ManifestRecord(id="p1")],
            ),
        )
        spec = ModelSpec(name="zs", kind="zeroshot")
        target = EvalTarget(
            name="foreign", dataset=ds, taxonomy=foreign_tax, level=2, bank=bank
        )
        res = cross_dataset_run(spec, target)
        assert res.status == "ok"
        assert res.report.accuracy == 1.0

    def test_grid_renders_x_cells(self, tax, foreign_tax, tmp_path):
        head = init_head("ce", in_dim=3, n_classes=25, seed=0, hidden=4)
        head.taxonomy_fingerprint = tax.fingerprint
        ds = _labeled(np.eye(3)[:2], ["serene", "fuming"])
        from sentikit.dataio import PromptBank, PromptEntry

        bank = PromptBank(
            entries=[PromptEntry("p0", "serene"), PromptEntry("p1", "fuming")],
            embeddings=EmbeddingDataset(
                vectors=np.eye(3)[:2],
                manifest=[ManifestRecord(id="p0"), ManifestRecord(id="p1")],
            ),
        )
        specs = [
            ModelSpec(name="ce", kind="ce", head=head, taxonomy=tax),
            ModelSpec(name="zs", kind="zeroshot"),
        ]
        targets = [
            EvalTarget(name="fine", dataset=ds, taxonomy=foreign_tax, level=25, bank=bank),
            EvalTarget(name="binary", dataset=ds, taxonomy=foreign_tax, level=2, bank=bank),
        ]
        grid = run_grid(specs, targets)
        assert grid.cell("ce", "fine") == "X"
        assert grid.cell("ce", "binary") != "X"
        grid.write_csv(tmp_path / "grid.csv")
        text = (tmp_path / "grid.csv").read_text()
        assert "X" in text
        grid.write_json(tmp_path / "grid.json")


class TestAblation:
    def test_five_row_grid_and_ic_near_random(self, tax):
        # SC captions carry class signal; IC captions are class-uncorrelated
        # noise, so the [ic]-only model cannot beat chance by much.
        rng = np.random.default_rng(40)
        images, prompts = synth_dataset(
            n_per_class=10, classes=["optimism", "suffering", "horror"],
            dim=16, separation=6.0, seed=3, noise=0.1,
        )
        ic_texts = {}
        manifest = []
        for i, rec in enumerate(images.manifest):
            ic = f"an unrelated caption {i}"
            ic_texts[ic] = rng.normal(size=16)
            manifest.append(
                ManifestRecord(
                    id=rec.id, label=rec.label,
                    captions=CaptionSet(sc=rec.captions.sc, ic=ic),
                )
            )
        images = EmbeddingDataset(vectors=images.vectors, manifest=manifest)
        store_map = {rec.id: prompts.vectors[i] for i, rec in enumerate(prompts.manifest)}
        store_map.update(ic_texts)
        store = CaptionStore(store_map)
        bank = bank_from_prompts(prompts)
        train_ds, val_ds, test_ds = split_dataset(images, [0.6, 0.2, 0.2], seed=1)
        cfg = TrainConfig(
            head="contrastive", epochs=10, seed=0, hidden=16, batch_size=4, lr=0.01
        )
        targets = [
            EvalTarget(name="test@25", dataset=test_ds, taxonomy=tax, level=25, bank=bank)
        ]
        grid = ablation_run(
            train_ds, val_ds, store, cfg, tax, targets,
            subsets=(("sc",), ("ic",), ("sc", "ic")),
        )
        assert grid.models == ["contrastive[sc]", "contrastive[ic]", "contrastive[sc,ic]"]
        sc_acc = float(grid.cell("contrastive[sc]", "test@25"))
        ic_acc = float(grid.cell("contrastive[ic]", "test@25"))
        assert sc_acc >= 80.0
        assert ic_acc <= 67.0  # 3 classes – near-chance, far from the sc model

    def test_default_subsets_shape(self):
        assert ABLATION_SUBSETS == (
            ("sc",), ("ic",), ("sc", "ic"), ("sc", "ssc"), ("sc", "ic", "ssc"),
        )

    def test_deterministic(self, tax, small_synth, small_bank):
        images, prompts = small_synth
        store = CaptionStore.from_dataset(prompts)
        train_ds, val_ds = split_dataset(images, [0.8, 0.2], seed=2)
        cfg = TrainConfig(head="contrastive", epochs=2, seed=5, hidden=16)
        targets = [
            EvalTarget(name="t", dataset=val_ds, taxonomy=tax, level=25, bank=small_bank)
        ]
        a = ablation_run(train_ds, val_ds, store, cfg, tax, targets, subsets=(("sc",),))
        b = ablation_run(train_ds, val_ds, store, cfg, tax, targets, subsets=(("sc",),))
        assert a.cell("contrastive[sc]", "t") == b.cell("contrastive[sc]", "t")


class TestAggregation:
    def test_mean_sd(self):
        out = aggregate_accuracies([0.5, 0.7])
        assert out["mean"] == pytest.approx(0.6)
        assert out["sd"] == pytest.approx(np.std([0.5, 0.7], ddof=1))
        assert out["runs"] == 2

    def test_single_run_sd_zero(self):
        assert aggregate_accuracies([0.4])["sd"] == 0.0


class TestWorkerCap:
    def test_env_override(self, monkeypatch):
        monkeypatch.delenv("CLIPE_THREADS", raising=False)
        assert worker_cap() == 1
        monkeypatch.setenv("CLIPE_THREADS", "4")
        assert worker_cap() == 4
        monkeypatch.setenv("CLIPE_THREADS", "junk")
        assert worker_cap() == 1
        monkeypatch.setenv("CLIPE_THREADS", "0")
        assert worker_cap() == 1
