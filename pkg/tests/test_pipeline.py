import numpy as np

from tracklearn import pipeline, scenegen
from tracklearn.config import RunConfig


def desk_cfg(**kw):
    defaults = dict(seed=7, downsample=1, filter_size=7, mhi_diff_thresh=6.0,
                    grid_rows=2, grid_cols=2, shape_prior_sigma=8.0)
    defaults.update(kw)
    return RunConfig(**defaults)


def tiny_scene(seed=7, n_frames=12):
    return scenegen.SceneSpec(
        dims=(64, 80), n_frames=n_frames,
        objects=[scenegen.SceneObject(class_name="person", size=13,
                                      start=(20.0, 20.0), velocity=(0.3, 0.6))],
        noise_sigma=0.02, seed=seed)


class TestRunTracking:
    def test_records_shape_and_determinism(self):
        cfg = desk_cfg()
        frames, _ = scenegen.generate(tiny_scene())
        r1 = pipeline.run_tracking(frames, cfg, collect_shapes=True)
        r2 = pipeline.run_tracking(frames, cfg)
        assert len(r1) == 12 * 4
        assert r1[0].shape.shape == (cfg.shape_dim, cfg.shape_dim)
        assert r1[0].shape.dtype == np.float32
        for a, b in zip(r1, r2):
            assert a.output.box == b.output.box

    def test_classifier_hook_runs_per_frame(self):
        cfg = desk_cfg()
        frames, _ = scenegen.generate(tiny_scene(n_frames=4))
        calls = []

        def fake_classifier(states, outputs, pre):
            calls.append(len(outputs))
            return [(np.zeros(4), "clutter")] * len(outputs)

        recs = pipeline.run_tracking(frames, cfg, classifier=fake_classifier)
        assert calls == [4, 4, 4, 4]
        assert all(r.label == "clutter" for r in recs)


class TestPatchSet:
    def test_balanced_and_labeled(self):
        cfg = desk_cfg(classes=("person", "clutter"))
        frames, gts = scenegen.generate(tiny_scene(n_frames=10))
        from tracklearn import features
        pres = [features.preprocess(f, downsample_factor=1) for f in frames]
        patches, labels = pipeline.build_patch_set([pres], [gts], cfg,
                                                   per_class=20, seed=3)
        assert patches.shape == (40, 61, 61)
        counts = dict(zip(*np.unique(labels, return_counts=True)))
        assert counts == {"clutter": 20, "person": 20}

    def test_deterministic_for_seed(self):
        cfg = desk_cfg(classes=("person", "clutter"))
        frames, gts = scenegen.generate(tiny_scene(n_frames=10))
        from tracklearn import features
        pres = [features.preprocess(f, downsample_factor=1) for f in frames]
        p1, l1 = pipeline.build_patch_set([pres], [gts], cfg, per_class=10, seed=3)
        p2, l2 = pipeline.build_patch_set([pres], [gts], cfg, per_class=10, seed=3)
        assert np.array_equal(p1, p2)
        assert np.array_equal(l1, l2)


class TestEnsembleTraining:
    def test_end_to_end_shapes(self):
        cfg = desk_cfg(slfn_hidden=32, shape_hidden=64, scnn_hidden=200)
        frames, gts = scenegen.generate(tiny_scene(n_frames=8))
        bank = pipeline.build_bank(cfg)
        patches, labels = [], []
        rng = np.random.default_rng(0)
        # minimal scnn so the classifier hook has something to run
        for cls in cfg.classes:
            for _ in range(6):
                patches.append(rng.standard_normal((61, 61)))
                labels.append(cls)
        scnn = pipeline.train_scnn_from_patches(np.stack(patches),
                                                np.array(labels), cfg,
                                                bank=bank)
        recs = pipeline.run_tracking(frames, cfg, bank=bank,
                                     collect_shapes=True,
                                     classifier=pipeline.scnn_classifier(scnn))
        ens = pipeline.train_ensemble_from_records(recs, gts, scnn, cfg)
        assert len(ens.members) == 7
        kinds = [m.kind for m in ens.members]
        assert kinds.count("state") == 6 and kinds.count("shape") == 1
        assert ens.members[0].d_in == 44  # 8 base features for 4 classes
        assert ens.members[-1].d_in == cfg.shape_dim ** 2
        label, combined = ens.predict(np.zeros(4), recs[0].output.box,
                                      0.5, recs[0].shape)
        assert label in cfg.classes
        assert combined.shape == (4,)
