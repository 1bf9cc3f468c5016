import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from iaqcnn import data as dt
from iaqcnn.errors import ConfigError, DataError


@pytest.fixture(scope="module")
def small_ds(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    cfg = dt.SynthConfig(n_patients=20, slices_per_patient=12, lesion_slices=5, image_size=16, seed=7)
    return cfg, dt.generate_synthetic(cfg, root)


def _tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12), elements=st.floats(0, 1)))
def test_pgm_round_trip_within_quantization(img):
    back = dt.decode_pgm(dt.encode_pgm(img)) / 65535
    assert back.shape == img.shape
    assert np.max(np.abs(back - img)) <= 0.5 / 65535 + 1e-12


@given(hnp.arrays(np.float32, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12), elements=st.floats(-1e3, 1e3, width=32)))
def test_f32_round_trip_exact(img):
    np.testing.assert_array_equal(dt.decode_f32(dt.encode_f32(img)), img)


def test_pgm_header_layout():
    raw = dt.encode_pgm(np.array([[0.0, 1.0]]))
    assert raw.startswith(b"P5\n2 1\n65535\n")
    assert raw.endswith(b"\x00\x00\xff\xff")  # 16-bit big-endian samples
    with pytest.raises(DataError):
        dt.decode_pgm(b"P6\n1 1\n255\n\x00")


def test_synthetic_layout_and_round_trip(small_ds, tmp_path):
    cfg, man = small_ds
    assert len(man.patients) == 20
    assert sum(p.label for p in man.patients) == 10
    root = man.root
    assert (root / "labels.csv").read_text().splitlines()[0] == "patient_id,label"
    pid = man.patients[0].patient_id
    files = sorted((root / pid / "t1gd").iterdir())
    assert [f.name for f in files] == [f"slice_{k:03d}.pgm" for k in range(12)]
    vol = man.load_volume(pid, "t1gd")
    assert len(vol.slices) == 12 and vol.slices[0].shape == (16, 16)
    again = dt.load_dataset(root)
    assert [(p.patient_id, p.label) for p in again.patients] == [(p.patient_id, p.label) for p in man.patients]
    # every slice file referenced exactly once
    listed = [f for fs in man.slice_files.values() for f in fs]
    assert len(listed) == len(set(listed)) == len(list(root.rglob("*.pgm")))


def test_synthetic_determinism(tmp_path):
    cfg = dt.SynthConfig(n_patients=6, slices_per_patient=6, lesion_slices=3, image_size=12, seed=7)
    dt.generate_synthetic(cfg, tmp_path / "a")
    dt.generate_synthetic(cfg, tmp_path / "b")
    assert _tree_bytes(tmp_path / "a") == _tree_bytes(tmp_path / "b")


def test_synth_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        dt.generate_synthetic(dt.SynthConfig(n_patients=2), tmp_path)
    with pytest.raises(ConfigError):
        dt.SynthConfig(contrast=2.0).validate()


def test_zero_contrast_makes_classes_identical():
    cfg = dt.SynthConfig(contrast=0.0)
    assert dt._class_params(cfg, 0) == dt._class_params(cfg, 1)
    a = dt.synth_volume(cfg, 3, 0, "t1gd")
    b = dt.synth_volume(cfg, 3, 1, "t1gd")
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_default_contrast_pixel_mean_threshold():
    cfg = dt.SynthConfig(n_patients=40)
    labels = np.arange(40) % 2
    mid = cfg.slices_per_patient // 2  # inside the lesion run for every patient
    m = np.array([dt.synth_volume(cfg, i, int(labels[i]), "t1gd")[mid].mean() for i in range(40)])
    train = np.arange(40) < 20
    s = np.sort(m[train])
    cands = (s[1:] + s[:-1]) / 2
    best = max(cands, key=lambda t: np.mean((m[train] > t) == labels[train]))
    assert np.mean((m[~train] > best) == labels[~train]) > 0.8


def _write_ds(root, labels_text, slices=True):
    root.mkdir(parents=True, exist_ok=True)
    (root / "labels.csv").write_text(labels_text)
    for line in labels_text.splitlines()[1:]:
        pid = line.split(",")[0]
        d = root / pid / "t1gd"
        d.mkdir(parents=True, exist_ok=True)
        if slices:
            (d / "slice_000.pgm").write_bytes(dt.encode_pgm(np.zeros((4, 4))))


def test_load_rejections(tmp_path):
    with pytest.raises(DataError, match="labels.csv"):
        dt.load_dataset(tmp_path / "nothing")
    _write_ds(tmp_path / "bad", "patient_id,label\na,0\nb,2\n")
    with pytest.raises(DataError, match="row 3"):
        dt.load_dataset(tmp_path / "bad")
    _write_ds(tmp_path / "empty", "patient_id,label\na,0\nb,1\n", slices=False)
    with pytest.raises(DataError, match="patient a"):
        dt.load_dataset(tmp_path / "empty")
    _write_ds(tmp_path / "mixed", "patient_id,label\na,0\n")
    (tmp_path / "mixed" / "a" / "t1gd" / "slice_001.pgm").write_bytes(dt.encode_pgm(np.zeros((5, 4))))
    man = dt.load_dataset(tmp_path / "mixed")
    with pytest.raises(DataError, match="slice 1"):
        man.load_volume("a", "t1gd")


def _manifest(n0, n1):
    pats = [dt.PatientEntry(f"p{i:02d}", 0 if i < n0 else 1, ("t1gd",)) for i in range(n0 + n1)]
    return dt.DatasetManifest(None, pats)


def test_split_counts_and_determinism():
    m = dt.split_patients(_manifest(10, 10), (0.7, 0.15, 0.15), seed=3)
    counts = {s: sum(v == s for v in m.split.values()) for s in dt.SPLITS}
    assert counts == {"train": 14, "val": 3, "test": 3}
    train_labels = {m.patient(p).label for p, s in m.split.items() if s == "train"}
    assert train_labels == {0, 1}
    again = dt.split_patients(_manifest(10, 10), (0.7, 0.15, 0.15), seed=3)
    assert again.split == m.split
    with pytest.raises((ConfigError, DataError)):
        dt.split_patients(_manifest(10, 10), (1, 0, 0))
    with pytest.raises(DataError):
        dt.split_patients(_manifest(2, 2), (0.7, 0.15, 0.15))


@given(n0=st.integers(3, 30), n1=st.integers(3, 30), seed=st.integers(0, 1000))
def test_split_stratified_and_disjoint(n0, n1, seed):
    try:
        m = dt.split_patients(_manifest(n0, n1), (0.7, 0.15, 0.15), seed)
    except DataError:
        return  # too few patients of one class for three splits
    assert set(m.split) == {p.patient_id for p in m.patients}
    frac1 = n1 / (n0 + n1)
    for s in dt.SPLITS:
        members = [p for p, v in m.split.items() if v == s]
        k1 = sum(m.patient(p).label for p in members)
        assert abs(k1 - frac1 * len(members)) <= 1 + 1e-9


def test_expand_labels():
    s = dt.expand_labels("p1", 1, range(10))
    assert len(s) == 10 and {x.label for x in s} == {1}
    assert len(dt.expand_labels("p1", 0, [4])) == 1
    allx = [x for pid, lab in (("a", 0), ("b", 1), ("c", 0)) for x in dt.expand_labels(pid, lab, range(10))]
    assert len(allx) == 30 and [x.patient_id for x in allx[:10]] == ["a"] * 10


def test_feature_table_round_trip(rng):
    t = dt.FeatureTable(["a", "a", "b"], np.array([3, 5, 1]), ["train", "train", "test"], np.array([0, 0, 1]),
                        rng.uniform(-np.pi, np.pi, (3, 4)))
    text = t.to_csv()
    assert text.splitlines()[0] == "patient_id,slice_index,split,label,x_0,x_1,x_2,x_3"
    back = dt.FeatureTable.from_csv(text)
    np.testing.assert_array_equal(back.x, t.x)
    assert back.patient_ids == t.patient_ids and back.subset("test").patient_ids == ["b"]
