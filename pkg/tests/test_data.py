"""CSV loading, encoding and splitting tests."""

import numpy as np
import pytest

from conftest import raw_dataset

from ganids import data as dio


def write_csv(tmp_path, name, lines):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return p


def simple_schema(label_map=None, caps=None):
    return dio.DatasetSchema(
        columns=[dio.Column("a", "numeric"), dio.Column("proto", "categorical"),
                 dio.Column("label", "label")],
        classes=["normal", "attack"], normal_class="normal",
        label_map=label_map or {}, class_caps=caps or {})


def test_load_basic(tmp_path):
    p = write_csv(tmp_path, "d.csv", ["1.5,tcp,normal", "2.0,udp,attack"])
    ds = dio.load_dataset(p, simple_schema())
    assert len(ds) == 2
    assert ds.labels.tolist() == [0, 1]
    assert ds.features[0].tolist() == [1.5, "tcp"]
    assert not ds.encoded


def test_load_row_arity_names_line(tmp_path):
    p = write_csv(tmp_path, "d.csv", ["1,tcp,normal", "2,udp"])
    with pytest.raises(dio.RowArity) as e:
        dio.load_dataset(p, simple_schema())
    assert e.value.line == 2


def test_load_unknown_label_names_line_and_value(tmp_path):
    p = write_csv(tmp_path, "d.csv", ["1,tcp,normal", "2,udp,mystery"])
    with pytest.raises(dio.UnknownLabel) as e:
        dio.load_dataset(p, simple_schema())
    assert e.value.line == 2
    assert e.value.value == "mystery"


def test_load_label_map(tmp_path):
    p = write_csv(tmp_path, "d.csv", ["1,tcp,neptune", "2,udp,normal"])
    ds = dio.load_dataset(p, simple_schema(label_map={"neptune": "attack"}))
    assert ds.labels.tolist() == [1, 0]


def test_load_missing_file():
    with pytest.raises(dio.IoFailure):
        dio.load_dataset("/nonexistent/file.csv", simple_schema())


def test_load_class_caps_keep_head_of_stream(tmp_path):
    lines = [f"{i},tcp,attack" for i in range(5)] + ["9,udp,normal"]
    p = write_csv(tmp_path, "d.csv", lines)
    ds = dio.load_dataset(p, simple_schema(caps={"attack": 2}))
    attacks = ds.features[ds.labels == 1][:, 0].tolist()
    assert attacks == [0.0, 1.0]  # first two attack rows in file order


def test_load_multiple_files_order_stable(tmp_path):
    p1 = write_csv(tmp_path, "a.csv", ["1,tcp,normal"])
    p2 = write_csv(tmp_path, "b.csv", ["2,udp,attack"])
    ds = dio.load_dataset([p1, p2], simple_schema())
    assert ds.features[:, 0].tolist() == [1.0, 2.0]
    assert dio.load_dataset([p1, p2], simple_schema()).content_hash() \
        == ds.content_hash()


def test_load_header_skipped(tmp_path):
    schema = simple_schema()
    schema.has_header = True
    p = write_csv(tmp_path, "d.csv", ["a,proto,label", "1,tcp,normal"])
    assert len(dio.load_dataset(p, schema)) == 1


def test_schema_requires_single_label_column():
    with pytest.raises(ValueError):
        dio.DatasetSchema(columns=[dio.Column("a", "numeric")],
                          classes=["normal"], normal_class="normal")


def test_preprocess_minmax():
    ds = raw_dataset([[2.0], [4.0], [6.0]], [0, 0, 1], ["numeric"],
                     ["normal", "attack"])
    enc, plan = dio.preprocess(ds)
    assert enc.features[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert enc.encoded


def test_preprocess_constant_column_maps_to_zero():
    ds = raw_dataset([[5.0], [5.0], [5.0]], [0, 0, 1], ["numeric"],
                     ["normal", "attack"])
    enc, _ = dio.preprocess(ds)
    assert enc.features[:, 0].tolist() == [0.0, 0.0, 0.0]


def test_preprocess_onehot_roundtrip():
    ds = raw_dataset([["tcp"], ["udp"], ["icmp"]], [0, 0, 1], ["categorical"],
                     ["normal", "attack"])
    enc, plan = dio.preprocess(ds)
    # levels are sorted: icmp, tcp, udp
    assert enc.features[1].tolist() == [0.0, 0.0, 1.0]
    back = dio.inverse_transform(enc.features, plan)
    assert back[:, 0].tolist() == ["tcp", "udp", "icmp"]


def test_preprocess_unseen_level_is_all_zeros():
    train = raw_dataset([["tcp"], ["udp"]], [0, 1], ["categorical"],
                        ["normal", "attack"])
    _, plan = dio.preprocess(train)
    apply = raw_dataset([["icmp"]], [0], ["categorical"], ["normal", "attack"])
    enc, _ = dio.preprocess(apply, plan)
    assert enc.features[0].tolist() == [0.0, 0.0]


def test_preprocess_rejects_encoded_input():
    ds = raw_dataset([[1.0]], [0], ["numeric"], ["normal", "attack"])
    enc, _ = dio.preprocess(ds)
    with pytest.raises(dio.PlanMismatch):
        dio.preprocess(enc)


def test_preprocess_rejects_foreign_plan():
    a = raw_dataset([[1.0]], [0], ["numeric"], ["normal", "attack"])
    b = raw_dataset([["x", 1.0]], [0], ["categorical", "numeric"],
                    ["normal", "attack"])
    _, plan = dio.preprocess(a)
    with pytest.raises(dio.PlanMismatch):
        dio.preprocess(b, plan)


def test_plan_serialization_roundtrip():
    ds = raw_dataset([[2.0, "tcp"], [4.0, "udp"]], [0, 1],
                     ["numeric", "categorical"], ["normal", "attack"])
    _, plan = dio.preprocess(ds)
    clone = dio.PreprocessPlan.from_dict(plan.to_dict())
    assert clone == plan


def test_inverse_transform_clamps_numeric():
    plan = dio.PreprocessPlan([("f0", "numeric", 10.0, 20.0)], "x")
    back = dio.inverse_transform(np.array([[-0.5], [1.7]]), plan)
    assert back[:, 0].tolist() == [10.0, 20.0]


def test_split_counts_90_10():
    rows = [[float(i)] for i in range(100)]
    labels = [0] * 90 + [1] * 10
    ds = raw_dataset(rows, labels, ["numeric"], ["normal", "attack"])
    train, test = dio.split_stratified(ds, 0.8, seed=3)
    assert np.sum(train.labels == 0) == 72
    assert np.sum(train.labels == 1) == 8
    assert np.sum(test.labels == 0) == 18
    assert np.sum(test.labels == 1) == 2


def test_split_is_partition_and_deterministic():
    rows = [[float(i)] for i in range(50)]
    labels = [i % 3 for i in range(50)]
    ds = raw_dataset(rows, labels, ["numeric"], ["a", "b", "c"], normal="a")
    t1, s1 = dio.split_stratified(ds, 0.7, seed=9)
    t2, s2 = dio.split_stratified(ds, 0.7, seed=9)
    assert t1.content_hash() == t2.content_hash()
    assert s1.content_hash() == s2.content_hash()
    seen = sorted(t1.features[:, 0].tolist() + s1.features[:, 0].tolist())
    assert seen == [float(i) for i in range(50)]


def test_split_singleton_class_goes_to_train():
    ds = raw_dataset([[0.0], [1.0], [2.0], [3.0]], [0, 0, 0, 1],
                     ["numeric"], ["normal", "attack"])
    train, test = dio.split_stratified(ds, 0.5, seed=0)
    assert np.sum(train.labels == 1) == 1
    assert np.sum(test.labels == 1) == 0


def test_split_rejects_bad_fraction():
    ds = raw_dataset([[0.0]], [0], ["numeric"], ["normal"])
    with pytest.raises(ValueError):
        dio.split_stratified(ds, 1.5, seed=0)


def test_concat_keeps_synthetic_flags():
    a = raw_dataset([[0.0]], [0], ["numeric"], ["normal", "attack"])
    b = raw_dataset([[1.0]], [1], ["numeric"], ["normal", "attack"])
    b.synthetic[:] = True
    both = dio.concat([a, b])
    assert both.synthetic.tolist() == [False, True]


def test_builtin_schema_loads():
    schema = dio.builtin_schema("nslkdd")
    assert len(schema.feature_columns) == 41
    assert len(schema.classes) == 5
    assert schema.normal_class == "Normal"
    kinds = {c.name: c.kind for c in schema.columns}
    assert kinds["protocol_type"] == "categorical"
    assert kinds["service"] == "categorical"
    assert kinds["flag"] == "categorical"
    # common raw attack names resolve to their families
    assert schema.classes[schema.resolve_label("neptune")] == "DoS"
    assert schema.classes[schema.resolve_label("nmap")] == "Probe"
    assert schema.classes[schema.resolve_label("guess_passwd")] == "R2L"
    assert schema.classes[schema.resolve_label("rootkit")] == "U2R"
    assert schema.resolve_label("no_such_attack") is None


def test_schema_json_roundtrip(tmp_path):
    schema = simple_schema(label_map={"x": "attack"}, caps={"attack": 3})
    p = tmp_path / "s.json"
    import json
    p.write_text(json.dumps(schema.to_dict()))
    clone = dio.DatasetSchema.from_json(p)
    assert clone.to_dict() == schema.to_dict()
