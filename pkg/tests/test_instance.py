import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quaydeck.instance import (
    GeneratorConfig,
    InstanceError,
    TASK_LOADING,
    TASK_UNLOADING,
    distance,
    generate_instance,
    instance_to_dict,
    load_instance,
    save_instance,
)


def test_paper_scale_instance_partitions_tasks():
    cfg = GeneratorConfig(qc_count=28, yard_count=100, task_count=700, truck_count=100)
    inst = generate_instance(cfg, seed=7)
    sizes = [len(lst) for lst in inst.task_lists]
    assert len(sizes) == 28
    assert sum(sizes) == 700
    assert max(sizes) - min(sizes) <= 1


def test_minimal_instance():
    cfg = GeneratorConfig(qc_count=1, yard_count=1, task_count=1, truck_count=1)
    inst = generate_instance(cfg, seed=123)
    assert len(inst.task_lists) == 1
    (task,) = inst.task_lists[0]
    assert task.qc_index == 0 and task.order_index == 0


def test_generation_is_deterministic(tmp_path):
    cfg = GeneratorConfig(qc_count=3, yard_count=5, task_count=20, truck_count=4)
    a = generate_instance(cfg, seed=99)
    b = generate_instance(cfg, seed=99)
    pa = save_instance(a, tmp_path / "a.json")
    pb = save_instance(b, tmp_path / "b.json")
    assert pa.read_bytes() == pb.read_bytes()


def test_task_lists_type_homogeneous(desk_instance):
    for lst in desk_instance.task_lists:
        assert len({t.task_type for t in lst}) == 1
    types = {lst[0].task_type for lst in desk_instance.task_lists}
    assert types == {TASK_LOADING, TASK_UNLOADING}


def test_generator_rejects_bad_configs():
    with pytest.raises(InstanceError):
        generate_instance(
            GeneratorConfig(qc_count=33, yard_count=4, task_count=40, truck_count=33), 0
        )
    with pytest.raises(InstanceError):
        generate_instance(
            GeneratorConfig(qc_count=4, yard_count=4, task_count=3, truck_count=4), 0
        )
    with pytest.raises(InstanceError):
        generate_instance(
            GeneratorConfig(qc_count=4, yard_count=4, task_count=10, truck_count=2), 0
        )


def test_distance_hand_case():
    # Nodes at grid cells (0,0) and (3,4) with a 10 m cell: 3*10 + 4*10 = 70.
    cfg = GeneratorConfig(qc_count=1, yard_count=25, task_count=4, truck_count=2, cell_m=10.0)
    inst = generate_instance(cfg, seed=0)
    made = [n for n in inst.nodes]
    a = next(n for n in made if (n.x, n.y) == (5.0, 10.0))   # yard col 0 row 0
    b = next(n for n in made if (n.x, n.y) == (35.0, 50.0))  # yard col 3 row 4
    assert distance(inst, a.id, b.id) == 70.0


def test_distance_identity_and_symmetry(desk_instance):
    rng = np.random.default_rng(0)
    n = len(desk_instance.nodes)
    for _ in range(1000):
        a, b = int(rng.integers(n)), int(rng.integers(n))
        d_ab = distance(desk_instance, a, b)
        assert d_ab == distance(desk_instance, b, a)
        if a == b:
            assert d_ab == 0.0
        else:
            assert d_ab > 0.0


@settings(max_examples=200, deadline=None)
@given(st.tuples(st.integers(0, 16), st.integers(0, 16), st.integers(0, 16)))
def test_distance_triangle_inequality(triple):
    cfg = GeneratorConfig(qc_count=4, yard_count=12, task_count=16, truck_count=8)
    inst = generate_instance(cfg, seed=5)
    a, b, c = triple
    assert distance(inst, a, c) <= distance(inst, a, b) + distance(inst, b, c) + 1e-9


def test_distance_unknown_node(desk_instance):
    with pytest.raises(InstanceError):
        distance(desk_instance, 0, len(desk_instance.nodes))


def test_depot_distinct_from_work_nodes(desk_instance):
    depot = desk_instance.nodes[desk_instance.depot_node]
    for node in desk_instance.nodes[:-1]:
        assert (node.x, node.y) != (depot.x, depot.y)


def test_save_load_round_trip(tmp_path, desk_instance):
    path = save_instance(desk_instance, tmp_path / "inst.json")
    loaded = load_instance(path)
    assert instance_to_dict(loaded) == instance_to_dict(desk_instance)


def test_load_truncated_file(tmp_path, desk_instance):
    path = save_instance(desk_instance, tmp_path / "inst.json")
    path.write_text(path.read_text()[: 200], "utf-8")
    with pytest.raises(InstanceError):
        load_instance(path)


def test_load_rejects_out_of_range_yard(tmp_path, desk_instance):
    doc = instance_to_dict(desk_instance)
    doc["task_lists"][0][0]["yard_index"] = 999
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), "utf-8")
    with pytest.raises(InstanceError, match="yard_index"):
        load_instance(path)


def test_load_rejects_wrong_format(tmp_path, desk_instance):
    doc = instance_to_dict(desk_instance)
    doc["format"] = "quaydeck-instance/999"
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc), "utf-8")
    with pytest.raises(InstanceError, match="format"):
        load_instance(path)


def test_unloading_task_runs_crane_to_yard(desk_instance):
    lst = next(l for l in desk_instance.task_lists if l[0].task_type == TASK_UNLOADING)
    task = lst[0]
    f, s = desk_instance.task_nodes(task)
    assert f == desk_instance.qc_node(task.qc_index)
    assert s == desk_instance.yard_node(task.yard_index)


def test_loading_task_runs_yard_to_crane(desk_instance):
    lst = next(l for l in desk_instance.task_lists if l[0].task_type == TASK_LOADING)
    task = lst[0]
    f, s = desk_instance.task_nodes(task)
    assert f == desk_instance.yard_node(task.yard_index)
    assert s == desk_instance.qc_node(task.qc_index)
