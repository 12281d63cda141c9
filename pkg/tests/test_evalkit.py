"""Retrieval metrics against a brute-force oracle, plus protocol tests."""

import numpy as np
import pytest

from comicreid.evalkit import (
    CalibrationResult,
    EvalReport,
    RetrievalInstance,
    aggregate,
    calibrate_threshold,
    curate_global,
    global_eval,
    local_eval,
    metrics,
    rank_references,
    read_curation_manifest,
    write_curation_manifest,
)
from comicreid.model import (
    BBox,
    CharacterInstance,
    DataError,
    Detection,
    IdentityAnnotation,
    PanelSequence,
)

from oracles import metrics_ref


def make_instance(flags):
    refs = tuple(f"r{i}" for i in range(len(flags)))
    return RetrievalInstance("q", refs, tuple(bool(f) for f in flags))


# ---------------------------------------------------------------- metrics

def test_hand_example_ranks_1_and_3():
    m = metrics(make_instance([1, 0, 1]))
    assert m["ap"] == pytest.approx(0.5 * (1.0 + 2.0 / 3.0))
    assert m["ap_at_r"] == pytest.approx(0.5)
    assert m["rr"] == 1.0
    assert m["p_at_1"] == 1.0
    assert m["r_precision"] == 0.5


def test_perfect_retrieval_all_ones():
    for r in (1, 2, 5):
        m = metrics(make_instance([1] * r + [0] * 3))
        assert all(v == 1.0 for v in m.values())


def test_single_relevant_at_rank_2():
    m = metrics(make_instance([0, 1]))
    assert m["rr"] == 0.5
    assert m["p_at_1"] == 0.0
    assert m["ap"] == 0.5


def test_r_zero_raises():
    with pytest.raises(DataError):
        metrics(make_instance([0, 0, 0]))


def test_indicator_variant_differs_from_standard():
    inst = make_instance([0, 1, 1])  # R = 2
    standard = metrics(inst)["ap_at_r"]
    literal = metrics(inst, map_at_r_variant="indicator")["ap_at_r"]
    assert standard == pytest.approx(0.25)   # prec@2 = 1/2, averaged over R
    assert literal == pytest.approx(0.5)     # one hit in top R
    assert literal == metrics(inst)["r_precision"]


def test_oracle_equivalence_1000_random_rankings():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 51))
        flags = rng.random(n) < rng.uniform(0.1, 0.9)
        if not flags.any():
            flags[int(rng.integers(0, n))] = True
        got = metrics(make_instance(flags.tolist()))
        want = metrics_ref(flags.tolist())
        for key in ("ap", "ap_at_r", "rr", "p_at_1", "r_precision"):
            assert got[key] == pytest.approx(want[key], abs=1e-9), key


def test_ap_at_r_never_exceeds_ap():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(1, 40))
        flags = (rng.random(n) < 0.4).tolist()
        if not any(flags):
            flags[0] = True
        m = metrics(make_instance(flags))
        assert m["ap_at_r"] <= m["ap"] + 1e-12 <= 1.0 + 1e-12
        assert 0.0 <= m["r_precision"] <= 1.0


def test_mrr_at_least_map_at_r_when_single_relevant():
    for rank in range(1, 51):
        flags = [0] * (rank - 1) + [1] + [0] * (50 - rank)
        m = metrics(make_instance(flags))
        assert m["rr"] >= m["ap_at_r"]
        assert m["rr"] == pytest.approx(1.0 / rank)
        assert m["ap_at_r"] == (1.0 if rank == 1 else 0.0)


def test_aggregate_drops_queries_without_positives():
    good = make_instance([1, 0])
    empty = RetrievalInstance("q2", ("a", "b"), (False, False))
    report = aggregate([good, empty], scope="local")
    assert report.n_queries == 1
    assert report.map == 1.0


def test_aggregate_unweighted_mean():
    insts = [make_instance([1]), make_instance([0, 1])]
    report = aggregate(insts, scope="global", n_references=5)
    assert report.mrr == pytest.approx((1.0 + 0.5) / 2)
    assert report.p_at_1 == pytest.approx(0.5)
    assert report.scope == "global"
    assert report.n_references == 5


def test_report_rejects_out_of_range_metric():
    with pytest.raises(DataError):
        EvalReport(map=1.2, map_at_r=0.5, mrr=0.5, p_at_1=0.5,
                   r_precision=0.5, scope="local", n_queries=1, n_references=1)


def test_report_csv_and_pretty(tmp_path):
    report = aggregate([make_instance([1, 0, 1])], scope="local")
    path = tmp_path / "report.csv"
    report.write_csv(path)
    text = path.read_text()
    assert text.splitlines()[0].startswith("scope,n_queries")
    assert "local" in text
    pretty = report.pretty()
    assert "MAP@R" in pretty and "0.5000" in pretty


# ---------------------------------------------------------------- ranking

def test_rank_references_orders_by_cosine_then_id():
    q = np.array([1.0, 0.0])
    refs = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 0.0]])  # r0, r1 tie-free
    ranked = rank_references(q, ["r0", "r1", "r2"], refs)
    # r0 and r2 are colinear with q (cos=1): tie broken by id; r1 last.
    assert ranked == ["r0", "r2", "r1"]


def test_rank_references_order_independent():
    rng = np.random.default_rng(3)
    q = rng.normal(size=8)
    refs = rng.normal(size=(6, 8))
    ids = [f"r{i}" for i in range(6)]
    base = rank_references(q, ids, refs)
    perm = rng.permutation(6)
    again = rank_references(q, [ids[i] for i in perm], refs[perm])
    assert base == again


# ---------------------------------------------------------------- local

def _bbox():
    return BBox(0.0, 0.0, 10.0, 10.0, 0.99)


def _inst(uuid, series="s", page="1", panel="0"):
    det = Detection("face", _bbox(), 0, series, page, panel)
    return CharacterInstance(uuid, 0, series, page, panel, face=det, body=None)


def _sequence(seq_id, series, members_by_identity, panel="0"):
    instances = []
    annotations = []
    for ident, uuids in members_by_identity.items():
        annotations.append(IdentityAnnotation(ident, frozenset(uuids)))
        for u in uuids:
            instances.append(_inst(u, series=series, panel=panel))
    return PanelSequence(
        sequence_id=seq_id, series_id=series,
        panels=(("1", panel),) * 4,
        instances=instances,
        annotations=annotations,
    ), instances


def test_local_eval_three_instances_example():
    seq, _ = _sequence("q1", "s", {"A": ["a1", "a2"], "B": ["b1"]})
    emb = {
        "a1": np.array([1.0, 0.0]),
        "a2": np.array([0.99, 0.1]),
        "b1": np.array([0.0, 1.0]),
    }
    report = local_eval([seq], emb)
    assert report.n_queries == 2  # b1 skipped: no positive
    assert report.p_at_1 == 1.0
    assert report.map == 1.0


def test_local_eval_single_instance_contributes_nothing():
    seq, _ = _sequence("q1", "s", {"A": ["a1"]})
    with pytest.raises(DataError):
        local_eval([seq], {"a1": np.array([1.0, 0.0])})


def test_local_eval_random_p_at_1_one_third():
    rng = np.random.default_rng(17)
    sequences, embeddings = [], {}
    for k in range(600):
        ids = {f"A{k}": [f"a{k}x", f"a{k}y"], f"B{k}": [f"b{k}x", f"b{k}y"]}
        seq, _ = _sequence(f"q{k}", "s", ids)
        sequences.append(seq)
        for u in (f"a{k}x", f"a{k}y", f"b{k}x", f"b{k}y"):
            embeddings[u] = rng.normal(size=16)
    report = local_eval(sequences, embeddings)
    assert report.n_queries == 2400
    assert abs(report.p_at_1 - 1.0 / 3.0) < 0.05


def test_local_eval_deterministic_and_order_independent():
    rng = np.random.default_rng(23)
    sequences, embeddings = [], {}
    for k in range(10):
        seq, _ = _sequence(f"q{k}", "s", {f"A{k}": [f"a{k}1", f"a{k}2"],
                                          f"B{k}": [f"b{k}1"]})
        sequences.append(seq)
        for u in (f"a{k}1", f"a{k}2", f"b{k}1"):
            embeddings[u] = rng.normal(size=8)
    fwd = local_eval(sequences, embeddings)
    rev = local_eval(list(reversed(sequences)), embeddings)
    assert fwd == rev


# ---------------------------------------------------------------- global

def test_curate_global_example_counts():
    # identity X: 3 instances, identity Y: 1 instance, one series
    seq, _ = _sequence("g1", "s", {"X": ["x1", "x2", "x3"], "Y": ["y1"]})
    curation = curate_global([seq])
    assert len(curation.queries) == 1
    assert set(curation.queries) == {"x1"}  # first by sorted uuid
    assert set(curation.references) == {"x2", "x3", "y1"}
    x_key = curation.queries["x1"]
    assert curation.references["x2"] == x_key == curation.references["x3"]
    assert curation.references["y1"] != x_key


def test_curate_global_all_singletons_no_queries():
    seq, _ = _sequence("g1", "s", {"X": ["x1"], "Y": ["y1"]})
    curation = curate_global([seq])
    assert curation.queries == {}
    assert set(curation.references) == {"x1", "y1"}


def test_curate_global_links_across_sequences():
    # u2 appears in both sequences under X and X' -> same linked class
    seq1, _ = _sequence("g1", "s", {"X": ["u1", "u2"]})
    seq2, _ = _sequence("g2", "s", {"Xp": ["u2", "u3"], "Y": ["y1"]})
    curation = curate_global([seq1, seq2])
    assert set(curation.queries) == {"u1"}
    key = curation.queries["u1"]
    assert curation.references["u2"] == key == curation.references["u3"]


def test_curate_global_empty_raises():
    seq = PanelSequence("g1", "s", (("1", "0"),) * 4, [], annotations=None)
    with pytest.raises(DataError):
        curate_global([seq])


def test_global_eval_separable_embeddings_perfect():
    seq_a, _ = _sequence("g1", "sa", {"X": ["x1", "x2", "x3"]})
    seq_b, _ = _sequence("g2", "sb", {"Z": ["z1", "z2"]})
    emb = {
        "x1": np.array([1.0, 0.0, 0.0]),
        "x2": np.array([0.9, 0.1, 0.0]),
        "x3": np.array([0.95, -0.05, 0.0]),
        "z1": np.array([0.0, 1.0, 0.0]),
        "z2": np.array([0.0, 0.9, 0.1]),
    }
    report = global_eval([seq_a, seq_b], emb)
    assert report.scope == "global"
    assert report.n_queries == 2
    assert report.n_references == 3  # x2, x3, z2
    assert report.map == 1.0 and report.p_at_1 == 1.0


def test_global_eval_pools_references_across_series():
    # query x1 must rank z-references too (cross-series distractors)
    seq_a, _ = _sequence("g1", "sa", {"X": ["x1", "x2"]})
    seq_b, _ = _sequence("g2", "sb", {"Z": ["z1", "z2"]})
    emb = {
        "x1": np.array([1.0, 0.0]),
        "x2": np.array([0.0, 1.0]),   # far from x1
        "z1": np.array([1.0, 0.05]),  # z2 reference close to x1
        "z2": np.array([1.0, 0.01]),
    }
    report = global_eval([seq_a, seq_b], emb)
    # x1's nearest reference is z2 (wrong), so P@1 < 1 for that query
    assert report.p_at_1 < 1.0


def test_curation_manifest_round_trip(tmp_path):
    seq, _ = _sequence("g1", "s", {"X": ["x1", "x2", "x3"], "Y": ["y1"]})
    curation = curate_global([seq])
    path = tmp_path / "manifest.jsonl"
    write_curation_manifest(curation, path)
    back = read_curation_manifest(path)
    assert back.queries == curation.queries
    assert back.references == curation.references


# ---------------------------------------------------------------- calibrate

def test_midpoint_of_means():
    similar = np.array([0.75, 0.79])     # mean 0.77
    dissimilar = np.array([0.95, 0.99])  # mean 0.97
    result = calibrate_threshold(similar, dissimilar, method="midpoint")
    assert result.threshold == pytest.approx(0.87)
    assert not result.degenerate


def test_identical_distributions_degenerate_warning():
    rng = np.random.default_rng(5)
    sample = rng.normal(1.0, 0.1, size=200)
    with pytest.warns(UserWarning, match="discriminative"):
        result = calibrate_threshold(sample, sample, method="youden")
    assert result.degenerate
    assert abs(result.separation) < 1e-9


def test_youden_on_separated_gaussians_matches_sweep():
    rng = np.random.default_rng(9)
    similar = rng.normal(0.5, 0.05, size=400)
    dissimilar = rng.normal(1.5, 0.05, size=400)
    result = calibrate_threshold(similar, dissimilar, method="youden")
    assert similar.mean() < result.threshold < dissimilar.mean()
    assert result.separation == pytest.approx(1.0)  # fully separable

    # exhaustive sweep oracle over a dense grid: J at our threshold is maximal
    grid = np.linspace(0.0, 2.0, 20001)
    def j(t):
        return np.mean(similar < t) - np.mean(dissimilar < t)
    best_j = max(j(t) for t in grid)
    assert result.separation >= best_j - 1e-12


def test_youden_threshold_deterministic_and_tie_stable():
    similar = np.array([0.1, 0.2, 0.3])
    dissimilar = np.array([0.8, 0.9, 1.0])
    a = calibrate_threshold(similar, dissimilar, method="youden")
    b = calibrate_threshold(similar[::-1].copy(), dissimilar[::-1].copy(),
                            method="youden")
    assert a.threshold == b.threshold
    assert isinstance(a, CalibrationResult)


def test_empty_sample_raises():
    with pytest.raises(DataError):
        calibrate_threshold(np.array([]), np.array([1.0]))
    with pytest.raises(DataError):
        calibrate_threshold(np.array([1.0]), np.array([]))
    with pytest.raises(DataError):
        calibrate_threshold(np.array([1.0]), np.array([2.0]), method="nope")
