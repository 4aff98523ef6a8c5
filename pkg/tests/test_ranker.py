from __future__ import annotations

import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import direct_table
from oracles import central_difference_check, expected_random_ap
from housekeep.errors import NoPositivePairs, OutOfVocabulary, ParseError
from housekeep.preferences import PlacementClass, classify, correct_ranking
from housekeep.ranker.embeddings import ORR_KEY, ORR_QUERY, embed_prompt, load_embeddings, save_embeddings
from housekeep.ranker.scoring import (
    ExternalScores, NoisyOracleScores, OracleScores, RandomScores, ScoreModel,
    average_precision, calibrate_threshold, eval_map, ranked_placements, score_joint, threshold_grid, f1_score,
)
from housekeep.ranker.training import EmbeddingRanker, TrainConfig, train_cm


class FixedScores(ScoreModel):
    def __init__(self, orr: dict, or_: dict | None = None):
        self.orr, self.or_ = orr, or_ or {}

    def score_or(self, obj, room):
        return self.or_.get((obj, room), 0.5)

    def score_orr(self, obj, room, receptacle):
        return self.orr.get((obj, room, receptacle), 0.0)


# -- prompts -----------------------------------------------------------------


def test_embed_single_token_is_identity():
    table = {"mug": np.array([1.0, 2.0, 3.0])}
    assert np.array_equal(embed_prompt(table, "{object}", {"object": "mug"}), table["mug"])


def test_embed_mean_of_tokens():
    table = {"mug": np.array([1.0, 2.0]), "in": np.array([3.0, -2.0]), "kitchen": np.array([5.0, 6.0])}
    got = embed_prompt(table, ORR_QUERY, {"object": "mug", "room": "kitchen"})
    assert got.tolist() == [3.0, 2.0]


def test_embed_underscores_split_and_unknown_skipped():
    table = {"coffee": np.array([2.0]), "maker": np.array([4.0])}
    got = embed_prompt(table, ORR_KEY, {"receptacle": "Coffee_Maker", "room": "attic"})
    assert got.tolist() == [3.0]


def test_embed_all_missing():
    with pytest.raises(OutOfVocabulary):
        embed_prompt({"x": np.zeros(2)}, "{object}", {"object": "nothing_known"})


def test_embeddings_file_roundtrip(tmp_path):
    table = {"mug": np.array([0.25, -1.5]), "sink": np.array([1.0, 2.0])}
    save_embeddings(table, tmp_path / "e.txt")
    back = load_embeddings(tmp_path / "e.txt")
    assert set(back) == set(table)
    for k in table:
        assert np.allclose(back[k], table[k])


# -- joint scoring -----------------------------------------------------------


def test_joint_is_product():
    model = ExternalScores({"mug|kitchen": 0.8, "mug|bath": 0.2, "mug|kitchen|sink": 0.5, "mug|kitchen|shelf": 0.5,
                            "mug|bath|tub": 1.0})
    joint = dict(score_joint(model, "mug", [("kitchen", "sink"), ("kitchen", "shelf"), ("bath", "tub")]))
    assert joint[("kitchen", "sink")] == pytest.approx(0.4)
    assert joint[("bath", "tub")] == pytest.approx(0.2)


def test_joint_single_candidate():
    assert score_joint(RandomScores(3), "mug", [("kitchen", "sink")]) == [(("kitchen", "sink"), 1.0)]


def test_joint_needs_candidates():
    with pytest.raises(ValueError):
        score_joint(RandomScores(0), "mug", [])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_joint_three_candidates_brute_force(seed):
    model = RandomScores(seed)
    cands = [("a", "x"), ("a", "y"), ("b", "x")]
    got = dict(score_joint(model, "o", cands))
    # enumerate the product distribution by hand
    ra, rb = model.score_or("o", "a"), model.score_or("o", "b")
    ax, ay, bx = (model.score_orr("o", *c) for c in cands)
    pa, pb = ra / (ra + rb), rb / (ra + rb)
    want = {("a", "x"): pa * ax / (ax + ay), ("a", "y"): pa * ay / (ax + ay), ("b", "x"): pb * 1.0}
    for k in want:
        assert got[k] == pytest.approx(want[k], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.permutations(range(6)))
def test_joint_sums_to_one_and_order_invariant(seed, perm):
    cands = [(r, c) for r in ("a", "b") for c in ("x", "y", "z")]
    model = RandomScores(seed)
    base = score_joint(model, "o", cands)
    assert abs(sum(p for _, p in base) - 1.0) < 1e-9
    assert score_joint(model, "o", [cands[i] for i in perm]) == base


# -- ranked placements -------------------------------------------------------


def test_ranked_all_subthreshold():
    model = FixedScores({("o", "k", "a"): 0.2, ("o", "k", "b"): 0.3})
    correct, tail = ranked_placements(model, "o", [("k", "a"), ("k", "b")], 0.5)
    assert correct == []
    assert tail == [("k", "b"), ("k", "a")]


def test_ranked_rooms_by_or():
    orr = {("o", "bath", "tub"): 0.9, ("o", "kitchen", "sink"): 0.7, ("o", "kitchen", "shelf"): 0.8}
    model = FixedScores(orr, {("o", "kitchen"): 0.9, ("o", "bath"): 0.1})
    correct, tail = ranked_placements(model, "o", list({(r, c) for _, r, c in orr}), 0.5)
    assert correct == [("kitchen", "shelf"), ("kitchen", "sink"), ("bath", "tub")]
    assert tail == []


def test_ranked_oracle_matches_correct_rank(world):
    table = world.table
    model = OracleScores(table)
    for obj in table.objects:
        cands = [(k[1], k[2]) for k in table.keys_for(obj)]
        correct, _ = ranked_placements(model, obj, cands, 0.5)
        assert set(correct) == set(table.places_with(obj, PlacementClass.CORRECT))
        truth = correct_ranking(table, obj)
        # within each room the oracle order agrees with the annotators' ranking
        for room in {r for r, _ in correct}:
            mine = [p for p in correct if p[0] == room]
            ref = [p for p in truth if p[0] == room]
            c = [table.c(obj, *p) for p in mine]
            assert c == sorted(c, reverse=True) and set(mine) == set(ref)


# -- calibration -------------------------------------------------------------


def test_calibrate_separable():
    table = direct_table({("o", "k", "good"): (0.9, 0.0), ("o", "k", "bad"): (0.1, 0.8)})
    cal = calibrate_threshold(OracleScores(table), table)
    assert cal.f1 == 1.0
    assert cal.s_L == pytest.approx(0.10)


def test_calibrate_anticorrelated_matches_grid_oracle():
    entries = {("o", "k", f"r{i}"): ((0.9, 0.0) if i < 3 else (0.1, 0.8)) for i in range(8)}
    table = direct_table(entries)
    scores = {k: (0.2 + 0.05 * i if v[0] > 0.5 else 0.6 + 0.03 * i) for i, (k, v) in enumerate(entries.items())}
    cal = calibrate_threshold(FixedScores(scores), table)
    best = None
    for s in [i / 100 for i in range(101)]:
        tp = sum(1 for k, v in entries.items() if v[0] > 0.5 and scores[k] > s)
        fp = sum(1 for k, v in entries.items() if v[0] <= 0.5 and scores[k] > s)
        fn = sum(1 for k, v in entries.items() if v[0] > 0.5 and scores[k] <= s)
        f1 = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
        if best is None or f1 > best[0] + 1e-15:
            best = (f1, s)
    assert cal.f1 == pytest.approx(best[0])
    assert cal.s_L == pytest.approx(best[1])
    assert cal.s_L == 0.0  # everything-positive is the best a reversed scorer can do


def test_calibrate_constant_scores():
    entries = {("o", "k", f"r{i}"): ((0.9, 0.0) if i < 2 else (0.0, 0.9)) for i in range(5)}
    table = direct_table(entries)
    cal = calibrate_threshold(FixedScores({k: 0.7 for k in entries}), table)
    assert cal.f1 == pytest.approx(2 * 2 / (2 * 2 + 3))
    assert cal.s_L == 0.0


def test_grid_and_f1():
    g = threshold_grid()
    assert len(g) == 101 and g[0] == 0.0 and g[-1] == 1.0
    assert f1_score(np.array([True, False]), np.array([False, False])) == 0.0


# -- mAP ---------------------------------------------------------------------


def test_average_precision_examples():
    assert average_precision([True, True, False]) == 1.0
    assert average_precision([False, False, False, True]) == pytest.approx(0.25)
    assert average_precision([False, False]) is None


def test_map_oracle_is_perfect(world):
    assert eval_map(OracleScores(world.table), world.table) == {"OR": 1.0, "ORR": 1.0}


def test_map_reversed_one_of_four():
    entries = {("o", "k", "a"): (0.9, 0.0), ("o", "k", "b"): (0.1, 0.8), ("o", "k", "c"): (0.1, 0.8),
            ("o", "k", "d"): (0.1, 0.8)}
    table = direct_table(entries)
    rev = FixedScores({k: 1.0 - v[0] + 0.01 * i for i, (k, v) in enumerate(entries.items())})
    assert eval_map(rev, table)["ORR"] == pytest.approx(0.25)


def test_map_random_matches_enumeration():
    rng = np.random.default_rng(7)
    entries, expected = {}, []
    for o in range(150):
        for room in ("k", "b"):
            n = int(rng.integers(2, 7))
            labels = [bool(x) for x in rng.random(n) < 0.4]
            if not any(labels):
                labels[0] = True
            expected.append(expected_random_ap(labels))
            for i, lab in enumerate(labels):
                entries[(f"o{o}", room, f"r{i}")] = (0.9, 0.0) if lab else (0.1, 0.8)
    got = eval_map(RandomScores(11), direct_table(entries))["ORR"]
    assert abs(got - np.mean(expected)) <= 0.03


def test_map_empty_split():
    with pytest.raises(ValueError):
        eval_map(RandomScores(0), direct_table({("o", "k", "a"): (0.9, 0.0)}), [])


# -- training ----------------------------------------------------------------


def test_gradients_match_finite_differences():
    assert central_difference_check(100) < 1e-4


def _toy():
    rng = np.random.default_rng(0)
    objs, rooms, recs = ["cup", "pan", "book", "shoe"], ["kitchen", "office", "hall"], ["sink", "shelf", "desk", "rack"]
    home = {"cup": ("kitchen", "sink"), "pan": ("kitchen", "shelf"), "book": ("office", "desk"), "shoe": ("hall", "rack")}
    entries = {}
    for o in objs:
        for r in rooms:
            for c in recs:
                entries[(o, r, c)] = (0.9, 0.0, 1.0) if home[o] == (r, c) else (0.0, 0.1)
    words = objs + rooms + recs + ["in", "of"]
    emb = {w: rng.normal(size=8) for w in words}
    return direct_table(entries), emb


def test_training_reduces_loss():
    table, emb = _toy()
    cfg = TrainConfig(batch_size=4, epochs=60, hidden_dim=32, out_dim=16)
    _, hist = train_cm(emb, table, cfg, train_objects=table.objects)
    assert hist.orr_loss[-1] < hist.orr_loss[0]
    assert hist.or_loss[-1] < hist.or_loss[0]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_training_fits_toy_table(seed):
    table, emb = _toy()
    cfg = TrainConfig(batch_size=4, epochs=200, hidden_dim=32, out_dim=16, seed=seed, eval_every=5)
    model, hist = train_cm(emb, table, cfg, val_objects=table.objects, train_objects=table.objects)
    assert eval_map(model, table)["ORR"] >= 0.9
    assert set(hist.best_epoch) == {"OR", "ORR"}


def test_training_is_deterministic():
    table, emb = _toy()
    cfg = TrainConfig(batch_size=4, epochs=5, hidden_dim=16, out_dim=8)
    a, _ = train_cm(emb, table, cfg, train_objects=table.objects)
    b, _ = train_cm(emb, table, cfg, train_objects=table.objects)
    for x, y in zip(a.orr_mlp.params + a.or_mlp.params, b.orr_mlp.params + b.or_mlp.params):
        assert np.array_equal(x, y)


def test_training_needs_positives():
    table = direct_table({("o", "k", "a"): (0.1, 0.8)})
    with pytest.raises(NoPositivePairs):
        train_cm({"o": np.ones(2), "k": np.ones(2), "a": np.ones(2)}, table, TrainConfig(epochs=1))


def test_checkpoint_roundtrip(tmp_path):
    table, emb = _toy()
    model, _ = train_cm(emb, table, TrainConfig(batch_size=4, epochs=3, hidden_dim=16, out_dim=8))
    model.s_L = 0.73
    model.save(tmp_path / "ck.json")
    back = EmbeddingRanker.load(tmp_path / "ck.json", emb)
    assert back.s_L == 0.73
    for key in table.entries:
        assert back.score_orr(*key) == model.score_orr(*key)
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(ParseError):
        EmbeddingRanker.load(tmp_path / "bad.json", emb)


# -- other score models ------------------------------------------------------


def test_external_scores_parse(tmp_path):
    good = tmp_path / "s.json"
    good.write_text(json.dumps({"mug|kitchen": 0.5, "mug|kitchen|sink": 1}))
    model = ExternalScores.load(good)
    assert model.score_orr("mug", "kitchen", "sink") == 1.0 and model.score_or("mug", "bath") == 0.0
    for text in ("not json", "[1, 2]", json.dumps({"a|b": 1.5}), json.dumps({"a|b": "x"})):
        (tmp_path / "bad.json").write_text(text)
        with pytest.raises(ParseError):
            ExternalScores.load(tmp_path / "bad.json")


def test_noisy_oracle_decoys(world):
    table = world.table
    places = table.places
    hits = []
    for seed in range(40):
        model = NoisyOracleScores(table, 0.46, seed, places)
        for obj in table.objects:
            d = model.decoy(obj)
            top = score_joint(model, obj, places)[0][0]
            if d is None:
                assert classify(table, obj, *top) is PlacementClass.CORRECT
            else:
                assert top == d
                assert not ((obj, *d) in table and classify(table, obj, *d) is PlacementClass.CORRECT)
            # misplaced detection is unchanged
            for key in table.keys_for(obj):
                if (key[1], key[2]) != d:
                    assert (model.score_orr(*key) > 0.5) == (table.c(*key) > 0.5)
            hits.append(d is None)
    assert abs(np.mean(hits) - 0.46) < 0.05
