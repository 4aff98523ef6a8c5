"""Independent reference computations shared by unit and acceptance tests."""

from __future__ import annotations

from itertools import permutations

import numpy as np

from housekeep.ranker.mlp import MLP, cosine_bce, info_nce


def central_difference_check(n_probes: int = 100, seed: int = 0, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes random weight entries of small float64 MLPs under both losses.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for probe in range(n_probes):
        mlp = MLP([6, 10, 10, 5], rng)
        for b in mlp.biases:
            b += rng.normal(0, 0.1, b.shape)
        if probe % 2 == 0:
            anchors, keys = rng.normal(size=(5, 6)), rng.normal(size=(4, 6))
            targets = rng.integers(0, 4, 5)

            def loss_fn():
                return info_nce(mlp, anchors, keys, targets, 0.5)
        else:
            left, right = rng.normal(size=(5, 6)), rng.normal(size=(5, 6))
            labels = rng.integers(0, 2, 5).astype(float)

            def loss_fn():
                return cosine_bce(mlp, left, right, labels, 0.5)

        _, grads = loss_fn()
        params = mlp.params
        i = int(rng.integers(len(params)))
        idx = tuple(int(rng.integers(s)) for s in params[i].shape)
        old = params[i][idx]
        params[i][idx] = old + eps
        up = loss_fn()[0]
        params[i][idx] = old - eps
        down = loss_fn()[0]
        params[i][idx] = old
        numeric = (up - down) / (2 * eps)
        analytic = grads[i][idx]
        scale = max(abs(numeric), abs(analytic))
        err = abs(numeric - analytic) / scale if scale > 1e-7 else abs(numeric - analytic)
        worst = max(worst, err)
    return worst


def expected_random_ap(labels: list[bool]) -> float:
    """Mean AP over every ordering of the candidate list (<= 6 candidates)."""
    total, count = 0.0, 0
    for perm in permutations(labels):
        hits, s = 0, 0.0
        for i, rel in enumerate(perm, start=1):
            if rel:
                hits += 1
                s += hits / i
        total += s / hits
        count += 1
    return total / count


def brute_metrics(result, table) -> dict:
    """Textbook re-evaluation of every episode metric from the raw result fields."""
    def c(obj):
        rec = result.final[obj]
        if rec is None:
            return 0.0
        room, rcat = result.places[rec]
        e = table.entries.get((result.categories[obj], room, rcat))
        return e.c_or if e else 0.0

    om = set(result.misplaced)
    oi = set(it["object"] for it in result.interactions)
    omi = om | oi
    every = list(result.categories)
    es = 1.0
    for o in every:
        es *= 1.0 if c(o) > 0.5 else 0.0
    os_ = sum(1.0 for o in omi if c(o) > 0.5) / len(omi) if omi else 1.0
    sos = sum(c(o) for o in omi) / len(omi) if omi else 1.0

    scene_places = set(tuple(v) for v in result.places.values())
    rq = 0.0
    for o in omi:
        if c(o) > 0.5:
            cat = result.categories[o]
            correct = [
                (table.entries[(cat, *p)].mean_correct_rank, p) for p in scene_places
                if (cat, *p) in table.entries and table.entries[(cat, *p)].c_or > 0.5
            ]
            correct.sort()
            mine = tuple(result.places[result.final[o]])
            rq += 1.0 / (1 + [p for _, p in correct].index(mine))
    rq = rq / len(omi) if omi else 1.0

    mc = 100.0 * result.explored_cells / result.navigable_area
    moc = len(om & set(result.discovered)) / len(om) if om else 1.0
    ppe = 0.0
    for o in oi:
        n = sum(1 for it in result.interactions if it["object"] == o)
        nmin = 2 if o in om else 0
        if c(o) > 0.5:
            ppe += nmin / n
    ppe = ppe / len(oi) if oi else 1.0
    return {"ES": es, "OS": os_, "SOS": sos, "RQ": rq, "MC": mc, "MOC": moc, "PPE": ppe}


def random_result(rng: np.random.Generator, scene, table, index: int = 0):
    """A structurally valid but otherwise arbitrary EpisodeResult on ``scene``."""
    from housekeep.metrics import EpisodeResult
    from housekeep.world import navigable_area

    recs = [r.id for r in scene.receptacles]
    objs = table.objects
    n = int(rng.integers(0, 9))
    ids = [f"o{i}" for i in range(n)]
    categories = {o: objs[int(rng.integers(len(objs)))] for o in ids}
    initial = {o: recs[int(rng.integers(len(recs)))] for o in ids}
    misplaced = sorted(o for o in ids if rng.random() < 0.5)
    final = dict(initial)
    interactions, t = [], 0
    for _ in range(int(rng.integers(0, 8))) if ids else []:
        o = ids[int(rng.integers(len(ids)))]
        t += int(rng.integers(1, 20))
        interactions.append({"t": t, "object": o, "kind": "pick", "receptacle": final[o]})
        final[o] = None
        if rng.random() < 0.85:
            t += int(rng.integers(1, 20))
            r = recs[int(rng.integers(len(recs)))]
            interactions.append({"t": t, "object": o, "kind": "place", "receptacle": r})
            final[o] = r
        else:
            break  # still holding; episode ended
    area = navigable_area(scene)
    return EpisodeResult(
        episode_id=f"r{index}",
        scene_id=scene.id,
        categories=categories,
        initial=initial,
        misplaced=misplaced,
        final=final,
        interactions=interactions,
        discovered={o: int(rng.integers(0, 100)) for o in ids if rng.random() < 0.7},
        explored_cells=int(rng.integers(0, area + 1)),
        navigable_area=area,
        places={r.id: [scene.room_category(r.id), r.category] for r in scene.receptacles},
        steps=t,
        max_steps=max(t, 1000),
    )
