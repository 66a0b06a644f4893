import numpy as np
import pytest

from kbjoint.evaluation import (
    EvalReport,
    evaluate,
    filtered_candidates,
    oov_fraction,
    queries_for,
    rank_gold,
    resolve_oov,
)
from kbjoint.kb import Triple, build_splits
from kbjoint.model import ModelParams, init_params

from .conftest import random_raw_triples


def brute_force_report(splits, params, triples):
    """Independent reranker: python loops, explicit filtering and OOV policy."""
    kb = splits.train
    n = kb.n_entities
    ranks = []
    for h, r, t in triples:
        for qh, qr, qt in ((h, r, t), (t, kb.inverse(r), h)):
            if qh >= n:
                counts = {}
                for fh, fr, _ in kb.fact_list:
                    if fr == qr:
                        counts[fh] = counts.get(fh, 0) + 1
                if counts:
                    best = max(counts.values())
                    qh_eff = min(e for e, c in counts.items() if c == best)
                else:
                    deg = [sum(1 for f in kb.fact_list if f.head == e) for e in range(n)]
                    qh_eff = deg.index(max(deg))
            else:
                qh_eff = qh

            def s(e):
                if e >= n:
                    return 0.0
                return float(params.U[qh_eff] @ params.M[qr] @ params.V[e])

            gold = s(qt)
            rank = 1
            for e in range(n):
                if e == qt or Triple(qh, qr, e) in splits.all_facts:
                    continue
                if s(e) >= gold:
                    rank += 1
            ranks.append(rank)
    return ranks


def random_splits(seed, n_triples=150, n_entities=30, n_relations=4, oov_valid=0):
    rng = np.random.default_rng(seed)
    raw = sorted(set(random_raw_triples(rng, n_triples, n_entities, n_relations)))
    raw = [raw[i] for i in rng.permutation(len(raw))]
    n = len(raw)
    train, valid, test = raw[: int(0.8 * n)], raw[int(0.8 * n) : int(0.9 * n)], raw[int(0.9 * n) :]
    rels = {r for _, r, _ in train}
    test = [x for x in test if x[1] in rels]
    valid = [x for x in valid if x[1] in rels]
    for i in range(oov_valid):
        valid.append((f"new{i}", train[i][1], train[i][2]))
        valid.append((train[i][0], train[i][1], f"other{i}"))
    return build_splits(train, valid, test)


class TestAggregates:
    def test_all_ones(self):
        rep = EvalReport.from_ranks([1, 1, 1])
        assert (rep.mr, rep.mrr, rep.h10) == (1.0, 1.0, 100.0)

    def test_example(self):
        rep = EvalReport.from_ranks([1, 2, 100])
        assert rep.mr == pytest.approx(103 / 3)
        assert rep.mrr == pytest.approx((1 + 0.5 + 0.01) / 3)
        assert rep.h10 == pytest.approx(200 / 3)


class TestCandidates:
    def test_everything_filtered_but_gold(self):
        raw = [("A", "r", x) for x in "ABCD"]
        sp = build_splits(raw)
        h, r = 0, 0
        for t in range(4):
            assert list(filtered_candidates(sp, h, r, t)) == [t]

    def test_no_known_facts(self):
        sp = build_splits([("A", "r", "B"), ("C", "s", "D")])
        c = sp.train.entity_index
        assert list(filtered_candidates(sp, c["D"], 0, c["A"])) == list(range(4))

    def test_set_difference(self):
        sp = random_splits(0)
        for h, r, t in sp.test:
            brute = {e for e in range(sp.n_known) if Triple(h, r, e) not in sp.all_facts} | {t}
            assert set(filtered_candidates(sp, h, r, t)) == brute

    def test_unknown_relation(self):
        sp = random_splits(0)
        with pytest.raises(KeyError):
            filtered_candidates(sp, 0, 99, 1)

    def test_gold_never_filtered(self):
        sp = random_splits(1)
        for h, r, t in sp.valid + sp.test:
            assert t in set(filtered_candidates(sp, h, r, t))


class TestRankGold:
    def test_top(self):
        p = ModelParams(np.eye(3), np.eye(3), np.eye(3)[None])
        assert rank_gold(p, 1, 0, 1, [0, 1, 2]) == 1

    def test_all_tied(self):
        p = ModelParams(np.zeros((5, 2)), np.zeros((5, 2)), np.eye(2)[None])
        assert rank_gold(p, 0, 0, 3, range(5)) == 5

    def test_sort_oracle(self, rng):
        p = init_params(rng, 4, 30, 2)
        # quantize so ties actually occur
        p.V[:] = np.round(p.V * 2) / 2
        for _ in range(100):
            h, t = rng.integers(30, size=2)
            cands = sorted({int(t), *rng.choice(30, 12, replace=False).tolist()})
            s = {e: float(p.U[h] @ p.M[1] @ p.V[e]) for e in cands}
            order = sorted(cands, key=lambda e: (-s[e], e != t))
            # pessimistic: gold goes after everything it ties with
            tied_or_above = [e for e in order if e != t and s[e] >= s[t]]
            assert rank_gold(p, int(h), 1, int(t), cands) == 1 + len(tied_or_above)

    def test_monotone_transform(self, rng):
        p = init_params(rng, 4, 20, 1)
        h = 3
        cands = list(range(20))
        log_scores = p.V @ (p.U[h] @ p.M[0])
        for t in range(20):
            by_exp = 1 + sum(np.exp(log_scores[e]) >= np.exp(log_scores[t]) for e in cands if e != t)
            assert rank_gold(p, h, 0, t, cands) == by_exp


class TestOOV:
    def test_identity_without_oov(self):
        sp = random_splits(2)
        for h, r, t in sp.test:
            assert resolve_oov(sp, h, r, t) == (h, False)

    def test_head_replacement_counts(self):
        train = [("A", "r", "X"), ("B", "r", "X"), ("B", "r", "Y"), ("C", "r", "Y"), ("C", "r", "Z"), ("A", "s", "B")]
        sp = build_splits(train, [("NEW", "r", "X")])
        h, r, t = sp.valid[0]
        assert sp.is_oov(h)
        # B and C both head r twice; the smaller id wins
        assert resolve_oov(sp, h, r, t) == (sp.train.entity_index["B"], False)

    def test_oov_tail_scores_zero(self):
        sp = build_splits([("A", "r", "B"), ("B", "r", "C")], [("A", "r", "NEW")])
        h, r, t = sp.valid[0]
        assert resolve_oov(sp, h, r, t) == (h, True)
        # scores from A: A 0, B 1, C -1; the OOV gold scores 0
        U = np.array([[1.0], [0.0], [0.0]])
        V = np.array([[0.0], [1.0], [-1.0]])
        p = ModelParams(U, V, np.ones((2, 1, 1)))
        rep = evaluate(sp, p, sp.valid[:1])
        # B is filtered as a known fact, A ties with the gold and counts against it
        assert rep.ranks[0] == 2

    def test_drop_oov(self):
        sp = random_splits(3, oov_valid=3)
        frac = oov_fraction(sp, sp.valid)
        assert frac > 0
        kept = queries_for(sp, sp.valid, drop_oov=True)
        assert len(kept) == 2 * round(len(sp.valid) * (1 - frac))


class TestEvaluate:
    @pytest.mark.parametrize("seed", range(3))
    def test_brute_force_reranker(self, seed):
        sp = random_splits(seed, oov_valid=2)
        p = init_params(np.random.default_rng(seed), 6, sp.train.n_entities, sp.train.n_relations)
        for triples in (sp.valid, sp.test):
            rep = evaluate(sp, p, triples)
            assert rep.ranks == brute_force_report(sp, p, triples)
            assert rep == EvalReport.from_ranks(brute_force_report(sp, p, triples))

    def test_threads_agree(self):
        sp = random_splits(4)
        p = init_params(np.random.default_rng(0), 6, sp.train.n_entities, sp.train.n_relations)
        assert evaluate(sp, p, sp.test, threads=3) == evaluate(sp, p, sp.test)

    def test_adding_fact_never_raises_rank(self, rng):
        sp = random_splits(5)
        p = init_params(rng, 6, sp.train.n_entities, sp.train.n_relations)
        before = evaluate(sp, p, sp.test).ranks
        h, r, _ = sp.test[0]
        extra = int(rng.integers(sp.n_known))
        sp.filter_index.setdefault((h, r), set()).add(extra)
        after = evaluate(sp, p, sp.test).ranks
        assert all(a <= b for a, b in zip(after, before))

    def test_inverse_equals_direct_head_ranking(self, rng):
        sp = random_splits(6)
        kb = sp.train
        base = init_params(rng, 5, kb.n_entities, kb.n_relations)
        # shared entity table, inverse matrices are transposes
        for r in range(kb.n_base):
            base.M[kb.inverse(r)] = base.M[r].T
        p = ModelParams(base.U, base.U.copy(), base.M)
        U = p.U
        for h, r, t in sp.test:
            via_inverse = evaluate(sp, p, [Triple(h, r, t)]).ranks[1]
            gold = U[h] @ p.M[r] @ U[t]
            direct = 1 + sum(
                1
                for e in range(kb.n_entities)
                if e != h and Triple(e, r, t) not in sp.all_facts and U[e] @ p.M[r] @ U[t] >= gold
            )
            assert via_inverse == direct
