import math
from datetime import datetime, timedelta, timezone

import pytest

from itoo.errors import ContractViolation
from itoo.records import InteractionEvent
from itoo.tfidf import (
    TfidfProfile,
    build_item_profiles,
    build_tfidf_profiles,
    decay_factor,
    whole_days_since,
)

NOW = datetime(2026, 8, 9, 12, 0, tzinfo=timezone.utc)


def ev(user, kind, target, days_ago=0.0):
    return InteractionEvent(NOW - timedelta(days=days_ago), user, kind, target)


class TestDecay:
    def test_same_day_is_one(self):
        assert decay_factor(0.9, 0) == 1.0

    def test_seven_days(self):
        assert decay_factor(0.9, 7) == pytest.approx(0.9**7, abs=1e-15)
        assert decay_factor(0.9, 7) == pytest.approx(0.4782969, abs=1e-7)

    def test_whole_days(self):
        assert whole_days_since(NOW - timedelta(hours=36), NOW) == 1
        assert whole_days_since(NOW - timedelta(hours=23), NOW) == 0

    def test_beta_range(self):
        with pytest.raises(ContractViolation):
            decay_factor(1.0, 1)


class TestProfiles:
    def test_two_user_hand_corpus(self):
        # A viewed o1 twice today and o2 once; B viewed o2 once.
        events = [
            ev("A", "view", "o1"),
            ev("A", "view", "o1"),
            ev("A", "view", "o2"),
            ev("B", "view", "o2"),
        ]
        profiles = build_tfidf_profiles(events, NOW, beta=0.9)
        # hand TF-IDF: tf_A(o1)=2, idf(o1)=ln(3/2)+1; tf(o2)=1, idf(o2)=ln(3/3)+1=1
        idf_o1 = math.log(3 / 2) + 1.0
        assert profiles["A"].get("o1") == pytest.approx(2 * idf_o1, abs=1e-12)
        assert profiles["A"].get("o1") == pytest.approx(2.8109, abs=1e-4)
        assert profiles["A"].get("o2") == pytest.approx(1.0, abs=1e-12)
        assert profiles["B"].get("o2") == pytest.approx(1.0, abs=1e-12)

    def test_decay_applies_per_event(self):
        events = [ev("A", "view", "o1", days_ago=7)]
        profiles = build_tfidf_profiles(events, NOW, beta=0.9)
        idf = math.log(2 / 2) + 1.0
        assert profiles["A"].get("o1") == pytest.approx(0.9**7 * idf, abs=1e-12)

    def test_likes_weighted_stronger(self):
        events = [ev("A", "view", "o1"), ev("B", "like", "o1")]
        profiles = build_tfidf_profiles(events, NOW, beta=0.9)
        assert profiles["B"].get("o1") == pytest.approx(3 * profiles["A"].get("o1"))

    def test_follow_and_upload_do_not_contribute(self):
        events = [ev("A", "view", "o1"), ev("A", "follow", "B"), ev("A", "upload", "o9")]
        profiles = build_tfidf_profiles(events, NOW, beta=0.9)
        assert set(profiles["A"].weights) == {"o1"}

    def test_future_events_rejected(self):
        events = [ev("A", "view", "o1", days_ago=-1)]
        with pytest.raises(ContractViolation) as err:
            build_tfidf_profiles(events, NOW, beta=0.9)
        assert "future" in str(err.value)

    def test_weights_nonnegative(self):
        events = [ev(u, k, t, d) for u, k, t, d in [
            ("A", "view", "o1", 3), ("B", "like", "o2", 1), ("A", "view", "o2", 0.5),
        ]]
        for profile in build_tfidf_profiles(events, NOW, beta=0.5).values():
            assert all(w >= 0 for w in profile.weights.values())


class TestItemProfiles:
    def test_transposed_structure(self):
        events = [ev("A", "view", "o1"), ev("B", "view", "o1"), ev("A", "view", "o2")]
        item_profiles = build_item_profiles(events, NOW, beta=0.9)
        assert set(item_profiles["o1"].weights) == {"A", "B"}
        assert set(item_profiles["o2"].weights) == {"A"}


class TestProfileOps:
    def test_dot_and_norm(self):
        a = TfidfProfile({"o1": 3.0, "o2": 4.0})
        b = TfidfProfile({"o2": 2.0, "o3": 1.0})
        assert a.dot(b) == pytest.approx(8.0)
        assert a.norm() == pytest.approx(5.0)

    def test_shrunk_cosine_identical_profiles(self):
        a = TfidfProfile({"o1": 1.0, "o2": 2.0})
        assert a.cosine_shrunk(a, 0.0) == pytest.approx(1.0)

    def test_shrinkage_strictly_decreases(self):
        a = TfidfProfile({"o1": 1.0})
        b = TfidfProfile({"o1": 2.0})
        assert a.cosine_shrunk(b, 10.0) < a.cosine_shrunk(b, 0.0)

    def test_empty_profiles_are_zero(self):
        assert TfidfProfile().cosine_shrunk(TfidfProfile(), 0.0) == 0.0
