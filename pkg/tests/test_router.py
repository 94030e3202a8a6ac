import math
import unittest

import numpy as np

from lib.fusion.fusion_core import reconstruct_model, run_session
from lib.fusion.triggers import unpack
from lib.harness.config import TrainMode
from lib.harness.synthetic_tasks import gen_tasks
from lib.harness.toy_model import ToyModel, train_task
from lib.routing.prototypes import PrototypeSet
from lib.routing.router import (
    DEFAULT_K,
    RoutingDecision,
    aggregate_logits,
    cosine_similarity,
    predict_task_agnostic,
    predict_task_aware,
    predict_with_models,
    reconstruct_task_models,
    route,
)
from lib.store.container import content_hash
from lib.utils.errors import (
    BadConfigError,
    DimMismatchError,
    LengthMismatchError,
    MissingPrototypesError,
    RoutingContractError,
    UnknownTaskError,
    ZeroVectorError,
)


def _at_similarity(sim, task_id):
    """Single-category prototype set whose cosine with [1, 0] is ``sim``."""
    return PrototypeSet(task_id=task_id, labels=("c",), vectors=[[sim, math.sqrt(1 - sim * sim)]])


class TestRoute(unittest.TestCase):

    def setUp(self):
        self.prototypes = [_at_similarity(0.9, 0), _at_similarity(0.2, 1), _at_similarity(0.5, 2)]
        self.sample = np.array([1.0, 0.0])

    def test_top_two(self):
        decision = route(self.sample, self.prototypes, 2)
        self.assertEqual(decision.weights, (1, 0, 1))
        self.assertEqual(decision.selected_tasks, (0, 2))
        np.testing.assert_allclose(decision.per_task_best_sim, [0.9, 0.2, 0.5], atol=1e-6)

    def test_top_one(self):
        self.assertEqual(route(self.sample, self.prototypes, 1).weights, (1, 0, 0))

    def test_k_above_task_count_selects_all(self):
        self.assertEqual(route(self.sample, self.prototypes, 11).weights, (1, 1, 1))

    def test_ties_go_to_lower_index(self):
        prototypes = [_at_similarity(0.5, 0), _at_similarity(0.5, 1), _at_similarity(0.5, 2)]
        self.assertEqual(route(self.sample, prototypes, 2).selected_tasks, (0, 1))

    def test_best_category_counts(self):
        two = PrototypeSet(task_id=0, labels=("a", "b"), vectors=[[0.0, 1.0], [1.0, 0.0]])
        decision = route(self.sample, [two, _at_similarity(0.9, 1)], 1)
        self.assertEqual(decision.selected_tasks, (0,))

    def test_default_k(self):
        self.assertEqual(DEFAULT_K, 4)

    def test_errors(self):
        with self.assertRaises(ZeroVectorError):
            route(np.zeros(2), self.prototypes, 1)
        with self.assertRaises(DimMismatchError):
            route(np.ones(3), self.prototypes, 1)
        with self.assertRaises(MissingPrototypesError):
            route(self.sample, [self.prototypes[0], None], 1)
        with self.assertRaises(BadConfigError):
            route(self.sample, self.prototypes, 0)

    def test_cosine_similarity(self):
        self.assertAlmostEqual(cosine_similarity(np.array([1.0, 1.0]), np.array([2.0, 0.0])), math.sqrt(0.5))
        with self.assertRaises(ZeroVectorError):
            cosine_similarity(np.zeros(2), np.ones(2))


class TestAggregateLogits(unittest.TestCase):

    def test_sum_and_argmax(self):
        decision = RoutingDecision(per_task_best_sim=(0.5, 0.4), selected_tasks=(0, 1), weights=(1, 1))
        label, fused = aggregate_logits([[1, 0], [0, 2]], decision)
        self.assertEqual(fused.tolist(), [1.0, 2.0])
        self.assertEqual(label, 1)

    def test_argmax_ties_to_lowest_index(self):
        decision = RoutingDecision(per_task_best_sim=(0.5,), selected_tasks=(0,), weights=(1,))
        self.assertEqual(aggregate_logits([[3, 3, 1]], decision)[0], 0)

    def test_no_selected_task(self):
        decision = RoutingDecision(per_task_best_sim=(0.5, 0.4), selected_tasks=(), weights=(0, 0))
        with self.assertRaises(RoutingContractError):
            aggregate_logits([[1, 0], [0, 2]], decision)

    def test_length_mismatch(self):
        decision = RoutingDecision(per_task_best_sim=(0.5, 0.4), selected_tasks=(0,), weights=(1, 0))
        with self.assertRaises(LengthMismatchError):
            aggregate_logits([[1, 0]], decision)
        with self.assertRaises(LengthMismatchError):
            aggregate_logits([[1, 0], [1, 0, 0]], decision)


class TestRoutingProperties(unittest.TestCase):
    """1000 seeded random cases per property."""

    def _random_case(self, rng):
        task_count = int(rng.integers(1, 8))
        dim = int(rng.integers(2, 10))
        prototypes = [
            PrototypeSet(
                task_id=t,
                labels=tuple(str(c) for c in range(categories)),
                vectors=rng.standard_normal((categories, dim)),
            )
            for t, categories in enumerate(rng.integers(1, 5, task_count))
        ]
        return rng.standard_normal(dim), prototypes

    def test_scale_invariance(self):
        rng = np.random.default_rng(41)
        for _ in range(1000):
            sample, prototypes = self._random_case(rng)
            k = int(rng.integers(1, len(prototypes) + 2))
            scale = 2.0 ** int(rng.integers(-20, 21))
            self.assertEqual(route(sample, prototypes, k), route(sample * scale, prototypes, k))

    def test_top_k_nesting(self):
        rng = np.random.default_rng(42)
        for _ in range(1000):
            sample, prototypes = self._random_case(rng)
            previous = set()
            for k in range(1, len(prototypes) + 1):
                selected = set(route(sample, prototypes, k).selected_tasks)
                self.assertTrue(previous <= selected)
                self.assertEqual(len(selected), k)
                previous = selected

    def test_single_task_aggregation_identity(self):
        rng = np.random.default_rng(43)
        for _ in range(1000):
            task_count = int(rng.integers(1, 8))
            logits = rng.standard_normal((task_count, int(rng.integers(2, 10))))
            chosen = int(rng.integers(0, task_count))
            weights = tuple(1 if t == chosen else 0 for t in range(task_count))
            decision = RoutingDecision(
                per_task_best_sim=(0.0,) * task_count, selected_tasks=(chosen,), weights=weights
            )
            self.assertEqual(aggregate_logits(logits, decision)[0], int(np.argmax(logits[chosen])))

    def test_selected_are_the_k_largest(self):
        rng = np.random.default_rng(44)
        for _ in range(200):
            sample, prototypes = self._random_case(rng)
            k = int(rng.integers(1, len(prototypes) + 1))
            decision = route(sample, prototypes, k)
            sims = decision.per_task_best_sim
            floor = min(sims[t] for t in decision.selected_tasks)
            for t in range(len(sims)):
                self.assertEqual(decision.weights[t], int(t in decision.selected_tasks))
                if t not in decision.selected_tasks:
                    self.assertLessEqual(sims[t], floor)
                self.assertTrue(-1.0 <= sims[t] <= 1.0)


class TestPrediction(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.tasks = gen_tasks(5, 3, 6, 3, 0.5, train_per_class=20, test_per_class=10)
        cls.base = ToyModel.zeros(3, 6)
        cls.base_vec = cls.base.to_flat()
        cls.trained = []
        state = None
        for task in cls.tasks:
            model, delta = train_task(task, cls.base, TrainMode(), steps=50, lr=0.5)
            cls.trained.append(model)
            features, labels = task.train_data()
            prototypes = PrototypeSet(
                task_id=task.task_id,
                labels=tuple(str(c) for c in range(3)),
                vectors=[features[labels == c].mean(axis=0) for c in range(3)],
            )
            state = run_session(state, delta, prototypes, content_hash(cls.base_vec))
            if task.task_id == 0:
                cls.first_state = state
        cls.state = state

    def test_single_session_matches_trained_model(self):
        features, _ = self.tasks[0].test_data()
        for sample in features:
            self.assertEqual(
                predict_task_aware(sample, 0, self.first_state, self.base_vec),
                int(self.trained[0].predict(sample)[0]),
            )

    def test_unknown_task(self):
        with self.assertRaises(UnknownTaskError):
            predict_task_aware(np.ones(6), 99, self.state, self.base_vec)

    def test_matches_hand_decoupling(self):
        for t, task in enumerate(self.tasks):
            trigger = self.state.triggers[t]
            gate = unpack(trigger.mask).astype(bool)
            by_hand = self.base_vec.values + trigger.lam * np.where(gate, self.state.unified.vec.values, 0.0)
            weights = by_hand[:18].reshape(3, 6)
            bias = by_hand[18:]
            features, _ = task.test_data()
            for sample in features:
                expected = int(np.argmax(np.atleast_2d(sample) @ weights.T + bias))
                self.assertEqual(predict_task_aware(sample, t, self.state, self.base_vec), expected)

    def test_task_agnostic_matches_batch_path(self):
        models = reconstruct_task_models(self.state, self.base_vec)
        features, _ = self.tasks[1].test_data()
        batch = predict_with_models(features, models, self.state.prototypes, 2)
        for sample, expected in zip(features, batch):
            self.assertEqual(predict_task_agnostic(sample, self.state, self.base_vec, 2), int(expected))

    def test_sample_width_must_match_models(self):
        models = reconstruct_task_models(self.state, self.base_vec)
        with self.assertRaises(DimMismatchError):
            predict_with_models(np.ones((4, 5)), models, self.state.prototypes, 2)

    def test_reconstructed_models_follow_triggers(self):
        models = reconstruct_task_models(self.state, self.base_vec)
        for model, trigger in zip(models, self.state.triggers):
            expected = reconstruct_model(self.base_vec, self.state.unified, trigger)
            self.assertEqual(model.to_flat(), expected)


if __name__ == '__main__':
    unittest.main()
