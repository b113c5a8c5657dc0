import itertools
import math

import numpy as np
import pytest

from isl_recognizer.errors import HmmError, ModelFormatError, UnknownSymbolError
from isl_recognizer.evaluation import evaluate_gestures
from isl_recognizer.gesture_hmm import (WRONG_GESTURE, FrameTuple, GestureBank, GestureSegmenter, HmmChain,
                                        SymbolTable, baum_welch_iterations, baum_welch_train,
                                        calibrate_reject_threshold, classify_gesture, decode, encode,
                                        format_gesture_definitions, forward_log_likelihood, init_chain,
                                        parse_gesture_definitions, segment_stream, train_bank, transition_mask)
from isl_recognizer.hand_tracker import Direction
from isl_recognizer.synth import GESTURE_SCRIPTS, INTERMEDIATE_POSES, gesture_definitions, script_take, synth_dataset

TABLE = SymbolTable(INTERMEDIATE_POSES)


def random_chain(rng, n, S, name="g"):
    pi = np.zeros(n)
    pi[0] = 1.0
    A = np.zeros((n, n))
    for i in range(n - 1):
        A[i, i:i + 2] = rng.dirichlet([1.0, 1.0])
    A[-1, -1] = 1.0
    B = rng.dirichlet(np.ones(S), size=n)
    return HmmChain(name, pi, A, B)


def brute_force_probability(chain, obs):
    total = 0.0
    for path in itertools.product(range(chain.n), repeat=len(obs)):
        p = chain.pi[path[0]] * chain.B[path[0], obs[0]]
        for t in range(1, len(obs)):
            p *= chain.A[path[t - 1], path[t]] * chain.B[path[t], obs[t]]
        total += p
    return total


# ===== Symbols =====

def test_symbol_table_layout():
    assert TABLE.size == 13
    assert TABLE.pose_symbol("Thumbs_Up") == 4
    assert TABLE.pose_symbol("Sun_Up") == 5
    assert TABLE.symbol_for("down") == 3
    assert TABLE.symbol_for(12) == 12
    assert [TABLE.label_of(s) for s in range(5)] == ["up", "right", "left", "down", "Thumbs_Up"]
    with pytest.raises(UnknownSymbolError):
        TABLE.pose_symbol("Claw")
    with pytest.raises(HmmError):
        SymbolTable(("Fist", "Fist"))
    with pytest.raises(HmmError):
        SymbolTable(("Fist", "Up"))


def test_encode_worked_example():
    tuples = [FrameTuple.still("Thumbs_Up")] * 3 + [FrameTuple.moving(Direction.UP)] * 3 \
        + [FrameTuple.still("Sun_Up")] * 3
    assert encode(tuples, TABLE) == [4, 4, 4, 0, 0, 0, 5, 5, 5]
    assert decode([4, 4, 4, 0, 0, 0, 5, 5, 5], TABLE) == tuples


def test_encode_edge_cases():
    assert encode([], TABLE) == []
    assert encode([FrameTuple.moving(Direction.DOWN)], TABLE) == [3]
    with pytest.raises(UnknownSymbolError):
        encode([FrameTuple.still("Claw")], TABLE)
    with pytest.raises(ValueError):
        FrameTuple(pose="Fist", motion=Direction.UP)


# ===== Chains and likelihoods =====

def test_chain_validation():
    with pytest.raises(HmmError):
        HmmChain("bad", [1.0, 0.0], [[0.5, 0.5], [0.5, 0.5]], [[1.0], [1.0]])
    with pytest.raises(HmmError):
        HmmChain("bad", [0.0, 1.0], [[0.5, 0.5], [0.0, 1.0]], [[1.0], [1.0]])
    with pytest.raises(HmmError):
        HmmChain("bad", [1.0], [[1.0]], [[0.4, 0.4]])


def test_init_chain_applies_hints():
    chain = init_chain("Good Afternoon", 3, TABLE, [(0, "Thumbs_Up"), (1, "up"), (2, 5)])
    assert chain.pi.tolist() == [1.0, 0.0, 0.0]
    assert chain.A.tolist() == [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.0, 0.0, 1.0]]
    assert chain.B[0, 4] == 0.5
    assert chain.B[1, 0] == 0.5
    assert chain.B[0, 0] == pytest.approx(0.5 / 12)
    with pytest.raises(HmmError):
        init_chain("x", 2, TABLE, [(2, "up")])


def test_single_state_likelihood():
    chain = HmmChain("coin", [1.0], [[1.0]], [[0.5, 0.5]])
    assert forward_log_likelihood(chain, [0, 1]) == pytest.approx(math.log(0.25))


def test_impossible_sequence_scores_minus_infinity():
    chain = HmmChain("g", [1.0, 0.0], [[0.5, 0.5], [0.0, 1.0]], [[1.0, 0.0], [1.0, 0.0]])
    assert forward_log_likelihood(chain, [0, 1, 0]) == -math.inf


def test_likelihood_input_validation():
    chain = HmmChain("coin", [1.0], [[1.0]], [[0.5, 0.5]])
    with pytest.raises(HmmError):
        forward_log_likelihood(chain, [])
    with pytest.raises(UnknownSymbolError):
        forward_log_likelihood(chain, [0, 2])


def test_forward_matches_path_enumeration(rng):
    for _ in range(120):
        n = int(rng.integers(1, 5))
        S = int(rng.integers(1, 14))
        chain = random_chain(rng, n, S)
        obs = rng.integers(0, S, size=int(rng.integers(1, 7))).tolist()
        expected = brute_force_probability(chain, obs)
        assert math.exp(forward_log_likelihood(chain, obs)) == pytest.approx(expected, rel=1e-10, abs=0)


def test_probabilities_of_all_sequences_sum_to_one(rng):
    for n in range(1, 4):
        for S in range(1, 4):
            chain = random_chain(rng, n, S)
            for T in range(1, 5):
                total = sum(math.exp(forward_log_likelihood(chain, obs))
                            for obs in itertools.product(range(S), repeat=T))
                assert abs(total - 1.0) <= 1e-9


def test_long_sequences_do_not_underflow(rng):
    chain = random_chain(rng, 4, 13)
    obs = rng.integers(0, 13, size=600).tolist()
    score = forward_log_likelihood(chain, obs)
    assert math.isfinite(score)
    assert score < -100


# ===== Baum-Welch =====

def test_baum_welch_is_monotone_and_keeps_the_structure(rng):
    table = SymbolTable(("Fist", "Five"))
    for _ in range(20):
        n = int(rng.integers(2, 5))
        chain = init_chain("g", n, table)
        sequences = [rng.integers(0, table.size, size=int(rng.integers(4, 12))).tolist() for _ in range(5)]
        mask = transition_mask(n)
        previous = -math.inf
        for iteration, (current, total) in enumerate(baum_welch_iterations(chain, sequences)):
            assert total >= previous - 1e-9
            assert not current.A[~mask].any()
            assert np.all(np.abs(current.A.sum(axis=1) - 1) <= 1e-9)
            assert np.all(np.abs(current.B.sum(axis=1) - 1) <= 1e-9)
            assert current.pi.tolist() == [1.0] + [0.0] * (n - 1)
            previous = total
            if iteration == 15:
                break


def test_baum_welch_respects_the_emission_floor(rng):
    table = SymbolTable(("Fist",))
    chain = init_chain("g", 2, table)
    trained = baum_welch_train(chain, [[4, 4, 0, 0], [4, 0, 0, 0]], floor=1e-4)
    assert trained.B.min() >= 1e-4 - 1e-15
    assert forward_log_likelihood(trained, [4, 4, 0, 0]) > forward_log_likelihood(chain, [4, 4, 0, 0])


def test_single_state_chain_puts_all_free_mass_on_its_symbol():
    floor = 1e-4
    chain = HmmChain("g", [1.0], [[1.0]], [np.full(TABLE.size, 1.0 / TABLE.size)])
    trained = baum_welch_train(chain, [[7] * 6, [7] * 3], floor=floor)
    assert trained.B[0, 7] == pytest.approx(1 - (TABLE.size - 1) * floor, abs=1e-12)
    others = np.delete(trained.B[0], 7)
    assert others == pytest.approx(np.full(TABLE.size - 1, floor), abs=1e-15)


def test_maximum_likelihood_chain_is_a_fixed_point():
    floor = 1e-4
    table = SymbolTable(("Fist",))
    sequences = [[4, 4, 0], [4, 0, 4]]
    free = 1 - 3 * floor
    best = HmmChain("g", [1.0], [[1.0]], [[free * 2 / 6, floor, floor, floor, free * 4 / 6]])
    steps = baum_welch_iterations(best, sequences, floor)
    (_, before), (after, total) = next(steps), next(steps)
    assert np.allclose(after.B, best.B, atol=1e-6)
    assert np.allclose(after.A, best.A, atol=1e-6)
    assert total == pytest.approx(before, abs=1e-6)
    assert np.allclose(baum_welch_train(best, sequences, floor=floor).B, best.B, atol=1e-6)


def test_baum_welch_needs_sequences():
    chain = init_chain("g", 2, TABLE)
    with pytest.raises(HmmError):
        baum_welch_train(chain, [])


# ===== Bank =====

def _two_chain_bank(threshold=-math.inf):
    table = SymbolTable(("Fist",))
    a = HmmChain("up", [1.0], [[1.0]], [[0.9, 0.025, 0.025, 0.025, 0.025]])
    b = HmmChain("fist", [1.0], [[1.0]], [[0.025, 0.025, 0.025, 0.025, 0.9]])
    return GestureBank((a, b), table, threshold)


def test_classify_gesture_picks_the_best_chain():
    decision = classify_gesture(_two_chain_bank(), [4, 4, 0, 4])
    assert decision.label == "fist"
    assert decision.avg_loglik == pytest.approx((3 * math.log(0.9) + math.log(0.025)) / 4)
    assert set(decision.scores) == {"up", "fist"}


def test_classify_gesture_rejects_below_threshold():
    bank = _two_chain_bank(threshold=-1.0)
    assert classify_gesture(bank, [0, 0, 0]).label == "up"
    decision = classify_gesture(bank, [1, 2, 3])
    assert decision.rejected
    assert decision.label == WRONG_GESTURE


def test_bank_validation():
    table = SymbolTable(("Fist",))
    chain = HmmChain("up", [1.0], [[1.0]], [[0.5, 0.5]])
    with pytest.raises(HmmError):
        GestureBank((chain,), table)
    with pytest.raises(HmmError):
        GestureBank((), table)


def test_calibrate_reject_threshold():
    bank = _two_chain_bank()
    training = {"up": [[0, 0], [0, 1]], "fist": [[4]]}
    expected = (math.log(0.9) + math.log(0.025)) / 2 - 2.0
    assert calibrate_reject_threshold(bank.chains, training, margin=2.0) == pytest.approx(expected)
    with pytest.raises(HmmError):
        calibrate_reject_threshold(bank.chains, {})


# ===== Segmentation =====

def test_segmenter_closes_after_the_debounce():
    segmenter = GestureSegmenter(debounce=3)
    outputs = [segmenter.push(item) for item in [None, 4, 4, None, None, 0, None, None, None]]
    assert outputs[:8] == [None] * 8
    assert outputs[8] == [4, 4, 0]
    assert not segmenter.is_open
    assert segmenter.flush() is None


def test_segment_stream_flushes_the_tail():
    events = [1, None, None, None, 2, 3, None]
    assert list(segment_stream(events, debounce=3)) == [[1], [2, 3]]
    assert list(segment_stream([None, None], debounce=1)) == []


# ===== Definitions =====

def test_definitions_file(tmp_path):
    path = tmp_path / "gestures.txt"
    path.write_text("# three step gestures\nposes Thumbs_Up Sun_Up Fist\n"
                    "gesture Good Afternoon states=3\nhint 0 Thumbs_Up\nhint 1 up\n\n"
                    "gesture Good Night states=3\nhint 1 down\n")
    definitions = parse_gesture_definitions(path)
    assert definitions.names == ["Good Afternoon", "Good Night"]
    assert definitions.poses == ("Thumbs_Up", "Sun_Up", "Fist")
    assert definitions.gestures[0].hints == ((0, "Thumbs_Up"), (1, "up"))
    assert definitions.symbol_table().size == 7

    path.write_text(format_gesture_definitions(definitions))
    assert parse_gesture_definitions(path) == definitions


@pytest.mark.parametrize("text, line_no", [
    ("hint 0 up\n", 1),
    ("gesture Good Night\n", 1),
    ("gesture A states=2\nhint x up\n", 2),
    ("gesture A states=2\nwobble\n", 2),
])
def test_definitions_errors_carry_line_numbers(tmp_path, text, line_no):
    path = tmp_path / "gestures.txt"
    path.write_text(text)
    with pytest.raises(ModelFormatError) as err:
        parse_gesture_definitions(path)
    assert err.value.line_no == line_no


def test_train_bank_needs_every_gesture():
    definitions = gesture_definitions(["Good Afternoon", "After"])
    table = definitions.symbol_table()
    sequences = {"Good Afternoon": [encode(GESTURE_SCRIPTS["Good Afternoon"], table)]}
    with pytest.raises(HmmError):
        train_bank(definitions, sequences, table)


def test_synthetic_gesture_benchmark():
    names = ["Good Afternoon", "Good Night", "After"]
    data = synth_dataset(seed=3, classes=2, per_class=1, gestures=names, takes_per_gesture=15,
                         test_takes_per_gesture=20, impostors=20, intermediate_per_class=1)
    table = data.symbols

    def encoded(takes):
        return [encode(segment, table) for take in takes for segment in segment_stream(take)]

    bank = train_bank(data.definitions, {g: encoded(data.training_takes[g]) for g in names}, table)
    tests = [(label, obs) for label, takes in data.test_takes.items() for obs in encoded(takes)]
    report = evaluate_gestures(bank, tests)

    genuine = [(label, classify_gesture(bank, obs).label) for label, obs in tests if label != WRONG_GESTURE]
    impostors = [classify_gesture(bank, obs).label for label, obs in tests if label == WRONG_GESTURE]
    assert len(genuine) == 60 and len(impostors) == 20
    assert sum(truth == guess for truth, guess in genuine) / len(genuine) >= 0.90
    assert impostors.count(WRONG_GESTURE) / len(impostors) >= 0.80
    assert report.labels[-1] == WRONG_GESTURE


def test_scripted_take_round_trip_through_the_trained_bank(trained_bank):
    rng = np.random.default_rng(99)
    take = script_take(GESTURE_SCRIPTS["Good Night"], rng, substitution=0.0)
    segment = next(segment_stream(take))
    assert classify_gesture(trained_bank, encode(segment, trained_bank.symbols)).label == "Good Night"
